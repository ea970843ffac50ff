//! Named, independently seeded random streams.
//!
//! Each stream is a ChaCha8 generator keyed by the run seed and selected by a
//! hash of its name, so drawing from one stream never shifts another.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const GUMBEL: &str = "gumbel";
pub const NOISE: &str = "noise";
pub const DROPOUT: &str = "dropout";
pub const INIT: &str = "init";
pub const PERMUTE: &str = "permute";
pub const SHUFFLE: &str = "shuffle";

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Fresh generator for `(seed, name)`.
pub fn stream(seed: u64, name: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(name));
    rng
}

/// Fresh generator for `(seed, name, index)`, e.g. one per epoch.
pub fn indexed_stream(seed: u64, name: &str, index: u64) -> ChaCha8Rng {
    stream(seed, &format!("{name}/{index}"))
}

/// Lazily created, persistent streams for one run.
#[derive(Debug, Clone)]
pub struct RngStreams {
    seed: u64,
    streams: BTreeMap<String, ChaCha8Rng>,
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        RngStreams { seed, streams: BTreeMap::new() }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn get(&mut self, name: &str) -> &mut ChaCha8Rng {
        let seed = self.seed;
        self.streams.entry(name.to_string()).or_insert_with(|| stream(seed, name))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_independent() {
        let mut a = RngStreams::new(7);
        let mut b = RngStreams::new(7);
        let _: f64 = a.get(DROPOUT).random();
        let x: f64 = a.get(GUMBEL).random();
        let y: f64 = b.get(GUMBEL).random();
        assert_eq!(x, y);
        let z: f64 = b.get(NOISE).random();
        assert_ne!(x, z);
    }
}
