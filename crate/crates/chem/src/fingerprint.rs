//! Hashed simple-path fingerprints and Tanimoto similarity.

use crate::error::{ChemError, Result};
use crate::graph::MolecularGraph;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
/// Fixed seed mixed into every path hash.
const PATH_HASH_SEED: u64 = 0x4344_4453_5041_5448;

fn fnv1a(seed: u64, bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut h = FNV_OFFSET ^ seed;
    for b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Fixed-width bit set.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Fingerprint {
    n_bits: usize,
    words: Vec<u64>,
}

impl Fingerprint {
    pub fn new(n_bits: usize) -> Self {
        Fingerprint { n_bits, words: vec![0; n_bits.div_ceil(64)] }
    }

    pub fn from_indices(n_bits: usize, indices: &[usize]) -> Self {
        let mut fp = Fingerprint::new(n_bits);
        for &i in indices {
            fp.set(i);
        }
        fp
    }

    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    pub fn set(&mut self, bit: usize) {
        assert!(bit < self.n_bits, "bit {bit} out of range");
        self.words[bit / 64] |= 1 << (bit % 64);
    }

    pub fn get(&self, bit: usize) -> bool {
        self.words[bit / 64] >> (bit % 64) & 1 == 1
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_bits).filter(|&i| self.get(i))
    }

    /// Order-independent hash of the set bits.
    pub fn content_hash(&self) -> u64 {
        fnv1a(0, self.words.iter().flat_map(|w| w.to_le_bytes()))
    }
}

/// Enumerates every simple path of 0..=`max_len` bonds, labels it by its
/// (element, bond order) sequence read in the lexicographically smaller
/// direction, and hashes the label into `n_bits` buckets.
pub fn path_fingerprint(graph: &MolecularGraph, max_len: usize, n_bits: usize) -> Fingerprint {
    assert!(max_len >= 1, "max_len must be at least 1");
    assert!(n_bits >= 64 && n_bits.is_power_of_two(), "n_bits must be a power of two >= 64");
    let adj = graph.adjacency();
    let mut fp = Fingerprint::new(n_bits);
    let mut label = Vec::new();
    let mut visited = vec![false; graph.num_atoms()];
    for start in 0..graph.num_atoms() {
        visited[start] = true;
        label.clear();
        label.push(u16::from(graph.atoms[start].element));
        extend(graph, &adj, start, max_len, &mut visited, &mut label, &mut fp);
        visited[start] = false;
    }
    fp
}

fn extend(
    graph: &MolecularGraph,
    adj: &[Vec<(usize, usize)>],
    at: usize,
    remaining: usize,
    visited: &mut [bool],
    label: &mut Vec<u16>,
    fp: &mut Fingerprint,
) {
    set_path_bit(label, fp);
    if remaining == 0 {
        return;
    }
    for &(next, bond) in &adj[at] {
        if visited[next] {
            continue;
        }
        visited[next] = true;
        label.push(100 + u16::from(graph.bonds[bond].order.code()));
        label.push(u16::from(graph.atoms[next].element));
        extend(graph, adj, next, remaining - 1, visited, label, fp);
        label.truncate(label.len() - 2);
        visited[next] = false;
    }
}

fn set_path_bit(label: &[u16], fp: &mut Fingerprint) {
    let reversed = label.iter().rev();
    let canonical: Vec<u16> = if reversed.clone().lt(label.iter()) {
        reversed.copied().collect()
    } else {
        label.to_vec()
    };
    let h = fnv1a(PATH_HASH_SEED, canonical.iter().flat_map(|t| t.to_le_bytes()));
    fp.set((h as usize) & (fp.n_bits - 1));
}

/// |a ∩ b| / |a ∪ b|, defined as 1.0 when both sets are empty.
pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> Result<f64> {
    if a.n_bits != b.n_bits {
        return Err(ChemError::LengthMismatch(a.n_bits, b.n_bits));
    }
    let (mut inter, mut union) = (0u32, 0u32);
    for (x, y) in a.words.iter().zip(&b.words) {
        inter += (x & y).count_ones();
        union += (x | y).count_ones();
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(f64::from(inter) / f64::from(union))
}
