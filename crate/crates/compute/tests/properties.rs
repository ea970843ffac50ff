use std::collections::BTreeMap;

use cdds_compute::checkpoint::Checkpoint;
use cdds_compute::{Adam, Graph, ParameterStore, Tensor};
use proptest::prelude::*;

fn matrix(max: usize) -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (1..max, 1..max).prop_flat_map(|(r, c)| (Just(r), Just(c), proptest::collection::vec(-10.0..10.0f64, r * c)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matmul_matches_triple_loop((m, k, a) in matrix(6), n in 1usize..6, seed in any::<u64>()) {
        let b: Vec<f64> = (0..k * n).map(|i| ((seed.wrapping_add(i as u64) % 17) as f64) - 8.0).collect();
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::matrix(m, k, a.clone()).unwrap()).unwrap();
        let y = g.constant(Tensor::matrix(k, n, b.clone()).unwrap()).unwrap();
        let z = g.matmul(x, y).unwrap();
        for i in 0..m {
            for j in 0..n {
                let want: f64 = (0..k).map(|t| a[i * k + t] * b[t * n + j]).sum();
                prop_assert!((g.value(z).get(i, j) - want).abs() <= 1e-9 * (1.0 + want.abs()));
            }
        }
    }

    #[test]
    fn softmax_rows_are_distributions((r, c, a) in matrix(6)) {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::matrix(r, c, a).unwrap()).unwrap();
        let s = g.softmax_rows(x).unwrap();
        for i in 0..r {
            let row = g.value(s).row(i);
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&p| p > 0.0));
        }
    }

    #[test]
    fn cosine_map_transpose_is_exact((n1, d, a) in matrix(6), n2 in 1usize..6, seed in any::<u32>()) {
        let b: Vec<f64> = (0..n2 * d).map(|i| (f64::from(seed) * 0.37 + i as f64 * 1.3).sin()).collect();
        let mut g = Graph::<f32>::new();
        let x = g.constant(Tensor::matrix(n1, d, a).unwrap().cast()).unwrap();
        let y = g.constant(Tensor::matrix(n2, d, b).unwrap().cast()).unwrap();
        let xy = g.cosine_map(x, y).unwrap();
        let yx = g.cosine_map(y, x).unwrap();
        for i in 0..n1 {
            for j in 0..n2 {
                prop_assert_eq!(g.value(xy).get(i, j).to_bits(), g.value(yx).get(j, i).to_bits());
                prop_assert!(g.value(xy).get(i, j).abs() <= 1.0 + 1e-6);
            }
        }
    }

    #[test]
    fn segment_softmax_sums_to_one_per_segment(vals in proptest::collection::vec(-30.0..30.0f64, 1..12), k in 1usize..4) {
        let seg: Vec<usize> = (0..vals.len()).map(|i| i % k.min(vals.len())).collect();
        let n_seg = k.min(vals.len());
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::matrix(vals.len(), 1, vals).unwrap()).unwrap();
        let s = g.segment_softmax(x, &seg, n_seg).unwrap();
        let mut sums = vec![0.0; n_seg];
        for (i, &sg) in seg.iter().enumerate() {
            sums[sg] += g.value(s).data()[i];
        }
        for s in sums {
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_is_deterministic(vals in proptest::collection::vec(-1.0..1.0f32, 1..8), grads in proptest::collection::vec(-1.0..1.0f32, 8)) {
        let n = vals.len();
        let mk = || {
            let mut s = ParameterStore::<f32>::new(1);
            s.insert("w", Tensor::matrix(1, n, vals.clone()).unwrap(), true);
            s
        };
        let g = BTreeMap::from([("w".to_string(), Tensor::matrix(1, n, grads[..n].to_vec()).unwrap())]);
        let (mut a, mut b) = (mk(), mk());
        for _ in 0..3 {
            Adam::default().step(&mut a, &g).unwrap();
            Adam::default().step(&mut b, &g).unwrap();
        }
        prop_assert_eq!(a, b);
    }

    #[test]
    fn checkpoint_bytes_roundtrip(vals in proptest::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), 1..20), cfg in "[ -~]{0,40}") {
        let mut s = ParameterStore::<f32>::new(0);
        s.insert("p", Tensor::new(vec![vals.len()], vals).unwrap(), true);
        let ck = Checkpoint::from_store(&cfg, &s);
        let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
        prop_assert_eq!(ck.to_bytes().unwrap(), back.to_bytes().unwrap());
        prop_assert_eq!(back.config, cfg);
    }
}
