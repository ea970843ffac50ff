use std::collections::BTreeSet;

use cdds_chem::features::{check_one_hot, ATOM_ONE_HOT_BLOCKS, BOND_ONE_HOT_BLOCKS};
use cdds_chem::{parse_smiles, path_fingerprint, scaffold_graph, scaffold_key, tanimoto, Fingerprint, MolecularGraph};
use proptest::prelude::*;
use proptest::sample::select;

const MOLECULES: &[&str] = &[
    "CC(=O)Oc1ccccc1C(=O)O",
    "COc1cc2ncnc(Nc3ccc(F)c(Cl)c3)c2cc1OCCCN1CCOCC1",
    "Cc1ccc(NC(=O)c2ccc(CN3CCN(C)CC3)cc2)cc1Nc1nccc(n1)-c1cccnc1",
    "S=c1nc[nH]c2nc[nH]c12",
    "CN(C)C(=N)N=C(N)N",
    "C[C@@H]1C[C@H]2[C@@H]3CCC4=CC(=O)C=C[C@]4(C)[C@@]3(F)[C@@H](O)C[C@]2(C)[C@@]1(O)C(=O)CO",
    "CC/C(=C(\\c1ccccc1)c1ccc(OCCN(C)C)cc1)c1ccccc1",
    "N#CC[C@H](C1CCCC1)n1cc(cn1)-c1ncnc2[nH]ccc12",
    "C12C3C4C1C5C2C3C45",
    "O=C1CCCCC1",
];

fn sorted_atom_rows(g: &MolecularGraph) -> Vec<Vec<u32>> {
    let mut rows: Vec<Vec<u32>> = (0..g.atom_features.rows)
        .map(|i| g.atom_features.row(i).iter().map(|v| v.to_bits()).collect())
        .collect();
    rows.sort();
    rows
}

fn permutation(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle()
}

fn mol_and_perm() -> impl Strategy<Value = (MolecularGraph, Vec<usize>)> {
    select(MOLECULES)
        .prop_map(|s| parse_smiles(s).unwrap())
        .prop_flat_map(|g| {
            let n = g.num_atoms();
            (Just(g), permutation(n))
        })
}

/// Random SMILES assembled from chain, branch and ring fragments.
fn smiles_strategy() -> impl Strategy<Value = String> {
    let piece = prop_oneof![
        Just("C"), Just("N"), Just("O"), Just("CC"), Just("C(=O)"), Just("c1ccccc1"),
        Just("C1CCNCC1"), Just("c1ccncc1"), Just("C(C(F)(F)F)"), Just("S(=O)(=O)"), Just("C(Cl)"),
        Just("c1ccc2[nH]ccc2c1"), Just("C(C#N)"), Just("C=C"),
    ];
    proptest::collection::vec(piece, 1..6).prop_map(|parts| parts.join("C"))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parse_is_deterministic(s in select(MOLECULES)) {
        prop_assert_eq!(parse_smiles(s).unwrap(), parse_smiles(s).unwrap());
    }

    #[test]
    fn permutation_keeps_features_scaffold_and_fingerprint((g, perm) in mol_and_perm()) {
        let p = g.permuted(&perm);
        prop_assert_eq!(sorted_atom_rows(&g), sorted_atom_rows(&p));
        prop_assert_eq!(scaffold_key(&g), scaffold_key(&p));
        prop_assert_eq!(path_fingerprint(&g, 5, 1024), path_fingerprint(&p, 5, 1024));
    }

    #[test]
    fn scaffold_pruning_is_idempotent(s in select(MOLECULES)) {
        let g = parse_smiles(s).unwrap();
        match scaffold_graph(&g) {
            Some(sc) => {
                prop_assert_eq!(scaffold_key(&sc), scaffold_key(&g));
                let again = scaffold_graph(&sc).unwrap();
                prop_assert_eq!(again.num_atoms(), sc.num_atoms());
            }
            None => prop_assert_eq!(scaffold_key(&g), ""),
        }
    }

    #[test]
    fn generated_molecules_are_well_formed(s in smiles_strategy()) {
        let g = parse_smiles(&s).unwrap();
        prop_assert!(check_one_hot(&g.atom_features, 133, &ATOM_ONE_HOT_BLOCKS).is_ok());
        prop_assert!(check_one_hot(&g.bond_features, 14, &BOND_ONE_HOT_BLOCKS).is_ok());
        let deg: Vec<usize> = g.atoms.iter().map(|a| a.degree).collect();
        let mut count = vec![0; g.num_atoms()];
        for b in &g.bonds {
            prop_assert_ne!(b.begin, b.end);
            count[b.begin] += 1;
            count[b.end] += 1;
        }
        prop_assert_eq!(deg, count);
        let sc = scaffold_key(&g);
        prop_assert_eq!(sc.is_empty(), !g.bonds.iter().any(|b| b.is_in_ring));
    }

    #[test]
    fn tanimoto_matches_set_arithmetic(
        a in proptest::collection::btree_set(0usize..128, 0..40),
        b in proptest::collection::btree_set(0usize..128, 0..40),
    ) {
        let fa = Fingerprint::from_indices(128, &a.iter().copied().collect::<Vec<_>>());
        let fb = Fingerprint::from_indices(128, &b.iter().copied().collect::<Vec<_>>());
        let inter = a.intersection(&b).count();
        let union: BTreeSet<_> = a.union(&b).collect();
        let want = if union.is_empty() { 1.0 } else { inter as f64 / union.len() as f64 };
        let t = tanimoto(&fa, &fb).unwrap();
        prop_assert!((t - want).abs() < 1e-12);
        prop_assert_eq!(t, tanimoto(&fb, &fa).unwrap());
        prop_assert_eq!(tanimoto(&fa, &fa).unwrap(), 1.0);
        prop_assert!((0.0..=1.0).contains(&t));
    }
}

#[test]
fn fingerprint_examples() {
    let single = path_fingerprint(&parse_smiles("C").unwrap(), 2, 64);
    assert_eq!(single.count_ones(), 1);
    let a = Fingerprint::from_indices(64, &[1, 2]);
    let b = Fingerprint::from_indices(64, &[2, 3]);
    assert!((tanimoto(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    let c = Fingerprint::from_indices(64, &[5]);
    assert_eq!(tanimoto(&a, &c).unwrap(), 0.0);
    assert!(tanimoto(&a, &Fingerprint::new(128)).is_err());
}

#[test]
fn featurize_examples() {
    let g = parse_smiles("C").unwrap();
    let row = g.atom_features.row(0);
    assert_eq!(row[5], 1.0);
    assert_eq!(row.iter().take(101).sum::<f32>(), 1.0);
    assert!((row[132] - 0.12011).abs() < 1e-7);
}
