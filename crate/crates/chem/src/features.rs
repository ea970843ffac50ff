//! Frozen atom (133 columns) and bond (14 columns) feature layouts.
//!
//! Atom row: atomic number 1..=100 + other (101) | degree 0..=5 + other (7) |
//! formal charge {-1,-2,+1,+2,0} + other (6) | chirality tag (4) + other (5) |
//! hydrogen count 0..=4 + other (6) | hybridization (5) + other (6) |
//! aromatic flag (1) | min(mass / 100, 1) (1).
//!
//! Bond row: null-bond flag (1) | order (4) | conjugated (1) | in ring (1) |
//! stereo (6) + other (7).
//!
//! Checkpoints depend on this layout; any change must bump
//! [`FEATURE_LAYOUT_VERSION`].

use crate::graph::{Atom, Bond, BondOrder, BondStereo, Chirality, Hybridization, MolecularGraph};

pub const ATOM_FEATURE_DIM: usize = 133;
pub const BOND_FEATURE_DIM: usize = 14;
pub const FEATURE_LAYOUT_VERSION: u32 = 1;

/// A contiguous one-hot block inside a feature row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OneHotBlock {
    pub name: &'static str,
    pub offset: usize,
    pub len: usize,
}

pub const ATOM_ONE_HOT_BLOCKS: [OneHotBlock; 6] = [
    OneHotBlock { name: "atomic_number", offset: 0, len: 101 },
    OneHotBlock { name: "degree", offset: 101, len: 7 },
    OneHotBlock { name: "formal_charge", offset: 108, len: 6 },
    OneHotBlock { name: "chirality", offset: 114, len: 5 },
    OneHotBlock { name: "num_hs", offset: 119, len: 6 },
    OneHotBlock { name: "hybridization", offset: 125, len: 6 },
];
pub const AROMATIC_COLUMN: usize = 131;
pub const MASS_COLUMN: usize = 132;

pub const BOND_ONE_HOT_BLOCKS: [OneHotBlock; 2] = [
    OneHotBlock { name: "order", offset: 1, len: 4 },
    OneHotBlock { name: "stereo", offset: 7, len: 7 },
];
pub const NULL_BOND_COLUMN: usize = 0;
pub const CONJUGATED_COLUMN: usize = 5;
pub const IN_RING_COLUMN: usize = 6;

/// Dense row-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        FeatureMatrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// Index of `value` in `choices`, or the trailing "other" slot.
fn slot<T: PartialEq>(choices: &[T], value: &T) -> usize {
    choices.iter().position(|c| c == value).unwrap_or(choices.len())
}

pub fn atom_row(atom: &Atom, out: &mut [f32]) {
    debug_assert_eq!(out.len(), ATOM_FEATURE_DIM);
    out.fill(0.0);
    let [z, deg, charge, chir, hs, hyb] = ATOM_ONE_HOT_BLOCKS;
    let z_slot = if (1..=100).contains(&atom.element) {
        usize::from(atom.element) - 1
    } else {
        100
    };
    out[z.offset + z_slot] = 1.0;
    out[deg.offset + slot(&[0, 1, 2, 3, 4, 5], &atom.degree)] = 1.0;
    out[charge.offset + slot(&[-1, -2, 1, 2, 0], &atom.formal_charge)] = 1.0;
    let tags = [
        Chirality::None,
        Chirality::Clockwise,
        Chirality::CounterClockwise,
        Chirality::Other,
    ];
    out[chir.offset + slot(&tags, &atom.chirality)] = 1.0;
    out[hs.offset + slot(&[0, 1, 2, 3, 4], &atom.num_hs)] = 1.0;
    let states = [
        Hybridization::Sp,
        Hybridization::Sp2,
        Hybridization::Sp3,
        Hybridization::Sp3d,
        Hybridization::Sp3d2,
    ];
    out[hyb.offset + slot(&states, &atom.hybridization)] = 1.0;
    out[AROMATIC_COLUMN] = if atom.is_aromatic { 1.0 } else { 0.0 };
    // capped so rows stay in the unit interval; iodine and heavier saturate
    out[MASS_COLUMN] = (atom.mass / 100.0).min(1.0) as f32;
}

pub fn bond_row(bond: &Bond, out: &mut [f32]) {
    debug_assert_eq!(out.len(), BOND_FEATURE_DIM);
    out.fill(0.0);
    let [order, stereo] = BOND_ONE_HOT_BLOCKS;
    out[NULL_BOND_COLUMN] = 0.0;
    let orders = [
        BondOrder::Single,
        BondOrder::Double,
        BondOrder::Triple,
        BondOrder::Aromatic,
    ];
    out[order.offset + slot(&orders, &bond.order)] = 1.0;
    out[CONJUGATED_COLUMN] = if bond.is_conjugated { 1.0 } else { 0.0 };
    out[IN_RING_COLUMN] = if bond.is_in_ring { 1.0 } else { 0.0 };
    let stereos = [
        BondStereo::None,
        BondStereo::Any,
        BondStereo::Z,
        BondStereo::E,
        BondStereo::Cis,
        BondStereo::Trans,
    ];
    out[stereo.offset + slot(&stereos, &bond.stereo)] = 1.0;
}

pub(crate) fn featurize_parts(atoms: &[Atom], bonds: &[Bond]) -> (FeatureMatrix, FeatureMatrix) {
    let mut af = FeatureMatrix::zeros(atoms.len(), ATOM_FEATURE_DIM);
    for (i, atom) in atoms.iter().enumerate() {
        atom_row(atom, af.row_mut(i));
    }
    let mut bf = FeatureMatrix::zeros(bonds.len(), BOND_FEATURE_DIM);
    for (i, bond) in bonds.iter().enumerate() {
        bond_row(bond, bf.row_mut(i));
    }
    (af, bf)
}

/// Recomputes the atom and bond feature matrices of a parsed graph.
pub fn featurize(graph: &MolecularGraph) -> (FeatureMatrix, FeatureMatrix) {
    featurize_parts(&graph.atoms, &graph.bonds)
}

/// Checks the structural contract of a feature matrix: column count and
/// one-hot blocks summing to exactly one in every row.
pub fn check_one_hot(m: &FeatureMatrix, cols: usize, blocks: &[OneHotBlock]) -> Result<(), String> {
    if m.cols != cols {
        return Err(format!("expected {cols} columns, found {}", m.cols));
    }
    for r in 0..m.rows {
        let row = m.row(r);
        for b in blocks {
            let s: f32 = row[b.offset..b.offset + b.len].iter().sum();
            if s != 1.0 {
                return Err(format!("row {r}: block {} sums to {s}", b.name));
            }
        }
        if row.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(format!("row {r}: value outside the unit interval"));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_layout_covers_all_columns() {
        let total: usize = ATOM_ONE_HOT_BLOCKS.iter().map(|b| b.len).sum::<usize>() + 2;
        assert_eq!(total, ATOM_FEATURE_DIM);
        let last = ATOM_ONE_HOT_BLOCKS[5];
        assert_eq!(last.offset + last.len, AROMATIC_COLUMN);
        let bond_total: usize = BOND_ONE_HOT_BLOCKS.iter().map(|b| b.len).sum::<usize>() + 3;
        assert_eq!(bond_total, BOND_FEATURE_DIM);
    }

    #[test]
    fn out_of_range_values_use_other_slot() {
        let mut atom = Atom::new(110);
        atom.degree = 9;
        atom.formal_charge = 3;
        atom.num_hs = 7;
        let mut row = vec![0.0; ATOM_FEATURE_DIM];
        atom_row(&atom, &mut row);
        for b in ATOM_ONE_HOT_BLOCKS {
            if b.name == "chirality" || b.name == "hybridization" {
                continue;
            }
            assert_eq!(row[b.offset + b.len - 1], 1.0, "{}", b.name);
        }
    }
}
