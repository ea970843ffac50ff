//! Molecular graph types and the structural perception shared by the parser,
//! scaffold extraction and featurization.

use crate::element;
use crate::features::{self, FeatureMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Chirality {
    None,
    Clockwise,
    CounterClockwise,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Hybridization {
    Sp,
    Sp2,
    Sp3,
    Sp3d,
    Sp3d2,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Contribution to the valence sum; aromatic bonds count one here and the
    /// delocalized electron is accounted for separately.
    pub fn valence_contribution(self) -> u32 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Aromatic => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BondStereo {
    None,
    Any,
    Z,
    E,
    Cis,
    Trans,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    /// Atomic number, 1..=118.
    pub element: u8,
    pub formal_charge: i32,
    pub is_aromatic: bool,
    /// Total attached hydrogens (bracket count or filled from the valence table).
    pub num_hs: u32,
    pub chirality: Chirality,
    /// Heavy-neighbor count.
    pub degree: usize,
    pub hybridization: Hybridization,
    pub mass: f64,
    pub in_ring: bool,
}

impl Atom {
    pub fn new(element: u8) -> Self {
        Atom {
            element,
            formal_charge: 0,
            is_aromatic: false,
            num_hs: 0,
            chirality: Chirality::None,
            degree: 0,
            hybridization: Hybridization::Other,
            mass: element::standard_mass(element),
            in_ring: false,
        }
    }

    pub fn symbol(&self) -> &'static str {
        element::symbol(self.element)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bond {
    pub begin: usize,
    pub end: usize,
    pub order: BondOrder,
    pub is_conjugated: bool,
    pub is_in_ring: bool,
    pub stereo: BondStereo,
}

impl Bond {
    pub fn new(begin: usize, end: usize, order: BondOrder) -> Self {
        Bond {
            begin,
            end,
            order,
            is_conjugated: false,
            is_in_ring: false,
            stereo: BondStereo::None,
        }
    }

    pub fn other(&self, atom: usize) -> usize {
        if self.begin == atom {
            self.end
        } else {
            self.begin
        }
    }
}

/// A parsed molecule with its frozen-layout feature matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct MolecularGraph {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
    pub atom_features: FeatureMatrix,
    pub bond_features: FeatureMatrix,
    pub smiles: String,
    /// Number of disconnected fragments dropped during salt stripping.
    pub stripped_fragments: usize,
}

impl MolecularGraph {
    /// Builds a graph from atoms and bonds, recomputing every derived
    /// property (degree, ring membership, hybridization, conjugation) and the
    /// feature matrices. Element, charge, aromaticity, hydrogens, chirality,
    /// mass, bond order and bond stereo are taken as given.
    pub fn from_parts(
        mut atoms: Vec<Atom>,
        mut bonds: Vec<Bond>,
        smiles: impl Into<String>,
        stripped_fragments: usize,
    ) -> Self {
        perceive(&mut atoms, &mut bonds);
        let (atom_features, bond_features) = features::featurize_parts(&atoms, &bonds);
        MolecularGraph {
            atoms,
            bonds,
            atom_features,
            bond_features,
            smiles: smiles.into(),
            stripped_fragments,
        }
    }

    pub fn num_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn num_bonds(&self) -> usize {
        self.bonds.len()
    }

    /// True when salt stripping discarded at least one fragment.
    pub fn fragment_warning(&self) -> bool {
        self.stripped_fragments > 0
    }

    /// Per-atom list of `(neighbor, bond index)`.
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        adjacency(self.atoms.len(), &self.bonds)
    }

    /// Returns the same molecule with atoms renumbered so that old atom `i`
    /// becomes atom `new_index[i]`.
    pub fn permuted(&self, new_index: &[usize]) -> MolecularGraph {
        assert_eq!(new_index.len(), self.atoms.len(), "permutation length");
        let mut atoms = vec![None; self.atoms.len()];
        for (old, atom) in self.atoms.iter().enumerate() {
            atoms[new_index[old]] = Some(atom.clone());
        }
        let atoms = atoms
            .into_iter()
            .map(|a| a.expect("new_index is a permutation"))
            .collect();
        let bonds = self
            .bonds
            .iter()
            .map(|b| Bond {
                begin: new_index[b.begin],
                end: new_index[b.end],
                ..b.clone()
            })
            .collect();
        MolecularGraph::from_parts(atoms, bonds, self.smiles.clone(), self.stripped_fragments)
    }

    /// Subgraph induced by `keep` (ascending atom indices), preserving their
    /// relative order. `extra_hs[k]` hydrogens are added to the k-th kept atom.
    pub fn induced_subgraph(&self, keep: &[usize], extra_hs: &[u32]) -> MolecularGraph {
        debug_assert_eq!(keep.len(), extra_hs.len());
        let mut remap = vec![usize::MAX; self.atoms.len()];
        for (new, &old) in keep.iter().enumerate() {
            remap[old] = new;
        }
        let atoms = keep
            .iter()
            .zip(extra_hs)
            .map(|(&old, &h)| {
                let mut a = self.atoms[old].clone();
                a.num_hs += h;
                a
            })
            .collect();
        let bonds = self
            .bonds
            .iter()
            .filter(|b| remap[b.begin] != usize::MAX && remap[b.end] != usize::MAX)
            .map(|b| Bond {
                begin: remap[b.begin],
                end: remap[b.end],
                ..b.clone()
            })
            .collect();
        MolecularGraph::from_parts(atoms, bonds, self.smiles.clone(), self.stripped_fragments)
    }

    /// Sum of bond valence contributions per atom.
    pub fn bond_order_sums(&self) -> Vec<u32> {
        let mut sums = vec![0; self.atoms.len()];
        for b in &self.bonds {
            sums[b.begin] += b.order.valence_contribution();
            sums[b.end] += b.order.valence_contribution();
        }
        sums
    }
}

pub(crate) fn adjacency(n: usize, bonds: &[Bond]) -> Vec<Vec<(usize, usize)>> {
    let mut adj = vec![Vec::new(); n];
    for (i, b) in bonds.iter().enumerate() {
        adj[b.begin].push((b.end, i));
        adj[b.end].push((b.begin, i));
    }
    adj
}

/// Connected components as lists of atom indices, each sorted ascending and
/// ordered by their smallest atom.
pub(crate) fn components(n: usize, bonds: &[Bond]) -> Vec<Vec<usize>> {
    let adj = adjacency(n, bonds);
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut comp = vec![start];
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for &(u, _) in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    comp.push(u);
                    stack.push(u);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Marks bonds that lie on a cycle: a bond is a ring bond iff it is not a
/// bridge of the graph.
pub(crate) fn ring_bonds(n: usize, bonds: &[Bond]) -> Vec<bool> {
    let adj = adjacency(n, bonds);
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut is_bridge = vec![false; bonds.len()];
    let mut timer = 0;
    for root in 0..n {
        if disc[root] != usize::MAX {
            continue;
        }
        // Iterative DFS: (vertex, bond used to enter, next adjacency slot).
        let mut stack: Vec<(usize, Option<usize>, usize)> = vec![(root, None, 0)];
        disc[root] = timer;
        low[root] = timer;
        timer += 1;
        while let Some(&mut (v, parent_bond, ref mut slot)) = stack.last_mut() {
            if *slot < adj[v].len() {
                let (u, bond) = adj[v][*slot];
                *slot += 1;
                if Some(bond) == parent_bond {
                    continue;
                }
                if disc[u] == usize::MAX {
                    disc[u] = timer;
                    low[u] = timer;
                    timer += 1;
                    stack.push((u, Some(bond), 0));
                } else {
                    low[v] = low[v].min(disc[u]);
                }
            } else {
                stack.pop();
                if let Some(&(p, _, _)) = stack.last() {
                    low[p] = low[p].min(low[v]);
                    if low[v] > disc[p] {
                        is_bridge[parent_bond.expect("non-root has a parent bond")] = true;
                    }
                }
            }
        }
    }
    is_bridge.into_iter().map(|b| !b).collect()
}

fn perceive(atoms: &mut [Atom], bonds: &mut [Bond]) {
    let n = atoms.len();
    let in_ring = ring_bonds(n, bonds);
    for atom in atoms.iter_mut() {
        atom.degree = 0;
        atom.in_ring = false;
    }
    for (bond, ring) in bonds.iter_mut().zip(&in_ring) {
        bond.is_in_ring = *ring;
        atoms[bond.begin].degree += 1;
        atoms[bond.end].degree += 1;
        if *ring {
            atoms[bond.begin].in_ring = true;
            atoms[bond.end].in_ring = true;
        }
    }
    let adj = adjacency(n, bonds);
    for (i, atom) in atoms.iter_mut().enumerate() {
        atom.hybridization = hybridization(atom, &adj[i], bonds);
    }
    let conj = conjugation(atoms, bonds, &adj);
    for (bond, c) in bonds.iter_mut().zip(conj) {
        bond.is_conjugated = c;
    }
}

/// Heuristic hybridization from degree, hydrogens and bond orders.
fn hybridization(atom: &Atom, nbrs: &[(usize, usize)], bonds: &[Bond]) -> Hybridization {
    let steric = nbrs.len() + atom.num_hs as usize;
    if steric == 0 {
        return Hybridization::Other;
    }
    let (mut doubles, mut triples, mut valence) = (0, 0, atom.num_hs);
    for &(_, b) in nbrs {
        let order = bonds[b].order;
        valence += order.valence_contribution();
        match order {
            BondOrder::Double => doubles += 1,
            BondOrder::Triple => triples += 1,
            _ => {}
        }
    }
    if matches!(atom.element, 15 | 16) {
        let lowest = element::organic_valences(atom.element).map_or(0, |v| v[0]);
        if valence > lowest {
            return match steric {
                5 => Hybridization::Sp3d,
                6 => Hybridization::Sp3d2,
                _ => Hybridization::Sp3,
            };
        }
    }
    if triples > 0 || doubles >= 2 {
        Hybridization::Sp
    } else if doubles == 1 || atom.is_aromatic {
        Hybridization::Sp2
    } else {
        Hybridization::Sp3
    }
}

fn is_lone_pair_donor(atom: &Atom) -> bool {
    matches!(atom.element, 7 | 8 | 16) && atom.formal_charge <= 0
}

/// A bond is conjugated when it is aromatic, when it is a multiple bond next
/// to another pi system or lone pair, or when it is a single bond joining a
/// pi atom to another pi atom or lone-pair donor.
fn conjugation(atoms: &[Atom], bonds: &[Bond], adj: &[Vec<(usize, usize)>]) -> Vec<bool> {
    let pi_atom: Vec<bool> = (0..atoms.len())
        .map(|i| adj[i].iter().any(|&(_, b)| bonds[b].order != BondOrder::Single))
        .collect();
    bonds
        .iter()
        .enumerate()
        .map(|(bi, bond)| match bond.order {
            BondOrder::Aromatic => true,
            BondOrder::Double | BondOrder::Triple => [bond.begin, bond.end].iter().any(|&a| {
                adj[a].iter().any(|&(u, b)| {
                    b != bi
                        && bonds[b].order == BondOrder::Single
                        && (pi_atom[u] || is_lone_pair_donor(&atoms[u]))
                }) || adj[a]
                    .iter()
                    .any(|&(_, b)| b != bi && bonds[b].order != BondOrder::Single)
            }),
            BondOrder::Single => {
                let (u, v) = (bond.begin, bond.end);
                (pi_atom[u] && (pi_atom[v] || is_lone_pair_donor(&atoms[v])))
                    || (pi_atom[v] && is_lone_pair_donor(&atoms[u]))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(n: usize, ring: bool) -> Vec<Bond> {
        let mut b: Vec<Bond> = (1..n).map(|i| Bond::new(i - 1, i, BondOrder::Single)).collect();
        if ring {
            b.push(Bond::new(n - 1, 0, BondOrder::Single));
        }
        b
    }

    #[test]
    fn bridges_in_chain_and_ring() {
        assert!(ring_bonds(4, &chain(4, false)).iter().all(|r| !r));
        assert!(ring_bonds(5, &chain(5, true)).iter().all(|r| *r));
        // ring with a tail: 0-1-2-0 plus 2-3
        let mut b = chain(3, true);
        b.push(Bond::new(2, 3, BondOrder::Single));
        assert_eq!(ring_bonds(4, &b), vec![true, true, true, false]);
    }

    #[test]
    fn components_split() {
        let b = vec![Bond::new(0, 1, BondOrder::Single), Bond::new(2, 3, BondOrder::Single)];
        assert_eq!(components(5, &b), vec![vec![0, 1], vec![2, 3], vec![4]]);
    }
}
