//! SMILES parser.
//!
//! Supported grammar: organic-subset atoms (B C N O P S F Cl Br I and the
//! aromatic b c n o p s), bracket atoms with isotope, chirality (`@`, `@@`),
//! hydrogen count, charge and atom class, ring closures `0-9` and `%nn`,
//! branches, the bond symbols `- = # : / \` and `.` fragment separators.
//! Anything else is rejected with [`ChemError::UnsupportedToken`].

use std::collections::BTreeMap;

use crate::aromatic;
use crate::element;
use crate::error::{ChemError, Result};
use crate::fingerprint;
use crate::graph::{components, ring_bonds, Atom, Bond, BondOrder, BondStereo, Chirality, MolecularGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BondSym {
    Single,
    Double,
    Triple,
    Aromatic,
    Up,
    Down,
}

impl BondSym {
    fn is_directional(self) -> bool {
        matches!(self, BondSym::Up | BondSym::Down)
    }
}

#[derive(Debug, Clone)]
struct RawAtom {
    element: u8,
    aromatic: bool,
    charge: i32,
    /// Bracket hydrogen count; `None` for organic-subset atoms.
    bracket_hs: Option<u32>,
    /// Hydrogens folded in from explicit `[H]` neighbors.
    folded_hs: u32,
    chirality: Chirality,
    isotope: Option<u32>,
}

#[derive(Debug, Clone)]
struct RawBond {
    a: usize,
    b: usize,
    sym: Option<BondSym>,
    /// Atom the bond symbol was written after (for `/` and `\`).
    written_from: usize,
}

struct RingOpen {
    atom: usize,
    sym: Option<BondSym>,
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
    atoms: Vec<RawAtom>,
    bonds: Vec<RawBond>,
    rings: BTreeMap<u32, RingOpen>,
}

fn unsupported(s: &[u8], position: usize, len: usize) -> ChemError {
    let end = (position + len.max(1)).min(s.len());
    ChemError::UnsupportedToken {
        token: String::from_utf8_lossy(&s[position.min(s.len())..end]).into_owned(),
        position,
    }
}

impl<'a> Parser<'a> {
    fn new(s: &'a str) -> Self {
        Parser {
            s: s.as_bytes(),
            pos: 0,
            atoms: Vec::new(),
            bonds: Vec::new(),
            rings: BTreeMap::new(),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.s.get(self.pos).copied()
    }

    fn err_here(&self, len: usize) -> ChemError {
        unsupported(self.s, self.pos, len)
    }

    fn run(&mut self) -> Result<()> {
        let mut prev: Option<usize> = None;
        let mut pending: Option<BondSym> = None;
        let mut branches: Vec<usize> = Vec::new();
        while let Some(c) = self.peek() {
            match c {
                b'(' => {
                    let p = prev.ok_or_else(|| self.err_here(1))?;
                    if pending.is_some() {
                        return Err(self.err_here(1));
                    }
                    branches.push(p);
                    self.pos += 1;
                }
                b')' => {
                    if pending.is_some() {
                        return Err(self.err_here(1));
                    }
                    prev = Some(branches.pop().ok_or_else(|| self.err_here(1))?);
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' | b'/' | b'\\' => {
                    if pending.is_some() || prev.is_none() {
                        return Err(self.err_here(1));
                    }
                    pending = Some(match c {
                        b'-' => BondSym::Single,
                        b'=' => BondSym::Double,
                        b'#' => BondSym::Triple,
                        b':' => BondSym::Aromatic,
                        b'/' => BondSym::Up,
                        _ => BondSym::Down,
                    });
                    self.pos += 1;
                }
                b'.' => {
                    if pending.is_some() || prev.is_none() {
                        return Err(self.err_here(1));
                    }
                    prev = None;
                    self.pos += 1;
                }
                b'0'..=b'9' | b'%' => {
                    let start = self.pos;
                    let atom = prev.ok_or_else(|| self.err_here(1))?;
                    let digit = self.ring_number()?;
                    self.ring_bond(atom, digit, pending.take(), start)?;
                }
                b'[' => {
                    let atom = self.bracket_atom()?;
                    self.connect(prev, atom, pending.take())?;
                    prev = Some(atom);
                }
                _ => {
                    let atom = self.organic_atom()?;
                    self.connect(prev, atom, pending.take())?;
                    prev = Some(atom);
                }
            }
        }
        if pending.is_some() || !branches.is_empty() {
            return Err(unsupported(self.s, self.s.len().saturating_sub(1), 1));
        }
        if let Some((&digit, _)) = self.rings.iter().next() {
            return Err(ChemError::UnclosedRing(digit));
        }
        Ok(())
    }

    fn ring_number(&mut self) -> Result<u32> {
        let c = self.s[self.pos];
        if c == b'%' {
            let digits = self.s.get(self.pos + 1..self.pos + 3).ok_or_else(|| self.err_here(3))?;
            if !digits.iter().all(u8::is_ascii_digit) {
                return Err(self.err_here(3));
            }
            self.pos += 3;
            Ok(u32::from(digits[0] - b'0') * 10 + u32::from(digits[1] - b'0'))
        } else {
            self.pos += 1;
            Ok(u32::from(c - b'0'))
        }
    }

    fn ring_bond(&mut self, atom: usize, digit: u32, sym: Option<BondSym>, pos: usize) -> Result<()> {
        match self.rings.remove(&digit) {
            None => {
                self.rings.insert(digit, RingOpen { atom, sym });
                Ok(())
            }
            Some(open) => {
                if open.atom == atom {
                    return Err(unsupported(self.s, pos, 1));
                }
                let (sym, from) = match (open.sym, sym) {
                    (Some(a), Some(b)) if a == b || (a.is_directional() && b.is_directional()) => {
                        (Some(a), open.atom)
                    }
                    (Some(_), Some(_)) => return Err(unsupported(self.s, pos, 1)),
                    (Some(a), None) => (Some(a), open.atom),
                    (None, b) => (b, atom),
                };
                self.add_bond(open.atom, atom, sym, from, pos)
            }
        }
    }

    fn connect(&mut self, prev: Option<usize>, atom: usize, sym: Option<BondSym>) -> Result<()> {
        if let Some(p) = prev {
            self.add_bond(p, atom, sym, p, self.pos)?;
        }
        Ok(())
    }

    fn add_bond(&mut self, a: usize, b: usize, sym: Option<BondSym>, from: usize, pos: usize) -> Result<()> {
        let dup = self
            .bonds
            .iter()
            .any(|x| (x.a == a && x.b == b) || (x.a == b && x.b == a));
        if dup {
            return Err(unsupported(self.s, pos.saturating_sub(1), 1));
        }
        self.bonds.push(RawBond { a, b, sym, written_from: from });
        Ok(())
    }

    fn push_atom(&mut self, element: u8, aromatic: bool) -> usize {
        self.atoms.push(RawAtom {
            element,
            aromatic,
            charge: 0,
            bracket_hs: None,
            folded_hs: 0,
            chirality: Chirality::None,
            isotope: None,
        });
        self.atoms.len() - 1
    }

    fn organic_atom(&mut self) -> Result<usize> {
        let c = self.s[self.pos];
        let next = self.s.get(self.pos + 1).copied();
        let (z, aromatic, len) = match (c, next) {
            (b'C', Some(b'l')) => (17, false, 2),
            (b'B', Some(b'r')) => (35, false, 2),
            (b'B', _) => (5, false, 1),
            (b'C', _) => (6, false, 1),
            (b'N', _) => (7, false, 1),
            (b'O', _) => (8, false, 1),
            (b'P', _) => (15, false, 1),
            (b'S', _) => (16, false, 1),
            (b'F', _) => (9, false, 1),
            (b'I', _) => (53, false, 1),
            (b'b', _) => (5, true, 1),
            (b'c', _) => (6, true, 1),
            (b'n', _) => (7, true, 1),
            (b'o', _) => (8, true, 1),
            (b'p', _) => (15, true, 1),
            (b's', _) => (16, true, 1),
            _ => return Err(self.err_here(1)),
        };
        self.pos += len;
        Ok(self.push_atom(z, aromatic))
    }

    fn number(&mut self) -> Option<u32> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == start {
            None
        } else {
            std::str::from_utf8(&self.s[start..self.pos]).ok()?.parse().ok()
        }
    }

    fn bracket_atom(&mut self) -> Result<usize> {
        let open = self.pos;
        self.pos += 1;
        let isotope = self.number();

        let (z, aromatic) = self.bracket_symbol().ok_or_else(|| unsupported(self.s, open, self.pos - open + 1))?;

        let mut chirality = Chirality::None;
        if self.peek() == Some(b'@') {
            self.pos += 1;
            chirality = Chirality::CounterClockwise;
            if self.peek() == Some(b'@') {
                self.pos += 1;
                chirality = Chirality::Clockwise;
            }
            if self.peek().is_some_and(|c| c.is_ascii_uppercase() && c != b'H') {
                return Err(self.err_here(2));
            }
        }

        let mut hs = 0;
        if self.peek() == Some(b'H') {
            self.pos += 1;
            hs = self.number().unwrap_or(1);
        }

        let mut charge = 0i32;
        if let Some(sign @ (b'+' | b'-')) = self.peek() {
            let unit = if sign == b'+' { 1 } else { -1 };
            self.pos += 1;
            if let Some(n) = self.number() {
                charge = unit * n as i32;
            } else {
                charge = unit;
                while self.peek() == Some(sign) {
                    self.pos += 1;
                    charge += unit;
                }
            }
        }

        if self.peek() == Some(b':') {
            self.pos += 1;
            if self.number().is_none() {
                return Err(self.err_here(1));
            }
        }
        if self.peek() != Some(b']') {
            return Err(self.err_here(1));
        }
        self.pos += 1;

        let idx = self.push_atom(z, aromatic);
        let atom = &mut self.atoms[idx];
        atom.charge = charge;
        atom.bracket_hs = Some(hs);
        atom.chirality = chirality;
        atom.isotope = isotope;
        Ok(idx)
    }

    fn bracket_symbol(&mut self) -> Option<(u8, bool)> {
        let c = self.peek()?;
        if c.is_ascii_lowercase() {
            for (sym, z) in [("se", 34u8), ("as", 33), ("te", 52)] {
                if self.s[self.pos..].starts_with(sym.as_bytes()) {
                    self.pos += 2;
                    return Some((z, true));
                }
            }
            let z = match c {
                b'b' => 5,
                b'c' => 6,
                b'n' => 7,
                b'o' => 8,
                b'p' => 15,
                b's' => 16,
                _ => return None,
            };
            self.pos += 1;
            return Some((z, true));
        }
        if !c.is_ascii_uppercase() {
            return None;
        }
        if let Some(&l) = self.s.get(self.pos + 1) {
            if l.is_ascii_lowercase() {
                let two = std::str::from_utf8(&self.s[self.pos..self.pos + 2]).ok()?;
                if let Some(z) = element::atomic_number(two) {
                    self.pos += 2;
                    return Some((z, false));
                }
            }
        }
        let one = std::str::from_utf8(&self.s[self.pos..self.pos + 1]).ok()?;
        let z = element::atomic_number(one)?;
        self.pos += 1;
        Some((z, false))
    }
}

/// Folds explicit hydrogen atoms that hang off a single heavy atom into that
/// atom's hydrogen count. Returns the surviving atoms' old indices.
fn fold_hydrogens(atoms: &mut [RawAtom], bonds: &mut Vec<RawBond>) -> Vec<usize> {
    let n = atoms.len();
    let mut degree = vec![0usize; n];
    for b in bonds.iter() {
        degree[b.a] += 1;
        degree[b.b] += 1;
    }
    let mut removed = vec![false; n];
    for b in bonds.iter() {
        for (h, heavy) in [(b.a, b.b), (b.b, b.a)] {
            let ha = &atoms[h];
            if ha.element == 1
                && ha.charge == 0
                && ha.bracket_hs == Some(0)
                && degree[h] == 1
                && atoms[heavy].element != 1
                && b.sym.is_none_or(|s| s == BondSym::Single)
            {
                removed[h] = true;
            }
        }
    }
    for b in bonds.iter() {
        if removed[b.a] {
            atoms[b.b].folded_hs += 1;
        }
        if removed[b.b] {
            atoms[b.a].folded_hs += 1;
        }
    }
    bonds.retain(|b| !removed[b.a] && !removed[b.b]);
    (0..n).filter(|&i| !removed[i]).collect()
}

/// Parses a SMILES string into a connected molecular graph. Multi-fragment
/// inputs are reduced to the largest fragment by heavy-atom count (ties broken
/// by fingerprint hash) and the number of dropped fragments is recorded.
pub fn parse_smiles(input: &str) -> Result<MolecularGraph> {
    let s = input.trim();
    if s.is_empty() {
        return Err(ChemError::EmptyInput);
    }
    if let Some(position) = s.bytes().position(|c| !c.is_ascii() || c.is_ascii_whitespace()) {
        return Err(ChemError::UnsupportedToken {
            token: s[position..].chars().next().map(String::from).unwrap_or_default(),
            position,
        });
    }
    let mut parser = Parser::new(s);
    parser.run()?;
    let Parser { mut atoms, mut bonds, .. } = parser;
    if atoms.is_empty() {
        return Err(ChemError::EmptyInput);
    }

    let kept = fold_hydrogens(&mut atoms, &mut bonds);
    let mut remap = vec![usize::MAX; atoms.len()];
    for (new, &old) in kept.iter().enumerate() {
        remap[old] = new;
    }
    let atoms: Vec<RawAtom> = kept.iter().map(|&i| atoms[i].clone()).collect();
    for b in bonds.iter_mut() {
        b.a = remap[b.a];
        b.b = remap[b.b];
        b.written_from = remap[b.written_from];
    }

    let (atoms, bonds) = resolve(atoms, &bonds)?;
    let graph = MolecularGraph::from_parts(atoms, bonds, s, 0);
    Ok(largest_fragment(graph))
}

/// Resolves bond orders, fills implicit hydrogens, validates valences and
/// aromatic systems, and assigns double-bond stereo.
fn resolve(raw_atoms: Vec<RawAtom>, raw_bonds: &[RawBond]) -> Result<(Vec<Atom>, Vec<Bond>)> {
    let n = raw_atoms.len();
    let skeleton: Vec<Bond> = raw_bonds
        .iter()
        .map(|b| Bond::new(b.a, b.b, BondOrder::Single))
        .collect();
    let in_ring = ring_bonds(n, &skeleton);

    let mut bonds = Vec::with_capacity(raw_bonds.len());
    for (rb, &ring) in raw_bonds.iter().zip(&in_ring) {
        let both_aromatic = raw_atoms[rb.a].aromatic && raw_atoms[rb.b].aromatic;
        let order = match rb.sym {
            None if both_aromatic && ring => BondOrder::Aromatic,
            None | Some(BondSym::Single | BondSym::Up | BondSym::Down) => BondOrder::Single,
            Some(BondSym::Double) => BondOrder::Double,
            Some(BondSym::Triple) => BondOrder::Triple,
            Some(BondSym::Aromatic) => {
                if !both_aromatic || !ring {
                    return Err(ChemError::ValenceViolation {
                        atom: rb.a,
                        detail: "aromatic bond outside an aromatic ring".into(),
                    });
                }
                BondOrder::Aromatic
            }
        };
        bonds.push(Bond::new(rb.a, rb.b, order));
    }

    let mut atoms: Vec<Atom> = raw_atoms
        .iter()
        .map(|r| {
            let mut a = Atom::new(r.element);
            a.formal_charge = r.charge;
            a.is_aromatic = r.aromatic;
            a.chirality = r.chirality;
            if let Some(iso) = r.isotope {
                a.mass = f64::from(iso);
            }
            a
        })
        .collect();

    let adj = crate::graph::adjacency(n, &bonds);
    for (i, raw) in raw_atoms.iter().enumerate() {
        let bond_sum: u32 = adj[i].iter().map(|&(_, b)| bonds[b].order.valence_contribution()).sum();
        let sum = bond_sum + raw.folded_hs;
        let violation = |detail: String| ChemError::ValenceViolation { atom: i, detail };
        match raw.bracket_hs {
            Some(hs) => {
                let total = sum + hs;
                if let Some(allowed) = element::charged_valences(raw.element, raw.charge) {
                    let max = allowed.iter().copied().max();
                    if max.is_none_or(|m| total > m) {
                        return Err(violation(format!(
                            "{} with charge {} has valence {total}",
                            atoms[i].symbol(),
                            raw.charge
                        )));
                    }
                }
                atoms[i].num_hs = hs + raw.folded_hs;
            }
            None => {
                let allowed = element::organic_valences(raw.element).expect("organic subset atom");
                let max = *allowed.last().expect("non-empty valence list");
                if sum > max {
                    return Err(violation(format!("{} has valence {sum}", atoms[i].symbol())));
                }
                let implicit = if raw.aromatic {
                    let exo = aromatic::has_exocyclic_double(i, &adj, &bonds);
                    let extra = u32::from(matches!(raw.element, 5 | 6 | 7 | 15) && !exo);
                    allowed[0].saturating_sub(sum + extra)
                } else {
                    let target = allowed
                        .iter()
                        .copied()
                        .find(|&v| v >= sum)
                        .expect("sum bounded by max valence");
                    target - sum
                };
                atoms[i].num_hs = implicit + raw.folded_hs;
            }
        }
        if raw.aromatic && !adj[i].iter().any(|&(_, b)| in_ring[b]) {
            return Err(violation("aromatic atom outside a ring".into()));
        }
    }

    aromatic::validate(&atoms, &bonds)?;
    assign_double_bond_stereo(&atoms, &mut bonds, raw_bonds, &adj);
    Ok((atoms, bonds))
}

fn flip(sym: BondSym) -> BondSym {
    match sym {
        BondSym::Up => BondSym::Down,
        BondSym::Down => BondSym::Up,
        other => other,
    }
}

/// E/Z from directional single bonds. With the direction of each marked bond
/// normalized to read "neighbor before end" on the left and "end before
/// neighbor" on the right, equal directions mean the marked neighbours are
/// trans. That relation is then re-expressed relative to the
/// highest-priority neighbour on each end so the label does not depend on
/// which neighbours the string happened to mark. Ends whose two substituents
/// cannot be told apart get no stereo.
fn assign_double_bond_stereo(atoms: &[Atom], bonds: &mut [Bond], raw: &[RawBond], adj: &[Vec<(usize, usize)>]) {
    let mut priority: Option<Vec<usize>> = None;
    for bi in 0..bonds.len() {
        if bonds[bi].order != BondOrder::Double {
            continue;
        }
        let (u, v) = (bonds[bi].begin, bonds[bi].end);
        let marked = |end: usize| {
            adj[end].iter().find_map(|&(x, b)| {
                let sym = raw[b].sym?;
                (b != bi && sym.is_directional()).then_some((x, b, sym))
            })
        };
        let (Some((x, bx, sx)), Some((y, by, sy))) = (marked(u), marked(v)) else {
            continue;
        };
        let prio = priority.get_or_insert_with(|| crate::scaffold::priority_colors(atoms, bonds));
        // Some(true) when the marked neighbour is the top-priority one
        let top = |end: usize, marked: usize| -> Option<bool> {
            let others: Vec<usize> = adj[end]
                .iter()
                .filter(|&&(_, b)| b != bi)
                .map(|&(n, _)| n)
                .collect();
            match others.as_slice() {
                [_] => Some(true),
                [a, b] => {
                    let other = if *a == marked { *b } else { *a };
                    (prio[marked] != prio[other]).then(|| prio[marked] > prio[other])
                }
                _ => None,
            }
        };
        let (Some(tx), Some(ty)) = (top(u, x), top(v, y)) else {
            continue;
        };
        let left = if raw[bx].written_from == x { sx } else { flip(sx) };
        let right = if raw[by].written_from == v { sy } else { flip(sy) };
        let trans = (left == right) ^ (tx != ty);
        bonds[bi].stereo = if trans { BondStereo::E } else { BondStereo::Z };
    }
}

fn largest_fragment(graph: MolecularGraph) -> MolecularGraph {
    let comps = components(graph.num_atoms(), &graph.bonds);
    if comps.len() <= 1 {
        return graph;
    }
    let heavy = |c: &[usize]| c.iter().filter(|&&a| graph.atoms[a].element != 1).count();
    let best = comps.iter().map(|c| heavy(c)).max().expect("at least one component");
    let mut candidates: Vec<MolecularGraph> = comps
        .iter()
        .filter(|c| heavy(c) == best)
        .map(|c| graph.induced_subgraph(c, &vec![0; c.len()]))
        .collect();
    let chosen = if candidates.len() == 1 {
        candidates.pop().expect("one candidate")
    } else {
        log::debug!("{} fragments tie on heavy-atom count; breaking by fingerprint hash", candidates.len());
        candidates
            .into_iter()
            .min_by_key(|g| fingerprint::path_fingerprint(g, 4, 1024).content_hash())
            .expect("non-empty candidates")
    };
    let stripped = comps.len() - 1;
    log::warn!("{}: kept largest of {} fragments", graph.smiles, comps.len());
    MolecularGraph { stripped_fragments: stripped, smiles: graph.smiles, ..chosen }
}
