//! Bemis–Murcko scaffolds and canonical graph keys.

use crate::element;
use crate::graph::{Atom, Bond, BondOrder, MolecularGraph};

/// Maximum number of search leaves explored by the canonical labeling before
/// settling on the best certificate seen so far.
const LEAF_BUDGET: usize = 20_000;

/// Ring systems plus linkers: degree-1 non-ring atoms are deleted until none
/// remain. Removed bonds are replaced by hydrogens on the surviving atom.
/// Returns `None` for acyclic molecules.
pub fn scaffold_graph(graph: &MolecularGraph) -> Option<MolecularGraph> {
    if !graph.bonds.iter().any(|b| b.is_in_ring) {
        return None;
    }
    let adj = graph.adjacency();
    let n = graph.num_atoms();
    let mut alive = vec![true; n];
    let mut degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut queue: Vec<usize> = (0..n)
        .filter(|&i| degree[i] <= 1 && !graph.atoms[i].in_ring)
        .collect();
    while let Some(v) = queue.pop() {
        if !alive[v] {
            continue;
        }
        alive[v] = false;
        for &(u, _) in &adj[v] {
            if alive[u] {
                degree[u] -= 1;
                if degree[u] <= 1 && !graph.atoms[u].in_ring {
                    queue.push(u);
                }
            }
        }
    }
    let keep: Vec<usize> = (0..n).filter(|&i| alive[i]).collect();
    let extra: Vec<u32> = keep
        .iter()
        .map(|&i| {
            adj[i]
                .iter()
                .filter(|&&(u, _)| !alive[u])
                .map(|&(_, b)| graph.bonds[b].order.valence_contribution())
                .sum()
        })
        .collect();
    Some(graph.induced_subgraph(&keep, &extra))
}

/// Canonical key of the Bemis–Murcko scaffold; `""` for acyclic molecules.
pub fn scaffold_key(graph: &MolecularGraph) -> String {
    scaffold_graph(graph).map_or_else(String::new, |s| canonical_key(&s))
}

/// Atom invariant used for canonical labeling. Hydrogen counts only enter for
/// aromatic N/P, where they separate pyrrole-type from pyridine-type atoms.
fn atom_label(a: &Atom) -> (u8, bool, i32, u32) {
    let hs = if a.is_aromatic && matches!(a.element, 7 | 15) { a.num_hs } else { 0 };
    (a.element, a.is_aromatic, a.formal_charge, hs)
}

struct Labeler<'a> {
    adj: Vec<Vec<(usize, u8)>>,
    labels: Vec<(u8, bool, i32, u32)>,
    graph: &'a MolecularGraph,
    best: Option<(Vec<i64>, Vec<usize>)>,
    leaves: usize,
}

impl Labeler<'_> {
    fn refine(&self, colors: &mut [usize]) {
        refine(&self.adj, colors);
    }

    fn certificate(&self, colors: &[usize]) -> (Vec<i64>, Vec<usize>) {
        let n = colors.len();
        let mut order = vec![0; n];
        for (v, &c) in colors.iter().enumerate() {
            order[c] = v;
        }
        let mut cert = Vec::with_capacity(4 * n + 3 * self.graph.num_bonds());
        for &v in &order {
            let (z, arom, q, hs) = self.labels[v];
            cert.extend([i64::from(z), i64::from(arom), i64::from(q), i64::from(hs)]);
        }
        let mut edges: Vec<(usize, usize, u8)> = self
            .graph
            .bonds
            .iter()
            .map(|b| {
                let (x, y) = (colors[b.begin], colors[b.end]);
                (x.min(y), x.max(y), b.order.code())
            })
            .collect();
        edges.sort_unstable();
        for (x, y, c) in edges {
            cert.extend([x as i64, y as i64, i64::from(c)]);
        }
        (cert, order)
    }

    fn search(&mut self, mut colors: Vec<usize>) {
        self.refine(&mut colors);
        let n = colors.len();
        if distinct(&colors) == n {
            self.leaves += 1;
            let (cert, order) = self.certificate(&colors);
            if self.best.as_ref().is_none_or(|(b, _)| cert < *b) {
                self.best = Some((cert, order));
            }
            return;
        }
        let mut sizes = vec![0usize; n];
        for &c in &colors {
            sizes[c] += 1;
        }
        let target = (0..n).find(|&c| sizes[c] > 1).expect("non-discrete partition");
        let cell: Vec<usize> = (0..n).filter(|&v| colors[v] == target).collect();
        for v in cell {
            if self.leaves >= LEAF_BUDGET {
                return;
            }
            let mut next: Vec<usize> = colors.iter().map(|&c| 2 * c + 1).collect();
            next[v] = 2 * target;
            self.search(next);
        }
    }
}

/// Iterated color refinement until the partition stops splitting. Colors are
/// ranks of (previous color, sorted neighbour colors), so the order induced by
/// the initial labels is preserved.
fn refine(adj: &[Vec<(usize, u8)>], colors: &mut [usize]) {
    let mut count = distinct(colors);
    loop {
        let sigs: Vec<(usize, Vec<(u8, usize)>)> = (0..colors.len())
            .map(|v| {
                let mut nb: Vec<(u8, usize)> = adj[v].iter().map(|&(u, code)| (code, colors[u])).collect();
                nb.sort_unstable();
                (colors[v], nb)
            })
            .collect();
        let mut uniq = sigs.clone();
        uniq.sort();
        uniq.dedup();
        for (v, sig) in sigs.iter().enumerate() {
            colors[v] = uniq.binary_search(sig).expect("signature present");
        }
        if uniq.len() == count {
            break;
        }
        count = uniq.len();
    }
}

fn initial_colors(atoms: &[Atom], bonds: &[Bond]) -> (Vec<Vec<(usize, u8)>>, Vec<usize>) {
    let labels: Vec<_> = atoms.iter().map(atom_label).collect();
    let mut adj = vec![Vec::new(); atoms.len()];
    for b in bonds {
        adj[b.begin].push((b.end, b.order.code()));
        adj[b.end].push((b.begin, b.order.code()));
    }
    let mut uniq = labels.clone();
    uniq.sort();
    uniq.dedup();
    let colors = labels
        .iter()
        .map(|l| uniq.binary_search(l).expect("label present"))
        .collect();
    (adj, colors)
}

/// Order-independent atom priorities: atomic number first, ties split by
/// iterated neighbourhood refinement. Equal values mean the atoms could not be
/// told apart.
pub(crate) fn priority_colors(atoms: &[Atom], bonds: &[Bond]) -> Vec<usize> {
    let (adj, mut colors) = initial_colors(atoms, bonds);
    refine(&adj, &mut colors);
    colors
}

fn distinct(colors: &[usize]) -> usize {
    let mut c = colors.to_vec();
    c.sort_unstable();
    c.dedup();
    c.len()
}

/// Canonical atom order: position `k` holds the atom with canonical rank `k`.
/// Isomorphic labeled graphs receive orders under which they coincide.
pub fn canonical_order(graph: &MolecularGraph) -> Vec<usize> {
    let n = graph.num_atoms();
    if n == 0 {
        return Vec::new();
    }
    let (adj, colors) = initial_colors(&graph.atoms, &graph.bonds);
    let labels: Vec<_> = graph.atoms.iter().map(atom_label).collect();
    let mut labeler = Labeler { adj, labels, graph, best: None, leaves: 0 };
    labeler.search(colors);
    labeler.best.expect("at least one leaf").1
}

/// Deterministic SMILES-like string written from the canonical order.
pub fn canonical_key(graph: &MolecularGraph) -> String {
    let order = canonical_order(graph);
    let n = order.len();
    let mut rank = vec![0; n];
    for (r, &v) in order.iter().enumerate() {
        rank[v] = r;
    }
    let mut adj = graph.adjacency();
    for nb in adj.iter_mut() {
        nb.sort_by_key(|&(u, _)| rank[u]);
    }

    let mut writer = KeyWriter {
        graph,
        adj: &adj,
        visit: vec![usize::MAX; n],
        children: vec![Vec::new(); n],
        rings: vec![Vec::new(); n],
        seen_bond: vec![false; graph.num_bonds()],
        counter: 0,
        digits: Vec::new(),
        open: vec![None; graph.num_bonds()],
        out: String::new(),
    };
    let mut first = true;
    for &root in &order {
        if writer.visit[root] != usize::MAX {
            continue;
        }
        writer.discover(root, None);
        if !first {
            writer.out.push('.');
        }
        first = false;
        writer.emit(root);
    }
    writer.out
}

struct KeyWriter<'a> {
    graph: &'a MolecularGraph,
    adj: &'a [Vec<(usize, usize)>],
    visit: Vec<usize>,
    children: Vec<Vec<(usize, usize)>>,
    rings: Vec<Vec<(usize, usize)>>,
    seen_bond: Vec<bool>,
    counter: usize,
    digits: Vec<bool>,
    open: Vec<Option<usize>>,
    out: String,
}

impl KeyWriter<'_> {
    fn discover(&mut self, v: usize, parent_bond: Option<usize>) {
        self.visit[v] = self.counter;
        self.counter += 1;
        for &(u, b) in self.adj[v].iter() {
            if Some(b) == parent_bond || self.seen_bond[b] {
                continue;
            }
            self.seen_bond[b] = true;
            if self.visit[u] == usize::MAX {
                self.children[v].push((u, b));
                self.discover(u, Some(b));
            } else {
                self.rings[v].push((u, b));
                self.rings[u].push((v, b));
            }
        }
    }

    fn bond_symbol(&self, b: usize) -> &'static str {
        let bond = &self.graph.bonds[b];
        match bond.order {
            BondOrder::Single => {
                let (x, y) = (&self.graph.atoms[bond.begin], &self.graph.atoms[bond.end]);
                if x.is_aromatic && y.is_aromatic {
                    "-"
                } else {
                    ""
                }
            }
            BondOrder::Double => "=",
            BondOrder::Triple => "#",
            BondOrder::Aromatic => "",
        }
    }

    fn atom_text(&self, v: usize) -> String {
        let a = &self.graph.atoms[v];
        let sym = if a.is_aromatic {
            a.symbol().to_ascii_lowercase()
        } else {
            a.symbol().to_string()
        };
        let aromatic_np_h = a.is_aromatic && matches!(a.element, 7 | 15) && a.num_hs > 0;
        let plain = a.formal_charge == 0
            && element::is_organic_subset(a.element)
            && !aromatic_np_h
            && (!a.is_aromatic || matches!(a.element, 5 | 6 | 7 | 8 | 15 | 16));
        if plain {
            return sym;
        }
        let mut s = format!("[{sym}");
        if a.num_hs > 0 && (aromatic_np_h || a.formal_charge != 0 || !element::is_organic_subset(a.element)) {
            s.push('H');
            if a.num_hs > 1 {
                s.push_str(&a.num_hs.to_string());
            }
        }
        match a.formal_charge {
            0 => {}
            1 => s.push('+'),
            -1 => s.push('-'),
            q if q > 0 => s.push_str(&format!("+{q}")),
            q => s.push_str(&format!("-{}", -q)),
        }
        s.push(']');
        s
    }

    fn emit(&mut self, v: usize) {
        let text = self.atom_text(v);
        self.out.push_str(&text);
        let mut rings = self.rings[v].clone();
        rings.sort_by_key(|&(u, _)| self.visit[u]);
        for (u, b) in rings {
            if self.visit[u] < self.visit[v] {
                let d = self.open[b].take().expect("ring opened at earlier atom");
                self.digits[d] = false;
                self.push_digit(d);
            } else {
                let d = match self.digits.iter().skip(1).position(|used| !used) {
                    Some(i) => i + 1,
                    None => {
                        self.digits.resize(self.digits.len().max(1) + 1, false);
                        self.digits.len() - 1
                    }
                };
                self.digits[d] = true;
                self.open[b] = Some(d);
                let sym = self.bond_symbol(b);
                self.out.push_str(sym);
                self.push_digit(d);
            }
        }
        let children = self.children[v].clone();
        let last = children.len().saturating_sub(1);
        for (k, (u, b)) in children.into_iter().enumerate() {
            let sym = self.bond_symbol(b);
            if k < last {
                self.out.push('(');
                self.out.push_str(sym);
                self.emit(u);
                self.out.push(')');
            } else {
                self.out.push_str(sym);
                self.emit(u);
            }
        }
    }

    fn push_digit(&mut self, d: usize) {
        if d < 10 {
            self.out.push_str(&d.to_string());
        } else {
            self.out.push_str(&format!("%{d:02}"));
        }
    }
}
