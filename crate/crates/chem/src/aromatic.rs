//! Hückel-style validation of declared aromatic systems.
//!
//! Aromaticity is taken from the lowercase SMILES declaration. Each connected
//! system of aromatic bonds must hold 4n+2 pi electrons, counted with a fixed
//! per-atom contribution table.

use crate::error::{ChemError, Result};
use crate::graph::{adjacency, Atom, Bond, BondOrder};

/// Pi electrons an aromatic atom donates to its ring system.
pub fn pi_electrons(atom: &Atom, heavy_degree: usize, exocyclic_double: bool) -> Option<u32> {
    let q = atom.formal_charge;
    let e = match atom.element {
        6 => match q {
            -1 => 2,
            1 => 0,
            _ if exocyclic_double => 0,
            _ => 1,
        },
        7 | 15 | 33 => match q {
            1 => 1,
            -1 => 2,
            _ if exocyclic_double => 1,
            _ if atom.num_hs > 0 || heavy_degree >= 3 => 2,
            _ => 1,
        },
        8 | 16 | 34 | 52 => {
            if q == 1 {
                1
            } else {
                2
            }
        }
        5 => {
            if q == -1 {
                1
            } else {
                0
            }
        }
        _ => return None,
    };
    Some(e)
}

pub(crate) fn has_exocyclic_double(atom: usize, adj: &[Vec<(usize, usize)>], bonds: &[Bond]) -> bool {
    adj[atom]
        .iter()
        .any(|&(_, b)| bonds[b].order == BondOrder::Double)
}

/// Checks every aromatic system of the molecule.
pub fn validate(atoms: &[Atom], bonds: &[Bond]) -> Result<()> {
    let n = atoms.len();
    let adj = adjacency(n, bonds);
    let mut system = vec![usize::MAX; n];
    let mut next_system = 0;
    for start in 0..n {
        if !atoms[start].is_aromatic || system[start] != usize::MAX {
            continue;
        }
        let mut members = vec![start];
        system[start] = next_system;
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for &(u, b) in &adj[v] {
                if bonds[b].order == BondOrder::Aromatic && system[u] == usize::MAX {
                    system[u] = next_system;
                    members.push(u);
                    stack.push(u);
                }
            }
        }
        next_system += 1;

        let mut total = 0;
        for &a in &members {
            let aromatic_bonds = adj[a]
                .iter()
                .filter(|&&(_, b)| bonds[b].order == BondOrder::Aromatic)
                .count();
            if aromatic_bonds < 2 {
                return Err(ChemError::ValenceViolation {
                    atom: a,
                    detail: "aromatic atom is not part of an aromatic ring".into(),
                });
            }
            let exo = has_exocyclic_double(a, &adj, bonds);
            total += pi_electrons(&atoms[a], adj[a].len(), exo).ok_or_else(|| {
                ChemError::ValenceViolation {
                    atom: a,
                    detail: format!("element {} cannot be aromatic", atoms[a].symbol()),
                }
            })?;
        }
        if total < 2 || (total - 2) % 4 != 0 {
            return Err(ChemError::ValenceViolation {
                atom: members[0],
                detail: format!("aromatic system with {total} pi electrons violates 4n+2"),
            });
        }
    }
    Ok(())
}
