"""Regenerates the RDKit reference fixtures for the bundled drug corpus.

    python3 gen_rdkit_fixtures.py ../../data/drugs30.smi

Writes rdkit_atoms.csv, rdkit_mols.csv and random_smiles.csv next to this file.
"""
import csv
import os
import sys

from rdkit import Chem

here = os.path.dirname(os.path.abspath(__file__))
corpus = sys.argv[1]


def largest_fragment(mol):
    frags = Chem.GetMolFrags(mol, asMols=True, sanitizeFrags=False)
    return max(frags, key=lambda m: m.GetNumHeavyAtoms())


rows_atoms, rows_mols, rows_rand = [], [], []
for line in open(corpus):
    line = line.strip()
    if not line or line.startswith("#"):
        continue
    smi, name = line.split()[:2]
    mol = largest_fragment(Chem.MolFromSmiles(smi))
    for a in mol.GetAtoms():
        rows_atoms.append([name, a.GetIdx(), a.GetAtomicNum(), a.GetDegree(),
                           a.GetTotalNumHs(), int(a.GetIsAromatic()),
                           a.GetFormalCharge(), int(a.IsInRing())])
    bonds = mol.GetBonds()
    rows_mols.append([name, mol.GetNumAtoms(), mol.GetNumBonds(),
                      sum(b.IsInRing() for b in bonds),
                      sum(b.GetIsAromatic() for b in bonds)])
    full = Chem.MolFromSmiles(smi)
    n = full.GetNumAtoms()
    for k in range(5):
        root = (k * 7 + 1) % n
        rows_rand.append([name, root, Chem.MolToSmiles(
            full, canonical=False, rootedAtAtom=root)])


def dump(fname, header, rows):
    with open(os.path.join(here, fname), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


dump("rdkit_atoms.csv", ["name", "idx", "z", "degree", "total_hs", "aromatic",
                         "charge", "in_ring"], rows_atoms)
dump("rdkit_mols.csv", ["name", "n_atoms", "n_bonds", "n_ring_bonds",
                        "n_aromatic_bonds"], rows_mols)
dump("random_smiles.csv", ["name", "root", "smiles"], rows_rand)
