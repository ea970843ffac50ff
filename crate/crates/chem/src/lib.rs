//! Molecular graphs for drug-pair models: a SMILES parser, the fixed
//! 133/14-column atom and bond featurization, Bemis–Murcko scaffold keys and
//! hashed path fingerprints.

pub mod aromatic;
pub mod element;
mod error;
pub mod features;
pub mod fingerprint;
pub mod graph;
pub mod report;
pub mod scaffold;
pub mod smiles;

pub use error::{ChemError, Result};
pub use features::{featurize, FeatureMatrix, ATOM_FEATURE_DIM, BOND_FEATURE_DIM, FEATURE_LAYOUT_VERSION};
pub use fingerprint::{path_fingerprint, tanimoto, Fingerprint};
pub use graph::{Atom, Bond, BondOrder, BondStereo, Chirality, Hybridization, MolecularGraph};
pub use scaffold::{scaffold_graph, scaffold_key};
pub use smiles::parse_smiles;
