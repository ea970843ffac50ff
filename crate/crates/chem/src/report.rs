//! Corpus parse reports.

use std::io::{BufRead, Write};

use crate::{parse_smiles, scaffold_key};

/// One line of a corpus report.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseRecord {
    pub smiles: String,
    /// `"ok"` or the error message.
    pub status: String,
    pub n_atoms: usize,
    pub n_bonds: usize,
    pub scaffold_key: String,
}

impl ParseRecord {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Parses every non-blank line. `#` starts a comment line; anything after the
/// first whitespace on a line (e.g. a name) is ignored.
pub fn parse_corpus<R: BufRead>(reader: R) -> std::io::Result<Vec<ParseRecord>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let smiles = line.split_whitespace().next().unwrap_or_default().to_string();
        let rec = match parse_smiles(&smiles) {
            Ok(g) => ParseRecord {
                status: "ok".into(),
                n_atoms: g.num_atoms(),
                n_bonds: g.num_bonds(),
                scaffold_key: scaffold_key(&g),
                smiles,
            },
            Err(e) => ParseRecord {
                status: e.to_string(),
                n_atoms: 0,
                n_bonds: 0,
                scaffold_key: String::new(),
                smiles,
            },
        };
        out.push(rec);
    }
    Ok(out)
}

/// Writes records as CSV: smiles,status,n_atoms,n_bonds,scaffold_key.
pub fn write_report<W: Write>(records: &[ParseRecord], writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["smiles", "status", "n_atoms", "n_bonds", "scaffold_key"])?;
    for r in records {
        w.write_record([
            r.smiles.as_str(),
            r.status.as_str(),
            &r.n_atoms.to_string(),
            &r.n_bonds.to_string(),
            r.scaffold_key.as_str(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_roundtrip() {
        let input = "# comment\nc1ccccc1 benzene\n\nC1CC\n";
        let recs = parse_corpus(input.as_bytes()).unwrap();
        assert_eq!(recs.len(), 2);
        assert!(recs[0].is_ok());
        assert_eq!((recs[0].n_atoms, recs[0].n_bonds), (6, 6));
        assert!(!recs[1].is_ok());
        let mut buf = Vec::new();
        write_report(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("smiles,status,n_atoms,n_bonds,scaffold_key\n"));
        assert!(text.contains("c1ccccc1,ok,6,6,c1ccccc1"));
    }
}
