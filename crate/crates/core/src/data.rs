//! Bundled residue tables and the `AMPGEN_DATA_DIR` override.
//!
//! Every table ships embedded in the binary. When `AMPGEN_DATA_DIR` is set and
//! contains a file with the same name, that file is parsed instead.

use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::seq::Residue;

pub const DATA_DIR_ENV: &str = "AMPGEN_DATA_DIR";

pub const SCALES_CSV: &str = include_str!("../data/scales.csv");
pub const FITNESS_CSV: &str = include_str!("../data/fitness.csv");
pub const PKA_CSV: &str = include_str!("../data/pka.csv");
pub const MASSES_CSV: &str = include_str!("../data/masses.csv");

/// 500 antimicrobial peptides (modlAMP AMPvsUniProt subset, BSD-3).
pub const AMP_OPEN_500_FASTA: &str = include_str!("../data/amp_open_500.fasta");
/// 500 UniProt decoys from the same source, used as external non-AMP negatives.
pub const NONAMP_UNIPROT_500_FASTA: &str = include_str!("../data/nonamp_uniprot_500.fasta");

pub const WATER_MASS: f64 = 18.01524;

/// Returns the text of a named table, preferring the override directory.
pub fn table_text(name: &str) -> Result<String> {
    if let Some(dir) = std::env::var_os(DATA_DIR_ENV) {
        let path = PathBuf::from(dir).join(name);
        if path.is_file() {
            return std::fs::read_to_string(&path).map_err(|e| Error::io(path, e));
        }
    }
    embedded(name)
        .map(str::to_owned)
        .ok_or_else(|| Error::Table {
            name: name.to_owned(),
            message: "no such bundled table".into(),
        })
}

fn embedded(name: &str) -> Option<&'static str> {
    match name {
        "scales.csv" => Some(SCALES_CSV),
        "fitness.csv" => Some(FITNESS_CSV),
        "pka.csv" => Some(PKA_CSV),
        "masses.csv" => Some(MASSES_CSV),
        _ => None,
    }
}

/// Parsed CSV table: header names plus string records, `#` lines skipped.
pub(crate) fn parse_csv(name: &str, text: &str) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let err = |message: String| Error::Table {
        name: name.to_owned(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| err(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| err(e.to_string()))?;
        rows.push(record.iter().map(str::to_owned).collect());
    }
    Ok((header, rows))
}

/// Parses a per-residue table with `N` numeric columns after the residue letter.
/// Every one of the 20 residues must appear exactly once.
pub(crate) fn parse_residue_table<const N: usize>(
    name: &str,
    text: &str,
) -> Result<(Vec<String>, [[f64; N]; 20])> {
    let err = |message: String| Error::Table {
        name: name.to_owned(),
        message,
    };
    let (header, rows) = parse_csv(name, text)?;
    if header.len() != N + 1 {
        return Err(err(format!(
            "expected {} columns, found {}",
            N + 1,
            header.len()
        )));
    }
    let mut values = [[f64::NAN; N]; 20];
    let mut seen = [false; 20];
    for row in &rows {
        let letter = row[0]
            .chars()
            .next()
            .and_then(Residue::from_char)
            .filter(|_| row[0].len() == 1)
            .ok_or_else(|| err(format!("bad residue '{}'", row[0])))?;
        if seen[letter.index()] {
            return Err(err(format!("residue {} listed twice", letter)));
        }
        seen[letter.index()] = true;
        for (slot, cell) in values[letter.index()].iter_mut().zip(&row[1..]) {
            *slot = cell
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(format!("bad number '{cell}'")))?;
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(err(format!("missing residue {}", Residue::ALL[missing])));
    }
    Ok((header[1..].to_vec(), values))
}
