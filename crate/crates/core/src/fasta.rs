//! Minimal FASTA reader and writer for peptide records.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::seq::{parse_sequence, PeptideSequence};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FastaRecord {
    pub id: String,
    pub sequence: PeptideSequence,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FastaFile {
    pub records: Vec<FastaRecord>,
    pub warnings: Vec<String>,
}

pub fn parse_fasta(path: &Path) -> Result<FastaFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_fasta_str(&text, path)
}

/// `path` is used only for error messages. Sequence lines are joined, case
/// is normalized, and the id is the first whitespace-separated header token.
pub fn parse_fasta_str(text: &str, path: &Path) -> Result<FastaFile> {
    let err = |line: usize, id: &str, message: String| Error::Fasta {
        path: path.to_path_buf(),
        line,
        id: id.to_owned(),
        message,
    };
    let mut out = FastaFile::default();
    let mut seen = HashSet::new();
    // (id, header line, residues, first residue line)
    let mut current: Option<(String, usize, String, usize)> = None;

    let mut finish =
        |rec: Option<(String, usize, String, usize)>, out: &mut FastaFile| -> Result<()> {
            let Some((id, header_line, residues, first_line)) = rec else {
                return Ok(());
            };
            if residues.is_empty() {
                return Err(err(header_line, &id, "record has no sequence".into()));
            }
            let sequence =
                parse_sequence(&residues).map_err(|e| err(first_line, &id, e.to_string()))?;
            if !seen.insert(id.clone()) {
                return Err(Error::DuplicateId(id));
            }
            out.records.push(FastaRecord { id, sequence });
            Ok(())
        };

    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with(';') {
            continue;
        }
        if let Some(header) = line.strip_prefix('>') {
            finish(current.take(), &mut out)?;
            let id = header.split_whitespace().next().unwrap_or("");
            if id.is_empty() {
                return Err(err(line_no, "", "empty record id".into()));
            }
            current = Some((id.to_owned(), line_no, String::new(), line_no + 1));
        } else {
            let Some((id, _, residues, first_line)) = current.as_mut() else {
                return Err(err(
                    line_no,
                    "",
                    "sequence data before the first header".into(),
                ));
            };
            // Report residue errors on the line where they occur.
            if let Err(e) = parse_sequence(line) {
                if !matches!(e, Error::TooLong { .. }) {
                    return Err(err(line_no, id, e.to_string()));
                }
            }
            if residues.is_empty() {
                *first_line = line_no;
            }
            residues.push_str(line.trim_end_matches('*'));
        }
    }
    finish(current.take(), &mut out)?;
    if out.records.is_empty() {
        out.warnings
            .push(format!("{}: no FASTA records", path.display()));
    }
    Ok(out)
}

pub fn write_fasta<W: Write>(records: &[FastaRecord], mut w: W) -> std::io::Result<()> {
    for r in records {
        writeln!(w, ">{}\n{}", r.id, r.sequence)?;
    }
    Ok(())
}
