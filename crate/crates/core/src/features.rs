//! Fixed-layout classifier features: residue composition, a forward
//! exponential moving average of hydrophobicity, and global descriptors.

use std::io::Write;
use std::sync::LazyLock;

use rayon::prelude::*;

use crate::data;
use crate::error::{Error, Result};
use crate::metrics::{hydrophobic_moment_parts, FitnessTable};
use crate::seq::{
    aa_composition, charge_at_ph, formal_charge, isoelectric_point, mean_hydrophobicity,
    PeptideSequence, PkaTable, Residue, MAX_LENGTH,
};

/// Bumped whenever ordering or count changes.
pub const LAYOUT_VERSION: &str = "aacomp20-ema100-desc12/v1";
pub const NUM_FEATURES: usize = 20 + EMA_POSITIONS + NUM_DESCRIPTORS;
pub const EMA_POSITIONS: usize = MAX_LENGTH;
pub const NUM_DESCRIPTORS: usize = 12;
pub const DEFAULT_EMA_ALPHA: f64 = 0.5;

pub const DESCRIPTOR_NAMES: [&str; NUM_DESCRIPTORS] = [
    "length",
    "molecular_weight",
    "formal_charge",
    "charge_at_ph7",
    "isoelectric_point",
    "mean_hydrophobicity",
    "hydrophobic_moment",
    "aromaticity",
    "fraction_positive",
    "fraction_negative",
    "fraction_aliphatic",
    "max_hydrophobic_run",
];

static RESIDUE_MASSES: LazyLock<[f64; 20]> = LazyLock::new(|| {
    data::parse_residue_table::<1>("masses.csv", data::MASSES_CSV)
        .expect("bundled masses.csv is well formed")
        .1
        .map(|v| v[0])
});

static FEATURE_NAMES: LazyLock<Vec<String>> = LazyLock::new(|| {
    let comp = Residue::ALL.iter().map(|r| format!("comp_{r}"));
    let ema = (1..=EMA_POSITIONS).map(|i| format!("ema_{i}"));
    let desc = DESCRIPTOR_NAMES.iter().map(|s| s.to_string());
    comp.chain(ema).chain(desc).collect()
});

/// Column names in layout order.
pub fn feature_names() -> &'static [String] {
    &FEATURE_NAMES
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub layout_version: String,
}

fn has(s: &PeptideSequence, letters: &[u8]) -> f64 {
    let n = s
        .iter()
        .filter(|r| letters.contains(&(r.to_char() as u8)))
        .count();
    n as f64 / s.len() as f64
}

/// Descriptors in [`DESCRIPTOR_NAMES`] order.
pub fn global_descriptors(s: &PeptideSequence) -> [f64; NUM_DESCRIPTORS] {
    let pka = PkaTable::standard();
    let fitness = FitnessTable::standard();
    let len = s.len() as f64;
    let mass = s.iter().map(|r| RESIDUE_MASSES[r.index()]).sum::<f64>() + data::WATER_MASS;
    let (moment, _) = hydrophobic_moment_parts(s, fitness);
    let mut run = 0usize;
    let mut max_run = 0usize;
    for r in s.iter() {
        if fitness.h[r.index()] > 0.0 {
            run += 1;
            max_run = max_run.max(run);
        } else {
            run = 0;
        }
    }
    [
        len,
        mass,
        formal_charge(s),
        charge_at_ph(s, 7.0, pka).expect("pH 7 is in range"),
        isoelectric_point(s, pka).expect("termini guarantee a root"),
        mean_hydrophobicity(s),
        moment / len,
        has(s, b"FWY"),
        has(s, b"KR"),
        has(s, b"DE"),
        has(s, b"AILV"),
        max_run as f64,
    ]
}

/// Forward EMA of per-residue hydrophobicity over the first 100 positions,
/// zero past the sequence end.
pub fn ema_profile(s: &PeptideSequence, alpha: f64) -> Result<[f64; EMA_POSITIONS]> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "EMA alpha {alpha} outside (0, 1]"
        )));
    }
    let h = &FitnessTable::standard().h;
    let mut out = [0.0; EMA_POSITIONS];
    let mut ema = 0.0;
    for (i, r) in s.iter().take(EMA_POSITIONS).enumerate() {
        let v = h[r.index()];
        ema = if i == 0 {
            v
        } else {
            alpha * v + (1.0 - alpha) * ema
        };
        out[i] = ema;
    }
    Ok(out)
}

pub fn featurize(s: &PeptideSequence) -> FeatureVector {
    featurize_with(s, DEFAULT_EMA_ALPHA).expect("default alpha is valid")
}

/// `[composition(20) | ema(100) | descriptors(12)]`.
pub fn featurize_with(s: &PeptideSequence, alpha: f64) -> Result<FeatureVector> {
    let mut values = Vec::with_capacity(NUM_FEATURES);
    values.extend(aa_composition(s));
    values.extend(ema_profile(s, alpha)?);
    values.extend(global_descriptors(s));
    Ok(FeatureVector {
        values,
        layout_version: LAYOUT_VERSION.to_owned(),
    })
}

/// Featurizes in parallel; output order follows input order.
pub fn featurize_batch(seqs: &[PeptideSequence], alpha: f64) -> Result<Vec<FeatureVector>> {
    seqs.par_iter().map(|s| featurize_with(s, alpha)).collect()
}

/// Feature CSV: `# layout_version=...` comment, header `id,<names>`, one row per sequence.
pub fn write_csv<W: Write>(
    ids: &[String],
    rows: &[FeatureVector],
    mut w: W,
) -> std::io::Result<()> {
    writeln!(w, "# layout_version={LAYOUT_VERSION}")?;
    write!(w, "id")?;
    for name in feature_names() {
        write!(w, ",{name}")?;
    }
    writeln!(w)?;
    for (id, row) in ids.iter().zip(rows) {
        write!(w, "{id}")?;
        for v in &row.values {
            write!(w, ",{v:?}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}
