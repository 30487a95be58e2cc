//! Construction negatives: random, shuffled, mutated (training) and
//! added-deleted (evaluation) sequences derived from known AMPs.

use std::fmt;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seq::{PeptideSequence, Residue, MAX_LENGTH};

/// Positions replaced by the mutation generator.
pub const MUTATIONS: usize = 5;
/// Sequential edits applied by the add/delete generator.
pub const INDEL_EDITS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegativeMode {
    Random,
    Shuffled,
    Mutated,
    AddDelete,
}

impl NegativeMode {
    pub fn name(self) -> &'static str {
        match self {
            NegativeMode::Random => "random",
            NegativeMode::Shuffled => "shuffled",
            NegativeMode::Mutated => "mutated",
            NegativeMode::AddDelete => "add-delete",
        }
    }
}

impl fmt::Display for NegativeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NegativeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" | "R" => Ok(NegativeMode::Random),
            "shuffled" | "S" => Ok(NegativeMode::Shuffled),
            "mutated" | "M" => Ok(NegativeMode::Mutated),
            "add-delete" | "AD" => Ok(NegativeMode::AddDelete),
            other => Err(Error::InvalidParameter(format!(
                "unknown negative mode '{other}'"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegativeSpec {
    pub mode: NegativeMode,
    pub count: usize,
    pub seed: u64,
}

/// One generated record; `id` follows `syn|<mode>|seed=<seed>|i=<index>`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SyntheticRecord {
    pub id: String,
    pub sequence: PeptideSequence,
}

fn random_residue<R: Rng + ?Sized>(rng: &mut R) -> Residue {
    Residue::ALL[rng.random_range(0..20)]
}

/// Random sequences whose lengths are drawn from the source's length profile.
pub fn gen_random<R: Rng + ?Sized>(
    length_source: &[PeptideSequence],
    n: usize,
    rng: &mut R,
) -> Result<Vec<PeptideSequence>> {
    if length_source.is_empty() {
        return Err(Error::EmptySource);
    }
    let lengths: Vec<usize> = length_source.iter().map(PeptideSequence::len).collect();
    (0..n)
        .map(|_| {
            let len = *lengths.choose(rng).expect("non-empty");
            PeptideSequence::new((0..len).map(|_| random_residue(rng)).collect())
        })
        .collect()
}

/// Uniform random permutation of the input.
pub fn gen_shuffled<R: Rng + ?Sized>(
    amp: &PeptideSequence,
    rng: &mut R,
) -> Result<PeptideSequence> {
    if amp.len() < 2 {
        return Err(Error::TooShort {
            length: amp.len(),
            min: 2,
        });
    }
    let mut residues = amp.residues().to_vec();
    residues.shuffle(rng);
    PeptideSequence::new(residues)
}

/// Replaces 5 distinct positions, each with one of the 19 other residues.
pub fn gen_mutated<R: Rng + ?Sized>(amp: &PeptideSequence, rng: &mut R) -> Result<PeptideSequence> {
    if amp.len() < MUTATIONS {
        return Err(Error::TooShort {
            length: amp.len(),
            min: MUTATIONS,
        });
    }
    let mut residues = amp.residues().to_vec();
    let positions = rand::seq::index::sample(rng, residues.len(), MUTATIONS);
    for p in positions.iter() {
        let original = residues[p].index();
        // Uniform over the 19 letters != original.
        let pick = rng.random_range(0..19);
        let replacement = if pick >= original { pick + 1 } else { pick };
        residues[p] = Residue::ALL[replacement];
    }
    PeptideSequence::new(residues)
}

/// Five sequential fair-coin insertions or deletions. A deletion drawn at
/// length 1 becomes an insertion; an insertion drawn at the maximum length
/// becomes a deletion.
pub fn gen_add_delete<R: Rng + ?Sized>(
    amp: &PeptideSequence,
    rng: &mut R,
) -> Result<PeptideSequence> {
    let mut residues = amp.residues().to_vec();
    for _ in 0..INDEL_EDITS {
        let mut insert = rng.random_bool(0.5);
        if !insert && residues.len() == 1 {
            insert = true;
        } else if insert && residues.len() == MAX_LENGTH {
            insert = false;
        }
        if insert {
            let slot = rng.random_range(0..=residues.len());
            residues.insert(slot, random_residue(rng));
        } else {
            let pos = rng.random_range(0..residues.len());
            residues.remove(pos);
        }
    }
    PeptideSequence::new(residues)
}

/// Upper bound n / l! on the expected number of actives among n shuffles of
/// length-l sequences.
pub fn shuffle_bound(n: f64, l: u32) -> f64 {
    assert!(l >= 1, "length must be at least 1");
    if l <= 20 {
        let factorial: f64 = (1..=l).map(f64::from).product();
        n / factorial
    } else {
        let ln_factorial: f64 = (1..=l).map(|k| f64::from(k).ln()).sum();
        (n.ln() - ln_factorial).exp()
    }
}

/// Generates a full batch for `spec`. Per-source modes cycle through
/// `sources` in order; generation uses one ChaCha8 stream seeded by `spec.seed`.
pub fn generate(spec: &NegativeSpec, sources: &[PeptideSequence]) -> Result<Vec<SyntheticRecord>> {
    if spec.count == 0 {
        return Err(Error::InvalidParameter("count must be at least 1".into()));
    }
    if sources.is_empty() {
        return Err(Error::EmptySource);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sequences = match spec.mode {
        NegativeMode::Random => gen_random(sources, spec.count, &mut rng)?,
        mode => {
            let eligible: Vec<&PeptideSequence> = sources
                .iter()
                .filter(|s| match mode {
                    NegativeMode::Shuffled => s.len() >= 2,
                    NegativeMode::Mutated => s.len() >= MUTATIONS,
                    _ => true,
                })
                .collect();
            if eligible.is_empty() {
                return Err(Error::EmptySource);
            }
            (0..spec.count)
                .map(|i| {
                    let src = eligible[i % eligible.len()];
                    match mode {
                        NegativeMode::Shuffled => gen_shuffled(src, &mut rng),
                        NegativeMode::Mutated => gen_mutated(src, &mut rng),
                        _ => gen_add_delete(src, &mut rng),
                    }
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok(sequences
        .into_iter()
        .enumerate()
        .map(|(i, sequence)| SyntheticRecord {
            id: format!("syn|{}|seed={}|i={}", spec.mode, spec.seed, i),
            sequence,
        })
        .collect())
}
