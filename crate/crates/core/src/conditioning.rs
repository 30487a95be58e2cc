//! Property conditioning vectors, training-time masks, and the two
//! condition samplers (independent property ranges and reference subsets).

use std::fmt;
use std::io::{BufRead, Write};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seq::{formal_charge, mean_hydrophobicity, PeptideSequence};

/// Wire token for an omitted slot.
pub const ABSENT: &str = "NA";
pub const CSV_HEADER: &str = "amp,length,charge,hydrophobicity";

/// AMP flag plus optional length, charge and hydrophobicity targets.
/// `None` marks an omitted slot; the AMP flag is always present.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditioningVector {
    pub amp: bool,
    pub length: Option<u32>,
    pub charge: Option<f64>,
    pub hydrophobicity: Option<f64>,
}

impl ConditioningVector {
    /// Only the AMP slot set; everything else omitted.
    pub fn amp_only(amp: bool) -> Self {
        ConditioningVector {
            amp,
            length: None,
            charge: None,
            hydrophobicity: None,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.length.is_some() && self.charge.is_some() && self.hydrophobicity.is_some()
    }

    pub fn to_csv_row(&self) -> String {
        fn slot<T: fmt::Debug>(v: Option<T>) -> String {
            v.map_or_else(|| ABSENT.to_owned(), |v| format!("{v:?}"))
        }
        format!(
            "{},{},{},{}",
            u8::from(self.amp),
            slot(self.length),
            slot(self.charge),
            slot(self.hydrophobicity)
        )
    }

    pub fn from_csv_row(row: &str) -> Result<Self> {
        let bad = |m: String| Error::Schema(format!("conditioning row '{row}': {m}"));
        let fields: Vec<&str> = row.split(',').map(str::trim).collect();
        let [amp, length, charge, hydro] = fields.as_slice() else {
            return Err(bad(format!("expected 4 fields, got {}", fields.len())));
        };
        let amp = match *amp {
            "1" => true,
            "0" => false,
            other => return Err(bad(format!("amp flag must be 0 or 1, got '{other}'"))),
        };
        fn opt<T: std::str::FromStr>(field: &str) -> Option<Result<T, ()>> {
            (field != ABSENT).then(|| field.parse::<T>().map_err(|_| ()))
        }
        let length = opt::<u32>(length)
            .transpose()
            .map_err(|_| bad(format!("bad length '{length}'")))?;
        let charge = opt::<f64>(charge)
            .transpose()
            .map_err(|_| bad(format!("bad charge '{charge}'")))?;
        let hydrophobicity = opt::<f64>(hydro)
            .transpose()
            .map_err(|_| bad(format!("bad hydrophobicity '{hydro}'")))?;
        if charge.is_some_and(|c| !c.is_finite()) || hydrophobicity.is_some_and(|h| !h.is_finite())
        {
            return Err(bad("non-finite value".into()));
        }
        Ok(ConditioningVector {
            amp,
            length,
            charge,
            hydrophobicity,
        })
    }
}

pub fn write_csv<W: Write>(vectors: &[ConditioningVector], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for v in vectors {
        writeln!(w, "{}", v.to_csv_row())?;
    }
    Ok(())
}

pub fn read_csv<R: BufRead>(r: R) -> Result<Vec<ConditioningVector>> {
    let mut lines = r.lines();
    match lines.next() {
        Some(Ok(h)) if h.trim() == CSV_HEADER => {}
        Some(Ok(h)) => return Err(Error::Schema(format!("unexpected header '{h}'"))),
        Some(Err(e)) => return Err(Error::Schema(e.to_string())),
        None => return Err(Error::Schema("empty conditioning csv".into())),
    }
    lines
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|l| {
            l.map_err(|e| Error::Schema(e.to_string()))
                .and_then(|l| ConditioningVector::from_csv_row(&l))
        })
        .collect()
}

/// Full property vector of a sequence.
pub fn cond_of(s: &PeptideSequence, is_amp: bool) -> ConditioningVector {
    ConditioningVector {
        amp: is_amp,
        length: Some(s.len() as u32),
        charge: Some(formal_charge(s)),
        hydrophobicity: Some(mean_hydrophobicity(s)),
    }
}

/// Which of the three optional slots survive masking.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct PropertyMask {
    pub keep_length: bool,
    pub keep_charge: bool,
    pub keep_hydrophobicity: bool,
}

impl PropertyMask {
    pub const KEEP_ALL: PropertyMask = PropertyMask {
        keep_length: true,
        keep_charge: true,
        keep_hydrophobicity: true,
    };
    pub const KEEP_NONE: PropertyMask = PropertyMask {
        keep_length: false,
        keep_charge: false,
        keep_hydrophobicity: false,
    };

    pub fn kept(&self) -> usize {
        [self.keep_length, self.keep_charge, self.keep_hydrophobicity]
            .iter()
            .filter(|&&b| b)
            .count()
    }
}

/// Draws k uniformly from {0,1,2,3}, then keeps a uniform k-subset of the optional slots.
pub fn sample_mask<R: Rng + ?Sized>(rng: &mut R) -> PropertyMask {
    let k = rng.random_range(0..=3usize);
    let mut slots = [0usize, 1, 2];
    slots.shuffle(rng);
    let mut keep = [false; 3];
    for &s in &slots[..k] {
        keep[s] = true;
    }
    PropertyMask {
        keep_length: keep[0],
        keep_charge: keep[1],
        keep_hydrophobicity: keep[2],
    }
}

pub fn apply_mask(c: &ConditioningVector, m: &PropertyMask) -> ConditioningVector {
    ConditioningVector {
        amp: c.amp,
        length: c.length.filter(|_| m.keep_length),
        charge: c.charge.filter(|_| m.keep_charge),
        hydrophobicity: c.hydrophobicity.filter(|_| m.keep_hydrophobicity),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range<T> {
    pub lo: T,
    pub hi: T,
}

/// Per-property sampling ranges; `None` disables a property.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PropertyRanges {
    pub length: Option<Range<u32>>,
    pub charge: Option<Range<f64>>,
    pub hydrophobicity: Option<Range<f64>>,
}

impl PropertyRanges {
    pub fn validate(&self) -> Result<()> {
        if let Some(r) = self.length {
            if r.lo > r.hi || r.lo == 0 {
                return Err(Error::InvalidRange {
                    property: "length",
                    lo: r.lo as f64,
                    hi: r.hi as f64,
                });
            }
        }
        for (property, r) in [
            ("charge", self.charge),
            ("hydrophobicity", self.hydrophobicity),
        ] {
            if let Some(r) = r {
                if !(r.lo.is_finite() && r.hi.is_finite() && r.lo <= r.hi) {
                    return Err(Error::InvalidRange {
                        property,
                        lo: r.lo,
                        hi: r.hi,
                    });
                }
            }
        }
        Ok(())
    }
}

fn uniform_real<R: Rng + ?Sized>(rng: &mut R, r: Range<f64>) -> f64 {
    if r.lo == r.hi {
        r.lo
    } else {
        rng.random_range(r.lo..=r.hi)
    }
}

/// Property conditioning: each enabled slot drawn independently and uniformly.
pub fn pc_sampler<R: Rng + ?Sized>(
    ranges: &PropertyRanges,
    n: usize,
    rng: &mut R,
) -> Result<Vec<ConditioningVector>> {
    ranges.validate()?;
    Ok((0..n)
        .map(|_| ConditioningVector {
            amp: true,
            length: ranges.length.map(|r| rng.random_range(r.lo..=r.hi)),
            charge: ranges.charge.map(|r| uniform_real(rng, r)),
            hydrophobicity: ranges.hydrophobicity.map(|r| uniform_real(rng, r)),
        })
        .collect())
}

/// Subset conditioning: full property vectors of references drawn with replacement.
pub fn sc_sampler<R: Rng + ?Sized>(
    refs: &[PeptideSequence],
    n: usize,
    rng: &mut R,
) -> Result<Vec<ConditioningVector>> {
    if refs.is_empty() {
        return Err(Error::EmptyReferenceSet);
    }
    Ok((0..n)
        .map(|_| cond_of(refs.choose(rng).expect("non-empty"), true))
        .collect())
}
