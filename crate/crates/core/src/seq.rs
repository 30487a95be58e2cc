//! Peptide sequences and the physicochemical calculators built on them.

use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::data;
use crate::error::{Error, Result};
use crate::metrics::FitnessTable;

/// Longest sequence the codec and feature layout accept.
pub const MAX_LENGTH: usize = 100;

/// One of the 20 canonical amino acids, indexed in alphabetical letter order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Residue(u8);

impl Residue {
    pub const ALPHABET: &'static [u8; 20] = b"ACDEFGHIKLMNPQRSTVWY";

    pub const ALL: [Residue; 20] = {
        let mut all = [Residue(0); 20];
        let mut i = 0;
        while i < 20 {
            all[i] = Residue(i as u8);
            i += 1;
        }
        all
    };

    pub fn from_index(index: usize) -> Option<Residue> {
        (index < 20).then_some(Residue(index as u8))
    }

    /// Accepts upper- or lowercase letters.
    pub fn from_char(c: char) -> Option<Residue> {
        let upper = c.to_ascii_uppercase();
        if !upper.is_ascii() {
            return None;
        }
        Self::ALPHABET
            .iter()
            .position(|&b| b == upper as u8)
            .map(|i| Residue(i as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn to_char(self) -> char {
        Self::ALPHABET[self.index()] as char
    }
}

impl fmt::Display for Residue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_char())
    }
}

/// A validated peptide of 1..=100 canonical residues.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PeptideSequence(Vec<Residue>);

impl PeptideSequence {
    pub fn new(residues: Vec<Residue>) -> Result<Self> {
        if residues.is_empty() {
            return Err(Error::EmptySequence);
        }
        if residues.len() > MAX_LENGTH {
            return Err(Error::TooLong {
                length: residues.len(),
                max: MAX_LENGTH,
            });
        }
        Ok(PeptideSequence(residues))
    }

    pub fn residues(&self) -> &[Residue] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = Residue> + '_ {
        self.0.iter().copied()
    }

    pub fn count(&self, residue: Residue) -> usize {
        self.0.iter().filter(|&&r| r == residue).count()
    }
}

impl fmt::Display for PeptideSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.0 {
            write!(f, "{r}")?;
        }
        Ok(())
    }
}

impl FromStr for PeptideSequence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_sequence(s)
    }
}

impl Serialize for PeptideSequence {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PeptideSequence {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_sequence(&text).map_err(serde::de::Error::custom)
    }
}

/// Validates a residue string. Lowercase input is normalized to uppercase.
/// Positions in errors are 1-based.
pub fn parse_sequence(text: &str) -> Result<PeptideSequence> {
    let text = text.trim();
    if text.is_empty() {
        return Err(Error::EmptySequence);
    }
    let residues = text
        .chars()
        .enumerate()
        .map(|(i, c)| {
            Residue::from_char(c).ok_or(Error::InvalidResidue {
                residue: c,
                position: i + 1,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    PeptideSequence::new(residues)
}

const K: Residue = Residue(8);
const R: Residue = Residue(14);
const D: Residue = Residue(2);
const E: Residue = Residue(3);

/// K and R count +1, D and E count -1. Histidine and termini are ignored.
pub fn formal_charge(s: &PeptideSequence) -> f64 {
    s.iter()
        .map(|r| match r {
            K | R => 1.0,
            D | E => -1.0,
            _ => 0.0,
        })
        .sum()
}

/// Mean of the `h` hydrophobicity scale over all residues.
pub fn mean_hydrophobicity(s: &PeptideSequence) -> f64 {
    let h = &FitnessTable::standard().h;
    s.iter().map(|r| h[r.index()]).sum::<f64>() / s.len() as f64
}

/// Residue fractions in alphabetical order (A, C, D, ... Y).
pub fn aa_composition(s: &PeptideSequence) -> [f64; 20] {
    let mut counts = [0usize; 20];
    for r in s.iter() {
        counts[r.index()] += 1;
    }
    let n = s.len() as f64;
    counts.map(|c| c as f64 / n)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupKind {
    Basic,
    Acidic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IonizableGroup {
    pub pka: f64,
    pub kind: GroupKind,
}

impl IonizableGroup {
    fn charge(&self, ph: f64) -> f64 {
        match self.kind {
            GroupKind::Basic => 1.0 / (1.0 + 10f64.powf(ph - self.pka)),
            GroupKind::Acidic => -1.0 / (1.0 + 10f64.powf(self.pka - ph)),
        }
    }
}

/// pKa constants for the termini and ionizable side chains.
#[derive(Clone, Debug, PartialEq)]
pub struct PkaTable {
    pub n_term: IonizableGroup,
    pub c_term: IonizableGroup,
    pub side_chains: [Option<IonizableGroup>; 20],
}

static STANDARD_PKA: LazyLock<PkaTable> =
    LazyLock::new(|| PkaTable::parse(data::PKA_CSV).expect("bundled pka.csv is well formed"));

impl PkaTable {
    /// The bundled table (N-terminus 9.0, C-terminus 2.0).
    pub fn standard() -> &'static PkaTable {
        &STANDARD_PKA
    }

    /// Loads `pka.csv`, honoring `AMPGEN_DATA_DIR`.
    pub fn load() -> Result<PkaTable> {
        PkaTable::parse(&data::table_text("pka.csv")?)
    }

    /// Two-terminus table with no ionizable side chains.
    pub fn termini_only(n_term: f64, c_term: f64) -> PkaTable {
        PkaTable {
            n_term: IonizableGroup {
                pka: n_term,
                kind: GroupKind::Basic,
            },
            c_term: IonizableGroup {
                pka: c_term,
                kind: GroupKind::Acidic,
            },
            side_chains: [None; 20],
        }
    }

    pub fn parse(text: &str) -> Result<PkaTable> {
        let err = |message: String| Error::Table {
            name: "pka.csv".into(),
            message,
        };
        let (_, rows) = data::parse_csv("pka.csv", text)?;
        let mut n_term = None;
        let mut c_term = None;
        let mut side_chains = [None; 20];
        for row in rows {
            let [group, pka, kind] = row.as_slice() else {
                return Err(err(format!("expected 3 fields, got {}", row.len())));
            };
            let pka: f64 = pka.parse().map_err(|_| err(format!("bad pKa '{pka}'")))?;
            if !(pka > 0.0 && pka < 14.0) {
                return Err(err(format!("pKa {pka} outside (0, 14)")));
            }
            let kind = match kind.as_str() {
                "basic" => GroupKind::Basic,
                "acidic" => GroupKind::Acidic,
                other => return Err(err(format!("unknown kind '{other}'"))),
            };
            let entry = IonizableGroup { pka, kind };
            match group.as_str() {
                "nterm" if kind == GroupKind::Basic => n_term = Some(entry),
                "cterm" if kind == GroupKind::Acidic => c_term = Some(entry),
                "nterm" | "cterm" => return Err(err(format!("{group} has wrong kind"))),
                letter => {
                    let r = letter
                        .chars()
                        .next()
                        .and_then(Residue::from_char)
                        .filter(|_| letter.len() == 1)
                        .ok_or_else(|| err(format!("bad group '{letter}'")))?;
                    side_chains[r.index()] = Some(entry);
                }
            }
        }
        Ok(PkaTable {
            n_term: n_term.ok_or_else(|| err("missing nterm".into()))?,
            c_term: c_term.ok_or_else(|| err("missing cterm".into()))?,
            side_chains,
        })
    }
}

/// Henderson-Hasselbalch net charge, including one N- and one C-terminus.
pub fn charge_at_ph(s: &PeptideSequence, ph: f64, table: &PkaTable) -> Result<f64> {
    if !(ph > 0.0 && ph < 14.0) {
        return Err(Error::PhOutOfRange(ph));
    }
    Ok(net_charge(s, ph, table))
}

fn net_charge(s: &PeptideSequence, ph: f64, table: &PkaTable) -> f64 {
    let termini = table.n_term.charge(ph) + table.c_term.charge(ph);
    let sides: f64 = s
        .iter()
        .filter_map(|r| table.side_chains[r.index()])
        .map(|g| g.charge(ph))
        .sum();
    termini + sides
}

/// pH at which the net charge crosses zero, by bisection.
pub fn isoelectric_point(s: &PeptideSequence, table: &PkaTable) -> Result<f64> {
    let (mut lo, mut hi) = (1e-9, 14.0 - 1e-9);
    if net_charge(s, lo, table) < 0.0 || net_charge(s, hi, table) > 0.0 {
        return Err(Error::NoRoot);
    }
    // Charge is steep near clusters of equal pKa, so bisect well past the 1e-3 pH target.
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if net_charge(s, mid, table) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use support::permutations;

    fn seq(s: &str) -> PeptideSequence {
        parse_sequence(s).unwrap()
    }

    mod support {
        pub fn permutations<T: Clone>(items: &[T]) -> Vec<Vec<T>> {
            if items.len() <= 1 {
                return vec![items.to_vec()];
            }
            let mut out = Vec::new();
            for i in 0..items.len() {
                let mut rest = items.to_vec();
                let head = rest.remove(i);
                for mut tail in permutations(&rest) {
                    tail.insert(0, head.clone());
                    out.push(tail);
                }
            }
            out
        }
    }

    #[test]
    fn parse_examples() {
        assert_eq!(seq("KLAK").to_string(), "KLAK");
        assert_eq!(seq("klak").to_string(), "KLAK");
        match parse_sequence("KLXK") {
            Err(Error::InvalidResidue { residue, position }) => {
                assert_eq!((residue, position), ('X', 3));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_sequence(""), Err(Error::EmptySequence)));
        assert!(matches!(parse_sequence("   "), Err(Error::EmptySequence)));
        assert!(matches!(
            parse_sequence(&"A".repeat(101)),
            Err(Error::TooLong { length: 101, .. })
        ));
        for bad in ["B", "J", "O", "U", "X", "Z", "1", "-"] {
            assert!(matches!(
                parse_sequence(bad),
                Err(Error::InvalidResidue { position: 1, .. })
            ));
        }
    }

    #[test]
    fn residue_alphabet_order() {
        let letters: String = Residue::ALL.iter().map(|r| r.to_char()).collect();
        assert_eq!(letters, "ACDEFGHIKLMNPQRSTVWY");
        assert_eq!(K.to_char(), 'K');
        assert_eq!(R.to_char(), 'R');
        assert_eq!(D.to_char(), 'D');
        assert_eq!(E.to_char(), 'E');
    }

    #[test]
    fn formal_charge_examples() {
        assert_eq!(formal_charge(&seq("KKRR")), 4.0);
        assert_eq!(formal_charge(&seq("DDEE")), -4.0);
        assert_eq!(formal_charge(&seq("KDHA")), 0.0);
    }

    #[test]
    fn charge_of_glycine_at_neutral_ph() {
        let table = PkaTable::termini_only(9.0, 2.0);
        // 1/(1+10^-2) - 1/(1+10^-5)
        let expected = 1.0 / 1.01 - 1.0 / 1.00001;
        let got = charge_at_ph(&seq("G"), 7.0, &table).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - (-0.0099)).abs() < 1e-4);
    }

    #[test]
    fn ph_out_of_range() {
        let t = PkaTable::standard();
        for ph in [0.0, 14.0, -1.0, f64::NAN] {
            assert!(matches!(
                charge_at_ph(&seq("G"), ph, t),
                Err(Error::PhOutOfRange(_))
            ));
        }
    }

    #[test]
    fn hydrophobicity_examples() {
        assert!((mean_hydrophobicity(&seq("R")) - (-1.80)).abs() < 1e-12);
        assert!((mean_hydrophobicity(&seq("AL")) - 0.39).abs() < 1e-12);
    }

    #[test]
    fn composition_examples() {
        let c = aa_composition(&seq("AAAA"));
        assert_eq!(c[0], 1.0);
        assert_eq!(c.iter().sum::<f64>(), 1.0);
        let c = aa_composition(&seq("AG"));
        assert_eq!(c[0], 0.5);
        assert_eq!(c[Residue::from_char('G').unwrap().index()], 0.5);
    }

    #[test]
    fn isoelectric_examples() {
        let termini = PkaTable::termini_only(9.0, 2.0);
        let pi = isoelectric_point(&seq("G"), &termini).unwrap();
        assert!((pi - 5.5).abs() < 0.01);

        let t = PkaTable::standard();
        assert!(
            isoelectric_point(&seq("GK"), t).unwrap() > isoelectric_point(&seq("G"), t).unwrap()
        );
        for s in [
            "G",
            "KKKKKKKKKKKKKKKKKKKK",
            "DDDDEEEE",
            "GLFDIVKKVVGALGSL",
            "HHHHCY",
        ] {
            let s = seq(s);
            let pi = isoelectric_point(&s, t).unwrap();
            assert!(charge_at_ph(&s, pi, t).unwrap().abs() < 1e-3, "{s}");
        }
    }

    #[test]
    fn bundled_pka_table() {
        let t = PkaTable::standard();
        assert_eq!(t.n_term.pka, 9.0);
        assert_eq!(t.c_term.pka, 2.0);
        let k = t.side_chains[K.index()].unwrap();
        assert_eq!(k.kind, GroupKind::Basic);
        let d = t.side_chains[D.index()].unwrap();
        assert_eq!(d.kind, GroupKind::Acidic);
        assert!(t.side_chains[Residue::from_char('A').unwrap().index()].is_none());
    }

    #[test]
    fn pka_parse_rejects_bad_values() {
        assert!(PkaTable::parse("group,pka,kind\nnterm,15,basic\ncterm,2,acidic\n").is_err());
        assert!(PkaTable::parse("group,pka,kind\nnterm,9,acidic\ncterm,2,acidic\n").is_err());
        assert!(PkaTable::parse("group,pka,kind\ncterm,2,acidic\n").is_err());
    }

    #[test]
    fn permutation_invariance_exhaustive() {
        for text in ["KDAEWY", "KKR", "ACDEF", "GGHK"] {
            let base = seq(text);
            let charge = formal_charge(&base);
            let comp = aa_composition(&base);
            for p in permutations(base.residues()) {
                let s = PeptideSequence::new(p).unwrap();
                assert_eq!(formal_charge(&s), charge);
                assert_eq!(aa_composition(&s), comp);
            }
        }
    }

    fn arb_sequence() -> impl Strategy<Value = PeptideSequence> {
        prop::collection::vec(0usize..20, 1..=MAX_LENGTH).prop_map(|ix| {
            PeptideSequence::new(
                ix.into_iter()
                    .map(|i| Residue::from_index(i).unwrap())
                    .collect(),
            )
            .unwrap()
        })
    }

    proptest! {
        #[test]
        fn display_parse_roundtrip(s in arb_sequence()) {
            prop_assert_eq!(parse_sequence(&s.to_string()).unwrap(), s);
        }

        #[test]
        fn charge_strictly_decreasing(s in arb_sequence()) {
            let t = PkaTable::standard();
            let grid: Vec<f64> = (1..28).map(|i| i as f64 * 0.5).collect();
            for w in grid.windows(2) {
                prop_assert!(charge_at_ph(&s, w[0], t).unwrap() > charge_at_ph(&s, w[1], t).unwrap());
            }
            prop_assert!(charge_at_ph(&s, 2.0, t).unwrap() > charge_at_ph(&s, 12.0, t).unwrap());
        }

        #[test]
        fn composition_sums_to_one(s in arb_sequence()) {
            let total: f64 = aa_composition(&s).iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }

        #[test]
        fn pi_is_a_root(s in arb_sequence()) {
            let t = PkaTable::standard();
            let pi = isoelectric_point(&s, t).unwrap();
            prop_assert!(pi > 0.0 && pi < 14.0);
            prop_assert!(charge_at_ph(&s, pi, t).unwrap().abs() < 1e-3);
        }

        #[test]
        fn hydrophobicity_permutation_invariant(s in arb_sequence(), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut v = s.residues().to_vec();
            v.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let p = PeptideSequence::new(v).unwrap();
            prop_assert!((mean_hydrophobicity(&p) - mean_hydrophobicity(&s)).abs() < 1e-12);
        }
    }
}
