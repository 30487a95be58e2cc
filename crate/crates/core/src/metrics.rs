//! Generation-quality metrics: alignment diversity, uniqueness, novelty,
//! helical fitness score, residue frequency profiles and pseudo-perplexity
//! from externally computed log-probabilities.

use std::collections::HashSet;
use std::sync::LazyLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data;
use crate::error::{Error, Result};
use crate::seq::PeptideSequence;

/// Hydrophobicity (`h`) and helix propensity (`hx`) scales, plus the helical
/// wheel angle of 100 degrees.
#[derive(Clone, Debug, PartialEq)]
pub struct FitnessTable {
    pub h: [f64; 20],
    pub hx: [f64; 20],
    pub theta: f64,
}

static STANDARD_FITNESS: LazyLock<FitnessTable> = LazyLock::new(|| {
    FitnessTable::parse(data::FITNESS_CSV).expect("bundled fitness.csv is well formed")
});

impl FitnessTable {
    pub const THETA: f64 = 100.0 * std::f64::consts::PI / 180.0;

    pub fn standard() -> &'static FitnessTable {
        &STANDARD_FITNESS
    }

    /// Loads `fitness.csv`, honoring `AMPGEN_DATA_DIR`.
    pub fn load() -> Result<FitnessTable> {
        FitnessTable::parse(&data::table_text("fitness.csv")?)
    }

    pub fn parse(text: &str) -> Result<FitnessTable> {
        let (_, values) = data::parse_residue_table::<2>("fitness.csv", text)?;
        Ok(FitnessTable {
            h: values.map(|v| v[0]),
            hx: values.map(|v| v[1]),
            theta: Self::THETA,
        })
    }
}

/// Longest common subsequence length, O(|a||b|) time and O(|b|) memory.
pub fn lcs_length(a: &PeptideSequence, b: &PeptideSequence) -> usize {
    let (a, b) = (a.residues(), b.residues());
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Mean LCS similarity over ordered pairs, normalized by the shorter length.
/// 1.0 means every pair aligns fully.
pub fn alignment_diversity(set: &[PeptideSequence]) -> Result<f64> {
    let n = set.len();
    if n < 2 {
        return Err(Error::TooFewSequences { needed: 2, got: n });
    }
    // LCS is symmetric, so sum unordered pairs and double.
    let total: f64 = (0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .map(|j| {
                    let lcs = lcs_length(&set[i], &set[j]) as f64;
                    lcs / set[i].len().min(set[j].len()) as f64
                })
                .sum::<f64>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    Ok(2.0 * total / (n * (n - 1)) as f64)
}

/// Percentage of sequences that are first occurrences.
pub fn uniqueness(set: &[PeptideSequence]) -> f64 {
    if set.is_empty() {
        return 0.0;
    }
    let distinct: HashSet<&PeptideSequence> = set.iter().collect();
    100.0 * distinct.len() as f64 / set.len() as f64
}

/// Percentage of sequences absent from the reference set.
pub fn novelty(set: &[PeptideSequence], reference: &HashSet<PeptideSequence>) -> f64 {
    if set.is_empty() {
        return 0.0;
    }
    let novel = set.iter().filter(|s| !reference.contains(*s)).count();
    100.0 * novel as f64 / set.len() as f64
}

/// Hydrophobic-moment magnitude over the helical wheel (residue i at angle iθ,
/// 1-based), divided by the summed exp(helix propensity).
pub fn fitness_score(s: &PeptideSequence, table: &FitnessTable) -> f64 {
    let (num, den) = hydrophobic_moment_parts(s, table);
    num / den
}

/// (moment magnitude, Σ e^hx) for the fitness ratio.
pub(crate) fn hydrophobic_moment_parts(s: &PeptideSequence, table: &FitnessTable) -> (f64, f64) {
    let mut sin = 0.0;
    let mut cos = 0.0;
    let mut den = 0.0;
    for (i, r) in s.iter().enumerate() {
        let angle = (i + 1) as f64 * table.theta;
        let h = table.h[r.index()];
        cos += h * angle.cos();
        sin += h * angle.sin();
        den += table.hx[r.index()].exp();
    }
    ((cos * cos + sin * sin).sqrt(), den)
}

/// Pooled residue frequencies over the whole set, alphabetical order.
pub fn aa_frequencies(set: &[PeptideSequence]) -> [f64; 20] {
    let mut counts = [0usize; 20];
    for s in set {
        for r in s.iter() {
            counts[r.index()] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return [0.0; 20];
    }
    counts.map(|c| c as f64 / total as f64)
}

/// Mean over sequences of exp(-mean log p) given per-position log-probabilities
/// produced by an external masked language model.
pub fn pseudo_perplexity(log_probs: &[Vec<f64>]) -> Result<f64> {
    if log_probs.is_empty() {
        return Err(Error::TooFewSequences { needed: 1, got: 0 });
    }
    let mut total = 0.0;
    for (i, lp) in log_probs.iter().enumerate() {
        if lp.is_empty() || lp.iter().any(|v| !v.is_finite() || *v > 0.0) {
            return Err(Error::Schema(format!(
                "log-probability row {} must be non-empty, finite and <= 0",
                i + 1
            )));
        }
        total += (-lp.iter().sum::<f64>() / lp.len() as f64).exp();
    }
    Ok(total / log_probs.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub count: usize,
    /// Mean pairwise alignment similarity in [0, 1]; `None` with fewer than two sequences.
    pub diversity: Option<f64>,
    pub uniqueness: f64,
    pub novelty: Option<f64>,
    pub mean_fitness: f64,
    pub aa_frequencies: [f64; 20],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pseudo_perplexity: Option<f64>,
}

pub fn report(
    set: &[PeptideSequence],
    reference: Option<&HashSet<PeptideSequence>>,
    table: &FitnessTable,
) -> Result<MetricsReport> {
    if set.is_empty() {
        return Err(Error::TooFewSequences { needed: 1, got: 0 });
    }
    let mean_fitness = set.iter().map(|s| fitness_score(s, table)).sum::<f64>() / set.len() as f64;
    Ok(MetricsReport {
        count: set.len(),
        diversity: (set.len() >= 2)
            .then(|| alignment_diversity(set))
            .transpose()?,
        uniqueness: uniqueness(set),
        novelty: reference.map(|r| novelty(set, r)),
        mean_fitness,
        aa_frequencies: aa_frequencies(set),
        pseudo_perplexity: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seq::{parse_sequence, Residue};
    use proptest::prelude::*;

    fn seq(s: &str) -> PeptideSequence {
        parse_sequence(s).unwrap()
    }

    fn seqs(xs: &[&str]) -> Vec<PeptideSequence> {
        xs.iter().map(|s| seq(s)).collect()
    }

    /// Longest common subsequence by enumerating every subsequence of `a`.
    fn lcs_brute_force(a: &[Residue], b: &[Residue]) -> usize {
        fn is_subsequence(sub: &[Residue], of: &[Residue]) -> bool {
            let mut it = of.iter();
            sub.iter().all(|x| it.any(|y| y == x))
        }
        let mut best = 0;
        for mask in 0u32..(1 << a.len()) {
            let sub: Vec<Residue> = (0..a.len())
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| a[i])
                .collect();
            if sub.len() > best && is_subsequence(&sub, b) {
                best = sub.len();
            }
        }
        best
    }

    #[test]
    fn lcs_examples() {
        let (a, b) = (seq("AGGTAC"), seq("GATACA"));
        assert_eq!(
            lcs_length(&a, &b),
            lcs_brute_force(a.residues(), b.residues())
        );
        assert_eq!(lcs_length(&a, &a), 6);
        assert_eq!(lcs_length(&seq("AAAA"), &seq("GGGG")), 0);
    }

    #[test]
    fn diversity_examples() {
        assert_eq!(alignment_diversity(&seqs(&["KLAK", "KLAK"])).unwrap(), 1.0);
        assert_eq!(alignment_diversity(&seqs(&["AAAA", "GGGG"])).unwrap(), 0.0);
        assert_eq!(alignment_diversity(&seqs(&["AA", "AG"])).unwrap(), 0.5);
        assert!(matches!(
            alignment_diversity(&seqs(&["AA"])),
            Err(Error::TooFewSequences { .. })
        ));
    }

    #[test]
    fn uniqueness_examples() {
        assert!((uniqueness(&seqs(&["AA", "AA", "AC"])) - 66.667).abs() < 1e-3);
        assert_eq!(uniqueness(&seqs(&["AA", "AC", "CA"])), 100.0);
        assert_eq!(uniqueness(&seqs(&["AA"; 8])), 100.0 / 8.0);
    }

    #[test]
    fn novelty_examples() {
        let reference: HashSet<_> = seqs(&["AA", "KK"]).into_iter().collect();
        assert_eq!(novelty(&seqs(&["GG", "LL"]), &reference), 100.0);
        assert_eq!(novelty(&seqs(&["AA", "KK", "AA"]), &reference), 0.0);
        assert_eq!(novelty(&seqs(&["AA", "GG"]), &reference), 50.0);
    }

    #[test]
    fn fitness_examples() {
        let t = FitnessTable::standard();
        assert!((fitness_score(&seq("A"), t) - 0.25).abs() < 1e-9);
        assert!((fitness_score(&seq("G"), t) - 0.16 / std::f64::consts::E).abs() < 1e-9);
    }

    #[test]
    fn fitness_matches_hand_formula_for_short_sequences() {
        let t = FitnessTable::standard();
        let theta = 100f64.to_radians();
        for text in ["K", "KL", "LKW", "DEG", "PPP"] {
            let s = seq(text);
            let (mut c, mut sn, mut den) = (0.0, 0.0, 0.0);
            for (i, ch) in text.chars().enumerate() {
                let r = Residue::from_char(ch).unwrap().index();
                let k = (i + 1) as f64;
                c += t.h[r] * (k * theta).cos();
                sn += t.h[r] * (k * theta).sin();
                den += t.hx[r].exp();
            }
            let expected = (c * c + sn * sn).sqrt() / den;
            assert!((fitness_score(&s, t) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn frequency_examples() {
        let f = aa_frequencies(&seqs(&["AAAA"]));
        assert_eq!(f[0], 1.0);
        let f = aa_frequencies(&seqs(&["AG", "GA"]));
        assert_eq!(f[0], 0.5);
        assert_eq!(f[Residue::from_char('G').unwrap().index()], 0.5);
    }

    #[test]
    fn pseudo_perplexity_from_log_probs() {
        let uniform = vec![vec![(0.05f64).ln(); 10]];
        assert!((pseudo_perplexity(&uniform).unwrap() - 20.0).abs() < 1e-9);
        assert!(pseudo_perplexity(&[vec![0.5]]).is_err());
        assert!(pseudo_perplexity(&[]).is_err());
    }

    #[test]
    fn report_shapes() {
        let set = seqs(&["KLAK", "KLAK", "GLFD"]);
        let reference: HashSet<_> = seqs(&["KLAK"]).into_iter().collect();
        let r = report(&set, Some(&reference), FitnessTable::standard()).unwrap();
        assert_eq!(r.count, 3);
        assert!((r.novelty.unwrap() - 100.0 / 3.0).abs() < 1e-9);
        assert!((r.aa_frequencies.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let single = report(&set[..1], None, FitnessTable::standard()).unwrap();
        assert!(single.diversity.is_none());
    }

    fn arb_short() -> impl Strategy<Value = PeptideSequence> {
        prop::collection::vec(0usize..4, 1..=8).prop_map(|ix| {
            PeptideSequence::new(ix.into_iter().map(|i| Residue::ALL[i]).collect()).unwrap()
        })
    }

    fn arb_seq() -> impl Strategy<Value = PeptideSequence> {
        prop::collection::vec(0usize..20, 1..=30).prop_map(|ix| {
            PeptideSequence::new(ix.into_iter().map(|i| Residue::ALL[i]).collect()).unwrap()
        })
    }

    proptest! {
        #[test]
        fn lcs_matches_brute_force(a in arb_short(), b in arb_short()) {
            let l = lcs_length(&a, &b);
            prop_assert_eq!(l, lcs_brute_force(a.residues(), b.residues()));
            prop_assert_eq!(l, lcs_length(&b, &a));
            prop_assert!(l <= a.len().min(b.len()));
        }

        #[test]
        fn diversity_order_and_duplication_invariant(set in prop::collection::vec(arb_seq(), 2..8), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let d = alignment_diversity(&set).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
            let mut shuffled = set.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert!((alignment_diversity(&shuffled).unwrap() - d).abs() < 1e-12);
            // Doubling the set adds 2N self-copy pairs of similarity 1:
            // d' = (4N(N-1)d + 2N) / (2N(2N-1)) = (2(N-1)d + 1) / (2N-1).
            let doubled: Vec<_> = set.iter().chain(set.iter()).cloned().collect();
            let n = set.len() as f64;
            let expected = (2.0 * (n - 1.0) * d + 1.0) / (2.0 * n - 1.0);
            prop_assert!((alignment_diversity(&doubled).unwrap() - expected).abs() < 1e-12);
        }

        #[test]
        fn fitness_nonnegative(s in arb_seq()) {
            prop_assert!(fitness_score(&s, FitnessTable::standard()) >= 0.0);
        }

        #[test]
        fn frequencies_sum_to_one(set in prop::collection::vec(arb_seq(), 1..10)) {
            prop_assert!((aa_frequencies(&set).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
