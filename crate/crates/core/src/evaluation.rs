//! Classifier evaluation: average precision, precision@k, threshold
//! confusion statistics, stratified k-fold splitting, and per-source
//! false-positive (robustness) rates.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::features::featurize_with;
use crate::gbdt::{predict_proba, GbdtModel};
use crate::seq::PeptideSequence;

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_TOP_K: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredExample {
    pub id: String,
    pub score: f64,
    pub label: bool,
    /// "ev" or the negative source tag.
    pub source: String,
}

fn class_counts(scored: &[ScoredExample]) -> (usize, usize) {
    let pos = scored.iter().filter(|e| e.label).count();
    (pos, scored.len() - pos)
}

/// Step-wise average precision over the score-descending ranking. Equal
/// scores form one block that contributes a single precision/recall step.
pub fn auprc(scored: &[ScoredExample]) -> Result<f64> {
    let (total_pos, total_neg) = class_counts(scored);
    if total_pos == 0 || total_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<&ScoredExample> = scored.iter().collect();
    order.sort_by(|a, b| b.score.total_cmp(&a.score));
    let (mut tp, mut fp, mut ap) = (0usize, 0usize, 0.0);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let mut block_pos = 0;
        while j < order.len() && order[j].score == order[i].score {
            if order[j].label {
                block_pos += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        tp += block_pos;
        if block_pos > 0 {
            let precision = tp as f64 / (tp + fp) as f64;
            ap += precision * block_pos as f64;
        }
        i = j;
    }
    Ok(ap / total_pos as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecisionAtK {
    /// Percent of positives among the top `k_used`.
    pub precision: f64,
    pub k_used: usize,
    /// Set when `k` exceeded the number of examples.
    pub capped: bool,
}

/// Ties at the cut keep input order.
pub fn precision_at_k(scored: &[ScoredExample], k: usize) -> Result<PrecisionAtK> {
    if scored.is_empty() || k == 0 {
        return Err(Error::TooSmall(
            "precision@k needs examples and k > 0".into(),
        ));
    }
    let mut order: Vec<&ScoredExample> = scored.iter().collect();
    order.sort_by(|a, b| b.score.total_cmp(&a.score));
    let k_used = k.min(scored.len());
    let hits = order[..k_used].iter().filter(|e| e.label).count();
    Ok(PrecisionAtK {
        precision: 100.0 * hits as f64 / k_used as f64,
        k_used,
        capped: k > scored.len(),
    })
}

/// Positive likelihood ratio with explicit markers for the degenerate cases.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LrPlus {
    Finite(f64),
    /// FPR = 0 with TPR > 0.
    Infinite,
    /// TPR = FPR = 0.
    Undefined,
}

impl Serialize for LrPlus {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            LrPlus::Finite(v) => s.serialize_f64(*v),
            LrPlus::Infinite => s.serialize_str("inf"),
            LrPlus::Undefined => s.serialize_none(),
        }
    }
}

impl<'de> Deserialize<'de> for LrPlus {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::Null => Ok(LrPlus::Undefined),
            serde_json::Value::String(s) if s == "inf" => Ok(LrPlus::Infinite),
            serde_json::Value::Number(n) => n
                .as_f64()
                .map(LrPlus::Finite)
                .ok_or_else(|| serde::de::Error::custom("bad LR+")),
            other => Err(serde::de::Error::custom(format!("bad LR+ {other}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    /// Percent.
    pub tpr: f64,
    /// Percent.
    pub fpr: f64,
    pub lr_plus: LrPlus,
}

/// An example is called positive when `score >= threshold`.
pub fn confusion_at_threshold(scored: &[ScoredExample], threshold: f64) -> Result<Confusion> {
    let (pos, neg) = class_counts(scored);
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    let tp = scored
        .iter()
        .filter(|e| e.label && e.score >= threshold)
        .count();
    let fp = scored
        .iter()
        .filter(|e| !e.label && e.score >= threshold)
        .count();
    let tpr = tp as f64 / pos as f64;
    let fpr = fp as f64 / neg as f64;
    let lr_plus = match (tp, fp) {
        (0, 0) => LrPlus::Undefined,
        (_, 0) => LrPlus::Infinite,
        _ => LrPlus::Finite(tpr / fpr),
    };
    Ok(Confusion {
        tpr: 100.0 * tpr,
        fpr: 100.0 * fpr,
        lr_plus,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KFoldSplit {
    /// Input indices of the held-out test set.
    pub holdout: Vec<usize>,
    /// Fold per input index; `None` for holdout members.
    pub fold_of: Vec<Option<usize>>,
}

impl KFoldSplit {
    pub fn fold_members(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] == Some(fold))
            .collect()
    }
}

/// Label-stratified holdout followed by fold assignment of the remainder.
/// Examples are canonically ordered by id first, so the result does not
/// depend on input order.
pub fn kfold_split(
    ids: &[String],
    labels: &[bool],
    folds: usize,
    holdout_fraction: f64,
    seed: u64,
) -> Result<KFoldSplit> {
    if ids.len() != labels.len() {
        return Err(Error::InvalidParameter(
            "ids and labels differ in length".into(),
        ));
    }
    if folds < 2 || !(0.0..1.0).contains(&holdout_fraction) {
        return Err(Error::InvalidParameter(format!(
            "need folds >= 2 and holdout in [0, 1), got {folds} and {holdout_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut holdout = Vec::new();
    let mut fold_of = vec![None; ids.len()];
    for class in [true, false] {
        let mut members: Vec<usize> = (0..ids.len()).filter(|&i| labels[i] == class).collect();
        members.sort_by(|&a, &b| ids[a].cmp(&ids[b]).then(a.cmp(&b)));
        members.shuffle(&mut rng);
        let k = (members.len() as f64 * holdout_fraction).round() as usize;
        if members.len() - k < folds {
            return Err(Error::TooSmall(format!(
                "class {} has {} examples after holdout, fewer than {folds} folds",
                u8::from(class),
                members.len() - k
            )));
        }
        holdout.extend_from_slice(&members[..k]);
        for (j, &i) in members[k..].iter().enumerate() {
            fold_of[i] = Some(j % folds);
        }
    }
    holdout.sort_unstable();
    Ok(KFoldSplit { holdout, fold_of })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    /// Percent of each source's sequences scored at or above the threshold.
    pub rates: BTreeMap<String, f64>,
}

pub fn score_sequences(
    model: &GbdtModel,
    seqs: &[PeptideSequence],
    ema_alpha: f64,
) -> Result<Vec<f64>> {
    seqs.par_iter()
        .map(|s| predict_proba(model, &featurize_with(s, ema_alpha)?))
        .collect()
}

/// False-positive rate per negative source.
pub fn robustness_report(
    model: &GbdtModel,
    sources: &BTreeMap<String, Vec<PeptideSequence>>,
    threshold: f64,
    ema_alpha: f64,
) -> Result<RobustnessReport> {
    if sources.is_empty() {
        return Err(Error::EmptySource);
    }
    let mut rates = BTreeMap::new();
    for (name, seqs) in sources {
        if seqs.is_empty() {
            return Err(Error::EmptySource);
        }
        let scores = score_sequences(model, seqs, ema_alpha)?;
        let flagged = scores.iter().filter(|&&p| p >= threshold).count();
        rates.insert(name.clone(), 100.0 * flagged as f64 / seqs.len() as f64);
    }
    Ok(RobustnessReport { rates })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auprc: f64,
    pub prec_at_100: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub lr_plus: LrPlus,
    pub robustness: BTreeMap<String, f64>,
}

pub fn write_scores_csv<W: Write>(scored: &[ScoredExample], mut w: W) -> std::io::Result<()> {
    writeln!(w, "id,score,label,source")?;
    for e in scored {
        writeln!(
            w,
            "{},{:?},{},{}",
            e.id,
            e.score,
            u8::from(e.label),
            e.source
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn scored(pairs: &[(f64, bool)]) -> Vec<ScoredExample> {
        pairs
            .iter()
            .enumerate()
            .map(|(i, &(score, label))| ScoredExample {
                id: format!("e{i}"),
                score,
                label,
                source: if label { "ev".into() } else { "neg".into() },
            })
            .collect()
    }

    #[test]
    fn perfect_ranking() {
        let s = scored(&[(0.9, true), (0.8, true), (0.2, false), (0.1, false)]);
        assert_eq!(auprc(&s).unwrap(), 1.0);
        let many: Vec<(f64, bool)> = (0..1000).map(|i| (i as f64, i >= 900)).collect();
        assert_eq!(auprc(&scored(&many)).unwrap(), 1.0);
    }

    #[test]
    fn single_positive_first_of_hundred() {
        let mut pairs = vec![(1.0, true)];
        pairs.extend((0..99).map(|i| (0.5 - i as f64 * 1e-3, false)));
        assert_eq!(auprc(&scored(&pairs)).unwrap(), 1.0);
    }

    #[test]
    fn hand_computed_average_precision() {
        // ranking: +, -, +, -  => AP = (1/1 + 2/3) / 2
        let s = scored(&[(0.9, true), (0.8, false), (0.7, true), (0.6, false)]);
        assert!((auprc(&s).unwrap() - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        // all tied: one block, precision = prevalence
        let s = scored(&[(0.5, true), (0.5, false), (0.5, false), (0.5, false)]);
        assert!((auprc(&s).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn random_scores_give_prevalence() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let p = 0.1;
        let pairs: Vec<(f64, bool)> = (0..10_000)
            .map(|_| (rng.random::<f64>(), rng.random_bool(p)))
            .collect();
        assert!((auprc(&scored(&pairs)).unwrap() - p).abs() < 0.03);
    }

    #[test]
    fn precision_at_k_cases() {
        let mut pairs: Vec<(f64, bool)> = (0..100).map(|i| (1.0 + i as f64, true)).collect();
        pairs.extend((0..50).map(|i| (i as f64 / 100.0, false)));
        assert_eq!(
            precision_at_k(&scored(&pairs), 100).unwrap().precision,
            100.0
        );
        let none = scored(&[(0.9, false), (0.8, false)]);
        assert_eq!(precision_at_k(&none, 100).unwrap().precision, 0.0);
        let capped = precision_at_k(&none, 100).unwrap();
        assert!(capped.capped);
        assert_eq!(capped.k_used, 2);
        // Boundary ties keep input order.
        let tied = scored(&[(0.5, false), (0.5, true)]);
        assert_eq!(precision_at_k(&tied, 1).unwrap().precision, 0.0);
    }

    #[test]
    fn confusion_cases() {
        let s = scored(&[(0.9, true), (0.8, true), (0.2, false), (0.1, false)]);
        let c = confusion_at_threshold(&s, 0.5).unwrap();
        assert_eq!((c.tpr, c.fpr, c.lr_plus), (100.0, 0.0, LrPlus::Infinite));
        let c = confusion_at_threshold(&s, 0.0).unwrap();
        assert_eq!(
            (c.tpr, c.fpr, c.lr_plus),
            (100.0, 100.0, LrPlus::Finite(1.0))
        );
        let c = confusion_at_threshold(&s, 0.95).unwrap();
        assert_eq!((c.tpr, c.fpr, c.lr_plus), (0.0, 0.0, LrPlus::Undefined));
        assert!(matches!(
            confusion_at_threshold(&scored(&[(0.1, true)]), 0.5),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn lr_plus_json() {
        assert_eq!(serde_json::to_string(&LrPlus::Infinite).unwrap(), "\"inf\"");
        assert_eq!(serde_json::to_string(&LrPlus::Undefined).unwrap(), "null");
        let back: LrPlus = serde_json::from_str("2.5").unwrap();
        assert_eq!(back, LrPlus::Finite(2.5));
    }

    fn construction_100_900() -> (Vec<String>, Vec<bool>) {
        let ids = (0..1000).map(|i| format!("s{i:04}")).collect();
        let labels = (0..1000).map(|i| i < 100).collect();
        (ids, labels)
    }

    #[test]
    fn stratified_counts() {
        let (ids, labels) = construction_100_900();
        let split = kfold_split(&ids, &labels, 5, 0.2, 7).unwrap();
        let hp = split.holdout.iter().filter(|&&i| labels[i]).count();
        assert_eq!((hp, split.holdout.len() - hp), (20, 180));
        let mut covered = split.holdout.clone();
        for f in 0..5 {
            let m = split.fold_members(f);
            let p = m.iter().filter(|&&i| labels[i]).count();
            assert_eq!((p, m.len() - p), (16, 144));
            covered.extend(m);
        }
        covered.sort_unstable();
        assert_eq!(covered, (0..1000).collect::<Vec<_>>());
        assert_eq!(split, kfold_split(&ids, &labels, 5, 0.2, 7).unwrap());
    }

    #[test]
    fn split_ignores_input_order() {
        let (ids, labels) = construction_100_900();
        let a = kfold_split(&ids, &labels, 5, 0.2, 3).unwrap();
        let rev_ids: Vec<String> = ids.iter().rev().cloned().collect();
        let rev_labels: Vec<bool> = labels.iter().rev().copied().collect();
        let b = kfold_split(&rev_ids, &rev_labels, 5, 0.2, 3).unwrap();
        for i in 0..1000 {
            assert_eq!(a.fold_of[i], b.fold_of[999 - i]);
        }
    }

    #[test]
    fn split_too_small() {
        let ids: Vec<String> = (0..8).map(|i| i.to_string()).collect();
        let labels = vec![true, true, true, false, false, false, false, false];
        assert!(matches!(
            kfold_split(&ids, &labels, 5, 0.2, 0),
            Err(Error::TooSmall(_))
        ));
    }

    proptest! {
        #[test]
        fn auprc_invariant_under_monotone_maps(scores in prop::collection::vec(-5.0f64..5.0, 4..60), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut pairs: Vec<(f64, bool)> = scores.iter().map(|&s| (s, rng.random_bool(0.4))).collect();
            pairs[0].1 = true;
            pairs[1].1 = false;
            let base = auprc(&scored(&pairs)).unwrap();
            let mapped: Vec<(f64, bool)> = pairs.iter().map(|&(s, l)| (s.exp() * 3.0 + 1.0, l)).collect();
            prop_assert!((auprc(&scored(&mapped)).unwrap() - base).abs() < 1e-12);
        }

        #[test]
        fn rates_non_increasing_in_threshold(scores in prop::collection::vec(0.0f64..1.0, 4..60)) {
            let mut pairs: Vec<(f64, bool)> = scores.iter().enumerate().map(|(i, &s)| (s, i % 3 == 0)).collect();
            pairs[1].1 = false;
            let s = scored(&pairs);
            let mut prev = (f64::INFINITY, f64::INFINITY);
            for k in 0..=10 {
                let c = confusion_at_threshold(&s, k as f64 / 10.0).unwrap();
                prop_assert!(c.tpr <= prev.0 && c.fpr <= prev.1);
                prev = (c.tpr, c.fpr);
            }
        }
    }
}
