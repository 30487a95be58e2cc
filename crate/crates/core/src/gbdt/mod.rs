//! Second-order gradient boosted trees for binary classification with
//! provenance-weighted logistic loss.
//!
//! Each round fits one regression tree to the per-example gradients
//! `g = w (p - y)` and hessians `h = w p (1 - p)` of the weighted logistic
//! loss, with leaves set to the shrunken Newton step `-lr * G / (H + lambda)`.
//! Training stops after `max_estimators` rounds or once the weighted
//! validation loss has not improved for `patience` rounds; the ensemble is
//! then cut back to its best round.

mod persist;
mod tree;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureVector, LAYOUT_VERSION};

pub use persist::{load_model, model_from_json, model_to_json, save_model, FORMAT_VERSION};
pub use tree::{
    fit_tree, leaf_weight, midpoint, split_gain, ColumnIndex, FeatureMatrix, Node, SplitCandidate,
    Tree, TreeParams,
};

/// Where an example's label came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Provenance {
    /// Experimentally validated.
    EV,
    SyntheticR,
    SyntheticS,
    SyntheticM,
    ExternalNonAmp,
}

impl Provenance {
    pub fn is_ev(self) -> bool {
        self == Provenance::EV
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Provenance::EV => "ev",
            Provenance::SyntheticR => "synthetic-r",
            Provenance::SyntheticS => "synthetic-s",
            Provenance::SyntheticM => "synthetic-m",
            Provenance::ExternalNonAmp => "external-non-amp",
        };
        f.write_str(s)
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ev" => Ok(Provenance::EV),
            "synthetic-r" | "random" => Ok(Provenance::SyntheticR),
            "synthetic-s" | "shuffled" => Ok(Provenance::SyntheticS),
            "synthetic-m" | "mutated" => Ok(Provenance::SyntheticM),
            "external-non-amp" | "external" => Ok(Provenance::ExternalNonAmp),
            other => Err(Error::InvalidParameter(format!(
                "unknown provenance '{other}'"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledExample {
    pub features: FeatureVector,
    pub label: bool,
    pub provenance: Provenance,
}

impl LabeledExample {
    /// Positive labels are only accepted with EV provenance.
    pub fn new(features: FeatureVector, label: bool, provenance: Provenance) -> Result<Self> {
        if label && !provenance.is_ev() {
            return Err(Error::InvalidParameter(format!(
                "positive label requires EV provenance, got {provenance}"
            )));
        }
        Ok(LabeledExample {
            features,
            label,
            provenance,
        })
    }
}

/// Layout tag for ad hoc feature vectors of width `n`.
pub fn raw_layout(n: usize) -> String {
    format!("raw:{n}")
}

/// Wraps plain values with the [`raw_layout`] tag.
pub fn raw_features(values: Vec<f64>) -> FeatureVector {
    FeatureVector {
        layout_version: raw_layout(values.len()),
        values,
    }
}

/// True for the frozen peptide layout and for `raw:<n>` tags matching `n`.
pub fn is_known_layout(layout: &str, n_features: usize) -> bool {
    if layout == LAYOUT_VERSION {
        return n_features == crate::features::NUM_FEATURES;
    }
    layout == raw_layout(n_features)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub max_estimators: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub lambda_reg: f64,
    pub gamma_split: f64,
    pub min_child_hessian: f64,
    pub early_stopping: bool,
    pub patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_estimators: 5000,
            max_depth: 6,
            learning_rate: 0.1,
            lambda_reg: 1.0,
            gamma_split: 0.0,
            min_child_hessian: 1.0,
            early_stopping: true,
            patience: 50,
            validation_fraction: 0.03,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_owned()));
        if self.max_estimators == 0 {
            return bad("max_estimators must be positive");
        }
        if self.max_depth == 0 {
            return bad("max_depth must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.lambda_reg >= 0.0 && self.gamma_split >= 0.0 && self.min_child_hessian >= 0.0) {
            return bad("lambda_reg, gamma_split and min_child_hessian must be non-negative");
        }
        if self.early_stopping {
            if self.patience == 0 {
                return bad("patience must be positive");
            }
            if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
                return bad("validation_fraction must lie in (0, 1)");
            }
        }
        Ok(())
    }

    fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            learning_rate: self.learning_rate,
            lambda: self.lambda_reg,
            gamma: self.gamma_split,
            min_child_hessian: self.min_child_hessian,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub layout_version: String,
    pub n_features: usize,
    pub base_score: f64,
    pub trees: Vec<Tree>,
}

impl GbdtModel {
    /// Raw additive score (log-odds) without layout checks.
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.base_score + self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }
}

/// Logistic function, clamped so the result stays strictly inside (0, 1).
pub fn sigmoid(m: f64) -> f64 {
    let m = m.clamp(-35.0, 35.0);
    if m >= 0.0 {
        1.0 / (1.0 + (-m).exp())
    } else {
        let e = m.exp();
        e / (1.0 + e)
    }
}

pub fn predict_proba(model: &GbdtModel, x: &FeatureVector) -> Result<f64> {
    if x.layout_version != model.layout_version || x.values.len() != model.n_features {
        return Err(Error::LayoutMismatch {
            expected: format!("{} ({} features)", model.layout_version, model.n_features),
            found: format!("{} ({} features)", x.layout_version, x.values.len()),
        });
    }
    Ok(sigmoid(model.margin(&x.values)))
}

/// Class-balancing weights: EV examples get (N0+N1)/(2 N1), all others (N0+N1)/(2 N0),
/// where N1 and N0 count label-1 and label-0 examples.
pub fn sample_weights(dataset: &[LabeledExample]) -> Result<Vec<f64>> {
    let n1 = dataset.iter().filter(|e| e.label).count();
    let n0 = dataset.len() - n1;
    if n1 == 0 || n0 == 0 {
        return Err(Error::SingleClass);
    }
    let total = (n0 + n1) as f64;
    let w1 = total / (2.0 * n1 as f64);
    let w0 = total / (2.0 * n0 as f64);
    Ok(dataset
        .iter()
        .map(|e| if e.provenance.is_ev() { w1 } else { w0 })
        .collect())
}

/// Weighted mean logistic loss.
pub fn weighted_logloss(margins: &[f64], labels: &[bool], weights: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((&m, &y), &w) in margins.iter().zip(labels).zip(weights) {
        // log(1 + e^-m) for y = 1, log(1 + e^m) for y = 0, computed stably.
        let z = if y { -m } else { m };
        let loss = if z > 0.0 {
            z + (-z).exp().ln_1p()
        } else {
            z.exp().ln_1p()
        };
        num += w * loss;
        den += w;
    }
    num / den
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub train_logloss: f64,
    /// `None` when early stopping is disabled.
    pub valid_logloss: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub rounds: Vec<RoundLog>,
    pub best_round: usize,
}

impl TrainingLog {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "round,train_logloss,valid_logloss")?;
        for r in &self.rounds {
            match r.valid_logloss {
                Some(v) => writeln!(w, "{},{:?},{:?}", r.round, r.train_logloss, v)?,
                None => writeln!(w, "{},{:?},NA", r.round, r.train_logloss)?,
            }
        }
        Ok(())
    }
}

/// Stratified seeded holdout: `fraction` of each class, at least one example
/// per class. Returns (train, valid) row indices in ascending order.
fn holdout_split(labels: &[bool], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut valid = Vec::new();
    for class in [false, true] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let k = ((idx.len() as f64 * fraction).round() as usize).clamp(1, idx.len() - 1);
        valid.extend_from_slice(&idx[..k]);
        train.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    valid.sort_unstable();
    (train, valid)
}

pub fn train(dataset: &[LabeledExample], config: &TrainConfig) -> Result<(GbdtModel, TrainingLog)> {
    config.validate()?;
    let n1 = dataset.iter().filter(|e| e.label).count();
    let n0 = dataset.len() - n1;
    if n1 == 0 || n0 == 0 {
        return Err(Error::SingleClass);
    }
    if n1 < 2 || n0 < 2 {
        return Err(Error::TooSmall(format!(
            "need 2 examples per class, got {n1} positive and {n0} negative"
        )));
    }
    let layout = dataset[0].features.layout_version.clone();
    let n_features = dataset[0].features.values.len();
    let mut x = FeatureMatrix::new(n_features);
    for (row, e) in dataset.iter().enumerate() {
        if e.features.layout_version != layout || e.features.values.len() != n_features {
            return Err(Error::LayoutMismatch {
                expected: layout.clone(),
                found: e.features.layout_version.clone(),
            });
        }
        if let Some(column) = e.features.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFeature { row, column });
        }
        x.push_row(&e.features.values);
    }
    let labels: Vec<bool> = dataset.iter().map(|e| e.label).collect();
    let weights = sample_weights(dataset)?;

    let (train_rows, valid_rows) = if config.early_stopping {
        holdout_split(&labels, config.validation_fraction, config.seed)
    } else {
        ((0..dataset.len()).collect(), Vec::new())
    };

    let (mut wp, mut wn) = (0.0, 0.0);
    for &i in &train_rows {
        if labels[i] {
            wp += weights[i];
        } else {
            wn += weights[i];
        }
    }
    let base_score = (wp / wn).ln();

    let columns = ColumnIndex::new(&x, &train_rows);
    let params = config.tree_params();
    let mut margins = vec![base_score; dataset.len()];
    let mut grad = vec![0.0; dataset.len()];
    let mut hess = vec![0.0; dataset.len()];
    let pick = |rows: &[usize], v: &[f64]| rows.iter().map(|&i| v[i]).collect::<Vec<_>>();
    let train_labels: Vec<bool> = train_rows.iter().map(|&i| labels[i]).collect();
    let train_weights = pick(&train_rows, &weights);
    let valid_labels: Vec<bool> = valid_rows.iter().map(|&i| labels[i]).collect();
    let valid_weights = pick(&valid_rows, &weights);

    let mut trees = Vec::new();
    let mut log = TrainingLog::default();
    let mut best = (f64::INFINITY, 0usize);
    for round in 1..=config.max_estimators {
        for &i in &train_rows {
            let p = sigmoid(margins[i]);
            let y = if labels[i] { 1.0 } else { 0.0 };
            grad[i] = weights[i] * (p - y);
            hess[i] = weights[i] * p * (1.0 - p);
        }
        let tree = fit_tree(&x, &columns, &train_rows, &grad, &hess, &params);
        for (i, m) in margins.iter_mut().enumerate() {
            *m += tree.predict(x.row(i));
        }
        trees.push(tree);

        let train_loss =
            weighted_logloss(&pick(&train_rows, &margins), &train_labels, &train_weights);
        let valid_loss = config
            .early_stopping
            .then(|| weighted_logloss(&pick(&valid_rows, &margins), &valid_labels, &valid_weights));
        log.rounds.push(RoundLog {
            round,
            train_logloss: train_loss,
            valid_logloss: valid_loss,
        });
        match valid_loss {
            Some(v) => {
                if v < best.0 {
                    best = (v, round);
                } else if round - best.1 >= config.patience {
                    break;
                }
            }
            None => best.1 = round,
        }
    }
    trees.truncate(best.1);
    log.best_round = best.1;
    Ok((
        GbdtModel {
            layout_version: layout,
            n_features,
            base_score,
            trees,
        },
        log,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    /// Accumulated split gain per feature, normalized to sum to 1.
    pub gain_share: Vec<f64>,
    pub split_count: Vec<usize>,
}

pub fn feature_importance(model: &GbdtModel) -> FeatureImportance {
    let mut gain = vec![0.0; model.n_features];
    let mut count = vec![0usize; model.n_features];
    for t in &model.trees {
        for n in &t.nodes {
            if let Node::Split {
                feature, gain: g, ..
            } = n
            {
                gain[*feature] += g.max(0.0);
                count[*feature] += 1;
            }
        }
    }
    let total: f64 = gain.iter().sum();
    if total > 0.0 {
        gain.iter_mut().for_each(|g| *g /= total);
    }
    FeatureImportance {
        gain_share: gain,
        split_count: count,
    }
}
