//! Conditional denoising diffusion in embedding space: cosine schedule,
//! forward noising, condition annealing (CADS), and ancestral sampling.

mod toy;

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conditioning::ConditioningVector;
use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::seq::{formal_charge, mean_hydrophobicity, PeptideSequence};

pub use toy::{
    checkpoint_from_json, checkpoint_json, draw_step_noise, load_checkpoint, save_checkpoint,
    train_denoiser, training_step, Adam, DenoiserTrainConfig, StepNoise, StepOutput, ToyConfig,
    ToyDenoiser, TrainExample, CHECKPOINT_VERSION,
};

pub const DEFAULT_STEPS: usize = 1000;
const COSINE_OFFSET: f64 = 0.008;
const MAX_BETA: f64 = 0.999;

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    /// `betas[0]` is unused and zero.
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

/// Cosine schedule. Betas come from the closed-form ratio, are clipped to
/// (0, 0.999], and the cumulative products are recomputed from the clipped
/// betas.
pub fn cosine_schedule(steps: usize) -> Result<NoiseSchedule> {
    if steps < 2 {
        return Err(Error::InvalidParameter(format!(
            "schedule needs at least 2 steps, got {steps}"
        )));
    }
    let f = |t: usize| {
        let x = (t as f64 / steps as f64 + COSINE_OFFSET) / (1.0 + COSINE_OFFSET)
            * std::f64::consts::FRAC_PI_2;
        x.cos().powi(2)
    };
    let f0 = f(0);
    let closed: Vec<f64> = (0..=steps).map(|t| f(t) / f0).collect();
    let mut betas = vec![0.0; steps + 1];
    let mut alpha_bars = vec![1.0; steps + 1];
    for t in 1..=steps {
        let b = (1.0 - closed[t] / closed[t - 1]).clamp(f64::MIN_POSITIVE, MAX_BETA);
        betas[t] = b;
        alpha_bars[t] = alpha_bars[t - 1] * (1.0 - b);
    }
    Ok(NoiseSchedule { betas, alpha_bars })
}

impl NoiseSchedule {
    pub fn steps(&self) -> usize {
        self.betas.len() - 1
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        1.0 - self.betas[t]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(Error::StepOutOfRange {
                step: t,
                max: self.steps(),
            });
        }
        Ok(())
    }

    /// Coefficients `(c_x0, c_z, variance)` of the ancestral posterior at step t.
    pub fn posterior(&self, t: usize) -> (f64, f64, f64) {
        let (ab, ab_prev, b) = (self.alpha_bars[t], self.alpha_bars[t - 1], self.betas[t]);
        let c_x0 = ab_prev.sqrt() * b / (1.0 - ab);
        let c_z = self.alpha(t).sqrt() * (1.0 - ab_prev) / (1.0 - ab);
        let var = (1.0 - ab_prev) / (1.0 - ab) * b;
        (c_x0, c_z, var)
    }
}

pub fn standard_normals<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// `z_t = sqrt(ab_t) x0 + sqrt(1 - ab_t) eps`; returns `(z_t, eps)`.
pub fn forward_diffuse<R: Rng + ?Sized>(
    x0: &EmbeddingMatrix,
    t: usize,
    sched: &NoiseSchedule,
    rng: &mut R,
) -> Result<(EmbeddingMatrix, EmbeddingMatrix)> {
    sched.check_step(t)?;
    let eps = standard_normals(rng, EmbeddingMatrix::LEN);
    let z = diffuse_with(x0.as_slice(), &eps, sched.alpha_bar(t));
    Ok((
        EmbeddingMatrix::from_vec(z)?,
        EmbeddingMatrix::from_vec(eps)?,
    ))
}

pub(crate) fn diffuse_with(x0: &[f64], eps: &[f64], alpha_bar: f64) -> Vec<f64> {
    let (a, s) = (alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt());
    x0.iter().zip(eps).map(|(x, e)| a * x + s * e).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CadsConfig {
    pub enabled: bool,
    pub tau1: f64,
    pub tau2: f64,
    pub noise_scale: f64,
}

impl Default for CadsConfig {
    fn default() -> Self {
        CadsConfig {
            enabled: true,
            tau1: 0.5,
            tau2: 0.9,
            noise_scale: 0.1,
        }
    }
}

impl CadsConfig {
    /// Plain conditional sampling: `gamma` is 1 at every step.
    pub fn disabled() -> Self {
        CadsConfig {
            enabled: false,
            ..CadsConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 <= self.tau1
            && self.tau1 < self.tau2
            && self.tau2 <= 1.0
            && self.noise_scale >= 0.0;
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "CADS needs 0 <= tau1 < tau2 <= 1 and noise_scale >= 0, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Piecewise-linear annealing weight at diffusion time fraction `u = t/T`.
    pub fn gamma(&self, u: f64) -> f64 {
        if !self.enabled || u <= self.tau1 {
            1.0
        } else if u >= self.tau2 {
            0.0
        } else {
            (self.tau2 - u) / (self.tau2 - self.tau1)
        }
    }
}

pub const NUM_SLOTS: usize = 4;
pub const COND_FEATURES: usize = 2 * NUM_SLOTS;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CondSlot {
    pub value: f64,
    pub present: bool,
}

/// Numeric conditioning slots in order amp, length, charge, hydrophobicity.
/// Absent slots hold value 0.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EncodedCondition {
    pub slots: [CondSlot; NUM_SLOTS],
}

pub(crate) const LENGTH_CENTER: f64 = 25.0;
pub(crate) const LENGTH_SCALE: f64 = 5.0;
const CHARGE_SCALE: f64 = 10.0;

impl EncodedCondition {
    pub fn encode(c: &ConditioningVector) -> Self {
        let slot = |v: Option<f64>| match v {
            Some(value) => CondSlot {
                value,
                present: true,
            },
            None => CondSlot::default(),
        };
        EncodedCondition {
            slots: [
                CondSlot {
                    value: if c.amp { 1.0 } else { -1.0 },
                    present: true,
                },
                slot(
                    c.length
                        .map(|l| (f64::from(l) - LENGTH_CENTER) / LENGTH_SCALE),
                ),
                slot(c.charge.map(|q| q / CHARGE_SCALE)),
                slot(c.hydrophobicity),
            ],
        }
    }

    /// `[value, present]` pairs, flattened.
    pub fn features(&self) -> [f64; COND_FEATURES] {
        let mut out = [0.0; COND_FEATURES];
        for (i, s) in self.slots.iter().enumerate() {
            out[2 * i] = s.value;
            out[2 * i + 1] = if s.present { 1.0 } else { 0.0 };
        }
        out
    }
}

/// `c_t = sqrt(gamma) c + s sqrt(1 - gamma) eps` on the values of present
/// slots. One normal is drawn per slot regardless, keeping the stream fixed.
pub fn cads_anneal<R: Rng + ?Sized>(
    c: &EncodedCondition,
    t: usize,
    sched: &NoiseSchedule,
    cfg: &CadsConfig,
    rng: &mut R,
) -> EncodedCondition {
    let gamma = cfg.gamma(t as f64 / sched.steps() as f64);
    let (a, s) = (gamma.sqrt(), cfg.noise_scale * (1.0 - gamma).sqrt());
    let mut out = *c;
    for slot in out.slots.iter_mut() {
        let e: f64 = rng.sample(StandardNormal);
        if slot.present {
            slot.value = a * slot.value + s * e;
        }
    }
    out
}

/// A clean-embedding estimator `x0_hat(z_t, t, c, self_cond)`.
pub trait Denoiser: Sync {
    fn predict_x0(&self, z: &[f64], t: usize, c: &EncodedCondition, self_cond: &[f64]) -> Vec<f64>;
    fn is_trained(&self) -> bool;
    /// Number of diffusion steps the denoiser was built for.
    fn steps(&self) -> usize;
    fn self_conditioning(&self) -> bool;
}

/// Ancestral sampling of `n` chains. Each chain draws from its own stream
/// derived from one value taken from `rng`, so results do not depend on
/// thread scheduling.
pub fn sample<D: Denoiser, R: Rng + ?Sized>(
    den: &D,
    c: &ConditioningVector,
    sched: &NoiseSchedule,
    cads: &CadsConfig,
    n: usize,
    rng: &mut R,
) -> Result<Vec<EmbeddingMatrix>> {
    if !den.is_trained() {
        return Err(Error::UntrainedDenoiser);
    }
    if den.steps() != sched.steps() {
        return Err(Error::InvalidParameter(format!(
            "denoiser built for {} steps, schedule has {}",
            den.steps(),
            sched.steps()
        )));
    }
    cads.validate()?;
    let base: u64 = rng.random();
    let cond = EncodedCondition::encode(c);
    (0..n)
        .into_par_iter()
        .map(|chain| {
            let mut r = ChaCha8Rng::seed_from_u64(base);
            r.set_stream(chain as u64);
            sample_chain(den, &cond, sched, cads, &mut r)
        })
        .collect()
}

fn sample_chain<D: Denoiser>(
    den: &D,
    cond: &EncodedCondition,
    sched: &NoiseSchedule,
    cads: &CadsConfig,
    rng: &mut ChaCha8Rng,
) -> Result<EmbeddingMatrix> {
    let mut z = standard_normals(rng, EmbeddingMatrix::LEN);
    let mut self_cond = vec![0.0; EmbeddingMatrix::LEN];
    for t in (1..=sched.steps()).rev() {
        let c_t = cads_anneal(cond, t, sched, cads, rng);
        let x0 = den.predict_x0(&z, t, &c_t, &self_cond);
        let (c_x0, c_z, var) = sched.posterior(t);
        let sd = var.sqrt();
        for (i, zi) in z.iter_mut().enumerate() {
            let e: f64 = rng.sample(StandardNormal);
            *zi = c_x0 * x0[i] + c_z * *zi + sd * e;
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState(t));
        }
        if den.self_conditioning() {
            self_cond = x0;
        }
    }
    EmbeddingMatrix::from_vec(z)
}

pub const AUDIT_HEADER: &str =
    "id,req_amp,req_length,req_charge,req_hydrophobicity,decoded,length,charge,hydrophobicity";

/// Requested condition next to the realized properties of each decoded
/// sample; undecodable samples get `decoded=0` and NA properties.
pub fn write_audit_csv<W: Write>(
    requested: &ConditioningVector,
    samples: &[(String, Option<PeptideSequence>)],
    mut w: W,
) -> std::io::Result<()> {
    writeln!(w, "{AUDIT_HEADER}")?;
    let req = requested.to_csv_row();
    for (id, s) in samples {
        match s {
            Some(s) => writeln!(
                w,
                "{id},{req},1,{},{:?},{:?}",
                s.len(),
                formal_charge(s),
                mean_hydrophobicity(s)
            )?,
            None => writeln!(w, "{id},{req},0,NA,NA,NA")?,
        }
    }
    Ok(())
}

/// Mean absolute length error over decoded samples.
pub fn length_mae(target: u32, samples: &[PeptideSequence]) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let total: f64 = samples
        .iter()
        .map(|s| (s.len() as f64 - f64::from(target)).abs())
        .sum();
    Some(total / samples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_endpoints_and_monotonicity() {
        let s = cosine_schedule(1000).unwrap();
        assert_eq!(s.alpha_bar(0), 1.0);
        assert!(s.alpha_bar(1000) < 0.01);
        assert!((1..=1000).all(|t| s.alpha_bar(t) < s.alpha_bar(t - 1)));
        assert!((1..=1000).all(|t| s.beta(t) > 0.0 && s.beta(t) <= 0.999));
        assert!(cosine_schedule(1).is_err());
    }

    #[test]
    fn schedule_matches_closed_form_oracle() {
        // Independent evaluation of the normalized cos^2 curve.
        let s = cosine_schedule(1000).unwrap();
        let g = |t: f64| {
            (((t / 1000.0 + 0.008) / 1.008) * std::f64::consts::PI / 2.0)
                .cos()
                .powi(2)
        };
        for t in [1usize, 10, 250, 500, 900, 990] {
            let want = g(t as f64) / g(0.0);
            assert!((s.alpha_bar(t) - want).abs() < 1e-10, "t={t}");
        }
        // Last step is clipped.
        assert_eq!(s.beta(1000), 0.999);
    }

    #[test]
    fn schedule_conservation() {
        for steps in [2usize, 10, 100, 1000] {
            let s = cosine_schedule(steps).unwrap();
            let mut prod = 1.0;
            for t in 1..=steps {
                prod *= 1.0 - s.beta(t);
                assert!((s.alpha_bar(t) - prod).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn posterior_at_first_step_returns_x0() {
        let s = cosine_schedule(100).unwrap();
        let (c_x0, c_z, var) = s.posterior(1);
        assert!((c_x0 - 1.0).abs() < 1e-12);
        assert!(c_z.abs() < 1e-12 && var.abs() < 1e-12);
    }

    #[test]
    fn forward_diffuse_small_t_stays_close() {
        let s = cosine_schedule(1000).unwrap();
        let codec = crate::embedding::Codec::standard();
        let x0 = codec.encode(&"KLAKLAKKLAKLAK".parse().unwrap()).unwrap();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut close = 0;
        for _ in 0..1000 {
            let (z, _) = forward_diffuse(&x0, 1, &s, &mut rng).unwrap();
            let d: Vec<f64> = z
                .as_slice()
                .iter()
                .zip(x0.as_slice())
                .map(|(a, b)| a - b)
                .collect();
            if norm(&d) / norm(x0.as_slice()) < 0.1 {
                close += 1;
            }
        }
        assert!(close > 990, "{close}");
    }

    #[test]
    fn forward_diffuse_marginal_variance() {
        // Entry x0 drawn from {-1, +1}: Var(x0) = 1 so Var(z) = ab + (1 - ab) = 1;
        // use a scaled entry to make the closed form non-trivial.
        let s = cosine_schedule(1000).unwrap();
        let t = 400;
        let ab = s.alpha_bar(t);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 10_000;
        let mut zs = Vec::with_capacity(n);
        for _ in 0..n {
            let mut x = EmbeddingMatrix::zeros();
            x.as_mut_slice()[0] = if rng.random_bool(0.5) { 3.0 } else { -3.0 };
            let (z, _) = forward_diffuse(&x, t, &s, &mut rng).unwrap();
            zs.push(z.as_slice()[0]);
        }
        let mean = zs.iter().sum::<f64>() / n as f64;
        let var = zs.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let want = ab * 9.0 + (1.0 - ab);
        assert!((var / want - 1.0).abs() < 0.05, "{var} vs {want}");
    }

    #[test]
    fn forward_diffuse_errors_and_determinism() {
        let s = cosine_schedule(10).unwrap();
        let x = EmbeddingMatrix::zeros();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            forward_diffuse(&x, 0, &s, &mut rng),
            Err(Error::StepOutOfRange { .. })
        ));
        assert!(matches!(
            forward_diffuse(&x, 11, &s, &mut rng),
            Err(Error::StepOutOfRange { .. })
        ));
        let a = forward_diffuse(&x, 5, &s, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = forward_diffuse(&x, 5, &s, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
    }

    fn cond() -> EncodedCondition {
        EncodedCondition::encode(&ConditioningVector {
            amp: true,
            length: Some(30),
            charge: None,
            hydrophobicity: Some(0.4),
        })
    }

    #[test]
    fn condition_encoding() {
        let f = cond().features();
        assert_eq!(f, [1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.4, 1.0]);
    }

    #[test]
    fn cads_regimes() {
        let s = cosine_schedule(100).unwrap();
        let cfg = CadsConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert_eq!(cads_anneal(&cond(), 50, &s, &cfg, &mut rng), cond());
        // gamma = 0: values are 0.1 * eps, independent of c.
        let mut other = cond();
        other.slots[1].value = 9.0;
        let a = cads_anneal(&cond(), 95, &s, &cfg, &mut ChaCha8Rng::seed_from_u64(5));
        let b = cads_anneal(&other, 95, &s, &cfg, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
        let mut r = ChaCha8Rng::seed_from_u64(5);
        let eps: Vec<f64> = (0..4).map(|_| r.sample(StandardNormal)).collect();
        assert_eq!(a.slots[1].value, 0.1 * eps[1]);
        assert_eq!(a.slots[2], CondSlot::default());
        assert!(a
            .slots
            .iter()
            .zip(cond().slots)
            .all(|(x, y)| x.present == y.present));
        // zero noise scale is deterministic
        let quiet = CadsConfig {
            noise_scale: 0.0,
            ..cfg
        };
        let g = quiet.gamma(0.7);
        let q = cads_anneal(&cond(), 70, &s, &quiet, &mut rng);
        assert!((q.slots[1].value - g.sqrt()).abs() < 1e-15);
        let off = CadsConfig::disabled();
        assert_eq!(off.gamma(0.99), 1.0);
        assert_eq!(cads_anneal(&cond(), 99, &s, &off, &mut rng), cond());
    }

    #[test]
    fn cads_gamma_is_continuous_at_knots() {
        let cfg = CadsConfig::default();
        let steps = 1000.0;
        for tau in [cfg.tau1, cfg.tau2] {
            let k = (tau * steps).round();
            let below = cfg.gamma((k - 1.0) / steps);
            let above = cfg.gamma((k + 1.0) / steps);
            assert!((below - above).abs() <= 2.0 / (steps * (cfg.tau2 - cfg.tau1)) + 1e-12);
        }
        assert!(CadsConfig {
            tau1: 0.9,
            tau2: 0.5,
            ..cfg
        }
        .validate()
        .is_err());
    }

    #[test]
    fn audit_csv_rows() {
        let req = ConditioningVector {
            amp: true,
            length: Some(4),
            charge: None,
            hydrophobicity: None,
        };
        let mut buf = Vec::new();
        let samples = vec![
            ("s0".to_string(), Some("KLAK".parse().unwrap())),
            ("s1".to_string(), None),
        ];
        write_audit_csv(&req, &samples, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], AUDIT_HEADER);
        assert!(lines[1].starts_with("s0,1,4,NA,NA,1,4,2.0,"));
        assert_eq!(lines[2], "s1,1,4,NA,NA,0,NA,NA,NA");
        assert_eq!(
            length_mae(4, &["KLAK".parse().unwrap(), "KL".parse().unwrap()]),
            Some(1.0)
        );
    }
}
