//! Two-layer tanh network denoiser with hand-written backpropagation.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{
    cosine_schedule, diffuse_with, standard_normals, Denoiser, EncodedCondition, NoiseSchedule,
    COND_FEATURES,
};
use crate::conditioning::{apply_mask, sample_mask, ConditioningVector, PropertyMask};
use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const X_LEN: usize = EmbeddingMatrix::LEN;
/// Pre-activation change per residue for length-threshold units at init.
const LENGTH_UNIT_GAIN: f64 = 5.0;
const LENGTH_UNIT_MAX: f64 = 50.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyConfig {
    pub hidden: usize,
    /// Even number of sinusoidal time features.
    pub time_features: usize,
    pub steps: usize,
    pub self_conditioning: bool,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            hidden: 256,
            time_features: 16,
            steps: super::DEFAULT_STEPS,
            self_conditioning: true,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0
            || self.time_features == 0
            || !self.time_features.is_multiple_of(2)
            || self.steps < 2
        {
            return Err(Error::InvalidParameter(format!(
                "bad denoiser config {self:?}"
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        X_LEN + self.time_features + COND_FEATURES + X_LEN
    }

    /// `[W1 (hidden x input) | b1 | W2 (500 x hidden) | b2]`.
    pub fn num_params(&self) -> usize {
        self.hidden * self.input_dim() + self.hidden + X_LEN * self.hidden + X_LEN
    }
}

/// Output is `W2 tanh(W1 x + b1) + b2` where `x` stacks `sqrt(ab_t) z_t`,
/// time features, the condition and the self-conditioning input.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyDenoiser {
    config: ToyConfig,
    schedule: NoiseSchedule,
    params: Vec<f64>,
    trained: bool,
}

struct Offsets {
    b1: usize,
    w2: usize,
    b2: usize,
}

struct Forward {
    input: Vec<f64>,
    hidden: Vec<f64>,
    out: Vec<f64>,
}

impl ToyDenoiser {
    pub fn new<R: Rng + ?Sized>(config: ToyConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let (h, d) = (config.hidden, config.input_dim());
        let mut params = vec![0.0; config.num_params()];
        let s1 = (1.0 / d as f64).sqrt();
        let s2 = (1.0 / h as f64).sqrt();
        let off = Self::offsets(&config);
        for p in &mut params[..off.b1] {
            *p = s1 * rng.sample::<f64, _>(StandardNormal);
        }
        for p in &mut params[off.w2..off.b2] {
            *p = s2 * rng.sample::<f64, _>(StandardNormal);
        }
        // Every other hidden unit starts as a soft threshold on the requested
        // length. The offset sits on the presence flag, so the unit is
        // unsaturated when no length is given.
        let value_col = X_LEN + config.time_features + 2;
        for j in (0..h).step_by(2) {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let w = sign * LENGTH_UNIT_GAIN * super::LENGTH_SCALE;
            let at = (rng.random_range(0.5..LENGTH_UNIT_MAX + 0.5) - super::LENGTH_CENTER)
                / super::LENGTH_SCALE;
            params[j * d + value_col] = w;
            params[j * d + value_col + 1] = -w * at;
        }
        Ok(ToyDenoiser {
            schedule: cosine_schedule(config.steps)?,
            config,
            params,
            trained: false,
        })
    }

    fn offsets(config: &ToyConfig) -> Offsets {
        let b1 = config.hidden * config.input_dim();
        let w2 = b1 + config.hidden;
        Offsets {
            b1,
            w2,
            b2: w2 + X_LEN * config.hidden,
        }
    }

    pub fn config(&self) -> &ToyConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_trained(&mut self, trained: bool) {
        self.trained = trained;
    }

    fn time_features(&self, t: usize, out: &mut [f64]) {
        let half = self.config.time_features / 2;
        for k in 0..half {
            let freq = (-(k as f64) / half as f64 * 10_000f64.ln()).exp();
            let arg = t as f64 * freq;
            out[k] = arg.sin();
            out[half + k] = arg.cos();
        }
    }

    fn build_input(
        &self,
        z: &[f64],
        t: usize,
        c: &EncodedCondition,
        self_cond: &[f64],
    ) -> Vec<f64> {
        let tf = self.config.time_features;
        let mut x = vec![0.0; self.config.input_dim()];
        let scale = self.schedule.alpha_bar(t).sqrt();
        for (xi, zi) in x[..X_LEN].iter_mut().zip(z) {
            *xi = scale * zi;
        }
        self.time_features(t, &mut x[X_LEN..X_LEN + tf]);
        x[X_LEN + tf..X_LEN + tf + COND_FEATURES].copy_from_slice(&c.features());
        x[X_LEN + tf + COND_FEATURES..].copy_from_slice(self_cond);
        x
    }

    fn forward(&self, z: &[f64], t: usize, c: &EncodedCondition, self_cond: &[f64]) -> Forward {
        let (h, d) = (self.config.hidden, self.config.input_dim());
        let off = Self::offsets(&self.config);
        let input = self.build_input(z, t, c, self_cond);
        let p = &self.params;
        let hidden: Vec<f64> = (0..h)
            .map(|j| {
                let row = &p[j * d..(j + 1) * d];
                let a = p[off.b1 + j] + dot(row, &input);
                a.tanh()
            })
            .collect();
        let out = (0..X_LEN)
            .map(|k| {
                let row = &p[off.w2 + k * h..off.w2 + (k + 1) * h];
                p[off.b2 + k] + dot(row, &hidden)
            })
            .collect();
        Forward { input, hidden, out }
    }

    /// Accumulates `d loss / d params` into `grad` given `d loss / d out`.
    fn backward(&self, fwd: &Forward, d_out: &[f64], grad: &mut [f64]) {
        let (h, d) = (self.config.hidden, self.config.input_dim());
        let off = Self::offsets(&self.config);
        let p = &self.params;
        let mut d_hidden = vec![0.0; h];
        for k in 0..X_LEN {
            let g = d_out[k];
            grad[off.b2 + k] += g;
            let w_row = &p[off.w2 + k * h..off.w2 + (k + 1) * h];
            let g_row = &mut grad[off.w2 + k * h..off.w2 + (k + 1) * h];
            for j in 0..h {
                g_row[j] += g * fwd.hidden[j];
                d_hidden[j] += g * w_row[j];
            }
        }
        for j in 0..h {
            let da = d_hidden[j] * (1.0 - fwd.hidden[j] * fwd.hidden[j]);
            grad[off.b1 + j] += da;
            if da != 0.0 {
                for (g, x) in grad[j * d..(j + 1) * d].iter_mut().zip(&fwd.input) {
                    *g += da * x;
                }
            }
        }
    }

    /// Mean squared error of the clean-embedding estimate with every
    /// self-conditioning input given (and held constant), plus exact gradients.
    pub fn loss_and_grad(
        &self,
        batch: &[TrainExample],
        noise: &StepNoise,
        self_cond: &[Vec<f64>],
    ) -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; self.params.len()];
        let scale = 1.0 / (batch.len() * X_LEN) as f64;
        let mut loss = 0.0;
        for (b, ex) in batch.iter().enumerate() {
            let t = noise.t[b];
            let z = diffuse_with(ex.x0.as_slice(), &noise.eps[b], self.schedule.alpha_bar(t));
            let fwd = self.forward(&z, t, &ex.cond, &self_cond[b]);
            let x0 = ex.x0.as_slice();
            let mut d_out = vec![0.0; X_LEN];
            for k in 0..X_LEN {
                let r = fwd.out[k] - x0[k];
                loss += r * r * scale;
                d_out[k] = 2.0 * r * scale;
            }
            self.backward(&fwd, &d_out, &mut grad);
        }
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss);
        }
        Ok((loss, grad))
    }

    /// First-pass estimates used as self-conditioning inputs (zero where the
    /// coin says no).
    pub fn self_cond_inputs(
        &self,
        batch: &[TrainExample],
        noise: &StepNoise,
        enabled: bool,
    ) -> Vec<Vec<f64>> {
        let zero = vec![0.0; X_LEN];
        batch
            .iter()
            .enumerate()
            .map(|(b, ex)| {
                if enabled && noise.use_self_cond[b] {
                    let t = noise.t[b];
                    let z =
                        diffuse_with(ex.x0.as_slice(), &noise.eps[b], self.schedule.alpha_bar(t));
                    self.forward(&z, t, &ex.cond, &zero).out
                } else {
                    zero.clone()
                }
            })
            .collect()
    }
}

/// Four interleaved partial sums; fixed order, so results are reproducible.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, ra) = a.as_chunks::<4>();
    let (cb, rb) = b.as_chunks::<4>();
    for (x, y) in ca.iter().zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

impl Denoiser for ToyDenoiser {
    fn predict_x0(&self, z: &[f64], t: usize, c: &EncodedCondition, self_cond: &[f64]) -> Vec<f64> {
        self.forward(z, t, c, self_cond).out
    }

    fn is_trained(&self) -> bool {
        self.trained
    }

    fn steps(&self) -> usize {
        self.config.steps
    }

    fn self_conditioning(&self) -> bool {
        self.config.self_conditioning
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainExample {
    pub x0: EmbeddingMatrix,
    pub cond: EncodedCondition,
}

/// All randomness of one training step, drawn up front.
#[derive(Clone, Debug, PartialEq)]
pub struct StepNoise {
    pub t: Vec<usize>,
    pub use_self_cond: Vec<bool>,
    pub eps: Vec<Vec<f64>>,
}

pub const SELF_COND_PROB: f64 = 0.5;

/// Per example: step uniform on 1..=T, the self-conditioning coin, then the
/// noise. The coin is drawn even when self-conditioning is off.
pub fn draw_step_noise<R: Rng + ?Sized>(
    batch: usize,
    sched: &NoiseSchedule,
    rng: &mut R,
) -> StepNoise {
    let mut noise = StepNoise {
        t: Vec::with_capacity(batch),
        use_self_cond: Vec::with_capacity(batch),
        eps: Vec::with_capacity(batch),
    };
    for _ in 0..batch {
        noise.t.push(rng.random_range(1..=sched.steps()));
        noise.use_self_cond.push(rng.random_bool(SELF_COND_PROB));
        noise.eps.push(standard_normals(rng, X_LEN));
    }
    noise
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    pub loss: f64,
    pub grad: Vec<f64>,
    pub noise: StepNoise,
}

pub fn training_step<R: Rng + ?Sized>(
    den: &ToyDenoiser,
    batch: &[TrainExample],
    rng: &mut R,
) -> Result<StepOutput> {
    if batch.is_empty() {
        return Err(Error::TooSmall("empty training batch".into()));
    }
    let noise = draw_step_noise(batch.len(), &den.schedule, rng);
    let sc = den.self_cond_inputs(batch, &noise, den.config.self_conditioning);
    let (loss, grad) = den.loss_and_grad(batch, &noise, &sc)?;
    Ok(StepOutput { loss, grad, noise })
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    pub fn new(n: usize, learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    pub fn update(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DenoiserTrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Sample a random property mask per example each step.
    pub mask_conditions: bool,
}

impl Default for DenoiserTrainConfig {
    fn default() -> Self {
        DenoiserTrainConfig {
            iterations: 2000,
            batch_size: 32,
            learning_rate: 1e-3,
            mask_conditions: true,
        }
    }
}

/// Minibatch Adam training; returns the loss of every iteration.
pub fn train_denoiser<R: Rng + ?Sized>(
    den: &mut ToyDenoiser,
    data: &[(EmbeddingMatrix, ConditioningVector)],
    cfg: &DenoiserTrainConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::TooSmall("no training embeddings".into()));
    }
    if cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "bad training config {cfg:?}"
        )));
    }
    let mut adam = Adam::new(den.params.len(), cfg.learning_rate);
    let mut losses = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        let batch: Vec<TrainExample> = (0..cfg.batch_size)
            .map(|_| {
                let (x0, c) = &data[rng.random_range(0..data.len())];
                let mask = if cfg.mask_conditions {
                    sample_mask(rng)
                } else {
                    PropertyMask::KEEP_ALL
                };
                TrainExample {
                    x0: x0.clone(),
                    cond: EncodedCondition::encode(&apply_mask(c, &mask)),
                }
            })
            .collect();
        let step = training_step(den, &batch, rng)?;
        adam.update(&mut den.params, &step.grad);
        losses.push(step.loss);
    }
    den.trained = true;
    Ok(losses)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    version: u32,
    config: ToyConfig,
    trained: bool,
    shapes: BTreeMap<String, Vec<usize>>,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

fn shapes(config: &ToyConfig) -> BTreeMap<String, Vec<usize>> {
    BTreeMap::from([
        ("w1".to_owned(), vec![config.hidden, config.input_dim()]),
        ("b1".to_owned(), vec![config.hidden]),
        ("w2".to_owned(), vec![X_LEN, config.hidden]),
        ("b2".to_owned(), vec![X_LEN]),
    ])
}

pub fn save_checkpoint(den: &ToyDenoiser, path: &Path) -> Result<()> {
    let text = checkpoint_json(den)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn checkpoint_json(den: &ToyDenoiser) -> Result<String> {
    let off = ToyDenoiser::offsets(&den.config);
    let p = &den.params;
    let ck = Checkpoint {
        version: CHECKPOINT_VERSION,
        config: den.config,
        trained: den.trained,
        shapes: shapes(&den.config),
        w1: p[..off.b1].to_vec(),
        b1: p[off.b1..off.w2].to_vec(),
        w2: p[off.w2..off.b2].to_vec(),
        b2: p[off.b2..].to_vec(),
    };
    serde_json::to_string(&ck).map_err(|e| Error::Schema(e.to_string()))
}

pub fn load_checkpoint(path: &Path) -> Result<ToyDenoiser> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_json(&text)
}

pub fn checkpoint_from_json(text: &str) -> Result<ToyDenoiser> {
    let probe: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    match probe.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == u64::from(CHECKPOINT_VERSION) => {}
        Some(v) => return Err(Error::VersionMismatch(format!("checkpoint format {v}"))),
        None => return Err(Error::Schema("missing checkpoint version".into())),
    }
    let ck: Checkpoint = serde_json::from_value(probe).map_err(|e| Error::Schema(e.to_string()))?;
    ck.config.validate()?;
    let want = shapes(&ck.config);
    if ck.shapes != want {
        return Err(Error::Schema(format!(
            "shapes {:?} do not match config {:?}",
            ck.shapes, want
        )));
    }
    let mut params = Vec::with_capacity(ck.config.num_params());
    for (name, part) in [
        ("w1", &ck.w1),
        ("b1", &ck.b1),
        ("w2", &ck.w2),
        ("b2", &ck.b2),
    ] {
        let n: usize = want[name].iter().product();
        if part.len() != n {
            return Err(Error::Schema(format!(
                "{name} has {} values, expected {n}",
                part.len()
            )));
        }
        params.extend_from_slice(part);
    }
    if params.iter().any(|v| !v.is_finite()) {
        return Err(Error::Schema("non-finite parameter".into()));
    }
    Ok(ToyDenoiser {
        schedule: cosine_schedule(ck.config.steps)?,
        config: ck.config,
        params,
        trained: ck.trained,
    })
}
