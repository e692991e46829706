//! Training losses with analytic gradients, the momentum key encoder and a
//! toy contrastive trainer.
//!
//! - proposal: `-ln s_pos + sum_v lambda_v smooth_l1(v* - v)` over the five box variables
//! - refinement: `lambda_gamma |gamma_hat - gamma| + lambda_z |z_hat - z|`
//! - InfoNCE: `-ln softmax(q . k_i / tau)[positive]`
//! - overall: `lambda_p L_p + lambda_r L_r + lambda_q L_q` with an epoch schedule

pub mod gradcheck;
pub mod nn;
pub mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rotated::BoxDelta;

pub use nn::{Activation, Mlp, ProjectionHead, ToyEncoder};
pub use train::{synthetic_depth_images, toy_contrastive_train, ToyTrainConfig, TrainOutcome};

pub const DEFAULT_TEMPERATURE: f64 = 0.07;

pub fn smooth_l1(x: f64) -> f64 {
    let a = x.abs();
    if a < 1.0 {
        0.5 * x * x
    } else {
        a - 0.5
    }
}

/// Derivative of [`smooth_l1`]; at `|x| = 1` both branches agree.
pub fn smooth_l1_grad(x: f64) -> f64 {
    if x.abs() < 1.0 {
        x
    } else {
        x.signum()
    }
}

/// Per-variable regression weights of the proposal loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoxWeights {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub w: f64,
    pub h: f64,
}

impl Default for BoxWeights {
    fn default() -> Self {
        BoxWeights {
            x: 5.0,
            y: 5.0,
            theta: 5.0,
            w: 1.0,
            h: 1.0,
        }
    }
}

impl BoxWeights {
    /// Weights in `BoxDelta::to_array` order `(x, y, w, h, theta)`.
    pub fn to_array(&self) -> [f64; 5] {
        [self.x, self.y, self.w, self.h, self.theta]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageWeights {
    pub proposal: f64,
    pub refinement: f64,
    pub contrastive: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageSchedule {
    /// First epoch that uses `late`.
    pub switch_epoch: usize,
    pub early: StageWeights,
    pub late: StageWeights,
}

impl Default for StageSchedule {
    fn default() -> Self {
        StageSchedule {
            switch_epoch: 20,
            early: StageWeights {
                proposal: 1.0,
                refinement: 1.0,
                contrastive: 5.0,
            },
            late: StageWeights {
                proposal: 5.0,
                refinement: 5.0,
                contrastive: 2.0,
            },
        }
    }
}

impl StageSchedule {
    pub fn weights_for(&self, epoch: usize) -> StageWeights {
        if epoch < self.switch_epoch {
            self.early
        } else {
            self.late
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub box_weights: BoxWeights,
    pub lambda_gamma: f64,
    pub lambda_z: f64,
    pub schedule: StageSchedule,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            box_weights: BoxWeights::default(),
            lambda_gamma: 1.0,
            lambda_z: 1.0,
            schedule: StageSchedule::default(),
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let s = &self.schedule;
        let all = self
            .box_weights
            .to_array()
            .into_iter()
            .chain([self.lambda_gamma, self.lambda_z])
            .chain([s.early, s.late].into_iter().flat_map(|w| [w.proposal, w.refinement, w.contrastive]));
        for v in all {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid("loss weights must be finite and non-negative"));
            }
        }
        Ok(())
    }
}

pub fn proposal_loss(s_pos: f64, pred: &BoxDelta, gt: &BoxDelta, weights: &BoxWeights) -> Result<f64> {
    if !(s_pos > 0.0 && s_pos <= 1.0) {
        return Err(Error::InvalidScore(s_pos));
    }
    let (p, g, w) = (pred.to_array(), gt.to_array(), weights.to_array());
    let reg: f64 = (0..5).map(|i| w[i] * smooth_l1(g[i] - p[i])).sum();
    Ok(-s_pos.ln() + reg)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProposalGrad {
    pub d_s_pos: f64,
    pub d_pred: BoxDelta,
}

pub fn proposal_loss_grad(s_pos: f64, pred: &BoxDelta, gt: &BoxDelta, weights: &BoxWeights) -> Result<ProposalGrad> {
    if !(s_pos > 0.0 && s_pos <= 1.0) {
        return Err(Error::InvalidScore(s_pos));
    }
    let (p, g, w) = (pred.to_array(), gt.to_array(), weights.to_array());
    let d: [f64; 5] = std::array::from_fn(|i| -w[i] * smooth_l1_grad(g[i] - p[i]));
    Ok(ProposalGrad {
        d_s_pos: -1.0 / s_pos,
        d_pred: BoxDelta::from_array(d),
    })
}

pub fn refinement_loss(gamma_hat: f64, gamma: f64, z_hat: f64, z: f64, lambda_gamma: f64, lambda_z: f64) -> f64 {
    lambda_gamma * (gamma_hat - gamma).abs() + lambda_z * (z_hat - z).abs()
}

/// Gradient with respect to `(gamma_hat, z_hat)`; zero at an exact prediction.
pub fn refinement_loss_grad(gamma_hat: f64, gamma: f64, z_hat: f64, z: f64, lambda_gamma: f64, lambda_z: f64) -> [f64; 2] {
    let sign = |d: f64| if d == 0.0 { 0.0 } else { d.signum() };
    [lambda_gamma * sign(gamma_hat - gamma), lambda_z * sign(z_hat - z)]
}

/// Weighted sum of the three stage losses.
pub fn overall_loss(l_p: f64, l_r: f64, l_q: f64, w: &StageWeights) -> f64 {
    w.proposal * l_p + w.refinement * l_r + w.contrastive * l_q
}

/// Negative keys, each stored L2-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyBank {
    dim: usize,
    data: Vec<f64>,
}

impl KeyBank {
    pub fn new(dim: usize) -> Self {
        KeyBank { dim, data: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn push(&mut self, key: &[f64]) -> Result<()> {
        if key.len() != self.dim {
            return Err(Error::ShapeMismatch {
                expected: self.dim,
                actual: key.len(),
            });
        }
        let norm = dot(key, key).sqrt();
        if !(norm > 0.0) {
            return Err(Error::invalid("zero key vector"));
        }
        self.data.extend(key.iter().map(|v| v / norm));
        Ok(())
    }

    /// Appends a key and drops the oldest ones beyond `capacity`.
    pub fn enqueue(&mut self, key: &[f64], capacity: usize) -> Result<()> {
        self.push(key)?;
        let excess = self.len().saturating_sub(capacity);
        self.data.drain(..excess * self.dim);
        Ok(())
    }

    pub fn key(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn keys(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidTemperature(tau))
    }
}

fn check_keys(q: &[f64], keys: &[&[f64]]) -> Result<()> {
    if keys.len() < 2 {
        return Err(Error::InsufficientNegatives(keys.len().saturating_sub(1)));
    }
    for k in keys {
        if k.len() != q.len() {
            return Err(Error::ShapeMismatch {
                expected: q.len(),
                actual: k.len(),
            });
        }
    }
    Ok(())
}

/// Softmax probabilities of `q . k_i / tau` and the loss for positive `keys[0]`.
fn softmax_nce(q: &[f64], keys: &[&[f64]], tau: f64) -> (Vec<f64>, f64) {
    let logits: Vec<f64> = keys.iter().map(|k| dot(q, k) / tau).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = -(logits[0] - max - sum.ln());
    (exps.iter().map(|e| e / sum).collect(), loss)
}

/// InfoNCE over `keys`, where `keys[0]` is the positive key.
pub fn info_nce_keys(q: &[f64], keys: &[&[f64]], tau: f64) -> Result<f64> {
    check_tau(tau)?;
    check_keys(q, keys)?;
    Ok(softmax_nce(q, keys, tau).1)
}

/// InfoNCE of query `q` against `k_pos` and the negatives in `bank`.
pub fn info_nce(q: &[f64], k_pos: &[f64], bank: &KeyBank, tau: f64) -> Result<f64> {
    let keys: Vec<&[f64]> = std::iter::once(k_pos).chain(bank.keys()).collect();
    info_nce_keys(q, &keys, tau)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfoNceGrad {
    pub loss: f64,
    pub d_q: Vec<f64>,
    /// Gradient per key, positive first.
    pub d_keys: Vec<Vec<f64>>,
}

pub fn info_nce_grad(q: &[f64], keys: &[&[f64]], tau: f64) -> Result<InfoNceGrad> {
    check_tau(tau)?;
    check_keys(q, keys)?;
    let (p, loss) = softmax_nce(q, keys, tau);
    let coef: Vec<f64> = p
        .iter()
        .enumerate()
        .map(|(i, pi)| (pi - if i == 0 { 1.0 } else { 0.0 }) / tau)
        .collect();
    let mut d_q = vec![0.0; q.len()];
    for (c, k) in coef.iter().zip(keys) {
        for (d, kv) in d_q.iter_mut().zip(k.iter()) {
            *d += c * kv;
        }
    }
    let d_keys = coef.iter().map(|c| q.iter().map(|qv| c * qv).collect()).collect();
    Ok(InfoNceGrad { loss, d_q, d_keys })
}

/// Exponential moving average `m key + (1 - m) query`.
pub fn momentum_update(key: &[f64], query: &[f64], m: f64) -> Result<Vec<f64>> {
    let mut out = key.to_vec();
    momentum_update_in_place(&mut out, query, m)?;
    Ok(out)
}

pub fn momentum_update_in_place(key: &mut [f64], query: &[f64], m: f64) -> Result<()> {
    if key.len() != query.len() {
        return Err(Error::ShapeMismatch {
            expected: key.len(),
            actual: query.len(),
        });
    }
    if !(0.0..=1.0).contains(&m) {
        return Err(Error::invalid("momentum must lie in [0, 1]"));
    }
    for (k, q) in key.iter_mut().zip(query) {
        *k = m * *k + (1.0 - m) * q;
    }
    Ok(())
}
