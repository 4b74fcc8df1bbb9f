//! Training objectives: pixel MSE, perceptual distance through a frozen
//! feature net, adversarial losses, and the actor-critic machinery
//! (Gaussian action sampling, 0/1 PSNR-improvement rewards, discounted
//! returns, the k-step reward window, and the combined loss schedule).

use crate::error::{Error, Result};
use crate::rng::{stream_rng, streams};
use crate::scalar::Scalar;
use crate::tensor::{
    gaussian_log_density, kaiming_uniform, load_checkpoint, save_checkpoint, CheckpointEntry,
    Tensor,
};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// Weight of the generator's adversarial term in the combined loss.
pub const GAN_WEIGHT: f64 = 1e-3;
/// Weight of the perceptual term in the combined loss.
pub const PERCEPTUAL_WEIGHT: f64 = 6e-3;
/// Weight of the value-regression term inside the actor-critic loss.
pub const VALUE_LOSS_WEIGHT: f64 = 5e-3;
/// Probabilities are clamped this far away from {0,1} before logs.
const PROB_EPS: f64 = 1e-7;

/// Mean squared error over every element; shapes must match.
pub fn mse_loss<S: Scalar>(pred: &Tensor<S>, gt: &Tensor<S>) -> Result<Tensor<S>> {
    pred.sub(gt)?.square()?.mean_all()
}

/// Frozen feature extractor for the perceptual loss. Gradients flow through
/// it into the predicted image, never into its own weights.
pub enum FeatureExtractor<S: Scalar> {
    /// Degenerate extractor; perceptual loss collapses to pixel MSE.
    Identity,
    /// Stride-2 conv stages with ReLU; (weight, bias) pairs are constants.
    Conv(Vec<(Tensor<S>, Tensor<S>)>),
}

/// Widths of the three seeded feature stages.
const FEATURE_WIDTHS: [usize; 3] = [16, 32, 64];

impl<S: Scalar> FeatureExtractor<S> {
    pub fn identity() -> Self {
        FeatureExtractor::Identity
    }

    /// Three seeded stride-2 conv stages (widths 16/32/64) with ReLU.
    /// Random but fixed: preserves the structural role of a perceptual loss
    /// while staying reproducible from the seed alone.
    pub fn seeded(in_channels: usize, seed: u64) -> Result<Self> {
        if in_channels == 0 {
            return Err(Error::Config("feature net needs at least one channel".into()));
        }
        let mut rng = stream_rng(seed, streams::FEATURE_NET);
        let mut stages = Vec::new();
        let mut cin = in_channels;
        for cout in FEATURE_WIDTHS {
            let fan_in = cin * 9;
            let weight = Tensor::from_vec(
                kaiming_uniform(&mut rng, fan_in, cout * fan_in),
                &[cout, cin, 3, 3],
            )?;
            let bias = Tensor::from_vec(vec![S::zero(); cout], &[cout])?;
            stages.push((weight, bias));
            cin = cout;
        }
        Ok(FeatureExtractor::Conv(stages))
    }

    pub fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        match self {
            FeatureExtractor::Identity => Ok(x.clone()),
            FeatureExtractor::Conv(stages) => {
                let mut y = x.clone();
                for (w, b) in stages {
                    y = y.conv2d(w, Some(b), 2, 1)?.relu()?;
                }
                Ok(y)
            }
        }
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let stages = match self {
            FeatureExtractor::Identity => {
                return Err(Error::Config("identity extractor has no weights to save".into()))
            }
            FeatureExtractor::Conv(stages) => stages,
        };
        let mut kv = BTreeMap::new();
        kv.insert("model".to_string(), "feature-net-v1".to_string());
        kv.insert("stages".to_string(), stages.len().to_string());
        let mut entries = Vec::new();
        for (i, (w, b)) in stages.iter().enumerate() {
            entries.push(CheckpointEntry {
                name: format!("f{i}.weight"),
                shape: w.shape().to_vec(),
                data: w.data().iter().map(|v| v.to_f64_() as f32).collect(),
            });
            entries.push(CheckpointEntry {
                name: format!("f{i}.bias"),
                shape: b.shape().to_vec(),
                data: b.data().iter().map(|v| v.to_f64_() as f32).collect(),
            });
        }
        save_checkpoint(path, &kv, &entries)
    }

    /// Load externally supplied feature weights (any stage count; every
    /// stage runs stride 2 with same padding and ReLU).
    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let (kv, entries) = load_checkpoint(path)?;
        if kv.get("model").map(String::as_str) != Some("feature-net-v1") {
            return Err(Error::Checkpoint("not a feature-net checkpoint".into()));
        }
        let n: usize = kv
            .get("stages")
            .ok_or_else(|| Error::Checkpoint("missing 'stages' key".into()))?
            .parse()
            .map_err(|_| Error::Checkpoint("'stages' is not a number".into()))?;
        let mut by_name: BTreeMap<String, CheckpointEntry> =
            entries.into_iter().map(|e| (e.name.clone(), e)).collect();
        let mut take = |name: String, rank: usize| -> Result<Tensor<S>> {
            let e = by_name
                .remove(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing entry '{name}'")))?;
            if e.shape.len() != rank {
                return Err(Error::Checkpoint(format!(
                    "entry '{name}' must have rank {rank}, got {:?}",
                    e.shape
                )));
            }
            Tensor::from_vec(e.data.iter().map(|&v| S::from_f64(v as f64)).collect(), &e.shape)
        };
        let mut stages = Vec::new();
        for i in 0..n {
            stages.push((take(format!("f{i}.weight"), 4)?, take(format!("f{i}.bias"), 1)?));
        }
        Ok(FeatureExtractor::Conv(stages))
    }
}

/// MSE in the extractor's output feature space.
pub fn perceptual_loss<S: Scalar>(
    pred: &Tensor<S>,
    gt: &Tensor<S>,
    net: &FeatureExtractor<S>,
) -> Result<Tensor<S>> {
    mse_loss(&net.forward(pred)?, &net.forward(gt)?)
}

/// Discriminator and generator adversarial losses from per-item real-image
/// probabilities. The discriminator gets the literal min-max objective; the
/// generator gets the non-saturating -log D(fake) form (the saturating
/// form's gradient vanishes early in training). Probabilities are clamped to
/// [1e-7, 1-1e-7] before the logs, so there are no singularities.
pub fn gan_losses<S: Scalar>(
    d_real: &Tensor<S>,
    d_fake: &Tensor<S>,
) -> Result<(Tensor<S>, Tensor<S>)> {
    let real = d_real.clamp(PROB_EPS, 1.0 - PROB_EPS)?;
    let fake = d_fake.clamp(PROB_EPS, 1.0 - PROB_EPS)?;
    let real_term = real.log()?.mean_all()?;
    let fake_term = fake.neg()?.add_scalar(1.0)?.log()?.mean_all()?;
    let d_loss = real_term.add(&fake_term)?.neg()?;
    let g_loss = fake.log()?.mean_all()?.neg()?;
    Ok((d_loss, g_loss))
}

/// Draw a PSNR prediction from the Gaussian policy and return it with its
/// tape-connected log-probability. `mean` and `log_std` must be
/// single-element tensors (pool a batched policy first).
pub fn sample_action<S: Scalar>(
    mean: &Tensor<S>,
    log_std: &Tensor<S>,
    rng: &mut ChaCha20Rng,
) -> Result<(f64, Tensor<S>)> {
    if mean.len() != 1 || log_std.len() != 1 {
        return Err(Error::InvalidInput {
            op: "sample_action",
            message: format!(
                "pooled policy expected, got mean {:?} log_std {:?}",
                mean.shape(),
                log_std.shape()
            ),
        });
    }
    let m = mean.scalar_value();
    let ls = log_std.scalar_value();
    if !m.is_finite() || !ls.is_finite() {
        return Err(Error::InvalidInput {
            op: "sample_action",
            message: format!("non-finite policy: mean {m}, log_std {ls}"),
        });
    }
    let eps: f64 = StandardNormal.sample(rng);
    let action = m + ls.exp() * eps;
    let log_prob = gaussian_log_density(&Tensor::scalar(action), mean, log_std)?;
    Ok((action, log_prob))
}

/// 1 when the measured PSNR strictly improved over the previous iteration,
/// else 0. Initialize `psnr_prev` to -inf so a finite first measurement
/// earns the first reward; +inf beats anything finite, ties lose.
pub fn compute_reward(psnr_i: f64, psnr_prev: f64) -> f64 {
    if psnr_i > psnr_prev {
        1.0
    } else {
        0.0
    }
}

/// Backward recursion R_t = r_t + gamma * R_{t+1} with R_K = 0 (pure
/// Monte-Carlo inside the window, no bootstrap).
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if rewards.is_empty() {
        return Err(Error::InvalidInput {
            op: "discounted_returns",
            message: "empty reward list".into(),
        });
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidInput {
            op: "discounted_returns",
            message: format!("gamma must be in (0,1], got {gamma}"),
        });
    }
    let mut out = vec![0.0; rewards.len()];
    let mut running = 0.0;
    for (o, &r) in out.iter_mut().zip(rewards.iter()).rev() {
        running = r + gamma * running;
        *o = running;
    }
    Ok(out)
}

struct RlRecord<S: Scalar> {
    reward: f64,
    log_prob: Tensor<S>,
    value: Tensor<S>,
    measured_psnr: f64,
}

/// K-step actor-critic window. Each training iteration pushes one record;
/// when full, `rl_loss` folds the window into one tape-connected scalar and
/// the caller clears it.
pub struct RlWindow<S: Scalar> {
    capacity: usize,
    gamma: f64,
    records: Vec<RlRecord<S>>,
}

/// Components of the actor-critic loss, each tape-connected.
pub struct RlLoss<S: Scalar> {
    /// Policy term: sum of log_prob_t * advantage_t (advantage constant).
    pub pi: Tensor<S>,
    /// Unweighted value regression term: sum of (V_t - R_t)^2.
    pub value: Tensor<S>,
    /// 5e-3 * value - pi.
    pub total: Tensor<S>,
}

impl<S: Scalar> RlWindow<S> {
    pub fn new(capacity: usize, gamma: f64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("window capacity must be at least 1".into()));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::Config(format!("gamma must be in (0,1], got {gamma}")));
        }
        Ok(RlWindow { capacity, gamma, records: Vec::with_capacity(capacity) })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.records.len() == self.capacity
    }

    pub fn clear(&mut self) {
        self.records.clear();
    }

    pub fn push(
        &mut self,
        reward: f64,
        log_prob: Tensor<S>,
        value: Tensor<S>,
        measured_psnr: f64,
    ) -> Result<()> {
        if reward != 0.0 && reward != 1.0 {
            return Err(Error::InvalidInput {
                op: "rl_window",
                message: format!("reward must be exactly 0 or 1, got {reward}"),
            });
        }
        if log_prob.len() != 1 || value.len() != 1 {
            return Err(Error::InvalidInput {
                op: "rl_window",
                message: "log_prob and value must be single-element tensors".into(),
            });
        }
        if self.is_full() {
            return Err(Error::InvalidInput {
                op: "rl_window",
                message: format!("window already holds {} records", self.capacity),
            });
        }
        self.records.push(RlRecord { reward, log_prob, value, measured_psnr });
        Ok(())
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.reward).collect()
    }

    pub fn measured_psnrs(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.measured_psnr).collect()
    }

    /// Actor-critic loss over a full window:
    /// 5e-3 * sum((R_t - V_t)^2) - sum(log_prob_t * (R_t - V_t)), with the
    /// advantage in the policy term treated as a constant so no gradient
    /// leaks from the policy term into the value head.
    pub fn rl_loss(&self) -> Result<RlLoss<S>> {
        if !self.is_full() {
            return Err(Error::InvalidInput {
                op: "rl_loss",
                message: format!(
                    "window holds {} of {} records",
                    self.records.len(),
                    self.capacity
                ),
            });
        }
        let returns = discounted_returns(&self.rewards(), self.gamma)?;
        let mut pi: Option<Tensor<S>> = None;
        let mut value: Option<Tensor<S>> = None;
        for (rec, &ret) in self.records.iter().zip(&returns) {
            let advantage = ret - rec.value.scalar_value();
            let pi_term = rec.log_prob.scale(advantage)?;
            let value_term = rec.value.add_scalar(-ret)?.square()?;
            pi = Some(match pi {
                Some(acc) => acc.add(&pi_term)?,
                None => pi_term,
            });
            value = Some(match value {
                Some(acc) => acc.add(&value_term)?,
                None => value_term,
            });
        }
        let (pi, value) = (pi.unwrap(), value.unwrap());
        let total = value.scale(VALUE_LOSS_WEIGHT)?.sub(&pi)?;
        Ok(RlLoss { pi, value, total })
    }
}

/// Weighted sum l_mse + 1e-3 * l_gan_g + 6e-3 * l_vgg.
pub fn srgan_total<S: Scalar>(
    l_mse: &Tensor<S>,
    l_gan_g: &Tensor<S>,
    l_vgg: &Tensor<S>,
) -> Result<Tensor<S>> {
    l_mse.add(&l_gan_g.scale(GAN_WEIGHT)?)?.add(&l_vgg.scale(PERCEPTUAL_WEIGHT)?)
}

/// True when the RL window folds into the loss at this iteration.
pub fn is_window_boundary(iter: usize, k: usize) -> bool {
    k > 0 && iter > 0 && iter % k == 0
}

/// Combined schedule: the adversarial total always, plus the actor-critic
/// term exactly on window boundaries. Supplying (or omitting) the RL term on
/// the wrong side of a boundary is an error; this guards double counting.
pub fn proposed_loss<S: Scalar>(
    l_srgan: &Tensor<S>,
    l_rl: Option<&Tensor<S>>,
    iter: usize,
    k: usize,
) -> Result<Tensor<S>> {
    let boundary = is_window_boundary(iter, k);
    match (l_rl, boundary) {
        (Some(rl), true) => l_srgan.add(rl),
        (None, false) => Ok(l_srgan.clone()),
        (Some(_), false) => Err(Error::InvalidInput {
            op: "proposed_loss",
            message: format!("RL loss supplied off boundary (iter {iter}, k {k})"),
        }),
        (None, true) => Err(Error::InvalidInput {
            op: "proposed_loss",
            message: format!("RL loss missing on boundary (iter {iter}, k {k})"),
        }),
    }
}

/// Per-iteration loss components, one JSON object per log line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub iter: u64,
    pub l_mse: f64,
    pub l_vgg: f64,
    pub l_gan_g: f64,
    pub l_gan_d: f64,
    pub l_pi: f64,
    pub l_value: f64,
    pub l_rl: f64,
    pub l_total: f64,
    pub window_applied: bool,
    pub measured_psnr: f64,
    pub reward: f64,
}

impl LossReport {
    /// Name of the first non-finite loss component, if any. The measured
    /// PSNR is exempt: +inf legitimately encodes a zero-MSE batch.
    pub fn non_finite_component(&self) -> Option<&'static str> {
        [
            ("l_mse", self.l_mse),
            ("l_vgg", self.l_vgg),
            ("l_gan_g", self.l_gan_g),
            ("l_gan_d", self.l_gan_d),
            ("l_pi", self.l_pi),
            ("l_value", self.l_value),
            ("l_rl", self.l_rl),
            ("l_total", self.l_total),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(name, _)| name)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("loss report serializes")
    }
}
