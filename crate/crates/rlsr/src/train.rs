//! The training loop: adversarial generator/discriminator updates with the
//! k-step actor-critic term folded in on window boundaries, driven entirely
//! by seeded randomness so two runs with one config produce byte-identical
//! logs.

use crate::corpus::{batch_to_tensor, sample_patch_pair, Corpus, Split};
use crate::error::{Error, Result};
use crate::losses::{
    compute_reward, gan_losses, is_window_boundary, mse_loss, perceptual_loss, proposed_loss,
    sample_action, srgan_total, FeatureExtractor, LossReport, RlWindow,
};
use crate::metrics::{mse, psnr_from_mse};
use crate::model::{
    Discriminator, DiscriminatorConfig, Generator, GeneratorConfig, MIN_INPUT_DIM,
};
use crate::rng::{stream_rng, streams};
use crate::tensor::{Adam, AdamConfig, Tensor};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::PathBuf;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Directory of training images.
    pub data_dir: PathBuf,
    /// Downscale/upscale factor r.
    pub factor: usize,
    /// ADAM learning rate for both networks.
    pub lr: f64,
    pub iters: usize,
    pub batch: usize,
    /// HR patch edge; the LR patch edge is patch_hr / factor.
    pub patch_hr: usize,
    /// Reward-accumulation horizon K.
    pub k_window: usize,
    /// Return discount.
    pub gamma: f64,
    /// Master seed; every subsystem stream derives from it.
    pub seed: u64,
    /// Seed for the frozen perceptual net; defaults to the master seed.
    pub feature_seed: Option<u64>,
    /// Generator feature width (also the discriminator base width).
    pub features: usize,
    pub res_blocks: usize,
    /// Re-encode LR patches through JPEG at this quality when set.
    pub lr_jpeg_quality: Option<u8>,
    pub checkpoint_path: PathBuf,
    pub log_path: PathBuf,
    /// Also write the checkpoint every this many iterations (0 = end only).
    pub checkpoint_interval: usize,
}

impl Default for TrainConfig {
    /// Desk-scale defaults; `data_dir`, `checkpoint_path` and `log_path`
    /// must still be filled in.
    fn default() -> Self {
        TrainConfig {
            data_dir: PathBuf::new(),
            factor: 4,
            lr: 1e-3,
            iters: 500,
            batch: 4,
            patch_hr: 64,
            k_window: 10,
            gamma: 0.9,
            seed: 0,
            feature_seed: None,
            features: 32,
            res_blocks: 2,
            lr_jpeg_quality: None,
            checkpoint_path: PathBuf::new(),
            log_path: PathBuf::new(),
            checkpoint_interval: 0,
        }
    }
}

impl TrainConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("bad train config: {e}")))
    }

    pub fn from_toml_file<P: AsRef<std::path::Path>>(path: P) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Stable key = value rendering for the resolved-config printout.
    pub fn render(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn effective_feature_seed(&self) -> u64 {
        self.feature_seed.unwrap_or(self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.data_dir.as_os_str().is_empty() {
            return fail("data_dir must be set".into());
        }
        if self.checkpoint_path.as_os_str().is_empty() || self.log_path.as_os_str().is_empty() {
            return fail("checkpoint_path and log_path must be set".into());
        }
        if !matches!(self.factor, 2 | 4 | 8) {
            return fail(format!("factor must be 2, 4 or 8, got {}", self.factor));
        }
        if self.patch_hr % self.factor != 0 {
            return fail(format!(
                "patch_hr {} must be divisible by factor {}",
                self.patch_hr, self.factor
            ));
        }
        if self.patch_hr / self.factor < MIN_INPUT_DIM {
            return fail(format!(
                "patch_hr {} / factor {} leaves an LR patch below the encoder minimum {}",
                self.patch_hr, self.factor, MIN_INPUT_DIM
            ));
        }
        if self.patch_hr % 8 != 0 {
            return fail(format!(
                "patch_hr {} must be a multiple of 8 for the discriminator stack",
                self.patch_hr
            ));
        }
        if self.k_window == 0 || self.iters < self.k_window {
            return fail(format!(
                "need iters >= k_window >= 1, got iters {} k_window {}",
                self.iters, self.k_window
            ));
        }
        if self.batch == 0 {
            return fail("batch must be at least 1".into());
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return fail(format!("lr must be positive and finite, got {}", self.lr));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return fail(format!("gamma must be in (0,1], got {}", self.gamma));
        }
        if self.features == 0 || self.res_blocks == 0 {
            return fail("features and res_blocks must be at least 1".into());
        }
        if let Some(q) = self.lr_jpeg_quality {
            if !(1..=100).contains(&q) {
                return fail(format!("lr_jpeg_quality must be in [1,100], got {q}"));
            }
        }
        Ok(())
    }
}

pub struct TrainOutcome {
    pub reports: Vec<LossReport>,
}

/// Mean over the batch of per-item PSNRs at peak 1.0.
fn batch_mean_psnr(pred: &Tensor<f32>, gt: &Tensor<f32>) -> f64 {
    let n = pred.shape()[0];
    let item = pred.len() / n;
    let (a, b) = (pred.data(), gt.data());
    let mut acc = 0.0;
    for i in 0..n {
        let s = i * item..(i + 1) * item;
        acc += psnr_from_mse(mse(&a[s.clone()], &b[s]), 1.0);
    }
    acc / n as f64
}

/// Run the full loop and leave a checkpoint plus a newline-delimited JSON
/// loss log behind. Aborts with the iteration index and component name on
/// the first non-finite loss.
pub fn train(cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let corpus = Corpus::load(&cfg.data_dir, Split::Train)?;
    let generator = Generator::<f32>::new(
        GeneratorConfig {
            in_channels: 3,
            features: cfg.features,
            res_blocks: cfg.res_blocks,
            scale: cfg.factor,
        },
        cfg.seed,
    )?;
    let discriminator = Discriminator::<f32>::new(
        DiscriminatorConfig {
            in_channels: 3,
            base_width: cfg.features,
            patch_size: cfg.patch_hr,
        },
        cfg.seed,
    )?;
    let feature_net = FeatureExtractor::<f32>::seeded(3, cfg.effective_feature_seed())?;
    let adam = AdamConfig { lr: cfg.lr, ..AdamConfig::default() };
    let mut g_adam = Adam::new(generator.parameters(), adam)?;
    let mut d_adam = Adam::new(discriminator.parameters(), adam)?;
    let mut data_rng = stream_rng(cfg.seed, streams::DATA_SAMPLING);
    let mut action_rng = stream_rng(cfg.seed, streams::ACTION_SAMPLING);
    let mut window = RlWindow::<f32>::new(cfg.k_window, cfg.gamma)?;
    let mut prev_psnr = f64::NEG_INFINITY;
    if let Some(parent) = cfg.log_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut log = std::io::BufWriter::new(std::fs::File::create(&cfg.log_path)?);
    let mut reports = Vec::with_capacity(cfg.iters);

    for iter in 1..=cfg.iters {
        let mut lr_imgs = Vec::with_capacity(cfg.batch);
        let mut hr_imgs = Vec::with_capacity(cfg.batch);
        for _ in 0..cfg.batch {
            let (lr, hr) = sample_patch_pair(
                &corpus,
                &mut data_rng,
                cfg.patch_hr,
                cfg.factor,
                cfg.lr_jpeg_quality,
            )?;
            lr_imgs.push(lr);
            hr_imgs.push(hr);
        }
        let lr_t = batch_to_tensor(&lr_imgs)?;
        let hr_t = batch_to_tensor(&hr_imgs)?;

        let (hr_pred, policy) = generator.forward(&lr_t, true)?;
        let pooled_mean = policy.mean.mean_all()?;
        let pooled_value = policy.value.mean_all()?;
        let (_psnr_pred, log_prob) =
            sample_action(&pooled_mean, &policy.log_std, &mut action_rng)?;

        let measured_psnr = batch_mean_psnr(&hr_pred, &hr_t);
        let reward = compute_reward(measured_psnr, prev_psnr);
        prev_psnr = measured_psnr;
        window.push(reward, log_prob, pooled_value, measured_psnr)?;

        // Discriminator sees the prediction as a constant.
        let d_real = discriminator.forward(&hr_t)?;
        let d_fake = discriminator.forward(&hr_pred.detach())?;
        let (d_loss, _) = gan_losses(&d_real, &d_fake)?;
        d_adam.zero_grads();
        d_loss.backward()?;
        d_adam.step()?;

        // Generator update; its adversarial term needs gradients through
        // the discriminator, whose own grads get cleared next iteration.
        let l_mse = mse_loss(&hr_pred, &hr_t)?;
        let l_vgg = perceptual_loss(&hr_pred, &hr_t, &feature_net)?;
        let d_fake_g = discriminator.forward(&hr_pred)?;
        let (_, l_gan_g) = gan_losses(&d_real.detach(), &d_fake_g)?;
        let l_srgan = srgan_total(&l_mse, &l_gan_g, &l_vgg)?;
        let boundary = is_window_boundary(iter, cfg.k_window);
        let (total, rl_parts) = if boundary {
            let parts = window.rl_loss()?;
            (proposed_loss(&l_srgan, Some(&parts.total), iter, cfg.k_window)?, Some(parts))
        } else {
            (proposed_loss(&l_srgan, None, iter, cfg.k_window)?, None)
        };
        g_adam.zero_grads();
        total.backward()?;
        g_adam.step()?;
        if boundary {
            window.clear();
        }

        let report = LossReport {
            iter: iter as u64,
            l_mse: l_mse.scalar_value(),
            l_vgg: l_vgg.scalar_value(),
            l_gan_g: l_gan_g.scalar_value(),
            l_gan_d: d_loss.scalar_value(),
            l_pi: rl_parts.as_ref().map_or(0.0, |p| p.pi.scalar_value()),
            l_value: rl_parts.as_ref().map_or(0.0, |p| p.value.scalar_value()),
            l_rl: rl_parts.as_ref().map_or(0.0, |p| p.total.scalar_value()),
            l_total: total.scalar_value(),
            window_applied: boundary,
            measured_psnr,
            reward,
        };
        if let Some(component) = report.non_finite_component() {
            return Err(Error::NonFinite { iteration: iter, component: component.into() });
        }
        log.write_all(report.to_json_line().as_bytes())?;
        log.write_all(b"\n")?;
        reports.push(report);

        if cfg.checkpoint_interval > 0 && iter % cfg.checkpoint_interval == 0 {
            generator.save(&cfg.checkpoint_path)?;
        }
        if iter % 100 == 0 {
            eprintln!("iter {iter}/{}", cfg.iters);
        }
    }
    generator.save(&cfg.checkpoint_path)?;
    log.flush()?;
    Ok(TrainOutcome { reports })
}
