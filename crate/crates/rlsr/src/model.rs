//! The super-resolution generator (encoder + decoder + action head) and the
//! discriminator.
//!
//! Generator: a 9x9 head conv with PReLU, a stack of residual blocks
//! (conv-BN-PReLU-conv-BN plus identity skip), a 3x3 tail conv joined to the
//! head activation by a long skip, then log2(r) upsampling stages
//! (3x3 conv to 4x width, pixel shuffle, PReLU) and a 9x9 output conv with a
//! sigmoid squash into [0,1]. The action head global-average-pools the
//! encoder features into a fully connected layer that emits a predicted-PSNR
//! mean and a value baseline; a free log-std parameter (clamped to [-5, 2])
//! completes the Gaussian policy.
//!
//! Discriminator: six 3x3 convs of doubling width alternating stride 1 and 2,
//! LeakyReLU (0.2) throughout, no normalization, then one fully connected
//! layer and a sigmoid.

use crate::error::{Error, Result};
use crate::rng::{stream_rng, streams};
use crate::scalar::Scalar;
use crate::tensor::{
    batch_norm, kaiming_uniform, load_checkpoint, save_checkpoint, BatchNormState,
    CheckpointEntry, Tensor,
};
use rand_chacha::ChaCha20Rng;
use std::collections::BTreeMap;
use std::path::Path;

/// Smallest spatial extent the encoder accepts.
pub const MIN_INPUT_DIM: usize = 16;
const LOG_STD_RANGE: (f64, f64) = (-5.0, 2.0);
const LOG_STD_INIT: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeneratorConfig {
    pub in_channels: usize,
    pub features: usize,
    pub res_blocks: usize,
    /// Upscale factor; must be a power of two >= 2.
    pub scale: usize,
}

impl Default for GeneratorConfig {
    /// Desk-scale defaults trainable in minutes on one CPU core.
    fn default() -> Self {
        GeneratorConfig { in_channels: 3, features: 32, res_blocks: 2, scale: 4 }
    }
}

impl GeneratorConfig {
    /// The full-size variant (64 feature maps, five residual blocks).
    pub fn full_size() -> Self {
        GeneratorConfig { in_channels: 3, features: 64, res_blocks: 5, scale: 4 }
    }

    /// Micro variant for 64-bit gradient checking.
    pub fn micro() -> Self {
        GeneratorConfig { in_channels: 3, features: 8, res_blocks: 1, scale: 2 }
    }

    fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.features == 0 {
            return Err(Error::Config("channels and features must be positive".into()));
        }
        if self.scale < 2 || !self.scale.is_power_of_two() {
            return Err(Error::Config(format!(
                "scale must be a power of two >= 2, got {}",
                self.scale
            )));
        }
        Ok(())
    }

    fn stages(&self) -> usize {
        self.scale.trailing_zeros() as usize
    }
}

struct Conv2d<S: Scalar> {
    weight: Tensor<S>,
    bias: Tensor<S>,
    stride: usize,
    pad: usize,
}

impl<S: Scalar> Conv2d<S> {
    fn init(rng: &mut ChaCha20Rng, cin: usize, cout: usize, k: usize, stride: usize) -> Self {
        let fan_in = cin * k * k;
        let weight =
            Tensor::param(kaiming_uniform(rng, fan_in, cout * fan_in), &[cout, cin, k, k])
                .expect("conv weight shape");
        let bias = Tensor::param(vec![S::zero(); cout], &[cout]).expect("conv bias shape");
        Conv2d { weight, bias, stride, pad: k / 2 }
    }

    fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        x.conv2d(&self.weight, Some(&self.bias), self.stride, self.pad)
    }

    fn push_params(&self, prefix: &str, out: &mut Vec<(String, Tensor<S>)>) {
        out.push((format!("{prefix}.weight"), self.weight.clone()));
        out.push((format!("{prefix}.bias"), self.bias.clone()));
    }
}

struct BatchNorm<S: Scalar> {
    gamma: Tensor<S>,
    beta: Tensor<S>,
    state: BatchNormState<S>,
}

impl<S: Scalar> BatchNorm<S> {
    fn init(channels: usize) -> Self {
        BatchNorm {
            gamma: Tensor::param(vec![S::one(); channels], &[channels]).expect("bn gamma"),
            beta: Tensor::param(vec![S::zero(); channels], &[channels]).expect("bn beta"),
            state: BatchNormState::new(channels),
        }
    }

    fn forward(&self, x: &Tensor<S>, training: bool) -> Result<Tensor<S>> {
        batch_norm(x, &self.gamma, &self.beta, &self.state, training)
    }

    fn push_params(&self, prefix: &str, out: &mut Vec<(String, Tensor<S>)>) {
        out.push((format!("{prefix}.gamma"), self.gamma.clone()));
        out.push((format!("{prefix}.beta"), self.beta.clone()));
    }
}

struct PRelu<S: Scalar> {
    slope: Tensor<S>,
}

impl<S: Scalar> PRelu<S> {
    fn init(channels: usize) -> Self {
        PRelu {
            slope: Tensor::param(vec![S::from_f64(0.25); channels], &[channels])
                .expect("prelu slope"),
        }
    }

    fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        x.prelu(&self.slope)
    }
}

struct ResBlock<S: Scalar> {
    conv1: Conv2d<S>,
    bn1: BatchNorm<S>,
    act: PRelu<S>,
    conv2: Conv2d<S>,
    bn2: BatchNorm<S>,
}

impl<S: Scalar> ResBlock<S> {
    fn init(rng: &mut ChaCha20Rng, f: usize) -> Self {
        ResBlock {
            conv1: Conv2d::init(rng, f, f, 3, 1),
            bn1: BatchNorm::init(f),
            act: PRelu::init(f),
            conv2: Conv2d::init(rng, f, f, 3, 1),
            bn2: BatchNorm::init(f),
        }
    }

    fn forward(&self, x: &Tensor<S>, training: bool) -> Result<Tensor<S>> {
        let y = self.bn1.forward(&self.conv1.forward(x)?, training)?;
        let y = self.act.forward(&y)?;
        let y = self.bn2.forward(&self.conv2.forward(&y)?, training)?;
        y.add(x)
    }
}

/// Per-item policy tensors, each still attached to the graph.
pub struct PolicyTensors<S: Scalar> {
    /// Predicted-PSNR mean, shape (N, 1).
    pub mean: Tensor<S>,
    /// Value baseline, shape (N, 1).
    pub value: Tensor<S>,
    /// Scalar log standard deviation, clamped to [-5, 2].
    pub log_std: Tensor<S>,
}

pub struct Generator<S: Scalar> {
    cfg: GeneratorConfig,
    head: Conv2d<S>,
    head_act: PRelu<S>,
    blocks: Vec<ResBlock<S>>,
    tail: Conv2d<S>,
    up: Vec<(Conv2d<S>, PRelu<S>)>,
    out: Conv2d<S>,
    fc_weight: Tensor<S>,
    fc_bias: Tensor<S>,
    log_std: Tensor<S>,
}

impl<S: Scalar> Generator<S> {
    pub fn new(cfg: GeneratorConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = stream_rng(seed, streams::GENERATOR_INIT);
        let (c, f) = (cfg.in_channels, cfg.features);
        let head = Conv2d::init(&mut rng, c, f, 9, 1);
        let head_act = PRelu::init(f);
        let blocks = (0..cfg.res_blocks).map(|_| ResBlock::init(&mut rng, f)).collect();
        let tail = Conv2d::init(&mut rng, f, f, 3, 1);
        let up = (0..cfg.stages())
            .map(|_| (Conv2d::init(&mut rng, f, 4 * f, 3, 1), PRelu::init(f)))
            .collect();
        let out = Conv2d::init(&mut rng, f, c, 9, 1);
        let fc_weight =
            Tensor::param(kaiming_uniform(&mut rng, f, f * 2), &[f, 2]).expect("fc weight");
        let fc_bias = Tensor::param(vec![S::zero(); 2], &[2]).expect("fc bias");
        // Wide initial exploration: the policy-gradient contribution to the
        // mean head scales with 1/sigma^2, so a narrow starting distribution
        // turns early window boundaries into optimizer-destabilizing gradient
        // spikes through the shared encoder.
        let log_std = Tensor::param(vec![S::from_f64(LOG_STD_INIT); 1], &[1]).expect("log_std");
        Ok(Generator { cfg, head, head_act, blocks, tail, up, out, fc_weight, fc_bias, log_std })
    }

    pub fn config(&self) -> GeneratorConfig {
        self.cfg
    }

    fn check_input(&self, x: &Tensor<S>) -> Result<()> {
        match *x.shape() {
            [_, c, h, w] => {
                if c != self.cfg.in_channels {
                    return Err(Error::Shape {
                        op: "generator",
                        message: format!("expected {} channels, got {c}", self.cfg.in_channels),
                    });
                }
                if h < MIN_INPUT_DIM || w < MIN_INPUT_DIM {
                    return Err(Error::InvalidInput {
                        op: "generator",
                        message: format!(
                            "input {h}x{w} below minimum {MIN_INPUT_DIM}x{MIN_INPUT_DIM}"
                        ),
                    });
                }
                Ok(())
            }
            _ => Err(Error::Shape {
                op: "generator",
                message: format!("input must be (N,C,H,W), got {:?}", x.shape()),
            }),
        }
    }

    /// Encoder features plus the pooled policy head.
    pub fn encode(&self, x: &Tensor<S>, training: bool) -> Result<(Tensor<S>, PolicyTensors<S>)> {
        self.check_input(x)?;
        let head = self.head_act.forward(&self.head.forward(x)?)?;
        let mut y = head.clone();
        for b in &self.blocks {
            y = b.forward(&y, training)?;
        }
        let features = self.tail.forward(&y)?.add(&head)?;

        let pooled = features.mean_spatial()?; // (N, F)
        let fc = pooled.matmul(&self.fc_weight)?.add_row_bias(&self.fc_bias)?; // (N, 2)
        let mean = fc.narrow(1, 0, 1)?;
        let value = fc.narrow(1, 1, 1)?;
        let log_std = self.log_std.clamp(LOG_STD_RANGE.0, LOG_STD_RANGE.1)?;
        Ok((features, PolicyTensors { mean, value, log_std }))
    }

    /// Upsample encoder features by the configured factor into [0,1] pixels.
    pub fn decode(&self, features: &Tensor<S>) -> Result<Tensor<S>> {
        let mut y = features.clone();
        for (conv, act) in &self.up {
            y = act.forward(&conv.forward(&y)?.pixel_shuffle(2)?)?;
        }
        self.out.forward(&y)?.sigmoid()
    }

    /// Full pass: (N,C,h,w) -> ((N,C,r*h,r*w), policy).
    pub fn forward(&self, x: &Tensor<S>, training: bool) -> Result<(Tensor<S>, PolicyTensors<S>)> {
        let (features, policy) = self.encode(x, training)?;
        Ok((self.decode(&features)?, policy))
    }

    /// Trainable parameters in a stable order with stable names.
    pub fn parameters(&self) -> Vec<(String, Tensor<S>)> {
        let mut out = Vec::new();
        self.head.push_params("head", &mut out);
        out.push(("head_act.slope".into(), self.head_act.slope.clone()));
        for (i, b) in self.blocks.iter().enumerate() {
            b.conv1.push_params(&format!("rb{i}.conv1"), &mut out);
            b.bn1.push_params(&format!("rb{i}.bn1"), &mut out);
            out.push((format!("rb{i}.act.slope"), b.act.slope.clone()));
            b.conv2.push_params(&format!("rb{i}.conv2"), &mut out);
            b.bn2.push_params(&format!("rb{i}.bn2"), &mut out);
        }
        self.tail.push_params("tail", &mut out);
        for (i, (conv, act)) in self.up.iter().enumerate() {
            conv.push_params(&format!("up{i}.conv"), &mut out);
            out.push((format!("up{i}.act.slope"), act.slope.clone()));
        }
        self.out.push_params("out", &mut out);
        out.push(("policy.fc.weight".into(), self.fc_weight.clone()));
        out.push(("policy.fc.bias".into(), self.fc_bias.clone()));
        out.push(("policy.log_std".into(), self.log_std.clone()));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|(_, t)| t.len()).sum()
    }

    fn bn_states(&self) -> Vec<(String, &BatchNormState<S>)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            out.push((format!("rb{i}.bn1"), &b.bn1.state));
            out.push((format!("rb{i}.bn2"), &b.bn2.state));
        }
        out
    }

    fn config_kv(&self) -> BTreeMap<String, String> {
        let mut kv = BTreeMap::new();
        kv.insert("model".into(), "generator-v1".into());
        kv.insert("in_channels".into(), self.cfg.in_channels.to_string());
        kv.insert("features".into(), self.cfg.features.to_string());
        kv.insert("res_blocks".into(), self.cfg.res_blocks.to_string());
        kv.insert("scale".into(), self.cfg.scale.to_string());
        kv
    }

    fn to_entries(&self) -> Vec<CheckpointEntry> {
        let mut entries = Vec::new();
        for (name, t) in self.parameters() {
            entries.push(CheckpointEntry {
                name,
                shape: t.shape().to_vec(),
                data: t.data().iter().map(|v| v.to_f64_() as f32).collect(),
            });
        }
        for (name, state) in self.bn_states() {
            let mean: Vec<f32> = state.running_mean().iter().map(|v| v.to_f64_() as f32).collect();
            let var: Vec<f32> = state.running_var().iter().map(|v| v.to_f64_() as f32).collect();
            entries.push(CheckpointEntry {
                name: format!("{name}.running_mean"),
                shape: vec![mean.len()],
                data: mean,
            });
            entries.push(CheckpointEntry {
                name: format!("{name}.running_var"),
                shape: vec![var.len()],
                data: var,
            });
        }
        entries
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        save_checkpoint(path, &self.config_kv(), &self.to_entries())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let (kv, entries) = load_checkpoint(path)?;
        let get = |key: &str| -> Result<usize> {
            kv.get(key)
                .ok_or_else(|| Error::Checkpoint(format!("missing config key '{key}'")))?
                .parse()
                .map_err(|_| Error::Checkpoint(format!("config key '{key}' is not a number")))
        };
        if kv.get("model").map(String::as_str) != Some("generator-v1") {
            return Err(Error::Checkpoint("not a generator checkpoint".into()));
        }
        let cfg = GeneratorConfig {
            in_channels: get("in_channels")?,
            features: get("features")?,
            res_blocks: get("res_blocks")?,
            scale: get("scale")?,
        };
        let model = Generator::new(cfg, 0)?;
        let mut by_name: BTreeMap<String, CheckpointEntry> =
            entries.into_iter().map(|e| (e.name.clone(), e)).collect();
        for (name, t) in model.parameters() {
            let e = by_name
                .remove(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter '{name}'")))?;
            if e.shape != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter '{name}' shape {:?} does not match model {:?}",
                    e.shape,
                    t.shape()
                )));
            }
            let values: Vec<S> = e.data.iter().map(|&v| S::from_f64(v as f64)).collect();
            t.set_data(&values);
        }
        for (name, state) in model.bn_states() {
            let mean = by_name
                .remove(&format!("{name}.running_mean"))
                .ok_or_else(|| Error::Checkpoint(format!("missing '{name}.running_mean'")))?;
            let var = by_name
                .remove(&format!("{name}.running_var"))
                .ok_or_else(|| Error::Checkpoint(format!("missing '{name}.running_var'")))?;
            let m: Vec<S> = mean.data.iter().map(|&v| S::from_f64(v as f64)).collect();
            let v: Vec<S> = var.data.iter().map(|&v| S::from_f64(v as f64)).collect();
            if m.len() != state.channels() || v.len() != state.channels() {
                return Err(Error::Checkpoint(format!("'{name}' running stats wrong length")));
            }
            state.set_running(&m, &v);
        }
        if let Some(stray) = by_name.keys().next() {
            return Err(Error::Checkpoint(format!("unexpected entry '{stray}'")));
        }
        Ok(model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiscriminatorConfig {
    pub in_channels: usize,
    pub base_width: usize,
    /// Spatial extent of training patches; fixes the fully connected width.
    pub patch_size: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig { in_channels: 3, base_width: 32, patch_size: 64 }
    }
}

impl DiscriminatorConfig {
    pub fn micro() -> Self {
        DiscriminatorConfig { in_channels: 3, base_width: 8, patch_size: 16 }
    }
}

pub struct Discriminator<S: Scalar> {
    cfg: DiscriminatorConfig,
    convs: Vec<Conv2d<S>>,
    fc_weight: Tensor<S>,
    fc_bias: Tensor<S>,
}

impl<S: Scalar> Discriminator<S> {
    pub fn new(cfg: DiscriminatorConfig, seed: u64) -> Result<Self> {
        if cfg.in_channels == 0 || cfg.base_width == 0 {
            return Err(Error::Config("channels and width must be positive".into()));
        }
        if cfg.patch_size % 8 != 0 || cfg.patch_size == 0 {
            return Err(Error::Config(format!(
                "patch size must be a positive multiple of 8, got {}",
                cfg.patch_size
            )));
        }
        let mut rng = stream_rng(seed, streams::DISCRIMINATOR_INIT);
        let w = cfg.base_width;
        let plan = [
            (cfg.in_channels, w, 1),
            (w, w, 2),
            (w, 2 * w, 1),
            (2 * w, 2 * w, 2),
            (2 * w, 4 * w, 1),
            (4 * w, 4 * w, 2),
        ];
        let convs =
            plan.iter().map(|&(ci, co, s)| Conv2d::init(&mut rng, ci, co, 3, s)).collect();
        let flat = 4 * w * (cfg.patch_size / 8) * (cfg.patch_size / 8);
        let fc_weight =
            Tensor::param(kaiming_uniform(&mut rng, flat, flat), &[flat, 1]).expect("fc weight");
        let fc_bias = Tensor::param(vec![S::zero(); 1], &[1]).expect("fc bias");
        Ok(Discriminator { cfg, convs, fc_weight, fc_bias })
    }

    pub fn config(&self) -> DiscriminatorConfig {
        self.cfg
    }

    /// Per-item real-image probability, shape (N, 1), strictly inside (0,1).
    pub fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        match *x.shape() {
            [_, c, h, w] => {
                if c != self.cfg.in_channels || h != self.cfg.patch_size || w != self.cfg.patch_size
                {
                    return Err(Error::Shape {
                        op: "discriminator",
                        message: format!(
                            "expected (N,{},{},{}), got {:?}",
                            self.cfg.in_channels, self.cfg.patch_size, self.cfg.patch_size,
                            x.shape()
                        ),
                    });
                }
            }
            _ => {
                return Err(Error::Shape {
                    op: "discriminator",
                    message: format!("input must be (N,C,H,W), got {:?}", x.shape()),
                })
            }
        }
        let mut y = x.clone();
        for conv in &self.convs {
            y = conv.forward(&y)?.leaky_relu(0.2)?;
        }
        let n = y.shape()[0];
        let flat = y.len() / n;
        let z = y.reshape(&[n, flat])?;
        z.matmul(&self.fc_weight)?.add_row_bias(&self.fc_bias)?.sigmoid()
    }

    pub fn parameters(&self) -> Vec<(String, Tensor<S>)> {
        let mut out = Vec::new();
        for (i, c) in self.convs.iter().enumerate() {
            c.push_params(&format!("d.conv{i}"), &mut out);
        }
        out.push(("d.fc.weight".into(), self.fc_weight.clone()));
        out.push(("d.fc.bias".into(), self.fc_bias.clone()));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|(_, t)| t.len()).sum()
    }
}
