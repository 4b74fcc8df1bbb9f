//! Batch normalization over (N,C,H,W) with per-channel affine parameters and
//! running statistics for inference.
//!
//! Normalization uses biased batch variance; running statistics are an
//! exponential moving average of the batch statistics. Statistics are
//! accumulated in f64 regardless of the tensor scalar type.

use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use std::sync::RwLock;

pub struct BatchNormState<S: Scalar> {
    running_mean: RwLock<Vec<S>>,
    running_var: RwLock<Vec<S>>,
    pub momentum: f64,
    pub eps: f64,
}

impl<S: Scalar> BatchNormState<S> {
    pub fn new(channels: usize) -> Self {
        BatchNormState {
            running_mean: RwLock::new(vec![S::zero(); channels]),
            running_var: RwLock::new(vec![S::one(); channels]),
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn channels(&self) -> usize {
        self.running_mean.read().unwrap().len()
    }

    pub fn running_mean(&self) -> Vec<S> {
        self.running_mean.read().unwrap().clone()
    }

    pub fn running_var(&self) -> Vec<S> {
        self.running_var.read().unwrap().clone()
    }

    pub fn set_running(&self, mean: &[S], var: &[S]) {
        self.running_mean.write().unwrap().copy_from_slice(mean);
        self.running_var.write().unwrap().copy_from_slice(var);
    }

    fn update(&self, batch_mean: &[f64], batch_var: &[f64]) {
        let m = self.momentum;
        let mut rm = self.running_mean.write().unwrap();
        let mut rv = self.running_var.write().unwrap();
        for (r, &b) in rm.iter_mut().zip(batch_mean) {
            *r = S::from_f64((1.0 - m) * r.to_f64_() + m * b);
        }
        for (r, &b) in rv.iter_mut().zip(batch_var) {
            *r = S::from_f64((1.0 - m) * r.to_f64_() + m * b);
        }
    }
}

/// Batch normalization. Training mode normalizes by batch statistics over
/// N*H*W per channel (requires at least 2 elements) and updates the running
/// statistics; eval mode normalizes by the stored running statistics.
pub fn batch_norm<S: Scalar>(
    x: &Tensor<S>,
    gamma: &Tensor<S>,
    beta: &Tensor<S>,
    state: &BatchNormState<S>,
    training: bool,
) -> Result<Tensor<S>> {
    let (n, c, h, w) = match *x.shape() {
        [n, c, h, w] => (n, c, h, w),
        _ => {
            return Err(Error::Shape {
                op: "batch_norm",
                message: format!("input must be (N,C,H,W), got {:?}", x.shape()),
            })
        }
    };
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(Error::Shape {
            op: "batch_norm",
            message: format!(
                "gamma {:?} / beta {:?} must both be ({c})",
                gamma.shape(),
                beta.shape()
            ),
        });
    }
    if state.channels() != c {
        return Err(Error::Shape {
            op: "batch_norm",
            message: format!("state holds {} channels, input has {c}", state.channels()),
        });
    }
    let plane = h * w;
    let m = n * plane;
    let eps = state.eps;

    let xd = x.data();
    let gd = gamma.data();
    let bd = beta.data();

    let (mean, var): (Vec<f64>, Vec<f64>) = if training {
        if m < 2 {
            return Err(Error::InvalidInput {
                op: "batch_norm",
                message: format!(
                    "training-mode statistics undefined over a single element (N*H*W = {m})"
                ),
            });
        }
        let mut mean = vec![0.0f64; c];
        let mut var = vec![0.0f64; c];
        for ci in 0..c {
            let mut acc = 0.0f64;
            for ni in 0..n {
                let base = (ni * c + ci) * plane;
                for &v in &xd[base..base + plane] {
                    acc += v.to_f64_();
                }
            }
            let mu = acc / m as f64;
            let mut sq = 0.0f64;
            for ni in 0..n {
                let base = (ni * c + ci) * plane;
                for &v in &xd[base..base + plane] {
                    let d = v.to_f64_() - mu;
                    sq += d * d;
                }
            }
            mean[ci] = mu;
            var[ci] = sq / m as f64;
        }
        state.update(&mean, &var);
        (mean, var)
    } else {
        (
            state.running_mean().iter().map(|v| v.to_f64_()).collect(),
            state.running_var().iter().map(|v| v.to_f64_()).collect(),
        )
    };

    let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + eps).sqrt()).collect();
    let mut out = vec![S::zero(); xd.len()];
    for ni in 0..n {
        for ci in 0..c {
            let base = (ni * c + ci) * plane;
            let (mu, ist) = (mean[ci], inv_std[ci]);
            let (g, b) = (gd[ci].to_f64_(), bd[ci].to_f64_());
            for (o, &v) in out[base..base + plane].iter_mut().zip(&xd[base..base + plane]) {
                *o = S::from_f64((v.to_f64_() - mu) * ist * g + b);
            }
        }
    }

    let total = xd.len();
    Ok(Tensor::from_op(
        out,
        x.shape().to_vec(),
        vec![x.clone(), gamma.clone(), beta.clone()],
        Box::new(move |gr| {
            let mut gx = vec![S::zero(); total];
            let mut ggamma = vec![S::zero(); c];
            let mut gbeta = vec![S::zero(); c];
            for ci in 0..c {
                let (mu, ist) = (mean[ci], inv_std[ci]);
                let gv = gd[ci].to_f64_();
                let mut sum_g = 0.0f64;
                let mut sum_g_xhat = 0.0f64;
                let mut sum_dxhat = 0.0f64;
                let mut sum_dxhat_xc = 0.0f64;
                for ni in 0..n {
                    let base = (ni * c + ci) * plane;
                    for i in base..base + plane {
                        let g = gr[i].to_f64_();
                        let xc = xd[i].to_f64_() - mu;
                        let dxhat = g * gv;
                        sum_g += g;
                        sum_g_xhat += g * xc * ist;
                        sum_dxhat += dxhat;
                        sum_dxhat_xc += dxhat * xc;
                    }
                }
                ggamma[ci] = S::from_f64(sum_g_xhat);
                gbeta[ci] = S::from_f64(sum_g);
                if training {
                    let mf = m as f64;
                    let dvar = sum_dxhat_xc * -0.5 * ist * ist * ist;
                    let dmean = -ist * sum_dxhat; // sum of -2*(x-mu) is zero
                    for ni in 0..n {
                        let base = (ni * c + ci) * plane;
                        for i in base..base + plane {
                            let g = gr[i].to_f64_();
                            let xc = xd[i].to_f64_() - mu;
                            let d = g * gv * ist + dvar * 2.0 * xc / mf + dmean / mf;
                            gx[i] = S::from_f64(d);
                        }
                    }
                } else {
                    for ni in 0..n {
                        let base = (ni * c + ci) * plane;
                        for i in base..base + plane {
                            gx[i] = S::from_f64(gr[i].to_f64_() * gv * ist);
                        }
                    }
                }
            }
            vec![Some(gx), Some(ggamma), Some(gbeta)]
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{check_gradients, GradCheckConfig};
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn randn(rng: &mut ChaCha20Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()
    }

    #[test]
    fn train_mode_standardizes_per_channel() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let (n, c, h, w) = (4, 3, 6, 6);
        let x = Tensor::<f64>::from_vec(randn(&mut rng, n * c * h * w), &[n, c, h, w]).unwrap();
        let gamma = Tensor::<f64>::from_vec(vec![1.0; c], &[c]).unwrap();
        let beta = Tensor::<f64>::from_vec(vec![0.0; c], &[c]).unwrap();
        let state = BatchNormState::new(c);
        let y = batch_norm(&x, &gamma, &beta, &state, true).unwrap();
        let yd = y.to_f64_vec();
        let plane = h * w;
        let m = (n * plane) as f64;
        for ci in 0..c {
            let mut mean = 0.0;
            let mut var = 0.0;
            for ni in 0..n {
                let base = (ni * c + ci) * plane;
                for &v in &yd[base..base + plane] {
                    mean += v;
                }
            }
            mean /= m;
            for ni in 0..n {
                let base = (ni * c + ci) * plane;
                for &v in &yd[base..base + plane] {
                    var += (v - mean) * (v - mean);
                }
            }
            var /= m;
            assert!(mean.abs() < 1e-6, "channel {ci} mean {mean}");
            assert!((var - 1.0).abs() < 1e-4, "channel {ci} var {var}");
        }
    }

    #[test]
    fn already_standardized_input_passes_through() {
        // Mean-0, variance-1 channel: output differs only by the eps shrink.
        let vals = vec![-1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0];
        let x = Tensor::<f64>::from_vec(vals.clone(), &[2, 1, 2, 2]).unwrap();
        let gamma = Tensor::<f64>::from_vec(vec![1.0], &[1]).unwrap();
        let beta = Tensor::<f64>::from_vec(vec![0.0], &[1]).unwrap();
        let state = BatchNormState::new(1);
        let y = batch_norm(&x, &gamma, &beta, &state, true).unwrap();
        for (a, b) in y.to_f64_vec().iter().zip(&vals) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn zero_gamma_yields_beta() {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let x = Tensor::<f64>::from_vec(randn(&mut rng, 16), &[2, 2, 2, 2]).unwrap();
        let gamma = Tensor::<f64>::from_vec(vec![0.0, 0.0], &[2]).unwrap();
        let beta = Tensor::<f64>::from_vec(vec![0.7, -0.3], &[2]).unwrap();
        let state = BatchNormState::new(2);
        let y = batch_norm(&x, &gamma, &beta, &state, true).unwrap();
        let yd = y.to_f64_vec();
        for ni in 0..2 {
            for (ci, expect) in [(0usize, 0.7), (1usize, -0.3)] {
                let base = (ni * 2 + ci) * 4;
                for &v in &yd[base..base + 4] {
                    assert_eq!(v, expect);
                }
            }
        }
    }

    #[test]
    fn single_element_training_batch_is_rejected() {
        let x = Tensor::<f64>::from_vec(vec![1.0], &[1, 1, 1, 1]).unwrap();
        let gamma = Tensor::<f64>::from_vec(vec![1.0], &[1]).unwrap();
        let beta = Tensor::<f64>::from_vec(vec![0.0], &[1]).unwrap();
        let state = BatchNormState::new(1);
        assert!(batch_norm(&x, &gamma, &beta, &state, true).is_err());
        // Eval mode has no such restriction.
        assert!(batch_norm(&x, &gamma, &beta, &state, false).is_ok());
    }

    #[test]
    fn eval_mode_uses_running_statistics() {
        let gamma = Tensor::<f64>::from_vec(vec![1.0], &[1]).unwrap();
        let beta = Tensor::<f64>::from_vec(vec![0.0], &[1]).unwrap();
        let state = BatchNormState::new(1);
        state.set_running(&[2.0], &[4.0]);
        let x = Tensor::<f64>::from_vec(vec![4.0, 0.0], &[2, 1, 1, 1]).unwrap();
        let y = batch_norm(&x, &gamma, &beta, &state, false).unwrap();
        let yd = y.to_f64_vec();
        // (4-2)/sqrt(4+eps) ~ 1, (0-2)/sqrt(4+eps) ~ -1
        assert!((yd[0] - 1.0).abs() < 1e-5);
        assert!((yd[1] + 1.0).abs() < 1e-5);
    }

    #[test]
    fn running_statistics_move_toward_batch_statistics() {
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        let x = Tensor::<f64>::from_vec(
            randn(&mut rng, 64).iter().map(|v| v + 5.0).collect(),
            &[4, 1, 4, 4],
        )
        .unwrap();
        let gamma = Tensor::<f64>::from_vec(vec![1.0], &[1]).unwrap();
        let beta = Tensor::<f64>::from_vec(vec![0.0], &[1]).unwrap();
        let state = BatchNormState::new(1);
        batch_norm(&x, &gamma, &beta, &state, true).unwrap();
        let rm = state.running_mean()[0];
        assert!(rm > 0.3 && rm < 0.7, "running mean moved 10% toward ~5, got {rm}");
    }

    #[test]
    fn train_mode_gradients_match_finite_differences() {
        let mut rng = ChaCha20Rng::seed_from_u64(14);
        let x = Tensor::<f64>::param(randn(&mut rng, 2 * 2 * 3 * 3), &[2, 2, 3, 3]).unwrap();
        let gamma = Tensor::<f64>::param(vec![1.2, 0.8], &[2]).unwrap();
        let beta = Tensor::<f64>::param(vec![0.1, -0.2], &[2]).unwrap();
        let report = check_gradients(
            &[x, gamma, beta],
            |ins| {
                let state = BatchNormState::new(2);
                batch_norm(&ins[0], &ins[1], &ins[2], &state, true)?.square()?.mean_all()
            },
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-4, "rel err {}", report.max_rel_err);
    }

    #[test]
    fn eval_mode_gradients_match_finite_differences() {
        let mut rng = ChaCha20Rng::seed_from_u64(15);
        let x = Tensor::<f64>::param(randn(&mut rng, 2 * 2 * 3 * 3), &[2, 2, 3, 3]).unwrap();
        let gamma = Tensor::<f64>::param(vec![1.2, 0.8], &[2]).unwrap();
        let beta = Tensor::<f64>::param(vec![0.1, -0.2], &[2]).unwrap();
        let report = check_gradients(
            &[x, gamma, beta],
            |ins| {
                let state = BatchNormState::new(2);
                state.set_running(&[0.3, -0.1], &[1.5, 0.5]);
                batch_norm(&ins[0], &ins[1], &ins[2], &state, false)?.square()?.mean_all()
            },
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-4, "rel err {}", report.max_rel_err);
    }
}
