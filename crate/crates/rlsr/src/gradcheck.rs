//! Central finite-difference gradient checking.
//!
//! The oracle evaluates the loss function twice per probed coordinate and
//! never touches the backward pass, so it stays independent of the
//! implementation it verifies. Meaningful at `f64`; at `f32` the probe step
//! drowns in rounding noise.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{no_grad, Tensor};
use rand::seq::index::sample;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub struct GradCheckConfig {
    /// Central difference step h: (f(x+h) - f(x-h)) / 2h.
    pub step: f64,
    /// Cap on probed coordinates per tensor; 0 probes every coordinate.
    pub max_coords_per_tensor: usize,
    /// Seed for coordinate subsampling when a cap is set.
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { step: 1e-5, max_coords_per_tensor: 0, seed: 0x5EED }
    }
}

#[derive(Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub coords_checked: usize,
}

/// Relative error with an absolute floor of 1 so near-zero gradients are
/// compared absolutely.
fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

/// Compare backward gradients of `f` against central finite differences for
/// every listed input. Inputs must be `requires_grad` leaves; their values
/// are perturbed in place and restored.
pub fn check_gradients<S: Scalar, F>(
    inputs: &[Tensor<S>],
    f: F,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor<S>]) -> Result<Tensor<S>>,
{
    for t in inputs {
        if !t.requires_grad() {
            return Err(Error::InvalidInput {
                op: "check_gradients",
                message: "every checked input must be constructed as a parameter".into(),
            });
        }
        t.zero_grad();
    }
    let loss = f(inputs)?;
    if loss.len() != 1 {
        return Err(Error::InvalidInput {
            op: "check_gradients",
            message: format!("loss must be scalar, got {:?}", loss.shape()),
        });
    }
    loss.backward()?;
    let analytic: Vec<Vec<S>> = inputs
        .iter()
        .map(|t| {
            t.grad().ok_or(Error::MissingGrad(format!("gradcheck input of shape {:?}", t.shape())))
        })
        .collect::<Result<_>>()?;

    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let h = cfg.step;
    let mut max_rel = 0.0f64;
    let mut checked = 0usize;
    for (t, grads) in inputs.iter().zip(&analytic) {
        let n = t.len();
        let coords: Vec<usize> =
            if cfg.max_coords_per_tensor == 0 || n <= cfg.max_coords_per_tensor {
                (0..n).collect()
            } else {
                let mut v = sample(&mut rng, n, cfg.max_coords_per_tensor).into_vec();
                v.sort_unstable();
                v
            };
        for i in coords {
            let orig = t.data()[i];
            let probe = |value: f64| -> Result<f64> {
                t.set_data_with(|d| d[i] = S::from_f64(value));
                let out = no_grad(|| f(inputs))?;
                Ok(out.scalar_value())
            };
            let x = orig.to_f64_();
            let plus = probe(x + h)?;
            let minus = probe(x - h)?;
            t.set_data_with(|d| d[i] = orig);
            let numeric = (plus - minus) / (2.0 * h);
            let a = grads[i].to_f64_();
            max_rel = max_rel.max(rel_err(a, numeric));
            checked += 1;
        }
    }
    Ok(GradCheckReport { max_rel_err: max_rel, coords_checked: checked })
}
