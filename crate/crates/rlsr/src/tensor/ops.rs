//! Differentiable operations: elementwise math, activations, reductions,
//! shape movement and matrix products.
//!
//! Every op validates shapes up front and returns a graph-connected tensor;
//! backward rules are closures over value snapshots taken at call time.

use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use std::sync::Arc;

fn check_same_shape<S: Scalar>(op: &'static str, a: &Tensor<S>, b: &Tensor<S>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape {
            op,
            message: format!("operand shapes {:?} and {:?} differ", a.shape(), b.shape()),
        });
    }
    Ok(())
}

fn rank4<S: Scalar>(op: &'static str, t: &Tensor<S>) -> Result<(usize, usize, usize, usize)> {
    match *t.shape() {
        [n, c, h, w] => Ok((n, c, h, w)),
        _ => Err(Error::Shape {
            op,
            message: format!("expected rank-4 (N,C,H,W) tensor, got {:?}", t.shape()),
        }),
    }
}

impl<S: Scalar> Tensor<S> {
    pub fn add(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        check_same_shape("add", self, rhs)?;
        let (a, b) = (self.data(), rhs.data());
        let out: Vec<S> = a.iter().zip(b.iter()).map(|(&x, &y)| x + y).collect();
        Ok(Tensor::from_op(
            out,
            self.shape().to_vec(),
            vec![self.clone(), rhs.clone()],
            Box::new(|g| vec![Some(g.to_vec()), Some(g.to_vec())]),
        ))
    }

    pub fn sub(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        check_same_shape("sub", self, rhs)?;
        let (a, b) = (self.data(), rhs.data());
        let out: Vec<S> = a.iter().zip(b.iter()).map(|(&x, &y)| x - y).collect();
        Ok(Tensor::from_op(
            out,
            self.shape().to_vec(),
            vec![self.clone(), rhs.clone()],
            Box::new(|g| {
                vec![Some(g.to_vec()), Some(g.iter().map(|&v| -v).collect())]
            }),
        ))
    }

    /// Elementwise product.
    pub fn mul(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        check_same_shape("mul", self, rhs)?;
        let (a, b) = (self.data(), rhs.data());
        let out: Vec<S> = a.iter().zip(b.iter()).map(|(&x, &y)| x * y).collect();
        Ok(Tensor::from_op(
            out,
            self.shape().to_vec(),
            vec![self.clone(), rhs.clone()],
            Box::new(move |g| {
                let ga: Vec<S> = g.iter().zip(b.iter()).map(|(&gv, &y)| gv * y).collect();
                let gb: Vec<S> = g.iter().zip(a.iter()).map(|(&gv, &x)| gv * x).collect();
                vec![Some(ga), Some(gb)]
            }),
        ))
    }

    pub fn neg(&self) -> Result<Tensor<S>> {
        let a = self.data();
        let out: Vec<S> = a.iter().map(|&x| -x).collect();
        Ok(Tensor::from_op(
            out,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(|g| vec![Some(g.iter().map(|&v| -v).collect())]),
        ))
    }

    /// Multiply by a compile-time constant.
    pub fn scale(&self, c: f64) -> Result<Tensor<S>> {
        let k = S::from_f64(c);
        let a = self.data();
        let out: Vec<S> = a.iter().map(|&x| x * k).collect();
        Ok(Tensor::from_op(
            out,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(move |g| vec![Some(g.iter().map(|&v| v * k).collect())]),
        ))
    }

    pub fn add_scalar(&self, c: f64) -> Result<Tensor<S>> {
        let k = S::from_f64(c);
        let a = self.data();
        let out: Vec<S> = a.iter().map(|&x| x + k).collect();
        Ok(Tensor::from_op(
            out,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(|g| vec![Some(g.to_vec())]),
        ))
    }

    pub fn square(&self) -> Result<Tensor<S>> {
        let a = self.data();
        let out: Vec<S> = a.iter().map(|&x| x * x).collect();
        let two = S::from_f64(2.0);
        Ok(Tensor::from_op(
            out,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(move |g| {
                vec![Some(g.iter().zip(a.iter()).map(|(&gv, &x)| gv * two * x).collect())]
            }),
        ))
    }

    pub fn exp(&self) -> Result<Tensor<S>> {
        let a = self.data();
        let out: Arc<Vec<S>> = Arc::new(a.iter().map(|&x| x.exp()).collect());
        let y = Arc::clone(&out);
        Ok(Tensor::from_op_shared(
            out,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(move |g| {
                vec![Some(g.iter().zip(y.iter()).map(|(&gv, &yv)| gv * yv).collect())]
            }),
        ))
    }

    /// Natural logarithm; rejects non-positive elements.
    pub fn log(&self) -> Result<Tensor<S>> {
        let a = self.data();
        if let Some((index, &value)) = a.iter().enumerate().find(|(_, v)| **v <= S::zero()) {
            return Err(Error::LogDomain { value: value.to_f64_(), index });
        }
        let out: Vec<S> = a.iter().map(|&x| x.ln()).collect();
        Ok(Tensor::from_op(
            out,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(move |g| {
                vec![Some(g.iter().zip(a.iter()).map(|(&gv, &x)| gv / x).collect())]
            }),
        ))
    }

    pub fn sigmoid(&self) -> Result<Tensor<S>> {
        let a = self.data();
        let one = S::one();
        let out: Arc<Vec<S>> = Arc::new(a.iter().map(|&x| one / (one + (-x).exp())).collect());
        let y = Arc::clone(&out);
        Ok(Tensor::from_op_shared(
            out,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(move |g| {
                let one = S::one();
                vec![Some(
                    g.iter().zip(y.iter()).map(|(&gv, &yv)| gv * yv * (one - yv)).collect(),
                )]
            }),
        ))
    }

    pub fn relu(&self) -> Result<Tensor<S>> {
        let a = self.data();
        let out: Vec<S> = a.iter().map(|&x| if x > S::zero() { x } else { S::zero() }).collect();
        Ok(Tensor::from_op(
            out,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(move |g| {
                vec![Some(
                    g.iter()
                        .zip(a.iter())
                        .map(|(&gv, &x)| if x > S::zero() { gv } else { S::zero() })
                        .collect(),
                )]
            }),
        ))
    }

    /// max(x, alpha*x); slope `alpha` is a fixed constant.
    pub fn leaky_relu(&self, alpha: f64) -> Result<Tensor<S>> {
        let k = S::from_f64(alpha);
        let a = self.data();
        let out: Vec<S> = a.iter().map(|&x| if x >= S::zero() { x } else { x * k }).collect();
        Ok(Tensor::from_op(
            out,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(move |g| {
                vec![Some(
                    g.iter()
                        .zip(a.iter())
                        .map(|(&gv, &x)| if x >= S::zero() { gv } else { gv * k })
                        .collect(),
                )]
            }),
        ))
    }

    /// PReLU with one learnable slope per channel (or a single shared slope).
    /// `x` is (N,C,H,W); `slopes` is (C) or (1).
    pub fn prelu(&self, slopes: &Tensor<S>) -> Result<Tensor<S>> {
        let (n, c, h, w) = rank4("prelu", self)?;
        let sc = slopes.len();
        if slopes.shape().len() != 1 || (sc != c && sc != 1) {
            return Err(Error::Shape {
                op: "prelu",
                message: format!("slopes must be (C={c}) or (1), got {:?}", slopes.shape()),
            });
        }
        let x = self.data();
        let a = slopes.data();
        let plane = h * w;
        let mut out = vec![S::zero(); x.len()];
        for ni in 0..n {
            for ci in 0..c {
                let s = a[if sc == 1 { 0 } else { ci }];
                let base = (ni * c + ci) * plane;
                for (&xv, ov) in x[base..base + plane].iter().zip(&mut out[base..base + plane]) {
                    *ov = if xv >= S::zero() { xv } else { xv * s };
                }
            }
        }
        Ok(Tensor::from_op(
            out,
            self.shape().to_vec(),
            vec![self.clone(), slopes.clone()],
            Box::new(move |g| {
                let mut gx = vec![S::zero(); x.len()];
                let mut gs = vec![S::zero(); sc];
                for ni in 0..n {
                    for ci in 0..c {
                        let si = if sc == 1 { 0 } else { ci };
                        let s = a[si];
                        let base = (ni * c + ci) * plane;
                        let mut acc = S::zero();
                        for i in base..base + plane {
                            let xv = x[i];
                            if xv >= S::zero() {
                                gx[i] = g[i];
                            } else {
                                gx[i] = g[i] * s;
                                acc += g[i] * xv;
                            }
                        }
                        gs[si] += acc;
                    }
                }
                vec![Some(gx), Some(gs)]
            }),
        ))
    }

    /// Clamp to [lo, hi]; gradient passes through inside the range
    /// (inclusive) and is zero outside.
    pub fn clamp(&self, lo: f64, hi: f64) -> Result<Tensor<S>> {
        if !(lo <= hi) {
            return Err(Error::InvalidInput {
                op: "clamp",
                message: format!("lo {lo} must not exceed hi {hi}"),
            });
        }
        let (l, h) = (S::from_f64(lo), S::from_f64(hi));
        let a = self.data();
        let out: Vec<S> = a
            .iter()
            .map(|&x| if x < l { l } else if x > h { h } else { x })
            .collect();
        Ok(Tensor::from_op(
            out,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(move |g| {
                vec![Some(
                    g.iter()
                        .zip(a.iter())
                        .map(|(&gv, &x)| if x >= l && x <= h { gv } else { S::zero() })
                        .collect(),
                )]
            }),
        ))
    }

    pub fn sum_all(&self) -> Result<Tensor<S>> {
        let a = self.data();
        let total: f64 = a.iter().map(|v| v.to_f64_()).sum();
        let n = self.len();
        Ok(Tensor::from_op(
            vec![S::from_f64(total)],
            vec![1],
            vec![self.clone()],
            Box::new(move |g| vec![Some(vec![g[0]; n])]),
        ))
    }

    pub fn mean_all(&self) -> Result<Tensor<S>> {
        let n = self.len();
        if n == 0 {
            return Err(Error::InvalidInput { op: "mean_all", message: "empty tensor".into() });
        }
        let a = self.data();
        let total: f64 = a.iter().map(|v| v.to_f64_()).sum();
        let inv = S::from_f64(1.0 / n as f64);
        Ok(Tensor::from_op(
            vec![S::from_f64(total / n as f64)],
            vec![1],
            vec![self.clone()],
            Box::new(move |g| vec![Some(vec![g[0] * inv; n])]),
        ))
    }

    /// Global average pooling: (N,C,H,W) -> (N,C).
    pub fn mean_spatial(&self) -> Result<Tensor<S>> {
        let (n, c, h, w) = rank4("mean_spatial", self)?;
        let plane = h * w;
        if plane == 0 {
            return Err(Error::InvalidInput {
                op: "mean_spatial",
                message: "empty spatial extent".into(),
            });
        }
        let a = self.data();
        let mut out = vec![S::zero(); n * c];
        for (i, o) in out.iter_mut().enumerate() {
            let base = i * plane;
            let sum: f64 = a[base..base + plane].iter().map(|v| v.to_f64_()).sum();
            *o = S::from_f64(sum / plane as f64);
        }
        let inv = S::from_f64(1.0 / plane as f64);
        let total = a.len();
        Ok(Tensor::from_op(
            out,
            vec![n, c],
            vec![self.clone()],
            Box::new(move |g| {
                let mut gx = vec![S::zero(); total];
                for (i, &gv) in g.iter().enumerate() {
                    let v = gv * inv;
                    for o in &mut gx[i * plane..(i + 1) * plane] {
                        *o = v;
                    }
                }
                vec![Some(gx)]
            }),
        ))
    }

    /// Repeat a scalar into a length-`n` vector; backward sums.
    pub fn broadcast_scalar(&self, n: usize) -> Result<Tensor<S>> {
        if self.len() != 1 {
            return Err(Error::Shape {
                op: "broadcast_scalar",
                message: format!("expected scalar, got {:?}", self.shape()),
            });
        }
        let v = self.data()[0];
        Ok(Tensor::from_op(
            vec![v; n],
            vec![n],
            vec![self.clone()],
            Box::new(|g| {
                let total: f64 = g.iter().map(|v| v.to_f64_()).sum();
                vec![Some(vec![S::from_f64(total)])]
            }),
        ))
    }

    /// Contiguous slice along one dimension.
    pub fn narrow(&self, dim: usize, start: usize, len: usize) -> Result<Tensor<S>> {
        let shape = self.shape().to_vec();
        if dim >= shape.len() {
            return Err(Error::Shape {
                op: "narrow",
                message: format!("dim {dim} out of range for rank {}", shape.len()),
            });
        }
        if start + len > shape[dim] || len == 0 {
            return Err(Error::Shape {
                op: "narrow",
                message: format!(
                    "range {start}..{} out of bounds for extent {}",
                    start + len,
                    shape[dim]
                ),
            });
        }
        let outer: usize = shape[..dim].iter().product();
        let inner: usize = shape[dim + 1..].iter().product();
        let extent = shape[dim];
        let a = self.data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * extent + start) * inner;
            out.extend_from_slice(&a[base..base + len * inner]);
        }
        let mut out_shape = shape.clone();
        out_shape[dim] = len;
        let total = a.len();
        Ok(Tensor::from_op(
            out,
            out_shape,
            vec![self.clone()],
            Box::new(move |g| {
                let mut gx = vec![S::zero(); total];
                for o in 0..outer {
                    let src = o * len * inner;
                    let dst = (o * extent + start) * inner;
                    gx[dst..dst + len * inner].copy_from_slice(&g[src..src + len * inner]);
                }
                vec![Some(gx)]
            }),
        ))
    }

    /// Reinterpret the value under a new shape with the same element count.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<S>> {
        if super::element_count(shape) != self.len() {
            return Err(Error::Shape {
                op: "reshape",
                message: format!("cannot view {:?} as {:?}", self.shape(), shape),
            });
        }
        let a = self.data();
        Ok(Tensor::from_op_shared(
            a,
            shape.to_vec(),
            vec![self.clone()],
            Box::new(|g| vec![Some(g.to_vec())]),
        ))
    }

    /// (M,K) x (K,N) -> (M,N).
    pub fn matmul(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        let (m, k) = match *self.shape() {
            [m, k] => (m, k),
            _ => {
                return Err(Error::Shape {
                    op: "matmul",
                    message: format!("lhs must be rank-2, got {:?}", self.shape()),
                })
            }
        };
        let (k2, n) = match *rhs.shape() {
            [k2, n] => (k2, n),
            _ => {
                return Err(Error::Shape {
                    op: "matmul",
                    message: format!("rhs must be rank-2, got {:?}", rhs.shape()),
                })
            }
        };
        if k != k2 {
            return Err(Error::Shape {
                op: "matmul",
                message: format!("inner dims differ: ({m},{k}) x ({k2},{n})"),
            });
        }
        let a = self.data();
        let b = rhs.data();
        let mut out = vec![S::zero(); m * n];
        mm_acc(&mut out, &a, &b, m, k, n);
        Ok(Tensor::from_op(
            out,
            vec![m, n],
            vec![self.clone(), rhs.clone()],
            Box::new(move |g| {
                // dA = G * B^T ; dB = A^T * G
                let mut ga = vec![S::zero(); m * k];
                mm_nt(g, &b, m, n, k, &mut ga);
                let mut gb = vec![S::zero(); k * n];
                mm_tn(&a, g, m, k, n, &mut gb);
                vec![Some(ga), Some(gb)]
            }),
        ))
    }

    /// Add a per-column bias to a (N,O) matrix.
    pub fn add_row_bias(&self, bias: &Tensor<S>) -> Result<Tensor<S>> {
        let (n, o) = match *self.shape() {
            [n, o] => (n, o),
            _ => {
                return Err(Error::Shape {
                    op: "add_row_bias",
                    message: format!("expected rank-2 input, got {:?}", self.shape()),
                })
            }
        };
        if bias.shape() != [o] {
            return Err(Error::Shape {
                op: "add_row_bias",
                message: format!("bias shape {:?} does not match columns {o}", bias.shape()),
            });
        }
        let a = self.data();
        let b = bias.data();
        let mut out = vec![S::zero(); n * o];
        for r in 0..n {
            for c in 0..o {
                out[r * o + c] = a[r * o + c] + b[c];
            }
        }
        Ok(Tensor::from_op(
            out,
            vec![n, o],
            vec![self.clone(), bias.clone()],
            Box::new(move |g| {
                let mut gb = vec![S::zero(); o];
                for r in 0..n {
                    for c in 0..o {
                        gb[c] += g[r * o + c];
                    }
                }
                vec![Some(g.to_vec()), Some(gb)]
            }),
        ))
    }
}

/// Log-density of a diagonal Gaussian: -0.5*((x-mean)/sigma)^2 - log_std
/// - 0.5*ln(2*pi), with sigma = exp(log_std). Differentiable with respect to
/// every input; shapes must match except that a scalar `log_std` broadcasts.
pub fn gaussian_log_density<S: Scalar>(
    x: &Tensor<S>,
    mean: &Tensor<S>,
    log_std: &Tensor<S>,
) -> Result<Tensor<S>> {
    check_same_shape("gaussian_log_density", x, mean)?;
    let ls = if log_std.shape() == x.shape() {
        log_std.clone()
    } else if log_std.len() == 1 && x.shape().len() == 1 {
        log_std.broadcast_scalar(x.len())?
    } else {
        return Err(Error::Shape {
            op: "gaussian_log_density",
            message: format!(
                "log_std shape {:?} incompatible with sample shape {:?}",
                log_std.shape(),
                x.shape()
            ),
        });
    };
    const HALF_LN_2PI: f64 = 0.918938533204672742; // 0.5*ln(2*pi)
    let z = x.sub(mean)?.mul(&ls.neg()?.exp()?)?;
    z.square()?
        .scale(-0.5)?
        .sub(&ls)?
        .add_scalar(-HALF_LN_2PI)
}

/// out (m,n) += a (m,k) * b (k,n); plain rank-1 update loop, k innermost
/// hoisted so the j loop vectorizes.
/// Rows of A per register tile.
const MR: usize = 4;
/// Output lanes per register tile; MR*NR accumulators stay in registers
/// across the whole k loop, which is where the throughput comes from.
const NR: usize = 32;

#[allow(clippy::too_many_arguments)]
#[inline]
fn mm_tile<S: Scalar, const IB: usize>(
    c: &mut [S],
    cs: usize,
    a: &[S],
    asr: usize,
    b: &[S],
    bs: usize,
    i0: usize,
    kd: usize,
    n: usize,
) {
    let n_full = n - n % NR;
    let mut j0 = 0;
    while j0 < n_full {
        let mut acc = [[S::zero(); NR]; IB];
        for t in 0..kd {
            let b_row: &[S; NR] = b[t * bs + j0..][..NR].try_into().unwrap();
            for r in 0..IB {
                let av = a[(i0 + r) * asr + t];
                let acc_r = &mut acc[r];
                for v in 0..NR {
                    acc_r[v] += av * b_row[v];
                }
            }
        }
        for (r, acc_r) in acc.iter().enumerate() {
            let c_row = &mut c[(i0 + r) * cs + j0..][..NR];
            for (o, &v) in c_row.iter_mut().zip(acc_r) {
                *o += v;
            }
        }
        j0 += NR;
    }
    if n_full < n {
        let w = n - n_full;
        for r in 0..IB {
            let a_row = &a[(i0 + r) * asr..][..kd];
            let c_row = &mut c[(i0 + r) * cs + n_full..][..w];
            for (t, &av) in a_row.iter().enumerate() {
                let b_row = &b[t * bs + n_full..][..w];
                for (o, &bv) in c_row.iter_mut().zip(b_row) {
                    *o += av * bv;
                }
            }
        }
    }
}

/// c (m,n) += a (m,kd) * b (kd,n) where each matrix lives inside a wider
/// row-major buffer with the given row stride.
#[allow(clippy::too_many_arguments)]
pub(crate) fn mm_acc_strided<S: Scalar>(
    c: &mut [S],
    cs: usize,
    a: &[S],
    asr: usize,
    b: &[S],
    bs: usize,
    m: usize,
    kd: usize,
    n: usize,
) {
    debug_assert!(m == 0 || n == 0 || c.len() >= (m - 1) * cs + n);
    debug_assert!(m == 0 || kd == 0 || a.len() >= (m - 1) * asr + kd);
    debug_assert!(kd == 0 || n == 0 || b.len() >= (kd - 1) * bs + n);
    let mut i0 = 0;
    while i0 + MR <= m {
        mm_tile::<S, MR>(c, cs, a, asr, b, bs, i0, kd, n);
        i0 += MR;
    }
    match m - i0 {
        1 => mm_tile::<S, 1>(c, cs, a, asr, b, bs, i0, kd, n),
        2 => mm_tile::<S, 2>(c, cs, a, asr, b, bs, i0, kd, n),
        3 => mm_tile::<S, 3>(c, cs, a, asr, b, bs, i0, kd, n),
        _ => {}
    }
}

/// c (m,n) += a (m,kd) * b (kd,n), all contiguous.
pub(crate) fn mm_acc<S: Scalar>(c: &mut [S], a: &[S], b: &[S], m: usize, kd: usize, n: usize) {
    mm_acc_strided(c, n, a, kd, b, n, m, kd, n);
}

/// Dot product with independent lane accumulators so it vectorizes without
/// reassociation. The summation tree depends only on the length, so results
/// are deterministic; tails shrink through 16- and 8-wide chunks to keep
/// short rows (conv edge trims) off the scalar path.
pub(crate) fn dot_lanes<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    const L: usize = 16;
    let n = a.len();
    let mut acc0 = [S::zero(); L];
    let mut acc1 = [S::zero(); L];
    let mut i = 0;
    while i + 2 * L <= n {
        let av: &[S; L] = a[i..][..L].try_into().unwrap();
        let bv: &[S; L] = b[i..][..L].try_into().unwrap();
        let aw: &[S; L] = a[i + L..][..L].try_into().unwrap();
        let bw: &[S; L] = b[i + L..][..L].try_into().unwrap();
        for v in 0..L {
            acc0[v] += av[v] * bv[v];
            acc1[v] += aw[v] * bw[v];
        }
        i += 2 * L;
    }
    if i + L <= n {
        let av: &[S; L] = a[i..][..L].try_into().unwrap();
        let bv: &[S; L] = b[i..][..L].try_into().unwrap();
        for v in 0..L {
            acc0[v] += av[v] * bv[v];
        }
        i += L;
    }
    if i + L / 2 <= n {
        let av: &[S; 8] = a[i..][..8].try_into().unwrap();
        let bv: &[S; 8] = b[i..][..8].try_into().unwrap();
        for v in 0..8 {
            acc1[v] += av[v] * bv[v];
        }
        i += 8;
    }
    let mut s = S::zero();
    for v in 0..L {
        s += acc0[v] + acc1[v];
    }
    while i < n {
        s += a[i] * b[i];
        i += 1;
    }
    s
}

/// out (m,k) += a (m,n) * b^T where b is (k,n): row-by-row dot products.
pub(crate) fn mm_nt<S: Scalar>(a: &[S], b: &[S], m: usize, n: usize, k: usize, out: &mut [S]) {
    for i in 0..m {
        let a_row = &a[i * n..(i + 1) * n];
        for l in 0..k {
            let b_row = &b[l * n..(l + 1) * n];
            out[i * k + l] += dot_lanes(a_row, b_row);
        }
    }
}

/// out (k,n) += a^T * g where a is (m,k), g is (m,n).
pub(crate) fn mm_tn<S: Scalar>(a: &[S], g: &[S], m: usize, k: usize, n: usize, out: &mut [S]) {
    for i in 0..m {
        let g_row = &g[i * n..(i + 1) * n];
        for l in 0..k {
            let av = a[i * k + l];
            let out_row = &mut out[l * n..(l + 1) * n];
            for (o, &gv) in out_row.iter_mut().zip(g_row) {
                *o += av * gv;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{check_gradients, GradCheckConfig};

    fn t64(data: &[f64], shape: &[usize]) -> Tensor<f64> {
        Tensor::from_f64_slice(data, shape).unwrap()
    }

    fn p64(data: &[f64], shape: &[usize]) -> Tensor<f64> {
        let t = Tensor::<f64>::param(data.to_vec(), shape).unwrap();
        t
    }

    #[test]
    fn sigmoid_at_zero_is_half() {
        let y = t64(&[0.0], &[1]).sigmoid().unwrap();
        assert_eq!(y.scalar_value(), 0.5);
    }

    #[test]
    fn square_gradient_matches_closed_form() {
        // d/dx x^2 at x=3 is 6.
        let x = p64(&[3.0], &[1]);
        x.square().unwrap().sum_all().unwrap().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![6.0]);
    }

    #[test]
    fn log_rejects_non_positive() {
        assert!(t64(&[1.0, 0.0], &[2]).log().is_err());
        assert!(t64(&[1.0, -2.0], &[2]).log().is_err());
        assert!(t64(&[1.0, 2.0], &[2]).log().is_ok());
    }

    #[test]
    fn leaky_relu_values_and_gradient() {
        let y = t64(&[-1.0, 3.5], &[2]).leaky_relu(0.2).unwrap();
        assert_eq!(y.to_f64_vec(), vec![-0.2, 3.5]);
        let x = p64(&[-1.0], &[1]);
        x.leaky_relu(0.2).unwrap().sum_all().unwrap().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![0.2]);
    }

    #[test]
    fn prelu_values() {
        // (1,2,1,2): channel 0 slope 0.25, channel 1 slope 0.5.
        let x = t64(&[2.0, -2.0, -4.0, 1.0], &[1, 2, 1, 2]);
        let a = t64(&[0.25, 0.5], &[2]);
        let y = x.prelu(&a).unwrap();
        assert_eq!(y.to_f64_vec(), vec![2.0, -0.5, -2.0, 1.0]);
        assert_eq!(t64(&[0.0], &[1, 1, 1, 1]).prelu(&t64(&[0.25], &[1])).unwrap().to_f64_vec(), vec![0.0]);
    }

    #[test]
    fn prelu_rejects_slope_count_mismatch() {
        let x = t64(&[0.0; 8], &[1, 2, 2, 2]);
        assert!(x.prelu(&t64(&[0.25; 3], &[3])).is_err());
    }

    #[test]
    fn matmul_known_product() {
        let a = t64(&[1.0, 2.0, 3.0, 4.0], &[2, 2]);
        let b = t64(&[5.0, 6.0, 7.0, 8.0], &[2, 2]);
        assert_eq!(a.matmul(&b).unwrap().to_f64_vec(), vec![19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn narrow_selects_columns() {
        let a = t64(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[2, 3]);
        let c1 = a.narrow(1, 1, 1).unwrap();
        assert_eq!(c1.shape(), &[2, 1]);
        assert_eq!(c1.to_f64_vec(), vec![2.0, 5.0]);
        assert!(a.narrow(1, 2, 2).is_err());
        assert!(a.narrow(2, 0, 1).is_err());
    }

    #[test]
    fn gaussian_log_density_at_mean_unit_sigma() {
        let lp = gaussian_log_density(&t64(&[1.3], &[1]), &t64(&[1.3], &[1]), &t64(&[0.0], &[1]))
            .unwrap();
        assert!((lp.scalar_value() - (-0.9189385)).abs() < 1e-6);
    }

    #[test]
    fn elementwise_and_reduction_gradients_match_finite_differences() {
        let cfg = GradCheckConfig::default();
        // Composite graph pushing through most elementwise ops.
        let x = p64(&[0.3, -0.7, 1.2, 0.05, -1.4, 2.2], &[2, 3]);
        let y = p64(&[0.9, 0.1, -0.4, 0.6, 1.1, -0.2], &[2, 3]);
        let report = check_gradients(
            &[x, y],
            |ins| {
                let a = &ins[0];
                let b = &ins[1];
                let s = a.mul(b)?.add(&a.square()?.scale(0.5)?)?;
                let t = s.sigmoid()?.leaky_relu(0.2)?.add_scalar(1.5)?.log()?;
                t.sub(&b.exp()?.clamp(0.2, 2.0)?)?.square()?.mean_all()
            },
            &cfg,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-4, "rel err {}", report.max_rel_err);
    }

    #[test]
    fn matmul_bias_narrow_gradients_match_finite_differences() {
        let cfg = GradCheckConfig::default();
        let a = p64(&[0.3, -0.7, 1.2, 0.05, -1.4, 2.2], &[2, 3]);
        let w = p64(&[0.9, 0.1, -0.4, 0.6, 1.1, -0.2], &[3, 2]);
        let b = p64(&[0.25, -0.5], &[2]);
        let report = check_gradients(
            &[a, w, b],
            |ins| {
                let y = ins[0].matmul(&ins[1])?.add_row_bias(&ins[2])?;
                y.narrow(1, 0, 1)?.square()?.sum_all()?.add(&y.narrow(1, 1, 1)?.mean_all()?)
            },
            &cfg,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-4, "rel err {}", report.max_rel_err);
    }

    #[test]
    fn prelu_broadcast_reduction_gradients_match_finite_differences() {
        let cfg = GradCheckConfig::default();
        let x = p64(
            &[0.3, -0.7, 1.2, 0.05, -1.4, 2.2, -0.9, 0.4, 1.7, -0.2, 0.6, -1.1],
            &[1, 3, 2, 2],
        );
        let a = p64(&[0.25, -0.3, 0.8], &[3]);
        let s = p64(&[0.7], &[1]);
        let report = check_gradients(
            &[x, a, s],
            |ins| {
                let y = ins[0].prelu(&ins[1])?.mean_spatial()?.reshape(&[3])?;
                y.mul(&ins[2].broadcast_scalar(3)?)?.sum_all()
            },
            &cfg,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-4, "rel err {}", report.max_rel_err);
    }

    #[test]
    fn gaussian_log_density_gradients_match_finite_differences() {
        let cfg = GradCheckConfig::default();
        let mean = p64(&[0.4, -0.2], &[2]);
        let log_std = p64(&[0.3], &[1]);
        let x = t64(&[0.9, -0.6], &[2]);
        let report = check_gradients(
            &[mean, log_std],
            move |ins| gaussian_log_density(&x, &ins[0], &ins[1])?.sum_all(),
            &cfg,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-4, "rel err {}", report.max_rel_err);
    }
}
