//! Minimal reverse-mode autodiff over dense row-major tensors.
//!
//! Design:
//! - A [`Tensor`] is a cheap handle (`Arc`) onto an immutable value plus an
//!   optional graph node recording its parents and a backward closure.
//! - Values are stored as `Arc<Vec<S>>` snapshots. Backward closures capture
//!   the snapshots they need, so in-place parameter updates between a forward
//!   pass and a later `backward` (the RL window retains graphs across
//!   optimizer steps) never alter recorded forward values.
//! - `backward` walks the graph in reverse topological order from a scalar
//!   loss, accumulating into a local map, then adds the result into the
//!   persistent `grad` buffer of every reachable `requires_grad` leaf.
//!   Repeated calls accumulate additively; zeroing is the caller's job.
//! - Gradient bookkeeping is skipped for subgraphs with no `requires_grad`
//!   ancestor and inside [`no_grad`] sections.
//!
//! Everything is confined to one logical thread during training; handles may
//! move across threads for read-only inference.

mod adam;
mod checkpoint;
mod conv;
mod init;
mod norm;
mod ops;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointEntry,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use conv::conv2d_shape;
pub use init::kaiming_uniform;
pub use norm::{batch_norm, BatchNormState};
pub use ops::gaussian_log_density;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use std::cell::Cell;
use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// Run `f` without recording autodiff graphs (inference mode).
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    struct Guard(bool);
    impl Drop for Guard {
        fn drop(&mut self) {
            GRAD_ENABLED.with(|g| g.set(self.0));
        }
    }
    let _guard = GRAD_ENABLED.with(|g| {
        let prev = g.get();
        g.set(false);
        Guard(prev)
    });
    f()
}

pub(crate) fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

/// Per-parent gradient contributions computed from the output gradient.
type BackwardFn<S> = Box<dyn Fn(&[S]) -> Vec<Option<Vec<S>>> + Send + Sync>;

struct Node<S: Scalar> {
    parents: Vec<Tensor<S>>,
    backward: BackwardFn<S>,
}

struct Inner<S: Scalar> {
    id: u64,
    shape: Vec<usize>,
    data: RwLock<Arc<Vec<S>>>,
    grad: RwLock<Option<Vec<S>>>,
    requires_grad: bool,
    needs_grad: bool,
    node: Option<Node<S>>,
}

pub struct Tensor<S: Scalar> {
    inner: Arc<Inner<S>>,
}

impl<S: Scalar> Clone for Tensor<S> {
    fn clone(&self) -> Self {
        Tensor { inner: Arc::clone(&self.inner) }
    }
}

impl<S: Scalar> std::fmt::Debug for Tensor<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.inner.id)
            .field("shape", &self.inner.shape)
            .field("requires_grad", &self.inner.requires_grad)
            .finish()
    }
}

fn element_count(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<S: Scalar> Tensor<S> {
    fn new_inner(
        data: Arc<Vec<S>>,
        shape: Vec<usize>,
        requires_grad: bool,
        needs_grad: bool,
        node: Option<Node<S>>,
    ) -> Self {
        debug_assert_eq!(data.len(), element_count(&shape));
        Tensor {
            inner: Arc::new(Inner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data: RwLock::new(data),
                grad: RwLock::new(None),
                requires_grad,
                needs_grad,
                node,
            }),
        }
    }

    /// Constant leaf (no gradient tracking).
    pub fn from_vec(data: Vec<S>, shape: &[usize]) -> Result<Self> {
        if data.len() != element_count(shape) {
            return Err(Error::Shape {
                op: "from_vec",
                message: format!("{} elements for shape {:?}", data.len(), shape),
            });
        }
        Ok(Self::new_inner(Arc::new(data), shape.to_vec(), false, false, None))
    }

    /// Trainable leaf: participates in `backward` and holds a grad buffer.
    pub fn param(data: Vec<S>, shape: &[usize]) -> Result<Self> {
        if data.len() != element_count(shape) {
            return Err(Error::Shape {
                op: "param",
                message: format!("{} elements for shape {:?}", data.len(), shape),
            });
        }
        Ok(Self::new_inner(Arc::new(data), shape.to_vec(), true, true, None))
    }

    pub fn from_f64_slice(data: &[f64], shape: &[usize]) -> Result<Self> {
        Self::from_vec(data.iter().map(|&v| S::from_f64(v)).collect(), shape)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::new_inner(
            Arc::new(vec![S::zero(); element_count(shape)]),
            shape.to_vec(),
            false,
            false,
            None,
        )
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self::new_inner(
            Arc::new(vec![S::from_f64(value); element_count(shape)]),
            shape.to_vec(),
            false,
            false,
            None,
        )
    }

    pub fn scalar(value: f64) -> Self {
        Self::full(&[1], value)
    }

    /// Graph-producing constructor used by every op.
    pub(crate) fn from_op(
        data: Vec<S>,
        shape: Vec<usize>,
        parents: Vec<Tensor<S>>,
        backward: BackwardFn<S>,
    ) -> Self {
        Self::from_op_shared(Arc::new(data), shape, parents, backward)
    }

    /// Same as [`from_op`] for ops whose backward wants the output snapshot.
    pub(crate) fn from_op_shared(
        data: Arc<Vec<S>>,
        shape: Vec<usize>,
        parents: Vec<Tensor<S>>,
        backward: BackwardFn<S>,
    ) -> Self {
        let track = grad_enabled() && parents.iter().any(|p| p.inner.needs_grad);
        if track {
            Self::new_inner(data, shape, false, true, Some(Node { parents, backward }))
        } else {
            Self::new_inner(data, shape, false, false, None)
        }
    }

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn len(&self) -> usize {
        element_count(&self.inner.shape)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub(crate) fn needs_grad(&self) -> bool {
        self.inner.needs_grad
    }

    /// Snapshot of the current value (cheap `Arc` clone).
    pub fn data(&self) -> Arc<Vec<S>> {
        Arc::clone(&self.inner.data.read().unwrap())
    }

    /// Copy of the value as `f64`.
    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data().iter().map(|v| v.to_f64_()).collect()
    }

    /// Value of a single-element tensor.
    pub fn scalar_value(&self) -> f64 {
        let d = self.data();
        assert_eq!(d.len(), 1, "scalar_value on tensor of {} elements", d.len());
        d[0].to_f64_()
    }

    /// Mutate the value in place (optimizer updates, test setups).
    /// Snapshots already captured by recorded graphs keep the old value.
    pub fn set_data_with(&self, f: impl FnOnce(&mut [S])) {
        let mut guard = self.inner.data.write().unwrap();
        f(Arc::make_mut(&mut guard).as_mut_slice())
    }

    pub fn set_data(&self, values: &[S]) {
        assert_eq!(values.len(), self.len());
        self.set_data_with(|d| d.copy_from_slice(values));
    }

    /// Current accumulated gradient, if populated by a `backward` call.
    pub fn grad(&self) -> Option<Vec<S>> {
        self.inner.grad.read().unwrap().clone()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.write().unwrap() = None;
    }

    fn accumulate_grad(&self, g: &[S]) {
        let mut guard = self.inner.grad.write().unwrap();
        match guard.as_mut() {
            Some(buf) => {
                for (b, &v) in buf.iter_mut().zip(g) {
                    *b += v;
                }
            }
            None => *guard = Some(g.to_vec()),
        }
    }

    /// Cut the graph: same value, constant leaf.
    pub fn detach(&self) -> Tensor<S> {
        Self::new_inner(self.data(), self.inner.shape.clone(), false, false, None)
    }

    /// Reverse-mode sweep from a scalar loss. Gradients of every reachable
    /// `requires_grad` leaf are *added* into its grad buffer.
    pub fn backward(&self) -> Result<()> {
        if self.len() != 1 {
            return Err(Error::InvalidInput {
                op: "backward",
                message: format!("loss must be a scalar, got shape {:?}", self.shape()),
            });
        }
        let order = self.topo_order();
        let mut flowing: HashMap<u64, Vec<S>> = HashMap::new();
        flowing.insert(self.id(), vec![S::one()]);
        for t in order.iter().rev() {
            let Some(g) = flowing.remove(&t.id()) else { continue };
            if t.inner.requires_grad {
                t.accumulate_grad(&g);
            }
            if let Some(node) = &t.inner.node {
                let contribs = (node.backward)(&g);
                debug_assert_eq!(contribs.len(), node.parents.len());
                for (parent, contrib) in node.parents.iter().zip(contribs) {
                    let Some(c) = contrib else { continue };
                    if !parent.inner.needs_grad {
                        continue;
                    }
                    debug_assert_eq!(c.len(), parent.len());
                    match flowing.get_mut(&parent.id()) {
                        Some(buf) => {
                            for (b, v) in buf.iter_mut().zip(c) {
                                *b += v;
                            }
                        }
                        None => {
                            flowing.insert(parent.id(), c);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Post-order over the needs-grad subgraph (parents precede children).
    fn topo_order(&self) -> Vec<Tensor<S>> {
        let mut order = Vec::new();
        let mut visited: HashSet<u64> = HashSet::new();
        // (tensor, expanded) stack entries emulate recursion.
        let mut stack: Vec<(Tensor<S>, bool)> = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if !visited.insert(t.id()) {
                continue;
            }
            stack.push((t.clone(), true));
            if let Some(node) = &t.inner.node {
                for p in &node.parents {
                    if p.inner.needs_grad && !visited.contains(&p.id()) {
                        stack.push((p.clone(), false));
                    }
                }
            }
        }
        order
    }
}
