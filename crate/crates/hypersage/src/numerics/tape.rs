//! The operation tape.
//!
//! Every primitive appends one node holding its value, its inputs, and
//! whatever the backward rule needs (dropout masks, row norms, softmax
//! probabilities). `backward` walks the records once in reverse, accumulating
//! gradients additively. Gradient buffers exist only on trainable leaves and
//! on nodes that transitively depend on one, so constant subgraphs cost no
//! backward work.

use std::rc::Rc;

use thiserror::Error;

use crate::aggregation::{self, AggregationPlan, Mode};
use crate::matrix::Matrix;
use crate::rng;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("backward root must be a 1x1 scalar, got {shape:?}")]
    NotAScalar { shape: (usize, usize) },
    #[error("cross-entropy mask is empty")]
    EmptyMask,
    #[error("node {node} out of range for mask (rows = {rows})")]
    MaskOutOfRange { node: usize, rows: usize },
    #[error("label {label} for node {node} exceeds {num_classes} classes")]
    LabelOutOfRange {
        node: usize,
        label: usize,
        num_classes: usize,
    },
    #[error("dropout rate must lie in [0, 1), got {rate}")]
    InvalidDropoutRate { rate: f64 },
    #[error(transparent)]
    Aggregation(#[from] aggregation::AggregationError),
}

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(usize);

enum Op {
    Leaf,
    MatMul(TensorId, TensorId),
    Add(TensorId, TensorId),
    Relu(TensorId),
    RowL2Normalize {
        input: TensorId,
        norms: Vec<f64>,
    },
    Dropout {
        input: TensorId,
        mask: Vec<f64>,
    },
    Aggregate {
        input: TensorId,
        plan: Rc<AggregationPlan>,
        p: f64,
        epsilon: f64,
    },
    PowerMeanRows {
        input: TensorId,
        p: f64,
        epsilon: f64,
    },
    MaskedCrossEntropy {
        logits: TensorId,
        labels: Rc<Vec<usize>>,
        mask: Rc<Vec<usize>>,
        /// Softmax rows for the masked nodes, in mask order.
        probs: Matrix,
    },
    Sum(TensorId),
    RowScale {
        input: TensorId,
        factors: Rc<Vec<f64>>,
    },
}

struct TapeNode {
    value: Matrix,
    grad: Option<Matrix>,
    op: Op,
}

/// Record of primitive operations supporting one backward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<TapeNode>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    /// Constant input; no gradient is tracked through it.
    pub fn leaf(&mut self, value: Matrix) -> TensorId {
        self.push(value, None, Op::Leaf)
    }

    /// Trainable parameter; receives a zero-initialized gradient buffer.
    pub fn parameter(&mut self, value: Matrix) -> TensorId {
        let grad = Matrix::zeros(value.rows(), value.cols());
        self.push(value, Some(grad), Op::Leaf)
    }

    pub fn value(&self, t: TensorId) -> &Matrix {
        &self.nodes[t.0].value
    }

    pub fn grad(&self, t: TensorId) -> Option<&Matrix> {
        self.nodes[t.0].grad.as_ref()
    }

    fn push(&mut self, value: Matrix, grad: Option<Matrix>, op: Op) -> TensorId {
        self.nodes.push(TapeNode { value, grad, op });
        TensorId(self.nodes.len() - 1)
    }

    fn tracks_grad(&self, t: TensorId) -> bool {
        self.nodes[t.0].grad.is_some()
    }

    /// Allocates a gradient buffer iff any input tracks gradients.
    fn push_op(&mut self, value: Matrix, inputs: &[TensorId], op: Op) -> TensorId {
        let grad = inputs
            .iter()
            .any(|&t| self.tracks_grad(t))
            .then(|| Matrix::zeros(value.rows(), value.cols()));
        self.push(value, grad, op)
    }

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, NumericsError> {
        let (am, bm) = (self.value(a), self.value(b));
        if am.cols() != bm.rows() {
            return Err(NumericsError::ShapeMismatch {
                op: "matmul",
                left: am.shape(),
                right: bm.shape(),
            });
        }
        let value = am.matmul(bm);
        Ok(self.push_op(value, &[a, b], Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, NumericsError> {
        let (am, bm) = (self.value(a), self.value(b));
        if am.shape() != bm.shape() {
            return Err(NumericsError::ShapeMismatch {
                op: "add",
                left: am.shape(),
                right: bm.shape(),
            });
        }
        let mut value = am.clone();
        value.add_scaled(bm, 1.0);
        Ok(self.push_op(value, &[a, b], Op::Add(a, b)))
    }

    /// Elementwise `max(0, x)`; the subgradient at 0 is taken as 0.
    pub fn relu(&mut self, a: TensorId) -> TensorId {
        let mut value = self.value(a).clone();
        for v in value.data_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        self.push_op(value, &[a], Op::Relu(a))
    }

    /// Divides each row by its Euclidean norm; zero rows pass through.
    pub fn row_l2_normalize(&mut self, a: TensorId) -> TensorId {
        let input = self.value(a);
        let mut value = input.clone();
        let mut norms = Vec::with_capacity(input.rows());
        for i in 0..input.rows() {
            let norm = input.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            norms.push(norm);
            if norm > 0.0 {
                for v in value.row_mut(i) {
                    *v /= norm;
                }
            }
        }
        self.push_op(value, &[a], Op::RowL2Normalize { input: a, norms })
    }

    /// Train mode: zeroes entries with probability `rate` and scales
    /// survivors by `1/(1-rate)`. Test mode or `rate == 0`: identity.
    pub fn dropout(
        &mut self,
        a: TensorId,
        rate: f64,
        mode: Mode,
        seed: u64,
    ) -> Result<TensorId, NumericsError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(NumericsError::InvalidDropoutRate { rate });
        }
        if mode == Mode::Test || rate == 0.0 {
            return Ok(a);
        }
        use rand::RngCore;
        let mut rng = rng::seeded_rng(seed, &[rng::stream::DROPOUT]);
        let cutoff = (rate * 4_294_967_296.0) as u64;
        let scale = 1.0 / (1.0 - rate);
        let input = self.value(a);
        let mask: Vec<f64> = (0..input.rows() * input.cols())
            .map(|_| {
                if u64::from(rng.next_u32()) >= cutoff {
                    scale
                } else {
                    0.0
                }
            })
            .collect();
        let mut value = input.clone();
        for (v, &m) in value.data_mut().iter_mut().zip(&mask) {
            *v *= m;
        }
        Ok(self.push_op(value, &[a], Op::Dropout { input: a, mask }))
    }

    /// Two-level neighborhood aggregate of every row, per `plan`.
    pub fn aggregate(
        &mut self,
        a: TensorId,
        plan: Rc<AggregationPlan>,
        p: f64,
        epsilon: f64,
    ) -> Result<TensorId, NumericsError> {
        let input = self.value(a);
        if input.rows() != plan.num_nodes() {
            return Err(NumericsError::ShapeMismatch {
                op: "aggregate",
                left: input.shape(),
                right: (plan.num_nodes(), input.cols()),
            });
        }
        let value = aggregation::aggregate_matrix(input, &plan, p, epsilon);
        Ok(self.push_op(value, &[a], Op::Aggregate { input: a, plan, p, epsilon }))
    }

    /// Generalized mean of all rows, yielding a single row.
    pub fn power_mean_rows(
        &mut self,
        a: TensorId,
        p: f64,
        epsilon: f64,
    ) -> Result<TensorId, NumericsError> {
        let input = self.value(a);
        let rows: Vec<&[f64]> = input.iter_rows().collect();
        let mean = aggregation::generalized_mean(&rows, p, epsilon)?;
        let value = Matrix::from_vec(1, input.cols(), mean);
        Ok(self.push_op(value, &[a], Op::PowerMeanRows { input: a, p, epsilon }))
    }

    /// Mean over the masked rows of the negative log softmax probability of
    /// each row's label, stabilized by row-max subtraction. Returns a scalar.
    pub fn masked_cross_entropy(
        &mut self,
        logits: TensorId,
        labels: Rc<Vec<usize>>,
        mask: Rc<Vec<usize>>,
    ) -> Result<TensorId, NumericsError> {
        if mask.is_empty() {
            return Err(NumericsError::EmptyMask);
        }
        let z = self.value(logits);
        let num_classes = z.cols();
        let mut probs = Matrix::zeros(mask.len(), num_classes);
        let mut total = 0.0;
        for (k, &i) in mask.iter().enumerate() {
            if i >= z.rows() {
                return Err(NumericsError::MaskOutOfRange {
                    node: i,
                    rows: z.rows(),
                });
            }
            let label = labels[i];
            if label >= num_classes {
                return Err(NumericsError::LabelOutOfRange {
                    node: i,
                    label,
                    num_classes,
                });
            }
            let row = z.row(i);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for &v in row {
                denom += (v - max).exp();
            }
            let log_denom = denom.ln();
            total += log_denom - (row[label] - max);
            let p_row = probs.row_mut(k);
            for (pv, &v) in p_row.iter_mut().zip(row) {
                *pv = (v - max).exp() / denom;
            }
        }
        let loss = total / mask.len() as f64;
        let value = Matrix::from_vec(1, 1, vec![loss]);
        Ok(self.push_op(
            value,
            &[logits],
            Op::MaskedCrossEntropy {
                logits,
                labels,
                mask,
                probs,
            },
        ))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, a: TensorId) -> TensorId {
        let total: f64 = self.value(a).data().iter().sum();
        let value = Matrix::from_vec(1, 1, vec![total]);
        self.push_op(value, &[a], Op::Sum(a))
    }

    /// Multiplies each row by its factor.
    pub fn row_scale(
        &mut self,
        a: TensorId,
        factors: Rc<Vec<f64>>,
    ) -> Result<TensorId, NumericsError> {
        let input = self.value(a);
        if input.rows() != factors.len() {
            return Err(NumericsError::ShapeMismatch {
                op: "row_scale",
                left: input.shape(),
                right: (factors.len(), input.cols()),
            });
        }
        let mut value = input.clone();
        for (i, &f) in factors.iter().enumerate() {
            for v in value.row_mut(i) {
                *v *= f;
            }
        }
        Ok(self.push_op(value, &[a], Op::RowScale { input: a, factors }))
    }

    /// Accumulates gradients of every tracked tensor with respect to the
    /// scalar `root`.
    pub fn backward(&mut self, root: TensorId) -> Result<(), NumericsError> {
        let shape = self.nodes[root.0].value.shape();
        if shape != (1, 1) {
            return Err(NumericsError::NotAScalar { shape });
        }
        if let Some(g) = self.nodes[root.0].grad.as_mut() {
            g.set(0, 0, 1.0);
        } else {
            // Root does not depend on any trainable parameter; nothing to do.
            return Ok(());
        }
        for idx in (0..=root.0).rev() {
            if self.nodes[idx].grad.is_none() {
                continue;
            }
            self.backward_step(idx);
        }
        Ok(())
    }

    fn backward_step(&mut self, idx: usize) {
        // Temporarily take the node to satisfy the borrow checker while we
        // mutate input gradients.
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (a, b) = (*a, *b);
                let grad = self.nodes[idx].grad.clone().expect("grad present");
                if self.tracks_grad(a) {
                    let delta = grad.matmul_transpose(&self.nodes[b.0].value);
                    self.nodes[a.0]
                        .grad
                        .as_mut()
                        .expect("tracked")
                        .add_scaled(&delta, 1.0);
                }
                if self.tracks_grad(b) {
                    let delta = self.nodes[a.0].value.transpose_matmul(&grad);
                    self.nodes[b.0]
                        .grad
                        .as_mut()
                        .expect("tracked")
                        .add_scaled(&delta, 1.0);
                }
            }
            Op::Add(a, b) => {
                let (a, b) = (*a, *b);
                let grad = self.nodes[idx].grad.clone().expect("grad present");
                for t in [a, b] {
                    if self.tracks_grad(t) {
                        self.nodes[t.0]
                            .grad
                            .as_mut()
                            .expect("tracked")
                            .add_scaled(&grad, 1.0);
                    }
                }
            }
            Op::Relu(a) => {
                let a = *a;
                if !self.tracks_grad(a) {
                    return;
                }
                let (before, after) = self.nodes.split_at_mut(idx);
                let node = &after[0];
                let grad = node.grad.as_ref().expect("grad present");
                let input = &mut before[a.0];
                let x = input.value.data();
                let g = input.grad.as_mut().expect("tracked");
                for ((gi, &xi), &go) in g.data_mut().iter_mut().zip(x).zip(grad.data()) {
                    if xi > 0.0 {
                        *gi += go;
                    }
                }
            }
            Op::RowL2Normalize { input, norms } => {
                let a = *input;
                if !self.tracks_grad(a) {
                    return;
                }
                let norms = norms.clone();
                let (before, after) = self.nodes.split_at_mut(idx);
                let node = &after[0];
                let grad = node.grad.as_ref().expect("grad present");
                let y = &node.value;
                let g = before[a.0].grad.as_mut().expect("tracked");
                for i in 0..y.rows() {
                    let norm = norms[i];
                    let g_row = g.row_mut(i);
                    let go_row = grad.row(i);
                    if norm == 0.0 {
                        for (gi, &go) in g_row.iter_mut().zip(go_row) {
                            *gi += go;
                        }
                        continue;
                    }
                    let y_row = y.row(i);
                    let dot: f64 = y_row.iter().zip(go_row).map(|(a, b)| a * b).sum();
                    for ((gi, &yi), &go) in g_row.iter_mut().zip(y_row).zip(go_row) {
                        *gi += (go - yi * dot) / norm;
                    }
                }
            }
            Op::Dropout { input, mask } => {
                let a = *input;
                if !self.tracks_grad(a) {
                    return;
                }
                let mask = mask.clone();
                let (before, after) = self.nodes.split_at_mut(idx);
                let grad = after[0].grad.as_ref().expect("grad present");
                let g = before[a.0].grad.as_mut().expect("tracked");
                for ((gi, &m), &go) in g.data_mut().iter_mut().zip(&mask).zip(grad.data()) {
                    *gi += m * go;
                }
            }
            Op::Aggregate {
                input,
                plan,
                p,
                epsilon,
            } => {
                let a = *input;
                if !self.tracks_grad(a) {
                    return;
                }
                let (plan, p, epsilon) = (Rc::clone(plan), *p, *epsilon);
                let (before, after) = self.nodes.split_at_mut(idx);
                let node = &after[0];
                let grad = node.grad.as_ref().expect("grad present");
                let input_node = &mut before[a.0];
                aggregation::aggregate_matrix_backward(
                    &input_node.value,
                    &plan,
                    p,
                    epsilon,
                    &node.value,
                    grad,
                    input_node.grad.as_mut().expect("tracked"),
                );
            }
            Op::PowerMeanRows { input, p, epsilon } => {
                let a = *input;
                if !self.tracks_grad(a) {
                    return;
                }
                let (p, epsilon) = (*p, *epsilon);
                let (before, after) = self.nodes.split_at_mut(idx);
                let node = &after[0];
                let grad = node.grad.as_ref().expect("grad present");
                let mean = &node.value;
                let input_node = &mut before[a.0];
                let n = input_node.value.rows() as f64;
                let x = &input_node.value;
                let g = input_node.grad.as_mut().expect("tracked");
                // dM/dx = (1/n) * x^(p-1) * M^(1-p) on the unclamped branch.
                for i in 0..x.rows() {
                    let x_row = x.row(i);
                    let g_row = g.row_mut(i);
                    for j in 0..x_row.len() {
                        let xi = x_row[j];
                        if xi > epsilon {
                            let m = mean.get(0, j);
                            g_row[j] += grad.get(0, j) / n
                                * xi.powf(p - 1.0)
                                * m.powf(1.0 - p);
                        }
                    }
                }
            }
            Op::MaskedCrossEntropy {
                logits,
                labels,
                mask,
                probs,
            } => {
                let a = *logits;
                if !self.tracks_grad(a) {
                    return;
                }
                let (labels, mask, probs) = (Rc::clone(labels), Rc::clone(mask), probs.clone());
                let scale = self.nodes[idx].grad.as_ref().expect("grad present").get(0, 0)
                    / mask.len() as f64;
                let g = self.nodes[a.0].grad.as_mut().expect("tracked");
                for (k, &i) in mask.iter().enumerate() {
                    let g_row = g.row_mut(i);
                    let p_row = probs.row(k);
                    for (j, (gi, &pj)) in g_row.iter_mut().zip(p_row).enumerate() {
                        let indicator = if j == labels[i] { 1.0 } else { 0.0 };
                        *gi += scale * (pj - indicator);
                    }
                }
            }
            Op::Sum(a) => {
                let a = *a;
                if !self.tracks_grad(a) {
                    return;
                }
                let go = self.nodes[idx].grad.as_ref().expect("grad present").get(0, 0);
                let g = self.nodes[a.0].grad.as_mut().expect("tracked");
                for gi in g.data_mut() {
                    *gi += go;
                }
            }
            Op::RowScale { input, factors } => {
                let a = *input;
                if !self.tracks_grad(a) {
                    return;
                }
                let factors = Rc::clone(factors);
                let (before, after) = self.nodes.split_at_mut(idx);
                let grad = after[0].grad.as_ref().expect("grad present");
                let g = before[a.0].grad.as_mut().expect("tracked");
                for (i, &f) in factors.iter().enumerate() {
                    for (gi, &go) in g.row_mut(i).iter_mut().zip(grad.row(i)) {
                        *gi += f * go;
                    }
                }
            }
        }
    }
}
