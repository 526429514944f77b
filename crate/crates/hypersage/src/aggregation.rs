//! Power-mean kernels and the two-level aggregation pair.
//!
//! Stage one averages the feature rows inside each hyperedge with a
//! generalized mean; stage two combines the per-edge results across a node's
//! incident hyperedges, weighting each edge by its share of the node's global
//! neighborhood. Using the same exponent at both stages keeps a node's
//! aggregate invariant when a hyperedge is split into parts covering the same
//! neighbors (see [`check_split_invariance`]).

use thiserror::Error;

use crate::hypergraph::{EdgeId, Hypergraph, HypergraphError, NeighborhoodQuery, NodeId, SplitPlan};
use crate::matrix::Matrix;

#[derive(Debug, Error)]
pub enum AggregationError {
    #[error("power-mean exponent must be nonzero (use 0.01 to approximate the geometric mean)")]
    ZeroPower,
    #[error("power-mean exponent must be finite")]
    NonFinitePower,
    #[error("epsilon stabilizer must be positive")]
    BadEpsilon,
    #[error("sample budget must be at least 1")]
    ZeroSampleBudget,
    #[error("generalized mean of an empty row set")]
    EmptyInput,
    #[error("non-finite feature entry at row {row}")]
    NonFiniteInput { row: usize },
    #[error(transparent)]
    Hypergraph(#[from] HypergraphError),
}

/// Whether neighborhood sub-sampling (and, in the model, dropout) is active.
/// Test mode always uses full neighborhoods so predictions are deterministic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Test,
}

/// Exponent and sampling parameters shared by both aggregation stages.
///
/// The same exponent is used intra-edge and inter-edge; that equality is what
/// makes the aggregate insensitive to hyperedge splitting. `p = 0` is
/// rejected; the geometric mean is approached with small exponents such as
/// `0.01`. Entries are clamped below at `epsilon` before powering so that
/// negative and fractional exponents stay finite on zero entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregatorConfig {
    pub p: f64,
    pub sample_budget: Option<usize>,
    pub epsilon: f64,
}

pub const DEFAULT_EPSILON: f64 = 1e-7;

impl AggregatorConfig {
    pub fn new(p: f64) -> Result<Self, AggregationError> {
        if p == 0.0 {
            return Err(AggregationError::ZeroPower);
        }
        if !p.is_finite() {
            return Err(AggregationError::NonFinitePower);
        }
        Ok(AggregatorConfig {
            p,
            sample_budget: None,
            epsilon: DEFAULT_EPSILON,
        })
    }

    pub fn with_sample_budget(mut self, budget: usize) -> Result<Self, AggregationError> {
        if budget == 0 {
            return Err(AggregationError::ZeroSampleBudget);
        }
        self.sample_budget = Some(budget);
        Ok(self)
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self, AggregationError> {
        if !(epsilon > 0.0) {
            return Err(AggregationError::BadEpsilon);
        }
        self.epsilon = epsilon;
        Ok(self)
    }

    /// Budget in effect for the given mode; test mode never samples.
    pub fn effective_budget(&self, mode: Mode) -> Option<usize> {
        match mode {
            Mode::Train => self.sample_budget,
            Mode::Test => None,
        }
    }
}

/// Classified exponent so the hot loops avoid `powf` for the common cases.
#[derive(Debug, Clone, Copy)]
enum PowKind {
    One,
    NegOne,
    Two,
    Int(i32),
    General,
}

fn classify(p: f64) -> PowKind {
    if p == 1.0 {
        PowKind::One
    } else if p == -1.0 {
        PowKind::NegOne
    } else if p == 2.0 {
        PowKind::Two
    } else if p.fract() == 0.0 && p.abs() <= i32::MAX as f64 {
        PowKind::Int(p as i32)
    } else {
        PowKind::General
    }
}

#[inline(always)]
fn clamped_pow(x: f64, p: f64, eps: f64, kind: PowKind) -> f64 {
    let u = x.max(eps);
    match kind {
        PowKind::One => u,
        PowKind::NegOne => 1.0 / u,
        PowKind::Two => u * u,
        PowKind::Int(k) => u.powi(k),
        PowKind::General => u.powf(p),
    }
}

#[inline(always)]
fn root(s: f64, p: f64, kind: PowKind) -> f64 {
    match kind {
        PowKind::One => s,
        PowKind::NegOne => 1.0 / s,
        PowKind::Two => s.sqrt(),
        _ => s.powf(1.0 / p),
    }
}

/// Elementwise generalized mean of the rows: the p-th root of the average of
/// clamped p-th powers. Arithmetic mean at `p = 1`, harmonic at `p = -1`,
/// near-geometric at small `p`, approaching the maximum for large `p`.
pub fn generalized_mean(
    rows: &[&[f64]],
    p: f64,
    epsilon: f64,
) -> Result<Vec<f64>, AggregationError> {
    if rows.is_empty() {
        return Err(AggregationError::EmptyInput);
    }
    if p == 0.0 {
        return Err(AggregationError::ZeroPower);
    }
    if !p.is_finite() {
        return Err(AggregationError::NonFinitePower);
    }
    for (i, row) in rows.iter().enumerate() {
        if row.iter().any(|v| !v.is_finite()) {
            return Err(AggregationError::NonFiniteInput { row: i });
        }
    }
    let kind = classify(p);
    let cols = rows[0].len();
    let n = rows.len() as f64;
    let mut acc = vec![0.0; cols];
    for row in rows {
        for (a, &x) in acc.iter_mut().zip(*row) {
            *a += clamped_pow(x, p, epsilon, kind);
        }
    }
    for a in acc.iter_mut() {
        *a = root(*a / n, p, kind);
    }
    Ok(acc)
}

/// Result of intra-edge aggregation; `Empty` marks a hyperedge whose only
/// member is the query node itself.
#[derive(Debug, Clone, PartialEq)]
pub enum IntraEdgeAggregate {
    Empty,
    Row(Vec<f64>),
}

/// Generalized mean over `v`'s neighbors inside edge `e`, sub-sampled to the
/// configured budget in train mode.
pub fn intra_edge_aggregate(
    h: &Hypergraph,
    features: &Matrix,
    v: NodeId,
    e: EdgeId,
    cfg: &AggregatorConfig,
    seed: u64,
    mode: Mode,
) -> Result<IntraEdgeAggregate, AggregationError> {
    let members = match cfg.effective_budget(mode) {
        Some(budget) => h.sample_condensed(&NeighborhoodQuery {
            node: v,
            edge: Some(e),
            sample_budget: Some(budget),
            seed,
        })?,
        None => h.intra_edge_neighborhood(v, e)?,
    };
    if members.is_empty() {
        return Ok(IntraEdgeAggregate::Empty);
    }
    let rows: Vec<&[f64]> = members.iter().map(|&u| features.row(u)).collect();
    Ok(IntraEdgeAggregate::Row(generalized_mean(
        &rows,
        cfg.p,
        cfg.epsilon,
    )?))
}

/// Combines per-edge aggregates across `v`'s incident hyperedges:
///
/// ```text
/// ((1/|E(v)|) * sum_e (|N(v,e)| / |N(v)|) * F1(v,e)^p)^(1/p)
/// ```
///
/// `f1_rows` must hold one entry per incident edge with a non-empty
/// intra-edge neighborhood; `|E(v)|` counts only those edges. When every
/// incident edge is empty the node behaves as isolated and a zero row is
/// returned.
pub fn inter_edge_aggregate(
    h: &Hypergraph,
    v: NodeId,
    f1_rows: &[(EdgeId, Vec<f64>)],
    cfg: &AggregatorConfig,
    cols: usize,
) -> Result<Vec<f64>, AggregationError> {
    if f1_rows.is_empty() {
        return Ok(vec![0.0; cols]);
    }
    let kind = classify(cfg.p);
    let global_size = h.global_neighborhood(v)?.len() as f64;
    let active_edges = f1_rows.len() as f64;
    let mut acc = vec![0.0; cols];
    for (e, row) in f1_rows {
        let ratio = h.intra_edge_size(v, *e)? as f64 / global_size;
        let scale = ratio / active_edges;
        for (a, &x) in acc.iter_mut().zip(row) {
            *a += scale * clamped_pow(x, cfg.p, cfg.epsilon, kind);
        }
    }
    for a in acc.iter_mut() {
        *a = root(*a, cfg.p, kind);
    }
    Ok(acc)
}

/// Two-level aggregate for node `v`: intra-edge means fed through the
/// inter-edge combination.
pub fn nested_aggregate(
    h: &Hypergraph,
    features: &Matrix,
    v: NodeId,
    cfg: &AggregatorConfig,
    seed: u64,
    mode: Mode,
) -> Result<Vec<f64>, AggregationError> {
    let mut f1_rows = Vec::new();
    for &e in h.incident_edges(v)? {
        match intra_edge_aggregate(h, features, v, e, cfg, seed, mode)? {
            IntraEdgeAggregate::Empty => {}
            IntraEdgeAggregate::Row(row) => f1_rows.push((e, row)),
        }
    }
    inter_edge_aggregate(h, v, &f1_rows, cfg, features.cols())
}

/// The cardinality-weighted sum of powered intra-edge means,
/// `sum_e (|N(v,e)| / |N(v)|) * F1(v,e)^p_outer`, over full neighborhoods.
///
/// This is the quantity preserved when a hyperedge is split into disjoint
/// parts (given equal exponents at both stages), and it reduces to the plain
/// power mean over the global neighborhood when the incident edges are
/// disjoint — in particular to graph-mean aggregation on a simple graph with
/// `p = 1`. `p_intra` and `p_outer` are separate so the invariance checker
/// can demonstrate that mismatched exponents break the identity.
pub fn neighborhood_power_sum(
    h: &Hypergraph,
    features: &Matrix,
    v: NodeId,
    p_intra: f64,
    p_outer: f64,
    epsilon: f64,
) -> Result<Vec<f64>, AggregationError> {
    let global_size = h.global_neighborhood(v)?.len() as f64;
    let mut acc = vec![0.0; features.cols()];
    if global_size == 0.0 {
        return Ok(acc);
    }
    let outer_kind = classify(p_outer);
    for &e in h.incident_edges(v)? {
        if h.intra_edge_size(v, e)? == 0 {
            continue;
        }
        let cfg = AggregatorConfig {
            p: p_intra,
            sample_budget: None,
            epsilon,
        };
        let f1 = match intra_edge_aggregate(h, features, v, e, &cfg, 0, Mode::Test)? {
            IntraEdgeAggregate::Row(row) => row,
            IntraEdgeAggregate::Empty => continue,
        };
        let ratio = h.intra_edge_size(v, e)? as f64 / global_size;
        for (a, &x) in acc.iter_mut().zip(&f1) {
            *a += ratio * clamped_pow(x, p_outer, epsilon, outer_kind);
        }
    }
    Ok(acc)
}

/// Outcome of [`check_split_invariance`].
#[derive(Debug, Clone, Copy)]
pub struct SplitInvarianceReport {
    pub max_abs_deviation: f64,
    /// Largest magnitude seen across both sums, for relative comparisons.
    pub scale: f64,
}

/// Compares the anchor's weighted power sum before and after splitting one
/// hyperedge, with each post-split edge additionally weighted by the ratio
/// returned from the split. With equal exponents at both stages the two sums
/// agree up to rounding; `p_outer_override` lets a test harness force
/// mismatched exponents, which breaks the identity on generic inputs.
pub fn check_split_invariance(
    h: &Hypergraph,
    features: &Matrix,
    plan: &SplitPlan,
    cfg: &AggregatorConfig,
    p_outer_override: Option<f64>,
) -> Result<SplitInvarianceReport, AggregationError> {
    let p_outer = p_outer_override.unwrap_or(cfg.p);
    let outer_kind = classify(p_outer);
    let anchor = plan.anchor;
    let before = neighborhood_power_sum(h, features, anchor, cfg.p, p_outer, cfg.epsilon)?;

    let (split, weights) = h.split_hyperedge(plan)?;
    let global_size = h.global_neighborhood(anchor)?.len() as f64;
    let original_ratio = h.intra_edge_size(anchor, plan.edge)? as f64 / global_size;
    let intra_cfg = AggregatorConfig {
        p: cfg.p,
        sample_budget: None,
        epsilon: cfg.epsilon,
    };

    let mut after = vec![0.0; features.cols()];
    for &e in split.incident_edges(anchor)? {
        if split.intra_edge_size(anchor, e)? == 0 {
            continue;
        }
        let f1 = match intra_edge_aggregate(
            &split,
            features,
            anchor,
            e,
            &intra_cfg,
            0,
            Mode::Test,
        )? {
            IntraEdgeAggregate::Row(row) => row,
            IntraEdgeAggregate::Empty => continue,
        };
        let scale = match weights.iter().find(|(id, _)| *id == e) {
            Some((_, w)) => w * original_ratio,
            None => split.intra_edge_size(anchor, e)? as f64 / global_size,
        };
        for (a, &x) in after.iter_mut().zip(&f1) {
            *a += scale * clamped_pow(x, p_outer, cfg.epsilon, outer_kind);
        }
    }

    let mut max_abs_deviation: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for (b, a) in before.iter().zip(&after) {
        max_abs_deviation = max_abs_deviation.max((b - a).abs());
        scale = scale.max(b.abs()).max(a.abs());
    }
    Ok(SplitInvarianceReport {
        max_abs_deviation,
        scale,
    })
}

// ---------------------------------------------------------------------------
// Whole-matrix aggregation driven by a precomputed plan. The layered model
// aggregates every node once per layer; the plan pins down neighborhoods (and
// any sampling) ahead of time so forward and backward see identical members.
// ---------------------------------------------------------------------------

/// Sampled (or full) intra-edge neighborhood of one (node, edge) incidence.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeAggPlan {
    /// Full structural size |N(v,e)|; the inter-edge ratio uses this even
    /// when the member list below is a sample.
    pub intra_size: usize,
    /// Ascending row ids to average, possibly a sample of the neighborhood.
    pub members: Vec<NodeId>,
}

/// Per-node aggregation inputs: incident edges with non-empty intra-edge
/// neighborhoods, plus the structural sizes entering the weighting.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NodeAggPlan {
    pub global_size: usize,
    /// Count of all incident edges, including empty-intra ones. Used only by
    /// the per-incidence accumulation variant of the model.
    pub incident_total: usize,
    pub edges: Vec<EdgeAggPlan>,
}

/// Neighborhood members for every node, fixed for one aggregation pass.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationPlan {
    pub nodes: Vec<NodeAggPlan>,
}

impl AggregationPlan {
    /// Full neighborhoods for every node.
    pub fn full(h: &Hypergraph) -> Self {
        Self::build(h, None, 0)
    }

    /// Neighborhoods sub-sampled to `budget` nodes; the sample for each
    /// (node, edge) incidence is a pure function of `(h, budget, seed)`.
    pub fn sampled(h: &Hypergraph, budget: usize, seed: u64) -> Self {
        Self::build(h, Some(budget), seed)
    }

    fn build(h: &Hypergraph, budget: Option<usize>, seed: u64) -> Self {
        let mut nodes = Vec::with_capacity(h.num_nodes());
        for v in 0..h.num_nodes() {
            let incident = h.incident_edges(v).expect("node id in range");
            let mut edges = Vec::new();
            for &e in incident {
                let intra_size = h.intra_edge_size(v, e).expect("incident edge");
                if intra_size == 0 {
                    continue;
                }
                let members = match budget {
                    Some(b) => h
                        .sample_condensed(&NeighborhoodQuery {
                            node: v,
                            edge: Some(e),
                            sample_budget: Some(b),
                            seed,
                        })
                        .expect("valid sampling query"),
                    None => h.intra_edge_neighborhood(v, e).expect("incident edge"),
                };
                edges.push(EdgeAggPlan {
                    intra_size,
                    members,
                });
            }
            let global_size = h.global_neighborhood(v).expect("node id in range").len();
            nodes.push(NodeAggPlan {
                global_size,
                incident_total: incident.len(),
                edges,
            });
        }
        AggregationPlan { nodes }
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }
}

/// Applies the two-level aggregate to every row of `features` according to
/// `plan`. Nodes without active edges get zero rows.
pub fn aggregate_matrix(features: &Matrix, plan: &AggregationPlan, p: f64, epsilon: f64) -> Matrix {
    assert_eq!(features.rows(), plan.num_nodes(), "plan/feature row mismatch");
    let cols = features.cols();
    let kind = classify(p);
    let mut out = Matrix::zeros(features.rows(), cols);
    let mut powered = vec![0.0; cols];
    for (v, node_plan) in plan.nodes.iter().enumerate() {
        if node_plan.edges.is_empty() {
            continue;
        }
        let active = node_plan.edges.len() as f64;
        let global = node_plan.global_size as f64;
        let out_row = out.row_mut(v);
        for edge_plan in &node_plan.edges {
            powered.fill(0.0);
            for &u in &edge_plan.members {
                let row = features.row(u);
                for (a, &x) in powered.iter_mut().zip(row) {
                    *a += clamped_pow(x, p, epsilon, kind);
                }
            }
            // ratio / |E(v)| / sample size, folded into one scale.
            let scale = edge_plan.intra_size as f64
                / (global * active * edge_plan.members.len() as f64);
            for (o, &s) in out_row.iter_mut().zip(&powered) {
                *o += scale * s;
            }
        }
        for o in out_row.iter_mut() {
            *o = root(*o, p, kind);
        }
    }
    out
}

/// Reverse-mode rule for [`aggregate_matrix`]: accumulates input gradients
/// given the forward output and the output gradient. Entries clamped at
/// `epsilon` in the forward take the clamp's zero-derivative branch.
pub fn aggregate_matrix_backward(
    features: &Matrix,
    plan: &AggregationPlan,
    p: f64,
    epsilon: f64,
    output: &Matrix,
    output_grad: &Matrix,
    features_grad: &mut Matrix,
) {
    let cols = features.cols();
    let kind = classify(p);
    let mut inner_grad = vec![0.0; cols];
    for (v, node_plan) in plan.nodes.iter().enumerate() {
        if node_plan.edges.is_empty() {
            continue;
        }
        let active = node_plan.edges.len() as f64;
        let global = node_plan.global_size as f64;
        let out_row = output.row(v);
        let grad_row = output_grad.row(v);
        // d(out)/d(inner sum) = (1/p) * inner^(1/p - 1) = (1/p) * out^(1 - p).
        for ((g, &go), &o) in inner_grad.iter_mut().zip(grad_row).zip(out_row) {
            *g = match kind {
                PowKind::One => go,
                PowKind::NegOne => -go * o * o,
                PowKind::Two => {
                    if o == 0.0 {
                        0.0
                    } else {
                        go * 0.5 / o
                    }
                }
                _ => go * o.powf(1.0 - p) / p,
            };
        }
        for edge_plan in &node_plan.edges {
            let scale = edge_plan.intra_size as f64
                / (global * active * edge_plan.members.len() as f64);
            for &u in &edge_plan.members {
                let x_row = features.row(u);
                let g_row = features_grad.row_mut(u);
                for ((g, &x), &ig) in g_row.iter_mut().zip(x_row).zip(&inner_grad) {
                    if x > epsilon {
                        let dpow = match kind {
                            PowKind::One => 1.0,
                            PowKind::NegOne => -1.0 / (x * x),
                            PowKind::Two => 2.0 * x,
                            PowKind::Int(k) => f64::from(k) * x.powi(k - 1),
                            PowKind::General => p * x.powf(p - 1.0),
                        };
                        *g += ig * scale * dpow;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::test_rng;
    use rand::Rng;

    fn scalar_rows(vals: &[f64]) -> Vec<Vec<f64>> {
        vals.iter().map(|&v| vec![v]).collect()
    }

    fn mean_of(rows: &[Vec<f64>], p: f64) -> f64 {
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        generalized_mean(&refs, p, DEFAULT_EPSILON).unwrap()[0]
    }

    #[test]
    fn arithmetic_mean_at_p_one() {
        assert_eq!(mean_of(&scalar_rows(&[1.0, 2.0, 3.0]), 1.0), 2.0);
    }

    #[test]
    fn harmonic_mean_at_p_minus_one() {
        assert!((mean_of(&scalar_rows(&[1.0, 4.0]), -1.0) - 1.6).abs() < 1e-15);
    }

    #[test]
    fn small_p_approaches_geometric_mean() {
        // Oracle: ((1^0.01 + 4^0.01)/2)^100 evaluated independently.
        let m = mean_of(&scalar_rows(&[1.0, 4.0]), 0.01);
        assert!((m - 2.0048102670759014).abs() < 1e-9);
        assert!((m - 2.0).abs() / 2.0 <= 0.01);
    }

    #[test]
    fn large_p_approaches_max() {
        let m = mean_of(&scalar_rows(&[1.0, 4.0]), 100.0);
        assert!((m - 3.9723699817481437).abs() < 1e-9);
        assert!((m - 4.0).abs() / 4.0 <= 0.02);
    }

    #[test]
    fn generalized_mean_rejects_bad_input() {
        assert!(matches!(
            generalized_mean(&[], 1.0, DEFAULT_EPSILON),
            Err(AggregationError::EmptyInput)
        ));
        let row = [f64::NAN];
        assert!(matches!(
            generalized_mean(&[&row], 1.0, DEFAULT_EPSILON),
            Err(AggregationError::NonFiniteInput { row: 0 })
        ));
        let row = [1.0];
        assert!(matches!(
            generalized_mean(&[&row], 0.0, DEFAULT_EPSILON),
            Err(AggregationError::ZeroPower)
        ));
    }

    #[test]
    fn config_rejects_zero_power_and_zero_budget() {
        assert!(AggregatorConfig::new(0.0).is_err());
        assert!(AggregatorConfig::new(1.0)
            .unwrap()
            .with_sample_budget(0)
            .is_err());
        assert!(AggregatorConfig::new(1.0).unwrap().with_epsilon(0.0).is_err());
    }

    #[test]
    fn power_mean_is_monotone_in_p() {
        let mut rng = test_rng(11);
        for _ in 0..200 {
            let rows: Vec<Vec<f64>> = (0..rng.gen_range(1..6))
                .map(|_| vec![rng.gen_range(0.0..5.0)])
                .collect();
            let ps = [-2.0, -1.0, 0.01, 1.0, 2.0, 3.0, 5.0];
            for w in ps.windows(2) {
                let lo = mean_of(&rows, w[0]);
                let hi = mean_of(&rows, w[1]);
                assert!(
                    lo <= hi + 1e-9,
                    "M_{} = {lo} > M_{} = {hi} on {rows:?}",
                    w[0],
                    w[1]
                );
            }
        }
    }

    #[test]
    fn exact_limits_against_direct_oracles() {
        let mut rng = test_rng(12);
        for _ in 0..100 {
            let vals: Vec<f64> = (0..rng.gen_range(1..7))
                .map(|_| rng.gen_range(0.1..10.0))
                .collect();
            let rows = scalar_rows(&vals);
            let n = vals.len() as f64;

            let arith: f64 = vals.iter().sum::<f64>() / n;
            assert_eq!(mean_of(&rows, 1.0), arith);

            let harm = n / vals.iter().map(|v| 1.0 / v).sum::<f64>();
            assert!((mean_of(&rows, -1.0) - harm).abs() <= 1e-10 * harm.abs());

            let geom = (vals.iter().map(|v| v.ln()).sum::<f64>() / n).exp();
            assert!((mean_of(&rows, 0.01) - geom).abs() / geom <= 1e-2);

            let max = vals.iter().cloned().fold(f64::MIN, f64::max);
            assert!((mean_of(&rows, 100.0) - max).abs() / max <= 0.02);
        }
    }

    fn toy_hypergraph() -> (Hypergraph, Matrix) {
        let h = Hypergraph::build(3, vec![vec![0, 1, 2]]).unwrap();
        let x = Matrix::from_rows(&[vec![9.0, 9.0], vec![2.0, 0.0], vec![4.0, 2.0]]);
        (h, x)
    }

    #[test]
    fn intra_edge_mean_of_two_rows() {
        let (h, x) = toy_hypergraph();
        let cfg = AggregatorConfig::new(1.0).unwrap();
        let got = intra_edge_aggregate(&h, &x, 0, 0, &cfg, 0, Mode::Test).unwrap();
        assert_eq!(got, IntraEdgeAggregate::Row(vec![3.0, 1.0]));
    }

    #[test]
    fn intra_edge_singleton_is_empty_marker() {
        let h = Hypergraph::build(1, vec![vec![0]]).unwrap();
        let x = Matrix::zeros(1, 2);
        let cfg = AggregatorConfig::new(1.0).unwrap();
        let got = intra_edge_aggregate(&h, &x, 0, 0, &cfg, 0, Mode::Test).unwrap();
        assert_eq!(got, IntraEdgeAggregate::Empty);
    }

    #[test]
    fn intra_edge_identical_rows_fixed_point() {
        let h = Hypergraph::build(4, vec![vec![0, 1, 2, 3]]).unwrap();
        let x = Matrix::from_rows(&[
            vec![0.0, 0.0],
            vec![3.0, 3.0],
            vec![3.0, 3.0],
            vec![3.0, 3.0],
        ]);
        let cfg = AggregatorConfig::new(2.0).unwrap();
        let got = intra_edge_aggregate(&h, &x, 0, 0, &cfg, 0, Mode::Test).unwrap();
        match got {
            IntraEdgeAggregate::Row(row) => {
                assert!((row[0] - 3.0).abs() < 1e-12 && (row[1] - 3.0).abs() < 1e-12)
            }
            IntraEdgeAggregate::Empty => panic!("expected a row"),
        }
    }

    #[test]
    fn inter_edge_single_edge_passes_f1_through() {
        for p in [-1.0, 0.01, 1.0, 2.0, 3.0] {
            let h = Hypergraph::build(3, vec![vec![0, 1, 2]]).unwrap();
            let cfg = AggregatorConfig::new(p).unwrap();
            let f1 = vec![(0usize, vec![1.7, 0.4])];
            let got = inter_edge_aggregate(&h, 0, &f1, &cfg, 2).unwrap();
            // One edge: ratio and prefactor are both 1, so F2 = F1 up to the
            // power/root round trip.
            assert!((got[0] - 1.7).abs() < 1e-12, "p={p} got {got:?}");
            assert!((got[1] - 0.4).abs() < 1e-12, "p={p} got {got:?}");
        }
    }

    #[test]
    fn inter_edge_two_disjoint_edges_hand_evaluated() {
        // Node 0 in two 3-node edges; intra sizes 2 and 2, global size 4.
        // With p=1 and F1 values 2 and 6: (1/2)(2/4*2 + 2/4*6) = 2.
        let h = Hypergraph::build(5, vec![vec![0, 1, 2], vec![0, 3, 4]]).unwrap();
        let cfg = AggregatorConfig::new(1.0).unwrap();
        let f1 = vec![(0usize, vec![2.0]), (1usize, vec![6.0])];
        let got = inter_edge_aggregate(&h, 0, &f1, &cfg, 1).unwrap();
        assert!((got[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn inter_edge_isolated_node_yields_zero_row() {
        let h = Hypergraph::build(2, vec![vec![0, 1]]).unwrap();
        let cfg = AggregatorConfig::new(2.0).unwrap();
        assert_eq!(inter_edge_aggregate(&h, 0, &[], &cfg, 3).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn nested_aggregate_single_edge_equals_f1() {
        let (h, x) = toy_hypergraph();
        let cfg = AggregatorConfig::new(1.0).unwrap();
        let nested = nested_aggregate(&h, &x, 0, &cfg, 0, Mode::Test).unwrap();
        assert_eq!(nested, vec![3.0, 1.0]);
    }

    #[test]
    fn nested_aggregate_commutes_with_permutation() {
        let mut rng = test_rng(21);
        for _ in 0..50 {
            let (h, x) = crate::synth::random_hypergraph_with_features(12, 6, 4, &mut rng);
            let node_perm = crate::synth::random_permutation(12, &mut rng);
            let edge_perm = crate::synth::random_permutation(h.num_edges(), &mut rng);
            let hp = h.permute(&node_perm, &edge_perm).unwrap();
            let mut xp = Matrix::zeros(x.rows(), x.cols());
            for v in 0..x.rows() {
                xp.row_mut(node_perm[v]).copy_from_slice(x.row(v));
            }
            let cfg = AggregatorConfig::new(2.0).unwrap();
            for v in 0..12 {
                let a = nested_aggregate(&h, &x, v, &cfg, 0, Mode::Test).unwrap();
                let b =
                    nested_aggregate(&hp, &xp, node_perm[v], &cfg, 0, Mode::Test)
                        .unwrap();
                for (ai, bi) in a.iter().zip(&b) {
                    assert!((ai - bi).abs() < 1e-10, "node {v}: {a:?} vs {b:?}");
                }
            }
        }
    }

    #[test]
    fn degenerate_all_single_neighbor_edges() {
        // Every incident edge is a pair, so each F1 is one neighbor's row and
        // the combination reduces to a weighted power mean of those rows.
        let h = Hypergraph::build(4, vec![vec![0, 1], vec![0, 2], vec![0, 3]]).unwrap();
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![4.0]]);
        for p in [-1.0, 1.0, 2.0] {
            let cfg = AggregatorConfig::new(p).unwrap();
            let got = nested_aggregate(&h, &x, 0, &cfg, 0, Mode::Test).unwrap();
            let expected = ((1.0f64.powf(p) + 2.0f64.powf(p) + 4.0f64.powf(p)) / (3.0 * 3.0))
                .powf(1.0 / p);
            assert!((got[0] - expected).abs() < 1e-12, "p={p}");
        }
    }

    #[test]
    fn plan_kernel_matches_per_node_aggregates() {
        let mut rng = test_rng(31);
        for trial in 0..40 {
            let (h, x) = crate::synth::random_hypergraph_with_features(15, 8, 5, &mut rng);
            let p = [-1.0, 0.01, 1.0, 2.0, 3.0][trial % 5];
            let cfg = AggregatorConfig::new(p).unwrap();
            let plan = AggregationPlan::full(&h);
            let out = aggregate_matrix(&x, &plan, p, cfg.epsilon);
            for v in 0..h.num_nodes() {
                let row = nested_aggregate(&h, &x, v, &cfg, 0, Mode::Test).unwrap();
                for (a, b) in out.row(v).iter().zip(&row) {
                    assert!((a - b).abs() < 1e-9, "p={p} node={v}");
                }
            }
        }
    }

    #[test]
    fn sampled_plan_matches_sampled_per_node_aggregates() {
        let mut rng = test_rng(33);
        let (h, x) = crate::synth::random_hypergraph_with_features(20, 10, 8, &mut rng);
        let cfg = AggregatorConfig::new(1.0).unwrap().with_sample_budget(2).unwrap();
        let seed = 77;
        let plan = AggregationPlan::sampled(&h, 2, seed);
        let out = aggregate_matrix(&x, &plan, cfg.p, cfg.epsilon);
        for v in 0..h.num_nodes() {
            let row = nested_aggregate(&h, &x, v, &cfg, seed, Mode::Train).unwrap();
            for (a, b) in out.row(v).iter().zip(&row) {
                assert!((a - b).abs() < 1e-9, "node={v}");
            }
        }
    }

    #[test]
    fn graph_power_sum_equals_neighbor_mean() {
        // On a simple graph the weighted power sum reduces to the plain mean
        // of neighbor features at p = 1.
        let mut rng = test_rng(41);
        for _ in 0..50 {
            let (h, x, adjacency) = crate::synth::random_simple_graph_with_features(15, &mut rng);
            for v in 0..h.num_nodes() {
                let neighbors = &adjacency[v];
                if neighbors.is_empty() {
                    continue;
                }
                let s = neighborhood_power_sum(&h, &x, v, 1.0, 1.0, DEFAULT_EPSILON).unwrap();
                for j in 0..x.cols() {
                    let mean: f64 =
                        neighbors.iter().map(|&u| x.get(u, j)).sum::<f64>() / neighbors.len() as f64;
                    assert!((s[j] - mean).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn split_invariance_holds_for_disjoint_partitions() {
        let mut rng = test_rng(51);
        for trial in 0..100 {
            let (h, x) = crate::synth::random_hypergraph_with_features(12, 5, 6, &mut rng);
            let Some(plan) = crate::synth::random_split_plan(&h, &mut rng) else {
                continue;
            };
            let p = [-1.0, 0.01, 1.0, 2.0, 3.0][trial % 5];
            let cfg = AggregatorConfig::new(p).unwrap();
            let report = check_split_invariance(&h, &x, &plan, &cfg, None).unwrap();
            let tol = 1e-9 * report.scale.max(1.0);
            assert!(
                report.max_abs_deviation <= tol,
                "p={p} deviation {} scale {}",
                report.max_abs_deviation,
                report.scale
            );
        }
    }

    #[test]
    fn split_invariance_breaks_with_mismatched_exponents() {
        // 3-node counterexample: anchor 0 with neighbors 1 and 2 carrying
        // different values; intra p=1, outer p=2.
        let h = Hypergraph::build(3, vec![vec![0, 1, 2]]).unwrap();
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]);
        let plan = SplitPlan {
            edge: 0,
            anchor: 0,
            parts: vec![vec![1], vec![2]],
        };
        let cfg = AggregatorConfig::new(1.0).unwrap();
        let report = check_split_invariance(&h, &x, &plan, &cfg, Some(2.0)).unwrap();
        assert!(report.max_abs_deviation > 1e-3, "expected a visible gap");
    }

    #[test]
    fn split_invariance_trivially_holds_on_constant_features() {
        let h = Hypergraph::build(5, vec![vec![0, 1, 2, 3, 4], vec![0, 2]]).unwrap();
        let x = Matrix::from_vec(5, 3, vec![1.5; 15]);
        let plan = SplitPlan {
            edge: 0,
            anchor: 0,
            parts: vec![vec![1, 2], vec![3], vec![4]],
        };
        for p in [-1.0, 0.01, 2.0] {
            let cfg = AggregatorConfig::new(p).unwrap();
            let report = check_split_invariance(&h, &x, &plan, &cfg, None).unwrap();
            assert!(report.max_abs_deviation <= 1e-9, "p={p}");
        }
    }

    #[test]
    fn split_invariance_rejects_overlapping_parts() {
        let h = Hypergraph::build(4, vec![vec![0, 1, 2, 3]]).unwrap();
        let x = Matrix::zeros(4, 1);
        let plan = SplitPlan {
            edge: 0,
            anchor: 0,
            parts: vec![vec![1, 2], vec![2, 3]],
        };
        let cfg = AggregatorConfig::new(1.0).unwrap();
        assert!(check_split_invariance(&h, &x, &plan, &cfg, None).is_err());
    }
}
