//! Random hypergraphs, graphs, and planted-label fixtures.
//!
//! Used by the property checks (`check-invariance`, `grad-check`) and by the
//! test suites; everything here is driven by a caller-supplied generator so
//! instances are reproducible.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::hypergraph::{Hypergraph, NodeId, SplitPlan};
use crate::matrix::Matrix;

/// Random hypergraph with `num_edges` edges of cardinality `2..=max_card`
/// (capped at `num_nodes`). Nodes may be isolated; duplicate edges can occur.
pub fn random_hypergraph<R: Rng>(
    num_nodes: usize,
    num_edges: usize,
    max_card: usize,
    rng: &mut R,
) -> Hypergraph {
    let max_card = max_card.clamp(2, num_nodes);
    let mut edges = Vec::with_capacity(num_edges);
    for _ in 0..num_edges {
        let card = rng.gen_range(2..=max_card);
        let mut pool: Vec<NodeId> = (0..num_nodes).collect();
        let (chosen, _) = pool.partial_shuffle(rng, card);
        edges.push(chosen.to_vec());
    }
    Hypergraph::build(num_nodes, edges).expect("generated edges are valid")
}

/// Strictly positive feature matrix, entries uniform in `(0.1, 1.1)`.
pub fn random_features<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.gen_range(0.1..1.1)).collect(),
    )
}

pub fn random_hypergraph_with_features<R: Rng>(
    num_nodes: usize,
    num_edges: usize,
    max_card: usize,
    rng: &mut R,
) -> (Hypergraph, Matrix) {
    let h = random_hypergraph(num_nodes, num_edges, max_card, rng);
    let cols = rng.gen_range(1..4);
    let x = random_features(num_nodes, cols, rng);
    (h, x)
}

/// Uniformly random permutation of `0..len`.
pub fn random_permutation<R: Rng>(len: usize, rng: &mut R) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..len).collect();
    perm.shuffle(rng);
    perm
}

/// Random simple graph (distinct pair edges, no self-loops) returned as an
/// `M = 2` hypergraph together with its adjacency lists, which serve as the
/// independent graph-side oracle.
pub fn random_simple_graph_with_features<R: Rng>(
    num_nodes: usize,
    rng: &mut R,
) -> (Hypergraph, Matrix, Vec<Vec<NodeId>>) {
    let mut pairs = Vec::new();
    for a in 0..num_nodes {
        for b in (a + 1)..num_nodes {
            pairs.push(vec![a, b]);
        }
    }
    pairs.shuffle(rng);
    let keep = rng.gen_range(1..=pairs.len().min(3 * num_nodes));
    pairs.truncate(keep);
    let mut adjacency = vec![Vec::new(); num_nodes];
    for pair in &pairs {
        adjacency[pair[0]].push(pair[1]);
        adjacency[pair[1]].push(pair[0]);
    }
    for list in adjacency.iter_mut() {
        list.sort_unstable();
    }
    let h = Hypergraph::build(num_nodes, pairs).expect("pairs are valid");
    let cols = rng.gen_range(1..4);
    let x = random_features(num_nodes, cols, rng);
    (h, x, adjacency)
}

/// Disjoint split plan for a random splittable edge (cardinality >= 3), or
/// `None` when the hypergraph has none.
pub fn random_split_plan<R: Rng>(h: &Hypergraph, rng: &mut R) -> Option<SplitPlan> {
    let candidates: Vec<usize> = (0..h.num_edges())
        .filter(|&e| h.edge(e).map(|m| m.len() >= 3).unwrap_or(false))
        .collect();
    let &edge = candidates.choose(rng)?;
    let members = h.edge(edge).ok()?;
    let &anchor = members.choose(rng)?;
    let mut rest: Vec<NodeId> = members.iter().copied().filter(|&v| v != anchor).collect();
    rest.shuffle(rng);
    let num_parts = rng.gen_range(2..=rest.len());
    let mut parts = vec![Vec::new(); num_parts];
    // Seed each part with one node so none is empty, then scatter the rest.
    for (i, v) in rest.iter().take(num_parts).enumerate() {
        parts[i].push(*v);
    }
    for &v in rest.iter().skip(num_parts) {
        parts[rng.gen_range(0..num_parts)].push(v);
    }
    Some(SplitPlan {
        edge,
        anchor,
        parts,
    })
}

/// Two-block planted-partition dataset: nodes carry class-correlated features
/// and hyperedges are drawn mostly within a class, so a majority-vote rule on
/// features alone classifies well above chance. Returns
/// `(hypergraph, features, labels)`.
pub fn planted_two_class_fixture<R: Rng>(
    num_nodes: usize,
    rng: &mut R,
) -> (Hypergraph, Matrix, Vec<usize>) {
    let half = num_nodes / 2;
    let labels: Vec<usize> = (0..num_nodes).map(|v| usize::from(v >= half)).collect();
    let cols = 6;
    let mut x = Matrix::zeros(num_nodes, cols);
    for v in 0..num_nodes {
        let base = if labels[v] == 0 { 0 } else { cols / 2 };
        for j in 0..cols {
            let signal = if (base..base + cols / 2).contains(&j) {
                1.0
            } else {
                0.05
            };
            x.set(v, j, signal + rng.gen_range(0.0..0.15));
        }
    }
    let mut edges = Vec::new();
    for _ in 0..num_nodes {
        let class = rng.gen_range(0..2usize);
        let members: Vec<usize> = (0..num_nodes).filter(|&v| labels[v] == class).collect();
        let card = rng.gen_range(2..=3.min(members.len()));
        let mut pool = members;
        let (chosen, _) = pool.partial_shuffle(rng, card);
        edges.push(chosen.to_vec());
    }
    let h = Hypergraph::build(num_nodes, edges).expect("generated edges are valid");
    (h, x, labels)
}
