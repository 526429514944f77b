//! Immutable hypergraph with the three neighborhood notions used by the
//! two-level aggregation: the nodes sharing one hyperedge with `v`
//! (intra-edge), the hyperedges containing `v`, and the union of intra-edge
//! neighborhoods across all of them (global).

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::rng;

pub type NodeId = usize;
pub type EdgeId = usize;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HypergraphError {
    #[error("hyperedge {edge} is empty")]
    EmptyEdge { edge: EdgeId },
    #[error("node id {node} out of range (num_nodes = {num_nodes})")]
    NodeOutOfRange { node: NodeId, num_nodes: usize },
    #[error("edge id {edge} out of range (num_edges = {num_edges})")]
    EdgeOutOfRange { edge: EdgeId, num_edges: usize },
    #[error("node {node} is not a member of edge {edge}")]
    NodeNotInEdge { node: NodeId, edge: EdgeId },
    #[error("sample budget must be at least 1")]
    ZeroSampleBudget,
    #[error("permutation is not a bijection on {domain}")]
    NotABijection { domain: &'static str },
    #[error("invalid split plan: {reason}")]
    InvalidSplitPlan { reason: String },
}

/// A node set plus an ordered list of hyperedges, each a non-empty subset of
/// the nodes. Duplicate hyperedges (distinct ids over equal node sets) are
/// permitted; node ids inside one edge are deduplicated at construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hypergraph {
    num_nodes: usize,
    /// Sorted, deduplicated member lists.
    edges: Vec<Vec<NodeId>>,
    /// Per node, sorted list of incident edge ids.
    incidence: Vec<Vec<EdgeId>>,
    max_cardinality: usize,
}

impl Hypergraph {
    /// Builds the hypergraph and its incidence index.
    pub fn build(
        num_nodes: usize,
        edges: impl IntoIterator<Item = Vec<NodeId>>,
    ) -> Result<Self, HypergraphError> {
        let mut clean: Vec<Vec<NodeId>> = Vec::new();
        for (edge_id, mut members) in edges.into_iter().enumerate() {
            members.sort_unstable();
            members.dedup();
            if members.is_empty() {
                return Err(HypergraphError::EmptyEdge { edge: edge_id });
            }
            if let Some(&node) = members.last() {
                if node >= num_nodes {
                    return Err(HypergraphError::NodeOutOfRange { node, num_nodes });
                }
            }
            clean.push(members);
        }
        let mut incidence = vec![Vec::new(); num_nodes];
        for (edge_id, members) in clean.iter().enumerate() {
            for &v in members {
                incidence[v].push(edge_id);
            }
        }
        let max_cardinality = clean.iter().map(Vec::len).max().unwrap_or(0);
        Ok(Hypergraph {
            num_nodes,
            edges: clean,
            incidence,
            max_cardinality,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Largest hyperedge cardinality; 2 on a plain graph, 0 when edgeless.
    pub fn max_cardinality(&self) -> usize {
        self.max_cardinality
    }

    /// Sorted members of edge `e`.
    pub fn edge(&self, e: EdgeId) -> Result<&[NodeId], HypergraphError> {
        self.edges
            .get(e)
            .map(Vec::as_slice)
            .ok_or(HypergraphError::EdgeOutOfRange {
                edge: e,
                num_edges: self.edges.len(),
            })
    }

    pub fn edges(&self) -> impl Iterator<Item = &[NodeId]> {
        self.edges.iter().map(Vec::as_slice)
    }

    fn check_node(&self, v: NodeId) -> Result<(), HypergraphError> {
        if v >= self.num_nodes {
            return Err(HypergraphError::NodeOutOfRange {
                node: v,
                num_nodes: self.num_nodes,
            });
        }
        Ok(())
    }

    /// Sorted ids of the hyperedges containing `v`.
    pub fn incident_edges(&self, v: NodeId) -> Result<&[EdgeId], HypergraphError> {
        self.check_node(v)?;
        Ok(&self.incidence[v])
    }

    /// The other members of edge `e`, i.e. `edge(e) \ {v}`, sorted.
    pub fn intra_edge_neighborhood(
        &self,
        v: NodeId,
        e: EdgeId,
    ) -> Result<Vec<NodeId>, HypergraphError> {
        let members = self.edge(e)?;
        if members.binary_search(&v).is_err() {
            return Err(HypergraphError::NodeNotInEdge { node: v, edge: e });
        }
        Ok(members.iter().copied().filter(|&u| u != v).collect())
    }

    /// `|edge(e)| - 1` for a member node, without materializing the set.
    pub fn intra_edge_size(&self, v: NodeId, e: EdgeId) -> Result<usize, HypergraphError> {
        let members = self.edge(e)?;
        if members.binary_search(&v).is_err() {
            return Err(HypergraphError::NodeNotInEdge { node: v, edge: e });
        }
        Ok(members.len() - 1)
    }

    /// Union of intra-edge neighborhoods over all edges containing `v`,
    /// deduplicated and sorted.
    pub fn global_neighborhood(&self, v: NodeId) -> Result<Vec<NodeId>, HypergraphError> {
        self.check_node(v)?;
        let mut out: Vec<NodeId> = Vec::new();
        for &e in &self.incidence[v] {
            out.extend(self.edges[e].iter().copied().filter(|&u| u != v));
        }
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    /// Uniform sample without replacement of `min(budget, |N(v,e)|)` nodes
    /// from the intra-edge neighborhood, sorted. A pure function of
    /// `(self, query)`; the query carries its own seed.
    pub fn sample_condensed(
        &self,
        query: &NeighborhoodQuery,
    ) -> Result<Vec<NodeId>, HypergraphError> {
        let edge = query.edge.ok_or(HypergraphError::InvalidSplitPlan {
            reason: "condensed sampling requires an edge id".into(),
        })?;
        let budget = match query.sample_budget {
            Some(0) => return Err(HypergraphError::ZeroSampleBudget),
            Some(b) => b,
            None => {
                return Err(HypergraphError::InvalidSplitPlan {
                    reason: "condensed sampling requires a sample budget".into(),
                })
            }
        };
        let mut neighborhood = self.intra_edge_neighborhood(query.node, edge)?;
        if budget >= neighborhood.len() {
            return Ok(neighborhood);
        }
        let mut rng = rng::seeded_rng(
            query.seed,
            &[
                rng::stream::NEIGHBOR_SAMPLING,
                query.node as u64,
                edge as u64,
            ],
        );
        let (sampled, _) = neighborhood.partial_shuffle(&mut rng, budget);
        let mut out = sampled.to_vec();
        out.sort_unstable();
        Ok(out)
    }

    /// Relabels nodes and edges. `edge(edge_perm[e])` of the result equals
    /// `node_perm` applied to `edge(e)` of the input.
    pub fn permute(
        &self,
        node_perm: &[NodeId],
        edge_perm: &[EdgeId],
    ) -> Result<Hypergraph, HypergraphError> {
        validate_bijection(node_perm, self.num_nodes, "nodes")?;
        validate_bijection(edge_perm, self.edges.len(), "edges")?;
        let mut new_edges = vec![Vec::new(); self.edges.len()];
        for (e, members) in self.edges.iter().enumerate() {
            new_edges[edge_perm[e]] = members.iter().map(|&v| node_perm[v]).collect();
        }
        Hypergraph::build(self.num_nodes, new_edges)
    }

    /// Replaces `plan.edge` with one hyperedge per part, each keeping the
    /// anchor. Returns the new hypergraph (split edges appended at the end,
    /// later edge ids shifted down by one) and the re-aggregation weight for
    /// each new edge: the anchor's intra-edge size in the new edge divided by
    /// its intra-edge size in the original edge. For a disjoint partition the
    /// weights sum to 1.
    pub fn split_hyperedge(
        &self,
        plan: &SplitPlan,
    ) -> Result<(Hypergraph, Vec<(EdgeId, f64)>), HypergraphError> {
        plan.validate(self)?;
        let original = &self.edges[plan.edge];
        let original_intra = (original.len() - 1) as f64;
        let mut new_edges: Vec<Vec<NodeId>> = Vec::with_capacity(self.edges.len() + plan.parts.len() - 1);
        for (e, members) in self.edges.iter().enumerate() {
            if e != plan.edge {
                new_edges.push(members.clone());
            }
        }
        let mut weights = Vec::with_capacity(plan.parts.len());
        for part in &plan.parts {
            let mut members = part.clone();
            members.push(plan.anchor);
            weights.push((new_edges.len(), part.len() as f64 / original_intra));
            new_edges.push(members);
        }
        Ok((Hypergraph::build(self.num_nodes, new_edges)?, weights))
    }
}

/// Addresses one neighborhood lookup; `edge` and `sample_budget` are needed
/// only for condensed sampling.
#[derive(Debug, Clone)]
pub struct NeighborhoodQuery {
    pub node: NodeId,
    pub edge: Option<EdgeId>,
    pub sample_budget: Option<usize>,
    pub seed: u64,
}

/// Partition of one hyperedge's non-anchor members into `r >= 2` parts; each
/// resulting edge is `{anchor} ∪ part`.
#[derive(Debug, Clone)]
pub struct SplitPlan {
    pub edge: EdgeId,
    pub anchor: NodeId,
    pub parts: Vec<Vec<NodeId>>,
}

impl SplitPlan {
    fn validate(&self, h: &Hypergraph) -> Result<(), HypergraphError> {
        let members = h.edge(self.edge)?;
        if members.binary_search(&self.anchor).is_err() {
            return Err(HypergraphError::NodeNotInEdge {
                node: self.anchor,
                edge: self.edge,
            });
        }
        if self.parts.len() < 2 {
            return Err(HypergraphError::InvalidSplitPlan {
                reason: "need at least 2 parts".into(),
            });
        }
        let mut seen: Vec<NodeId> = Vec::new();
        for part in &self.parts {
            if part.is_empty() {
                return Err(HypergraphError::InvalidSplitPlan {
                    reason: "empty part".into(),
                });
            }
            if part.contains(&self.anchor) {
                return Err(HypergraphError::InvalidSplitPlan {
                    reason: "anchor may not appear inside a part".into(),
                });
            }
            seen.extend(part.iter().copied());
        }
        let total = seen.len();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != total {
            return Err(HypergraphError::InvalidSplitPlan {
                reason: "parts overlap".into(),
            });
        }
        let expected: Vec<NodeId> = members
            .iter()
            .copied()
            .filter(|&v| v != self.anchor)
            .collect();
        if seen != expected {
            return Err(HypergraphError::InvalidSplitPlan {
                reason: "parts must partition the non-anchor members of the edge".into(),
            });
        }
        Ok(())
    }
}

fn validate_bijection(
    perm: &[usize],
    len: usize,
    domain: &'static str,
) -> Result<(), HypergraphError> {
    if perm.len() != len {
        return Err(HypergraphError::NotABijection { domain });
    }
    let mut hit = vec![false; len];
    for &i in perm {
        if i >= len || hit[i] {
            return Err(HypergraphError::NotABijection { domain });
        }
        hit[i] = true;
    }
    Ok(())
}
