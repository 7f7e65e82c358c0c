//! Directed weighted hypergraphs with single-tail hyperedges and m-th-order interaction rules.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::SquareMatrix;

/// Default cap on the number of bodies in a hyperedge.
pub const DEFAULT_MAX_ORDER: usize = 5;

/// Population nodes are `0..n_population`, resource nodes follow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSet {
    #[serde(rename = "n")]
    pub n_population: usize,
    #[serde(rename = "m")]
    pub m_resource: usize,
}

impl NodeSet {
    pub fn new(n_population: usize, m_resource: usize) -> Result<Self> {
        if n_population == 0 {
            return Err(Error::Contract("at least one population node is required".into()));
        }
        Ok(Self { n_population, m_resource })
    }

    pub fn total(&self) -> usize {
        self.n_population + self.m_resource
    }

    pub fn is_population(&self, i: usize) -> bool {
        i < self.n_population
    }

    pub fn is_resource(&self, i: usize) -> bool {
        i >= self.n_population && i < self.total()
    }
}

/// An `n_body` interaction that fires once `m_order` of its heads are infected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InteractionRule {
    pub n_body: usize,
    pub m_order: usize,
}

impl InteractionRule {
    pub fn new(n_body: usize, m_order: usize) -> Result<Self> {
        if n_body < 2 || m_order < 1 || m_order > n_body - 1 {
            return Err(Error::Structure(format!(
                "rule m = {m_order} is incompatible with a {n_body}-body interaction"
            )));
        }
        Ok(Self { n_body, m_order })
    }

    pub fn full(n_body: usize) -> Self {
        Self { n_body, m_order: n_body - 1 }
    }

    pub fn is_full_order(&self) -> bool {
        self.m_order + 1 == self.n_body
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperedge {
    pub tail: usize,
    pub heads: Vec<usize>,
    pub weight: f64,
}

impl Hyperedge {
    /// Total node count, tail included.
    pub fn order(&self) -> usize {
        self.heads.len() + 1
    }
}

type EdgeKey = (usize, Vec<usize>, usize);

/// Sparse directed hypergraph. Heads are kept sorted and duplicate edges merged by
/// summing weights; zero-weight edges are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectedHypergraph {
    nodes: NodeSet,
    edges: BTreeMap<EdgeKey, f64>,
    max_order: usize,
    self_loops: bool,
}

impl DirectedHypergraph {
    pub fn new(nodes: NodeSet) -> Self {
        Self { nodes, edges: BTreeMap::new(), max_order: DEFAULT_MAX_ORDER, self_loops: false }
    }

    pub fn with_max_order(mut self, max_order: usize) -> Self {
        self.max_order = max_order;
        self
    }

    /// Test mode: a head may coincide with the tail and heads may repeat.
    pub fn allow_self_loops(mut self) -> Self {
        self.self_loops = true;
        self
    }

    pub fn self_loops_allowed(&self) -> bool {
        self.self_loops
    }

    pub fn nodes(&self) -> NodeSet {
        self.nodes
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn add_full_edge(&mut self, tail: usize, heads: &[usize], weight: f64) -> Result<()> {
        self.add_edge(tail, heads, weight, heads.len())
    }

    pub fn add_edge(&mut self, tail: usize, heads: &[usize], weight: f64, m_order: usize) -> Result<()> {
        let total = self.nodes.total();
        if tail >= total || heads.iter().any(|&h| h >= total) {
            return Err(Error::Structure(format!("edge ({tail}, {heads:?}) references a missing node")));
        }
        if heads.is_empty() {
            return Err(Error::Structure(format!("edge with tail {tail} has no heads")));
        }
        let order = heads.len() + 1;
        if order > self.max_order {
            return Err(Error::Structure(format!(
                "{order}-body edge exceeds the maximum order {}",
                self.max_order
            )));
        }
        InteractionRule::new(order, m_order)?;
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(Error::Contract(format!("edge weight {weight} must be finite and nonnegative")));
        }
        let mut sorted = heads.to_vec();
        sorted.sort_unstable();
        if !self.self_loops {
            if sorted.contains(&tail) {
                return Err(Error::Structure(format!("tail {tail} also appears among the heads")));
            }
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Structure(format!("repeated head in edge ({tail}, {heads:?})")));
            }
        }
        if weight == 0.0 {
            return Ok(());
        }
        *self.edges.entry((tail, sorted, m_order)).or_insert(0.0) += weight;
        Ok(())
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Canonical edges in deterministic order.
    pub fn edges(&self) -> impl Iterator<Item = (Hyperedge, InteractionRule)> + '_ {
        self.edges.iter().map(|((tail, heads, m), &w)| {
            (
                Hyperedge { tail: *tail, heads: heads.clone(), weight: w },
                InteractionRule { n_body: heads.len() + 1, m_order: *m },
            )
        })
    }

    /// Stored weight for a (tail, heads, rule) triple; heads in any order.
    pub fn weight(&self, tail: usize, heads: &[usize], m_order: usize) -> f64 {
        let mut sorted = heads.to_vec();
        sorted.sort_unstable();
        self.edges.get(&(tail, sorted, m_order)).copied().unwrap_or(0.0)
    }

    pub fn is_full_order(&self) -> bool {
        self.edges.keys().all(|(_, heads, m)| *m == heads.len())
    }

    /// Multiplies each edge weight by `factor(tail, order)`.
    pub fn scaled_by(&self, mut factor: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut out = Self { edges: BTreeMap::new(), ..self.clone() };
        for ((tail, heads, m), &w) in &self.edges {
            let f = factor(*tail, heads.len() + 1);
            if !(f.is_finite() && f >= 0.0) {
                return Err(Error::Contract(format!("rate {f} for tail {tail} must be finite and nonnegative")));
            }
            if w * f != 0.0 {
                *out.edges.entry((*tail, heads.clone(), *m)).or_insert(0.0) += w * f;
            }
        }
        Ok(out)
    }

    /// Directed simplicial closure: every nonempty proper head subset of an edge is
    /// itself an edge from the same tail with positive weight.
    pub fn validate_simplicial(&self) -> bool {
        let present: std::collections::BTreeSet<(usize, Vec<usize>)> =
            self.edges.keys().map(|(t, h, _)| (*t, h.clone())).collect();
        for (tail, heads, _) in self.edges.keys() {
            let k = heads.len();
            for mask in 1..(1u64 << k) - 1 {
                let sub: Vec<usize> = (0..k).filter(|b| mask & (1 << b) != 0).map(|b| heads[b]).collect();
                if !present.contains(&(*tail, sub)) {
                    return false;
                }
            }
        }
        true
    }

    /// Replaces every partial-order edge by its equivalent composition of full-order
    /// edges with weight `A / C(n−1, m)`, one per head m-subset.
    pub fn expand_to_full_order(&self) -> Self {
        let mut out = Self { edges: BTreeMap::new(), ..self.clone() };
        for ((tail, heads, m), &w) in &self.edges {
            if *m == heads.len() {
                *out.edges.entry((*tail, heads.clone(), *m)).or_insert(0.0) += w;
                continue;
            }
            let share = w / binomial(heads.len(), *m);
            for subset in combinations(heads.len(), *m) {
                let mut sub: Vec<usize> = subset.iter().map(|&p| heads[p]).collect();
                sub.sort_unstable();
                *out.edges.entry((*tail, sub, *m)).or_insert(0.0) += share;
            }
        }
        out
    }

    /// Order-2 weights as an `(n+m)×(n+m)` matrix with the tail as row.
    pub fn pairwise_adjacency(&self) -> SquareMatrix {
        let mut a = SquareMatrix::zeros(self.nodes.total());
        for ((tail, heads, _), &w) in &self.edges {
            if heads.len() == 1 {
                a[(*tail, heads[0])] += w;
            }
        }
        a
    }

    /// Total interaction value on each node with unit rates.
    pub fn pressure(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut p = vec![0.0; self.nodes.total()];
        for (edge, rule) in self.edges() {
            p[edge.tail] += interaction_value(&edge, rule, 1.0, x)?;
        }
        Ok(p)
    }

    /// Every resource node must be the tail of an edge whose heads are all population nodes.
    pub fn check_resource_connectivity(&self) -> Result<()> {
        let nodes = self.nodes;
        for r in nodes.n_population..nodes.total() {
            let connected = self
                .edges
                .keys()
                .any(|(t, h, _)| *t == r && h.iter().all(|&j| nodes.is_population(j)));
            if !connected {
                return Err(Error::Structure(format!("resource node {r} is not fed by any population node")));
            }
        }
        Ok(())
    }
}

/// `β·A·Σ^m / C(h, m)` where `Σ^m` sums products over the m-subsets of head states.
pub fn interaction_value(edge: &Hyperedge, rule: InteractionRule, beta: f64, x: &[f64]) -> Result<f64> {
    let h = edge.heads.len();
    if rule.n_body != h + 1 || rule.m_order == 0 || rule.m_order > h {
        return Err(Error::Structure(format!(
            "rule (n = {}, m = {}) does not fit an edge with {h} heads",
            rule.n_body, rule.m_order
        )));
    }
    let vals: Vec<f64> = edge.heads.iter().map(|&j| x[j]).collect();
    Ok(beta * edge.weight * elementary_symmetric(&vals, rule.m_order) / binomial(h, rule.m_order))
}

/// Elementary symmetric polynomial `e_m(x)`.
pub fn elementary_symmetric(x: &[f64], m: usize) -> f64 {
    let mut e = vec![0.0; m + 1];
    e[0] = 1.0;
    for &v in x {
        for k in (1..=m).rev() {
            e[k] += e[k - 1] * v;
        }
    }
    e[m]
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64).round()
}

/// All k-subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(n: usize) -> DirectedHypergraph {
        DirectedHypergraph::new(NodeSet::new(n, 0).unwrap())
    }

    #[test]
    fn combinations_enumerate() {
        assert_eq!(combinations(3, 2), vec![vec![0, 1], vec![0, 2], vec![1, 2]]);
        assert_eq!(combinations(2, 2), vec![vec![0, 1]]);
        assert_eq!(combinations(3, 1).len(), 3);
        assert_eq!(binomial(5, 2), 10.0);
    }

    #[test]
    fn simplicial_examples() {
        // k = 0, i = 1, j = 2, l = 3
        let mut h = graph(4);
        h.add_full_edge(0, &[1, 2, 3], 1.0).unwrap();
        for heads in [[2, 3], [1, 3], [1, 2]] {
            h.add_full_edge(0, &heads, 1.0).unwrap();
        }
        for j in 1..4 {
            h.add_full_edge(0, &[j], 1.0).unwrap();
        }
        assert!(h.validate_simplicial());

        let mut h = graph(2);
        h.add_full_edge(0, &[1], 1.0).unwrap();
        assert!(h.validate_simplicial());

        let mut h = graph(3);
        h.add_full_edge(0, &[1, 2], 1.0).unwrap();
        h.add_full_edge(0, &[2], 1.0).unwrap();
        assert!(!h.validate_simplicial());
        h.add_full_edge(0, &[1], 1.0).unwrap();
        assert!(h.validate_simplicial());
    }

    #[test]
    fn interaction_value_examples() {
        let e = Hyperedge { tail: 0, heads: vec![1, 2], weight: 1.0 };
        let v = interaction_value(&e, InteractionRule::full(3), 1.0, &[0.0, 1.0, 1.0]).unwrap();
        assert_eq!(v, 1.0);

        let e = Hyperedge { tail: 0, heads: vec![1, 2, 3], weight: 1.0 };
        let rule = InteractionRule::new(4, 2).unwrap();
        assert!((interaction_value(&e, rule, 1.0, &[0.0, 1.0, 1.0, 1.0]).unwrap() - 1.0).abs() < 1e-15);
        let v = interaction_value(&e, rule, 1.0, &[0.0, 0.5, 0.2, 0.4]).unwrap();
        assert!((v - (0.1 + 0.2 + 0.08) / 3.0).abs() < 1e-15);

        let bad = InteractionRule { n_body: 4, m_order: 4 };
        assert!(matches!(interaction_value(&e, bad, 1.0, &[0.0; 4]), Err(Error::Structure(_))));
    }

    #[test]
    fn expansion_of_second_order_four_body() {
        let mut h = graph(4);
        h.add_edge(0, &[1, 2, 3], 1.0, 2).unwrap();
        let e = h.expand_to_full_order();
        assert!(e.is_full_order());
        assert_eq!(e.edge_count(), 3);
        for heads in [[1, 2], [1, 3], [2, 3]] {
            assert!((e.weight(0, &heads, 2) - 1.0 / 3.0).abs() < 1e-15);
        }
        let mut f = graph(3);
        f.add_full_edge(0, &[1, 2], 0.7).unwrap();
        assert_eq!(f.expand_to_full_order(), f);
    }

    #[test]
    fn canonical_merge_and_adjacency() {
        assert!(graph(2).pairwise_adjacency().is_zero());
        let mut h = graph(2);
        h.add_full_edge(0, &[1], 0.2).unwrap();
        h.add_full_edge(0, &[1], 0.3).unwrap();
        let a = h.pairwise_adjacency();
        assert!((a[(0, 1)] - 0.5).abs() < 1e-15);
        assert_eq!(a[(1, 0)], 0.0);

        let mut h = graph(3);
        h.add_full_edge(0, &[2, 1], 0.25).unwrap();
        h.add_full_edge(0, &[1, 2], 0.25).unwrap();
        assert_eq!(h.edge_count(), 1);
        assert_eq!(h.weight(0, &[2, 1], 2), 0.5);
    }

    #[test]
    fn structural_errors() {
        let mut h = graph(3);
        assert!(h.add_full_edge(0, &[0], 1.0).is_err());
        assert!(h.add_full_edge(0, &[1, 1], 1.0).is_err());
        assert!(h.add_full_edge(0, &[5], 1.0).is_err());
        assert!(h.add_edge(0, &[1, 2], 1.0, 3).is_err());
        assert!(matches!(h.add_full_edge(0, &[1], -1.0), Err(Error::Contract(_))));
        h.add_full_edge(0, &[1], 0.0).unwrap();
        assert!(h.is_empty());
    }

    #[test]
    fn resource_connectivity() {
        let mut h = DirectedHypergraph::new(NodeSet::new(2, 1).unwrap());
        assert!(h.check_resource_connectivity().is_err());
        h.add_full_edge(2, &[0], 1.0).unwrap();
        assert!(h.check_resource_connectivity().is_ok());
    }
}
