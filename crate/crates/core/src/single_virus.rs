//! The single-virus higher-order SIWS system `ż = −D_f z + (I − Z)(B_f z + H(z))`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypergraph::DirectedHypergraph;
use crate::matrix::SquareMatrix;
use crate::spectral;
use crate::system::{self, SpreadingModel};

/// A quadratic term `coef · z_j · z_k` with `j ≤ k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadTerm {
    pub j: usize,
    pub k: usize,
    pub coef: f64,
}

/// Per-tail rates. Effective coefficients are `rate[tail] · A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rates {
    /// Healing rates of the population nodes.
    pub delta: Vec<f64>,
    /// Decay rates of the resource nodes.
    pub delta_w: Vec<f64>,
    /// Pairwise rate per tail (`n + m` entries).
    pub beta_pair: Vec<f64>,
    /// Higher-order rate per tail, keyed by number of bodies.
    #[serde(default)]
    pub beta_higher: BTreeMap<usize, Vec<f64>>,
}

impl Rates {
    /// Uniform rates for every node.
    pub fn uniform(n: usize, m: usize, delta: f64, delta_w: f64, beta_pair: f64) -> Self {
        Self {
            delta: vec![delta; n],
            delta_w: vec![delta_w; m],
            beta_pair: vec![beta_pair; n + m],
            beta_higher: BTreeMap::new(),
        }
    }

    pub fn with_higher(mut self, order: usize, rates: Vec<f64>) -> Self {
        self.beta_higher.insert(order, rates);
        self
    }

    pub fn validate(&self, n: usize, m: usize) -> Result<()> {
        if self.delta.len() != n || self.delta_w.len() != m || self.beta_pair.len() != n + m {
            return Err(Error::Contract(format!(
                "rate vectors have lengths ({}, {}, {}), expected ({n}, {m}, {})",
                self.delta.len(),
                self.delta_w.len(),
                self.beta_pair.len(),
                n + m
            )));
        }
        for v in self.delta.iter().chain(&self.delta_w) {
            if !(v.is_finite() && *v > 0.0) {
                return Err(Error::Contract(format!("healing and decay rates must be positive, got {v}")));
            }
        }
        for (order, rates) in &self.beta_higher {
            if rates.len() != n + m {
                return Err(Error::Contract(format!("order-{order} rates need {} entries", n + m)));
            }
        }
        for v in self.beta_pair.iter().chain(self.beta_higher.values().flatten()) {
            if !(v.is_finite() && *v >= 0.0) {
                return Err(Error::Contract(format!("infection rates must be nonnegative, got {v}")));
            }
        }
        Ok(())
    }

    /// Rate applied to a `order`-body edge with the given tail.
    pub fn rate(&self, tail: usize, order: usize) -> Result<f64> {
        if order == 2 {
            return Ok(self.beta_pair[tail]);
        }
        self.beta_higher
            .get(&order)
            .map(|r| r[tail])
            .ok_or_else(|| Error::Contract(format!("no rate given for {order}-body interactions")))
    }

    pub fn healing(&self) -> Vec<f64> {
        self.delta.iter().chain(&self.delta_w).copied().collect()
    }

    /// Multiplies every infection and contamination rate by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.beta_pair.iter_mut().for_each(|b| *b *= s);
        out.beta_higher.values_mut().flatten().for_each(|b| *b *= s);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleVirusModel {
    n: usize,
    m: usize,
    d_f: Vec<f64>,
    b_f: SquareMatrix,
    quad: Vec<Vec<QuadTerm>>,
    w_max: Vec<f64>,
}

impl SingleVirusModel {
    /// Builds the model from its matrices. `quad[i]` lists the terms of `H_i`.
    pub fn from_parts(
        n: usize,
        m: usize,
        d_f: Vec<f64>,
        b_f: SquareMatrix,
        quad: Vec<Vec<QuadTerm>>,
    ) -> Result<Self> {
        let dim = n + m;
        if n == 0 || d_f.len() != dim || b_f.dim() != dim || quad.len() != dim {
            return Err(Error::Contract(format!("inconsistent dimensions for n = {n}, m = {m}")));
        }
        if d_f.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::Contract("diagonal of D_f must be positive".into()));
        }
        if !b_f.is_finite() || !b_f.is_nonnegative() {
            return Err(Error::Contract("B_f must be finite and nonnegative".into()));
        }
        for r in n..dim {
            for c in n..dim {
                if b_f[(r, c)] != 0.0 {
                    return Err(Error::Structure(format!("resource {r} directly drives resource {c}")));
                }
            }
        }
        let mut quad = quad;
        for (i, terms) in quad.iter_mut().enumerate() {
            for t in terms.iter_mut() {
                if t.j >= dim || t.k >= dim {
                    return Err(Error::Structure(format!("quadratic term of row {i} references a missing node")));
                }
                if !(t.coef.is_finite() && t.coef >= 0.0) {
                    return Err(Error::Contract(format!("quadratic coefficient {} must be nonnegative", t.coef)));
                }
                if t.j > t.k {
                    std::mem::swap(&mut t.j, &mut t.k);
                }
                let res = (t.j >= n) as u8 + (t.k >= n) as u8;
                if res == 2 || (i >= n && res > 0) {
                    return Err(Error::Structure(format!(
                        "row {i}: higher-order term on ({}, {}) mixes resources illegally",
                        t.j, t.k
                    )));
                }
            }
            terms.retain(|t| t.coef != 0.0);
        }
        if !spectral::is_irreducible(&b_f) {
            return Err(Error::Assumption("B_f is reducible".into()));
        }
        let mut model = Self { n, m, d_f, b_f, quad, w_max: vec![] };
        let mut ones = vec![0.0; dim];
        ones[..n].iter_mut().for_each(|x| *x = 1.0);
        let p = model.pressure(&ones);
        model.w_max = (n..dim).map(|j| p[j] / model.d_f[j]).collect();
        Ok(model)
    }

    /// Assembles the model from a hypergraph of weights `A` and per-tail rates.
    pub fn assemble(h: &DirectedHypergraph, rates: &Rates) -> Result<Self> {
        let nodes = h.nodes();
        let (n, m) = (nodes.n_population, nodes.m_resource);
        rates.validate(n, m)?;
        let mut rate_err = None;
        let eff = h
            .scaled_by(|tail, order| {
                rates.rate(tail, order).unwrap_or_else(|e| {
                    rate_err.get_or_insert(e);
                    0.0
                })
            })?
            .expand_to_full_order();
        if let Some(e) = rate_err {
            return Err(e);
        }
        let dim = n + m;
        let mut b_f = SquareMatrix::zeros(dim);
        let mut quad: Vec<Vec<QuadTerm>> = vec![Vec::new(); dim];
        for (edge, _) in eff.edges() {
            let t = edge.tail;
            if nodes.is_resource(t) && edge.heads.iter().any(|&j| nodes.is_resource(j)) {
                return Err(Error::Structure(format!("resource {t} has a resource head")));
            }
            match edge.heads.len() {
                1 => b_f[(t, edge.heads[0])] += edge.weight,
                2 => quad[t].push(QuadTerm { j: edge.heads[0], k: edge.heads[1], coef: edge.weight }),
                k => {
                    return Err(Error::Structure(format!(
                        "{}-body interactions need the general model",
                        k + 1
                    )))
                }
            }
        }
        Self::from_parts(n, m, rates.healing(), b_f, quad)
    }

    /// Scalar self-loop instance `ẋ = −δx + (1 − x)(βx + β₃x²)`, used for analytic checks.
    pub fn scalar(delta: f64, beta: f64, beta3: f64) -> Result<Self> {
        let quad = if beta3 > 0.0 { vec![QuadTerm { j: 0, k: 0, coef: beta3 }] } else { vec![] };
        Self::from_parts(1, 0, vec![delta], SquareMatrix::from_diagonal(&[beta]), vec![quad])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d_f(&self) -> &[f64] {
        &self.d_f
    }

    pub fn b_f(&self) -> &SquareMatrix {
        &self.b_f
    }

    pub fn quad_terms(&self) -> &[Vec<QuadTerm>] {
        &self.quad
    }

    pub fn w_max(&self) -> &[f64] {
        &self.w_max
    }

    pub fn has_higher_order(&self) -> bool {
        self.quad.iter().any(|t| !t.is_empty())
    }

    /// Symmetric `B_fi` with `H_i(z) = zᵀ B_fi z`.
    pub fn b_fi(&self, i: usize) -> SquareMatrix {
        let mut b = SquareMatrix::zeros(self.n + self.m);
        for t in &self.quad[i] {
            if t.j == t.k {
                b[(t.j, t.j)] += t.coef;
            } else {
                b[(t.j, t.k)] += 0.5 * t.coef;
                b[(t.k, t.j)] += 0.5 * t.coef;
            }
        }
        b
    }

    /// `H(z)`.
    pub fn higher(&self, z: &[f64]) -> Vec<f64> {
        self.quad.iter().map(|ts| ts.iter().map(|t| t.coef * z[t.j] * z[t.k]).sum()).collect()
    }

    /// Same structure with `B_f` and all higher-order terms multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        self.scaled_parts(s, s)
    }

    /// `B_f` scaled by `pair`, higher-order terms by `higher`.
    pub fn scaled_parts(&self, pair: f64, higher: f64) -> Result<Self> {
        let quad = self
            .quad
            .iter()
            .map(|ts| ts.iter().map(|t| QuadTerm { coef: t.coef * higher, ..*t }).collect())
            .collect();
        Self::from_parts(self.n, self.m, self.d_f.clone(), self.b_f.scale(pair), quad)
    }

    /// `R₀ = ρ(D_f⁻¹ B_f)`.
    pub fn reproduction_number(&self) -> Result<f64> {
        system::reproduction_number(self)
    }

    pub fn healthy_state_classify(&self) -> Result<system::HealthyVerdict> {
        system::healthy_classify(self)
    }

    pub fn theta_existence(&self) -> system::ThetaReport {
        system::theta_existence(self)
    }

    /// Magnitudes that the global endemic stability result asks to be small.
    pub fn global_endemic_precondition(&self) -> Result<EndemicPrecondition> {
        let r0 = self.reproduction_number()?;
        let mut max_resource = 0.0_f64;
        for i in 0..self.n {
            for j in self.n..self.n + self.m {
                max_resource = max_resource.max(self.b_f[(i, j)]);
            }
        }
        let max_higher = (0..self.n + self.m).map(|i| self.b_fi(i).max_abs()).fold(0.0, f64::max);
        Ok(EndemicPrecondition {
            r0,
            r0_above_one: r0 > 1.0 + system::THRESHOLD_BAND,
            max_resource_coupling: max_resource,
            max_higher_order: max_higher,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndemicPrecondition {
    pub r0: f64,
    pub r0_above_one: bool,
    /// Largest entry of `B_w`.
    pub max_resource_coupling: f64,
    /// Largest entry over all `B_fi`.
    pub max_higher_order: f64,
}

impl SpreadingModel for SingleVirusModel {
    fn n_pop(&self) -> usize {
        self.n
    }

    fn n_res(&self) -> usize {
        self.m
    }

    fn healing(&self) -> &[f64] {
        &self.d_f
    }

    fn pressure_into(&self, z: &[f64], out: &mut [f64]) {
        self.b_f.mul_vec_into(z, out);
        for (o, ts) in out.iter_mut().zip(&self.quad) {
            for t in ts {
                *o += t.coef * z[t.j] * z[t.k];
            }
        }
    }

    fn pressure_jacobian(&self, z: &[f64]) -> SquareMatrix {
        let mut j = self.b_f.clone();
        for (i, ts) in self.quad.iter().enumerate() {
            for t in ts {
                j[(i, t.j)] += t.coef * z[t.k];
                j[(i, t.k)] += t.coef * z[t.j];
            }
        }
        j
    }

    fn linearization(&self) -> SquareMatrix {
        self.b_f.clone()
    }

    fn global_majorant(&self) -> SquareMatrix {
        let u = self.upper_bounds();
        let mut k = self.b_f.clone();
        for (i, ts) in self.quad.iter().enumerate() {
            for t in ts {
                k[(i, t.j)] += 0.5 * t.coef * u[t.k];
                k[(i, t.k)] += 0.5 * t.coef * u[t.j];
            }
        }
        k
    }

    fn upper_bounds(&self) -> Vec<f64> {
        let mut u = vec![1.0; self.n];
        u.extend_from_slice(&self.w_max);
        u
    }

    fn higher_support(&self) -> Vec<bool> {
        self.quad.iter().map(|t| !t.is_empty()).collect()
    }

    fn linear_minorant(&self) -> Option<SquareMatrix> {
        Some(self.b_f.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergraph::NodeSet;
    use crate::system::{find_equilibria, fixed_point_solve, Dynamics, FixedPointOptions, HealthyStability, Stability};

    const LOW: f64 = 0.179_805_898_398_896_16;
    const HIGH: f64 = 0.695_194_101_601_103_8;

    fn bistable() -> SingleVirusModel {
        SingleVirusModel::scalar(1.0, 0.5, 4.0).unwrap()
    }

    fn no_hoi() -> SingleVirusModel {
        let mut h = DirectedHypergraph::new(NodeSet::new(1, 1).unwrap()).allow_self_loops();
        h.add_full_edge(0, &[0], 0.5).unwrap();
        h.add_full_edge(0, &[1], 0.5).unwrap();
        h.add_full_edge(1, &[0], 0.5).unwrap();
        SingleVirusModel::assemble(&h, &Rates::uniform(1, 1, 1.0, 1.0, 1.0)).unwrap()
    }

    #[test]
    fn assembly_blocks() {
        let m = no_hoi();
        assert_eq!(m.b_f().to_rows(), vec![vec![0.5, 0.5], vec![0.5, 0.0]]);
        assert_eq!(m.w_max(), &[0.5]);
    }

    #[test]
    fn reducible_assembly_rejected() {
        let mut h = DirectedHypergraph::new(NodeSet::new(2, 1).unwrap());
        h.add_full_edge(0, &[1], 0.5).unwrap();
        h.add_full_edge(1, &[0], 0.5).unwrap();
        h.add_full_edge(0, &[2], 0.5).unwrap();
        let e = SingleVirusModel::assemble(&h, &Rates::uniform(2, 1, 1.0, 1.0, 1.0));
        assert!(matches!(e, Err(Error::Assumption(_))));
    }

    #[test]
    fn negative_rate_rejected() {
        let mut h = DirectedHypergraph::new(NodeSet::new(2, 0).unwrap());
        h.add_full_edge(0, &[1], 0.5).unwrap();
        h.add_full_edge(1, &[0], 0.5).unwrap();
        let mut r = Rates::uniform(2, 0, 1.0, 1.0, 1.0);
        r.beta_pair[0] = -1.0;
        assert!(matches!(SingleVirusModel::assemble(&h, &r), Err(Error::Contract(_))));
    }

    #[test]
    fn w_max_examples() {
        let build = |cw: f64, cxx: f64, dw: f64| {
            let mut h = DirectedHypergraph::new(NodeSet::new(2, 1).unwrap());
            h.add_full_edge(0, &[1], 0.5).unwrap();
            h.add_full_edge(1, &[0], 0.5).unwrap();
            h.add_full_edge(0, &[2], 0.5).unwrap();
            h.add_full_edge(2, &[0], cw).unwrap();
            if cxx > 0.0 {
                h.add_full_edge(2, &[0, 1], cxx).unwrap();
            }
            let r = Rates { delta_w: vec![dw], ..Rates::uniform(2, 1, 1.0, 1.0, 1.0) }.with_higher(3, vec![1.0; 3]);
            SingleVirusModel::assemble(&h, &r).unwrap().w_max()[0]
        };
        assert!((build(0.5, 0.0, 1.0) - 0.5).abs() < 1e-15);
        assert!((build(1.0, 0.5, 1.0) - 1.5).abs() < 1e-15);
        assert!((build(1.0, 0.5, 2.0) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn drift_examples() {
        let m = bistable();
        assert_eq!(m.drift(&[0.0]), vec![0.0]);
        assert!((m.drift(&[0.5])[0] - 0.125).abs() < 1e-15);
        let m = no_hoi();
        let d = m.drift(&[1.0, 0.0]);
        assert!((d[0] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn jacobian_examples() {
        let m = no_hoi();
        let j = m.jacobian(&[0.0, 0.0]);
        assert_eq!(j.to_rows(), vec![vec![-0.5, 0.5], vec![0.5, -1.0]]);
        let f = |x: f64| -0.5 + 7.0 * x - 12.0 * x * x;
        let b = bistable();
        assert!((b.jacobian(&[LOW])[(0, 0)] - f(LOW)).abs() < 1e-12);
        assert!((b.jacobian(&[HIGH])[(0, 0)] - f(HIGH)).abs() < 1e-12);
        assert!(f(LOW) > 0.0 && f(HIGH) < 0.0);
    }

    #[test]
    fn thresholds() {
        let m = no_hoi();
        let r0 = m.reproduction_number().unwrap();
        let oracle = (0.5 + 1.25f64.sqrt()) / 2.0;
        assert!((r0 - oracle).abs() < 1e-10);
        assert!((m.scaled(2.0).unwrap().reproduction_number().unwrap() - 2.0 * oracle).abs() < 1e-10);
        assert!((bistable().reproduction_number().unwrap() - 0.5).abs() < 1e-12);

        let v = m.healthy_state_classify().unwrap();
        assert_eq!(v.verdict, HealthyStability::GloballyExpStable);
        assert!((v.global_matrix_radius - r0).abs() < 1e-10);

        let v = bistable().healthy_state_classify().unwrap();
        assert_eq!(v.verdict, HealthyStability::LocallyStable);
        assert!((v.global_matrix_radius - 4.5).abs() < 1e-10);

        let v = SingleVirusModel::scalar(1.0, 1.7, 0.0).unwrap().healthy_state_classify().unwrap();
        assert_eq!(v.verdict, HealthyStability::Unstable);
        let v = SingleVirusModel::scalar(1.0, 1.0, 0.0).unwrap().healthy_state_classify().unwrap();
        assert_eq!(v.verdict, HealthyStability::Inconclusive);
    }

    #[test]
    fn theta_examples() {
        let t = bistable().theta_existence();
        assert!((t.theta.unwrap() - 4.5).abs() < 1e-12 && t.satisfied);
        let t = SingleVirusModel::scalar(1.0, 0.5, 3.9).unwrap().theta_existence();
        assert!((t.theta.unwrap() - 4.4).abs() < 1e-12 && !t.satisfied);
        let t = no_hoi().theta_existence();
        assert!(t.vacuous && !t.satisfied && t.theta.is_none());
    }

    #[test]
    fn fixed_point_examples() {
        let o = fixed_point_solve(&bistable(), &[0.0], FixedPointOptions::default()).unwrap();
        assert!(o.converged && o.state == vec![0.0]);
        let o = fixed_point_solve(&bistable(), &[0.9], FixedPointOptions::default()).unwrap();
        assert!(o.converged && (o.state[0] - HIGH).abs() < 1e-10);
        let o = fixed_point_solve(&no_hoi(), &[0.5, 0.3], FixedPointOptions::default()).unwrap();
        assert!(o.converged && o.state.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn equilibria_examples() {
        let eq = find_equilibria(&bistable(), 16, 7).unwrap();
        let xs: Vec<f64> = eq.iter().map(|e| e.state[0]).collect();
        assert_eq!(eq.len(), 3, "{xs:?}");
        for (e, (x, s)) in eq.iter().zip([(0.0, Stability::Stable), (LOW, Stability::Unstable), (HIGH, Stability::Stable)]) {
            assert!((e.state[0] - x).abs() < 1e-9);
            assert_eq!(e.classification, s);
            assert!(e.residual < 1e-9);
        }
        let eq = find_equilibria(&no_hoi(), 16, 7).unwrap();
        assert_eq!(eq.len(), 1);
        assert!(eq[0].is_healthy() && eq[0].classification == Stability::Stable);

        let eq = find_equilibria(&SingleVirusModel::scalar(1.0, 2.0, 0.0).unwrap(), 16, 7).unwrap();
        assert_eq!(eq.len(), 2);
        assert_eq!(eq[0].classification, Stability::Unstable);
        assert!((eq[1].state[0] - 0.5).abs() < 1e-12 && eq[1].classification == Stability::Stable);
    }

    #[test]
    fn endemic_precondition_report() {
        let p = bistable().global_endemic_precondition().unwrap();
        assert!(!p.r0_above_one);
        let p = no_hoi().scaled(2.1).unwrap().global_endemic_precondition().unwrap();
        assert!(p.r0_above_one && (p.max_resource_coupling - 1.05).abs() < 1e-12);
        assert!((p.r0 - 2.1 * (0.5 + 1.25f64.sqrt()) / 2.0).abs() < 1e-9);
    }
}
