//! The general SIWS system `ż = −D_f z + (I − Z)(F(z) + H(z))` with pluggable
//! pairwise and higher-order interaction families.

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bi_virus::BiModel;
use crate::error::{Error, Result};
use crate::hypergraph::DirectedHypergraph;
use crate::matrix::{dist_inf, SquareMatrix};
use crate::ode::{self, Domain};
use crate::single_virus::{Rates, SingleVirusModel};
use crate::spectral::{self, HurwitzVerdict};
use crate::system::{
    self, classify_point, find_equilibria, fixed_point_map, fixed_point_solve, healthy_classify, newton,
    scale_by_healing, u_tilde, Dynamics, FixedPointOptions, FixedPointOutcome, HealthyVerdict, SpreadingModel,
    Stability,
};

/// One interaction function, evaluated per hyperedge with unit coefficient.
pub trait InteractionFamily: Send + Sync + Debug {
    fn descriptor(&self) -> FamilyDescriptor;
    fn value(&self, heads: &[usize], z: &[f64]) -> f64;
    /// `∂ value / ∂ z_c`.
    fn partial(&self, heads: &[usize], z: &[f64], c: usize) -> f64;
    /// Coefficients `a_p` with `value(z) ≤ Σ_p a_p z_{heads[p]}` whenever `0 ≤ z ≤ u`.
    fn majorant(&self, heads: &[usize], u: &[f64]) -> Vec<f64>;
    /// Coefficients with `value(z) ≥ Σ_p a_p z_{heads[p]}` whenever `0 ≤ z ≤ u`, if known.
    fn minorant(&self, _heads: &[usize], _u: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyDescriptor {
    pub kind: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl FamilyDescriptor {
    fn plain(kind: &str) -> Self {
        Self { kind: kind.into(), params: BTreeMap::new() }
    }
}

/// Built-in families, selectable by name in scenario files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySpec {
    Linear,
    Polynomial,
    Log {
        #[serde(default = "default_slope")]
        slope: f64,
    },
}

fn default_slope() -> f64 {
    0.2
}

impl FamilySpec {
    pub fn build(self) -> Result<Arc<dyn InteractionFamily>> {
        Ok(match self {
            FamilySpec::Linear => Arc::new(Linear),
            FamilySpec::Polynomial => Arc::new(Polynomial),
            FamilySpec::Log { slope } => Arc::new(LogSaturating::new(slope)?),
        })
    }
}

fn product_except(heads: &[usize], z: &[f64], skip: usize) -> f64 {
    heads.iter().enumerate().filter(|(q, _)| *q != skip).map(|(_, h)| z[*h]).product()
}

fn product_partial(heads: &[usize], z: &[f64], c: usize) -> f64 {
    heads.iter().enumerate().filter(|(_, h)| **h == c).map(|(p, _)| product_except(heads, z, p)).sum()
}

/// `∏ z ≤ (1/k) Σ_p z_p ∏_{q≠p} u_q` on the box.
fn product_majorant(heads: &[usize], u: &[f64]) -> Vec<f64> {
    let k = heads.len() as f64;
    (0..heads.len()).map(|p| product_except(heads, u, p) / k).collect()
}

/// `f(z) = z_j`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Linear;

/// `h(z) = ∏ z_heads`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Polynomial;

impl InteractionFamily for Linear {
    fn descriptor(&self) -> FamilyDescriptor {
        FamilyDescriptor::plain("linear")
    }
    fn value(&self, heads: &[usize], z: &[f64]) -> f64 {
        Polynomial.value(heads, z)
    }
    fn partial(&self, heads: &[usize], z: &[f64], c: usize) -> f64 {
        Polynomial.partial(heads, z, c)
    }
    fn majorant(&self, heads: &[usize], u: &[f64]) -> Vec<f64> {
        Polynomial.majorant(heads, u)
    }
    fn minorant(&self, heads: &[usize], u: &[f64]) -> Option<Vec<f64>> {
        Polynomial.minorant(heads, u)
    }
}

impl InteractionFamily for Polynomial {
    fn descriptor(&self) -> FamilyDescriptor {
        FamilyDescriptor::plain("polynomial")
    }
    fn value(&self, heads: &[usize], z: &[f64]) -> f64 {
        heads.iter().map(|h| z[*h]).product()
    }
    fn partial(&self, heads: &[usize], z: &[f64], c: usize) -> f64 {
        product_partial(heads, z, c)
    }
    fn majorant(&self, heads: &[usize], u: &[f64]) -> Vec<f64> {
        product_majorant(heads, u)
    }
    fn minorant(&self, heads: &[usize], _u: &[f64]) -> Option<Vec<f64>> {
        let mut a = vec![0.0; heads.len()];
        if heads.len() == 1 {
            a[0] = 1.0;
        }
        Some(a)
    }
}

/// `∏_{q<last} z_q · log(1 + s·z_last)`; a single head gives `log(1 + s·z)`.
#[derive(Debug, Clone, Copy)]
pub struct LogSaturating {
    slope: f64,
}

impl LogSaturating {
    pub fn new(slope: f64) -> Result<Self> {
        if !(slope.is_finite() && slope > 0.0) {
            return Err(Error::Contract(format!("log slope must be positive, got {slope}")));
        }
        Ok(Self { slope })
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }
}

impl InteractionFamily for LogSaturating {
    fn descriptor(&self) -> FamilyDescriptor {
        let mut d = FamilyDescriptor::plain("log");
        d.params.insert("slope".into(), self.slope);
        d
    }

    fn value(&self, heads: &[usize], z: &[f64]) -> f64 {
        let (last, rest) = heads.split_last().expect("hyperedge without heads");
        rest.iter().map(|h| z[*h]).product::<f64>() * (self.slope * z[*last]).ln_1p()
    }

    fn partial(&self, heads: &[usize], z: &[f64], c: usize) -> f64 {
        let (last, rest) = heads.split_last().expect("hyperedge without heads");
        let log = (self.slope * z[*last]).ln_1p();
        let mut d = product_partial(rest, z, c) * log;
        if *last == c {
            d += rest.iter().map(|h| z[*h]).product::<f64>() * self.slope / (1.0 + self.slope * z[c]);
        }
        d
    }

    fn majorant(&self, heads: &[usize], u: &[f64]) -> Vec<f64> {
        product_majorant(heads, u).into_iter().map(|a| a * self.slope).collect()
    }

    fn minorant(&self, heads: &[usize], u: &[f64]) -> Option<Vec<f64>> {
        if heads.len() > 1 {
            return Some(vec![0.0; heads.len()]);
        }
        let ub = u[heads[0]];
        Some(vec![if ub > 0.0 { (self.slope * ub).ln_1p() / ub } else { self.slope }])
    }
}

/// A weighted hyperedge term `coef · family(heads)` in row `tail`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub heads: Vec<usize>,
    pub coef: f64,
}

#[derive(Debug, Clone)]
pub struct GeneralModel {
    n: usize,
    m: usize,
    d_f: Vec<f64>,
    pair: Vec<Vec<Term>>,
    higher: Vec<Vec<Term>>,
    pair_family: Arc<dyn InteractionFamily>,
    higher_family: Arc<dyn InteractionFamily>,
    higher_scale: f64,
    w_max: Vec<f64>,
}

impl GeneralModel {
    /// `pair[i]` and `higher[i]` list the terms of row `i`. Pairwise terms have one head,
    /// higher-order terms two to four.
    pub fn from_parts(
        n: usize,
        m: usize,
        d_f: Vec<f64>,
        pair: Vec<Vec<Term>>,
        higher: Vec<Vec<Term>>,
        pair_family: Arc<dyn InteractionFamily>,
        higher_family: Arc<dyn InteractionFamily>,
    ) -> Result<Self> {
        let dim = n + m;
        if n == 0 || d_f.len() != dim || pair.len() != dim || higher.len() != dim {
            return Err(Error::Contract(format!("inconsistent dimensions for n = {n}, m = {m}")));
        }
        if d_f.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::Contract("diagonal of D_f must be positive".into()));
        }
        for (rows, lo, hi) in [(&pair, 1, 1), (&higher, 2, 4)] {
            for (i, terms) in rows.iter().enumerate() {
                for t in terms {
                    if t.heads.len() < lo || t.heads.len() > hi {
                        return Err(Error::Structure(format!("row {i}: term with {} heads", t.heads.len())));
                    }
                    if t.heads.iter().any(|h| *h >= dim) {
                        return Err(Error::Structure(format!("row {i} references a missing node")));
                    }
                    if !(t.coef.is_finite() && t.coef >= 0.0) {
                        return Err(Error::Contract(format!("coefficient {} must be nonnegative", t.coef)));
                    }
                    let res = t.heads.iter().filter(|h| **h >= n).count();
                    if (i >= n && res > 0) || res > 1 {
                        return Err(Error::Structure(format!("row {i}: term mixes resources illegally")));
                    }
                }
            }
        }
        let strip = |rows: Vec<Vec<Term>>| -> Vec<Vec<Term>> {
            rows.into_iter().map(|ts| ts.into_iter().filter(|t| t.coef != 0.0).collect()).collect()
        };
        let mut model = Self {
            n,
            m,
            d_f,
            pair: strip(pair),
            higher: strip(higher),
            pair_family,
            higher_family,
            higher_scale: 1.0,
            w_max: vec![],
        };
        let mut ones = vec![0.0; dim];
        ones[..n].iter_mut().for_each(|x| *x = 1.0);
        let p = model.pressure(&ones);
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("interaction functions are not finite at the upper corner".into()));
        }
        model.w_max = (n..dim).map(|j| p[j] / model.d_f[j]).collect();
        Ok(model)
    }

    /// Assembles from a hypergraph of weights and per-tail rates; edges of up to five bodies.
    pub fn assemble(
        h: &DirectedHypergraph,
        rates: &Rates,
        pair_family: Arc<dyn InteractionFamily>,
        higher_family: Arc<dyn InteractionFamily>,
    ) -> Result<Self> {
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
        let mut pair = vec![Vec::new(); n + m];
        let mut higher = vec![Vec::new(); n + m];
        for (edge, _) in eff.edges() {
            let term = Term { heads: edge.heads.clone(), coef: edge.weight };
            if edge.heads.len() == 1 {
                pair[edge.tail].push(term);
            } else {
                higher[edge.tail].push(term);
            }
        }
        Self::from_parts(n, m, rates.healing(), pair, higher, pair_family, higher_family)
    }

    /// The polynomial model written with linear and polynomial families.
    pub fn from_single(s: &SingleVirusModel) -> Result<Self> {
        let dim = s.n() + s.m();
        let pair = (0..dim)
            .map(|i| {
                (0..dim)
                    .filter(|j| s.b_f()[(i, *j)] != 0.0)
                    .map(|j| Term { heads: vec![j], coef: s.b_f()[(i, j)] })
                    .collect()
            })
            .collect();
        let higher = s
            .quad_terms()
            .iter()
            .map(|ts| ts.iter().map(|t| Term { heads: vec![t.j, t.k], coef: t.coef }).collect())
            .collect();
        Self::from_parts(s.n(), s.m(), s.d_f().to_vec(), pair, higher, Arc::new(Linear), Arc::new(Polynomial))
    }

    /// Scalar self-loop model `ẋ = −δx + (1 − x)(β f(x) + Σ_k c_k h(x, …, x))`.
    pub fn scalar(
        delta: f64,
        beta: f64,
        higher: &[(usize, f64)],
        pair_family: Arc<dyn InteractionFamily>,
        higher_family: Arc<dyn InteractionFamily>,
    ) -> Result<Self> {
        let terms = higher.iter().map(|(heads, c)| Term { heads: vec![0; *heads], coef: *c }).collect();
        Self::from_parts(
            1,
            0,
            vec![delta],
            vec![vec![Term { heads: vec![0], coef: beta }]],
            vec![terms],
            pair_family,
            higher_family,
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn w_max(&self) -> &[f64] {
        &self.w_max
    }

    pub fn pair_terms(&self) -> &[Vec<Term>] {
        &self.pair
    }

    pub fn higher_terms(&self) -> &[Vec<Term>] {
        &self.higher
    }

    pub fn pair_family(&self) -> &Arc<dyn InteractionFamily> {
        &self.pair_family
    }

    pub fn higher_family(&self) -> &Arc<dyn InteractionFamily> {
        &self.higher_family
    }

    pub fn higher_scale(&self) -> f64 {
        self.higher_scale
    }

    /// Same model with `H` replaced by `ε H`. Resource bounds are recomputed.
    pub fn with_higher_scale(&self, eps: f64) -> Result<Self> {
        if !(eps.is_finite() && eps >= 0.0) {
            return Err(Error::Contract(format!("higher-order scale must be nonnegative, got {eps}")));
        }
        let mut out = self.clone();
        out.higher_scale = eps;
        let mut ones = vec![0.0; self.n + self.m];
        ones[..self.n].iter_mut().for_each(|x| *x = 1.0);
        let p = out.pressure(&ones);
        out.w_max = (self.n..self.n + self.m).map(|j| p[j] / out.d_f[j]).collect();
        Ok(out)
    }

    /// Pairwise coefficients scaled by `pair`, higher-order coefficients by `higher`.
    pub fn scaled_parts(&self, pair: f64, higher: f64) -> Result<Self> {
        let scale = |rows: &[Vec<Term>], s: f64| -> Vec<Vec<Term>> {
            rows.iter()
                .map(|ts| ts.iter().map(|t| Term { heads: t.heads.clone(), coef: t.coef * s }).collect())
                .collect()
        };
        let mut out = Self::from_parts(
            self.n,
            self.m,
            self.d_f.clone(),
            scale(&self.pair, pair),
            scale(&self.higher, higher),
            self.pair_family.clone(),
            self.higher_family.clone(),
        )?;
        if self.higher_scale != 1.0 {
            out = out.with_higher_scale(self.higher_scale)?;
        }
        Ok(out)
    }

    /// Pairwise support matrix `[A_ij]` weighted by the coefficients.
    pub fn pair_support(&self) -> SquareMatrix {
        let mut a = SquareMatrix::zeros(self.n + self.m);
        for (i, ts) in self.pair.iter().enumerate() {
            for t in ts {
                a[(i, t.heads[0])] += t.coef;
            }
        }
        a
    }

    pub fn pairwise(&self, z: &[f64]) -> Vec<f64> {
        self.pair.iter().map(|ts| ts.iter().map(|t| t.coef * self.pair_family.value(&t.heads, z)).sum()).collect()
    }

    pub fn higher(&self, z: &[f64]) -> Vec<f64> {
        self.higher
            .iter()
            .map(|ts| self.higher_scale * ts.iter().map(|t| t.coef * self.higher_family.value(&t.heads, z)).sum::<f64>())
            .collect()
    }

    /// `J_F(z)`.
    pub fn pairwise_jacobian(&self, z: &[f64]) -> SquareMatrix {
        let mut j = SquareMatrix::zeros(self.n + self.m);
        for (i, ts) in self.pair.iter().enumerate() {
            for t in ts {
                j[(i, t.heads[0])] += t.coef * self.pair_family.partial(&t.heads, z, t.heads[0]);
            }
        }
        j
    }

    /// `J_H(z)`.
    pub fn higher_jacobian(&self, z: &[f64]) -> SquareMatrix {
        let mut j = SquareMatrix::zeros(self.n + self.m);
        for (i, ts) in self.higher.iter().enumerate() {
            for t in ts {
                let mut heads = t.heads.clone();
                heads.sort_unstable();
                heads.dedup();
                for c in heads {
                    j[(i, c)] += self.higher_scale * t.coef * self.higher_family.partial(&t.heads, z, c);
                }
            }
        }
        j
    }

    fn bound_matrix(&self, f: impl Fn(&dyn InteractionFamily, &[usize]) -> Option<Vec<f64>>) -> Option<SquareMatrix> {
        let mut k = SquareMatrix::zeros(self.n + self.m);
        for (rows, fam, scale) in
            [(&self.pair, &self.pair_family, 1.0), (&self.higher, &self.higher_family, self.higher_scale)]
        {
            for (i, ts) in rows.iter().enumerate() {
                for t in ts {
                    let a = f(fam.as_ref(), &t.heads)?;
                    for (h, ap) in t.heads.iter().zip(a) {
                        k[(i, *h)] += scale * t.coef * ap;
                    }
                }
            }
        }
        Some(k)
    }
}

impl SpreadingModel for GeneralModel {
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
        for (i, o) in out.iter_mut().enumerate() {
            let f: f64 = self.pair[i].iter().map(|t| t.coef * self.pair_family.value(&t.heads, z)).sum();
            let h: f64 = self.higher[i].iter().map(|t| t.coef * self.higher_family.value(&t.heads, z)).sum();
            *o = f + self.higher_scale * h;
        }
    }

    fn pressure_jacobian(&self, z: &[f64]) -> SquareMatrix {
        self.pairwise_jacobian(z).add(&self.higher_jacobian(z))
    }

    fn linearization(&self) -> SquareMatrix {
        self.pairwise_jacobian(&vec![0.0; self.n + self.m])
    }

    fn global_majorant(&self) -> SquareMatrix {
        let u = self.upper_bounds();
        self.bound_matrix(|f, heads| Some(f.majorant(heads, &u))).expect("majorants always exist")
    }

    fn upper_bounds(&self) -> Vec<f64> {
        let mut u = vec![1.0; self.n];
        u.extend_from_slice(&self.w_max);
        u
    }

    fn higher_support(&self) -> Vec<bool> {
        self.higher.iter().map(|t| !t.is_empty() && self.higher_scale != 0.0).collect()
    }

    fn linear_minorant(&self) -> Option<SquareMatrix> {
        let u = self.upper_bounds();
        self.bound_matrix(|f, heads| f.minorant(heads, &u))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub name: String,
    pub passed: bool,
    pub witness: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionChecklist {
    pub checks: Vec<AssumptionCheck>,
}

impl AssumptionChecklist {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{}: {}", c.name, c.witness.as_deref().unwrap_or("failed")))
            .collect()
    }
}

const ZERO_TOL: f64 = 1e-12;

/// Checks the modelling assumptions: initial state bounds (when given), a healthy fixed
/// point, increasing infection, vanishing higher-order linearisation, strong connectivity.
pub fn validate_assumptions(model: &GeneralModel, initial: Option<&[f64]>, seed: u64) -> AssumptionChecklist {
    let dim = model.n + model.m;
    let zero = vec![0.0; dim];
    let mut checks = Vec::new();
    let mut push = |name: &str, witness: Option<String>| {
        checks.push(AssumptionCheck { name: name.into(), passed: witness.is_none(), witness })
    };

    push(
        "initial_state_bounds",
        initial.and_then(|z0| {
            if z0.len() != dim {
                return Some(format!("initial state has length {}", z0.len()));
            }
            (0..model.n).find(|&i| !(0.0..=1.0).contains(&z0[i])).map(|i| format!("x_{i}(0) = {}", z0[i]))
        }),
    );

    let f0 = model.pairwise(&zero);
    let h0 = model.higher(&zero);
    push(
        "healthy_fixed_point",
        (0..dim)
            .find(|&i| f0[i].abs() > ZERO_TOL || h0[i].abs() > ZERO_TOL)
            .map(|i| format!("row {i}: f = {:e}, h = {:e}", f0[i], h0[i])),
    );

    let support = model.pair_support();
    let u = model.upper_bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut witness = None;
    for s in 0..100 {
        let z: Vec<f64> = u.iter().map(|ub| ub * rng.gen_range(0.01..0.99)).collect();
        let jf = model.pairwise_jacobian(&z);
        let jh = model.higher_jacobian(&z);
        let bad = (0..dim).flat_map(|i| (0..dim).map(move |j| (i, j))).find(|&(i, j)| {
            (support[(i, j)] > 0.0 && (jf[(i, j)].is_nan() || jf[(i, j)] <= 0.0)) || (j < model.n && jh[(i, j)] < 0.0)
        });
        if let Some((i, j)) = bad {
            witness = Some(format!("sample {s}: d p_{i} / d z_{j} has the wrong sign"));
            break;
        }
    }
    push("increasing_infection", witness);

    let jh0 = model.higher_jacobian(&zero);
    let step = 1e-6;
    let mut witness = None;
    'outer: for c in 0..dim {
        let mut zp = zero.clone();
        let mut zm = zero.clone();
        zp[c] = step;
        zm[c] = -step;
        let (hp, hm) = (model.higher(&zp), model.higher(&zm));
        for i in 0..dim {
            let fd = (hp[i] - hm[i]) / (2.0 * step);
            if jh0[(i, c)].abs() > ZERO_TOL || fd.abs() > 1e-6 {
                witness = Some(format!("d h_{i}(0) / d z_{c} = {:e} (difference quotient {fd:e})", jh0[(i, c)]));
                break 'outer;
            }
        }
    }
    push("higher_order_vanishes_at_zero", witness);

    push(
        "strong_connectivity",
        (!spectral::is_irreducible(&support)).then(|| {
            format!("pairwise support splits into {} components", spectral::strong_components(&support).len())
        }),
    );
    AssumptionChecklist { checks }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridOptions {
    /// Upper limit on the number of regular grid points.
    pub max_points: usize,
    /// Cells refined around the worst grid points.
    pub refine_cells: usize,
    pub refine_samples: usize,
    pub seed: u64,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self { max_points: 20_000, refine_cells: 8, refine_samples: 64, seed: 0 }
    }
}

/// Sampled Lyapunov certificate: `d_max = max vᵀD⁻¹p(z) / vᵀz` over the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCertificate {
    pub d_max: f64,
    pub argmax: Vec<f64>,
    /// Grid levels per coordinate.
    pub levels: usize,
    pub points: usize,
    pub weights: Vec<f64>,
    /// `d_max < 1` on every sampled point.
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralHealthyVerdict {
    pub families: [FamilyDescriptor; 2],
    /// Verdict from `R₀` and the majorant radius.
    pub verdict: HealthyVerdict,
    pub grid: GridCertificate,
}

pub fn general_healthy_classify(model: &GeneralModel, opts: GridOptions) -> Result<GeneralHealthyVerdict> {
    let verdict = healthy_classify(model)?;
    let grid = grid_certificate(model, opts)?;
    Ok(GeneralHealthyVerdict {
        families: [model.pair_family.descriptor(), model.higher_family.descriptor()],
        verdict,
        grid,
    })
}

fn grid_certificate(model: &GeneralModel, opts: GridOptions) -> Result<GridCertificate> {
    let dim = model.n + model.m;
    let u = model.upper_bounds();
    let lin = scale_by_healing(model, &model.linearization());
    let weights = match spectral::perron_vectors(&lin) {
        Ok(p) if p.left.iter().all(|v| *v > 0.0) => p.left,
        _ => vec![1.0; dim],
    };
    let d = model.healing();
    let ratio = |z: &[f64]| -> f64 {
        let p = model.pressure(z);
        let num: f64 = (0..dim).map(|i| weights[i] * p[i] / d[i]).sum();
        let den: f64 = (0..dim).map(|i| weights[i] * z[i]).sum();
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    };

    let levels = ((opts.max_points as f64).powf(1.0 / dim as f64).floor() as usize).clamp(2, 40);
    let mut scored: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut idx = vec![0usize; dim];
    loop {
        if idx.iter().any(|k| *k > 0) {
            let z: Vec<f64> = idx.iter().zip(&u).map(|(k, ub)| *k as f64 / levels as f64 * ub).collect();
            scored.push((ratio(&z), z));
        }
        let mut c = 0;
        while c < dim && idx[c] == levels {
            idx[c] = 0;
            c += 1;
        }
        if c == dim {
            break;
        }
        idx[c] += 1;
    }
    // Near the origin the ratio tends to the linearised value; sample the Perron ray there.
    if let Ok(p) = spectral::perron_vectors(&lin) {
        let s = p.right.iter().zip(&u).map(|(v, ub)| ub / v).fold(f64::INFINITY, f64::min);
        for e in 1..=12 {
            let z: Vec<f64> = p.right.iter().map(|v| v * s * 10f64.powi(-e)).collect();
            scored.push((ratio(&z), z));
        }
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut refined = Vec::new();
    for (_, z) in scored.iter().take(opts.refine_cells) {
        for _ in 0..opts.refine_samples {
            let w: Vec<f64> = z
                .iter()
                .zip(&u)
                .map(|(zi, ub)| (zi + ub / levels as f64 * rng.gen_range(-0.5..0.5)).clamp(0.0, *ub))
                .collect();
            refined.push((ratio(&w), w));
        }
    }
    let points = scored.len() + refined.len();
    let (d_max, argmax) = scored
        .into_iter()
        .chain(refined)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .ok_or_else(|| Error::Numerical("empty grid".into()))?;
    Ok(GridCertificate { d_max, argmax, levels, points, weights, certified: d_max < 1.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndemicTests {
    pub k: usize,
    pub u_tilde: Vec<f64>,
    /// `min_i (D⁻¹p(c))_i − ((k−1)²/k) ũ_i` over `supp(ũ)` at `c = ((k−1)/k) ũ`.
    pub k_form_margin: Option<f64>,
    pub k_form: bool,
    /// `T̂(c) ≥ c` at the same corner, the bound the fixed-point argument uses.
    pub k_form_map: bool,
    /// Largest ray scale with `D⁻¹F(c) ≥ c` on the Perron ray, if any.
    pub perron_alpha: Option<f64>,
    /// Largest ray scale with `T̂(c) ≥ c`, if any.
    pub perron_map_alpha: Option<f64>,
    pub certified: bool,
    /// Fixed-point iteration from the upper corner, when certified.
    pub equilibrium: Option<FixedPointOutcome>,
}

/// Endemic-existence tests: the `k`-corner test and the Perron-ray search.
pub fn general_endemic_tests(model: &GeneralModel, k: usize) -> Result<EndemicTests> {
    if k < 2 {
        return Err(Error::Contract(format!("k must be at least 2, got {k}")));
    }
    let kf = k as f64;
    let ut = u_tilde(model);
    let d = model.healing();
    let c: Vec<f64> = ut.iter().map(|v| (kf - 1.0) / kf * v).collect();
    let dp: Vec<f64> = model.pressure(&c).iter().zip(d).map(|(p, di)| p / di).collect();
    let support: Vec<usize> = (0..ut.len()).filter(|i| ut[*i] > 0.0).collect();
    let k_form_margin = support
        .iter()
        .map(|&i| dp[i] - (kf - 1.0).powi(2) / kf * ut[i])
        .fold(None, |a: Option<f64>, v| Some(a.map_or(v, |a| a.min(v))));
    let k_form = k_form_margin.is_some_and(|m| m >= 0.0);
    let t = fixed_point_map(model, &c);
    let k_form_map = !support.is_empty() && support.iter().all(|&i| t[i] >= c[i]);

    let (mut perron_alpha, mut perron_map_alpha) = (None, None);
    let lin = scale_by_healing(model, &model.linearization());
    if let Ok(p) = spectral::perron_vectors(&lin) {
        let u = model.upper_bounds();
        let s = p.right.iter().zip(&u).map(|(v, ub)| ub / v).fold(f64::INFINITY, f64::min);
        let n = model.n;
        for e in 0..60 {
            let alpha = 0.9 * 0.5f64.powi(e);
            let c: Vec<f64> = p.right.iter().map(|v| alpha * s * v).collect();
            let pr = model.pressure(&c);
            let f = model.pairwise(&c);
            let lit = (0..c.len()).all(|i| f[i] / d[i] >= c[i]);
            let map = (0..c.len()).all(|i| {
                let q = pr[i] / d[i];
                (if i < n { q / (1.0 + q) } else { q }) >= c[i]
            });
            if lit && perron_alpha.is_none() {
                perron_alpha = Some(alpha);
            }
            if map && perron_map_alpha.is_none() {
                perron_map_alpha = Some(alpha);
            }
            if perron_alpha.is_some() && perron_map_alpha.is_some() {
                break;
            }
        }
    }
    let certified = k_form || k_form_map || perron_alpha.is_some() || perron_map_alpha.is_some();
    let equilibrium = if certified {
        Some(fixed_point_solve(model, &model.upper_bounds(), FixedPointOptions::default())?)
    } else {
        None
    };
    Ok(EndemicTests {
        k,
        u_tilde: ut,
        k_form_margin,
        k_form,
        k_form_map,
        perron_alpha,
        perron_map_alpha,
        certified,
        equilibrium,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationPoint {
    pub eps: f64,
    pub state: Vec<f64>,
    /// `‖z*_ε − z*‖_∞`.
    pub drift: f64,
    pub jacobian_abscissa: f64,
    pub classification: Stability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub base_r0: f64,
    pub base_equilibrium: Vec<f64>,
    /// Exactly one endemic equilibrium was found for the pairwise model.
    pub base_unique: bool,
    pub base_hurwitz: HurwitzVerdict,
    pub points: Vec<PerturbationPoint>,
    /// First scale at which continuation lost the equilibrium.
    pub breakdown: Option<f64>,
}

/// Follows the endemic equilibrium of `ż = −D z + (I − Z)(F(z) + εH(z))` from `ε = 0`.
pub fn perturbation_scan(model: &GeneralModel, eps_list: &[f64]) -> Result<PerturbationReport> {
    let base = model.with_higher_scale(0.0)?;
    let base_r0 = system::reproduction_number(&base)?;
    if base_r0 <= 1.0 + system::THRESHOLD_BAND {
        return Err(Error::Contract(format!("perturbation scan needs R0 > 1, got {base_r0}")));
    }
    let endemic: Vec<_> = find_equilibria(&base, 16, 0)?.into_iter().filter(|e| e.is_positive()).collect();
    let base_unique = endemic.len() == 1;
    let z_star = endemic
        .into_iter()
        .max_by(|a, b| a.state.iter().sum::<f64>().total_cmp(&b.state.iter().sum::<f64>()))
        .ok_or_else(|| Error::Numerical("no endemic equilibrium for the pairwise model".into()))?
        .state;
    let base_hurwitz = spectral::hurwitz_certificate(&base.jacobian(&z_star), &z_star)?;

    let mut eps: Vec<f64> = eps_list.to_vec();
    eps.sort_by(f64::total_cmp);
    let mut points = Vec::new();
    let mut breakdown = None;
    let (mut cur_eps, mut cur) = (0.0, z_star.clone());
    for &target in &eps {
        match continue_to(model, cur_eps, &cur, target)? {
            Some(z) => {
                let m = model.with_higher_scale(target)?;
                let rep = classify_point(&m, &z)?;
                points.push(PerturbationPoint {
                    eps: target,
                    drift: dist_inf(&z, &z_star),
                    jacobian_abscissa: rep.jacobian_abscissa,
                    classification: rep.classification,
                    state: z.clone(),
                });
                cur_eps = target;
                cur = z;
            }
            None => {
                breakdown = Some(target);
                break;
            }
        }
    }
    Ok(PerturbationReport { base_r0, base_equilibrium: z_star, base_unique, base_hurwitz, points, breakdown })
}

/// Newton continuation in `ε` with step halving.
fn continue_to(model: &GeneralModel, from: f64, z: &[f64], to: f64) -> Result<Option<Vec<f64>>> {
    let mut e = from;
    let mut z = z.to_vec();
    let mut h = to - from;
    while e < to || h == 0.0 {
        let next = (e + h).min(to);
        let m = model.with_higher_scale(next)?;
        let domain: Domain = m.domain();
        let ok = newton(&m, &z)
            .ok()
            .filter(|o| o.converged && domain.contains(&o.state, ode::DOMAIN_TOL))
            .filter(|o| o.state.iter().all(|v| *v > system::DEDUP_TOL));
        match ok {
            Some(o) => {
                z = o.state;
                e = next;
                if h == 0.0 {
                    break;
                }
            }
            None if h.abs() > 1e-6 => h *= 0.5,
            None => return Ok(None),
        }
    }
    Ok(Some(z))
}

/// The bi-virus extension over general models.
pub type GeneralBiModel = BiModel<GeneralModel>;

/// Pairs two validated general models into a competing bi-virus system.
pub fn general_bi_extension(first: GeneralModel, second: GeneralModel) -> Result<GeneralBiModel> {
    for (k, m) in [&first, &second].into_iter().enumerate() {
        let checks = validate_assumptions(m, None, 0);
        if !checks.all_passed() {
            return Err(Error::Assumption(format!("virus {}: {}", k + 1, checks.failures().join("; "))));
        }
    }
    BiModel::new(first, second)
}
