//! Model-independent machinery: the drift interface, the fixed-point map, Newton
//! refinement, equilibrium search and classification, healthy-state thresholds.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dist_inf, norm_inf, SquareMatrix};
use crate::ode::{self, Domain, IntegratorConfig, TrajectoryRecord};
use crate::spectral;

/// Residual below which a point counts as an equilibrium.
pub const EQUILIBRIUM_RESIDUAL: f64 = 1e-9;
/// Equilibria closer than this in ∞-norm are merged.
pub const DEDUP_TOL: f64 = 1e-8;
/// Half-width of the band around zero reported as marginal.
pub const MARGINAL_BAND: f64 = 1e-9;
/// Distance from 1 within which a threshold test is inconclusive.
pub const THRESHOLD_BAND: f64 = 1e-9;

/// An autonomous vector field on a closed domain.
pub trait Dynamics: Sync {
    fn dim(&self) -> usize;
    fn drift_into(&self, z: &[f64], out: &mut [f64]);
    fn jacobian(&self, z: &[f64]) -> SquareMatrix;
    fn domain(&self) -> Domain;

    fn drift(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.drift_into(z, &mut out);
        out
    }

    fn residual(&self, z: &[f64]) -> f64 {
        norm_inf(&self.drift(z))
    }
}

/// A single-virus SIS/SIWS system `ż = −D z + (I − Z) p(z)` where `p = F + H` is the
/// infection pressure and `Z` carries the population states on its diagonal.
pub trait SpreadingModel: Sync {
    fn n_pop(&self) -> usize;
    fn n_res(&self) -> usize;
    /// Diagonal of `D_f`.
    fn healing(&self) -> &[f64];
    /// `F(z) + H(z)`.
    fn pressure_into(&self, z: &[f64], out: &mut [f64]);
    /// Jacobian of the pressure.
    fn pressure_jacobian(&self, z: &[f64]) -> SquareMatrix;
    /// `J_F(0)`; equals `B_f` for the polynomial model.
    fn linearization(&self) -> SquareMatrix;
    /// A nonnegative `K` with `p(z) ≤ K z` on the closed domain.
    fn global_majorant(&self) -> SquareMatrix;
    /// Upper corner `u = (1, …, 1, w_max)` of the domain.
    fn upper_bounds(&self) -> Vec<f64>;
    /// Rows carrying a nonzero higher-order term.
    fn higher_support(&self) -> Vec<bool>;
    /// A nonnegative `L` with `p(z) ≥ L z` on the closed domain, when one is known.
    fn linear_minorant(&self) -> Option<SquareMatrix>;

    fn pressure(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_pop() + self.n_res()];
        self.pressure_into(z, &mut out);
        out
    }
}

impl<T: SpreadingModel> Dynamics for T {
    fn dim(&self) -> usize {
        self.n_pop() + self.n_res()
    }

    fn drift_into(&self, z: &[f64], out: &mut [f64]) {
        self.pressure_into(z, out);
        let d = self.healing();
        let n = self.n_pop();
        for i in 0..out.len() {
            let s = if i < n { 1.0 - z[i] } else { 1.0 };
            out[i] = -d[i] * z[i] + s * out[i];
        }
    }

    fn jacobian(&self, z: &[f64]) -> SquareMatrix {
        let n = self.n_pop();
        let p = self.pressure(z);
        let mut j = self.pressure_jacobian(z);
        let d = self.healing();
        for i in 0..j.dim() {
            if i < n {
                j.row_mut(i).iter_mut().for_each(|a| *a *= 1.0 - z[i]);
                j[(i, i)] -= p[i];
            }
            j[(i, i)] -= d[i];
        }
        j
    }

    fn domain(&self) -> Domain {
        Domain::new(self.upper_bounds())
    }
}

/// Integrates a model's drift.
pub fn simulate<D: Dynamics + ?Sized>(model: &D, z0: &[f64], cfg: &IntegratorConfig) -> Result<TrajectoryRecord> {
    ode::integrate(|z, out| model.drift_into(z, out), z0, cfg, &model.domain())
}

/// `D⁻¹ M`.
pub fn scale_by_healing<M: SpreadingModel>(model: &M, m: &SquareMatrix) -> SquareMatrix {
    let inv: Vec<f64> = model.healing().iter().map(|d| 1.0 / d).collect();
    m.scale_rows(&inv)
}

/// `R₀ = ρ(D⁻¹ J_F(0))`.
pub fn reproduction_number<M: SpreadingModel>(model: &M) -> Result<f64> {
    spectral::spectral_radius(&scale_by_healing(model, &model.linearization()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HealthyStability {
    LocallyStable,
    GloballyExpStable,
    Unstable,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthyVerdict {
    pub r0: f64,
    /// Spectral radius of `D⁻¹K` for the global majorant `K`.
    pub global_matrix_radius: f64,
    pub verdict: HealthyStability,
}

/// Healthy-state verdict from `R₀` and the global majorant radius.
pub fn healthy_classify<M: SpreadingModel>(model: &M) -> Result<HealthyVerdict> {
    let r0 = reproduction_number(model)?;
    let global = spectral::spectral_radius(&scale_by_healing(model, &model.global_majorant()))?;
    let verdict = if (r0 - 1.0).abs() <= THRESHOLD_BAND {
        HealthyStability::Inconclusive
    } else if r0 > 1.0 {
        HealthyStability::Unstable
    } else if global < 1.0 {
        HealthyStability::GloballyExpStable
    } else {
        HealthyStability::LocallyStable
    };
    Ok(HealthyVerdict { r0, global_matrix_radius: global, verdict })
}

/// Constants of the decay bound `V(t) ≤ V(0)·exp((λ − 1)·d_min·t)` for `V = vᵀD⁻¹z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayEnvelope {
    pub lambda: f64,
    /// Left Perron vector of `D⁻¹K`.
    pub weights: Vec<f64>,
    pub healing: Vec<f64>,
    pub d_min: f64,
}

impl DecayEnvelope {
    pub fn lyapunov(&self, z: &[f64]) -> f64 {
        self.weights.iter().zip(z).zip(&self.healing).map(|((v, z), d)| v * z / d).sum()
    }

    pub fn rate(&self) -> f64 {
        (self.lambda - 1.0) * self.d_min
    }

    /// `V(0)·exp(rate·t)`.
    pub fn bound(&self, z0: &[f64], t: f64) -> f64 {
        self.lyapunov(z0) * (self.rate() * t).exp()
    }

    /// Componentwise bound on `z_i(t)` implied by the Lyapunov bound.
    pub fn component_bound(&self, z0: &[f64], t: f64, i: usize) -> f64 {
        self.healing[i] / self.weights[i] * self.bound(z0, t)
    }
}

pub fn decay_envelope<M: SpreadingModel>(model: &M) -> Result<DecayEnvelope> {
    let k = scale_by_healing(model, &model.global_majorant());
    let p = spectral::perron_vectors(&k)?;
    let healing = model.healing().to_vec();
    let d_min = healing.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(DecayEnvelope { lambda: p.value, weights: p.left, healing, d_min })
}

/// ũ: the upper corner restricted to rows with higher-order support.
pub fn u_tilde<M: SpreadingModel>(model: &M) -> Vec<f64> {
    model
        .upper_bounds()
        .into_iter()
        .zip(model.higher_support())
        .map(|(u, s)| if s { u } else { 0.0 })
        .collect()
}

/// Endemic-existence test on the high-infection corner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaReport {
    /// `min_i (D⁻¹ p(ũ))_i / ũ_i` over `supp(ũ)`; `None` when ũ vanishes.
    pub theta: Option<f64>,
    pub satisfied: bool,
    pub u_tilde: Vec<f64>,
    pub vacuous: bool,
    /// How the per-row quantity is normalised.
    pub normalization: String,
}

pub const THETA_THRESHOLD: f64 = 4.5;

pub fn theta_existence<M: SpreadingModel>(model: &M) -> ThetaReport {
    let u = u_tilde(model);
    let p = model.pressure(&u);
    let d = model.healing();
    let theta = u
        .iter()
        .enumerate()
        .filter(|(_, &ui)| ui > 0.0)
        .map(|(i, &ui)| p[i] / d[i] / ui)
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))));
    ThetaReport {
        theta,
        satisfied: theta.is_some_and(|t| t >= THETA_THRESHOLD),
        vacuous: theta.is_none(),
        u_tilde: u,
        normalization: "componentwise: (D^-1 (B u + H(u)))_i / u_i on supp(u)".into(),
    }
}

/// The fixed-point map `T̂(z)`: population rows `p/(1+p)`, resource rows `p`, with `p = D⁻¹(F+H)`.
pub fn fixed_point_map<M: SpreadingModel>(model: &M, z: &[f64]) -> Vec<f64> {
    let mut p = model.pressure(z);
    let n = model.n_pop();
    for (i, (pi, d)) in p.iter_mut().zip(model.healing()).enumerate() {
        let q = *pi / d;
        *pi = if i < n { q / (1.0 + q) } else { q };
    }
    p
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointOutcome {
    pub state: Vec<f64>,
    pub iterations: usize,
    /// Last `‖z_{k+1} − z_k‖_∞`.
    pub last_step: f64,
    /// `‖drift(state)‖_∞`.
    pub residual: f64,
    pub converged: bool,
}

/// Iterates `T̂` from `z0` until successive iterates agree to `tol`.
pub fn fixed_point_solve<M: SpreadingModel>(
    model: &M,
    z0: &[f64],
    opts: FixedPointOptions,
) -> Result<FixedPointOutcome> {
    let dim = model.n_pop() + model.n_res();
    if z0.len() != dim {
        return Err(Error::Contract(format!("start has length {}, model has {dim}", z0.len())));
    }
    let domain = Domain::new(model.upper_bounds());
    if !domain.contains(z0, ode::DOMAIN_TOL) {
        return Err(Error::Contract("fixed-point start lies outside the domain".into()));
    }
    let mut z = z0.to_vec();
    let mut step = f64::INFINITY;
    let mut it = 0;
    while it < opts.max_iter {
        let next = fixed_point_map(model, &z);
        step = dist_inf(&next, &z);
        z = next;
        it += 1;
        if !step.is_finite() {
            return Err(Error::Numerical("fixed-point iterate became non-finite".into()));
        }
        if step < opts.tol {
            break;
        }
    }
    let residual = Dynamics::residual(model, &z);
    Ok(FixedPointOutcome {
        converged: step < opts.tol && residual < EQUILIBRIUM_RESIDUAL,
        state: z,
        iterations: it,
        last_step: step,
        residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonOutcome {
    pub state: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Damped Newton on `drift(z) = 0`, halving the step until the residual decreases.
pub fn newton<D: Dynamics + ?Sized>(model: &D, z0: &[f64]) -> Result<NewtonOutcome> {
    const MAX_ITER: usize = 100;
    let mut z = z0.to_vec();
    let mut f = model.drift(&z);
    let mut r = norm_inf(&f);
    let mut it = 0;
    while it < MAX_ITER && r > 1e-14 {
        it += 1;
        let j = model.jacobian(&z);
        let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
        let dz = j.solve(&rhs)?;
        let mut lambda = 1.0;
        let mut improved = false;
        while lambda > 1e-10 {
            let cand: Vec<f64> = z.iter().zip(&dz).map(|(a, b)| a + lambda * b).collect();
            let fc = model.drift(&cand);
            let rc = norm_inf(&fc);
            if rc.is_finite() && rc < r {
                z = cand;
                f = fc;
                r = rc;
                improved = true;
                break;
            }
            lambda *= 0.5;
        }
        if !improved || norm_inf(&dz) * lambda < 1e-16 {
            break;
        }
    }
    Ok(NewtonOutcome { converged: r < EQUILIBRIUM_RESIDUAL, state: z, residual: r, iterations: it })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
    Marginal,
}

impl Stability {
    pub fn from_abscissa(s: f64) -> Self {
        if s < -MARGINAL_BAND {
            Stability::Stable
        } else if s > MARGINAL_BAND {
            Stability::Unstable
        } else {
            Stability::Marginal
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub state: Vec<f64>,
    pub residual: f64,
    pub jacobian_abscissa: f64,
    pub classification: Stability,
    pub r0: Option<f64>,
    pub theta: Option<f64>,
    pub certificates: BTreeMap<String, f64>,
}

impl EquilibriumReport {
    pub fn is_healthy(&self) -> bool {
        self.state.iter().all(|v| v.abs() < DEDUP_TOL)
    }

    pub fn is_positive(&self) -> bool {
        self.state.iter().all(|v| *v > DEDUP_TOL)
    }
}

/// Residual and Jacobian-spectrum classification of a candidate equilibrium.
pub fn classify_point<D: Dynamics + ?Sized>(model: &D, z: &[f64]) -> Result<EquilibriumReport> {
    let s = spectral::max_real_part(&model.jacobian(z))?;
    Ok(EquilibriumReport {
        state: z.to_vec(),
        residual: model.residual(z),
        jacobian_abscissa: s,
        classification: Stability::from_abscissa(s),
        r0: None,
        theta: None,
        certificates: BTreeMap::new(),
    })
}

fn lexicographic(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(std::cmp::Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    std::cmp::Ordering::Equal
}

/// Sorts lexicographically and merges points within [`DEDUP_TOL`].
pub fn dedup_points(mut pts: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    pts.sort_by(|a, b| lexicographic(a, b));
    let mut out: Vec<Vec<f64>> = Vec::new();
    for p in pts {
        if out.iter().all(|q| dist_inf(q, &p) > DEDUP_TOL) {
            out.push(p);
        }
    }
    out
}

/// Multistart equilibrium search: fixed-point iteration from structured and random
/// starts, Newton from random starts and midpoints, then classification.
pub fn find_equilibria<M: SpreadingModel>(
    model: &M,
    n_starts: usize,
    seed: u64,
) -> Result<Vec<EquilibriumReport>> {
    let dim = model.n_pop() + model.n_res();
    let upper = model.upper_bounds();
    let domain = Domain::new(upper.clone());
    let r0 = reproduction_number(model)?;
    let theta = theta_existence(model).theta;

    let mut fp_starts: Vec<Vec<f64>> = vec![vec![0.0; dim], upper.clone()];
    let ut = u_tilde(model);
    if ut.iter().any(|v| *v > 0.0) {
        fp_starts.push(ut.iter().map(|v| 2.0 / 3.0 * v).collect());
    }
    if r0 > 1.0 {
        if let Ok(p) = spectral::perron_vectors(&scale_by_healing(model, &model.linearization())) {
            let cap = 1.0 - 1.0 / r0;
            let alpha = p
                .right
                .iter()
                .zip(&upper)
                .map(|(v, u)| (cap * u.min(1.0)) / v)
                .fold(f64::INFINITY, f64::min);
            fp_starts.push(p.right.iter().map(|v| alpha * v).collect());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random: Vec<Vec<f64>> = (0..n_starts)
        .map(|_| upper.iter().map(|u| rng.gen::<f64>() * u).collect())
        .collect();
    fp_starts.extend(random.iter().cloned());

    let opts = FixedPointOptions::default();
    let from_fp: Vec<Vec<f64>> = fp_starts
        .par_iter()
        .filter_map(|s| fixed_point_solve(model, s, opts).ok())
        .filter_map(|o| polish(model, &o.state, &domain))
        .collect();
    let from_newton: Vec<Vec<f64>> = random.par_iter().filter_map(|s| polish(model, s, &domain)).collect();
    let mut found = dedup_points(from_fp.into_iter().chain(from_newton).collect());

    let mids: Vec<Vec<f64>> = found
        .iter()
        .enumerate()
        .flat_map(|(i, a)| found[i + 1..].iter().map(move |b| a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect()))
        .collect();
    let from_mid: Vec<Vec<f64>> = mids.par_iter().filter_map(|s| polish(model, s, &domain)).collect();
    found.extend(from_mid);
    let found = dedup_points(found);

    found
        .iter()
        .map(|z| {
            let mut rep = classify_point(model, z)?;
            rep.r0 = Some(r0);
            rep.theta = theta;
            Ok(rep)
        })
        .collect()
}

/// Newton refinement that keeps only in-domain equilibria.
fn polish<D: Dynamics + ?Sized>(model: &D, z: &[f64], domain: &Domain) -> Option<Vec<f64>> {
    let out = newton(model, z).ok()?;
    if out.converged && domain.contains(&out.state, ode::DOMAIN_TOL) {
        Some(out.state)
    } else {
        None
    }
}

/// Outcome of a pointwise monotonicity check along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonotoneReport {
    pub holds: bool,
    pub checked: usize,
    /// Recorded states on the domain boundary, outside the open domain.
    pub skipped: usize,
}

/// True iff `jacobian(z)` is irreducible Metzler at every interior recorded state.
pub fn monotone_check<J>(states: &[Vec<f64>], domain: &Domain, jacobian: J) -> MonotoneReport
where
    J: Fn(&[f64]) -> SquareMatrix,
{
    let mut rep = MonotoneReport { holds: true, checked: 0, skipped: 0 };
    for z in states {
        if !domain.is_interior(z) {
            rep.skipped += 1;
            continue;
        }
        rep.checked += 1;
        let j = jacobian(z);
        if !(j.is_metzler() && spectral::is_irreducible(&j)) {
            rep.holds = false;
        }
    }
    rep
}

/// Monotone-system certificate for a single spreading model.
pub fn monotone_certificate<M: SpreadingModel>(model: &M, traj: &TrajectoryRecord) -> MonotoneReport {
    monotone_check(&traj.states, &Dynamics::domain(model), |z| Dynamics::jacobian(model, z))
}

/// Central finite-difference Jacobian, used as an oracle.
pub fn finite_difference_jacobian<D: Dynamics + ?Sized>(model: &D, z: &[f64], h: f64) -> SquareMatrix {
    let n = model.dim();
    let mut j = SquareMatrix::zeros(n);
    let mut zp = z.to_vec();
    for c in 0..n {
        zp[c] = z[c] + h;
        let fp = model.drift(&zp);
        zp[c] = z[c] - h;
        let fm = model.drift(&zp);
        zp[c] = z[c];
        for r in 0..n {
            j[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    j
}
