//! Two competing viruses sharing the population: `ż^ν = −D^ν z^ν + (I − Z¹ − Z²) p^ν(z^ν)`.
//!
//! [`BiModel`] is generic over the per-virus [`SpreadingModel`], so the same analyses
//! serve the polynomial model and the general interaction families.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dist_inf, SquareMatrix};
use crate::ode::{self, Domain, IntegratorConfig, TerminalReason, TrajectoryRecord};
use crate::single_virus::SingleVirusModel;
use crate::spectral;
use crate::system::{
    self, classify_point, dedup_points, find_equilibria, healthy_classify, newton, scale_by_healing, Dynamics,
    EquilibriumReport, HealthyStability, HealthyVerdict, MonotoneReport, SpreadingModel, Stability,
    EQUILIBRIUM_RESIDUAL,
};

/// The polynomial bi-virus model.
pub type BiVirusModel = BiModel<SingleVirusModel>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Virus {
    First,
    Second,
}

impl Virus {
    pub fn index(self) -> usize {
        match self {
            Virus::First => 0,
            Virus::Second => 1,
        }
    }

    pub fn other(self) -> Self {
        match self {
            Virus::First => Virus::Second,
            Virus::Second => Virus::First,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiModel<M> {
    viruses: [M; 2],
}

impl<M: SpreadingModel> BiModel<M> {
    pub fn new(first: M, second: M) -> Result<Self> {
        if first.n_pop() != second.n_pop() || first.n_res() != second.n_res() {
            return Err(Error::Contract(format!(
                "viruses live on different node sets: ({}, {}) vs ({}, {})",
                first.n_pop(),
                first.n_res(),
                second.n_pop(),
                second.n_res()
            )));
        }
        Ok(Self { viruses: [first, second] })
    }

    pub fn virus(&self, v: Virus) -> &M {
        &self.viruses[v.index()]
    }

    /// Dimension of one virus block.
    pub fn block(&self) -> usize {
        self.viruses[0].n_pop() + self.viruses[0].n_res()
    }

    pub fn split<'a>(&self, z: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        z.split_at(self.block())
    }

    pub fn join(z1: &[f64], z2: &[f64]) -> Vec<f64> {
        let mut z = z1.to_vec();
        z.extend_from_slice(z2);
        z
    }

    /// Embeds a single-virus state of `v` with the other virus absent.
    pub fn embed(&self, v: Virus, z: &[f64]) -> Vec<f64> {
        let zero = vec![0.0; self.block()];
        match v {
            Virus::First => Self::join(z, &zero),
            Virus::Second => Self::join(&zero, z),
        }
    }

    pub fn healthy_classify(&self) -> Result<BiHealthyVerdict> {
        let per_virus = [healthy_classify(&self.viruses[0])?, healthy_classify(&self.viruses[1])?];
        let vs = [per_virus[0].verdict, per_virus[1].verdict];
        let verdict = if vs.contains(&HealthyStability::Unstable) {
            HealthyStability::Unstable
        } else if vs.contains(&HealthyStability::Inconclusive) {
            HealthyStability::Inconclusive
        } else if vs.iter().all(|v| *v == HealthyStability::GloballyExpStable) {
            HealthyStability::GloballyExpStable
        } else {
            HealthyStability::LocallyStable
        };
        Ok(BiHealthyVerdict { per_virus, verdict })
    }

    /// `s(−D^ν + (I − Z) L^ν)` where `Z` holds the population part of `other`.
    pub fn invasion_abscissa_with(&self, v: Virus, other: &[f64], l: &SquareMatrix) -> Result<f64> {
        let m = &self.viruses[v.index()];
        let n = m.n_pop();
        let mut a = l.clone();
        for i in 0..n {
            a.row_mut(i).iter_mut().for_each(|x| *x *= 1.0 - other[i]);
        }
        for (i, d) in m.healing().iter().enumerate() {
            a[(i, i)] -= d;
        }
        spectral::spectral_abscissa(&a)
    }

    /// Invasion abscissa of `v` against the other virus sitting at `other`, using `J_F(0)`.
    pub fn invasion_abscissa(&self, v: Virus, other: &[f64]) -> Result<f64> {
        let l = self.viruses[v.index()].linearization();
        self.invasion_abscissa_with(v, other, &l)
    }

    /// Dominant equilibria of virus `which`: every endemic equilibrium of its single-virus
    /// counterpart paired with the other virus absent.
    pub fn dominant_equilibria(&self, which: Virus, n_starts: usize, seed: u64) -> Result<Vec<DominantReport>> {
        let single = endemic_equilibria(&self.viruses[which.index()], n_starts, seed)?;
        single
            .into_iter()
            .map(|s| {
                let invasion = self.invasion_abscissa(which.other(), &s.state)?;
                let mut bi = classify_point(self, &self.embed(which, &s.state))?;
                bi.r0 = s.r0;
                bi.certificates.insert("invasion_abscissa".into(), invasion);
                let verdict = match (s.classification, Stability::from_abscissa(invasion)) {
                    (Stability::Unstable, _) | (_, Stability::Unstable) => Stability::Unstable,
                    (Stability::Stable, Stability::Stable) => Stability::Stable,
                    _ => Stability::Marginal,
                };
                Ok(DominantReport { virus: which, single: s, invasion_abscissa: invasion, report: bi, verdict })
            })
            .collect()
    }

    /// Checks the sufficient conditions for a coexisting equilibrium.
    pub fn coexistence_conditions(&self, n_starts: usize, seed: u64) -> Result<CoexistenceConditions> {
        let minorants = [self.viruses[0].linear_minorant(), self.viruses[1].linear_minorant()];
        let r0 = [system::reproduction_number(&self.viruses[0])?, system::reproduction_number(&self.viruses[1])?];
        let mut rep = CoexistenceConditions {
            minorant_available: minorants.iter().all(Option::is_some),
            r0,
            minorant_r0: [None, None],
            endemic: [None, None],
            invasion_abscissa: [None, None],
            certified: false,
        };
        let (Some(l1), Some(l2)) = (&minorants[0], &minorants[1]) else {
            return Ok(rep);
        };
        let ls = [l1, l2];
        for v in 0..2 {
            rep.minorant_r0[v] = Some(spectral::spectral_radius(&scale_by_healing(&self.viruses[v], ls[v]))?);
        }
        let above = |x: Option<f64>| x.is_some_and(|r| r > 1.0 + system::THRESHOLD_BAND);
        if !(r0.iter().all(|r| *r > 1.0 + system::THRESHOLD_BAND) && rep.minorant_r0.iter().all(|r| above(*r))) {
            return Ok(rep);
        }
        for v in 0..2 {
            let eq = endemic_equilibria(&self.viruses[v], n_starts, seed)?;
            let top = eq
                .into_iter()
                .max_by(|a, b| a.state.iter().sum::<f64>().total_cmp(&b.state.iter().sum::<f64>()))
                .ok_or_else(|| {
                    Error::Contract(format!("virus {} has no endemic equilibrium to anchor the test", v + 1))
                })?;
            rep.endemic[v] = Some(top.state);
        }
        for (v, w) in [(Virus::First, 1), (Virus::Second, 0)] {
            let other = rep.endemic[w].as_deref().unwrap_or_default();
            rep.invasion_abscissa[v.index()] = Some(self.invasion_abscissa_with(v, other, ls[v.index()])?);
        }
        rep.certified = rep.invasion_abscissa.iter().all(|s| s.is_some_and(|s| s > system::MARGINAL_BAND));
        Ok(rep)
    }

    /// The two-block map whose fixed points are the equilibria.
    pub fn coexistence_map(&self, z: &[f64]) -> Vec<f64> {
        let (z1, z2) = self.split(z);
        let n = self.viruses[0].n_pop();
        let mut out = Vec::with_capacity(z.len());
        for (m, own, other) in [(&self.viruses[0], z1, z2), (&self.viruses[1], z2, z1)] {
            let p = m.pressure(own);
            for (i, (pi, d)) in p.iter().zip(m.healing()).enumerate() {
                let q = pi / d;
                out.push(if i < n { (1.0 - other[i]) * q / (1.0 + q) } else { q });
            }
        }
        out
    }

    /// Lower corner `(ε¹y¹, ε²y²)` of the invariant box of the map.
    pub fn coexistence_box(&self, cond: &CoexistenceConditions) -> Result<(Vec<f64>, Vec<f64>)> {
        let (Some(e1), Some(e2)) = (&cond.endemic[0], &cond.endemic[1]) else {
            return Err(Error::Contract("coexistence box needs both endemic equilibria".into()));
        };
        let endemic = [e1, e2];
        let n = self.viruses[0].n_pop();
        let mut lower = Vec::new();
        for v in 0..2 {
            let m = &self.viruses[v];
            let l = m
                .linear_minorant()
                .ok_or_else(|| Error::Contract("coexistence box needs a linear minorant".into()))?;
            let dl = scale_by_healing(m, &l);
            let other = endemic[1 - v];
            let mut a = dl.clone();
            for i in 0..n {
                a.row_mut(i).iter_mut().for_each(|x| *x *= 1.0 - other[i]);
            }
            let p = spectral::perron_vectors(&a)?;
            let dly = dl.mul_vec(&p.right);
            let max_dly = dly.iter().cloned().fold(0.0, f64::max);
            let ratio = endemic[v].iter().zip(&p.right).map(|(z, y)| z / y).fold(f64::INFINITY, f64::min);
            let eps = 0.5 * ((p.value - 1.0) / max_dly).min(ratio);
            lower.extend(p.right.iter().map(|y| eps * y));
        }
        Ok((lower, Self::join(e1, e2)))
    }

    /// Locates coexisting equilibria: iterates the map inside the invariant box, then
    /// runs Newton on the drift from structured and random starts in the box. Every
    /// point found is probed with small random perturbations.
    pub fn coexistence_solve(
        &self,
        cond: &CoexistenceConditions,
        probe: &ProbeConfig,
        seed: u64,
    ) -> Result<CoexistenceSolution> {
        if !cond.certified {
            return Ok(CoexistenceSolution::not_found());
        }
        let (lower, upper) = self.coexistence_box(cond)?;
        let domain = self.domain();
        let mid: Vec<f64> = lower.iter().zip(&upper).map(|(a, b)| 0.5 * (a + b)).collect();

        const MAP_TOL: f64 = 1e-13;
        const MAP_ITER: usize = 20_000;
        let mut z = mid.clone();
        let mut step = f64::INFINITY;
        let mut iterations = 0;
        while iterations < MAP_ITER && step >= MAP_TOL {
            let next = self.coexistence_map(&z);
            step = dist_inf(&next, &z);
            z = next;
            iterations += 1;
        }
        let map_point = if step < MAP_TOL {
            newton(self, &z).ok().filter(|o| o.converged).map(|o| o.state)
        } else {
            None
        };

        let mut starts = vec![mid, upper.iter().map(|v| 0.5 * v).collect::<Vec<_>>()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        starts.extend(
            (0..20).map(|_| lower.iter().zip(&upper).map(|(a, b)| a + rng.gen::<f64>() * (b - a)).collect()),
        );
        let newton_points: Vec<Vec<f64>> = starts
            .par_iter()
            .filter_map(|s| newton(self, s).ok())
            .filter(|o| o.converged)
            .map(|o| o.state)
            .collect();

        let keep = |p: &Vec<f64>| {
            p.iter().all(|v| *v > system::DEDUP_TOL)
                && domain.contains(p, ode::DOMAIN_TOL)
                && self.residual(p) < EQUILIBRIUM_RESIDUAL
        };
        let map_point = map_point.filter(|p| keep(p));
        let mut found: Vec<(Vec<f64>, SolveMethod)> = map_point.iter().map(|p| (p.clone(), SolveMethod::Map)).collect();
        for p in dedup_points(newton_points.into_iter().filter(|p| keep(p)).collect()) {
            if found.iter().all(|(q, _)| dist_inf(q, &p) > system::DEDUP_TOL) {
                found.push((p, SolveMethod::Newton));
            }
        }

        let points = found
            .into_iter()
            .enumerate()
            .map(|(k, (state, method))| {
                let rep = classify_point(self, &state)?;
                let escape = self.probe(&state, probe, seed.wrapping_add(1 + k as u64))?;
                Ok(CoexistencePoint {
                    state,
                    residual: rep.residual,
                    jacobian_abscissa: rep.jacobian_abscissa,
                    classification: rep.classification,
                    method,
                    probe_escape_fraction: escape,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CoexistenceSolution {
            certified: true,
            box_lower: lower,
            box_upper: upper,
            map_iterations: iterations,
            map_converged: map_point.is_some(),
            flagged: map_point.is_none(),
            points,
        })
    }

    /// Fraction of random perturbations of `z` whose trajectory leaves the probe radius.
    pub fn probe(&self, z: &[f64], cfg: &ProbeConfig, seed: u64) -> Result<f64> {
        if cfg.samples == 0 {
            return Ok(0.0);
        }
        let domain = self.domain();
        let ic = IntegratorConfig::default().with_t_end(cfg.t_end).with_stride(cfg.t_end / 100.0);
        let escaped = (0..cfg.samples)
            .into_par_iter()
            .map(|k| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(k as u64);
                let dir: Vec<f64> = z.iter().map(|_| rng.gen_range(-1.0..=1.0)).collect();
                let norm = dir.iter().fold(0.0_f64, |a, b| a.max(b.abs())).max(f64::MIN_POSITIVE);
                let mut start: Vec<f64> =
                    z.iter().zip(&dir).map(|(a, d)| a + cfg.magnitude * d / norm).collect();
                clamp_into(&domain, &mut start);
                let traj = ode::integrate_until(
                    |s, out| self.drift_into(s, out),
                    &start,
                    &ic,
                    &domain,
                    |_, s| dist_inf(s, z) > cfg.radius,
                )?;
                Ok(traj.terminal == TerminalReason::StopRequested)
            })
            .collect::<Result<Vec<bool>>>()?;
        Ok(escaped.iter().filter(|e| **e).count() as f64 / cfg.samples as f64)
    }

    /// True iff `P J P` is irreducible Metzler at every interior recorded state, with `P`
    /// negating the second virus block.
    pub fn monotone_certificate(&self, traj: &TrajectoryRecord) -> MonotoneReport {
        system::monotone_check(&traj.states, &self.domain(), |z| self.conjugated_jacobian(z))
    }

    /// `P J(z) P`.
    pub fn conjugated_jacobian(&self, z: &[f64]) -> SquareMatrix {
        let b = self.block();
        let mut j = self.jacobian(z);
        for r in 0..2 * b {
            for c in 0..2 * b {
                if (r < b) != (c < b) {
                    j[(r, c)] = -j[(r, c)];
                }
            }
        }
        j
    }

    /// Full analysis: healthy verdict, dominant equilibria of both viruses and coexistence.
    pub fn report(&self, n_starts: usize, probe: &ProbeConfig, seed: u64) -> Result<BiReport> {
        let healthy = self.healthy_classify()?;
        let mut dominant = self.dominant_equilibria(Virus::First, n_starts, seed)?;
        dominant.extend(self.dominant_equilibria(Virus::Second, n_starts, seed)?);
        let conditions = self.coexistence_conditions(n_starts, seed)?;
        let solution = self.coexistence_solve(&conditions, probe, seed)?;
        Ok(BiReport { healthy_verdict: healthy, dominant, coexistence: CoexistenceSummary::new(conditions, solution) })
    }
}

/// Pulls a state back into the closed domain.
fn clamp_into(domain: &Domain, z: &mut [f64]) {
    for (v, u) in z.iter_mut().zip(&domain.upper) {
        *v = v.clamp(0.0, *u);
    }
    for &(a, b) in &domain.pair_sums {
        let s = z[a] + z[b];
        if s > 1.0 {
            z[a] /= s;
            z[b] /= s;
        }
    }
}

fn endemic_equilibria<M: SpreadingModel>(m: &M, n_starts: usize, seed: u64) -> Result<Vec<EquilibriumReport>> {
    Ok(find_equilibria(m, n_starts, seed)?.into_iter().filter(EquilibriumReport::is_positive).collect())
}

impl<M: SpreadingModel> Dynamics for BiModel<M> {
    fn dim(&self) -> usize {
        2 * self.block()
    }

    fn drift_into(&self, z: &[f64], out: &mut [f64]) {
        let b = self.block();
        let n = self.viruses[0].n_pop();
        let (z1, z2) = z.split_at(b);
        let (o1, o2) = out.split_at_mut(b);
        self.viruses[0].pressure_into(z1, o1);
        self.viruses[1].pressure_into(z2, o2);
        for (m, own, o) in [(&self.viruses[0], z1, o1), (&self.viruses[1], z2, o2)] {
            for (i, d) in m.healing().iter().enumerate() {
                let s = if i < n { 1.0 - z1[i] - z2[i] } else { 1.0 };
                o[i] = -d * own[i] + s * o[i];
            }
        }
    }

    fn jacobian(&self, z: &[f64]) -> SquareMatrix {
        let b = self.block();
        let n = self.viruses[0].n_pop();
        let (z1, z2) = z.split_at(b);
        let mut j = SquareMatrix::zeros(2 * b);
        for (v, m, own) in [(0, &self.viruses[0], z1), (1, &self.viruses[1], z2)] {
            let off = v * b;
            let other = (1 - v) * b;
            let p = m.pressure(own);
            let jp = m.pressure_jacobian(own);
            for i in 0..b {
                let s = if i < n { 1.0 - z1[i] - z2[i] } else { 1.0 };
                for c in 0..b {
                    j[(off + i, off + c)] = s * jp[(i, c)];
                }
                j[(off + i, off + i)] -= m.healing()[i];
                if i < n {
                    j[(off + i, off + i)] -= p[i];
                    j[(off + i, other + i)] -= p[i];
                }
            }
        }
        j
    }

    fn domain(&self) -> Domain {
        let mut upper = self.viruses[0].upper_bounds();
        upper.extend(self.viruses[1].upper_bounds());
        let b = self.block();
        Domain::new(upper).with_pair_sums((0..self.viruses[0].n_pop()).map(|i| (i, b + i)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiHealthyVerdict {
    pub per_virus: [HealthyVerdict; 2],
    pub verdict: HealthyStability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominantReport {
    pub virus: Virus,
    /// The endemic equilibrium of the single-virus counterpart.
    pub single: EquilibriumReport,
    /// Spectral abscissa of the other virus linearised at this equilibrium.
    pub invasion_abscissa: f64,
    /// The embedded bi-virus equilibrium with its full Jacobian spectrum.
    pub report: EquilibriumReport,
    pub verdict: Stability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoexistenceConditions {
    pub minorant_available: bool,
    pub r0: [f64; 2],
    /// `ρ(D⁻¹L)` for the linear minorant `L` of each virus.
    pub minorant_r0: [Option<f64>; 2],
    /// The largest endemic equilibrium of each single-virus counterpart.
    pub endemic: [Option<Vec<f64>>; 2],
    /// Virus ν invading the other virus's endemic equilibrium.
    pub invasion_abscissa: [Option<f64>; 2],
    pub certified: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub samples: usize,
    pub magnitude: f64,
    pub radius: f64,
    pub t_end: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { samples: 50, magnitude: 1e-4, radius: 1e-2, t_end: 2000.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Map,
    Newton,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoexistencePoint {
    pub state: Vec<f64>,
    pub residual: f64,
    pub jacobian_abscissa: f64,
    pub classification: Stability,
    pub method: SolveMethod,
    pub probe_escape_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoexistenceSolution {
    pub certified: bool,
    pub box_lower: Vec<f64>,
    pub box_upper: Vec<f64>,
    pub map_iterations: usize,
    pub map_converged: bool,
    /// Set when the map iteration did not settle and the points come from Newton alone.
    pub flagged: bool,
    pub points: Vec<CoexistencePoint>,
}

impl CoexistenceSolution {
    pub fn not_found() -> Self {
        Self {
            certified: false,
            box_lower: vec![],
            box_upper: vec![],
            map_iterations: 0,
            map_converged: false,
            flagged: false,
            points: vec![],
        }
    }

    /// The map fixed point if there is one, else the first Newton point.
    pub fn primary(&self) -> Option<&CoexistencePoint> {
        self.points.first()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoexistenceSummary {
    pub certified: bool,
    pub point: Option<Vec<f64>>,
    pub probe_escape_fraction: Option<f64>,
    pub conditions: CoexistenceConditions,
    pub solution: CoexistenceSolution,
}

impl CoexistenceSummary {
    pub fn new(conditions: CoexistenceConditions, solution: CoexistenceSolution) -> Self {
        let primary = solution.primary();
        Self {
            certified: conditions.certified,
            point: primary.map(|p| p.state.clone()),
            probe_escape_fraction: primary.map(|p| p.probe_escape_fraction),
            conditions,
            solution,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiReport {
    pub healthy_verdict: BiHealthyVerdict,
    pub dominant: Vec<DominantReport>,
    pub coexistence: CoexistenceSummary,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::simulate;

    fn scalar_pair(b1: f64, b2: f64) -> BiVirusModel {
        BiModel::new(SingleVirusModel::scalar(1.0, b1, 0.0).unwrap(), SingleVirusModel::scalar(1.0, b2, 0.0).unwrap())
            .unwrap()
    }

    #[test]
    fn drift_reductions() {
        let m = scalar_pair(2.0, 3.0);
        assert_eq!(m.drift(&[0.0, 0.0]), vec![0.0, 0.0]);
        let single = SingleVirusModel::scalar(1.0, 2.0, 0.0).unwrap();
        assert_eq!(m.drift(&[0.3, 0.0])[0], single.drift(&[0.3])[0]);
        let d = m.drift(&[0.4, 0.6]);
        assert!((d[0] + 0.4).abs() < 1e-15 && (d[1] + 0.6).abs() < 1e-15);
    }

    #[test]
    fn jacobian_matches_differences() {
        let a = SingleVirusModel::scalar(1.0, 2.0, 1.5).unwrap();
        let b = SingleVirusModel::scalar(0.7, 1.0, 3.0).unwrap();
        let m = BiModel::new(a, b).unwrap();
        let z = [0.3, 0.4];
        let j = m.jacobian(&z);
        let fd = system::finite_difference_jacobian(&m, &z, 1e-6);
        assert!(j.sub(&fd).max_abs() < 1e-8);
    }

    #[test]
    fn healthy_verdicts() {
        assert_eq!(scalar_pair(0.5, 0.8).healthy_classify().unwrap().verdict, HealthyStability::GloballyExpStable);
        assert_eq!(scalar_pair(2.0, 0.8).healthy_classify().unwrap().verdict, HealthyStability::Unstable);
    }

    #[test]
    fn dominant_invasion() {
        let m = scalar_pair(2.0, 0.5);
        let d = m.dominant_equilibria(Virus::First, 8, 1).unwrap();
        assert_eq!(d.len(), 1);
        assert!((d[0].single.state[0] - 0.5).abs() < 1e-12);
        assert!((d[0].invasion_abscissa + 0.75).abs() < 1e-12);
        assert_eq!(d[0].verdict, Stability::Stable);
        assert_eq!(d[0].report.classification, Stability::Stable);

        let m = scalar_pair(2.0, 3.0);
        let d = m.dominant_equilibria(Virus::First, 8, 1).unwrap();
        assert!((d[0].invasion_abscissa - 0.5).abs() < 1e-12);
        assert_eq!(d[0].verdict, Stability::Unstable);
        assert!(m.dominant_equilibria(Virus::Second, 8, 1).unwrap()[0].invasion_abscissa < 0.0);
    }

    #[test]
    fn scalar_coexistence_never_certified() {
        for (b1, b2) in [(2.0, 3.0), (3.0, 2.0), (2.0, 2.0), (0.5, 3.0)] {
            let c = scalar_pair(b1, b2).coexistence_conditions(8, 0).unwrap();
            assert!(!c.certified, "{b1} {b2}");
        }
        let s = scalar_pair(2.0, 3.0);
        let c = s.coexistence_conditions(8, 0).unwrap();
        assert!(s.coexistence_solve(&c, &ProbeConfig::default(), 0).unwrap().points.is_empty());
    }

    #[test]
    fn monotone_along_trajectory() {
        let a = SingleVirusModel::scalar(1.0, 2.0, 1.0).unwrap();
        let b = SingleVirusModel::scalar(1.0, 1.5, 1.0).unwrap();
        let m = BiModel::new(a, b).unwrap();
        let traj = simulate(&m, &[0.2, 0.3], &IntegratorConfig::default().with_t_end(5.0)).unwrap();
        let r = m.monotone_certificate(&traj);
        assert!(r.holds && r.checked > 0);
        let rec = TrajectoryRecord { states: vec![vec![0.0, 0.0]], ..traj };
        assert_eq!(m.monotone_certificate(&rec).skipped, 1);
    }
}
