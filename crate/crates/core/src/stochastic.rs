//! Exact simulation of the microscopic process: binary node states jump as a
//! continuous-time Markov chain while resource concentrations follow their linear ODE
//! between jumps. Jump times are drawn by thinning.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::IntegratorConfig;
use crate::single_virus::SingleVirusModel;
use crate::system::{simulate, SpreadingModel};

/// Name of the generator recorded in ensemble metadata.
pub const RNG_NAME: &str = "ChaCha8 (rand_chacha 0.3), seed_from_u64(master_seed), stream = run index";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroState {
    pub x: Vec<bool>,
    pub w: Vec<f64>,
    pub t: f64,
}

impl MicroState {
    pub fn new(x: Vec<bool>, w: Vec<f64>) -> Self {
        Self { x, w, t: 0.0 }
    }

    pub fn infected_fraction(&self) -> f64 {
        self.x.iter().filter(|b| **b).count() as f64 / self.x.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub node: usize,
    /// True for an infection, false for a recovery.
    pub infected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroTrajectory {
    pub events: Vec<Event>,
    /// Thinning proposals that were rejected.
    pub rejected: usize,
    pub grid: Vec<f64>,
    /// Node states at each grid time.
    pub states: Vec<Vec<bool>>,
    /// Resource levels at each grid time.
    pub resources: Vec<Vec<f64>>,
    pub final_state: MicroState,
}

/// A resource-dependent contribution `coef · (X_pop or 1) · w_res` to a population row.
#[derive(Debug, Clone, Copy)]
struct ResourceTerm {
    pop: Option<usize>,
    res: usize,
    coef: f64,
}

/// Precomputed incidence for incremental propensity updates.
#[derive(Debug)]
struct Incidence {
    /// `(row, coef)` for every pairwise entry with this population column.
    pair_cols: Vec<Vec<(usize, f64)>>,
    /// `(row, j, k, coef)` for every population-only quadratic term containing this node.
    quad_by_node: Vec<Vec<(usize, usize, usize, f64)>>,
    resource_terms: Vec<Vec<ResourceTerm>>,
}

impl Incidence {
    fn new(model: &SingleVirusModel) -> Self {
        let n = model.n();
        let dim = n + model.m();
        let b = model.b_f();
        let mut pair_cols = vec![Vec::new(); n];
        let mut quad_by_node = vec![Vec::new(); n];
        let mut resource_terms = vec![Vec::new(); n];
        for i in 0..dim {
            for j in 0..dim {
                let c = b[(i, j)];
                if c == 0.0 {
                    continue;
                }
                if j < n {
                    pair_cols[j].push((i, c));
                } else {
                    resource_terms[i].push(ResourceTerm { pop: None, res: j - n, coef: c });
                }
            }
            for t in &model.quad_terms()[i] {
                if t.k < n {
                    quad_by_node[t.j].push((i, t.j, t.k, t.coef));
                    if t.k != t.j {
                        quad_by_node[t.k].push((i, t.j, t.k, t.coef));
                    }
                } else {
                    resource_terms[i].push(ResourceTerm { pop: Some(t.j), res: t.k - n, coef: t.coef });
                }
            }
        }
        Self { pair_cols, quad_by_node, resource_terms }
    }

    /// Pressure from population heads only (resources set to zero), for every row.
    fn pop_pressure(&self, model: &SingleVirusModel, x: &[bool]) -> Vec<f64> {
        let mut z = vec![0.0; model.n() + model.m()];
        for (zi, xi) in z.iter_mut().zip(x) {
            *zi = *xi as u8 as f64;
        }
        let mut p = model.pressure(&z);
        for pi in p.iter_mut() {
            *pi = pi.max(0.0);
        }
        p
    }

    fn flip(&self, px: &mut [f64], x: &mut [bool], k: usize) {
        let before = x[k];
        let sign = if before { -1.0 } else { 1.0 };
        for &(i, c) in &self.pair_cols[k] {
            px[i] += sign * c;
        }
        let val = |x: &[bool], j: usize, l: usize| (x[j] && x[l]) as u8 as f64;
        let old: Vec<f64> = self.quad_by_node[k].iter().map(|&(_, j, l, c)| c * val(x, j, l)).collect();
        x[k] = !before;
        for (&(i, j, l, c), o) in self.quad_by_node[k].iter().zip(old) {
            px[i] += c * val(x, j, l) - o;
        }
        for &(i, _) in &self.pair_cols[k] {
            px[i] = px[i].max(0.0);
        }
    }

    fn infection_rate(&self, px: &[f64], x: &[bool], w: &[f64], i: usize) -> f64 {
        let mut r = px[i];
        for t in &self.resource_terms[i] {
            let g = t.pop.map_or(1.0, |j| x[j] as u8 as f64);
            r += t.coef * g * w[t.res];
        }
        r
    }
}

/// Exact resource update over `dt` with frozen node states.
fn advance_resources(w: &mut [f64], target: &[f64], decay: &[f64], dt: f64) {
    for ((wj, tj), dj) in w.iter_mut().zip(target).zip(decay) {
        *wj = tj + (*wj - tj) * (-dj * dt).exp();
    }
}

/// Simulates one realisation and samples it on `grid`.
pub fn simulate_exact<R: Rng>(
    model: &SingleVirusModel,
    init: &MicroState,
    t_end: f64,
    grid: &[f64],
    rng: &mut R,
) -> Result<MicroTrajectory> {
    let (n, m) = (model.n(), model.m());
    if init.x.len() != n || init.w.len() != m {
        return Err(Error::Contract(format!(
            "micro state has ({}, {}) entries, model has ({n}, {m})",
            init.x.len(),
            init.w.len()
        )));
    }
    if init.w.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::Contract("resource levels must be nonnegative".into()));
    }
    if !(t_end.is_finite() && t_end >= init.t) || grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Contract("grid must be sorted and t_end finite".into()));
    }
    let inc = Incidence::new(model);
    let delta = &model.d_f()[..n];
    let decay = &model.d_f()[n..];
    let mut x = init.x.clone();
    let mut w = init.w.clone();
    let mut t = init.t;
    let mut px = inc.pop_pressure(model, &x);

    let mut events = Vec::new();
    let mut rejected = 0;
    let mut states = Vec::with_capacity(grid.len());
    let mut resources = Vec::with_capacity(grid.len());
    let mut next_grid = 0;
    let mut w_bar = vec![0.0; m];

    loop {
        let target: Vec<f64> = (0..m).map(|j| px[n + j] / decay[j]).collect();
        for j in 0..m {
            w_bar[j] = w[j].max(target[j]);
        }
        let bound: f64 = (0..n)
            .map(|i| if x[i] { delta[i] } else { inc.infection_rate(&px, &x, &w_bar, i) })
            .sum();
        let tau = if bound > 0.0 { -(1.0 - rng.gen::<f64>()).ln() / bound } else { f64::INFINITY };
        let t_next = t + tau;
        while next_grid < grid.len() && grid[next_grid] <= t_next.min(t_end) {
            let mut wg = w.clone();
            advance_resources(&mut wg, &target, decay, grid[next_grid] - t);
            states.push(x.clone());
            resources.push(wg);
            next_grid += 1;
        }
        if t_next > t_end {
            advance_resources(&mut w, &target, decay, t_end - t);
            t = t_end;
            break;
        }
        advance_resources(&mut w, &target, decay, tau);
        t = t_next;
        let rates: Vec<f64> =
            (0..n).map(|i| if x[i] { delta[i] } else { inc.infection_rate(&px, &x, &w, i) }).collect();
        let total: f64 = rates.iter().sum();
        let u = rng.gen::<f64>() * bound;
        if u >= total {
            rejected += 1;
            continue;
        }
        let mut acc = 0.0;
        let mut node = n - 1;
        for (i, r) in rates.iter().enumerate() {
            acc += r;
            if u < acc {
                node = i;
                break;
            }
        }
        let infected = !x[node];
        inc.flip(&mut px, &mut x, node);
        events.push(Event { t, node, infected });
    }
    while next_grid < grid.len() {
        states.push(x.clone());
        resources.push(w.clone());
        next_grid += 1;
    }
    Ok(MicroTrajectory {
        events,
        rejected,
        grid: grid.to_vec(),
        states,
        resources,
        final_state: MicroState { x, w, t },
    })
}

/// [`simulate_exact`] with a generator seeded from `seed`.
pub fn simulate_exact_seeded(
    model: &SingleVirusModel,
    init: &MicroState,
    t_end: f64,
    grid: &[f64],
    seed: u64,
) -> Result<MicroTrajectory> {
    simulate_exact(model, init, t_end, grid, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// How each run is initialised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MicroInit {
    Fixed(MicroState),
    /// Node `i` starts infected with probability `p[i]`; resources start at `w`.
    Bernoulli { p: Vec<f64>, w: Vec<f64> },
}

impl MicroInit {
    fn draw<R: Rng>(&self, rng: &mut R) -> MicroState {
        match self {
            MicroInit::Fixed(s) => s.clone(),
            MicroInit::Bernoulli { p, w } => {
                MicroState::new(p.iter().map(|pi| rng.gen::<f64>() < *pi).collect(), w.clone())
            }
        }
    }

    /// Mean-field initial state matching this initialisation.
    pub fn mean_field(&self) -> Vec<f64> {
        match self {
            MicroInit::Fixed(s) => s.x.iter().map(|b| *b as u8 as f64).chain(s.w.iter().copied()).collect(),
            MicroInit::Bernoulli { p, w } => p.iter().chain(w).copied().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub runs: usize,
    pub t_end: f64,
    /// Spacing of the sampling grid.
    pub dt: f64,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub runs: usize,
    pub times: Vec<f64>,
    pub mean_frac: Vec<f64>,
    /// Normal-approximation 95% half-widths of `mean_frac`.
    pub ci_half: Vec<f64>,
    /// Empirical infection probability per time and node.
    pub node_prob: Vec<Vec<f64>>,
    /// Mean resource level per time and resource.
    pub resource_mean: Vec<Vec<f64>>,
    pub master_seed: u64,
    pub rng: String,
}

/// Summation by recursive halving; the result depends only on the order of `v`.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Sampling grid `0, dt, 2dt, …, t_end`.
pub fn time_grid(t_end: f64, dt: f64) -> Vec<f64> {
    let steps = (t_end / dt).round() as usize;
    (0..=steps).map(|k| (k as f64 * dt).min(t_end)).collect()
}

/// Runs independent realisations in parallel and reduces them deterministically.
pub fn ensemble(model: &SingleVirusModel, init: &MicroInit, cfg: &EnsembleConfig) -> Result<EnsembleStats> {
    if cfg.runs == 0 {
        return Err(Error::Contract("an ensemble needs at least one run".into()));
    }
    if !(cfg.dt > 0.0 && cfg.t_end >= 0.0) {
        return Err(Error::Contract("grid spacing must be positive".into()));
    }
    let grid = time_grid(cfg.t_end, cfg.dt);
    let runs: Vec<MicroTrajectory> = (0..cfg.runs)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.master_seed);
            rng.set_stream(r as u64);
            let s0 = init.draw(&mut rng);
            simulate_exact(model, &s0, cfg.t_end, &grid, &mut rng)
        })
        .collect::<Result<_>>()?;

    let (n, m) = (model.n(), model.m());
    let k = cfg.runs as f64;
    let mut mean_frac = Vec::with_capacity(grid.len());
    let mut ci_half = Vec::with_capacity(grid.len());
    let mut node_prob = Vec::with_capacity(grid.len());
    let mut resource_mean = Vec::with_capacity(grid.len());
    for g in 0..grid.len() {
        let fracs: Vec<f64> =
            runs.iter().map(|r| r.states[g].iter().filter(|b| **b).count() as f64 / n as f64).collect();
        let mean = pairwise_sum(&fracs) / k;
        let var = if cfg.runs > 1 {
            let dev: Vec<f64> = fracs.iter().map(|f| (f - mean).powi(2)).collect();
            pairwise_sum(&dev) / (k - 1.0)
        } else {
            0.0
        };
        mean_frac.push(mean);
        ci_half.push(1.96 * (var / k).sqrt());
        node_prob.push(
            (0..n).map(|i| runs.iter().filter(|r| r.states[g][i]).count() as f64 / k).collect::<Vec<_>>(),
        );
        resource_mean.push(
            (0..m)
                .map(|j| pairwise_sum(&runs.iter().map(|r| r.resources[g][j]).collect::<Vec<_>>()) / k)
                .collect(),
        );
    }
    Ok(EnsembleStats {
        runs: cfg.runs,
        times: grid,
        mean_frac,
        ci_half,
        node_prob,
        resource_mean,
        master_seed: cfg.master_seed,
        rng: RNG_NAME.into(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldComparison {
    pub times: Vec<f64>,
    pub ensemble_mean: Vec<f64>,
    pub mean_field: Vec<f64>,
    /// `max_t |ensemble − mean field|` of the mean infected fraction.
    pub gap: f64,
}

/// Compares the ensemble mean infected fraction with the mean-field trajectory from `z0`.
pub fn compare_with_mean_field(
    model: &SingleVirusModel,
    stats: &EnsembleStats,
    z0: &[f64],
) -> Result<MeanFieldComparison> {
    let t_end = *stats.times.last().unwrap_or(&0.0);
    let cfg = IntegratorConfig::default().with_t_end(t_end).without_equilibrium_stop();
    let traj = simulate(model, z0, &cfg)?;
    let n = model.n_pop();
    let mean_field: Vec<f64> =
        stats.times.iter().map(|t| traj.state_at(*t)[..n].iter().sum::<f64>() / n as f64).collect();
    let gap = mean_field.iter().zip(&stats.mean_frac).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(MeanFieldComparison { times: stats.times.clone(), ensemble_mean: stats.mean_frac.clone(), mean_field, gap })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergraph::{DirectedHypergraph, NodeSet};
    use crate::single_virus::Rates;


    fn siws() -> SingleVirusModel {
        let mut h = DirectedHypergraph::new(NodeSet::new(3, 1).unwrap());
        for (t, hd) in [(0, 1), (1, 2), (2, 0), (0, 3), (3, 1)] {
            h.add_full_edge(t, &[hd], 1.0).unwrap();
        }
        h.add_full_edge(0, &[1, 2], 1.0).unwrap();
        h.add_full_edge(1, &[0, 3], 1.0).unwrap();
        SingleVirusModel::assemble(&h, &Rates::uniform(3, 1, 1.0, 0.5, 0.6).with_higher(3, vec![0.8; 4])).unwrap()
    }

    #[test]
    fn healthy_state_is_absorbing() {
        let m = siws();
        let tr = simulate_exact_seeded(&m, &MicroState::new(vec![false; 3], vec![0.0]), 50.0, &[0.0, 50.0], 1)
            .unwrap();
        assert!(tr.events.is_empty());
        assert_eq!(tr.final_state.x, vec![false; 3]);
    }

    #[test]
    fn pure_death_mean() {
        let m = SingleVirusModel::scalar(1.0, 0.0, 0.0).unwrap();
        let init = MicroInit::Fixed(MicroState::new(vec![true], vec![]));
        let cfg = EnsembleConfig { runs: 4000, t_end: 1.0, dt: 0.5, master_seed: 9 };
        let s = ensemble(&m, &init, &cfg).unwrap();
        let p = (-1.0f64).exp();
        let sigma = (p * (1.0 - p) / 4000.0).sqrt();
        assert!((s.mean_frac[2] - p).abs() < 3.0 * sigma);
    }

    #[test]
    fn ensemble_is_reproducible() {
        let m = siws();
        let init = MicroInit::Bernoulli { p: vec![0.5; 3], w: vec![0.1] };
        let cfg = EnsembleConfig { runs: 16, t_end: 5.0, dt: 0.5, master_seed: 3 };
        let a = ensemble(&m, &init, &cfg).unwrap();
        let b = ensemble(&m, &init, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.mean_frac.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn single_run_matches_trajectory() {
        let m = siws();
        let init = MicroInit::Fixed(MicroState::new(vec![true, false, true], vec![0.2]));
        let cfg = EnsembleConfig { runs: 1, t_end: 3.0, dt: 0.25, master_seed: 5 };
        let s = ensemble(&m, &init, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        rng.set_stream(0);
        let tr = simulate_exact(&m, &init.draw(&mut rng), 3.0, &s.times, &mut rng).unwrap();
        for (g, st) in tr.states.iter().enumerate() {
            assert_eq!(s.mean_frac[g], st.iter().filter(|b| **b).count() as f64 / 3.0);
            assert_eq!(s.ci_half[g], 0.0);
        }
    }

    #[test]
    fn resources_stay_bounded() {
        let m = siws();
        let tr = simulate_exact_seeded(
            &m,
            &MicroState::new(vec![true; 3], vec![0.0]),
            20.0,
            &time_grid(20.0, 0.1),
            4,
        )
        .unwrap();
        let wmax = m.w_max()[0];
        assert!(tr.resources.iter().all(|w| w[0] >= 0.0 && w[0] <= wmax + 1e-12));
        assert!(tr.events.windows(2).all(|e| e[1].t >= e[0].t));
    }

    #[test]
    fn pairwise_sum_matches_naive() {
        let v: Vec<f64> = (0..1000).map(|k| k as f64 * 0.5).collect();
        assert_eq!(pairwise_sum(&v), v.iter().sum::<f64>());
    }
}
