//! Dormand–Prince 5(4) integration with stride recording, equilibrium detection and
//! domain monitoring.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::norm_inf;

/// Excursions beyond the domain larger than this end the integration.
pub const DOMAIN_TOL: f64 = 1e-9;

/// The closed state domain: `0 ≤ z ≤ upper`, plus optional `z_a + z_b ≤ 1` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub upper: Vec<f64>,
    pub pair_sums: Vec<(usize, usize)>,
}

impl Domain {
    pub fn new(upper: Vec<f64>) -> Self {
        Self { upper, pair_sums: Vec::new() }
    }

    pub fn with_pair_sums(mut self, pairs: Vec<(usize, usize)>) -> Self {
        self.pair_sums = pairs;
        self
    }

    pub fn dim(&self) -> usize {
        self.upper.len()
    }

    /// Distance by which `z` leaves the domain (0 when inside).
    pub fn excursion(&self, z: &[f64]) -> f64 {
        let mut e = 0.0_f64;
        for (zi, ui) in z.iter().zip(&self.upper) {
            e = e.max(-zi).max(zi - ui);
        }
        for &(a, b) in &self.pair_sums {
            e = e.max(z[a] + z[b] - 1.0);
        }
        e
    }

    pub fn contains(&self, z: &[f64], tol: f64) -> bool {
        z.len() == self.dim() && self.excursion(z) <= tol
    }

    /// Strictly inside every constraint.
    pub fn is_interior(&self, z: &[f64]) -> bool {
        z.iter().zip(&self.upper).all(|(zi, ui)| *zi > 0.0 && zi < ui)
            && self.pair_sums.iter().all(|&(a, b)| z[a] + z[b] < 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub t_end: f64,
    /// Stop once `‖ż‖_∞` falls below this; zero disables detection.
    pub equilibrium_eps: f64,
    pub record_stride: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_step: 1.0,
            t_end: 100.0,
            equilibrium_eps: 1e-10,
            record_stride: 0.1,
        }
    }
}

impl IntegratorConfig {
    pub fn with_t_end(mut self, t_end: f64) -> Self {
        self.t_end = t_end;
        self
    }

    pub fn with_stride(mut self, stride: f64) -> Self {
        self.record_stride = stride;
        self
    }

    pub fn with_tolerances(mut self, rel_tol: f64, abs_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self
    }

    pub fn without_equilibrium_stop(mut self) -> Self {
        self.equilibrium_eps = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !(positive(self.rel_tol) && positive(self.abs_tol)) {
            return Err(Error::Contract("tolerances must be positive".into()));
        }
        if !(positive(self.t_end) && positive(self.record_stride) && positive(self.max_step)) {
            return Err(Error::Contract("t_end, record_stride and max_step must be positive".into()));
        }
        if self.equilibrium_eps.is_nan() || self.equilibrium_eps < 0.0 {
            return Err(Error::Contract("equilibrium_eps must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalReason {
    TEndReached,
    EquilibriumDetected,
    DomainViolation,
    StopRequested,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub terminal: TerminalReason,
    /// Largest domain excursion seen at any accepted step.
    pub max_excursion: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl TrajectoryRecord {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory always holds the initial state")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory always holds the initial time")
    }

    /// Linear interpolation of the recorded states at time `t` (clamped to the record).
    pub fn state_at(&self, t: f64) -> Vec<f64> {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            return self.states[0].clone();
        }
        if k >= self.times.len() {
            return self.final_state().to_vec();
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let a = (t - t0) / (t1 - t0);
        self.states[k - 1].iter().zip(&self.states[k]).map(|(x, y)| x + a * (y - x)).collect()
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates `ż = drift(z)` from `z0` over `[0, t_end]`.
pub fn integrate<F>(drift: F, z0: &[f64], cfg: &IntegratorConfig, domain: &Domain) -> Result<TrajectoryRecord>
where
    F: Fn(&[f64], &mut [f64]),
{
    integrate_until(drift, z0, cfg, domain, |_, _| false)
}

/// Like [`integrate`], additionally ending when `stop(t, z)` returns true after an accepted step.
pub fn integrate_until<F, S>(
    drift: F,
    z0: &[f64],
    cfg: &IntegratorConfig,
    domain: &Domain,
    mut stop: S,
) -> Result<TrajectoryRecord>
where
    F: Fn(&[f64], &mut [f64]),
    S: FnMut(f64, &[f64]) -> bool,
{
    cfg.validate()?;
    let n = z0.len();
    if domain.dim() != n {
        return Err(Error::Contract(format!("state has length {n}, domain has {}", domain.dim())));
    }
    if !domain.contains(z0, DOMAIN_TOL) {
        return Err(Error::Contract(format!(
            "initial state lies outside the domain by {:e}",
            domain.excursion(z0)
        )));
    }

    let eval = |z: &[f64], out: &mut [f64], t: f64| -> Result<()> {
        drift(z, out);
        if out.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFiniteDrift { t })
        }
    };

    let mut rec = TrajectoryRecord {
        times: vec![0.0],
        states: vec![z0.to_vec()],
        terminal: TerminalReason::TEndReached,
        max_excursion: domain.excursion(z0),
        accepted_steps: 0,
        rejected_steps: 0,
    };

    let mut t = 0.0;
    let mut y = z0.to_vec();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    eval(&y, &mut k[0], t)?;
    if cfg.equilibrium_eps > 0.0 && norm_inf(&k[0]) < cfg.equilibrium_eps {
        rec.terminal = TerminalReason::EquilibriumDetected;
        return Ok(rec);
    }

    let scale = |a: &[f64], b: &[f64], i: usize| cfg.abs_tol + cfg.rel_tol * a[i].abs().max(b[i].abs());
    let mut h = initial_step(&eval, &y, &k[0], cfg)?;
    let mut err_prev = 1e-4_f64;
    let mut record_index = 1usize;
    let next_record = |idx: usize| (idx as f64 * cfg.record_stride).min(cfg.t_end);
    let mut stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut rejected_last = false;

    loop {
        let target = next_record(record_index);
        let landing = t + h >= target - 1e-12 * target.max(1.0);
        let h_step = if landing { target - t } else { h };
        if h <= 1e-14 * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { t, h });
        }

        for s in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, a) in A[s].iter().enumerate().take(s) {
                    acc += a * k[j][i];
                }
                stage[i] = y[i] + h_step * acc;
            }
            eval(&stage, &mut k[s], t + C[s] * h_step)?;
        }
        // Stage 7 was evaluated at the fifth-order solution.
        y_new.copy_from_slice(&stage);

        let mut err = 0.0;
        for i in 0..n {
            let mut e = 0.0;
            for (j, ej) in E.iter().enumerate() {
                e += ej * k[j][i];
            }
            let r = h_step * e / scale(&y, &y_new, i);
            err += r * r;
        }
        err = (err / n.max(1) as f64).sqrt();
        if !err.is_finite() {
            return Err(Error::NonFiniteDrift { t });
        }

        if err <= 1.0 {
            t = if landing { target } else { t + h_step };
            std::mem::swap(&mut y, &mut y_new);
            k.swap(0, 6);
            rec.accepted_steps += 1;

            let exc = domain.excursion(&y);
            rec.max_excursion = rec.max_excursion.max(exc);
            let at_record = landing;
            if at_record {
                rec.times.push(t);
                rec.states.push(y.clone());
                record_index += 1;
            }
            let mut reason = None;
            if exc > DOMAIN_TOL {
                reason = Some(TerminalReason::DomainViolation);
            } else if cfg.equilibrium_eps > 0.0 && norm_inf(&k[0]) < cfg.equilibrium_eps {
                reason = Some(TerminalReason::EquilibriumDetected);
            } else if stop(t, &y) {
                reason = Some(TerminalReason::StopRequested);
            } else if t >= cfg.t_end {
                reason = Some(TerminalReason::TEndReached);
            }
            if let Some(r) = reason {
                if !at_record {
                    rec.times.push(t);
                    rec.states.push(y.clone());
                }
                rec.terminal = r;
                return Ok(rec);
            }

            let mut fac = 0.9 * err.max(1e-10).powf(-0.7 / 5.0) * err_prev.powf(0.4 / 5.0);
            fac = fac.clamp(0.2, 10.0);
            if rejected_last {
                fac = fac.min(1.0);
            }
            err_prev = err.max(1e-4);
            rejected_last = false;
            // A step shortened to hit a record time keeps the earlier proposal alive.
            let mut next = h_step * fac;
            if landing {
                next = next.max(h * fac.min(1.0));
            }
            h = next.min(cfg.max_step);
        } else {
            rec.rejected_steps += 1;
            rejected_last = true;
            h = h_step * (0.9 * err.powf(-0.2)).max(0.2);
        }
    }
}

fn initial_step<G>(eval: &G, y: &[f64], f0: &[f64], cfg: &IntegratorConfig) -> Result<f64>
where
    G: Fn(&[f64], &mut [f64], f64) -> Result<()>,
{
    let n = y.len();
    let sc: Vec<f64> = y.iter().map(|v| cfg.abs_tol + cfg.rel_tol * v.abs()).collect();
    let rms = |v: &[f64]| (v.iter().zip(&sc).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / n.max(1) as f64).sqrt();
    let d0 = rms(y);
    let d1 = rms(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
    let mut f1 = vec![0.0; n];
    eval(&y1, &mut f1, h0)?;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
    Ok((100.0 * h0).min(h1).min(cfg.max_step))
}
