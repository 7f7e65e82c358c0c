//! CSV and JSON writers. Floats are written with `{:.16e}` so values round-trip exactly.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::ode::TrajectoryRecord;
use crate::stochastic::{EnsembleStats, MeanFieldComparison};

fn num(out: &mut String, v: f64) {
    write!(out, ",{v:.16e}").expect("write to string");
}

/// Column names for a state: `x_i` and `w_r`, prefixed by the virus index for bi-virus states.
pub fn state_columns(n: usize, m: usize, viruses: usize) -> Vec<String> {
    let mut cols = Vec::with_capacity(viruses * (n + m));
    for v in 1..=viruses {
        let p = if viruses > 1 { format!("{v}") } else { String::new() };
        cols.extend((0..n).map(|i| format!("x{p}_{i}")));
        cols.extend((0..m).map(|r| format!("w{p}_{r}")));
    }
    cols
}

/// `run,t,<columns>` rows for one or more trajectories.
pub fn trajectory_csv(runs: &[TrajectoryRecord], columns: &[String]) -> String {
    let mut out = format!("run,t,{}\n", columns.join(","));
    for (k, rec) in runs.iter().enumerate() {
        for (t, z) in rec.times.iter().zip(&rec.states) {
            write!(out, "{k},{t:.16e}").expect("write to string");
            for v in z {
                num(&mut out, *v);
            }
            out.push('\n');
        }
    }
    out
}

/// `t,mean_frac,ci_half,node_0,…,w_0,…`.
pub fn ensemble_csv(stats: &EnsembleStats) -> String {
    let n = stats.node_prob.first().map_or(0, Vec::len);
    let m = stats.resource_mean.first().map_or(0, Vec::len);
    let mut out = String::from("t,mean_frac,ci_half");
    for i in 0..n {
        write!(out, ",node_{i}").expect("write to string");
    }
    for r in 0..m {
        write!(out, ",w_{r}").expect("write to string");
    }
    out.push('\n');
    for (k, t) in stats.times.iter().enumerate() {
        write!(out, "{t:.16e}").expect("write to string");
        num(&mut out, stats.mean_frac[k]);
        num(&mut out, stats.ci_half[k]);
        for v in &stats.node_prob[k] {
            num(&mut out, *v);
        }
        for v in &stats.resource_mean[k] {
            num(&mut out, *v);
        }
        out.push('\n');
    }
    out
}

/// `run,t,mean_x,mean_w` (per virus for bi-virus runs): average infection level over
/// population nodes and contamination level over resource nodes.
pub fn mean_levels_csv(runs: &[TrajectoryRecord], n: usize, m: usize, viruses: usize) -> String {
    let mut out = String::from("run,t");
    for v in 1..=viruses {
        let p = if viruses > 1 { format!("{v}") } else { String::new() };
        write!(out, ",mean_x{p},mean_w{p}").expect("write to string");
    }
    out.push('\n');
    let mean = |s: &[f64]| if s.is_empty() { 0.0 } else { s.iter().sum::<f64>() / s.len() as f64 };
    for (k, rec) in runs.iter().enumerate() {
        for (t, z) in rec.times.iter().zip(&rec.states) {
            write!(out, "{k},{t:.16e}").expect("write to string");
            for block in z.chunks(n + m).take(viruses) {
                num(&mut out, mean(&block[..n]));
                num(&mut out, mean(&block[n..]));
            }
            out.push('\n');
        }
    }
    out
}

/// `t,ensemble_mean,mean_field,abs_gap`.
pub fn means_csv(cmp: &MeanFieldComparison) -> String {
    let mut out = String::from("t,ensemble_mean,mean_field,abs_gap\n");
    for ((t, e), f) in cmp.times.iter().zip(&cmp.ensemble_mean).zip(&cmp.mean_field) {
        write!(out, "{t:.16e}").expect("write to string");
        num(&mut out, *e);
        num(&mut out, *f);
        num(&mut out, (e - f).abs());
        out.push('\n');
    }
    out
}

/// Formats a float the way every CSV writer here does.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Header plus rows of preformatted cells, e.g. one row per sweep point.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serialises") + "\n"
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    write_text(path, &to_json(value))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn columns() {
        assert_eq!(state_columns(2, 1, 1), ["x_0", "x_1", "w_0"]);
        assert_eq!(state_columns(1, 0, 2), ["x1_0", "x2_0"]);
    }

    #[test]
    fn floats_round_trip() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec![fmt_f64(0.1 + 0.2), fmt_f64(std::f64::consts::PI)]);
        let csv = t.to_csv();
        let line = csv.lines().nth(1).unwrap();
        let back: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(back, vec![0.1 + 0.2, std::f64::consts::PI]);
    }
}
