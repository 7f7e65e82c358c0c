//! Scenario files: a versioned JSON document describing nodes, hyperedges, rates,
//! interaction families, initial conditions and integrator settings.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bi_virus::BiModel;
use crate::error::{Error, Result};
use crate::general_model::{FamilySpec, GeneralModel};
use crate::hypergraph::{DirectedHypergraph, NodeSet};
use crate::matrix::SquareMatrix;
use crate::ode::{self, IntegratorConfig};
use crate::single_virus::{Rates, SingleVirusModel};
use crate::system::{self, find_equilibria, Dynamics, HealthyStability, SpreadingModel, Stability};

pub const SCHEMA_VERSION: u32 = 1;

/// `[tail, [heads...], weight, rule_m]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeEntry(pub usize, pub Vec<usize>, pub f64, pub usize);

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypergraphSpec {
    /// Allow heads equal to the tail and repeated heads.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub self_loops: bool,
    /// Edge lists keyed by number of bodies.
    pub edges: BTreeMap<usize, Vec<EdgeEntry>>,
}

impl HypergraphSpec {
    pub fn build(&self, nodes: NodeSet) -> Result<DirectedHypergraph> {
        let mut h = DirectedHypergraph::new(nodes);
        if self.self_loops {
            h = h.allow_self_loops();
        }
        for (order, list) in &self.edges {
            for EdgeEntry(tail, heads, weight, m) in list {
                if heads.len() + 1 != *order {
                    return Err(Error::Parse(format!(
                        "edge [{tail}, {heads:?}] listed under order {order} has {} bodies",
                        heads.len() + 1
                    )));
                }
                h.add_edge(*tail, heads, *weight, *m)?;
            }
        }
        Ok(h)
    }

    pub fn from_hypergraph(h: &DirectedHypergraph) -> Self {
        let mut edges: BTreeMap<usize, Vec<EdgeEntry>> = BTreeMap::new();
        for (e, rule) in h.edges() {
            edges.entry(e.order()).or_default().push(EdgeEntry(e.tail, e.heads.clone(), e.weight, rule.m_order));
        }
        Self { self_loops: h.self_loops_allowed(), edges }
    }
}

fn linear() -> FamilySpec {
    FamilySpec::Linear
}

fn polynomial() -> FamilySpec {
    FamilySpec::Polynomial
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VirusSpec {
    pub rates: Rates,
    #[serde(default = "linear")]
    pub pairwise: FamilySpec,
    #[serde(default = "polynomial")]
    pub higher: FamilySpec,
    /// Overrides the scenario hypergraph for this virus.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hypergraph: Option<HypergraphSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    /// Explicit states; bi-virus states concatenate both viruses.
    States(Vec<Vec<f64>>),
    /// This many states drawn uniformly from the domain.
    Random(usize),
}

impl Default for InitialSpec {
    fn default() -> Self {
        InitialSpec::Random(3)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: u32,
    pub nodes: NodeSet,
    pub hypergraph: HypergraphSpec,
    pub viruses: Vec<VirusSpec>,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub seed: u64,
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let sc: Scenario = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        text.parse().map_err(|e| match e {
            Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.as_ref().display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialises")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::Parse(format!("unsupported schema {}, expected {SCHEMA_VERSION}", self.schema)));
        }
        if self.viruses.is_empty() || self.viruses.len() > 2 {
            return Err(Error::Parse(format!("a scenario has one or two viruses, found {}", self.viruses.len())));
        }
        self.integrator.validate()?;
        for v in &self.viruses {
            v.rates.validate(self.nodes.n_population, self.nodes.m_resource)?;
        }
        Ok(())
    }

    pub fn is_bi(&self) -> bool {
        self.viruses.len() == 2
    }

    /// Model of virus `k`.
    pub fn model(&self, k: usize) -> Result<ScenarioModel> {
        let v = self
            .viruses
            .get(k)
            .ok_or_else(|| Error::Contract(format!("scenario has no virus {}", k + 1)))?;
        let h = v.hypergraph.as_ref().unwrap_or(&self.hypergraph).build(self.nodes)?;
        let max_order = h.edges().map(|(e, _)| e.order()).max().unwrap_or(2);
        if v.pairwise == FamilySpec::Linear && v.higher == FamilySpec::Polynomial && max_order <= 3 {
            Ok(ScenarioModel::Polynomial(SingleVirusModel::assemble(&h, &v.rates)?))
        } else {
            Ok(ScenarioModel::General(GeneralModel::assemble(&h, &v.rates, v.pairwise.build()?, v.higher.build()?)?))
        }
    }

    pub fn bi_model(&self) -> Result<BiModel<ScenarioModel>> {
        if !self.is_bi() {
            return Err(Error::Contract("scenario describes a single virus".into()));
        }
        BiModel::new(self.model(0)?, self.model(1)?)
    }

    /// Initial states for the scenario's system, validated against its domain.
    pub fn initial_states(&self) -> Result<Vec<Vec<f64>>> {
        let domain = if self.is_bi() { self.bi_model()?.domain() } else { self.model(0)?.domain() };
        match &self.initial {
            InitialSpec::States(states) => {
                for (k, s) in states.iter().enumerate() {
                    if s.len() != domain.dim() {
                        return Err(Error::Assumption(format!(
                            "initial state {k} has {} entries, expected {}",
                            s.len(),
                            domain.dim()
                        )));
                    }
                    if !domain.contains(s, ode::DOMAIN_TOL) {
                        return Err(Error::Assumption(format!(
                            "initial state {k} leaves the domain by {:e}",
                            domain.excursion(s)
                        )));
                    }
                }
                Ok(states.clone())
            }
            InitialSpec::Random(count) => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                Ok((0..*count).map(|_| random_state(&domain, &mut rng)).collect())
            }
        }
    }
}

/// Uniform draw from the box, with paired coordinates reflected into `a + b ≤ 1`.
pub fn random_state<R: Rng>(domain: &ode::Domain, rng: &mut R) -> Vec<f64> {
    let mut z: Vec<f64> = domain.upper.iter().map(|u| u * rng.gen::<f64>()).collect();
    for &(a, b) in &domain.pair_sums {
        if z[a] + z[b] > 1.0 {
            z[a] = 1.0 - z[a];
            z[b] = 1.0 - z[b];
        }
    }
    z
}

/// A virus model built from a scenario: polynomial when the families allow it.
#[derive(Debug, Clone)]
pub enum ScenarioModel {
    Polynomial(SingleVirusModel),
    General(GeneralModel),
}

impl ScenarioModel {
    /// Pairwise part scaled by `pair`, higher-order part by `higher`.
    pub fn scaled_parts(&self, pair: f64, higher: f64) -> Result<Self> {
        Ok(match self {
            ScenarioModel::Polynomial(m) => ScenarioModel::Polynomial(m.scaled_parts(pair, higher)?),
            ScenarioModel::General(m) => ScenarioModel::General(m.scaled_parts(pair, higher)?),
        })
    }

    pub fn as_polynomial(&self) -> Option<&SingleVirusModel> {
        match self {
            ScenarioModel::Polynomial(m) => Some(m),
            ScenarioModel::General(_) => None,
        }
    }

    pub fn as_general(&self) -> Result<GeneralModel> {
        match self {
            ScenarioModel::Polynomial(m) => GeneralModel::from_single(m),
            ScenarioModel::General(m) => Ok(m.clone()),
        }
    }
}

macro_rules! delegate {
    ($self:ident, $m:ident => $e:expr) => {
        match $self {
            ScenarioModel::Polynomial($m) => $e,
            ScenarioModel::General($m) => $e,
        }
    };
}

impl SpreadingModel for ScenarioModel {
    fn n_pop(&self) -> usize {
        delegate!(self, m => m.n_pop())
    }
    fn n_res(&self) -> usize {
        delegate!(self, m => m.n_res())
    }
    fn healing(&self) -> &[f64] {
        delegate!(self, m => m.healing())
    }
    fn pressure_into(&self, z: &[f64], out: &mut [f64]) {
        delegate!(self, m => m.pressure_into(z, out))
    }
    fn pressure_jacobian(&self, z: &[f64]) -> SquareMatrix {
        delegate!(self, m => m.pressure_jacobian(z))
    }
    fn linearization(&self) -> SquareMatrix {
        delegate!(self, m => m.linearization())
    }
    fn global_majorant(&self) -> SquareMatrix {
        delegate!(self, m => m.global_majorant())
    }
    fn upper_bounds(&self) -> Vec<f64> {
        delegate!(self, m => m.upper_bounds())
    }
    fn higher_support(&self) -> Vec<bool> {
        delegate!(self, m => m.higher_support())
    }
    fn linear_minorant(&self) -> Option<SquareMatrix> {
        delegate!(self, m => m.linear_minorant())
    }
}

/// Parameters of the random scenario generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenOptions {
    pub n: usize,
    pub m: usize,
    pub viruses: usize,
    /// Infection and contamination rates are uniform on `[0, infection_max]`.
    pub infection_max: f64,
    /// Higher-order rates are uniform on `[0, higher_max]`.
    pub higher_max: f64,
    /// Probability of each extra pairwise edge beyond the spanning cycle.
    pub extra_edge_prob: f64,
    /// Number of random three-body edges.
    pub triangles: usize,
    pub max_retries: usize,
}

impl Default for GenOptions {
    fn default() -> Self {
        Self {
            n: 5,
            m: 2,
            viruses: 1,
            infection_max: 0.2,
            higher_max: 0.2,
            extra_edge_prob: 0.3,
            triangles: 5,
            max_retries: 100,
        }
    }
}

/// Smallest healing or decay rate the generator accepts.
pub const MIN_HEALING: f64 = 1e-3;

/// Random scenario: healing and decay rates uniform on `[0, 1]`, infection rates uniform
/// on `[0, infection_max]`, a strongly connected pairwise layer and random three-body
/// edges with weights uniform on `[0.1, 1]`.
pub fn generate_scenario(opts: &GenOptions, seed: u64) -> Result<Scenario> {
    if opts.n == 0 || !(1..=2).contains(&opts.viruses) {
        return Err(Error::Contract("generator needs n ≥ 1 and one or two viruses".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..opts.max_retries.max(1) {
        let sc = draw_scenario(opts, seed, &mut rng)?;
        if (0..sc.viruses.len()).all(|k| sc.model(k).is_ok()) {
            return Ok(sc);
        }
    }
    Err(Error::Numerical(format!("no valid scenario after {} attempts", opts.max_retries)))
}

fn draw_scenario(opts: &GenOptions, seed: u64, rng: &mut ChaCha8Rng) -> Result<Scenario> {
    let (n, m) = (opts.n, opts.m);
    let nodes = NodeSet::new(n, m)?;
    let mut h = DirectedHypergraph::new(nodes);
    let weight = |rng: &mut ChaCha8Rng| rng.gen_range(0.1..=1.0);
    if n > 1 {
        for i in 0..n {
            h.add_full_edge(i, &[(i + 1) % n], weight(rng))?;
        }
    }
    for i in 0..n {
        for j in 0..n {
            if i != j && (j != (i + 1) % n || n == 1) && rng.gen_bool(opts.extra_edge_prob) {
                h.add_full_edge(i, &[j], weight(rng))?;
            }
        }
    }
    for r in n..n + m {
        h.add_full_edge(r, &[rng.gen_range(0..n)], weight(rng))?;
        h.add_full_edge(rng.gen_range(0..n), &[r], weight(rng))?;
        for i in 0..n {
            if rng.gen_bool(opts.extra_edge_prob / 2.0) {
                h.add_full_edge(i, &[r], weight(rng))?;
            }
        }
    }
    if n >= 3 {
        for _ in 0..opts.triangles {
            let tail = rng.gen_range(0..n);
            let mut others: Vec<usize> = (0..n).filter(|j| *j != tail).collect();
            let a = others.swap_remove(rng.gen_range(0..others.len()));
            let b = if m > 0 && rng.gen_bool(0.2) {
                rng.gen_range(n..n + m)
            } else {
                others.swap_remove(rng.gen_range(0..others.len()))
            };
            h.add_full_edge(tail, &[a, b], weight(rng))?;
        }
        for r in n..n + m {
            if rng.gen_bool(0.5) {
                let a = rng.gen_range(0..n);
                let b = (a + 1 + rng.gen_range(0..n - 1)) % n;
                h.add_full_edge(r, &[a, b], weight(rng))?;
            }
        }
    }
    let healing = |rng: &mut ChaCha8Rng| loop {
        let d = rng.gen::<f64>();
        if d >= MIN_HEALING {
            break d;
        }
    };
    let viruses = (0..opts.viruses)
        .map(|_| {
            let delta = (0..n).map(|_| healing(rng)).collect();
            let delta_w = (0..m).map(|_| healing(rng)).collect();
            let beta_pair = (0..n + m).map(|_| rng.gen_range(0.0..=opts.infection_max)).collect();
            let beta3 = (0..n + m).map(|_| rng.gen_range(0.0..=opts.higher_max)).collect();
            let mut beta_higher = BTreeMap::new();
            beta_higher.insert(3, beta3);
            VirusSpec {
                rates: Rates { delta, delta_w, beta_pair, beta_higher },
                pairwise: FamilySpec::Linear,
                higher: FamilySpec::Polynomial,
                hypergraph: None,
            }
        })
        .collect();
    Ok(Scenario {
        schema: SCHEMA_VERSION,
        nodes,
        hypergraph: HypergraphSpec::from_hypergraph(&h),
        viruses,
        initial: InitialSpec::Random(3),
        integrator: IntegratorConfig::default(),
        seed,
    })
}

/// Target regimes for the seeded scenario search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `R₀ < 1` with the global majorant condition.
    Extinction,
    /// `R₀ > 1`.
    Endemic,
    /// `R₀ < 1` with a stable endemic equilibrium.
    Bistable,
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "r0<1" | "extinction" => Ok(Regime::Extinction),
            "r0>1" | "endemic" => Ok(Regime::Endemic),
            "bistable" => Ok(Regime::Bistable),
            _ => Err(Error::Parse(format!("unknown regime {s:?}; expected r0<1, r0>1 or bistable"))),
        }
    }
}

/// True when every virus of `sc` (taken on its own) is in `regime`.
pub fn in_regime(sc: &Scenario, regime: Regime) -> Result<bool> {
    for k in 0..sc.viruses.len() {
        let m = sc.model(k)?;
        let v = system::healthy_classify(&m)?;
        let ok = match regime {
            Regime::Extinction => v.verdict == HealthyStability::GloballyExpStable,
            Regime::Endemic => v.verdict == HealthyStability::Unstable,
            Regime::Bistable => {
                v.r0 < 1.0 - system::THRESHOLD_BAND
                    && find_equilibria(&m, 8, sc.seed)?
                        .iter()
                        .any(|e| e.is_positive() && e.classification == Stability::Stable)
            }
        };
        if !ok {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Tries seeds `seed, seed + 1, …` until a generated scenario falls in `regime`.
pub fn search_regime(opts: &GenOptions, regime: Regime, seed: u64, max_tries: usize) -> Result<Scenario> {
    for s in seed..seed.saturating_add(max_tries as u64) {
        let sc = generate_scenario(opts, s)?;
        if in_regime(&sc, regime)? {
            return Ok(sc);
        }
    }
    Err(Error::Numerical(format!("no scenario in regime {regime:?} within {max_tries} seeds from {seed}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    const BISTABLE: &str = r#"{
        "schema": 1,
        "nodes": {"n": 1, "m": 0},
        "hypergraph": {"self_loops": true, "edges": {"2": [[0, [0], 1.0, 1]], "3": [[0, [0, 0], 1.0, 2]]}},
        "viruses": [{"rates": {"delta": [1.0], "delta_w": [], "beta_pair": [0.5], "beta_higher": {"3": [4.0]}}}],
        "initial": {"states": [[0.1], [0.3]]}
    }"#;

    #[test]
    fn parses_bistable_scalar() {
        let sc: Scenario = BISTABLE.parse().unwrap();
        let m = sc.model(0).unwrap();
        let pm = m.as_polynomial().unwrap();
        assert_eq!(pm.b_f()[(0, 0)], 0.5);
        assert_eq!(pm.quad_terms()[0][0].coef, 4.0);
        assert_eq!(sc.initial_states().unwrap().len(), 2);
    }

    #[test]
    fn rejects_unknown_keys() {
        let bad = BISTABLE.replace("\"seed\"", "\"sed\"").replace("\"initial\"", "\"initail\"");
        let e = bad.parse::<Scenario>().unwrap_err();
        assert!(matches!(e, Error::Parse(ref msg) if msg.contains("initail") && msg.contains("line")), "{e}");
    }

    #[test]
    fn round_trip() {
        let sc = generate_scenario(&GenOptions { viruses: 2, ..Default::default() }, 4).unwrap();
        let back: Scenario = sc.to_json().parse().unwrap();
        assert_eq!(back, sc);
    }

    #[test]
    fn generator_is_deterministic_and_valid() {
        let opts = GenOptions::default();
        let a = generate_scenario(&opts, 17).unwrap();
        assert_eq!(a, generate_scenario(&opts, 17).unwrap());
        assert_eq!((a.nodes.n_population, a.nodes.m_resource), (5, 2));
        let m = a.model(0).unwrap();
        assert!(crate::spectral::is_irreducible(&m.linearization()));
    }

    #[test]
    fn initial_states_respect_domain() {
        let mut sc = generate_scenario(&GenOptions { viruses: 2, ..Default::default() }, 1).unwrap();
        sc.initial = InitialSpec::Random(20);
        let dom = sc.bi_model().unwrap().domain();
        assert!(sc.initial_states().unwrap().iter().all(|z| dom.contains(z, 0.0)));
        sc.initial = InitialSpec::States(vec![vec![0.9; 14]]);
        assert!(matches!(sc.initial_states(), Err(Error::Assumption(_))));
    }

    #[test]
    fn log_family_builds_general_model() {
        let mut sc: Scenario = BISTABLE.parse().unwrap();
        sc.viruses[0].pairwise = FamilySpec::Log { slope: 0.2 };
        assert!(matches!(sc.model(0).unwrap(), ScenarioModel::General(_)));
    }
}
