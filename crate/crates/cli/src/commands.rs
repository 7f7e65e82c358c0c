use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use hyperspread::bi_virus::{BiHealthyVerdict, DominantReport, ProbeConfig, Virus};
use hyperspread::general_model::{
    general_endemic_tests, general_healthy_classify, validate_assumptions, AssumptionChecklist, EndemicTests,
    GeneralHealthyVerdict, GridOptions,
};
use hyperspread::io::{self, fmt_f64, Table};
use hyperspread::ode::TerminalReason;
use hyperspread::scenario::{generate_scenario, search_regime, GenOptions, InitialSpec, Scenario, ScenarioModel};
use hyperspread::single_virus::EndemicPrecondition;
use hyperspread::stochastic::{self, EnsembleConfig, MicroInit};
use hyperspread::system::{self, DecayEnvelope, HealthyVerdict, ThetaReport};
use hyperspread::{EquilibriumReport, Error, HealthyStability, Result, SpreadingModel, Stability};
use hyperspread::{BiModel, TrajectoryRecord};

use crate::{Cli, Command, Format, GenArgs, Part, SweepArgs, ValidateArgs};

const DEFAULT_STARTS: usize = 16;
const ENDEMIC_K: usize = 3;

pub fn run(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    if let Some(w) = g.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| Error::Contract(format!("worker pool: {e}")))?;
    }
    fs::create_dir_all(&g.out)?;
    match &cli.command {
        Command::Gen(args) => gen(cli, args),
        cmd => {
            let sc = load(cli)?;
            match cmd {
                Command::Simulate => simulate(cli, &sc),
                Command::Classify => classify(cli, &sc),
                Command::Equilibria => equilibria(cli, &sc),
                Command::Bivirus => bivirus(cli, &sc),
                Command::Sweep(args) => sweep(cli, &sc, args),
                Command::Validate(args) => validate(cli, &sc, args),
                Command::Gen(_) => unreachable!(),
            }
        }
    }
}

fn load(cli: &Cli) -> Result<Scenario> {
    let path = cli.global.scenario.as_ref().ok_or_else(|| Error::Parse("--scenario is required".into()))?;
    let mut sc = Scenario::load(path)?;
    if let Some(seed) = cli.global.seed {
        sc.seed = seed;
    }
    if let Some(t) = cli.global.t_end {
        sc.integrator.t_end = t;
        sc.integrator.validate()?;
    }
    Ok(sc)
}

fn out(cli: &Cli, name: &str) -> std::path::PathBuf {
    cli.global.out.join(name)
}

fn announce(path: &Path) {
    println!("wrote {}", path.display());
}

fn write_text(cli: &Cli, name: &str, text: &str) -> Result<()> {
    let path = out(cli, name);
    io::write_text(&path, text)?;
    announce(&path);
    Ok(())
}

fn write_report<T: Serialize>(cli: &Cli, value: &T) -> Result<()> {
    write_text(cli, "report.json", &io::to_json(value))
}

fn models(sc: &Scenario) -> Result<Vec<ScenarioModel>> {
    (0..sc.viruses.len()).map(|k| sc.model(k)).collect()
}

#[derive(Serialize)]
struct RunSummary {
    run: usize,
    initial: Vec<f64>,
    terminal: TerminalReason,
    final_time: f64,
    final_state: Vec<f64>,
    max_excursion: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    times: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    states: Option<Vec<Vec<f64>>>,
}

#[derive(Serialize)]
struct SimulateReport {
    seed: u64,
    viruses: usize,
    runs: Vec<RunSummary>,
}

fn simulate(cli: &Cli, sc: &Scenario) -> Result<()> {
    let states = sc.initial_states()?;
    let cfg = &sc.integrator;
    let records: Vec<TrajectoryRecord> = if sc.is_bi() {
        let bi = sc.bi_model()?;
        states.par_iter().map(|z| system::simulate(&bi, z, cfg)).collect::<Result<_>>()?
    } else {
        let m = sc.model(0)?;
        states.par_iter().map(|z| system::simulate(&m, z, cfg)).collect::<Result<_>>()?
    };
    let (n, m, v) = (sc.nodes.n_population, sc.nodes.m_resource, sc.viruses.len());
    let full = cli.global.format == Format::Json;
    let runs: Vec<RunSummary> = records
        .iter()
        .zip(&states)
        .enumerate()
        .map(|(k, (r, z0))| RunSummary {
            run: k,
            initial: z0.clone(),
            terminal: r.terminal,
            final_time: r.final_time(),
            final_state: r.final_state().to_vec(),
            max_excursion: r.max_excursion,
            times: full.then(|| r.times.clone()),
            states: full.then(|| r.states.clone()),
        })
        .collect();
    for r in &runs {
        let means: Vec<String> = r
            .final_state
            .chunks(n + m)
            .map(|b| format!("{:.6e}", b[..n].iter().sum::<f64>() / n as f64))
            .collect();
        println!("run {}: t = {:.4}, {:?}, mean infection {}", r.run, r.final_time, r.terminal, means.join(" / "));
    }
    match cli.global.format {
        Format::Csv => {
            write_text(cli, "trajectory.csv", &io::trajectory_csv(&records, &io::state_columns(n, m, v)))?;
            write_text(cli, "means.csv", &io::mean_levels_csv(&records, n, m, v))?;
        }
        Format::Json => write_report(cli, &SimulateReport { seed: sc.seed, viruses: v, runs })?,
    }
    if let Some(bad) = records.iter().position(|r| r.terminal == TerminalReason::DomainViolation) {
        return Err(Error::Numerical(format!("run {bad} left the domain")));
    }
    Ok(())
}

#[derive(Serialize)]
struct VirusClassification {
    virus: usize,
    model: &'static str,
    healthy: HealthyVerdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    decay_envelope: Option<DecayEnvelope>,
    theta: ThetaReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    endemic_precondition: Option<EndemicPrecondition>,
    #[serde(skip_serializing_if = "Option::is_none")]
    general: Option<GeneralHealthyVerdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    endemic_tests: Option<EndemicTests>,
    assumptions: AssumptionChecklist,
}

#[derive(Serialize)]
struct ClassifyReport {
    seed: u64,
    viruses: Vec<VirusClassification>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bi_virus: Option<BiHealthyVerdict>,
}

fn classify(cli: &Cli, sc: &Scenario) -> Result<()> {
    let mut viruses = Vec::new();
    for (k, model) in models(sc)?.iter().enumerate() {
        let healthy = system::healthy_classify(model)?;
        let gm = model.as_general()?;
        let assumptions = validate_assumptions(&gm, None, sc.seed);
        let decay_envelope = (healthy.verdict == HealthyStability::GloballyExpStable)
            .then(|| system::decay_envelope(model))
            .transpose()?;
        let (kind, endemic_precondition, general, endemic_tests) = match model {
            ScenarioModel::Polynomial(p) => ("polynomial", Some(p.global_endemic_precondition()?), None, None),
            ScenarioModel::General(g) => (
                "general",
                None,
                Some(general_healthy_classify(g, GridOptions { seed: sc.seed, ..Default::default() })?),
                Some(general_endemic_tests(g, ENDEMIC_K)?),
            ),
        };
        println!("virus {}: R0 = {:.6}, {:?}", k + 1, healthy.r0, healthy.verdict);
        viruses.push(VirusClassification {
            virus: k + 1,
            model: kind,
            healthy,
            decay_envelope,
            theta: system::theta_existence(model),
            endemic_precondition,
            general,
            endemic_tests,
            assumptions,
        });
    }
    let bi_virus = if sc.is_bi() { Some(sc.bi_model()?.healthy_classify()?) } else { None };
    if let Some(b) = &bi_virus {
        println!("bi-virus: {:?}", b.verdict);
    }
    let failures: Vec<String> = viruses.iter().flat_map(|v| v.assumptions.failures()).collect();
    write_report(cli, &ClassifyReport { seed: sc.seed, viruses, bi_virus })?;
    if !failures.is_empty() {
        return Err(Error::Assumption(failures.join("; ")));
    }
    Ok(())
}

#[derive(Serialize)]
struct VirusEquilibria {
    virus: usize,
    r0: f64,
    equilibria: Vec<EquilibriumReport>,
}

#[derive(Serialize)]
struct EquilibriaReport {
    seed: u64,
    starts: usize,
    viruses: Vec<VirusEquilibria>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    dominant: Vec<DominantReport>,
}

fn equilibria(cli: &Cli, sc: &Scenario) -> Result<()> {
    let starts = cli.global.runs.unwrap_or(DEFAULT_STARTS);
    let mut viruses = Vec::new();
    for (k, model) in models(sc)?.iter().enumerate() {
        let eqs = system::find_equilibria(model, starts, sc.seed)?;
        for e in &eqs {
            println!("virus {}: {:?} residual {:.1e} at {:?}", k + 1, e.classification, e.residual, e.state);
        }
        viruses.push(VirusEquilibria { virus: k + 1, r0: system::reproduction_number(model)?, equilibria: eqs });
    }
    let mut dominant = Vec::new();
    if sc.is_bi() {
        let bi = sc.bi_model()?;
        for v in [Virus::First, Virus::Second] {
            dominant.extend(bi.dominant_equilibria(v, starts, sc.seed)?);
        }
    }
    write_report(cli, &EquilibriaReport { seed: sc.seed, starts, viruses, dominant })
}

fn bivirus(cli: &Cli, sc: &Scenario) -> Result<()> {
    let bi: BiModel<ScenarioModel> = sc.bi_model()?;
    let starts = cli.global.runs.unwrap_or(DEFAULT_STARTS);
    let report = bi.report(starts, &ProbeConfig::default(), sc.seed)?;
    println!("healthy: {:?}", report.healthy_verdict.verdict);
    for d in &report.dominant {
        println!(
            "dominant {:?}: {:?}, invasion abscissa {:.6e}",
            d.virus, d.report.classification, d.invasion_abscissa
        );
    }
    println!("coexistence certified: {}", report.coexistence.certified);
    write_report(cli, &report)
}

#[derive(Serialize)]
struct SweepPoint {
    factor: f64,
    r0: f64,
    global_radius: f64,
    healthy: HealthyStability,
    equilibria: usize,
    positive: usize,
    stable_positive: usize,
    bistable: bool,
    /// Mean population infection level of the largest stable positive equilibrium.
    top_mean_infection: Option<f64>,
}

fn sweep(cli: &Cli, sc: &Scenario, args: &SweepArgs) -> Result<()> {
    if args.steps < 2 || !(args.from.is_finite() && args.to.is_finite()) {
        return Err(Error::Contract("sweep needs at least two finite grid points".into()));
    }
    let base = sc.model(args.virus.checked_sub(1).ok_or_else(|| Error::Contract("viruses are numbered from 1".into()))?)?;
    let starts = cli.global.runs.unwrap_or(DEFAULT_STARTS);
    let n = base.n_pop();
    let factors: Vec<f64> = (0..args.steps)
        .map(|k| args.from + (args.to - args.from) * k as f64 / (args.steps - 1) as f64)
        .collect();
    let points: Vec<SweepPoint> = factors
        .par_iter()
        .map(|&f| {
            let (pair, higher) = match args.part {
                Part::Pair => (f, 1.0),
                Part::Higher => (1.0, f),
                Part::Both => (f, f),
            };
            let m = base.scaled_parts(pair, higher)?;
            let h = system::healthy_classify(&m)?;
            let eqs = system::find_equilibria(&m, starts, sc.seed)?;
            let stable_pos: Vec<&EquilibriumReport> =
                eqs.iter().filter(|e| e.is_positive() && e.classification == Stability::Stable).collect();
            let healthy_stable = h.r0 < 1.0 - system::THRESHOLD_BAND;
            Ok(SweepPoint {
                factor: f,
                r0: h.r0,
                global_radius: h.global_matrix_radius,
                healthy: h.verdict,
                equilibria: eqs.len(),
                positive: eqs.iter().filter(|e| e.is_positive()).count(),
                stable_positive: stable_pos.len(),
                bistable: healthy_stable && !stable_pos.is_empty(),
                top_mean_infection: stable_pos
                    .iter()
                    .map(|e| e.state[..n].iter().sum::<f64>() / n as f64)
                    .max_by(f64::total_cmp),
            })
        })
        .collect::<Result<_>>()?;
    let bistable: Vec<f64> = points.iter().filter(|p| p.bistable).map(|p| p.factor).collect();
    match (bistable.first(), bistable.last()) {
        (Some(a), Some(b)) => println!("bistable for factors in [{a}, {b}] ({} of {} points)", bistable.len(), points.len()),
        _ => println!("no bistable grid point"),
    }
    match cli.global.format {
        Format::Csv => {
            let mut t = Table::new(&[
                "factor",
                "r0",
                "global_radius",
                "healthy",
                "equilibria",
                "positive",
                "stable_positive",
                "bistable",
                "top_mean_infection",
            ]);
            for p in &points {
                t.push(vec![
                    fmt_f64(p.factor),
                    fmt_f64(p.r0),
                    fmt_f64(p.global_radius),
                    serde_json::to_value(p.healthy).expect("verdict").as_str().unwrap_or_default().to_string(),
                    p.equilibria.to_string(),
                    p.positive.to_string(),
                    p.stable_positive.to_string(),
                    p.bistable.to_string(),
                    p.top_mean_infection.map(fmt_f64).unwrap_or_default(),
                ]);
            }
            write_text(cli, "sweep.csv", &t.to_csv())
        }
        Format::Json => write_report(cli, &points),
    }
}

#[derive(Serialize)]
struct ValidateReport {
    runs: usize,
    t_end: f64,
    dt: f64,
    master_seed: u64,
    rng: String,
    initial: Vec<f64>,
    sup_gap: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    ensemble: Option<stochastic::EnsembleStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    comparison: Option<stochastic::MeanFieldComparison>,
}

fn validate(cli: &Cli, sc: &Scenario, args: &ValidateArgs) -> Result<()> {
    if sc.is_bi() {
        return Err(Error::Contract("stochastic validation takes a single-virus scenario".into()));
    }
    let model = sc.model(0)?;
    let model = model
        .as_polynomial()
        .ok_or_else(|| Error::Contract("stochastic validation needs linear pairwise and polynomial higher-order families".into()))?;
    let (n, m) = (model.n(), model.m());
    let init = match &sc.initial {
        InitialSpec::States(_) => {
            let z = &sc.initial_states()?[0];
            MicroInit::Bernoulli { p: z[..n].to_vec(), w: z[n..].to_vec() }
        }
        InitialSpec::Random(_) => {
            if !(0.0..=1.0).contains(&args.p0) {
                return Err(Error::Assumption(format!("--p0 must lie in [0, 1], got {}", args.p0)));
            }
            MicroInit::Bernoulli { p: vec![args.p0; n], w: vec![0.0; m] }
        }
    };
    let cfg = EnsembleConfig {
        runs: cli.global.runs.unwrap_or(200),
        t_end: sc.integrator.t_end,
        dt: args.dt,
        master_seed: sc.seed,
    };
    let stats = stochastic::ensemble(model, &init, &cfg)?;
    let z0 = init.mean_field();
    let cmp = stochastic::compare_with_mean_field(model, &stats, &z0)?;
    println!("sup-norm gap between ensemble mean and mean field: {:.6e}", cmp.gap);
    let full = cli.global.format == Format::Json;
    let report = ValidateReport {
        runs: cfg.runs,
        t_end: cfg.t_end,
        dt: cfg.dt,
        master_seed: cfg.master_seed,
        rng: stats.rng.clone(),
        initial: z0,
        sup_gap: cmp.gap,
        ensemble: None,
        comparison: None,
    };
    if full {
        write_report(cli, &ValidateReport { ensemble: Some(stats), comparison: Some(cmp), ..report })
    } else {
        write_text(cli, "ensemble.csv", &io::ensemble_csv(&stats))?;
        write_text(cli, "means.csv", &io::means_csv(&cmp))?;
        write_report(cli, &report)
    }
}

fn gen(cli: &Cli, args: &GenArgs) -> Result<()> {
    let opts = GenOptions {
        n: args.n,
        m: args.m,
        viruses: args.viruses,
        infection_max: args.infection_max,
        higher_max: args.higher_max,
        ..Default::default()
    };
    let seed = cli.global.seed.unwrap_or(0);
    let sc = match cli.global.regime {
        Some(regime) => search_regime(&opts, regime, seed, args.max_tries)?,
        None => generate_scenario(&opts, seed)?,
    };
    for (k, model) in models(&sc)?.iter().enumerate() {
        println!("virus {}: R0 = {:.6}", k + 1, system::reproduction_number(model)?);
    }
    println!("seed {}", sc.seed);
    let path = out(cli, "scenario.json");
    sc.save(&path)?;
    announce(&path);
    Ok(())
}
