use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, Context};

use riskshap::attribution::{exact_shapley_with_cap, mc_shapley, with_workers, CharacteristicFunction};
use riskshap::baselines::{external_attribution, loo_attribution, random_attribution, HttpScorer, ScoreTransport};
use riskshap::config::{Config, EvalMode, Method};
use riskshap::env::{simulate as run_simulation, DecisionSource, SimulationOutcome};
use riskshap::evaluation::{
    event_trajectory, faithfulness_experiment, mc_accuracy_sweep, summarize_faithfulness, write_accuracy_csv,
    write_faithfulness_csv, FaithfulnessSetup, Ranking, ShapleyMethod,
};
use riskshap::http::HttpEndpoint;
use riskshap::io::{trajectory_to_json, AttributionDocument, TrajectoryFile};
use riskshap::metrics::{BehaviorWeightMap, MetricReport};
use riskshap::scenario::{calibrate_rho, Scenario, ScenarioVisitor};
use riskshap::Error;

use crate::{AttributeArgs, Common, EvaluateArgs, MetricsArgs, SimulateArgs, DECISION_URL_VAR, SCORER_URL_VAR};

pub enum Failure {
    Usage(String),
    NoEvent(String),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::NoEvent(_) => 3,
            Failure::Runtime(_) => 4,
        }
    }

    pub fn message(&self) -> String {
        match self {
            Failure::Usage(m) | Failure::NoEvent(m) => m.clone(),
            Failure::Runtime(e) => format!("{e:#}"),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<Error>() {
            Some(Error::Config(_) | Error::UnknownScenario(_)) => Failure::Usage(format!("{e:#}")),
            _ => Failure::Runtime(e),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

type CmdResult = Result<(), Failure>;

fn load_config(common: &Common) -> Result<Config, Failure> {
    match &common.config {
        Some(path) => Ok(Config::load(path)?),
        None => Ok(Config::default()),
    }
}

fn workers(common: &Common, cfg: &Config) -> Result<Option<usize>, Failure> {
    match common.workers.or(cfg.run.workers) {
        Some(0) => Err(Failure::Usage("--workers must be at least 1".into())),
        w => Ok(w),
    }
}

fn in_pool(common: &Common, cfg: &Config, f: impl FnOnce() -> CmdResult + Send) -> CmdResult {
    with_workers(workers(common, cfg)?, f)?
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), Failure> {
    fs::write(path, contents)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(Failure::Runtime)
}

fn endpoint_from_env(var: &str, timeout_ms: u64, retries: u32) -> Option<HttpEndpoint> {
    std::env::var(var).ok().filter(|s| !s.is_empty()).map(|url| HttpEndpoint {
        url,
        timeout_ms,
        retries,
    })
}

pub fn simulate(args: &SimulateArgs) -> CmdResult {
    let cfg = load_config(&args.common)?;
    let kind = args.scenario.unwrap_or(cfg.run.scenario);
    let scenario = cfg.scenario(kind)?;
    in_pool(&args.common, &cfg, || scenario.visit(SimulateCmd { args, cfg: &cfg }))
}

struct SimulateCmd<'a> {
    args: &'a SimulateArgs,
    cfg: &'a Config,
}

impl ScenarioVisitor for SimulateCmd<'_> {
    type Output = CmdResult;

    fn visit<E: Scenario>(self, env: &E) -> CmdResult {
        let (args, cfg) = (self.args, self.cfg);
        let mut env = env.clone();
        if args.calibrate_rho {
            let plan = &cfg.run.calibration;
            let cal = calibrate_rho(&env, plan)?;
            println!("{}", cal.rho);
            eprintln!(
                "{}: rho = {} from {} risk values over {} calm runs (nearest-rank p = {})",
                env.scenario(),
                cal.rho,
                cal.samples,
                plan.runs,
                plan.percentile
            );
            if args.out.is_none() {
                return Ok(());
            }
            env = env.with_rho(cal.rho);
        }
        let seed = args.seed.unwrap_or(cfg.run.seed);
        let source = match endpoint_from_env(DECISION_URL_VAR, cfg.attribution.scorer_timeout_ms, cfg.attribution.scorer_retries) {
            Some(ep) => DecisionSource::External(ep),
            None => DecisionSource::Scripted,
        };
        match run_simulation(&env, &source, seed, env.rho(), cfg.run.max_steps)? {
            SimulationOutcome::Event(traj) => {
                let text = trajectory_to_json(&traj)?;
                match &args.out {
                    Some(path) => write_file(path, text.as_bytes())?,
                    None => print!("{text}"),
                }
                eprintln!(
                    "{} seed {}: event at step {} (risk {} > rho {})",
                    env.scenario(),
                    seed,
                    traj.steps(),
                    traj.final_risk(),
                    env.rho()
                );
                Ok(())
            }
            SimulationOutcome::NoEvent(run) => {
                let peak = run.risk_series.iter().fold(f64::NEG_INFINITY, |m, &r| m.max(r));
                Err(Failure::NoEvent(format!(
                    "{} seed {}: no event in {} steps (peak risk {} <= rho {})",
                    env.scenario(),
                    seed,
                    cfg.run.max_steps,
                    peak,
                    env.rho()
                )))
            }
        }
    }
}

pub fn attribute(args: &AttributeArgs) -> CmdResult {
    let cfg = load_config(&args.common)?;
    let file = TrajectoryFile::read(&args.trajectory)
        .with_context(|| format!("cannot load trajectory {}", args.trajectory.display()))?;
    in_pool(&args.common, &cfg, || {
        file.scenario.visit(AttributeCmd {
            args,
            cfg: &cfg,
            file: &file,
        })
    })
}

struct AttributeCmd<'a> {
    args: &'a AttributeArgs,
    cfg: &'a Config,
    file: &'a TrajectoryFile,
}

impl ScenarioVisitor for AttributeCmd<'_> {
    type Output = CmdResult;

    fn visit<E: Scenario>(self, env: &E) -> CmdResult {
        let (args, a) = (self.args, &self.cfg.attribution);
        let traj = self.file.record(env)?;
        let method = args.method.unwrap_or(a.method);
        let samples = args.samples.unwrap_or(a.samples);
        let seed = args.seed.unwrap_or(self.cfg.run.seed);
        let scorer = if method == Method::External {
            let ep = endpoint_from_env(SCORER_URL_VAR, a.scorer_timeout_ms, a.scorer_retries)
                .ok_or_else(|| Failure::Usage(format!("method external needs the scorer endpoint in {SCORER_URL_VAR}")))?;
            Some(HttpScorer { endpoint: ep })
        } else {
            None
        };

        let started = Instant::now();
        let cf = CharacteristicFunction::new(env, &traj)?;
        if let Some(cache) = args.cache.as_deref().filter(|p| p.exists()) {
            let added = cf.load_cache(cache)?;
            eprintln!("loaded {added} cached coalition values");
        }
        let mut phi = match method {
            Method::Exact => exact_shapley_with_cap(&cf, a.exact_cap)?,
            Method::Mc => mc_shapley(&cf, samples, seed)?,
            Method::Loo => loo_attribution(&cf)?,
            Method::Random => random_attribution(traj.agents(), traj.steps(), seed),
            Method::External => {
                let client: &dyn ScoreTransport = scorer.as_ref().expect("checked above");
                external_attribution(client, env, &traj, a.batch_size, cf.baseline_risk())?
            }
        };
        phi.total_risk = cf.grand_value();
        let elapsed = started.elapsed();
        if let Some(cache) = &args.cache {
            cf.save_cache(cache)?;
        }

        let mut doc = AttributionDocument::new(env.scenario(), &phi, cf.baseline_risk(), cf.evaluations());
        if args.record_time {
            doc.wall_time_ms = Some(elapsed.as_millis() as u64);
        }
        write_file(&args.out, doc.to_json()?.as_bytes())?;
        let residual = (phi.sum() - cf.grand_value()).abs();
        println!(
            "{method}: efficiency residual {residual:e} (v(Omega) = {}), {} evaluations, {} replays, {} ms",
            cf.grand_value(),
            cf.evaluations(),
            cf.replays(),
            elapsed.as_millis()
        );
        Ok(())
    }
}

pub fn metrics(args: &MetricsArgs) -> CmdResult {
    let cfg = load_config(&args.common)?;
    let file = TrajectoryFile::read(&args.trajectory)
        .with_context(|| format!("cannot load trajectory {}", args.trajectory.display()))?;
    let doc = AttributionDocument::read(&args.attribution)
        .with_context(|| format!("cannot load attribution {}", args.attribution.display()))?;
    let q = args.q.unwrap_or(cfg.attribution.q);
    if !(q > 0.0 && q <= 1.0) {
        return Err(Failure::Usage(format!("--q {q} must be in (0, 1]")));
    }
    file.scenario.visit(MetricsCmd {
        args,
        doc: &doc,
        file: &file,
        q,
    })
}

struct MetricsCmd<'a> {
    args: &'a MetricsArgs,
    doc: &'a AttributionDocument,
    file: &'a TrajectoryFile,
    q: f64,
}

impl ScenarioVisitor for MetricsCmd<'_> {
    type Output = CmdResult;

    fn visit<E: Scenario>(self, env: &E) -> CmdResult {
        let traj = self.file.record(env)?;
        let phi = self.doc.matrix()?;
        phi.check_shape(traj.agents(), traj.steps())?;
        let weights = BehaviorWeightMap::from_trajectory(&traj)?;
        let report = MetricReport::compute(&phi, &weights, traj.threshold_rho, self.q, self.doc.baseline_risk)?;

        let dir = &self.args.out;
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        let json = serde_json::to_string_pretty(&report).map_err(Error::from)? + "\n";
        write_file(&dir.join("metrics.json"), json.as_bytes())?;
        let mut buf = Vec::new();
        report.write_time_csv(&mut buf)?;
        write_file(&dir.join("phi_time.csv"), &buf)?;
        buf.clear();
        report.write_agent_csv(&mut buf)?;
        write_file(&dir.join("phi_agent.csv"), &buf)?;
        buf.clear();
        report.write_behavior_csv(&mut buf, &env.behavior_labels())?;
        write_file(&dir.join("phi_behavior.csv"), &buf)?;

        let show = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{x:.6}"));
        println!("conservation residual {:e}", report.conservation.max_residual);
        println!(
            "L_tm {}  G_ag {}  C_ag {}  Z_ag {}  G_be {}",
            show(report.l_tm),
            show(report.g_ag),
            show(report.c_ag),
            show(report.z_ag),
            show(report.g_be)
        );
        for (name, reason) in &report.undefined {
            println!("{name} undefined: {reason}");
        }
        Ok(())
    }
}

pub fn evaluate(args: &EvaluateArgs) -> CmdResult {
    let cfg = load_config(&args.common)?;
    let mode = args.mode.unwrap_or(cfg.evaluation.mode);
    let seeds = match &args.seeds {
        Some(s) => s.clone(),
        None => match mode {
            EvalMode::Faithfulness => cfg.evaluation.seeds.clone(),
            EvalMode::McAccuracy => cfg.evaluation.accuracy_seeds.clone(),
        },
    };
    if seeds.is_empty() {
        return Err(Failure::Usage("the seed list is empty".into()));
    }
    let kind = args.scenario.unwrap_or(cfg.run.scenario);
    let agents = (mode == EvalMode::McAccuracy).then_some(cfg.evaluation.accuracy_agents);
    let scenario = cfg.scenario_with_agents(kind, agents)?;
    in_pool(&args.common, &cfg, || {
        scenario.visit(EvaluateCmd {
            args,
            cfg: &cfg,
            mode,
            seeds: &seeds,
        })
    })
}

struct EvaluateCmd<'a> {
    args: &'a EvaluateArgs,
    cfg: &'a Config,
    mode: EvalMode,
    seeds: &'a [u64],
}

impl EvaluateCmd<'_> {
    fn emit(&self, csv: Vec<u8>) -> CmdResult {
        match &self.args.out {
            Some(path) => write_file(path, &csv),
            None => {
                std::io::stdout().write_all(&csv).map_err(|e| Failure::Runtime(anyhow!(e)))?;
                Ok(())
            }
        }
    }

    fn faithfulness<E: Scenario>(&self, env: &E) -> CmdResult {
        let (args, e) = (self.args, &self.cfg.evaluation);
        let a = &self.cfg.attribution;
        let shapley = match args.samples.as_deref() {
            _ if e.exact_shapley => ShapleyMethod::Exact,
            None => ShapleyMethod::MonteCarlo { samples: a.samples },
            Some([m]) => ShapleyMethod::MonteCarlo { samples: *m },
            Some(_) => return Err(Failure::Usage("faithfulness takes a single --samples value".into())),
        };
        let ks = args.topk.clone().unwrap_or_else(|| e.ks.clone());
        if ks.is_empty() {
            return Err(Failure::Usage("the --topk list is empty".into()));
        }
        let scorer = if e.include_external {
            let ep = endpoint_from_env(SCORER_URL_VAR, a.scorer_timeout_ms, a.scorer_retries).ok_or_else(|| {
                Failure::Usage(format!("include_external needs the scorer endpoint in {SCORER_URL_VAR}"))
            })?;
            Some(HttpScorer { endpoint: ep })
        } else {
            None
        };
        let trajectories = self
            .seeds
            .iter()
            .map(|&s| event_trajectory(env, s, env.rho(), self.cfg.run.max_steps, e.max_attempts))
            .collect::<Result<Vec<_>, _>>()?;
        let setup = FaithfulnessSetup {
            ks,
            shapley,
            random_seed: e.random_seed,
            ranking: if args.absolute { Ranking::Absolute } else { e.ranking },
            include_loo: e.include_loo,
            external: scorer.as_ref().map(|s| (s as &dyn ScoreTransport, a.batch_size)),
        };
        let rows = faithfulness_experiment(env, &trajectories, &setup)?;
        let mut csv = Vec::new();
        write_faithfulness_csv(&rows, &mut csv)?;
        self.emit(csv)?;
        eprintln!("{:<10} {:>4} {:>12}", "scorer", "k", "mean drop");
        for (scorer, k, drop) in summarize_faithfulness(&rows) {
            eprintln!("{scorer:<10} {k:>4} {drop:>12.6}");
        }
        Ok(())
    }

    fn accuracy<E: Scenario>(&self, env: &E) -> CmdResult {
        let e = &self.cfg.evaluation;
        let grid = self.args.samples.clone().unwrap_or_else(|| e.accuracy_samples.clone());
        if grid.is_empty() {
            return Err(Failure::Usage("the --samples grid is empty".into()));
        }
        let (rows, _) = mc_accuracy_sweep(env, self.seeds, &grid, e.accuracy_horizon)?;
        let mut csv = Vec::new();
        write_accuracy_csv(&rows, &mut csv)?;
        self.emit(csv)?;
        eprintln!("{:<8} {:>7} {:>10} {:>10}", "scenario", "M", "mean cos", "std cos");
        for r in &rows {
            eprintln!("{:<8} {:>7} {:>10.6} {:>10.6}", r.scenario, r.samples, r.mean_cos, r.std_cos);
        }
        Ok(())
    }
}

impl ScenarioVisitor for EvaluateCmd<'_> {
    type Output = CmdResult;

    fn visit<E: Scenario>(self, env: &E) -> CmdResult {
        match self.mode {
            EvalMode::Faithfulness => self.faithfulness(env),
            EvalMode::McAccuracy => self.accuracy(env),
        }
    }
}
