use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use serde_json::{json, Value as Json};

use toposample::density::DensityProfile;
use toposample::harness::{
    compare_strategies, profile_dump, results_table, run_experiment, samples_for_probability,
    scaling_table, zero_count_experiment, ExperimentConfig, HarnessError, HarnessResult, ModelSpec, ThresholdSpec,
    VERSION,
};
use toposample::orthant::{
    crossover_prob_mc, crossover_table, eigen_expansion_check, local_gaussian, s_alpha, s_alpha_n3_closed,
    s_alpha_pm_n3,
};
use toposample::planner::{
    build_plan, failure_bound, log_log_slope, max_c0, min_samples, scaling_study, topology_weight,
    uniform_bound_samples,
};
use toposample::rng::stream_rng;
use toposample::table::{Cell, Table};
use toposample::{FieldModel, Strategy, Threshold};

#[derive(Parser)]
#[command(name = "toposample", version, about = "Topology-guided sampling of 1-D Gaussian random fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Profile of C, C^{1/3}, S and D on an equispaced grid.
    Density {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 201)]
        points: usize,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Sampling grid of one strategy.
    Grid {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        size: SizeArgs,
        #[arg(long)]
        strategy: Option<Strategy>,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Probability bound for M, or the M needed for a probability.
    Bound {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        size: SizeArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Monte Carlo correctness of one plan.
    Experiment {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        size: SizeArgs,
        #[arg(long)]
        strategy: Option<Strategy>,
        #[command(flatten)]
        mc: McArgs,
        /// CSV file receiving one row per trial.
        #[arg(long)]
        per_trial_log: Option<PathBuf>,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Topology, uniform and density-guided plans on common paths.
    Compare {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        size: SizeArgs,
        #[command(flatten)]
        mc: McArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Mean zero count against the integral of D.
    Zeros {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        mc: McArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Sample counts of the topology and homogeneous bounds over N.
    Scaling {
        #[arg(long)]
        family: String,
        #[arg(long, value_delimiter = ',', default_value = "4,8,16,32,64")]
        ns: Vec<usize>,
        #[arg(long, default_value_t = 0.95)]
        p: f64,
        #[arg(long, allow_hyphen_values = true)]
        threshold: Option<ThresholdSpec>,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Local Gaussian checks: eigen-expansions, crossover frequencies and S factors.
    OrthantCheck {
        #[arg(long, value_enum)]
        mode: OrthantMode,
        #[command(flatten)]
        model: ModelArgs,
        /// Base point; defaults to the domain midpoint.
        #[arg(long, allow_hyphen_values = true)]
        x: Option<f64>,
        /// Spacings; defaults to 2^-4..2^-10 (eigen) or 0.01 (crossover).
        #[arg(long, value_delimiter = ',')]
        deltas: Option<Vec<f64>>,
        /// A single α vector for s-alpha mode.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        alpha: Option<Vec<f64>>,
        /// Number of random α in [-3, 3]^3 for s-alpha mode.
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[command(flatten)]
        mc: McArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OrthantMode {
    Eigen,
    Crossover,
    SAlpha,
}

#[derive(Args)]
struct ModelArgs {
    /// TOML configuration; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    length: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    amplitudes: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    variances: Option<Vec<f64>>,
    /// zero | constant=V | polynomial=c0,c1,... | cubic-shift=T
    #[arg(long, allow_hyphen_values = true)]
    threshold: Option<ThresholdSpec>,
}

#[derive(Args)]
struct SizeArgs {
    /// Number of grid intervals.
    #[arg(long)]
    m: Option<usize>,
    /// Target probability; M is the smallest count whose bound reaches it.
    #[arg(long)]
    p: Option<f64>,
}

#[derive(Args)]
struct McArgs {
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Oracle scan points per path.
    #[arg(long)]
    resolution: Option<usize>,
    /// Exit with status 4 when the statistical check fails.
    #[arg(long)]
    validate: bool,
}

#[derive(Clone, Copy, Default, ValueEnum)]
enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

fn load(model: &ModelArgs) -> HarnessResult<ExperimentConfig> {
    let mut cfg = match (&model.config, &model.family) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(family)) => ExperimentConfig::new(ModelSpec::family(family, None)),
        (None, None) => return Err(HarnessError::Config("either --config or --family is required".into())),
    };
    if let Some(f) = &model.family {
        cfg.model.family = f.clone();
    }
    if model.n.is_some() {
        cfg.model.n = model.n;
    }
    if model.length.is_some() {
        cfg.model.length = model.length;
    }
    if model.amplitudes.is_some() {
        cfg.model.amplitudes = model.amplitudes.clone();
    }
    if model.variances.is_some() {
        cfg.model.variances = model.variances.clone();
        cfg.model.covariance = None;
    }
    if let Some(t) = &model.threshold {
        cfg.threshold = t.clone();
    }
    Ok(cfg)
}

fn apply_size(cfg: &mut ExperimentConfig, size: &SizeArgs) -> HarnessResult<()> {
    match (size.m, size.p) {
        (Some(_), Some(_)) => return Err(HarnessError::Config("give either --m or --p, not both".into())),
        (Some(m), None) => {
            cfg.run.m = Some(m);
            cfg.run.p = None;
        }
        (None, Some(p)) => {
            cfg.run.p = Some(p);
            cfg.run.m = None;
        }
        (None, None) => {}
    }
    Ok(())
}

fn apply_mc(cfg: &mut ExperimentConfig, mc: &McArgs) -> HarnessResult<u64> {
    if mc.trials.is_some() {
        cfg.run.trials = mc.trials;
    }
    if mc.seed.is_some() {
        cfg.run.seed = mc.seed;
    }
    if mc.resolution.is_some() {
        cfg.run.resolution = mc.resolution;
    }
    if cfg.run.trials == Some(0) {
        return Err(HarnessError::Config("trials must be at least 1".into()));
    }
    cfg.run
        .seed
        .ok_or_else(|| HarnessError::Config("this command is stochastic and needs --seed".into()))
}

fn apply_output(cfg: &mut ExperimentConfig, out: &OutputArgs) {
    if out.output.is_some() {
        cfg.run.output = out.output.clone();
    }
    if out.threads.is_some() {
        cfg.run.threads = out.threads;
    }
}

fn size_for(cfg: &ExperimentConfig, model: &FieldModel, threshold: &Threshold) -> HarnessResult<usize> {
    match (cfg.run.m, cfg.run.p) {
        (Some(_), Some(_)) => Err(HarnessError::Config("give either m or p, not both".into())),
        (Some(0), None) => Err(HarnessError::Config("m must be at least 1".into())),
        (Some(m), None) => Ok(m),
        (None, Some(p)) => samples_for_probability(model, threshold, p).map_err(HarnessError::at("planning")),
        (None, None) => Err(HarnessError::Config("one of --m or --p is required".into())),
    }
}

fn io_error(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |e| HarnessError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Output of one command.
struct Report {
    command: &'static str,
    table: Table,
    config: Option<Json>,
    extra: Json,
    /// Message of a failed soft assertion.
    failure: Option<String>,
}

impl Report {
    fn new(command: &'static str, table: Table) -> Self {
        Self {
            command,
            table,
            config: None,
            extra: json!({}),
            failure: None,
        }
    }

    fn config(mut self, cfg: &ExperimentConfig) -> Self {
        self.config = Some(cfg.echo());
        self
    }

    fn extra(mut self, extra: Json) -> Self {
        self.extra = extra;
        self
    }

    fn check(mut self, validate: bool, ok: bool, message: impl FnOnce() -> String) -> Self {
        if validate && !ok {
            self.failure = Some(message());
        }
        self
    }

    fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.table.to_csv(),
            Format::Json => {
                let seed = self.config.as_ref().and_then(|c| c["run"].get("seed").cloned());
                self.table.to_json(json!({
                    "command": self.command,
                    "version": VERSION,
                    "seed": seed,
                    "config": self.config,
                    "summary": self.extra,
                }))
            }
        }
    }
}

fn emit(report: Report, out: &OutputArgs, output: Option<&PathBuf>) -> HarnessResult<()> {
    let text = report.render(out.format);
    match output {
        Some(path) => std::fs::write(path, text).map_err(io_error(path))?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| HarnessError::Io {
                    path: "<stdout>".into(),
                    message: e.to_string(),
                })?;
        }
    }
    match report.failure {
        Some(msg) => Err(HarnessError::SoftAssertion(msg)),
        None => Ok(()),
    }
}

fn setup_threads(threads: Option<usize>) -> HarnessResult<()> {
    if let Some(t) = threads {
        if t == 0 {
            return Err(HarnessError::Config("threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
    }
    Ok(())
}

fn midpoint(model: &FieldModel) -> f64 {
    let (a, b) = model.domain();
    0.5 * (a + b)
}

fn run(cli: Cli) -> HarnessResult<()> {
    match cli.command {
        Command::Density { model, points, out } => {
            let mut cfg = load(&model)?;
            apply_output(&mut cfg, &out);
            setup_threads(cfg.run.threads)?;
            let m = cfg.model.build()?;
            let th = cfg.threshold.build();
            let table = profile_dump(&m, &th, points).map_err(HarnessError::at("density profile"))?;
            emit(Report::new("density", table).config(&cfg), &out, cfg.run.output.as_ref())
        }
        Command::Grid {
            model,
            size,
            strategy,
            out,
        } => {
            let mut cfg = load(&model)?;
            apply_size(&mut cfg, &size)?;
            apply_output(&mut cfg, &out);
            if strategy.is_some() {
                cfg.run.strategy = strategy;
            }
            setup_threads(cfg.run.threads)?;
            let m = cfg.model.build()?;
            let th = cfg.threshold.build();
            let count = size_for(&cfg, &m, &th)?;
            let plan = build_plan(&m, &th, cfg.strategy(), count).map_err(HarnessError::at("planning"))?;
            let mut table = Table::new(&["index", "x"]);
            for (i, &x) in plan.grid.iter().enumerate() {
                table.row(vec![i.into(), x.into()]);
            }
            let extra = json!({
                "strategy": plan.strategy.name(),
                "m": plan.m(),
                "k": plan.k,
                "bound": plan.bound,
                "vacuous": plan.vacuous,
                "fallback_uniform": plan.fallback_uniform,
            });
            emit(Report::new("grid", table).config(&cfg).extra(extra), &out, cfg.run.output.as_ref())
        }
        Command::Bound { model, size, out } => {
            let mut cfg = load(&model)?;
            apply_size(&mut cfg, &size)?;
            apply_output(&mut cfg, &out);
            setup_threads(cfg.run.threads)?;
            let m = cfg.model.build()?;
            let th = cfg.threshold.build();
            let k = topology_weight(&m, &th).map_err(HarnessError::at("topology weight"))?;
            let (x_max, c0max) = max_c0(&m, &th).map_err(HarnessError::at("maximum of C0"))?;
            let (a, b) = m.domain();
            let mut table = Table::new(&["k", "c0_max", "x_c0_max", "m", "bound", "vacuous", "m_uniform", "p"]);
            let (count, p) = match (cfg.run.m, cfg.run.p) {
                (Some(count), None) => (count, failure_bound(k, count).value),
                (None, Some(p)) => (min_samples(k, p).map_err(HarnessError::at("sample count"))?, p),
                _ => return Err(HarnessError::Config("exactly one of --m or --p is required".into())),
            };
            if count == 0 {
                return Err(HarnessError::Config("m must be at least 1".into()));
            }
            let bound = failure_bound(k, count);
            let m_uniform = if (0.0..1.0).contains(&p) {
                Cell::from(uniform_bound_samples(c0max, b - a, p).map_err(HarnessError::at("uniform count"))?)
            } else {
                Cell::from("none")
            };
            table.row(vec![
                k.into(),
                c0max.into(),
                x_max.into(),
                count.into(),
                bound.value.into(),
                bound.vacuous.into(),
                m_uniform,
                p.into(),
            ]);
            emit(Report::new("bound", table).config(&cfg), &out, cfg.run.output.as_ref())
        }
        Command::Experiment {
            model,
            size,
            strategy,
            mc,
            per_trial_log,
            out,
        } => {
            let mut cfg = load(&model)?;
            apply_size(&mut cfg, &size)?;
            apply_mc(&mut cfg, &mc)?;
            apply_output(&mut cfg, &out);
            if strategy.is_some() {
                cfg.run.strategy = strategy;
            }
            if per_trial_log.is_some() {
                cfg.run.per_trial_log = per_trial_log;
            }
            setup_threads(cfg.run.threads)?;
            let result = run_experiment(&cfg)?;
            if let (Some(path), Some(log)) = (&cfg.run.per_trial_log, result.trial_table()) {
                std::fs::write(path, log.to_csv()).map_err(io_error(path))?;
            }
            let floor = result.bound - 3.0 * result.standard_error;
            let report = Report::new("experiment", result.table()).config(&cfg).check(
                mc.validate,
                result.vacuous || result.correctness >= floor,
                || format!("correctness {} below bound {} minus 3 SE", result.correctness, result.bound),
            );
            emit(report, &out, cfg.run.output.as_ref())
        }
        Command::Compare { model, size, mc, out } => {
            let mut cfg = load(&model)?;
            apply_size(&mut cfg, &size)?;
            let seed = apply_mc(&mut cfg, &mc)?;
            apply_output(&mut cfg, &out);
            setup_threads(cfg.run.threads)?;
            let m = cfg.model.build()?;
            let th = cfg.threshold.build();
            let count = size_for(&cfg, &m, &th)?;
            let results = compare_strategies(&m, &th, count, cfg.trials(), seed, cfg.run.resolution)
                .map_err(HarnessError::at("strategy comparison"))?;
            let (top, uni) = (&results[0], &results[1]);
            let joint = (top.standard_error.powi(2) + uni.standard_error.powi(2)).sqrt();
            let report = Report::new("compare", results_table(&results)).config(&cfg).check(
                mc.validate,
                top.correctness >= uni.correctness - 2.0 * joint,
                || format!("topology {} below uniform {} minus 2 joint SE", top.correctness, uni.correctness),
            );
            emit(report, &out, cfg.run.output.as_ref())
        }
        Command::Zeros { model, mc, out } => {
            let mut cfg = load(&model)?;
            let seed = apply_mc(&mut cfg, &mc)?;
            apply_output(&mut cfg, &out);
            setup_threads(cfg.run.threads)?;
            let m = cfg.model.build()?;
            let r = zero_count_experiment(&m, cfg.trials(), seed, cfg.run.resolution)
                .map_err(HarnessError::at("zero count"))?;
            let ok = (r.mean - r.expected).abs() <= 3.0 * r.standard_error + 1e-9 * r.expected;
            let report = Report::new("zeros", r.table())
                .config(&cfg)
                .check(mc.validate, ok, || format!("mean {} not within 3 SE of {}", r.mean, r.expected));
            emit(report, &out, cfg.run.output.as_ref())
        }
        Command::Scaling {
            family,
            ns,
            p,
            threshold,
            out,
        } => {
            setup_threads(out.threads)?;
            let th = threshold.clone().unwrap_or_default().build();
            ModelSpec::family(&family, ns.first().copied()).build()?;
            let rows = scaling_study(
                |n| {
                    ModelSpec::family(&family, Some(n))
                        .build()
                        .map_err(|e| toposample::Error::InvalidModel(e.to_string()))
                },
                &ns,
                &th,
                p,
            )
            .map_err(HarnessError::at("scaling study"))?;
            let xs: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
            let top: Vec<f64> = rows.iter().map(|r| r.m_topology as f64).collect();
            let uni: Vec<f64> = rows.iter().map(|r| r.m_uniform as f64).collect();
            let extra = json!({
                "family": family,
                "p": p,
                "slope_topology": log_log_slope(&xs, &top),
                "slope_uniform": log_log_slope(&xs, &uni),
            });
            emit(Report::new("scaling", scaling_table(&rows)).extra(extra), &out, out.output.as_ref())
        }
        Command::OrthantCheck {
            mode,
            model,
            x,
            deltas,
            alpha,
            count,
            mc,
            out,
        } => match mode {
            OrthantMode::SAlpha => s_alpha_check(alpha, count, &mc, &out),
            OrthantMode::Eigen | OrthantMode::Crossover => {
                let mut cfg = load(&model)?;
                apply_output(&mut cfg, &out);
                let seed = match mode {
                    OrthantMode::Crossover => Some(apply_mc(&mut cfg, &mc)?),
                    _ => None,
                };
                setup_threads(cfg.run.threads)?;
                let m = cfg.model.build()?;
                let th = cfg.threshold.build();
                let x = x.unwrap_or_else(|| midpoint(&m));
                let report = match seed {
                    None => {
                        let deltas = deltas.unwrap_or_else(|| (4..=10).map(|j| 2f64.powi(-j)).collect());
                        let e = eigen_expansion_check(&m, &th, x, &deltas).map_err(HarnessError::at("eigen expansion"))?;
                        let orders: serde_json::Map<String, Json> = e
                            .series
                            .iter()
                            .map(|s| (s.name.to_string(), json!(s.order)))
                            .collect();
                        let worst = ["lambda1", "lambda2", "lambda3", "v1_angle", "v2_angle", "v3_angle"]
                            .iter()
                            .filter_map(|n| e.get(n))
                            .map(|s| s.final_error())
                            .fold(0.0, f64::max);
                        Report::new("orthant-check", e.table())
                            .config(&cfg)
                            .extra(json!({"mode": "eigen", "x": x, "orders": orders}))
                            .check(mc.validate, worst <= 0.02, || format!("final error {worst} above 2%"))
                    }
                    Some(seed) => {
                        let deltas = deltas.unwrap_or_else(|| vec![0.01]);
                        let trials = cfg.run.trials.unwrap_or(1_000_000);
                        let c0 = 0.75 * DensityProfile::new(&m, &th).c(x).map_err(HarnessError::at("density"))?;
                        let mut rows = Vec::with_capacity(deltas.len());
                        for &d in &deltas {
                            let local = local_gaussian(&m, &th, x, d).map_err(HarnessError::at("local covariance"))?;
                            let est = crossover_prob_mc(&local, trials, seed).map_err(HarnessError::at("crossover"))?;
                            rows.push((d, est));
                        }
                        let ok = rows.iter().all(|(d, e)| (e.estimate / (c0 * d.powi(3)) - 1.0).abs() <= 0.15);
                        Report::new("orthant-check", crossover_table(&rows, c0))
                            .config(&cfg)
                            .extra(json!({"mode": "crossover", "x": x, "c0": c0}))
                            .check(mc.validate, ok, || "crossover ratio outside [0.85, 1.15]".into())
                    }
                };
                emit(report, &out, cfg.run.output.as_ref())
            }
        },
    }
}

fn s_alpha_check(alpha: Option<Vec<f64>>, count: usize, mc: &McArgs, out: &OutputArgs) -> HarnessResult<()> {
    setup_threads(out.threads)?;
    let alphas: Vec<[f64; 3]> = match alpha {
        Some(a) => {
            let v: [f64; 3] = a
                .try_into()
                .map_err(|_| HarnessError::Config("--alpha needs exactly three values".into()))?;
            vec![v]
        }
        None => {
            let seed = mc
                .seed
                .ok_or_else(|| HarnessError::Config("random alpha vectors need --seed".into()))?;
            let mut rng = stream_rng(seed, 0);
            (0..count)
                .map(|_| std::array::from_fn(|_| rng.random_range(-3.0..=3.0)))
                .collect()
        }
    };
    let mut table = Table::new(&[
        "alpha1",
        "alpha2",
        "alpha3",
        "s_quadrature",
        "s_closed",
        "s_pm",
        "closed_form_error",
        "identity_error",
    ]);
    let (mut worst_closed, mut worst_identity) = (0.0_f64, 0.0_f64);
    for a in &alphas {
        let quad = s_alpha(a).map_err(HarnessError::at("s-alpha"))?;
        let neg = s_alpha(&a.map(|v| -v)).map_err(HarnessError::at("s-alpha"))?;
        let closed = s_alpha_n3_closed(*a);
        let pm = s_alpha_pm_n3(*a);
        let closed_err = (quad - closed).abs();
        let identity_err = (quad + neg - pm).abs();
        worst_closed = worst_closed.max(closed_err);
        worst_identity = worst_identity.max(identity_err);
        table.row(vec![
            a[0].into(),
            a[1].into(),
            a[2].into(),
            quad.into(),
            closed.into(),
            pm.into(),
            closed_err.into(),
            identity_err.into(),
        ]);
    }
    let report = Report::new("orthant-check", table)
        .extra(json!({"mode": "s-alpha", "seed": mc.seed}))
        .check(mc.validate, worst_closed <= 1e-8 && worst_identity <= 1e-10, || {
            format!("closed form error {worst_closed}, identity error {worst_identity}")
        });
    emit(report, out, out.output.as_ref())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("toposample: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
