use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use viscoflow::bounds::BoundsKind;
use viscoflow::displacement::Stepper;
use viscoflow::numerics::logspace;
use viscoflow::ModelSpec;
use viscoflow_cli::config::{resolve_output, Boundary, InitialData, RecordGrid, Spacing};
use viscoflow_cli::manifest::Status;
use viscoflow_cli::sweep::{sweep, Axis};
use viscoflow_cli::tools::{self, build_model, LoadedRun, P0Spec, PlotKind};
use viscoflow_cli::{run, CliError, ExperimentConfig};

/// Numerical laboratory for the quasistatic viscoelastic gradient flow
/// p_t = −σ(p) + ∫σ(p).
///
/// Relative output directories are resolved against $VISCOFLOW_OUT when it
/// is set. Exit codes: 0 success, 1 a check failed, 2 configuration or
/// usage error, 3 model hypothesis not satisfied, 4 integration failure,
/// 5 input/output error.
#[derive(Parser)]
#[command(name = "viscoflow", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Full pipeline: bounds, integration, invariant checks, analyses.
    Run(Box<RunArgs>),
    /// Pointwise solutions of the mixed problem, p_t = −σ(p).
    Mixed(MixedArgs),
    /// Universal bound curves as CSV plus their constants as JSON.
    Bounds(BoundsArgs),
    /// Whether the equilibrium with mean strain μ is unique.
    Equilibria(EquilibriaArgs),
    /// Long-time analysis of a stored trajectory.
    Asympt(AsymptArgs),
    /// The three-dimensional example whose ω-limit depends on dense data.
    Counterexample(CounterexampleArgs),
    /// Plot-ready tables from a stored trajectory.
    Plotdata(PlotArgs),
    /// Runs a template configuration over a parameter grid.
    Sweep(SweepArgs),
}

#[derive(Args, Clone, Default)]
struct ModelArgs {
    /// Model name: cubic, shifted-cubic, singular-cubic, linear, log,
    /// p-minus-inv, p2-minus-inv or polynomial.
    #[arg(long)]
    model: Option<String>,
    /// Model parameter as key=value (repeatable), e.g. kappa=0.1.
    #[arg(long = "param", value_parser = parse_param)]
    params: Vec<(String, f64)>,
    /// Polynomial coefficients in ascending order (model `polynomial`).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    coeffs: Option<Vec<f64>>,
}

impl ModelArgs {
    /// Applies the flags on top of `base`; a new name starts from scratch.
    fn apply(&self, base: ModelSpec) -> ModelSpec {
        let mut spec = match &self.model {
            Some(name) => ModelSpec::named(name),
            None => base,
        };
        for (k, v) in &self.params {
            spec.params.insert(k.clone(), *v);
        }
        if let Some(c) = &self.coeffs {
            spec.coeffs = Some(c.clone());
        }
        spec
    }
}

fn parse_param(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or("expected key=value")?;
    let v = v.trim().parse::<f64>().map_err(|_| format!("`{v}` is not a number"))?;
    Ok((k.trim().to_string(), v))
}

fn parse_range(s: &str) -> Result<[f64; 2], String> {
    let (a, b) = s.split_once(',').ok_or("expected lo,hi")?;
    let num = |x: &str| x.trim().parse::<f64>().map_err(|_| format!("`{x}` is not a number"));
    Ok([num(a)?, num(b)?])
}

#[derive(Clone, Copy, ValueEnum)]
enum InitKind {
    Explicit,
    Random,
    Ramp,
    File,
}

#[derive(Clone, Copy, ValueEnum)]
enum StepperKind {
    Rk45,
    Prox,
}

#[derive(Clone, Copy, ValueEnum)]
enum BoundaryArg {
    Mixed,
    Displacement,
}

impl From<BoundaryArg> for Boundary {
    fn from(b: BoundaryArg) -> Self {
        match b {
            BoundaryArg::Mixed => Boundary::Mixed,
            BoundaryArg::Displacement => Boundary::Displacement,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration; flags override its fields.
    config: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum)]
    boundary: Option<BoundaryArg>,
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<f64>,
    /// Number of components.
    #[arg(long)]
    n: Option<usize>,
    /// Initial data kind; implied by --values, --seed or --file when absent.
    #[arg(long, value_enum)]
    init: Option<InitKind>,
    /// Explicit initial values, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    values: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Sampling range lo,hi for random data.
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
    range: Option<[f64; 2]>,
    /// Sample count for ramp data.
    #[arg(long)]
    samples: Option<usize>,
    /// File of samples for file data.
    #[arg(long)]
    file: Option<PathBuf>,
    #[arg(long)]
    t_final: Option<f64>,
    #[arg(long, value_enum)]
    stepper: Option<StepperKind>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    rtol: Option<f64>,
    /// Step budget (accepted plus rejected) before the run fails.
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    atol: Option<f64>,
    /// Record spacing; sets a linear grid with this step.
    #[arg(long)]
    record_every: Option<f64>,
    /// Number of record times.
    #[arg(long)]
    records: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    no_bounds: bool,
    #[arg(long)]
    no_asympt: bool,
    #[arg(long)]
    no_invariants: bool,
}

#[derive(Args)]
struct MixedArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// constant:V, step:A,B or file:PATH.
    #[arg(long, default_value = "constant:0.5")]
    p0: P0Spec,
    /// Number of samples for constant and step data.
    #[arg(long, default_value_t = 64)]
    samples: usize,
    #[arg(long, default_value_t = 20.0)]
    t_final: f64,
    #[arg(long, default_value_t = 201)]
    records: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Mixed,
    Displacement,
}

#[derive(Args)]
struct BoundsArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum, default_value = "displacement")]
    kind: KindArg,
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    mu: f64,
    /// Log-spaced time grid.
    #[arg(long, default_value_t = 1e-6)]
    t_min: f64,
    #[arg(long, default_value_t = 1e3)]
    t_max: f64,
    #[arg(long, default_value_t = 400)]
    points: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EquilibriaArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    mu: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AsymptArgs {
    /// Trajectory CSV written by `run`.
    trajectory: PathBuf,
    /// Overrides the model recorded beside the trajectory.
    #[command(flatten)]
    model: ModelArgs,
    /// Defaults to the trajectory's directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CounterexampleArgs {
    #[arg(long, default_value_t = 1000.0)]
    t_final: f64,
    #[arg(long, default_value_t = 400)]
    records: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Trajectory CSV written by `run`.
    trajectory: PathBuf,
    #[arg(long, value_enum)]
    kind: PlotKind,
    #[command(flatten)]
    model: ModelArgs,
    /// Defaults to the trajectory's directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Template configuration.
    config: Option<PathBuf>,
    /// Axis key=v1,v2,... or key=a..b (repeatable). Keys mu, n, seed,
    /// t_final; other keys are model parameters.
    #[arg(long = "grid")]
    grid: Vec<Axis>,
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match dispatch(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}

fn out_dir(out: Option<PathBuf>, default: &str) -> PathBuf {
    resolve_output(&out.unwrap_or_else(|| PathBuf::from(default)))
}

fn beside(out: Option<PathBuf>, file: &Path) -> PathBuf {
    match out {
        Some(o) => resolve_output(&o),
        None => file
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from(".")),
    }
}

fn list(paths: &[PathBuf]) {
    for p in paths {
        println!("{}", p.display());
    }
}

fn dispatch(cmd: Cmd) -> Result<i32, CliError> {
    match cmd {
        Cmd::Run(args) => {
            let cfg = run_config(&args)?;
            let dir = cfg.resolved_output();
            let outcome = run::run(&cfg, &dir)?;
            for c in &outcome.manifest.checks {
                let tag = match c.status {
                    Status::Pass => "PASS",
                    Status::Fail => "FAIL",
                    Status::Skip => "SKIP",
                };
                println!("{tag} {}: {}", c.name, c.detail);
            }
            if let Some(e) = &outcome.manifest.error {
                eprintln!("error: {e}");
            }
            println!("{}", outcome.manifest_path.display());
            Ok(outcome.exit_code())
        }
        Cmd::Mixed(a) => {
            let model = build_model(&a.model.apply(ModelSpec::default()))?;
            if a.records < 2 || !(a.t_final > 0.0) {
                return Err(CliError::Config("need --records ≥ 2 and --t-final > 0".into()));
            }
            let samples = a.p0.samples(a.samples)?;
            let times = RecordGrid {
                count: a.records,
                spacing: Spacing::Linear,
                start: None,
            }
            .times(a.t_final);
            let dir = out_dir(a.out, "viscoflow-out/mixed");
            list(&tools::mixed(&model, &samples, &times, &dir)?);
            Ok(0)
        }
        Cmd::Bounds(a) => {
            let model = build_model(&a.model.apply(ModelSpec::default()))?;
            if !(a.t_min > 0.0 && a.t_max > a.t_min) || a.points < 2 {
                return Err(CliError::Config("need 0 < --t-min < --t-max and --points ≥ 2".into()));
            }
            let grid = logspace(a.t_min, a.t_max, a.points);
            let kind = match a.kind {
                KindArg::Mixed => BoundsKind::Mixed,
                KindArg::Displacement => BoundsKind::Displacement,
            };
            let dir = out_dir(a.out, "viscoflow-out/bounds");
            let (_, files) = tools::bounds(&model, kind, a.mu, &grid, &dir)?;
            list(&files);
            Ok(0)
        }
        Cmd::Equilibria(a) => {
            let model = build_model(&a.model.apply(ModelSpec::default()))?;
            let dir = out_dir(a.out, "viscoflow-out/equilibria");
            let (report, path) = tools::equilibria(&model, a.mu, &dir)?;
            println!(
                "{}: μ = {} → {}",
                model.name,
                a.mu,
                if report.unique { "UNIQUE" } else { "CONTINUUM" }
            );
            println!("{}", path.display());
            Ok(0)
        }
        Cmd::Asympt(a) => {
            let spec = a.model.model.is_some().then(|| a.model.apply(ModelSpec::default()));
            let run = LoadedRun::load(&a.trajectory, spec.as_ref())?;
            let dir = beside(a.out, &a.trajectory);
            list(&tools::asympt(&run, &dir)?);
            Ok(0)
        }
        Cmd::Counterexample(a) => {
            let dir = out_dir(a.out, "viscoflow-out/counterexample");
            list(&tools::counterexample(a.t_final, a.records, &dir)?);
            Ok(0)
        }
        Cmd::Plotdata(a) => {
            let spec = a.model.model.is_some().then(|| a.model.apply(ModelSpec::default()));
            let run = LoadedRun::load(&a.trajectory, spec.as_ref())?;
            let dir = beside(a.out, &a.trajectory);
            list(&[tools::plotdata(&run, a.kind, &a.trajectory, &dir)?]);
            Ok(0)
        }
        Cmd::Sweep(a) => {
            let template = match &a.config {
                Some(p) => ExperimentConfig::load(p)?,
                None => ExperimentConfig::default(),
            };
            template.validate()?;
            let dir = match a.out {
                Some(o) => resolve_output(&o),
                None => template.resolved_output().join("sweep"),
            };
            let report = sweep(&template, &a.grid, a.jobs, &dir)?;
            println!("{} of {} members passed", report.passed, report.members);
            println!("{}", dir.join(viscoflow_cli::sweep::SWEEP_FILE).display());
            Ok(0)
        }
    }
}

/// The configuration file (or defaults) with the flag overrides applied.
fn run_config(a: &RunArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.model = a.model.apply(cfg.model);
    if let Some(b) = a.boundary {
        cfg.boundary = b.into();
    }
    if let Some(mu) = a.mu {
        cfg.mu = mu;
    }
    if let Some(n) = a.n {
        cfg.n = n;
    }
    if let Some(t) = a.t_final {
        cfg.t_final = t;
    }
    if let Some(m) = a.max_steps {
        cfg.max_steps = m;
    }
    let kind = a.init.or(if a.values.is_some() {
        Some(InitKind::Explicit)
    } else if a.file.is_some() {
        Some(InitKind::File)
    } else if a.seed.is_some() || a.range.is_some() {
        Some(InitKind::Random)
    } else if a.samples.is_some() {
        Some(InitKind::Ramp)
    } else {
        None
    });
    if let Some(kind) = kind {
        let (old_seed, old_range) = match &cfg.initial {
            InitialData::Random { seed, range } => (*seed, *range),
            _ => (1, None),
        };
        cfg.initial = match kind {
            InitKind::Explicit => InitialData::Explicit {
                values: a.values.clone().unwrap_or_default(),
            },
            InitKind::Random => InitialData::Random {
                seed: a.seed.unwrap_or(old_seed),
                range: a.range.or(old_range),
            },
            InitKind::Ramp => InitialData::Ramp {
                samples: a.samples.unwrap_or(1024),
            },
            InitKind::File => InitialData::File {
                path: a
                    .file
                    .clone()
                    .ok_or_else(|| CliError::Config("--init file needs --file".into()))?,
            },
        };
    }
    let current_tau = match cfg.stepper {
        Stepper::Prox { tau } => tau,
        Stepper::Rk45 { .. } => 1e-3,
    };
    let (cur_rtol, cur_atol) = match (cfg.stepper, Stepper::default()) {
        (Stepper::Rk45 { rtol, atol }, _) | (_, Stepper::Rk45 { rtol, atol }) => (rtol, atol),
        _ => (1e-10, 1e-12),
    };
    let kind = a.stepper.unwrap_or(match cfg.stepper {
        Stepper::Rk45 { .. } => StepperKind::Rk45,
        Stepper::Prox { .. } => StepperKind::Prox,
    });
    cfg.stepper = match kind {
        StepperKind::Rk45 => Stepper::Rk45 {
            rtol: a.rtol.unwrap_or(cur_rtol),
            atol: a.atol.unwrap_or(cur_atol),
        },
        StepperKind::Prox => Stepper::Prox {
            tau: a.tau.unwrap_or(current_tau),
        },
    };
    if let Some(dt) = a.record_every {
        if !(dt > 0.0 && dt <= cfg.t_final) {
            return Err(CliError::Config(format!(
                "--record-every must lie in (0, t_final], got {dt}"
            )));
        }
        cfg.record = RecordGrid {
            count: (cfg.t_final / dt).round() as usize + 1,
            spacing: Spacing::Linear,
            start: None,
        };
    }
    if let Some(r) = a.records {
        cfg.record.count = r;
    }
    if let Some(o) = &a.out {
        cfg.output_dir = o.clone();
    }
    if a.no_bounds {
        cfg.analysis.bounds_lower = false;
        cfg.analysis.bounds_upper = false;
    }
    if a.no_asympt {
        cfg.analysis.asympt = false;
    }
    if a.no_invariants {
        cfg.analysis.invariants = false;
    }
    Ok(cfg)
}
