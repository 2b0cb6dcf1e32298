use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use wcl::analysis::{contraction_experiment, convergence_experiment, correlation_integral, ContractionRow};
use wcl::generators::{build_generator, transition_time, DynAvgForm, GeneratorKind, GeneratorSpec, TransitionTime};
use wcl::io::{
    csv_with_echo, experiment_csv, load_generator, write_outputs, write_text, ComplexMatrix, Estimates,
    GeneratorDoc, ModelRecipe, ModelSource, OutputFormat, RunConfig, SCHEMA,
};
use wcl::model::{validate_model, QuadScheme, QuadratureConfig, SystemModel};
use wcl::opalg::spectral_norm;
use wcl::propagate::Dynamics;
use wcl::{Error, Operator};

const USAGE: u8 = 2;
const CONSTRUCTION: u8 = 3;
const EXPERIMENT: u8 = 4;

const AFTER_HELP: &str = "\
Exit codes: 0 success, 2 usage, 3 construction error, 4 experiment error.
Environment: WCL_THREADS caps the worker threads (default: all cores).
Outputs carry the schema string \"wcl-1\" and an echo of the configuration.";

const CONVERGENCE_HELP: &str = "\
CSV columns, in order: lambda, T_lambda, sup_error, argmax_t, max_norm, a0_plateau, wall_ms.
Rows are sorted by descending |lambda|. Lines starting with '#' carry the schema and config echo.";

const CONTRACTION_HELP: &str = "\
CSV columns, in order: lambda, T_lambda, max_norm, argmax_t, min_slack, dissipative.";

const CORRELATIONS_HELP: &str = "\
CSV columns, in order: t, a0[, a1[, a2]] up to the requested order.";

const PROPAGATE_HELP: &str = "\
CSV columns, in order: t, exact_norm[, approx_norm, error] (the last two only with --generator).";

#[derive(Parser)]
#[command(name = "wcl", version, about = "Weak-coupling generators and projected dynamics", after_help = AFTER_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a seeded model and write it as JSON.
    GenerateModel(GenerateModelArgs),
    /// Build a generator K for a model and write its matrix.
    BuildGenerator(BuildGeneratorArgs),
    /// Tabulate the exact projected evolution, optionally against a generator.
    #[command(after_help = PROPAGATE_HELP)]
    Propagate(PropagateArgs),
    /// Run a weak-coupling convergence sweep from a config file.
    #[command(after_help = CONVERGENCE_HELP)]
    Convergence(ExperimentArgs),
    /// Scan semigroup norms and resolvent slack from a config file.
    #[command(after_help = CONTRACTION_HELP)]
    Contraction(ExperimentArgs),
    /// Tabulate the correlation integrals a_n(t).
    #[command(after_help = CORRELATIONS_HELP)]
    Correlations(CorrelationsArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    Random,
    QuasiContinuum,
}

#[derive(Args)]
struct GenerateModelArgs {
    #[arg(long, value_enum, default_value = "random")]
    kind: ModelKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    n0: usize,
    #[arg(long)]
    n1: usize,
    /// Frequency band of the random model.
    #[arg(long, default_value_t = 1.0)]
    omega_band: f64,
    #[arg(long, default_value_t = 1.0)]
    coupling_scale: f64,
    /// Environment bandwidth of the quasi-continuum model.
    #[arg(long, default_value_t = 20.0)]
    bandwidth: f64,
    #[arg(long, default_value_t = 3.0)]
    profile_width: f64,
    #[arg(long, default_value_t = 0.0)]
    profile_center: f64,
    /// Comma-separated system frequencies (quasi-continuum only).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    system_omega: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    /// Output path; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    Davies,
    Family,
    Dynavg,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormArg {
    QAverage,
    OrderedDouble,
    TimeOrdered,
}

impl From<FormArg> for DynAvgForm {
    fn from(f: FormArg) -> Self {
        match f {
            FormArg::QAverage => DynAvgForm::QAverage,
            FormArg::OrderedDouble => DynAvgForm::OrderedDouble,
            FormArg::TimeOrdered => DynAvgForm::TimeOrdered,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    GaussLegendrePanels,
    CompositeSimpson,
}

#[derive(Args, Clone)]
struct QuadArgs {
    #[arg(long)]
    x_max_factor: Option<f64>,
    #[arg(long)]
    nodes_per_unit_t: Option<usize>,
    #[arg(long)]
    nodes_per_period: Option<usize>,
    #[arg(long)]
    gl_nodes: Option<usize>,
    #[arg(long, value_enum)]
    quad_scheme: Option<SchemeArg>,
}

impl QuadArgs {
    fn apply(&self, mut qc: QuadratureConfig) -> QuadratureConfig {
        if let Some(v) = self.x_max_factor {
            qc.x_max_factor = v;
        }
        if let Some(v) = self.nodes_per_unit_t {
            qc.nodes_per_unit_t = v;
        }
        if let Some(v) = self.nodes_per_period {
            qc.nodes_per_period = v;
        }
        if let Some(v) = self.gl_nodes {
            qc.gl_nodes = v;
        }
        if let Some(s) = self.quad_scheme {
            qc.quad_scheme = match s {
                SchemeArg::GaussLegendrePanels => QuadScheme::GaussLegendrePanels,
                SchemeArg::CompositeSimpson => QuadScheme::CompositeSimpson,
            };
        }
        qc
    }
}

#[derive(Args)]
struct BuildGeneratorArgs {
    /// Model JSON file (model document or recipe).
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum)]
    kind: GenKind,
    #[arg(long)]
    x_max: Option<f64>,
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    alpha: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    q: f64,
    /// Averaging timescale; defaults to the transition-time rule at the model's λ.
    #[arg(long = "T")]
    t: Option<f64>,
    #[arg(long, value_enum, default_value = "q-average")]
    form: FormArg,
    /// Wrap the generator in a spectral average with this cluster width.
    #[arg(long)]
    delta_omega: Option<f64>,
    /// Override the model's coupling constant.
    #[arg(long)]
    lambda: Option<f64>,
    /// Power-law exponent ξ of T(λ) = T_ref·λ^(-ξ); the natural rule 1/(λ‖A‖) when absent.
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long = "T-ref", default_value_t = 1.0)]
    t_ref: f64,
    #[command(flatten)]
    quad: QuadArgs,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PropagateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    t_max: f64,
    #[arg(long, default_value_t = 200)]
    nodes: usize,
    /// Generator JSON written by build-generator.
    #[arg(long)]
    generator: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// RunConfig JSON file.
    #[arg(long)]
    config: PathBuf,
    /// Output path prefix; overrides the config.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    #[arg(long)]
    time_nodes: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Both,
}

#[derive(Args)]
struct CorrelationsArgs {
    #[arg(long)]
    model: PathBuf,
    /// Highest order n (at most 2).
    #[arg(long, default_value_t = 0)]
    order: usize,
    #[arg(long)]
    t_max: f64,
    #[arg(long, default_value_t = 50)]
    points: usize,
    #[command(flatten)]
    quad: QuadArgs,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

struct Failure {
    code: u8,
    err: Error,
}

trait Stage<T> {
    fn stage(self, code: u8) -> Result<T, Failure>;
}

impl<T> Stage<T> for wcl::Result<T> {
    fn stage(self, code: u8) -> Result<T, Failure> {
        self.map_err(|err| Failure { code, err })
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => write_text(p, text).stage(EXPERIMENT),
        None => {
            println!("{}", text.trim_end());
            Ok(())
        }
    }
}

fn generate_model(a: GenerateModelArgs) -> Result<(), Failure> {
    let recipe = match a.kind {
        ModelKind::Random => ModelRecipe::Random {
            seed: a.seed,
            n0: a.n0,
            n1: a.n1,
            omega_band: a.omega_band,
            coupling_scale: a.coupling_scale,
            lambda: a.lambda,
        },
        ModelKind::QuasiContinuum => ModelRecipe::QuasiContinuum {
            seed: a.seed,
            n0: a.n0,
            n1: a.n1,
            bandwidth: a.bandwidth,
            profile_width: a.profile_width,
            profile_center: a.profile_center,
            coupling_scale: a.coupling_scale,
            system_omega: a.system_omega,
            lambda: a.lambda,
        },
    };
    let m = recipe.build().stage(USAGE)?;
    eprintln!("{}", validate_model(&m));
    emit(a.out.as_deref(), &wcl::io::model_to_json(&m).stage(EXPERIMENT)?)
}

fn load(path: &Path, lambda: Option<f64>) -> Result<SystemModel, Failure> {
    let m = ModelSource::Path(path.to_path_buf()).load(Path::new("")).stage(USAGE)?;
    match lambda {
        Some(l) => m.with_lambda(l).stage(USAGE),
        None => Ok(m),
    }
}

fn build_generator_cmd(a: BuildGeneratorArgs) -> Result<(), Failure> {
    let m = load(&a.model, a.lambda)?;
    let mut kind = match a.kind {
        GenKind::Davies => {
            let x_max = a.x_max.ok_or_else(|| Failure {
                code: USAGE,
                err: Error::InvalidArgument("--x-max is required for davies".into()),
            })?;
            GeneratorKind::Davies { x_max }
        }
        GenKind::Family => GeneratorKind::Family { alpha: a.alpha, q: a.q, t: a.t },
        GenKind::Dynavg => GeneratorKind::DynAvg { t: a.t, form: a.form.into() },
    };
    if let Some(delta_omega) = a.delta_omega {
        kind = GeneratorKind::SpectralAvg { base: Box::new(kind), delta_omega };
    }
    let spec = GeneratorSpec::new(kind).with_qc(a.quad.apply(QuadratureConfig::default()));
    spec.validate().stage(USAGE)?;
    let tt = match a.xi {
        Some(xi) => TransitionTime::power_law(xi, a.t_ref),
        None => TransitionTime::natural(),
    };
    let t = if a.t.is_none() && spec.kind.uses_timescale() {
        Some(transition_time(&tt, &m, m.lambda).stage(CONSTRUCTION)?)
    } else {
        None
    };
    let out = build_generator(&m, &spec, t).stage(CONSTRUCTION)?;
    let config = json!({
        "command": "build-generator",
        "model": a.model,
        "lambda": m.lambda,
        "spec": spec,
        "transition_time": tt,
    });
    eprintln!(
        "T = {:?}, self-convergence = {:.3e}, tail bound = {:?}, estimate = {:.3e}",
        out.t,
        out.self_convergence,
        out.tail_bound,
        out.estimate()
    );
    let doc = GeneratorDoc {
        schema: SCHEMA.into(),
        config,
        spec,
        t: out.t,
        estimates: Estimates {
            self_convergence: out.self_convergence,
            tail_bound: out.tail_bound,
            rounding_floor: out.rounding_floor,
            total: out.estimate(),
        },
        matrix: ComplexMatrix::from_matrix(out.op.matrix()),
    };
    emit(a.out.as_deref(), &serde_json::to_string_pretty(&doc).map_err(Error::from).stage(EXPERIMENT)?)
}

fn propagate(a: PropagateArgs) -> Result<(), Failure> {
    let m = load(&a.model, a.lambda)?;
    if !(a.t_max >= 0.0) || a.nodes < 2 {
        return Err(Failure { code: USAGE, err: Error::InvalidArgument("need t_max >= 0 and nodes >= 2".into()) });
    }
    let k: Option<Operator> = match &a.generator {
        Some(p) => Some(load_generator(p).and_then(|d| d.operator()).stage(USAGE)?),
        None => None,
    };
    let g = match &k {
        Some(k) => Some(wcl::generators::semigroup_generator(&m, k).stage(CONSTRUCTION)?),
        None => None,
    };
    let d = Dynamics::new(&m);
    let mut rows = Vec::with_capacity(a.nodes);
    for i in 0..a.nodes {
        let t = a.t_max * i as f64 / (a.nodes - 1) as f64;
        let w = d.projected(t);
        let mut row = vec![t.to_string(), spectral_norm(&w).to_string()];
        if let Some(g) = &g {
            let approx = wcl::opalg::expm(g, t).stage(EXPERIMENT)?;
            row.push(spectral_norm(approx.matrix()).to_string());
            row.push(spectral_norm(&(w - approx.matrix())).to_string());
        }
        rows.push(row);
    }
    let header: &[&str] = if g.is_some() { &["t", "exact_norm", "approx_norm", "error"] } else { &["t", "exact_norm"] };
    let config = json!({
        "command": "propagate",
        "model": a.model,
        "lambda": m.lambda,
        "t_max": a.t_max,
        "nodes": a.nodes,
        "generator": a.generator,
    });
    emit(a.out.as_deref(), &csv_with_echo(&config, header, &rows).stage(EXPERIMENT)?)
}

fn load_run(a: &ExperimentArgs, command: &str) -> Result<(RunConfig, SystemModel), Failure> {
    let (mut cfg, base) = RunConfig::load(&a.config).stage(USAGE)?;
    cfg.command = Some(command.into());
    if let Some(o) = &a.output {
        cfg.output = o.clone();
    } else {
        cfg.output = base.join(&cfg.output);
    }
    if let Some(f) = a.format {
        cfg.format = match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
            FormatArg::Both => OutputFormat::Both,
        };
    }
    if let Some(n) = a.time_nodes {
        cfg.time_nodes = n;
    }
    cfg.validate().stage(USAGE)?;
    let m = cfg.model.load(&base).stage(CONSTRUCTION)?;
    Ok((cfg, m))
}

fn convergence(a: ExperimentArgs) -> Result<(), Failure> {
    let (cfg, m) = load_run(&a, "convergence")?;
    let res = convergence_experiment(&m, &cfg.generator, &cfg.transition_time, &cfg.lambda_grid, cfg.tau_bar, cfg.time_nodes)
        .stage(EXPERIMENT)?;
    for r in &res.rows {
        eprintln!("lambda = {:<8} sup_error = {:.6e} at t = {:.4}", r.lambda, r.sup_error, r.argmax_t);
    }
    let echo = cfg.echo();
    let written = write_outputs(&cfg.output, cfg.format, &echo, &res, || experiment_csv(&echo, &res)).stage(EXPERIMENT)?;
    for p in written {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn contraction_csv(echo: &serde_json::Value, rows: &[ContractionRow]) -> wcl::Result<String> {
    let data: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.lambda.to_string(),
                r.t_lambda.map_or_else(String::new, |v| v.to_string()),
                r.max_norm.to_string(),
                r.argmax_t.to_string(),
                r.min_slack.to_string(),
                r.dissipative.to_string(),
            ]
        })
        .collect();
    csv_with_echo(echo, &["lambda", "T_lambda", "max_norm", "argmax_t", "min_slack", "dissipative"], &data)
}

fn contraction(a: ExperimentArgs) -> Result<(), Failure> {
    let (cfg, m) = load_run(&a, "contraction")?;
    let rows = contraction_experiment(&m, &cfg.generator, &cfg.transition_time, &cfg.lambda_grid, cfg.tau_bar, cfg.time_nodes)
        .stage(EXPERIMENT)?;
    for r in &rows {
        let tag = if r.max_norm > 1.0 + 1e-6 { "witness" } else { "contractive" };
        eprintln!(
            "lambda = {:<8} {tag}: max_norm = {:.9} at t = {:.4}, resolvent slack = {:.3e}",
            r.lambda, r.max_norm, r.argmax_t, r.min_slack
        );
    }
    let echo = cfg.echo();
    let written = write_outputs(&cfg.output, cfg.format, &echo, &rows, || contraction_csv(&echo, &rows)).stage(EXPERIMENT)?;
    for p in written {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn correlations(a: CorrelationsArgs) -> Result<(), Failure> {
    let m = load(&a.model, None)?;
    if a.order > 2 || !(a.t_max > 0.0) || a.points == 0 {
        return Err(Failure {
            code: USAGE,
            err: Error::InvalidArgument("need order <= 2, t_max > 0 and points >= 1".into()),
        });
    }
    let qc = a.quad.apply(QuadratureConfig::default());
    let mut rows = Vec::with_capacity(a.points);
    for i in 1..=a.points {
        let t = a.t_max * i as f64 / a.points as f64;
        let mut row = vec![t.to_string()];
        for n in 0..=a.order {
            row.push(correlation_integral(&m, n, t, &qc).stage(EXPERIMENT)?.to_string());
        }
        rows.push(row);
    }
    let names = ["t", "a0", "a1", "a2"];
    let config = json!({
        "command": "correlations",
        "model": a.model,
        "order": a.order,
        "t_max": a.t_max,
        "points": a.points,
        "qc": qc,
    });
    emit(a.out.as_deref(), &csv_with_echo(&config, &names[..a.order + 2], &rows).stage(EXPERIMENT)?)
}

fn init_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("WCL_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| Failure {
        code: USAGE,
        err: Error::InvalidArgument(format!("WCL_THREADS must be a positive integer, got {v:?}")),
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure { code: USAGE, err: Error::InvalidArgument(e.to_string()) })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = init_threads().and_then(|()| match cli.command {
        Command::GenerateModel(a) => generate_model(a),
        Command::BuildGenerator(a) => build_generator_cmd(a),
        Command::Propagate(a) => propagate(a),
        Command::Convergence(a) => convergence(a),
        Command::Contraction(a) => contraction(a),
        Command::Correlations(a) => correlations(a),
    });
    match run {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.err);
            ExitCode::from(f.code)
        }
    }
}
