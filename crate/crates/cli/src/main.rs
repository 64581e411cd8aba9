//! `extrap`: condition numbers, training, least squares and scenario runs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use extrap_core::analysis::condition_number;
use extrap_core::bases::{BasisFamily, Point};
use extrap_core::datagen::SampleSet;
use extrap_core::domains::Domain;
use extrap_core::lsfit::{extrapolate_ls, fit_ls_with, LsOptions};
use extrap_core::nnet::{gradcheck_random, Activation};
use extrap_core::runner::{
    anchor_frame, layout_points, model_seed, run_scenario, scenario_context, train_method,
    AnchorSetting, Method, ScenarioConfig, ScenarioKind,
};
use extrap_core::{Error, Result};

#[derive(Parser)]
#[command(name = "extrap", version, about = "Function extrapolation from samples on a data domain")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the extrapolation condition number of a family on two domains.
    ConditionNumber(ConditionArgs),
    /// Train one network from a scenario config and save it.
    Train(TrainArgs),
    /// Run a scenario and write `<scenario>.csv` and `<scenario>.json`.
    Run(RunArgs),
    /// Least-squares fit: of a samples file, or of a scenario's validation sets.
    LsFit(LsFitArgs),
    /// Compare backpropagation against finite differences on random nets.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct ConditionArgs {
    /// chebyshev, trigonometric, spherical-harmonic, or an anchor setting
    /// such as `non-decaying+fillers`.
    #[arg(long)]
    basis: String,
    /// Chebyshev degree, harmonic l_max, or trigonometric member count.
    #[arg(long, default_value_t = 7)]
    degree: usize,
    /// Filler count for anchor settings with fillers.
    #[arg(long, default_value_t = 7)]
    fillers: usize,
    /// Leave the constant out of the fillers.
    #[arg(long)]
    no_constant: bool,
    /// e.g. `interval:-1:0.5)` or `sphere-z:-1:-0.3333`.
    #[arg(long, allow_hyphen_values = true)]
    omega: Domain,
    #[arg(long, allow_hyphen_values = true)]
    xi: Domain,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Defaults to the config's first network method.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: ScenarioKind,
    /// Overrides on top of the scenario preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = "EXTRAP_OUT_DIR", default_value = "results")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write every trained network under `<out>/models`.
    #[arg(long)]
    save_models: bool,
}

#[derive(Args)]
struct LsFitArgs {
    #[arg(long, conflicts_with = "scenario")]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<ScenarioKind>,
    /// CSV with columns `x,y` (or `theta,phi,y` on the sphere). Without it
    /// the scenario's validation sets are fitted and reported.
    #[arg(long)]
    samples: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    ridge: f64,
    #[arg(long, env = "EXTRAP_OUT_DIR", default_value = "results")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct GradcheckArgs {
    /// relu, tanh or snake; all three when omitted.
    #[arg(long)]
    activation: Option<Activation>,
    #[arg(long, default_value_t = 3)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("extrap: error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::ConditionNumber(a) => condition(a),
        Command::Train(a) => train(a),
        Command::Run(a) => run(a),
        Command::LsFit(a) => ls_fit(a),
        Command::Gradcheck(a) => gradcheck(a),
    }
}

/// Writes a line to stdout; a closed pipe (e.g. `| head`) is not an error.
fn say(text: &str) -> Result<()> {
    use std::io::Write;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    say(&serde_json::to_string_pretty(value)?)
}

fn condition(a: ConditionArgs) -> Result<ExitCode> {
    let family = match a.basis.as_str() {
        "chebyshev" => BasisFamily::chebyshev(a.degree),
        "trigonometric" => BasisFamily::trigonometric(a.degree)?,
        "spherical-harmonic" => BasisFamily::spherical_harmonic(a.degree),
        other => {
            let s = AnchorSetting::try_from(other.to_string())?;
            anchor_frame(s.set, if s.fillers { a.fillers } else { 0 }, !a.no_constant)?
        }
    };
    print_json(&condition_number(&family, &a.omega, &a.xi)?)?;
    Ok(ExitCode::SUCCESS)
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn train(a: TrainArgs) -> Result<ExitCode> {
    let cfg = load_config(&a.config, a.seed)?;
    let method = match a.method.as_deref() {
        Some("next") => Method::Next,
        Some("next-monotone") => Method::NextMonotone,
        Some(other) => {
            return Err(Error::InvalidArgument(format!("`{other}` is not a network method")))
        }
        None => cfg
            .methods
            .iter()
            .copied()
            .find(|m| matches!(m, Method::Next | Method::NextMonotone))
            .unwrap_or(Method::Next),
    };
    let ctx = scenario_context(&cfg)?;
    let trained = train_method(&cfg, &ctx, method, model_seed(cfg.seed, 0))?;
    trained.file.save(&a.out)?;
    print_json(&serde_json::json!({
        "model": a.out,
        "method": method.name(),
        "steps": trained.log.steps,
        "converged": trained.log.converged,
        "final_loss": trained.log.final_window_mean(cfg.window),
        "wall_time_s": trained.wall_time_s,
    }))?;
    Ok(ExitCode::SUCCESS)
}

fn run(a: RunArgs) -> Result<ExitCode> {
    let cfg = match &a.config {
        Some(path) => {
            let cfg = load_config(path, a.seed)?;
            if cfg.scenario != a.scenario {
                return Err(Error::InvalidKey {
                    key: "scenario".into(),
                    reason: format!("config is for `{}`, not `{}`", cfg.scenario, a.scenario),
                });
            }
            cfg
        }
        None => ScenarioConfig::preset(a.scenario, a.seed.unwrap_or(0)),
    };
    let models = a.save_models.then(|| a.out.join("models"));
    let report = run_scenario(&cfg, models.as_deref())?;
    say(&report.emit(&a.out)?.display().to_string())?;
    Ok(ExitCode::SUCCESS)
}

fn ls_fit(a: LsFitArgs) -> Result<ExitCode> {
    let mut cfg = match (&a.config, a.scenario) {
        (Some(path), _) => load_config(path, a.seed)?,
        (None, Some(kind)) => ScenarioConfig::preset(kind, a.seed.unwrap_or(0)),
        (None, None) => {
            return Err(Error::InvalidArgument("pass --config or --scenario".into()))
        }
    };
    match &a.samples {
        Some(path) => {
            let ctx = scenario_context(&cfg)?;
            let samples = read_samples(path, ctx.omega.is_spherical())?;
            let sol = fit_ls_with(&samples, &ctx.family, LsOptions { ridge: a.ridge })?;
            let xi_points = layout_points(&ctx.xi, cfg.eval_points)?;
            let xi_values = extrapolate_ls(&sol, &ctx.family, &xi_points)?;
            print_json(&serde_json::json!({
                "solution": sol,
                "xi_points": xi_points,
                "xi_values": xi_values,
            }))?;
        }
        None => {
            if a.ridge != 0.0 {
                return Err(Error::InvalidArgument("--ridge needs --samples".into()));
            }
            cfg.methods.retain(|m| matches!(m, Method::Ls | Method::LsAnchors));
            if cfg.methods.is_empty() {
                cfg.methods.push(Method::Ls);
            }
            let report = run_scenario(&cfg, None)?;
            say(&report.emit(&a.out)?.display().to_string())?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn read_samples(path: &Path, spherical: bool) -> Result<SampleSet> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut points = Vec::new();
    let mut values = Vec::new();
    let width = if spherical { 3 } else { 2 };
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != width {
            return Err(Error::Parse(format!(
                "{}: row {} has {} fields, expected {width}",
                path.display(),
                i + 1,
                record.len()
            )));
        }
        let nums = record
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("{}: row {}: {e}", path.display(), i + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        points.push(if spherical {
            Point::Sphere {
                theta: nums[0],
                phi: nums[1],
            }
        } else {
            Point::Line(nums[0])
        });
        values.push(nums[width - 1]);
    }
    SampleSet::new(points, values, None)
}

fn gradcheck(a: GradcheckArgs) -> Result<ExitCode> {
    let acts = match a.activation {
        Some(act) => vec![act],
        None => vec![Activation::Relu, Activation::Tanh, Activation::Snake],
    };
    let mut ok = true;
    for act in acts {
        let mut worst: f64 = 0.0;
        for t in 0..a.trials {
            worst = worst.max(gradcheck_random(act, a.seed + t)?.max_rel_error);
        }
        let pass = worst < a.tolerance;
        ok &= pass;
        say(&format!(
            "{act}: max relative error {worst:.3e} over {} nets ({})",
            a.trials,
            if pass { "ok" } else { "FAIL" }
        ))?;
    }
    if ok {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("extrap: error: gradient check above tolerance {:e}", a.tolerance);
        Ok(ExitCode::FAILURE)
    }
}
