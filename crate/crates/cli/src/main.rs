use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use qht::adapt::{grid_for, select, LepskiConfig, LepskiLevel};
use qht::estimate::{direct_estimate_grid, grid_estimate, grid_estimates, Binning};
use qht::harness::{default_half_width, run_experiment, ExperimentConfig, ExperimentReport};
use qht::io::{
    read_dataset, read_density_matrix, write_atomic, write_dataset, write_dataset_csv,
    write_estimate,
};
use qht::simulate::sample_homodyne;
use qht::states::{analytic_state, wigner_point_from_matrix, Normalization, StateKind, StateSpec};
use qht::validation::{validation_suite, CheckResult};
use qht::{Error, GridSpec};

/// Overrides every output directory when set.
const OUTPUT_ENV: &str = "QHT_OUTPUT_DIR";

const EXIT_CONFIG: u8 = 2;
const EXIT_VALIDATION: u8 = 3;
const EXIT_RUNTIME: u8 = 4;

#[derive(Parser)]
#[command(
    name = "qht",
    version,
    about = "Noisy homodyne tomography: simulation, Wigner estimation, adaptive bandwidth"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a noisy homodyne dataset.
    Simulate(SimulateArgs),
    /// Estimate the Wigner function at one bandwidth.
    Estimate(EstimateArgs),
    /// Estimate over a bandwidth grid and select one with Lepski's rule.
    Adapt(AdaptArgs),
    /// Run one of the two simulation studies.
    ReproduceFigure(FigureArgs),
    /// Print facts about a state.
    StateInfo(StateArgs),
    /// Run the invariant checks.
    Validate(ValidateArgs),
    /// Run an experiment from a JSON config or manifest.
    Run(RunArgs),
}

#[derive(Args, Clone)]
struct StateArgs {
    /// vacuum, single-photon, fock:K, coherent:RE,IM, cat:Q0 or a path to a density matrix file.
    #[arg(long, default_value = "single-photon")]
    state: String,
    #[arg(long, value_enum, default_value_t = NormArg::UnitMass)]
    normalization: NormArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    UnitMass,
    Verbatim,
}

impl From<NormArg> for Normalization {
    fn from(n: NormArg) -> Self {
        match n {
            NormArg::UnitMass => Normalization::UnitMass,
            NormArg::Verbatim => Normalization::Verbatim,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    state: StateArgs,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write dataset.csv.
    #[arg(long)]
    csv: bool,
}

#[derive(Args, Clone, Copy)]
struct GridArgs {
    /// Defaults to 8 for cat states and 6 otherwise.
    #[arg(long)]
    half_width: Option<f64>,
    #[arg(long, default_value_t = 256)]
    points: usize,
}

#[derive(Args)]
struct EstimateArgs {
    /// Dataset file, or a directory containing dataset.bin.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    h: f64,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, value_enum, default_value_t = MethodArg::BinnedFbp)]
    method: MethodArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Direct,
    BinnedFbp,
}

#[derive(Args)]
struct AdaptArgs {
    #[arg(long)]
    data: PathBuf,
    /// "default" or a comma-separated decreasing list of bandwidths.
    #[arg(long = "grid", default_value = "default")]
    bandwidths: String,
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    /// Confidence level x; defaults to log M.
    #[arg(long)]
    x: Option<f64>,
    #[command(flatten)]
    grid: GridArgs,
    /// Directory for selection.csv and the selected estimate; defaults to the data directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Study {
    SinglePhoton,
    Cat,
}

#[derive(Args)]
struct FigureArgs {
    #[arg(value_enum)]
    study: Study,
    #[arg(long, default_value_t = 20)]
    seeds: usize,
    /// Sample size; the study's own value when omitted.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Write the config that would run and exit.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct ValidateArgs {
    /// Write the results as JSON here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
}

enum Failure {
    Config(String),
    Validation(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. }
            | Error::Domain { .. }
            | Error::UnsortedBandwidths
            | Error::InvalidState(_) => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn output_dir(requested: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => requested.to_path_buf(),
    }
}

fn parse_state(args: &StateArgs) -> CliResult<StateSpec> {
    let bad = |msg: String| Failure::Config(format!("config error at `state`: {msg}"));
    let text = args.state.trim();
    let (name, param) = match text.split_once(':') {
        Some((a, b)) => (a, Some(b)),
        None => (text, None),
    };
    let number = |p: Option<&str>| -> CliResult<f64> {
        p.ok_or_else(|| bad(format!("{name} needs a parameter")))?
            .parse::<f64>()
            .map_err(|e| bad(format!("{e}")))
    };
    let kind = match name {
        "vacuum" => StateKind::Vacuum,
        "single-photon" => StateKind::SinglePhoton,
        "fock" => StateKind::Fock {
            k: param
                .ok_or_else(|| bad("fock needs an order".into()))?
                .parse()
                .map_err(|e| bad(format!("{e}")))?,
        },
        "cat" => StateKind::Cat { q0: number(param)? },
        "coherent" => {
            let p = param.ok_or_else(|| bad("coherent needs RE,IM".into()))?;
            let (re, im) = p.split_once(',').unwrap_or((p, "0"));
            StateKind::Coherent {
                alpha: Complex64::new(number(Some(re))?, number(Some(im))?),
            }
        }
        path if Path::new(path).exists() => StateKind::Matrix {
            rho: read_density_matrix(Path::new(path))?,
        },
        other => return Err(bad(format!("unknown state {other:?}"))),
    };
    Ok(StateSpec::new(kind, args.normalization.into())?)
}

fn grid_spec(args: GridArgs, state: &StateSpec) -> CliResult<GridSpec> {
    let hw = args.half_width.unwrap_or_else(|| default_half_width(state));
    GridSpec::new(hw, args.points)
        .map_err(|e| Failure::Config(format!("config error at `grid`: {e}")))
}

fn dataset_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join("dataset.bin")
    } else {
        p.to_path_buf()
    }
}

fn parse_bandwidths(text: &str, n: usize, gamma: f64) -> CliResult<Vec<f64>> {
    if text == "default" {
        return Ok(grid_for(n, gamma)?);
    }
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Failure::Config(format!("config error at `bandwidths`: {e}")))
        })
        .collect()
}

fn simulate(a: SimulateArgs) -> CliResult<()> {
    let state = parse_state(&a.state)?;
    let data = sample_homodyne(&state, a.n, a.eta, a.seed)?;
    let dir = output_dir(&a.out);
    std::fs::create_dir_all(&dir).map_err(Error::from)?;
    write_dataset(&dir.join("dataset.bin"), &data)?;
    if a.csv {
        write_dataset_csv(&dir.join("dataset.csv"), &data)?;
    }
    println!(
        "wrote {} samples (gamma = {}) to {}",
        data.len(),
        data.gamma(),
        dir.display()
    );
    Ok(())
}

fn estimate(a: EstimateArgs) -> CliResult<()> {
    let data = read_dataset(&dataset_path(&a.data))?;
    let spec = grid_spec(a.grid, &data.state)?;
    let est = match a.method {
        MethodArg::Direct => direct_estimate_grid(&data, a.h, spec, Normalization::UnitMass)?,
        MethodArg::BinnedFbp => grid_estimate(
            &data,
            a.h,
            spec,
            Binning::default(),
            Normalization::UnitMass,
        )?,
    };
    if est.cutoff_flag {
        eprintln!(
            "warning: 1/h exceeds the radial Nyquist frequency; results are resolution limited"
        );
    }
    if est.range_warning() {
        eprintln!(
            "warning: {:.2}% of samples fell outside the radial range",
            100.0 * est.dropped_fraction
        );
    }
    let dir = output_dir(&a.out);
    std::fs::create_dir_all(&dir).map_err(Error::from)?;
    let (bin, _) = write_estimate(
        &dir,
        &format!("estimate_h{}", a.h),
        &est,
        data.seed,
        &data.state,
    )?;
    println!("wrote {}", bin.display());
    Ok(())
}

fn adapt(a: AdaptArgs) -> CliResult<()> {
    let path = dataset_path(&a.data);
    let data = read_dataset(&path)?;
    let spec = grid_spec(a.grid, &data.state)?;
    let bandwidths = parse_bandwidths(&a.bandwidths, data.len(), data.gamma())?;
    let cfg = LepskiConfig {
        kappa: a.kappa,
        x: a.x.map_or(LepskiLevel::LogM, LepskiLevel::Value),
        bandwidths,
    };
    cfg.validate()?;
    let estimates = grid_estimates(
        &data,
        &cfg.bandwidths,
        spec,
        Binning::default(),
        Normalization::UnitMass,
    )?;
    let grids: Vec<_> = estimates.iter().map(|e| e.grid.clone()).collect();
    let selection = select(&grids, data.gamma(), data.len(), &cfg)?;
    let requested = a
        .out
        .unwrap_or_else(|| path.parent().map(Path::to_path_buf).unwrap_or_default());
    let dir = output_dir(&requested);
    std::fs::create_dir_all(&dir).map_err(Error::from)?;
    write_atomic(&dir.join("selection.csv"), selection.to_csv().as_bytes())?;
    write_estimate(
        &dir,
        "estimate_selected",
        &estimates[selection.m_hat - 1],
        data.seed,
        &data.state,
    )?;
    println!("selected m = {} (h = {})", selection.m_hat, selection.h);
    Ok(())
}

fn summarize(report: &ExperimentReport) {
    println!("bandwidths: {}", report.bandwidths.len());
    println!(
        "mean-curve minimum at m = {} (h = {:.4}); interior: {}",
        report.mean_curve_argmin(),
        report.bandwidths[report.mean_curve_argmin() - 1],
        report.interior_minimum()
    );
    println!("selection histogram: {:?}", report.histogram);
    println!(
        "within two steps of the oracle: {:.0}%",
        100.0 * report.selection_accuracy(2)
    );
    println!(
        "median error: selected {:.4}, oracle {:.4}, ratio {:.2}",
        report.median_selected_error(),
        report.median_oracle_error(),
        report.error_ratio()
    );
    println!("artifacts in {}", report.config.outputs.display());
}

fn reproduce(a: FigureArgs) -> CliResult<()> {
    let dir = output_dir(&a.out);
    let mut cfg = match a.study {
        Study::SinglePhoton => {
            ExperimentConfig::single_photon_study(a.seeds, dir.join("single-photon"))
        }
        Study::Cat => ExperimentConfig::cat_study(a.seeds, 500_000, dir.join("cat")),
    };
    if let Some(n) = a.n {
        cfg.n = n;
    }
    cfg.validate()?;
    if a.dry_run {
        println!("{}", cfg.to_json()?);
        return Ok(());
    }
    summarize(&run_experiment(&cfg)?);
    Ok(())
}

fn state_info(a: StateArgs) -> CliResult<()> {
    let state = parse_state(&a)?;
    let rho = state.density_matrix()?;
    let spec = GridSpec::new(default_half_width(&state), 256)?;
    let grid = analytic_state(&state, spec)?;
    let origin = state
        .analytic_value(0.0, 0.0)
        .unwrap_or_else(|| wigner_point_from_matrix(&rho, 0.0, 0.0).re);
    let info = serde_json::json!({
        "label": state.label(),
        "normalization": state.normalization,
        "truncation": rho.dim(),
        "trace": rho.trace().re,
        "gershgorin_psd": rho.gershgorin_psd(),
        "wigner_at_origin": origin,
        "grid_min": grid.min(),
        "grid_max": grid.max(),
        "grid_integral": grid.integral(),
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&info).map_err(Error::from)?
    );
    Ok(())
}

fn validate(a: ValidateArgs) -> CliResult<()> {
    let checks: Vec<CheckResult> = validation_suite()?;
    for c in &checks {
        println!(
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    if let Some(path) = a.report {
        qht::io::write_json(&path, &checks)?;
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(Failure::Validation(format!("{failed} check(s) failed")));
    }
    Ok(())
}

fn run(a: RunArgs) -> CliResult<()> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if let Some(dir) = std::env::var_os(OUTPUT_ENV).filter(|d| !d.is_empty()) {
        cfg.outputs = PathBuf::from(dir);
    }
    summarize(&run_experiment(&cfg)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::Adapt(a) => adapt(a),
        Command::ReproduceFigure(a) => reproduce(a),
        Command::StateInfo(a) => state_info(a),
        Command::Validate(a) => validate(a),
        Command::Run(a) => run(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Validation(m)) => {
            eprintln!("validation failed: {m}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
