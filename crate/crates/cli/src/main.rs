use clap::{Args, Parser, Subcommand};
use qca_cli::commands::{self, CliError, FitRequest};
use qca_core::analysis::{Method, Window};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "qca", version, about = "Row density matrix simulator for quantum cellular automata")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve one configuration with the tensor-network engine.
    Run { config: PathBuf },
    /// Run every point of a parameter grid.
    Sweep {
        spec: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Fit a decay exponent to one column of a series file.
    Fit(FitArgs),
    /// Reference computations for small rows.
    #[command(subcommand)]
    Oracle(Oracle),
}

#[derive(Subcommand)]
enum Oracle {
    /// Exact dense density matrix (L <= 8).
    Dense { config: PathBuf },
    /// Classical Monte Carlo of the probabilistic automaton.
    Mc { config: PathBuf },
}

#[derive(Args)]
struct FitArgs {
    series: PathBuf,
    #[arg(long, default_value = "s2")]
    observable: String,
    /// `loglog` or `effective`.
    #[arg(long, default_value = "loglog")]
    method: String,
    #[arg(long, num_args = 2, value_names = ["T_MIN", "T_MAX"], required = true)]
    window: Vec<f64>,
    /// Same run at L/2.
    #[arg(long)]
    half_l: Option<PathBuf>,
    /// Same run at chi/2.
    #[arg(long)]
    half_chi: Option<PathBuf>,
    /// Refit over the first half of the window.
    #[arg(long)]
    finite_time: bool,
    /// Active-side curve bounding the exponent from below.
    #[arg(long)]
    lower: Option<PathBuf>,
    #[arg(long, num_args = 2, value_names = ["T_MIN", "T_MAX"])]
    lower_window: Option<Vec<f64>>,
    /// Inactive-side curve bounding the exponent from above.
    #[arg(long)]
    upper: Option<PathBuf>,
    #[arg(long, num_args = 2, value_names = ["T_MIN", "T_MAX"])]
    upper_window: Option<Vec<f64>>,
    /// Mirror a single critical-point bound onto the other side.
    #[arg(long)]
    symmetric: bool,
    /// Report path; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn window(v: &[f64]) -> Window {
    Window::new(v[0], v[1])
}

fn fit_request(a: &FitArgs) -> Result<FitRequest, CliError> {
    let method = Method::parse(&a.method).ok_or_else(|| CliError::Usage(format!("unknown method `{}`", a.method)))?;
    let bound = |p: &Option<PathBuf>, w: &Option<Vec<f64>>| -> Option<(PathBuf, Window)> {
        p.as_ref().map(|p| (p.clone(), w.as_deref().map(window).unwrap_or(window(&a.window))))
    };
    Ok(FitRequest {
        series: a.series.clone(),
        observable: a.observable.clone(),
        method,
        window: window(&a.window),
        half_l: a.half_l.clone(),
        half_chi: a.half_chi.clone(),
        finite_time: a.finite_time,
        lower: bound(&a.lower, &a.lower_window),
        upper: bound(&a.upper, &a.upper_window),
        symmetric: a.symmetric,
    })
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config } => {
            let out = commands::run(&config)?;
            println!("{}", out.csv.display());
        }
        Command::Sweep { spec, workers } => {
            let (path, manifest) = commands::sweep(&spec, workers)?;
            println!("{}", path.display());
            if manifest.failed > 0 {
                return Err(CliError::Numerical(format!("{} of {} points failed", manifest.failed, manifest.points)));
            }
        }
        Command::Fit(args) => {
            let report = commands::fit(&fit_request(&args)?)?;
            let mut text = serde_json::to_string_pretty(&report).map_err(std::io::Error::other)?;
            text.push('\n');
            match &args.out {
                Some(p) => std::fs::write(p, text)?,
                None => print!("{text}"),
            }
        }
        Command::Oracle(Oracle::Dense { config }) => {
            println!("{}", commands::oracle_dense(&config)?.csv.display());
        }
        Command::Oracle(Oracle::Mc { config }) => {
            println!("{}", commands::oracle_mc(&config)?.csv.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
