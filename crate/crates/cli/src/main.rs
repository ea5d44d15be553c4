//! `readpp`: ingest, aggregate, fit, evaluate, simulate and plot reading
//! models from the command line.

mod commands;
mod config;
mod dataset;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use crate::config::Config;
use crate::error::{CliError, CliResult};

/// Thread-count default when `--threads` is absent.
const THREADS_ENV: &str = "READPP_THREADS";

#[derive(Debug, Parser)]
#[command(name = "readpp", version, about = "Point-process models of reading")]
struct Cli {
    /// More logging (-v debug, -vv trace).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    /// Worker threads [env: READPP_THREADS; default: all cores].
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

/// Inputs shared by the data-driven subcommands; flags override the config.
#[derive(Debug, Args)]
struct DataArgs {
    /// TOML run configuration.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Scanpath file.
    #[arg(short, long)]
    data: Option<PathBuf>,
    /// Text-layout file.
    #[arg(long)]
    layouts: Option<PathBuf>,
    /// Per-fixation effect values.
    #[arg(long)]
    effects: Option<PathBuf>,
    /// Keep only fixations on words.
    #[arg(long)]
    filtered: bool,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl DataArgs {
    fn resolve(&self) -> CliResult<Config> {
        let mut config = Config::load(self.config.as_deref())?;
        if let Some(p) = &self.data {
            config.data.scanpaths = Some(p.clone());
        }
        if let Some(p) = &self.layouts {
            config.data.layouts = Some(p.clone());
        }
        if let Some(p) = &self.effects {
            config.data.effects = Some(p.clone());
        }
        config.data.filtered |= self.filtered;
        config.resolve_seed(self.seed);
        config.train.validate()?;
        Ok(config)
    }
}

/// Logs the configuration a run actually uses.
fn announce(config: Config) -> Config {
    info!("resolved configuration:\n{}", config.to_toml().trim_end());
    info!("seed = {}", config.train.seed);
    config
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate scanpaths and assign fixations to words.
    Ingest {
        #[command(flatten)]
        data: DataArgs,
        /// Annotated fixations, or filtered scanpaths with --filtered.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Word-level reading measures.
    Aggregate {
        #[command(flatten)]
        data: DataArgs,
        /// first_fixation, gaze, total or scanpath.
        #[arg(long)]
        measure: Option<String>,
        /// Average across readers.
        #[arg(long)]
        pool: bool,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Fit the configured model and write its fit result.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Compare fitted models on the test split.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        /// `name=path` of a fit result; repeatable. A bare path is named by
        /// its file stem.
        #[arg(long = "fit", required = true)]
        fits: Vec<String>,
        /// Name of the baseline fit.
        #[arg(long)]
        baseline: String,
        /// Bootstrap replicates.
        #[arg(long)]
        replicates: Option<usize>,
        /// Comparison reports (JSON).
        #[arg(short, long)]
        out: PathBuf,
        /// Per-fixation deltas (CSV).
        #[arg(long)]
        deltas: Option<PathBuf>,
        /// Summary table (CSV); printed to stdout when absent.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Sample scanpaths from fitted parameters.
    Simulate {
        /// Saccade parameters (fit result or parameter document).
        #[arg(short, long)]
        params: PathBuf,
        /// Duration parameters; a plain log-normal by default.
        #[arg(long)]
        duration_params: Option<PathBuf>,
        /// Seconds per scanpath.
        #[arg(long, default_value_t = 60.0)]
        horizon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated readers; those of the design by default.
        #[arg(long, value_delimiter = ',')]
        readers: Vec<String>,
        /// Scanpaths per reader.
        #[arg(long, default_value_t = 1)]
        replicates: usize,
        /// `x0,y0,width,height`; the fitted window by default.
        #[arg(long)]
        omega: Option<String>,
        #[arg(long, default_value_t = 100_000)]
        max_events: usize,
        /// Scanpath file; stdout when absent.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Intensity heatmaps at selected times of a scanpath.
    Plot {
        #[arg(short, long)]
        params: PathBuf,
        /// Scanpath file holding the conditioning history.
        #[arg(long)]
        history: PathBuf,
        /// `reader/text` key; the first scanpath by default.
        #[arg(long)]
        scanpath: Option<String>,
        /// Comma-separated timestamps in seconds.
        #[arg(long, value_delimiter = ',', required = true)]
        times: Vec<f64>,
        /// Grid cells, `NXxNY`.
        #[arg(long, default_value = "96x54")]
        resolution: String,
        #[arg(long)]
        omega: Option<String>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

fn parse_resolution(s: &str) -> CliResult<(usize, usize)> {
    let bad = || CliError::Usage(format!("resolution `{s}` is not of the form NXxNY"));
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

fn parse_fit(spec: &str) -> (String, PathBuf) {
    match spec.split_once('=') {
        Some((name, path)) => (name.to_string(), PathBuf::from(path)),
        None => {
            let path = PathBuf::from(spec);
            let name = path.file_stem().map_or(spec.to_string(), |s| s.to_string_lossy().into_owned());
            (name, path)
        }
    }
}

fn init_threads(flag: Option<usize>) -> CliResult<()> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse()
                    .map_err(|_| CliError::Usage(format!("{THREADS_ENV}=`{v}` is not a thread count")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
        info!("threads = {n}");
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    init_threads(cli.threads)?;
    match cli.command {
        Command::Ingest { data, out } => commands::ingest(&announce(data.resolve()?), &out),
        Command::Aggregate {
            data,
            measure,
            pool,
            out,
        } => {
            let mut config = data.resolve()?;
            if let Some(m) = measure {
                config.model.measure = m;
            }
            config.model.pool |= pool;
            commands::aggregate(&announce(config), &out)
        }
        Command::Fit { data, out } => commands::fit(&announce(data.resolve()?), &out),
        Command::Eval {
            data,
            fits,
            baseline,
            replicates,
            out,
            deltas,
            summary,
        } => {
            let mut config = data.resolve()?;
            if let Some(b) = replicates {
                config.eval.bootstrap_replicates = b;
            }
            let fits: Vec<_> = fits.iter().map(|f| parse_fit(f)).collect();
            commands::eval(&announce(config), &fits, &baseline, &out, deltas.as_deref(), summary.as_deref())
        }
        Command::Simulate {
            params,
            duration_params,
            horizon,
            seed,
            readers,
            replicates,
            omega,
            max_events,
            out,
        } => {
            info!("seed = {seed}");
            commands::simulate(&commands::SimulateArgs {
                params: &params,
                duration_params: duration_params.as_deref(),
                horizon,
                seed,
                readers,
                replicates,
                omega: omega.as_deref(),
                max_events,
                out: out.as_deref(),
            })
        }
        Command::Plot {
            params,
            history,
            scanpath,
            times,
            resolution,
            omega,
            out_dir,
        } => commands::plot(&commands::PlotArgs {
            params: &params,
            history: &history,
            scanpath: scanpath.as_deref(),
            times,
            resolution: parse_resolution(&resolution)?,
            omega: omega.as_deref(),
            out_dir: &out_dir,
        }),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        // Help and version exit 0, parse errors exit 2.
        Err(e) => e.exit(),
    };
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => "warn",
        (false, 0) => "info",
        (false, 1) => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
