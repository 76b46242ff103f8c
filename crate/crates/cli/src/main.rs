//! `inplay`: runs pipeline stages over CSV data, or forwards single-match
//! requests to a running service.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use tracing_subscriber::EnvFilter;

use inplay_core::api::{self, CalibrateRequest, ForecastRequest};
use inplay_core::pipeline::report::{
    read_forecasts, write_betting, write_evaluation, write_fits, write_forecasts, write_json, DatasetSummary, OutputDir,
};
use inplay_core::pipeline::{
    betting_stage, evaluate_stage, fit_stage, forecast_stage, prepare, run_experiment, synthesize, write_dataset,
    write_error_manifest, RunConfig, RunFailure,
};
use inplay_core::Error;

#[derive(Parser)]
#[command(name = "inplay", version, about = "In-play football forecasting pipeline")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory receiving every output file.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct DataArgs {
    /// Events CSV; overrides the configuration.
    #[arg(long)]
    events: Option<PathBuf>,
    #[arg(long)]
    odds: Option<PathBuf>,
    #[arg(long)]
    ou: Option<PathBuf>,
    /// First evaluation gameweek label.
    #[arg(long)]
    evaluation_from: Option<String>,
}

#[derive(Args)]
struct SingleArgs {
    /// JSON request for one match state; skips the dataset.
    #[arg(long)]
    request: Option<PathBuf>,
    /// Service base URL; the request is sent there instead of run locally.
    #[arg(long, requires = "request")]
    server: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate the dataset, writing dataset.json.
    Ingest(DataArgs),
    /// Rolling refits for every evaluation gameweek, written to fits/.
    Fit(DataArgs),
    /// Market calibration for every evaluation match.
    Calibrate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        single: SingleArgs,
    },
    /// Per-minute forecasts for every model and evaluation match.
    Forecast {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        single: SingleArgs,
    },
    /// Accuracy, RPS and log-loss tables from a forecasts file.
    Evaluate {
        /// Defaults to forecasts.csv in the output directory.
        #[arg(long)]
        forecasts: Option<PathBuf>,
    },
    /// Betting backtest of a forecasts file against the dataset's prices.
    Bet {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        forecasts: Option<PathBuf>,
    },
    /// Generate a synthetic league with exchange prices.
    Synth,
    /// Full experiment with every table and a run manifest.
    Report(DataArgs),
}

impl Command {
    fn stage(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Fit(_) => "fit",
            Command::Calibrate { .. } => "calibrate",
            Command::Forecast { .. } => "forecast",
            Command::Evaluate { .. } => "evaluate",
            Command::Bet { .. } => "bet",
            Command::Synth => "synth",
            Command::Report(_) => "report",
        }
    }

    fn data(&self) -> Option<&DataArgs> {
        match self {
            Command::Ingest(d) | Command::Fit(d) | Command::Report(d) => Some(d),
            Command::Calibrate { data, .. } | Command::Forecast { data, .. } | Command::Bet { data, .. } => Some(data),
            Command::Evaluate { .. } | Command::Synth => None,
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match (&cli.config, cli.seed) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(seed)) => RunConfig::with_seed(seed),
        (None, None) => return Err(Error::Config("either --config or --seed is required".into())),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(d) = cli.command.data() {
        apply_data_args(&mut cfg, d)?;
    }
    Ok(cfg)
}

fn apply_data_args(cfg: &mut RunConfig, args: &DataArgs) -> Result<(), Error> {
    match (&mut cfg.data, &args.events, &args.odds, &args.ou) {
        (Some(d), ..) => {
            if let Some(p) = &args.events {
                d.events = p.clone();
            }
            if let Some(p) = &args.odds {
                d.odds = p.clone();
            }
            if let Some(p) = &args.ou {
                d.ou = p.clone();
            }
        }
        (None, Some(e), Some(o), Some(u)) => {
            cfg.data = Some(inplay_core::pipeline::config::DataConfig {
                events: e.clone(),
                odds: o.clone(),
                ou: u.clone(),
                evaluation_from: None,
                stoppage_window: 240,
            });
        }
        (None, None, None, None) => {}
        (None, ..) => return Err(Error::Config("--events, --odds and --ou must be given together".into())),
    }
    if let (Some(d), Some(from)) = (cfg.data.as_mut(), &args.evaluation_from) {
        d.evaluation_from = Some(from.clone());
    }
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        file: path.display().to_string(),
        row: e.line(),
        message: e.to_string(),
    })
}

/// Runs a single-state request locally or through the service.
fn single<Req, Resp, L, R>(args: &SingleArgs, out: &mut OutputDir, name: &str, local: L, remote: R) -> Result<(), Error>
where
    Req: DeserializeOwned,
    Resp: Serialize,
    L: FnOnce(&Req) -> Result<Resp, Error>,
    R: AsyncFnOnce(&inplay_client::Client, &Req) -> Result<Resp, inplay_client::ClientError>,
{
    let req: Req = read_json(args.request.as_deref().expect("single mode needs a request"))?;
    let resp = match &args.server {
        None => local(&req)?,
        Some(url) => {
            let rt = tokio::runtime::Builder::new_current_thread()
                .enable_all()
                .build()
                .map_err(|e| Error::Io(e.to_string()))?;
            let client = inplay_client::Client::new(url.clone());
            rt.block_on(remote(&client, &req)).map_err(|e| match e {
                inplay_client::ClientError::Http { body, .. } => {
                    Error::InvalidArgument(format!("{}: {}", body.error, body.message))
                }
                inplay_client::ClientError::Transport(t) => Error::Io(t.to_string()),
            })?
        }
    };
    out.json(name, &resp)?;
    println!("{}", serde_json::to_string_pretty(&resp).map_err(|e| Error::Io(e.to_string()))?);
    Ok(())
}

fn run(cli: &Cli, cfg: &RunConfig) -> Result<Vec<String>, RunFailure> {
    let stage = cli.command.stage();
    let wrap = |e: Error| RunFailure::new(stage, e);
    if let Command::Report(_) = cli.command {
        let (dataset, _) = prepare(cfg).map_err(|e| RunFailure::new("ingest", e))?;
        return run_experiment(cfg, &dataset, &cli.out_dir).map(|m| m.outputs);
    }
    let mut out = OutputDir::new(&cli.out_dir).map_err(wrap)?;
    let fail =
        |e: Error, out: &OutputDir| RunFailure { stage: stage.into(), error: e, outputs: out.written().to_vec() };
    match &cli.command {
        Command::Ingest(_) => {
            let (dataset, split) = prepare(cfg).map_err(wrap)?;
            out.json("dataset.json", &DatasetSummary::new(&dataset, &split)).map_err(wrap)?;
        }
        Command::Fit(_) => {
            let (dataset, split) = prepare(cfg).map_err(wrap)?;
            let fits = fit_stage(&dataset, &split, cfg).map_err(wrap)?;
            write_fits(&mut out, &fits).map_err(|e| fail(e, &out))?;
        }
        Command::Calibrate { single: s, .. } if s.request.is_some() => {
            single(
                s,
                &mut out,
                "calibration.json",
                |r: &CalibrateRequest| api::calibrate(r),
                async |c, r| c.calibrate(r).await,
            )
            .map_err(wrap)?;
        }
        Command::Forecast { single: s, .. } if s.request.is_some() => {
            single(
                s,
                &mut out,
                "forecast.json",
                |r: &ForecastRequest| api::run_forecast(r),
                async |c, r| c.forecast(r).await,
            )
            .map_err(wrap)?;
        }
        Command::Calibrate { .. } | Command::Forecast { .. } => {
            let (dataset, split) = prepare(cfg).map_err(wrap)?;
            let fits = fit_stage(&dataset, &split, cfg).map_err(wrap)?;
            let f = forecast_stage(&dataset, &split, &fits, cfg).map_err(wrap)?;
            if stage == "calibrate" {
                out.csv("calibration.csv", &f.calibrations).map_err(|e| fail(e, &out))?;
                out.csv("calibration_rivals.csv", &f.rival_calibrations).map_err(|e| fail(e, &out))?;
            } else {
                write_forecasts(&mut out, &f).map_err(|e| fail(e, &out))?;
            }
        }
        Command::Evaluate { forecasts } => {
            let path = forecasts.clone().unwrap_or_else(|| cli.out_dir.join("forecasts.csv"));
            let rows = read_forecasts(&path).map_err(wrap)?;
            let tables = evaluate_stage(&rows).map_err(wrap)?;
            write_evaluation(&mut out, &tables).map_err(|e| fail(e, &out))?;
        }
        Command::Bet { forecasts, .. } => {
            let (dataset, _) = prepare(cfg).map_err(wrap)?;
            let path = forecasts.clone().unwrap_or_else(|| cli.out_dir.join("forecasts.csv"));
            let rows = read_forecasts(&path).map_err(wrap)?;
            let backtests = betting_stage(&dataset, &rows, cfg).map_err(wrap)?;
            write_betting(&mut out, &backtests).map_err(|e| fail(e, &out))?;
        }
        Command::Synth => {
            let league = synthesize(&cfg.synth, cfg.seed, cfg.betting.lag).map_err(wrap)?;
            write_dataset(out.root(), &league.dataset).map_err(wrap)?;
            write_json(&out.root().join("truth.json"), &league.truth).map_err(wrap)?;
            return Ok(["events.csv", "odds.csv", "ou.csv", "truth.json"].map(String::from).to_vec());
        }
        Command::Report(_) => unreachable!("handled above"),
    }
    Ok(out.written().to_vec())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let mut seed = cli.seed;
    let result = load_config(&cli).map_err(|e| RunFailure::new("config", e)).and_then(|cfg| {
        seed = Some(cfg.seed);
        run(&cli, &cfg)
    });
    match result {
        Ok(files) => {
            for f in files {
                eprintln!("wrote {}", cli.out_dir.join(f).display());
            }
            ExitCode::SUCCESS
        }
        Err(failure) => {
            eprintln!("error: {failure}");
            match write_error_manifest(&cli.out_dir, seed, &failure) {
                Ok(p) => eprintln!("error manifest: {}", p.display()),
                Err(e) => eprintln!("could not write error manifest: {e}"),
            }
            ExitCode::FAILURE
        }
    }
}
