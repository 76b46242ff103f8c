//! Output files: forecast and calibration CSVs, metric and betting summaries, curves,
//! betting ledgers, fitted parameters, and the run or error manifest.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::experiment::{
    betting_stage, evaluate_stage, fit_stage, forecast_stage, staking_label, EvaluationTables, ForecastRow, Forecasts,
    ModelBacktest,
};
use super::ingest::{ingest, Dataset};
use super::refit::{GameweekFit, Split};
use crate::aft::{FitReport, RatingSet};
use crate::covariates::Baseline;
use crate::error::{Error, Result};
use crate::evaluation::{CurveRow, MetricSummary};
use crate::rival::RivalParams;

pub const MANIFEST: &str = "manifest.json";
pub const ERROR_MANIFEST: &str = "error_manifest.json";

/// Creates files under an output directory and remembers what was written.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn new(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| Error::Io(format!("{}: {e}", root.display())))?;
        Ok(OutputDir { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    fn path(&mut self, name: &str) -> Result<PathBuf> {
        let p = self.root.join(name);
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir)?;
        }
        self.written.push(name.to_string());
        Ok(p)
    }

    pub fn csv<T: Serialize + Default>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let p = self.path(name)?;
        write_csv(&p, rows)
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        let p = self.path(name)?;
        write_json(&p, value)
    }
}

/// Writes rows with a header line, even when there are no rows.
pub fn write_csv<T: Serialize + Default>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Io(e.to_string());
    if rows.is_empty() {
        // headers come from serialising a record; keep only that line
        w.serialize(T::default()).map_err(csv_err)?;
    }
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    let mut bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    if rows.is_empty() {
        let end = bytes.iter().position(|&b| b == b'\n').map_or(bytes.len(), |i| i + 1);
        bytes.truncate(end);
    }
    std::fs::write(path, bytes).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn read_forecasts(path: &Path) -> Result<Vec<ForecastRow>> {
    let file = path.display().to_string();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Io(format!("{file}: {e}")))?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| Error::Parse { file: file.clone(), row: i + 2, message: e.to_string() }))
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub model: String,
    pub accuracy: f64,
    pub rps: f64,
    pub log_loss: f64,
    pub n_points: usize,
}

impl MetricRow {
    fn new(model: &str, s: &MetricSummary) -> Self {
        MetricRow {
            model: model.to_string(),
            accuracy: s.accuracy,
            rps: s.rps,
            log_loss: s.log_loss,
            n_points: s.n_points,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BettingRow {
    pub model: String,
    pub staking: String,
    pub bets: usize,
    pub win_pct: f64,
    pub total_staked: f64,
    pub net_profit: f64,
    pub roi_pct: f64,
    pub sharpe: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct BetLine {
    model: String,
    staking: String,
    match_id: String,
    minute: u32,
    outcome: String,
    stake: f64,
    odds: f64,
    model_p: f64,
    market_p: f64,
    ev: f64,
    settled: Option<f64>,
    in_goal_window: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct PnlLine {
    model: String,
    staking: String,
    match_index: usize,
    match_id: String,
    net: f64,
    cumulative: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct SweepLine {
    model: String,
    staking: String,
    threshold: f64,
    bets: usize,
    staked: f64,
    net_profit: f64,
    roi_pct: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct WindowLine {
    model: String,
    staking: String,
    window: String,
    bets: usize,
    staked: f64,
    gross: f64,
    gross_roi_pct: f64,
}

pub fn write_forecasts(out: &mut OutputDir, f: &Forecasts) -> Result<()> {
    out.csv("forecasts.csv", &f.rows)?;
    if !f.calibrations.is_empty() {
        out.csv("calibration.csv", &f.calibrations)?;
    }
    if !f.rival_calibrations.is_empty() {
        out.csv("calibration_rivals.csv", &f.rival_calibrations)?;
    }
    Ok(())
}

pub fn write_evaluation(out: &mut OutputDir, t: &EvaluationTables) -> Result<()> {
    let prematch: Vec<MetricRow> = t.prematch.iter().map(|(m, s)| MetricRow::new(m, s)).collect();
    let aggregate: Vec<MetricRow> = t.evaluation.reports.iter().map(|r| MetricRow::new(&r.model, &r.summary)).collect();
    let curves: Vec<CurveRow> = t.evaluation.curve_rows();
    out.csv("prematch_metrics.csv", &prematch)?;
    out.csv("inplay_metrics.csv", &aggregate)?;
    out.csv("per_minute_curves.csv", &curves)
}

pub fn write_betting(out: &mut OutputDir, backtests: &[ModelBacktest]) -> Result<()> {
    let (mut table, mut bets, mut pnl, mut sweep, mut windows) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for b in backtests {
        let (model, r) = (&b.model, &b.report);
        let staking = staking_label(r.mode).to_string();
        table.push(BettingRow {
            model: model.clone(),
            staking: staking.clone(),
            bets: r.bets,
            win_pct: r.win_pct,
            total_staked: r.total_staked,
            net_profit: r.net_profit,
            roi_pct: r.roi_pct,
            sharpe: r.sharpe,
        });
        bets.extend(r.records.iter().map(|x| BetLine {
            model: model.clone(),
            staking: staking.clone(),
            match_id: x.match_id.clone(),
            minute: x.minute,
            outcome: x.outcome.letter().to_string(),
            stake: x.stake,
            odds: x.odds,
            model_p: x.model_p,
            market_p: x.market_p,
            ev: x.ev,
            settled: x.settled,
            in_goal_window: x.in_goal_window,
        }));
        pnl.extend(r.pnl_curve.iter().map(|p| PnlLine {
            model: model.clone(),
            staking: staking.clone(),
            match_index: p.match_index,
            match_id: p.match_id.clone(),
            net: p.net,
            cumulative: p.cumulative,
        }));
        sweep.extend(r.ev_sweep.iter().map(|s| SweepLine {
            model: model.clone(),
            staking: staking.clone(),
            threshold: s.threshold,
            bets: s.bets,
            staked: s.staked,
            net_profit: s.net_profit,
            roi_pct: s.roi_pct,
        }));
        for (label, w) in [("inside", &r.in_goal_window), ("outside", &r.outside_goal_window)] {
            windows.push(WindowLine {
                model: model.clone(),
                staking: staking.clone(),
                window: label.to_string(),
                bets: w.bets,
                staked: w.staked,
                gross: w.gross,
                gross_roi_pct: w.gross_roi_pct,
            });
        }
    }
    out.csv("betting_summary.csv", &table)?;
    out.csv("bets.csv", &bets)?;
    out.csv("pnl_curve.csv", &pnl)?;
    out.csv("ev_sweep.csv", &sweep)?;
    out.csv("goal_window.csv", &windows)
}

/// Serialised fit for one gameweek: reports, baselines and tagged rival parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitArtifact {
    pub gameweek: String,
    pub as_of: chrono::NaiveDate,
    pub n_training: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratings: Option<RatingSet>,
    pub reports: Vec<FitReport>,
    pub baselines: Vec<Baseline>,
    pub rivals: Vec<RivalParams>,
    pub window_stoppage: (f64, f64),
    pub warnings: Vec<String>,
}

impl From<&GameweekFit> for FitArtifact {
    fn from(f: &GameweekFit) -> Self {
        let covs = [f.base.as_ref(), f.psi.as_ref()];
        FitArtifact {
            gameweek: f.gameweek.clone(),
            as_of: f.as_of,
            n_training: f.n_training,
            ratings: f.ratings.clone(),
            reports: f
                .ratings_report
                .iter()
                .cloned()
                .chain(covs.iter().flatten().map(|c| c.fit.report.clone()))
                .collect(),
            baselines: covs.iter().flatten().filter_map(|c| c.baseline).collect(),
            rivals: f
                .zou
                .iter()
                .map(|z| RivalParams::Zou(z.clone()))
                .chain(f.maia.iter().chain(f.maia_psi.iter()).map(|m| RivalParams::Maia(m.clone())))
                .collect(),
            window_stoppage: f.window_stoppage,
            warnings: f.warnings.clone(),
        }
    }
}

fn file_safe(label: &str) -> String {
    label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

pub fn write_fits(out: &mut OutputDir, fits: &[GameweekFit]) -> Result<()> {
    for f in fits {
        out.json(&format!("fits/gameweek-{}.json", file_safe(&f.gameweek)), &FitArtifact::from(f))?;
    }
    Ok(())
}

/// Dataset overview written by `ingest`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub matches: usize,
    pub excluded: Vec<String>,
    pub gameweeks: usize,
    pub evaluation_from: String,
    pub training_matches: usize,
    pub evaluation_matches: usize,
    pub flagged: Vec<(String, String)>,
    pub warnings: Vec<String>,
}

impl DatasetSummary {
    pub fn new(dataset: &Dataset, split: &Split) -> Self {
        let evaluation_period: usize = split.evaluation_gameweeks().iter().map(|g| g.matches.len()).sum();
        DatasetSummary {
            matches: dataset.timelines.len(),
            excluded: dataset.excluded.clone(),
            gameweeks: split.gameweeks.len(),
            evaluation_from: split.gameweeks[split.evaluation_start].label.clone(),
            training_matches: dataset.timelines.len() - evaluation_period,
            evaluation_matches: split.evaluation.len(),
            flagged: split.flagged.clone(),
            warnings: dataset.warnings.clone(),
        }
    }
}

/// Machine-readable description of a finished or failed run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub status: String,
    pub seed: u64,
    pub models: Vec<String>,
    pub evaluation_matches: usize,
    pub points_per_model: usize,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorInfo {
    pub stage: String,
    pub kind: String,
    pub message: String,
}

/// A failed stage together with the files written before it failed.
#[derive(Debug)]
pub struct RunFailure {
    pub stage: String,
    pub error: Error,
    pub outputs: Vec<String>,
}

impl fmt::Display for RunFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} stage failed: {}", self.stage, self.error)
    }
}

impl std::error::Error for RunFailure {}

impl RunFailure {
    pub fn new(stage: &str, error: Error) -> Self {
        RunFailure { stage: stage.to_string(), error, outputs: Vec::new() }
    }
}

/// Writes `error_manifest.json`; returns its path.
pub fn write_error_manifest(dir: &Path, seed: Option<u64>, failure: &RunFailure) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let manifest = RunManifest {
        status: "error".into(),
        seed: seed.unwrap_or_default(),
        models: Vec::new(),
        evaluation_matches: 0,
        points_per_model: 0,
        outputs: failure.outputs.clone(),
        warnings: Vec::new(),
        error: Some(ErrorInfo {
            stage: failure.stage.clone(),
            kind: failure.error.kind().to_string(),
            message: failure.error.to_string(),
        }),
    };
    let p = dir.join(ERROR_MANIFEST);
    write_json(&p, &manifest)?;
    Ok(p)
}

/// Loads the configured dataset and splits it.
pub fn prepare(cfg: &RunConfig) -> Result<(Dataset, Split)> {
    let d = cfg.data_files()?;
    let dataset = ingest(&d.events, &d.odds, &d.ou)?;
    let split = Split::new(&dataset, d.evaluation_from.as_deref(), cfg.betting.lag)?;
    Ok((dataset, split))
}

/// Full experiment: fit, forecast, evaluate, backtest and write every
/// report. On failure the files already written are listed in the error.
pub fn run_experiment(
    cfg: &RunConfig,
    dataset: &Dataset,
    out_dir: &Path,
) -> std::result::Result<RunManifest, RunFailure> {
    let mut out = OutputDir::new(out_dir).map_err(|e| RunFailure::new("output", e))?;
    let fail = |stage: &str, error: Error, out: &OutputDir| RunFailure {
        stage: stage.to_string(),
        error,
        outputs: out.written().to_vec(),
    };
    let lag = cfg.betting.lag;
    let evaluation_from = cfg.data.as_ref().and_then(|d| d.evaluation_from.clone());
    let split = Split::new(dataset, evaluation_from.as_deref(), lag).map_err(|e| fail("split", e, &out))?;
    let summary = DatasetSummary::new(dataset, &split);
    out.json("dataset.json", &summary).map_err(|e| fail("split", e, &out))?;

    let fits = fit_stage(dataset, &split, cfg).map_err(|e| fail("fit", e, &out))?;
    write_fits(&mut out, &fits).map_err(|e| fail("fit", e, &out))?;

    let forecasts = forecast_stage(dataset, &split, &fits, cfg).map_err(|e| fail("forecast", e, &out))?;
    write_forecasts(&mut out, &forecasts).map_err(|e| fail("forecast", e, &out))?;

    let tables = evaluate_stage(&forecasts.rows).map_err(|e| fail("evaluate", e, &out))?;
    write_evaluation(&mut out, &tables).map_err(|e| fail("evaluate", e, &out))?;

    let backtests = betting_stage(dataset, &forecasts.rows, cfg).map_err(|e| fail("bet", e, &out))?;
    write_betting(&mut out, &backtests).map_err(|e| fail("bet", e, &out))?;

    let mut warnings = summary.warnings.clone();
    warnings.extend(summary.flagged.iter().map(|(id, why)| format!("match {id} not evaluated: {why}")));
    warnings.extend(fits.iter().flat_map(|f| f.warnings.iter().map(move |w| format!("gameweek {}: {w}", f.gameweek))));
    let models: Vec<String> = cfg.models.select.iter().map(|m| m.label()).collect();
    let points_per_model = tables.evaluation.reports.first().map_or(0, |r| r.summary.n_points);
    let mut manifest = RunManifest {
        status: "ok".into(),
        seed: cfg.seed,
        models,
        evaluation_matches: split.evaluation.len(),
        points_per_model,
        outputs: Vec::new(),
        warnings,
        error: None,
    };
    manifest.outputs = out.written().to_vec();
    manifest.outputs.push(MANIFEST.to_string());
    out.json(MANIFEST, &manifest).map_err(|e| fail("report", e, &out))?;
    Ok(manifest)
}
