//! Experiment stages: fit, calibrate and forecast every evaluation minute,
//! then score the forecasts and backtest them against the market.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ModelFamily, ModelSpec, RunConfig};
use super::ingest::Dataset;
use super::match_seed;
use super::refit::{rolling_refit, GameweekFit, Split};
use crate::aft::{expected_log_time, CovariateCoeffs, CovariateValues, EtaPair};
use crate::betting::{run_backtest, BacktestConfig, BacktestPoint, BettingReport, StakingMode, GOAL_WINDOW};
use crate::calibration::{calibrate_match, CalibrationTarget};
use crate::covariates::{covariate_path, visible_at, CovariatePath};
use crate::domain::{ForecastTriple, MarketSnapshot, MatchTimeline, Outcome};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, evaluation_grid, summarize, Evaluation, EvaluationPoint, MetricSummary};
use crate::rival::{maia_calibrate, maia_forecast, zou_calibrate, zou_outcome_probs, MaiaState};
use crate::simulator::{forecast, MatchState, OracleDuration, SimConfig};

/// One forecast at one evaluation minute.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ForecastRow {
    pub match_id: String,
    pub minute: u32,
    pub model: String,
    pub p_home: f64,
    pub p_draw: f64,
    pub p_away: f64,
    /// Realised result: `H`, `D` or `A`.
    pub outcome: String,
}

impl ForecastRow {
    pub fn triple(&self) -> Result<ForecastTriple> {
        ForecastTriple::new(self.p_home, self.p_draw, self.p_away)
    }

    pub fn point(&self) -> Result<EvaluationPoint> {
        Ok(EvaluationPoint {
            match_id: self.match_id.clone(),
            minute: self.minute,
            model: self.model.clone(),
            forecast: self.triple()?,
            outcome: Outcome::parse(&self.outcome)?,
        })
    }
}

/// Kickoff calibration of a Weibull variant.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub match_id: String,
    #[serde(rename = "eta_init_H")]
    pub eta_init_home: f64,
    #[serde(rename = "eta_init_A")]
    pub eta_init_away: f64,
    #[serde(rename = "eta_kappa_H")]
    pub eta_kappa_home: f64,
    #[serde(rename = "eta_kappa_A")]
    pub eta_kappa_away: f64,
    #[serde(rename = "shift_H")]
    pub shift_home: f64,
    #[serde(rename = "shift_A")]
    pub shift_away: f64,
    pub loss: f64,
    pub iterations: usize,
    pub model: String,
}

/// Kickoff calibration of a rival model's prior rates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RivalCalibrationRow {
    pub match_id: String,
    pub model: String,
    pub rate_init_home: f64,
    pub rate_init_away: f64,
    pub rate_kappa_home: f64,
    pub rate_kappa_away: f64,
    pub loss: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Forecasts {
    pub rows: Vec<ForecastRow>,
    pub calibrations: Vec<CalibrationRow>,
    pub rival_calibrations: Vec<RivalCalibrationRow>,
}

impl Forecasts {
    fn extend(&mut self, other: Forecasts) {
        self.rows.extend(other.rows);
        self.calibrations.extend(other.calibrations);
        self.rival_calibrations.extend(other.rival_calibrations);
    }
}

/// Simulation settings for one match.
pub fn sim_config(cfg: &RunConfig, fit: &GameweekFit, tl: &MatchTimeline, seed: u64) -> SimConfig {
    let (u1, u2) = if cfg.simulation.stoppage_from_data {
        fit.window_stoppage
    } else {
        (cfg.simulation.stoppage_first, cfg.simulation.stoppage_second)
    };
    SimConfig {
        n_paths: cfg.simulation.n_paths,
        seed,
        stoppage_first: u1,
        stoppage_second: u2,
        oracle: cfg
            .simulation
            .oracle
            .then_some(OracleDuration { first_half_end: tl.first_half_end, full_time: tl.full_time }),
        boundary: cfg.fit.boundary,
    }
}

fn missing(what: &str, gw: &str) -> Error {
    Error::State(format!("no {what} fitted for gameweek {gw}"))
}

fn weibull_forecasts(
    spec: ModelSpec,
    tl: &MatchTimeline,
    market: &MarketSnapshot,
    fit: &GameweekFit,
    sim: &SimConfig,
    out: &mut Forecasts,
) -> Result<Vec<ForecastTriple>> {
    let ratings = fit.ratings.as_ref().ok_or_else(|| missing("ratings", &fit.gameweek))?;
    let cov = if spec.psxg { fit.psi.as_ref() } else { fit.base.as_ref() }
        .ok_or_else(|| missing("shape fit", &fit.gameweek))?;
    let (shape, coeffs) = (cov.fit.shape, cov.fit.coeffs);
    let zero = CovariateValues::default();
    let eta_init = expected_log_time(ratings, &tl.home, &tl.away, &zero, &zero, &CovariateCoeffs::default())?;
    let eta = if spec.calibrated {
        let target = CalibrationTarget::from_market(market)?;
        let c = calibrate_match(eta_init, &target, &shape, sim)?;
        out.calibrations.push(CalibrationRow {
            match_id: tl.match_id.clone(),
            eta_init_home: c.eta_init.home,
            eta_init_away: c.eta_init.away,
            eta_kappa_home: c.eta_kappa.home,
            eta_kappa_away: c.eta_kappa.away,
            shift_home: c.shift.home,
            shift_away: c.shift.away,
            loss: c.loss,
            iterations: c.iterations,
            model: spec.label(),
        });
        c.eta_kappa
    } else {
        eta_init
    };
    let path = if cov.spec.mode() == crate::covariates::CovariateMode::None {
        CovariatePath::zero()
    } else {
        covariate_path(tl, cov.baseline.as_ref(), cov.spec.mode())?
    };
    evaluation_grid(tl.full_time)
        .map(|m| {
            let state = MatchState::from_timeline(tl, m as f64, &path, sim.boundary)?;
            let e = EtaPair::new(eta.home + coeffs.dot(&state.x_home), eta.away + coeffs.dot(&state.x_away));
            Ok(forecast(&state, e, &shape, sim)?.probs)
        })
        .collect()
}

fn zou_forecasts(
    spec: ModelSpec,
    tl: &MatchTimeline,
    market: &MarketSnapshot,
    fit: &GameweekFit,
    out: &mut Forecasts,
) -> Result<Vec<ForecastTriple>> {
    let model = fit.zou.as_ref().ok_or_else(|| missing("Zou model", &fit.gameweek))?;
    let mut params = model.params_for(&tl.home, &tl.away)?;
    if spec.calibrated {
        let (p, c) = zou_calibrate(&params, &CalibrationTarget::from_market(market)?)?;
        out.rival_calibrations.push(RivalCalibrationRow {
            match_id: tl.match_id.clone(),
            model: spec.label(),
            rate_init_home: c.theta_init.0,
            rate_init_away: c.theta_init.1,
            rate_kappa_home: c.theta_kappa.0,
            rate_kappa_away: c.theta_kappa.1,
            loss: c.loss,
            iterations: c.iterations,
        });
        params = p;
    }
    let zero = CovariatePath::zero();
    evaluation_grid(tl.full_time)
        .map(|m| {
            let state = MatchState::from_timeline(tl, m as f64, &zero, crate::aft::BoundaryMode::Reset)?;
            Ok(zou_outcome_probs(&state, &params)?.probs)
        })
        .collect()
}

fn maia_forecasts(
    spec: ModelSpec,
    tl: &MatchTimeline,
    market: &MarketSnapshot,
    fit: &GameweekFit,
    sim: &SimConfig,
    out: &mut Forecasts,
) -> Result<Vec<ForecastTriple>> {
    let params = if spec.psxg { fit.maia_psi.as_ref() } else { fit.maia.as_ref() }
        .ok_or_else(|| missing("Maia model", &fit.gameweek))?;
    let mut composites = params.composites(&tl.home, &tl.away)?;
    if spec.calibrated {
        let c = maia_calibrate(params, composites, &CalibrationTarget::from_market(market)?, sim)?;
        out.rival_calibrations.push(RivalCalibrationRow {
            match_id: tl.match_id.clone(),
            model: spec.label(),
            rate_init_home: c.composite_init.0,
            rate_init_away: c.composite_init.1,
            rate_kappa_home: c.composite_kappa.0,
            rate_kappa_away: c.composite_kappa.1,
            loss: c.loss,
            iterations: c.iterations,
        });
        composites = c.composite_kappa;
    }
    evaluation_grid(tl.full_time)
        .map(|m| {
            let state = MaiaState::from_timeline(tl, m as f64, params.psxg_baseline.as_ref())?;
            Ok(maia_forecast(&state, params, composites, sim)?.probs)
        })
        .collect()
}

/// Forecasts every grid minute of one match for every selected model.
pub fn forecast_match(
    tl: &MatchTimeline,
    market: &MarketSnapshot,
    fit: &GameweekFit,
    cfg: &RunConfig,
) -> Result<Forecasts> {
    let seed = match_seed(cfg.seed, &tl.match_id);
    let sim = sim_config(cfg, fit, tl, seed);
    let lag = cfg.betting.lag;
    let outcome = tl.outcome().letter().to_string();
    let mut out = Forecasts::default();
    for &spec in &cfg.models.select {
        let probs = match spec.family {
            ModelFamily::Betfair => {
                evaluation_grid(tl.full_time).map(|m| market.implied_at(m as i64, lag)).collect::<Result<Vec<_>>>()?
            }
            ModelFamily::Weibull => weibull_forecasts(spec, tl, market, fit, &sim, &mut out)?,
            ModelFamily::Zou => zou_forecasts(spec, tl, market, fit, &mut out)?,
            ModelFamily::Maia => maia_forecasts(spec, tl, market, fit, &sim, &mut out)?,
        };
        let label = spec.label();
        out.rows.extend(evaluation_grid(tl.full_time).zip(probs).map(|(minute, p)| ForecastRow {
            match_id: tl.match_id.clone(),
            minute,
            model: label.clone(),
            p_home: p.home(),
            p_draw: p.draw(),
            p_away: p.away(),
            outcome: outcome.clone(),
        }));
    }
    Ok(out)
}

/// Fits for the gameweeks that need them; empty when only the market is selected.
pub fn fit_stage(dataset: &Dataset, split: &Split, cfg: &RunConfig) -> Result<Vec<GameweekFit>> {
    if cfg.models.select.iter().all(|m| m.family == ModelFamily::Betfair) {
        return Ok((split.evaluation_start..split.gameweeks.len())
            .map(|gw| GameweekFit {
                gameweek: split.gameweeks[gw].label.clone(),
                as_of: split.gameweeks[gw].first_date,
                n_training: split.training_for(dataset, gw).len(),
                ratings: None,
                ratings_report: None,
                base: None,
                psi: None,
                zou: None,
                maia: None,
                maia_psi: None,
                window_stoppage: (cfg.simulation.stoppage_first, cfg.simulation.stoppage_second),
                warnings: Vec::new(),
            })
            .collect());
    }
    rolling_refit(dataset, split, cfg)
}

/// Forecasts for every evaluation match, in dataset order.
pub fn forecast_stage(dataset: &Dataset, split: &Split, fits: &[GameweekFit], cfg: &RunConfig) -> Result<Forecasts> {
    let by_label: BTreeMap<&str, &GameweekFit> = fits.iter().map(|f| (f.gameweek.as_str(), f)).collect();
    let parts: Vec<Forecasts> = split
        .evaluation
        .par_iter()
        .map(|&i| {
            let tl = &dataset.timelines[i];
            let gw = split.gameweek_of(i).expect("evaluation match has a gameweek");
            let fit = by_label
                .get(split.gameweeks[gw].label.as_str())
                .ok_or_else(|| missing("models", &split.gameweeks[gw].label))?;
            let market = dataset
                .markets
                .get(&tl.match_id)
                .ok_or_else(|| Error::State(format!("no market for match {}", tl.match_id)))?;
            forecast_match(tl, market, fit, cfg)
        })
        .collect::<Result<_>>()?;
    let mut out = Forecasts::default();
    for p in parts {
        out.extend(p);
    }
    Ok(out)
}

/// Aggregate and pre-match tables plus per-minute curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationTables {
    pub evaluation: Evaluation,
    /// Minute-0 metrics per model.
    pub prematch: Vec<(String, MetricSummary)>,
}

pub fn evaluate_stage(rows: &[ForecastRow]) -> Result<EvaluationTables> {
    let points: Vec<EvaluationPoint> = rows.iter().map(ForecastRow::point).collect::<Result<_>>()?;
    let benchmark = ModelSpec::BETFAIR.label();
    let has_benchmark = points.iter().any(|p| p.model == benchmark);
    let evaluation = evaluate(&points, has_benchmark.then_some(benchmark.as_str()))?;
    let prematch = evaluation
        .reports
        .iter()
        .map(|r| {
            let s = summarize(points.iter().filter(|p| p.model == r.model && p.minute == 0));
            (r.model.clone(), s)
        })
        .collect();
    Ok(EvaluationTables { evaluation, prematch })
}

/// A goal became visible within the window before `minute`.
pub fn in_goal_window(tl: &MatchTimeline, minute: u32) -> bool {
    let m = minute as f64;
    tl.goals().any(|g| visible_at(g.half, g.minute, m) && g.minute >= m - GOAL_WINDOW)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBacktest {
    pub model: String,
    pub report: BettingReport,
}

/// Backtests every non-market model under each configured staking mode.
pub fn betting_stage(dataset: &Dataset, rows: &[ForecastRow], cfg: &RunConfig) -> Result<Vec<ModelBacktest>> {
    let benchmark = ModelSpec::BETFAIR.label();
    let mut models: Vec<&str> = Vec::new();
    for r in rows {
        if r.model != benchmark && !models.contains(&r.model.as_str()) {
            models.push(&r.model);
        }
    }
    let timelines: BTreeMap<&str, &MatchTimeline> =
        dataset.timelines.iter().map(|t| (t.match_id.as_str(), t)).collect();
    let mut results = BTreeMap::new();
    for r in rows {
        results.insert(r.match_id.clone(), Outcome::parse(&r.outcome)?);
    }
    let mut out = Vec::new();
    for model in models {
        let points: Vec<BacktestPoint> = rows
            .iter()
            .filter(|r| r.model == model)
            .map(|r| {
                let tl = timelines
                    .get(r.match_id.as_str())
                    .ok_or_else(|| Error::State(format!("forecast for unknown match {}", r.match_id)))?;
                let market = dataset
                    .markets
                    .get(&r.match_id)
                    .ok_or_else(|| Error::State(format!("no market for match {}", r.match_id)))?;
                Ok(BacktestPoint {
                    match_id: r.match_id.clone(),
                    minute: r.minute,
                    forecast: r.triple()?,
                    market: market.implied_at(r.minute as i64, cfg.betting.lag)?,
                    in_goal_window: in_goal_window(tl, r.minute),
                })
            })
            .collect::<Result<_>>()?;
        for &mode in &cfg.betting.staking {
            let bc = BacktestConfig {
                ev_threshold: cfg.betting.ev_threshold,
                commission: cfg.betting.commission,
                ..BacktestConfig::new(mode)
            };
            out.push(ModelBacktest { model: model.to_string(), report: run_backtest(&points, &results, &bc)? });
        }
    }
    Ok(out)
}

/// Staking label used in report files.
pub fn staking_label(mode: StakingMode) -> &'static str {
    match mode {
        StakingMode::Unit => "unit",
        StakingMode::Kelly => "kelly",
    }
}
