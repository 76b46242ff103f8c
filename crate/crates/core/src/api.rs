//! Request and response bodies shared by the HTTP service and its client,
//! together with the synchronous handlers that serve them.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::aft::{
    fit_shape_and_covariates, fit_team_ratings, CovariateSpec, EtaPair, FitOptions, FitReport, RatingSet, ShapeFit,
    ShapeSpec,
};
use crate::betting::{expected_value, kelly_fraction, settle, BetRecord};
use crate::calibration::{calibrate_match, CalibrationResult, CalibrationTarget};
use crate::covariates::{fit_baseline, Baseline, StatKind};
use crate::domain::{implied_probabilities, ForecastTriple, MatchTimeline, OddsTriple, Outcome};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, hit, log_loss, rps, Evaluation, EvaluationPoint};
use crate::rival::maia::{maia_forecast, MaiaParams, MaiaState};
use crate::rival::zou::{zou_outcome_probs, ZouOutcome, ZouParams};
use crate::simulator::{forecast, ForecastOutput, MatchState, SimConfig};
use crate::weibull::{rate_from_eta, weibull_mean};

/// Upper bound on Monte Carlo paths accepted per request.
pub const MAX_PATHS: usize = 1_000_000;

/// Error payload returned with every non-2xx response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

impl From<&Error> for ErrorBody {
    fn from(e: &Error) -> Self {
        ErrorBody { error: e.kind().to_string(), message: e.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpliedRequest {
    pub odds: OddsTriple,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateRequest {
    pub eta: f64,
    pub shape: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateResponse {
    pub rate: f64,
    /// Mean gap time implied by the rate; equals `exp(eta)` up to rounding.
    pub mean_gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastRequest {
    pub state: MatchState,
    pub eta: EtaPair,
    pub shape: ShapeSpec,
    pub sim: SimConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrateRequest {
    pub eta_init: EtaPair,
    pub target: CalibrationTarget,
    pub shape: ShapeSpec,
    pub sim: SimConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub forecast: ForecastTriple,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub rps: f64,
    pub log_loss: f64,
    pub hit: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KellyRequest {
    pub p: f64,
    pub odds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KellyResponse {
    pub fraction: f64,
    pub expected_value: f64,
}

fn default_commission() -> f64 {
    0.02
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettleRequest {
    pub bets: Vec<BetRecord>,
    pub result: Outcome,
    #[serde(default = "default_commission")]
    pub commission: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SettleResponse {
    pub net: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZouForecastRequest {
    pub state: MatchState,
    pub params: ZouParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaiaForecastRequest {
    pub state: MaiaState,
    pub params: MaiaParams,
    pub composites: (f64, f64),
    pub sim: SimConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRequest {
    pub matches: Vec<MatchTimeline>,
    pub as_of: NaiveDate,
    #[serde(default)]
    pub options: FitOptions,
    /// Second-stage covariate spec; ratings only when absent.
    #[serde(default)]
    pub covariates: Option<CovariateSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResponse {
    pub ratings: RatingSet,
    pub ratings_report: FitReport,
    pub shape_fit: Option<ShapeFit>,
    pub baseline: Option<Baseline>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateRequest {
    pub points: Vec<EvaluationPoint>,
    #[serde(default)]
    pub benchmark: Option<String>,
}

fn check_sim(sim: &SimConfig) -> Result<()> {
    sim.validate()?;
    if sim.n_paths > MAX_PATHS {
        return Err(Error::InvalidArgument(format!("n_paths {} exceeds the limit of {MAX_PATHS}", sim.n_paths)));
    }
    Ok(())
}

fn check_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be finite, got {v}")))
    }
}

pub fn implied(req: &ImpliedRequest) -> Result<ForecastTriple> {
    implied_probabilities(&req.odds)
}

pub fn rate(req: &RateRequest) -> Result<RateResponse> {
    check_finite("eta", req.eta)?;
    if !(req.shape > 0.0 && req.shape.is_finite()) {
        return Err(Error::InvalidArgument(format!("shape must be positive, got {}", req.shape)));
    }
    let rate = rate_from_eta(req.eta, req.shape);
    Ok(RateResponse { rate, mean_gap: weibull_mean(req.shape, rate) })
}

pub fn run_forecast(req: &ForecastRequest) -> Result<ForecastOutput> {
    check_sim(&req.sim)?;
    forecast(&req.state, req.eta, &req.shape, &req.sim)
}

pub fn calibrate(req: &CalibrateRequest) -> Result<CalibrationResult> {
    check_sim(&req.sim)?;
    req.target.validate()?;
    calibrate_match(req.eta_init, &req.target, &req.shape, &req.sim)
}

pub fn score(req: &ScoreRequest) -> ScoreResponse {
    ScoreResponse {
        rps: rps(&req.forecast, req.outcome),
        log_loss: log_loss(&req.forecast, req.outcome),
        hit: hit(&req.forecast, req.outcome),
    }
}

pub fn kelly(req: &KellyRequest) -> Result<KellyResponse> {
    if !(0.0..=1.0).contains(&req.p) {
        return Err(Error::InvalidArgument(format!("probability outside [0, 1]: {}", req.p)));
    }
    if !(req.odds > 1.0 && req.odds.is_finite()) {
        return Err(Error::InvalidOdds(format!("decimal odds must exceed 1.0, got {}", req.odds)));
    }
    Ok(KellyResponse { fraction: kelly_fraction(req.p, req.odds), expected_value: expected_value(req.p, req.odds) })
}

pub fn settle_bets(req: &SettleRequest) -> Result<SettleResponse> {
    if !(0.0..1.0).contains(&req.commission) {
        return Err(Error::InvalidArgument(format!("commission outside [0, 1): {}", req.commission)));
    }
    for b in &req.bets {
        check_finite("stake", b.stake)?;
        if !(b.odds > 1.0 && b.odds.is_finite()) {
            return Err(Error::InvalidOdds(format!("bet on {} at odds {}", b.match_id, b.odds)));
        }
    }
    Ok(SettleResponse { net: settle(&req.bets, req.result, req.commission) })
}

pub fn zou_forecast(req: &ZouForecastRequest) -> Result<ZouOutcome> {
    req.params.validate()?;
    zou_outcome_probs(&req.state, &req.params)
}

pub fn maia_forecast_request(req: &MaiaForecastRequest) -> Result<ForecastOutput> {
    check_sim(&req.sim)?;
    req.params.validate()?;
    maia_forecast(&req.state, &req.params, req.composites, &req.sim)
}

/// Two-stage fit: ratings first, then shapes and covariates when requested.
pub fn fit(req: &FitRequest) -> Result<FitResponse> {
    let stage1 = FitOptions { covariates: CovariateSpec::M0, ..req.options.clone() };
    let (ratings, ratings_report) = fit_team_ratings(&req.matches, req.as_of, &stage1)?;
    let Some(spec) = req.covariates else {
        return Ok(FitResponse { ratings, ratings_report, shape_fit: None, baseline: None });
    };
    let baseline = spec.deviation().map(|k| fit_baseline(&req.matches, k)).transpose()?;
    let opts = FitOptions {
        covariates: spec,
        psxg_baseline: baseline.filter(|_| spec.deviation() == Some(StatKind::Psxg)),
        goals_baseline: baseline.filter(|_| spec.deviation() == Some(StatKind::Goals)),
        ..req.options.clone()
    };
    let shape_fit = fit_shape_and_covariates(&req.matches, &ratings, spec, &opts)?;
    Ok(FitResponse { ratings, ratings_report, shape_fit: Some(shape_fit), baseline })
}

pub fn evaluate_points(req: &EvaluateRequest) -> Result<Evaluation> {
    evaluate(&req.points, req.benchmark.as_deref())
}
