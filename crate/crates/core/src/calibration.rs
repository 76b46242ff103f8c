//! Per-match calibration of `(η_H, η_A)` to kickoff 1X2 and over/under
//! prices, minimising squared probability error with Powell's method.

use serde::{Deserialize, Serialize};

use crate::aft::{EtaPair, ShapeSpec};
use crate::domain::{ForecastTriple, MarketSnapshot};
use crate::error::{Error, Result};
use crate::simulator::{forecast_cached, ForecastOutput, MatchState, SimConfig, UniformCache};

pub use crate::optim::{powell_minimize, PowellOptions, PowellResult};

/// Loss above which a calibration is flagged as a poor fit.
pub const POOR_FIT_LOSS: f64 = 1e-3;
/// Uniforms cached per path; enough for about six goals.
const CACHED_DRAWS: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTarget {
    pub market: ForecastTriple,
    /// Market `P(total > g)` at thresholds 0.5 … 4.5.
    pub over: [f64; 5],
}

impl CalibrationTarget {
    pub fn new(market: ForecastTriple, over: [f64; 5]) -> Result<Self> {
        let t = CalibrationTarget { market, over };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.over.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidArgument(format!("over probabilities outside [0, 1]: {:?}", self.over)));
        }
        if self.over.windows(2).any(|w| w[1] > w[0] + 1e-12) {
            return Err(Error::InvalidArgument(format!("over probabilities must not increase: {:?}", self.over)));
        }
        Ok(())
    }

    /// Kickoff target from a market: minute-0 1X2 and the over/under book.
    pub fn from_market(market: &MarketSnapshot) -> Result<Self> {
        CalibrationTarget::new(market.implied_at(0, 0)?, market.over_probabilities()?)
    }

    /// Target reproduced exactly by a simulated forecast.
    pub fn from_forecast(out: &ForecastOutput) -> Self {
        CalibrationTarget { market: out.probs, over: out.over }
    }
}

/// Squared error over the three outcomes and the five over probabilities.
pub fn calibration_loss(probs: &ForecastTriple, over: &[f64; 5], target: &CalibrationTarget) -> f64 {
    let a: f64 = probs.as_array().iter().zip(target.market.as_array()).map(|(p, q)| (p - q).powi(2)).sum();
    let b: f64 = over.iter().zip(&target.over).map(|(p, q)| (p - q).powi(2)).sum();
    a + b
}

/// Simulation objective at kickoff; the seed in `cfg` fixes the paths.
pub fn calibration_objective(
    eta: EtaPair,
    target: &CalibrationTarget,
    shape: &ShapeSpec,
    cfg: &SimConfig,
) -> Result<f64> {
    let cache = UniformCache::new(cfg.seed, cfg.n_paths, CACHED_DRAWS);
    objective_with(eta, target, shape, cfg, &cache)
}

fn objective_with(
    eta: EtaPair,
    target: &CalibrationTarget,
    shape: &ShapeSpec,
    cfg: &SimConfig,
    cache: &UniformCache,
) -> Result<f64> {
    let out = forecast_cached(&MatchState::kickoff(), eta, shape, cfg, cache)?;
    Ok(calibration_loss(&out.probs, &out.over, target))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub eta_init: EtaPair,
    pub eta_kappa: EtaPair,
    pub loss: f64,
    pub iterations: usize,
    pub shift: EtaPair,
    /// Loss stayed above [`POOR_FIT_LOSS`]; the result is kept regardless.
    pub poor_fit: bool,
}

/// Powell settings for calibration: steps and tolerances on the `η` scale.
pub fn calibration_powell_options() -> PowellOptions {
    PowellOptions { rel_tol: 1e-8, max_iter: 200, line_tol: 1e-5, initial_step: 0.1 }
}

/// Calibrates `(η_H, η_A)` from `eta_init` with common random numbers.
pub fn calibrate_match(
    eta_init: EtaPair,
    target: &CalibrationTarget,
    shape: &ShapeSpec,
    cfg: &SimConfig,
) -> Result<CalibrationResult> {
    target.validate()?;
    let cache = UniformCache::new(cfg.seed, cfg.n_paths, CACHED_DRAWS);
    let mut failure = None;
    let f = |x: &[f64]| match objective_with(EtaPair::new(x[0], x[1]), target, shape, cfg, &cache) {
        Ok(v) => v,
        Err(e) => {
            failure.get_or_insert(e);
            f64::NAN
        }
    };
    let res = powell_minimize(f, &[eta_init.home, eta_init.away], calibration_powell_options());
    if let Some(e) = failure {
        return Err(e);
    }
    let res = res?;
    let eta_kappa = EtaPair::new(res.x[0], res.x[1]);
    let poor_fit = res.value > POOR_FIT_LOSS;
    if poor_fit {
        tracing::warn!(loss = res.value, "calibration loss above {POOR_FIT_LOSS}");
    }
    Ok(CalibrationResult {
        eta_init,
        eta_kappa,
        loss: res.value,
        iterations: res.iterations,
        shift: eta_kappa.minus(eta_init),
        poor_fit,
    })
}

/// Summed absolute error of total-goal buckets against a target expressed
/// through over probabilities (buckets 0..4 and 5+).
pub fn total_goals_error(total_goals: &[f64; 6], target_over: &[f64; 5]) -> f64 {
    let mut implied = [0.0; 6];
    let mut prev = 1.0;
    for (i, &o) in target_over.iter().enumerate() {
        implied[i] = prev - o;
        prev = o;
    }
    implied[5] = prev;
    total_goals.iter().zip(implied).map(|(a, b)| (a - b).abs()).sum()
}
