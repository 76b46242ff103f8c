//! Comparison forecasters: a Bayesian birth process with an exact score
//! lattice ([`zou`]) and a Cox process with dynamic regressors ([`maia`]).

pub mod maia;
pub mod zou;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::optim::poisson_glm;

pub use maia::{
    maia_calibrate, maia_fit, maia_forecast, maia_intensity, MaiaCalibration, MaiaCoefficients, MaiaParams, MaiaState,
    RedCardProcess, Regressors, StoppageRegression,
};
pub use zou::{
    zou_calibrate, zou_fit, zou_outcome_probs, zou_posterior_update, ZouCalibration, ZouModel, ZouMultipliers,
    ZouOutcome, ZouParams,
};

/// Fitted rival parameters with a `model` tag for JSON round trips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum RivalParams {
    Zou(ZouModel),
    Maia(MaiaParams),
}

/// Coefficients and standard errors of a Poisson regression in which
/// all-zero columns are dropped and reported as `0 ± 0`.
pub(crate) struct SparseGlm {
    pub coef: Vec<f64>,
    pub se: Vec<f64>,
    pub loglik: f64,
    pub dropped: Vec<usize>,
}

pub(crate) fn glm_dropping_empty(rows: &[Vec<f64>], y: &[f64], exposure: &[f64]) -> Result<SparseGlm> {
    let p = rows.first().map(Vec::len).unwrap_or(0);
    let keep: Vec<usize> = (0..p).filter(|&j| rows.iter().any(|r| r[j] != 0.0)).collect();
    let dropped: Vec<usize> = (0..p).filter(|j| !keep.contains(j)).collect();
    let reduced: Vec<Vec<f64>> = rows.iter().map(|r| keep.iter().map(|&j| r[j]).collect()).collect();
    let fit = poisson_glm(&reduced, y, exposure, None)?;
    let mut coef = vec![0.0; p];
    let mut se = vec![0.0; p];
    for (k, &j) in keep.iter().enumerate() {
        coef[j] = fit.coef[k];
        se[j] = fit.se.as_ref().map_or(f64::NAN, |s| s[k]);
    }
    Ok(SparseGlm { coef, se, loglik: fit.loglik, dropped })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_columns_are_dropped() {
        let rows = vec![vec![1.0, 0.0, 1.0], vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]];
        let y = [2.0, 1.0, 4.0, 1.0];
        let e = [1.0; 4];
        let fit = glm_dropping_empty(&rows, &y, &e).unwrap();
        assert_eq!(fit.dropped, vec![1]);
        assert_eq!(fit.coef[1], 0.0);
        assert!((fit.coef[0] - 0.0).abs() < 1e-8);
        assert!((fit.coef[2] - 3f64.ln()).abs() < 1e-8);
    }
}
