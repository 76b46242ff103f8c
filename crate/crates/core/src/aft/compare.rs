//! Model comparison: BIC differences and likelihood-ratio tests.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::FitReport;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: String,
    pub k: usize,
    pub loglik: f64,
    pub bic: f64,
    pub delta_bic: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nested_in: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lrt_statistic: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub df: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
}

/// Upper-tail chi-squared probability of a likelihood-ratio statistic.
pub fn lrt_p_value(statistic: f64, df: usize) -> f64 {
    if df == 0 {
        return f64::NAN;
    }
    let dist = ChiSquared::new(df as f64).expect("positive degrees of freedom");
    dist.sf(statistic.max(0.0))
}

fn names(r: &FitReport) -> Vec<&str> {
    r.estimates.iter().map(|e| e.name.as_str()).collect()
}

/// `ΔBIC` against `reports[baseline]` and an LRT for each report against its
/// largest nested sibling (one whose parameters are a strict subset).
pub fn compare_models(reports: &[FitReport], baseline: usize) -> Result<Vec<ComparisonRow>> {
    let base = reports
        .get(baseline)
        .ok_or_else(|| Error::InvalidArgument(format!("baseline index {baseline} out of range")))?;
    if let Some(bad) = reports.iter().find(|r| r.n_obs != base.n_obs || r.boundary != base.boundary) {
        return Err(Error::IncomparableFits(format!(
            "{} has {} observations ({:?}), {} has {} ({:?})",
            bad.model, bad.n_obs, bad.boundary, base.model, base.n_obs, base.boundary
        )));
    }
    Ok(reports
        .iter()
        .map(|r| {
            let own = names(r);
            let nested =
                reports.iter().filter(|o| o.k < r.k && names(o).iter().all(|n| own.contains(n))).max_by_key(|o| o.k);
            let mut row = ComparisonRow {
                model: r.model.clone(),
                k: r.k,
                loglik: r.loglik,
                bic: r.bic,
                delta_bic: r.bic - base.bic,
                nested_in: None,
                lrt_statistic: None,
                df: None,
                p_value: None,
            };
            if let Some(o) = nested {
                let stat = 2.0 * (r.loglik - o.loglik);
                let df = r.k - o.k;
                row.nested_in = Some(o.model.clone());
                row.lrt_statistic = Some(stat);
                row.df = Some(df);
                row.p_value = Some(lrt_p_value(stat, df));
            }
            row
        })
        .collect())
}
