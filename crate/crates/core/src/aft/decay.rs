//! Exponential down-weighting of older matches.

use chrono::NaiveDate;

use crate::error::{Error, Result};

/// Days per decay unit (half a week).
const DAYS_PER_UNIT: f64 = 3.5;

/// `w = exp(-xi · days / 3.5)` for each match date relative to `as_of`.
pub fn decay_weights(dates: &[NaiveDate], as_of: NaiveDate, xi: f64) -> Result<Vec<f64>> {
    dates
        .iter()
        .map(|d| {
            let days = (as_of - *d).num_days();
            if days < 0 {
                return Err(Error::InvalidDate(format!("match on {d} is after the as-of date {as_of}")));
            }
            Ok((-xi * days as f64 / DAYS_PER_UNIT).exp())
        })
        .collect()
}
