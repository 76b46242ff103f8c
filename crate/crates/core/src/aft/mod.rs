//! Weibull accelerated-failure-time model for goal gap times.
//!
//! The log expected time to the next goal for each side is
//! `η_H = μ + β_home + a_H + d_A + βᵀx_H` and `η_A = μ + a_A + d_H + βᵀx_A`.
//! Lower attack values mean a stronger attack; higher defence values a
//! stronger defence.

mod compare;
mod decay;
mod fit;
mod spell;

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::domain::{Half, TeamId};
use crate::error::{Error, Result};

pub use compare::{compare_models, lrt_p_value, ComparisonRow};
pub use decay::decay_weights;
pub use fit::{fit_shape_and_covariates, fit_team_ratings, CovariateSpec, Estimate, FitOptions, FitReport, ShapeFit};
pub use spell::{build_spells, spell_log_likelihood, EtaSegment, GoalSpell, SpellTerminal};

/// Sum-to-zero tolerance for attack and defence ratings.
pub const SUM_TO_ZERO_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingSet {
    pub mu: f64,
    pub beta_home: f64,
    pub attack: BTreeMap<TeamId, f64>,
    pub defence: BTreeMap<TeamId, f64>,
    pub as_of: NaiveDate,
    pub decay_xi: f64,
}

impl RatingSet {
    pub fn validate(&self) -> Result<()> {
        let sa: f64 = self.attack.values().sum();
        let sd: f64 = self.defence.values().sum();
        if sa.abs() > SUM_TO_ZERO_TOL || sd.abs() > SUM_TO_ZERO_TOL {
            return Err(Error::InvalidArgument(format!("ratings violate sum-to-zero (attack {sa:e}, defence {sd:e})")));
        }
        if self.attack.len() != self.defence.len() {
            return Err(Error::InvalidArgument("attack and defence cover different teams".into()));
        }
        Ok(())
    }

    /// Ratings with every team at zero.
    pub fn flat(mu: f64, beta_home: f64, teams: impl IntoIterator<Item = TeamId>, as_of: NaiveDate) -> Self {
        let teams: Vec<TeamId> = teams.into_iter().collect();
        RatingSet {
            mu,
            beta_home,
            attack: teams.iter().map(|t| (t.clone(), 0.0)).collect(),
            defence: teams.iter().map(|t| (t.clone(), 0.0)).collect(),
            as_of,
            decay_xi: 0.0,
        }
    }

    pub fn attack_of(&self, team: &TeamId) -> Result<f64> {
        self.attack.get(team).copied().ok_or_else(|| Error::MissingTeam(team.to_string()))
    }

    pub fn defence_of(&self, team: &TeamId) -> Result<f64> {
        self.defence.get(team).copied().ok_or_else(|| Error::MissingTeam(team.to_string()))
    }

    pub fn teams(&self) -> impl Iterator<Item = &TeamId> {
        self.attack.keys()
    }
}

/// Score situation from one team's point of view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreState {
    Leading,
    Tied,
    Trailing,
}

impl ScoreState {
    pub fn from_goals(own: u32, other: u32) -> Self {
        match own.cmp(&other) {
            std::cmp::Ordering::Greater => ScoreState::Leading,
            std::cmp::Ordering::Equal => ScoreState::Tied,
            std::cmp::Ordering::Less => ScoreState::Trailing,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum ShapeSpec {
    Single { gamma: f64 },
    HalfSpecific { first: f64, second: f64 },
    ScoreState { leading: f64, tied: f64, trailing: f64 },
}

impl ShapeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values().iter().all(|g| *g > 0.0 && g.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("shape parameters must be positive: {self:?}")))
        }
    }

    pub fn values(&self) -> Vec<f64> {
        match *self {
            ShapeSpec::Single { gamma } => vec![gamma],
            ShapeSpec::HalfSpecific { first, second } => vec![first, second],
            ShapeSpec::ScoreState { leading, tied, trailing } => vec![leading, tied, trailing],
        }
    }

    pub fn with_values(&self, v: &[f64]) -> ShapeSpec {
        match self {
            ShapeSpec::Single { .. } => ShapeSpec::Single { gamma: v[0] },
            ShapeSpec::HalfSpecific { .. } => ShapeSpec::HalfSpecific { first: v[0], second: v[1] },
            ShapeSpec::ScoreState { .. } => ShapeSpec::ScoreState { leading: v[0], tied: v[1], trailing: v[2] },
        }
    }

    pub fn names(&self) -> &'static [&'static str] {
        match self {
            ShapeSpec::Single { .. } => &["gamma"],
            ShapeSpec::HalfSpecific { .. } => &["gamma_1h", "gamma_2h"],
            ShapeSpec::ScoreState { .. } => &["gamma_leading", "gamma_tied", "gamma_trailing"],
        }
    }

    /// Index into [`ShapeSpec::values`] that applies to a spell.
    pub fn index_for(&self, half: Half, state: ScoreState) -> usize {
        match self {
            ShapeSpec::Single { .. } => 0,
            ShapeSpec::HalfSpecific { .. } => match half {
                Half::First => 0,
                Half::Second => 1,
            },
            ShapeSpec::ScoreState { .. } => match state {
                ScoreState::Leading => 0,
                ScoreState::Tied => 1,
                ScoreState::Trailing => 2,
            },
        }
    }

    pub fn gamma_for(&self, half: Half, state: ScoreState) -> f64 {
        self.values()[self.index_for(half, state)]
    }

    pub fn is_half_specific(&self) -> bool {
        matches!(self, ShapeSpec::HalfSpecific { .. })
    }

    /// Half-specific estimates reported for the base model.
    pub fn reference_half_specific() -> Self {
        ShapeSpec::HalfSpecific { first: 0.983, second: 1.395 }
    }
}

/// How spells treat the half-time interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryMode {
    /// One clock across half-time.
    Continuous,
    /// Censor at half-time and restart the clock for the second half.
    #[default]
    Reset,
}

/// In-play covariates for one team.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CovariateValues {
    /// Own red cards subtracted from the opponent's: positive is a player advantage.
    pub red: f64,
    /// Cumulative PSxG or goals minus the population baseline.
    pub dev: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CovariateCoeffs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_red: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_goals: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_psxg: Option<f64>,
}

impl CovariateCoeffs {
    pub fn new(beta_red: Option<f64>, beta_goals: Option<f64>, beta_psxg: Option<f64>) -> Result<Self> {
        let c = CovariateCoeffs { beta_red, beta_goals, beta_psxg };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta_goals.is_some() && self.beta_psxg.is_some() {
            return Err(Error::InvalidArgument("goals and PSxG deviation coefficients are mutually exclusive".into()));
        }
        Ok(())
    }

    /// Coefficient applied to the deviation covariate, whichever kind it is.
    pub fn beta_dev(&self) -> f64 {
        self.beta_goals.or(self.beta_psxg).unwrap_or(0.0)
    }

    pub fn dot(&self, x: &CovariateValues) -> f64 {
        self.beta_red.unwrap_or(0.0) * x.red + self.beta_dev() * x.dev
    }
}

/// Log expected gap times for home and away.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaPair {
    pub home: f64,
    pub away: f64,
}

impl EtaPair {
    pub fn new(home: f64, away: f64) -> Self {
        EtaPair { home, away }
    }

    pub fn shifted(&self, by: EtaPair) -> EtaPair {
        EtaPair { home: self.home + by.home, away: self.away + by.away }
    }

    pub fn minus(&self, other: EtaPair) -> EtaPair {
        EtaPair { home: self.home - other.home, away: self.away - other.away }
    }
}

pub fn expected_log_time(
    ratings: &RatingSet,
    home: &TeamId,
    away: &TeamId,
    x_home: &CovariateValues,
    x_away: &CovariateValues,
    coeffs: &CovariateCoeffs,
) -> Result<EtaPair> {
    let (a_h, d_h) = (ratings.attack_of(home)?, ratings.defence_of(home)?);
    let (a_a, d_a) = (ratings.attack_of(away)?, ratings.defence_of(away)?);
    Ok(EtaPair {
        home: ratings.mu + ratings.beta_home + a_h + d_a + coeffs.dot(x_home),
        away: ratings.mu + a_a + d_h + coeffs.dot(x_away),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ratings(mu: f64, home: f64) -> RatingSet {
        RatingSet::flat(
            mu,
            home,
            [TeamId::new("A").unwrap(), TeamId::new("B").unwrap()],
            NaiveDate::from_ymd_opt(2025, 1, 1).unwrap(),
        )
    }

    #[test]
    fn eta_intercept_and_home() {
        let r = ratings(4.09, -0.12);
        let (a, b) = (TeamId::new("A").unwrap(), TeamId::new("B").unwrap());
        let zero = CovariateValues::default();
        let eta = expected_log_time(&r, &a, &b, &zero, &zero, &CovariateCoeffs::default()).unwrap();
        assert!((eta.home - 3.97).abs() < 1e-12);
        assert!((eta.away - 4.09).abs() < 1e-12);

        let coeffs = CovariateCoeffs::new(Some(-0.36), None, Some(-0.10)).unwrap();
        let adv = CovariateValues { red: 1.0, dev: 0.0 };
        let with = expected_log_time(&r, &a, &b, &adv, &zero, &coeffs).unwrap();
        assert!((eta.home - with.home - 0.36).abs() < 1e-12);
        assert_eq!(eta.away, with.away);
    }

    #[test]
    fn eta_all_zero() {
        let r = ratings(0.0, 0.0);
        let (a, b) = (TeamId::new("A").unwrap(), TeamId::new("B").unwrap());
        let zero = CovariateValues::default();
        let eta = expected_log_time(&r, &a, &b, &zero, &zero, &CovariateCoeffs::default()).unwrap();
        assert_eq!((eta.home, eta.away), (0.0, 0.0));
    }

    #[test]
    fn eta_missing_team() {
        let r = ratings(4.0, 0.0);
        let err = expected_log_time(
            &r,
            &TeamId::new("A").unwrap(),
            &TeamId::new("Z").unwrap(),
            &CovariateValues::default(),
            &CovariateValues::default(),
            &CovariateCoeffs::default(),
        )
        .unwrap_err();
        assert_eq!(err.kind(), "missing-team");
    }

    #[test]
    fn coeffs_exclusive() {
        assert!(CovariateCoeffs::new(Some(-0.4), Some(-0.07), Some(-0.1)).is_err());
    }

    #[test]
    fn shape_resolution() {
        let s = ShapeSpec::ScoreState { leading: 0.943, tied: 1.044, trailing: 1.731 };
        assert_eq!(s.gamma_for(Half::Second, ScoreState::Trailing), 1.731);
        let h = ShapeSpec::reference_half_specific();
        assert_eq!(h.gamma_for(Half::Second, ScoreState::Leading), 1.395);
        assert!(ShapeSpec::Single { gamma: -1.0 }.validate().is_err());
    }
}
