//! Synthetic league: a round-robin fixture list, matches drawn from the AFT
//! model and exchange prices derived from the generating model.

use std::collections::BTreeMap;

use chrono::{Days, NaiveDate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::SynthConfig;
use super::ingest::Dataset;
use super::match_seed;
use crate::aft::{expected_log_time, BoundaryMode, CovariateCoeffs, CovariateValues, RatingSet, ShapeSpec};
use crate::covariates::{covariate_path, Baseline, CovariateMode};
use crate::domain::{ForecastTriple, MarketSnapshot, MatchTimeline, OddsTriple, OverUnderOdds, TeamId, OU_THRESHOLDS};
use crate::error::{Error, Result};
use crate::simulator::{forecast, generate_match, GeneratorConfig, MatchState, SimConfig};

/// Generating parameters of a synthetic league.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTruth {
    pub ratings: RatingSet,
    pub shape: ShapeSpec,
    pub coeffs: CovariateCoeffs,
    pub baseline: Baseline,
}

impl SyntheticTruth {
    /// Reference parameter values with the given team ratings.
    pub fn reference(ratings: RatingSet) -> Self {
        let generator = GeneratorConfig::default();
        let mean_psxg = generator.psxg_alpha / (generator.psxg_alpha + generator.psxg_beta);
        SyntheticTruth {
            ratings,
            shape: ShapeSpec::reference_half_specific(),
            coeffs: CovariateCoeffs { beta_red: Some(-0.36), beta_goals: None, beta_psxg: Some(-0.10) },
            baseline: Baseline {
                slope: generator.shot_rate * generator.on_target * mean_psxg,
                intercept: 0.0,
                n_points: 0,
            },
        }
    }

    pub fn generator(&self) -> GeneratorConfig {
        GeneratorConfig {
            covariate_mode: CovariateMode::Psxg,
            baseline: Some(self.baseline),
            ..GeneratorConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticLeague {
    pub dataset: Dataset,
    pub truth: SyntheticTruth,
}

/// Double round robin by the circle method: `2 (n − 1)` gameweeks of
/// `(home, away)` index pairs, the second half mirroring the first.
pub fn round_robin(n: usize) -> Vec<Vec<(usize, usize)>> {
    let slots = n + n % 2;
    let mut ring: Vec<usize> = (0..slots).collect();
    let mut first = Vec::new();
    for r in 0..slots - 1 {
        let mut week = Vec::new();
        for i in 0..slots / 2 {
            let (a, b) = (ring[i], ring[slots - 1 - i]);
            if a < n && b < n {
                week.push(if (r + i) % 2 == 0 { (a, b) } else { (b, a) });
            }
        }
        first.push(week);
        ring[1..].rotate_right(1);
    }
    let second: Vec<Vec<(usize, usize)>> = first.iter().map(|w| w.iter().map(|&(h, a)| (a, h)).collect()).collect();
    first.into_iter().chain(second).collect()
}

fn team_name(i: usize) -> String {
    format!("Team{:02}", i + 1)
}

/// Ratings drawn from `N(0, sd²)` and centred to sum to zero.
pub fn draw_ratings(n: usize, sd: f64, seed: u64, as_of: NaiveDate) -> Result<RatingSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sd).map_err(|e| Error::InvalidArgument(format!("rating spread: {e}")))?;
    let mut draw = || {
        let v: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
        let mean = v.iter().sum::<f64>() / n as f64;
        v.into_iter().map(|x| x - mean).collect::<Vec<f64>>()
    };
    let (a, d) = (draw(), draw());
    let teams: Vec<TeamId> = (0..n).map(|i| TeamId::new(team_name(i))).collect::<Result<_>>()?;
    Ok(RatingSet {
        mu: 4.09,
        beta_home: -0.12,
        attack: teams.iter().cloned().zip(a).collect(),
        defence: teams.iter().cloned().zip(d).collect(),
        as_of,
        decay_xi: 0.0,
    })
}

fn decimal_odds(p: f64, margin: f64) -> f64 {
    (1.0 / (p.max(1e-3) * (1.0 + margin))).clamp(1.001, 1000.0)
}

fn one_x_two(p: &ForecastTriple, margin: f64) -> Result<OddsTriple> {
    let [h, d, a] = p.as_array().map(|q| decimal_odds(q, margin));
    OddsTriple::new(h, d, a)
}

/// Exchange prices implied by the generating model: a 1X2 price at every
/// minute through `floor(full_time) + lag` and kickoff over/under books.
pub fn synthetic_market(
    tl: &MatchTimeline,
    truth: &SyntheticTruth,
    n_paths: usize,
    margin: f64,
    lag: i64,
    seed: u64,
) -> Result<MarketSnapshot> {
    let path = covariate_path(tl, Some(&truth.baseline), CovariateMode::Psxg)?;
    let zero = CovariateValues::default();
    let base = expected_log_time(&truth.ratings, &tl.home, &tl.away, &zero, &zero, &CovariateCoeffs::default())?;
    let cfg = SimConfig::new(n_paths, seed);
    let mut market = MarketSnapshot::default();
    let last = tl.full_time.floor() as i64 + lag;
    for minute in 0..=last {
        let probs = if (minute as f64) <= tl.full_time {
            let state = MatchState::from_timeline(tl, minute as f64, &path, BoundaryMode::Reset)?;
            let eta = crate::aft::EtaPair::new(
                base.home + truth.coeffs.dot(&state.x_home),
                base.away + truth.coeffs.dot(&state.x_away),
            );
            let out = forecast(&state, eta, &truth.shape, &cfg)?;
            if minute == 0 {
                for (g, p) in OU_THRESHOLDS.iter().zip(out.over) {
                    let p = p.clamp(0.01, 0.99);
                    market.over_under.push(OverUnderOdds::new(
                        *g,
                        decimal_odds(p, margin).max(1.01),
                        decimal_odds(1.0 - p, margin).max(1.01),
                    )?);
                }
            }
            out.probs
        } else {
            ForecastTriple::certain(tl.outcome())
        };
        market.insert_price(minute, one_x_two(&probs, margin)?)?;
    }
    Ok(market)
}

/// Generates the league described by `cfg` with the given seed and lag.
pub fn synthesize(cfg: &SynthConfig, seed: u64, lag: i64) -> Result<SyntheticLeague> {
    let ratings = draw_ratings(cfg.teams, cfg.rating_sd, seed, cfg.start_date)?;
    let truth = SyntheticTruth::reference(ratings);
    let generator = truth.generator();
    let schedule = round_robin(cfg.teams);
    let mut fixtures = Vec::new();
    for round in 0..cfg.rounds {
        for (w, week) in schedule.iter().enumerate() {
            let gw = round * schedule.len() + w + 1;
            let date = cfg
                .start_date
                .checked_add_days(Days::new(7 * (gw as u64 - 1)))
                .ok_or_else(|| Error::InvalidDate("synthetic season runs past the calendar".into()))?;
            for (k, &(h, a)) in week.iter().enumerate() {
                fixtures.push((format!("S{gw:03}-{:02}", k + 1), gw, date, h, a));
            }
        }
    }
    let built: Vec<(MatchTimeline, MarketSnapshot)> = fixtures
        .par_iter()
        .map(|(id, gw, date, h, a)| {
            let s = match_seed(seed, id);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let (home, away) = (TeamId::new(team_name(*h))?, TeamId::new(team_name(*a))?);
            let tl = generate_match(
                &truth.ratings,
                &truth.shape,
                &truth.coeffs,
                &home,
                &away,
                id,
                *date,
                &generator,
                &mut rng,
            )?
            .with_gameweek(gw.to_string());
            let market = synthetic_market(&tl, &truth, cfg.market_paths, cfg.margin, lag, s)?;
            Ok((tl, market))
        })
        .collect::<Result<_>>()?;
    let mut markets = BTreeMap::new();
    let mut timelines = Vec::with_capacity(built.len());
    for (tl, m) in built {
        markets.insert(tl.match_id.clone(), m);
        timelines.push(tl);
    }
    timelines.sort_by(|a, b| (a.date, &a.match_id).cmp(&(b.date, &b.match_id)));
    Ok(SyntheticLeague { dataset: Dataset { timelines, markets, excluded: Vec::new(), warnings: Vec::new() }, truth })
}
