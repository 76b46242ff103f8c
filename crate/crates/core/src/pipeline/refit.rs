//! Gameweek partitioning and rolling refits: every evaluation gameweek gets
//! models fitted only on matches that precede it.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ModelFamily, RunConfig};
use super::ingest::Dataset;
use crate::aft::{
    fit_shape_and_covariates, fit_team_ratings, CovariateSpec, FitOptions, FitReport, RatingSet, ShapeFit,
};
use crate::covariates::{fit_baseline, Baseline, StatKind};
use crate::domain::{MatchTimeline, TeamId, HALF_LENGTH};
use crate::error::{Error, Result};
use crate::rival::{maia_fit, zou_fit, MaiaParams, ZouModel};
use crate::simulator::{DEFAULT_STOPPAGE_FIRST, DEFAULT_STOPPAGE_SECOND, REGULATION_END};

/// The match's gameweek label, or its ISO week (`2024-W07`) when absent.
pub fn gameweek_label(tl: &MatchTimeline) -> String {
    match &tl.gameweek {
        Some(g) => g.clone(),
        None => {
            let w = tl.date.iso_week();
            format!("{}-W{:02}", w.year(), w.week())
        }
    }
}

/// Numeric labels compare as numbers, anything else lexically.
pub fn compare_gameweeks(a: &str, b: &str) -> Ordering {
    match (a.parse::<i64>(), b.parse::<i64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        _ => a.cmp(b),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gameweek {
    pub label: String,
    pub first_date: NaiveDate,
    /// Indices into `Dataset::timelines`.
    pub matches: Vec<usize>,
}

/// Training/evaluation partition by gameweek.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    /// All gameweeks in order.
    pub gameweeks: Vec<Gameweek>,
    /// Index of the first evaluation gameweek.
    pub evaluation_start: usize,
    /// Evaluation matches with complete market coverage, in dataset order.
    pub evaluation: Vec<usize>,
    /// Evaluation-period matches left out, with the reason.
    pub flagged: Vec<(String, String)>,
}

impl Split {
    pub fn new(dataset: &Dataset, evaluation_from: Option<&str>, lag: i64) -> Result<Self> {
        let mut by_label: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, tl) in dataset.timelines.iter().enumerate() {
            by_label.entry(gameweek_label(tl)).or_default().push(i);
        }
        let mut gameweeks: Vec<Gameweek> = by_label
            .into_iter()
            .map(|(label, matches)| Gameweek {
                first_date: matches.iter().map(|&i| dataset.timelines[i].date).min().expect("non-empty gameweek"),
                label,
                matches,
            })
            .collect();
        gameweeks.sort_by(|a, b| compare_gameweeks(&a.label, &b.label));
        if gameweeks.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least two gameweeks to split, found {}",
                gameweeks.len()
            )));
        }
        let start = match evaluation_from {
            Some(label) => gameweeks
                .iter()
                .position(|g| compare_gameweeks(&g.label, label) != Ordering::Less)
                .ok_or_else(|| Error::Config(format!("no gameweek at or after '{label}'")))?,
            None => gameweeks.len() - gameweeks.len().div_ceil(10),
        };
        if start == 0 {
            return Err(Error::Config("evaluation starts at the first gameweek: nothing to train on".into()));
        }
        let mut evaluation = Vec::new();
        let mut flagged = Vec::new();
        for g in &gameweeks[start..] {
            for &i in &g.matches {
                let tl = &dataset.timelines[i];
                match dataset.coverage_gap(tl, lag) {
                    None => evaluation.push(i),
                    Some(reason) => flagged.push((tl.match_id.clone(), reason)),
                }
            }
        }
        evaluation.sort_unstable();
        Ok(Split { gameweeks, evaluation_start: start, evaluation, flagged })
    }

    pub fn evaluation_gameweeks(&self) -> &[Gameweek] {
        &self.gameweeks[self.evaluation_start..]
    }

    /// Matches available when fitting gameweek `gw`: from an earlier
    /// gameweek and played before the gameweek's first fixture.
    pub fn training_for(&self, dataset: &Dataset, gw: usize) -> Vec<usize> {
        let cutoff = self.gameweeks[gw].first_date;
        let mut out: Vec<usize> = self.gameweeks[..gw]
            .iter()
            .flat_map(|g| g.matches.iter().copied())
            .filter(|&i| dataset.timelines[i].date < cutoff)
            .collect();
        out.sort_unstable();
        out
    }

    /// Index of the gameweek containing a timeline.
    pub fn gameweek_of(&self, idx: usize) -> Option<usize> {
        self.gameweeks.iter().position(|g| g.matches.contains(&idx))
    }
}

/// Which model components a run needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FitPlan {
    pub weibull_base: bool,
    /// Covariate spec of the `_psi` Weibull variants, when selected.
    pub weibull_psi: Option<CovariateSpec>,
    pub zou: bool,
    pub maia: bool,
    pub maia_psi: bool,
}

impl FitPlan {
    pub fn from_config(cfg: &RunConfig) -> Self {
        let mut plan = FitPlan::default();
        for m in &cfg.models.select {
            match (m.family, m.psxg) {
                (ModelFamily::Weibull, false) => plan.weibull_base = true,
                (ModelFamily::Weibull, true) => plan.weibull_psi = Some(cfg.fit.covariates),
                (ModelFamily::Zou, _) => plan.zou = true,
                (ModelFamily::Maia, false) => plan.maia = true,
                (ModelFamily::Maia, true) => plan.maia_psi = true,
                (ModelFamily::Betfair, _) => {}
            }
        }
        plan
    }

    pub fn needs_ratings(&self) -> bool {
        self.weibull_base || self.weibull_psi.is_some()
    }
}

/// Second-stage fit together with the covariate baseline it was fitted with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateFit {
    pub spec: CovariateSpec,
    pub fit: ShapeFit,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<Baseline>,
}

/// Everything fitted for one evaluation gameweek.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameweekFit {
    pub gameweek: String,
    pub as_of: NaiveDate,
    pub n_training: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratings: Option<RatingSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratings_report: Option<FitReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<CovariateFit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<CovariateFit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zou: Option<ZouModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maia: Option<MaiaParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maia_psi: Option<MaiaParams>,
    /// Mean first- and second-half stoppage over the training window.
    pub window_stoppage: (f64, f64),
    pub warnings: Vec<String>,
}

/// Mean stoppage over the last `window` matches (the slice is date-ordered).
pub fn window_stoppage(training: &[MatchTimeline], window: usize) -> (f64, f64) {
    let tail = &training[training.len().saturating_sub(window)..];
    if tail.is_empty() {
        return (DEFAULT_STOPPAGE_FIRST, DEFAULT_STOPPAGE_SECOND);
    }
    let n = tail.len() as f64;
    (
        tail.iter().map(|t| t.first_half_end - HALF_LENGTH).sum::<f64>() / n,
        tail.iter().map(|t| t.full_time - REGULATION_END).sum::<f64>() / n,
    )
}

fn baseline_for(spec: CovariateSpec, training: &[MatchTimeline]) -> Result<Option<Baseline>> {
    Ok(match spec.deviation() {
        Some(kind) => Some(fit_baseline(training, kind)?),
        None if spec.has_red() => Some(Baseline::zero()),
        None => None,
    })
}

/// Fits every planned component on `training`, as of `as_of`. Teams in
/// `fixtures` without history get league-average strengths and a warning.
pub fn fit_components(
    training: &[MatchTimeline],
    fixtures: &[&MatchTimeline],
    as_of: NaiveDate,
    plan: &FitPlan,
    cfg: &RunConfig,
) -> Result<GameweekFit> {
    let mut out = GameweekFit {
        gameweek: String::new(),
        as_of,
        n_training: training.len(),
        ratings: None,
        ratings_report: None,
        base: None,
        psi: None,
        zou: None,
        maia: None,
        maia_psi: None,
        window_stoppage: window_stoppage(training, cfg.data.as_ref().map_or(240, |d| d.stoppage_window)),
        warnings: Vec::new(),
    };
    let mut teams: Vec<&TeamId> = fixtures.iter().flat_map(|t| [&t.home, &t.away]).collect();
    teams.sort();
    teams.dedup();

    if plan.needs_ratings() {
        let opts = FitOptions {
            xi: cfg.fit.xi,
            boundary: cfg.fit.boundary,
            shape_init: cfg.fit.shape.initial(),
            covariates: CovariateSpec::M0,
            weighted_stage2: cfg.fit.weighted_stage2,
            max_iter: cfg.fit.max_iter,
            ..FitOptions::default()
        };
        let (mut ratings, report) = fit_team_ratings(training, as_of, &opts)?;
        for t in &teams {
            if !ratings.attack.contains_key(*t) {
                ratings.attack.insert((*t).clone(), 0.0);
                ratings.defence.insert((*t).clone(), 0.0);
                out.warnings.push(format!("team {t} has no history: ratings start at 0"));
            }
        }
        let stage2 = |spec: CovariateSpec| -> Result<CovariateFit> {
            let baseline = baseline_for(spec, training)?;
            let opts = FitOptions {
                covariates: spec,
                psxg_baseline: baseline.filter(|_| spec.deviation() == Some(StatKind::Psxg)),
                goals_baseline: baseline.filter(|_| spec.deviation() == Some(StatKind::Goals)),
                ..opts.clone()
            };
            Ok(CovariateFit { spec, fit: fit_shape_and_covariates(training, &ratings, spec, &opts)?, baseline })
        };
        if plan.weibull_base {
            out.base = Some(stage2(CovariateSpec::M0)?);
        }
        if let Some(spec) = plan.weibull_psi {
            out.psi = Some(stage2(spec)?);
        }
        out.ratings = Some(ratings);
        out.ratings_report = Some(report);
    }

    if plan.zou {
        let mut z = zou_fit(training)?;
        let n = z.attack.len().max(1) as f64;
        let (ma, md) = (z.attack.values().sum::<f64>() / n, z.defence.values().sum::<f64>() / n);
        for t in &teams {
            if !z.attack.contains_key(*t) {
                z.attack.insert((*t).clone(), ma);
                z.defence.insert((*t).clone(), md);
                out.warnings.push(format!("team {t} has no history: Zou strengths set to the league mean"));
            }
        }
        out.zou = Some(z);
    }

    for (wanted, psxg) in [(plan.maia, false), (plan.maia_psi, true)] {
        if !wanted {
            continue;
        }
        let mut p = maia_fit(training, psxg)?;
        let geo = |m: &BTreeMap<TeamId, f64>| (m.values().map(|v| v.ln()).sum::<f64>() / m.len().max(1) as f64).exp();
        let (ga, gb) = (geo(&p.alpha), geo(&p.beta));
        for t in &teams {
            if !p.alpha.contains_key(*t) {
                p.alpha.insert((*t).clone(), ga);
                p.beta.insert((*t).clone(), gb);
                out.warnings.push(format!("team {t} has no history: Maia strengths set to the league mean"));
            }
        }
        if psxg {
            out.maia_psi = Some(p);
        } else {
            out.maia = Some(p);
        }
    }
    Ok(out)
}

/// Per-gameweek fits for every evaluation gameweek, in gameweek order.
pub fn rolling_refit(dataset: &Dataset, split: &Split, cfg: &RunConfig) -> Result<Vec<GameweekFit>> {
    let plan = FitPlan::from_config(cfg);
    (split.evaluation_start..split.gameweeks.len())
        .into_par_iter()
        .map(|gw| {
            let g = &split.gameweeks[gw];
            let training: Vec<MatchTimeline> =
                split.training_for(dataset, gw).into_iter().map(|i| dataset.timelines[i].clone()).collect();
            let fixtures: Vec<&MatchTimeline> = g.matches.iter().map(|&i| &dataset.timelines[i]).collect();
            let mut fit =
                fit_components(&training, &fixtures, g.first_date, &plan, cfg).map_err(|e| annotate(e, &g.label))?;
            fit.gameweek = g.label.clone();
            for w in &fit.warnings {
                tracing::warn!(gameweek = %g.label, "{w}");
            }
            Ok(fit)
        })
        .collect()
}

fn annotate(e: Error, gameweek: &str) -> Error {
    match e {
        Error::FitFailure { iterations, reason } => {
            Error::FitFailure { iterations, reason: format!("gameweek {gameweek}: {reason}") }
        }
        Error::InvalidArgument(m) => Error::InvalidArgument(format!("gameweek {gameweek}: {m}")),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::MatchEvent;

    fn tl(id: &str, date: (i32, u32, u32), gw: Option<&str>, home: &str, away: &str) -> MatchTimeline {
        let (h, a) = (TeamId::new(home).unwrap(), TeamId::new(away).unwrap());
        let ev = vec![MatchEvent::goal(crate::domain::Half::First, 20.0, h.clone())];
        let t = MatchTimeline::from_events(
            id,
            NaiveDate::from_ymd_opt(date.0, date.1, date.2).unwrap(),
            h,
            a,
            ev,
            46.0,
            94.0,
        )
        .unwrap();
        match gw {
            Some(g) => t.with_gameweek(g),
            None => t,
        }
    }

    fn dataset(timelines: Vec<MatchTimeline>) -> Dataset {
        Dataset { timelines, ..Dataset::default() }
    }

    #[test]
    fn numeric_labels_order_numerically() {
        assert_eq!(compare_gameweeks("9", "10"), Ordering::Less);
        assert_eq!(compare_gameweeks("2024-W09", "2024-W10"), Ordering::Less);
    }

    #[test]
    fn iso_week_fallback() {
        let t = tl("a", (2024, 2, 14), None, "A", "B");
        assert_eq!(gameweek_label(&t), "2024-W07");
    }

    #[test]
    fn training_excludes_current_and_later_gameweeks() {
        let ds = dataset(vec![
            tl("a", (2024, 1, 6), Some("1"), "A", "B"),
            tl("b", (2024, 1, 13), Some("2"), "B", "A"),
            // rescheduled gameweek-1 fixture played after gameweek 3 began
            tl("c", (2024, 1, 21), Some("1"), "C", "A"),
            tl("d", (2024, 1, 20), Some("3"), "A", "C"),
        ]);
        let split = Split::new(&ds, Some("3"), 2).unwrap();
        assert_eq!(split.evaluation_start, 2);
        let train = split.training_for(&ds, 2);
        let ids: Vec<&str> = train.iter().map(|&i| ds.timelines[i].match_id.as_str()).collect();
        assert_eq!(ids, vec!["a", "b"]);
        // no market data, so the evaluation match is flagged
        assert_eq!(split.flagged.len(), 1);
        assert!(split.evaluation.is_empty());
    }

    #[test]
    fn split_needs_training() {
        let ds = dataset(vec![tl("a", (2024, 1, 6), Some("1"), "A", "B"), tl("b", (2024, 1, 13), Some("2"), "B", "A")]);
        assert!(Split::new(&ds, Some("1"), 2).is_err());
        assert_eq!(Split::new(&ds, None, 2).unwrap().evaluation_start, 1);
    }

    #[test]
    fn window_means() {
        let ts = vec![tl("a", (2024, 1, 6), None, "A", "B"), tl("b", (2024, 1, 7), None, "A", "B")];
        assert_eq!(window_stoppage(&ts, 240), (1.0, 4.0));
        assert_eq!(window_stoppage(&[], 240), (DEFAULT_STOPPAGE_FIRST, DEFAULT_STOPPAGE_SECOND));
    }
}
