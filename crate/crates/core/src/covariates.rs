//! In-play covariates: red-card difference and cumulative PSxG (or goals)
//! measured against a pooled linear baseline.

use serde::{Deserialize, Serialize};

use crate::aft::CovariateValues;
use crate::domain::{EventKind, Half, MatchTimeline, Side, TeamId, HALF_LENGTH};
use crate::error::{Error, Result};

/// Which cumulative statistic feeds the deviation covariate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatKind {
    Psxg,
    Goals,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CovariateMode {
    #[default]
    None,
    Goals,
    Psxg,
}

impl CovariateMode {
    pub fn stat(self) -> Option<StatKind> {
        match self {
            CovariateMode::None => None,
            CovariateMode::Goals => Some(StatKind::Goals),
            CovariateMode::Psxg => Some(StatKind::Psxg),
        }
    }
}

/// Feed minute `t` on the evaluation grid: minutes below 45 are first half,
/// 45 and later are second half (all first-half events already happened).
pub fn grid_half(t: f64) -> Half {
    if t < HALF_LENGTH {
        Half::First
    } else {
        Half::Second
    }
}

/// Whether an event at feed `(half, minute)` is visible when forecasting at
/// grid minute `at`: only events strictly before `at` count, and every
/// first-half event is visible once the second half is under way.
pub fn visible_at(half: Half, minute: f64, at: f64) -> bool {
    match (half, grid_half(at)) {
        (Half::First, Half::First) => minute < at,
        (Half::First, Half::Second) => true,
        (Half::Second, Half::First) => false,
        (Half::Second, Half::Second) => minute < at,
    }
}

fn stat_value(kind: StatKind, ev: &crate::domain::MatchEvent) -> f64 {
    match (kind, ev.kind) {
        (StatKind::Psxg, EventKind::Shot) => ev.psxg_value(),
        (StatKind::Goals, EventKind::Goal) => 1.0,
        _ => 0.0,
    }
}

/// Running total of `kind` for `team` over events at or before the play-clock
/// position `play` (strictly before when `inclusive` is false).
pub fn cumulative_stat_play(
    timeline: &MatchTimeline,
    team: &TeamId,
    kind: StatKind,
    play: f64,
    inclusive: bool,
) -> f64 {
    timeline
        .events
        .iter()
        .filter(|e| &e.team == team)
        .filter(|e| {
            let p = timeline.play_time(e.half, e.minute);
            if inclusive {
                p <= play
            } else {
                p < play
            }
        })
        .map(|e| stat_value(kind, e))
        .sum()
}

/// `S_k(t)`: PSxG summed over the team's shots up to feed minute `t`
/// (grid convention, see [`grid_half`]). Off-target shots add nothing.
pub fn cumulative_psxg(timeline: &MatchTimeline, team: &TeamId, t: f64) -> f64 {
    let play = timeline.play_time(grid_half(t), t);
    cumulative_stat_play(timeline, team, StatKind::Psxg, play, true)
}

/// Population mean trajectory `S̄(t) = slope·t + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub slope: f64,
    pub intercept: f64,
    pub n_points: usize,
}

pub type PsxgBaseline = Baseline;

impl Baseline {
    pub fn eval(&self, t: f64) -> f64 {
        self.slope * t + self.intercept
    }

    pub fn zero() -> Self {
        Baseline { slope: 0.0, intercept: 0.0, n_points: 0 }
    }
}

/// Last grid minute used for baseline regression.
pub const BASELINE_GRID_END: u32 = 90;

/// Ordinary least squares of `S_k(t)` on `t` over integer minutes 0..=90,
/// pooled across every team-match.
pub fn fit_baseline(matches: &[MatchTimeline], kind: StatKind) -> Result<Baseline> {
    if matches.is_empty() {
        return Err(Error::DegenerateBaseline("no training matches".into()));
    }
    if kind == StatKind::Psxg && !matches.iter().any(|m| m.events.iter().any(|e| e.kind == EventKind::Shot)) {
        return Err(Error::DegenerateBaseline("no shot data in training matches".into()));
    }
    let (mut n, mut sx, mut sy, mut sxx, mut sxy) = (0usize, 0.0, 0.0, 0.0, 0.0);
    for m in matches {
        for side in Side::BOTH {
            let team = m.team(side);
            for t in 0..=BASELINE_GRID_END {
                let t = t as f64;
                let play = m.play_time(grid_half(t), t);
                let y = cumulative_stat_play(m, team, kind, play, true);
                n += 1;
                sx += t;
                sy += y;
                sxx += t * t;
                sxy += t * y;
            }
        }
    }
    let nf = n as f64;
    let mx = sx / nf;
    let my = sy / nf;
    let var = sxx / nf - mx * mx;
    let cov = sxy / nf - mx * my;
    let slope = cov / var;
    Ok(Baseline { slope, intercept: my - slope * mx, n_points: n })
}

pub fn fit_psxg_baseline(matches: &[MatchTimeline]) -> Result<Baseline> {
    fit_baseline(matches, StatKind::Psxg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Breakpoint {
    /// Play-clock position from which these values hold.
    pub play: f64,
    pub half: Half,
    pub minute: f64,
    pub home: CovariateValues,
    pub away: CovariateValues,
}

impl Breakpoint {
    pub fn values(&self, side: Side) -> CovariateValues {
        match side {
            Side::Home => self.home,
            Side::Away => self.away,
        }
    }
}

/// Right-continuous piecewise-constant covariates for both teams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariatePath {
    pub mode: CovariateMode,
    pub breakpoints: Vec<Breakpoint>,
}

impl CovariatePath {
    /// All-zero covariates for the whole match.
    pub fn zero() -> Self {
        CovariatePath {
            mode: CovariateMode::None,
            breakpoints: vec![Breakpoint {
                play: 0.0,
                half: Half::First,
                minute: 0.0,
                home: CovariateValues::default(),
                away: CovariateValues::default(),
            }],
        }
    }

    fn index_at(&self, play: f64) -> usize {
        // breakpoints are sorted and the first sits at play 0
        self.breakpoints.partition_point(|b| b.play <= play).saturating_sub(1)
    }

    /// Values in force at `play` (those of the last breakpoint at or before it).
    pub fn value_at(&self, play: f64, side: Side) -> CovariateValues {
        self.breakpoints[self.index_at(play)].values(side)
    }

    /// Values frozen for a forecast at grid minute `at` (last visible breakpoint).
    pub fn visible_values(&self, at: f64) -> (CovariateValues, CovariateValues) {
        let i = self
            .breakpoints
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .find(|(_, b)| visible_at(b.half, b.minute, at))
            .map_or(0, |(i, _)| i);
        (self.breakpoints[i].home, self.breakpoints[i].away)
    }

    /// Constant pieces covering `(from, to]` as `(piece_end, values)`.
    pub fn pieces(&self, side: Side, from: f64, to: f64) -> Vec<(f64, CovariateValues)> {
        let mut out = Vec::new();
        let mut i = self.index_at(from);
        loop {
            let next = self.breakpoints.get(i + 1).map(|b| b.play);
            match next {
                Some(p) if p < to => {
                    if p > from {
                        out.push((p, self.breakpoints[i].values(side)));
                    }
                    i += 1;
                }
                _ => {
                    out.push((to, self.breakpoints[i].values(side)));
                    break;
                }
            }
        }
        out
    }
}

/// Builds the covariate path with breakpoints at kickoff and at every goal,
/// red card and shot. Deviations use the baseline at the breakpoint minute.
pub fn covariate_path(
    timeline: &MatchTimeline,
    baseline: Option<&Baseline>,
    mode: CovariateMode,
) -> Result<CovariatePath> {
    if mode == CovariateMode::None {
        return Ok(CovariatePath::zero());
    }
    let baseline =
        baseline.ok_or_else(|| Error::InvalidArgument(format!("covariate mode {mode:?} needs a fitted baseline")))?;
    let kind = mode.stat().expect("non-none mode");

    let mut reds = [0.0f64; 2];
    let mut stat = [0.0f64; 2];
    let snapshot = |reds: &[f64; 2], stat: &[f64; 2], half: Half, minute: f64, play: f64| {
        let base = baseline.eval(minute);
        Breakpoint {
            play,
            half,
            minute,
            home: CovariateValues { red: reds[1] - reds[0], dev: stat[0] - base },
            away: CovariateValues { red: reds[0] - reds[1], dev: stat[1] - base },
        }
    };

    let mut breakpoints = vec![snapshot(&reds, &stat, Half::First, 0.0, 0.0)];
    let events = &timeline.events;
    let mut i = 0;
    while i < events.len() {
        let (half, minute) = (events[i].half, events[i].minute);
        while i < events.len() && events[i].half == half && events[i].minute == minute {
            let ev = &events[i];
            let side = timeline.side_of(&ev.team).expect("validated timeline").index();
            if ev.kind == EventKind::RedCard {
                reds[side] += 1.0;
            }
            stat[side] += stat_value(kind, ev);
            i += 1;
        }
        let play = timeline.play_time(half, minute);
        breakpoints.push(snapshot(&reds, &stat, half, minute, play));
    }
    Ok(CovariatePath { mode, breakpoints })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::MatchEvent;
    use chrono::NaiveDate;

    fn team(s: &str) -> TeamId {
        TeamId::new(s).unwrap()
    }

    fn timeline(events: Vec<MatchEvent>) -> MatchTimeline {
        MatchTimeline::from_events(
            "m",
            NaiveDate::from_ymd_opt(2024, 5, 19).unwrap(),
            team("ARS"),
            team("EVE"),
            events,
            47.0,
            96.0,
        )
        .unwrap()
    }

    #[test]
    fn cumulative_sums() {
        let tl = timeline(vec![
            MatchEvent::shot(Half::First, 10.0, team("ARS"), 0.3),
            MatchEvent::shot(Half::First, 40.0, team("ARS"), 0.5),
            MatchEvent::shot(Half::First, 42.0, team("ARS"), 0.0),
        ]);
        assert_eq!(cumulative_psxg(&tl, &team("ARS"), 5.0), 0.0);
        assert!((cumulative_psxg(&tl, &team("ARS"), 20.0) - 0.3).abs() < 1e-12);
        assert!((cumulative_psxg(&tl, &team("ARS"), 50.0) - 0.8).abs() < 1e-12);
        assert_eq!(cumulative_psxg(&tl, &team("EVE"), 50.0), 0.0);
    }

    #[test]
    fn zero_psxg_baseline() {
        let tl = timeline(vec![MatchEvent::shot(Half::First, 10.0, team("ARS"), 0.0)]);
        let b = fit_psxg_baseline(&[tl]).unwrap();
        assert_eq!((b.slope, b.intercept), (0.0, 0.0));
        assert_eq!(b.n_points, 2 * 91);
    }

    #[test]
    fn baseline_requires_shots() {
        let tl = timeline(vec![]);
        assert_eq!(fit_psxg_baseline(&[tl]).unwrap_err().kind(), "degenerate-baseline");
    }

    #[test]
    fn red_card_path() {
        let tl = timeline(vec![MatchEvent::red_card(Half::First, 30.0, team("ARS"))]);
        let path = covariate_path(&tl, Some(&Baseline::zero()), CovariateMode::Psxg).unwrap();
        assert_eq!(path.value_at(29.9, Side::Home).red, 0.0);
        assert_eq!(path.value_at(30.0, Side::Home).red, -1.0);
        assert_eq!(path.value_at(30.0, Side::Away).red, 1.0);
        assert_eq!(path.value_at(80.0, Side::Away).red, 1.0);
    }

    #[test]
    fn no_events_single_segment() {
        let tl = timeline(vec![]);
        let path = covariate_path(&tl, Some(&Baseline::zero()), CovariateMode::Psxg).unwrap();
        assert_eq!(path.breakpoints.len(), 1);
        assert_eq!(path.pieces(Side::Home, 0.0, 98.0), vec![(98.0, CovariateValues::default())]);
    }

    #[test]
    fn mode_none_is_zero() {
        let tl = timeline(vec![
            MatchEvent::red_card(Half::First, 30.0, team("ARS")),
            MatchEvent::shot(Half::Second, 60.0, team("EVE"), 0.4),
        ]);
        let path = covariate_path(&tl, None, CovariateMode::None).unwrap();
        for t in [0.0, 31.0, 70.0] {
            assert_eq!(path.value_at(t, Side::Home), CovariateValues::default());
        }
    }

    #[test]
    fn deviation_above_baseline_when_pressing() {
        // heavy second-half pressure well above a low baseline
        let mut ev = vec![];
        for m in [50.0, 55.0, 60.0, 66.0, 70.0] {
            ev.push(MatchEvent::shot(Half::Second, m, team("ARS"), 0.35));
        }
        let tl = timeline(ev);
        let b = Baseline { slope: 0.012, intercept: 0.0, n_points: 1 };
        let path = covariate_path(&tl, Some(&b), CovariateMode::Psxg).unwrap();
        let p = tl.play_time(Half::Second, 75.0);
        assert!(path.value_at(p, Side::Home).dev > 0.0);
        assert!(path.value_at(p, Side::Away).dev < 0.0);
    }

    #[test]
    fn visibility_rule() {
        assert!(!visible_at(Half::First, 10.0, 10.0));
        assert!(visible_at(Half::First, 9.5, 10.0));
        assert!(visible_at(Half::First, 46.0, 45.0));
        assert!(!visible_at(Half::Second, 45.0, 45.0));
        assert!(visible_at(Half::Second, 45.0, 46.0));
        let tl = timeline(vec![
            MatchEvent::red_card(Half::First, 46.0, team("ARS")),
            MatchEvent::red_card(Half::Second, 50.0, team("EVE")),
        ]);
        let path = covariate_path(&tl, Some(&Baseline::zero()), CovariateMode::Psxg).unwrap();
        assert_eq!(path.visible_values(44.0).0.red, 0.0);
        assert_eq!(path.visible_values(45.0).0.red, -1.0);
        assert_eq!(path.visible_values(50.0).0.red, -1.0);
        assert_eq!(path.visible_values(51.0).0.red, 0.0);
    }

    #[test]
    fn pieces_split_at_breakpoints() {
        let tl = timeline(vec![
            MatchEvent::shot(Half::First, 10.0, team("ARS"), 0.2),
            MatchEvent::shot(Half::First, 20.0, team("EVE"), 0.1),
        ]);
        let path = covariate_path(&tl, Some(&Baseline::zero()), CovariateMode::Psxg).unwrap();
        let pieces = path.pieces(Side::Home, 5.0, 30.0);
        assert_eq!(pieces.iter().map(|p| p.0).collect::<Vec<_>>(), vec![10.0, 20.0, 30.0]);
        assert_eq!(pieces[0].1.dev, 0.0);
        assert!((pieces[1].1.dev - 0.2).abs() < 1e-12);
        let inner = path.pieces(Side::Home, 10.0, 15.0);
        assert_eq!(inner.len(), 1);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn red_difference_antisymmetric(cards in proptest::collection::vec((0.0f64..95.0, any::<bool>()), 0..6)) {
                let ev: Vec<MatchEvent> = cards
                    .iter()
                    .map(|&(m, home)| {
                        let (half, minute) = if m < 45.0 { (Half::First, m) } else { (Half::Second, m) };
                        MatchEvent::red_card(half, minute, team(if home { "ARS" } else { "EVE" }))
                    })
                    .collect();
                let tl = timeline(ev);
                let path = covariate_path(&tl, Some(&Baseline::zero()), CovariateMode::Goals).unwrap();
                for bp in &path.breakpoints {
                    prop_assert_eq!(bp.home.red + bp.away.red, 0.0);
                }
                for t in 0..100 {
                    let t = t as f64;
                    let i = path.breakpoints.iter().rposition(|b| b.play <= t).unwrap();
                    prop_assert_eq!(path.value_at(t, Side::Home), path.breakpoints[i].home);
                }
            }
        }
    }
}
