//! Value types shared by every model: teams, match timelines, market prices
//! and outcome forecasts.
//!
//! Minutes follow the event-feed convention: first-half stoppage is recorded
//! as minutes past 45 with `half = 1`, and the second half restarts at 45.
//! Events are therefore ordered by `(half, minute)`. Likelihoods and the
//! synthetic generator work on a continuous *play clock* (see
//! [`MatchTimeline::play_time`]) that appends the second half to the end of
//! the first.

use std::collections::BTreeMap;
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Over/under thresholds quoted at kickoff.
pub const OU_THRESHOLDS: [f64; 5] = [0.5, 1.5, 2.5, 3.5, 4.5];

/// Regulation length of one half in minutes.
pub const HALF_LENGTH: f64 = 45.0;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct TeamId(String);

impl TeamId {
    pub fn new(name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        if name.trim().is_empty() {
            return Err(Error::InvalidArgument("team id must be non-empty".into()));
        }
        Ok(TeamId(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for TeamId {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        TeamId::new(s)
    }
}

impl From<TeamId> for String {
    fn from(t: TeamId) -> String {
        t.0
    }
}

impl fmt::Display for TeamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Home,
    Away,
}

impl Side {
    pub fn opponent(self) -> Side {
        match self {
            Side::Home => Side::Away,
            Side::Away => Side::Home,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Side::Home => 0,
            Side::Away => 1,
        }
    }

    pub const BOTH: [Side; 2] = [Side::Home, Side::Away];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Half {
    First,
    Second,
}

impl Half {
    pub fn number(self) -> u8 {
        match self {
            Half::First => 1,
            Half::Second => 2,
        }
    }
}

impl TryFrom<u8> for Half {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Half::First),
            2 => Ok(Half::Second),
            other => Err(Error::InvalidArgument(format!("half must be 1 or 2, got {other}"))),
        }
    }
}

impl From<Half> for u8 {
    fn from(h: Half) -> u8 {
        h.number()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Goal,
    RedCard,
    Shot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchEvent {
    pub minute: f64,
    pub half: Half,
    pub kind: EventKind,
    pub team: TeamId,
    /// Post-shot expected goals; present only for shots, zero when off target.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psxg: Option<f64>,
}

impl MatchEvent {
    pub fn goal(half: Half, minute: f64, team: TeamId) -> Self {
        MatchEvent { minute, half, kind: EventKind::Goal, team, psxg: None }
    }

    pub fn red_card(half: Half, minute: f64, team: TeamId) -> Self {
        MatchEvent { minute, half, kind: EventKind::RedCard, team, psxg: None }
    }

    pub fn shot(half: Half, minute: f64, team: TeamId, psxg: f64) -> Self {
        MatchEvent { minute, half, kind: EventKind::Shot, team, psxg: Some(psxg) }
    }

    fn order_key(&self) -> (Half, f64) {
        (self.half, self.minute)
    }

    /// Shot value; zero for every non-shot event.
    pub fn psxg_value(&self) -> f64 {
        self.psxg.unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchTimeline {
    pub match_id: String,
    pub date: NaiveDate,
    /// Official gameweek label when the source provides one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gameweek: Option<String>,
    pub home: TeamId,
    pub away: TeamId,
    pub events: Vec<MatchEvent>,
    pub first_half_end: f64,
    pub full_time: f64,
    pub final_score: (u32, u32),
}

impl MatchTimeline {
    /// Builds a validated timeline. Events are sorted by `(half, minute)`
    /// (stable, so same-minute events keep their input order).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        match_id: impl Into<String>,
        date: NaiveDate,
        home: TeamId,
        away: TeamId,
        mut events: Vec<MatchEvent>,
        first_half_end: f64,
        full_time: f64,
        final_score: (u32, u32),
    ) -> Result<Self> {
        events.sort_by(|a, b| a.order_key().partial_cmp(&b.order_key()).unwrap_or(std::cmp::Ordering::Equal));
        let tl = MatchTimeline {
            match_id: match_id.into(),
            date,
            gameweek: None,
            home,
            away,
            events,
            first_half_end,
            full_time,
            final_score,
        };
        tl.validate()?;
        Ok(tl)
    }

    /// Same as [`MatchTimeline::new`] but derives the final score from goal events.
    pub fn from_events(
        match_id: impl Into<String>,
        date: NaiveDate,
        home: TeamId,
        away: TeamId,
        events: Vec<MatchEvent>,
        first_half_end: f64,
        full_time: f64,
    ) -> Result<Self> {
        let h = events.iter().filter(|e| e.kind == EventKind::Goal && e.team == home).count() as u32;
        let a = events.iter().filter(|e| e.kind == EventKind::Goal && e.team == away).count() as u32;
        MatchTimeline::new(match_id, date, home, away, events, first_half_end, full_time, (h, a))
    }

    pub fn with_gameweek(mut self, gameweek: impl Into<String>) -> Self {
        self.gameweek = Some(gameweek.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(format!("match {}: {msg}", self.match_id)));
        if self.home == self.away {
            return bad("home and away teams are identical".into());
        }
        if !(self.first_half_end >= HALF_LENGTH) {
            return bad(format!("first_half_end {} < 45", self.first_half_end));
        }
        if !(self.full_time >= 2.0 * HALF_LENGTH) {
            return bad(format!("full_time {} < 90", self.full_time));
        }
        let mut last: Option<(Half, f64)> = None;
        let (mut home_goals, mut away_goals) = (0u32, 0u32);
        for ev in &self.events {
            if !(ev.minute >= 0.0) || !ev.minute.is_finite() {
                return bad(format!("event minute {} is not a finite non-negative number", ev.minute));
            }
            match ev.half {
                Half::First if ev.minute > self.first_half_end => {
                    return bad(format!(
                        "first-half event at {} after first_half_end {}",
                        ev.minute, self.first_half_end
                    ));
                }
                Half::Second if ev.minute < HALF_LENGTH || ev.minute > self.full_time => {
                    return bad(format!("second-half event at minute {} outside [45, {}]", ev.minute, self.full_time));
                }
                _ => {}
            }
            if let Some(prev) = last {
                if ev.order_key() < prev {
                    return bad("events are not ordered by (half, minute)".into());
                }
            }
            last = Some(ev.order_key());
            if ev.team != self.home && ev.team != self.away {
                return bad(format!("event team {} is not playing", ev.team));
            }
            match (ev.kind, ev.psxg) {
                (EventKind::Shot, Some(v)) if (0.0..=1.0).contains(&v) => {}
                (EventKind::Shot, _) => return bad("shot psxg must be in [0, 1]".into()),
                (_, Some(_)) => return bad("psxg is only allowed on shots".into()),
                _ => {}
            }
            if ev.kind == EventKind::Goal {
                if ev.team == self.home {
                    home_goals += 1;
                } else {
                    away_goals += 1;
                }
            }
        }
        if (home_goals, away_goals) != self.final_score {
            return bad(format!(
                "final score {:?} disagrees with goal events ({home_goals}, {away_goals})",
                self.final_score
            ));
        }
        Ok(())
    }

    pub fn side_of(&self, team: &TeamId) -> Option<Side> {
        if *team == self.home {
            Some(Side::Home)
        } else if *team == self.away {
            Some(Side::Away)
        } else {
            None
        }
    }

    pub fn team(&self, side: Side) -> &TeamId {
        match side {
            Side::Home => &self.home,
            Side::Away => &self.away,
        }
    }

    pub fn outcome(&self) -> Outcome {
        Outcome::from_score(self.final_score.0, self.final_score.1)
    }

    /// Continuous play-clock position of a feed `(half, minute)`.
    pub fn play_time(&self, half: Half, minute: f64) -> f64 {
        match half {
            Half::First => minute,
            Half::Second => self.first_half_end + (minute - HALF_LENGTH),
        }
    }

    /// Play-clock position of the final whistle.
    pub fn play_end(&self) -> f64 {
        self.play_time(Half::Second, self.full_time)
    }

    /// Maps a play-clock position back to the feed `(half, minute)`.
    pub fn feed_time(&self, play: f64) -> (Half, f64) {
        if play <= self.first_half_end {
            (Half::First, play)
        } else {
            (Half::Second, HALF_LENGTH + (play - self.first_half_end))
        }
    }

    pub fn goals(&self) -> impl Iterator<Item = &MatchEvent> {
        self.events.iter().filter(|e| e.kind == EventKind::Goal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    #[serde(rename = "H")]
    Home,
    #[serde(rename = "D")]
    Draw,
    #[serde(rename = "A")]
    Away,
}

impl Outcome {
    pub const ALL: [Outcome; 3] = [Outcome::Home, Outcome::Draw, Outcome::Away];

    pub fn from_score(home: u32, away: u32) -> Outcome {
        match home.cmp(&away) {
            std::cmp::Ordering::Greater => Outcome::Home,
            std::cmp::Ordering::Equal => Outcome::Draw,
            std::cmp::Ordering::Less => Outcome::Away,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Outcome::Home => 0,
            Outcome::Draw => 1,
            Outcome::Away => 2,
        }
    }

    pub fn letter(self) -> &'static str {
        match self {
            Outcome::Home => "H",
            Outcome::Draw => "D",
            Outcome::Away => "A",
        }
    }

    pub fn parse(s: &str) -> Result<Outcome> {
        match s.trim() {
            "H" | "h" | "home" => Ok(Outcome::Home),
            "D" | "d" | "draw" => Ok(Outcome::Draw),
            "A" | "a" | "away" => Ok(Outcome::Away),
            other => Err(Error::InvalidArgument(format!("unknown outcome {other:?}"))),
        }
    }
}

/// Home/draw/away probabilities summing to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTriple", into = "RawTriple")]
pub struct ForecastTriple {
    home: f64,
    draw: f64,
    away: f64,
}

#[derive(Serialize, Deserialize)]
struct RawTriple {
    home: f64,
    draw: f64,
    away: f64,
}

impl TryFrom<RawTriple> for ForecastTriple {
    type Error = Error;
    fn try_from(r: RawTriple) -> Result<Self> {
        ForecastTriple::new(r.home, r.draw, r.away)
    }
}

impl From<ForecastTriple> for RawTriple {
    fn from(f: ForecastTriple) -> Self {
        RawTriple { home: f.home, draw: f.draw, away: f.away }
    }
}

impl ForecastTriple {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(home: f64, draw: f64, away: f64) -> Result<Self> {
        for p in [home, draw, away] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!("probability {p} outside [0, 1]")));
            }
        }
        if ((home + draw + away) - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::InvalidArgument(format!("probabilities sum to {}, not 1", home + draw + away)));
        }
        Ok(ForecastTriple { home, draw, away })
    }

    /// Away probability is taken as the complement so the triple sums to one exactly.
    pub fn from_home_draw(home: f64, draw: f64) -> Result<Self> {
        let away = (1.0 - home - draw).max(0.0);
        ForecastTriple::new(home, draw, away)
    }

    pub fn from_counts(home: u64, draw: u64, total: u64) -> Self {
        let n = total as f64;
        let h = home as f64 / n;
        let d = draw as f64 / n;
        ForecastTriple { home: h, draw: d, away: (1.0 - h - d).max(0.0) }
    }

    pub fn uniform() -> Self {
        ForecastTriple { home: 1.0 / 3.0, draw: 1.0 / 3.0, away: 1.0 / 3.0 }
    }

    pub fn certain(outcome: Outcome) -> Self {
        let mut p = [0.0; 3];
        p[outcome.index()] = 1.0;
        ForecastTriple { home: p[0], draw: p[1], away: p[2] }
    }

    pub fn home(&self) -> f64 {
        self.home
    }
    pub fn draw(&self) -> f64 {
        self.draw
    }
    pub fn away(&self) -> f64 {
        self.away
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.home, self.draw, self.away]
    }

    pub fn prob(&self, outcome: Outcome) -> f64 {
        self.as_array()[outcome.index()]
    }

    /// Most likely outcome; ties resolve in home, draw, away order.
    pub fn argmax(&self) -> Outcome {
        let p = self.as_array();
        let mut best = 0;
        for i in 1..3 {
            if p[i] > p[best] {
                best = i;
            }
        }
        Outcome::ALL[best]
    }
}

/// Decimal odds for the three 1X2 outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OddsTriple {
    pub home: f64,
    pub draw: f64,
    pub away: f64,
}

impl OddsTriple {
    pub fn new(home: f64, draw: f64, away: f64) -> Result<Self> {
        let o = OddsTriple { home, draw, away };
        o.validate()?;
        Ok(o)
    }

    pub fn validate(&self) -> Result<()> {
        for o in self.as_array() {
            if !(o > 1.0) || !o.is_finite() {
                return Err(Error::InvalidOdds(format!("decimal odds must exceed 1.0, got {o}")));
            }
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.home, self.draw, self.away]
    }

    pub fn get(&self, outcome: Outcome) -> f64 {
        self.as_array()[outcome.index()]
    }
}

/// Normalised inverse decimal odds (overround removed proportionally).
pub fn implied_probabilities(odds: &OddsTriple) -> Result<ForecastTriple> {
    odds.validate()?;
    let inv = odds.as_array().map(|o| 1.0 / o);
    let total: f64 = inv.iter().sum();
    let home = inv[0] / total;
    let draw = inv[1] / total;
    ForecastTriple::from_home_draw(home, draw)
}

/// Two-sided over/under price at one total-goals threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverUnderOdds {
    pub threshold: f64,
    pub over: f64,
    pub under: f64,
}

impl OverUnderOdds {
    pub fn new(threshold: f64, over: f64, under: f64) -> Result<Self> {
        for o in [over, under] {
            if !(o > 1.0) || !o.is_finite() {
                return Err(Error::InvalidOdds(format!("decimal odds must exceed 1.0, got {o}")));
            }
        }
        Ok(OverUnderOdds { threshold, over, under })
    }

    /// Normalised over probability.
    pub fn p_over(&self) -> f64 {
        let (o, u) = (1.0 / self.over, 1.0 / self.under);
        o / (o + u)
    }
}

/// Exchange prices for one match: per-minute 1X2 and kickoff over/under.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MarketSnapshot {
    pub one_x_two: BTreeMap<i64, OddsTriple>,
    pub over_under: Vec<OverUnderOdds>,
}

impl MarketSnapshot {
    /// Default lag between an evaluation minute and the price used for it.
    pub const DEFAULT_LAG: i64 = 2;

    pub fn insert_price(&mut self, minute: i64, odds: OddsTriple) -> Result<()> {
        odds.validate()?;
        self.one_x_two.insert(minute, odds);
        Ok(())
    }

    /// Last-traded 1X2 odds recorded at `minute + lag`.
    pub fn price_at(&self, minute: i64, lag: i64) -> Result<OddsTriple> {
        let at = minute + lag;
        self.one_x_two.get(&at).copied().ok_or(Error::DataGap { minute: at })
    }

    pub fn implied_at(&self, minute: i64, lag: i64) -> Result<ForecastTriple> {
        implied_probabilities(&self.price_at(minute, lag)?)
    }

    /// Normalised P(total goals > g) for every threshold in [`OU_THRESHOLDS`].
    pub fn over_probabilities(&self) -> Result<[f64; 5]> {
        let mut out = [0.0; 5];
        for (i, g) in OU_THRESHOLDS.iter().enumerate() {
            let q = self
                .over_under
                .iter()
                .find(|q| (q.threshold - g).abs() < 1e-9)
                .ok_or_else(|| Error::InvalidArgument(format!("no over/under price at threshold {g}")))?;
            out[i] = q.p_over();
        }
        Ok(out)
    }

    /// True when every minute in `0..=last` has a 1X2 price.
    pub fn covers(&self, last: i64) -> bool {
        (0..=last).all(|m| self.one_x_two.contains_key(&m))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn team(s: &str) -> TeamId {
        TeamId::new(s).unwrap()
    }

    #[test]
    fn implied_no_overround() {
        let p = implied_probabilities(&OddsTriple::new(2.0, 3.0, 6.0).unwrap()).unwrap();
        assert!((p.home() - 0.5).abs() < 1e-12);
        assert!((p.draw() - 1.0 / 3.0).abs() < 1e-12);
        assert!((p.away() - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn implied_with_overround() {
        // raw inverse sum 31/30
        let p = implied_probabilities(&OddsTriple::new(2.0, 3.0, 5.0).unwrap()).unwrap();
        assert!((p.home() - 15.0 / 31.0).abs() < 1e-12);
        assert!((p.draw() - 10.0 / 31.0).abs() < 1e-12);
        assert!((p.away() - 6.0 / 31.0).abs() < 1e-12);
        assert!((p.home() - 0.4839).abs() < 1e-4);
        assert!((p.draw() - 0.3226).abs() < 1e-4);
        assert!((p.away() - 0.1935).abs() < 1e-4);
    }

    #[test]
    fn implied_heavy_favourite() {
        let p = implied_probabilities(&OddsTriple { home: 1.01, draw: 101.0, away: 101.0 }).unwrap();
        let raw = 1.0 / 1.01 + 2.0 / 101.0;
        assert!((p.home() - (1.0 / 1.01) / raw).abs() < 1e-12);
        assert!((p.home() - 0.9803).abs() < 1e-4);
        assert!((p.draw() - 0.0098).abs() < 1e-4);
        assert!((p.away() - 0.0098).abs() < 1e-4);
    }

    #[test]
    fn odds_at_or_below_one_rejected() {
        let err = implied_probabilities(&OddsTriple { home: 1.0, draw: 3.0, away: 4.0 }).unwrap_err();
        assert_eq!(err.kind(), "invalid-odds");
        assert!(OddsTriple::new(0.99, 3.0, 4.0).is_err());
    }

    #[test]
    fn price_lag_lookup() {
        let mut snap = MarketSnapshot::default();
        for m in 0..=12 {
            snap.insert_price(m, OddsTriple::new(2.0 + m as f64 * 0.01, 3.0, 4.0).unwrap()).unwrap();
        }
        assert_eq!(snap.price_at(10, 2).unwrap().home, 2.12);
        assert_eq!(snap.price_at(10, 0).unwrap().home, 2.10);
        assert_eq!(snap.price_at(11, 2).unwrap_err(), Error::DataGap { minute: 13 });
    }

    #[test]
    fn timeline_validation() {
        let d = NaiveDate::from_ymd_opt(2024, 5, 19).unwrap();
        let ev =
            vec![MatchEvent::goal(Half::Second, 47.2, team("B")), MatchEvent::shot(Half::First, 10.0, team("A"), 0.3)];
        let tl = MatchTimeline::from_events("m1", d, team("A"), team("B"), ev, 47.0, 95.0).unwrap();
        assert_eq!(tl.final_score, (0, 1));
        assert_eq!(tl.events[0].kind, EventKind::Shot);
        assert_eq!(tl.outcome(), Outcome::Away);
        assert!((tl.play_time(Half::Second, 47.2) - 49.2).abs() < 1e-12);
        assert_eq!(tl.feed_time(49.2).0, Half::Second);

        let wrong = MatchTimeline::new("m2", d, team("A"), team("B"), vec![], 47.0, 95.0, (1, 0));
        assert!(wrong.is_err());
        let short = MatchTimeline::new("m3", d, team("A"), team("B"), vec![], 44.0, 95.0, (0, 0));
        assert!(short.is_err());
        let bad_psxg = MatchTimeline::from_events(
            "m4",
            d,
            team("A"),
            team("B"),
            vec![MatchEvent {
                minute: 3.0,
                half: Half::First,
                kind: EventKind::Goal,
                team: team("A"),
                psxg: Some(0.2),
            }],
            45.0,
            90.0,
        );
        assert!(bad_psxg.is_err());
    }

    #[test]
    fn over_probabilities_normalised() {
        let snap = MarketSnapshot {
            one_x_two: BTreeMap::new(),
            over_under: OU_THRESHOLDS.iter().map(|&g| OverUnderOdds::new(g, 1.9, 1.9).unwrap()).collect(),
        };
        assert!(snap.over_probabilities().unwrap().iter().all(|p| (p - 0.5).abs() < 1e-12));
        assert!(MarketSnapshot::default().over_probabilities().is_err());
    }

    #[test]
    fn forecast_triple_rejects_bad_sum() {
        assert!(ForecastTriple::new(0.5, 0.5, 0.5).is_err());
        assert_eq!(ForecastTriple::certain(Outcome::Draw).argmax(), Outcome::Draw);
        assert_eq!(ForecastTriple::uniform().argmax(), Outcome::Home);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn implied_sums_to_one(h in 1.0001f64..200.0, d in 1.0001f64..200.0, a in 1.0001f64..200.0) {
                let p = implied_probabilities(&OddsTriple { home: h, draw: d, away: a }).unwrap();
                prop_assert!((p.home() + p.draw() + p.away() - 1.0).abs() < 1e-9);
            }

            #[test]
            fn implied_invariant_to_overround_scale(h in 1.05f64..20.0, d in 1.05f64..20.0, a in 1.05f64..20.0, c in 0.8f64..1.0) {
                // scaling every inverse price by c is dividing every price by c
                let p = implied_probabilities(&OddsTriple { home: h, draw: d, away: a }).unwrap();
                let q = implied_probabilities(&OddsTriple { home: h / c, draw: d / c, away: a / c }).unwrap();
                prop_assert!((p.home() - q.home()).abs() < 1e-12);
                prop_assert!((p.draw() - q.draw()).abs() < 1e-12);
            }
        }
    }
}
