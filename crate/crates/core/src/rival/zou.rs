//! Birth process on the score lattice with a conjugate update of the
//! composite scoring rates as goals are observed.
//!
//! Intensities are piecewise constant: per-half rates, a home factor,
//! score-state factors and an inflation factor inside the injury windows
//! `[45, 45 + U1]` and `[90, 90 + U2]`. The lattice is solved exactly on each
//! constant piece by uniformization.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::glm_dropping_empty;
use crate::calibration::{calibration_loss, CalibrationTarget, POOR_FIT_LOSS};
use crate::domain::{ForecastTriple, Half, MatchTimeline, Side, TeamId, HALF_LENGTH, OU_THRESHOLDS};
use crate::error::{Error, Result};
use crate::optim::{powell_minimize, PowellOptions};
use crate::simulator::{MatchState, DEFAULT_STOPPAGE_FIRST, DEFAULT_STOPPAGE_SECOND, REGULATION_END, TOTAL_GOALS_CAP};

const START_CAP: u32 = 15;
const OVERFLOW_TOL: f64 = 1e-9;
const MAX_CAP: u32 = 240;

/// Posterior mean of a composite rate after `goals` observed against
/// `expected` prior goals, with prior strength `r`.
pub fn zou_posterior_update(theta0: f64, r: f64, goals: f64, expected: f64) -> f64 {
    (r + goals) / (r + expected) * theta0
}

/// Multiplicative intensity factors; a tied score is the reference state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZouMultipliers {
    pub home: f64,
    pub second_half: f64,
    pub leading: f64,
    pub trailing: f64,
    pub injury: f64,
}

impl ZouMultipliers {
    pub fn neutral() -> Self {
        ZouMultipliers { home: 1.0, second_half: 1.0, leading: 1.0, trailing: 1.0, injury: 1.0 }
    }

    fn as_array(&self) -> [f64; 5] {
        [self.home, self.second_half, self.leading, self.trailing, self.injury]
    }

    fn score_factor(&self, own: u32, other: u32) -> f64 {
        match own.cmp(&other) {
            std::cmp::Ordering::Greater => self.leading,
            std::cmp::Ordering::Equal => 1.0,
            std::cmp::Ordering::Less => self.trailing,
        }
    }
}

/// Per-match parameters: prior composite rates (goals per minute), factors,
/// injury-window lengths and prior strengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZouParams {
    pub theta01: f64,
    pub theta02: f64,
    pub multipliers: ZouMultipliers,
    pub stoppage_first: f64,
    pub stoppage_second: f64,
    pub r1: f64,
    pub r2: f64,
}

impl ZouParams {
    /// Builds parameters with `r1 = E_H(45)` and `r2 = E_A(45)`, where the
    /// first half includes its injury window.
    pub fn new(
        theta01: f64,
        theta02: f64,
        multipliers: ZouMultipliers,
        stoppage_first: f64,
        stoppage_second: f64,
    ) -> Result<Self> {
        let mut p = ZouParams { theta01, theta02, multipliers, stoppage_first, stoppage_second, r1: 0.0, r2: 0.0 };
        p.r1 = p.expected_goals(Side::Home, Half::Second, HALF_LENGTH);
        p.r2 = p.expected_goals(Side::Away, Half::Second, HALF_LENGTH);
        p.validate()?;
        Ok(p)
    }

    /// Same factors and windows with new prior rates (prior strengths follow).
    pub fn with_thetas(&self, theta01: f64, theta02: f64) -> Result<Self> {
        ZouParams::new(theta01, theta02, self.multipliers, self.stoppage_first, self.stoppage_second)
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [self.theta01, self.theta02];
        if rates.iter().chain(self.multipliers.as_array().iter()).any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument(format!("birth-process rates must be positive: {self:?}")));
        }
        if !(self.stoppage_first >= 0.0 && self.stoppage_second >= 0.0) {
            return Err(Error::InvalidArgument("injury windows must be non-negative".into()));
        }
        if !(self.r1 > 0.0 && self.r2 > 0.0) {
            return Err(Error::InvalidArgument("prior strengths must be positive".into()));
        }
        Ok(())
    }

    fn prior_rate(&self, side: Side) -> f64 {
        match side {
            Side::Home => self.theta01 * self.multipliers.home,
            Side::Away => self.theta02,
        }
    }

    /// Prior expected goals for `side` from kickoff to a match-clock reading,
    /// ignoring score-state factors.
    pub fn expected_goals(&self, side: Side, half: Half, minute: f64) -> f64 {
        let m = &self.multipliers;
        let clamp = |x: f64, hi: f64| x.clamp(0.0, hi);
        let first_full = HALF_LENGTH + m.injury * self.stoppage_first;
        let weighted = match half {
            Half::First => minute.min(HALF_LENGTH) + m.injury * clamp(minute - HALF_LENGTH, self.stoppage_first),
            Half::Second => {
                first_full
                    + m.second_half * clamp(minute.min(REGULATION_END) - HALF_LENGTH, HALF_LENGTH)
                    + m.second_half * m.injury * clamp(minute - REGULATION_END, self.stoppage_second)
            }
        };
        self.prior_rate(side) * weighted
    }

    /// Composite rates updated on the goals seen up to `state`.
    pub fn posterior(&self, state: &MatchState) -> (f64, f64) {
        let eh = self.expected_goals(Side::Home, state.half, state.minute);
        let ea = self.expected_goals(Side::Away, state.half, state.minute);
        (
            zou_posterior_update(self.theta01, self.r1, state.home_goals as f64, eh),
            zou_posterior_update(self.theta02, self.r2, state.away_goals as f64, ea),
        )
    }
}

/// Exact outcome and total-goals probabilities from the lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZouOutcome {
    pub probs: ForecastTriple,
    pub total_goals: [f64; TOTAL_GOALS_CAP + 1],
    pub over: [f64; 5],
    /// Goals per side at which the lattice was truncated.
    pub cap: u32,
    /// Mass that left the lattice through the cap.
    pub overflow: f64,
    /// Lattice mass after each propagation step (including overflow).
    pub step_mass: Vec<f64>,
}

/// A constant-intensity stretch of the remaining schedule.
#[derive(Debug, Clone, Copy)]
struct Segment {
    length: f64,
    second_half: bool,
    injury: bool,
}

fn remaining_segments(state: &MatchState, p: &ZouParams) -> Vec<Segment> {
    let mut out = Vec::new();
    let mut push = |length: f64, second_half, injury| {
        if length > 0.0 {
            out.push(Segment { length, second_half, injury });
        }
    };
    let m = state.minute;
    if state.half == Half::First {
        push(HALF_LENGTH - m, false, false);
        push(HALF_LENGTH + p.stoppage_first - m.max(HALF_LENGTH), false, true);
        push(HALF_LENGTH, true, false);
        push(p.stoppage_second, true, true);
    } else {
        push(REGULATION_END - m, true, false);
        push(REGULATION_END + p.stoppage_second - m.max(REGULATION_END), true, true);
    }
    out
}

/// Probability vector over `(home, away)` scores up to `cap`, plus a sink.
struct Lattice {
    cap: u32,
    p: Vec<f64>,
}

impl Lattice {
    fn new(cap: u32, home: u32, away: u32) -> Self {
        let n = (cap + 1) as usize;
        let mut p = vec![0.0; n * n + 1];
        p[home as usize * n + away as usize] = 1.0;
        Lattice { cap, p }
    }

    fn side(&self) -> usize {
        (self.cap + 1) as usize
    }

    fn sink(&self) -> usize {
        self.p.len() - 1
    }

    fn mass(&self) -> f64 {
        self.p.iter().sum()
    }

    /// Exact transition over `length` minutes with state-dependent rates.
    fn propagate(&mut self, length: f64, rates: impl Fn(u32, u32) -> (f64, f64)) {
        let n = self.side();
        let table: Vec<(f64, f64)> = (0..n * n).map(|k| rates((k / n) as u32, (k % n) as u32)).collect();
        let lam = table.iter().map(|(h, a)| h + a).fold(0.0, f64::max);
        if lam <= 0.0 || length <= 0.0 {
            return;
        }
        // keep each uniformized step's Poisson mean moderate
        let subs = (lam * length / 8.0).ceil().max(1.0) as usize;
        let x = lam * length / subs as f64;
        let sink = self.sink();
        let mut v = vec![0.0; self.p.len()];
        let mut next = vec![0.0; self.p.len()];
        let mut acc = vec![0.0; self.p.len()];
        for _ in 0..subs {
            v.copy_from_slice(&self.p);
            let mut w = (-x).exp();
            let mut cum = w;
            acc.iter_mut().zip(&v).for_each(|(a, b)| *a = w * b);
            let mut k = 0usize;
            while 1.0 - cum > 1e-17 && k < 400 {
                next.fill(0.0);
                next[sink] = v[sink];
                for i in 0..n {
                    for j in 0..n {
                        let s = i * n + j;
                        let mass = v[s];
                        if mass == 0.0 {
                            continue;
                        }
                        let (h, a) = table[s];
                        next[s] += mass * (1.0 - (h + a) / lam);
                        let ph = mass * h / lam;
                        let pa = mass * a / lam;
                        if i + 1 < n {
                            next[s + n] += ph;
                        } else {
                            next[sink] += ph;
                        }
                        if j + 1 < n {
                            next[s + 1] += pa;
                        } else {
                            next[sink] += pa;
                        }
                    }
                }
                std::mem::swap(&mut v, &mut next);
                k += 1;
                w *= x / k as f64;
                cum += w;
                acc.iter_mut().zip(&v).for_each(|(a, b)| *a += w * b);
            }
            // remaining Poisson tail goes to the last iterate
            let tail = (1.0 - cum).max(0.0);
            acc.iter_mut().zip(&v).for_each(|(a, b)| *a += tail * b);
            self.p.copy_from_slice(&acc);
        }
    }
}

fn solve(state: &MatchState, params: &ZouParams, cap: u32) -> (Lattice, Vec<f64>) {
    let (th1, th2) = params.posterior(state);
    let m = params.multipliers;
    let mut lat = Lattice::new(cap, state.home_goals, state.away_goals);
    let mut masses = Vec::new();
    for seg in remaining_segments(state, params) {
        let common = if seg.second_half { m.second_half } else { 1.0 } * if seg.injury { m.injury } else { 1.0 };
        lat.propagate(seg.length, |h, a| {
            (th1 * m.home * common * m.score_factor(h, a), th2 * common * m.score_factor(a, h))
        });
        masses.push(lat.mass());
    }
    (lat, masses)
}

/// Outcome probabilities by forward propagation of the score lattice.
/// The per-side cap starts at 15 goals above zero and doubles while more
/// than `1e-9` of the mass overflows.
pub fn zou_outcome_probs(state: &MatchState, params: &ZouParams) -> Result<ZouOutcome> {
    state.validate()?;
    params.validate()?;
    let mut cap = START_CAP.max(state.home_goals.max(state.away_goals) + START_CAP);
    loop {
        let (lat, step_mass) = solve(state, params, cap);
        let overflow = lat.p[lat.sink()];
        if overflow > OVERFLOW_TOL && cap < MAX_CAP {
            cap *= 2;
            continue;
        }
        if !overflow.is_finite() || overflow > OVERFLOW_TOL {
            return Err(Error::NumericOverflow(format!("score lattice overflow {overflow} at cap {cap}")));
        }
        let n = lat.side();
        let (mut home, mut draw, mut away) = (0.0, 0.0, 0.0);
        let mut totals = vec![0.0; 2 * n];
        for i in 0..n {
            for j in 0..n {
                let q = lat.p[i * n + j];
                match i.cmp(&j) {
                    std::cmp::Ordering::Greater => home += q,
                    std::cmp::Ordering::Equal => draw += q,
                    std::cmp::Ordering::Less => away += q,
                }
                totals[i + j] += q;
            }
        }
        let mut total_goals = [0.0; TOTAL_GOALS_CAP + 1];
        for (t, q) in totals.iter().enumerate() {
            total_goals[t.min(TOTAL_GOALS_CAP)] += q;
        }
        let mut over = [0.0; 5];
        for (k, g) in OU_THRESHOLDS.iter().enumerate() {
            over[k] = totals.iter().enumerate().filter(|(t, _)| *t as f64 > *g).map(|(_, q)| q).sum();
        }
        // overflowed mass is spread in proportion
        let kept = home + draw + away;
        let probs = ForecastTriple::new(home / kept, draw / kept, away / kept)?;
        return Ok(ZouOutcome { probs, total_goals, over, cap, overflow, step_mass });
    }
}

/// Team strengths and shared factors fitted by Poisson regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZouModel {
    pub intercept: f64,
    /// Log attack strength; the first team is the reference at zero.
    pub attack: BTreeMap<TeamId, f64>,
    /// Log defensive weakness; the first team is the reference at zero.
    pub defence: BTreeMap<TeamId, f64>,
    pub multipliers: ZouMultipliers,
    pub stoppage_first: f64,
    pub stoppage_second: f64,
    pub loglik: f64,
    pub n_matches: usize,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl ZouModel {
    /// Prior composite rates `α_H β_A` and `α_A β_H` for a fixture.
    pub fn params_for(&self, home: &TeamId, away: &TeamId) -> Result<ZouParams> {
        let get =
            |m: &BTreeMap<TeamId, f64>, t: &TeamId| m.get(t).copied().ok_or_else(|| Error::MissingTeam(t.to_string()));
        let th1 = (self.intercept + get(&self.attack, home)? + get(&self.defence, away)?).exp();
        let th2 = (self.intercept + get(&self.attack, away)? + get(&self.defence, home)?).exp();
        ZouParams::new(th1, th2, self.multipliers, self.stoppage_first, self.stoppage_second)
    }
}

struct ExposureRow {
    team: usize,
    opponent: usize,
    home: bool,
    second_half: bool,
    injury: bool,
    state: std::cmp::Ordering,
    exposure: f64,
    goals: f64,
}

fn exposure_rows(tl: &MatchTimeline, teams: &BTreeMap<TeamId, usize>, out: &mut Vec<ExposureRow>) -> Result<()> {
    let idx = |t: &TeamId| teams.get(t).copied().ok_or_else(|| Error::MissingTeam(t.to_string()));
    let (hi, ai) = (idx(&tl.home)?, idx(&tl.away)?);
    let goals: Vec<(Half, f64, Side)> =
        tl.goals().map(|g| (g.half, g.minute, tl.side_of(&g.team).unwrap_or(Side::Away))).collect();
    let halves =
        [(Half::First, 0.0, HALF_LENGTH, tl.first_half_end), (Half::Second, HALF_LENGTH, REGULATION_END, tl.full_time)];
    let mut score = [0u32; 2];
    for (half, start, reg_end, end) in halves {
        let mut cuts = vec![start, reg_end.min(end), end];
        cuts.extend(goals.iter().filter(|g| g.0 == half).map(|g| g.1.clamp(start, end)));
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b <= a {
                continue;
            }
            let first = a == start;
            let mut scored = [0.0; 2];
            for g in goals.iter().filter(|g| g.0 == half) {
                let inside = g.1 <= b && (g.1 > a || (first && g.1 <= a));
                if inside {
                    scored[g.2.index()] += 1.0;
                }
            }
            for side in Side::BOTH {
                let (team, opponent) = if side == Side::Home { (hi, ai) } else { (ai, hi) };
                let own = score[side.index()];
                let other = score[side.opponent().index()];
                out.push(ExposureRow {
                    team,
                    opponent,
                    home: side == Side::Home,
                    second_half: half == Half::Second,
                    injury: a >= reg_end,
                    state: own.cmp(&other),
                    exposure: b - a,
                    goals: scored[side.index()],
                });
            }
            score[0] += scored[0] as u32;
            score[1] += scored[1] as u32;
        }
    }
    Ok(())
}

/// Fits team strengths, factors and mean injury windows on training matches.
pub fn zou_fit(matches: &[MatchTimeline]) -> Result<ZouModel> {
    if matches.is_empty() {
        return Err(Error::InvalidArgument("no training matches".into()));
    }
    let mut teams = BTreeMap::new();
    for tl in matches {
        for t in [&tl.home, &tl.away] {
            let n = teams.len();
            teams.entry(t.clone()).or_insert(n);
        }
    }
    // stable alphabetical indices
    let names: Vec<TeamId> = teams.keys().cloned().collect();
    let teams: BTreeMap<TeamId, usize> = names.iter().cloned().enumerate().map(|(i, t)| (t, i)).collect();
    let nt = names.len();
    let mut raw = Vec::new();
    for tl in matches {
        exposure_rows(tl, &teams, &mut raw)?;
    }
    // intercept, attack 1.., defence 1.., home, half, leading, trailing, injury
    let p = 1 + 2 * (nt - 1) + 5;
    let fixed = 1 + 2 * (nt - 1);
    let mut rows = Vec::with_capacity(raw.len());
    let (mut y, mut e) = (Vec::with_capacity(raw.len()), Vec::with_capacity(raw.len()));
    for r in &raw {
        let mut x = vec![0.0; p];
        x[0] = 1.0;
        if r.team > 0 {
            x[r.team] = 1.0;
        }
        if r.opponent > 0 {
            x[nt - 1 + r.opponent] = 1.0;
        }
        x[fixed] = r.home as u8 as f64;
        x[fixed + 1] = r.second_half as u8 as f64;
        x[fixed + 2] = (r.state == std::cmp::Ordering::Greater) as u8 as f64;
        x[fixed + 3] = (r.state == std::cmp::Ordering::Less) as u8 as f64;
        x[fixed + 4] = r.injury as u8 as f64;
        rows.push(x);
        y.push(r.goals);
        e.push(r.exposure);
    }
    let fit = glm_dropping_empty(&rows, &y, &e)?;
    let mut warnings = Vec::new();
    if !fit.dropped.is_empty() {
        let msg = format!("birth-process regression dropped empty columns {:?}", fit.dropped);
        tracing::warn!("{msg}");
        warnings.push(msg);
    }
    let c = &fit.coef;
    let attack = names.iter().enumerate().map(|(i, t)| (t.clone(), if i == 0 { 0.0 } else { c[i] })).collect();
    let defence =
        names.iter().enumerate().map(|(i, t)| (t.clone(), if i == 0 { 0.0 } else { c[nt - 1 + i] })).collect();
    let multipliers = ZouMultipliers {
        home: c[fixed].exp(),
        second_half: c[fixed + 1].exp(),
        leading: c[fixed + 2].exp(),
        trailing: c[fixed + 3].exp(),
        injury: c[fixed + 4].exp(),
    };
    let n = matches.len() as f64;
    let mean = |f: &dyn Fn(&MatchTimeline) -> f64| matches.iter().map(f).sum::<f64>() / n;
    let stoppage_first = mean(&|tl| (tl.first_half_end - HALF_LENGTH).max(0.0));
    let stoppage_second = mean(&|tl| (tl.full_time - REGULATION_END).max(0.0));
    Ok(ZouModel {
        intercept: c[0],
        attack,
        defence,
        multipliers,
        stoppage_first: if stoppage_first > 0.0 { stoppage_first } else { DEFAULT_STOPPAGE_FIRST },
        stoppage_second: if stoppage_second > 0.0 { stoppage_second } else { DEFAULT_STOPPAGE_SECOND },
        loglik: fit.loglik,
        n_matches: matches.len(),
        warnings,
    })
}

/// Result of calibrating the prior rates to kickoff prices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZouCalibration {
    pub theta_init: (f64, f64),
    pub theta_kappa: (f64, f64),
    pub loss: f64,
    pub iterations: usize,
    pub poor_fit: bool,
}

/// Powell search over `(ln θ01, ln θ02)` on the exact kickoff objective.
pub fn zou_calibrate(init: &ZouParams, target: &CalibrationTarget) -> Result<(ZouParams, ZouCalibration)> {
    target.validate()?;
    init.validate()?;
    let kickoff = MatchState::kickoff();
    let mut failure = None;
    let f = |x: &[f64]| {
        let run = init.with_thetas(x[0].exp(), x[1].exp()).and_then(|p| zou_outcome_probs(&kickoff, &p));
        match run {
            Ok(out) => calibration_loss(&out.probs, &out.over, target),
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        }
    };
    let opts = PowellOptions { rel_tol: 1e-12, max_iter: 200, line_tol: 1e-9, initial_step: 0.1 };
    let res = powell_minimize(f, &[init.theta01.ln(), init.theta02.ln()], opts);
    if let Some(e) = failure {
        return Err(e);
    }
    let res = res?;
    let fitted = init.with_thetas(res.x[0].exp(), res.x[1].exp())?;
    let poor_fit = res.value > POOR_FIT_LOSS;
    if poor_fit {
        tracing::warn!(loss = res.value, "birth-process calibration loss above {POOR_FIT_LOSS}");
    }
    Ok((
        fitted,
        ZouCalibration {
            theta_init: (init.theta01, init.theta02),
            theta_kappa: (fitted.theta01, fitted.theta02),
            loss: res.value,
            iterations: res.iterations,
            poor_fit,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::tests::poisson_outcome;
    use proptest::prelude::*;

    fn plain(theta1: f64, theta2: f64) -> ZouParams {
        ZouParams::new(theta1, theta2, ZouMultipliers::neutral(), 3.0, 5.0).unwrap()
    }

    #[test]
    fn posterior_examples() {
        assert!((zou_posterior_update(0.02, 1.3, 0.0, 1.3) - 0.01).abs() < 1e-15);
        assert_eq!(zou_posterior_update(0.02, 1.3, 2.0, 2.0), 0.02);
        // r / (r + E) = 0.7
        let r = 1.4;
        let e = r / 0.7 - r;
        assert!((zou_posterior_update(1.0, r, 0.0, e) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn half_time_prior_strength() {
        let p = plain(0.015, 0.012);
        let ht = MatchState { minute: 45.0, half: Half::Second, ..MatchState::kickoff() };
        let (t1, t2) = p.posterior(&ht);
        assert!((t1 - 0.0075).abs() < 1e-15);
        assert!((t2 - 0.006).abs() < 1e-15);
        assert!((p.r1 - 0.015 * 48.0).abs() < 1e-12);
    }

    #[test]
    fn zero_intensity_keeps_score() {
        let p = plain(1e-300, 1e-300);
        let s = MatchState { minute: 60.0, half: Half::Second, ..MatchState::kickoff() };
        let out = zou_outcome_probs(&s, &p).unwrap();
        assert!((out.probs.draw() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_rates_symmetric_outcomes() {
        let p = ZouParams::new(
            0.014,
            0.014,
            ZouMultipliers { home: 1.0, second_half: 1.2, leading: 0.9, trailing: 1.15, injury: 1.4 },
            3.1,
            6.2,
        )
        .unwrap();
        let out = zou_outcome_probs(&MatchState::kickoff(), &p).unwrap();
        assert!((out.probs.home() - out.probs.away()).abs() < 1e-12, "{:?}", out);
    }

    #[test]
    fn matches_poisson_oracle() {
        let p = plain(0.016, 0.011);
        let out = zou_outcome_probs(&MatchState::kickoff(), &p).unwrap();
        let total = 45.0 + 3.0 + 45.0 + 5.0;
        let exact = poisson_outcome(0.016 * total, 0.011 * total);
        for (a, b) in out.probs.as_array().iter().zip(exact) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn in_play_matches_oracle() {
        let p = plain(0.016, 0.011);
        let s = MatchState { minute: 70.0, half: Half::Second, home_goals: 1, away_goals: 1, ..MatchState::kickoff() };
        let (t1, t2) = p.posterior(&s);
        let out = zou_outcome_probs(&s, &p).unwrap();
        let rem = 25.0;
        let exact = poisson_outcome(t1 * rem, t2 * rem);
        // shift by the current draw: oracle counts future goals only
        for (a, b) in out.probs.as_array().iter().zip(exact) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn cap_grows_for_high_rates() {
        let p = plain(0.3, 0.3);
        let out = zou_outcome_probs(&MatchState::kickoff(), &p).unwrap();
        assert!(out.cap > START_CAP);
        assert!(out.overflow <= OVERFLOW_TOL);
    }

    #[test]
    fn round_trip_calibration() {
        let truth = ZouParams::new(
            0.017,
            0.012,
            ZouMultipliers { home: 1.1, second_half: 1.15, leading: 0.95, trailing: 1.1, injury: 1.3 },
            3.1,
            6.2,
        )
        .unwrap();
        let out = zou_outcome_probs(&MatchState::kickoff(), &truth).unwrap();
        let target = CalibrationTarget::new(out.probs, out.over).unwrap();
        let start = truth.with_thetas(0.013, 0.015).unwrap();
        let (fitted, cal) = zou_calibrate(&start, &target).unwrap();
        assert!((fitted.theta01 - truth.theta01).abs() < 1e-4, "{cal:?}");
        assert!((fitted.theta02 - truth.theta02).abs() < 1e-4, "{cal:?}");
        assert!(cal.loss < 1e-10);
    }

    #[test]
    fn heavy_over_target_raises_rates() {
        let base = plain(0.013, 0.013);
        let mk = |over: [f64; 5]| CalibrationTarget::new(ForecastTriple::new(0.4, 0.3, 0.3).unwrap(), over).unwrap();
        let (hi, _) = zou_calibrate(&base, &mk([0.95, 0.85, 0.7, 0.5, 0.3])).unwrap();
        let (lo, _) = zou_calibrate(&base, &mk([0.85, 0.55, 0.3, 0.12, 0.04])).unwrap();
        assert!(hi.theta01 + hi.theta02 > lo.theta01 + lo.theta02);
    }

    #[test]
    fn serde_round_trip() {
        let p = plain(0.01, 0.02);
        let back: ZouParams = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(p, back);
    }

    proptest! {
        #[test]
        fn multiplier_monotone(r in 0.1f64..5.0, x in 0u32..6, e in 0.0f64..5.0, de in 0.01f64..2.0) {
            let base = zou_posterior_update(1.0, r, x as f64, e);
            prop_assert!(zou_posterior_update(1.0, r, x as f64 + 1.0, e) > base);
            prop_assert!(zou_posterior_update(1.0, r, x as f64, e + de) < base);
        }

        #[test]
        fn lattice_mass_conserved(
            t1 in 0.002f64..0.06, t2 in 0.002f64..0.06,
            lead in 0.5f64..1.5, trail in 0.5f64..1.5, inj in 0.5f64..2.0, minute in 0.0f64..94.0,
        ) {
            let p = ZouParams::new(t1, t2, ZouMultipliers { home: 1.1, second_half: 1.1, leading: lead, trailing: trail, injury: inj }, 3.0, 6.0).unwrap();
            let half = if minute < 45.0 { Half::First } else { Half::Second };
            let s = MatchState { minute, half, ..MatchState::kickoff() };
            let out = zou_outcome_probs(&s, &p).unwrap();
            for m in &out.step_mass {
                prop_assert!((m - 1.0).abs() < 1e-9);
            }
        }
    }
}
