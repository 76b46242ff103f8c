//! Cox-process goal model with dynamic regressors, a power-law red-card
//! process and Poisson stoppage regressions.
//!
//! Time runs on the match clock of each half (first half `0..45+U1`,
//! second half `45..90+U2`). Forward simulation uses competing exponential
//! clocks between events instead of thinning.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::glm_dropping_empty;
use crate::calibration::{calibration_loss, calibration_powell_options, CalibrationTarget, POOR_FIT_LOSS};
use crate::covariates::{fit_psxg_baseline, grid_half, visible_at, Baseline};
use crate::domain::{EventKind, Half, MatchEvent, MatchTimeline, Side, TeamId, HALF_LENGTH};
use crate::error::{Error, Result};
use crate::optim::powell_minimize;
use crate::simulator::{ForecastOutput, MatchState, SimConfig, UniformCache, UniformSource, REGULATION_END};

/// Uniforms cached per path for calibration.
const CACHED_DRAWS: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MaiaCoefficients {
    /// Home advantage on the log scale.
    pub delta: f64,
    pub xi_half: f64,
    pub xi_gd: f64,
    pub xi_rc: f64,
    pub xi_psxg: f64,
}

/// Per-team red-card intensity `scale · t^power` on the match clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RedCardProcess {
    pub scale: f64,
    pub power: f64,
}

impl RedCardProcess {
    fn cumulative(&self, from: f64, to: f64) -> f64 {
        if self.scale <= 0.0 {
            return 0.0;
        }
        let k = self.power + 1.0;
        self.scale / k * (to.powf(k) - from.powf(k))
    }

    /// Waiting time from `t` until the cumulative intensity grows by `target`.
    fn waiting_time(&self, t: f64, target: f64) -> f64 {
        if self.scale <= 0.0 {
            return f64::INFINITY;
        }
        let k = self.power + 1.0;
        (t.powf(k) + target * k / self.scale).powf(1.0 / k) - t
    }
}

/// Log-linear mean of a half's stoppage minutes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StoppageRegression {
    pub intercept: f64,
    pub red: f64,
    pub goals: f64,
    /// Only used after the second half: `|goal difference| ≤ 1` at minute 90.
    pub close: f64,
}

impl StoppageRegression {
    pub fn mean(&self, reds: u32, goals: u32, close: bool) -> f64 {
        (self.intercept + self.red * reds as f64 + self.goals * goals as f64 + if close { self.close } else { 0.0 })
            .exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaiaParams {
    /// Attack strengths `α`; the composite home rate is `α_H β_A`.
    pub alpha: BTreeMap<TeamId, f64>,
    pub beta: BTreeMap<TeamId, f64>,
    pub coefficients: MaiaCoefficients,
    pub red_cards: RedCardProcess,
    pub stoppage_first: StoppageRegression,
    pub stoppage_second: StoppageRegression,
    /// Population PSxG trajectory; `None` disables the PSxG regressor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psxg_baseline: Option<Baseline>,
    #[serde(default)]
    pub standard_errors: BTreeMap<String, f64>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl MaiaParams {
    pub fn validate(&self) -> Result<()> {
        if self.alpha.values().chain(self.beta.values()).any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument("team strengths must be positive".into()));
        }
        if !(self.red_cards.scale >= 0.0 && self.red_cards.power > -1.0) {
            return Err(Error::InvalidArgument(format!("invalid red-card process {:?}", self.red_cards)));
        }
        Ok(())
    }

    /// Composite rates `(α_H β_A, α_A β_H)` for a fixture.
    pub fn composites(&self, home: &TeamId, away: &TeamId) -> Result<(f64, f64)> {
        let get =
            |m: &BTreeMap<TeamId, f64>, t: &TeamId| m.get(t).copied().ok_or_else(|| Error::MissingTeam(t.to_string()));
        Ok((get(&self.alpha, home)? * get(&self.beta, away)?, get(&self.alpha, away)? * get(&self.beta, home)?))
    }
}

/// Regressors from one team's perspective.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Regressors {
    pub second_half: bool,
    /// Own goals minus opponent goals.
    pub goal_diff: f64,
    /// Opponent red cards minus own.
    pub red: f64,
    /// Cumulative PSxG minus the population baseline.
    pub dev: f64,
}

/// Goal intensity for `side` given its composite rate; the away side has no
/// home-advantage term.
pub fn maia_intensity(composite: f64, coefs: &MaiaCoefficients, side: Side, x: &Regressors) -> f64 {
    let home = if side == Side::Home { coefs.delta } else { 0.0 };
    let half = if x.second_half { coefs.xi_half } else { 0.0 };
    composite * (home + half + coefs.xi_gd * x.goal_diff + coefs.xi_rc * x.red + coefs.xi_psxg * x.dev).exp()
}

/// Forecast state: the match state plus the current half's event counts,
/// which drive the stoppage regressions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaiaState {
    pub state: MatchState,
    pub half_goals: u32,
    pub half_reds: u32,
}

impl From<MatchState> for MaiaState {
    fn from(state: MatchState) -> Self {
        let half_goals = if state.half == Half::First { state.home_goals + state.away_goals } else { 0 };
        let half_reds = if state.half == Half::First { state.x_home.red.abs() as u32 } else { 0 };
        MaiaState { state, half_goals, half_reds }
    }
}

impl MaiaState {
    /// State at grid minute `minute`, seeing only events strictly before it.
    pub fn from_timeline(tl: &MatchTimeline, minute: f64, baseline: Option<&Baseline>) -> Result<Self> {
        if !(minute >= 0.0 && minute <= tl.full_time) {
            return Err(Error::State(format!("minute {minute} outside match {}", tl.match_id)));
        }
        let half = grid_half(minute);
        let mut goals = [0u32; 2];
        let mut reds = [0u32; 2];
        let mut psxg = [0.0; 2];
        let (mut half_goals, mut half_reds) = (0, 0);
        for ev in tl.events.iter().filter(|e| visible_at(e.half, e.minute, minute)) {
            let i = tl.side_of(&ev.team).unwrap_or(Side::Away).index();
            let this_half = ev.half == half;
            match ev.kind {
                EventKind::Goal => {
                    goals[i] += 1;
                    half_goals += this_half as u32;
                }
                EventKind::RedCard => {
                    reds[i] += 1;
                    half_reds += this_half as u32;
                }
                EventKind::Shot => psxg[i] += ev.psxg_value(),
            }
        }
        let base = baseline.map_or(0.0, |b| b.eval(minute));
        let dev = |i: usize| if baseline.is_some() { psxg[i] - base } else { 0.0 };
        let x = |i: usize| crate::aft::CovariateValues { red: reds[1 - i] as f64 - reds[i] as f64, dev: dev(i) };
        let state = MatchState {
            minute,
            half,
            home_goals: goals[0],
            away_goals: goals[1],
            elapsed: 0.0,
            x_home: x(0),
            x_away: x(1),
        };
        Ok(MaiaState { state, half_goals, half_reds })
    }
}

/// An event produced while simulating a path.
#[derive(Debug, Clone, Copy, PartialEq)]
struct SimEvent {
    half: Half,
    minute: f64,
    kind: EventKind,
    side: Side,
}

struct PathState {
    goals: [u32; 2],
    red_adv_home: f64,
    half_goals: u32,
    half_reds: u32,
}

struct PathContext<'a> {
    params: &'a MaiaParams,
    composites: [f64; 2],
    dev: [f64; 2],
}

impl PathContext<'_> {
    fn rate(&self, side: Side, half: Half, st: &PathState) -> f64 {
        let i = side.index();
        let gd = st.goals[i] as f64 - st.goals[1 - i] as f64;
        let red = if side == Side::Home { st.red_adv_home } else { -st.red_adv_home };
        let x = Regressors { second_half: half == Half::Second, goal_diff: gd, red, dev: self.dev[i] };
        maia_intensity(self.composites[i], &self.params.coefficients, side, &x)
    }
}

fn exp_draw<S: UniformSource>(src: &mut S) -> f64 {
    -src.uniform().ln()
}

/// Poisson quantile from one uniform, so stoppage draws stay aligned.
fn poisson_quantile(mean: f64, u: f64) -> u32 {
    if !(mean > 0.0) {
        return 0;
    }
    let mut k = 0u32;
    let mut pmf = (-mean).exp();
    let mut cdf = pmf;
    let target = 1.0 - u;
    while cdf < target && k < 1000 {
        k += 1;
        pmf *= mean / k as f64;
        cdf += pmf;
    }
    k
}

fn run_segment<S: UniformSource>(
    ctx: &PathContext,
    half: Half,
    t: &mut f64,
    end: f64,
    st: &mut PathState,
    src: &mut S,
    mut log: Option<&mut Vec<SimEvent>>,
) {
    let reds = ctx.params.red_cards;
    while *t < end {
        let waits = [
            exp_draw(src) / ctx.rate(Side::Home, half, st),
            exp_draw(src) / ctx.rate(Side::Away, half, st),
            reds.waiting_time(*t, exp_draw(src)),
            reds.waiting_time(*t, exp_draw(src)),
        ];
        let (k, w) = waits
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |best, (k, w)| if w < best.1 { (k, w) } else { best });
        if !(*t + w < end) {
            *t = end;
            return;
        }
        *t += w;
        let side = if k % 2 == 0 { Side::Home } else { Side::Away };
        let kind = if k < 2 {
            st.goals[side.index()] += 1;
            st.half_goals += 1;
            EventKind::Goal
        } else {
            st.red_adv_home += if side == Side::Home { -1.0 } else { 1.0 };
            st.half_reds += 1;
            EventKind::RedCard
        };
        if let Some(l) = log.as_deref_mut() {
            l.push(SimEvent { half, minute: *t, kind, side });
        }
    }
}

/// Completes a path and returns the final score and the half ends used.
fn run_path<S: UniformSource>(
    ctx: &PathContext,
    start: &MaiaState,
    cfg: &SimConfig,
    src: &mut S,
    mut log: Option<&mut Vec<SimEvent>>,
) -> ((u32, u32), (f64, f64)) {
    let s = &start.state;
    let mut st = PathState {
        goals: [s.home_goals, s.away_goals],
        red_adv_home: s.x_home.red,
        half_goals: start.half_goals,
        half_reds: start.half_reds,
    };
    let mut t = s.minute;
    let p = ctx.params;
    let mut h1_end = HALF_LENGTH;
    if s.half == Half::First {
        run_segment(ctx, Half::First, &mut t, HALF_LENGTH, &mut st, src, log.as_deref_mut());
        let u = src.uniform();
        h1_end = match cfg.oracle {
            Some(o) => o.first_half_end,
            None => HALF_LENGTH + poisson_quantile(p.stoppage_first.mean(st.half_reds, st.half_goals, false), u) as f64,
        };
        run_segment(ctx, Half::First, &mut t, h1_end, &mut st, src, log.as_deref_mut());
        t = HALF_LENGTH;
        st.half_goals = 0;
        st.half_reds = 0;
    }
    run_segment(ctx, Half::Second, &mut t, REGULATION_END, &mut st, src, log.as_deref_mut());
    let u = src.uniform();
    let close = st.goals[0].abs_diff(st.goals[1]) <= 1;
    let end = match cfg.oracle {
        Some(o) => o.full_time,
        None => REGULATION_END + poisson_quantile(p.stoppage_second.mean(st.half_reds, st.half_goals, close), u) as f64,
    };
    run_segment(ctx, Half::Second, &mut t, end, &mut st, src, log);
    ((st.goals[0], st.goals[1]), (h1_end, end))
}

fn check(state: &MaiaState, params: &MaiaParams, composites: (f64, f64), cfg: &SimConfig) -> Result<()> {
    state.state.validate()?;
    params.validate()?;
    cfg.validate()?;
    if !(composites.0 > 0.0 && composites.1 > 0.0 && composites.0.is_finite() && composites.1.is_finite()) {
        return Err(Error::InvalidArgument(format!("composite rates must be positive, got {composites:?}")));
    }
    Ok(())
}

fn context<'a>(state: &MaiaState, params: &'a MaiaParams, composites: (f64, f64)) -> PathContext<'a> {
    let dev = if params.psxg_baseline.is_some() { [state.state.x_home.dev, state.state.x_away.dev] } else { [0.0; 2] };
    PathContext { params, composites: [composites.0, composites.1], dev }
}

/// Monte Carlo forecast; PSxG deviations stay frozen at their current values.
pub fn maia_forecast(
    state: &MaiaState,
    params: &MaiaParams,
    composites: (f64, f64),
    cfg: &SimConfig,
) -> Result<ForecastOutput> {
    check(state, params, composites, cfg)?;
    let ctx = context(state, params, composites);
    Ok(ForecastOutput::from_scores((0..cfg.n_paths).map(|p| {
        let mut src = crate::simulator::PathStream::new(cfg.seed, p as u64);
        run_path(&ctx, state, cfg, &mut src, None).0
    })))
}

fn forecast_cached(
    state: &MaiaState,
    params: &MaiaParams,
    composites: (f64, f64),
    cfg: &SimConfig,
    cache: &UniformCache,
) -> Result<ForecastOutput> {
    check(state, params, composites, cfg)?;
    let ctx = context(state, params, composites);
    Ok(ForecastOutput::from_scores((0..cfg.n_paths).map(|p| run_path(&ctx, state, cfg, &mut cache.stream(p), None).0)))
}

struct RngSource<'a, R>(&'a mut R);

impl<R: Rng> UniformSource for RngSource<'_, R> {
    fn uniform(&mut self) -> f64 {
        1.0 - self.0.random::<f64>()
    }
}

/// Simulates a full match (goals, red cards, stoppage) from the model.
pub fn maia_generate_match<R: Rng>(
    params: &MaiaParams,
    home: &TeamId,
    away: &TeamId,
    match_id: &str,
    date: NaiveDate,
    rng: &mut R,
) -> Result<MatchTimeline> {
    let composites = params.composites(home, away)?;
    let start = MaiaState::from(MatchState::kickoff());
    let cfg = SimConfig::new(1, 0);
    check(&start, params, composites, &cfg)?;
    let mut no_psxg = params.clone();
    no_psxg.psxg_baseline = None;
    let ctx = context(&start, &no_psxg, composites);
    let mut log = Vec::new();
    let (_, (h1_end, end)) = run_path(&ctx, &start, &cfg, &mut RngSource(rng), Some(&mut log));
    let events = log
        .into_iter()
        .map(|e| {
            let team = if e.side == Side::Home { home.clone() } else { away.clone() };
            match e.kind {
                EventKind::Goal => MatchEvent::goal(e.half, e.minute, team),
                _ => MatchEvent::red_card(e.half, e.minute, team),
            }
        })
        .collect();
    MatchTimeline::from_events(match_id, date, home.clone(), away.clone(), events, h1_end, end)
}

/// Calibrated composite rates at kickoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaiaCalibration {
    pub composite_init: (f64, f64),
    pub composite_kappa: (f64, f64),
    pub loss: f64,
    pub iterations: usize,
    pub poor_fit: bool,
}

/// Powell search over log composite rates with common random numbers.
pub fn maia_calibrate(
    params: &MaiaParams,
    init: (f64, f64),
    target: &CalibrationTarget,
    cfg: &SimConfig,
) -> Result<MaiaCalibration> {
    target.validate()?;
    let kickoff = MaiaState::from(MatchState::kickoff());
    check(&kickoff, params, init, cfg)?;
    let cache = UniformCache::new(cfg.seed, cfg.n_paths, CACHED_DRAWS);
    let mut failure = None;
    let f = |x: &[f64]| match forecast_cached(&kickoff, params, (x[0].exp(), x[1].exp()), cfg, &cache) {
        Ok(out) => calibration_loss(&out.probs, &out.over, target),
        Err(e) => {
            failure.get_or_insert(e);
            f64::NAN
        }
    };
    let res = powell_minimize(f, &[init.0.ln(), init.1.ln()], calibration_powell_options());
    if let Some(e) = failure {
        return Err(e);
    }
    let res = res?;
    let poor_fit = res.value > POOR_FIT_LOSS;
    if poor_fit {
        tracing::warn!(loss = res.value, "Cox-process calibration loss above {POOR_FIT_LOSS}");
    }
    Ok(MaiaCalibration {
        composite_init: init,
        composite_kappa: (res.x[0].exp(), res.x[1].exp()),
        loss: res.value,
        iterations: res.iterations,
        poor_fit,
    })
}

/// Per-half running totals used by the fit.
#[derive(Default, Clone, Copy)]
struct Tally {
    goals: [u32; 2],
    reds: [u32; 2],
    psxg: [f64; 2],
}

impl Tally {
    fn add(&mut self, tl: &MatchTimeline, ev: &MatchEvent) {
        let i = tl.side_of(&ev.team).unwrap_or(Side::Away).index();
        match ev.kind {
            EventKind::Goal => self.goals[i] += 1,
            EventKind::RedCard => self.reds[i] += 1,
            EventKind::Shot => self.psxg[i] += ev.psxg_value(),
        }
    }
}

struct GoalRow {
    side: Side,
    second_half: bool,
    x: Regressors,
    exposure: f64,
    goals: f64,
}

/// Constant-regressor pieces of one match, per side.
fn goal_rows(tl: &MatchTimeline, baseline: Option<&Baseline>) -> Vec<GoalRow> {
    let mut out = Vec::new();
    let mut tally = Tally::default();
    for (half, start, end) in [(Half::First, 0.0, tl.first_half_end), (Half::Second, HALF_LENGTH, tl.full_time)] {
        let evs: Vec<&MatchEvent> = tl.events.iter().filter(|e| e.half == half).collect();
        let mut cuts = vec![start, end];
        cuts.extend(evs.iter().map(|e| e.minute.clamp(start, end)));
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut next = 0;
        for (w, win) in cuts.windows(2).enumerate() {
            let (a, b) = (win[0], win[1]);
            let base = baseline.map_or(0.0, |bl| bl.eval(a));
            let mut scored = [0.0; 2];
            let mut inside = Vec::new();
            while next < evs.len() && (evs[next].minute <= b || w + 2 == cuts.len()) {
                inside.push(evs[next]);
                next += 1;
            }
            for ev in &inside {
                if ev.kind == EventKind::Goal {
                    scored[tl.side_of(&ev.team).unwrap_or(Side::Away).index()] += 1.0;
                }
            }
            for side in Side::BOTH {
                let i = side.index();
                out.push(GoalRow {
                    side,
                    second_half: half == Half::Second,
                    x: Regressors {
                        second_half: half == Half::Second,
                        goal_diff: tally.goals[i] as f64 - tally.goals[1 - i] as f64,
                        red: tally.reds[1 - i] as f64 - tally.reds[i] as f64,
                        dev: if baseline.is_some() { tally.psxg[i] - base } else { 0.0 },
                    },
                    exposure: b - a,
                    goals: scored[i],
                });
            }
            for ev in inside {
                tally.add(tl, ev);
            }
        }
    }
    out
}

/// Red-card times and exposure windows; the scale is profiled out and the
/// power found by golden-section search.
fn fit_red_cards(matches: &[MatchTimeline]) -> Option<RedCardProcess> {
    let mut times = Vec::new();
    let mut windows = Vec::new();
    for tl in matches {
        windows.push((0.0, tl.first_half_end));
        windows.push((HALF_LENGTH, tl.full_time));
        times.extend(tl.events.iter().filter(|e| e.kind == EventKind::RedCard).map(|e| e.minute.max(1e-3)));
    }
    if times.is_empty() {
        return None;
    }
    let n = times.len() as f64;
    let sum_ln: f64 = times.iter().map(|t| t.ln()).sum();
    // two teams share each window
    let exposure = |b: f64| {
        2.0 * windows.iter().map(|&(lo, hi)| RedCardProcess { scale: 1.0, power: b }.cumulative(lo, hi)).sum::<f64>()
    };
    let profile = |b: f64| {
        let a = n / exposure(b);
        n * a.ln() + b * sum_ln - n
    };
    let (mut lo, mut hi) = (-0.95f64, 6.0f64);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (profile(x1), profile(x2));
    while hi - lo > 1e-8 {
        if f1 > f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = profile(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = profile(x2);
        }
    }
    let power = 0.5 * (lo + hi);
    Some(RedCardProcess { scale: n / exposure(power), power })
}

fn fit_stoppage(rows: &[(Vec<f64>, f64)], names: &[&str], warnings: &mut Vec<String>) -> Result<(Vec<f64>, Vec<f64>)> {
    let y: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let p = names.len();
    if y.iter().all(|v| *v <= 0.0) {
        warnings.push(format!("no stoppage recorded for {}; stoppage fixed at zero", names[0]));
        let mut coef = vec![0.0; p];
        coef[0] = -50.0;
        return Ok((coef, vec![0.0; p]));
    }
    let x: Vec<Vec<f64>> = rows.iter().map(|r| r.0.clone()).collect();
    let fit = glm_dropping_empty(&x, &y, &vec![1.0; y.len()])?;
    Ok((fit.coef, fit.se))
}

/// Joint fit of the goal, red-card and stoppage processes. With
/// `use_psxg` the PSxG regressor uses a baseline fitted on the same matches.
pub fn maia_fit(matches: &[MatchTimeline], use_psxg: bool) -> Result<MaiaParams> {
    if matches.is_empty() {
        return Err(Error::InvalidArgument("no training matches".into()));
    }
    let mut warnings = Vec::new();
    let baseline = if use_psxg { Some(fit_psxg_baseline(matches)?) } else { None };
    let names: Vec<TeamId> = {
        let mut s: Vec<TeamId> = matches.iter().flat_map(|m| [m.home.clone(), m.away.clone()]).collect();
        s.sort();
        s.dedup();
        s
    };
    let index: BTreeMap<&TeamId, usize> = names.iter().enumerate().map(|(i, t)| (t, i)).collect();
    let nt = names.len();
    let fixed = 1 + 2 * (nt - 1);
    let p = fixed + 5;
    let (mut rows, mut y, mut e) = (Vec::new(), Vec::new(), Vec::new());
    for tl in matches {
        for r in goal_rows(tl, baseline.as_ref()) {
            let (team, opp) = match r.side {
                Side::Home => (index[&tl.home], index[&tl.away]),
                Side::Away => (index[&tl.away], index[&tl.home]),
            };
            let mut x = vec![0.0; p];
            x[0] = 1.0;
            if team > 0 {
                x[team] = 1.0;
            }
            if opp > 0 {
                x[nt - 1 + opp] = 1.0;
            }
            x[fixed] = (r.side == Side::Home) as u8 as f64;
            x[fixed + 1] = r.second_half as u8 as f64;
            x[fixed + 2] = r.x.goal_diff;
            x[fixed + 3] = r.x.red;
            x[fixed + 4] = r.x.dev;
            rows.push(x);
            y.push(r.goals);
            e.push(r.exposure);
        }
    }
    let fit = glm_dropping_empty(&rows, &y, &e)?;
    if fit.dropped.contains(&(fixed + 3)) {
        let msg = "no red cards in training data; xi_rc fixed at 0".to_string();
        tracing::warn!("{msg}");
        warnings.push(msg);
    }
    let c = &fit.coef;
    let alpha =
        names.iter().enumerate().map(|(i, t)| (t.clone(), (c[0] + if i == 0 { 0.0 } else { c[i] }).exp())).collect();
    let beta =
        names.iter().enumerate().map(|(i, t)| (t.clone(), if i == 0 { 1.0 } else { c[nt - 1 + i].exp() })).collect();
    let coefficients = MaiaCoefficients {
        delta: c[fixed],
        xi_half: c[fixed + 1],
        xi_gd: c[fixed + 2],
        xi_rc: c[fixed + 3],
        xi_psxg: c[fixed + 4],
    };
    let mut standard_errors = BTreeMap::new();
    for (k, name) in ["delta", "xi_half", "xi_gd", "xi_rc", "xi_psxg"].iter().enumerate() {
        standard_errors.insert(name.to_string(), fit.se[fixed + k]);
    }

    let red_cards = fit_red_cards(matches).unwrap_or_else(|| {
        warnings.push("no red cards in training data; red-card process disabled".into());
        RedCardProcess { scale: 0.0, power: 0.0 }
    });

    let half_counts = |tl: &MatchTimeline, half: Half, upto: f64| {
        let mut t = Tally::default();
        for ev in tl.events.iter().filter(|e| e.half == half && e.minute <= upto) {
            t.add(tl, ev);
        }
        t
    };
    let mut first = Vec::new();
    let mut second = Vec::new();
    for tl in matches {
        let t1 = half_counts(tl, Half::First, HALF_LENGTH);
        first.push((
            vec![1.0, (t1.reds[0] + t1.reds[1]) as f64, (t1.goals[0] + t1.goals[1]) as f64],
            (tl.first_half_end - HALF_LENGTH).max(0.0),
        ));
        let t2 = half_counts(tl, Half::Second, REGULATION_END);
        let full = half_counts(tl, Half::First, f64::INFINITY);
        let gd = (full.goals[0] + t2.goals[0]) as i64 - (full.goals[1] + t2.goals[1]) as i64;
        second.push((
            vec![
                1.0,
                (t2.reds[0] + t2.reds[1]) as f64,
                (t2.goals[0] + t2.goals[1]) as f64,
                (gd.abs() <= 1) as u8 as f64,
            ],
            (tl.full_time - REGULATION_END).max(0.0),
        ));
    }
    let (s1, se1) = fit_stoppage(&first, &["first-half stoppage", "red", "goals"], &mut warnings)?;
    let (s2, se2) = fit_stoppage(&second, &["second-half stoppage", "red", "goals", "close"], &mut warnings)?;
    for (name, v) in [
        ("stoppage1_red", se1[1]),
        ("stoppage1_goals", se1[2]),
        ("stoppage2_red", se2[1]),
        ("stoppage2_goals", se2[2]),
        ("stoppage2_close", se2[3]),
    ] {
        standard_errors.insert(name.into(), v);
    }
    Ok(MaiaParams {
        alpha,
        beta,
        coefficients,
        red_cards,
        stoppage_first: StoppageRegression { intercept: s1[0], red: s1[1], goals: s1[2], close: 0.0 },
        stoppage_second: StoppageRegression { intercept: s2[0], red: s2[1], goals: s2[2], close: s2[3] },
        psxg_baseline: baseline,
        standard_errors,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::tests::poisson_outcome;
    use crate::simulator::OracleDuration;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn team(s: &str) -> TeamId {
        TeamId::new(s).unwrap()
    }

    fn params(teams: &[(&str, f64, f64)], coefs: MaiaCoefficients) -> MaiaParams {
        MaiaParams {
            alpha: teams.iter().map(|(t, a, _)| (team(t), *a)).collect(),
            beta: teams.iter().map(|(t, _, b)| (team(t), *b)).collect(),
            coefficients: coefs,
            red_cards: RedCardProcess { scale: 0.0004, power: 0.5 },
            stoppage_first: StoppageRegression { intercept: 2.5f64.ln(), red: 0.1, goals: 0.05, close: 0.0 },
            stoppage_second: StoppageRegression { intercept: 4.5f64.ln(), red: 0.1, goals: 0.05, close: 0.2 },
            psxg_baseline: None,
            standard_errors: BTreeMap::new(),
            warnings: vec![],
        }
    }

    fn reference() -> MaiaParams {
        params(
            &[
                ("AAA", 0.16, 1.0),
                ("BBB", 0.13, 0.9),
                ("CCC", 0.11, 1.1),
                ("DDD", 0.12, 1.2),
                ("EEE", 0.15, 0.8),
                ("FFF", 0.1, 1.05),
            ],
            MaiaCoefficients { delta: 0.15, xi_half: 0.2, xi_gd: -0.12, xi_rc: 0.4, xi_psxg: 0.0 },
        )
    }

    #[test]
    fn intensity_examples() {
        let c = MaiaCoefficients { delta: 0.2, xi_half: 0.1, xi_gd: -0.15, xi_rc: 0.4, xi_psxg: 0.3 };
        let zero = Regressors::default();
        assert!((maia_intensity(0.02, &c, Side::Home, &zero) - 0.02 * 0.2f64.exp()).abs() < 1e-15);
        assert_eq!(maia_intensity(0.02, &c, Side::Away, &zero), 0.02);
        let own_red = Regressors { red: -1.0, ..zero };
        assert!(maia_intensity(0.02, &c, Side::Away, &own_red) / 0.02 < 0.7);
        let trailing = Regressors { goal_diff: -1.0, ..zero };
        let up = maia_intensity(0.02, &c, Side::Away, &trailing) / 0.02;
        assert!((1.1..1.2).contains(&up));
    }

    proptest! {
        #[test]
        fn intensity_log_linear(gd in -4.0f64..4.0, red in -2.0f64..2.0, dev in -2.0f64..2.0, xi in -0.5f64..0.5) {
            let c = MaiaCoefficients { delta: 0.1, xi_half: 0.2, xi_gd: xi, xi_rc: 0.3, xi_psxg: 0.1 };
            let x = Regressors { second_half: true, goal_diff: gd, red, dev };
            let y = Regressors { goal_diff: gd + 1.0, ..x };
            let d = maia_intensity(0.03, &c, Side::Home, &y).ln() - maia_intensity(0.03, &c, Side::Home, &x).ln();
            prop_assert!((d - xi).abs() < 1e-12);
        }
    }

    #[test]
    fn red_card_waiting_time_inverts_cumulative() {
        let r = RedCardProcess { scale: 0.001, power: 0.7 };
        let w = r.waiting_time(20.0, 0.3);
        assert!((r.cumulative(20.0, 20.0 + w) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn poisson_quantile_inverts_cdf() {
        assert_eq!(poisson_quantile(3.0, 1.0), 0);
        assert_eq!(poisson_quantile(3.0, 1e-12), poisson_quantile(3.0, 1e-12));
        let mean: f64 = (1..=20000).map(|i| poisson_quantile(3.0, i as f64 / 20001.0) as f64).sum::<f64>() / 20000.0;
        assert!((mean - 3.0).abs() < 0.01);
    }

    #[test]
    fn no_time_left_is_degenerate() {
        let p = reference();
        let mut cfg = SimConfig::new(200, 1);
        cfg.oracle = Some(OracleDuration { first_half_end: 46.0, full_time: 93.0 });
        let st = MatchState { minute: 93.0, half: Half::Second, home_goals: 0, away_goals: 1, ..MatchState::kickoff() };
        let out = maia_forecast(&st.into(), &p, (0.02, 0.02), &cfg).unwrap();
        assert_eq!(out.probs.away(), 1.0);
    }

    #[test]
    fn constant_rates_match_poisson() {
        let mut p = reference();
        p.coefficients = MaiaCoefficients::default();
        p.red_cards.scale = 0.0;
        let mut cfg = SimConfig::new(40_000, 3);
        cfg.oracle = Some(OracleDuration { first_half_end: 47.0, full_time: 95.0 });
        let out = maia_forecast(&MatchState::kickoff().into(), &p, (0.017, 0.012), &cfg).unwrap();
        let exact = poisson_outcome(0.017 * 97.0, 0.012 * 97.0);
        for (a, b) in out.probs.as_array().iter().zip(exact) {
            assert!((a - b).abs() < 0.01, "{a} vs {b}");
        }
    }

    #[test]
    fn calibration_round_trip() {
        let p = reference();
        let cfg = SimConfig::new(6000, 21);
        let truth = (0.019, 0.012);
        let out = maia_forecast(&MatchState::kickoff().into(), &p, truth, &cfg).unwrap();
        let target = CalibrationTarget::from_forecast(&out);
        let cal = maia_calibrate(&p, (0.014, 0.016), &target, &cfg).unwrap();
        assert!((cal.composite_kappa.0.ln() - truth.0.ln()).abs() < 0.02, "{cal:?}");
        assert!((cal.composite_kappa.1.ln() - truth.1.ln()).abs() < 0.02, "{cal:?}");
        for (a, b) in out.probs.as_array().iter().zip(target.market.as_array()) {
            assert!((a - b).abs() < 0.02);
        }
        let same = maia_calibrate(&p, truth, &target, &cfg).unwrap();
        assert_eq!(same.loss, 0.0);
        assert!((same.composite_kappa.0 / truth.0 - 1.0).abs() < 1e-12);
        assert!((same.composite_kappa.1 / truth.1 - 1.0).abs() < 1e-12);
    }

    fn synthetic(p: &MaiaParams, n: usize, seed: u64) -> Vec<MatchTimeline> {
        let teams: Vec<TeamId> = p.alpha.keys().cloned().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let date = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
        (0..n)
            .map(|i| {
                let h = i % teams.len();
                let a = (h + 1 + (i / teams.len()) % (teams.len() - 1)) % teams.len();
                maia_generate_match(p, &teams[h], &teams[a], &format!("m{i}"), date, &mut rng).unwrap()
            })
            .collect()
    }

    #[test]
    fn recovers_generating_coefficients() {
        let mut truth = reference();
        truth.red_cards = RedCardProcess { scale: 0.001, power: 0.5 };
        let data = synthetic(&truth, 1500, 5);
        let fit = maia_fit(&data, false).unwrap();
        let c = fit.coefficients;
        let t = truth.coefficients;
        for (name, got, want) in [
            ("delta", c.delta, t.delta),
            ("xi_half", c.xi_half, t.xi_half),
            ("xi_gd", c.xi_gd, t.xi_gd),
            ("xi_rc", c.xi_rc, t.xi_rc),
        ] {
            let se = fit.standard_errors[name];
            assert!((got - want).abs() < 3.0 * se, "{name}: {got} vs {want} (se {se})");
        }
        assert!((fit.red_cards.power - 0.5).abs() < 0.3, "{:?}", fit.red_cards);
        let (ch, ca) = fit.composites(&team("AAA"), &team("DDD")).unwrap();
        let (th, ta) = truth.composites(&team("AAA"), &team("DDD")).unwrap();
        assert!((ch / th).ln().abs() < 0.2 && (ca / ta).ln().abs() < 0.2);
        let s = fit.stoppage_second;
        assert!((s.close - 0.2).abs() < 3.0 * fit.standard_errors["stoppage2_close"]);
    }

    #[test]
    fn zero_coefficients_fit_near_zero() {
        let mut truth = reference();
        truth.coefficients = MaiaCoefficients::default();
        truth.red_cards = RedCardProcess { scale: 0.001, power: 0.5 };
        let fit = maia_fit(&synthetic(&truth, 800, 9), false).unwrap();
        for (name, v) in [
            ("delta", fit.coefficients.delta),
            ("xi_half", fit.coefficients.xi_half),
            ("xi_gd", fit.coefficients.xi_gd),
        ] {
            assert!(v.abs() < 3.0 * fit.standard_errors[name], "{name} = {v}");
        }
    }

    #[test]
    fn constant_stoppage_gives_intercept_only() {
        let truth = reference();
        let mut data = synthetic(&truth, 300, 2);
        for tl in &mut data {
            tl.first_half_end = 48.0;
            tl.full_time = 95.0;
            for ev in &mut tl.events {
                ev.minute = ev.minute.min(if ev.half == Half::First { 48.0 } else { 95.0 });
            }
        }
        let fit = maia_fit(&data, false).unwrap();
        assert!((fit.stoppage_first.intercept - 3f64.ln()).abs() < 1e-6);
        assert!(fit.stoppage_first.red.abs() < 1e-6 && fit.stoppage_first.goals.abs() < 1e-6);
        assert!((fit.stoppage_second.intercept - 5f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn no_red_cards_warns() {
        let mut truth = reference();
        truth.red_cards.scale = 0.0;
        let fit = maia_fit(&synthetic(&truth, 200, 4), false).unwrap();
        assert_eq!(fit.coefficients.xi_rc, 0.0);
        assert!(fit.warnings.iter().any(|w| w.contains("xi_rc")));
    }

    #[test]
    fn state_from_timeline_counts_half_events() {
        let tl = synthetic(&reference(), 30, 8).into_iter().find(|t| t.final_score.0 + t.final_score.1 >= 2).unwrap();
        let st = MaiaState::from_timeline(&tl, 60.0, None).unwrap();
        let seen = tl.goals().filter(|g| visible_at(g.half, g.minute, 60.0)).count() as u32;
        assert_eq!(st.state.home_goals + st.state.away_goals, seen);
        let in_half = tl.goals().filter(|g| g.half == Half::Second && g.minute < 60.0).count() as u32;
        assert_eq!(st.half_goals, in_half);
    }

    #[test]
    fn params_serialize_with_tag() {
        let json = serde_json::to_string(&super::super::RivalParams::Maia(reference())).unwrap();
        assert!(json.contains("\"model\":\"maia\""));
        let back: super::super::RivalParams = serde_json::from_str(&json).unwrap();
        assert_eq!(back, super::super::RivalParams::Maia(reference()));
    }
}
