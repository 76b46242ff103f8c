//! Monte Carlo completion of a match from an in-play state, and a synthetic
//! match generator that follows the same goal process.

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};

use crate::aft::{
    expected_log_time, BoundaryMode, CovariateCoeffs, CovariateValues, EtaPair, RatingSet, ScoreState, ShapeSpec,
};
use crate::covariates::{covariate_path, visible_at, Baseline, CovariateMode, CovariatePath};
use crate::domain::{ForecastTriple, Half, MatchEvent, MatchTimeline, Side, TeamId, HALF_LENGTH, OU_THRESHOLDS};
use crate::error::{Error, Result};
use crate::weibull::{conditional_sample_unchecked, rate_from_eta};

pub const DEFAULT_PATHS: usize = 10_000;
pub const DEFAULT_STOPPAGE_FIRST: f64 = 3.1;
pub const DEFAULT_STOPPAGE_SECOND: f64 = 6.2;
/// Regulation full-time minute.
pub const REGULATION_END: f64 = 90.0;
/// Highest total-goals bucket; it collects that many goals or more.
pub const TOTAL_GOALS_CAP: usize = 5;

/// Actual half lengths, used instead of stoppage means in oracle mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleDuration {
    pub first_half_end: f64,
    pub full_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_paths: usize,
    pub seed: u64,
    pub stoppage_first: f64,
    pub stoppage_second: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleDuration>,
    #[serde(default)]
    pub boundary: BoundaryMode,
}

impl SimConfig {
    pub fn new(n_paths: usize, seed: u64) -> Self {
        SimConfig {
            n_paths,
            seed,
            stoppage_first: DEFAULT_STOPPAGE_FIRST,
            stoppage_second: DEFAULT_STOPPAGE_SECOND,
            oracle: None,
            boundary: BoundaryMode::Reset,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::InvalidArgument("n_paths must be at least 1".into()));
        }
        if !(self.stoppage_first >= 0.0 && self.stoppage_second >= 0.0) {
            return Err(Error::InvalidArgument("stoppage means must be non-negative".into()));
        }
        Ok(())
    }

    /// Feed minutes at which the first half and the match end.
    pub fn half_ends(&self) -> (f64, f64) {
        match self.oracle {
            Some(o) => (o.first_half_end, o.full_time),
            None => (HALF_LENGTH + self.stoppage_first, REGULATION_END + self.stoppage_second),
        }
    }
}

/// Match situation at a forecast minute; covariates are frozen here.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchState {
    pub minute: f64,
    pub half: Half,
    pub home_goals: u32,
    pub away_goals: u32,
    /// Minutes since the last goal, or since the start of the clock.
    pub elapsed: f64,
    #[serde(default)]
    pub x_home: CovariateValues,
    #[serde(default)]
    pub x_away: CovariateValues,
}

impl MatchState {
    pub fn kickoff() -> Self {
        MatchState {
            minute: 0.0,
            half: Half::First,
            home_goals: 0,
            away_goals: 0,
            elapsed: 0.0,
            x_home: CovariateValues::default(),
            x_away: CovariateValues::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.minute >= 0.0 && self.minute.is_finite()) {
            return Err(Error::State(format!("minute {} is not a valid clock reading", self.minute)));
        }
        if !(self.elapsed >= 0.0 && self.elapsed <= self.minute + 1e-9) {
            return Err(Error::State(format!("elapsed {} outside [0, minute {}]", self.elapsed, self.minute)));
        }
        if self.half == Half::Second && self.minute < HALF_LENGTH {
            return Err(Error::State(format!("second half cannot be at minute {}", self.minute)));
        }
        Ok(())
    }

    /// State at grid minute `minute`, seeing only events strictly before it.
    pub fn from_timeline(
        timeline: &MatchTimeline,
        minute: f64,
        path: &CovariatePath,
        boundary: BoundaryMode,
    ) -> Result<Self> {
        if !(minute >= 0.0 && minute <= timeline.full_time) {
            return Err(Error::State(format!(
                "minute {minute} outside match {} (full time {})",
                timeline.match_id, timeline.full_time
            )));
        }
        let half = crate::covariates::grid_half(minute);
        let (mut h, mut a) = (0, 0);
        let mut last_goal: Option<(Half, f64)> = None;
        for g in timeline.goals().filter(|g| visible_at(g.half, g.minute, minute)) {
            match timeline.side_of(&g.team) {
                Some(Side::Home) => h += 1,
                _ => a += 1,
            }
            last_goal = Some((g.half, g.minute));
        }
        let elapsed = match boundary {
            BoundaryMode::Reset => {
                let origin = match (half, last_goal) {
                    (Half::First, Some((Half::First, m))) => m,
                    (Half::First, _) => 0.0,
                    (Half::Second, Some((Half::Second, m))) => m.max(HALF_LENGTH),
                    (Half::Second, _) => HALF_LENGTH,
                };
                minute - origin
            }
            BoundaryMode::Continuous => {
                let now = timeline.play_time(half, minute);
                let origin = last_goal.map_or(0.0, |(gh, gm)| timeline.play_time(gh, gm));
                (now - origin).min(minute)
            }
        };
        let (x_home, x_away) = path.visible_values(minute);
        Ok(MatchState { minute, half, home_goals: h, away_goals: a, elapsed: elapsed.max(0.0), x_home, x_away })
    }
}

/// Source of uniforms in `(0, 1]`.
pub trait UniformSource {
    fn uniform(&mut self) -> f64;
}

/// Independent stream for one simulated path, keyed by `(seed, path index)`.
pub struct PathStream(ChaCha8Rng);

impl PathStream {
    pub fn new(seed: u64, path: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path);
        PathStream(rng)
    }
}

impl UniformSource for PathStream {
    #[inline]
    fn uniform(&mut self) -> f64 {
        1.0 - self.0.random::<f64>()
    }
}

/// Pre-drawn uniforms for every path, so repeated objective evaluations reuse
/// identical numbers. Paths needing more draws continue their own stream.
#[derive(Debug, Clone)]
pub struct UniformCache {
    seed: u64,
    per_path: usize,
    n_paths: usize,
    buf: Vec<f64>,
}

impl UniformCache {
    pub fn new(seed: u64, n_paths: usize, per_path: usize) -> Self {
        let mut buf = Vec::with_capacity(n_paths * per_path);
        for p in 0..n_paths {
            let mut s = PathStream::new(seed, p as u64);
            for _ in 0..per_path {
                buf.push(s.uniform());
            }
        }
        UniformCache { seed, per_path, n_paths, buf }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn stream(&self, path: usize) -> CachedStream<'_> {
        let start = path * self.per_path;
        CachedStream {
            buf: &self.buf[start..start + self.per_path],
            pos: 0,
            seed: self.seed,
            path: path as u64,
            rest: None,
        }
    }
}

pub struct CachedStream<'a> {
    buf: &'a [f64],
    pos: usize,
    seed: u64,
    path: u64,
    rest: Option<PathStream>,
}

impl UniformSource for CachedStream<'_> {
    #[inline]
    fn uniform(&mut self) -> f64 {
        if self.pos < self.buf.len() {
            self.pos += 1;
            return self.buf[self.pos - 1];
        }
        let n = self.buf.len();
        let (seed, path) = (self.seed, self.path);
        let rest = self.rest.get_or_insert_with(|| {
            let mut s = PathStream::new(seed, path);
            // each f64 consumes two 32-bit words
            s.0.set_word_pos(2 * n as u128);
            s
        });
        rest.uniform()
    }
}

/// `(γ, λ)` for one team by half and score state.
#[derive(Debug, Clone, Copy)]
struct RateTable {
    gamma: [[f64; 3]; 2],
    rate: [[f64; 3]; 2],
}

fn state_index(s: ScoreState) -> usize {
    match s {
        ScoreState::Leading => 0,
        ScoreState::Tied => 1,
        ScoreState::Trailing => 2,
    }
}

impl RateTable {
    fn new(eta: f64, shape: &ShapeSpec) -> Self {
        let mut t = RateTable { gamma: [[0.0; 3]; 2], rate: [[0.0; 3]; 2] };
        for (hi, half) in [Half::First, Half::Second].into_iter().enumerate() {
            for st in [ScoreState::Leading, ScoreState::Tied, ScoreState::Trailing] {
                let g = shape.gamma_for(half, st);
                t.gamma[hi][state_index(st)] = g;
                t.rate[hi][state_index(st)] = if eta.is_finite() { rate_from_eta(eta, g) } else { 0.0 };
            }
        }
        t
    }

    #[inline]
    fn get(&self, half: Half, st: ScoreState) -> (f64, f64) {
        let h = (half.number() - 1) as usize;
        let s = state_index(st);
        (self.gamma[h][s], self.rate[h][s])
    }
}

/// Competing-risks goal simulation over `t_rem` minutes. Returns the updated
/// score; `elapsed` is advanced to the end of the interval.
fn run_spells<S: UniformSource>(
    score: &mut [u32; 2],
    elapsed: &mut f64,
    t_rem: f64,
    half: Half,
    tables: &[RateTable; 2],
    src: &mut S,
) {
    let mut used = 0.0;
    loop {
        let sh = ScoreState::from_goals(score[0], score[1]);
        let sa = ScoreState::from_goals(score[1], score[0]);
        let (gh, lh) = tables[0].get(half, sh);
        let (ga, la) = tables[1].get(half, sa);
        let uh = src.uniform();
        let ua = src.uniform();
        let th = conditional_sample_unchecked(gh, lh, *elapsed, uh);
        let ta = conditional_sample_unchecked(ga, la, *elapsed, ua);
        let tau = th.min(ta);
        if used + tau > t_rem {
            *elapsed += t_rem - used;
            return;
        }
        if th <= ta {
            score[0] += 1;
        } else {
            score[1] += 1;
        }
        used += tau;
        *elapsed = 0.0;
    }
}

/// One-half competing-risks simulation with a single shape for both teams.
#[allow(clippy::too_many_arguments)]
pub fn simulate_half<S: UniformSource>(
    home: u32,
    away: u32,
    elapsed: f64,
    gamma: f64,
    rate_home: f64,
    rate_away: f64,
    t_rem: f64,
    src: &mut S,
) -> (u32, u32) {
    let table = |rate: f64| RateTable { gamma: [[gamma; 3]; 2], rate: [[rate; 3]; 2] };
    let tables = [table(rate_home), table(rate_away)];
    let mut score = [home, away];
    let mut s = elapsed;
    run_spells(&mut score, &mut s, t_rem.max(0.0), Half::First, &tables, src);
    (score[0], score[1])
}

/// Outcome and total-goals frequencies over simulated completions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastOutput {
    pub probs: ForecastTriple,
    /// `P(total = 0..4)` and `P(total ≥ 5)`.
    pub total_goals: [f64; TOTAL_GOALS_CAP + 1],
    /// `P(total > g)` for each over/under threshold.
    pub over: [f64; 5],
    pub n_paths: usize,
}

impl ForecastOutput {
    /// Aggregates final scores into probabilities.
    pub fn from_scores(scores: impl IntoIterator<Item = (u32, u32)>) -> Self {
        let (mut home, mut draw, mut n) = (0u64, 0u64, 0u64);
        let mut totals = [0u64; TOTAL_GOALS_CAP + 1];
        let mut over = [0u64; 5];
        for (h, a) in scores {
            n += 1;
            match h.cmp(&a) {
                std::cmp::Ordering::Greater => home += 1,
                std::cmp::Ordering::Equal => draw += 1,
                std::cmp::Ordering::Less => {}
            }
            let t = (h + a) as usize;
            totals[t.min(TOTAL_GOALS_CAP)] += 1;
            for (i, g) in OU_THRESHOLDS.iter().enumerate() {
                if t as f64 > *g {
                    over[i] += 1;
                }
            }
        }
        let nf = n as f64;
        ForecastOutput {
            probs: ForecastTriple::from_counts(home, draw, n),
            total_goals: totals.map(|c| c as f64 / nf),
            over: over.map(|c| c as f64 / nf),
            n_paths: n as usize,
        }
    }
}

fn check_inputs(state: &MatchState, eta: &EtaPair, shape: &ShapeSpec, cfg: &SimConfig) -> Result<()> {
    state.validate()?;
    cfg.validate()?;
    shape.validate()?;
    if eta.home.is_nan() || eta.away.is_nan() {
        return Err(Error::InvalidArgument("eta must not be NaN".into()));
    }
    if shape.is_half_specific() && cfg.boundary == BoundaryMode::Continuous {
        return Err(Error::InvalidArgument("half-specific shapes need the reset boundary mode".into()));
    }
    Ok(())
}

/// Completes one path from `state` and returns the final score.
fn complete_path<S: UniformSource>(
    state: &MatchState,
    tables: &[RateTable; 2],
    cfg: &SimConfig,
    src: &mut S,
) -> (u32, u32) {
    let (h1_end, end) = cfg.half_ends();
    let mut score = [state.home_goals, state.away_goals];
    let mut s = state.elapsed;
    let m = state.minute;
    if state.half == Half::First {
        let t1 = (h1_end - m).max(0.0);
        run_spells(&mut score, &mut s, t1, Half::First, tables, src);
        if cfg.boundary == BoundaryMode::Reset {
            s = 0.0;
        }
        run_spells(&mut score, &mut s, (end - HALF_LENGTH).max(0.0), Half::Second, tables, src);
    } else {
        run_spells(&mut score, &mut s, (end - m).max(0.0), Half::Second, tables, src);
    }
    (score[0], score[1])
}

/// In-play Monte Carlo forecast with per-path random streams.
pub fn forecast(state: &MatchState, eta: EtaPair, shape: &ShapeSpec, cfg: &SimConfig) -> Result<ForecastOutput> {
    check_inputs(state, &eta, shape, cfg)?;
    let tables = [RateTable::new(eta.home, shape), RateTable::new(eta.away, shape)];
    Ok(ForecastOutput::from_scores((0..cfg.n_paths).map(|p| {
        let mut src = PathStream::new(cfg.seed, p as u64);
        complete_path(state, &tables, cfg, &mut src)
    })))
}

/// As [`forecast`] but drawing from a uniform cache; results are identical.
pub fn forecast_cached(
    state: &MatchState,
    eta: EtaPair,
    shape: &ShapeSpec,
    cfg: &SimConfig,
    cache: &UniformCache,
) -> Result<ForecastOutput> {
    check_inputs(state, &eta, shape, cfg)?;
    if cache.n_paths() < cfg.n_paths || cache.seed() != cfg.seed {
        return Err(Error::InvalidArgument("uniform cache does not match the simulation config".into()));
    }
    let tables = [RateTable::new(eta.home, shape), RateTable::new(eta.away, shape)];
    Ok(ForecastOutput::from_scores((0..cfg.n_paths).map(|p| {
        let mut src = cache.stream(p);
        complete_path(state, &tables, cfg, &mut src)
    })))
}

/// Exogenous event rates and stoppage means for synthetic matches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub stoppage_first: f64,
    pub stoppage_second: f64,
    /// Shots per team per minute.
    pub shot_rate: f64,
    pub on_target: f64,
    /// Beta parameters of PSxG for shots on target.
    pub psxg_alpha: f64,
    pub psxg_beta: f64,
    /// Red cards per team per minute.
    pub red_rate: f64,
    pub boundary: BoundaryMode,
    pub covariate_mode: CovariateMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<Baseline>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            stoppage_first: DEFAULT_STOPPAGE_FIRST,
            stoppage_second: DEFAULT_STOPPAGE_SECOND,
            shot_rate: 12.0 / 90.0,
            on_target: 0.35,
            psxg_alpha: 1.2,
            psxg_beta: 2.4,
            red_rate: 0.1 / 90.0,
            boundary: BoundaryMode::Reset,
            covariate_mode: CovariateMode::None,
            baseline: None,
        }
    }
}

/// Time to reach cumulative hazard `target` from a spell origin, with `η`
/// piecewise constant over `pieces` (relative ends; the last extends forever).
fn invert_hazard(pieces: &[(f64, f64)], gamma: f64, target: f64) -> f64 {
    let mut cum = 0.0;
    let mut lo: f64 = 0.0;
    for (j, &(end, eta)) in pieces.iter().enumerate() {
        if !eta.is_finite() {
            return f64::INFINITY;
        }
        let rate = rate_from_eta(eta, gamma);
        let hi = if j + 1 == pieces.len() { f64::INFINITY } else { end };
        let seg = rate * (hi.powf(gamma) - lo.powf(gamma));
        if cum + seg >= target {
            return ((target - cum) / rate + lo.powf(gamma)).powf(1.0 / gamma);
        }
        cum += seg;
        lo = hi;
    }
    f64::INFINITY
}

fn poisson_process<R: Rng>(rng: &mut R, rate: f64, from: f64, to: f64) -> Vec<f64> {
    let mut out = Vec::new();
    if rate <= 0.0 {
        return out;
    }
    let exp = Exp::new(rate).expect("positive rate");
    let mut t = from;
    loop {
        t += exp.sample(rng);
        if t >= to {
            return out;
        }
        out.push(t);
    }
}

/// Simulates a complete match from kickoff. Goal times follow the AFT model
/// (recorded at the end of their one-minute bin); shots and red cards are
/// exogenous Poisson processes; stoppage lengths are Poisson.
#[allow(clippy::too_many_arguments)]
pub fn generate_match<R: Rng>(
    ratings: &RatingSet,
    shape: &ShapeSpec,
    coeffs: &CovariateCoeffs,
    home: &TeamId,
    away: &TeamId,
    match_id: &str,
    date: NaiveDate,
    cfg: &GeneratorConfig,
    rng: &mut R,
) -> Result<MatchTimeline> {
    shape.validate()?;
    coeffs.validate()?;
    let zero = CovariateValues::default();
    let base = expected_log_time(ratings, home, away, &zero, &zero, &CovariateCoeffs::default())?;

    let stoppage = |mean: f64, rng: &mut R| -> f64 {
        if mean > 0.0 {
            Poisson::new(mean).expect("positive mean").sample(rng)
        } else {
            0.0
        }
    };
    let fhe = HALF_LENGTH + stoppage(cfg.stoppage_first, rng);
    let ft = REGULATION_END + stoppage(cfg.stoppage_second, rng);

    let mut events = Vec::new();
    let psxg = Beta::new(cfg.psxg_alpha, cfg.psxg_beta)
        .map_err(|e| Error::InvalidArgument(format!("PSxG distribution: {e}")))?;
    for team in [home, away] {
        for (half, from, to) in [(Half::First, 0.0, fhe), (Half::Second, HALF_LENGTH, ft)] {
            for t in poisson_process(rng, cfg.shot_rate, from, to) {
                let value = if rng.random::<f64>() < cfg.on_target { psxg.sample(rng) } else { 0.0 };
                events.push(MatchEvent::shot(half, t, team.clone(), value));
            }
            for t in poisson_process(rng, cfg.red_rate, from, to) {
                events.push(MatchEvent::red_card(half, t, team.clone()));
            }
        }
    }

    let play_end = fhe + (ft - HALF_LENGTH);
    let windows: Vec<(f64, f64, Option<Half>)> = match cfg.boundary {
        BoundaryMode::Reset => vec![(0.0, fhe, Some(Half::First)), (fhe, play_end, Some(Half::Second))],
        BoundaryMode::Continuous => {
            if shape.is_half_specific() {
                return Err(Error::InvalidArgument("half-specific shapes need the reset boundary mode".into()));
            }
            vec![(0.0, play_end, None)]
        }
    };
    let to_feed = |play: f64, w_half: Option<Half>| -> (Half, f64) {
        let half = w_half.unwrap_or(if play <= fhe { Half::First } else { Half::Second });
        match half {
            Half::First => (Half::First, play),
            Half::Second => (Half::Second, HALF_LENGTH + (play - fhe)),
        }
    };

    let mut score = [0u32; 2];
    for (w_start, w_end, w_half) in windows {
        let mut origin = w_start;
        loop {
            let tl = MatchTimeline::from_events(match_id, date, home.clone(), away.clone(), events.clone(), fhe, ft)?;
            let path = covariate_path(&tl, cfg.baseline.as_ref(), cfg.covariate_mode)?;
            let half = w_half.unwrap_or(if origin < fhe { Half::First } else { Half::Second });
            let mut times = [f64::INFINITY; 2];
            for side in Side::BOTH {
                let i = side.index();
                let b = if side == Side::Home { base.home } else { base.away };
                let gamma = shape.gamma_for(half, ScoreState::from_goals(score[i], score[1 - i]));
                let pieces: Vec<(f64, f64)> = path
                    .pieces(side, origin, w_end.max(origin + 1.0))
                    .into_iter()
                    .map(|(e, x)| (e - origin, b + coeffs.dot(&x)))
                    .collect();
                let target = -(1.0 - rng.random::<f64>()).ln();
                times[i] = invert_hazard(&pieces, gamma, target);
            }
            let first = times[0].min(times[1]);
            if origin + first > w_end {
                break;
            }
            let bin = (origin + first).ceil().min(w_end).max(origin);
            for side in Side::BOTH {
                if origin + times[side.index()] <= bin {
                    let (h, m) = to_feed(bin, w_half);
                    events.push(MatchEvent::goal(h, m, tl.team(side).clone()));
                    score[side.index()] += 1;
                }
            }
            origin = bin;
        }
    }
    MatchTimeline::from_events(match_id, date, home.clone(), away.clone(), events, fhe, ft)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    fn flat_ratings(mu: f64, home_adv: f64) -> RatingSet {
        RatingSet::flat(
            mu,
            home_adv,
            [TeamId::new("H").unwrap(), TeamId::new("A").unwrap()],
            NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
        )
    }

    fn poisson_pmf(lambda: f64, k: u32) -> f64 {
        (-lambda + k as f64 * lambda.ln() - statrs::function::gamma::ln_gamma(k as f64 + 1.0)).exp()
    }

    /// Exact 1X2 under independent Poisson goal counts (scores up to 15 each).
    pub(crate) fn poisson_outcome(mh: f64, ma: f64) -> [f64; 3] {
        let mut p = [0.0; 3];
        for h in 0..=15 {
            for a in 0..=15 {
                let w = poisson_pmf(mh, h) * poisson_pmf(ma, a);
                p[if h > a {
                    0
                } else if h == a {
                    1
                } else {
                    2
                }] += w;
            }
        }
        p
    }

    #[test]
    fn final_whistle_is_degenerate() {
        let mut st = MatchState::kickoff();
        st.minute = 96.0;
        st.half = Half::Second;
        st.home_goals = 2;
        st.away_goals = 1;
        st.elapsed = 10.0;
        let mut cfg = SimConfig::new(1000, 7);
        cfg.oracle = Some(OracleDuration { first_half_end: 47.0, full_time: 96.0 });
        let out = forecast(&st, EtaPair::new(3.0, 3.0), &ShapeSpec::reference_half_specific(), &cfg).unwrap();
        assert_eq!(out.probs.as_array(), [1.0, 0.0, 0.0]);
        assert_eq!(out.total_goals[3], 1.0);
    }

    #[test]
    fn symmetric_teams() {
        let cfg = SimConfig::new(10_000, 11);
        let out = forecast(&MatchState::kickoff(), EtaPair::new(4.0, 4.0), &ShapeSpec::reference_half_specific(), &cfg)
            .unwrap();
        assert!((out.probs.home() - out.probs.away()).abs() < 0.02);
        let sum: f64 = out.probs.as_array().iter().sum();
        assert_eq!(sum, 1.0);
    }

    #[test]
    fn exponential_matches_poisson_oracle() {
        let mut cfg = SimConfig::new(100_000, 3);
        cfg.oracle = Some(OracleDuration { first_half_end: 47.0, full_time: 95.0 });
        let shape = ShapeSpec::HalfSpecific { first: 1.0, second: 1.0 };
        let eta = EtaPair::new(3.97, 4.09);
        let out = forecast(&MatchState::kickoff(), eta, &shape, &cfg).unwrap();
        let dur = 47.0 + 50.0;
        let exact = poisson_outcome(dur * (-eta.home).exp(), dur * (-eta.away).exp());
        for (p, e) in out.probs.as_array().iter().zip(exact) {
            assert!((p - e).abs() < 0.01, "{p} vs {e}");
        }
    }

    #[test]
    fn cached_equals_streamed() {
        let cfg = SimConfig::new(2000, 99);
        let cache = UniformCache::new(99, 2000, 4);
        let shape = ShapeSpec::reference_half_specific();
        let mut st = MatchState::kickoff();
        st.minute = 20.0;
        st.elapsed = 5.0;
        let a = forecast(&st, EtaPair::new(3.5, 3.9), &shape, &cfg).unwrap();
        let b = forecast_cached(&st, EtaPair::new(3.5, 3.9), &shape, &cfg, &cache).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn determinism() {
        let cfg = SimConfig::new(3000, 5);
        let shape = ShapeSpec::reference_half_specific();
        let a = forecast(&MatchState::kickoff(), EtaPair::new(3.8, 4.2), &shape, &cfg).unwrap();
        let b = forecast(&MatchState::kickoff(), EtaPair::new(3.8, 4.2), &shape, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lower_eta_raises_home_probability() {
        let cfg = SimConfig::new(5000, 21);
        let shape = ShapeSpec::reference_half_specific();
        let a = forecast(&MatchState::kickoff(), EtaPair::new(4.0, 4.0), &shape, &cfg).unwrap();
        let b = forecast(&MatchState::kickoff(), EtaPair::new(3.8, 4.0), &shape, &cfg).unwrap();
        assert!(b.probs.home() >= a.probs.home());
    }

    #[test]
    fn simulate_half_edges() {
        let mut src = PathStream::new(1, 0);
        assert_eq!(simulate_half(1, 2, 3.0, 1.2, 0.05, 0.05, 0.0, &mut src), (1, 2));
        for p in 0..200 {
            let mut src = PathStream::new(2, p);
            let (h, a) = simulate_half(0, 0, 0.0, 1.0, 0.05, 0.0, 45.0, &mut src);
            assert_eq!(a, 0);
            let _ = h;
        }
    }

    #[test]
    fn inconsistent_state() {
        let mut st = MatchState::kickoff();
        st.minute = 10.0;
        st.elapsed = 20.0;
        let err = forecast(&st, EtaPair::new(4.0, 4.0), &ShapeSpec::reference_half_specific(), &SimConfig::new(10, 1));
        assert_eq!(err.unwrap_err().kind(), "state-error");
    }

    #[test]
    fn state_from_timeline() {
        let t = |s: &str| TeamId::new(s).unwrap();
        let tl = MatchTimeline::from_events(
            "m",
            NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
            t("H"),
            t("A"),
            vec![
                MatchEvent::goal(Half::First, 30.0, t("H")),
                MatchEvent::goal(Half::First, 46.0, t("A")),
                MatchEvent::goal(Half::Second, 60.0, t("H")),
            ],
            47.0,
            95.0,
        )
        .unwrap();
        let z = CovariatePath::zero();
        let s30 = MatchState::from_timeline(&tl, 30.0, &z, BoundaryMode::Reset).unwrap();
        assert_eq!((s30.home_goals, s30.elapsed), (0, 30.0));
        let s31 = MatchState::from_timeline(&tl, 31.0, &z, BoundaryMode::Reset).unwrap();
        assert_eq!((s31.home_goals, s31.elapsed), (1, 1.0));
        let s45 = MatchState::from_timeline(&tl, 45.0, &z, BoundaryMode::Reset).unwrap();
        assert_eq!((s45.half, s45.home_goals, s45.away_goals, s45.elapsed), (Half::Second, 1, 1, 0.0));
        let s61 = MatchState::from_timeline(&tl, 61.0, &z, BoundaryMode::Reset).unwrap();
        assert_eq!((s61.home_goals, s61.elapsed), (2, 1.0));
        let c50 = MatchState::from_timeline(&tl, 50.0, &z, BoundaryMode::Continuous).unwrap();
        // play clock: 47 + 5 = 52, last goal at 46
        assert_eq!(c50.elapsed, 6.0);
    }

    #[test]
    fn generated_goal_mean() {
        let r = flat_ratings(4.09, -0.12);
        let (h, a) = (TeamId::new("H").unwrap(), TeamId::new("A").unwrap());
        let shape = ShapeSpec::HalfSpecific { first: 1.0, second: 1.0 };
        let cfg = GeneratorConfig { shot_rate: 0.0, red_rate: 0.0, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 3000;
        let mut total = 0u32;
        let date = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
        for i in 0..n {
            let m =
                generate_match(&r, &shape, &CovariateCoeffs::default(), &h, &a, &format!("g{i}"), date, &cfg, &mut rng)
                    .unwrap();
            total += m.final_score.0 + m.final_score.1;
        }
        let mean = total as f64 / n as f64;
        // 95.3 expected minutes times the two exponential rates
        let expect = (45.0 + 3.1 + 45.0 + 6.2) * ((-3.97f64).exp() + (-4.09f64).exp());
        assert!((mean - expect).abs() < 0.12, "{mean} vs {expect}");
    }

    #[test]
    fn zero_rate_teams_never_score() {
        let r = flat_ratings(f64::INFINITY, 0.0);
        let (h, a) = (TeamId::new("H").unwrap(), TeamId::new("A").unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let date = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
        for i in 0..50 {
            let m = generate_match(
                &r,
                &ShapeSpec::reference_half_specific(),
                &CovariateCoeffs::default(),
                &h,
                &a,
                &format!("z{i}"),
                date,
                &GeneratorConfig::default(),
                &mut rng,
            )
            .unwrap();
            assert_eq!(m.final_score, (0, 0));
        }
    }

    #[test]
    fn hazard_inversion_round_trip() {
        let pieces = [(10.0, 4.0), (30.0, 3.6), (f64::INFINITY, 3.9)];
        for target in [0.01, 0.2, 0.9, 3.0] {
            let t = invert_hazard(&pieces, 1.4, target);
            let mut h = 0.0;
            let mut lo: f64 = 0.0;
            for &(end, eta) in &pieces {
                let hi = end.min(t);
                if hi > lo {
                    h += rate_from_eta(eta, 1.4) * (hi.powf(1.4) - lo.powf(1.4));
                }
                lo = end;
                if lo >= t {
                    break;
                }
            }
            assert!((h - target).abs() < 1e-9);
        }
    }
}
