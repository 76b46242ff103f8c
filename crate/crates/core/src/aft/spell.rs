//! Goal spells and their interval-censored Weibull likelihood.
//!
//! Spells run on the play clock (first-half stoppage included, second half
//! starting at the first-half end). Each goal ends both teams' spells: the
//! scorer's with an interval-censored event, the opponent's censored.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::{expected_log_time, BoundaryMode, CovariateCoeffs, CovariateValues, RatingSet, ScoreState, ShapeSpec};
use crate::covariates::CovariatePath;
use crate::domain::{EventKind, Half, MatchTimeline, Side};
use crate::error::{Error, Result};
use crate::weibull::dlog_rate_dshape;

/// Width of the reporting bin a goal time is known to lie in.
pub const GOAL_BIN: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpellTerminal {
    Goal,
    Censored,
}

/// One constant piece of `η`, in force up to `end` (play-clock minutes).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaSegment {
    pub end: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalSpell {
    pub side: Side,
    pub start: f64,
    pub end: f64,
    pub terminal: SpellTerminal,
    pub eta_path: Vec<EtaSegment>,
    pub half: Half,
    pub state: ScoreState,
}

/// Spell geometry plus covariate pieces, independent of parameter values.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SpellSkeleton {
    pub side: Side,
    pub half: Half,
    pub state: ScoreState,
    pub start: f64,
    pub end: f64,
    pub terminal: SpellTerminal,
    /// `(absolute end, covariates)`; the last piece ends at `end`.
    pub pieces: Vec<(f64, CovariateValues)>,
}

/// Relative bounds of the hazard integrals: `(censor_end, goal interval)`.
fn relative_bounds(length: f64, terminal: SpellTerminal) -> (f64, Option<(f64, f64)>) {
    match terminal {
        SpellTerminal::Censored => (length, None),
        SpellTerminal::Goal => {
            let (lo, hi) = if length <= 0.0 { (0.0, GOAL_BIN) } else { ((length - GOAL_BIN).max(0.0), length) };
            (lo, Some((lo, hi)))
        }
    }
}

pub(crate) fn spell_skeletons(
    timeline: &MatchTimeline,
    path: &CovariatePath,
    mode: BoundaryMode,
) -> Vec<SpellSkeleton> {
    let fhe = timeline.first_half_end;
    let end = timeline.play_end();
    let windows: Vec<(f64, f64, Option<Half>)> = match mode {
        BoundaryMode::Reset => vec![(0.0, fhe, Some(Half::First)), (fhe, end, Some(Half::Second))],
        BoundaryMode::Continuous => vec![(0.0, end, None)],
    };

    // goal groups: (play time, half, goals by side)
    let mut groups: Vec<(f64, Half, [u32; 2])> = Vec::new();
    for ev in timeline.events.iter().filter(|e| e.kind == EventKind::Goal) {
        let p = timeline.play_time(ev.half, ev.minute);
        let side = timeline.side_of(&ev.team).expect("validated timeline").index();
        match groups.last_mut() {
            Some(g) if g.0 == p && g.1 == ev.half => g.2[side] += 1,
            _ => {
                let mut c = [0, 0];
                c[side] = 1;
                groups.push((p, ev.half, c));
            }
        }
    }

    let mut out = Vec::new();
    let mut score = [0u32; 2];
    for (w_start, w_end, w_half) in windows {
        let mut origin = w_start;
        let half_at = |p: f64| w_half.unwrap_or(if p < fhe { Half::First } else { Half::Second });
        let mut push = |side: Side, from: f64, to: f64, terminal: SpellTerminal, score: [u32; 2]| {
            if terminal == SpellTerminal::Censored && to <= from {
                return;
            }
            let i = side.index();
            out.push(SpellSkeleton {
                side,
                half: half_at(from),
                state: ScoreState::from_goals(score[i], score[1 - i]),
                start: from,
                end: to,
                terminal,
                pieces: path.pieces(side, from, to.max(from + GOAL_BIN)),
            });
        };
        for &(p, half, counts) in groups.iter().filter(|g| w_half.is_none_or(|h| g.1 == h)) {
            let _ = half;
            for side in Side::BOTH {
                let terminal = if counts[side.index()] > 0 { SpellTerminal::Goal } else { SpellTerminal::Censored };
                push(side, origin, p, terminal, score);
            }
            score[0] += counts[0];
            score[1] += counts[1];
            origin = p;
        }
        for side in Side::BOTH {
            push(side, origin, w_end, SpellTerminal::Censored, score);
        }
    }
    out
}

/// Builds goal spells with their `η` paths for one match.
pub fn build_spells(
    timeline: &MatchTimeline,
    path: &CovariatePath,
    ratings: &RatingSet,
    coeffs: &CovariateCoeffs,
    mode: BoundaryMode,
) -> Result<Vec<GoalSpell>> {
    let zero = CovariateValues::default();
    let base = expected_log_time(ratings, &timeline.home, &timeline.away, &zero, &zero, &CovariateCoeffs::default())?;
    Ok(spell_skeletons(timeline, path, mode)
        .into_iter()
        .map(|sk| {
            let b = match sk.side {
                Side::Home => base.home,
                Side::Away => base.away,
            };
            GoalSpell {
                side: sk.side,
                start: sk.start,
                end: sk.end,
                terminal: sk.terminal,
                eta_path: sk.pieces.iter().map(|(e, x)| EtaSegment { end: *e, eta: b + coeffs.dot(x) }).collect(),
                half: sk.half,
                state: sk.state,
            }
        })
        .collect())
}

/// One hazard-integral piece on the spell's relative clock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Piece {
    pub seg: usize,
    pub a: f64,
    pub b: f64,
    pub ln_a: f64,
    pub ln_b: f64,
    /// Piece belongs to the goal interval rather than the survival part.
    pub goal: bool,
}

/// Splits `[from, to]` (relative) across segments whose relative ends are
/// `seg_ends`; the last segment extends indefinitely.
fn push_pieces(out: &mut Vec<Piece>, seg_ends: &[f64], from: f64, to: f64, goal: bool) {
    let mut lo = 0.0f64;
    for (j, &e) in seg_ends.iter().enumerate() {
        let hi = if j + 1 == seg_ends.len() { f64::INFINITY } else { e };
        let a = lo.max(from);
        let b = hi.min(to);
        if b > a {
            let ln_a = if a > 0.0 { a.ln() } else { f64::NEG_INFINITY };
            out.push(Piece { seg: j, a, b, ln_a, ln_b: b.ln(), goal });
        }
        lo = hi;
        if lo >= to {
            break;
        }
    }
}

pub(crate) fn build_pieces(start: f64, end: f64, terminal: SpellTerminal, seg_abs_ends: &[f64]) -> Vec<Piece> {
    let rel: Vec<f64> = seg_abs_ends.iter().map(|e| e - start).collect();
    let (surv_end, goal) = relative_bounds(end - start, terminal);
    let mut out = Vec::new();
    push_pieces(&mut out, &rel, 0.0, surv_end, false);
    if let Some((lo, hi)) = goal {
        push_pieces(&mut out, &rel, lo, hi, true);
    }
    out
}

/// Precomputed spell ready for repeated likelihood evaluation.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SpellData {
    pub side: Side,
    pub half: Half,
    pub state: ScoreState,
    pub terminal: SpellTerminal,
    pub match_index: usize,
    pub segs: Vec<CovariateValues>,
    pub pieces: Vec<Piece>,
}

impl SpellData {
    pub fn from_skeleton(sk: &SpellSkeleton, match_index: usize) -> Self {
        let ends: Vec<f64> = sk.pieces.iter().map(|p| p.0).collect();
        SpellData {
            side: sk.side,
            half: sk.half,
            state: sk.state,
            terminal: sk.terminal,
            match_index,
            segs: sk.pieces.iter().map(|p| p.1).collect(),
            pieces: build_pieces(sk.start, sk.end, sk.terminal, &ends),
        }
    }
}

/// Spells of a set of matches.
#[derive(Debug, Clone, PartialEq, Default)]
pub(crate) struct SpellSet {
    pub spells: Vec<SpellData>,
}

impl SpellSet {
    pub fn len(&self) -> usize {
        self.spells.len()
    }
}

/// Log-likelihood of one spell and its derivatives.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct SpellTerms {
    pub loglik: f64,
    /// `Σ_j ∂ℓ/∂η_j`.
    pub d_eta: f64,
    /// `Σ_j ∂ℓ/∂η_j · x_red,j`.
    pub d_red: f64,
    /// `Σ_j ∂ℓ/∂η_j · x_dev,j`.
    pub d_dev: f64,
    pub d_gamma: f64,
}

/// Shape-dependent constants: `ln Γ(1 + 1/γ)` and `ln Γ(z) − ψ(z)/γ`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ShapeConsts {
    pub gamma: f64,
    pub lg: f64,
    pub dlg: f64,
}

impl ShapeConsts {
    pub fn new(gamma: f64) -> Self {
        ShapeConsts { gamma, lg: ln_gamma(1.0 + 1.0 / gamma), dlg: dlog_rate_dshape(0.0, gamma) }
    }
}

/// Likelihood of a spell whose segment `j` has `η_j = base + β_red·x_red + β_dev·x_dev`.
pub(crate) fn spell_terms(sp: &SpellData, base: f64, beta: [f64; 2], shape: &ShapeConsts, grad: bool) -> SpellTerms {
    let g = shape.gamma;
    let mut t = SpellTerms::default();
    let (mut dd, mut dd_eta, mut dd_red, mut dd_dev, mut dd_gamma) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut has_goal = false;
    for pc in &sp.pieces {
        let x = sp.segs[pc.seg];
        let eta = base + beta[0] * x.red + beta[1] * x.dev;
        let rate = (g * (shape.lg - eta)).exp();
        let bg = (g * pc.ln_b).exp();
        let ag = if pc.a > 0.0 { (g * pc.ln_a).exp() } else { 0.0 };
        let h = rate * (bg - ag);
        let (dh_eta, dh_gamma) = if grad {
            let alog = if pc.a > 0.0 { ag * pc.ln_a } else { 0.0 };
            (-g * h, rate * ((shape.dlg - eta) * (bg - ag) + bg * pc.ln_b - alog))
        } else {
            (0.0, 0.0)
        };
        if pc.goal {
            has_goal = true;
            dd += h;
            dd_eta += dh_eta;
            dd_red += dh_eta * x.red;
            dd_dev += dh_eta * x.dev;
            dd_gamma += dh_gamma;
        } else {
            t.loglik -= h;
            t.d_eta -= dh_eta;
            t.d_red -= dh_eta * x.red;
            t.d_dev -= dh_eta * x.dev;
            t.d_gamma -= dh_gamma;
        }
    }
    if has_goal {
        t.loglik += (-(-dd).exp_m1()).ln();
        if grad {
            let k = 1.0 / dd.exp_m1();
            t.d_eta += k * dd_eta;
            t.d_red += k * dd_red;
            t.d_dev += k * dd_dev;
            t.d_gamma += k * dd_gamma;
        }
    }
    t
}

/// Log-likelihood contribution of a single spell under `shape`.
pub fn spell_log_likelihood(spell: &GoalSpell, shape: &ShapeSpec) -> Result<f64> {
    shape.validate()?;
    if spell.eta_path.is_empty() {
        return Err(Error::InvalidArgument("spell has no eta segments".into()));
    }
    let gamma = shape.gamma_for(spell.half, spell.state);
    let ends: Vec<f64> = spell.eta_path.iter().map(|s| s.end).collect();
    let data = SpellData {
        side: spell.side,
        half: spell.half,
        state: spell.state,
        terminal: spell.terminal,
        match_index: 0,
        // carry η in the deviation slot with unit coefficient
        segs: spell.eta_path.iter().map(|s| CovariateValues { red: 0.0, dev: s.eta }).collect(),
        pieces: build_pieces(spell.start, spell.end, spell.terminal, &ends),
    };
    let ll = spell_terms(&data, 0.0, [0.0, 1.0], &ShapeConsts::new(gamma), false).loglik;
    if ll.is_finite() {
        Ok(ll)
    } else {
        Err(Error::NumericOverflow(format!("spell log-likelihood {ll}")))
    }
}
