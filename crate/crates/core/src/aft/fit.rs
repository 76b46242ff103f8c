//! Two-stage maximum likelihood: team ratings first, then shapes and
//! covariate coefficients with the ratings held fixed.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::decay::decay_weights;
use super::spell::{spell_skeletons, spell_terms, ShapeConsts, SpellData, SpellSet};
use super::{BoundaryMode, CovariateCoeffs, RatingSet, ShapeSpec};
use crate::covariates::{covariate_path, fit_baseline, Baseline, CovariateMode, CovariatePath, StatKind};
use crate::domain::{MatchTimeline, Side, TeamId};
use crate::error::{Error, Result};
use crate::optim::{bfgs, hessian_from_gradient, invert_spd, BfgsOptions};

/// Nested covariate specifications.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CovariateSpec {
    /// Shapes only.
    M0,
    /// Red-card difference.
    M1,
    /// Red cards plus goals deviation.
    M2,
    /// Red cards plus PSxG deviation.
    M3,
}

impl CovariateSpec {
    pub const ALL: [CovariateSpec; 4] = [CovariateSpec::M0, CovariateSpec::M1, CovariateSpec::M2, CovariateSpec::M3];

    pub fn tag(self) -> &'static str {
        match self {
            CovariateSpec::M0 => "M0",
            CovariateSpec::M1 => "M1",
            CovariateSpec::M2 => "M2",
            CovariateSpec::M3 => "M3",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        CovariateSpec::ALL
            .into_iter()
            .find(|c| c.tag().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown covariate spec '{s}'")))
    }

    pub fn has_red(self) -> bool {
        self != CovariateSpec::M0
    }

    pub fn deviation(self) -> Option<StatKind> {
        match self {
            CovariateSpec::M2 => Some(StatKind::Goals),
            CovariateSpec::M3 => Some(StatKind::Psxg),
            _ => None,
        }
    }

    /// Path mode needed to evaluate this spec's covariates.
    pub fn mode(self) -> CovariateMode {
        match self {
            CovariateSpec::M0 => CovariateMode::None,
            CovariateSpec::M1 | CovariateSpec::M2 => CovariateMode::Goals,
            CovariateSpec::M3 => CovariateMode::Psxg,
        }
    }

    fn dev_name(self) -> Option<&'static str> {
        match self.deviation()? {
            StatKind::Goals => Some("beta_goals"),
            StatKind::Psxg => Some("beta_psxg"),
        }
    }

    /// Builds coefficients for this spec from the fitted red and deviation values.
    pub fn coeffs(self, red: f64, dev: f64) -> CovariateCoeffs {
        CovariateCoeffs {
            beta_red: self.has_red().then_some(red),
            beta_goals: (self.deviation() == Some(StatKind::Goals)).then_some(dev),
            beta_psxg: (self.deviation() == Some(StatKind::Psxg)).then_some(dev),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Decay rate per half-week.
    pub xi: f64,
    pub boundary: BoundaryMode,
    pub shape_init: ShapeSpec,
    pub covariates: CovariateSpec,
    pub psxg_baseline: Option<Baseline>,
    pub goals_baseline: Option<Baseline>,
    /// Apply decay weights in the shape/covariate stage as well.
    pub weighted_stage2: bool,
    pub max_iter: usize,
    pub standard_errors: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            xi: 0.0065,
            boundary: BoundaryMode::Reset,
            shape_init: ShapeSpec::HalfSpecific { first: 1.0, second: 1.0 },
            covariates: CovariateSpec::M0,
            psxg_baseline: None,
            goals_baseline: None,
            weighted_stage2: false,
            max_iter: 1000,
            standard_errors: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub name: String,
    pub value: f64,
    pub se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: String,
    pub estimates: Vec<Estimate>,
    pub loglik: f64,
    pub k: usize,
    /// Number of spells contributing to the likelihood.
    pub n_obs: usize,
    pub bic: f64,
    pub boundary: BoundaryMode,
    pub converged: bool,
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nested_in: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lrt_p_value: Option<f64>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl FitReport {
    pub fn estimate(&self, name: &str) -> Option<&Estimate> {
        self.estimates.iter().find(|e| e.name == name)
    }

    pub fn bic_from(k: usize, n_obs: usize, loglik: f64) -> f64 {
        k as f64 * (n_obs as f64).ln() - 2.0 * loglik
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeFit {
    pub shape: ShapeSpec,
    pub coeffs: CovariateCoeffs,
    pub report: FitReport,
}

/// Parameter-independent inputs for one spell.
struct Obs {
    data: SpellData,
    attack: usize,
    defence: usize,
    home: bool,
    weight: f64,
    shape_idx: usize,
    /// Fixed part of `η` when ratings are held fixed.
    offset: f64,
}

fn check_shape(shape: &ShapeSpec, boundary: BoundaryMode) -> Result<()> {
    shape.validate()?;
    if shape.is_half_specific() && boundary == BoundaryMode::Continuous {
        return Err(Error::InvalidArgument("half-specific shapes need the reset boundary mode".into()));
    }
    Ok(())
}

fn baseline_for(matches: &[MatchTimeline], spec: CovariateSpec, opts: &FitOptions) -> Result<Option<Baseline>> {
    Ok(match spec {
        CovariateSpec::M0 => None,
        CovariateSpec::M1 => Some(Baseline::zero()),
        CovariateSpec::M2 => Some(match opts.goals_baseline {
            Some(b) => b,
            None => fit_baseline(matches, StatKind::Goals)?,
        }),
        CovariateSpec::M3 => Some(match opts.psxg_baseline {
            Some(b) => b,
            None => fit_baseline(matches, StatKind::Psxg)?,
        }),
    })
}

fn paths_for(matches: &[MatchTimeline], spec: CovariateSpec, opts: &FitOptions) -> Result<Vec<CovariatePath>> {
    let baseline = baseline_for(matches, spec, opts)?;
    matches.iter().map(|m| covariate_path(m, baseline.as_ref(), spec.mode())).collect()
}

fn collect_obs(
    matches: &[MatchTimeline],
    paths: &[CovariatePath],
    weights: &[f64],
    team_index: &BTreeMap<TeamId, usize>,
    shape: &ShapeSpec,
    boundary: BoundaryMode,
) -> (Vec<Obs>, SpellSet) {
    let mut obs = Vec::new();
    for (mi, (m, path)) in matches.iter().zip(paths).enumerate() {
        let h = team_index[&m.home];
        let a = team_index[&m.away];
        for sk in spell_skeletons(m, path, boundary) {
            let data = SpellData::from_skeleton(&sk, mi);
            let (attack, defence, home) = match sk.side {
                Side::Home => (h, a, true),
                Side::Away => (a, h, false),
            };
            obs.push(Obs {
                shape_idx: shape.index_for(sk.half, sk.state),
                data,
                attack,
                defence,
                home,
                weight: weights[mi],
                offset: 0.0,
            });
        }
    }
    let set = SpellSet { spells: obs.iter().map(|o| o.data.clone()).collect() };
    (obs, set)
}

/// Index layout of the optimisation vector.
#[derive(Debug, Clone, Copy)]
struct Layout {
    /// Number of teams when ratings are free, 0 when fixed.
    teams: usize,
    red: Option<usize>,
    dev: Option<usize>,
    gamma_start: usize,
    n_gamma: usize,
}

impl Layout {
    fn new(teams: usize, spec: CovariateSpec, n_gamma: usize) -> Self {
        let mut next = if teams > 0 { 2 + 2 * (teams - 1) } else { 0 };
        let red = spec.has_red().then(|| {
            next += 1;
            next - 1
        });
        let dev = spec.deviation().map(|_| {
            next += 1;
            next - 1
        });
        Layout { teams, red, dev, gamma_start: next, n_gamma }
    }

    fn len(&self) -> usize {
        self.gamma_start + self.n_gamma
    }

    fn attack_idx(&self, j: usize) -> usize {
        2 + j
    }

    fn defence_idx(&self, j: usize) -> usize {
        2 + (self.teams - 1) + j
    }

    /// Full attack and defence vectors with the last team set by sum-to-zero.
    fn ratings(&self, theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let k = self.teams;
        let mut a: Vec<f64> = (0..k - 1).map(|j| theta[self.attack_idx(j)]).collect();
        let mut d: Vec<f64> = (0..k - 1).map(|j| theta[self.defence_idx(j)]).collect();
        a.push(-a.iter().sum::<f64>());
        d.push(-d.iter().sum::<f64>());
        (a, d)
    }
}

/// Negative weighted log-likelihood and its gradient.
fn objective(obs: &[Obs], layout: &Layout, theta: &[f64], grad: Option<&mut [f64]>) -> f64 {
    let consts: Vec<ShapeConsts> =
        (0..layout.n_gamma).map(|i| ShapeConsts::new(theta[layout.gamma_start + i].exp())).collect();
    let beta = [layout.red.map_or(0.0, |i| theta[i]), layout.dev.map_or(0.0, |i| theta[i])];
    let (a, d) = if layout.teams > 0 { layout.ratings(theta) } else { (vec![], vec![]) };
    let want = grad.is_some();
    let k = layout.teams;
    let mut g_att = vec![0.0; k];
    let mut g_def = vec![0.0; k];
    let (mut g_mu, mut g_home, mut g_red, mut g_dev) = (0.0, 0.0, 0.0, 0.0);
    let mut g_gamma = vec![0.0; layout.n_gamma];
    let mut ll = 0.0;
    for o in obs {
        let base =
            if k > 0 { theta[0] + if o.home { theta[1] } else { 0.0 } + a[o.attack] + d[o.defence] } else { o.offset };
        let t = spell_terms(&o.data, base, beta, &consts[o.shape_idx], want);
        ll += o.weight * t.loglik;
        if want {
            let w = o.weight;
            if k > 0 {
                g_mu += w * t.d_eta;
                if o.home {
                    g_home += w * t.d_eta;
                }
                g_att[o.attack] += w * t.d_eta;
                g_def[o.defence] += w * t.d_eta;
            }
            g_red += w * t.d_red;
            g_dev += w * t.d_dev;
            g_gamma[o.shape_idx] += w * t.d_gamma * consts[o.shape_idx].gamma;
        }
    }
    if let Some(g) = grad {
        g.fill(0.0);
        if k > 0 {
            g[0] = -g_mu;
            g[1] = -g_home;
            for j in 0..k - 1 {
                g[layout.attack_idx(j)] = -(g_att[j] - g_att[k - 1]);
                g[layout.defence_idx(j)] = -(g_def[j] - g_def[k - 1]);
            }
        }
        if let Some(i) = layout.red {
            g[i] = -g_red;
        }
        if let Some(i) = layout.dev {
            g[i] = -g_dev;
        }
        for (i, v) in g_gamma.iter().enumerate() {
            g[layout.gamma_start + i] = -v;
        }
    }
    if ll.is_finite() {
        -ll
    } else {
        f64::INFINITY
    }
}

struct Optimum {
    theta: Vec<f64>,
    loglik: f64,
    cov: Option<DMatrix<f64>>,
    iterations: usize,
    converged: bool,
}

fn optimise(obs: &[Obs], layout: &Layout, theta0: Vec<f64>, opts: &FitOptions) -> Result<Optimum> {
    let bopts = BfgsOptions { max_iter: opts.max_iter, ..Default::default() };
    let m = bfgs(|x, g| objective(obs, layout, x, Some(g)), &theta0, bopts)?;
    if !m.converged {
        return Err(Error::FitFailure {
            iterations: m.iterations,
            reason: format!("no convergence (negative log-likelihood {:.6})", m.value),
        });
    }
    let cov = if opts.standard_errors {
        let hess = hessian_from_gradient(
            |x, g| {
                objective(obs, layout, x, Some(g));
            },
            &m.x,
        );
        invert_spd(&hess)
    } else {
        None
    };
    Ok(Optimum { loglik: -m.value, theta: m.x, cov, iterations: m.iterations, converged: m.converged })
}

fn se(cov: &Option<DMatrix<f64>>, i: usize) -> Option<f64> {
    cov.as_ref().map(|c| c[(i, i)].max(0.0).sqrt())
}

fn shape_estimates(shape: &ShapeSpec, layout: &Layout, opt: &Optimum) -> (ShapeSpec, Vec<Estimate>) {
    let gammas: Vec<f64> = (0..layout.n_gamma).map(|i| opt.theta[layout.gamma_start + i].exp()).collect();
    let fitted = shape.with_values(&gammas);
    let est = shape
        .names()
        .iter()
        .enumerate()
        .map(|(i, n)| Estimate {
            name: n.to_string(),
            value: gammas[i],
            se: se(&opt.cov, layout.gamma_start + i).map(|s| s * gammas[i]),
        })
        .collect();
    (fitted, est)
}

fn coeff_estimates(spec: CovariateSpec, layout: &Layout, opt: &Optimum) -> (CovariateCoeffs, Vec<Estimate>) {
    let mut est = Vec::new();
    let red = layout.red.map_or(0.0, |i| opt.theta[i]);
    let dev = layout.dev.map_or(0.0, |i| opt.theta[i]);
    if let Some(i) = layout.red {
        est.push(Estimate { name: "beta_red".into(), value: red, se: se(&opt.cov, i) });
    }
    if let (Some(i), Some(name)) = (layout.dev, spec.dev_name()) {
        est.push(Estimate { name: name.into(), value: dev, se: se(&opt.cov, i) });
    }
    (spec.coeffs(red, dev), est)
}

fn sanity(matches: &[MatchTimeline]) -> Result<()> {
    if matches.is_empty() {
        return Err(Error::InvalidArgument("no matches to fit".into()));
    }
    Ok(())
}

/// Mean gap time on the log scale, a starting point for the intercept.
fn initial_mu(matches: &[MatchTimeline]) -> f64 {
    let exposure: f64 = matches.iter().map(|m| 2.0 * m.play_end()).sum();
    let goals: f64 = matches.iter().map(|m| (m.final_score.0 + m.final_score.1) as f64).sum();
    (exposure / goals.max(1.0)).ln()
}

/// Stage one: intercept, home advantage, attack/defence ratings and shapes
/// (plus the configured covariates) by decay-weighted maximum likelihood.
pub fn fit_team_ratings(
    matches: &[MatchTimeline],
    as_of: NaiveDate,
    opts: &FitOptions,
) -> Result<(RatingSet, FitReport)> {
    sanity(matches)?;
    check_shape(&opts.shape_init, opts.boundary)?;
    let teams: Vec<TeamId> = {
        let mut t: Vec<TeamId> = matches.iter().flat_map(|m| [m.home.clone(), m.away.clone()]).collect();
        t.sort();
        t.dedup();
        t
    };
    if teams.len() < 2 {
        return Err(Error::InvalidArgument("need at least two distinct teams".into()));
    }
    let team_index: BTreeMap<TeamId, usize> = teams.iter().cloned().enumerate().map(|(i, t)| (t, i)).collect();
    let dates: Vec<NaiveDate> = matches.iter().map(|m| m.date).collect();
    let weights = decay_weights(&dates, as_of, opts.xi)?;
    let spec = opts.covariates;
    let paths = paths_for(matches, spec, opts)?;
    let (obs, set) = collect_obs(matches, &paths, &weights, &team_index, &opts.shape_init, opts.boundary);

    let shape_vals = opts.shape_init.values();
    let layout = Layout::new(teams.len(), spec, shape_vals.len());
    let mut theta0 = vec![0.0; layout.len()];
    theta0[0] = initial_mu(matches);
    for (i, g) in shape_vals.iter().enumerate() {
        theta0[layout.gamma_start + i] = g.ln();
    }
    let opt = optimise(&obs, &layout, theta0, opts)?;

    let k = teams.len();
    let (a, d) = layout.ratings(&opt.theta);
    let mut estimates = vec![
        Estimate { name: "mu".into(), value: opt.theta[0], se: se(&opt.cov, 0) },
        Estimate { name: "beta_home".into(), value: opt.theta[1], se: se(&opt.cov, 1) },
    ];
    // variance of the constrained last rating: 1ᵀ Σ 1 over the free block
    let last_se = |offset: fn(&Layout, usize) -> usize| {
        opt.cov.as_ref().map(|c| {
            let mut v = 0.0;
            for i in 0..k - 1 {
                for j in 0..k - 1 {
                    v += c[(offset(&layout, i), offset(&layout, j))];
                }
            }
            v.max(0.0).sqrt()
        })
    };
    for (label, vals, offset) in [
        ("attack", &a, Layout::attack_idx as fn(&Layout, usize) -> usize),
        ("defence", &d, Layout::defence_idx as fn(&Layout, usize) -> usize),
    ] {
        for (j, t) in teams.iter().enumerate() {
            let s = if j + 1 < k { se(&opt.cov, offset(&layout, j)) } else { last_se(offset) };
            estimates.push(Estimate { name: format!("{label}[{t}]"), value: vals[j], se: s });
        }
    }
    let (_, cest) = coeff_estimates(spec, &layout, &opt);
    estimates.extend(cest);
    let (_, sest) = shape_estimates(&opts.shape_init, &layout, &opt);
    estimates.extend(sest);

    let mut warnings = Vec::new();
    if opts.standard_errors && opt.cov.is_none() {
        warnings.push("singular Hessian: standard errors unavailable".to_string());
    }
    let ratings = RatingSet {
        mu: opt.theta[0],
        beta_home: opt.theta[1],
        attack: teams.iter().cloned().zip(a.iter().copied()).collect(),
        defence: teams.iter().cloned().zip(d.iter().copied()).collect(),
        as_of,
        decay_xi: opts.xi,
    };
    let n_obs = set.len();
    let report = FitReport {
        model: format!("ratings-{}", spec.tag()),
        estimates,
        loglik: opt.loglik,
        k: layout.len(),
        n_obs,
        bic: FitReport::bic_from(layout.len(), n_obs, opt.loglik),
        boundary: opts.boundary,
        converged: opt.converged,
        iterations: opt.iterations,
        nested_in: None,
        lrt_p_value: None,
        warnings,
    };
    Ok((ratings, report))
}

/// Stage two: shapes and covariate coefficients with ratings fixed.
pub fn fit_shape_and_covariates(
    matches: &[MatchTimeline],
    ratings: &RatingSet,
    spec: CovariateSpec,
    opts: &FitOptions,
) -> Result<ShapeFit> {
    sanity(matches)?;
    check_shape(&opts.shape_init, opts.boundary)?;
    let teams: Vec<TeamId> = ratings.teams().cloned().collect();
    let team_index: BTreeMap<TeamId, usize> = teams.iter().cloned().enumerate().map(|(i, t)| (t, i)).collect();
    for m in matches {
        for t in [&m.home, &m.away] {
            if !team_index.contains_key(t) {
                return Err(Error::MissingTeam(t.to_string()));
            }
        }
    }
    let weights = if opts.weighted_stage2 {
        let dates: Vec<NaiveDate> = matches.iter().map(|m| m.date).collect();
        decay_weights(&dates, ratings.as_of, ratings.decay_xi)?
    } else {
        vec![1.0; matches.len()]
    };
    let paths = paths_for(matches, spec, opts)?;
    let (mut obs, set) = collect_obs(matches, &paths, &weights, &team_index, &opts.shape_init, opts.boundary);
    let a: Vec<f64> = teams.iter().map(|t| ratings.attack[t]).collect();
    let d: Vec<f64> = teams.iter().map(|t| ratings.defence[t]).collect();
    for o in &mut obs {
        o.offset = ratings.mu + if o.home { ratings.beta_home } else { 0.0 } + a[o.attack] + d[o.defence];
    }

    let shape_vals = opts.shape_init.values();
    let layout = Layout::new(0, spec, shape_vals.len());
    let mut theta0 = vec![0.0; layout.len()];
    for (i, g) in shape_vals.iter().enumerate() {
        theta0[layout.gamma_start + i] = g.ln();
    }
    let opt = optimise(&obs, &layout, theta0, opts)?;
    let (coeffs, mut estimates) = coeff_estimates(spec, &layout, &opt);
    let (shape, sest) = shape_estimates(&opts.shape_init, &layout, &opt);
    estimates.extend(sest);
    let mut warnings = Vec::new();
    if opts.standard_errors && opt.cov.is_none() {
        warnings.push("singular Hessian: standard errors unavailable".to_string());
    }
    let n_obs = set.len();
    let report = FitReport {
        model: spec.tag().to_string(),
        estimates,
        loglik: opt.loglik,
        k: layout.len(),
        n_obs,
        bic: FitReport::bic_from(layout.len(), n_obs, opt.loglik),
        boundary: opts.boundary,
        converged: opt.converged,
        iterations: opt.iterations,
        nested_in: None,
        lrt_p_value: None,
        warnings,
    };
    Ok(ShapeFit { shape, coeffs, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Half, MatchEvent};

    fn team(s: &str) -> TeamId {
        TeamId::new(s).unwrap()
    }

    fn date() -> NaiveDate {
        NaiveDate::from_ymd_opt(2024, 3, 1).unwrap()
    }

    /// Small deterministic league: team "S" scores early and often.
    fn league() -> Vec<MatchTimeline> {
        let names = ["S", "B", "C", "D"];
        let mut out = Vec::new();
        let mut n = 0;
        for round in 0..6 {
            for (i, h) in names.iter().enumerate() {
                for (j, a) in names.iter().enumerate() {
                    if i == j {
                        continue;
                    }
                    n += 1;
                    let mut ev = Vec::new();
                    let base = (n * 7 + round * 3) % 40;
                    if *h == "S" || *a == "S" {
                        for k in 0..3 {
                            ev.push(MatchEvent::goal(Half::First, (5 + base / 4 + 12 * k) as f64, team("S")));
                        }
                    }
                    let other = if *h == "S" { a } else { h };
                    ev.push(MatchEvent::goal(Half::Second, (50 + base) as f64, team(other)));
                    out.push(
                        MatchTimeline::from_events(format!("m{n}"), date(), team(h), team(a), ev, 46.0, 94.0).unwrap(),
                    );
                }
            }
        }
        out
    }

    #[test]
    fn dominant_team_has_lowest_attack() {
        let opts = FitOptions { xi: 0.0, ..Default::default() };
        let (r, rep) = fit_team_ratings(&league(), date(), &opts).unwrap();
        r.validate().unwrap();
        let s = r.attack[&team("S")];
        assert!(r.attack.values().all(|v| *v >= s));
        assert!(s < 0.0);
        assert!((rep.bic - FitReport::bic_from(rep.k, rep.n_obs, rep.loglik)).abs() < 1e-9);
        assert!(rep.estimate("attack[S]").unwrap().se.is_some());
    }

    #[test]
    fn reduced_optimum_is_unique() {
        let matches = league();
        let opts = FitOptions { xi: 0.0, standard_errors: false, ..Default::default() };
        let (r1, _) = fit_team_ratings(&matches, date(), &opts).unwrap();
        let opts2 = FitOptions { shape_init: ShapeSpec::HalfSpecific { first: 1.6, second: 0.7 }, ..opts };
        let (r2, _) = fit_team_ratings(&matches, date(), &opts2).unwrap();
        assert!((r1.mu - r2.mu).abs() < 1e-4);
        for t in r1.teams() {
            assert!((r1.attack[t] - r2.attack[t]).abs() < 1e-4);
            assert!((r1.defence[t] - r2.defence[t]).abs() < 1e-4);
        }
    }

    #[test]
    fn half_specific_needs_reset() {
        let opts = FitOptions { boundary: BoundaryMode::Continuous, ..Default::default() };
        assert!(fit_team_ratings(&league(), date(), &opts).is_err());
    }

    #[test]
    fn stage_two_missing_team() {
        let matches = league();
        let r = RatingSet::flat(4.0, 0.0, [team("S"), team("B")], date());
        let err = fit_shape_and_covariates(&matches, &r, CovariateSpec::M0, &FitOptions::default()).unwrap_err();
        assert_eq!(err.kind(), "missing-team");
    }

    #[test]
    fn stage_two_reports() {
        let matches = league();
        let opts = FitOptions { xi: 0.0, ..Default::default() };
        let (r, _) = fit_team_ratings(&matches, date(), &opts).unwrap();
        let fit = fit_shape_and_covariates(&matches, &r, CovariateSpec::M1, &opts).unwrap();
        assert_eq!(fit.report.k, 3);
        assert!(fit.coeffs.beta_red.is_some() && fit.coeffs.beta_psxg.is_none());
        assert!(fit.report.estimate("gamma_2h").is_some());
    }
}
