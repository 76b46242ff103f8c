//! Backtest of model forecasts against exchange-implied odds under unit or
//! Kelly staking, with commission on net match winnings.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{ForecastTriple, Outcome};
use crate::error::{Error, Result};

pub const DEFAULT_COMMISSION: f64 = 0.02;
/// Length of the goal window preceding an evaluation minute.
pub const GOAL_WINDOW: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StakingMode {
    Unit,
    Kelly,
}

impl StakingMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "unit" => Ok(StakingMode::Unit),
            "kelly" => Ok(StakingMode::Kelly),
            _ => Err(Error::InvalidArgument(format!("unknown staking mode {s}"))),
        }
    }
}

/// Kelly fraction `(b·p − q)/b` with `b = o − 1`, floored at zero.
pub fn kelly_fraction(p: f64, odds: f64) -> f64 {
    let b = odds - 1.0;
    if !(b > 0.0) {
        return 0.0;
    }
    ((b * p - (1.0 - p)) / b).clamp(0.0, 1.0)
}

pub fn expected_value(p: f64, odds: f64) -> f64 {
    p * odds - 1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetRecord {
    pub match_id: String,
    pub minute: u32,
    pub outcome: Outcome,
    pub stake: f64,
    pub odds: f64,
    pub model_p: f64,
    pub market_p: f64,
    pub ev: f64,
    /// Gross return once settled: `stake·(o − 1)` if won, `−stake` if lost.
    pub settled: Option<f64>,
    pub in_goal_window: bool,
}

impl BetRecord {
    fn gross(&self, result: Outcome) -> f64 {
        if self.outcome == result {
            self.stake * (self.odds - 1.0)
        } else {
            -self.stake
        }
    }
}

/// One evaluation point offered to the strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestPoint {
    pub match_id: String,
    pub minute: u32,
    pub forecast: ForecastTriple,
    /// Lagged exchange-implied probabilities; odds are their inverses.
    pub market: ForecastTriple,
    pub in_goal_window: bool,
}

/// Bets for one point. Unit mode backs the outcome with the largest positive
/// edge `p − q`; Kelly mode backs every positive-EV outcome. Both then keep
/// only bets with `EV ≥ ev_threshold`.
pub fn place_bets(point: &BacktestPoint, mode: StakingMode, ev_threshold: f64) -> Vec<BetRecord> {
    let p = point.forecast.as_array();
    let q = point.market.as_array();
    let record = |i: usize, stake: f64| {
        let odds = 1.0 / q[i];
        BetRecord {
            match_id: point.match_id.clone(),
            minute: point.minute,
            outcome: Outcome::ALL[i],
            stake,
            odds,
            model_p: p[i],
            market_p: q[i],
            ev: expected_value(p[i], odds),
            settled: None,
            in_goal_window: point.in_goal_window,
        }
    };
    let mut out = Vec::new();
    match mode {
        StakingMode::Unit => {
            let best =
                (0..3).filter(|&i| q[i] > 0.0 && p[i] > q[i]).max_by(|&a, &b| (p[a] - q[a]).total_cmp(&(p[b] - q[b])));
            if let Some(i) = best {
                out.push(record(i, 1.0));
            }
        }
        StakingMode::Kelly => {
            for i in 0..3 {
                if q[i] <= 0.0 {
                    continue;
                }
                let odds = 1.0 / q[i];
                let f = kelly_fraction(p[i], odds);
                if expected_value(p[i], odds) > 0.0 && f > 0.0 {
                    out.push(record(i, f));
                }
            }
        }
    }
    out.retain(|b| b.ev > 0.0 && b.ev >= ev_threshold);
    out
}

/// Net P&L of one match's bets: gross less commission on positive gross.
pub fn settle(bets: &[BetRecord], result: Outcome, commission: f64) -> f64 {
    let gross: f64 = bets.iter().map(|b| b.gross(result)).sum();
    gross - commission * gross.max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    pub mode: StakingMode,
    pub ev_threshold: f64,
    pub commission: f64,
    pub ev_sweep: Vec<f64>,
}

impl BacktestConfig {
    pub fn new(mode: StakingMode) -> Self {
        BacktestConfig {
            mode,
            ev_threshold: 0.0,
            commission: DEFAULT_COMMISSION,
            ev_sweep: (0..=10).map(|i| i as f64 * 0.05).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PnlPoint {
    pub match_index: usize,
    pub match_id: String,
    pub net: f64,
    pub cumulative: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvSweepRow {
    pub threshold: f64,
    pub bets: usize,
    pub staked: f64,
    pub net_profit: f64,
    pub roi_pct: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WindowSplit {
    pub bets: usize,
    pub staked: f64,
    pub gross: f64,
    pub gross_roi_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BettingReport {
    pub mode: StakingMode,
    pub bets: usize,
    pub win_pct: f64,
    pub total_staked: f64,
    pub net_profit: f64,
    pub roi_pct: f64,
    pub sharpe: f64,
    pub pnl_curve: Vec<PnlPoint>,
    pub ev_sweep: Vec<EvSweepRow>,
    pub in_goal_window: WindowSplit,
    pub outside_goal_window: WindowSplit,
    pub records: Vec<BetRecord>,
}

fn pct(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        100.0 * num / den
    } else {
        0.0
    }
}

/// Mean per-match net over its standard deviation, times `√n`.
pub fn sharpe_ratio(match_nets: &[f64]) -> f64 {
    let n = match_nets.len();
    if n < 2 {
        return 0.0;
    }
    let mean = match_nets.iter().sum::<f64>() / n as f64;
    let var = match_nets.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var <= 0.0 {
        return 0.0;
    }
    mean / var.sqrt() * (n as f64).sqrt()
}

/// Per-match nets in order of first appearance, keeping only bets that pass `keep`.
fn match_nets(
    order: &[String],
    bets: &BTreeMap<&str, Vec<&BetRecord>>,
    results: &BTreeMap<String, Outcome>,
    commission: f64,
    keep: impl Fn(&BetRecord) -> bool,
) -> Vec<f64> {
    order
        .iter()
        .map(|id| {
            let kept: Vec<BetRecord> = bets
                .get(id.as_str())
                .map(|v| v.iter().filter(|b| keep(b)).map(|b| (*b).clone()).collect())
                .unwrap_or_default();
            settle(&kept, results[id], commission)
        })
        .collect()
}

/// Runs the strategy over every point and settles each match at full time.
pub fn run_backtest(
    points: &[BacktestPoint],
    results: &BTreeMap<String, Outcome>,
    cfg: &BacktestConfig,
) -> Result<BettingReport> {
    let mut order: Vec<String> = Vec::new();
    for p in points {
        if !results.contains_key(&p.match_id) {
            return Err(Error::InvalidArgument(format!("no final result for match {}", p.match_id)));
        }
        if order.last() != Some(&p.match_id) && !order.contains(&p.match_id) {
            order.push(p.match_id.clone());
        }
    }
    let mut records: Vec<BetRecord> = points.iter().flat_map(|p| place_bets(p, cfg.mode, cfg.ev_threshold)).collect();
    for b in &mut records {
        b.settled = Some(b.gross(results[&b.match_id]));
    }
    let mut by_match: BTreeMap<&str, Vec<&BetRecord>> = BTreeMap::new();
    for b in &records {
        by_match.entry(&b.match_id).or_default().push(b);
    }

    let nets = match_nets(&order, &by_match, results, cfg.commission, |_| true);
    let mut cumulative = 0.0;
    let pnl_curve = order
        .iter()
        .zip(&nets)
        .enumerate()
        .map(|(i, (id, &net))| {
            cumulative += net;
            PnlPoint { match_index: i, match_id: id.clone(), net, cumulative }
        })
        .collect();

    let total_staked: f64 = records.iter().map(|b| b.stake).sum();
    let net_profit: f64 = nets.iter().sum();
    let wins = records.iter().filter(|b| b.outcome == results[&b.match_id]).count();

    let ev_sweep = cfg
        .ev_sweep
        .iter()
        .map(|&thr| {
            let keep = |b: &BetRecord| b.ev >= thr;
            let net: f64 = match_nets(&order, &by_match, results, cfg.commission, keep).iter().sum();
            let kept: Vec<&BetRecord> = records.iter().filter(|b| keep(b)).collect();
            let staked: f64 = kept.iter().map(|b| b.stake).sum();
            EvSweepRow { threshold: thr, bets: kept.len(), staked, net_profit: net, roi_pct: pct(net, staked) }
        })
        .collect();

    let split = |inside: bool| {
        let kept: Vec<&BetRecord> = records.iter().filter(|b| b.in_goal_window == inside).collect();
        let staked: f64 = kept.iter().map(|b| b.stake).sum();
        let gross: f64 = kept.iter().filter_map(|b| b.settled).sum();
        WindowSplit { bets: kept.len(), staked, gross, gross_roi_pct: pct(gross, staked) }
    };

    Ok(BettingReport {
        mode: cfg.mode,
        bets: records.len(),
        win_pct: pct(wins as f64, records.len() as f64),
        total_staked,
        net_profit,
        roi_pct: pct(net_profit, total_staked),
        sharpe: sharpe_ratio(&nets),
        pnl_curve,
        ev_sweep,
        in_goal_window: split(true),
        outside_goal_window: split(false),
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(h: f64, d: f64, a: f64) -> ForecastTriple {
        ForecastTriple::new(h, d, a).unwrap()
    }

    fn point(id: &str, minute: u32, f: ForecastTriple, m: ForecastTriple) -> BacktestPoint {
        BacktestPoint { match_id: id.into(), minute, forecast: f, market: m, in_goal_window: false }
    }

    #[test]
    fn kelly_examples() {
        assert!((kelly_fraction(0.5, 2.2) - 1.0 / 12.0).abs() < 1e-15);
        assert_eq!(kelly_fraction(0.25, 4.0), 0.0);
        assert_eq!(kelly_fraction(1.0, 3.0), 1.0);
    }

    #[test]
    fn settle_examples() {
        let p = point("m", 0, t(0.6, 0.2, 0.2), t(0.5, 0.25, 0.25));
        let bets = place_bets(&p, StakingMode::Unit, 0.0);
        assert_eq!(bets.len(), 1);
        assert_eq!(bets[0].outcome, Outcome::Home);
        assert!((bets[0].ev - 0.2).abs() < 1e-12);
        assert!((settle(&bets, Outcome::Home, 0.02) - 0.98).abs() < 1e-15);
        assert_eq!(settle(&bets, Outcome::Away, 0.02), -1.0);
        let mut pair = bets.clone();
        let mut other = bets[0].clone();
        other.outcome = Outcome::Away;
        pair.push(other);
        assert_eq!(settle(&pair, Outcome::Home, 0.02), 0.0);
    }

    #[test]
    fn kelly_can_back_two_outcomes() {
        let p = point("m", 0, t(0.45, 0.4, 0.15), t(0.4, 0.3, 0.3));
        let bets = place_bets(&p, StakingMode::Kelly, 0.0);
        assert_eq!(bets.len(), 2);
    }

    #[test]
    fn ev_threshold_filters_after_selection() {
        let p = point("m", 0, t(0.55, 0.2, 0.25), t(0.5, 0.3, 0.2));
        // largest edge is away (+0.05, EV 0.25) vs home (+0.05, EV 0.1)
        let bets = place_bets(&p, StakingMode::Unit, 0.2);
        assert!(bets.iter().all(|b| b.ev >= 0.2));
        assert!(bets.len() <= 1);
    }

    #[test]
    fn null_model_places_nothing() {
        let mut pts = Vec::new();
        let mut results = BTreeMap::new();
        for m in 0..10 {
            let q = t(0.45, 0.3, 0.25);
            pts.push(point(&format!("m{m}"), 0, q, q));
            results.insert(format!("m{m}"), Outcome::Home);
        }
        for mode in [StakingMode::Unit, StakingMode::Kelly] {
            let r = run_backtest(&pts, &results, &BacktestConfig::new(mode)).unwrap();
            assert_eq!(r.bets, 0);
            assert_eq!(r.net_profit, 0.0);
        }
    }

    #[test]
    fn sharpe_of_constant_is_zero() {
        assert_eq!(sharpe_ratio(&[1.0, 1.0, 1.0]), 0.0);
        let s = sharpe_ratio(&[1.0, -1.0, 2.0, 0.0]);
        let sd = (5.0f64 / 3.0).sqrt();
        assert!((s - 0.5 / sd * 2.0).abs() < 1e-12);
    }

    fn arb_triple() -> impl Strategy<Value = ForecastTriple> {
        (0.02f64..0.96, 0.0f64..1.0).prop_map(|(h, b)| {
            let d = (0.98 - h) * b + 0.01;
            ForecastTriple::from_home_draw(h, d).unwrap()
        })
    }

    proptest! {
        #[test]
        fn kelly_stake_bounds(p in 0.0f64..1.0, o in 1.01f64..50.0) {
            let f = kelly_fraction(p, o);
            prop_assert!((0.0..=1.0).contains(&f));
            prop_assert!(kelly_fraction(1.0 / o, o).abs() < 1e-12);
        }

        #[test]
        fn bet_counts_and_roi(pts in proptest::collection::vec((arb_triple(), arb_triple(), 0usize..3), 1..40)) {
            let mut points = Vec::new();
            let mut results = BTreeMap::new();
            for (i, (f, m, o)) in pts.iter().enumerate() {
                let id = format!("m{}", i / 4);
                results.insert(id.clone(), Outcome::ALL[*o]);
                let p = point(&id, i as u32, *f, *m);
                prop_assert!(place_bets(&p, StakingMode::Unit, 0.0).len() <= 1);
                prop_assert!(place_bets(&p, StakingMode::Kelly, 0.0).len() <= 3);
                points.push(p);
            }
            let r = run_backtest(&points, &results, &BacktestConfig::new(StakingMode::Kelly)).unwrap();
            if r.total_staked > 0.0 {
                prop_assert!((r.roi_pct / 100.0 - r.net_profit / r.total_staked).abs() < 1e-9);
            }
        }
    }
}
