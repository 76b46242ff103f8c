//! Forecast scoring: ranked probability score, log-loss, accuracy, and
//! per-minute curves relative to a benchmark model.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::domain::{ForecastTriple, Outcome};
use crate::error::{Error, Result};

/// Probability floor applied before taking logs.
pub const LOG_LOSS_FLOOR: f64 = 1e-12;

/// Ranked probability score over the ordered outcomes home, draw, away.
pub fn rps(forecast: &ForecastTriple, outcome: Outcome) -> f64 {
    // the second cumulative gap is minus the away gap, since both sides sum to one
    let observed = |o: Outcome| if o == outcome { 1.0 } else { 0.0 };
    let home = forecast.home() - observed(Outcome::Home);
    let away = forecast.away() - observed(Outcome::Away);
    (home * home + away * away) / 2.0
}

/// `-ln p_y` with `p_y` floored at [`LOG_LOSS_FLOOR`].
pub fn log_loss(forecast: &ForecastTriple, outcome: Outcome) -> f64 {
    -forecast.prob(outcome).max(LOG_LOSS_FLOOR).ln()
}

/// Whether the most likely outcome was realised.
pub fn hit(forecast: &ForecastTriple, outcome: Outcome) -> bool {
    forecast.argmax() == outcome
}

/// Evaluation minutes `0..=floor(full_time)`.
pub fn evaluation_grid(full_time: f64) -> std::ops::RangeInclusive<u32> {
    0..=full_time.floor().max(0.0) as u32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationPoint {
    pub match_id: String,
    pub minute: u32,
    pub model: String,
    pub forecast: ForecastTriple,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricSummary {
    pub accuracy: f64,
    pub rps: f64,
    pub log_loss: f64,
    pub n_points: usize,
}

#[derive(Default)]
struct Sums {
    hits: usize,
    rps: f64,
    log_loss: f64,
    n: usize,
}

impl Sums {
    fn add(&mut self, p: &EvaluationPoint) {
        self.hits += hit(&p.forecast, p.outcome) as usize;
        self.rps += rps(&p.forecast, p.outcome);
        self.log_loss += log_loss(&p.forecast, p.outcome);
        self.n += 1;
    }

    fn summary(&self) -> MetricSummary {
        let n = self.n.max(1) as f64;
        MetricSummary {
            accuracy: self.hits as f64 / n,
            rps: self.rps / n,
            log_loss: self.log_loss / n,
            n_points: self.n,
        }
    }
}

/// Point-weighted means over any set of points.
pub fn summarize<'a>(points: impl IntoIterator<Item = &'a EvaluationPoint>) -> MetricSummary {
    let mut s = Sums::default();
    for p in points {
        s.add(p);
    }
    s.summary()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinuteMetrics {
    pub minute: u32,
    pub metrics: MetricSummary,
    /// Mean log-loss minus the benchmark's at this minute; negative is better.
    pub delta_log_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub model: String,
    pub summary: MetricSummary,
    pub per_minute: Vec<MinuteMetrics>,
}

/// One row of a per-minute curve file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub minute: u32,
    pub model: String,
    pub mean_log_loss: f64,
    pub delta_vs_benchmark: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub benchmark: Option<String>,
    /// Models in order of first appearance.
    pub reports: Vec<MetricReport>,
}

impl Evaluation {
    pub fn report(&self, model: &str) -> Option<&MetricReport> {
        self.reports.iter().find(|r| r.model == model)
    }

    pub fn curve_rows(&self) -> Vec<CurveRow> {
        let mut out = Vec::new();
        for r in &self.reports {
            for m in &r.per_minute {
                out.push(CurveRow {
                    minute: m.minute,
                    model: r.model.clone(),
                    mean_log_loss: m.metrics.log_loss,
                    delta_vs_benchmark: m.delta_log_loss,
                });
            }
        }
        out
    }
}

/// Aggregates each model's points. All models must cover the same
/// `(match, minute)` grid; gaps are reported as an alignment error.
pub fn evaluate(points: &[EvaluationPoint], benchmark: Option<&str>) -> Result<Evaluation> {
    let mut order: Vec<&str> = Vec::new();
    let mut by_model: BTreeMap<&str, Vec<&EvaluationPoint>> = BTreeMap::new();
    for p in points {
        if !by_model.contains_key(p.model.as_str()) {
            order.push(&p.model);
        }
        by_model.entry(&p.model).or_default().push(p);
    }
    if let Some(b) = benchmark {
        if !by_model.contains_key(b) {
            return Err(Error::InvalidArgument(format!("benchmark model {b} has no evaluation points")));
        }
    }

    let mut grid: BTreeSet<(&str, u32)> = BTreeSet::new();
    for p in points {
        grid.insert((&p.match_id, p.minute));
    }
    let mut missing = Vec::new();
    for model in &order {
        let mut seen = BTreeSet::new();
        for p in &by_model[model] {
            if !seen.insert((p.match_id.as_str(), p.minute)) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate point for {model} at {}@{}",
                    p.match_id, p.minute
                )));
            }
        }
        for key in grid.difference(&seen) {
            missing.push(format!("{model}:{}@{}", key.0, key.1));
        }
    }
    if !missing.is_empty() {
        return Err(Error::Alignment { missing });
    }

    let per_minute = |pts: &[&EvaluationPoint]| -> BTreeMap<u32, MetricSummary> {
        let mut sums: BTreeMap<u32, Sums> = BTreeMap::new();
        for p in pts {
            sums.entry(p.minute).or_default().add(p);
        }
        sums.into_iter().map(|(m, s)| (m, s.summary())).collect()
    };
    let bench = benchmark.map(|b| per_minute(&by_model[b]));
    let reports = order
        .iter()
        .map(|model| {
            let pts = &by_model[model];
            let minutes = per_minute(pts);
            MetricReport {
                model: model.to_string(),
                summary: summarize(pts.iter().copied()),
                per_minute: minutes
                    .iter()
                    .map(|(&minute, m)| MinuteMetrics {
                        minute,
                        metrics: *m,
                        delta_log_loss: bench.as_ref().map(|b| m.log_loss - b[&minute].log_loss),
                    })
                    .collect(),
            }
        })
        .collect();
    Ok(Evaluation { benchmark: benchmark.map(str::to_string), reports })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(h: f64, d: f64, a: f64) -> ForecastTriple {
        ForecastTriple::new(h, d, a).unwrap()
    }

    #[test]
    fn rps_examples() {
        assert_eq!(rps(&t(1.0, 0.0, 0.0), Outcome::Home), 0.0);
        let u = ForecastTriple::uniform();
        assert!((rps(&u, Outcome::Home) - 5.0 / 18.0).abs() < 1e-15);
        assert_eq!(rps(&t(0.0, 0.0, 1.0), Outcome::Home), 1.0);
        assert!(rps(&t(0.0, 1.0, 0.0), Outcome::Home) < rps(&t(0.0, 0.0, 1.0), Outcome::Home));
    }

    #[test]
    fn log_loss_examples() {
        assert_eq!(log_loss(&t(1.0, 0.0, 0.0), Outcome::Home), 0.0);
        assert!((log_loss(&ForecastTriple::uniform(), Outcome::Draw) - 3f64.ln()).abs() < 1e-15);
        assert!((log_loss(&t(0.0, 0.5, 0.5), Outcome::Home) - 27.631021115928547).abs() < 1e-9);
    }

    #[test]
    fn grid_spans_full_time() {
        assert_eq!(evaluation_grid(95.6).count(), 96);
        assert_eq!(*evaluation_grid(90.0).end(), 90);
    }

    fn point(id: &str, minute: u32, model: &str, f: ForecastTriple, o: Outcome) -> EvaluationPoint {
        EvaluationPoint { match_id: id.into(), minute, model: model.into(), forecast: f, outcome: o }
    }

    #[test]
    fn identical_to_benchmark_has_zero_delta() {
        let mut pts = Vec::new();
        for m in 0..5 {
            let f = t(0.5, 0.3, 0.2);
            pts.push(point("a", m, "market", f, Outcome::Draw));
            pts.push(point("a", m, "copy", f, Outcome::Draw));
        }
        let ev = evaluate(&pts, Some("market")).unwrap();
        for m in &ev.report("copy").unwrap().per_minute {
            assert_eq!(m.delta_log_loss, Some(0.0));
        }
        assert_eq!(ev.report("copy").unwrap().summary.n_points, 5);
    }

    #[test]
    fn missing_points_are_listed() {
        let f = ForecastTriple::uniform();
        let pts = vec![
            point("a", 0, "x", f, Outcome::Home),
            point("a", 1, "x", f, Outcome::Home),
            point("a", 0, "y", f, Outcome::Home),
        ];
        match evaluate(&pts, None).unwrap_err() {
            Error::Alignment { missing } => assert_eq!(missing, vec!["y:a@1".to_string()]),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn aggregates_weight_points_equally() {
        let pts = vec![
            point("a", 0, "x", t(0.6, 0.2, 0.2), Outcome::Home),
            point("a", 1, "x", t(0.6, 0.2, 0.2), Outcome::Home),
            point("b", 0, "x", t(0.2, 0.2, 0.6), Outcome::Home),
        ];
        let s = evaluate(&pts, None).unwrap().reports[0].summary;
        assert!((s.accuracy - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.n_points, 3);
    }

    fn arb_triple() -> impl Strategy<Value = ForecastTriple> {
        (0.0f64..1.0, 0.0f64..1.0).prop_map(|(a, b)| {
            let h = a;
            let d = (1.0 - h) * b;
            ForecastTriple::from_home_draw(h, d).unwrap()
        })
    }

    fn arb_outcome() -> impl Strategy<Value = Outcome> {
        prop_oneof![Just(Outcome::Home), Just(Outcome::Draw), Just(Outcome::Away)]
    }

    proptest! {
        #[test]
        fn metric_ranges(f in arb_triple(), o in arb_outcome()) {
            let r = rps(&f, o);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&r));
            prop_assert!(log_loss(&f, o) >= 0.0);
        }

        #[test]
        fn order_invariant(fs in proptest::collection::vec((arb_triple(), arb_outcome()), 1..30), seed in 0u64..1000) {
            let pts: Vec<EvaluationPoint> = fs.iter().enumerate()
                .map(|(i, (f, o))| point(&format!("m{i}"), 0, "x", *f, *o)).collect();
            let mut shuffled = pts.clone();
            let n = shuffled.len();
            for i in 0..n {
                shuffled.swap(i, (seed as usize * 31 + i * 17) % n);
            }
            let a = evaluate(&pts, None).unwrap().reports[0].summary;
            let b = evaluate(&shuffled, None).unwrap().reports[0].summary;
            prop_assert!((a.rps - b.rps).abs() < 1e-12);
            prop_assert!((a.log_loss - b.log_loss).abs() < 1e-12);
            prop_assert_eq!(a.accuracy, b.accuracy);
        }
    }
}
