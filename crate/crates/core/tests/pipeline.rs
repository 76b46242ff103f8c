use std::collections::BTreeMap;
use std::path::Path;

use inplay_core::pipeline::config::{DataConfig, SynthConfig};
use inplay_core::pipeline::report::{read_forecasts, ERROR_MANIFEST, MANIFEST};
use inplay_core::pipeline::{
    ingest, run_experiment, synthesize, write_dataset, write_error_manifest, ModelSpec, RunConfig, RunFailure,
};

fn league(dir: &Path, seed: u64) -> DataConfig {
    let cfg = SynthConfig { teams: 6, market_paths: 100, ..SynthConfig::default() };
    let lg = synthesize(&cfg, seed, 2).unwrap();
    let [events, odds, ou] = write_dataset(dir, &lg.dataset).unwrap();
    DataConfig { events, odds, ou, evaluation_from: Some("9".into()), stoppage_window: 240 }
}

fn config(data: DataConfig, models: &[&str]) -> RunConfig {
    let mut cfg = RunConfig::with_seed(5);
    cfg.data = Some(data);
    cfg.simulation.n_paths = 200;
    cfg.models.select = models.iter().map(|m| ModelSpec::parse(m).unwrap()).collect();
    cfg
}

fn read_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in walk(dir) {
        let rel = entry.strip_prefix(dir).unwrap().display().to_string();
        out.insert(rel, std::fs::read(&entry).unwrap());
    }
    out
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut files = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            files.extend(walk(&p));
        } else {
            files.push(p);
        }
    }
    files.sort();
    files
}

const ALL: [&str; 6] = ["betfair", "weibull_psi", "weibull_kappa_psi", "zou_kappa", "maia_psi", "maia_kappa"];

#[test]
fn end_to_end_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let data = league(&tmp.path().join("data"), 21);
    let cfg = config(data, &ALL);
    let dataset =
        ingest(&cfg.data.as_ref().unwrap().events, &cfg.data.as_ref().unwrap().odds, &cfg.data.as_ref().unwrap().ou)
            .unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let ma = run_experiment(&cfg, &dataset, &a).unwrap();
    let mb = run_experiment(&cfg, &dataset, &b).unwrap();
    assert_eq!(ma, mb);
    assert_eq!(ma.status, "ok");
    // two gameweeks of three matches each
    assert_eq!(ma.evaluation_matches, 6);
    let (fa, fb) = (read_dir(&a), read_dir(&b));
    assert_eq!(fa, fb);
    for f in [
        "forecasts.csv",
        "calibration.csv",
        "calibration_rivals.csv",
        "prematch_metrics.csv",
        "inplay_metrics.csv",
        "betting_summary.csv",
        "per_minute_curves.csv",
        "bets.csv",
        "pnl_curve.csv",
        "ev_sweep.csv",
        "goal_window.csv",
        "dataset.json",
        MANIFEST,
    ] {
        assert!(fa.contains_key(f), "missing {f}");
    }
    let calib = String::from_utf8(fa["calibration.csv"].clone()).unwrap();
    assert!(calib.starts_with("match_id,eta_init_H,eta_init_A,eta_kappa_H,eta_kappa_A,shift_H,shift_A,loss,iterations"));
    let fits: Vec<&String> = fa.keys().filter(|k| k.starts_with("fits/")).collect();
    assert_eq!(fits.len(), 2);
    let fit: serde_json::Value = serde_json::from_slice(&fa[fits[0]]).unwrap();
    let tags: Vec<&str> = fit["rivals"].as_array().unwrap().iter().map(|r| r["model"].as_str().unwrap()).collect();
    assert_eq!(tags, vec!["zou", "maia", "maia"]);

    // every model covers the same grid
    let rows = read_forecasts(&a.join("forecasts.csv")).unwrap();
    let per_model = rows.iter().filter(|r| r.model == "Betfair").count();
    assert_eq!(per_model, ma.points_per_model);
    assert_eq!(rows.len(), per_model * ALL.len());
}

#[test]
fn evaluation_ignores_later_matches() {
    let tmp = tempfile::tempdir().unwrap();
    let data = league(&tmp.path().join("data"), 33);
    let cfg = config(data.clone(), &["betfair", "weibull_kappa_psi", "zou", "maia_psi"]);
    let full = ingest(&data.events, &data.odds, &data.ou).unwrap();
    let mut truncated = full.clone();
    // drop gameweek 10 and mutate nothing else
    truncated.timelines.retain(|t| t.gameweek.as_deref() != Some("10"));
    assert!(truncated.timelines.len() < full.timelines.len());

    run_experiment(&cfg, &full, &tmp.path().join("full")).unwrap();
    run_experiment(&cfg, &truncated, &tmp.path().join("cut")).unwrap();
    let gw9: Vec<String> =
        full.timelines.iter().filter(|t| t.gameweek.as_deref() == Some("9")).map(|t| t.match_id.clone()).collect();
    let pick = |dir: &str| {
        read_forecasts(&tmp.path().join(dir).join("forecasts.csv"))
            .unwrap()
            .into_iter()
            .filter(|r| gw9.contains(&r.match_id))
            .collect::<Vec<_>>()
    };
    let (a, b) = (pick("full"), pick("cut"));
    assert!(!a.is_empty());
    assert_eq!(a, b);
    let fit = |dir: &str| std::fs::read(tmp.path().join(dir).join("fits/gameweek-9.json")).unwrap();
    assert_eq!(fit("full"), fit("cut"));
}

#[test]
fn market_only_run_needs_no_fits() {
    let tmp = tempfile::tempdir().unwrap();
    let data = league(&tmp.path().join("data"), 4);
    let cfg = config(data.clone(), &["betfair"]);
    let ds = ingest(&data.events, &data.odds, &data.ou).unwrap();
    let m = run_experiment(&cfg, &ds, &tmp.path().join("out")).unwrap();
    assert_eq!(m.models, vec!["Betfair".to_string()]);
    let bets = std::fs::read_to_string(tmp.path().join("out/bets.csv")).unwrap();
    assert_eq!(bets.lines().count(), 1, "header only");
    let inplay = std::fs::read_to_string(tmp.path().join("out/inplay_metrics.csv")).unwrap();
    assert!(inplay.starts_with("model,accuracy,rps,log_loss,n_points\nBetfair,"));
}

#[test]
fn failure_writes_error_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let data = league(&tmp.path().join("data"), 4);
    let mut cfg = config(data.clone(), &["betfair"]);
    cfg.data.as_mut().unwrap().evaluation_from = Some("99".into());
    let ds = ingest(&data.events, &data.odds, &data.ou).unwrap();
    let out = tmp.path().join("out");
    let failure: RunFailure = run_experiment(&cfg, &ds, &out).unwrap_err();
    assert_eq!(failure.stage, "split");
    let p = write_error_manifest(&out, Some(cfg.seed), &failure).unwrap();
    assert!(p.ends_with(ERROR_MANIFEST));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap();
    assert_eq!(v["status"], "error");
    assert_eq!(v["error"]["kind"], "config-error");
}
