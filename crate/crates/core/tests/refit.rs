use chrono::{Days, NaiveDate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use inplay_core::aft::{CovariateCoeffs, ShapeSpec};
use inplay_core::domain::{MatchTimeline, TeamId};
use inplay_core::pipeline::config::ModelSpec;
use inplay_core::pipeline::refit::fit_components;
use inplay_core::pipeline::synth::{draw_ratings, round_robin};
use inplay_core::pipeline::{FitPlan, RunConfig};
use inplay_core::simulator::{generate_match, GeneratorConfig};

/// One team's attack rating drifts upward; the rolling fit should follow.
#[test]
fn fitted_attack_tracks_drift() {
    let start = NaiveDate::from_ymd_opt(2022, 8, 6).unwrap();
    let base = draw_ratings(16, 0.1, 9, start).unwrap();
    let drifting = TeamId::new("Team01").unwrap();
    let schedule = round_robin(16);
    let weeks = 2 * schedule.len();
    let attack_at = |gw: usize| -0.6 + 1.2 * gw as f64 / weeks as f64;
    let mut matches: Vec<MatchTimeline> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for gw in 0..weeks {
        let mut ratings = base.clone();
        ratings.attack.insert(drifting.clone(), attack_at(gw));
        let date = start.checked_add_days(Days::new(7 * gw as u64)).unwrap();
        for (k, &(h, a)) in schedule[gw % schedule.len()].iter().enumerate() {
            let home = TeamId::new(format!("Team{:02}", h + 1)).unwrap();
            let away = TeamId::new(format!("Team{:02}", a + 1)).unwrap();
            let tl = generate_match(
                &ratings,
                &ShapeSpec::reference_half_specific(),
                &CovariateCoeffs::default(),
                &home,
                &away,
                &format!("g{gw}-{k}"),
                date,
                &GeneratorConfig::default(),
                &mut rng,
            )
            .unwrap();
            matches.push(tl);
        }
    }
    let mut cfg = RunConfig::with_seed(1);
    cfg.models.select = vec![ModelSpec::parse("weibull").unwrap()];
    cfg.fit.xi = 0.03;
    let plan = FitPlan::from_config(&cfg);
    let fit_at = |gw: usize| {
        let cutoff = start.checked_add_days(Days::new(7 * gw as u64)).unwrap();
        let training: Vec<MatchTimeline> = matches.iter().filter(|m| m.date < cutoff).cloned().collect();
        let f = fit_components(&training, &[], cutoff, &plan, &cfg).unwrap();
        f.ratings.unwrap().attack[&drifting]
    };
    let (early, late) = (fit_at(weeks / 4), fit_at(weeks));
    assert!(late > early + 0.3, "early {early}, late {late}");
}
