//! Dataset ingestion, run configuration, rolling refits, synthetic data and
//! experiment orchestration with report writers.

pub mod config;
pub mod experiment;
pub mod ingest;
pub mod refit;
pub mod report;
pub mod synth;

pub use config::{ModelFamily, ModelSpec, RunConfig};
pub use experiment::{
    betting_stage, evaluate_stage, fit_stage, forecast_match, forecast_stage, in_goal_window, EvaluationTables,
    ForecastRow, Forecasts, ModelBacktest,
};
pub use ingest::{ingest, write_dataset, Dataset};
pub use refit::{gameweek_label, rolling_refit, FitPlan, GameweekFit, Split};
pub use report::{prepare, run_experiment, write_error_manifest, OutputDir, RunFailure, RunManifest};
pub use synth::{synthesize, SyntheticLeague, SyntheticTruth};

/// 64-bit FNV-1a hash.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Seed for one match: the run seed mixed with a hash of the match id, so
/// results do not depend on processing order.
pub fn match_seed(run_seed: u64, match_id: &str) -> u64 {
    // splitmix64 finaliser over the combined words
    let mut z = run_seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ fnv1a(match_id.as_bytes());
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
