//! Declarative run configuration loaded from TOML. Unknown keys are
//! rejected; every default matches the reference protocol.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aft::{BoundaryMode, CovariateSpec, ShapeSpec};
use crate::betting::{StakingMode, DEFAULT_COMMISSION};
use crate::domain::MarketSnapshot;
use crate::error::{Error, Result};
use crate::simulator::{DEFAULT_STOPPAGE_FIRST, DEFAULT_STOPPAGE_SECOND};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    Betfair,
    Weibull,
    Zou,
    Maia,
}

/// A forecasting model: family, kickoff calibration and in-play PSxG use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModelSpec {
    pub family: ModelFamily,
    pub calibrated: bool,
    pub psxg: bool,
}

impl ModelSpec {
    pub const BETFAIR: ModelSpec = ModelSpec { family: ModelFamily::Betfair, calibrated: false, psxg: false };

    /// Parses `family[_kappa][_psi]`, e.g. `weibull_kappa_psi` or `zou_kappa`.
    pub fn parse(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let mut parts = lower.split('_');
        let family = match parts.next().unwrap_or_default() {
            "betfair" | "market" => ModelFamily::Betfair,
            "weibull" => ModelFamily::Weibull,
            "zou" => ModelFamily::Zou,
            "maia" => ModelFamily::Maia,
            other => return Err(Error::Config(format!("unknown model family '{other}' in '{s}'"))),
        };
        let (mut calibrated, mut psxg) = (false, false);
        for p in parts {
            match p {
                "kappa" if !calibrated => calibrated = true,
                "psi" if !psxg => psxg = true,
                _ => return Err(Error::Config(format!("unknown model modifier '{p}' in '{s}'"))),
            }
        }
        let spec = ModelSpec { family, calibrated, psxg };
        match family {
            ModelFamily::Betfair if calibrated || psxg => {
                Err(Error::Config("the market benchmark takes no modifiers".into()))
            }
            ModelFamily::Zou if psxg => Err(Error::Config("the Zou model has no PSxG term".into())),
            _ => Ok(spec),
        }
    }

    /// Report label, e.g. `Weibull_kappa_psi`.
    pub fn label(&self) -> String {
        let mut s = match self.family {
            ModelFamily::Betfair => "Betfair",
            ModelFamily::Weibull => "Weibull",
            ModelFamily::Zou => "Zou",
            ModelFamily::Maia => "Maia",
        }
        .to_string();
        if self.calibrated {
            s.push_str("_kappa");
        }
        if self.psxg {
            s.push_str("_psi");
        }
        s
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl Serialize for ModelSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.label())
    }
}

impl<'de> Deserialize<'de> for ModelSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        ModelSpec::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub events: PathBuf,
    pub odds: PathBuf,
    pub ou: PathBuf,
    /// First evaluation gameweek label; defaults to the last tenth of gameweeks.
    #[serde(default)]
    pub evaluation_from: Option<String>,
    /// Training matches preceding each gameweek used for stoppage means.
    #[serde(default = "default_window")]
    pub stoppage_window: usize,
}

fn default_window() -> usize {
    240
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Single,
    HalfSpecific,
    ScoreState,
}

impl ShapeKind {
    /// Starting values for the fit.
    pub fn initial(self) -> ShapeSpec {
        match self {
            ShapeKind::Single => ShapeSpec::Single { gamma: 1.0 },
            ShapeKind::HalfSpecific => ShapeSpec::HalfSpecific { first: 1.0, second: 1.0 },
            ShapeKind::ScoreState => ShapeSpec::ScoreState { leading: 1.0, tied: 1.0, trailing: 1.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    #[serde(default = "default_xi")]
    pub xi: f64,
    /// Covariates used by the `_psi` Weibull variants.
    #[serde(default = "default_covariates")]
    pub covariates: CovariateSpec,
    #[serde(default = "default_shape")]
    pub shape: ShapeKind,
    #[serde(default)]
    pub boundary: BoundaryMode,
    #[serde(default)]
    pub weighted_stage2: bool,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_xi() -> f64 {
    0.0065
}
fn default_covariates() -> CovariateSpec {
    CovariateSpec::M3
}
fn default_shape() -> ShapeKind {
    ShapeKind::HalfSpecific
}
fn default_max_iter() -> usize {
    1000
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            xi: default_xi(),
            covariates: default_covariates(),
            shape: default_shape(),
            boundary: BoundaryMode::Reset,
            weighted_stage2: false,
            max_iter: default_max_iter(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelsConfig {
    #[serde(default = "default_models")]
    pub select: Vec<ModelSpec>,
}

fn default_models() -> Vec<ModelSpec> {
    ["betfair", "weibull_psi", "weibull_kappa_psi", "zou_kappa", "maia_psi", "maia_kappa_psi"]
        .iter()
        .map(|s| ModelSpec::parse(s).expect("built-in model tag"))
        .collect()
}

impl Default for ModelsConfig {
    fn default() -> Self {
        ModelsConfig { select: default_models() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default = "default_u1")]
    pub stoppage_first: f64,
    #[serde(default = "default_u2")]
    pub stoppage_second: f64,
    /// Replace the fixed stoppage means with means over the training window.
    #[serde(default)]
    pub stoppage_from_data: bool,
    /// Simulate to each match's actual half lengths.
    #[serde(default)]
    pub oracle: bool,
}

fn default_paths() -> usize {
    10_000
}
fn default_u1() -> f64 {
    DEFAULT_STOPPAGE_FIRST
}
fn default_u2() -> f64 {
    DEFAULT_STOPPAGE_SECOND
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            n_paths: default_paths(),
            stoppage_first: default_u1(),
            stoppage_second: default_u2(),
            stoppage_from_data: false,
            oracle: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BettingConfig {
    #[serde(default = "default_staking")]
    pub staking: Vec<StakingMode>,
    #[serde(default = "default_commission")]
    pub commission: f64,
    /// Minutes between an evaluation minute and the price it is compared with.
    #[serde(default = "default_lag")]
    pub lag: i64,
    #[serde(default)]
    pub ev_threshold: f64,
}

fn default_staking() -> Vec<StakingMode> {
    vec![StakingMode::Unit, StakingMode::Kelly]
}
fn default_commission() -> f64 {
    DEFAULT_COMMISSION
}
fn default_lag() -> i64 {
    MarketSnapshot::DEFAULT_LAG
}

impl Default for BettingConfig {
    fn default() -> Self {
        BettingConfig {
            staking: default_staking(),
            commission: default_commission(),
            lag: default_lag(),
            ev_threshold: 0.0,
        }
    }
}

/// Synthetic league settings for the `synth` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    #[serde(default = "default_teams")]
    pub teams: usize,
    /// Full round robins; each round is `2 (teams − 1)` gameweeks.
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    /// Spread of attack and defence ratings.
    #[serde(default = "default_spread")]
    pub rating_sd: f64,
    /// Paths per simulated market price.
    #[serde(default = "default_market_paths")]
    pub market_paths: usize,
    /// Bookmaker margin applied to every price.
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default = "default_start")]
    pub start_date: chrono::NaiveDate,
}

fn default_teams() -> usize {
    10
}
fn default_rounds() -> usize {
    1
}
fn default_spread() -> f64 {
    0.15
}
fn default_market_paths() -> usize {
    1000
}
fn default_margin() -> f64 {
    0.02
}
fn default_start() -> chrono::NaiveDate {
    chrono::NaiveDate::from_ymd_opt(2023, 8, 12).expect("valid date")
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            teams: default_teams(),
            rounds: default_rounds(),
            rating_sd: default_spread(),
            market_paths: default_market_paths(),
            margin: default_margin(),
            start_date: default_start(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub data: Option<DataConfig>,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub models: ModelsConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub betting: BettingConfig,
    #[serde(default)]
    pub synth: SynthConfig,
}

impl RunConfig {
    /// Defaults with the given seed and no data files.
    pub fn with_seed(seed: u64) -> Self {
        RunConfig {
            seed,
            data: None,
            fit: FitConfig::default(),
            models: ModelsConfig::default(),
            simulation: SimulationConfig::default(),
            betting: BettingConfig::default(),
            synth: SynthConfig::default(),
        }
    }

    /// Parses TOML; relative data paths resolve against `base`.
    pub fn from_toml(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if let (Some(base), Some(d)) = (base, cfg.data.as_mut()) {
            for p in [&mut d.events, &mut d.odds, &mut d.ou] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        RunConfig::from_toml(&text, path.parent())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.fit.xi >= 0.0 && self.fit.xi.is_finite()) {
            return bad(format!("fit.xi must be non-negative, got {}", self.fit.xi));
        }
        if self.simulation.n_paths == 0 {
            return bad("simulation.n_paths must be positive".into());
        }
        if !(self.simulation.stoppage_first >= 0.0 && self.simulation.stoppage_second >= 0.0) {
            return bad("stoppage means must be non-negative".into());
        }
        if !(0.0..1.0).contains(&self.betting.commission) {
            return bad(format!("betting.commission must be in [0, 1), got {}", self.betting.commission));
        }
        if self.betting.lag < 0 {
            return bad("betting.lag must be non-negative".into());
        }
        if self.models.select.is_empty() {
            return bad("models.select is empty".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for m in &self.models.select {
            if !seen.insert(*m) {
                return bad(format!("model {m} selected twice"));
            }
            if m.family == ModelFamily::Weibull && m.psxg && self.fit.covariates == CovariateSpec::M0 {
                return bad(format!("{m} needs in-play covariates but fit.covariates is M0"));
            }
        }
        if self.fit.shape == ShapeKind::HalfSpecific && self.fit.boundary == BoundaryMode::Continuous {
            return bad("half-specific shapes need the reset boundary mode".into());
        }
        if self.synth.teams < 2 || self.synth.rounds == 0 || self.synth.market_paths == 0 {
            return bad("synth needs at least two teams, one round and one market path".into());
        }
        if !(self.synth.margin >= 0.0 && self.synth.rating_sd >= 0.0) {
            return bad("synth margin and rating_sd must be non-negative".into());
        }
        Ok(())
    }

    /// Data files, checked to exist.
    pub fn data_files(&self) -> Result<&DataConfig> {
        let d = self.data.as_ref().ok_or_else(|| Error::Config("no [data] section".into()))?;
        for p in [&d.events, &d.odds, &d.ou] {
            if !p.is_file() {
                return Err(Error::Config(format!("data file {} does not exist", p.display())));
            }
        }
        Ok(d)
    }

    pub fn has(&self, family: ModelFamily) -> bool {
        self.models.select.iter().any(|m| m.family == family)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_is_mandatory() {
        assert!(matches!(RunConfig::from_toml("", None), Err(Error::Config(_))));
        let cfg = RunConfig::from_toml("seed = 3", None).unwrap();
        assert_eq!(cfg, RunConfig::with_seed(3));
    }

    #[test]
    fn defaults_match_protocol() {
        let c = RunConfig::with_seed(0);
        assert_eq!(c.fit.xi, 0.0065);
        assert_eq!(c.simulation.n_paths, 10_000);
        assert_eq!((c.simulation.stoppage_first, c.simulation.stoppage_second), (3.1, 6.2));
        assert_eq!(c.betting.lag, 2);
        assert_eq!(c.betting.commission, 0.02);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("seed = 1\nsead = 2", None).is_err());
        assert!(RunConfig::from_toml("seed = 1\n[fit]\nxii = 0.1", None).is_err());
    }

    #[test]
    fn model_tags() {
        let m = ModelSpec::parse("weibull_kappa_psi").unwrap();
        assert_eq!(m.label(), "Weibull_kappa_psi");
        assert_eq!(ModelSpec::parse("Maia_psi").unwrap().label(), "Maia_psi");
        assert!(ModelSpec::parse("zou_psi").is_err());
        assert!(ModelSpec::parse("betfair_kappa").is_err());
        assert!(ModelSpec::parse("poisson").is_err());
        let cfg = RunConfig::from_toml("seed = 1\n[models]\nselect = [\"betfair\"]", None).unwrap();
        assert_eq!(cfg.models.select, vec![ModelSpec::BETFAIR]);
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let text = "seed = 1\n[data]\nevents = \"e.csv\"\nodds = \"/abs/o.csv\"\nou = \"q.csv\"\n";
        let cfg = RunConfig::from_toml(text, Some(Path::new("/tmp/run"))).unwrap();
        let d = cfg.data.as_ref().unwrap();
        assert_eq!(d.events, Path::new("/tmp/run/e.csv"));
        assert_eq!(d.odds, Path::new("/abs/o.csv"));
        assert_eq!(d.stoppage_window, 240);
        assert!(cfg.data_files().is_err());
    }
}
