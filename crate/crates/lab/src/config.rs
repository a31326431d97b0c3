//! Scenario configuration: a flat TOML key-value document.

use std::path::{Path, PathBuf};

use pobandit_core::datasets::RewardModel;
use pobandit_core::metrics::{geometric_grid, geometric_linear_grid};
use pobandit_core::model::{ArmMode, ScenarioParams};
use pobandit_core::PolicyKind;
use serde::{Deserialize, Serialize};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "POBANDIT_OUT";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn default_experiment() -> String {
    "simulate".to_owned()
}
fn default_dim() -> usize {
    10
}
fn default_arms() -> usize {
    5
}
fn default_mode() -> String {
    "arm_specific".to_owned()
}
fn default_horizon() -> u64 {
    2000
}
fn default_policies() -> String {
    "ts".to_owned()
}
fn default_noise_reward() -> f64 {
    0.1
}
fn one() -> f64 {
    1.0
}
fn default_runs() -> usize {
    10
}
fn default_checkpoints() -> String {
    "geometric".to_owned()
}
fn default_true() -> bool {
    true
}
fn default_margin_samples() -> usize {
    20_000
}
fn default_reward_model() -> String {
    "logistic".to_owned()
}
fn default_sensing_noise() -> f64 {
    0.1
}
fn default_label() -> String {
    "label".to_owned()
}

/// Every knob of an experiment. Field names are the config keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    #[serde(default = "default_experiment")]
    pub experiment: String,
    #[serde(default = "default_dim")]
    pub d_x: usize,
    #[serde(default = "default_dim")]
    pub d_y: usize,
    /// Number of arms `N`.
    #[serde(default = "default_arms")]
    pub arms: usize,
    /// `arm_specific`, `shared_param` or `shared_context`.
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default = "default_horizon")]
    pub horizon: u64,
    /// Comma-separated policy names: ts, greedy, oracle, random, regression_oracle.
    #[serde(default = "default_policies", alias = "policy")]
    pub policies: String,
    /// Posterior dispersion `v`. Defaults to `sqrt(R1^2 + R2^2)` computed from
    /// the true model, or to the hindsight residual scale on real data.
    #[serde(default)]
    pub dispersion: Option<f64>,
    /// Reward noise standard deviation `R1`.
    #[serde(default = "default_noise_reward")]
    pub noise_reward: f64,
    #[serde(default = "one")]
    pub sigma_x_scale: f64,
    #[serde(default = "one")]
    pub sigma_xi_scale: f64,
    #[serde(default = "one")]
    pub mu_radius: f64,
    /// Replications `K`.
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    /// `geometric` or `geometric+linear:<points>`.
    #[serde(default = "default_checkpoints")]
    pub checkpoints: String,
    /// Draw a fresh random environment per run; otherwise every run shares one.
    #[serde(default = "default_true")]
    pub scenario_per_run: bool,
    /// Monte-Carlo rounds for optimality probabilities.
    #[serde(default = "default_margin_samples")]
    pub margin_samples: usize,
    /// Worker threads; 0 picks the available parallelism.
    #[serde(default)]
    pub workers: usize,
    /// Real-data mode: CSV file with a label column, or `bundled:<name>`.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    #[serde(default = "default_label")]
    pub label: String,
    /// `logistic` or `simple_linear`.
    #[serde(default = "default_reward_model")]
    pub reward_model: String,
    /// Real-data sensing noise standard deviation.
    #[serde(default = "default_sensing_noise")]
    pub sensing_noise: f64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

impl ScenarioSpec {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let spec: ScenarioSpec = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_owned(), source })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_owned()));
        if self.horizon < 1 {
            return bad("horizon must be >= 1");
        }
        if self.runs < 1 {
            return bad("runs must be >= 1");
        }
        if self.d_x < 1 || self.d_y < 1 || self.arms < 1 {
            return bad("d_x, d_y and arms must be >= 1");
        }
        if let Some(v) = self.dispersion {
            if !(v > 0.0 && v.is_finite()) {
                return bad("dispersion must be positive");
            }
        }
        if !(self.noise_reward >= 0.0) || !(self.sensing_noise >= 0.0) {
            return bad("noise scales must be >= 0");
        }
        if !(self.sigma_x_scale > 0.0) || !(self.sigma_xi_scale > 0.0) || !(self.mu_radius >= 0.0) {
            return bad("covariance scales must be positive");
        }
        self.arm_mode()?;
        self.policy_kinds()?;
        self.reward_model()?;
        self.checkpoint_grid()?;
        if self.margin_samples < pobandit_core::model::MIN_MARGIN_SAMPLES {
            return bad("margin_samples must be >= 1000");
        }
        Ok(())
    }

    pub fn arm_mode(&self) -> Result<ArmMode, ConfigError> {
        ArmMode::parse(&self.mode).ok_or_else(|| ConfigError::Invalid(format!("unknown mode {:?}", self.mode)))
    }

    pub fn policy_kinds(&self) -> Result<Vec<PolicyKind>, ConfigError> {
        let kinds = self
            .policies
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| PolicyKind::parse(s).ok_or_else(|| ConfigError::Invalid(format!("unknown policy {s:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        if kinds.is_empty() {
            return Err(ConfigError::Invalid("no policy given".to_owned()));
        }
        Ok(kinds)
    }

    pub fn reward_model(&self) -> Result<RewardModel, ConfigError> {
        RewardModel::parse(&self.reward_model)
            .ok_or_else(|| ConfigError::Invalid(format!("unknown reward model {:?}", self.reward_model)))
    }

    pub fn checkpoint_grid(&self) -> Result<Vec<u64>, ConfigError> {
        let s = self.checkpoints.trim();
        if s == "geometric" {
            return Ok(geometric_grid(self.horizon));
        }
        if let Some(points) = s.strip_prefix("geometric+linear:") {
            let points: u64 = points
                .parse()
                .map_err(|_| ConfigError::Invalid(format!("bad checkpoint spec {s:?}")))?;
            return Ok(geometric_linear_grid(self.horizon, points));
        }
        Err(ConfigError::Invalid(format!("bad checkpoint spec {s:?}")))
    }

    pub fn scenario_params(&self) -> Result<ScenarioParams, ConfigError> {
        Ok(ScenarioParams {
            d_x: self.d_x,
            d_y: self.d_y,
            arms: self.arms,
            mode: self.arm_mode()?,
            sigma_x_scale: self.sigma_x_scale,
            sigma_xi_scale: self.sigma_xi_scale,
            noise_r1: self.noise_reward,
            mu_radius: self.mu_radius,
        })
    }

    pub fn worker_count(&self) -> usize {
        match self.workers {
            0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
            n => n,
        }
    }

    /// Explicit `out_dir`, else `$POBANDIT_OUT`, else `./out`.
    pub fn resolved_out_dir(&self) -> PathBuf {
        self.out_dir
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let s = ScenarioSpec::default();
        s.validate().unwrap();
        assert_eq!(s.policy_kinds().unwrap(), vec![PolicyKind::Thompson]);
        assert_eq!(s.checkpoint_grid().unwrap().last(), Some(&2000));
    }

    #[test]
    fn parses_flat_document() {
        let s = ScenarioSpec::from_toml(
            r#"
            experiment = "toy"
            d_x = 4
            d_y = 3
            arms = 2
            mode = "shared_context"
            horizon = 100
            policy = "ts, greedy"
            dispersion = 0.7
            runs = 3
            seed = 9
            checkpoints = "geometric+linear:4"
            "#,
        )
        .unwrap();
        assert_eq!(s.policy_kinds().unwrap(), vec![PolicyKind::Thompson, PolicyKind::Greedy]);
        assert_eq!(s.arm_mode().unwrap(), ArmMode::SharedContext);
        assert_eq!(s.checkpoint_grid().unwrap(), vec![1, 2, 4, 8, 16, 25, 32, 50, 64, 75, 100]);
        assert_eq!(s.dispersion, Some(0.7));
        let again = ScenarioSpec::from_toml(&s.to_toml()).unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn rejects_bad_values() {
        for doc in [
            "horizon = 0",
            "runs = 0",
            "arms = 0",
            "policy = \"ucb\"",
            "mode = \"weird\"",
            "dispersion = -1.0",
            "checkpoints = \"linear\"",
            "margin_samples = 10",
            "unknown_key = 1",
        ] {
            assert!(ScenarioSpec::from_toml(doc).is_err(), "{doc}");
        }
    }

    #[test]
    fn explicit_out_dir_wins() {
        let s = ScenarioSpec { out_dir: Some("x/y".into()), ..Default::default() };
        assert_eq!(s.resolved_out_dir(), PathBuf::from("x/y"));
    }
}
