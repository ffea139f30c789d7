use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use shiftreg::{FourierTemplate, OptimizerOptions, ShiftDensitySpec, StationaryCovSpec};
use shiftreg::synthdata::NonstationarySpec;

use crate::HarnessError;

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "SHIFTREG_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Shape-invariant model: no perturbation process.
    Sim,
    Stationary,
    Nonstationary,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Sim => "sim",
            Scenario::Stationary => "stationary",
            Scenario::Nonstationary => "nonstationary",
        }
    }

    pub(crate) fn tag(self) -> u64 {
        match self {
            Scenario::Sim => 1,
            Scenario::Stationary => 2,
            Scenario::Nonstationary => 3,
        }
    }

    pub fn default_sigma(self) -> f64 {
        match self {
            Scenario::Sim => 2.0,
            _ => 8.0,
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sim" => Ok(Scenario::Sim),
            "stationary" => Ok(Scenario::Stationary),
            "nonstationary" | "non-stationary" => Ok(Scenario::Nonstationary),
            other => Err(format!("unknown scenario `{other}` (expected sim, stationary or nonstationary)")),
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Monte Carlo design. Unset noise levels fall back to the scenario defaults
/// (σ = 2 without perturbation, σ = 8 otherwise; ς = φ = 4).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub template: String,
    pub sigma: Option<f64>,
    pub varsigma: f64,
    pub phi: f64,
    /// `KIND:HALF_WIDTH`, e.g. `uniform:0.2`.
    pub density: String,
    pub lambda: usize,
    pub n_list: Vec<usize>,
    pub j_list: Vec<usize>,
    pub repetitions: usize,
    pub seed: u64,
    pub optimizer: OptimizerOptions,
    pub output_dir: Option<PathBuf>,
    /// Harmonics of the stationary process; `None` means `⌊n/2⌋`.
    pub process_harmonics: Option<usize>,
    pub parallel: bool,
    /// Fill the `ms` column with wall-clock times. Off by default so that
    /// output files are reproducible byte for byte.
    pub record_timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::Sim,
            template: "sin-cos".into(),
            sigma: None,
            varsigma: 4.0,
            phi: 4.0,
            density: "uniform:0.2".into(),
            lambda: 7,
            n_list: vec![512, 1024],
            j_list: vec![20, 40, 60, 80, 100],
            repetitions: 20,
            seed: 0,
            optimizer: OptimizerOptions::default(),
            output_dir: None,
            process_harmonics: None,
            parallel: true,
            record_timing: false,
        }
    }
}

impl ExperimentConfig {
    pub fn for_scenario(scenario: Scenario) -> Self {
        Self {
            scenario,
            ..Self::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma.unwrap_or_else(|| self.scenario.default_sigma())
    }

    pub fn density_spec(&self) -> Result<ShiftDensitySpec, HarnessError> {
        self.density.parse().map_err(HarnessError::Config)
    }

    pub fn template_coeffs(&self) -> Result<FourierTemplate, HarnessError> {
        FourierTemplate::builtin(&self.template).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn stationary_spec(&self) -> StationaryCovSpec {
        StationaryCovSpec {
            scale: self.varsigma,
            shape: self.phi,
        }
    }

    pub fn nonstationary_spec(&self) -> NonstationarySpec {
        NonstationarySpec::with_default_profile(self.varsigma)
    }

    pub fn harmonics(&self, n: usize) -> usize {
        self.process_harmonics.unwrap_or(n / 2).max(1)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.n_list.is_empty() || self.j_list.is_empty() {
            return bad("n_list and j_list must be non-empty".into());
        }
        if let Some(&n) = self.n_list.iter().find(|&&n| n < 3) {
            return bad(format!("grid size {n} is below the minimum of 3"));
        }
        let n_min = *self.n_list.iter().min().unwrap();
        if self.lambda == 0 || 2 * self.lambda >= n_min {
            return bad(format!("lambda must satisfy 1 <= lambda < min(n_list)/2, got {} with n = {n_min}", self.lambda));
        }
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1".into());
        }
        if let Some(&j) = self.j_list.iter().find(|&&j| j < 2) {
            return bad(format!("every J must be at least 2, got {j}"));
        }
        let sigma = self.sigma();
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return bad(format!("sigma must be finite and non-negative, got {sigma}"));
        }
        if self.scenario != Scenario::Sim {
            if !(self.varsigma >= 0.0 && self.varsigma.is_finite()) {
                return bad(format!("varsigma must be finite and non-negative, got {}", self.varsigma));
            }
            if self.scenario == Scenario::Stationary && !(self.phi > 0.0 && self.phi.is_finite()) {
                return bad(format!("phi must be positive, got {}", self.phi));
            }
        }
        self.density_spec()?;
        self.template_coeffs()?;
        self.optimizer.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(())
    }

    /// Output directory: explicit override, then the config, then the
    /// environment, then `results`.
    pub fn resolve_output_dir(&self, overridden: Option<PathBuf>) -> PathBuf {
        overridden
            .or_else(|| self.output_dir.clone())
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("results"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        for s in [Scenario::Sim, Scenario::Stationary, Scenario::Nonstationary] {
            ExperimentConfig::for_scenario(s).validate().unwrap();
        }
        assert_eq!(ExperimentConfig::default().sigma(), 2.0);
        assert_eq!(ExperimentConfig::for_scenario(Scenario::Stationary).sigma(), 8.0);
    }

    #[test]
    fn json_round_trip_and_unknown_keys() {
        let cfg = ExperimentConfig::from_json(r#"{"scenario": "stationary", "n_list": [64], "lambda": 3}"#).unwrap();
        assert_eq!(cfg.scenario, Scenario::Stationary);
        assert_eq!(cfg.j_list, vec![20, 40, 60, 80, 100]);
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
        assert!(ExperimentConfig::from_json(r#"{"scenario": "sim", "bogus": 1}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"optimizer": {"max_iter": 3}}"#).is_err());
    }

    #[test]
    fn invariants_enforced() {
        let bad = |f: fn(&mut ExperimentConfig)| {
            let mut c = ExperimentConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.lambda = 256));
        assert!(bad(|c| c.repetitions = 0));
        assert!(bad(|c| c.j_list = vec![1]));
        assert!(bad(|c| c.n_list = vec![2]));
        assert!(bad(|c| c.density = "gaussian:0.2".into()));
        assert!(bad(|c| c.sigma = Some(-1.0)));
        let mut tiny = ExperimentConfig::default();
        tiny.n_list = vec![3];
        tiny.lambda = 1;
        tiny.j_list = vec![2];
        tiny.validate().unwrap();
    }
}
