//! Experiment configuration, read from TOML.
//!
//! ```toml
//! scenarios = ["B", "E"]
//! algorithms = ["t-resilience", "local-search"]
//! seeds = [0, 1, 2, 3, 4]
//! output = "results"
//!
//! [budget]
//! tests = 25
//! population = 40
//! generations = 400
//! transfer_period = 16
//!
//! [noise]
//! multiplicative_std = 0.05
//! ```
//!
//! Every block and key is optional; the defaults give the desk-scale suite
//! (all six scenarios, all four algorithms, seeds 0 to 4).

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::algorithms::{Algorithm, Budget};
use crate::error::{Error, Result};
use crate::measurement::NoiseModel;
use crate::sim::{Geometry, Morphology, ScenarioTag, SimConfig};

/// Environment variable overriding the number of worker threads.
pub const WORKERS_ENV: &str = "RESILIENCE_WORKERS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub scenarios: Vec<ScenarioTag>,
    pub algorithms: Vec<Algorithm>,
    pub seeds: Vec<u64>,
    /// Not part of the config hash.
    pub output: PathBuf,
    /// Worker threads; `None` uses every core.
    pub workers: Option<usize>,
    pub budget: Budget,
    pub noise: NoiseModel,
    pub geometry: Geometry<f64>,
    pub sim: SimConfig<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenarios: ScenarioTag::ALL.to_vec(),
            algorithms: Algorithm::ALL.to_vec(),
            seeds: (0..5).collect(),
            output: PathBuf::from("results"),
            workers: None,
            budget: Budget::desk(),
            noise: NoiseModel::default(),
            geometry: Geometry::default(),
            sim: SimConfig::default(),
        }
    }
}

/// The part of the configuration that determines what a cell computes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSetup {
    pub budget: Budget,
    pub noise: NoiseModel,
    pub geometry: Geometry<f64>,
    pub sim: SimConfig<f64>,
}

impl CellSetup {
    pub fn intact(&self) -> Morphology<f64> {
        Morphology::hexapod(&self.geometry)
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn setup(&self) -> CellSetup {
        CellSetup {
            budget: self.budget,
            noise: self.noise,
            geometry: self.geometry,
            sim: self.sim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() || self.algorithms.is_empty() || self.seeds.is_empty() {
            return Err(Error::InvalidConfig("scenarios, algorithms and seeds must be non-empty".into()));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(Error::InvalidConfig("seeds must be distinct".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::InvalidConfig("workers must be at least 1".into()));
        }
        self.budget.validate()?;
        self.noise.validate()?;
        let g = &self.geometry;
        if [g.attachment_radius, g.coxa, g.femur, g.tibia].iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidConfig("geometry lengths must be positive".into()));
        }
        let s = &self.sim;
        if !(s.dt > 0.0 && s.ticks > 0 && s.contact_tolerance >= 0.0 && s.max_tilt > 0.0 && s.gait.frequency > 0.0) {
            return Err(Error::InvalidConfig("simulator settings out of range".into()));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form of everything except the output
    /// location and worker count.
    pub fn hash(&self) -> String {
        #[derive(Serialize)]
        struct Hashed<'a> {
            scenarios: &'a [ScenarioTag],
            algorithms: &'a [Algorithm],
            seeds: &'a [u64],
            setup: CellSetup,
        }
        let canonical = serde_json::to_vec(&Hashed {
            scenarios: &self.scenarios,
            algorithms: &self.algorithms,
            seeds: &self.seeds,
            setup: self.setup(),
        })
        .expect("config serializes");
        hex::encode(Sha256::digest(canonical))
    }

    /// Worker count: the environment variable wins over the config file.
    pub fn worker_count(&self) -> Result<Option<usize>> {
        match std::env::var(WORKERS_ENV) {
            Ok(v) => match v.trim().parse::<usize>() {
                Ok(n) if n > 0 => Ok(Some(n)),
                _ => Err(Error::InvalidConfig(format!("{WORKERS_ENV}={v} is not a positive integer"))),
            },
            Err(_) => Ok(self.workers),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_desk_suite() {
        let c = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.scenarios.len(), 6);
        assert_eq!(c.budget, Budget::desk());
    }

    #[test]
    fn partial_blocks_and_names() {
        let c = ExperimentConfig::from_toml(
            r#"
            scenarios = ["B", "E"]
            algorithms = ["t-resilience", "policy-gradient"]
            seeds = [3]
            [budget]
            generations = 40
            transfer_period = 8
            [geometry]
            tibia = 0.1
            "#,
        )
        .unwrap();
        assert_eq!(c.scenarios, vec![ScenarioTag::B, ScenarioTag::E]);
        assert_eq!(c.algorithms[1], Algorithm::PolicyGradient);
        assert_eq!(c.budget.population, 40);
        assert_eq!(c.geometry.tibia, 0.1);
        assert_eq!(c.geometry.femur, 0.08);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml("seed = [1]").is_err());
        assert!(ExperimentConfig::from_toml("[budget]\ntransfers = 3").is_err());
        assert!(ExperimentConfig::from_toml("[noise]\nsigma = 0.1").is_err());
        assert!(ExperimentConfig::from_toml("scenarios = [\"G\"]").is_err());
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(ExperimentConfig::from_toml("seeds = []").is_err());
        assert!(ExperimentConfig::from_toml("seeds = [1, 1]").is_err());
        assert!(ExperimentConfig::from_toml("[budget]\npopulation = 7").is_err());
        assert!(ExperimentConfig::from_toml("[noise]\noutlier_probability = 2.0").is_err());
        assert!(ExperimentConfig::from_toml("[geometry]\nfemur = -0.1").is_err());
    }

    #[test]
    fn hash_ignores_output_only() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig {
            output: PathBuf::from("elsewhere"),
            workers: Some(3),
            ..a.clone()
        };
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let c = ExperimentConfig {
            seeds: vec![9],
            ..a.clone()
        };
        assert_ne!(a.hash(), c.hash());
    }
}
