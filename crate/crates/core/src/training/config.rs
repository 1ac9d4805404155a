use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// HR and LR patches are column-aligned pairs.
    Paired,
    /// HR and LR patches carry no pairing information.
    #[serde(alias = "nc")]
    NoCorrespondence,
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrainMode::Paired => "paired",
            TrainMode::NoCorrespondence => "nc",
        })
    }
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "paired" => Ok(TrainMode::Paired),
            "nc" | "no_correspondence" | "no-correspondence" | "unpaired" => Ok(TrainMode::NoCorrespondence),
            other => Err(Error::param(format!("unknown training mode `{other}`"))),
        }
    }
}

/// Blur-matrix estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BmeKind {
    /// Pseudo-inverse, unstructured.
    Gr,
    /// Adam over the `k^2` Toeplitz taps.
    Sr,
}

impl fmt::Display for BmeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BmeKind::Gr => "gr",
            BmeKind::Sr => "sr",
        })
    }
}

impl FromStr for BmeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gr" => Ok(BmeKind::Gr),
            "sr" => Ok(BmeKind::Sr),
            other => Err(Error::param(format!("unknown blur estimator `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub bme: BmeKind,
    /// Dictionary size `N_c`.
    pub atoms: usize,
    pub lambda: f64,
    /// Adam learning rate for BME-SR.
    pub learning_rate: f64,
    pub outer_iters: usize,
    /// HR patch side `p`.
    pub patch: usize,
    /// Kernel side `k`.
    pub k: usize,
    pub n_patches: usize,
    pub seed: u64,
    pub fista_max_iters: usize,
    pub fista_tol: f64,
    /// Adam steps per outer iteration.
    pub adam_steps: usize,
    /// Re-estimate the blur every this many outer iterations.
    pub blur_every: usize,
    /// Start each FISTA solve from the previous iteration's codes.
    pub warm_start: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::Paired,
            bme: BmeKind::Sr,
            atoms: 400,
            lambda: 0.02,
            learning_rate: 0.05,
            outer_iters: 5000,
            patch: 15,
            k: 7,
            n_patches: 20_000,
            seed: 0,
            fista_max_iters: crate::sparse::DEFAULT_MAX_ITERS,
            fista_tol: crate::sparse::DEFAULT_TOL,
            adam_steps: 10,
            blur_every: 1,
            warm_start: true,
        }
    }
}

impl TrainConfig {
    pub fn lr_side(&self) -> usize {
        self.patch + 1 - self.k
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("atoms", self.atoms),
            ("patch", self.patch),
            ("k", self.k),
            ("n_patches", self.n_patches),
            ("fista_max_iters", self.fista_max_iters),
            ("adam_steps", self.adam_steps),
            ("blur_every", self.blur_every),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::param(format!("{name} must be positive")));
            }
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::param(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::param(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.fista_tol >= 0.0) {
            return Err(Error::param("fista_tol must be non-negative"));
        }
        if self.k > self.patch {
            return Err(Error::param(format!(
                "kernel side {} exceeds patch side {}",
                self.k, self.patch
            )));
        }
        if self.mode == TrainMode::NoCorrespondence && self.bme != BmeKind::Sr {
            return Err(Error::param(
                "no-correspondence training requires the structured (sr) blur estimator",
            ));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_reference_setup() {
        let c = TrainConfig::default();
        assert_eq!((c.atoms, c.lambda, c.learning_rate, c.outer_iters), (400, 0.02, 0.05, 5000));
        assert_eq!((c.patch, c.k, c.n_patches), (15, 7, 20_000));
        assert_eq!(c.lr_side(), 9);
        c.validate().unwrap();
    }

    #[test]
    fn nc_requires_sr() {
        let c = TrainConfig {
            mode: TrainMode::NoCorrespondence,
            bme: BmeKind::Gr,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn toml_round_trip_and_partial_files() {
        let c = TrainConfig {
            mode: TrainMode::NoCorrespondence,
            seed: 9,
            lambda: 0.2,
            ..Default::default()
        };
        assert_eq!(TrainConfig::from_toml(&c.to_toml()).unwrap(), c);
        let partial = TrainConfig::from_toml("k = 9\nmode = \"nc\"\n").unwrap();
        assert_eq!((partial.k, partial.mode, partial.atoms), (9, TrainMode::NoCorrespondence, 400));
        assert!(TrainConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn bad_values_rejected() {
        for c in [
            TrainConfig { lambda: 0.0, ..Default::default() },
            TrainConfig { atoms: 0, ..Default::default() },
            TrainConfig { k: 17, ..Default::default() },
            TrainConfig { learning_rate: -1.0, ..Default::default() },
        ] {
            assert!(c.validate().is_err());
        }
    }
}
