//! Run configuration, stored as TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evolution::{default_b, RunParams};
use crate::kernel::KernelParams;
use crate::redistribute::RedistributionParams;
use crate::scenario::ScenarioSpec;
use crate::system::Mode;

/// Kernel settings other than alpha, which is set once at the top level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelSettings {
    pub far_threshold: f64,
    pub series_order: usize,
    pub near_quad_tol: f64,
    pub series_tail_tol: f64,
}

impl Default for KernelSettings {
    fn default() -> Self {
        let k = KernelParams::default();
        KernelSettings {
            far_threshold: k.far_threshold,
            series_order: k.series_order,
            near_quad_tol: k.near_quad_tol,
            series_tail_tol: k.series_tail_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimeSettings {
    /// Time-step factor; defaults to 0.5 for alpha <= 0.8 and 0.25 above.
    pub b: Option<f64>,
    pub dt_max: Option<f64>,
    pub t_end: Option<f64>,
    pub tau_end: Option<f64>,
    pub max_steps: usize,
    pub snapshot_stride: usize,
    pub min_distance_stop: Option<f64>,
    /// Redistribute the nodes after every step.
    pub redistribute: bool,
}

impl Default for TimeSettings {
    fn default() -> Self {
        TimeSettings {
            b: None,
            dt_max: None,
            t_end: None,
            tau_end: None,
            max_steps: 100,
            snapshot_stride: 10,
            min_distance_stop: None,
            redistribute: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub alpha: f64,
    pub mode: Mode,
    pub seed: u64,
    /// Worker threads; unset means the `ALPHA_PATCH_THREADS` variable or all cores.
    pub workers: Option<usize>,
    pub output_dir: PathBuf,
    pub scenario: ScenarioSpec,
    pub kernel: KernelSettings,
    pub redistribution: RedistributionParams,
    pub time: TimeSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            alpha: 0.7,
            mode: Mode::Physical,
            seed: 0,
            workers: None,
            output_dir: PathBuf::from("out"),
            scenario: ScenarioSpec::default(),
            kernel: KernelSettings::default(),
            redistribution: RedistributionParams::default(),
            time: TimeSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: RunConfig = toml::from_str(text).map_err(|e| Error::Schema(format!("config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Schema(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn kernel_params(&self) -> KernelParams {
        KernelParams {
            alpha: self.alpha,
            far_threshold: self.kernel.far_threshold,
            series_order: self.kernel.series_order,
            near_quad_tol: self.kernel.near_quad_tol,
            series_tail_tol: self.kernel.series_tail_tol,
        }
    }

    pub fn b(&self) -> f64 {
        self.time.b.unwrap_or_else(|| default_b(self.alpha))
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel_params().validate()?;
        self.redistribution.validate()?;
        if !(self.b() > 0.0) {
            return Err(Error::Domain(format!("B = {} must be positive", self.b())));
        }
        if self.workers == Some(0) {
            return Err(Error::Domain("workers must be at least 1".into()));
        }
        Ok(())
    }

    /// Stop conditions and step controls for [`crate::evolution::simulate`].
    pub fn run_params(&self) -> RunParams {
        let time_end = match self.mode {
            Mode::Physical => self.time.t_end,
            Mode::SelfSimilar => self.time.tau_end,
        };
        RunParams {
            b: self.b(),
            dt_max: self.time.dt_max,
            backward: false,
            time_end,
            max_steps: self.time.max_steps,
            snapshot_stride: self.time.snapshot_stride,
            redistribution: self.time.redistribute.then_some(self.redistribution),
            min_distance_stop: self.time.min_distance_stop,
        }
    }

    /// SHA-256 of the serialized configuration, as lowercase hex.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}
