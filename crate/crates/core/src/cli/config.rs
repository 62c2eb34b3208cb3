//! Run configuration: built-in defaults, overlaid by an optional JSON config
//! file, overlaid by command-line flags (flags win).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::network::ModelSpec;
use crate::optimize::{AdamConfig, LbfgsConfig};
use crate::oracle::{DEFAULT_STEP, DEFAULT_TOL, DEFAULT_X_MAX};
use crate::problem::FlowConfig;

use super::CliError;

/// Collocation points and L-BFGS iterations used unless `--paper-scale`.
pub const DESK_POINTS: usize = 2000;
pub const DESK_LBFGS_ITERS: usize = 2000;
pub const PAPER_POINTS: usize = 18000;
pub const PAPER_LBFGS_ITERS: usize = 10000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleSettings {
    pub enabled: bool,
    pub x_max: f64,
    pub h: f64,
    pub tol: f64,
    /// Equidistant nodes on `[0, flow.x_max]` used for the error metrics.
    pub test_points: usize,
}

impl Default for OracleSettings {
    fn default() -> Self {
        OracleSettings {
            enabled: true,
            x_max: DEFAULT_X_MAX,
            h: DEFAULT_STEP,
            tol: DEFAULT_TOL,
            test_points: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub flow: FlowConfig,
    pub model: ModelSpec,
    pub adam: AdamConfig,
    pub lbfgs: LbfgsConfig,
    pub seed: u64,
    pub oracle: OracleSettings,
}

impl RunConfig {
    pub fn desk() -> Self {
        RunConfig {
            flow: FlowConfig {
                n_points: DESK_POINTS,
                ..FlowConfig::default()
            },
            model: ModelSpec::lcdnn(),
            adam: AdamConfig::default(),
            lbfgs: LbfgsConfig {
                max_iters: DESK_LBFGS_ITERS,
                ..LbfgsConfig::default()
            },
            seed: 0,
            oracle: OracleSettings::default(),
        }
    }

    pub fn paper_scale() -> Self {
        let mut cfg = RunConfig::desk();
        cfg.flow.n_points = PAPER_POINTS;
        cfg.lbfgs.max_iters = PAPER_LBFGS_ITERS;
        cfg
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.flow
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.model
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.adam.validate().map_err(CliError::Config)?;
        self.lbfgs.validate().map_err(CliError::Config)?;
        if self.oracle.test_points < 2 {
            return Err(CliError::Config(
                "oracle.test_points must be at least 2".into(),
            ));
        }
        Ok(())
    }

    /// Applies the sections present in `file` on top of `self`.
    pub fn overlay(&mut self, file: ConfigFile) {
        if let Some(v) = file.flow {
            self.flow = v;
        }
        if let Some(v) = file.model {
            self.model = v;
        }
        if let Some(v) = file.adam {
            self.adam = v;
        }
        if let Some(v) = file.lbfgs {
            self.lbfgs = v;
        }
        if let Some(v) = file.seed {
            self.seed = v;
        }
        if let Some(v) = file.oracle {
            self.oracle = v;
        }
    }
}

/// On-disk config: every section optional. A full `RunConfig` (for example
/// the `config` object echoed in a report) is also a valid config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub flow: Option<FlowConfig>,
    pub model: Option<ModelSpec>,
    pub adam: Option<AdamConfig>,
    pub lbfgs: Option<LbfgsConfig>,
    pub seed: Option<u64>,
    pub oracle: Option<OracleSettings>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Where `solve` writes its artifacts.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputPaths {
    pub report: PathBuf,
    pub profile_csv: PathBuf,
    pub trace_csv: PathBuf,
}

impl OutputPaths {
    /// `--out run.json` gives `run.json`, `run.profile.csv`, `run.trace.csv`;
    /// `--csv` overrides the profile path.
    pub fn from_flags(out: Option<&Path>, csv: Option<&Path>) -> Self {
        let report = out
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("fsnet-report.json"));
        let stem = report.with_extension("");
        let sibling = |suffix: &str| {
            let mut s = stem.clone().into_os_string();
            s.push(suffix);
            PathBuf::from(s)
        };
        OutputPaths {
            profile_csv: csv
                .map(Path::to_path_buf)
                .unwrap_or_else(|| sibling(".profile.csv")),
            trace_csv: sibling(".trace.csv"),
            report,
        }
    }
}
