//! Run configuration shared by simulation campaigns and data analyses.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::AlphaSplit;
use crate::scores::Method;
use crate::simengine::ScenarioConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    #[default]
    Cvrs2,
    CvrsMarginal,
    Both,
}

impl MethodChoice {
    pub fn methods(self) -> Vec<Method> {
        match self {
            MethodChoice::Cvrs2 => vec![Method::Cvrs2],
            MethodChoice::CvrsMarginal => vec![Method::CvrsMarginal],
            MethodChoice::Both => vec![Method::Cvrs2, Method::CvrsMarginal],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Simulate,
    Analyze,
}

fn default_r_folds() -> usize {
    10
}
fn default_replications() -> usize {
    1000
}
fn default_permutations() -> usize {
    999
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_path: Option<PathBuf>,
    #[serde(default = "default_r_folds")]
    pub r_folds: usize,
    pub k_clusters: usize,
    #[serde(default)]
    pub alphas: AlphaSplit,
    #[serde(default = "default_replications")]
    pub n_replications: usize,
    #[serde(default = "default_permutations")]
    pub n_permutations: usize,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; `None` uses all cores. Never affects results.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default)]
    pub method: MethodChoice,
    #[serde(default)]
    pub continuity_correction: bool,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::ConfigInvalid(e.to_string()))
    }

    /// Reads a config file. A name of a bundled config (see [`bundled`]) is
    /// accepted when no file of that name exists.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            if let Some(text) = path.to_str().and_then(bundled) {
                return Self::from_json(text);
            }
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::ConfigInvalid(m) => Error::ConfigInvalid(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self, mode: Mode) -> Result<()> {
        let bad = |m: &str| Err(Error::ConfigInvalid(m.to_string()));
        match mode {
            Mode::Simulate => {
                if self.data_path.is_some() {
                    return bad(
                        "data_path is only valid for analyses; simulations take a scenario",
                    );
                }
                match &self.scenario {
                    Some(s) => s.validate()?,
                    None => return bad("a simulation needs a scenario"),
                }
            }
            Mode::Analyze => {
                if self.scenario.is_some() {
                    return bad(
                        "scenario is only valid for simulations; analyses take a data file",
                    );
                }
            }
        }
        if self.k_clusters != 2 && self.k_clusters != 4 {
            return Err(Error::ConfigInvalid(format!(
                "k_clusters must be 2 or 4, got {}",
                self.k_clusters
            )));
        }
        if self.r_folds < 2 {
            return bad("r_folds must be at least 2");
        }
        if self.n_replications == 0 || self.n_permutations == 0 {
            return bad("n_replications and n_permutations must be at least 1");
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1");
        }
        self.alphas.validate()
    }

    /// The config as echoed in reports: everything that determines results.
    pub fn echo(&self) -> Self {
        Self {
            threads: None,
            ..self.clone()
        }
    }
}

const BUNDLED: &[(&str, &str)] = &[
    (
        "scenario1_10pct",
        include_str!("../configs/scenario1_10pct.json"),
    ),
    (
        "scenario1_20pct",
        include_str!("../configs/scenario1_20pct.json"),
    ),
    ("scenario2a", include_str!("../configs/scenario2a.json")),
    ("scenario2b", include_str!("../configs/scenario2b.json")),
    ("scenario2c", include_str!("../configs/scenario2c.json")),
    ("scenario3", include_str!("../configs/scenario3.json")),
    ("scenario4", include_str!("../configs/scenario4.json")),
];

pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

/// JSON text of a bundled config.
pub fn bundled(name: &str) -> Option<&'static str> {
    let name = name.strip_suffix(".json").unwrap_or(name);
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}
