//! Experiment configuration read from a TOML file.
//!
//! ```toml
//! seed = 7
//! output = "runs/sp"
//! snapshot_every = 5
//!
//! [mesh]
//! source = "channel-with-circle"   # or "file" with `path = "..."`
//! [mesh.geometry]
//! obstacle_segments = 160
//!
//! [inflow]
//! profile = "uniform"
//! magnitude = 1.0
//!
//! [metric]
//! kind = "steklov-poincare"
//!
//! [optimizer]
//! memory = 3
//! ```
//!
//! Every section is optional. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use shapeopt::mesh::generate::{channel_with_circle, ChannelGeometry};
use shapeopt::mesh::gmsh::{load_gmsh, MarkerMap};
use shapeopt::mesh::TriMesh;
use shapeopt::metrics::{MetricConfig, MetricKind};
use shapeopt::optimizer::{OptimizerConfig, ShapeDerivative};
use shapeopt::stokes::InflowProfile;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid `{field}`: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        message: message.to_string(),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeshKind {
    #[default]
    ChannelWithCircle,
    File,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    pub source: MeshKind,
    /// MSH file, read with the `[markers]` map when `source = "file"`.
    pub path: Option<PathBuf>,
    pub geometry: ChannelGeometry,
}

/// One leg of a metric comparison. Unset fields inherit the run settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareLeg {
    pub name: String,
    #[serde(default)]
    pub metric: Option<MetricConfig>,
    #[serde(default)]
    pub memory: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub legs: Vec<CompareLeg>,
}

impl Default for CompareConfig {
    /// gˢ with the configured memory against g¹ steepest descent.
    fn default() -> Self {
        CompareConfig {
            legs: vec![
                CompareLeg {
                    name: "steklov-poincare".into(),
                    metric: None,
                    memory: None,
                },
                CompareLeg {
                    name: "laplace-beltrami".into(),
                    metric: Some(MetricConfig {
                        kind: MetricKind::LaplaceBeltrami,
                        ..MetricConfig::default()
                    }),
                    memory: Some(0),
                },
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seed of the random test directions used by `verify`.
    pub seed: u64,
    pub output: PathBuf,
    /// Write a VTU snapshot every this many accepted steps (0 disables).
    pub snapshot_every: usize,
    pub derivative: ShapeDerivative,
    /// Run one inner solve with these multipliers instead of the outer loop.
    pub fixed_multipliers: Option<[f64; 3]>,
    pub mesh: MeshConfig,
    pub markers: MarkerMap,
    pub inflow: InflowProfile,
    pub metric: MetricConfig,
    pub optimizer: OptimizerConfig,
    pub compare: CompareConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            output: PathBuf::from("shapeopt-out"),
            snapshot_every: 0,
            derivative: ShapeDerivative::default(),
            fixed_multipliers: None,
            mesh: MeshConfig::default(),
            markers: MarkerMap::default(),
            inflow: InflowProfile::default(),
            metric: MetricConfig::default(),
            optimizer: OptimizerConfig::default(),
            compare: CompareConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut config = Self::parse(&text).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })?;
        // relative mesh paths are relative to the config file
        if let (Some(mesh), Some(dir)) = (config.mesh.path.as_mut(), path.parent()) {
            if mesh.is_relative() {
                *mesh = dir.join(&*mesh);
            }
        }
        Ok(config)
    }

    /// Parses and validates a configuration text.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: PathBuf::from("<config>"),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.optimizer.metric != MetricConfig::default() {
            return Err(invalid(
                "optimizer.metric",
                "set the metric in the [metric] section",
            ));
        }
        self.metric.validate().map_err(|e| invalid("metric", e))?;
        self.optimizer_config()
            .validate()
            .map_err(|e| invalid("optimizer", e))?;
        let magnitude = match self.inflow {
            InflowProfile::Uniform { magnitude } | InflowProfile::Parabolic { magnitude } => {
                magnitude
            }
        };
        if !magnitude.is_finite() {
            return Err(invalid("inflow.magnitude", "must be finite"));
        }
        if let Some(lambda) = self.fixed_multipliers {
            if lambda.iter().any(|l| !l.is_finite()) {
                return Err(invalid("fixed_multipliers", "must be finite"));
            }
        }
        if self.mesh.source == MeshKind::File && self.mesh.path.is_none() {
            return Err(invalid("mesh.path", "required when mesh.source = \"file\""));
        }
        if self.output.as_os_str().is_empty() {
            return Err(invalid("output", "must not be empty"));
        }
        if self.compare.legs.len() != 2 {
            return Err(invalid("compare.legs", "exactly two legs are required"));
        }
        let [a, b] = [&self.compare.legs[0], &self.compare.legs[1]];
        if a.name == b.name || a.name.is_empty() || b.name.is_empty() {
            return Err(invalid(
                "compare.legs",
                "leg names must be distinct and non-empty",
            ));
        }
        for (i, leg) in self.compare.legs.iter().enumerate() {
            if leg.name.contains(['/', '\\', ',']) {
                return Err(invalid(
                    &format!("compare.legs[{i}].name"),
                    "must not contain path separators or commas",
                ));
            }
            if let Some(metric) = &leg.metric {
                metric
                    .validate()
                    .map_err(|e| invalid(&format!("compare.legs[{i}].metric"), e))?;
            }
        }
        Ok(())
    }

    /// Optimizer settings with the `[metric]` section filled in.
    pub fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig {
            metric: self.metric,
            ..self.optimizer.clone()
        }
    }

    /// Configuration of one comparison leg as a standalone run.
    pub fn leg(&self, leg: &CompareLeg) -> ExperimentConfig {
        let mut config = self.clone();
        if let Some(metric) = leg.metric {
            config.metric = metric;
        }
        if let Some(memory) = leg.memory {
            config.optimizer.memory = memory;
        }
        config.output = self.output.join(&leg.name);
        config
    }

    /// Switches the generated mesh to the fine resolution, keeping the box
    /// and the obstacle position.
    pub fn use_paper_scale(&mut self) {
        let g = &self.mesh.geometry;
        self.mesh.geometry = ChannelGeometry {
            x_min: g.x_min,
            x_max: g.x_max,
            y_min: g.y_min,
            y_max: g.y_max,
            center: g.center,
            radius: g.radius,
            ..ChannelGeometry::paper()
        };
    }

    pub fn build_mesh(&self) -> Result<TriMesh, ConfigError> {
        let mesh = match self.mesh.source {
            MeshKind::ChannelWithCircle => {
                channel_with_circle(&self.mesh.geometry).map_err(|e| invalid("mesh.geometry", e))?
            }
            MeshKind::File => {
                let path = self.mesh.path.as_ref().expect("validated");
                load_gmsh(path, &self.markers).map_err(|e| invalid("mesh.path", e))?
            }
        };
        if !mesh.has_obstacle() {
            return Err(invalid("mesh", "mesh has no obstacle boundary"));
        }
        Ok(mesh)
    }

    /// Configuration echo written into every run directory.
    pub fn echo(&self) -> String {
        let mut table = toml::Table::try_from(self).expect("configuration serializes");
        // the metric is echoed once, from the [metric] section
        if let Some(toml::Value::Table(optimizer)) = table.get_mut("optimizer") {
            optimizer.remove("metric");
        }
        let body = toml::to_string(&table).expect("configuration serializes");
        format!("# shapeopt {}\n{body}", crate::VERSION)
    }
}
