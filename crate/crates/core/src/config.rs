//! Experiment configuration: a small TOML tree with a versioned schema.
//! Every experiment ships defaults; a config file overrides them.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;

use crate::constants::{make_constants, ConstantOverrides, PhysicalConstants, UnitSystem};
use crate::error::{CoreError, Result};
use crate::grid::{BoundaryCondition, Grid};
use crate::potentials::ScalarSpec;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Config schema version; must equal [`CONFIG_SCHEMA_VERSION`].
    pub schema: u32,
    #[serde(default)]
    pub constants: ConstantsSection,
    #[serde(default)]
    pub grid: Option<GridSection>,
    #[serde(default)]
    pub potential: Option<PotentialSection>,
    #[serde(default)]
    pub initial_state: Option<StateSection>,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub output: OutputSection,
    /// Named tolerances overriding experiment defaults (strictly positive).
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    /// Experiment-specific numeric parameters.
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            schema: CONFIG_SCHEMA_VERSION,
            constants: ConstantsSection::default(),
            grid: None,
            potential: None,
            initial_state: None,
            run: RunSection::default(),
            output: OutputSection::default(),
            tolerances: BTreeMap::new(),
            params: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsSection {
    #[serde(default)]
    pub unit_system: Option<UnitSystem>,
    #[serde(default)]
    pub mass: Option<f64>,
    #[serde(default)]
    pub hbar: Option<f64>,
    #[serde(default)]
    pub light_speed: Option<f64>,
    #[serde(default)]
    pub charge: Option<f64>,
}

impl ConstantsSection {
    pub fn build(&self, default_system: UnitSystem) -> Result<PhysicalConstants> {
        make_constants(
            self.unit_system.unwrap_or(default_system),
            ConstantOverrides {
                mass: self.mass,
                hbar: self.hbar,
                light_speed: self.light_speed,
                charge: self.charge,
            },
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// line | ring | plane | disk-polar
    pub topology: String,
    /// Node counts per axis.
    pub nodes: Vec<usize>,
    /// line: [x0, x1]; ring: [radius]; plane: [x0, x1, y0, y1];
    /// disk-polar: [r_max].
    pub extent: Vec<f64>,
    /// Boundary conditions per bounded axis: reflecting | absorbing.
    #[serde(default)]
    pub boundary: Vec<String>,
}

fn parse_bc(name: &str) -> Result<BoundaryCondition> {
    match name {
        "periodic" => Ok(BoundaryCondition::Periodic),
        "reflecting" => Ok(BoundaryCondition::Reflecting),
        "absorbing" => Ok(BoundaryCondition::Absorbing),
        other => Err(CoreError::config(
            "grid.boundary",
            format!("unknown boundary condition `{other}`"),
        )),
    }
}

impl GridSection {
    pub fn build(&self) -> Result<Arc<Grid>> {
        let need = |n: usize, what: &str| -> Result<()> {
            if self.nodes.len() < n {
                return Err(CoreError::config(
                    "grid.nodes",
                    format!("{what} needs {n} axis counts"),
                ));
            }
            Ok(())
        };
        match self.topology.as_str() {
            "line" => {
                need(1, "line")?;
                if self.extent.len() < 2 {
                    return Err(CoreError::config("grid.extent", "line needs [x0, x1]"));
                }
                let bc = parse_bc(
                    self.boundary
                        .first()
                        .map(String::as_str)
                        .unwrap_or("reflecting"),
                )?;
                Grid::line(self.nodes[0], self.extent[0], self.extent[1], bc)
            }
            "ring" => {
                need(1, "ring")?;
                if self.extent.is_empty() {
                    return Err(CoreError::config("grid.extent", "ring needs [radius]"));
                }
                Grid::ring(self.nodes[0], self.extent[0])
            }
            "plane" => {
                need(2, "plane")?;
                if self.extent.len() < 4 {
                    return Err(CoreError::config(
                        "grid.extent",
                        "plane needs [x0, x1, y0, y1]",
                    ));
                }
                let bx = parse_bc(
                    self.boundary
                        .first()
                        .map(String::as_str)
                        .unwrap_or("reflecting"),
                )?;
                let by = parse_bc(
                    self.boundary
                        .get(1)
                        .map(String::as_str)
                        .unwrap_or("reflecting"),
                )?;
                Grid::plane(
                    self.nodes[0],
                    self.nodes[1],
                    (self.extent[0], self.extent[1]),
                    (self.extent[2], self.extent[3]),
                    bx,
                    by,
                )
            }
            "disk-polar" => {
                need(2, "disk-polar")?;
                if self.extent.is_empty() {
                    return Err(CoreError::config("grid.extent", "disk-polar needs [r_max]"));
                }
                Grid::disk_polar(self.nodes[0], self.nodes[1], self.extent[0])
            }
            other => Err(CoreError::config(
                "grid.topology",
                format!("unknown topology `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSection {
    /// zero | harmonic | inverse-square | harmonic-plus-inverse-square
    pub form: String,
    #[serde(default)]
    pub omega: Option<f64>,
    #[serde(default)]
    pub strength: Option<f64>,
}

impl PotentialSection {
    pub fn spec(&self) -> Result<ScalarSpec> {
        let omega = || -> Result<f64> {
            self.omega
                .ok_or_else(|| CoreError::config("potential.omega", "required for harmonic forms"))
        };
        match self.form.as_str() {
            "zero" => Ok(ScalarSpec::Zero),
            "harmonic" => Ok(ScalarSpec::Harmonic { omega: omega()? }),
            "inverse-square" => Ok(ScalarSpec::InverseSquare {
                strength: self.strength.unwrap_or(0.0),
            }),
            "harmonic-plus-inverse-square" => Ok(ScalarSpec::HarmonicPlusInverseSquare {
                omega: omega()?,
                strength: self.strength.unwrap_or(0.0),
            }),
            other => Err(CoreError::config(
                "potential.form",
                format!("unknown potential form `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSection {
    /// gaussian | ring-eigenstate | central-eigenstate
    pub kind: String,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub center: Option<f64>,
    #[serde(default)]
    pub momentum: Option<f64>,
    #[serde(default)]
    pub quantum_number: Option<i64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub dt: f64,
    pub steps: usize,
    pub ensemble: usize,
    pub seed: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            dt: 1e-3,
            steps: 1000,
            ensemble: 100_000,
            seed: 0x5a53_4d31, // "ZSM1"
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Write field CSV artifacts.
    pub fields: bool,
    /// Write binary field/trajectory dumps.
    pub binary_dumps: bool,
    /// Frame stride for recorded evolutions and trajectories.
    pub stride: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            fields: true,
            binary_dumps: false,
            stride: 100,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CoreError::Config {
            path: e
                .span()
                .map(|s| format!("byte range {s:?}"))
                .unwrap_or_else(|| "<root>".to_string()),
            reason: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != CONFIG_SCHEMA_VERSION {
            return Err(CoreError::config(
                "schema",
                format!(
                    "unsupported schema version {} (this build reads {})",
                    self.schema, CONFIG_SCHEMA_VERSION
                ),
            ));
        }
        if !(self.run.dt > 0.0 && self.run.dt.is_finite()) {
            return Err(CoreError::config("run.dt", "must be positive"));
        }
        if self.run.ensemble < 1 {
            return Err(CoreError::config("run.ensemble", "must be at least 1"));
        }
        for (name, &tol) in &self.tolerances {
            if !(tol > 0.0) {
                return Err(CoreError::config(
                    &format!("tolerances.{name}"),
                    "tolerances must be strictly positive",
                ));
            }
        }
        Ok(())
    }

    /// Canonical serialization: the SHA-256 hex digest of the JSON form
    /// (struct order is fixed and maps are sorted, so equal configs hash
    /// equally).
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let canonical = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let out = hasher.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Tolerance with an experiment default.
    pub fn tolerance(&self, name: &str, default: f64) -> f64 {
        self.tolerances.get(name).copied().unwrap_or(default)
    }

    /// Experiment parameter with a default.
    pub fn param(&self, name: &str, default: f64) -> f64 {
        self.params.get(name).copied().unwrap_or(default)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_toml() {
        let text = r#"
schema = 1

[constants]
unit_system = "natural"

[grid]
topology = "ring"
nodes = [128]
extent = [1.0]

[run]
dt = 0.002
steps = 500
ensemble = 1000
seed = 42

[tolerances]
l1 = 0.05
"#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.run.seed, 42);
        assert_eq!(cfg.tolerance("l1", 1.0), 0.05);
        let g = cfg.grid.as_ref().unwrap().build().unwrap();
        assert_eq!(g.num_nodes(), 128);
        // Hash is stable under serialization round trips.
        let text2 = toml::to_string(&cfg).unwrap();
        let cfg2 = ExperimentConfig::from_toml_str(&text2).unwrap();
        assert_eq!(cfg.hash(), cfg2.hash());
    }

    #[test]
    fn wrong_schema_version_is_rejected() {
        let err = ExperimentConfig::from_toml_str("schema = 2").unwrap_err();
        assert!(err.to_string().contains("schema"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::from_toml_str("schema = 1\nbogus = 3").unwrap_err();
        assert!(err.to_string().contains("bogus") || err.to_string().contains("unknown"));
    }

    #[test]
    fn non_positive_tolerance_names_the_key() {
        let err =
            ExperimentConfig::from_toml_str("schema = 1\n[tolerances]\nl1 = 0.0\n").unwrap_err();
        assert!(err.to_string().contains("tolerances.l1"), "{err}");
    }

    #[test]
    fn different_seeds_hash_differently() {
        let a = ExperimentConfig::from_toml_str(
            "schema = 1\n[run]\ndt = 1e-3\nsteps = 1\nensemble = 1\nseed = 1",
        )
        .unwrap();
        let b = ExperimentConfig::from_toml_str(
            "schema = 1\n[run]\ndt = 1e-3\nsteps = 1\nensemble = 1\nseed = 2",
        )
        .unwrap();
        assert_ne!(a.hash(), b.hash());
    }
}
