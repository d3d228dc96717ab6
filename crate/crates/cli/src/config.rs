use std::path::{Path, PathBuf};

use lagflow::{FlowConfig, GeneratorSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    Torus,
    Sphere,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseConfig {
    /// Time of the kernel center; defaults to the last recorded snapshot time.
    pub t0: Option<f64>,
    /// Grid node `(i, j)` whose image at `t0` is the spatial center.
    pub center_node: [usize; 2],
    pub lambda: f64,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        Self { t0: None, center_node: [0, 0], lambda: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: Geometry,
    pub generator: GeneratorSpec,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Start from this snapshot instead of the generator output.
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default)]
    pub emit_snapshots: bool,
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
    #[serde(default)]
    pub diagnose: DiagnoseConfig,
}

fn default_stride() -> usize {
    100
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.generator.validate()?;
        self.flow.validate()?;
        if self.generator.is_sphere() != (self.geometry == Geometry::Sphere) {
            return Err(CliError::Config(format!(
                "generator kind does not match geometry {:?}",
                self.geometry
            )));
        }
        if self.emit_snapshots && self.snapshot_stride == 0 {
            return Err(CliError::Config("snapshot_stride must be positive".into()));
        }
        if !(self.diagnose.lambda > 0.0 && self.diagnose.lambda.is_finite()) {
            return Err(CliError::Config("diagnose.lambda must be positive".into()));
        }
        Ok(())
    }

    /// `--out` wins over the config; one of them is required.
    pub fn output_dir(&self, flag: Option<&Path>) -> Result<PathBuf, CliError> {
        flag.map(Path::to_path_buf)
            .or_else(|| self.output_dir.clone())
            .ok_or_else(|| CliError::Config("no output directory (use --out or output_dir)".into()))
    }
}
