use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use obstacle_path::obstacle::{ConvexObstacle, ObstacleSpec};
use obstacle_path::optimizer::SolveConfig;
use obstacle_path::structure::StructureTols;
use obstacle_path::uniqueness::{Region, ScanConfig, ENERGY_EQUAL_TOL};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    pub region: Region,
    pub spacing: f64,
    #[serde(default)]
    pub cluster_tol: Option<f64>,
    #[serde(default = "default_energy_equal_tol")]
    pub energy_equal_tol: f64,
}

fn default_energy_equal_tol() -> f64 {
    ENERGY_EQUAL_TOL
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub format: Format,
}

/// Everything a subcommand needs, read from one JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub obstacle: ObstacleSpec,
    #[serde(default)]
    pub p: Option<Vec<f64>>,
    #[serde(default)]
    pub q: Option<Vec<f64>>,
    #[serde(default)]
    pub solver: SolveConfig,
    #[serde(default)]
    pub scan: Option<ScanSection>,
    #[serde(default)]
    pub structure: StructureTols,
    #[serde(default)]
    pub output: OutputSection,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub seed: Option<u64>,
    pub n_segments: Option<usize>,
    pub n_starts: Option<usize>,
    pub max_iters: Option<usize>,
    pub grad_tol: Option<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| anyhow::anyhow!("parse error: {e}"))?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(d) = &o.out {
            self.output.dir = Some(d.clone());
        }
        if let Some(f) = o.format {
            self.output.format = f;
        }
        if let Some(s) = o.seed {
            self.solver.seed = s;
        }
        if let Some(n) = o.n_segments {
            self.solver.n_segments = n;
        }
        if let Some(n) = o.n_starts {
            self.solver.n_starts = n;
        }
        if let Some(n) = o.max_iters {
            self.solver.max_iters = n;
        }
        if let Some(t) = o.grad_tol {
            self.solver.grad_tol = t;
        }
    }

    /// Builds the obstacle and checks dimensions and tolerances.
    pub fn validate(&self) -> Result<ConvexObstacle> {
        let obstacle = self.obstacle.build().context("obstacle")?;
        let dim = obstacle.dim();
        for (name, v) in [("p", &self.p), ("q", &self.q)] {
            if let Some(v) = v {
                if v.len() != dim {
                    bail!("{name} has dimension {}, obstacle has dimension {dim}", v.len());
                }
                if v.iter().any(|x| !x.is_finite()) {
                    bail!("{name} has non-finite coordinates");
                }
            }
        }
        self.solver.validate()?;
        let t = &self.structure;
        let positive = [t.straightness, t.tangency, t.geodesic, t.curvature_slack, t.junction_angle_factor];
        if positive.iter().any(|x| !(*x > 0.0)) || t.contact_tol.is_some_and(|c| !(c > 0.0)) {
            bail!("structure tolerances must be positive");
        }
        if let Some(s) = &self.scan {
            if s.region.lo.len() != dim || s.region.hi.len() != dim {
                bail!("scan region must have dimension {dim}");
            }
            if !(s.spacing > 0.0) || !(s.energy_equal_tol > 0.0) || s.cluster_tol.is_some_and(|c| !(c > 0.0)) {
                bail!("scan tolerances and spacing must be positive");
            }
        }
        Ok(obstacle)
    }

    pub fn require_p(&self) -> Result<&[f64]> {
        self.p.as_deref().context("config is missing p")
    }

    pub fn require_q(&self) -> Result<&[f64]> {
        self.q.as_deref().context("config is missing q")
    }

    pub fn scan_config(&self) -> Result<(Region, f64, ScanConfig)> {
        let s = self.scan.as_ref().context("config is missing the scan section")?;
        let cfg = ScanConfig {
            solver: self.solver.clone(),
            cluster_tol: s.cluster_tol,
            energy_equal_tol: s.energy_equal_tol,
        };
        Ok((s.region.clone(), s.spacing, cfg))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.output.dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{"obstacle": {"kind": "sphere", "center": [0, 0], "radius": 1}, "p": [-2, 0], "q": [2, 0]}"#;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = RunConfig::parse(BASE).unwrap();
        assert_eq!(c.solver, SolveConfig::default());
        assert_eq!(c.output.format, Format::Json);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn unknown_field_is_named() {
        let text = BASE.replace("\"q\"", "\"qq\"");
        let e = format!("{:#}", RunConfig::parse(&text).unwrap_err());
        assert!(e.contains("qq"), "{e}");
        let text = BASE.replace("}, \"p\"", ", \"colour\": 1}, \"p\"");
        let e = format!("{:#}", RunConfig::parse(&text).unwrap_err());
        assert!(e.contains("colour"), "{e}");
    }

    #[test]
    fn flags_win() {
        let mut c = RunConfig::parse(BASE).unwrap();
        c.apply(&Overrides {
            seed: Some(9),
            n_segments: Some(64),
            format: Some(Format::Csv),
            ..Default::default()
        });
        assert_eq!(c.solver.seed, 9);
        assert_eq!(c.solver.n_segments, 64);
        assert_eq!(c.output.format, Format::Csv);
    }

    #[test]
    fn dimension_and_tolerance_checks() {
        let c = RunConfig::parse(&BASE.replace("[2, 0]", "[2, 0, 0]")).unwrap();
        assert!(c.validate().is_err());
        let mut c = RunConfig::parse(BASE).unwrap();
        c.structure.tangency = 0.0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::parse(BASE).unwrap();
        c.solver.grad_tol = -1.0;
        assert!(c.validate().is_err());
    }
}
