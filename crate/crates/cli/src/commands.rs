use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use obstacle_path::analytic::{self, AnalyticError};
use obstacle_path::curve::DiscreteCurve;
use obstacle_path::obstacle::{ObstacleKind, ObstacleSpec};
use obstacle_path::optimizer::{self, SolveError, SolveResult};
use obstacle_path::structure::{self, StructureError};
use obstacle_path::uniqueness::{self, UniquenessError};
use obstacle_path::vecmath::dist;
use serde::Serialize;
use serde_json::json;

use crate::config::{Format, RunConfig};

pub const SCHEMA_VERSION: u32 = 1;

/// Non-error outcomes that still map to a nonzero exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    NoConvergence,
    VerificationFailed,
}

impl Outcome {
    pub fn exit_code(self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::NoConvergence => 2,
            Outcome::VerificationFailed => 3,
        }
    }
}

struct Writer {
    dir: PathBuf,
}

impl Writer {
    fn new(dir: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir })
    }

    fn text(&self, name: &str, body: &str) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        println!("{}", path.display());
        Ok(())
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut body = serde_json::to_string_pretty(value)?;
        body.push('\n');
        self.text(name, &body)
    }
}

fn solve_error(e: SolveError) -> anyhow::Error {
    match e {
        SolveError::InfeasibleEndpoints(which) => {
            anyhow!("InfeasibleEndpoints: endpoint {which} is not strictly outside the obstacle")
        }
        other => anyhow!(other),
    }
}

#[derive(Serialize)]
struct SolveArtifact<'a> {
    schema_version: u32,
    obstacle: &'a ObstacleSpec,
    p: &'a [f64],
    q: &'a [f64],
    solver: &'a optimizer::SolveConfig,
    converged: bool,
    results: &'a [SolveResult],
}

pub fn cmd_solve(cfg: &RunConfig) -> Result<Outcome> {
    let obstacle = cfg.validate()?;
    let (p, q) = (cfg.require_p()?, cfg.require_q()?);
    let (results, converged) = match optimizer::solve(p, q, &obstacle, &cfg.solver) {
        Ok(r) => (r, true),
        Err(SolveError::NoConvergence { results, max_iters }) => {
            log::warn!("no start converged within {max_iters} iterations");
            (results, false)
        }
        Err(e) => return Err(solve_error(e)),
    };
    let best = results.iter().find(|r| r.converged).unwrap_or(&results[0]);
    log::info!("best energy {:.12} from start {}", best.energy, best.start_index);

    let out = Writer::new(cfg.out_dir())?;
    out.text("curve.csv", &best.curve.to_csv())?;
    out.json(
        "results.json",
        &SolveArtifact {
            schema_version: SCHEMA_VERSION,
            obstacle: &cfg.obstacle,
            p,
            q,
            solver: &cfg.solver,
            converged,
            results: &results,
        },
    )?;
    match structure::verify_structure(&best.curve, &obstacle, p, q, &cfg.structure) {
        Ok(report) => out.json("structure.json", &report)?,
        Err(e) => log::warn!("structure report unavailable: {e}"),
    }
    Ok(if converged { Outcome::Success } else { Outcome::NoConvergence })
}

pub fn cmd_analytic(cfg: &RunConfig) -> Result<Outcome> {
    let obstacle = cfg.validate()?;
    let (p, q) = (cfg.require_p()?, cfg.require_q()?);
    let ObstacleKind::Sphere { center, radius } = obstacle.kind() else {
        bail!("the analytic construction needs a sphere obstacle");
    };
    let solution = analytic::solve_sphere(center, *radius, p, q).map_err(|e| match e {
        AnalyticError::InfeasiblePoint(_) => anyhow!("InfeasibleEndpoints: {e}"),
        other => anyhow!(other),
    })?;
    let curve = analytic::sphere_solution_to_curve(&solution, cfg.solver.n_segments)?;
    let out = Writer::new(cfg.out_dir())?;
    let mut value = serde_json::to_value(&solution)?;
    value
        .as_object_mut()
        .expect("solution serializes to an object")
        .insert("schema_version".into(), json!(SCHEMA_VERSION));
    out.json("solution.json", &value)?;
    out.text("curve.csv", &curve.to_csv())?;
    Ok(Outcome::Success)
}

pub fn read_curve(path: &Path) -> Result<DiscreteCurve> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let parsed = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        DiscreteCurve::from_json(&text)
    } else {
        DiscreteCurve::from_csv(&text)
    };
    parsed.with_context(|| format!("parsing {}", path.display()))
}

pub fn cmd_verify(curve_file: &Path, cfg: &RunConfig) -> Result<Outcome> {
    let obstacle = cfg.validate()?;
    let curve = read_curve(curve_file)?;
    if curve.dim() != obstacle.dim() {
        bail!("curve has dimension {}, obstacle has dimension {}", curve.dim(), obstacle.dim());
    }
    let p = cfg.p.clone().unwrap_or_else(|| curve.first().to_vec());
    let q = cfg.q.clone().unwrap_or_else(|| curve.last().to_vec());
    let scale = 1e-9 * (1.0 + curve.length());
    if dist(&p, curve.first()) > scale || dist(&q, curve.last()) > scale {
        bail!("curve endpoints do not match p and q");
    }
    for (name, x) in [("p", &p), ("q", &q)] {
        if !obstacle.is_exterior(x) {
            bail!("InfeasibleEndpoints: endpoint {name} is not strictly outside the obstacle");
        }
    }
    let out = Writer::new(cfg.out_dir())?;
    match structure::verify_structure(&curve, &obstacle, &p, &q, &cfg.structure) {
        Ok(report) => {
            out.json("structure.json", &report)?;
            if report.passed {
                Ok(Outcome::Success)
            } else {
                for f in &report.failures {
                    log::warn!("{f}");
                }
                Ok(Outcome::VerificationFailed)
            }
        }
        Err(e @ StructureError::NotConstantSpeed { .. }) => {
            log::warn!("{e}");
            out.json(
                "structure.json",
                &json!({
                    "schema_version": structure::SCHEMA_VERSION,
                    "n_segments": curve.n_segments(),
                    "speed_variation": curve.speed_variation(),
                    "passed": false,
                    "failures": [e.to_string()],
                }),
            )?;
            Ok(Outcome::VerificationFailed)
        }
        Err(e) => Err(e.into()),
    }
}

pub fn cmd_scan(cfg: &RunConfig) -> Result<Outcome> {
    let obstacle = cfg.validate()?;
    let p = cfg.require_p()?;
    let (region, spacing, scan_cfg) = cfg.scan_config()?;
    let map = uniqueness::scan(p, &obstacle, &region, spacing, &scan_cfg)?;
    let nonunique = map.count(uniqueness::Label::NonUnique);
    log::info!(
        "{} points: {} unique, {nonunique} non-unique, {} infeasible, {} unconverged",
        map.labels.len(),
        map.count(uniqueness::Label::Unique),
        map.count(uniqueness::Label::Infeasible),
        map.count(uniqueness::Label::Unconverged)
    );
    let out = Writer::new(cfg.out_dir())?;
    match cfg.output.format {
        Format::Csv => out.text("scan.csv", &map.to_csv())?,
        Format::Json => out.json("scan.json", &map)?,
    }
    let dimension = match uniqueness::estimate_dimension(&map) {
        Ok(d) => json!({ "schema_version": SCHEMA_VERSION, "non_unique_points": nonunique, "dimension": d }),
        Err(e @ UniquenessError::InsufficientData { .. }) => {
            json!({ "schema_version": SCHEMA_VERSION, "non_unique_points": nonunique, "dimension": null, "note": e.to_string() })
        }
        Err(e) => return Err(e.into()),
    };
    out.json("dimension.json", &dimension)?;
    Ok(Outcome::Success)
}
