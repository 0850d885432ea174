//! Declarative run configuration: a TOML file with [problem] and [run]
//! sections, plus command-line overrides. The resolved configuration is
//! hashed and echoed into every output file header so runs are
//! reproducible records.

use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use twoway_core::quad::{Bc, BoundaryData, Coefficient, ProblemSpec, WeightKind};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub problem: ProblemSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    /// one of: periodic-cos, periodic-cos-r, step, linear, cubic
    pub preset: Option<String>,
    pub r: Option<f64>,
    #[serde(rename = "L")]
    pub length: Option<f64>,
    pub rho_pos: Option<f64>,
    pub rho_neg: Option<f64>,
    pub even_sector_only: Option<bool>,
    /// tabulated boundary data (theta, w) pairs
    pub boundary_theta: Option<Vec<f64>>,
    pub boundary_w: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub n_modes: Option<usize>,
    pub n_nodes: Option<usize>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub lambda_threshold: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub oversample: Option<usize>,
    /// sweep values
    #[serde(rename = "L_values")]
    pub l_values: Option<Vec<f64>>,
    pub r_values: Option<Vec<f64>>,
    #[serde(rename = "N_values")]
    pub n_values: Option<Vec<usize>>,
    /// norm estimates: "drop" or "include"
    pub l_mode: Option<String>,
    /// profile export resolution in x
    pub x_samples: Option<usize>,
}

/// Fully resolved configuration: file values overridden by flags, with
/// defaults filled in.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub preset: String,
    pub r: f64,
    pub length: f64,
    pub rho_pos: f64,
    pub rho_neg: f64,
    pub even_sector_only: Option<bool>,
    pub boundary_theta: Option<Vec<f64>>,
    pub boundary_w: Option<Vec<f64>>,
    pub n_modes: usize,
    pub n_nodes: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub lambda_threshold: Option<f64>,
    pub seed: u64,
    pub out: PathBuf,
    pub jobs: usize,
    pub oversample: usize,
    pub l_values: Vec<f64>,
    pub r_values: Vec<f64>,
    pub n_values: Vec<usize>,
    pub l_mode: String,
    pub x_samples: usize,
}

pub struct Overrides {
    pub length: Option<f64>,
    pub r: Option<f64>,
    pub n_modes: Option<usize>,
    pub n_nodes: Option<usize>,
    pub tol: Option<f64>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn resolve(
        command: &str,
        file: FileConfig,
        ov: Overrides,
    ) -> Result<RunConfig, String> {
        let preset = file
            .problem
            .preset
            .clone()
            .unwrap_or_else(|| "periodic-cos".to_string());
        let jobs_env = std::env::var("TWOWAY_JOBS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok());
        let cfg = RunConfig {
            command: command.to_string(),
            r: ov.r.or(file.problem.r).unwrap_or(0.1),
            length: ov.length.or(file.problem.length).unwrap_or(1.0),
            rho_pos: file.problem.rho_pos.unwrap_or(1.0),
            rho_neg: file.problem.rho_neg.unwrap_or(2.0),
            even_sector_only: file.problem.even_sector_only,
            boundary_theta: file.problem.boundary_theta.clone(),
            boundary_w: file.problem.boundary_w.clone(),
            n_modes: ov.n_modes.or(file.run.n_modes).unwrap_or(32),
            n_nodes: ov.n_nodes.or(file.run.n_nodes).unwrap_or(1024),
            tol: ov.tol.or(file.run.tol).unwrap_or(1e-10),
            max_iter: file.run.max_iter.unwrap_or(200),
            lambda_threshold: file.run.lambda_threshold,
            seed: ov.seed.or(file.run.seed).unwrap_or(0),
            out: ov
                .out
                .or(file.run.out)
                .unwrap_or_else(|| PathBuf::from(".")),
            jobs: ov.jobs.or(file.run.jobs).or(jobs_env).unwrap_or(1),
            oversample: file.run.oversample.unwrap_or(4),
            l_values: file
                .run
                .l_values
                .unwrap_or_else(|| vec![0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0]),
            r_values: file
                .run
                .r_values
                .unwrap_or_else(|| vec![0.02, 0.05, 0.1, 0.2, 0.3, 0.5]),
            n_values: file
                .run
                .n_values
                .unwrap_or_else(|| vec![25, 35, 50, 70, 100, 140, 200, 280, 400]),
            l_mode: file.run.l_mode.unwrap_or_else(|| "drop".to_string()),
            x_samples: file.run.x_samples.unwrap_or(41),
            preset,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), String> {
        match self.preset.as_str() {
            "periodic-cos" | "periodic-cos-r" | "step" | "linear" | "cubic" => {}
            other => {
                return Err(format!(
                    "problem.preset: unknown preset '{other}' (expected periodic-cos, \
                     periodic-cos-r, step, linear or cubic)"
                ))
            }
        }
        if self.preset == "periodic-cos-r" && !(self.r > 0.0 && self.r < 1.0) {
            return Err(format!("problem.r: need 0 < r < 1, got {}", self.r));
        }
        if !(self.length > 0.0) {
            return Err(format!("problem.L: need L > 0, got {}", self.length));
        }
        if self.n_modes == 0 {
            return Err("run.n_modes: must be positive".into());
        }
        if self.n_nodes < 16 {
            return Err(format!("run.n_nodes: at least 16, got {}", self.n_nodes));
        }
        match self.l_mode.as_str() {
            "drop" | "include" => {}
            other => return Err(format!("run.l_mode: 'drop' or 'include', got '{other}'")),
        }
        if let (Some(t), Some(w)) = (&self.boundary_theta, &self.boundary_w) {
            if t.len() != w.len() || t.len() < 2 {
                return Err("problem.boundary_theta/boundary_w: need matching lists of length >= 2".into());
            }
        }
        match self.command.as_str() {
            "sweep-r" | "lambda-r" => {
                if self.preset == "step" || self.preset == "linear" || self.preset == "cubic" {
                    return Err(format!(
                        "command {} needs the periodic-cos-r family",
                        self.command
                    ));
                }
            }
            "pnorm" | "sweep-L" | "diffusivity" => {
                if !self.preset.starts_with("periodic-cos") {
                    return Err(format!(
                        "command {} is defined for the periodic channel presets",
                        self.command
                    ));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn problem_spec(&self) -> ProblemSpec {
        let mut spec = match self.preset.as_str() {
            "periodic-cos" => ProblemSpec::periodic_cos(self.length, self.rho_pos, self.rho_neg),
            "periodic-cos-r" => {
                ProblemSpec::periodic_cos_r(self.r, self.length, self.rho_pos, self.rho_neg)
            }
            "step" => ProblemSpec::step(self.length),
            "linear" => ProblemSpec::linear(self.length),
            "cubic" => ProblemSpec::cubic(self.length),
            _ => unreachable!("validated preset"),
        };
        if matches!(
            spec.weight,
            WeightKind::Sgn | WeightKind::Linear | WeightKind::Cubic
        ) {
            spec.boundary = BoundaryData::PiecewiseConst {
                rho_pos: self.rho_pos,
                rho_neg: self.rho_neg,
            };
        }
        if let Some(even) = self.even_sector_only {
            spec.even_sector_only = even;
        }
        if let (Some(t), Some(w)) = (&self.boundary_theta, &self.boundary_w) {
            spec.boundary = BoundaryData::Tabulated {
                theta: t.clone(),
                w: w.clone(),
            };
        }
        spec.p = Coefficient::One;
        debug_assert!(matches!(spec.bc, Bc::Periodic | Bc::Dirichlet));
        spec
    }

    /// FNV-1a hash of the canonical serialized configuration. The output
    /// path and worker count are execution details, not part of the
    /// mathematical configuration, so they are excluded.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).unwrap_or_default();
        if let Some(map) = value.as_object_mut() {
            map.remove("out");
            map.remove("jobs");
        }
        let body = value.to_string();
        let mut h: u64 = 0xcbf29ce484222325;
        for b in body.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }
}
