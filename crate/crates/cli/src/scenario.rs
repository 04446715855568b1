//! Scenario files: one JSON document describing a workload, a cluster, cost
//! constants and the sweep to run over them.

use std::path::{Path, PathBuf};

use perflab::model::{ClusterSpec, CostParams, ModelOptions, WorkloadSpec};
use perflab::sim::{SimConfig, SimOptions};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub workers: Vec<u64>,
    pub batch_sizes: Vec<u64>,
    pub hidden_dims: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Modes {
    #[serde(default)]
    pub run_model_v1: bool,
    #[serde(default)]
    pub run_model_v2: bool,
    #[serde(default)]
    pub run_sim: bool,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub workload: WorkloadSpec,
    pub cluster: ClusterSpec,
    pub costs: CostParams,
    #[serde(default)]
    pub model_options: ModelOptions,
    #[serde(default)]
    pub simulator: SimOptions,
    pub sweep: Sweep,
    pub modes: Modes,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

/// One `(w, b, d_h)` combination of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Point {
    pub w: u64,
    pub b: u64,
    pub d_h: u64,
}

fn invalid(field: &str, reason: impl Into<String>) -> CliError {
    CliError::Validation(perflab::Error::Invalid {
        field: field.to_string(),
        reason: reason.into(),
    })
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Scenario, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let scenario: Scenario = serde_json::from_str(&text)
            .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        scenario.validate()?;
        Ok(scenario)
    }

    /// Checks every module invariant a sweep could trip over. Points whose
    /// batch does not fit a worker's shard are not errors; they are skipped.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.name.trim().is_empty() {
            return Err(invalid("name", "must not be empty"));
        }
        if self.name.contains(['/', '\\']) {
            return Err(invalid("name", "is used as a file name and must not contain path separators"));
        }
        self.workload.validate().map_err(|e| e.in_section("workload"))?;
        self.cluster.validate().map_err(|e| e.in_section("cluster"))?;
        self.costs.validate().map_err(|e| e.in_section("costs"))?;
        let jitter = self.simulator.compute_jitter;
        if !(0.0..1.0).contains(&jitter) {
            return Err(invalid(
                "simulator.compute_jitter",
                format!("must lie in [0, 1), got {jitter}"),
            ));
        }

        let lists = [
            ("sweep.workers", &self.sweep.workers),
            ("sweep.batch_sizes", &self.sweep.batch_sizes),
            ("sweep.hidden_dims", &self.sweep.hidden_dims),
        ];
        for (field, list) in lists {
            if list.is_empty() {
                return Err(invalid(field, "must not be empty"));
            }
            if let Some(zero) = list.iter().position(|&v| v == 0) {
                return Err(invalid(&format!("{field}[{zero}]"), "must be >= 1"));
            }
        }
        for (i, &b) in self.sweep.batch_sizes.iter().enumerate() {
            if b > self.workload.d {
                return Err(invalid(
                    &format!("sweep.batch_sizes[{i}]"),
                    format!("batch size {b} exceeds dataset size {}", self.workload.d),
                ));
            }
        }
        if !(self.modes.run_model_v1 || self.modes.run_model_v2 || self.modes.run_sim) {
            return Err(invalid("modes", "at least one of run_model_v1, run_model_v2, run_sim must be true"));
        }
        Ok(())
    }

    /// Every sweep point, sorted and without repeats.
    pub fn points(&self) -> Vec<Point> {
        let mut points = Vec::new();
        for &w in &self.sweep.workers {
            for &b in &self.sweep.batch_sizes {
                for &d_h in &self.sweep.hidden_dims {
                    points.push(Point { w, b, d_h });
                }
            }
        }
        points.sort();
        points.dedup();
        points
    }

    /// The scenario's own single point: `cluster.w`, `workload.b`, `workload.d_h`.
    pub fn base_point(&self) -> Point {
        Point {
            w: self.cluster.w,
            b: self.workload.b,
            d_h: self.workload.d_h,
        }
    }

    pub fn workload_at(&self, point: Point) -> WorkloadSpec {
        self.workload.with_batch(point.b).with_hidden(point.d_h)
    }

    pub fn cluster_at(&self, point: Point) -> ClusterSpec {
        self.cluster.with_workers(point.w)
    }

    pub fn sim_config(&self, point: Point) -> SimConfig {
        SimConfig {
            workload: self.workload_at(point),
            cluster: self.cluster_at(point),
            costs: self.costs,
            options: self.simulator,
        }
    }

    /// Why `point` cannot run, if it cannot.
    pub fn infeasible(&self, point: Point) -> Option<String> {
        let per_worker = self.workload.d / point.w;
        if per_worker == 0 {
            Some(format!("w={} exceeds d={}", point.w, self.workload.d))
        } else if point.b > per_worker {
            Some(format!("b={} exceeds d/w={per_worker}", point.b))
        } else {
            None
        }
    }
}
