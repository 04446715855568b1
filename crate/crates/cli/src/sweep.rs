//! Sweep and model-versus-simulation comparison.

use std::collections::BTreeMap;
use std::path::Path;

use perflab::model::{self, ModelVersion, PhasePrediction};
use perflab::sim::{self, SimResult};
use perflab::trace;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::report::{self, write_file};
use crate::scenario::{Point, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    ModelV1,
    ModelV2,
    Sim,
}

impl std::fmt::Display for Source {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Source::ModelV1 => "model-v1",
            Source::ModelV2 => "model-v2",
            Source::Sim => "sim",
        })
    }
}

impl Source {
    fn version(self) -> Option<ModelVersion> {
        match self {
            Source::ModelV1 => Some(ModelVersion::V1),
            Source::ModelV2 => Some(ModelVersion::V2),
            Source::Sim => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    Skipped,
}

/// One output row. Component times are only known to the analytical models;
/// simulator rows fill the phase columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub w: u64,
    pub b: u64,
    pub d_h: u64,
    pub source: Source,
    pub status: Status,
    pub t_disk: Option<f64>,
    pub t_processing: Option<f64>,
    pub t_update: Option<f64>,
    pub t_computation: Option<f64>,
    pub t_memory: Option<f64>,
    pub t_send: Option<f64>,
    pub t_network: Option<f64>,
    pub t_init: Option<f64>,
    pub t_compute_phase: Option<f64>,
    pub t_total: Option<f64>,
    pub note: String,
}

impl SweepRow {
    fn empty(point: Point, source: Source, status: Status, note: String) -> Self {
        SweepRow {
            w: point.w,
            b: point.b,
            d_h: point.d_h,
            source,
            status,
            t_disk: None,
            t_processing: None,
            t_update: None,
            t_computation: None,
            t_memory: None,
            t_send: None,
            t_network: None,
            t_init: None,
            t_compute_phase: None,
            t_total: None,
            note,
        }
    }

    fn from_model(point: Point, source: Source, p: &PhasePrediction) -> Self {
        SweepRow {
            t_disk: Some(p.t_disk),
            t_processing: Some(p.t_processing),
            t_update: Some(p.t_update),
            t_computation: Some(p.t_computation),
            t_memory: Some(p.t_memory),
            t_send: Some(p.t_send),
            t_network: Some(p.t_network),
            t_init: Some(p.t_init),
            t_compute_phase: Some(p.t_compute_phase),
            t_total: Some(p.t_total),
            ..SweepRow::empty(point, source, Status::Ok, String::new())
        }
    }

    fn from_sim(point: Point, result: &SimResult) -> Self {
        let phases = sim::phase_times(result);
        SweepRow {
            t_init: Some(phases.t_init),
            t_compute_phase: Some(phases.t_compute_phase),
            t_total: Some(result.makespan),
            ..SweepRow::empty(point, Source::Sim, Status::Ok, String::new())
        }
    }

    pub fn point(&self) -> Point {
        Point {
            w: self.w,
            b: self.b,
            d_h: self.d_h,
        }
    }

    fn key(&self) -> (Point, Source) {
        (self.point(), self.source)
    }
}

pub fn sources(scenario: &Scenario) -> Vec<Source> {
    let modes = scenario.modes;
    [
        (modes.run_model_v1, Source::ModelV1),
        (modes.run_model_v2, Source::ModelV2),
        (modes.run_sim, Source::Sim),
    ]
    .into_iter()
    .filter_map(|(on, s)| on.then_some(s))
    .collect()
}

/// Where per-point trace files go, if they are wanted.
#[derive(Debug, Clone, Copy)]
pub struct TraceSink<'a> {
    pub dir: &'a Path,
}

fn trace_stem(scenario: &Scenario, point: Point) -> String {
    format!("{}.w{}.b{}.h{}", scenario.name, point.w, point.b, point.d_h)
}

/// Writes `<stem>.trace.json` and `<stem>.profile.csv`.
pub fn write_trace_files(dir: &Path, stem: &str, result: &SimResult) -> Result<(), CliError> {
    let doc = trace::to_chrome_trace(result);
    let mut json = serde_json::to_string(&doc).map_err(|e| CliError::Parse(e.to_string()))?;
    json.push('\n');
    write_file(&dir.join(format!("{stem}.trace.json")), &json)?;
    let table = trace::profile_table(result);
    let csv = report::csv_string(&table.rows)?;
    write_file(&dir.join(format!("{stem}.profile.csv")), &csv)
}

fn evaluate_point(
    scenario: &Scenario,
    point: Point,
    sources: &[Source],
    traces: Option<TraceSink>,
) -> Result<Vec<SweepRow>, CliError> {
    if let Some(reason) = scenario.infeasible(point) {
        return Ok(sources
            .iter()
            .map(|&s| SweepRow::empty(point, s, Status::Skipped, reason.clone()))
            .collect());
    }
    let workload = scenario.workload_at(point);
    let cluster = scenario.cluster_at(point);
    let mut rows = Vec::with_capacity(sources.len());
    for &source in sources {
        match source.version() {
            Some(version) => {
                let pred = model::predict(version, &workload, &cluster, &scenario.costs, &scenario.model_options);
                rows.push(SweepRow::from_model(point, source, &pred));
            }
            None => {
                let result = sim::run_simulation(&scenario.sim_config(point))?;
                if let Some(sink) = traces {
                    write_trace_files(sink.dir, &trace_stem(scenario, point), &result)?;
                }
                rows.push(SweepRow::from_sim(point, &result));
            }
        }
    }
    Ok(rows)
}

/// Evaluates every sweep point (in parallel) and returns rows ordered by
/// `(w, b, d_h, source)`.
pub fn run_sweep(scenario: &Scenario, traces: Option<TraceSink>) -> Result<Vec<SweepRow>, CliError> {
    let sources = sources(scenario);
    let points = scenario.points();
    log::info!("{}: {} points x {} sources", scenario.name, points.len(), sources.len());
    let per_point: Vec<Vec<SweepRow>> = points
        .par_iter()
        .map(|&point| evaluate_point(scenario, point, &sources, traces))
        .collect::<Result<_, _>>()?;
    let mut rows: Vec<SweepRow> = per_point.into_iter().flatten().collect();
    rows.sort_by_key(|r| r.key());
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub w: u64,
    pub b: u64,
    pub d_h: u64,
    pub model: Source,
    pub sim_t_init: f64,
    pub sim_t_compute_phase: f64,
    pub sim_t_total: f64,
    pub model_t_init: f64,
    pub model_t_compute_phase: f64,
    pub model_t_total: f64,
    pub err_init: f64,
    pub err_compute_phase: f64,
    pub err_total: f64,
    /// The simulated computation phase is longer than at some smaller worker
    /// count of the same series: the server is the bottleneck here, which the
    /// models do not capture.
    pub server_saturated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: Source,
    pub phase: String,
    pub points: usize,
    pub max_err: f64,
    pub mean_err: f64,
}

pub fn relative_error(model: f64, sim: f64) -> f64 {
    if model == sim {
        0.0
    } else if sim == 0.0 {
        f64::INFINITY
    } else {
        (model - sim).abs() / sim.abs()
    }
}

/// Joins model and simulator rows of a finished sweep.
pub fn compare_rows(rows: &[SweepRow]) -> Vec<CompareRow> {
    let sims: BTreeMap<Point, &SweepRow> = rows
        .iter()
        .filter(|r| r.source == Source::Sim && r.status == Status::Ok)
        .map(|r| (r.point(), r))
        .collect();

    let mut saturated: BTreeMap<Point, bool> = BTreeMap::new();
    let mut best_so_far: BTreeMap<(u64, u64), f64> = BTreeMap::new();
    // BTreeMap order is (w, b, d_h), so each (b, d_h) series is seen in increasing w.
    for (point, row) in &sims {
        let t = row.t_compute_phase.unwrap_or(0.0);
        let best = best_so_far.entry((point.b, point.d_h)).or_insert(f64::INFINITY);
        saturated.insert(*point, t > *best);
        *best = best.min(t);
    }

    rows.iter()
        .filter(|r| r.source != Source::Sim && r.status == Status::Ok)
        .filter_map(|r| {
            let sim = sims.get(&r.point())?;
            let get = |v: Option<f64>| v.unwrap_or(0.0);
            let (mi, mc, mt) = (get(r.t_init), get(r.t_compute_phase), get(r.t_total));
            let (si, sc, st) = (get(sim.t_init), get(sim.t_compute_phase), get(sim.t_total));
            Some(CompareRow {
                w: r.w,
                b: r.b,
                d_h: r.d_h,
                model: r.source,
                sim_t_init: si,
                sim_t_compute_phase: sc,
                sim_t_total: st,
                model_t_init: mi,
                model_t_compute_phase: mc,
                model_t_total: mt,
                err_init: relative_error(mi, si),
                err_compute_phase: relative_error(mc, sc),
                err_total: relative_error(mt, st),
                server_saturated: saturated[&r.point()],
            })
        })
        .collect()
}

pub fn summarize(rows: &[CompareRow]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for model in [Source::ModelV1, Source::ModelV2] {
        let mine: Vec<_> = rows.iter().filter(|r| r.model == model).collect();
        if mine.is_empty() {
            continue;
        }
        for phase in ["init", "compute_phase", "total"] {
            let errors: Vec<f64> = mine
                .iter()
                .map(|r| match phase {
                    "init" => r.err_init,
                    "compute_phase" => r.err_compute_phase,
                    _ => r.err_total,
                })
                .collect();
            out.push(SummaryRow {
                model,
                phase: phase.to_string(),
                points: errors.len(),
                max_err: errors.iter().copied().fold(0.0, f64::max),
                mean_err: errors.iter().sum::<f64>() / errors.len() as f64,
            });
        }
    }
    out
}

pub fn check_comparable(scenario: &Scenario) -> Result<(), CliError> {
    let m = scenario.modes;
    if !m.run_sim || !(m.run_model_v1 || m.run_model_v2) {
        return Err(CliError::Validation(perflab::Error::Invalid {
            field: "modes".into(),
            reason: "compare needs run_sim and at least one model version".into(),
        }));
    }
    Ok(())
}
