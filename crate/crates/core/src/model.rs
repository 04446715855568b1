//! Closed-form cost model of data-parallel SGD training against a single
//! parameter server.
//!
//! All times are seconds and all sizes are bytes. Every `r_*` rate is a cost
//! per byte (the inverse of a bandwidth) and every `c_*` constant is a cost per
//! event. Per-worker quantities are evaluated at a real-valued datapoint count
//! `n`, so `d / w` need not be an integer.
//!
//! Two combinations are provided:
//!
//! * [`t_total_v1`]: every worker reads only its own shard, and the per-epoch
//!   cost is the larger of communication and computation (they overlap).
//! * [`t_total_v2`]: every worker reads the whole dataset over a shared I/O
//!   path, and the per-epoch cost is combined with a computation-phase floor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn default_elem_bytes() -> u64 {
    8
}

fn default_labels() -> u64 {
    1
}

/// Cost constants of the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// Seconds to process one datapoint.
    pub c_p: f64,
    /// Seconds to prepare and hand off one batch update.
    pub c_b: f64,
    /// Seconds the server spends aggregating one worker update.
    pub c_u: f64,
    /// Seconds per byte read from disk (writes assumed to cost the same).
    pub r_d: f64,
    /// Seconds per byte of memory traffic while the working set is cache resident.
    pub r_m_cache: f64,
    /// Seconds per byte of memory traffic once the working set spills from cache.
    pub r_m_mem: f64,
    /// Seconds per byte sent over the network.
    pub r_net: f64,
    /// Minimum achievable computation-phase time per epoch.
    #[serde(default)]
    pub t_phase_floor: f64,
    /// Simulator only: extra server seconds per handled update, per connected
    /// worker. Zero reproduces the plain `w * c_u` aggregation cost.
    #[serde(default)]
    pub c_contention: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            c_p: 0.0,
            c_b: 0.0,
            c_u: 0.0,
            r_d: 0.0,
            r_m_cache: 0.0,
            r_m_mem: 0.0,
            r_net: 0.0,
            t_phase_floor: 0.0,
            c_contention: 0.0,
        }
    }
}

impl CostParams {
    fn fields(&self) -> [(&'static str, f64); 9] {
        [
            ("c_p", self.c_p),
            ("c_b", self.c_b),
            ("c_u", self.c_u),
            ("r_d", self.r_d),
            ("r_m_cache", self.r_m_cache),
            ("r_m_mem", self.r_m_mem),
            ("r_net", self.r_net),
            ("t_phase_floor", self.t_phase_floor),
            ("c_contention", self.c_contention),
        ]
    }

    /// Checks the hard invariants and returns soft-invariant warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        for (name, value) in self.fields() {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::invalid(name, format!("must be finite and >= 0, got {value}")));
            }
        }
        if self.r_m_cache > self.r_m_mem {
            return Err(Error::invalid(
                "r_m_cache",
                format!(
                    "cache rate {} s/B is slower than memory rate {} s/B",
                    self.r_m_cache, self.r_m_mem
                ),
            ));
        }
        let mut warnings = Vec::new();
        if self.r_m_mem > self.r_d {
            let msg = format!(
                "r_m_mem ({} s/B) is slower than disk r_d ({} s/B)",
                self.r_m_mem, self.r_d
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
        Ok(warnings)
    }

    /// Multiplies every cost that acts after initialization by `factor`.
    /// The disk rate is left alone.
    pub fn scale_compute_side(&self, factor: f64) -> CostParams {
        CostParams {
            c_p: self.c_p * factor,
            c_b: self.c_b * factor,
            c_u: self.c_u * factor,
            r_d: self.r_d,
            r_m_cache: self.r_m_cache * factor,
            r_m_mem: self.r_m_mem * factor,
            r_net: self.r_net * factor,
            t_phase_floor: self.t_phase_floor * factor,
            c_contention: self.c_contention * factor,
        }
    }
}

/// Dataset, network shape and training-loop settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    /// Datapoints in the dataset.
    pub d: u64,
    /// Features per datapoint.
    pub n_f: u64,
    #[serde(default = "default_labels")]
    pub n_labels: u64,
    pub d_i: u64,
    pub d_h: u64,
    pub d_o: u64,
    /// Passes over the full dataset.
    pub epoch: u64,
    /// Batch size in datapoints.
    pub b: u64,
    #[serde(default = "default_elem_bytes")]
    pub elem_bytes: u64,
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d", self.d),
            ("n_f", self.n_f),
            ("d_i", self.d_i),
            ("d_h", self.d_h),
            ("d_o", self.d_o),
            ("epoch", self.epoch),
            ("b", self.b),
            ("elem_bytes", self.elem_bytes),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(Error::invalid(name, "must be >= 1"));
            }
        }
        if self.d_i != self.n_f {
            return Err(Error::invalid(
                "d_i",
                format!("input layer width {} must equal n_f = {}", self.d_i, self.n_f),
            ));
        }
        if self.b > self.d {
            return Err(Error::invalid(
                "b",
                format!("batch size {} exceeds dataset size {}", self.b, self.d),
            ));
        }
        Ok(())
    }

    pub fn with_batch(&self, b: u64) -> WorkloadSpec {
        WorkloadSpec { b, ..*self }
    }

    pub fn with_hidden(&self, d_h: u64) -> WorkloadSpec {
        WorkloadSpec { d_h, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IoMode {
    /// Each worker reads only its own shard, all concurrently.
    PartitionedParallel,
    /// Each worker reads the whole dataset, one after another on a shared path.
    #[default]
    SequentialFullRead,
}

/// How the per-epoch compute term is combined with `t_phase_floor` in v2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClampMode {
    /// `max(term, floor)`: the floor is a lower bound.
    #[default]
    Floor,
    /// `min(term, floor)`: the floor caps the term instead.
    LiteralMin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterSpec {
    /// Worker count.
    pub w: u64,
    /// Effective cache capacity per node in bytes.
    pub cache_bytes: u64,
    #[serde(default)]
    pub io_mode: IoMode,
    #[serde(default)]
    pub clamp_mode: ClampMode,
}

impl ClusterSpec {
    pub fn validate(&self) -> Result<()> {
        if self.w == 0 {
            return Err(Error::invalid("w", "must be >= 1"));
        }
        Ok(())
    }

    pub fn with_workers(&self, w: u64) -> ClusterSpec {
        ClusterSpec { w, ..*self }
    }
}

/// Variants of the closed forms that the plain equations leave open.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ModelOptions {
    /// Count a trailing partial batch as a whole batch (`ceil(n / b)`).
    #[serde(default)]
    pub ceil_batches: bool,
    /// Count label bytes as part of the disk read.
    #[serde(default)]
    pub include_labels_in_disk: bool,
}

impl ModelOptions {
    fn batches(&self, n: f64, b: u64) -> f64 {
        let exact = n / b as f64;
        if self.ceil_batches {
            exact.ceil()
        } else {
            exact
        }
    }

    fn disk_elements(&self, spec: &WorkloadSpec) -> f64 {
        if self.include_labels_in_disk {
            (spec.n_f + spec.n_labels) as f64
        } else {
            spec.n_f as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelVersion {
    V1,
    V2,
}

/// Per-phase analytical times for one scenario. Component terms are evaluated
/// at the per-worker datapoint count `d / w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePrediction {
    pub t_disk: f64,
    pub t_processing: f64,
    pub t_update: f64,
    pub t_computation: f64,
    pub t_memory: f64,
    pub t_send: f64,
    pub t_network: f64,
    pub t_init: f64,
    pub t_compute_phase: f64,
    pub t_total: f64,
    pub model_version: ModelVersion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkingSet {
    pub batch_bytes: u64,
    pub weight_bytes: u64,
}

impl WorkingSet {
    pub fn total(&self) -> u64 {
        self.batch_bytes + self.weight_bytes
    }
}

/// Weights of the three-layer network: `d_i * d_h + d_h * d_o`.
pub fn weight_count(spec: &WorkloadSpec) -> u64 {
    spec.d_i * spec.d_h + spec.d_h * spec.d_o
}

/// Bytes one batch iteration keeps hot: the batch itself plus the weights.
pub fn working_set_bytes(spec: &WorkloadSpec) -> WorkingSet {
    WorkingSet {
        batch_bytes: (spec.n_f + spec.n_labels) * spec.elem_bytes * spec.b,
        weight_bytes: weight_count(spec) * spec.elem_bytes,
    }
}

pub fn t_processing(n: f64, p: &CostParams) -> f64 {
    p.c_p * n
}

/// Update overhead, with `n / b` taken as a real number.
pub fn t_update(n: f64, b: u64, p: &CostParams) -> f64 {
    p.c_b * (n / b as f64)
}

pub fn t_computation(n: f64, b: u64, p: &CostParams) -> f64 {
    t_processing(n, p) + t_update(n, b, p)
}

/// Reading `n` datapoints' features from disk. Labels are not counted.
pub fn t_disk(n: f64, spec: &WorkloadSpec, p: &CostParams) -> f64 {
    disk_cost(n, spec, p, &ModelOptions::default())
}

fn disk_cost(n: f64, spec: &WorkloadSpec, p: &CostParams, opts: &ModelOptions) -> f64 {
    p.r_d * spec.elem_bytes as f64 * opts.disk_elements(spec) * n
}

/// Memory rate in effect: the cache rate while the working set fits.
pub fn effective_mem_rate(spec: &WorkloadSpec, cluster: &ClusterSpec, p: &CostParams) -> f64 {
    if working_set_bytes(spec).total() <= cluster.cache_bytes {
        p.r_m_cache
    } else {
        p.r_m_mem
    }
}

pub fn t_memory(n: f64, spec: &WorkloadSpec, cluster: &ClusterSpec, p: &CostParams) -> f64 {
    memory_cost(n, n / spec.b as f64, spec, cluster, p)
}

// Reads of the batch data plus a read and a write of the weights per batch,
// both at the one active rate.
fn memory_cost(
    n: f64,
    batches: f64,
    spec: &WorkloadSpec,
    cluster: &ClusterSpec,
    p: &CostParams,
) -> f64 {
    let rate = effective_mem_rate(spec, cluster, p);
    let elem = spec.elem_bytes as f64;
    elem * (n * rate * spec.n_f as f64 + 2.0 * rate * weight_count(spec) as f64 * batches)
}

/// Upload of one weight delta per batch, without a per-message latency term.
pub fn t_send(n: f64, b: u64, spec: &WorkloadSpec, p: &CostParams) -> f64 {
    send_cost(n / b as f64, spec, p)
}

fn send_cost(batches: f64, spec: &WorkloadSpec, p: &CostParams) -> f64 {
    p.r_net * spec.elem_bytes as f64 * weight_count(spec) as f64 * batches
}

/// Delta upload, weight download and server aggregation of all `w` updates, per batch.
pub fn t_network(
    n: f64,
    b: u64,
    spec: &WorkloadSpec,
    cluster: &ClusterSpec,
    p: &CostParams,
) -> f64 {
    network_cost(n / b as f64, spec, cluster, p)
}

fn network_cost(batches: f64, spec: &WorkloadSpec, cluster: &ClusterSpec, p: &CostParams) -> f64 {
    2.0 * send_cost(batches, spec, p) + cluster.w as f64 * p.c_u * batches
}

/// Initialization when each of `w` readers pulls the whole dataset through a
/// shared path: `w * t_disk(n * w)`.
pub fn t_disk_updated(w: u64, n: f64, spec: &WorkloadSpec, p: &CostParams) -> f64 {
    w as f64 * t_disk(n * w as f64, spec, p)
}

pub fn t_total_v1(spec: &WorkloadSpec, cluster: &ClusterSpec, p: &CostParams) -> PhasePrediction {
    predict(ModelVersion::V1, spec, cluster, p, &ModelOptions::default())
}

pub fn t_total_v2(spec: &WorkloadSpec, cluster: &ClusterSpec, p: &CostParams) -> PhasePrediction {
    predict(ModelVersion::V2, spec, cluster, p, &ModelOptions::default())
}

/// Evaluates one model version with explicit [`ModelOptions`].
pub fn predict(
    version: ModelVersion,
    spec: &WorkloadSpec,
    cluster: &ClusterSpec,
    p: &CostParams,
    opts: &ModelOptions,
) -> PhasePrediction {
    let w = cluster.w as f64;
    let n = spec.d as f64 / w;
    let batches = opts.batches(n, spec.b);

    let t_disk = disk_cost(n, spec, p, opts);
    let t_processing = t_processing(n, p);
    let t_update = p.c_b * batches;
    let t_computation = t_processing + t_update;
    let t_memory = memory_cost(n, batches, spec, cluster, p);
    let t_send = send_cost(batches, spec, p);
    let t_network = network_cost(batches, spec, cluster, p);
    let per_epoch = t_network.max(t_computation + t_memory);
    let epochs = spec.epoch as f64;

    let (t_init, t_compute_phase) = match version {
        ModelVersion::V1 => (t_disk, epochs * per_epoch),
        ModelVersion::V2 => {
            let init = w * disk_cost(n * w, spec, p, opts);
            let combined = match cluster.clamp_mode {
                ClampMode::Floor => per_epoch.max(p.t_phase_floor),
                ClampMode::LiteralMin => per_epoch.min(p.t_phase_floor),
            };
            (init, epochs * combined)
        }
    };

    PhasePrediction {
        t_disk,
        t_processing,
        t_update,
        t_computation,
        t_memory,
        t_send,
        t_network,
        t_init,
        t_compute_phase,
        t_total: t_init + t_compute_phase,
        model_version: version,
    }
}

/// First worker count in `workers` at which the floor-mode computation phase
/// stops being bound by computation and memory: the server term or the floor
/// takes over, and adding workers no longer shortens the phase materially.
/// `None` if computation binds throughout.
pub fn saturation_point(
    workers: &[u64],
    spec: &WorkloadSpec,
    cluster: &ClusterSpec,
    p: &CostParams,
) -> Option<u64> {
    workers.iter().copied().find(|&w| {
        let c = cluster.with_workers(w);
        let pred = predict(ModelVersion::V2, spec, &c, p, &ModelOptions::default());
        let work = pred.t_computation + pred.t_memory;
        pred.t_network >= work || p.t_phase_floor >= work
    })
}
