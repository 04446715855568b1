//! Deterministic discrete-event simulation of `w` workers training against
//! one parameter server.
//!
//! A run has two phases. Initialization reads the dataset (each worker its own
//! shard, or every worker the whole file one after another) and ends at an
//! init barrier. The computation phase then loops over epochs: workers compute
//! a batch, ship a weight delta, receive fresh weights, and meet at a barrier
//! when the epoch's data is exhausted.
//!
//! Every worker's timeline is a contiguous sequence of [`Span`]s starting at
//! zero, so per-rank totals are conserved by construction.

mod engine;
mod queue;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClusterSpec, CostParams, WorkloadSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AggregationMode {
    /// The server aggregates a round only once every participating worker's
    /// update has arrived; workers block until the merged weights return.
    #[default]
    SyncRound,
    /// Updates are served first-come first-served and answered individually;
    /// workers keep computing and only drain outstanding replies at epoch end.
    FullyAsync,
}

/// Which worker reads first when reads are serialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitOrder {
    #[default]
    Ascending,
    Descending,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    #[serde(default = "default_true")]
    pub server_on_rank0: bool,
    #[serde(default)]
    pub aggregation_mode: AggregationMode,
    #[serde(default)]
    pub init_order: InitOrder,
    #[serde(default)]
    pub seed: u64,
    /// Relative half-width of uniform noise applied to each batch's compute
    /// time, drawn from a generator seeded with `seed`. Zero disables it.
    #[serde(default)]
    pub compute_jitter: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            server_on_rank0: true,
            aggregation_mode: AggregationMode::SyncRound,
            init_order: InitOrder::Ascending,
            seed: 0,
            compute_jitter: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub workload: WorkloadSpec,
    pub cluster: ClusterSpec,
    pub costs: CostParams,
    #[serde(default)]
    pub options: SimOptions,
}

impl SimConfig {
    pub fn new(workload: WorkloadSpec, cluster: ClusterSpec, costs: CostParams) -> Self {
        SimConfig {
            workload,
            cluster,
            costs,
            options: SimOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.workload.validate().map_err(|e| e.in_section("workload"))?;
        self.cluster.validate().map_err(|e| e.in_section("cluster"))?;
        self.costs.validate().map_err(|e| e.in_section("costs"))?;
        let jitter = self.options.compute_jitter;
        if !(0.0..1.0).contains(&jitter) {
            return Err(Error::invalid(
                "options.compute_jitter",
                format!("must lie in [0, 1), got {jitter}"),
            ));
        }
        let per_worker = self.workload.d / self.cluster.w;
        if per_worker == 0 {
            return Err(Error::invalid(
                "cluster.w",
                format!("{} workers leave some worker without data (d = {})", self.cluster.w, self.workload.d),
            ));
        }
        if self.workload.b > per_worker {
            return Err(Error::BatchExceedsShard {
                b: self.workload.b,
                per_worker,
            });
        }
        Ok(())
    }

    /// Process id hosting the server: rank 0 when colocated, otherwise an
    /// extra process numbered `w`.
    pub fn server_pid(&self) -> u64 {
        if self.options.server_on_rank0 {
            0
        } else {
            self.cluster.w
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Worker,
    Server,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    InitReadStart,
    InitReadEnd,
    InitBarrierEnter,
    InitBarrierExit,
    BatchComputeStart,
    BatchComputeEnd,
    UpdateSend,
    ServerRecv,
    ServerAggregateStart,
    ServerAggregateEnd,
    WeightRecv,
    EpochBarrierEnter,
    EpochBarrierExit,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub time: f64,
    /// Global record order; strictly increasing.
    pub seq: u64,
    /// Process where the event happens (the server pid for server events).
    pub rank: u64,
    pub role: Role,
    pub kind: EventKind,
    /// Worker on the other end of a message or update, when there is one.
    pub peer: Option<u64>,
    pub epoch: u64,
    /// Batch index within the epoch (sync rounds count as batches).
    pub batch: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpanKind {
    /// Blocked before a serialized read, waiting for earlier readers.
    InitQueue,
    InitRead,
    InitBarrier,
    Compute,
    Send,
    Wait,
    Aggregate,
    EpochBarrier,
}

impl SpanKind {
    pub fn bucket(self) -> Bucket {
        match self {
            SpanKind::Compute => Bucket::Compute,
            SpanKind::InitQueue | SpanKind::InitBarrier | SpanKind::EpochBarrier => Bucket::Barrier,
            SpanKind::Wait => Bucket::Wait,
            SpanKind::InitRead | SpanKind::Send | SpanKind::Aggregate => Bucket::Other,
        }
    }

    pub fn is_init(self) -> bool {
        matches!(self, SpanKind::InitQueue | SpanKind::InitRead | SpanKind::InitBarrier)
    }
}

/// Profile bucket a span's time is charged to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bucket {
    Compute,
    Barrier,
    Wait,
    Other,
}

/// A half-open interval `[start, end)` of one activity on one timeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub rank: u64,
    pub role: Role,
    pub kind: SpanKind,
    pub start: f64,
    pub end: f64,
    pub epoch: u64,
    pub batch: u64,
}

impl Span {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankProfile {
    pub rank: u64,
    pub t_compute: f64,
    /// Init queueing, init barrier and epoch barriers.
    pub t_barrier: f64,
    pub t_wait: f64,
    /// Reads and sends: time neither computing nor blocked.
    pub t_other: f64,
    pub t_init: f64,
    /// Only the barrier after this rank's own read.
    pub t_init_barrier: f64,
    /// End of this rank's timeline; the four buckets sum to it.
    pub t_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub num_workers: u64,
    pub server_pid: u64,
    pub profiles: Vec<RankProfile>,
    pub events: Vec<SimEvent>,
    /// Worker spans first (grouped by rank, time-ordered), then server spans.
    pub spans: Vec<Span>,
    pub init_end_time: f64,
    pub epoch_end_times: Vec<f64>,
    pub makespan: f64,
}

impl SimResult {
    pub fn worker_spans(&self, rank: u64) -> impl Iterator<Item = &Span> {
        self.spans
            .iter()
            .filter(move |s| s.role == Role::Worker && s.rank == rank)
    }

    pub fn server_spans(&self) -> impl Iterator<Item = &Span> {
        self.spans.iter().filter(|s| s.role == Role::Server)
    }
}

pub fn run_simulation(config: &SimConfig) -> Result<SimResult> {
    config.validate()?;
    Ok(engine::Engine::new(config).run())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankRatios {
    pub rank: u64,
    pub compute_ratio: f64,
    pub barrier_ratio: f64,
    pub wait_ratio: f64,
    pub other_ratio: f64,
}

/// Share of each rank's time spent computing, in barriers, waiting, and elsewhere.
pub fn rank_wait_decomposition(result: &SimResult) -> Vec<RankRatios> {
    result
        .profiles
        .iter()
        .map(|p| {
            if p.t_total <= 0.0 {
                return RankRatios {
                    rank: p.rank,
                    compute_ratio: 0.0,
                    barrier_ratio: 0.0,
                    wait_ratio: 0.0,
                    other_ratio: 1.0,
                };
            }
            let compute_ratio = p.t_compute / p.t_total;
            let barrier_ratio = p.t_barrier / p.t_total;
            let wait_ratio = p.t_wait / p.t_total;
            RankRatios {
                rank: p.rank,
                compute_ratio,
                barrier_ratio,
                wait_ratio,
                other_ratio: 1.0 - compute_ratio - barrier_ratio - wait_ratio,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub t_init: f64,
    pub t_compute_phase: f64,
}

pub fn phase_times(result: &SimResult) -> PhaseTimes {
    PhaseTimes {
        t_init: result.init_end_time,
        t_compute_phase: result.makespan - result.init_end_time,
    }
}
