use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::queue::EventQueue;
use super::{
    AggregationMode, Bucket, EventKind, InitOrder, RankProfile, Role, SimConfig, SimEvent,
    SimResult, Span, SpanKind,
};
use crate::model::{self, IoMode};

#[derive(Debug, Clone, Copy)]
enum Action {
    ReadStart(usize),
    ReadEnd(usize),
    ComputeEnd(usize),
    UpdateArrive(usize, u64),
    AggregateEnd,
    ServiceEnd(usize, u64),
    WeightArrive(usize),
}

/// Work that needs the server host's processor.
#[derive(Debug, Clone, Copy)]
enum Task {
    Batch(usize),
    Aggregate,
    Service(usize, u64),
}

struct Activity {
    kind: SpanKind,
    start: f64,
    epoch: u64,
    batch: u64,
}

struct Worker {
    /// Datapoints in each batch of one epoch.
    batches: Vec<u64>,
    next: usize,
    outstanding: usize,
    /// Position in the serialized read order.
    read_slot: u64,
    read_time: f64,
    activity: Activity,
    spans: Vec<Span>,
}

/// Non-preemptive FIFO processor of the server host.
#[derive(Default)]
struct HostCpu {
    busy: bool,
    waiting: VecDeque<Task>,
}

pub(super) struct Engine<'a> {
    cfg: &'a SimConfig,
    queue: EventQueue<Action>,
    now: f64,
    events: Vec<SimEvent>,
    server_spans: Vec<Span>,
    workers: Vec<Worker>,
    cpu: HostCpu,
    rng: Option<ChaCha8Rng>,
    epoch: u64,
    round: usize,
    arrivals: usize,
    barrier_count: usize,
    aggregate_start: f64,
    service_start: f64,
    init_end: f64,
    epoch_ends: Vec<f64>,
    msg_time: f64,
    service_per_update: f64,
}

impl<'a> Engine<'a> {
    pub(super) fn new(cfg: &'a SimConfig) -> Self {
        let w = cfg.cluster.w as usize;
        let d = cfg.workload.d;
        let b = cfg.workload.b;
        let full_read = model::t_disk(d as f64, &cfg.workload, &cfg.costs);

        let workers = (0..w)
            .map(|r| {
                let n = d / w as u64 + u64::from((r as u64) < d % w as u64);
                let mut batches = vec![b; (n / b) as usize];
                if !n.is_multiple_of(b) {
                    batches.push(n % b);
                }
                let read_slot = match cfg.options.init_order {
                    InitOrder::Ascending => r as u64,
                    InitOrder::Descending => (w - 1 - r) as u64,
                };
                let read_time = match cfg.cluster.io_mode {
                    IoMode::PartitionedParallel => {
                        model::t_disk(n as f64, &cfg.workload, &cfg.costs)
                    }
                    IoMode::SequentialFullRead => full_read,
                };
                Worker {
                    batches,
                    next: 0,
                    outstanding: 0,
                    read_slot,
                    read_time,
                    activity: Activity {
                        kind: SpanKind::InitQueue,
                        start: 0.0,
                        epoch: 0,
                        batch: 0,
                    },
                    spans: Vec::new(),
                }
            })
            .collect();

        let p = &cfg.costs;
        let msg_time =
            p.r_net * cfg.workload.elem_bytes as f64 * model::weight_count(&cfg.workload) as f64;
        let rng = (cfg.options.compute_jitter > 0.0)
            .then(|| ChaCha8Rng::seed_from_u64(cfg.options.seed));

        Engine {
            cfg,
            queue: EventQueue::new(),
            now: 0.0,
            events: Vec::new(),
            server_spans: Vec::new(),
            workers,
            cpu: HostCpu::default(),
            rng,
            epoch: 0,
            round: 0,
            arrivals: 0,
            barrier_count: 0,
            aggregate_start: 0.0,
            service_start: 0.0,
            init_end: 0.0,
            epoch_ends: Vec::new(),
            msg_time,
            service_per_update: p.c_u + p.c_contention * w as f64,
        }
    }

    pub(super) fn run(mut self) -> SimResult {
        for r in 0..self.workers.len() {
            let at = match self.cfg.cluster.io_mode {
                IoMode::PartitionedParallel => 0.0,
                // Slot times are products, not running sums, so the k-th read
                // starts at exactly k * t_disk(d).
                IoMode::SequentialFullRead => {
                    self.workers[r].read_slot as f64 * self.workers[r].read_time
                }
            };
            self.queue.push(at, Action::ReadStart(r));
        }

        while let Some((time, action)) = self.queue.pop() {
            debug_assert!(time >= self.now);
            self.now = time;
            match action {
                Action::ReadStart(r) => self.on_read_start(r),
                Action::ReadEnd(r) => self.on_read_end(r),
                Action::ComputeEnd(r) => self.on_compute_end(r),
                Action::UpdateArrive(r, batch) => self.on_update_arrive(r, batch),
                Action::AggregateEnd => self.on_aggregate_end(),
                Action::ServiceEnd(r, batch) => self.on_service_end(r, batch),
                Action::WeightArrive(r) => self.on_weight_arrive(r),
            }
        }
        self.finish()
    }

    fn colocated(&self, r: usize) -> bool {
        self.cfg.options.server_on_rank0 && r == 0
    }

    fn server_pid(&self) -> u64 {
        self.cfg.server_pid()
    }

    fn link_time(&self, r: usize) -> f64 {
        if self.colocated(r) {
            0.0
        } else {
            self.msg_time
        }
    }

    fn record(&mut self, rank: u64, role: Role, kind: EventKind, peer: Option<u64>, batch: u64) {
        let seq = self.events.len() as u64;
        self.events.push(SimEvent {
            time: self.now,
            seq,
            rank,
            role,
            kind,
            peer,
            epoch: self.epoch,
            batch,
        });
    }

    fn record_worker(&mut self, r: usize, kind: EventKind) {
        let batch = self.workers[r].next as u64;
        self.record(r as u64, Role::Worker, kind, None, batch);
    }

    fn record_server(&mut self, kind: EventKind, peer: Option<usize>, batch: u64) {
        let pid = self.server_pid();
        self.record(pid, Role::Server, kind, peer.map(|p| p as u64), batch);
    }

    /// Closes the worker's current span at `now` and opens one of `kind`.
    /// Empty spans are dropped, except compute spans.
    fn transition(&mut self, r: usize, kind: SpanKind) {
        let now = self.now;
        let epoch = self.epoch;
        let worker = &mut self.workers[r];
        let prev = &worker.activity;
        if now > prev.start || prev.kind == SpanKind::Compute {
            worker.spans.push(Span {
                rank: r as u64,
                role: Role::Worker,
                kind: prev.kind,
                start: prev.start,
                end: now,
                epoch: prev.epoch,
                batch: prev.batch,
            });
        }
        worker.activity = Activity {
            kind,
            start: now,
            epoch,
            batch: worker.next as u64,
        };
    }

    fn on_read_start(&mut self, r: usize) {
        self.record_worker(r, EventKind::InitReadStart);
        self.transition(r, SpanKind::InitRead);
        let worker = &self.workers[r];
        let end = match self.cfg.cluster.io_mode {
            IoMode::PartitionedParallel => self.now + worker.read_time,
            IoMode::SequentialFullRead => (worker.read_slot + 1) as f64 * worker.read_time,
        };
        self.queue.push(end, Action::ReadEnd(r));
    }

    fn on_read_end(&mut self, r: usize) {
        self.record_worker(r, EventKind::InitReadEnd);
        self.record_worker(r, EventKind::InitBarrierEnter);
        self.transition(r, SpanKind::InitBarrier);
        self.barrier_count += 1;
        if self.barrier_count == self.workers.len() {
            self.barrier_count = 0;
            self.init_end = self.now;
            for r in 0..self.workers.len() {
                self.record_worker(r, EventKind::InitBarrierExit);
            }
            self.begin_epoch();
        }
    }

    fn begin_epoch(&mut self) {
        self.round = 0;
        self.arrivals = 0;
        for r in 0..self.workers.len() {
            self.workers[r].next = 0;
        }
        for r in 0..self.workers.len() {
            self.begin_batch(r);
        }
    }

    fn begin_batch(&mut self, r: usize) {
        if self.colocated(r) {
            self.request_cpu(Task::Batch(r));
        } else {
            self.start_batch(r);
        }
    }

    fn request_cpu(&mut self, task: Task) {
        if !self.cpu.busy {
            self.cpu.busy = true;
            self.start_task(task);
        } else {
            if let Task::Batch(r) = task {
                self.transition(r, SpanKind::Wait);
            }
            self.cpu.waiting.push_back(task);
        }
    }

    fn release_cpu(&mut self) {
        self.cpu.busy = false;
        if let Some(task) = self.cpu.waiting.pop_front() {
            self.cpu.busy = true;
            self.start_task(task);
        }
    }

    fn start_task(&mut self, task: Task) {
        match task {
            Task::Batch(r) => self.start_batch(r),
            Task::Aggregate => self.start_aggregate(),
            Task::Service(r, batch) => self.start_service(r, batch),
        }
    }

    fn batch_duration(&mut self, n: u64) -> f64 {
        let cfg = self.cfg;
        let p = &cfg.costs;
        let n = n as f64;
        let base = p.c_p * n + p.c_b + model::t_memory(n, &cfg.workload, &cfg.cluster, p);
        match self.rng.as_mut() {
            Some(rng) => {
                let u: f64 = rng.random();
                base * (1.0 + cfg.options.compute_jitter * (2.0 * u - 1.0))
            }
            None => base,
        }
    }

    fn start_batch(&mut self, r: usize) {
        let n = self.workers[r].batches[self.workers[r].next];
        let duration = self.batch_duration(n);
        self.record_worker(r, EventKind::BatchComputeStart);
        self.transition(r, SpanKind::Compute);
        self.queue.push(self.now + duration, Action::ComputeEnd(r));
    }

    fn on_compute_end(&mut self, r: usize) {
        self.record_worker(r, EventKind::BatchComputeEnd);
        self.record_worker(r, EventKind::UpdateSend);
        let link = self.link_time(r);
        let batch = self.workers[r].next as u64;
        self.queue.push(self.now + link, Action::UpdateArrive(r, batch));
        if self.colocated(r) {
            self.release_cpu();
        }

        match self.cfg.options.aggregation_mode {
            AggregationMode::SyncRound => {
                let kind = if link > 0.0 { SpanKind::Send } else { SpanKind::Wait };
                self.transition(r, kind);
            }
            AggregationMode::FullyAsync => {
                let worker = &mut self.workers[r];
                worker.outstanding += 1;
                worker.next += 1;
                if worker.next < worker.batches.len() {
                    self.begin_batch(r);
                } else {
                    self.transition(r, SpanKind::Wait);
                }
            }
        }
    }

    fn participants(&self) -> usize {
        self.workers
            .iter()
            .filter(|w| w.batches.len() > self.round)
            .count()
    }

    fn on_update_arrive(&mut self, r: usize, batch: u64) {
        self.record_server(EventKind::ServerRecv, Some(r), batch);
        match self.cfg.options.aggregation_mode {
            AggregationMode::SyncRound => {
                if self.workers[r].activity.kind == SpanKind::Send {
                    self.transition(r, SpanKind::Wait);
                }
                self.arrivals += 1;
                if self.arrivals == self.participants() {
                    self.request_cpu(Task::Aggregate);
                }
            }
            AggregationMode::FullyAsync => self.request_cpu(Task::Service(r, batch)),
        }
    }

    fn start_aggregate(&mut self) {
        let round = self.round as u64;
        self.record_server(EventKind::ServerAggregateStart, None, round);
        self.aggregate_start = self.now;
        let duration = self.arrivals as f64 * self.service_per_update;
        self.queue.push(self.now + duration, Action::AggregateEnd);
    }

    fn push_server_span(&mut self, start: f64, batch: u64) {
        self.server_spans.push(Span {
            rank: self.server_pid(),
            role: Role::Server,
            kind: SpanKind::Aggregate,
            start,
            end: self.now,
            epoch: self.epoch,
            batch,
        });
    }

    fn on_aggregate_end(&mut self) {
        let round = self.round as u64;
        self.record_server(EventKind::ServerAggregateEnd, None, round);
        self.push_server_span(self.aggregate_start, round);
        self.release_cpu();
        for r in 0..self.workers.len() {
            if self.workers[r].batches.len() > self.round {
                let at = self.now + self.link_time(r);
                self.queue.push(at, Action::WeightArrive(r));
            }
        }
        self.round += 1;
        self.arrivals = 0;
    }

    fn start_service(&mut self, r: usize, batch: u64) {
        self.record_server(EventKind::ServerAggregateStart, Some(r), batch);
        self.service_start = self.now;
        self.queue
            .push(self.now + self.service_per_update, Action::ServiceEnd(r, batch));
    }

    fn on_service_end(&mut self, r: usize, batch: u64) {
        self.record_server(EventKind::ServerAggregateEnd, Some(r), batch);
        self.push_server_span(self.service_start, batch);
        self.release_cpu();
        let at = self.now + self.link_time(r);
        self.queue.push(at, Action::WeightArrive(r));
    }

    fn on_weight_arrive(&mut self, r: usize) {
        self.record_worker(r, EventKind::WeightRecv);
        match self.cfg.options.aggregation_mode {
            AggregationMode::SyncRound => {
                self.workers[r].next += 1;
                if self.workers[r].next < self.workers[r].batches.len() {
                    self.begin_batch(r);
                } else {
                    self.enter_epoch_barrier(r);
                }
            }
            AggregationMode::FullyAsync => {
                let worker = &mut self.workers[r];
                worker.outstanding -= 1;
                if worker.next == worker.batches.len() && worker.outstanding == 0 {
                    self.enter_epoch_barrier(r);
                }
            }
        }
    }

    fn enter_epoch_barrier(&mut self, r: usize) {
        self.record_worker(r, EventKind::EpochBarrierEnter);
        self.transition(r, SpanKind::EpochBarrier);
        self.barrier_count += 1;
        if self.barrier_count < self.workers.len() {
            return;
        }
        self.barrier_count = 0;
        for r in 0..self.workers.len() {
            self.record_worker(r, EventKind::EpochBarrierExit);
        }
        self.epoch_ends.push(self.now);
        if self.epoch + 1 < self.cfg.workload.epoch {
            self.epoch += 1;
            self.begin_epoch();
        } else {
            for r in 0..self.workers.len() {
                self.record_worker(r, EventKind::Done);
                self.transition(r, SpanKind::EpochBarrier);
            }
        }
    }

    fn finish(self) -> SimResult {
        let mut profiles = Vec::with_capacity(self.workers.len());
        let mut spans = Vec::new();
        for (r, worker) in self.workers.into_iter().enumerate() {
            let mut profile = RankProfile {
                rank: r as u64,
                t_compute: 0.0,
                t_barrier: 0.0,
                t_wait: 0.0,
                t_other: 0.0,
                t_init: 0.0,
                t_init_barrier: 0.0,
                t_total: 0.0,
            };
            for span in &worker.spans {
                let dt = span.duration();
                match span.kind.bucket() {
                    Bucket::Compute => profile.t_compute += dt,
                    Bucket::Barrier => profile.t_barrier += dt,
                    Bucket::Wait => profile.t_wait += dt,
                    Bucket::Other => profile.t_other += dt,
                }
                if span.kind.is_init() {
                    profile.t_init += dt;
                }
                if span.kind == SpanKind::InitBarrier {
                    profile.t_init_barrier += dt;
                }
            }
            profile.t_total = worker.spans.last().map_or(0.0, |s| s.end);
            profiles.push(profile);
            spans.extend(worker.spans);
        }
        spans.extend(self.server_spans);
        let makespan = profiles.iter().map(|p| p.t_total).fold(0.0, f64::max);
        SimResult {
            num_workers: profiles.len() as u64,
            server_pid: self.cfg.server_pid(),
            profiles,
            events: self.events,
            spans,
            init_end_time: self.init_end,
            epoch_end_times: self.epoch_ends,
            makespan,
        }
    }
}
