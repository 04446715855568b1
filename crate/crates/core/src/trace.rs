//! Chrome trace-event export and per-rank profile tables.
//!
//! The JSON produced by [`to_chrome_trace`] loads in `chrome://tracing` and
//! Perfetto: one process per rank, thread 0 for the worker and thread 1 for
//! the server. Timestamps are whole microseconds; each span's duration is the
//! difference of its truncated end and start, so consecutive spans on a
//! timeline tile it without gaps or overlaps.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::Result;
use crate::sim::{self, Role, SimResult, Span, SpanKind};

pub const WORKER_TID: u64 = 0;
pub const SERVER_TID: u64 = 1;

/// One complete ("X") trace event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub name: String,
    pub cat: String,
    pub ph: String,
    pub ts: u64,
    pub dur: u64,
    pub pid: u64,
    pub tid: u64,
    pub args: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceDocument {
    #[serde(rename = "traceEvents")]
    pub trace_events: Vec<Value>,
    #[serde(rename = "displayTimeUnit")]
    pub display_time_unit: String,
}

impl TraceDocument {
    /// The complete events, skipping metadata.
    pub fn records(&self) -> Vec<TraceRecord> {
        self.trace_events
            .iter()
            .filter(|e| e["ph"] == "X")
            .filter_map(|e| serde_json::from_value(e.clone()).ok())
            .collect()
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, self).map_err(std::io::Error::from)?;
        Ok(())
    }
}

/// Trace category of a span.
pub fn category(kind: SpanKind) -> &'static str {
    match kind {
        SpanKind::InitRead => "init-read",
        SpanKind::InitQueue | SpanKind::InitBarrier => "init-barrier",
        SpanKind::Compute => "compute",
        SpanKind::Send => "send",
        SpanKind::Wait => "wait",
        SpanKind::Aggregate => "aggregate",
        SpanKind::EpochBarrier => "epoch-barrier",
    }
}

fn name(kind: SpanKind) -> &'static str {
    match kind {
        SpanKind::InitQueue => "init-queue",
        other => category(other),
    }
}

fn micros(t: f64) -> u64 {
    (t * 1e6) as u64
}

fn record(span: &Span, pid: u64) -> TraceRecord {
    let ts = micros(span.start);
    let mut args = BTreeMap::new();
    args.insert("dur_s".to_string(), json!(span.duration()));
    args.insert("epoch".to_string(), json!(span.epoch));
    args.insert("batch".to_string(), json!(span.batch));
    TraceRecord {
        name: name(span.kind).to_string(),
        cat: category(span.kind).to_string(),
        ph: "X".to_string(),
        ts,
        dur: micros(span.end) - ts,
        pid,
        tid: if span.role == Role::Server { SERVER_TID } else { WORKER_TID },
        args,
    }
}

fn metadata(kind: &str, pid: u64, tid: Option<u64>, label: String) -> Value {
    let mut event = json!({
        "name": kind,
        "ph": "M",
        "pid": pid,
        "args": { "name": label },
    });
    if let Some(tid) = tid {
        event["tid"] = json!(tid);
    }
    event
}

/// Converts a simulation run into a trace document.
pub fn to_chrome_trace(result: &SimResult) -> TraceDocument {
    let mut events = Vec::new();
    for rank in 0..result.num_workers {
        events.push(metadata("process_name", rank, None, format!("rank {rank}")));
        events.push(metadata("thread_name", rank, Some(WORKER_TID), "worker".into()));
    }
    let server = result.server_pid;
    if server >= result.num_workers {
        events.push(metadata("process_name", server, None, "server".into()));
    }
    events.push(metadata("thread_name", server, Some(SERVER_TID), "server".into()));

    for span in &result.spans {
        let pid = if span.role == Role::Server { server } else { span.rank };
        let rec = record(span, pid);
        events.push(serde_json::to_value(rec).expect("trace records serialize"));
    }
    TraceDocument {
        trace_events: events,
        display_time_unit: "ms".to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub rank: u64,
    pub compute_pct: f64,
    pub barrier_pct: f64,
    pub wait_pct: f64,
    pub other_pct: f64,
}

/// Percent of each worker's time by bucket; the four columns sum to 100.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileTable {
    pub rows: Vec<ProfileRow>,
}

impl ProfileTable {
    pub fn to_csv(&self) -> Result<String> {
        let mut out = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            out.serialize(row)?;
        }
        let bytes = out.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

pub fn profile_table(result: &SimResult) -> ProfileTable {
    let rows = sim::rank_wait_decomposition(result)
        .into_iter()
        .map(|r| {
            let compute_pct = 100.0 * r.compute_ratio;
            let barrier_pct = 100.0 * r.barrier_ratio;
            let wait_pct = 100.0 * r.wait_ratio;
            ProfileRow {
                rank: r.rank,
                compute_pct,
                barrier_pct,
                wait_pct,
                other_pct: 100.0 - compute_pct - barrier_pct - wait_pct,
            }
        })
        .collect();
    ProfileTable { rows }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn span(kind: SpanKind, start: f64, end: f64) -> Span {
        Span {
            rank: 0,
            role: Role::Worker,
            kind,
            start,
            end,
            epoch: 0,
            batch: 0,
        }
    }

    #[test]
    fn truncated_durations_tile() {
        let a = record(&span(SpanKind::Compute, 0.0000004, 0.0000019), 0);
        let b = record(&span(SpanKind::Wait, 0.0000019, 0.0000031), 0);
        assert_eq!((a.ts, a.dur), (0, 1));
        assert_eq!(a.ts + a.dur, b.ts);
        assert_eq!(b.dur, 2);
    }

    #[test]
    fn init_queue_is_a_barrier_category() {
        let r = record(&span(SpanKind::InitQueue, 0.0, 1.0), 0);
        assert_eq!(r.cat, "init-barrier");
        assert_eq!(r.name, "init-queue");
        assert_eq!(r.dur, 1_000_000);
        assert_eq!(r.args["dur_s"], json!(1.0));
    }
}
