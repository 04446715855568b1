//! Fitting [`CostParams`] from measurement files.
//!
//! Single-node runs at two or more batch sizes pin down the per-datapoint and
//! per-batch costs by ordinary least squares on `t = c_p * n + c_b * n / b`.
//! Multi-node runs then give the server aggregation cost and the
//! computation-phase floor. Bandwidths come from a separate file and are
//! inverted into per-byte rates.
//!
//! Every fitted constant is a physical time, so negative estimates are clamped
//! to zero and reported in [`FitReport::clamped`].

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, ClusterSpec, CostParams, IoMode, WorkloadSpec};
use crate::sim::{self, SimConfig};

/// One measured run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRow {
    pub w: u64,
    pub b: u64,
    /// Datapoints per worker.
    pub n: f64,
    pub t_total: f64,
    pub t_init: Option<f64>,
    pub t_compute_phase: Option<f64>,
}

impl MeasurementRow {
    fn validate(&self) -> Result<()> {
        if self.w == 0 {
            return Err(Error::invalid("w", "must be >= 1"));
        }
        if self.b == 0 {
            return Err(Error::invalid("b", "must be >= 1"));
        }
        let positive = [
            ("n", Some(self.n)),
            ("t_total", Some(self.t_total)),
            ("t_init", self.t_init),
            ("t_compute_phase", self.t_compute_phase),
        ];
        for (name, value) in positive {
            if let Some(v) = value {
                if !v.is_finite() || v <= 0.0 {
                    return Err(Error::invalid(name, format!("must be finite and > 0, got {v}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub params: CostParams,
    /// Standard error of each fitted parameter.
    pub std_errors: BTreeMap<String, f64>,
    /// Observed minus fitted, per row used (seconds per epoch).
    pub residuals: Vec<f64>,
    pub r_squared: f64,
    pub rows_used: usize,
    /// Parameters whose raw estimate was negative and was set to zero.
    pub clamped: Vec<String>,
    pub warnings: Vec<String>,
}

/// Reads measurement rows from CSV with header
/// `w,b,n,t_total,t_init,t_compute_phase`. The last two columns may be absent
/// or left empty.
pub fn read_measurements<R: Read>(reader: R) -> Result<Vec<MeasurementRow>> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = csv.headers()?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let required = |name: &str| column(name).ok_or_else(|| Error::MissingColumn(name.to_string()));
    let (cw, cb, cn, ct) = (required("w")?, required("b")?, required("n")?, required("t_total")?);
    let (ci, cc) = (column("t_init"), column("t_compute_phase"));

    let mut rows = Vec::new();
    for record in csv.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let parse_err = |message: String| Error::Parse { line, message };
        let field = |idx: usize| record.get(idx).unwrap_or("");
        let int = |idx: usize, name: &str| {
            field(idx)
                .parse::<u64>()
                .map_err(|e| parse_err(format!("column `{name}`: {e}")))
        };
        let float = |idx: usize, name: &str| {
            field(idx)
                .parse::<f64>()
                .map_err(|e| parse_err(format!("column `{name}`: {e}")))
        };
        let optional = |idx: Option<usize>, name: &str| match idx.map(field) {
            None | Some("") => Ok(None),
            Some(_) => float(idx.unwrap(), name).map(Some),
        };
        let row = MeasurementRow {
            w: int(cw, "w")?,
            b: int(cb, "b")?,
            n: float(cn, "n")?,
            t_total: float(ct, "t_total")?,
            t_init: optional(ci, "t_init")?,
            t_compute_phase: optional(cc, "t_compute_phase")?,
        };
        row.validate().map_err(|e| parse_err(e.to_string()))?;
        rows.push(row);
    }
    Ok(rows)
}

/// Collapses exact duplicates, then averages rows sharing `(w, b, n)`.
/// The result is sorted by `(w, b, n)`, so it does not depend on input order.
pub fn aggregate_rows(rows: &[MeasurementRow]) -> Vec<MeasurementRow> {
    fn key(r: &MeasurementRow) -> (u64, u64, u64) {
        (r.w, r.b, r.n.to_bits())
    }
    fn bits(v: Option<f64>) -> Option<u64> {
        v.map(f64::to_bits)
    }
    let mut unique: Vec<MeasurementRow> = Vec::new();
    let mut sorted: Vec<&MeasurementRow> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        key(a)
            .cmp(&key(b))
            .then(a.t_total.total_cmp(&b.t_total))
            .then(bits(a.t_init).cmp(&bits(b.t_init)))
            .then(bits(a.t_compute_phase).cmp(&bits(b.t_compute_phase)))
    });
    for row in sorted {
        let duplicate = unique.last().is_some_and(|u| {
            key(u) == key(row)
                && u.t_total.to_bits() == row.t_total.to_bits()
                && bits(u.t_init) == bits(row.t_init)
                && bits(u.t_compute_phase) == bits(row.t_compute_phase)
        });
        if !duplicate {
            unique.push(*row);
        }
    }

    let mut out: Vec<MeasurementRow> = Vec::new();
    let mut i = 0;
    while i < unique.len() {
        let mut j = i;
        while j < unique.len() && key(&unique[j]) == key(&unique[i]) {
            j += 1;
        }
        let group = &unique[i..j];
        let count = group.len() as f64;
        let mean = |f: &dyn Fn(&MeasurementRow) -> Option<f64>| -> Option<f64> {
            let values: Option<Vec<f64>> = group.iter().map(f).collect();
            values.map(|v| v.iter().sum::<f64>() / count)
        };
        out.push(MeasurementRow {
            t_total: mean(&|r| Some(r.t_total)).unwrap_or(0.0),
            t_init: mean(&|r| r.t_init),
            t_compute_phase: mean(&|r| r.t_compute_phase),
            ..group[0]
        });
        i = j;
    }
    out
}

/// Computation-phase seconds of a row. Falls back to `t_total - t_init`, and
/// when neither is recorded, subtracts the modelled initialization.
fn compute_phase(row: &MeasurementRow, workload: &WorkloadSpec, cluster: &ClusterSpec, p: &CostParams) -> f64 {
    if let Some(t) = row.t_compute_phase {
        return t;
    }
    let init = row.t_init.unwrap_or_else(|| match cluster.io_mode {
        IoMode::PartitionedParallel => model::t_disk(row.n, workload, p),
        IoMode::SequentialFullRead => model::t_disk_updated(row.w, row.n, workload, p),
    });
    row.t_total - init
}

fn r_squared(observed: &[f64], residuals: &[f64]) -> f64 {
    let mean = observed.iter().sum::<f64>() / observed.len() as f64;
    let ss_tot: f64 = observed.iter().map(|y| (y - mean).powi(2)).sum();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    let scale = observed.iter().map(|y| y * y).sum::<f64>().max(f64::MIN_POSITIVE);
    if ss_tot <= 1e-24 * scale {
        return if ss_res <= 1e-20 * scale { 1.0 } else { 0.0 };
    }
    (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
}

fn clamp_nonnegative(name: &str, value: f64, report: &mut Vec<String>, warnings: &mut Vec<String>) -> f64 {
    if value < 0.0 {
        let msg = format!("{name} estimate {value:e} is negative; clamped to 0");
        log::warn!("{msg}");
        warnings.push(msg);
        report.push(name.to_string());
        0.0
    } else {
        value
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComputeFit {
    pub c_p: f64,
    pub c_b: f64,
    pub report: FitReport,
}

/// Least-squares fit of `c_p` and `c_b` from single-node rows.
///
/// Each row's per-epoch computation-phase time, minus the memory traffic
/// implied by `rates`, is regressed on `(n, n / b)`. Pass zero memory rates to
/// fold memory traffic into the two constants.
pub fn fit_compute_params(
    rows: &[MeasurementRow],
    workload: &WorkloadSpec,
    cluster: &ClusterSpec,
    rates: &CostParams,
) -> Result<ComputeFit> {
    let rows: Vec<_> = aggregate_rows(rows).into_iter().filter(|r| r.w == 1).collect();
    if rows.len() < 2 {
        return Err(Error::Fit {
            what: "c_p and c_b",
            reason: format!("need at least 2 single-node rows, got {}", rows.len()),
        });
    }
    let epochs = workload.epoch as f64;
    let single = cluster.with_workers(1);
    let mut xs = Vec::with_capacity(rows.len());
    let mut ys = Vec::with_capacity(rows.len());
    for row in &rows {
        let spec = workload.with_batch(row.b);
        let per_epoch = compute_phase(row, &spec, &single, rates) / epochs;
        ys.push(per_epoch - model::t_memory(row.n, &spec, &single, rates));
        xs.push((row.n, row.n / row.b as f64));
    }

    let (mut s11, mut s12, mut s22, mut s1y, mut s2y) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&(x1, x2), &y) in xs.iter().zip(&ys) {
        s11 += x1 * x1;
        s12 += x1 * x2;
        s22 += x2 * x2;
        s1y += x1 * y;
        s2y += x2 * y;
    }
    let det = s11 * s22 - s12 * s12;
    if det.abs() <= 1e-12 * s11 * s22 {
        return Err(Error::Fit {
            what: "c_p and c_b",
            reason: "singular design: rows need at least two distinct n/b ratios".into(),
        });
    }
    let raw_cp = (s22 * s1y - s12 * s2y) / det;
    let raw_cb = (s11 * s2y - s12 * s1y) / det;

    let residuals: Vec<f64> = xs
        .iter()
        .zip(&ys)
        .map(|(&(x1, x2), &y)| y - raw_cp * x1 - raw_cb * x2)
        .collect();
    let dof = rows.len().saturating_sub(2);
    let sigma2 = if dof > 0 {
        residuals.iter().map(|r| r * r).sum::<f64>() / dof as f64
    } else {
        0.0
    };

    let mut clamped = Vec::new();
    let mut warnings = Vec::new();
    let c_p = clamp_nonnegative("c_p", raw_cp, &mut clamped, &mut warnings);
    let c_b = clamp_nonnegative("c_b", raw_cb, &mut clamped, &mut warnings);
    let mut std_errors = BTreeMap::new();
    std_errors.insert("c_p".to_string(), (sigma2 * s22 / det).sqrt());
    std_errors.insert("c_b".to_string(), (sigma2 * s11 / det).sqrt());

    Ok(ComputeFit {
        c_p,
        c_b,
        report: FitReport {
            params: CostParams { c_p, c_b, ..*rates },
            std_errors,
            r_squared: r_squared(&ys, &residuals),
            residuals,
            rows_used: rows.len(),
            clamped,
            warnings,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub r_d: f64,
    pub r_m_cache: f64,
    pub r_m_mem: f64,
    pub r_net: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub rates: Rates,
    pub warnings: Vec<String>,
}

/// Inverts measured bandwidths (bytes/second) into per-byte rates.
///
/// Input is CSV `resource,bytes_per_second` with one row for each of `disk`,
/// `mem_cache`, `mem` and `net`.
pub fn fit_rates<R: Read>(reader: R) -> Result<RateFit> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = csv.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let (cr, cv) = (column("resource")?, column("bytes_per_second")?);

    let mut bandwidth: BTreeMap<String, f64> = BTreeMap::new();
    for record in csv.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let resource = record.get(cr).unwrap_or("").to_string();
        let value: f64 = record
            .get(cv)
            .unwrap_or("")
            .parse()
            .map_err(|e| Error::Parse {
                line,
                message: format!("column `bytes_per_second`: {e}"),
            })?;
        if !value.is_finite() || value <= 0.0 {
            return Err(Error::Parse {
                line,
                message: format!("bandwidth for `{resource}` must be > 0, got {value}"),
            });
        }
        if !matches!(resource.as_str(), "disk" | "mem_cache" | "mem" | "net") {
            return Err(Error::Parse {
                line,
                message: format!("unknown resource `{resource}`"),
            });
        }
        bandwidth.insert(resource, value);
    }
    let rate = |name: &str| {
        bandwidth
            .get(name)
            .map(|bw| 1.0 / bw)
            .ok_or_else(|| Error::invalid("resource", format!("missing bandwidth row `{name}`")))
    };
    let rates = Rates {
        r_d: rate("disk")?,
        r_m_cache: rate("mem_cache")?,
        r_m_mem: rate("mem")?,
        r_net: rate("net")?,
    };
    let check = CostParams {
        r_d: rates.r_d,
        r_m_cache: rates.r_m_cache,
        r_m_mem: rates.r_m_mem,
        r_net: rates.r_net,
        ..CostParams::default()
    };
    let warnings = check.validate()?;
    Ok(RateFit { rates, warnings })
}

impl Rates {
    pub fn apply(&self, p: &CostParams) -> CostParams {
        CostParams {
            r_d: self.r_d,
            r_m_cache: self.r_m_cache,
            r_m_mem: self.r_m_mem,
            r_net: self.r_net,
            ..*p
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerFit {
    pub c_u: f64,
    pub t_phase_floor: f64,
    pub report: FitReport,
}

/// Per-row terms of the floor-mode computation-phase model, per epoch:
/// `max(compute, link + k * c_u, floor)`.
struct ServerRow {
    y: f64,
    compute: f64,
    link: f64,
    k: f64,
}

impl ServerRow {
    fn predict(&self, c_u: f64, floor: f64) -> f64 {
        self.compute.max(self.link + self.k * c_u).max(floor)
    }
}

fn sse(rows: &[ServerRow], c_u: f64, floor: f64) -> f64 {
    rows.iter().map(|r| (r.y - r.predict(c_u, floor)).powi(2)).sum()
}

/// Best `c_u >= 0` for `sum (y - max(compute, link + k c_u))^2` over `rows`.
/// The objective is piecewise quadratic with a break where each row's network
/// term overtakes its compute term; each piece is minimized in closed form.
fn best_c_u(rows: &[&ServerRow]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let objective = |c: f64| -> f64 {
        rows.iter()
            .map(|r| (r.y - r.compute.max(r.link + r.k * c)).powi(2))
            .sum()
    };
    let mut breaks: Vec<f64> = rows
        .iter()
        .filter(|r| r.k > 0.0)
        .map(|r| ((r.compute - r.link) / r.k).max(0.0))
        .collect();
    breaks.push(0.0);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    let mut candidates = breaks.clone();
    for (i, &lo) in breaks.iter().enumerate() {
        let hi = breaks.get(i + 1).copied().unwrap_or(f64::INFINITY);
        let probe = if hi.is_finite() { 0.5 * (lo + hi) } else { lo + 1.0 };
        let active: Vec<_> = rows
            .iter()
            .filter(|r| r.k > 0.0 && r.link + r.k * probe >= r.compute)
            .collect();
        let kk: f64 = active.iter().map(|r| r.k * r.k).sum();
        if kk > 0.0 {
            let c = active.iter().map(|r| r.k * (r.y - r.link)).sum::<f64>() / kk;
            candidates.push(c.clamp(lo, hi));
        }
    }
    let mut best = (f64::INFINITY, 0.0);
    for c in candidates {
        let value = objective(c);
        if value < best.0 {
            best = (value, c);
        }
    }
    best.1
}

/// Fits the server aggregation cost `c_u` and the computation-phase floor
/// from multi-node rows.
///
/// The floor-mode model `epoch * max(T_network, T_computation + T_memory, floor)`
/// is evaluated with `base`'s compute constants and rates. Rows are split into
/// a floor-bound set, taken as the rows with the smallest observed times, and
/// the rest; every split is solved in closed form and the split with the least
/// squared error over all rows wins.
pub fn fit_server_cost(
    rows: &[MeasurementRow],
    base: &CostParams,
    workload: &WorkloadSpec,
    cluster: &ClusterSpec,
) -> Result<ServerFit> {
    let rows: Vec<_> = aggregate_rows(rows).into_iter().filter(|r| r.w >= 2).collect();
    let distinct_w = {
        let mut ws: Vec<u64> = rows.iter().map(|r| r.w).collect();
        ws.dedup();
        ws.len()
    };
    if distinct_w < 2 {
        return Err(Error::Fit {
            what: "c_u and t_phase_floor",
            reason: format!("need rows at 2 or more distinct worker counts >= 2, got {distinct_w}"),
        });
    }

    let epochs = workload.epoch as f64;
    let mut terms: Vec<ServerRow> = rows
        .iter()
        .map(|row| {
            let spec = workload.with_batch(row.b);
            let c = cluster.with_workers(row.w);
            let batches = row.n / row.b as f64;
            let unit = CostParams { c_u: 1.0, ..*base };
            let no_agg = CostParams { c_u: 0.0, ..*base };
            let link = model::t_network(row.n, row.b, &spec, &c, &no_agg);
            let k = model::t_network(row.n, row.b, &spec, &c, &unit) - link;
            debug_assert!((k - batches * row.w as f64).abs() <= 1e-9 * k.max(1.0));
            ServerRow {
                y: compute_phase(row, &spec, &c, base) / epochs,
                compute: model::t_computation(row.n, row.b, base)
                    + model::t_memory(row.n, &spec, &c, base),
                link,
                k,
            }
        })
        .collect();
    terms.sort_by(|a, b| a.y.total_cmp(&b.y));

    // Candidates run from "every row floor-bound" down to "none"; ties keep
    // the earlier, more floor-heavy explanation.
    let mut best: Option<(f64, f64, f64)> = None;
    for floor_rows in (0..=terms.len()).rev() {
        let floor = if floor_rows == 0 {
            0.0
        } else {
            terms[..floor_rows].iter().map(|r| r.y).sum::<f64>() / floor_rows as f64
        };
        let rest: Vec<&ServerRow> = terms[floor_rows..].iter().collect();
        let c_u = best_c_u(&rest).max(0.0);
        let err = sse(&terms, c_u, floor);
        let scale: f64 = terms.iter().map(|r| r.y * r.y).sum();
        if best.is_none_or(|(e, _, _)| err < e - 1e-15 * scale) {
            best = Some((err, c_u, floor));
        }
    }
    let (_, c_u, floor) = best.expect("at least one candidate");

    let residuals: Vec<f64> = terms.iter().map(|r| r.y - r.predict(c_u, floor)).collect();
    let observed: Vec<f64> = terms.iter().map(|r| r.y).collect();
    let dof = terms.len().saturating_sub(2);
    let sigma2 = if dof > 0 {
        residuals.iter().map(|r| r * r).sum::<f64>() / dof as f64
    } else {
        0.0
    };
    let floor_bound = terms.iter().filter(|r| r.predict(c_u, floor) == floor).count();
    let network_k2: f64 = terms
        .iter()
        .filter(|r| {
            let net = r.link + r.k * c_u;
            net >= r.compute && net > floor
        })
        .map(|r| r.k * r.k)
        .sum();
    let mut std_errors = BTreeMap::new();
    std_errors.insert(
        "c_u".to_string(),
        if network_k2 > 0.0 { (sigma2 / network_k2).sqrt() } else { 0.0 },
    );
    std_errors.insert(
        "t_phase_floor".to_string(),
        if floor_bound > 0 { (sigma2 / floor_bound as f64).sqrt() } else { 0.0 },
    );

    let mut warnings = Vec::new();
    if network_k2 == 0.0 {
        warnings.push("no row is bound by server aggregation; c_u is unidentified and left at 0".into());
    }
    Ok(ServerFit {
        c_u,
        t_phase_floor: floor,
        report: FitReport {
            params: CostParams {
                c_u,
                t_phase_floor: floor,
                ..*base
            },
            std_errors,
            r_squared: r_squared(&observed, &residuals),
            residuals,
            rows_used: terms.len(),
            clamped: Vec::new(),
            warnings,
        },
    })
}

/// Least-squares disk rate from measured initialization times, assuming the
/// cluster's read pattern: `w * t_disk(d)` for serialized full reads, or
/// `t_disk(n)` for partitioned reads.
pub fn fit_disk_rate(rows: &[MeasurementRow], workload: &WorkloadSpec, io_mode: IoMode) -> Result<f64> {
    let unit = CostParams {
        r_d: 1.0,
        ..CostParams::default()
    };
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for row in aggregate_rows(rows) {
        let Some(t_init) = row.t_init else { continue };
        let x = match io_mode {
            IoMode::SequentialFullRead => model::t_disk_updated(row.w, row.n, workload, &unit),
            IoMode::PartitionedParallel => model::t_disk(row.n, workload, &unit),
        };
        sxx += x * x;
        sxy += x * t_init;
    }
    if sxx == 0.0 {
        return Err(Error::Fit {
            what: "r_d",
            reason: "no row records t_init".into(),
        });
    }
    Ok((sxy / sxx).max(0.0))
}

/// Rescales `config`'s costs so a simulation at `anchor.w` reproduces the
/// anchor's initialization and computation-phase times.
///
/// Simulated durations are linear in every cost constant (barriers are
/// free), so the disk rate follows from one run at unit rate and all
/// post-initialization costs share a single scale factor.
pub fn fit_to_anchor(config: &SimConfig, anchor: &MeasurementRow) -> Result<CostParams> {
    let (Some(t_init), Some(t_compute)) = (anchor.t_init, anchor.t_compute_phase) else {
        return Err(Error::Fit {
            what: "anchor",
            reason: "anchor row needs both t_init and t_compute_phase".into(),
        });
    };
    let at_anchor = SimConfig {
        cluster: config.cluster.with_workers(anchor.w),
        ..*config
    };

    let init_probe = SimConfig {
        costs: CostParams {
            r_d: 1.0,
            ..CostParams::default()
        },
        ..at_anchor
    };
    let unit_init = sim::phase_times(&sim::run_simulation(&init_probe)?).t_init;

    let compute_probe = SimConfig {
        costs: CostParams {
            r_d: 0.0,
            ..config.costs
        },
        ..at_anchor
    };
    let base_compute = sim::phase_times(&sim::run_simulation(&compute_probe)?).t_compute_phase;
    if unit_init <= 0.0 || base_compute <= 0.0 {
        return Err(Error::Fit {
            what: "anchor",
            reason: "base costs produce a zero-length phase; nothing to scale".into(),
        });
    }

    let mut costs = config.costs.scale_compute_side(t_compute / base_compute);
    costs.r_d = t_init / unit_init;
    Ok(costs)
}

/// Per-update server contention that puts the minimum of the synchronous
/// computation phase at `knee` workers.
///
/// With fixed batch size, a worker count `w` runs `d / (w b)` rounds of
/// `round + w (c_u + w c_s)` each, i.e. `(d / b) (round / w + c_u + c_s w)`,
/// which is minimized at `w = sqrt(round / c_s)`.
pub fn contention_for_knee(workload: &WorkloadSpec, cluster: &ClusterSpec, costs: &CostParams, knee: u64) -> f64 {
    let b = workload.b as f64;
    let message = costs.r_net * workload.elem_bytes as f64 * model::weight_count(workload) as f64;
    let round = costs.c_p * b
        + costs.c_b
        + model::t_memory(b, workload, cluster, costs)
        + 2.0 * message;
    round / (knee * knee) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ClampMode;

    fn workload() -> WorkloadSpec {
        WorkloadSpec {
            d: 16384,
            n_f: 2,
            n_labels: 1,
            d_i: 2,
            d_h: 10_000,
            d_o: 2,
            epoch: 2,
            b: 256,
            elem_bytes: 8,
        }
    }

    fn cluster() -> ClusterSpec {
        ClusterSpec {
            w: 1,
            cache_bytes: 6 * 1024 * 1024,
            io_mode: IoMode::SequentialFullRead,
            clamp_mode: ClampMode::Floor,
        }
    }

    fn row(w: u64, b: u64, n: f64, t: f64) -> MeasurementRow {
        MeasurementRow {
            w,
            b,
            n,
            t_total: t,
            t_init: Some(1e-3),
            t_compute_phase: Some(t),
        }
    }

    #[test]
    fn parses_measurements_with_optional_columns() {
        let text = "w,b,n,t_total,t_init,t_compute_phase\n1,32,1024,2.5,0.5,2.0\n2,32,512,3.0,,\n";
        let rows = read_measurements(text.as_bytes()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].t_compute_phase, Some(2.0));
        assert_eq!(rows[1].t_init, None);

        let short = "w,b,n,t_total\n1,32,1024,2.5\n";
        assert_eq!(read_measurements(short.as_bytes()).unwrap()[0].t_init, None);
    }

    #[test]
    fn missing_column_is_named() {
        let err = read_measurements("w,b,t_total\n1,2,3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(ref c) if c == "n"), "{err}");
    }

    #[test]
    fn bad_value_reports_line() {
        let err = read_measurements("w,b,n,t_total\n1,2,3,4\n1,2,x,4\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = read_measurements("w,b,n,t_total\n1,2,3,-4\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn aggregation_averages_groups_and_drops_duplicates() {
        let a = row(1, 32, 100.0, 1.0);
        let b = row(1, 32, 100.0, 3.0);
        let out = aggregate_rows(&[a, b, b]);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].t_total, 2.0);
    }

    #[test]
    fn noiseless_compute_fit() {
        let (c_p, c_b) = (2e-3, 5e-4);
        let n = 1024.0;
        let rows: Vec<_> = [32u64, 256]
            .iter()
            .map(|&b| row(1, b, n, 2.0 * (c_p * n + c_b * n / b as f64)))
            .collect();
        let fit = fit_compute_params(&rows, &workload(), &cluster(), &CostParams::default()).unwrap();
        assert!((fit.c_p - c_p).abs() / c_p < 1e-9);
        assert!((fit.c_b - c_b).abs() / c_b < 1e-9);
        assert!(fit.report.clamped.is_empty());
        assert!((fit.report.r_squared - 1.0).abs() < 1e-9);
    }

    #[test]
    fn compute_fit_rejects_single_row_and_equal_batches() {
        let one = [row(1, 32, 1024.0, 1.0)];
        assert!(fit_compute_params(&one, &workload(), &cluster(), &CostParams::default()).is_err());
        let same_b = [row(1, 32, 1024.0, 1.0), row(1, 32, 1024.0, 1.1)];
        // Averaged into one group.
        assert!(fit_compute_params(&same_b, &workload(), &cluster(), &CostParams::default()).is_err());
        let collinear = [row(1, 32, 1024.0, 1.0), row(1, 32, 2048.0, 2.0)];
        let err = fit_compute_params(&collinear, &workload(), &cluster(), &CostParams::default()).unwrap_err();
        assert!(err.to_string().contains("singular"), "{err}");
    }

    #[test]
    fn negative_estimate_is_clamped_and_reported() {
        // Per-epoch time shrinking with smaller b implies c_b < 0.
        let rows = [row(1, 1, 100.0, 2.0 * 0.5), row(1, 100, 100.0, 2.0 * 1.0)];
        let fit = fit_compute_params(&rows, &workload(), &cluster(), &CostParams::default()).unwrap();
        assert_eq!(fit.c_b, 0.0);
        assert_eq!(fit.report.clamped, vec!["c_b".to_string()]);
        assert!(!fit.report.warnings.is_empty());
    }

    #[test]
    fn rates_from_bandwidths() {
        let text = "resource,bytes_per_second\ndisk,5e8\nmem_cache,1e11\nmem,1e10\nnet,1.25e9\n";
        let fit = fit_rates(text.as_bytes()).unwrap();
        assert!((fit.rates.r_net - 8e-10).abs() < 1e-24);
        assert!((fit.rates.r_d - 2e-9).abs() < 1e-24);
        assert!(fit.warnings.is_empty());
    }

    #[test]
    fn rate_errors_and_warnings() {
        let zero = "resource,bytes_per_second\ndisk,0\nmem_cache,1\nmem,1\nnet,1\n";
        assert!(fit_rates(zero.as_bytes()).is_err());
        let missing = "resource,bytes_per_second\ndisk,1\nmem,1\nnet,1\n";
        assert!(fit_rates(missing.as_bytes()).unwrap_err().to_string().contains("mem_cache"));
        let slow_mem = "resource,bytes_per_second\ndisk,1e9\nmem_cache,1e10\nmem,1e8\nnet,1\n";
        assert_eq!(fit_rates(slow_mem.as_bytes()).unwrap().warnings.len(), 1);
        let inverted = "resource,bytes_per_second\ndisk,1\nmem_cache,1e8\nmem,1e10\nnet,1\n";
        assert!(fit_rates(inverted.as_bytes()).is_err());
    }

    fn server_base() -> CostParams {
        CostParams {
            c_p: 1e-6,
            c_b: 1e-5,
            c_u: 0.0,
            r_d: 1e-8,
            r_m_cache: 1e-12,
            r_m_mem: 1e-10,
            r_net: 1e-8,
            t_phase_floor: 0.0,
            c_contention: 0.0,
        }
    }

    fn model_rows(truth: &CostParams, spec: &WorkloadSpec, ws: &[u64]) -> Vec<MeasurementRow> {
        ws.iter()
            .map(|&w| {
                let c = cluster().with_workers(w);
                let pred = model::t_total_v2(spec, &c, truth);
                MeasurementRow {
                    w,
                    b: spec.b,
                    n: spec.d as f64 / w as f64,
                    t_total: pred.t_total,
                    t_init: Some(pred.t_init),
                    t_compute_phase: Some(pred.t_compute_phase),
                }
            })
            .collect()
    }

    #[test]
    fn server_fit_recovers_both_regimes() {
        let spec = workload().with_batch(16);
        let truth = CostParams {
            c_u: 1e-4,
            t_phase_floor: 0.5,
            ..server_base()
        };
        let rows = model_rows(&truth, &spec, &[2, 8, 32, 64]);
        let fit = fit_server_cost(&rows, &server_base(), &spec, &cluster()).unwrap();
        assert!((fit.c_u - 1e-4).abs() / 1e-4 < 1e-6, "c_u = {}", fit.c_u);
        assert!((fit.t_phase_floor - 0.5).abs() / 0.5 < 1e-6, "floor = {}", fit.t_phase_floor);
    }

    #[test]
    fn server_fit_flat_rows_give_plateau() {
        let rows: Vec<_> = [2u64, 4, 8, 16]
            .iter()
            .map(|&w| row(w, 256, 16384.0 / w as f64, 2.0 * 3.0))
            .collect();
        let fit = fit_server_cost(&rows, &server_base(), &workload(), &cluster()).unwrap();
        assert_eq!(fit.c_u, 0.0);
        assert!((fit.t_phase_floor - 3.0).abs() < 1e-12);
    }

    #[test]
    fn server_fit_needs_two_worker_counts() {
        let rows = [row(4, 256, 4096.0, 1.0), row(4, 256, 4096.0, 1.2)];
        assert!(fit_server_cost(&rows, &server_base(), &workload(), &cluster()).is_err());
    }

    #[test]
    fn disk_rate_from_init_times() {
        let spec = workload();
        let p = CostParams {
            r_d: 3e-6,
            ..CostParams::default()
        };
        let rows: Vec<_> = [2u64, 64]
            .iter()
            .map(|&w| MeasurementRow {
                w,
                b: 256,
                n: spec.d as f64 / w as f64,
                t_total: 100.0,
                t_init: Some(w as f64 * model::t_disk(spec.d as f64, &spec, &p)),
                t_compute_phase: None,
            })
            .collect();
        let r_d = fit_disk_rate(&rows, &spec, IoMode::SequentialFullRead).unwrap();
        assert!((r_d - 3e-6).abs() / 3e-6 < 1e-12);
    }
}
