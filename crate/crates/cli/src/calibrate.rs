//! Fitting a scenario's cost constants from measurement files.

use std::fs::File;
use std::path::Path;

use perflab::calibration::{self, FitReport, MeasurementRow, Rates};
use perflab::model::CostParams;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::scenario::Scenario;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Ready to paste into a scenario's `costs`.
    pub costs: CostParams,
    pub rates: Rates,
    pub compute_fit: Option<FitReport>,
    pub server_fit: Option<FitReport>,
    pub warnings: Vec<String>,
}

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::io(path, e))
}

pub fn read_measurements(path: &Path) -> Result<Vec<MeasurementRow>, CliError> {
    calibration::read_measurements(open(path)?).map_err(|e| CliError::from(e).in_file(path))
}

/// Rates come from the bandwidth file. `c_p`/`c_b` are fitted when there are
/// single-node rows at two or more batch sizes, and `c_u`/`t_phase_floor` when
/// there are multi-node rows at two or more worker counts; otherwise the
/// scenario's values are kept and a warning says so.
pub fn calibrate(
    scenario: &Scenario,
    rows: &[MeasurementRow],
    bandwidths: &Path,
) -> Result<Calibration, CliError> {
    let rate_fit = calibration::fit_rates(open(bandwidths)?).map_err(|e| CliError::from(e).in_file(bandwidths))?;
    let mut warnings = rate_fit.warnings.clone();
    let mut costs = rate_fit.rates.apply(&scenario.costs);

    let single_batches = {
        let mut bs: Vec<u64> = rows.iter().filter(|r| r.w == 1).map(|r| r.b).collect();
        bs.sort_unstable();
        bs.dedup();
        bs.len()
    };
    let compute_fit = if single_batches >= 2 {
        let fit = calibration::fit_compute_params(rows, &scenario.workload, &scenario.cluster, &costs)?;
        costs.c_p = fit.c_p;
        costs.c_b = fit.c_b;
        warnings.extend(fit.report.warnings.iter().cloned());
        Some(fit.report)
    } else {
        warnings.push("fewer than two single-node batch sizes: c_p and c_b kept from the scenario".into());
        None
    };

    let multi_workers = {
        let mut ws: Vec<u64> = rows.iter().filter(|r| r.w >= 2).map(|r| r.w).collect();
        ws.sort_unstable();
        ws.dedup();
        ws.len()
    };
    let server_fit = if multi_workers >= 2 {
        let fit = calibration::fit_server_cost(rows, &costs, &scenario.workload, &scenario.cluster)?;
        costs.c_u = fit.c_u;
        costs.t_phase_floor = fit.t_phase_floor;
        warnings.extend(fit.report.warnings.iter().cloned());
        Some(fit.report)
    } else {
        warnings.push("fewer than two multi-node worker counts: c_u and t_phase_floor kept from the scenario".into());
        None
    };

    costs.validate()?;
    Ok(Calibration {
        costs,
        rates: rate_fit.rates,
        compute_fit,
        server_fit,
        warnings,
    })
}

/// Human-readable fit summary for the terminal.
pub fn describe(cal: &Calibration) -> String {
    let mut out = String::new();
    let c = &cal.costs;
    out.push_str(&format!(
        "c_p={:e} c_b={:e} c_u={:e} t_phase_floor={:e}\n",
        c.c_p, c.c_b, c.c_u, c.t_phase_floor
    ));
    out.push_str(&format!(
        "r_d={:e} r_m_cache={:e} r_m_mem={:e} r_net={:e}\n",
        c.r_d, c.r_m_cache, c.r_m_mem, c.r_net
    ));
    for (label, fit) in [("compute", &cal.compute_fit), ("server", &cal.server_fit)] {
        if let Some(fit) = fit {
            out.push_str(&format!(
                "{label} fit: {} rows, R^2 = {:.6}, std errors {:?}\n",
                fit.rows_used, fit.r_squared, fit.std_errors
            ));
        }
    }
    for w in &cal.warnings {
        out.push_str(&format!("warning: {w}\n"));
    }
    out
}
