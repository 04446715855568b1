//! Command-line front end: scenario sweeps over the analytical model and the
//! simulator, model-versus-simulation comparison, calibration and traces.

pub mod calibrate;
pub mod error;
pub mod report;
pub mod scenario;
pub mod sweep;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use error::CliError;
use report::Format;
use scenario::Scenario;

#[derive(Debug, Parser)]
#[command(name = "ddnn-perflab", version, about = "Performance model and simulator for parameter-server training")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Scenario JSON file.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Output directory (defaults to the scenario's `output_dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate every sweep point with the enabled models and the simulator.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Also write a Chrome trace and profile table for each simulated point.
        #[arg(long)]
        trace: bool,
    },
    /// Relative error of each enabled model against the simulator.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trace: bool,
    },
    /// Fit cost constants from measurements and bandwidths.
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// CSV with columns w,b,n,t_total[,t_init,t_compute_phase].
        #[arg(long)]
        measurements: PathBuf,
        /// CSV with columns resource,bytes_per_second.
        #[arg(long)]
        bandwidths: PathBuf,
    },
    /// Simulate the scenario's own point and write its trace and profile.
    Trace {
        #[command(flatten)]
        common: Common,
    },
}

fn out_dir(common: &Common, scenario: &Scenario) -> PathBuf {
    common.out.clone().unwrap_or_else(|| scenario.output_dir.clone())
}

/// Runs one command; returns the lines to print on success.
pub fn run(cli: Cli) -> Result<Vec<String>, CliError> {
    match cli.command {
        Command::Sweep { common, trace } => {
            let scenario = Scenario::load(&common.scenario)?;
            let dir = out_dir(&common, &scenario);
            let sink = trace.then_some(sweep::TraceSink { dir: &dir });
            let rows = sweep::run_sweep(&scenario, sink)?;
            let path = report::write_table(&dir, &format!("{}.sweep", scenario.name), &scenario.name, &rows, common.format)?;
            let skipped = rows.iter().filter(|r| r.status == sweep::Status::Skipped).count();
            Ok(vec![format!("wrote {} rows ({skipped} skipped) to {}", rows.len(), path.display())])
        }
        Command::Compare { common, trace } => {
            let scenario = Scenario::load(&common.scenario)?;
            sweep::check_comparable(&scenario)?;
            let dir = out_dir(&common, &scenario);
            let sink = trace.then_some(sweep::TraceSink { dir: &dir });
            let rows = sweep::run_sweep(&scenario, sink)?;
            let cmp = sweep::compare_rows(&rows);
            let summary = sweep::summarize(&cmp);
            let name = &scenario.name;
            let a = report::write_table(&dir, &format!("{name}.compare"), name, &cmp, common.format)?;
            let b = report::write_table(&dir, &format!("{name}.compare-summary"), name, &summary, common.format)?;
            let mut lines = vec![format!("wrote {} and {}", a.display(), b.display())];
            for s in &summary {
                lines.push(format!(
                    "{} {}: max {:.3e}, mean {:.3e} over {} points",
                    s.model, s.phase, s.max_err, s.mean_err, s.points
                ));
            }
            let saturated = cmp.iter().filter(|r| r.server_saturated).count();
            if saturated > 0 {
                lines.push(format!("{saturated} rows past the server saturation point"));
            }
            Ok(lines)
        }
        Command::Calibrate {
            common,
            measurements,
            bandwidths,
        } => {
            let scenario = Scenario::load(&common.scenario)?;
            let dir = out_dir(&common, &scenario);
            let rows = calibrate::read_measurements(&measurements)?;
            let cal = calibrate::calibrate(&scenario, &rows, &bandwidths)?;
            let costs_path = dir.join(format!("{}.costs.json", scenario.name));
            let report_path = dir.join(format!("{}.fit.json", scenario.name));
            write_json(&costs_path, &cal.costs)?;
            write_json(&report_path, &cal)?;
            let mut lines: Vec<String> = calibrate::describe(&cal).lines().map(String::from).collect();
            lines.push(format!("wrote {} and {}", costs_path.display(), report_path.display()));
            Ok(lines)
        }
        Command::Trace { common } => {
            let scenario = Scenario::load(&common.scenario)?;
            let dir = out_dir(&common, &scenario);
            let point = scenario.base_point();
            if let Some(reason) = scenario.infeasible(point) {
                return Err(CliError::Validation(perflab::Error::Invalid {
                    field: "workload.b".into(),
                    reason,
                }));
            }
            let result = perflab::sim::run_simulation(&scenario.sim_config(point))?;
            sweep::write_trace_files(&dir, &scenario.name, &result)?;
            Ok(vec![format!(
                "wrote {0}.trace.json and {0}.profile.csv to {1} (makespan {2} s)",
                scenario.name,
                dir.display(),
                result.makespan
            )])
        }
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Parse(e.to_string()))?;
    text.push('\n');
    report::write_file(path, &text)
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(lines) => {
            for line in lines {
                println!("{line}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
