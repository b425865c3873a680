//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::engine::{run, RunOutput};
use crate::error::{Error, Result};
use crate::report::{oracle_allocation, summarize};
use crate::scenario::{builtin, parse_scenario, serialize_scenario, Scenario, BUILTIN_NAMES};
use crate::switch::{SwitchConfig, Variant};
use crate::trace::Series;
use crate::types::{Rate, SimTime};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "abrsim", version, about = "ABR explicit-rate switch simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a scenario and write traces and a summary report.
    Run(RunArgs),
    /// Check a scenario file and report the first problem found.
    Validate {
        #[arg(long)]
        file: PathBuf,
    },
    /// Print the max-min allocation of a scenario, one `name,rate` per line.
    Oracle {
        #[command(flatten)]
        source: ScenarioArg,
        /// ABR capacity of every switch output port in Mbps.
        #[arg(long)]
        capacity_override: Option<f64>,
        #[arg(long)]
        target_util: Option<f64>,
    },
    /// Write a built-in scenario as a scenario file.
    Export { name: String },
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct ScenarioArg {
    /// Built-in scenario name.
    #[arg(long)]
    scenario: Option<String>,
    /// Scenario file.
    #[arg(long)]
    file: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    source: ScenarioArg,
    #[arg(long, default_value = "neff-ccr")]
    variant: String,
    /// Simulated time: a number with an optional us, ms or s suffix (ms if bare).
    #[arg(long, default_value = "300ms")]
    duration: String,
    #[arg(long)]
    interval_cells: Option<u64>,
    /// Longest measurement interval, same syntax as --duration.
    #[arg(long)]
    interval_max: Option<String>,
    #[arg(long)]
    target_util: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    nrm: Option<u32>,
    /// ABR capacity of every switch output port in Mbps.
    #[arg(long)]
    capacity_override: Option<f64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

/// Parses `300`, `300ms`, `0.3s` or `300000us`.
pub fn parse_duration(text: &str) -> Result<SimTime> {
    let text = text.trim();
    let (num, scale) = if let Some(n) = text.strip_suffix("us") {
        (n, 1.0)
    } else if let Some(n) = text.strip_suffix("ms") {
        (n, 1e3)
    } else if let Some(n) = text.strip_suffix('s') {
        (n, 1e6)
    } else {
        (text, 1e3)
    };
    let v: f64 = num
        .trim()
        .parse()
        .map_err(|_| Error::invalid(format!("cannot parse duration {text:?}")))?;
    if !v.is_finite() || v <= 0.0 {
        return Err(Error::invalid(format!(
            "duration must be positive, got {text:?}"
        )));
    }
    Ok(SimTime::from_micros(v * scale))
}

/// Entry point shared by the binary and the tests. Returns the exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(Failure(code, msg)) => {
            let _ = writeln!(err, "error: {msg}");
            code
        }
    }
}

struct Failure(i32, String);

impl Failure {
    fn invalid(e: Error) -> Self {
        Failure(EXIT_INVALID, e.to_string())
    }

    fn usage(msg: impl Into<String>) -> Self {
        Failure(EXIT_USAGE, msg.into())
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Failure(EXIT_IO, format!("{}: {e}", path.display()))
    }
}

fn load(source: &ScenarioArg) -> std::result::Result<Scenario, Failure> {
    let scenario = match (&source.scenario, &source.file) {
        (Some(name), _) => builtin(name).ok_or_else(|| {
            Failure::usage(format!(
                "unknown scenario {name:?}; expected one of {}",
                BUILTIN_NAMES.join(", ")
            ))
        })?,
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
            parse_scenario(&text).map_err(Failure::invalid)?
        }
        (None, None) => return Err(Failure::usage("one of --scenario or --file is required")),
    };
    scenario.validate().map_err(Failure::invalid)?;
    Ok(scenario)
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> std::result::Result<(), Failure> {
    let stdout = |e: std::io::Error| Failure(EXIT_IO, format!("stdout: {e}"));
    match cmd {
        Command::Run(args) => run_command(args, out),
        Command::Validate { file } => {
            load(&ScenarioArg {
                scenario: None,
                file: Some(file.clone()),
            })?;
            writeln!(out, "{}: ok", file.display()).map_err(stdout)
        }
        Command::Oracle {
            source,
            capacity_override,
            target_util,
        } => {
            let scenario = load(&source)?;
            let mut cfg = SwitchConfig {
                capacity_override: capacity_override.map(Rate::mbps),
                ..Default::default()
            };
            if let Some(t) = target_util {
                cfg.target_utilization = t;
            }
            cfg.validate().map_err(Failure::invalid)?;
            for (name, rate) in oracle_allocation(&scenario, &cfg).map_err(Failure::invalid)? {
                writeln!(out, "{name},{rate}").map_err(stdout)?;
            }
            Ok(())
        }
        Command::Export { name } => {
            let scenario = builtin(&name).ok_or_else(|| {
                Failure::usage(format!(
                    "unknown scenario {name:?}; expected one of {}",
                    BUILTIN_NAMES.join(", ")
                ))
            })?;
            out.write_all(serialize_scenario(&scenario).as_bytes())
                .map_err(stdout)
        }
    }
}

fn run_command(args: RunArgs, out: &mut dyn Write) -> std::result::Result<(), Failure> {
    let variant: Variant = args.variant.parse().map_err(|_| {
        let names: Vec<&str> = Variant::ALL.iter().map(|v| v.as_str()).collect();
        Failure::usage(format!(
            "unknown variant {:?}; expected one of {}",
            args.variant,
            names.join(", ")
        ))
    })?;
    let duration = parse_duration(&args.duration).map_err(|e| Failure::usage(e.to_string()))?;
    let mut scenario = load(&args.source)?;
    if let Some(nrm) = args.nrm {
        scenario.defaults.nrm = nrm;
        scenario.validate().map_err(Failure::invalid)?;
    }

    let mut cfg = SwitchConfig::with_variant(variant);
    if let Some(n) = args.interval_cells {
        cfg.interval_cells = n;
    }
    if let Some(m) = &args.interval_max {
        cfg.interval_max = parse_duration(m).map_err(|e| Failure::usage(e.to_string()))?;
    }
    if let Some(t) = args.target_util {
        cfg.target_utilization = t;
    }
    if let Some(d) = args.delta {
        cfg.delta = d;
    }
    cfg.capacity_override = args.capacity_override.map(Rate::mbps);
    cfg.validate().map_err(Failure::invalid)?;

    let output = run(&scenario, &cfg, duration).map_err(Failure::invalid)?;
    let report = summarize(&scenario, &cfg, &output, duration).map_err(Failure::invalid)?;

    fs::create_dir_all(&args.out).map_err(|e| Failure::io(&args.out, e))?;
    write_traces(&args.out, &output)?;
    let report_path = args.out.join("report.txt");
    fs::write(&report_path, report.to_string()).map_err(|e| Failure::io(&report_path, e))?;
    write!(out, "{report}").map_err(|e| Failure(EXIT_IO, format!("stdout: {e}")))?;
    Ok(())
}

fn write_traces(dir: &Path, output: &RunOutput) -> std::result::Result<(), Failure> {
    let traces = &output.traces;
    let vc_cols: Vec<(&str, &Series)> = traces
        .vcs
        .iter()
        .map(|v| (v.name.as_str(), &v.acr))
        .collect();
    write_wide(&dir.join("acr.csv"), &traces.grid, &vc_cols)?;
    let ports = |f: fn(&crate::trace::PortTrace) -> &Series| -> Vec<(&str, &Series)> {
        traces
            .ports
            .iter()
            .map(|p| (p.label.as_str(), f(p)))
            .collect()
    };
    write_wide(&dir.join("queue.csv"), &traces.grid, &ports(|p| &p.queue))?;
    write_wide(&dir.join("neff.csv"), &traces.grid, &ports(|p| &p.neff))?;
    write_wide(&dir.join("util.csv"), &traces.grid, &ports(|p| &p.util))?;
    Ok(())
}

/// One row per grid point; each column holds the step value at that time.
fn write_wide(
    path: &Path,
    grid: &[SimTime],
    cols: &[(&str, &Series)],
) -> std::result::Result<(), Failure> {
    let io = |e: csv::Error| Failure::io(path, e);
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    let mut header = vec!["time_ms".to_string()];
    header.extend(cols.iter().map(|(n, _)| n.to_string()));
    w.write_record(&header).map_err(io)?;
    for (k, t) in grid.iter().enumerate() {
        let mut row = vec![format!("{}", k as f64 / 10.0)];
        debug_assert!((t.as_millis() - k as f64 / 10.0).abs() < 1e-9);
        for (_, s) in cols {
            row.push(s.value_at(*t).map_or(String::new(), |v| v.to_string()));
        }
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| Failure::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn durations() {
        assert_eq!(parse_duration("300").unwrap(), SimTime::from_millis(300.0));
        assert_eq!(
            parse_duration("300ms").unwrap(),
            SimTime::from_millis(300.0)
        );
        assert_eq!(parse_duration("0.5s").unwrap(), SimTime::from_millis(500.0));
        assert_eq!(
            parse_duration("250us").unwrap(),
            SimTime::from_micros(250.0)
        );
        assert!(parse_duration("-1").is_err());
        assert!(parse_duration("fast").is_err());
    }
}
