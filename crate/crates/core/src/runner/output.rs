//! CSV, summary and event-log writers.
//!
//! Every number is printed with a fixed number of decimals so repeated runs
//! produce byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{EventKind, RunResult, Sample};
use crate::error::Result;

pub const CSV_HEADER: &str = "t,va,vb,vc,ia,ib,ic,Pa,Pb,Pc,Qa,Qb,Qc,irms_a,irms_b,irms_c,irms_grid_a,irms_grid_b,irms_grid_c,fault_a,fault_b,fault_c,amp_pos,amp_neg,amp_zero";

/// Marker line appended to the CSV of a run that stopped early.
pub const ERROR_MARKER: &str = "# ERROR";

fn csv_row(out: &mut String, s: &Sample) {
    let _ = write!(out, "{:.6}", s.t);
    for v in s.v.iter().chain(&s.i) {
        let _ = write!(out, ",{v:.6}");
    }
    for v in s.p.iter().chain(&s.q) {
        let _ = write!(out, ",{v:.4}");
    }
    for v in s.irms.iter().chain(&s.irms_grid) {
        let _ = write!(out, ",{v:.6}");
    }
    for f in &s.fault {
        let _ = write!(out, ",{}", u8::from(*f));
    }
    for v in &s.amp {
        let _ = write!(out, ",{v:.6}");
    }
    out.push('\n');
}

pub fn csv_string(r: &RunResult) -> String {
    let mut out = String::with_capacity(160 * (r.samples.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for s in &r.samples {
        csv_row(&mut out, s);
    }
    if let Some(e) = &r.error {
        let _ = writeln!(out, "{ERROR_MARKER}: {e}");
    }
    out
}

fn fmt3(v: &[Option<f64>; 3]) -> String {
    let f = |x: &Option<f64>| x.map_or("-".to_string(), |m| format!("{m:.3}"));
    format!("{} {} {}", f(&v[0]), f(&v[1]), f(&v[2]))
}

pub fn event_log_string(r: &RunResult) -> String {
    let mut out = String::new();
    for e in &r.events {
        let _ = write!(out, "{:.6} ", e.t);
        let _ = match &e.kind {
            EventKind::Setpoint(sp) => writeln!(
                out,
                "setpoint P* {:.3} {:.3} {:.3} Q* {:.3} {:.3} {:.3}",
                sp.p_star.a, sp.p_star.b, sp.p_star.c, sp.q_star.a, sp.q_star.b, sp.q_star.c
            ),
            EventKind::GridStart { multipliers } => {
                writeln!(out, "grid_start {}", fmt3(multipliers))
            }
            EventKind::GridEnd => writeln!(out, "grid_end"),
            EventKind::Fault(tr) => writeln!(
                out,
                "{} phase {}",
                if tr.faulty { "fault" } else { "clear" },
                tr.phase.letter()
            ),
            EventKind::Error(msg) => writeln!(out, "error {msg}"),
        };
    }
    out
}

/// Figures reported for one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub name: String,
    pub controller: String,
    pub completed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub t_end: f64,
    /// Means over the last `tail` seconds of the run.
    pub tail: f64,
    pub p_tail: [f64; 3],
    pub q_tail: [f64; 3],
    pub irms_tail: [f64; 3],
    pub peak_irms: [f64; 3],
}

impl RunMetrics {
    pub fn from_run(r: &RunResult, tail: f64) -> Self {
        let t_end = r.samples.last().map_or(0.0, |s| s.t);
        let t0 = (t_end - tail).max(0.0);
        let round = |v: [f64; 3]| v.map(|x| (x * 1e6).round() / 1e6);
        Self {
            name: r.scenario.name.clone(),
            controller: r.scenario.controller.as_str().to_string(),
            completed: r.completed(),
            error: r.error.clone(),
            t_end,
            tail,
            p_tail: round(r.mean(t0, t_end + 1.0, |s| s.p)),
            q_tail: round(r.mean(t0, t_end + 1.0, |s| s.q)),
            irms_tail: round(r.mean(t0, t_end + 1.0, |s| s.irms)),
            peak_irms: round(r.peak_irms),
        }
    }
}

#[derive(Serialize)]
struct MetricsFile<'a> {
    run: &'a [RunMetrics],
}

pub fn metrics_string(m: &[RunMetrics]) -> String {
    toml::to_string(&MetricsFile { run: m }).expect("metrics serialize")
}

/// Paths written for one run.
#[derive(Debug, Clone)]
pub struct RunFiles {
    pub csv: PathBuf,
    pub events: PathBuf,
}

pub fn write_run(r: &RunResult, dir: &Path) -> Result<RunFiles> {
    fs::create_dir_all(dir)?;
    let csv = dir.join(format!("{}.csv", r.scenario.name));
    let events = dir.join(format!("{}.events.log", r.scenario.name));
    fs::write(&csv, csv_string(r))?;
    fs::write(&events, event_log_string(r))?;
    Ok(RunFiles { csv, events })
}

pub fn write_metrics(m: &[RunMetrics], dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join("summary.toml");
    fs::write(&path, metrics_string(m))?;
    Ok(path)
}
