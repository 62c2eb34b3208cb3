//! Machine-readable outputs: the JSON run report and the CSV tables.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::optimize::{Stage, Status, TraceEntry};
use crate::oracle::{ErrorMetrics, ShootingResult};

use super::config::RunConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub entries: usize,
    pub adam_first_loss: Option<f64>,
    pub adam_last_loss: Option<f64>,
    pub lbfgs_first_loss: Option<f64>,
    pub lbfgs_last_loss: Option<f64>,
}

impl TraceSummary {
    pub fn from_trace(trace: &[TraceEntry]) -> Self {
        let of = |stage: Stage| {
            trace
                .iter()
                .filter(move |e| e.stage == stage)
                .map(|e| e.loss)
        };
        TraceSummary {
            entries: trace.len(),
            adam_first_loss: of(Stage::Adam).next(),
            adam_last_loss: of(Stage::Adam).next_back(),
            lbfgs_first_loss: of(Stage::Lbfgs).next(),
            lbfgs_last_loss: of(Stage::Lbfgs).next_back(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub s_star: f64,
    pub x_max: f64,
    pub h: f64,
    pub iterations: usize,
    /// `g_dd_0 - s_star`.
    pub shear_error: f64,
}

impl OracleSummary {
    pub fn new(shot: &ShootingResult, g_dd_0: f64) -> Self {
        OracleSummary {
            s_star: shot.s_star,
            x_max: shot.x_max,
            h: shot.h,
            iterations: shot.iterations,
            shear_error: g_dd_0 - shot.s_star,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timings {
    pub adam_ms: u64,
    pub lbfgs_ms: u64,
}

/// Everything `solve` knows about a run. With `timings` omitted, two runs
/// with the same version, config and seed serialize to identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub version: String,
    pub model: String,
    pub preset: Option<String>,
    pub g_dd_0: f64,
    pub final_loss: f64,
    pub converged: Status,
    pub adam_epochs: usize,
    pub lbfgs_iterations: usize,
    pub line_search_fallbacks: usize,
    pub trace_summary: TraceSummary,
    pub oracle: Option<OracleSummary>,
    pub metrics: Option<ErrorMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
    pub seed: u64,
    pub config: RunConfig,
    pub parameters: Vec<f64>,
}

impl TrainingReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Row of the network profile CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileRow {
    pub x: f64,
    pub g: f64,
    pub gp: f64,
    pub gpp: f64,
    pub residual: f64,
}

/// 17 significant digits: enough to round-trip any `f64`.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_profile_csv<W: Write>(mut w: W, rows: &[ProfileRow]) -> std::io::Result<()> {
    writeln!(w, "x,g,gp,gpp,residual")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            fmt_num(r.x),
            fmt_num(r.g),
            fmt_num(r.gp),
            fmt_num(r.gpp),
            fmt_num(r.residual)
        )?;
    }
    Ok(())
}

pub fn write_oracle_csv<W: Write>(mut w: W, shot: &ShootingResult) -> std::io::Result<()> {
    writeln!(w, "x,g,gp,gpp")?;
    for (x, s) in shot.profile.x.iter().zip(&shot.profile.states) {
        writeln!(
            w,
            "{},{},{},{}",
            fmt_num(*x),
            fmt_num(s.g),
            fmt_num(s.gp),
            fmt_num(s.gpp)
        )?;
    }
    Ok(())
}

pub fn write_trace_csv<W: Write>(mut w: W, trace: &[TraceEntry]) -> std::io::Result<()> {
    writeln!(w, "stage,iteration,loss,wall_time_ms")?;
    for e in trace {
        let stage = match e.stage {
            Stage::Adam => "adam",
            Stage::Lbfgs => "lbfgs",
        };
        writeln!(
            w,
            "{stage},{},{},{}",
            e.iteration,
            fmt_num(e.loss),
            e.wall_time_ms
        )?;
    }
    Ok(())
}
