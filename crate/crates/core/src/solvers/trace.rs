use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::svd::SvdMode;

/// Why a solve stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalStatus {
    GradTol,
    MaxIter,
    Stalled,
}

impl TerminalStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            TerminalStatus::GradTol => "grad_tol",
            TerminalStatus::MaxIter => "max_iter",
            TerminalStatus::Stalled => "stalled",
        }
    }
}

/// What produced a trace row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    Init,
    Accepted,
    Rejected,
    /// One Armijo gradient step in `X`.
    Armijo,
    /// Inner trust-region solve in `X` (second-order alternation).
    InnerSolve,
    SvdUpdate,
    SvdSkipped,
}

impl Event {
    pub fn as_str(&self) -> &'static str {
        match self {
            Event::Init => "init",
            Event::Accepted => "accepted",
            Event::Rejected => "rejected",
            Event::Armijo => "armijo",
            Event::InnerSolve => "inner_solve",
            Event::SvdUpdate => "svd_update",
            Event::SvdSkipped => "svd_skipped",
        }
    }

    /// Whether the row moved the iterate.
    pub fn moves(&self) -> bool {
        matches!(
            self,
            Event::Accepted | Event::Armijo | Event::InnerSolve | Event::SvdUpdate
        )
    }
}

/// One row of a [`SolveTrace`]. Gradient norms are taken at the iterate the
/// row ends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    pub f: f64,
    pub gnorm_x: f64,
    pub gnorm_u: f64,
    /// Armijo step size, or the norm of the trust-region step.
    pub step: Option<f64>,
    pub delta: Option<f64>,
    pub rho: Option<f64>,
    pub svd_mode: Option<SvdMode>,
    pub inner_iters: usize,
    pub rmse: Option<f64>,
    /// `f` at the previous row minus `f` here, computed from increments.
    pub decrease: f64,
    /// `‖A(X) − b‖`.
    pub feasibility: f64,
    pub event: Event,
}

/// Per-iteration history of a solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    pub records: Vec<TraceRecord>,
    pub status: TerminalStatus,
    /// Number of U-updates where `σ_r` and `σ_{r+1}` were numerically tied.
    pub svd_ties: usize,
}

pub const TRACE_COLUMNS: [&str; 13] = [
    "k",
    "f",
    "gnorm_x",
    "gnorm_u",
    "step",
    "delta",
    "rho",
    "svd_mode",
    "inner_iters",
    "rmse",
    "decrease",
    "feasibility",
    "event",
];

/// Float formatting shared by all CSV output: 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

impl SolveTrace {
    pub fn new() -> Self {
        Self {
            records: Vec::new(),
            status: TerminalStatus::MaxIter,
            svd_ties: 0,
        }
    }

    pub fn push(&mut self, rec: TraceRecord) {
        self.records.push(rec);
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// Iterations performed (rows after the initial one).
    pub fn iterations(&self) -> usize {
        self.records.last().map(|r| r.k).unwrap_or(0)
    }

    pub fn final_gnorm(&self) -> f64 {
        self.records
            .last()
            .map(|r| r.gnorm_x.hypot(r.gnorm_u))
            .unwrap_or(f64::NAN)
    }

    pub fn to_csv(&self) -> String {
        let mut out = TRACE_COLUMNS.join(",");
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.k,
                fmt_f64(r.f),
                fmt_f64(r.gnorm_x),
                fmt_f64(r.gnorm_u),
                fmt_opt(r.step),
                fmt_opt(r.delta),
                fmt_opt(r.rho),
                r.svd_mode.map(|m| m.as_str()).unwrap_or(""),
                r.inner_iters,
                fmt_opt(r.rmse),
                fmt_f64(r.decrease),
                fmt_f64(r.feasibility),
                r.event.as_str(),
            );
        }
        out
    }
}

impl Default for SolveTrace {
    fn default() -> Self {
        Self::new()
    }
}
