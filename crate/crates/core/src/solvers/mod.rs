//! Solvers for the lifted recovery problem and the registry that selects
//! them by name.

mod altmin;
mod armijo;
mod problem;
mod rtr;
mod simple;
mod svd;
mod tcg;
mod trace;

use std::fmt;

use nalgebra::DMatrix;

pub use altmin::{altmin_solve, grad_u_norm, AltminConfig, InnerMethod, Schedule};
pub use armijo::{armijo, armijo_decrease, ArmijoConfig, ArmijoStep};
pub use problem::{FrozenU, Gradient, Joint, Problem};
pub use rtr::{rtr_solve, RtrConfig};
pub use simple::simple_altmin_solve;
pub use svd::{
    randomized_svd, singular_gap, subspace_by_mode, svd_policy, truncated_svd, wedin_gap_check, SvdMode, SvdPolicy,
};
pub use tcg::{tcg_subproblem, TcgConfig, TcgExit, TcgResult};
pub use trace::{fmt_f64, Event, SolveTrace, TerminalStatus, TraceRecord, TRACE_COLUMNS};

use crate::error::{Error, Result};
use crate::manifold::ProductPoint;
use crate::objective::Objective;

/// Per-solve inputs that are not part of the configuration.
#[derive(Debug, Clone, Copy, Default)]
pub struct SolveContext<'a> {
    /// Ground truth, for the RMSE column of the trace.
    pub truth: Option<&'a DMatrix<f64>>,
    /// Seed for randomised factorisations.
    pub seed: u64,
}

pub trait Solver: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn solve(&self, obj: &Objective, z0: ProductPoint, ctx: &SolveContext) -> Result<(ProductPoint, SolveTrace)>;
}

#[derive(Debug, Clone)]
pub struct RtrSolver {
    pub name: String,
    pub cfg: RtrConfig,
}

impl Solver for RtrSolver {
    fn name(&self) -> &str {
        &self.name
    }

    fn solve(&self, obj: &Objective, z0: ProductPoint, ctx: &SolveContext) -> Result<(ProductPoint, SolveTrace)> {
        rtr_solve(obj, z0, &self.cfg, ctx)
    }
}

#[derive(Debug, Clone)]
pub struct AltminSolver {
    pub name: String,
    pub cfg: AltminConfig,
}

impl Solver for AltminSolver {
    fn name(&self) -> &str {
        &self.name
    }

    fn solve(&self, obj: &Objective, z0: ProductPoint, ctx: &SolveContext) -> Result<(ProductPoint, SolveTrace)> {
        altmin_solve(obj, z0, &self.cfg, ctx)
    }
}

#[derive(Debug, Clone)]
pub struct SimpleSolver {
    pub cfg: AltminConfig,
}

impl Solver for SimpleSolver {
    fn name(&self) -> &str {
        "simple"
    }

    fn solve(&self, obj: &Objective, z0: ProductPoint, ctx: &SolveContext) -> Result<(ProductPoint, SolveTrace)> {
        simple_altmin_solve(obj, z0, &self.cfg, ctx)
    }
}

/// Solvers keyed by name.
#[derive(Debug, Default)]
pub struct SolverRegistry {
    solvers: Vec<Box<dyn Solver>>,
}

impl SolverRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// `rtr2` (second order), `rtr1` (identity model Hessian), `altmin1`
    /// (gradient-descent inner solves), `altmin2` (trust-region inner
    /// solves) and `simple`.
    pub fn with_configs(rtr: RtrConfig, altmin: AltminConfig) -> Self {
        let mut reg = Self::new();
        reg.register(Box::new(RtrSolver {
            name: "rtr2".into(),
            cfg: RtrConfig {
                first_order: false,
                ..rtr
            },
        }));
        reg.register(Box::new(RtrSolver {
            name: "rtr1".into(),
            cfg: RtrConfig {
                first_order: true,
                ..rtr
            },
        }));
        reg.register(Box::new(AltminSolver {
            name: "altmin1".into(),
            cfg: AltminConfig {
                inner: InnerMethod::GradientDescent,
                ..altmin
            },
        }));
        reg.register(Box::new(AltminSolver {
            name: "altmin2".into(),
            cfg: AltminConfig {
                inner: InnerMethod::TrustRegion,
                ..altmin
            },
        }));
        reg.register(Box::new(SimpleSolver { cfg: altmin }));
        reg
    }

    /// Adds a solver, replacing any with the same name.
    pub fn register(&mut self, solver: Box<dyn Solver>) {
        self.solvers.retain(|s| s.name() != solver.name());
        self.solvers.push(solver);
    }

    pub fn get(&self, name: &str) -> Result<&dyn Solver> {
        self.solvers
            .iter()
            .find(|s| s.name() == name)
            .map(|s| s.as_ref())
            .ok_or_else(|| Error::UnknownSolver(name.to_string()))
    }

    pub fn names(&self) -> Vec<&str> {
        self.solvers.iter().map(|s| s.name()).collect()
    }
}
