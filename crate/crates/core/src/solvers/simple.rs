use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::altmin::{armijo_x_step, svd_update, AltminConfig, State};
use super::rtr::record;
use super::svd::SvdMode;
use super::trace::{Event, SolveTrace, TerminalStatus};
use super::SolveContext;
use crate::error::{Error, Result};
use crate::manifold::ProductPoint;
use crate::objective::Objective;

/// Baseline alternation: one Armijo step in `X`, then an exact SVD for `U`,
/// until `‖grad_X f‖ ≤ ε_x`. Uses `eps_x`, `armijo` and `max_outer` from the
/// config; everything else is ignored.
pub fn simple_altmin_solve(
    obj: &Objective,
    z0: ProductPoint,
    cfg: &AltminConfig,
    ctx: &SolveContext,
) -> Result<(ProductPoint, SolveTrace)> {
    cfg.validate()?;
    if obj.penalty().is_some() {
        return Err(Error::FormMismatch(
            "alternating minimisation runs on the constrained formulation".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let mut trace = SolveTrace::new();
    let mut state = State::new(obj, z0)?;
    trace.push(record(obj, ctx, &state.z, 0, state.f, &state.g, Event::Init)?);
    for _ in 0..cfg.max_outer {
        if state.g.dx.norm() <= cfg.eps_x {
            trace.status = TerminalStatus::GradTol;
            return Ok((state.z, trace));
        }
        state = match armijo_x_step(obj, ctx, &state, &cfg.armijo, 1, &mut trace)? {
            Some(next) => next,
            None => {
                trace.status = TerminalStatus::Stalled;
                return Ok((state.z, trace));
            }
        };
        state = svd_update(obj, ctx, state, SvdMode::Exact, &cfg.svd_policy, &mut rng, &mut trace)?;
    }
    trace.status = if state.g.dx.norm() <= cfg.eps_x {
        TerminalStatus::GradTol
    } else {
        TerminalStatus::MaxIter
    };
    Ok((state.z, trace))
}
