use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArmijoConfig {
    pub alpha0: f64,
    pub tau: f64,
    pub beta: f64,
    pub max_backtracks: usize,
}

impl Default for ArmijoConfig {
    fn default() -> Self {
        Self {
            alpha0: 2.0,
            tau: 0.5,
            beta: 1e-4,
            max_backtracks: 60,
        }
    }
}

impl ArmijoConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha0 > 0.0 && self.tau > 0.0 && self.tau < 1.0 && self.beta > 0.0 && self.beta < 1.0;
        if !ok {
            return Err(Error::Parameter(format!("invalid Armijo parameters {self:?}")));
        }
        Ok(())
    }
}

/// Accepted step and the decrease it achieved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmijoStep {
    pub alpha: f64,
    pub decrease: f64,
    pub backtracks: usize,
}

/// Backtracking on `α ∈ {α₀, τα₀, τ²α₀, …}` until
/// `decrease(α) ≥ −β α ⟨g, d⟩`, where `decrease(α) = f(x) − f(x + αd)`.
pub fn armijo_decrease<F>(mut decrease: F, g_dot_d: f64, cfg: &ArmijoConfig) -> Result<ArmijoStep>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(g_dot_d < 0.0) {
        return Err(Error::Parameter(format!(
            "Armijo needs a descent direction, got <g, d> = {g_dot_d}"
        )));
    }
    let mut alpha = cfg.alpha0;
    for backtracks in 0..=cfg.max_backtracks {
        let dec = decrease(alpha)?;
        if dec.is_finite() && dec >= -cfg.beta * alpha * g_dot_d {
            return Ok(ArmijoStep {
                alpha,
                decrease: dec,
                backtracks,
            });
        }
        alpha *= cfg.tau;
    }
    Err(Error::LineSearchFailure(cfg.max_backtracks + 1))
}

/// [`armijo_decrease`] for a function given by its values along `d`.
pub fn armijo<F>(mut f_along: F, f0: f64, g_dot_d: f64, cfg: &ArmijoConfig) -> Result<ArmijoStep>
where
    F: FnMut(f64) -> Result<f64>,
{
    armijo_decrease(|a| Ok(f0 - f_along(a)?), g_dot_d, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_takes_unit_step() {
        let f = |x: f64| 0.5 * x * x;
        let step = armijo(|a| Ok(f(1.0 - a)), f(1.0), -1.0, &ArmijoConfig::default()).unwrap();
        assert_eq!(step.alpha, 1.0);
        assert_eq!(step.backtracks, 1);
    }

    #[test]
    fn linear_accepts_initial_step() {
        let step = armijo(|a| Ok(3.0 - 2.0 * a), 3.0, -2.0, &ArmijoConfig::default()).unwrap();
        assert_eq!(step.alpha, 2.0);
    }

    #[test]
    fn ascent_direction_is_rejected() {
        assert!(armijo(|a| Ok(a), 0.0, 1.0, &ArmijoConfig::default()).is_err());
    }

    #[test]
    fn broken_gradient_fails_after_backtracking_limit() {
        // Claims descent but the function increases along d.
        let err = armijo(|a| Ok(a), 0.0, -1.0, &ArmijoConfig::default()).unwrap_err();
        assert_eq!(err, Error::LineSearchFailure(61));
    }
}
