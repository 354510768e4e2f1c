//! L-BFGS minimization of a smooth objective that supplies its own gradient.

use std::sync::Mutex;

use argmin::core::{CostFunction, Executor, Gradient, State, TerminationReason, TerminationStatus};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::quasinewton::LBFGS;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LbfgsConfig {
    /// Number of correction pairs kept.
    pub memory: usize,
    pub max_iters: usize,
    /// Stop once `‖∇f‖₂` falls below this.
    pub grad_tol: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iters: 500,
            grad_tol: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LbfgsReport {
    pub loss: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub termination: String,
}

type Eval = (Vec<f64>, f64, Vec<f64>);

/// Adapts a combined loss-and-gradient closure to argmin's separate traits,
/// caching the last evaluation so each point is computed once.
struct Objective<'a, F> {
    f: &'a F,
    last: Mutex<Option<Eval>>,
}

impl<F: Fn(&[f64], &mut [f64]) -> f64> Objective<'_, F> {
    fn eval(&self, x: &[f64]) -> std::result::Result<(f64, Vec<f64>), argmin::core::Error> {
        let mut cache = self.last.lock().unwrap_or_else(|e| e.into_inner());
        if let Some((cx, v, g)) = cache.as_ref() {
            if cx.as_slice() == x {
                return Ok((*v, g.clone()));
            }
        }
        let mut g = vec![0.0; x.len()];
        let v = (self.f)(x, &mut g);
        if !v.is_finite() || g.iter().any(|d| !d.is_finite()) {
            return Err(Error::Optimizer(format!("non-finite loss or gradient ({v})")).into());
        }
        *cache = Some((x.to_vec(), v, g.clone()));
        Ok((v, g))
    }
}

impl<F: Fn(&[f64], &mut [f64]) -> f64> CostFunction for Objective<'_, F> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        self.eval(x).map(|(v, _)| v)
    }
}

impl<F: Fn(&[f64], &mut [f64]) -> f64> Gradient for Objective<'_, F> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;

    fn gradient(&self, x: &Vec<f64>) -> std::result::Result<Vec<f64>, argmin::core::Error> {
        self.eval(x).map(|(_, g)| g)
    }
}

/// Minimize `f`, which returns the loss and writes the gradient into its
/// second argument. `x` holds the start point on entry and the minimizer on
/// return.
pub fn minimize<F>(f: F, x: &mut [f64], cfg: &LbfgsConfig) -> Result<LbfgsReport>
where
    F: Fn(&[f64], &mut [f64]) -> f64,
{
    let objective = Objective {
        f: &f,
        last: Mutex::new(None),
    };
    let wrap = |e: argmin::core::Error| match e.downcast::<Error>() {
        Ok(inner) => inner,
        Err(other) => Error::Optimizer(other.to_string()),
    };
    let solver = LBFGS::new(MoreThuenteLineSearch::new(), cfg.memory.max(1))
        .with_tolerance_grad(cfg.grad_tol)
        .map_err(wrap)?
        .with_tolerance_cost(0.0)
        .map_err(wrap)?;
    let res = Executor::new(objective, solver)
        .configure(|s| s.param(x.to_vec()).max_iters(cfg.max_iters as u64))
        .run()
        .map_err(wrap)?;
    let state = res.state();
    let best = state
        .get_best_param()
        .or(state.get_param())
        .ok_or_else(|| Error::Optimizer("solver returned no parameters".into()))?;
    x.copy_from_slice(best);
    let mut g = vec![0.0; x.len()];
    let loss = f(x, &mut g);
    let grad_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let status = state.get_termination_status();
    let converged = matches!(
        status,
        TerminationStatus::Terminated(TerminationReason::SolverConverged)
    ) && grad_norm < cfg.grad_tol;
    let termination = status.to_string();
    Ok(LbfgsReport {
        loss,
        grad_norm,
        iterations: state.get_iter() as usize,
        converged,
        termination,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl() {
        let center = [3.0, -1.0, 0.5];
        let scales = [1.0, 10.0, 100.0];
        let mut x = vec![0.0; 3];
        let report = minimize(
            |x, g| {
                let mut f = 0.0;
                for i in 0..3 {
                    let d = x[i] - center[i];
                    f += 0.5 * scales[i] * d * d;
                    g[i] = scales[i] * d;
                }
                f
            },
            &mut x,
            &LbfgsConfig::default(),
        )
        .unwrap();
        assert!(report.converged, "{report:?}");
        for i in 0..3 {
            assert!((x[i] - center[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn rosenbrock() {
        let mut x = vec![-1.2, 1.0];
        let cfg = LbfgsConfig {
            max_iters: 1000,
            grad_tol: 1e-8,
            ..Default::default()
        };
        let report = minimize(
            |x, g| {
                let (a, b) = (x[0], x[1]);
                g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
                g[1] = 200.0 * (b - a * a);
                (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
            },
            &mut x,
            &cfg,
        )
        .unwrap();
        assert!(
            (x[0] - 1.0).abs() < 1e-5 && (x[1] - 1.0).abs() < 1e-5,
            "{x:?} {report:?}"
        );
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let mut x = vec![1.0];
        let r = minimize(
            |_, g| {
                g[0] = 0.0;
                f64::NAN
            },
            &mut x,
            &LbfgsConfig::default(),
        );
        assert!(r.is_err());
    }
}
