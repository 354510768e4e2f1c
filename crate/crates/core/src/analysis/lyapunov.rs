//! Maximum and local Lyapunov exponents by twin-trajectory integration.

use std::ops::Range;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Network, State};
use crate::error::{Error, Result};
use crate::feedback::{ClosedLoop, LoopState};
use crate::linalg::dist;
use crate::rng::{self, tag};
use crate::schedule::SymbolId;

/// A deterministic system advanced in fixed steps, with continuous
/// coordinates that can be perturbed.
pub trait Autonomous: Sync {
    type State: Clone + Send + Sync;

    fn coords<'s>(&self, s: &'s Self::State) -> &'s [f64];
    fn coords_mut<'s>(&self, s: &'s mut Self::State) -> &'s mut [f64];
    fn advance(&self, s: &mut Self::State, steps: usize) -> Result<()>;
    fn dt(&self) -> f64;

    /// Copy any discrete state from `reference` after a renormalization.
    fn resync(&self, _reference: &Self::State, _perturbed: &mut Self::State) {}
}

/// The network under a fixed input (or none).
#[derive(Debug, Clone, Copy)]
pub struct FreeRun<'a> {
    pub network: &'a Network,
    pub input: Option<SymbolId>,
}

impl Autonomous for FreeRun<'_> {
    type State = State;

    fn coords<'s>(&self, s: &'s State) -> &'s [f64] {
        &s.x
    }

    fn coords_mut<'s>(&self, s: &'s mut State) -> &'s mut [f64] {
        &mut s.x
    }

    fn advance(&self, s: &mut State, steps: usize) -> Result<()> {
        self.network.advance(s, self.input, steps)
    }

    fn dt(&self) -> f64 {
        self.network.config().dt
    }
}

impl Autonomous for ClosedLoop<'_> {
    type State = LoopState;

    fn coords<'s>(&self, s: &'s LoopState) -> &'s [f64] {
        &s.state.x
    }

    fn coords_mut<'s>(&self, s: &'s mut LoopState) -> &'s mut [f64] {
        &mut s.state.x
    }

    fn advance(&self, s: &mut LoopState, steps: usize) -> Result<()> {
        let mut scratch = Vec::with_capacity(s.state.x.len());
        for _ in 0..steps {
            self.step(s, &mut scratch)?;
        }
        Ok(())
    }

    fn dt(&self) -> f64 {
        self.network.config().dt
    }

    fn resync(&self, reference: &LoopState, perturbed: &mut LoopState) {
        perturbed.symbol = reference.symbol;
        perturbed.hold_left = reference.hold_left;
    }
}

/// `dx/dt = -x/τ`, propagated exactly; its exponent is `-1/τ`.
#[derive(Debug, Clone, Copy)]
pub struct LinearContraction {
    pub tau: f64,
    pub dt: f64,
}

impl Autonomous for LinearContraction {
    type State = Vec<f64>;

    fn coords<'s>(&self, s: &'s Vec<f64>) -> &'s [f64] {
        s
    }

    fn coords_mut<'s>(&self, s: &'s mut Vec<f64>) -> &'s mut [f64] {
        s
    }

    fn advance(&self, s: &mut Vec<f64>, steps: usize) -> Result<()> {
        let f = (-(steps as f64) * self.dt / self.tau).exp();
        for v in s.iter_mut() {
            *v *= f;
        }
        Ok(())
    }

    fn dt(&self) -> f64 {
        self.dt
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MleConfig {
    pub interval_ms: f64,
    pub horizon_ms: f64,
    pub l_pert: f64,
    pub n_trials: usize,
    /// Washout before each trial when initial states are generated here.
    pub washout_ms: f64,
}

impl Default for MleConfig {
    fn default() -> Self {
        Self {
            interval_ms: 1000.0,
            horizon_ms: 1_000_000.0,
            l_pert: 1e-6,
            n_trials: 10,
            washout_ms: 1000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    /// Mean log growth rate per ms over all intervals and trials.
    pub mle: f64,
    pub trial_means: Vec<f64>,
    /// Per-trial interval estimates.
    pub samples: Vec<Vec<f64>>,
    pub params: MleConfig,
}

fn unit_gaussian<R: Rng + ?Sized>(rng: &mut R, n: usize, range: &Range<usize>) -> Vec<f64> {
    let mut v = vec![0.0; n];
    for x in &mut v[range.clone()] {
        *x = rng.sample(StandardNormal);
    }
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    for x in &mut v {
        *x /= norm;
    }
    v
}

/// Renormalized twin-trajectory estimate of the largest exponent, one trial
/// per entry of `initial`. Perturbations are isotropic over all coordinates.
pub fn max_lyapunov<S: Autonomous>(
    system: &S,
    initial: &[S::State],
    cfg: &MleConfig,
    seed: u64,
) -> Result<LyapunovReport> {
    if !(cfg.interval_ms > 0.0) || !(cfg.horizon_ms >= cfg.interval_ms) {
        return Err(Error::config(
            "interval_ms",
            "need 0 < interval_ms <= horizon_ms",
        ));
    }
    if !(cfg.l_pert > 0.0) {
        return Err(Error::config("l_pert", "must be > 0"));
    }
    if initial.is_empty() {
        return Err(Error::InvalidArgument(
            "at least one trial is required".into(),
        ));
    }
    let dt = system.dt();
    let interval_steps = (cfg.interval_ms / dt).round() as usize;
    let interval = interval_steps as f64 * dt;
    let n_intervals = (cfg.horizon_ms / interval).floor() as usize;

    let samples: Vec<Vec<f64>> = initial
        .par_iter()
        .enumerate()
        .map(|(trial, x0)| {
            let n = system.coords(x0).len();
            let mut r = rng::stream(seed, tag::MLE, trial as u64);
            let dir = unit_gaussian(&mut r, n, &(0..n));
            let mut x = x0.clone();
            let mut y = x0.clone();
            for (yi, d) in system.coords_mut(&mut y).iter_mut().zip(&dir) {
                *yi += cfg.l_pert * d;
            }
            let mut out = Vec::with_capacity(n_intervals);
            for _ in 0..n_intervals {
                let before = dist(system.coords(&y), system.coords(&x));
                system.advance(&mut x, interval_steps)?;
                system.advance(&mut y, interval_steps)?;
                let after = dist(system.coords(&y), system.coords(&x));
                if !(after > 0.0) || !(before > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "perturbation gap underflowed to zero; increase l_pert (now {})",
                        cfg.l_pert
                    )));
                }
                out.push((after / before).ln() / interval);
                let scale = cfg.l_pert / after;
                let xc = system.coords(&x).to_vec();
                for (yi, xi) in system.coords_mut(&mut y).iter_mut().zip(&xc) {
                    *yi = xi + scale * (*yi - xi);
                }
                system.resync(&x, &mut y);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let trial_means: Vec<f64> = samples
        .iter()
        .map(|s| s.iter().sum::<f64>() / s.len().max(1) as f64)
        .collect();
    let total: usize = samples.iter().map(Vec::len).sum();
    let mle = samples.iter().flatten().sum::<f64>() / total.max(1) as f64;
    Ok(LyapunovReport {
        mle,
        trial_means,
        samples,
        params: cfg.clone(),
    })
}

/// Zero-input washouts used as trial starting points.
pub fn washed_out_states(
    network: &Network,
    n: usize,
    washout_ms: f64,
    seed: u64,
) -> Result<Vec<State>> {
    (0..n)
        .map(|k| {
            let mut r = rng::stream(seed, tag::MLE, 1_000_000 + k as u64);
            network.washout(washout_ms, None, &mut r)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LleConfig {
    pub epsilon: f64,
    pub n_trials: usize,
    pub washout_ms: f64,
    /// Perturb only the chaotic-network coordinates.
    pub chaotic_only: bool,
}

impl Default for LleConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            n_trials: 10,
            washout_ms: 1000.0,
            chaotic_only: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LleCurve {
    pub t: Vec<f64>,
    pub lle: Vec<f64>,
}

impl LleCurve {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "lle"])?;
        for (t, v) in self.t.iter().zip(&self.lle) {
            out.serialize((t, v))?;
        }
        out.flush()?;
        Ok(())
    }

    /// Smallest value over `t` in `[from, to)`.
    pub fn min_over(&self, from: f64, to: f64) -> f64 {
        self.t
            .iter()
            .zip(&self.lle)
            .filter(|(t, _)| **t >= from && **t < to)
            .map(|(_, v)| *v)
            .fold(f64::INFINITY, f64::min)
    }
}

fn grid_steps(t_grid: &[f64], dt: f64) -> Result<Vec<usize>> {
    let mut prev = 0usize;
    t_grid
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            if !(t >= 0.0) {
                return Err(Error::InvalidArgument("t_grid must be non-negative".into()));
            }
            let k = (t / dt).round() as usize;
            if i > 0 && k < prev {
                return Err(Error::InvalidArgument("t_grid must be sorted".into()));
            }
            prev = k;
            Ok(k)
        })
        .collect()
}

/// Average `log(‖y(t) − x(t)‖ / ‖y(0) − x(0)‖)` over trials, where each `y`
/// starts from its `x` plus a Gaussian perturbation of norm `epsilon` on the
/// coordinates in `perturbed`.
pub fn lle_curve<S: Autonomous>(
    system: &S,
    initial: &[S::State],
    perturbed: Range<usize>,
    epsilon: f64,
    t_grid: &[f64],
    seed: u64,
) -> Result<LleCurve> {
    if initial.is_empty() {
        return Err(Error::InvalidArgument(
            "at least one trial is required".into(),
        ));
    }
    let steps = grid_steps(t_grid, system.dt())?;
    let logs: Vec<Vec<f64>> = initial
        .par_iter()
        .enumerate()
        .map(|(trial, x0)| {
            let n = system.coords(x0).len();
            if perturbed.end > n || perturbed.is_empty() {
                return Err(Error::InvalidArgument(
                    "perturbation range out of bounds".into(),
                ));
            }
            let mut r = rng::stream(seed, tag::LLE, trial as u64);
            let dir = unit_gaussian(&mut r, n, &perturbed);
            let mut x = x0.clone();
            let mut y = x0.clone();
            for (yi, d) in system.coords_mut(&mut y).iter_mut().zip(&dir) {
                *yi += epsilon * d;
            }
            let gap0 = dist(system.coords(&y), system.coords(&x));
            let mut at = 0;
            let mut out = Vec::with_capacity(steps.len());
            for &k in &steps {
                system.advance(&mut x, k - at)?;
                system.advance(&mut y, k - at)?;
                at = k;
                out.push((dist(system.coords(&y), system.coords(&x)) / gap0).ln());
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let lle = (0..t_grid.len())
        .map(|i| logs.iter().map(|l| l[i]).sum::<f64>() / logs.len() as f64)
        .collect();
    Ok(LleCurve {
        t: t_grid.to_vec(),
        lle,
    })
}

/// Local exponent curve after switching `network` to `symbol` at `t = 0`
/// from zero-input washouts.
pub fn local_lyapunov(
    network: &Network,
    symbol: SymbolId,
    t_grid: &[f64],
    cfg: &LleConfig,
    seed: u64,
) -> Result<LleCurve> {
    if symbol >= network.n_symbols() {
        return Err(Error::InvalidArgument(format!(
            "symbol {symbol} out of range"
        )));
    }
    let initial: Vec<State> = (0..cfg.n_trials)
        .map(|k| {
            let mut r = rng::stream(seed, tag::LLE, 1_000_000 + k as u64);
            network.washout(cfg.washout_ms, None, &mut r)
        })
        .collect::<Result<_>>()?;
    let n_in = network.config().n_in;
    let range = if cfg.chaotic_only {
        n_in..network.n_total()
    } else {
        0..network.n_total()
    };
    let system = FreeRun {
        network,
        input: Some(symbol),
    };
    lle_curve(&system, &initial, range, cfg.epsilon, t_grid, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SimConfig;

    #[test]
    fn linear_contraction_exponent() {
        let sys = LinearContraction { tau: 10.0, dt: 1.0 };
        let init = vec![vec![0.3, -0.2, 0.5, 0.1]; 3];
        let cfg = MleConfig {
            interval_ms: 200.0,
            horizon_ms: 2000.0,
            ..Default::default()
        };
        let r = max_lyapunov(&sys, &init, &cfg, 1).unwrap();
        assert!((r.mle + 0.1).abs() < 1e-3, "{}", r.mle);
        assert_eq!(r.samples.len(), 3);
        assert_eq!(r.samples[0].len(), 10);
    }

    #[test]
    fn linear_lle_is_minus_t_over_tau() {
        let sys = LinearContraction { tau: 10.0, dt: 1.0 };
        let init = vec![vec![0.0; 5]; 4];
        let grid: Vec<f64> = (0..=10).map(|k| k as f64 * 10.0).collect();
        let c = lle_curve(&sys, &init, 0..5, 1e-6, &grid, 3).unwrap();
        assert_eq!(c.lle[0], 0.0);
        for (t, v) in c.t.iter().zip(&c.lle).skip(1) {
            let want = -t / 10.0;
            assert!(((v - want) / want).abs() < 0.01, "{t}: {v}");
        }
    }

    #[test]
    fn unsorted_grid_rejected() {
        let sys = LinearContraction { tau: 10.0, dt: 1.0 };
        let init = vec![vec![0.0; 2]];
        assert!(lle_curve(&sys, &init, 0..2, 1e-6, &[10.0, 5.0], 0).is_err());
    }

    #[test]
    fn gap_underflow_is_reported() {
        let sys = LinearContraction { tau: 1.0, dt: 1.0 };
        let cfg = MleConfig {
            interval_ms: 1000.0,
            horizon_ms: 1000.0,
            ..Default::default()
        };
        let err = max_lyapunov(&sys, &[vec![0.0; 2]], &cfg, 0).unwrap_err();
        assert!(err.to_string().contains("l_pert"));
    }

    #[test]
    fn lle_starts_at_zero_on_network() {
        let mut cfg = SimConfig::desk();
        cfg.n_in = 20;
        cfg.n_ch = 40;
        let net = Network::build(cfg, 1).unwrap();
        let lcfg = LleConfig {
            n_trials: 2,
            washout_ms: 50.0,
            ..Default::default()
        };
        let c = local_lyapunov(&net, 0, &[0.0, 10.0], &lcfg, 1).unwrap();
        assert_eq!(c.lle[0], 0.0);
        assert!(c.lle[1].is_finite());
    }
}
