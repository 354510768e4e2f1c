//! Timer task: how well a linear readout recovers a delayed pulse after a
//! symbol switch.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::Network;
use crate::error::{Error, Result};
use crate::innate::rollout;
use crate::linalg::{Gram, SampleMatrix};
use crate::rng::{self, tag};
use crate::schedule::SymbolId;

/// Width of the timer pulse in ms.
pub const PULSE_WIDTH_MS: f64 = 10.0;

pub fn pulse(t: f64, t_peak: f64) -> f64 {
    let d = t - t_peak;
    (-(d * d) / (2.0 * PULSE_WIDTH_MS * PULSE_WIDTH_MS)).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimerConfig {
    pub symbol: SymbolId,
    pub ridge_alpha: f64,
    pub n_train_trials: usize,
    pub n_test_trials: usize,
    pub washout_ms: f64,
    /// Recording window after the switch; defaults to the last peak plus
    /// five pulse widths.
    pub window_ms: Option<f64>,
}

impl Default for TimerConfig {
    fn default() -> Self {
        Self {
            symbol: 0,
            ridge_alpha: 1.0,
            n_train_trials: 10,
            n_test_trials: 10,
            washout_ms: 1000.0,
            window_ms: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimerReport {
    pub t_peak: Vec<f64>,
    /// Mean over test trials of the squared correlation at each peak time.
    pub r2: Vec<f64>,
    pub capacity: f64,
}

impl TimerReport {
    pub fn r2_at(&self, t_peak: f64) -> Option<f64> {
        self.t_peak
            .iter()
            .position(|&t| (t - t_peak).abs() < 1e-9)
            .map(|i| self.r2[i])
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t_peak", "r2"])?;
        for (t, v) in self.t_peak.iter().zip(&self.r2) {
            out.serialize((t, v))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Squared Pearson correlation; 0 when either series has no variance.
pub fn r_squared(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    if n < 2 {
        return 0.0;
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x[..n].iter().zip(&y[..n]) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return 0.0;
    }
    let r2 = sxy * sxy / (sxx * syy);
    r2.clamp(0.0, 1.0)
}

/// Trapezoidal integral of `r2` over the sorted grid `t_peak`.
pub fn timer_capacity(t_peak: &[f64], r2: &[f64]) -> Result<f64> {
    if t_peak.len() != r2.len() {
        return Err(Error::InvalidArgument(
            "grid and values differ in length".into(),
        ));
    }
    if t_peak.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument(
            "t_peak grid must be strictly increasing".into(),
        ));
    }
    Ok(t_peak
        .windows(2)
        .zip(r2.windows(2))
        .map(|(t, v)| 0.5 * (v[0] + v[1]) * (t[1] - t[0]))
        .sum())
}

/// Train one ridge readout per peak time on a shared set of post-switch
/// recordings and score it on held-out recordings.
pub fn timer_task(
    network: &Network,
    t_peak: &[f64],
    cfg: &TimerConfig,
    seed: u64,
) -> Result<TimerReport> {
    if t_peak.is_empty() {
        return Err(Error::InvalidArgument("t_peak grid is empty".into()));
    }
    if t_peak.windows(2).any(|w| !(w[1] > w[0])) || t_peak[0] < 0.0 {
        return Err(Error::InvalidArgument(
            "t_peak grid must be non-negative and strictly increasing".into(),
        ));
    }
    if cfg.n_train_trials == 0 || cfg.n_test_trials == 0 {
        return Err(Error::config(
            "n_train_trials",
            "need at least one train and one test trial",
        ));
    }
    if cfg.symbol >= network.n_symbols() {
        return Err(Error::config("symbol", "out of range"));
    }
    let dt = network.config().dt;
    let last = *t_peak.last().unwrap_or(&0.0);
    let window = cfg.window_ms.unwrap_or(last + 5.0 * PULSE_WIDTH_MS);
    let steps = network.config().steps(window);
    let n = network.n_total();

    let record = |k: usize| -> Result<SampleMatrix> {
        let mut r = rng::stream(seed, tag::TIMER, k as u64);
        let init = network.washout(cfg.washout_ms, None, &mut r)?;
        rollout(network, &init, cfg.symbol, steps)
    };
    let targets = SampleMatrix::from_flat(
        t_peak.len(),
        (0..steps)
            .flat_map(|i| t_peak.iter().map(move |&tp| pulse(i as f64 * dt, tp)))
            .collect(),
    )?;

    let grams: Vec<Gram> = (0..cfg.n_train_trials)
        .into_par_iter()
        .map(|k| {
            let x = record(k)?;
            let mut g = Gram::new(n, t_peak.len());
            g.add(x.as_flat(), targets.as_flat(), dt);
            Ok(g)
        })
        .collect::<Result<_>>()?;
    let mut gram = Gram::new(n, t_peak.len());
    for g in &grams {
        gram.merge(g);
    }
    drop(grams);
    let w = gram.ridge(cfg.ridge_alpha, "timer readout")?;

    let per_trial: Vec<Vec<f64>> = (0..cfg.n_test_trials)
        .into_par_iter()
        .map(|k| {
            let x = record(cfg.n_train_trials + k)?;
            let mut outs = vec![vec![0.0; steps]; t_peak.len()];
            for (i, row) in x.rows().enumerate() {
                for (p, out) in outs.iter_mut().enumerate() {
                    out[i] = w.column(p).iter().zip(row).map(|(a, b)| a * b).sum();
                }
            }
            Ok(outs
                .iter()
                .enumerate()
                .map(|(p, out)| {
                    let tgt: Vec<f64> = (0..steps).map(|i| targets.row(i)[p]).collect();
                    r_squared(out, &tgt)
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let r2: Vec<f64> = (0..t_peak.len())
        .map(|p| per_trial.iter().map(|v| v[p]).sum::<f64>() / per_trial.len() as f64)
        .collect();
    let capacity = timer_capacity(t_peak, &r2)?;
    Ok(TimerReport {
        t_peak: t_peak.to_vec(),
        r2,
        capacity,
    })
}
