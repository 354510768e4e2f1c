//! Innate training: record each symbol's chaotic response of the untrained
//! network, then adjust half of the chaotic rows by recursive least squares
//! until fresh rollouts reproduce those responses. Weights change only on the
//! existing sparsity pattern.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Network, State};
use crate::error::{Error, Result};
use crate::linalg::SampleMatrix;
use crate::rng::{self, tag};

/// Per-symbol target trajectories recorded after a switch at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct InnateTargets {
    pub l_innate_ms: f64,
    pub dt: f64,
    /// Washed-out state each recording started from.
    pub initial: Vec<State>,
    /// Row `k` is the target state at `k * dt`.
    pub trajectories: Vec<SampleMatrix>,
}

impl InnateTargets {
    pub fn n_symbols(&self) -> usize {
        self.trajectories.len()
    }

    pub fn n_steps(&self) -> usize {
        self.trajectories.first().map_or(0, SampleMatrix::n_rows)
    }
}

/// Record the untrained network's response to each symbol after a washout
/// under zero input.
pub fn record_innate_targets(
    network: &Network,
    l_innate_ms: f64,
    washout_ms: f64,
    seed: u64,
) -> Result<InnateTargets> {
    let steps = network.config().steps(l_innate_ms);
    if steps == 0 {
        return Err(Error::InvalidArgument(
            "L_innate must cover at least one step".into(),
        ));
    }
    let mut initial = Vec::with_capacity(network.n_symbols());
    let mut trajectories = Vec::with_capacity(network.n_symbols());
    for s in 0..network.n_symbols() {
        let mut r = rng::stream(seed, tag::TARGETS, s as u64);
        let x0 = network.washout(washout_ms, None, &mut r)?;
        trajectories.push(rollout(network, &x0, s, steps)?);
        initial.push(x0);
    }
    Ok(InnateTargets {
        l_innate_ms,
        dt: network.config().dt,
        initial,
        trajectories,
    })
}

/// States at `0, dt, …, (steps-1) dt` under a constant symbol.
pub fn rollout(
    network: &Network,
    initial: &State,
    symbol: usize,
    steps: usize,
) -> Result<SampleMatrix> {
    let mut out = SampleMatrix::with_capacity(network.n_total(), steps);
    let mut state = initial.clone();
    let mut scratch = Vec::new();
    for _ in 0..steps {
        out.push_row(&state.x);
        network.step_in_place(&mut state, Some(symbol), &mut scratch)?;
    }
    Ok(out)
}

/// One recursive-least-squares step on a row-major `k × k` matrix `p`.
///
/// Writes the weight decrement `e * P' x = e * P x / (1 + xᵀ P x)` into `dj`
/// and replaces `p` by `P' = P - (P x)(P x)ᵀ / (1 + xᵀ P x)`. `px` is scratch of length `k`.
pub fn rls_update_in_place(
    p: &mut [f64],
    x: &[f64],
    e: f64,
    px: &mut [f64],
    dj: &mut [f64],
) -> Result<()> {
    let k = x.len();
    debug_assert_eq!(p.len(), k * k);
    for (j, out) in px.iter_mut().enumerate().take(k) {
        let row = &p[j * k..(j + 1) * k];
        *out = row.iter().zip(x).map(|(a, b)| a * b).sum();
    }
    let denom = 1.0 + x.iter().zip(px.iter()).map(|(a, b)| a * b).sum::<f64>();
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(Error::Internal(format!(
            "RLS denominator {denom} is not positive; P lost positive definiteness"
        )));
    }
    for j in 0..k {
        let c = px[j] / denom;
        dj[j] = e * c;
        let row = &mut p[j * k..(j + 1) * k];
        for (pjl, &pl) in row.iter_mut().zip(px.iter()) {
            *pjl -= c * pl;
        }
    }
    Ok(())
}

/// Matrix form of [`rls_update_in_place`]: returns `(ΔJ_row, P')`.
pub fn rls_update(p: &DMatrix<f64>, x: &[f64], e: f64) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let k = x.len();
    if p.shape() != (k, k) {
        return Err(Error::InvalidArgument("P and x dimensions differ".into()));
    }
    let mut flat: Vec<f64> = p.transpose().as_slice().to_vec();
    let mut px = vec![0.0; k];
    let mut dj = vec![0.0; k];
    rls_update_in_place(&mut flat, x, e, &mut px, &mut dj)?;
    Ok((dj, DMatrix::from_row_slice(k, k, &flat)))
}

/// Inverse-correlation matrices of the trained chaotic rows.
#[derive(Debug, Clone, PartialEq)]
pub struct RlsState {
    /// Trained chaotic-network node indices, sorted.
    pub trained: Vec<usize>,
    /// Row-major `|B(i)| × |B(i)|` matrix per trained node.
    pub p: Vec<Vec<f64>>,
}

impl RlsState {
    pub fn new(network: &Network, trained: Vec<usize>) -> Self {
        let p = trained
            .iter()
            .map(|&i| {
                let k = network.j_ch().row_cols(i).len();
                let mut m = vec![0.0; k * k];
                for d in 0..k {
                    m[d * k + d] = 1.0;
                }
                m
            })
            .collect();
        Self { trained, p }
    }

    pub fn p_matrix(&self, idx: usize) -> DMatrix<f64> {
        let k = (self.p[idx].len() as f64).sqrt().round() as usize;
        DMatrix::from_row_slice(k, k, &self.p[idx])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InnateConfig {
    pub epochs: usize,
    /// Apply updates on every `update_stride`-th sample.
    pub update_stride: usize,
    pub washout_ms: f64,
    /// Fraction of chaotic nodes whose incoming weights are trained.
    pub trained_fraction: f64,
    /// Fixed held-out washouts per symbol used to score each epoch.
    pub eval_trials: usize,
    /// Trials for the before/after NMSE in the report.
    pub nmse_trials: usize,
}

impl Default for InnateConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            update_stride: 2,
            washout_ms: 1000.0,
            trained_fraction: 0.5,
            eval_trials: 3,
            nmse_trials: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Held-out cost after each epoch; `inf` marks a diverged epoch.
    pub epoch_costs: Vec<f64>,
    /// Held-out cost of the untrained network.
    pub initial_cost: f64,
    /// 1-based index of the checkpointed epoch.
    pub best_epoch: Option<usize>,
    pub best_cost: f64,
    pub nmse_before: f64,
    pub nmse_after: f64,
    pub trained_nodes: usize,
}

/// Sum over time of `‖x − target‖² dt`, chaotic and input coordinates alike.
fn trajectory_cost(network: &Network, x0: &State, s: usize, target: &SampleMatrix) -> Result<f64> {
    let dt = network.config().dt;
    let mut state = x0.clone();
    let mut scratch = Vec::new();
    let mut cost = 0.0;
    for row in target.rows() {
        cost += state
            .x
            .iter()
            .zip(row)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            * dt;
        network.step_in_place(&mut state, Some(s), &mut scratch)?;
    }
    Ok(cost)
}

fn held_out_cost(network: &Network, targets: &InnateTargets, eval: &[Vec<State>]) -> f64 {
    let mut total = 0.0;
    for (s, states) in eval.iter().enumerate() {
        let mut sum = 0.0;
        for x0 in states {
            match trajectory_cost(network, x0, s, &targets.trajectories[s]) {
                Ok(c) => sum += c,
                Err(_) => return f64::INFINITY,
            }
        }
        total += sum / states.len().max(1) as f64;
    }
    total
}

/// Run innate training and return the network carrying the best epoch's
/// chaotic matrix.
///
/// Each epoch starts every symbol from a fresh zero-input washout, runs the
/// symbols in lockstep over `[0, L_innate)`, and on every
/// `update_stride`-th sample applies an RLS step to each trained row with
/// error `x_i(t) − x_target,i(t)`. `P` matrices persist across epochs and
/// symbols. An epoch that diverges is rolled back and scored `inf`.
pub fn innate_train(
    network: &Network,
    targets: &InnateTargets,
    cfg: &InnateConfig,
) -> Result<(Network, TrainReport)> {
    if targets.n_symbols() != network.n_symbols() {
        return Err(Error::InvalidArgument(
            "targets and network disagree on symbol count".into(),
        ));
    }
    if targets
        .trajectories
        .iter()
        .any(|t| t.n_cols() != network.n_total())
    {
        return Err(Error::InvalidArgument(
            "targets were recorded on a different network size".into(),
        ));
    }
    if cfg.update_stride == 0 {
        return Err(Error::config("update_stride", "must be >= 1"));
    }
    let seed = network.config().seed;
    let n_in = network.config().n_in;
    let n_ch = network.config().n_ch;
    let m = network.n_symbols();
    let steps = targets.n_steps();

    let n_trained = ((n_ch as f64) * cfg.trained_fraction).floor() as usize;
    let mut r = rng::stream(seed, tag::TRAINED_SET, 0);
    let mut trained: Vec<usize> = sample(&mut r, n_ch, n_trained).into_vec();
    trained.sort_unstable();

    let eval: Vec<Vec<State>> = (0..m)
        .map(|s| {
            (0..cfg.eval_trials.max(1))
                .map(|k| {
                    let mut r = rng::stream(seed, tag::INNATE_EVAL, (s * 1000 + k) as u64);
                    network.washout(cfg.washout_ms, None, &mut r)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let initial_cost = held_out_cost(network, targets, &eval);
    let nmse_before = if cfg.nmse_trials > 0 {
        nmse(network, targets, cfg.nmse_trials, cfg.washout_ms, seed)?
    } else {
        f64::NAN
    };

    let mut net = network.clone();
    let mut rls = RlsState::new(&net, trained.clone());
    let mut best: Option<(usize, f64, crate::linalg::Csr)> = None;
    let mut epoch_costs = Vec::with_capacity(cfg.epochs);

    let max_k = trained
        .iter()
        .map(|&i| net.j_ch().row_cols(i).len())
        .max()
        .unwrap_or(0);
    let mut px = vec![0.0; max_k];
    let mut dj = vec![0.0; max_k];
    let mut xb = vec![0.0; max_k];
    let mut scratch = Vec::new();

    for epoch in 0..cfg.epochs {
        let j_backup = net.j_ch().clone();
        let p_backup = rls.p.clone();
        let mut states: Vec<State> = (0..m)
            .map(|s| {
                let mut r = rng::stream(seed, tag::INNATE_EPOCH, (epoch * m + s) as u64);
                net.washout(cfg.washout_ms, None, &mut r)
            })
            .collect::<Result<_>>()?;

        let mut failed = false;
        'time: for count in 0..steps {
            if count % cfg.update_stride == cfg.update_stride - 1 {
                for (s, state) in states.iter().enumerate() {
                    let target = targets.trajectories[s].row(count);
                    let x_ch = state.x_ch();
                    for (idx, &i) in rls.trained.iter().enumerate() {
                        let e = x_ch[i] - target[n_in + i];
                        let cols = net.j_ch().row_cols(i);
                        let k = cols.len();
                        if k == 0 {
                            continue;
                        }
                        for (dst, &c) in xb.iter_mut().zip(cols) {
                            *dst = x_ch[c];
                        }
                        if rls_update_in_place(
                            &mut rls.p[idx],
                            &xb[..k],
                            e,
                            &mut px[..k],
                            &mut dj[..k],
                        )
                        .is_err()
                        {
                            failed = true;
                            break 'time;
                        }
                        for (w, d) in net.j_ch_mut().row_values_mut(i).iter_mut().zip(&dj[..k]) {
                            *w -= d;
                        }
                    }
                }
            }
            for (s, state) in states.iter_mut().enumerate() {
                if net.step_in_place(state, Some(s), &mut scratch).is_err() {
                    failed = true;
                    break 'time;
                }
            }
        }

        let cost = if failed {
            f64::INFINITY
        } else {
            held_out_cost(&net, targets, &eval)
        };
        if !cost.is_finite() {
            net.set_j_ch(j_backup)?;
            rls.p = p_backup;
        } else if best.as_ref().is_none_or(|b| cost < b.1) {
            best = Some((epoch + 1, cost, net.j_ch().clone()));
        }
        epoch_costs.push(cost);
    }

    let (best_epoch, best_cost) = match best {
        Some((e, c, j)) => {
            net.set_j_ch(j)?;
            (Some(e), c)
        }
        None => {
            net = network.clone();
            (None, initial_cost)
        }
    };
    let nmse_after = if cfg.nmse_trials > 0 && best_epoch.is_some() {
        nmse(&net, targets, cfg.nmse_trials, cfg.washout_ms, seed)?
    } else {
        nmse_before
    };
    Ok((
        net,
        TrainReport {
            epoch_costs,
            initial_cost,
            best_epoch,
            best_cost,
            nmse_before,
            nmse_after,
            trained_nodes: trained.len(),
        },
    ))
}

/// `∫‖x − target‖² dt / ∫‖target‖² dt` for two equally sized recordings.
pub fn trajectory_nmse(x: &SampleMatrix, target: &SampleMatrix) -> Result<f64> {
    if x.n_rows() != target.n_rows() || x.n_cols() != target.n_cols() {
        return Err(Error::InvalidArgument(
            "rollout and target shapes differ".into(),
        ));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, b) in x.as_flat().iter().zip(target.as_flat()) {
        num += (a - b) * (a - b);
        den += b * b;
    }
    if den == 0.0 {
        return Err(Error::InvalidArgument(
            "target trajectory has zero norm".into(),
        ));
    }
    Ok(num / den)
}

/// Mean NMSE between fresh rollouts and the recorded targets, averaged over
/// `n_trials` washouts per symbol and over symbols.
pub fn nmse(
    network: &Network,
    targets: &InnateTargets,
    n_trials: usize,
    washout_ms: f64,
    seed: u64,
) -> Result<f64> {
    let per: Vec<Result<f64>> = rollout_jobs(targets.n_symbols(), n_trials)
        .into_par_iter()
        .map(|(s, k)| {
            let mut r = rng::stream(seed, tag::NMSE, (s * 100_000 + k) as u64);
            let x0 = network.washout(washout_ms, None, &mut r)?;
            let x = rollout(network, &x0, s, targets.n_steps())?;
            trajectory_nmse(&x, &targets.trajectories[s])
        })
        .collect();
    let vals = per.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(vals.iter().sum::<f64>() / vals.len().max(1) as f64)
}

/// Mean `‖x(t_end) − x_target(t_end)‖` at the last target sample over fresh
/// washouts, a measure of how far rollouts spread by the end of the window.
pub fn endpoint_divergence(
    network: &Network,
    targets: &InnateTargets,
    n_trials: usize,
    washout_ms: f64,
    seed: u64,
) -> Result<f64> {
    let last = targets.n_steps() - 1;
    let per: Vec<Result<f64>> = rollout_jobs(targets.n_symbols(), n_trials)
        .into_par_iter()
        .map(|(s, k)| {
            let mut r = rng::stream(seed, tag::NMSE, (s * 100_000 + k) as u64);
            let x0 = network.washout(washout_ms, None, &mut r)?;
            let x = rollout(network, &x0, s, targets.n_steps())?;
            Ok(crate::linalg::dist(
                x.row(last),
                targets.trajectories[s].row(last),
            ))
        })
        .collect();
    let vals = per.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(vals.iter().sum::<f64>() / vals.len().max(1) as f64)
}

fn rollout_jobs(m: usize, n_trials: usize) -> Vec<(usize, usize)> {
    (0..m)
        .flat_map(|s| (0..n_trials).map(move |k| (s, k)))
        .collect()
}
