//! Softmax feedback classifier and the closed-loop system it drives.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Network, State, Trajectory};
use crate::error::{Error, Result};
use crate::linalg::SampleMatrix;
use crate::optim::{self, LbfgsConfig};
use crate::readout::Readout;
use crate::rng::{self, tag};
use crate::schedule::{SymbolId, SymbolSchedule};

/// Linear scores `w_sᵀ [x; 1]` and argmax decision.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    /// `M × (n_state [+ 1])`; the last column is the bias when `bias` is set.
    pub weights: DMatrix<f64>,
    pub bias: bool,
}

impl Classifier {
    pub fn new(weights: DMatrix<f64>, bias: bool) -> Result<Self> {
        if weights.nrows() == 0 {
            return Err(Error::InvalidArgument(
                "classifier needs at least one symbol".into(),
            ));
        }
        if bias && weights.ncols() == 0 {
            return Err(Error::InvalidArgument("bias column missing".into()));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidArgument(
                "classifier weights must be finite".into(),
            ));
        }
        Ok(Self { weights, bias })
    }

    /// Always picks `symbol`, whatever the state.
    pub fn constant(n_symbols: usize, n_state: usize, symbol: SymbolId) -> Result<Self> {
        if symbol >= n_symbols {
            return Err(Error::InvalidArgument(format!(
                "symbol {symbol} out of range"
            )));
        }
        let mut w = DMatrix::zeros(n_symbols, n_state + 1);
        w[(symbol, n_state)] = 1.0;
        Self::new(w, true)
    }

    pub fn n_symbols(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_state(&self) -> usize {
        self.weights.ncols() - usize::from(self.bias)
    }

    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_symbols()).map(|s| self.score(s, x)).collect()
    }

    fn score(&self, s: usize, x: &[f64]) -> f64 {
        let row = self.weights.row(s);
        let mut acc: f64 = x.iter().zip(row.iter()).map(|(a, b)| a * b).sum();
        if self.bias {
            acc += row[x.len()];
        }
        acc
    }

    /// Argmax symbol; ties go to the lowest id.
    pub fn classify(&self, x: &[f64]) -> SymbolId {
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for s in 0..self.n_symbols() {
            let v = self.score(s, x);
            if v > best_score {
                best = s;
                best_score = v;
            }
        }
        best
    }

    pub fn accuracy(&self, data: &TrainingSet) -> f64 {
        if data.labels.is_empty() {
            return f64::NAN;
        }
        let hits = data
            .states
            .rows()
            .zip(&data.labels)
            .filter(|(x, &y)| self.classify(x) == y)
            .count();
        hits as f64 / data.labels.len() as f64
    }
}

/// Open-loop states with the symbol that was driving the network at each row.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub states: SampleMatrix,
    pub labels: Vec<SymbolId>,
    pub n_symbols: usize,
    /// Integration time represented by one row (`dt × stride`).
    pub sample_weight: f64,
}

impl TrainingSet {
    pub fn new(
        states: SampleMatrix,
        labels: Vec<SymbolId>,
        n_symbols: usize,
        sample_weight: f64,
    ) -> Result<Self> {
        if states.n_rows() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} states but {} labels",
                states.n_rows(),
                labels.len()
            )));
        }
        if labels.iter().any(|&s| s >= n_symbols) {
            return Err(Error::InvalidArgument("label out of range".into()));
        }
        Ok(Self {
            states,
            labels,
            n_symbols,
            sample_weight,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Washout under zero input, then one open-loop pass over `schedule`,
/// keeping every `stride`-th state.
pub fn record_training_set(
    network: &Network,
    schedule: &SymbolSchedule,
    stride: usize,
    washout_ms: f64,
    seed: u64,
) -> Result<TrainingSet> {
    let mut rng = rng::stream(seed, tag::TRAINING_SET, 0);
    let initial = network.washout(washout_ms, None, &mut rng)?;
    let traj = network.run_open_loop(schedule, &initial, stride)?;
    TrainingSet::new(
        traj.states,
        traj.symbols,
        network.n_symbols(),
        network.config().dt * stride as f64,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub l2_penalty: f64,
    pub bias: bool,
    /// Optimize in z-scored feature coordinates (requires `bias`); the
    /// returned weights act on raw states.
    pub standardize: bool,
    pub optimizer: LbfgsConfig,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            l2_penalty: 1e-6,
            bias: true,
            standardize: true,
            optimizer: LbfgsConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub loss: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub termination: String,
    pub train_accuracy: f64,
}

const BLOCK_ROWS: usize = 2048;

/// Weighted multinomial cross-entropy plus `l2 ‖W‖²`, evaluated over row
/// blocks of the design matrix.
pub struct CrossEntropy {
    blocks: Vec<(DMatrix<f64>, Vec<SymbolId>)>,
    n_symbols: usize,
    n_features: usize,
    weight: f64,
    l2: f64,
}

impl CrossEntropy {
    pub fn new(data: &TrainingSet, bias: bool, l2: f64) -> Self {
        let n_state = data.states.n_cols();
        let n_features = n_state + usize::from(bias);
        let n = data.len();
        let blocks = (0..n)
            .step_by(BLOCK_ROWS)
            .map(|start| {
                let end = (start + BLOCK_ROWS).min(n);
                let mut b = DMatrix::zeros(end - start, n_features);
                for (r, i) in (start..end).enumerate() {
                    for (c, &v) in data.states.row(i).iter().enumerate() {
                        b[(r, c)] = v;
                    }
                    if bias {
                        b[(r, n_state)] = 1.0;
                    }
                }
                (b, data.labels[start..end].to_vec())
            })
            .collect();
        Self {
            blocks,
            n_symbols: data.n_symbols,
            n_features,
            weight: data.sample_weight,
            l2,
        }
    }

    pub fn n_params(&self) -> usize {
        self.n_symbols * self.n_features
    }

    /// Loss at row-major flattened weights `w`; writes the gradient into `grad`.
    pub fn eval(&self, w: &[f64], grad: &mut [f64]) -> f64 {
        let wm = DMatrix::from_row_slice(self.n_symbols, self.n_features, w);
        let parts: Vec<(f64, DMatrix<f64>)> = self
            .blocks
            .par_iter()
            .map(|(b, labels)| {
                let mut z = b * wm.transpose();
                let mut loss = 0.0;
                for (r, &y) in labels.iter().enumerate() {
                    let mut row = z.row_mut(r);
                    let max = row.max();
                    let zy = row[y];
                    let mut sum = 0.0;
                    for v in row.iter_mut() {
                        *v = (*v - max).exp();
                        sum += *v;
                    }
                    loss += sum.ln() + max - zy;
                    for v in row.iter_mut() {
                        *v /= sum;
                    }
                    row[y] -= 1.0;
                }
                (loss, z.transpose() * b)
            })
            .collect();
        let mut loss = 0.0;
        let mut g = DMatrix::zeros(self.n_symbols, self.n_features);
        for (l, gb) in parts {
            loss += l;
            g += gb;
        }
        loss *= self.weight;
        g *= self.weight;
        for s in 0..self.n_symbols {
            for j in 0..self.n_features {
                let wv = wm[(s, j)];
                loss += self.l2 * wv * wv;
                grad[s * self.n_features + j] = g[(s, j)] + 2.0 * self.l2 * wv;
            }
        }
        loss
    }
}

/// Fit the classifier by L-BFGS from zero weights.
pub fn train_classifier(
    data: &TrainingSet,
    cfg: &ClassifierConfig,
) -> Result<(Classifier, FitReport)> {
    train_classifier_from(data, cfg, None)
}

/// As [`train_classifier`], optionally starting from flattened weights `start`.
pub fn train_classifier_from(
    data: &TrainingSet,
    cfg: &ClassifierConfig,
    start: Option<&[f64]>,
) -> Result<(Classifier, FitReport)> {
    if !(cfg.l2_penalty >= 0.0) {
        return Err(Error::config("l2_penalty", "must be >= 0"));
    }
    let mut counts = vec![0usize; data.n_symbols];
    for &s in &data.labels {
        counts[s] += 1;
    }
    if let Some(s) = counts.iter().position(|&c| c == 0) {
        return Err(Error::InvalidArgument(format!(
            "symbol {} has no training samples",
            crate::schedule::symbol_label(s)
        )));
    }
    let scaling = (cfg.standardize && cfg.bias).then(|| column_moments(&data.states));
    let objective = match &scaling {
        Some((mean, std)) => {
            let mut z = SampleMatrix::with_capacity(data.states.n_cols(), data.len());
            let mut row = vec![0.0; data.states.n_cols()];
            for x in data.states.rows() {
                for (j, r) in row.iter_mut().enumerate() {
                    *r = (x[j] - mean[j]) / std[j];
                }
                z.push_row(&row);
            }
            let zs = TrainingSet::new(z, data.labels.clone(), data.n_symbols, data.sample_weight)?;
            CrossEntropy::new(&zs, true, cfg.l2_penalty)
        }
        None => CrossEntropy::new(data, cfg.bias, cfg.l2_penalty),
    };
    let mut w = match start {
        Some(s) if s.len() == objective.n_params() => s.to_vec(),
        Some(_) => {
            return Err(Error::InvalidArgument(
                "start weights have the wrong length".into(),
            ))
        }
        None => vec![0.0; objective.n_params()],
    };
    // The optimizer sees the loss per unit of sample weight so that its
    // tolerances and first step do not depend on the size of the set.
    let scale = data.sample_weight * data.len() as f64;
    let opt = optim::minimize(
        |w, g| {
            let v = objective.eval(w, g);
            g.iter_mut().for_each(|d| *d /= scale);
            v / scale
        },
        &mut w,
        &cfg.optimizer,
    )?;
    let mut weights = DMatrix::from_row_slice(data.n_symbols, objective.n_features, &w);
    if let Some((mean, std)) = &scaling {
        let n = mean.len();
        for s in 0..data.n_symbols {
            let mut shift = 0.0;
            for j in 0..n {
                weights[(s, j)] /= std[j];
                shift += weights[(s, j)] * mean[j];
            }
            weights[(s, n)] -= shift;
        }
    }
    let classifier = Classifier::new(weights, cfg.bias)?;
    let train_accuracy = classifier.accuracy(data);
    Ok((
        classifier,
        FitReport {
            loss: opt.loss * scale,
            grad_norm: opt.grad_norm * scale,
            iterations: opt.iterations,
            converged: opt.converged,
            termination: opt.termination,
            train_accuracy,
        },
    ))
}

/// Per-column mean and standard deviation; constant columns get unit scale.
fn column_moments(x: &SampleMatrix) -> (Vec<f64>, Vec<f64>) {
    let d = x.n_cols();
    let n = x.n_rows().max(1) as f64;
    let mut mean = vec![0.0; d];
    for r in x.rows() {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for r in x.rows() {
        for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std = var
        .into_iter()
        .map(|s| {
            let sd = (s / n).sqrt();
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    (mean, std)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchEvent {
    pub t_switch: f64,
    pub from: SymbolId,
    pub to: SymbolId,
}

pub fn write_switch_csv<W: std::io::Write>(w: W, events: &[SwitchEvent]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t_switch", "from", "to"])?;
    for e in events {
        out.serialize((e.t_switch, e.from, e.to))?;
    }
    out.flush()?;
    Ok(())
}

/// Network whose input symbol is chosen by a classifier reading its own state.
#[derive(Debug, Clone, Copy)]
pub struct ClosedLoop<'a> {
    pub network: &'a Network,
    pub classifier: &'a Classifier,
    /// Steps a new symbol is held before the classifier is consulted again.
    pub hold_steps: usize,
}

/// Full state of the closed loop: network state plus the discrete symbol state.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopState {
    pub state: State,
    pub symbol: SymbolId,
    pub hold_left: usize,
}

impl<'a> ClosedLoop<'a> {
    pub fn new(network: &'a Network, classifier: &'a Classifier, hold_ms: f64) -> Result<Self> {
        if classifier.n_state() != network.n_total() {
            return Err(Error::InvalidArgument(format!(
                "classifier expects {} state dims, network has {}",
                classifier.n_state(),
                network.n_total()
            )));
        }
        if classifier.n_symbols() != network.n_symbols() {
            return Err(Error::InvalidArgument(format!(
                "classifier has {} symbols, network {}",
                classifier.n_symbols(),
                network.n_symbols()
            )));
        }
        if !(hold_ms >= 0.0) {
            return Err(Error::config("hold_ms", "must be >= 0"));
        }
        Ok(Self {
            network,
            classifier,
            hold_steps: network.config().steps(hold_ms),
        })
    }

    pub fn start(&self, state: State) -> LoopState {
        let symbol = self.classifier.classify(&state.x);
        LoopState {
            state,
            symbol,
            hold_left: 0,
        }
    }

    /// Update the symbol from the current state (unless holding).
    pub fn decide(&self, ls: &mut LoopState) -> Option<SwitchEvent> {
        if ls.hold_left > 0 {
            ls.hold_left -= 1;
            return None;
        }
        let s = self.classifier.classify(&ls.state.x);
        if s == ls.symbol {
            return None;
        }
        let ev = SwitchEvent {
            t_switch: ls.state.t,
            from: ls.symbol,
            to: s,
        };
        ls.symbol = s;
        ls.hold_left = self.hold_steps;
        Some(ev)
    }

    /// One closed-loop step: decide the symbol, then integrate under it.
    pub fn step(&self, ls: &mut LoopState, scratch: &mut Vec<f64>) -> Result<Option<SwitchEvent>> {
        let ev = self.decide(ls);
        self.network
            .step_in_place(&mut ls.state, Some(ls.symbol), scratch)?;
        Ok(ev)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopRun {
    pub trajectory: Trajectory,
    /// Readout outputs at the recorded rows, when a readout was supplied.
    pub outputs: Option<SampleMatrix>,
    pub switches: Vec<SwitchEvent>,
    pub final_state: LoopState,
}

/// Run the closed loop for `duration_ms` from `initial` (time reset to 0),
/// recording every `record_stride`-th state with the symbol driving that step.
pub fn run_closed_loop(
    system: &ClosedLoop<'_>,
    readout: Option<&Readout>,
    initial: &State,
    duration_ms: f64,
    record_stride: usize,
) -> Result<ClosedLoopRun> {
    let mut state = initial.clone();
    state.t = 0.0;
    continue_closed_loop(
        system,
        readout,
        system.start(state),
        duration_ms,
        record_stride,
    )
}

/// As [`run_closed_loop`], resuming from a full loop state without resetting time.
pub fn continue_closed_loop(
    system: &ClosedLoop<'_>,
    readout: Option<&Readout>,
    mut ls: LoopState,
    duration_ms: f64,
    record_stride: usize,
) -> Result<ClosedLoopRun> {
    if record_stride == 0 {
        return Err(Error::InvalidArgument("record_stride must be >= 1".into()));
    }
    let net = system.network;
    if let Some(r) = readout {
        if r.w_out.ncols() != net.n_total() {
            return Err(Error::InvalidArgument("readout dimension mismatch".into()));
        }
    }
    let steps = net.config().steps(duration_ms);
    let mut traj = Trajectory::new(net.n_total());
    let mut outputs = readout.map(|r| SampleMatrix::new(r.d_out()));
    let mut out_buf = vec![0.0; readout.map_or(0, Readout::d_out)];
    let mut switches = Vec::new();
    let mut scratch = Vec::with_capacity(net.n_total());
    for k in 0..steps {
        if let Some(ev) = system.decide(&mut ls) {
            switches.push(ev);
        }
        if k % record_stride == 0 {
            traj.push(&ls.state, ls.symbol);
            if let (Some(r), Some(o)) = (readout, outputs.as_mut()) {
                r.output_into(&ls.state.x, &mut out_buf);
                o.push_row(&out_buf);
            }
        }
        net.step_in_place(&mut ls.state, Some(ls.symbol), &mut scratch)?;
    }
    Ok(ClosedLoopRun {
        trajectory: traj,
        outputs,
        switches,
        final_state: ls,
    })
}
