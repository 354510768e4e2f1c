//! Output targets and the shared linear readout fitted by ridge regression.

use nalgebra::{DMatrix, DVectorView};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::Network;
use crate::error::{Error, Result};
use crate::innate::rollout;
use crate::linalg::{Gram, SampleMatrix};
use crate::rng::{self, tag};
use crate::schedule::SymbolId;

/// Parameters of a target signal. Serialized with a `kind` tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetKind {
    /// `(amp_x sin(a ω t + phase), amp_y sin(b ω t))`, `ω = 2π / period_ms`.
    Lissajous {
        amp_x: f64,
        amp_y: f64,
        a: f64,
        b: f64,
        phase: f64,
        /// `None` uses the target length.
        period_ms: Option<f64>,
    },
    /// x and z coordinates of the Lorenz system, stretched over the target
    /// length and normalized to `[-1, 1]²`.
    LorenzXz {
        /// Model time spanned by the target.
        model_time: f64,
        /// Model time discarded before recording.
        transient: f64,
    },
    /// Constant-speed traversal of a closed polyline.
    PolylineTrace { points: Vec<[f64; 2]> },
    /// `exp(-(t - t_peak)² / (2 width²))`.
    GaussianPulse { t_peak_ms: f64, width_ms: f64 },
}

impl TargetKind {
    pub fn lissajous(a: f64, b: f64, phase: f64) -> Self {
        TargetKind::Lissajous {
            amp_x: 1.0,
            amp_y: 1.0,
            a,
            b,
            phase,
            period_ms: None,
        }
    }

    pub fn lorenz() -> Self {
        TargetKind::LorenzXz {
            model_time: 10.0,
            transient: 5.0,
        }
    }

    pub fn pulse(t_peak_ms: f64) -> Self {
        TargetKind::GaussianPulse {
            t_peak_ms,
            width_ms: 10.0,
        }
    }

    /// An "@" glyph: an inner loop joined to an open outer spiral.
    pub fn at_sign() -> Self {
        let mut points = Vec::new();
        let ring =
            |r: f64, a0: f64, a1: f64, cx: f64, cy: f64, n: usize, out: &mut Vec<[f64; 2]>| {
                for k in 0..=n {
                    let a = a0 + (a1 - a0) * k as f64 / n as f64;
                    out.push([cx + r * a.cos(), cy + r * a.sin()]);
                }
            };
        use std::f64::consts::PI;
        ring(0.35, 0.0, 2.0 * PI, 0.0, 0.0, 24, &mut points);
        points.push([0.35, -0.3]);
        points.push([0.6, -0.25]);
        ring(0.9, -0.3, 1.75 * PI, 0.0, 0.0, 40, &mut points);
        TargetKind::PolylineTrace { points }
    }

    pub fn dim(&self) -> usize {
        match self {
            TargetKind::GaussianPulse { .. } => 1,
            _ => 2,
        }
    }
}

/// Sampled target: row `k` is the value at `k * dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSignal {
    pub kind: TargetKind,
    pub dt: f64,
    pub samples: SampleMatrix,
}

impl TargetSignal {
    pub fn dim(&self) -> usize {
        self.samples.n_cols()
    }

    pub fn len(&self) -> usize {
        self.samples.n_rows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        write_series_csv(w, self.dt, &self.samples)
    }
}

pub(crate) fn write_series_csv<W: std::io::Write>(w: W, dt: f64, m: &SampleMatrix) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["t".to_string()];
    header.extend((0..m.n_cols()).map(|c| format!("y_{c}")));
    wtr.write_record(&header)?;
    for (k, row) in m.rows().enumerate() {
        let mut rec = vec![format!("{}", k as f64 * dt)];
        rec.extend(row.iter().map(|v| format!("{v}")));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

fn lorenz_rhs(p: [f64; 3]) -> [f64; 3] {
    const SIGMA: f64 = 10.0;
    const RHO: f64 = 28.0;
    const BETA: f64 = 8.0 / 3.0;
    [
        SIGMA * (p[1] - p[0]),
        p[0] * (RHO - p[2]) - p[1],
        p[0] * p[1] - BETA * p[2],
    ]
}

fn rk4(p: [f64; 3], h: f64) -> [f64; 3] {
    let add =
        |a: [f64; 3], b: [f64; 3], s: f64| [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]];
    let k1 = lorenz_rhs(p);
    let k2 = lorenz_rhs(add(p, k1, h / 2.0));
    let k3 = lorenz_rhs(add(p, k2, h / 2.0));
    let k4 = lorenz_rhs(add(p, k3, h));
    [
        p[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        p[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        p[2] + h / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
    ]
}

const LORENZ_STEP: f64 = 0.01;

fn lorenz_xz(n: usize, model_time: f64, transient: f64) -> Vec<[f64; 2]> {
    let mut p = [1.0, 1.0, 1.0];
    let skip = (transient / LORENZ_STEP).round() as usize;
    for _ in 0..skip {
        p = rk4(p, LORENZ_STEP);
    }
    let total = (model_time / LORENZ_STEP).ceil() as usize + 1;
    let mut path = Vec::with_capacity(total + 1);
    path.push([p[0], p[2]]);
    for _ in 0..total {
        p = rk4(p, LORENZ_STEP);
        path.push([p[0], p[2]]);
    }
    let mut out: Vec<[f64; 2]> = (0..n)
        .map(|k| {
            let tm = model_time * k as f64 / n as f64 / LORENZ_STEP;
            let i = tm.floor() as usize;
            let f = tm - i as f64;
            let (a, b) = (path[i], path[i + 1]);
            [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])]
        })
        .collect();
    for c in 0..2 {
        let lo = out.iter().map(|p| p[c]).fold(f64::INFINITY, f64::min);
        let hi = out.iter().map(|p| p[c]).fold(f64::NEG_INFINITY, f64::max);
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        for p in &mut out {
            p[c] = if half > 0.0 { (p[c] - mid) / half } else { 0.0 };
        }
    }
    out
}

fn polyline(n: usize, points: &[[f64; 2]]) -> Result<Vec<[f64; 2]>> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("polyline has no points".into()));
    }
    let mut closed = points.to_vec();
    closed.push(points[0]);
    let seg: Vec<f64> = closed
        .windows(2)
        .map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt())
        .collect();
    let total: f64 = seg.iter().sum();
    if total == 0.0 {
        return Ok(vec![points[0]; n]);
    }
    let mut out = Vec::with_capacity(n);
    let mut i = 0;
    let mut start = 0.0;
    for k in 0..n {
        let s = total * k as f64 / n as f64;
        while i + 1 < seg.len() && start + seg[i] <= s {
            start += seg[i];
            i += 1;
        }
        let f = if seg[i] > 0.0 {
            (s - start) / seg[i]
        } else {
            0.0
        };
        let (a, b) = (closed[i], closed[i + 1]);
        out.push([a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])]);
    }
    Ok(out)
}

/// Sample `kind` on `[0, length_ms)` at resolution `dt`.
pub fn generate_target(kind: &TargetKind, length_ms: f64, dt: f64) -> Result<TargetSignal> {
    if !(dt > 0.0) || !(length_ms >= dt) {
        return Err(Error::InvalidArgument(format!(
            "target length {length_ms} ms must cover at least one step of {dt} ms"
        )));
    }
    let n = (length_ms / dt).round() as usize;
    let time = |k: usize| k as f64 * dt;
    let mut samples = SampleMatrix::with_capacity(kind.dim(), n);
    match kind {
        TargetKind::Lissajous {
            amp_x,
            amp_y,
            a,
            b,
            phase,
            period_ms,
        } => {
            let period = period_ms.unwrap_or(length_ms);
            if !(period > 0.0) {
                return Err(Error::InvalidArgument(
                    "Lissajous period must be > 0".into(),
                ));
            }
            let w = 2.0 * std::f64::consts::PI / period;
            for k in 0..n {
                let t = time(k);
                samples.push_row(&[amp_x * (a * w * t + phase).sin(), amp_y * (b * w * t).sin()]);
            }
        }
        TargetKind::LorenzXz {
            model_time,
            transient,
        } => {
            if !(*model_time > 0.0) || !(*transient >= 0.0) {
                return Err(Error::InvalidArgument(
                    "Lorenz model times must be positive".into(),
                ));
            }
            for p in lorenz_xz(n, *model_time, *transient) {
                samples.push_row(&p);
            }
        }
        TargetKind::PolylineTrace { points } => {
            for p in polyline(n, points)? {
                samples.push_row(&p);
            }
        }
        TargetKind::GaussianPulse {
            t_peak_ms,
            width_ms,
        } => {
            if !(*width_ms > 0.0) {
                return Err(Error::InvalidArgument("pulse width must be > 0".into()));
            }
            for k in 0..n {
                let d = time(k) - t_peak_ms;
                samples.push_row(&[(-(d * d) / (2.0 * width_ms * width_ms)).exp()]);
            }
        }
    }
    if samples.as_flat().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "target produced non-finite samples".into(),
        ));
    }
    Ok(TargetSignal {
        kind: kind.clone(),
        dt,
        samples,
    })
}

/// Linear map from the full state to a `d_out`-dimensional output.
#[derive(Debug, Clone, PartialEq)]
pub struct Readout {
    /// `d_out × n_state`.
    pub w_out: DMatrix<f64>,
    pub ridge_alpha: f64,
    pub l_out_ms: f64,
}

impl Readout {
    pub fn d_out(&self) -> usize {
        self.w_out.nrows()
    }

    pub fn output(&self, x: &[f64]) -> Vec<f64> {
        (&self.w_out * DVectorView::from_slice(x, x.len()))
            .as_slice()
            .to_vec()
    }

    pub fn output_into(&self, x: &[f64], out: &mut [f64]) {
        let xv = DVectorView::from_slice(x, x.len());
        for (r, o) in out.iter_mut().enumerate() {
            *o = self.w_out.row(r).transpose().dot(&xv);
        }
    }

    pub fn apply(&self, states: &SampleMatrix) -> SampleMatrix {
        let mut out = SampleMatrix::with_capacity(self.d_out(), states.n_rows());
        let mut y = vec![0.0; self.d_out()];
        for row in states.rows() {
            self.output_into(row, &mut y);
            out.push_row(&y);
        }
        out
    }
}

/// A recorded rollout labelled with the symbol it followed.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRollout {
    pub symbol: SymbolId,
    pub states: SampleMatrix,
}

/// Record `n_trials` rollouts of `length_ms` per symbol, each from a fresh
/// washout. Trial `k` of symbol `s` washes out under the `k`-th entry of the
/// cycle `[none, other symbols…]` so the readout sees switches from rest and
/// from every other symbol.
pub fn record_rollouts(
    network: &Network,
    length_ms: f64,
    n_trials: usize,
    washout_ms: f64,
    seed: u64,
    purpose: u64,
) -> Result<Vec<LabeledRollout>> {
    let m = network.n_symbols();
    let steps = network.config().steps(length_ms);
    let jobs: Vec<(usize, usize)> = (0..m)
        .flat_map(|s| (0..n_trials).map(move |k| (s, k)))
        .collect();
    jobs.into_par_iter()
        .map(|(s, k)| {
            let mut r = rng::stream(seed, purpose, (s * 100_000 + k) as u64);
            let prior = preceding_symbol(m, s, k);
            let x0 = network.washout(washout_ms, prior, &mut r)?;
            Ok(LabeledRollout {
                symbol: s,
                states: rollout(network, &x0, s, steps)?,
            })
        })
        .collect()
}

/// The washout input preceding trial `k` of symbol `s`: rest first, then the
/// other symbols in turn.
pub fn preceding_symbol(m: usize, s: SymbolId, k: usize) -> Option<SymbolId> {
    let others: Vec<SymbolId> = (0..m).filter(|&o| o != s).collect();
    let slot = k % (others.len() + 1);
    if slot == 0 {
        None
    } else {
        Some(others[slot - 1])
    }
}

/// Fit one readout shared by all symbols: solve `(XᵀX + αI) W = XᵀF` over the
/// pooled samples of every rollout.
pub fn train_readout(
    rollouts: &[LabeledRollout],
    targets: &[TargetSignal],
    ridge_alpha: f64,
) -> Result<Readout> {
    let first = rollouts
        .first()
        .ok_or_else(|| Error::InvalidArgument("no rollouts to train on".into()))?;
    let n = first.states.n_cols();
    let d_out = targets
        .first()
        .ok_or_else(|| Error::InvalidArgument("no targets".into()))?
        .dim();
    let l_steps = targets[0].len();
    if targets
        .iter()
        .any(|t| t.dim() != d_out || t.len() != l_steps)
    {
        return Err(Error::InvalidArgument(
            "targets differ in dimension or length".into(),
        ));
    }
    let mut gram = Gram::new(n, d_out);
    for r in rollouts {
        let target = targets
            .get(r.symbol)
            .ok_or_else(|| Error::InvalidArgument(format!("no target for symbol {}", r.symbol)))?;
        if r.states.n_rows() < l_steps {
            return Err(Error::InvalidArgument(format!(
                "rollout for symbol {} covers {} steps, target needs {l_steps}",
                r.symbol,
                r.states.n_rows()
            )));
        }
        gram.add(
            &r.states.as_flat()[..l_steps * n],
            target.samples.as_flat(),
            targets[0].dt,
        );
    }
    let w = gram.ridge(ridge_alpha, "readout ridge regression")?;
    Ok(Readout {
        w_out: w.transpose(),
        ridge_alpha,
        l_out_ms: l_steps as f64 * targets[0].dt,
    })
}

/// `Σ‖y − f‖² / Σ‖f‖²` over the first `target.len()` rows of `states`.
pub fn output_nmse(readout: &Readout, states: &SampleMatrix, target: &TargetSignal) -> Result<f64> {
    let n = target.len();
    if states.n_rows() < n {
        return Err(Error::InvalidArgument("rollout shorter than target".into()));
    }
    let mut y = vec![0.0; readout.d_out()];
    let mut num = 0.0;
    let mut den = 0.0;
    for k in 0..n {
        readout.output_into(states.row(k), &mut y);
        for (a, b) in y.iter().zip(target.samples.row(k)) {
            num += (a - b) * (a - b);
            den += b * b;
        }
    }
    if den == 0.0 {
        return Err(Error::InvalidArgument("target has zero norm".into()));
    }
    Ok(num / den)
}

/// Per-symbol output NMSE on fresh washouts.
pub fn evaluate_readout(
    network: &Network,
    readout: &Readout,
    targets: &[TargetSignal],
    n_trials: usize,
    washout_ms: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    let length = targets.iter().map(|t| t.len()).max().unwrap_or(0) as f64 * network.config().dt;
    let rolls = record_rollouts(
        network,
        length,
        n_trials,
        washout_ms,
        seed,
        tag::READOUT_EVAL,
    )?;
    evaluate_on(readout, &rolls, targets)
}

/// Per-symbol mean NMSE over the given rollouts.
pub fn evaluate_on(
    readout: &Readout,
    rollouts: &[LabeledRollout],
    targets: &[TargetSignal],
) -> Result<Vec<f64>> {
    let m = targets.len();
    let mut sums = vec![0.0; m];
    let mut counts = vec![0usize; m];
    for r in rollouts {
        sums[r.symbol] += output_nmse(readout, &r.states, &targets[r.symbol])?;
        counts[r.symbol] += 1;
    }
    Ok(sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { f64::NAN })
        .collect())
}

/// Output NMSE per symbol over the dwell episodes of a recorded run.
///
/// `outputs` and `symbols` are sampled every step. Each episode that starts
/// with a switch is compared, from its first sample, against its symbol's
/// target over the shorter of the two. The first run has no switch and is
/// skipped. Symbols with no episode yield `None`.
pub fn episode_output_nmse(
    outputs: &SampleMatrix,
    symbols: &[SymbolId],
    targets: &[TargetSignal],
) -> Result<Vec<Option<f64>>> {
    if outputs.n_rows() != symbols.len() {
        return Err(Error::InvalidArgument(
            "outputs and symbols differ in length".into(),
        ));
    }
    let m = targets.len();
    let mut num = vec![0.0; m];
    let mut den = vec![0.0; m];
    let mut start = 0;
    while start < symbols.len() {
        let s = symbols[start];
        let mut end = start;
        while end < symbols.len() && symbols[end] == s {
            end += 1;
        }
        if start > 0 {
            let target = targets
                .get(s)
                .ok_or_else(|| Error::InvalidArgument(format!("no target for symbol {s}")))?;
            if target.dim() != outputs.n_cols() {
                return Err(Error::InvalidArgument(
                    "target and output dimensions differ".into(),
                ));
            }
            for k in 0..(end - start).min(target.len()) {
                for (a, b) in outputs.row(start + k).iter().zip(target.samples.row(k)) {
                    num[s] += (a - b) * (a - b);
                    den[s] += b * b;
                }
            }
        }
        start = end;
    }
    Ok(num
        .iter()
        .zip(&den)
        .map(|(&n, &d)| (d > 0.0).then(|| n / d))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lissajous_starts_at_origin() {
        let t = generate_target(&TargetKind::lissajous(1.0, 2.0, 0.0), 100.0, 1.0).unwrap();
        assert_eq!(t.samples.row(0), &[0.0, 0.0]);
        assert_eq!(t.len(), 100);
        assert_eq!(t.dim(), 2);
    }

    #[test]
    fn episodes_are_scored_from_their_switch() {
        let targets: Vec<TargetSignal> = [10.0, 30.0]
            .iter()
            .map(|&t| generate_target(&TargetKind::pulse(t), 40.0, 1.0).unwrap())
            .collect();
        // run of 0 (skipped), then 1 replayed exactly, then 0 with a constant offset
        let symbols: Vec<SymbolId> = [vec![0; 5], vec![1; 50], vec![0; 20]].concat();
        let mut out = SampleMatrix::new(1);
        for _ in 0..5 {
            out.push_row(&[7.0]);
        }
        for k in 0..50 {
            out.push_row(&[if k < 40 {
                targets[1].samples.row(k)[0]
            } else {
                -3.0
            }]);
        }
        for k in 0..20 {
            out.push_row(&[targets[0].samples.row(k)[0] + 0.1]);
        }
        let nmse = episode_output_nmse(&out, &symbols, &targets).unwrap();
        assert_eq!(nmse[1], Some(0.0));
        let den: f64 = (0..20).map(|k| targets[0].samples.row(k)[0].powi(2)).sum();
        assert!((nmse[0].unwrap() - 20.0 * 0.01 / den).abs() < 1e-12);
    }

    #[test]
    fn pulse_peaks_at_one() {
        let t = generate_target(&TargetKind::pulse(40.0), 100.0, 1.0).unwrap();
        assert_eq!(t.samples.row(40), &[1.0]);
        assert!(t.samples.row(30)[0] < 1.0);
        let expect = (-100.0f64 / 200.0).exp();
        assert!((t.samples.row(50)[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn lorenz_is_normalized() {
        let t = generate_target(&TargetKind::lorenz(), 1500.0, 1.0).unwrap();
        for c in 0..2 {
            let vals: Vec<f64> = t.samples.rows().map(|r| r[c]).collect();
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!((lo + 1.0).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn polyline_constant_speed_on_square() {
        let sq = TargetKind::PolylineTrace {
            points: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        };
        let t = generate_target(&sq, 8.0, 1.0).unwrap();
        let expect = [
            [0.0, 0.0],
            [0.5, 0.0],
            [1.0, 0.0],
            [1.0, 0.5],
            [1.0, 1.0],
            [0.5, 1.0],
            [0.0, 1.0],
            [0.0, 0.5],
        ];
        for (k, e) in expect.iter().enumerate() {
            assert!((t.samples.row(k)[0] - e[0]).abs() < 1e-12);
            assert!((t.samples.row(k)[1] - e[1]).abs() < 1e-12);
        }
        let glyph = generate_target(&TargetKind::at_sign(), 1500.0, 1.0).unwrap();
        assert_eq!(glyph.len(), 1500);
    }

    #[test]
    fn generate_errors() {
        let empty = TargetKind::PolylineTrace { points: vec![] };
        assert!(generate_target(&empty, 10.0, 1.0).is_err());
        assert!(generate_target(&TargetKind::pulse(1.0), 0.5, 1.0).is_err());
        let bad: std::result::Result<TargetKind, _> = serde_json::from_str(r#"{"kind":"spiral"}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn preceding_cycle_covers_rest_and_others() {
        let got: Vec<_> = (0..4).map(|k| preceding_symbol(3, 1, k)).collect();
        assert_eq!(got, vec![None, Some(0), Some(2), None]);
        assert_eq!(preceding_symbol(1, 0, 5), None);
    }
}
