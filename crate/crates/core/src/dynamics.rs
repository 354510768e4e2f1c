//! The two-part echo state network: a non-chaotic input network that turns
//! discrete symbols into transients, and a sparse chaotic network driven by
//! those transients through a tuned bridge matrix.

use nalgebra::{DMatrix, DVector, DVectorView, DVectorViewMut};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::linalg::{Csr, Gram, SampleMatrix};
use crate::rng::{self, tag};
use crate::schedule::{SymbolId, SymbolSchedule};

/// Width of the bridge transient in ms.
pub const ENVELOPE_WIDTH_MS: f64 = 50.0;

/// Target profile projected onto the chaotic network after a symbol switch:
/// `t * exp(-(t / 50)^2 / 2)`, peaking at `t = 50 ms`.
pub fn transient_envelope(t_since_switch: f64) -> f64 {
    let r = t_since_switch / ENVELOPE_WIDTH_MS;
    t_since_switch * (-0.5 * r * r).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub(crate) config: SimConfig,
    pub(crate) n_symbols: usize,
    pub(crate) j_in: DMatrix<f64>,
    pub(crate) j_ch: Csr,
    pub(crate) j_ic: DMatrix<f64>,
    pub(crate) u_in: Vec<DVector<f64>>,
    pub(crate) v: Vec<DVector<f64>>,
}

/// Concatenated state `[x_in; x_ch]` at time `t` (ms).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub x: Vec<f64>,
    pub t: f64,
    n_in: usize,
}

impl State {
    pub fn zeros(config: &SimConfig) -> Self {
        Self {
            x: vec![0.0; config.n_total()],
            t: 0.0,
            n_in: config.n_in,
        }
    }

    pub fn from_parts(x_in: &[f64], x_ch: &[f64], t: f64) -> Self {
        let mut x = Vec::with_capacity(x_in.len() + x_ch.len());
        x.extend_from_slice(x_in);
        x.extend_from_slice(x_ch);
        Self {
            x,
            t,
            n_in: x_in.len(),
        }
    }

    /// Components uniform in (-1, 1).
    pub fn random<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> Self {
        let x = (0..config.n_total())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        Self {
            x,
            t: 0.0,
            n_in: config.n_in,
        }
    }

    pub fn x_in(&self) -> &[f64] {
        &self.x[..self.n_in]
    }

    pub fn x_ch(&self) -> &[f64] {
        &self.x[self.n_in..]
    }

    pub fn x_ch_mut(&mut self) -> &mut [f64] {
        let n = self.n_in;
        &mut self.x[n..]
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }
}

/// Recorded rollout. Row `k` of `states` is the state at `times[k]`, and
/// `symbols[k]` is the input applied from that time on.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: SampleMatrix,
    pub symbols: Vec<SymbolId>,
}

impl Trajectory {
    pub fn new(n_cols: usize) -> Self {
        Self {
            times: Vec::new(),
            states: SampleMatrix::new(n_cols),
            symbols: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn push(&mut self, state: &State, symbol: SymbolId) {
        self.times.push(state.t);
        self.states.push_row(&state.x);
        self.symbols.push(symbol);
    }

    /// Write `t,symbol,x_0,…` rows. `columns` selects a subset of state
    /// coordinates; `None` writes all of them.
    pub fn write_csv<W: std::io::Write>(&self, w: W, columns: Option<&[usize]>) -> Result<()> {
        let all: Vec<usize>;
        let cols = match columns {
            Some(c) => c,
            None => {
                all = (0..self.states.n_cols()).collect();
                &all
            }
        };
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string(), "symbol".to_string()];
        header.extend(cols.iter().map(|c| format!("x_{c}")));
        wtr.write_record(&header)?;
        for (k, &t) in self.times.iter().enumerate() {
            let row = self.states.row(k);
            let mut rec = vec![format!("{t}"), format!("{}", self.symbols[k])];
            rec.extend(cols.iter().map(|&c| format!("{}", row[c])));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Settings for fitting the input-to-chaotic bridge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BridgeConfig {
    pub washout_ms: f64,
    /// Recording length after each switch. Long enough that the settled
    /// input state is fitted to zero drive.
    pub event_ms: f64,
    /// Ridge parameter relative to the mean input variance.
    pub rel_ridge: f64,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        Self {
            washout_ms: 1000.0,
            event_ms: 1500.0,
            rel_ridge: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeReport {
    pub n_events: usize,
    pub n_samples: usize,
    pub lambda: f64,
    /// `‖J_ic x_in − target‖ / ‖target‖` over all recorded events.
    pub relative_residual: f64,
}

impl Network {
    /// Sample all random parameters from `config.seed`. The bridge starts at zero.
    pub fn build(config: SimConfig, n_symbols: usize) -> Result<Self> {
        config.validate()?;
        if n_symbols == 0 {
            return Err(Error::config("n_symbols", "must be >= 1"));
        }
        let (n_in, n_ch, seed) = (config.n_in, config.n_ch, config.seed);

        let sd_in = (1.0 / n_in as f64).sqrt();
        let mut r = rng::stream(seed, tag::J_IN, 0);
        let j_in = DMatrix::from_fn(n_in, n_in, |_, _| {
            sd_in * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut r)
        });

        let p = config.density;
        let sd_ch = (1.0 / (p * n_ch as f64)).sqrt();
        let mut mask_rng = rng::stream(seed, tag::J_CH_MASK, 0);
        let mut val_rng = rng::stream(seed, tag::J_CH_VALUES, 0);
        let normal = Normal::new(0.0, sd_ch).expect("positive sd");
        let rows = (0..n_ch)
            .map(|_| {
                (0..n_ch)
                    .filter(|_| p >= 1.0 || mask_rng.random::<f64>() < p)
                    .map(|j| (j, normal.sample(&mut val_rng)))
                    .collect()
            })
            .collect();
        let j_ch = Csr::from_rows(n_ch, rows)?;

        let mut ur = rng::stream(seed, tag::U_IN, 0);
        let u_in = (0..n_symbols)
            .map(|_| {
                DVector::from_fn(n_in, |_, _| {
                    config.input_scale
                        * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut ur)
                })
            })
            .collect();
        let mut vr = rng::stream(seed, tag::V_S, 0);
        let v = (0..n_symbols)
            .map(|_| {
                DVector::from_fn(n_ch, |_, _| {
                    <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut vr)
                })
            })
            .collect();

        Ok(Self {
            j_ic: DMatrix::zeros(n_ch, n_in),
            config,
            n_symbols,
            j_in,
            j_ch,
            u_in,
            v,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn n_symbols(&self) -> usize {
        self.n_symbols
    }

    pub fn n_total(&self) -> usize {
        self.config.n_total()
    }

    pub fn j_in(&self) -> &DMatrix<f64> {
        &self.j_in
    }

    pub fn j_ch(&self) -> &Csr {
        &self.j_ch
    }

    pub fn j_ic(&self) -> &DMatrix<f64> {
        &self.j_ic
    }

    pub fn u_in(&self, s: SymbolId) -> &DVector<f64> {
        &self.u_in[s]
    }

    pub fn v(&self, s: SymbolId) -> &DVector<f64> {
        &self.v[s]
    }

    pub fn set_j_in(&mut self, m: DMatrix<f64>) -> Result<()> {
        if m.shape() != self.j_in.shape() {
            return Err(Error::InvalidArgument("J_in shape mismatch".into()));
        }
        self.j_in = m;
        Ok(())
    }

    pub fn set_j_ch(&mut self, m: Csr) -> Result<()> {
        if m.n_rows() != self.config.n_ch || m.n_cols() != self.config.n_ch {
            return Err(Error::InvalidArgument("J_ch shape mismatch".into()));
        }
        self.j_ch = m;
        Ok(())
    }

    pub fn set_j_ic(&mut self, m: DMatrix<f64>) -> Result<()> {
        if m.shape() != self.j_ic.shape() {
            return Err(Error::InvalidArgument("J_ic shape mismatch".into()));
        }
        self.j_ic = m;
        Ok(())
    }

    pub fn set_input(&mut self, s: SymbolId, u: DVector<f64>) -> Result<()> {
        if s >= self.n_symbols || u.len() != self.config.n_in {
            return Err(Error::InvalidArgument("input vector mismatch".into()));
        }
        self.u_in[s] = u;
        Ok(())
    }

    pub(crate) fn j_ch_mut(&mut self) -> &mut Csr {
        &mut self.j_ch
    }

    pub(crate) fn from_parts(
        config: SimConfig,
        j_in: DMatrix<f64>,
        j_ch: Csr,
        j_ic: DMatrix<f64>,
        u_in: Vec<DVector<f64>>,
        v: Vec<DVector<f64>>,
    ) -> Result<Self> {
        let n_symbols = u_in.len();
        let (n_in, n_ch) = (config.n_in, config.n_ch);
        let ok = j_in.shape() == (n_in, n_in)
            && j_ch.n_rows() == n_ch
            && j_ch.n_cols() == n_ch
            && j_ic.shape() == (n_ch, n_in)
            && v.len() == n_symbols
            && u_in.iter().all(|u| u.len() == n_in)
            && v.iter().all(|x| x.len() == n_ch);
        if !ok || n_symbols == 0 {
            return Err(Error::Container(
                "network arrays inconsistent with config".into(),
            ));
        }
        Ok(Self {
            config,
            n_symbols,
            j_in,
            j_ch,
            j_ic,
            u_in,
            v,
        })
    }

    fn check_symbol(&self, input: Option<SymbolId>) -> Result<()> {
        match input {
            Some(s) if s >= self.n_symbols => Err(Error::InvalidArgument(format!(
                "symbol {s} out of range for {} symbols",
                self.n_symbols
            ))),
            _ => Ok(()),
        }
    }

    /// Pre-activation `g ⊙ (J x) + u(s)` of the full network.
    fn drive(&self, x: &[f64], input: Option<SymbolId>, pre: &mut [f64]) {
        let n_in = self.config.n_in;
        let n_ch = self.config.n_ch;
        let (x_in, x_ch) = x.split_at(n_in);
        let (p_in, p_ch) = pre.split_at_mut(n_in);
        match input {
            Some(s) => p_in.copy_from_slice(self.u_in[s].as_slice()),
            None => p_in.fill(0.0),
        }
        let x_in_v = DVectorView::from_slice(x_in, n_in);
        DVectorViewMut::from_slice(p_in, n_in).gemv(self.config.g_in, &self.j_in, &x_in_v, 1.0);
        DVectorViewMut::from_slice(p_ch, n_ch).gemv(1.0, &self.j_ic, &x_in_v, 0.0);
        self.j_ch.mul_acc(self.config.g_ch, x_ch, p_ch);
    }

    /// One explicit Euler step in place. `scratch` is resized as needed.
    pub fn step_in_place(
        &self,
        state: &mut State,
        input: Option<SymbolId>,
        scratch: &mut Vec<f64>,
    ) -> Result<()> {
        scratch.resize(self.n_total(), 0.0);
        self.drive(&state.x, input, scratch);
        let a = self.config.dt / self.config.tau;
        let mut finite = true;
        for (x, &p) in state.x.iter_mut().zip(scratch.iter()) {
            *x += a * (p.tanh() - *x);
            // subnormals make every later multiply-add slow on a decaying network
            if x.abs() < f64::MIN_POSITIVE {
                *x = 0.0;
            }
            finite &= x.is_finite();
        }
        if !finite {
            return Err(Error::Divergence { t_ms: state.t });
        }
        state.t += self.config.dt;
        Ok(())
    }

    pub fn step(&self, state: &State, input: Option<SymbolId>) -> Result<State> {
        self.check_symbol(input)?;
        let mut next = state.clone();
        let mut scratch = Vec::new();
        self.step_in_place(&mut next, input, &mut scratch)?;
        Ok(next)
    }

    /// Integrate for `steps` steps under a fixed input.
    pub fn advance(&self, state: &mut State, input: Option<SymbolId>, steps: usize) -> Result<()> {
        self.check_symbol(input)?;
        let mut scratch = Vec::with_capacity(self.n_total());
        for _ in 0..steps {
            self.step_in_place(state, input, &mut scratch)?;
        }
        Ok(())
    }

    /// Drive the network with `schedule`, recording every `record_stride`-th state.
    /// Times in the returned trajectory are relative to the schedule start.
    pub fn run_open_loop(
        &self,
        schedule: &SymbolSchedule,
        initial: &State,
        record_stride: usize,
    ) -> Result<Trajectory> {
        if record_stride == 0 {
            return Err(Error::InvalidArgument("record_stride must be >= 1".into()));
        }
        if schedule.max_symbol() >= self.n_symbols {
            return Err(Error::InvalidArgument(
                "schedule references unknown symbol".into(),
            ));
        }
        let per_step = schedule.per_step(self.config.dt);
        let mut traj = Trajectory::new(self.n_total());
        let mut state = initial.clone();
        state.t = 0.0;
        let mut scratch = Vec::with_capacity(self.n_total());
        for (k, &s) in per_step.iter().enumerate() {
            if k % record_stride == 0 {
                traj.push(&state, s);
            }
            self.step_in_place(&mut state, Some(s), &mut scratch)?;
        }
        Ok(traj)
    }

    /// Random state (uniform in (-1, 1)) integrated for `duration_ms` under
    /// `input`; the returned state has `t = 0`.
    pub fn washout<R: Rng + ?Sized>(
        &self,
        duration_ms: f64,
        input: Option<SymbolId>,
        rng: &mut R,
    ) -> Result<State> {
        let mut state = State::random(&self.config, rng);
        self.advance(&mut state, input, self.config.steps(duration_ms))?;
        state.t = 0.0;
        Ok(state)
    }

    /// `J_ic x_in`, the drive the input network projects onto the chaotic one.
    pub fn bridge_drive(&self, x_in: &[f64]) -> Vec<f64> {
        let v = &self.j_ic * DVectorView::from_slice(x_in, self.config.n_in);
        v.as_slice().to_vec()
    }

    fn input_step(&self, x_in: &mut [f64], input: Option<SymbolId>, pre: &mut [f64]) {
        let n_in = self.config.n_in;
        match input {
            Some(s) => pre.copy_from_slice(self.u_in[s].as_slice()),
            None => pre.fill(0.0),
        }
        DVectorViewMut::from_slice(pre, n_in).gemv(
            self.config.g_in,
            &self.j_in,
            &DVectorView::from_slice(x_in, n_in),
            1.0,
        );
        let a = self.config.dt / self.config.tau;
        for (x, &p) in x_in.iter_mut().zip(pre.iter()) {
            *x += a * (p.tanh() - *x);
        }
    }

    /// Record input-network switch responses for every ordered pair of
    /// distinct symbols plus a switch from rest into each symbol, then fit
    /// `J_ic` row-wise by ridge regression so that `J_ic x_in(t)` follows
    /// `envelope(t - t_switch) v_s`.
    pub fn tune_input_bridge(mut self, cfg: &BridgeConfig) -> Result<(Network, BridgeReport)> {
        let n_in = self.config.n_in;
        let n_ch = self.config.n_ch;
        let m = self.n_symbols;
        let washout_steps = self.config.steps(cfg.washout_ms);
        let event_steps = self.config.steps(cfg.event_ms);
        if event_steps == 0 {
            return Err(Error::InvalidArgument(
                "bridge event length must cover one step".into(),
            ));
        }

        let mut events: Vec<(Option<SymbolId>, SymbolId)> = (0..m).map(|s| (None, s)).collect();
        for from in 0..m {
            for to in 0..m {
                if from != to {
                    events.push((Some(from), to));
                }
            }
        }

        let mut samples = SampleMatrix::with_capacity(n_in, events.len() * event_steps);
        let mut labels: Vec<(SymbolId, f64)> = Vec::with_capacity(events.len() * event_steps);
        let mut pre = vec![0.0; n_in];
        for (e, &(from, to)) in events.iter().enumerate() {
            let mut r = rng::stream(self.config.seed, tag::BRIDGE, e as u64);
            let mut x_in: Vec<f64> = (0..n_in).map(|_| r.random_range(-1.0..1.0)).collect();
            for _ in 0..washout_steps {
                self.input_step(&mut x_in, from, &mut pre);
            }
            for k in 0..event_steps {
                samples.push_row(&x_in);
                labels.push((to, transient_envelope(k as f64 * self.config.dt)));
                self.input_step(&mut x_in, Some(to), &mut pre);
            }
            if x_in.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence {
                    t_ms: (washout_steps + event_steps) as f64 * self.config.dt,
                });
            }
        }

        let mut gram = Gram::new(n_in, n_ch);
        let mut y = vec![0.0; n_ch];
        let mut ys = Vec::with_capacity(samples.n_rows() * n_ch);
        for &(s, env) in &labels {
            for (yi, vi) in y.iter_mut().zip(self.v[s].iter()) {
                *yi = env * vi;
            }
            ys.extend_from_slice(&y);
        }
        gram.add(samples.as_flat(), &ys, 1.0);
        let lambda = cfg.rel_ridge * gram.xtx.trace() / n_in as f64;
        let w = gram.ridge(lambda, "input bridge fit")?;
        self.j_ic = w.transpose();

        let mut err2 = 0.0;
        let mut tot2 = 0.0;
        for (k, row) in samples.rows().enumerate() {
            let drive = self.bridge_drive(row);
            let target = &ys[k * n_ch..(k + 1) * n_ch];
            for (d, t) in drive.iter().zip(target) {
                err2 += (d - t) * (d - t);
                tot2 += t * t;
            }
        }
        let report = BridgeReport {
            n_events: events.len(),
            n_samples: samples.n_rows(),
            lambda,
            relative_residual: (err2 / tot2).sqrt(),
        };
        Ok((self, report))
    }
}
