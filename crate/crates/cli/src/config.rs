//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use itinerant_core::analysis::{GridPlane, LleConfig, MleConfig, TimerConfig};
use itinerant_core::feedback::ClassifierConfig;
use itinerant_core::innate::InnateConfig;
use itinerant_core::readout::TargetKind;
use itinerant_core::schedule::parse_symbol;
use itinerant_core::{BridgeConfig, Fsm, SimConfig, SymbolId};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed. Overrides `network.seed`.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub network: SimConfig,
    pub n_symbols: usize,
    pub bridge: BridgeConfig,
    pub l_innate_ms: f64,
    pub innate: InnateConfig,
    pub readout: ReadoutSection,
    pub classifier: ClassifierConfig,
    pub step2: Step2Section,
    pub step3: Step3Section,
    pub analysis: AnalysisSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            output_dir: PathBuf::from("out"),
            network: SimConfig::desk(),
            n_symbols: 3,
            bridge: BridgeConfig::default(),
            l_innate_ms: 1000.0,
            innate: InnateConfig {
                epochs: 50,
                ..InnateConfig::default()
            },
            readout: ReadoutSection::default(),
            classifier: ClassifierConfig::default(),
            step2: Step2Section::default(),
            step3: Step3Section::default(),
            analysis: AnalysisSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReadoutSection {
    pub l_out_ms: f64,
    pub ridge_alpha: f64,
    pub n_trials: usize,
    pub n_test_trials: usize,
    pub washout_ms: f64,
    /// One target per symbol; empty selects a built-in set.
    pub targets: Vec<TargetKind>,
}

impl Default for ReadoutSection {
    fn default() -> Self {
        Self {
            l_out_ms: 1500.0,
            ridge_alpha: 1.0,
            n_trials: 10,
            n_test_trials: 5,
            washout_ms: 1000.0,
            targets: Vec::new(),
        }
    }
}

/// Built-in readout targets: Lissajous figures of increasing order.
pub fn default_targets(m: usize) -> Vec<TargetKind> {
    let shapes = [
        (1.0, 2.0, 0.0),
        (3.0, 2.0, 0.5),
        (1.0, 3.0, 1.0),
        (2.0, 3.0, 0.25),
    ];
    (0..m)
        .map(|s| {
            let (a, b, p) = shapes[s % shapes.len()];
            TargetKind::lissajous(a, b, p + (s / shapes.len()) as f64)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Step2Section {
    /// Periodic symbol sequence, by letter.
    pub sequence: Vec<String>,
    pub dwell_ms: f64,
    pub t_rec_ms: f64,
    pub stride: usize,
    pub washout_ms: f64,
    pub closed_loop_ms: f64,
    pub hold_ms: f64,
    /// Open-loop switches driven before the classifier takes over.
    pub handover_switches: usize,
}

impl Default for Step2Section {
    fn default() -> Self {
        Self {
            sequence: vec!["A".into(), "B".into(), "C".into()],
            dwell_ms: 1000.0,
            t_rec_ms: 50_000.0,
            stride: 5,
            washout_ms: 1000.0,
            closed_loop_ms: 60_000.0,
            hold_ms: 0.0,
            handover_switches: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FsmSpec {
    /// Equal probability to every other symbol (and to staying, if allowed).
    Uniform { self_loops: bool },
    /// Explicit row-stochastic matrix.
    Matrix { transition: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Step3Section {
    pub fsm: FsmSpec,
    pub dwell_ms: f64,
    pub t_rec_ms: f64,
    pub stride: usize,
    pub washout_ms: f64,
    pub closed_loop_ms: f64,
    pub hold_ms: f64,
    /// Open-loop switches driven before the classifier takes over.
    pub handover_switches: usize,
    /// Size of the initial-state perturbation for the twin run.
    pub twin_epsilon: f64,
    /// Symbols are compared from this time on.
    pub twin_compare_from_ms: f64,
    pub twin_duration_ms: f64,
    /// Also compute terminal-symbol grids.
    pub grid: bool,
}

impl Default for Step3Section {
    fn default() -> Self {
        Self {
            fsm: FsmSpec::Uniform { self_loops: false },
            dwell_ms: 1500.0,
            t_rec_ms: 50_000.0,
            stride: 5,
            washout_ms: 1000.0,
            closed_loop_ms: 200_000.0,
            hold_ms: 0.0,
            handover_switches: 4,
            twin_epsilon: 1e-6,
            twin_compare_from_ms: 10_000.0,
            twin_duration_ms: 30_000.0,
            grid: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    pub mle: MleConfig,
    /// Symbol switched on at `t = 0` for the local exponent.
    pub lle_symbol: String,
    pub lle: LleConfig,
    pub lle_t_grid: Vec<f64>,
    pub timer: TimerConfig,
    pub timer_t_peak: Vec<f64>,
    pub grid: GridPlane,
    pub grid_horizons_ms: Vec<f64>,
    /// Closed-loop time before the grid center is taken.
    pub grid_settle_ms: f64,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            mle: MleConfig {
                interval_ms: 200.0,
                horizon_ms: 100_000.0,
                n_trials: 4,
                ..MleConfig::default()
            },
            lle_symbol: "A".into(),
            lle: LleConfig::default(),
            lle_t_grid: (0..=40).map(|k| k as f64 * 25.0).collect(),
            timer: TimerConfig::default(),
            timer_t_peak: (1..=40).map(|k| k as f64 * 50.0).collect(),
            grid: GridPlane {
                resolution: 21,
                ..GridPlane::default()
            },
            grid_horizons_ms: vec![1000.0, 20_000.0],
            grid_settle_ms: 3000.0,
        }
    }
}

/// The parts of the configuration that determine the step-1 model.
#[derive(Serialize)]
struct Step1Key<'a> {
    seed: u64,
    network: &'a SimConfig,
    n_symbols: usize,
    bridge: &'a BridgeConfig,
    l_innate_ms: f64,
    innate: &'a InnateConfig,
    readout: &'a ReadoutSection,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Network settings with the master seed applied.
    pub fn sim_config(&self) -> SimConfig {
        self.network.clone().with_seed(self.seed)
    }

    pub fn targets(&self) -> Vec<TargetKind> {
        if self.readout.targets.is_empty() {
            default_targets(self.n_symbols)
        } else {
            self.readout.targets.clone()
        }
    }

    pub fn step1_hash(&self) -> Result<String, CliError> {
        let net = self.sim_config();
        let key = Step1Key {
            seed: self.seed,
            network: &net,
            n_symbols: self.n_symbols,
            bridge: &self.bridge,
            l_innate_ms: self.l_innate_ms,
            innate: &self.innate,
            readout: &self.readout,
        };
        Ok(itinerant_core::container::config_hash(&key)?)
    }

    pub fn model_path(&self) -> PathBuf {
        self.output_dir.join("model.cbor")
    }

    pub fn sequence(&self) -> Result<Vec<SymbolId>, CliError> {
        self.step2
            .sequence
            .iter()
            .map(|s| self.symbol("step2.sequence", s))
            .collect()
    }

    pub fn lle_symbol(&self) -> Result<SymbolId, CliError> {
        self.symbol("analysis.lle_symbol", &self.analysis.lle_symbol)
    }

    fn symbol(&self, field: &str, s: &str) -> Result<SymbolId, CliError> {
        let id = parse_symbol(s).map_err(|e| CliError::Config(format!("{field}: {e}")))?;
        if id >= self.n_symbols {
            return Err(CliError::Config(format!(
                "{field}: symbol {s} is outside the {} configured symbols",
                self.n_symbols
            )));
        }
        Ok(id)
    }

    pub fn fsm(&self) -> Result<Fsm, CliError> {
        let dwell = self.step3.dwell_ms;
        let fsm = match &self.step3.fsm {
            FsmSpec::Uniform { self_loops } => Fsm::uniform(self.n_symbols, *self_loops, dwell),
            FsmSpec::Matrix { transition } => {
                if transition.len() != self.n_symbols {
                    return Err(CliError::Config(format!(
                        "step3.fsm: matrix has {} rows for {} symbols",
                        transition.len(),
                        self.n_symbols
                    )));
                }
                Fsm::new(transition.clone(), dwell)
            }
        };
        fsm.map_err(|e| CliError::Config(format!("step3.fsm: {e}")))
    }

    /// Check ranges, symbol references and that durations sit on the time grid.
    pub fn validate(&self) -> Result<(), CliError> {
        self.sim_config()
            .validate()
            .map_err(|e| CliError::Config(format!("network: {e}")))?;
        if self.n_symbols == 0 {
            return Err(CliError::Config("n_symbols must be >= 1".into()));
        }
        let dt = self.network.dt;
        let durations = [
            ("l_innate_ms", self.l_innate_ms),
            ("bridge.washout_ms", self.bridge.washout_ms),
            ("bridge.event_ms", self.bridge.event_ms),
            ("innate.washout_ms", self.innate.washout_ms),
            ("readout.l_out_ms", self.readout.l_out_ms),
            ("readout.washout_ms", self.readout.washout_ms),
            ("step2.dwell_ms", self.step2.dwell_ms),
            ("step2.t_rec_ms", self.step2.t_rec_ms),
            ("step2.washout_ms", self.step2.washout_ms),
            ("step2.closed_loop_ms", self.step2.closed_loop_ms),
            ("step2.hold_ms", self.step2.hold_ms),
            ("step3.dwell_ms", self.step3.dwell_ms),
            ("step3.t_rec_ms", self.step3.t_rec_ms),
            ("step3.washout_ms", self.step3.washout_ms),
            ("step3.closed_loop_ms", self.step3.closed_loop_ms),
            ("step3.hold_ms", self.step3.hold_ms),
            (
                "step3.twin_compare_from_ms",
                self.step3.twin_compare_from_ms,
            ),
            ("step3.twin_duration_ms", self.step3.twin_duration_ms),
            ("analysis.mle.interval_ms", self.analysis.mle.interval_ms),
            ("analysis.mle.horizon_ms", self.analysis.mle.horizon_ms),
            ("analysis.grid_settle_ms", self.analysis.grid_settle_ms),
        ];
        for (field, v) in durations {
            on_grid(field, v, dt)?;
        }
        for &h in &self.analysis.grid_horizons_ms {
            on_grid("analysis.grid_horizons_ms", h, dt)?;
        }
        let positive = [
            ("l_innate_ms", self.l_innate_ms),
            ("readout.l_out_ms", self.readout.l_out_ms),
            ("step2.dwell_ms", self.step2.dwell_ms),
            ("step2.t_rec_ms", self.step2.t_rec_ms),
            ("step3.dwell_ms", self.step3.dwell_ms),
            ("step3.t_rec_ms", self.step3.t_rec_ms),
        ];
        for (field, v) in positive {
            if v <= 0.0 {
                return Err(CliError::Config(format!("{field} must be > 0")));
            }
        }
        if self.step2.stride == 0 || self.step3.stride == 0 {
            return Err(CliError::Config("training-set strides must be >= 1".into()));
        }
        if !self.readout.targets.is_empty() && self.readout.targets.len() != self.n_symbols {
            return Err(CliError::Config(format!(
                "readout.targets lists {} targets for {} symbols",
                self.readout.targets.len(),
                self.n_symbols
            )));
        }
        let dims: Vec<usize> = self.targets().iter().map(TargetKind::dim).collect();
        if dims.windows(2).any(|w| w[0] != w[1]) {
            return Err(CliError::Config(
                "readout.targets must share one output dimension".into(),
            ));
        }
        if self.step2.sequence.is_empty() {
            return Err(CliError::Config("step2.sequence is empty".into()));
        }
        self.sequence()?;
        self.lle_symbol()?;
        self.fsm()?;
        if self.analysis.timer.symbol >= self.n_symbols {
            return Err(CliError::Config(
                "analysis.timer.symbol is out of range".into(),
            ));
        }
        Ok(())
    }
}

fn on_grid(field: &str, v: f64, dt: f64) -> Result<(), CliError> {
    if !(v.is_finite() && v >= 0.0) {
        return Err(CliError::Config(format!(
            "{field} must be a finite non-negative duration"
        )));
    }
    let k = v / dt;
    if (k - k.round()).abs() > 1e-9 * k.max(1.0) {
        return Err(CliError::Config(format!(
            "{field} = {v} is not a multiple of dt = {dt}"
        )));
    }
    Ok(())
}
