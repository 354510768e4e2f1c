//! The experiment steps and analyses behind each subcommand.

use std::fs;
use std::path::{Path, PathBuf};

use itinerant_core::analysis::{
    self, detect_period, follows_cycle, grid_entropy, local_lyapunov, max_lyapunov, mean_period_ms,
    runs, spectral_radius, terminal_symbol_grid, timer_task, transition_stats, FreeRun, LleCurve,
    LyapunovReport, TimerReport, TransitionStats,
};
use itinerant_core::container::{ClassifierRecord, InnateSummary, ModelContainer, ReadoutRecord};
use itinerant_core::feedback::{
    record_training_set, run_closed_loop, train_classifier, write_switch_csv, Classifier,
    ClosedLoop, ClosedLoopRun, FitReport,
};
use itinerant_core::innate::{innate_train, record_innate_targets, TrainReport};
use itinerant_core::linalg::SampleMatrix;
use itinerant_core::readout::{
    episode_output_nmse, evaluate_readout, generate_target, record_rollouts, train_readout,
    Readout, TargetSignal,
};
use itinerant_core::rng::{self, tag};
use itinerant_core::{
    make_periodic_schedule, sample_fsm_schedule, BridgeReport, Network, State, SymbolId,
    SymbolSchedule,
};
use log::info;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, StageExt};

type Result<T> = std::result::Result<T, CliError>;

/// Files produced by a command, written together once every stage has
/// succeeded so a failed run leaves no partial output behind.
#[derive(Default)]
struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(itinerant_core::Error::from)?;
        bytes.push(b'\n');
        self.files.push((name.to_string(), bytes));
        Ok(())
    }

    fn csv(
        &mut self,
        name: &str,
        write: impl FnOnce(&mut Vec<u8>) -> itinerant_core::Result<()>,
    ) -> Result<()> {
        let mut bytes = Vec::new();
        write(&mut bytes)?;
        self.files.push((name.to_string(), bytes));
        Ok(())
    }

    fn commit(self, dir: &Path, model: Option<(&ModelContainer, PathBuf)>) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut written: Vec<PathBuf> = Vec::new();
        let res = (|| -> Result<()> {
            for (name, bytes) in &self.files {
                let path = dir.join(name);
                fs::write(&path, bytes)?;
                written.push(path);
            }
            if let Some((c, path)) = model {
                c.save(&path)?;
            }
            Ok(())
        })();
        if res.is_err() {
            for p in written {
                let _ = fs::remove_file(p);
            }
        }
        res
    }
}

fn series_csv(
    out: &mut Vec<u8>,
    dt: f64,
    symbols: &[SymbolId],
    y: &SampleMatrix,
) -> itinerant_core::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string(), "symbol".to_string()];
    header.extend((0..y.n_cols()).map(|c| format!("y_{c}")));
    w.write_record(&header)?;
    for (k, row) in y.rows().enumerate() {
        let mut rec = vec![(k as f64 * dt).to_string(), symbols[k].to_string()];
        rec.extend(row.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// The network after bridge tuning and before innate training.
pub fn build_untrained(cfg: &ExperimentConfig) -> Result<(Network, BridgeReport)> {
    let net = Network::build(cfg.sim_config(), cfg.n_symbols).stage("build network")?;
    net.tune_input_bridge(&cfg.bridge)
        .stage("tune input bridge")
}

pub fn readout_targets(cfg: &ExperimentConfig) -> Result<Vec<TargetSignal>> {
    cfg.targets()
        .iter()
        .map(|k| generate_target(k, cfg.readout.l_out_ms, cfg.network.dt))
        .collect::<itinerant_core::Result<_>>()
        .stage("generate targets")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Step1Report {
    pub config_hash: String,
    pub bridge: BridgeReport,
    pub innate: Option<TrainReport>,
    pub readout_nmse: Vec<f64>,
}

/// Build, tune the bridge, innate-train, fit the readout and save the model.
pub fn step1(cfg: &ExperimentConfig) -> Result<(ModelContainer, Step1Report)> {
    cfg.validate()?;
    let hash = cfg.step1_hash()?;
    let (untrained, bridge) = build_untrained(cfg)?;
    info!(
        "bridge fitted, relative residual {:.4}",
        bridge.relative_residual
    );

    let (net, innate) = if cfg.innate.epochs > 0 {
        let targets =
            record_innate_targets(&untrained, cfg.l_innate_ms, cfg.innate.washout_ms, cfg.seed)
                .stage("record innate targets")?;
        let (net, report) =
            innate_train(&untrained, &targets, &cfg.innate).stage("innate training")?;
        info!(
            "innate training: NMSE {:.4} -> {:.4} (best epoch {:?})",
            report.nmse_before, report.nmse_after, report.best_epoch
        );
        (net, Some(report))
    } else {
        (untrained, None)
    };

    let targets = readout_targets(cfg)?;
    let r = &cfg.readout;
    let rolls = record_rollouts(
        &net,
        r.l_out_ms,
        r.n_trials,
        r.washout_ms,
        cfg.seed,
        tag::READOUT,
    )
    .stage("record readout rollouts")?;
    let readout = train_readout(&rolls, &targets, r.ridge_alpha).stage("train readout")?;
    let readout_nmse = evaluate_readout(
        &net,
        &readout,
        &targets,
        r.n_test_trials,
        r.washout_ms,
        cfg.seed,
    )
    .stage("evaluate readout")?;
    info!("readout NMSE per symbol: {readout_nmse:?}");

    let mut container = ModelContainer::new(&net, hash.clone());
    container.innate = innate.as_ref().map(|t| InnateSummary {
        l_innate_ms: cfg.l_innate_ms,
        best_epoch: t.best_epoch,
        nmse_before: t.nmse_before,
        nmse_after: t.nmse_after,
    });
    container.readout = Some(ReadoutRecord::new(&readout, cfg.targets()));
    let report = Step1Report {
        config_hash: hash,
        bridge,
        innate,
        readout_nmse,
    };

    let mut art = Artifacts::default();
    art.json("step1.json", &report)?;
    if let Some(t) = &report.innate {
        art.csv("innate_epochs.csv", |out| {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["epoch", "cost"])?;
            for (i, c) in t.epoch_costs.iter().enumerate() {
                w.serialize((i + 1, c))?;
            }
            w.flush()?;
            Ok(())
        })?;
    }
    art.commit(&cfg.output_dir, Some((&container, cfg.model_path())))?;
    Ok((container, report))
}

/// Load the step-1 model, checking that it was produced by this config.
pub fn load_model(cfg: &ExperimentConfig) -> Result<(ModelContainer, Network, Readout)> {
    let hash = cfg.step1_hash()?;
    let path = cfg.model_path();
    if !path.exists() {
        return Err(CliError::Config(format!(
            "no model at {}; run step1 first",
            path.display()
        )));
    }
    let c = ModelContainer::load(&path, Some(&hash)).stage("load model")?;
    let net = c.network().stage("load model")?;
    let readout = c.readout().stage("load model")?;
    Ok((c, net, readout))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClosedLoopReport {
    pub fit: FitReport,
    pub stats: TransitionStats,
    /// Mean of all complete dwell episodes, in ms.
    pub dwell_mean_ms: Option<f64>,
    /// Symbols of successive runs (first 200).
    pub run_symbols: Vec<SymbolId>,
    pub mle: LyapunovReport,
    /// Output NMSE against each symbol's target over its dwell episodes.
    pub output_nmse: Vec<Option<f64>>,
}

struct LoopOutcome {
    report: ClosedLoopReport,
    run: ClosedLoopRun,
    classifier: Classifier,
    initial: State,
    all_run_symbols: Vec<SymbolId>,
}

/// Shared body of steps 2 and 3: train the classifier on the open-loop
/// schedule, close the loop and measure it.
#[allow(clippy::too_many_arguments)]
#[derive(Clone, Copy)]
struct LoopSpec {
    stride: usize,
    washout_ms: f64,
    closed_loop_ms: f64,
    hold_ms: f64,
    handover_switches: usize,
}

/// Zero-input washout followed by the open-loop schedule up to its
/// `switches`-th breakpoint, so the classifier takes over on the itinerary.
fn handover_state(
    net: &Network,
    schedule: &SymbolSchedule,
    washout_ms: f64,
    switches: usize,
    seed: u64,
) -> itinerant_core::Result<State> {
    let mut r = rng::stream(seed, tag::CLOSED_LOOP, 0);
    let mut state = net.washout(washout_ms, None, &mut r)?;
    let bps = schedule.breakpoints();
    let dt = net.config().dt;
    for (i, &(t0, s)) in bps.iter().enumerate().take(switches) {
        let t1 = bps.get(i + 1).map_or(schedule.duration(), |b| b.0);
        net.advance(&mut state, Some(s), ((t1 - t0) / dt).round() as usize)?;
    }
    Ok(state)
}

fn embed(
    cfg: &ExperimentConfig,
    net: &Network,
    readout: &Readout,
    schedule: &SymbolSchedule,
    spec: &LoopSpec,
) -> Result<LoopOutcome> {
    let LoopSpec {
        stride,
        washout_ms,
        closed_loop_ms,
        hold_ms,
        handover_switches,
    } = *spec;
    let data = record_training_set(net, schedule, stride, washout_ms, cfg.seed)
        .stage("record training set")?;
    info!("training set: {} samples", data.len());
    let (classifier, fit) = train_classifier(&data, &cfg.classifier).stage("train classifier")?;
    info!(
        "classifier: loss {:.4e}, {} iterations, train accuracy {:.4}",
        fit.loss, fit.iterations, fit.train_accuracy
    );
    let system = ClosedLoop::new(net, &classifier, hold_ms).stage("closed loop")?;
    let initial = handover_state(net, schedule, washout_ms, handover_switches, cfg.seed)
        .stage("closed loop")?;
    let run = run_closed_loop(&system, Some(readout), &initial, closed_loop_ms, 1)
        .stage("closed loop")?;
    let dt = net.config().dt;
    let stream = &run.trajectory.symbols;
    let stats = transition_stats(stream, dt, net.n_symbols());
    let dwell_mean_ms = stats.overall_dwell_mean(stream, dt);
    info!(
        "closed loop: {} switches, mean dwell {dwell_mean_ms:?} ms",
        stats.n_switches
    );
    let all_run_symbols: Vec<SymbolId> = runs(stream).iter().map(|r| r.0).collect();

    let start = system.start(run.final_state.state.clone());
    let initial_states = vec![start; cfg.analysis.mle.n_trials.max(1)];
    let mle = max_lyapunov(&system, &initial_states, &cfg.analysis.mle, cfg.seed)
        .stage("closed-loop MLE")?;
    info!("closed-loop MLE {:.4e} per ms", mle.mle);

    let targets = readout_targets(cfg)?;
    let outputs = run.outputs.as_ref().expect("readout supplied");
    let output_nmse = episode_output_nmse(outputs, stream, &targets).stage("output NMSE")?;
    let report = ClosedLoopReport {
        fit,
        stats,
        dwell_mean_ms,
        run_symbols: all_run_symbols.iter().take(200).copied().collect(),
        mle,
        output_nmse,
    };
    Ok(LoopOutcome {
        report,
        run,
        classifier,
        initial,
        all_run_symbols,
    })
}

fn loop_artifacts(art: &mut Artifacts, prefix: &str, dt: f64, run: &ClosedLoopRun) -> Result<()> {
    art.csv(&format!("{prefix}_switches.csv"), |out| {
        write_switch_csv(out, &run.switches)
    })?;
    let outputs = run.outputs.as_ref().expect("readout supplied");
    art.csv(&format!("{prefix}_output.csv"), |out| {
        series_csv(out, dt, &run.trajectory.symbols, outputs)
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Step2Report {
    pub sequence: Vec<SymbolId>,
    pub closed_loop: ClosedLoopReport,
    /// Whether every observed run follows the configured cycle.
    pub order_matches: bool,
    /// Repetition period of the run symbols, in runs.
    pub period_runs: Option<usize>,
    pub period_ms: Option<f64>,
}

/// Embed a periodic sequence with the feedback classifier.
pub fn step2(cfg: &ExperimentConfig) -> Result<(ModelContainer, Step2Report)> {
    cfg.validate()?;
    let (mut container, net, readout) = load_model(cfg)?;
    let s = &cfg.step2;
    let sequence = cfg.sequence()?;
    let schedule = make_periodic_schedule(&sequence, s.dwell_ms, s.t_rec_ms).stage("schedule")?;
    let out = embed(
        cfg,
        &net,
        &readout,
        &schedule,
        &LoopSpec {
            stride: s.stride,
            washout_ms: s.washout_ms,
            closed_loop_ms: s.closed_loop_ms,
            hold_ms: s.hold_ms,
            handover_switches: s.handover_switches,
        },
    )?;
    let order_matches = follows_cycle(&out.all_run_symbols, &sequence);
    let period_runs = detect_period(&out.all_run_symbols);
    let dt = net.config().dt;
    let period_ms = period_runs.and_then(|p| mean_period_ms(&out.run.trajectory.symbols, p, dt));
    info!("order matches: {order_matches}, period {period_runs:?} runs / {period_ms:?} ms");
    container.classifier = Some(ClassifierRecord::new(&out.classifier));
    let report = Step2Report {
        sequence,
        closed_loop: out.report,
        order_matches,
        period_runs,
        period_ms,
    };
    let mut art = Artifacts::default();
    art.json("step2.json", &report)?;
    loop_artifacts(&mut art, "step2", dt, &out.run)?;
    art.commit(&cfg.output_dir, Some((&container, cfg.model_path())))?;
    Ok((container, report))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwinReport {
    pub epsilon: f64,
    /// First time the two symbol streams differ.
    pub first_difference_ms: Option<f64>,
    /// Whether the streams differ anywhere after the comparison start.
    pub diverged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSummary {
    pub horizon_ms: f64,
    pub entropy_bits: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Step3Report {
    pub target_transition: Vec<Vec<f64>>,
    pub closed_loop: ClosedLoopReport,
    pub twin: TwinReport,
    pub grids: Vec<GridSummary>,
}

/// Embed a stochastic transition rule with the feedback classifier.
pub fn step3(cfg: &ExperimentConfig) -> Result<(ModelContainer, Step3Report)> {
    cfg.validate()?;
    let (mut container, net, readout) = load_model(cfg)?;
    let s = &cfg.step3;
    let fsm = cfg.fsm()?;
    let mut r = rng::stream(cfg.seed, tag::SCHEDULE, 0);
    let schedule = sample_fsm_schedule(&fsm, s.t_rec_ms, &mut r).stage("schedule")?;
    let out = embed(
        cfg,
        &net,
        &readout,
        &schedule,
        &LoopSpec {
            stride: s.stride,
            washout_ms: s.washout_ms,
            closed_loop_ms: s.closed_loop_ms,
            hold_ms: s.hold_ms,
            handover_switches: s.handover_switches,
        },
    )?;
    let system = ClosedLoop::new(&net, &out.classifier, s.hold_ms).stage("closed loop")?;
    let twin = twin_runs(cfg, &system, &out.initial)?;
    info!(
        "twin runs diverged: {} (first difference {:?} ms)",
        twin.diverged, twin.first_difference_ms
    );

    let mut art = Artifacts::default();
    let grids = if s.grid {
        grid_artifacts(cfg, &system, &mut art)?
    } else {
        Vec::new()
    };
    container.classifier = Some(ClassifierRecord::new(&out.classifier));
    let report = Step3Report {
        target_transition: fsm.transition.clone(),
        closed_loop: out.report,
        twin,
        grids,
    };
    art.json("step3.json", &report)?;
    loop_artifacts(&mut art, "step3", net.config().dt, &out.run)?;
    art.commit(&cfg.output_dir, Some((&container, cfg.model_path())))?;
    Ok((container, report))
}

/// Run the closed loop from `initial` and from a copy perturbed by
/// `twin_epsilon` along a random chaotic-network direction.
fn twin_runs(
    cfg: &ExperimentConfig,
    system: &ClosedLoop<'_>,
    initial: &State,
) -> Result<TwinReport> {
    let s = &cfg.step3;
    let n_in = cfg.network.n_in;
    let mut r = rng::stream(cfg.seed, tag::CLOSED_LOOP, 1);
    let dir: Vec<f64> = (0..cfg.network.n_ch)
        .map(|_| StandardNormal.sample(&mut r))
        .collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut perturbed = initial.clone();
    for (x, d) in perturbed.x[n_in..].iter_mut().zip(&dir) {
        *x += s.twin_epsilon * d / norm;
    }
    let a = run_closed_loop(system, None, initial, s.twin_duration_ms, 1).stage("twin run")?;
    let b = run_closed_loop(system, None, &perturbed, s.twin_duration_ms, 1).stage("twin run")?;
    let dt = cfg.network.dt;
    let (sa, sb) = (&a.trajectory.symbols, &b.trajectory.symbols);
    let first = sa.iter().zip(sb).position(|(x, y)| x != y);
    let from = (s.twin_compare_from_ms / dt).round() as usize;
    let diverged = sa.iter().zip(sb).skip(from).any(|(x, y)| x != y);
    Ok(TwinReport {
        epsilon: s.twin_epsilon,
        first_difference_ms: first.map(|k| k as f64 * dt),
        diverged,
    })
}

fn grid_artifacts(
    cfg: &ExperimentConfig,
    system: &ClosedLoop<'_>,
    art: &mut Artifacts,
) -> Result<Vec<GridSummary>> {
    let a = &cfg.analysis;
    if a.grid_horizons_ms.is_empty() {
        return Err(CliError::Config(
            "analysis.grid_horizons_ms is empty".into(),
        ));
    }
    let net = system.network;
    let mut r = rng::stream(cfg.seed, tag::GRID, 0);
    let start = net
        .washout(cfg.step3.washout_ms, Some(0), &mut r)
        .stage("grid")?;
    let settle_steps = net.config().steps(a.grid_settle_ms).max(1);
    let settled =
        run_closed_loop(system, None, &start, a.grid_settle_ms, settle_steps).stage("grid")?;
    let mut center = settled.final_state.state;
    center.t = 0.0;
    let grids =
        terminal_symbol_grid(system, &center, &a.grid, &a.grid_horizons_ms).stage("grid")?;
    let mut out = Vec::with_capacity(grids.len());
    for g in &grids {
        let entropy_bits = grid_entropy(g).stage("grid entropy")?;
        info!(
            "grid at {} ms: entropy {entropy_bits:.3} bits",
            g.horizon_ms
        );
        art.csv(&format!("grid_{}.csv", g.horizon_ms), |o| g.write_csv(o))?;
        out.push(GridSummary {
            horizon_ms: g.horizon_ms,
            entropy_bits,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Analysis {
    Mle,
    Lle,
    Timer,
    Grid,
    Spectrum,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LleSummary {
    pub symbol: SymbolId,
    pub trained: LleCurve,
    pub untrained: LleCurve,
    /// Minimum of the trained curve over `[0, L_innate)`.
    pub trained_min: f64,
    /// Minimum of the untrained curve for `t > 50 ms` within the grid.
    pub untrained_min_after_50: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub trained: f64,
    pub untrained: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AnalyzeReport {
    pub mle: Option<LyapunovReport>,
    pub lle: Option<LleSummary>,
    pub timer: Option<TimerReport>,
    pub grid: Option<Vec<GridSummary>>,
    pub spectrum: Option<SpectrumReport>,
}

fn radius(net: &Network) -> Result<f64> {
    let m = net.j_ch().to_dense() * net.config().g_ch;
    spectral_radius(&m).stage("spectral radius")
}

/// Run the selected analyses on the saved model.
pub fn analyze(cfg: &ExperimentConfig, which: &[Analysis]) -> Result<AnalyzeReport> {
    cfg.validate()?;
    if which.contains(&Analysis::Timer) && cfg.analysis.timer_t_peak.is_empty() {
        return Err(CliError::Config("analysis.timer_t_peak is empty".into()));
    }
    let (container, net, _) = load_model(cfg)?;
    let a = &cfg.analysis;
    let mut report = AnalyzeReport::default();
    let mut art = Artifacts::default();
    let untrained = if which
        .iter()
        .any(|w| matches!(w, Analysis::Lle | Analysis::Spectrum))
    {
        Some(build_untrained(cfg)?.0)
    } else {
        None
    };
    for w in which {
        match w {
            Analysis::Mle => {
                let initial = analysis::lyapunov::washed_out_states(
                    &net,
                    a.mle.n_trials,
                    a.mle.washout_ms,
                    cfg.seed,
                )
                .stage("MLE")?;
                let system = FreeRun {
                    network: &net,
                    input: None,
                };
                let m = max_lyapunov(&system, &initial, &a.mle, cfg.seed).stage("MLE")?;
                info!("free-running MLE {:.4e} per ms", m.mle);
                report.mle = Some(m);
            }
            Analysis::Lle => {
                let symbol = cfg.lle_symbol()?;
                let trained =
                    local_lyapunov(&net, symbol, &a.lle_t_grid, &a.lle, cfg.seed).stage("LLE")?;
                let base = untrained.as_ref().expect("built above");
                let plain =
                    local_lyapunov(base, symbol, &a.lle_t_grid, &a.lle, cfg.seed).stage("LLE")?;
                let summary = LleSummary {
                    symbol,
                    trained_min: trained.min_over(0.0, cfg.l_innate_ms),
                    untrained_min_after_50: plain.min_over(50.0 + 1e-9, f64::INFINITY),
                    trained,
                    untrained: plain,
                };
                art.csv("lle_trained.csv", |o| summary.trained.write_csv(o))?;
                art.csv("lle_untrained.csv", |o| summary.untrained.write_csv(o))?;
                report.lle = Some(summary);
            }
            Analysis::Timer => {
                let t =
                    timer_task(&net, &a.timer_t_peak, &a.timer, cfg.seed).stage("timer task")?;
                info!("timer capacity {:.2} ms", t.capacity);
                art.csv("timer.csv", |o| t.write_csv(o))?;
                report.timer = Some(t);
            }
            Analysis::Grid => {
                let classifier = container.classifier().stage("grid")?;
                let system = ClosedLoop::new(&net, &classifier, cfg.step3.hold_ms).stage("grid")?;
                report.grid = Some(grid_artifacts(cfg, &system, &mut art)?);
            }
            Analysis::Spectrum => {
                let s = SpectrumReport {
                    trained: radius(&net)?,
                    untrained: radius(untrained.as_ref().expect("built above"))?,
                };
                info!(
                    "spectral radius: trained {:.4}, untrained {:.4}",
                    s.trained, s.untrained
                );
                report.spectrum = Some(s);
            }
        }
    }
    art.json("analysis.json", &report)?;
    art.commit(&cfg.output_dir, None)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunAllReport {
    pub step1: Step1Report,
    pub step2: Step2Report,
    pub step3: Step3Report,
    pub analysis: AnalyzeReport,
}

pub fn run_all(cfg: &ExperimentConfig) -> Result<RunAllReport> {
    let (_, step1) = step1(cfg)?;
    let (_, step2) = step2(cfg)?;
    let (_, step3) = step3(cfg)?;
    let analysis = analyze(
        cfg,
        &[
            Analysis::Mle,
            Analysis::Lle,
            Analysis::Timer,
            Analysis::Grid,
            Analysis::Spectrum,
        ],
    )?;
    Ok(RunAllReport {
        step1,
        step2,
        step3,
        analysis,
    })
}
