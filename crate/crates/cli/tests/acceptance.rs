//! End-to-end acceptance checks at desk scale. Each test prints one
//! `[PASS]`/`[FAIL]` line (straight to stderr, so it shows even when output
//! is captured) and then asserts.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};

use itinerant_cli::commands::{self, Step2Report, Step3Report};
use itinerant_cli::config::FsmSpec;
use itinerant_cli::{Analysis, ExperimentConfig};
use itinerant_core::analysis::lyapunov::washed_out_states;
use itinerant_core::analysis::{
    grid_entropy, lle_curve, local_lyapunov, max_lyapunov, spectral_radius, timer_task, FreeRun,
    GridPlane, LinearContraction, LleConfig, MleConfig, SymbolGrid, TimerConfig,
};
use itinerant_core::innate::{
    endpoint_divergence, innate_train, record_innate_targets, rls_update, InnateConfig,
    InnateTargets, TrainReport,
};
use itinerant_core::linalg::SampleMatrix;
use itinerant_core::readout::{train_readout, LabeledRollout, TargetKind, TargetSignal};
use itinerant_core::{BridgeConfig, Network, SimConfig};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(id: u32, pass: bool, detail: String) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(
        std::io::stderr(),
        "acceptance criterion {id:>2} [{tag}] {detail}"
    );
    assert!(pass, "criterion {id}: {detail}");
}

fn scratch_dir() -> &'static Path {
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    DIR.get_or_init(|| tempfile::tempdir().expect("temp dir"))
        .path()
}

fn desk(n_ch: usize, seed: u64) -> SimConfig {
    SimConfig {
        n_ch,
        ..SimConfig::desk()
    }
    .with_seed(seed)
}

fn untrained(cfg: SimConfig, m: usize) -> Network {
    Network::build(cfg, m)
        .and_then(|n| n.tune_input_bridge(&BridgeConfig::default()))
        .expect("bridge")
        .0
}

struct Trained {
    untrained: Network,
    trained: Network,
    targets: InnateTargets,
    report: TrainReport,
}

type Cache = Mutex<HashMap<(usize, usize, u64, u64), Arc<Trained>>>;

/// Innate-trained desk networks, built once per `(n_ch, M, L, seed)`.
fn trained(n_ch: usize, m: usize, l_innate: f64, seed: u64) -> Arc<Trained> {
    static CACHE: OnceLock<Cache> = OnceLock::new();
    let mut cache = CACHE
        .get_or_init(Default::default)
        .lock()
        .unwrap_or_else(|e| e.into_inner());
    cache
        .entry((n_ch, m, l_innate as u64, seed))
        .or_insert_with(|| {
            let net = untrained(desk(n_ch, seed), m);
            let cfg = InnateConfig {
                epochs: 50,
                ..Default::default()
            };
            let targets =
                record_innate_targets(&net, l_innate, cfg.washout_ms, seed).expect("targets");
            let (trained, report) = innate_train(&net, &targets, &cfg).expect("innate training");
            Arc::new(Trained {
                untrained: net,
                trained,
                targets,
                report,
            })
        })
        .clone()
}

#[test]
fn c01_chaos_gate() {
    let cfg = MleConfig {
        interval_ms: 200.0,
        horizon_ms: 100_000.0,
        l_pert: 1e-6,
        n_trials: 2,
        washout_ms: 1000.0,
    };
    let mle = |g_ch: f64| {
        let net = Network::build(
            SimConfig {
                g_ch,
                ..desk(300, 1)
            },
            1,
        )
        .unwrap();
        let initial = washed_out_states(&net, cfg.n_trials, cfg.washout_ms, 1).unwrap();
        let sys = FreeRun {
            network: &net,
            input: None,
        };
        max_lyapunov(&sys, &initial, &cfg, 1).unwrap().mle
    };
    let (hi, lo) = (mle(1.5), mle(0.5));
    verdict(
        1,
        hi > 0.0 && lo < 0.0,
        format!("MLE(g=1.5) = {hi:.4e}, MLE(g=0.5) = {lo:.4e}"),
    );
}

#[test]
fn c02_lyapunov_oracles() {
    let sys = LinearContraction { tau: 10.0, dt: 1.0 };
    let cfg = MleConfig {
        interval_ms: 50.0,
        horizon_ms: 2000.0,
        n_trials: 3,
        ..Default::default()
    };
    let initial = vec![vec![0.5; 20]; cfg.n_trials];
    let mle = max_lyapunov(&sys, &initial, &cfg, 2).unwrap().mle;
    let grid: Vec<f64> = (0..=20).map(|k| k as f64 * 10.0).collect();
    let curve = lle_curve(&sys, &initial, 0..20, 1e-6, &grid, 2).unwrap();
    let worst = curve
        .t
        .iter()
        .zip(&curve.lle)
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, v)| ((v - (-t / 10.0)) / (t / 10.0)).abs())
        .fold(0.0, f64::max);
    let ok = (mle + 0.1).abs() <= 1e-3 && worst <= 0.01;
    verdict(
        2,
        ok,
        format!("MLE = {mle:.6} (expect -0.1), worst LLE relative error {worst:.2e}"),
    );
}

#[test]
fn c03_rls_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let d = 5;
    let mut p = DMatrix::<f64>::identity(d, d);
    let mut sum = DMatrix::<f64>::identity(d, d);
    for _ in 0..1000 {
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let xv = nalgebra::DVector::from_column_slice(&x);
        sum += &xv * xv.transpose();
        p = rls_update(&p, &x, 0.0).unwrap().1;
    }
    let direct = sum.try_inverse().unwrap();
    let err = (&p - &direct).abs().max();
    verdict(
        3,
        err <= 1e-8,
        format!("max |P - inv(I + sum x x^T)| = {err:.2e}"),
    );
}

#[test]
fn c04_innate_efficacy() {
    let t = trained(300, 1, 300.0, 1);
    let before = t.report.nmse_before;
    let after = t.report.nmse_after;
    let div = |net: &Network| endpoint_divergence(net, &t.targets, 10, 1000.0, 7).unwrap();
    let (d0, d1) = (div(&t.untrained), div(&t.trained));
    let ok = after <= 0.2 * before && d1 * 2.0 <= d0;
    verdict(
        4,
        ok,
        format!("NMSE {before:.4} -> {after:.4} (need <= {:.4}); endpoint divergence {d0:.3e} -> {d1:.3e}", 0.2 * before),
    );
}

#[test]
fn c05_scaling_trend() {
    let mean = |n_ch: usize| {
        (1..=3)
            .map(|s| trained(n_ch, 1, 300.0, s).report.nmse_after)
            .sum::<f64>()
            / 3.0
    };
    let (small, large) = (mean(100), mean(300));
    verdict(
        5,
        large <= small,
        format!("mean NMSE n_ch=100: {small:.4}, n_ch=300: {large:.4}"),
    );
}

#[test]
fn c06_readout() {
    // ridge against an independent normal-equations solve
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (n, d, steps) = (12, 2, 200);
    let mut rollouts = Vec::new();
    for s in 0..2 {
        let mut states = SampleMatrix::new(n);
        for _ in 0..steps {
            let row: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            states.push_row(&row);
        }
        rollouts.push(LabeledRollout { symbol: s, states });
    }
    let targets: Vec<TargetSignal> = (0..2)
        .map(|s| {
            itinerant_core::readout::generate_target(
                &TargetKind::lissajous(1.0 + s as f64, 2.0, 0.0),
                steps as f64,
                1.0,
            )
            .unwrap()
        })
        .collect();
    let alpha = 0.5;
    let readout = train_readout(&rollouts, &targets, alpha).unwrap();
    let mut x = DMatrix::zeros(2 * steps, n);
    let mut f = DMatrix::zeros(2 * steps, d);
    for (s, r) in rollouts.iter().enumerate() {
        for k in 0..steps {
            for j in 0..n {
                x[(s * steps + k, j)] = r.states.row(k)[j];
            }
            for j in 0..d {
                f[(s * steps + k, j)] = targets[s].samples.row(k)[j];
            }
        }
    }
    let a = x.transpose() * &x + DMatrix::identity(n, n) * alpha;
    let w = a.lu().solve(&(x.transpose() * &f)).unwrap();
    let oracle_err = (readout.w_out.transpose() - w).abs().max();

    let fx = step_fixture();
    let nmse = &fx.step1.readout_nmse;
    let worst = nmse.iter().cloned().fold(0.0, f64::max);
    let ok = oracle_err <= 1e-8 && worst < 0.3;
    verdict(
        6,
        ok,
        format!("ridge vs normal equations {oracle_err:.2e}; Lissajous test NMSE {nmse:.4?}"),
    );
}

#[test]
fn c07_timer_trend() {
    let grid: Vec<f64> = (1..=100).map(|k| k as f64 * 50.0).collect();
    let cfg = TimerConfig {
        n_train_trials: 10,
        n_test_trials: 10,
        ..Default::default()
    };
    let short = timer_task(&trained(300, 1, 300.0, 1).trained, &grid, &cfg, 7).unwrap();
    let long = timer_task(&trained(300, 1, 1000.0, 1).trained, &grid, &cfg, 7).unwrap();
    let near = short.r2_at(100.0).unwrap();
    let far = short.r2_at(3000.0).unwrap();
    let ok = near >= 0.8 && near - far >= 0.3 && long.capacity > short.capacity;
    verdict(
        7,
        ok,
        format!(
            "L=300: R2(100) = {near:.3}, R2(3000) = {far:.3}; capacity L=300 {:.1} ms, L=1000 {:.1} ms",
            short.capacity, long.capacity
        ),
    );
}

#[test]
fn c08_lle_structure() {
    let t = trained(300, 1, 300.0, 1);
    let grid: Vec<f64> = (0..=100).map(|k| k as f64 * 10.0).collect();
    let cfg = LleConfig::default();
    let tr = local_lyapunov(&t.trained, 0, &grid, &cfg, 8).unwrap();
    let un = local_lyapunov(&t.untrained, 0, &grid, &cfg, 8).unwrap();
    let trained_min = tr.min_over(0.0, 300.0);
    let untrained_min = un.min_over(50.0 + 1e-9, f64::INFINITY);
    let ok = trained_min < 0.0 && untrained_min >= 0.0;
    verdict(
        8,
        ok,
        format!("trained min LLE on [0, 300) = {trained_min:.3}; untrained min LLE for t > 50 = {untrained_min:.3}"),
    );
}

struct StepFixture {
    base: ExperimentConfig,
    step1: commands::Step1Report,
}

/// Desk-scale step-1 model shared by the closed-loop criteria.
fn step_fixture() -> &'static StepFixture {
    static FX: OnceLock<StepFixture> = OnceLock::new();
    FX.get_or_init(|| {
        let mut cfg = ExperimentConfig {
            l_innate_ms: 300.0,
            output_dir: scratch_dir().join("step1"),
            ..Default::default()
        };
        cfg.readout.l_out_ms = 1000.0;
        cfg.analysis.mle.n_trials = 2;
        let (_, step1) = commands::step1(&cfg).expect("step 1");
        StepFixture { base: cfg, step1 }
    })
}

/// Config writing to its own directory, seeded with the shared step-1 model.
fn derived(name: &str, edit: impl FnOnce(&mut ExperimentConfig)) -> ExperimentConfig {
    let fx = step_fixture();
    let mut cfg = fx.base.clone();
    cfg.output_dir = scratch_dir().join(name);
    edit(&mut cfg);
    std::fs::create_dir_all(&cfg.output_dir).unwrap();
    std::fs::copy(fx.base.model_path(), cfg.model_path()).unwrap();
    cfg
}

#[test]
fn c09_periodic_embedding() {
    let cfg = derived("abc", |c| {
        c.step2.dwell_ms = 1000.0;
        c.step2.closed_loop_ms = 60_000.0;
    });
    let (_, r): (_, Step2Report) = commands::step2(&cfg).unwrap();
    let cl = &r.closed_loop;
    let dwell = cl.dwell_mean_ms.unwrap_or(f64::NAN);
    let mle = cl.mle.mle;
    let ok = cl.stats.n_switches >= 50
        && (dwell - 1000.0).abs() <= 100.0
        && r.order_matches
        && mle.abs() < 1e-2;
    verdict(
        9,
        ok,
        format!(
            "{} switches, mean dwell {dwell:.1} ms, order exact: {}, MLE {mle:.3e}",
            cl.stats.n_switches, r.order_matches
        ),
    );
}

#[test]
fn c10_higher_order_sequence() {
    let cfg = derived("abcb", |c| {
        c.step2.sequence = ["A", "B", "C", "B"].map(String::from).to_vec();
        c.step2.dwell_ms = 1000.0;
        c.step2.closed_loop_ms = 90_000.0;
    });
    let (_, r) = commands::step2(&cfg).unwrap();
    let periods = r.closed_loop.stats.n_switches / 4;
    let period_ms = r.period_ms.unwrap_or(f64::NAN);
    let ok = r.order_matches
        && r.period_runs == Some(4)
        && periods >= 20
        && (period_ms - 4000.0).abs() <= 400.0;
    verdict(
        10,
        ok,
        format!(
            "order exact: {}, period {:?} runs / {period_ms:.1} ms, {periods} periods",
            r.order_matches, r.period_runs
        ),
    );
}

fn step3_fixture() -> &'static Step3Report {
    static FX: OnceLock<Step3Report> = OnceLock::new();
    FX.get_or_init(|| {
        let cfg = derived("pattern1", |c| {
            c.step3.fsm = FsmSpec::Uniform { self_loops: false };
            c.step3.dwell_ms = 1500.0;
            c.step3.closed_loop_ms = 200_000.0;
            c.step3.twin_compare_from_ms = 10_000.0;
            c.step3.twin_duration_ms = 30_000.0;
            c.step3.grid = true;
            c.analysis.grid_horizons_ms = vec![1000.0, 20_000.0];
            c.analysis.grid.extent = 0.01;
        });
        commands::step3(&cfg).unwrap().1
    })
}

#[test]
fn c11_stochastic_embedding() {
    let r = step3_fixture();
    let cl = &r.closed_loop;
    let p = &cl.stats.probabilities;
    let worst = (0..3)
        .flat_map(|i| (0..3).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| (p[i][j] - 0.5).abs())
        .fold(0.0, f64::max);
    let nmse: Vec<f64> = cl
        .output_nmse
        .iter()
        .map(|v| v.unwrap_or(f64::INFINITY))
        .collect();
    let ok = cl.stats.n_switches >= 100
        && worst <= 0.15
        && cl.mle.mle > 0.0
        && r.twin.diverged
        && nmse.iter().all(|&v| v < 0.5);
    verdict(
        11,
        ok,
        format!(
            "{} switches, worst off-diagonal |p - 0.5| = {worst:.3}, MLE {:.3e}, twins diverge: {}, output NMSE {nmse:.3?}",
            cl.stats.n_switches, cl.mle.mle, r.twin.diverged
        ),
    );
}

#[test]
fn c12_grid_entropy() {
    let r = step3_fixture();
    let h = |ms: f64| {
        r.grids
            .iter()
            .find(|g| g.horizon_ms == ms)
            .map(|g| g.entropy_bits)
            .unwrap()
    };
    let (early, late) = (h(1000.0), h(20_000.0));
    let max = 9.0 * 3f64.log2();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 1000;
    let random = SymbolGrid {
        plane: GridPlane {
            resolution: n,
            ..Default::default()
        },
        horizon_ms: 0.0,
        n_symbols: 3,
        cells: (0..n * n).map(|_| Some(rng.random_range(0..3))).collect(),
    };
    let oracle = grid_entropy(&random).unwrap();
    let ok = late >= 3.0 * early && late <= max + 1e-9 && (oracle - max).abs() <= 0.3;
    verdict(
        12,
        ok,
        format!("entropy at 1000 ms {early:.3} bits, at 20000 ms {late:.3} bits; random-grid oracle {oracle:.3} bits"),
    );
}

#[test]
fn c13_spectral_radius_trend() {
    let radius = |l: f64| {
        let net = &trained(300, 1, l, 1).trained;
        spectral_radius(&(net.j_ch().to_dense() * net.config().g_ch)).unwrap()
    };
    let (short, long) = (radius(150.0), radius(1000.0));
    verdict(
        13,
        short >= long,
        format!("radius L=150: {short:.4}, L=1000: {long:.4}"),
    );
}

fn tiny_config(out: PathBuf) -> ExperimentConfig {
    let mut c = ExperimentConfig {
        output_dir: out,
        network: SimConfig {
            n_in: 20,
            n_ch: 60,
            ..SimConfig::desk()
        },
        n_symbols: 2,
        l_innate_ms: 100.0,
        ..Default::default()
    };
    c.innate.epochs = 2;
    c.innate.nmse_trials = 2;
    c.readout.l_out_ms = 200.0;
    c.readout.n_trials = 2;
    c.readout.n_test_trials = 1;
    c.step2.sequence = vec!["A".into(), "B".into()];
    c.step2.dwell_ms = 200.0;
    c.step2.t_rec_ms = 4000.0;
    c.step2.closed_loop_ms = 4000.0;
    c.step3.dwell_ms = 200.0;
    c.step3.t_rec_ms = 4000.0;
    c.step3.closed_loop_ms = 4000.0;
    c.step3.twin_duration_ms = 2000.0;
    c.step3.twin_compare_from_ms = 1000.0;
    c.step3.grid = true;
    c.analysis.mle = MleConfig {
        interval_ms: 100.0,
        horizon_ms: 2000.0,
        n_trials: 2,
        ..Default::default()
    };
    c.analysis.lle.n_trials = 2;
    c.analysis.lle_t_grid = vec![0.0, 50.0, 100.0];
    c.analysis.timer.n_train_trials = 2;
    c.analysis.timer.n_test_trials = 2;
    c.analysis.timer_t_peak = vec![20.0, 50.0, 100.0];
    c.analysis.grid.resolution = 5;
    c.analysis.grid_horizons_ms = vec![100.0, 400.0];
    c.analysis.grid_settle_ms = 500.0;
    c
}

fn all_commands(cfg: &ExperimentConfig) -> Vec<(String, Vec<u8>)> {
    commands::step1(cfg).unwrap();
    commands::step2(cfg).unwrap();
    commands::step3(cfg).unwrap();
    commands::analyze(
        cfg,
        &[
            Analysis::Mle,
            Analysis::Lle,
            Analysis::Timer,
            Analysis::Grid,
            Analysis::Spectrum,
        ],
    )
    .unwrap();
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&cfg.output_dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn c14_determinism() {
    let a = all_commands(&tiny_config(scratch_dir().join("det_a")));
    let b = all_commands(&tiny_config(scratch_dir().join("det_b")));
    let names: Vec<&str> = a.iter().map(|f| f.0.as_str()).collect();
    let differing: Vec<&str> = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    let ok = a.len() == b.len() && differing.is_empty() && names.contains(&"model.cbor");
    verdict(
        14,
        ok,
        format!("{} files compared, differing: {differing:?}", a.len()),
    );
}
