//! Diagnostics: Lyapunov exponents, timer task, transition statistics,
//! terminal-symbol grids and spectral radius.

pub mod grid;
pub mod lyapunov;
pub mod spectrum;
pub mod timer;
pub mod transitions;

pub use grid::{grid_entropy, terminal_symbol_grid, GridPlane, SymbolGrid};
pub use lyapunov::{
    lle_curve, local_lyapunov, max_lyapunov, Autonomous, FreeRun, LinearContraction, LleConfig,
    LleCurve, LyapunovReport, MleConfig,
};
pub use spectrum::spectral_radius;
pub use timer::{r_squared, timer_capacity, timer_task, TimerConfig, TimerReport};
pub use transitions::{
    detect_period, follows_cycle, mean_period_ms, runs, transition_stats, TransitionStats,
};
