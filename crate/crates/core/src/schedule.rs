//! Open-loop symbol schedules and the finite state machines they are drawn from.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of a symbol in `0..M`.
pub type SymbolId = usize;

/// Display label for a symbol: `A`, `B`, … `Z`, then `S26`, `S27`, ….
pub fn symbol_label(id: SymbolId) -> String {
    if id < 26 {
        char::from(b'A' + id as u8).to_string()
    } else {
        format!("S{id}")
    }
}

/// Parse a label produced by [`symbol_label`] (or a bare integer).
pub fn parse_symbol(s: &str) -> Result<SymbolId> {
    let s = s.trim();
    if let Ok(n) = s.parse::<usize>() {
        return Ok(n);
    }
    let bytes = s.as_bytes();
    if bytes.len() == 1 && bytes[0].is_ascii_uppercase() {
        return Ok((bytes[0] - b'A') as usize);
    }
    if let Some(rest) = s.strip_prefix('S') {
        if let Ok(n) = rest.parse::<usize>() {
            return Ok(n);
        }
    }
    Err(Error::InvalidArgument(format!("unrecognized symbol `{s}`")))
}

/// Piecewise-constant symbol input over `[0, duration)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolSchedule {
    breakpoints: Vec<(f64, SymbolId)>,
    duration: f64,
}

impl SymbolSchedule {
    pub fn new(breakpoints: Vec<(f64, SymbolId)>, duration: f64) -> Result<Self> {
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "schedule duration must be positive, got {duration}"
            )));
        }
        match breakpoints.first() {
            Some(&(0.0, _)) => {}
            _ => {
                return Err(Error::InvalidArgument(
                    "schedule must start with a breakpoint at t = 0".into(),
                ))
            }
        }
        if breakpoints.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidArgument(
                "schedule breakpoints must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            breakpoints,
            duration,
        })
    }

    pub fn constant(symbol: SymbolId, duration: f64) -> Result<Self> {
        Self::new(vec![(0.0, symbol)], duration)
    }

    pub fn breakpoints(&self) -> &[(f64, SymbolId)] {
        &self.breakpoints
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn max_symbol(&self) -> SymbolId {
        self.breakpoints.iter().map(|b| b.1).max().unwrap_or(0)
    }

    pub fn symbol_at(&self, t: f64) -> SymbolId {
        let idx = self.breakpoints.partition_point(|&(tb, _)| tb <= t);
        self.breakpoints[idx.saturating_sub(1)].1
    }

    /// Symbol for each integration step `k` (time `k * dt`).
    pub fn per_step(&self, dt: f64) -> Vec<SymbolId> {
        let n = (self.duration / dt).round() as usize;
        let mut out = Vec::with_capacity(n);
        let mut bp = 0;
        for k in 0..n {
            let t = k as f64 * dt;
            while bp + 1 < self.breakpoints.len() && self.breakpoints[bp + 1].0 <= t + 1e-9 * dt {
                bp += 1;
            }
            out.push(self.breakpoints[bp].1);
        }
        out
    }
}

/// Cycle through `sequence`, dwelling `dwell_ms` on each symbol.
pub fn make_periodic_schedule(
    sequence: &[SymbolId],
    dwell_ms: f64,
    duration: f64,
) -> Result<SymbolSchedule> {
    if sequence.is_empty() {
        return Err(Error::InvalidArgument("periodic sequence is empty".into()));
    }
    if !(dwell_ms > 0.0) {
        return Err(Error::InvalidArgument("dwell interval must be > 0".into()));
    }
    let mut bps: Vec<(f64, SymbolId)> = Vec::new();
    let mut k = 0usize;
    loop {
        let t = k as f64 * dwell_ms;
        if t >= duration {
            break;
        }
        let s = sequence[k % sequence.len()];
        if bps.last().is_none_or(|&(_, prev)| prev != s) {
            bps.push((t, s));
        }
        k += 1;
    }
    SymbolSchedule::new(bps, duration)
}

/// Target transition rule: a row-stochastic matrix applied every `dwell_ms`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fsm {
    pub transition: Vec<Vec<f64>>,
    pub dwell_ms: f64,
}

impl Fsm {
    pub fn new(transition: Vec<Vec<f64>>, dwell_ms: f64) -> Result<Self> {
        let fsm = Self {
            transition,
            dwell_ms,
        };
        fsm.validate()?;
        Ok(fsm)
    }

    /// Uniform switching among `m` symbols; without self-loops every boundary
    /// changes the symbol and each off-diagonal entry is `1 / (m - 1)`.
    pub fn uniform(m: usize, self_loops: bool, dwell_ms: f64) -> Result<Self> {
        if m == 0 || (!self_loops && m < 2) {
            return Err(Error::InvalidArgument(
                "uniform FSM without self-loops needs at least two symbols".into(),
            ));
        }
        let transition = (0..m)
            .map(|i| {
                (0..m)
                    .map(|j| match (self_loops, i == j) {
                        (true, _) => 1.0 / m as f64,
                        (false, true) => 0.0,
                        (false, false) => 1.0 / (m - 1) as f64,
                    })
                    .collect()
            })
            .collect();
        Self::new(transition, dwell_ms)
    }

    pub fn n_symbols(&self) -> usize {
        self.transition.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.transition.len();
        if m == 0 {
            return Err(Error::InvalidArgument("FSM has no states".into()));
        }
        if !(self.dwell_ms > 0.0) {
            return Err(Error::InvalidArgument(
                "FSM dwell interval must be > 0".into(),
            ));
        }
        for (i, row) in self.transition.iter().enumerate() {
            if row.len() != m {
                return Err(Error::InvalidArgument(format!(
                    "FSM row {i} has wrong length"
                )));
            }
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "FSM row {i} has a negative entry"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!(
                    "FSM row {i} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(())
    }

    pub fn next<R: Rng + ?Sized>(&self, from: SymbolId, rng: &mut R) -> SymbolId {
        let row = &self.transition[from];
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last_positive = from;
        for (j, &p) in row.iter().enumerate() {
            if p > 0.0 {
                last_positive = j;
                acc += p;
                if u < acc {
                    return j;
                }
            }
        }
        last_positive
    }
}

/// Draw a symbol chain from `fsm`, one decision per dwell interval. The first
/// symbol is uniform over the states.
pub fn sample_fsm_schedule<R: Rng + ?Sized>(
    fsm: &Fsm,
    duration: f64,
    rng: &mut R,
) -> Result<SymbolSchedule> {
    fsm.validate()?;
    let mut current = rng.random_range(0..fsm.n_symbols());
    let mut bps = vec![(0.0, current)];
    let mut k = 1usize;
    loop {
        let t = k as f64 * fsm.dwell_ms;
        if t >= duration {
            break;
        }
        let next = fsm.next(current, rng);
        if next != current {
            bps.push((t, next));
            current = next;
        }
        k += 1;
    }
    SymbolSchedule::new(bps, duration)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn periodic_abc() {
        let s = make_periodic_schedule(&[0, 1, 2], 2000.0, 12000.0).unwrap();
        let times: Vec<f64> = s.breakpoints().iter().map(|b| b.0).collect();
        assert_eq!(times, vec![0.0, 2000.0, 4000.0, 6000.0, 8000.0, 10000.0]);
        assert_eq!(s.symbol_at(6000.0), 0);
        assert_eq!(s.symbol_at(5999.0), 2);
    }

    #[test]
    fn periodic_single_symbol_is_constant() {
        let s = make_periodic_schedule(&[1], 500.0, 3000.0).unwrap();
        assert_eq!(s.breakpoints(), &[(0.0, 1)]);
    }

    #[test]
    fn periodic_abcb_has_8000_ms_period() {
        let s = make_periodic_schedule(&[0, 1, 2, 1], 2000.0, 16000.0).unwrap();
        for t in (0..8000).step_by(250) {
            let t = t as f64;
            assert_eq!(s.symbol_at(t), s.symbol_at(t + 8000.0));
        }
        let per_period = s
            .breakpoints()
            .iter()
            .filter(|b| b.0 < 8000.0 && b.1 == 1)
            .count();
        assert_eq!(per_period, 2);
    }

    #[test]
    fn per_step_follows_breakpoints() {
        let s = make_periodic_schedule(&[0, 1], 3.0, 10.0).unwrap();
        assert_eq!(s.per_step(1.0), vec![0, 0, 0, 1, 1, 1, 0, 0, 0, 1]);
    }

    #[test]
    fn rejects_bad_schedules() {
        assert!(SymbolSchedule::new(vec![(1.0, 0)], 10.0).is_err());
        assert!(SymbolSchedule::new(vec![(0.0, 0), (0.0, 1)], 10.0).is_err());
        assert!(SymbolSchedule::new(vec![(0.0, 0)], 0.0).is_err());
        assert!(make_periodic_schedule(&[], 1.0, 10.0).is_err());
    }

    #[test]
    fn uniform_pattern_frequencies() {
        let fsm = Fsm::uniform(3, false, 1.0).unwrap();
        let mut r = rng::stream(1, rng::tag::SCHEDULE, 0);
        let s = sample_fsm_schedule(&fsm, 10_001.0, &mut r).unwrap();
        let bps = s.breakpoints();
        assert_eq!(bps.len(), 10_001);
        let mut counts = [[0usize; 3]; 3];
        for w in bps.windows(2) {
            counts[w[0].1][w[1].1] += 1;
        }
        for (i, row) in counts.iter().enumerate() {
            let total: usize = row.iter().sum();
            assert_eq!(row[i], 0);
            for (j, &c) in row.iter().enumerate() {
                if i != j {
                    let p = c as f64 / total as f64;
                    assert!((p - 0.5).abs() < 0.05, "P({i}->{j}) = {p}");
                }
            }
        }
    }

    #[test]
    fn deterministic_fsm_is_periodic() {
        let fsm = Fsm::new(
            vec![
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
                vec![1.0, 0.0, 0.0],
            ],
            100.0,
        )
        .unwrap();
        let mut r = rng::stream(3, rng::tag::SCHEDULE, 0);
        let s = sample_fsm_schedule(&fsm, 1000.0, &mut r).unwrap();
        let seq: Vec<_> = s.breakpoints().iter().map(|b| b.1).collect();
        for w in seq.windows(2) {
            assert_eq!(w[1], (w[0] + 1) % 3);
        }
        assert_eq!(seq.len(), 10);
    }

    #[test]
    fn short_duration_single_symbol() {
        let fsm = Fsm::uniform(3, false, 3000.0).unwrap();
        let mut r = rng::stream(0, rng::tag::SCHEDULE, 0);
        let s = sample_fsm_schedule(&fsm, 2000.0, &mut r).unwrap();
        assert_eq!(s.breakpoints().len(), 1);
    }

    #[test]
    fn fsm_row_sums_checked() {
        assert!(Fsm::new(vec![vec![0.5, 0.4], vec![0.0, 1.0]], 1.0).is_err());
        assert!(Fsm::new(vec![vec![1.5, -0.5], vec![0.0, 1.0]], 1.0).is_err());
    }

    #[test]
    fn labels_round_trip() {
        for id in [0, 2, 25, 26, 40] {
            assert_eq!(parse_symbol(&symbol_label(id)).unwrap(), id);
        }
        assert_eq!(symbol_label(1), "B");
    }
}
