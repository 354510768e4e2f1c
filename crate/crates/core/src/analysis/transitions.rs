//! Switch statistics of a symbol stream.

use serde::{Deserialize, Serialize};

use crate::schedule::SymbolId;

/// Run-length encoding of a per-step stream: `(symbol, steps)`.
pub fn runs(stream: &[SymbolId]) -> Vec<(SymbolId, usize)> {
    let mut out: Vec<(SymbolId, usize)> = Vec::new();
    for &s in stream {
        match out.last_mut() {
            Some((last, n)) if *last == s => *n += 1,
            _ => out.push((s, 1)),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionStats {
    /// `counts[from][to]` of observed switches.
    pub counts: Vec<Vec<usize>>,
    /// Row-normalized counts; rows with no outgoing switch are all zero.
    pub probabilities: Vec<Vec<f64>>,
    pub observed_rows: Vec<bool>,
    /// Mean and standard deviation (ms) of complete dwell episodes per
    /// symbol; the first and last runs are censored and excluded.
    pub dwell_mean: Vec<Option<f64>>,
    pub dwell_std: Vec<Option<f64>>,
    pub n_switches: usize,
}

impl TransitionStats {
    /// Mean dwell over all complete episodes regardless of symbol.
    pub fn overall_dwell_mean(&self, stream: &[SymbolId], dt: f64) -> Option<f64> {
        let r = runs(stream);
        if r.len() < 3 {
            return None;
        }
        let inner = &r[1..r.len() - 1];
        Some(inner.iter().map(|&(_, n)| n as f64 * dt).sum::<f64>() / inner.len() as f64)
    }
}

/// Count switches and dwell times in `stream` sampled every `dt` ms.
pub fn transition_stats(stream: &[SymbolId], dt: f64, n_symbols: usize) -> TransitionStats {
    let m = n_symbols.max(stream.iter().map(|&s| s + 1).max().unwrap_or(0));
    let r = runs(stream);
    let mut counts = vec![vec![0usize; m]; m];
    for w in r.windows(2) {
        counts[w[0].0][w[1].0] += 1;
    }
    let mut dwells: Vec<Vec<f64>> = vec![Vec::new(); m];
    if r.len() >= 3 {
        for &(s, n) in &r[1..r.len() - 1] {
            dwells[s].push(n as f64 * dt);
        }
    }
    let observed_rows: Vec<bool> = counts
        .iter()
        .map(|row| row.iter().any(|&c| c > 0))
        .collect();
    let probabilities = counts
        .iter()
        .map(|row| {
            let total: usize = row.iter().sum();
            row.iter()
                .map(|&c| {
                    if total > 0 {
                        c as f64 / total as f64
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let (dwell_mean, dwell_std) = dwells
        .iter()
        .map(|d| {
            if d.is_empty() {
                return (None, None);
            }
            let mean = d.iter().sum::<f64>() / d.len() as f64;
            let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d.len() as f64;
            (Some(mean), Some(var.sqrt()))
        })
        .unzip();
    TransitionStats {
        counts,
        probabilities,
        observed_rows,
        dwell_mean,
        dwell_std,
        n_switches: r.len().saturating_sub(1),
    }
}

/// Whether the run symbols visit `cycle` in order, starting anywhere in it.
/// Repeated neighbours in `cycle` are merged, since they form a single run.
pub fn follows_cycle(run_symbols: &[SymbolId], cycle: &[SymbolId]) -> bool {
    let mut c: Vec<SymbolId> = cycle.to_vec();
    c.dedup();
    while c.len() > 1 && c.first() == c.last() {
        c.pop();
    }
    if c.is_empty() {
        return run_symbols.is_empty();
    }
    (0..c.len()).any(|o| {
        run_symbols
            .iter()
            .enumerate()
            .all(|(i, &s)| s == c[(o + i) % c.len()])
    })
}

/// Smallest `p` such that the run symbols repeat with period `p` runs,
/// requiring at least two full repetitions.
pub fn detect_period(run_symbols: &[SymbolId]) -> Option<usize> {
    (1..=run_symbols.len() / 2)
        .find(|&p| (p..run_symbols.len()).all(|i| run_symbols[i] == run_symbols[i - p]))
}

/// Mean duration of `period` consecutive complete runs (first and last run
/// excluded), in ms.
pub fn mean_period_ms(stream: &[SymbolId], period: usize, dt: f64) -> Option<f64> {
    let r = runs(stream);
    if period == 0 || r.len() < period + 2 {
        return None;
    }
    let inner: Vec<f64> = r[1..r.len() - 1]
        .iter()
        .map(|&(_, n)| n as f64 * dt)
        .collect();
    let full = inner.len() / period;
    if full == 0 {
        return None;
    }
    Some(inner[..full * period].iter().sum::<f64>() / full as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn periodic(seq: &[usize], dwell: usize, periods: usize) -> Vec<usize> {
        (0..periods)
            .flat_map(|_| seq.iter().flat_map(move |&s| std::iter::repeat_n(s, dwell)))
            .collect()
    }

    #[test]
    fn periodic_cycle() {
        let st = transition_stats(&periodic(&[0, 1, 2], 2000, 4), 1.0, 3);
        assert_eq!(st.probabilities[0][1], 1.0);
        assert_eq!(st.probabilities[1][2], 1.0);
        assert_eq!(st.probabilities[2][0], 1.0);
        for s in 0..3 {
            assert_eq!(st.dwell_mean[s], Some(2000.0));
            assert_eq!(st.dwell_std[s], Some(0.0));
        }
        assert_eq!(st.n_switches, 11);
    }

    #[test]
    fn single_symbol_stream() {
        let st = transition_stats(&[1; 50], 1.0, 3);
        assert_eq!(st.n_switches, 0);
        assert!(st.observed_rows.iter().all(|o| !o));
        assert!(st.dwell_mean.iter().all(Option::is_none));
    }

    #[test]
    fn censored_runs_are_excluded() {
        // first run of 0 lasts 5 steps, last run of 0 lasts 1
        let stream = [0, 0, 0, 0, 0, 1, 1, 0, 0, 0, 1, 1, 0];
        let st = transition_stats(&stream, 2.0, 2);
        assert_eq!(st.dwell_mean[0], Some(6.0));
        assert_eq!(st.dwell_mean[1], Some(4.0));
        assert_eq!(runs(&stream)[0], (0, 5));
    }

    #[test]
    fn cycle_order_and_period() {
        let abcb = periodic(&[0, 1, 2, 1], 10, 6);
        let syms: Vec<usize> = runs(&abcb).iter().map(|r| r.0).collect();
        assert!(follows_cycle(&syms, &[0, 1, 2, 1]));
        assert!(follows_cycle(&syms[1..], &[0, 1, 2, 1]));
        assert!(!follows_cycle(&syms, &[0, 1, 2]));
        assert_eq!(detect_period(&syms), Some(4));
        assert_eq!(mean_period_ms(&abcb, 4, 1.0), Some(40.0));
        assert!(follows_cycle(&[1, 2, 0, 1], &[0, 0, 1, 2]));
        assert_eq!(detect_period(&[0, 1, 0, 2]), None);
    }
}
