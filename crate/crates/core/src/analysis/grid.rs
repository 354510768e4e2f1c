//! Terminal symbols of the closed loop over a small plane of initial states.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::State;
use crate::error::{Error, Result};
use crate::feedback::ClosedLoop;
use crate::schedule::SymbolId;

/// Square patch spanned by two chaotic-network coordinates around a center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridPlane {
    /// Chaotic-network coordinate indices of the two axes.
    pub axes: (usize, usize),
    /// Half-width of the patch along each axis.
    pub extent: f64,
    /// Cells per side.
    pub resolution: usize,
}

impl Default for GridPlane {
    fn default() -> Self {
        Self {
            axes: (0, 1),
            extent: 0.05,
            resolution: 51,
        }
    }
}

impl GridPlane {
    /// Offset of cell index `k` along an axis.
    pub fn offset(&self, k: usize) -> f64 {
        if self.resolution == 1 {
            return 0.0;
        }
        -self.extent + 2.0 * self.extent * k as f64 / (self.resolution - 1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolGrid {
    pub plane: GridPlane,
    pub horizon_ms: f64,
    pub n_symbols: usize,
    /// Row-major; row index runs along the second axis. `None` marks a cell
    /// whose rollout diverged.
    pub cells: Vec<Option<SymbolId>>,
}

impl SymbolGrid {
    pub fn side(&self) -> usize {
        self.plane.resolution
    }

    pub fn get(&self, row: usize, col: usize) -> Option<SymbolId> {
        self.cells[row * self.side() + col]
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["row", "col", "offset_a", "offset_b", "symbol"])?;
        let n = self.side();
        for r in 0..n {
            for c in 0..n {
                let s = self.get(r, c).map(|s| s.to_string()).unwrap_or_default();
                out.write_record([
                    r.to_string(),
                    c.to_string(),
                    self.plane.offset(c).to_string(),
                    self.plane.offset(r).to_string(),
                    s,
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Run the closed loop from every cell of `plane` around `center` and record
/// the symbol the classifier reports at each horizon.
pub fn terminal_symbol_grid(
    system: &ClosedLoop<'_>,
    center: &State,
    plane: &GridPlane,
    horizons_ms: &[f64],
) -> Result<Vec<SymbolGrid>> {
    let net = system.network;
    let n_in = net.config().n_in;
    let n_ch = net.config().n_ch;
    if plane.axes.0 >= n_ch || plane.axes.1 >= n_ch || plane.axes.0 == plane.axes.1 {
        return Err(Error::config(
            "axes",
            "need two distinct chaotic-network indices",
        ));
    }
    if plane.resolution < 1 {
        return Err(Error::config("resolution", "must be >= 1"));
    }
    if center.x.len() != net.n_total() {
        return Err(Error::InvalidArgument(
            "center state has the wrong dimension".into(),
        ));
    }
    let mut steps = Vec::with_capacity(horizons_ms.len());
    for (i, &h) in horizons_ms.iter().enumerate() {
        if !(h >= 0.0) || (i > 0 && h < horizons_ms[i - 1]) {
            return Err(Error::InvalidArgument(
                "horizons must be sorted and non-negative".into(),
            ));
        }
        steps.push(net.config().steps(h));
    }
    let n = plane.resolution;
    let cells: Vec<Vec<Option<SymbolId>>> = (0..n * n)
        .into_par_iter()
        .map(|idx| {
            let (r, c) = (idx / n, idx % n);
            let mut x = center.clone();
            x.t = 0.0;
            x.x[n_in + plane.axes.0] += plane.offset(c);
            x.x[n_in + plane.axes.1] += plane.offset(r);
            let mut ls = system.start(x);
            let mut scratch = Vec::new();
            let mut at = 0;
            let mut out = Vec::with_capacity(steps.len());
            let mut diverged = false;
            for &k in &steps {
                while !diverged && at < k {
                    diverged = system.step(&mut ls, &mut scratch).is_err();
                    at += 1;
                }
                if diverged {
                    out.push(None);
                } else {
                    let mut probe = ls.clone();
                    system.decide(&mut probe);
                    out.push(Some(probe.symbol));
                }
            }
            out
        })
        .collect();
    Ok(horizons_ms
        .iter()
        .enumerate()
        .map(|(h, &horizon_ms)| SymbolGrid {
            plane: plane.clone(),
            horizon_ms,
            n_symbols: net.n_symbols(),
            cells: cells.iter().map(|c| c[h]).collect(),
        })
        .collect())
}

/// Shannon entropy (bits) of the 3×3 window patterns of `grid`.
pub fn grid_entropy(grid: &SymbolGrid) -> Result<f64> {
    let n = grid.side();
    if n < 3 {
        return Err(Error::InvalidArgument("grid must be at least 3x3".into()));
    }
    let flagged = grid.cells.iter().any(Option::is_none);
    let base = (grid.n_symbols + usize::from(flagged)) as u64;
    let code_of = |s: Option<SymbolId>| s.map_or(grid.n_symbols as u64, |v| v as u64);
    let mut hist: HashMap<u64, usize> = HashMap::new();
    for r in 0..n - 2 {
        for c in 0..n - 2 {
            let mut code = 0u64;
            for dr in 0..3 {
                for dc in 0..3 {
                    code = code * base + code_of(grid.get(r + dr, c + dc));
                }
            }
            *hist.entry(code).or_default() += 1;
        }
    }
    let total = ((n - 2) * (n - 2)) as f64;
    Ok(hist
        .values()
        .map(|&k| {
            let p = k as f64 / total;
            -p * p.log2()
        })
        .sum::<f64>()
        .max(0.0))
}
