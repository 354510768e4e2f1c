use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Size, gains and integration settings of the two-part network.
///
/// Defaults are the full-size setup: 500 input nodes, 1000 chaotic nodes,
/// `tau = 10 ms`, `g_in = 0.9`, `g_ch = 1.5`, sparse density 0.1 and a 1 ms
/// Euler step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_in: usize,
    pub n_ch: usize,
    /// Time constant in ms.
    pub tau: f64,
    pub g_in: f64,
    pub g_ch: f64,
    /// Fraction of nonzero entries in the chaotic recurrent matrix.
    pub density: f64,
    /// Integration step in ms.
    pub dt: f64,
    /// Standard deviation of the per-symbol input vectors.
    pub input_scale: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_in: 500,
            n_ch: 1000,
            tau: 10.0,
            g_in: 0.9,
            g_ch: 1.5,
            density: 0.1,
            dt: 1.0,
            input_scale: 1.0,
            seed: 0,
        }
    }
}

impl SimConfig {
    /// Small network used for quick experiments: 100 input and 300 chaotic nodes.
    pub fn desk() -> Self {
        Self {
            n_in: 100,
            n_ch: 300,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn n_total(&self) -> usize {
        self.n_in + self.n_ch
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_in == 0 {
            return Err(Error::config("n_in", "must be >= 1"));
        }
        if self.n_ch == 0 {
            return Err(Error::config("n_ch", "must be >= 1"));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::config("tau", "must be a positive finite number"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("dt", "must be a positive finite number"));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::config("density", "must lie in (0, 1]"));
        }
        if !self.g_in.is_finite() {
            return Err(Error::config("g_in", "must be finite"));
        }
        if !self.g_ch.is_finite() {
            return Err(Error::config("g_ch", "must be finite"));
        }
        if !(self.input_scale.is_finite() && self.input_scale >= 0.0) {
            return Err(Error::config("input_scale", "must be finite and >= 0"));
        }
        Ok(())
    }

    /// Number of integration steps covering `duration_ms`.
    pub fn steps(&self, duration_ms: f64) -> usize {
        (duration_ms / self.dt).round().max(0.0) as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        SimConfig::default().validate().unwrap();
        SimConfig::desk().validate().unwrap();
    }

    #[test]
    fn invalid_fields_are_named() {
        let cases: Vec<(SimConfig, &str)> = vec![
            (
                SimConfig {
                    n_in: 0,
                    ..SimConfig::desk()
                },
                "n_in",
            ),
            (
                SimConfig {
                    n_ch: 0,
                    ..SimConfig::desk()
                },
                "n_ch",
            ),
            (
                SimConfig {
                    tau: 0.0,
                    ..SimConfig::desk()
                },
                "tau",
            ),
            (
                SimConfig {
                    dt: -1.0,
                    ..SimConfig::desk()
                },
                "dt",
            ),
            (
                SimConfig {
                    density: 0.0,
                    ..SimConfig::desk()
                },
                "density",
            ),
            (
                SimConfig {
                    density: 1.5,
                    ..SimConfig::desk()
                },
                "density",
            ),
        ];
        for (cfg, name) in cases {
            match cfg.validate() {
                Err(Error::InvalidConfig { field, .. }) => assert_eq!(field, name),
                other => panic!("expected config error for {name}, got {other:?}"),
            }
        }
    }
}
