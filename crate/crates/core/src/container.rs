//! Versioned CBOR bundle holding a trained model.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::SimConfig;
use crate::dynamics::Network;
use crate::error::{Error, Result};
use crate::feedback::Classifier;
use crate::linalg::{Csr, Triplets};
use crate::readout::{Readout, TargetKind};

pub const FORMAT_VERSION: &str = "itinerant-net-v1";

/// Dense matrix stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseRecord {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DenseRecord {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.transpose().as_slice().to_vec(),
        }
    }

    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::Container(format!(
                "dense record holds {} values for a {}x{} matrix",
                self.data.len(),
                self.rows,
                self.cols
            )));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkRecord {
    pub config: SimConfig,
    pub j_in: DenseRecord,
    pub j_ch: Triplets,
    pub j_ic: DenseRecord,
    pub u_in: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl NetworkRecord {
    pub fn from_network(net: &Network) -> Self {
        let m = net.n_symbols();
        Self {
            config: net.config().clone(),
            j_in: DenseRecord::from_matrix(net.j_in()),
            j_ch: net.j_ch().to_triplets(),
            j_ic: DenseRecord::from_matrix(net.j_ic()),
            u_in: (0..m).map(|s| net.u_in(s).as_slice().to_vec()).collect(),
            v: (0..m).map(|s| net.v(s).as_slice().to_vec()).collect(),
        }
    }

    pub fn to_network(&self) -> Result<Network> {
        self.config
            .validate()
            .map_err(|e| Error::Container(format!("stored network config: {e}")))?;
        Network::from_parts(
            self.config.clone(),
            self.j_in.to_matrix()?,
            Csr::from_triplets(&self.j_ch)?,
            self.j_ic.to_matrix()?,
            self.u_in
                .iter()
                .map(|u| DVector::from_column_slice(u))
                .collect(),
            self.v
                .iter()
                .map(|u| DVector::from_column_slice(u))
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnateSummary {
    pub l_innate_ms: f64,
    pub best_epoch: Option<usize>,
    pub nmse_before: f64,
    pub nmse_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutRecord {
    pub w_out: DenseRecord,
    pub ridge_alpha: f64,
    pub l_out_ms: f64,
    pub targets: Vec<TargetKind>,
}

impl ReadoutRecord {
    pub fn new(r: &Readout, targets: Vec<TargetKind>) -> Self {
        Self {
            w_out: DenseRecord::from_matrix(&r.w_out),
            ridge_alpha: r.ridge_alpha,
            l_out_ms: r.l_out_ms,
            targets,
        }
    }

    pub fn to_readout(&self) -> Result<Readout> {
        Ok(Readout {
            w_out: self.w_out.to_matrix()?,
            ridge_alpha: self.ridge_alpha,
            l_out_ms: self.l_out_ms,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierRecord {
    pub weights: DenseRecord,
    pub bias: bool,
}

impl ClassifierRecord {
    pub fn new(c: &Classifier) -> Self {
        Self {
            weights: DenseRecord::from_matrix(&c.weights),
            bias: c.bias,
        }
    }

    pub fn to_classifier(&self) -> Result<Classifier> {
        Classifier::new(self.weights.to_matrix()?, self.bias)
    }
}

/// Everything needed to rerun a trained system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelContainer {
    pub version: String,
    /// Hash of the configuration that produced the network and readout.
    pub config_hash: String,
    pub network: NetworkRecord,
    pub innate: Option<InnateSummary>,
    pub readout: Option<ReadoutRecord>,
    pub classifier: Option<ClassifierRecord>,
}

/// Hex SHA-256 of the JSON encoding of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

impl ModelContainer {
    pub fn new(network: &Network, config_hash: String) -> Self {
        Self {
            version: FORMAT_VERSION.to_string(),
            config_hash,
            network: NetworkRecord::from_network(network),
            innate: None,
            readout: None,
            classifier: None,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        ciborium::into_writer(self, &mut out).map_err(|e| Error::Container(e.to_string()))?;
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let c: Self = ciborium::from_reader(bytes).map_err(|e| Error::Container(e.to_string()))?;
        if c.version != FORMAT_VERSION {
            return Err(Error::Container(format!(
                "unsupported format `{}` (expected `{FORMAT_VERSION}`)",
                c.version
            )));
        }
        Ok(c)
    }

    /// Write via a temporary sibling file so a failed save leaves nothing behind.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("tmp");
        let res = (|| -> Result<()> {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&bytes)?;
            f.sync_all()?;
            fs::rename(&tmp, path)?;
            Ok(())
        })();
        if res.is_err() {
            let _ = fs::remove_file(&tmp);
        }
        res
    }

    /// Load and, when `expected_hash` is given, check the producing config.
    pub fn load(path: &Path, expected_hash: Option<&str>) -> Result<Self> {
        let c = Self::from_bytes(&fs::read(path)?)?;
        if let Some(h) = expected_hash {
            if h != c.config_hash {
                return Err(Error::Container(format!(
                    "config hash mismatch: container has {}, config gives {h}",
                    c.config_hash
                )));
            }
        }
        Ok(c)
    }

    pub fn network(&self) -> Result<Network> {
        self.network.to_network()
    }

    pub fn readout(&self) -> Result<Readout> {
        self.readout
            .as_ref()
            .ok_or_else(|| Error::Container("no readout stored; run step 1 first".into()))?
            .to_readout()
    }

    pub fn classifier(&self) -> Result<Classifier> {
        self.classifier
            .as_ref()
            .ok_or_else(|| Error::Container("no classifier stored; run step 2 or 3 first".into()))?
            .to_classifier()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Network {
        let mut cfg = SimConfig::desk();
        cfg.n_in = 8;
        cfg.n_ch = 12;
        Network::build(cfg, 2).unwrap()
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let net = small();
        let mut c = ModelContainer::new(&net, config_hash(&"cfg").unwrap());
        c.classifier = Some(ClassifierRecord::new(
            &Classifier::constant(2, net.n_total(), 1).unwrap(),
        ));
        let bytes = c.to_bytes().unwrap();
        let back = ModelContainer::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes().unwrap(), bytes);
        let n2 = back.network().unwrap();
        assert_eq!(n2.j_ch(), net.j_ch());
        assert_eq!(n2.j_in(), net.j_in());
        assert_eq!(n2.u_in(1), net.u_in(1));
    }

    #[test]
    fn hash_mismatch_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.cbor");
        let c = ModelContainer::new(&small(), "abc".into());
        c.save(&path).unwrap();
        assert!(ModelContainer::load(&path, Some("abc")).is_ok());
        let err = ModelContainer::load(&path, Some("def")).unwrap_err();
        assert!(err.to_string().contains("mismatch"));
    }

    #[test]
    fn wrong_version_is_rejected() {
        let mut c = ModelContainer::new(&small(), "x".into());
        c.version = "other".into();
        let bytes = c.to_bytes().unwrap();
        assert!(ModelContainer::from_bytes(&bytes).is_err());
    }

    #[test]
    fn missing_components_are_reported() {
        let c = ModelContainer::new(&small(), "x".into());
        assert!(c.readout().is_err());
        assert!(c.classifier().is_err());
    }
}
