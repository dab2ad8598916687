//! Form ↔ meaning mappings: weighted linear solves and the deep
//! meaning-to-form network.

mod linear;
mod network;

pub use linear::{solve_linear, Learning, LinearMapping, MappingKind};
pub use network::{
    parameter_count, sigmoid, train_network, DenseLayer, EpochRecord, FeedforwardNetwork, LayerGradient, Optimizer,
    TrainConfig,
};

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MappingError {
    #[error("row counts differ: {left} vs {right}")]
    RowMismatch { left: usize, right: usize },
    #[error("expected {expected} input columns, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("normal equations are singular; use a positive ridge (for example 1e-6)")]
    Singular,
    #[error("ridge must be a finite non-negative real, got {0}")]
    BadRidge(f64),
    #[error("row weights must be finite and non-negative, got {0}")]
    BadWeight(f64),
    #[error("solution contains non-finite values")]
    NonFinite,
    #[error("loss became non-finite in epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("invalid training configuration: {0}")]
    BadConfig(String),
    #[error("malformed matrix container: {0}")]
    Container(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

const MAGIC: &[u8; 8] = b"DLMMAT01";

/// Write matrices as: magic, count (u32), then per matrix rows and cols
/// (u64) followed by row-major little-endian f64 values.
pub fn write_matrices<W: Write>(mut w: W, matrices: &[&DMatrix<f64>]) -> Result<(), MappingError> {
    w.write_all(MAGIC)?;
    w.write_all(&(matrices.len() as u32).to_le_bytes())?;
    for m in matrices {
        w.write_all(&(m.nrows() as u64).to_le_bytes())?;
        w.write_all(&(m.ncols() as u64).to_le_bytes())?;
        for row in m.row_iter() {
            for v in row.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn read_matrices<R: Read>(mut r: R) -> Result<Vec<DMatrix<f64>>, MappingError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(MappingError::Container("bad magic".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let count = u32::from_le_bytes(b4) as usize;
    let mut out = Vec::with_capacity(count);
    let mut b8 = [0u8; 8];
    for _ in 0..count {
        r.read_exact(&mut b8)?;
        let rows = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let cols = u64::from_le_bytes(b8) as usize;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            r.read_exact(&mut b8)?;
            data.push(f64::from_le_bytes(b8));
        }
        out.push(DMatrix::from_row_slice(rows, cols, &data));
    }
    Ok(out)
}

/// JSON sidecar describing a saved linear mapping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingMetadata {
    pub kind: MappingKind,
    pub learning: Learning,
    pub ridge: f64,
    pub input_dims: usize,
    pub output_dims: usize,
    pub cue_inventory_hash: Option<String>,
}

impl LinearMapping {
    pub fn metadata(&self, cue_inventory_hash: Option<String>) -> MappingMetadata {
        MappingMetadata {
            kind: self.kind,
            learning: self.learning,
            ridge: self.ridge,
            input_dims: self.input_dims(),
            output_dims: self.output_dims(),
            cue_inventory_hash,
        }
    }

    /// Writes `<stem>.bin` and `<stem>.json`.
    pub fn save(&self, stem: &Path, cue_inventory_hash: Option<String>) -> Result<(), MappingError> {
        let bin = std::fs::File::create(stem.with_extension("bin"))?;
        write_matrices(std::io::BufWriter::new(bin), &[&self.weights])?;
        let json = serde_json::to_string_pretty(&self.metadata(cue_inventory_hash))?;
        std::fs::write(stem.with_extension("json"), json + "\n")?;
        Ok(())
    }

    pub fn load(stem: &Path) -> Result<(Self, MappingMetadata), MappingError> {
        let meta: MappingMetadata = serde_json::from_str(&std::fs::read_to_string(stem.with_extension("json"))?)?;
        let bin = std::fs::File::open(stem.with_extension("bin"))?;
        let mut ms = read_matrices(std::io::BufReader::new(bin))?;
        if ms.len() != 1 {
            return Err(MappingError::Container(format!(
                "expected one matrix, found {}",
                ms.len()
            )));
        }
        let weights = ms.remove(0);
        if weights.shape() != (meta.input_dims, meta.output_dims) {
            return Err(MappingError::Container("matrix shape disagrees with metadata".into()));
        }
        let mapping = LinearMapping {
            weights,
            kind: meta.kind,
            learning: meta.learning,
            ridge: meta.ridge,
        };
        Ok((mapping, meta))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkMetadata {
    pub layer_sizes: Vec<usize>,
    pub parameters: usize,
    pub trained_epochs: usize,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
    pub cue_inventory_hash: Option<String>,
}

impl FeedforwardNetwork {
    /// Writes `<stem>.bin` (weights and a 1-row bias per layer) and `<stem>.json`.
    pub fn save(&self, stem: &Path, cue_inventory_hash: Option<String>) -> Result<(), MappingError> {
        let biases: Vec<DMatrix<f64>> = self
            .layers()
            .iter()
            .map(|l| DMatrix::from_row_slice(1, l.bias.len(), l.bias.as_slice()))
            .collect();
        let mut all = Vec::new();
        for (l, b) in self.layers().iter().zip(&biases) {
            all.push(&l.weights);
            all.push(b);
        }
        let bin = std::fs::File::create(stem.with_extension("bin"))?;
        write_matrices(std::io::BufWriter::new(bin), &all)?;
        let meta = NetworkMetadata {
            layer_sizes: self.layer_sizes(),
            parameters: self.parameter_count(),
            trained_epochs: self.trained_epochs,
            best_epoch: self.best_epoch,
            history: self.history.clone(),
            cue_inventory_hash,
        };
        std::fs::write(stem.with_extension("json"), serde_json::to_string_pretty(&meta)? + "\n")?;
        Ok(())
    }

    pub fn load(stem: &Path) -> Result<(Self, NetworkMetadata), MappingError> {
        let meta: NetworkMetadata = serde_json::from_str(&std::fs::read_to_string(stem.with_extension("json"))?)?;
        let bin = std::fs::File::open(stem.with_extension("bin"))?;
        let ms = read_matrices(std::io::BufReader::new(bin))?;
        if ms.len() % 2 != 0 || ms.is_empty() {
            return Err(MappingError::Container("expected weight/bias pairs".into()));
        }
        let layers: Vec<DenseLayer> = ms
            .chunks(2)
            .map(|p| DenseLayer {
                weights: p[0].clone(),
                bias: DVector::from_iterator(p[1].ncols(), p[1].iter().copied()),
            })
            .collect();
        let mut net = FeedforwardNetwork::from_layers(layers);
        if net.layer_sizes() != meta.layer_sizes {
            return Err(MappingError::Container("layer sizes disagree with metadata".into()));
        }
        net.trained_epochs = meta.trained_epochs;
        net.best_epoch = meta.best_epoch;
        net.history = meta.history.clone();
        Ok((net, meta))
    }
}
