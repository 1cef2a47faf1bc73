//! The neural cortical map: multiresolution hash encoding into a small MLP,
//! trained with manual backpropagation and Adam to match barycentric
//! interpolation targets on a mesh.

mod fidelity;
mod forward;
mod train;

pub use fidelity::{evaluate_fit_fidelity, regress_fidelity, FitRegression};
pub use forward::Scratch;
pub use train::{backward_params, fit, ParamGrads};

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MODEL_MAGIC: &[u8; 6] = b"NCMAP1";

/// Multiresolution hash encoding configuration.
///
/// Level `l` has grid resolution `floor(base_resolution * growth_factor^l)`;
/// every level owns a `2^table_size_log2 x features_per_level` table and the
/// encoded vector concatenates the levels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HashEncodingConfig {
    pub levels: usize,
    pub features_per_level: usize,
    pub table_size_log2: u32,
    pub base_resolution: u32,
    pub growth_factor: f64,
}

impl Default for HashEncodingConfig {
    fn default() -> Self {
        Self {
            levels: 12,
            features_per_level: 2,
            table_size_log2: 14,
            base_resolution: 4,
            growth_factor: 1.45,
        }
    }
}

impl HashEncodingConfig {
    pub fn output_dim(&self) -> usize {
        self.levels * self.features_per_level
    }

    pub fn table_len(&self) -> usize {
        1usize << self.table_size_log2
    }

    pub fn resolution(&self, level: usize) -> u32 {
        ((self.base_resolution as f64) * self.growth_factor.powi(level as i32)).floor() as u32
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.features_per_level == 0 {
            return Err(Error::InvalidConfig(
                "encoding needs at least one level and one feature".into(),
            ));
        }
        if self.table_size_log2 == 0 || self.table_size_log2 > 24 {
            return Err(Error::InvalidConfig(
                "table_size_log2 must be in 1..=24".into(),
            ));
        }
        if self.base_resolution == 0 || self.growth_factor <= 1.0 {
            return Err(Error::InvalidConfig(
                "base_resolution must be >= 1 and growth_factor > 1".into(),
            ));
        }
        Ok(())
    }
}

/// MLP activation; only ReLU is supported.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
}

/// MLP shape: `hidden_layers` hidden layers of `hidden_width` units with
/// ReLU, then a linear output layer of `output_dim` channels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub output_dim: usize,
    pub activation: Activation,
}

impl MlpConfig {
    pub fn with_output(output_dim: usize) -> Self {
        Self {
            hidden_layers: 2,
            hidden_width: 64,
            output_dim,
            activation: Activation::Relu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers < 1 {
            return Err(Error::InvalidConfig("hidden_layers must be >= 1".into()));
        }
        if self.hidden_width < 8 {
            return Err(Error::InvalidConfig("hidden_width must be >= 8".into()));
        }
        if self.output_dim == 0 {
            return Err(Error::InvalidConfig("output_dim must be >= 1".into()));
        }
        Ok(())
    }
}

/// Training hyperparameters for [`fit`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Faces sampled per step (n_F).
    pub n_faces: usize,
    /// Points per sampled face (n_V).
    pub n_points: usize,
    pub iterations: usize,
    pub lr_tables: f64,
    pub lr_mlp: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub area_weighted_faces: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_faces: 1024,
            n_points: 4,
            iterations: 3000,
            lr_tables: 1e-2,
            lr_mlp: 1e-3,
            beta1: 0.9,
            beta2: 0.99,
            epsilon: 1e-10,
            seed: 0,
            area_weighted_faces: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_faces == 0 || self.n_points == 0 || self.iterations == 0 {
            return Err(Error::InvalidConfig(
                "sample counts and iterations must be positive".into(),
            ));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0 < b && b < 1.0) {
                return Err(Error::InvalidConfig(format!("{name} must be in (0, 1)")));
            }
        }
        Ok(())
    }
}

/// The continuous map S: S^2 -> R^{n_f}: per-level hash tables feeding a
/// small ReLU MLP. Immutable during inference; training mutates in place.
#[derive(Clone, Debug, PartialEq)]
pub struct NeuralCorticalMap {
    encoding: HashEncodingConfig,
    mlp: MlpConfig,
    resolutions: Vec<u32>,
    /// `levels * table_len * features_per_level`, level-major.
    tables: Vec<f64>,
    /// Row-major `out x in` weight matrices, input layer first.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    iterations_trained: u64,
    seed: u64,
}

impl NeuralCorticalMap {
    /// Fresh map: tables uniform in [-1e-4, 1e-4], weights Xavier-uniform,
    /// biases zero. Deterministic in `seed`.
    pub fn new(encoding: HashEncodingConfig, mlp: MlpConfig, seed: u64) -> Result<Self> {
        encoding.validate()?;
        mlp.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let table_total = encoding.levels * encoding.table_len() * encoding.features_per_level;
        let tables: Vec<f64> = (0..table_total)
            .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * 1e-4)
            .collect();
        let dims = layer_dims(&encoding, &mlp);
        let mut weights = Vec::with_capacity(dims.len());
        let mut biases = Vec::with_capacity(dims.len());
        for (fan_in, fan_out) in &dims {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            weights.push(
                (0..fan_in * fan_out)
                    .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * bound)
                    .collect(),
            );
            biases.push(vec![0.0; *fan_out]);
        }
        Ok(Self {
            encoding,
            mlp,
            resolutions: (0..encoding.levels)
                .map(|l| encoding.resolution(l))
                .collect(),
            tables,
            weights,
            biases,
            iterations_trained: 0,
            seed,
        })
    }

    pub fn encoding_config(&self) -> &HashEncodingConfig {
        &self.encoding
    }

    pub fn mlp_config(&self) -> &MlpConfig {
        &self.mlp
    }

    pub fn output_dim(&self) -> usize {
        self.mlp.output_dim
    }

    pub fn resolutions(&self) -> &[u32] {
        &self.resolutions
    }

    pub fn iterations_trained(&self) -> u64 {
        self.iterations_trained
    }

    pub fn set_iterations_trained(&mut self, n: u64) {
        self.iterations_trained = n;
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn tables(&self) -> &[f64] {
        &self.tables
    }

    pub fn tables_mut(&mut self) -> &mut [f64] {
        &mut self.tables
    }

    pub fn layer_count(&self) -> usize {
        self.weights.len()
    }

    pub fn layer(&self, i: usize) -> (&[f64], &[f64]) {
        (&self.weights[i], &self.biases[i])
    }

    pub fn layer_mut(&mut self, i: usize) -> (&mut [f64], &mut [f64]) {
        (&mut self.weights[i], &mut self.biases[i])
    }

    /// Total number of learnable parameters.
    pub fn param_count(&self) -> usize {
        self.tables.len()
            + self
                .weights
                .iter()
                .zip(&self.biases)
                .map(|(w, b)| w.len() + b.len())
                .sum::<usize>()
    }

    /// Exact size of the serialized model in bytes.
    pub fn byte_size(&self) -> usize {
        let mut n = MODEL_MAGIC.len();
        n += 4 * 4 + 8; // encoding config
        n += 4 * 4; // mlp config
        n += 8 + 8; // iterations + seed
        n += 8 + self.tables.len() * 8;
        n += 4;
        for (w, b) in self.weights.iter().zip(&self.biases) {
            n += 8 + w.len() * 8 + 8 + b.len() * 8;
        }
        n
    }

    /// Writes the versioned little-endian binary model format:
    /// magic `NCMAP1`, config block, parameter blocks in declared order
    /// (tables level-major, then weight/bias per layer).
    pub fn serialize(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MODEL_MAGIC)?;
        for v in [
            self.encoding.levels as u32,
            self.encoding.features_per_level as u32,
            self.encoding.table_size_log2,
            self.encoding.base_resolution,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&self.encoding.growth_factor.to_le_bytes())?;
        for v in [
            self.mlp.hidden_layers as u32,
            self.mlp.hidden_width as u32,
            self.mlp.output_dim as u32,
            0u32, // activation tag: relu
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&self.iterations_trained.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&(self.tables.len() as u64).to_le_bytes())?;
        for v in &self.tables {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&(self.weights.len() as u32).to_le_bytes())?;
        for (wts, bs) in self.weights.iter().zip(&self.biases) {
            w.write_all(&(wts.len() as u64).to_le_bytes())?;
            for v in wts {
                w.write_all(&v.to_le_bytes())?;
            }
            w.write_all(&(bs.len() as u64).to_le_bytes())?;
            for v in bs {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Reads a model written by [`NeuralCorticalMap::serialize`]; rejects
    /// unknown magic/version tags and inconsistent dimensions.
    pub fn deserialize(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic).map_err(|e| {
            Error::UnsupportedVersion(format!("header shorter than magic: {e}"))
        })?;
        if &magic != MODEL_MAGIC {
            return Err(Error::UnsupportedVersion(format!(
                "magic {:02X?} (expected 'NCMAP1')",
                magic
            )));
        }
        let read_u32 = |r: &mut dyn Read| -> Result<u32> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            Ok(u32::from_le_bytes(b))
        };
        let read_u64 = |r: &mut dyn Read| -> Result<u64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(u64::from_le_bytes(b))
        };
        let read_f64s = |r: &mut dyn Read, n: usize| -> Result<Vec<f64>> {
            let mut out = Vec::with_capacity(n);
            let mut b = [0u8; 8];
            for _ in 0..n {
                r.read_exact(&mut b)?;
                let v = f64::from_le_bytes(b);
                if !v.is_finite() {
                    return Err(Error::NumericFault("non-finite model parameter".into()));
                }
                out.push(v);
            }
            Ok(out)
        };
        let levels = read_u32(&mut r)? as usize;
        let features_per_level = read_u32(&mut r)? as usize;
        let table_size_log2 = read_u32(&mut r)?;
        let base_resolution = read_u32(&mut r)?;
        let mut u64_buf = [0u8; 8];
        r.read_exact(&mut u64_buf)?;
        let growth_factor = f64::from_le_bytes(u64_buf);
        let encoding = HashEncodingConfig {
            levels,
            features_per_level,
            table_size_log2,
            base_resolution,
            growth_factor,
        };
        encoding.validate()?;
        let hidden_layers = read_u32(&mut r)? as usize;
        let hidden_width = read_u32(&mut r)? as usize;
        let output_dim = read_u32(&mut r)? as usize;
        let activation_tag = read_u32(&mut r)?;
        if activation_tag != 0 {
            return Err(Error::UnsupportedVersion(format!(
                "unknown activation tag {activation_tag}"
            )));
        }
        let mlp = MlpConfig {
            hidden_layers,
            hidden_width,
            output_dim,
            activation: Activation::Relu,
        };
        mlp.validate()?;
        let iterations_trained = read_u64(&mut r)?;
        let seed = read_u64(&mut r)?;
        let table_total = read_u64(&mut r)? as usize;
        let expected_tables = levels * encoding.table_len() * features_per_level;
        if table_total != expected_tables {
            return Err(Error::Parse {
                location: "table block".into(),
                message: format!("{table_total} table entries, expected {expected_tables}"),
            });
        }
        let tables = read_f64s(&mut r, table_total)?;
        let layer_count = read_u32(&mut r)? as usize;
        let dims = layer_dims(&encoding, &mlp);
        if layer_count != dims.len() {
            return Err(Error::Parse {
                location: "layer block".into(),
                message: format!("{layer_count} layers, expected {}", dims.len()),
            });
        }
        let mut weights = Vec::with_capacity(layer_count);
        let mut biases = Vec::with_capacity(layer_count);
        for (fan_in, fan_out) in &dims {
            let w_len = read_u64(&mut r)? as usize;
            if w_len != fan_in * fan_out {
                return Err(Error::Parse {
                    location: "layer block".into(),
                    message: format!("weight block of {w_len}, expected {}", fan_in * fan_out),
                });
            }
            weights.push(read_f64s(&mut r, w_len)?);
            let b_len = read_u64(&mut r)? as usize;
            if b_len != *fan_out {
                return Err(Error::Parse {
                    location: "layer block".into(),
                    message: format!("bias block of {b_len}, expected {fan_out}"),
                });
            }
            biases.push(read_f64s(&mut r, b_len)?);
        }
        Ok(Self {
            resolutions: (0..levels).map(|l| encoding.resolution(l)).collect(),
            encoding,
            mlp,
            tables,
            weights,
            biases,
            iterations_trained,
            seed,
        })
    }
}

/// `(fan_in, fan_out)` per layer, input layer first.
pub(crate) fn layer_dims(enc: &HashEncodingConfig, mlp: &MlpConfig) -> Vec<(usize, usize)> {
    let mut dims = vec![(enc.output_dim(), mlp.hidden_width)];
    for _ in 1..mlp.hidden_layers {
        dims.push((mlp.hidden_width, mlp.hidden_width));
    }
    dims.push((mlp.hidden_width, mlp.output_dim));
    dims
}
