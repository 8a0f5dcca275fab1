//! Second-order factorization machine.
//!
//! A row `x` is scored as
//!
//! ```text
//! y(x) = w0 + sum_i w_i x_i + sum_{i<j} <v_i, v_j> x_i x_j
//! ```
//!
//! where the pairwise term is evaluated in `O(k * nnz)` with
//! `1/2 * sum_f [(sum_i v_if x_i)^2 - sum_i v_if^2 x_i^2]`.
//!
//! # Model file layout
//!
//! All integers and floats are little-endian.
//!
//! | offset | size      | content                                   |
//! |--------|-----------|-------------------------------------------|
//! | 0      | 4         | magic `WFM\0`                             |
//! | 4      | 4         | `u32` format version                      |
//! | 8      | 4         | `u32` byte length `L` of the config text  |
//! | 12     | `L`       | UTF-8 `key = value` training config       |
//! | 12+L   | 8         | `u64` feature count `n`                   |
//! | 20+L   | 8         | `u64` factor count `k`                    |
//! | 28+L   | 8         | `f64` global bias                         |
//! | 36+L   | 8n        | `f64` linear weights                      |
//! | ...    | 8nk       | `f64` factors, row-major `n x k`          |
//!
//! Floats are stored bit-exact, so a reloaded model scores identically.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand_distr::{Distribution, Normal};

use crate::config::TrainConfig;
use crate::dataset::{Dataset, EncodedRow};
use crate::error::{Error, Result};
use crate::rng::{seeded, ModelRng};

pub const MODEL_MAGIC: [u8; 4] = *b"WFM\0";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FmModel {
    pub w0: f64,
    pub w: Vec<f64>,
    /// Row-major `n x k`; row `i` is the embedding of feature `i`.
    pub v: Vec<f64>,
    n: usize,
    k: usize,
    /// Hyperparameters the model was built with.
    pub config: TrainConfig,
}

/// Fresh model with zero biases and `Normal(0, init_sigma^2)` factors drawn
/// from a generator seeded with `config.seed`.
pub fn init_model(n: usize, config: &TrainConfig) -> Result<FmModel> {
    let mut rng = seeded(config.seed);
    FmModel::init_with_rng(n, config, &mut rng)
}

impl FmModel {
    pub fn init_with_rng(n: usize, config: &TrainConfig, rng: &mut ModelRng) -> Result<FmModel> {
        config.validate()?;
        if n == 0 {
            return Err(Error::Config("feature dimensionality must be >= 1".into()));
        }
        let k = config.factors;
        let normal = Normal::new(0.0, config.init_sigma)
            .map_err(|e| Error::Config(format!("init_sigma: {e}")))?;
        let v = (0..n * k).map(|_| normal.sample(rng)).collect();
        Ok(FmModel {
            w0: 0.0,
            w: vec![0.0; n],
            v,
            n,
            k,
            config: config.clone(),
        })
    }

    /// All-zero parameters.
    pub fn zeros(n: usize, k: usize, config: TrainConfig) -> FmModel {
        FmModel {
            w0: 0.0,
            w: vec![0.0; n],
            v: vec![0.0; n * k],
            n,
            k,
            config,
        }
    }

    /// Builds a model from explicit parameters; `v` is row-major `n x k`.
    pub fn from_parts(
        w0: f64,
        w: Vec<f64>,
        v: Vec<f64>,
        k: usize,
        config: TrainConfig,
    ) -> Result<FmModel> {
        let n = w.len();
        if n == 0 || k == 0 {
            return Err(Error::Config("n and k must be >= 1".into()));
        }
        if v.len() != n * k {
            return Err(Error::Mismatch(format!(
                "factor matrix has {} entries, expected {n} x {k}",
                v.len()
            )));
        }
        Ok(FmModel {
            w0,
            w,
            v,
            n,
            k,
            config,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn factors(&self, feature: usize) -> &[f64] {
        &self.v[feature * self.k..(feature + 1) * self.k]
    }

    pub fn factors_mut(&mut self, feature: usize) -> &mut [f64] {
        &mut self.v[feature * self.k..(feature + 1) * self.k]
    }

    /// `w0^2 + |w|^2 + |V|_F^2`.
    pub fn squared_norm(&self) -> f64 {
        self.w0 * self.w0
            + self.w.iter().map(|x| x * x).sum::<f64>()
            + self.v.iter().map(|x| x * x).sum::<f64>()
    }

    pub fn all_finite(&self) -> bool {
        self.w0.is_finite()
            && self.w.iter().all(|x| x.is_finite())
            && self.v.iter().all(|x| x.is_finite())
    }

    fn check_row(&self, x: &EncodedRow) -> Result<()> {
        match x.indices.iter().copied().max() {
            Some(max) if max >= self.n => Err(Error::Index {
                what: "feature",
                index: max,
                limit: self.n,
            }),
            _ => Ok(()),
        }
    }

    pub fn score(&self, x: &EncodedRow) -> Result<f64> {
        self.check_row(x)?;
        Ok(self.score_unchecked(x))
    }

    pub(crate) fn score_unchecked(&self, x: &EncodedRow) -> f64 {
        let mut linear = self.w0;
        for (i, xi) in x.iter() {
            linear += self.w[i] * xi;
        }
        let mut pairwise = 0.0;
        for f in 0..self.k {
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for (i, xi) in x.iter() {
                let t = self.v[i * self.k + f] * xi;
                sum += t;
                sum_sq += t * t;
            }
            pairwise += sum * sum - sum_sq;
        }
        linear + 0.5 * pairwise
    }

    /// Utility of well `well` for company `company`.
    pub fn score_pair(&self, data: &Dataset, company: usize, well: usize) -> Result<f64> {
        let row = data.encode(company, well)?;
        self.score(&row)
    }

    /// `f(u, i) - f(u, j)`: how much more company `u` should prefer well `i`
    /// over well `j`.
    pub fn utility_diff(&self, data: &Dataset, u: usize, i: usize, j: usize) -> Result<f64> {
        if i == j {
            return Err(Error::DegeneratePair(i));
        }
        Ok(self.score_pair(data, u, i)? - self.score_pair(data, u, j)?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let config = self.config.to_kv_text();
        let mut out = Vec::with_capacity(36 + config.len() + 8 * (self.n + self.v.len()));
        out.extend_from_slice(&MODEL_MAGIC);
        out.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(config.len() as u32).to_le_bytes());
        out.extend_from_slice(config.as_bytes());
        out.extend_from_slice(&(self.n as u64).to_le_bytes());
        out.extend_from_slice(&(self.k as u64).to_le_bytes());
        out.extend_from_slice(&self.w0.to_le_bytes());
        for x in self.w.iter().chain(&self.v) {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<FmModel> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != MODEL_MAGIC {
            return Err(Error::Format("not a model file (bad magic)".into()));
        }
        let version = cur.u32()?;
        if version != MODEL_FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        let config_len = cur.u32()? as usize;
        let config_text = std::str::from_utf8(cur.take(config_len)?)
            .map_err(|_| Error::Format("config block is not UTF-8".into()))?;
        let config = TrainConfig::from_kv_text(config_text)
            .map_err(|e| Error::Format(format!("config block: {e}")))?;
        let n = cur.u64()? as usize;
        let k = cur.u64()? as usize;
        let count = n
            .checked_mul(k)
            .and_then(|nk| nk.checked_add(n))
            .filter(|c| c.checked_mul(8) == Some(bytes.len().saturating_sub(cur.pos + 8)))
            .ok_or_else(|| {
                Error::Format(format!(
                    "parameter block length {} does not match n = {n}, k = {k}",
                    bytes.len().saturating_sub(cur.pos + 8)
                ))
            })?;
        let w0 = cur.f64()?;
        let mut params = Vec::with_capacity(count);
        for _ in 0..count {
            params.push(cur.f64()?);
        }
        let v = params.split_off(n);
        FmModel::from_parts(w0, params, v, k, config).map_err(|e| Error::Format(e.to_string()))
    }

    /// Writes the model through a temporary file in the same directory.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomically(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<FmModel> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        FmModel::from_bytes(&bytes)
    }
}

pub fn save_model(model: &FmModel, path: impl AsRef<Path>) -> Result<()> {
    model.save(path)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<FmModel> {
    FmModel::load(path)
}

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn write_atomically(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::io(path, std::io::Error::other("not a file path")))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated at byte {}", self.bytes.len())))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Logistic function, evaluated on the branch that cannot overflow.
pub fn sigmoid(d: f64) -> f64 {
    if d >= 0.0 {
        1.0 / (1.0 + (-d).exp())
    } else {
        let e = d.exp();
        e / (1.0 + e)
    }
}

/// `ln(sigmoid(d))` without underflow to `-inf` for large negative `d`.
pub fn log_sigmoid(d: f64) -> f64 {
    if d >= 0.0 {
        -(-d).exp().ln_1p()
    } else {
        d - d.exp().ln_1p()
    }
}
