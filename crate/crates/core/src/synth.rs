//! Synthetic datasets with an exactly controllable sensitive-attribute ratio.
//!
//! Records are feature vectors drawn from a unit-variance spherical Gaussian
//! whose mean is shifted by `mu` along the first coordinate when the record's
//! sensitive bit is set, so the ratio of sensitive records imprints on the
//! statistics of models trained on the data. The task label is a fixed linear
//! threshold of the features with a small amount of seeded label noise.

use std::io::{self, Read, Write};
use std::path::Path;

use num::rational::Ratio;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

/// Mean shift applied along the first coordinate for sensitive records.
pub const DEFAULT_MEAN_SHIFT: f64 = 1.0;
/// Probability that a task label is flipped after thresholding.
pub const DEFAULT_LABEL_NOISE: f64 = 0.05;

const DATASET_MAGIC: &[u8; 4] = b"ADS1";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("dataset must contain at least one record")]
    EmptyDataset,
    #[error("feature dimension must be at least 2, got {0}")]
    DimensionTooSmall(usize),
    #[error("ratio {0} is outside [0, 1]")]
    RatioOutOfRange(f64),
    #[error("property spec invalid: {0}")]
    InvalidSpec(String),
    #[error("malformed dataset file: {0}")]
    Malformed(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// One training record: feature vector, binary task label, binary sensitive
/// attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub features: Vec<f64>,
    pub task_label: bool,
    pub sensitive: bool,
}

/// A dataset whose distributional property is the fraction of records with
/// `sensitive = true`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub records: Vec<Record>,
    pub seed: u64,
}

impl LabeledDataset {
    pub fn new(records: Vec<Record>, seed: u64) -> Result<Self, SynthError> {
        if records.is_empty() {
            return Err(SynthError::EmptyDataset);
        }
        let d = records[0].features.len();
        if d < 2 {
            return Err(SynthError::DimensionTooSmall(d));
        }
        if records.iter().any(|r| r.features.len() != d) {
            return Err(SynthError::Malformed(
                "records have inconsistent feature dimensions".into(),
            ));
        }
        Ok(Self { records, seed })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.records[0].features.len()
    }

    pub fn sensitive_count(&self) -> usize {
        self.records.iter().filter(|r| r.sensitive).count()
    }

    /// Serializes as `ADS1`, little-endian u32 n and d, then n records of d
    /// f64 coordinates followed by the task and sensitive bytes.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), SynthError> {
        w.write_all(DATASET_MAGIC)?;
        w.write_all(&(self.len() as u32).to_le_bytes())?;
        w.write_all(&(self.dim() as u32).to_le_bytes())?;
        for rec in &self.records {
            for v in &rec.features {
                w.write_all(&v.to_le_bytes())?;
            }
            w.write_all(&[rec.task_label as u8, rec.sensitive as u8])?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, SynthError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != DATASET_MAGIC {
            return Err(SynthError::Malformed(format!(
                "bad magic {magic:?}, expected {DATASET_MAGIC:?}"
            )));
        }
        let n = read_u32(r)? as usize;
        let d = read_u32(r)? as usize;
        let mut records = Vec::with_capacity(n);
        for _ in 0..n {
            let mut features = Vec::with_capacity(d);
            for _ in 0..d {
                let mut buf = [0u8; 8];
                r.read_exact(&mut buf)?;
                features.push(f64::from_le_bytes(buf));
            }
            let mut flags = [0u8; 2];
            r.read_exact(&mut flags)?;
            records.push(Record {
                features,
                task_label: flags[0] != 0,
                sensitive: flags[1] != 0,
            });
        }
        LabeledDataset::new(records, 0)
    }

    pub fn save(&self, path: &Path) -> Result<(), SynthError> {
        let mut f = std::fs::File::create(path)?;
        self.write_to(&mut f)
    }

    pub fn load(path: &Path) -> Result<Self, SynthError> {
        let mut f = std::fs::File::open(path)?;
        Self::read_from(&mut f)
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, SynthError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

/// The required property value, the accept window around it, and the grid of
/// admissible property values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PropertySpec {
    pub p_req: Ratio<u64>,
    pub window: usize,
    pub grid: Vec<Ratio<u64>>,
}

impl PropertySpec {
    pub fn new(
        p_req: Ratio<u64>,
        window: usize,
        grid: Vec<Ratio<u64>>,
    ) -> Result<Self, SynthError> {
        let spec = Self { p_req, window, grid };
        spec.validate()?;
        Ok(spec)
    }

    /// The default grid {0.0, 0.1, ..., 1.0}.
    pub fn default_grid() -> Vec<Ratio<u64>> {
        (0..=10).map(|k| Ratio::new(k, 10)).collect()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.grid.is_empty() {
            return Err(SynthError::InvalidSpec("grid is empty".into()));
        }
        if self.grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SynthError::InvalidSpec("grid not strictly increasing".into()));
        }
        if self.grid.iter().any(|g| *g > Ratio::new(1, 1)) {
            return Err(SynthError::InvalidSpec("grid values must lie in [0, 1]".into()));
        }
        if !self.grid.contains(&self.p_req) {
            return Err(SynthError::InvalidSpec(format!(
                "p_req {} is not on the grid",
                self.p_req
            )));
        }
        if self.window > self.grid.len() {
            return Err(SynthError::InvalidSpec(format!(
                "window {} exceeds grid length {}",
                self.window,
                self.grid.len()
            )));
        }
        Ok(())
    }

    pub fn p_req_index(&self) -> usize {
        self.grid.iter().position(|g| *g == self.p_req).expect("validated")
    }

    /// Whether a grid value falls inside the accept window.
    pub fn in_window(&self, value: Ratio<u64>) -> bool {
        let (lo, hi) = window_range(self);
        lo <= value && value <= hi
    }
}

/// Converts the grid window into an accept interval, truncating at the grid
/// edges.
pub fn window_range(spec: &PropertySpec) -> (Ratio<u64>, Ratio<u64>) {
    let i = spec.p_req_index();
    let lo = spec.grid[i.saturating_sub(spec.window)];
    let hi = spec.grid[(i + spec.window).min(spec.grid.len() - 1)];
    (lo, hi)
}

/// Number of sensitive records produced by `sample_dataset(ratio, n, ..)`:
/// round-half-up of `ratio * n`, in exact integer arithmetic.
pub fn sensitive_count_for(ratio: Ratio<u64>, n: usize) -> usize {
    let num = *ratio.numer() as u128;
    let den = *ratio.denom() as u128;
    ((2 * num * n as u128 + den) / (2 * den)) as usize
}

/// Draws a dataset of `n` records in dimension `d` with exactly
/// round-half-up(`ratio * n`) sensitive records, deterministically in `seed`.
pub fn sample_dataset(
    ratio: Ratio<u64>,
    n: usize,
    d: usize,
    seed: u64,
) -> Result<LabeledDataset, SynthError> {
    sample_dataset_with(ratio, n, d, seed, DEFAULT_MEAN_SHIFT, DEFAULT_LABEL_NOISE)
}

/// As [`sample_dataset`] with explicit mean shift and label-noise rate.
pub fn sample_dataset_with(
    ratio: Ratio<u64>,
    n: usize,
    d: usize,
    seed: u64,
    mean_shift: f64,
    label_noise: f64,
) -> Result<LabeledDataset, SynthError> {
    if ratio > Ratio::new(1, 1) {
        return Err(SynthError::RatioOutOfRange(ratio_to_f64(ratio)));
    }
    if n == 0 {
        return Err(SynthError::EmptyDataset);
    }
    if d < 2 {
        return Err(SynthError::DimensionTooSmall(d));
    }
    let k = sensitive_count_for(ratio, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut flags: Vec<bool> = (0..n).map(|i| i < k).collect();
    flags.shuffle(&mut rng);

    let records = flags
        .into_iter()
        .map(|sensitive| {
            let mut features: Vec<f64> =
                (0..d).map(|_| rng.sample(StandardNormal)).collect();
            if sensitive {
                features[0] += mean_shift;
            }
            let raw = features[0] - mean_shift / 2.0;
            let flip = rng.gen_bool(label_noise);
            Record {
                features,
                task_label: (raw >= 0.0) != flip,
                sensitive,
            }
        })
        .collect();
    LabeledDataset::new(records, seed)
}

/// The plaintext distributional property: the exact fraction of records with
/// `sensitive = true`.
pub fn compute_property(ds: &LabeledDataset) -> Result<Ratio<u64>, SynthError> {
    if ds.is_empty() {
        return Err(SynthError::EmptyDataset);
    }
    Ok(Ratio::new(ds.sensitive_count() as u64, ds.len() as u64))
}

pub fn ratio_to_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Parses "0.3", ".3", "1", or "3/10" into an exact rational.
pub fn parse_ratio(s: &str) -> Result<Ratio<u64>, SynthError> {
    let s = s.trim();
    let bad = || SynthError::InvalidSpec(format!("cannot parse ratio {s:?}"));
    if let Some((num, den)) = s.split_once('/') {
        let num: u64 = num.trim().parse().map_err(|_| bad())?;
        let den: u64 = den.trim().parse().map_err(|_| bad())?;
        if den == 0 {
            return Err(bad());
        }
        return Ok(Ratio::new(num, den));
    }
    if let Some((int, frac)) = s.split_once('.') {
        let int: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
        if frac.is_empty() {
            return Ok(Ratio::from_integer(int));
        }
        if frac.len() > 18 || !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let scale = 10u64.pow(frac.len() as u32);
        let frac_num: u64 = frac.parse().map_err(|_| bad())?;
        return Ok(Ratio::new(int * scale + frac_num, scale));
    }
    let int: u64 = s.parse().map_err(|_| bad())?;
    Ok(Ratio::from_integer(int))
}
