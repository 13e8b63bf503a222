//! Unbiased stochastic quantization onto a fixed level sequence.
//!
//! A gradient is normalized (L2 or L-inf), each normalized magnitude is
//! stochastically rounded to one of the levels `0 = l_0 < l_1 < ... <
//! l_{s+1} = 1` so that the rounding is unbiased, and the result is kept
//! sparse: coordinates rounded to level 0 are dropped. Exact closed-form
//! statistics (variance, expected sparsity) of the scheme are computed here
//! as well.

use crate::rng::RandomSource;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used to clamp normalized magnitudes that drift past `[0, 1]`
/// by floating-point round-off.
pub const CLAMP_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum QuantError {
    #[error("level sequence must start at 0, end at 1, and be strictly increasing: {0}")]
    BadLevels(String),
    #[error("exponential base p must lie in (0,1), got {0}")]
    BadBase(f64),
    #[error("need at least one internal level, got s={0}")]
    BadLevelCount(usize),
    #[error("normalized magnitude {0} outside [0,1] beyond clamp tolerance")]
    OutOfRange(f64),
    #[error("input vector contains a non-finite value at index {0}")]
    NonFinite(usize),
    #[error("bucket size must be at least 1")]
    BadBucket,
    #[error("level index {index} out of range for {levels} levels")]
    LevelIndexOutOfRange { index: usize, levels: usize },
    #[error("entry index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("entry indices must be strictly increasing")]
    UnsortedIndices,
}

/// Which norm the quantizer divides by.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormScheme {
    /// Euclidean norm; the analyzed scheme.
    L2,
    /// Max norm; with uniform levels this is the QSGDinf heuristic.
    Linf,
}

/// Ordered quantization levels `0 = l_0 < l_1 < ... < l_{s+1} = 1` with `s`
/// internal levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSequence {
    levels: Vec<f64>,
}

impl LevelSequence {
    /// Build from an explicit list. `s = levels.len() - 2` may be zero, which
    /// admits the degenerate `(0, 1)` grid used by some level conventions.
    pub fn new(levels: Vec<f64>) -> Result<Self, QuantError> {
        if levels.len() < 2 {
            return Err(QuantError::BadLevels("fewer than two levels".into()));
        }
        if levels[0] != 0.0 || *levels.last().unwrap() != 1.0 {
            return Err(QuantError::BadLevels(format!(
                "endpoints {} .. {}",
                levels[0],
                levels.last().unwrap()
            )));
        }
        if levels.windows(2).any(|w| !(w[0] < w[1])) || levels.iter().any(|l| !l.is_finite()) {
            return Err(QuantError::BadLevels("not strictly increasing".into()));
        }
        Ok(LevelSequence { levels })
    }

    /// Exponentially spaced levels `(0, p^s, p^{s-1}, ..., p, 1)`.
    pub fn exponential(p: f64, s: usize) -> Result<Self, QuantError> {
        if !(p > 0.0 && p < 1.0) {
            return Err(QuantError::BadBase(p));
        }
        if s < 1 {
            return Err(QuantError::BadLevelCount(s));
        }
        let mut levels = Vec::with_capacity(s + 2);
        levels.push(0.0);
        for j in (1..=s).rev() {
            levels.push(p.powi(j as i32));
        }
        levels.push(1.0);
        LevelSequence::new(levels)
    }

    /// Uniformly spaced levels `(0, 1/(s+1), ..., s/(s+1), 1)`.
    pub fn uniform(s: usize) -> Result<Self, QuantError> {
        if s < 1 {
            return Err(QuantError::BadLevelCount(s));
        }
        let n = (s + 1) as f64;
        let mut levels: Vec<f64> = (0..=s + 1).map(|j| j as f64 / n).collect();
        // force exact endpoints
        levels[0] = 0.0;
        levels[s + 1] = 1.0;
        LevelSequence::new(levels)
    }

    /// Uniform grid with `intervals` intervals, i.e. gap `1/intervals`.
    /// `intervals = s + 1` reproduces [`LevelSequence::uniform`].
    pub fn uniform_intervals(intervals: usize) -> Result<Self, QuantError> {
        if intervals < 1 {
            return Err(QuantError::BadLevelCount(0));
        }
        let mut levels: Vec<f64> = (0..=intervals)
            .map(|j| j as f64 / intervals as f64)
            .collect();
        levels[0] = 0.0;
        levels[intervals] = 1.0;
        LevelSequence::new(levels)
    }

    /// Number of internal levels.
    pub fn s(&self) -> usize {
        self.levels.len() - 2
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn level(&self, j: usize) -> f64 {
        self.levels[j]
    }

    /// Gap `tau_j = l_{j+1} - l_j` of bin `j`, `j` in `0..=s`.
    pub fn gap(&self, j: usize) -> f64 {
        self.levels[j + 1] - self.levels[j]
    }

    /// Locate `r` in the level grid: find the bin and the unbiased
    /// round-up probability. Exact level hits resolve to the bin whose
    /// round-up probability is zero, so they quantize deterministically.
    pub fn locate(&self, r: f64) -> Result<LevelLocation, QuantError> {
        let r = clamp_unit(r)?;
        let s = self.s();
        // number of levels <= r, minus one; r == 1 caps at bin s.
        let mut bin = self.levels.partition_point(|&l| l <= r);
        bin = bin.saturating_sub(1).min(s);
        let gap = self.gap(bin);
        let upper_prob = (r - self.levels[bin]) / gap;
        Ok(LevelLocation {
            bin,
            upper_prob,
            gap,
        })
    }
}

fn clamp_unit(r: f64) -> Result<f64, QuantError> {
    if !r.is_finite() || r < -CLAMP_TOL || r > 1.0 + CLAMP_TOL {
        return Err(QuantError::OutOfRange(r));
    }
    Ok(r.clamp(0.0, 1.0))
}

/// Position of a normalized magnitude in the level grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevelLocation {
    /// Bin index in `0..=s`; the value lies in `[l_bin, l_{bin+1}]`.
    pub bin: usize,
    /// Probability of rounding up to `l_{bin+1}`.
    pub upper_prob: f64,
    /// `l_{bin+1} - l_bin`.
    pub gap: f64,
}

/// One retained coordinate of a quantized vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entry {
    pub index: usize,
    /// `+1` or `-1`.
    pub sign: i8,
    /// Index into the level sequence, in `1..=s+1`. Level 0 entries are
    /// never stored.
    pub level_index: usize,
}

/// Sparse quantized form of a vector: normalization scalar plus the nonzero
/// (index, sign, level) triples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantizedVector {
    pub norm: f64,
    pub dimension: usize,
    pub entries: Vec<Entry>,
}

impl QuantizedVector {
    pub fn zero(dimension: usize) -> Self {
        QuantizedVector {
            norm: 0.0,
            dimension,
            entries: Vec::new(),
        }
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// Check structural invariants against a level sequence.
    pub fn validate(&self, levels: &LevelSequence) -> Result<(), QuantError> {
        let mut prev: Option<usize> = None;
        for e in &self.entries {
            if e.index >= self.dimension {
                return Err(QuantError::IndexOutOfRange {
                    index: e.index,
                    dim: self.dimension,
                });
            }
            if let Some(p) = prev {
                if e.index <= p {
                    return Err(QuantError::UnsortedIndices);
                }
            }
            prev = Some(e.index);
            if e.level_index == 0 || e.level_index > levels.s() + 1 {
                return Err(QuantError::LevelIndexOutOfRange {
                    index: e.level_index,
                    levels: levels.s() + 2,
                });
            }
        }
        Ok(())
    }
}

/// Fixed-size bucketing: a vector of dimension `d` splits into
/// `ceil(d / bucket_size)` consecutive buckets, each quantized with its own
/// norm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketSpec {
    pub bucket_size: usize,
}

impl BucketSpec {
    pub fn new(bucket_size: usize) -> Result<Self, QuantError> {
        if bucket_size < 1 {
            return Err(QuantError::BadBucket);
        }
        Ok(BucketSpec { bucket_size })
    }
}

fn vector_norm(v: &[f64], scheme: NormScheme) -> f64 {
    match scheme {
        NormScheme::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        NormScheme::Linf => v.iter().fold(0.0f64, |m, x| m.max(x.abs())),
    }
}

fn check_finite(v: &[f64]) -> Result<(), QuantError> {
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(QuantError::NonFinite(i));
    }
    Ok(())
}

/// Core quantization routine. Draw `i` for coordinate `i` comes from
/// `rng.uniform(counter_base + i)`, so bucketed and unbucketed calls see the
/// same per-coordinate randomness.
fn quantize_with(
    v: &[f64],
    levels: &LevelSequence,
    scheme: NormScheme,
    rng: &RandomSource,
    counter_base: u64,
) -> Result<QuantizedVector, QuantError> {
    check_finite(v)?;
    let norm = vector_norm(v, scheme);
    if norm == 0.0 {
        return Ok(QuantizedVector::zero(v.len()));
    }
    let mut entries = Vec::new();
    for (i, &x) in v.iter().enumerate() {
        let loc = levels.locate(x.abs() / norm)?;
        let u = rng.uniform(counter_base + i as u64);
        let level_index = if u < loc.upper_prob {
            loc.bin + 1
        } else {
            loc.bin
        };
        if level_index > 0 {
            entries.push(Entry {
                index: i,
                sign: if x >= 0.0 { 1 } else { -1 },
                level_index,
            });
        }
    }
    Ok(QuantizedVector {
        norm,
        dimension: v.len(),
        entries,
    })
}

/// L2-normalized unbiased stochastic quantization.
pub fn quantize(
    v: &[f64],
    levels: &LevelSequence,
    rng: &RandomSource,
) -> Result<QuantizedVector, QuantError> {
    quantize_with(v, levels, NormScheme::L2, rng, 0)
}

/// Max-norm variant; identical rounding, only the normalization scalar
/// changes.
pub fn quantize_linf(
    v: &[f64],
    levels: &LevelSequence,
    rng: &RandomSource,
) -> Result<QuantizedVector, QuantError> {
    quantize_with(v, levels, NormScheme::Linf, rng, 0)
}

/// Quantize by the given scheme.
pub fn quantize_scheme(
    v: &[f64],
    levels: &LevelSequence,
    scheme: NormScheme,
    rng: &RandomSource,
) -> Result<QuantizedVector, QuantError> {
    quantize_with(v, levels, scheme, rng, 0)
}

/// Split into consecutive buckets of `spec.bucket_size` coordinates (last
/// bucket possibly smaller) and quantize each independently.
pub fn quantize_bucketed(
    v: &[f64],
    spec: BucketSpec,
    scheme: NormScheme,
    levels: &LevelSequence,
    rng: &RandomSource,
) -> Result<Vec<QuantizedVector>, QuantError> {
    let mut out = Vec::new();
    let mut base = 0usize;
    for chunk in v.chunks(spec.bucket_size) {
        out.push(quantize_with(chunk, levels, scheme, rng, base as u64)?);
        base += chunk.len();
    }
    Ok(out)
}

/// Reconstruct the dense vector `norm * sign * l_{level_index}`.
pub fn dequantize(q: &QuantizedVector, levels: &LevelSequence) -> Result<Vec<f64>, QuantError> {
    q.validate(levels)?;
    let mut out = vec![0.0; q.dimension];
    for e in &q.entries {
        out[e.index] = q.norm * f64::from(e.sign) * levels.level(e.level_index);
    }
    Ok(out)
}

/// Exact quantization variance `E||Q(v) - v||^2`, computed per coordinate as
/// `(l_{bin+1} - r)(r - l_bin)` and scaled by the squared norm.
pub fn closed_form_variance(
    v: &[f64],
    levels: &LevelSequence,
    scheme: NormScheme,
) -> Result<f64, QuantError> {
    check_finite(v)?;
    let norm = vector_norm(v, scheme);
    if norm == 0.0 {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for &x in v {
        let r = clamp_unit(x.abs() / norm)?;
        let loc = levels.locate(r)?;
        acc += (levels.level(loc.bin + 1) - r) * (r - levels.level(loc.bin));
    }
    Ok(norm * norm * acc)
}

/// Expected number of nonzeros of the L2-normalized quantizer: coordinates
/// above `l_1` survive surely, coordinates below survive with probability
/// `r / l_1`.
pub fn expected_nnz(v: &[f64], levels: &LevelSequence) -> Result<f64, QuantError> {
    check_finite(v)?;
    let norm = vector_norm(v, NormScheme::L2);
    if norm == 0.0 {
        return Ok(0.0);
    }
    let l1 = levels.level(1);
    let mut acc = 0.0;
    for &x in v {
        let r = clamp_unit(x.abs() / norm)?;
        if r > l1 {
            acc += 1.0;
        } else {
            acc += r / l1;
        }
    }
    Ok(acc)
}
