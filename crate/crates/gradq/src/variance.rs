//! Monte Carlo validation of quantizer statistics and the variance
//! separation construction.
//!
//! The estimators draw repeated quantizations with one random stream per
//! sample index, so results are identical however the sample loop is
//! partitioned. [`separation_vector`] builds the nearly-one-hot vector on
//! which L2-normalized exponential levels provably beat max-norm uniform
//! levels, after checking the admissibility conditions.

use crate::quantizer::{
    closed_form_variance, dequantize, quantize_scheme, LevelSequence, NormScheme, QuantError,
};
use crate::rng::RandomSource;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum VarianceError {
    #[error("need at least {min} samples, got {got}")]
    TooFewSamples { min: usize, got: usize },
    #[error("gradient samples are all zero")]
    DegenerateSamples,
    #[error("sample vectors have mismatched lengths")]
    ShapeMismatch,
    #[error("admissibility condition violated: {0}")]
    ConditionViolated(String),
    #[error(transparent)]
    Quant(#[from] QuantError),
}

/// A Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceEstimate {
    pub mean: f64,
    /// Sample standard deviation divided by sqrt(samples).
    pub stderr: f64,
    pub samples: usize,
}

fn estimate(values: &[f64]) -> VarianceEstimate {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    VarianceEstimate {
        mean,
        stderr: (var / n as f64).sqrt(),
        samples: n,
    }
}

const MIN_SAMPLES: usize = 100;

fn check_n(n: usize) -> Result<(), VarianceError> {
    if n < MIN_SAMPLES {
        return Err(VarianceError::TooFewSamples {
            min: MIN_SAMPLES,
            got: n,
        });
    }
    Ok(())
}

/// Per-coordinate mean of `n` dequantized draws of `v`; unbiasedness makes
/// each mean approach the coordinate itself.
pub fn mc_mean(
    v: &[f64],
    scheme: NormScheme,
    levels: &LevelSequence,
    n: usize,
    seed: u64,
) -> Result<Vec<VarianceEstimate>, VarianceError> {
    check_n(n)?;
    let d = v.len();
    let mut sums = vec![0.0; d];
    let mut sq_sums = vec![0.0; d];
    for k in 0..n {
        let rng = RandomSource::new(seed, k as u64);
        let q = quantize_scheme(v, levels, scheme, &rng)?;
        let x = dequantize(&q, levels)?;
        for i in 0..d {
            sums[i] += x[i];
            sq_sums[i] += x[i] * x[i];
        }
    }
    Ok((0..d)
        .map(|i| {
            let mean = sums[i] / n as f64;
            let var = ((sq_sums[i] - sums[i] * sums[i] / n as f64) / (n - 1) as f64).max(0.0);
            VarianceEstimate {
                mean,
                stderr: (var / n as f64).sqrt(),
                samples: n,
            }
        })
        .collect())
}

/// Monte Carlo estimate of `E || Q(v) - v ||^2`.
pub fn mc_variance(
    v: &[f64],
    scheme: NormScheme,
    levels: &LevelSequence,
    n: usize,
    seed: u64,
) -> Result<VarianceEstimate, VarianceError> {
    check_n(n)?;
    let mut errs = Vec::with_capacity(n);
    for k in 0..n {
        let rng = RandomSource::new(seed, k as u64);
        let q = quantize_scheme(v, levels, scheme, &rng)?;
        let x = dequantize(&q, levels)?;
        errs.push(v.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum());
    }
    Ok(estimate(&errs))
}

/// Per-coordinate variance over sampling and quantization randomness,
/// divided by the per-coordinate second moment of the raw samples.
///
/// Because quantization is unbiased with a closed-form conditional
/// variance, the law of total variance gives the numerator exactly:
/// sampling variance of the raw coordinates plus the mean closed-form
/// quantization variance — no Monte Carlo draws are needed.
pub fn normalized_variance(
    samples: &[Vec<f64>],
    quantizer: Option<(NormScheme, &LevelSequence)>,
) -> Result<f64, VarianceError> {
    if samples.len() < 2 {
        return Err(VarianceError::TooFewSamples {
            min: 2,
            got: samples.len(),
        });
    }
    let d = samples[0].len();
    if samples.iter().any(|g| g.len() != d) {
        return Err(VarianceError::ShapeMismatch);
    }
    let n = samples.len() as f64;
    let second_moment: f64 = samples
        .iter()
        .map(|g| g.iter().map(|x| x * x).sum::<f64>())
        .sum::<f64>()
        / n;
    if second_moment == 0.0 {
        return Err(VarianceError::DegenerateSamples);
    }
    // sampling variance of the conditional means (the raw gradients)
    let mut mean = vec![0.0; d];
    for g in samples {
        for i in 0..d {
            mean[i] += g[i];
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut sampling_var = 0.0;
    for g in samples {
        for i in 0..d {
            sampling_var += (g[i] - mean[i]).powi(2);
        }
    }
    sampling_var /= n;
    // mean conditional quantization variance, in closed form
    let quant_var = match quantizer {
        None => 0.0,
        Some((scheme, levels)) => {
            samples
                .iter()
                .map(|g| closed_form_variance(g, levels, scheme))
                .sum::<Result<f64, _>>()?
                / n
        }
    };
    Ok((sampling_var + quant_var) / second_moment)
}

/// Admissible parameters for the variance separation construction.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SeparationInputs {
    pub d: usize,
    pub s: usize,
    pub k1: f64,
    pub k2: f64,
}

impl SeparationInputs {
    /// Check every admissibility condition, naming the first violation.
    pub fn validate(&self) -> Result<(), VarianceError> {
        let (d, s) = (self.d as f64, self.s as f64);
        let (k1, k2) = (self.k1, self.k2);
        let fail = |msg: String| Err(VarianceError::ConditionViolated(msg));
        if self.d < 2 || self.s < 1 {
            return fail("need d >= 2 and s >= 1".into());
        }
        if !(k2 > 0.0 && k2 < k1) {
            return fail(format!("need 0 < K2 < K1, got K1={k1}, K2={k2}"));
        }
        if k1 > d.sqrt() {
            return fail(format!("need K1 <= sqrt(d): {k1} > {}", d.sqrt()));
        }
        let lhs1 = k1 / ((d - 1.0) * (1.0 + k2 * k2 / (d - 1.0)).sqrt());
        let rhs1 = 2f64.powi(-(self.s as i32));
        if lhs1 >= rhs1 {
            return fail(format!(
                "need K1/((d-1) sqrt(1+K2^2/(d-1))) < 2^-s: {lhs1:.6} >= {rhs1:.6}"
            ));
        }
        let lhs2 = (1.0 + k1 * k1 / (d - 1.0)) * k1 * (0.25 * k1 / (d - 1.0) + rhs1);
        let rhs2 = k2 * (1.0 / s - k1 / (d - 1.0));
        if lhs2 >= rhs2 {
            return fail(format!(
                "need (1+K1^2/(d-1)) K1 (K1/(4(d-1)) + 2^-s) < K2 (1/s - K1/(d-1)): \
                 {lhs2:.6} >= {rhs2:.6}"
            ));
        }
        Ok(())
    }
}

/// Closed-form variances of the separation vector under both schemes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeparationReport {
    pub vector: Vec<f64>,
    /// L2-normalized, exponential p = 1/2 levels.
    pub var_nuq: f64,
    /// Max-norm, uniform levels with gap 1/s.
    pub var_qinf_gap_s: f64,
    /// Max-norm, uniform levels with gap 1/(s+1).
    pub var_qinf_gap_s1: f64,
}

impl SeparationReport {
    /// True iff the separation holds under the given uniform-grid
    /// convention.
    pub fn separated(&self, gap_s: bool) -> bool {
        let q = if gap_s {
            self.var_qinf_gap_s
        } else {
            self.var_qinf_gap_s1
        };
        self.var_nuq < q
    }
}

/// Build the separation vector `v_1 = 1, v_j = K1/(d-1)` and evaluate
/// both schemes' closed-form variances on it.
pub fn separation_vector(inputs: &SeparationInputs) -> Result<SeparationReport, VarianceError> {
    inputs.validate()?;
    let d = inputs.d;
    let mut v = vec![inputs.k1 / (d as f64 - 1.0); d];
    v[0] = 1.0;
    let exp = LevelSequence::exponential(0.5, inputs.s)?;
    let var_nuq = closed_form_variance(&v, &exp, NormScheme::L2)?;
    let uniform_gap_s = LevelSequence::uniform_intervals(inputs.s)?;
    let uniform_gap_s1 = LevelSequence::uniform(inputs.s)?;
    let var_qinf_gap_s = closed_form_variance(&v, &uniform_gap_s, NormScheme::Linf)?;
    let var_qinf_gap_s1 = closed_form_variance(&v, &uniform_gap_s1, NormScheme::Linf)?;
    Ok(SeparationReport {
        vector: v,
        var_nuq,
        var_qinf_gap_s,
        var_qinf_gap_s1,
    })
}

/// Scan `(d, s, K1, K2)` candidates and return the first admissible
/// combination whose separation holds under both uniform-grid
/// conventions.
pub fn search_separation(
    d_candidates: &[usize],
    s_candidates: &[usize],
) -> Option<(SeparationInputs, SeparationReport)> {
    for &d in d_candidates {
        for &s in s_candidates {
            let root = (d as f64).sqrt();
            for k1_frac in [0.5, 0.25, 0.75, 1.0] {
                let k1 = root * k1_frac;
                for k2_frac in [0.6, 0.3, 0.9] {
                    let inputs = SeparationInputs {
                        d,
                        s,
                        k1,
                        k2: k1 * k2_frac,
                    };
                    if inputs.validate().is_err() {
                        continue;
                    }
                    if let Ok(report) = separation_vector(&inputs) {
                        if report.separated(true) && report.separated(false) {
                            return Some((inputs, report));
                        }
                    }
                }
            }
        }
    }
    None
}

/// One row of the validation corpus export.
#[derive(Clone, Debug, Serialize)]
pub struct CorpusRow {
    pub vector_id: usize,
    pub scheme: NormScheme,
    pub s: usize,
    pub closed_form: f64,
    pub mc_mean: f64,
    pub mc_stderr: f64,
}

/// Compare the Monte Carlo and closed-form variance for each vector.
pub fn variance_corpus(
    vectors: &[Vec<f64>],
    scheme: NormScheme,
    levels: &LevelSequence,
    n: usize,
    seed: u64,
) -> Result<Vec<CorpusRow>, VarianceError> {
    let mut rows = Vec::with_capacity(vectors.len());
    for (vector_id, v) in vectors.iter().enumerate() {
        let est = mc_variance(v, scheme, levels, n, seed ^ (vector_id as u64) << 32)?;
        rows.push(CorpusRow {
            vector_id,
            scheme,
            s: levels.s(),
            closed_form: closed_form_variance(v, levels, scheme)?,
            mc_mean: est.mean,
            mc_stderr: est.stderr,
        });
    }
    Ok(rows)
}

pub fn corpus_csv(rows: &[CorpusRow]) -> String {
    let mut out = String::from("vector_id,scheme,s,closed_form,mc_mean,mc_stderr\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:?},{},{},{},{}\n",
            r.vector_id, r.scheme, r.s, r.closed_form, r.mc_mean, r.mc_stderr
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn levels_half() -> LevelSequence {
        LevelSequence::new(vec![0.0, 0.5, 1.0]).unwrap()
    }

    #[test]
    fn mc_mean_exact_cases() {
        let est = mc_mean(&[1.0, 0.0], NormScheme::L2, &levels_half(), 200, 1).unwrap();
        assert_eq!(est[0].mean, 1.0);
        assert_eq!(est[0].stderr, 0.0);
        assert_eq!(est[1].mean, 0.0);
        let zero = mc_mean(&[0.0; 4], NormScheme::L2, &levels_half(), 200, 1).unwrap();
        assert!(zero.iter().all(|e| e.mean == 0.0 && e.stderr == 0.0));
        assert!(matches!(
            mc_mean(&[1.0], NormScheme::L2, &levels_half(), 10, 1),
            Err(VarianceError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn mc_mean_unbiased() {
        let v = [0.3, -0.8, 0.1, 0.52, -0.05];
        let est = mc_mean(&v, NormScheme::L2, &levels_half(), 100_000, 7).unwrap();
        for (i, e) in est.iter().enumerate() {
            let bar = (5.0 * e.stderr).max(1e-12);
            assert!(
                (e.mean - v[i]).abs() <= bar,
                "coord {i}: {} vs {} (stderr {})",
                e.mean,
                v[i],
                e.stderr
            );
        }
    }

    #[test]
    fn mc_variance_cases() {
        let est = mc_variance(&[3.0, 4.0], NormScheme::L2, &levels_half(), 100_000, 3).unwrap();
        assert!((est.mean - 2.5).abs() <= 5.0 * est.stderr, "{est:?}");
        // exact-level vector: no randomness at all
        let est = mc_variance(&[1.0, 0.0], NormScheme::L2, &levels_half(), 200, 3).unwrap();
        assert_eq!((est.mean, est.stderr), (0.0, 0.0));
        // large-s all-equal value
        let levels = LevelSequence::exponential(0.5, 4).unwrap();
        let v = vec![1.0 / 12.0; 144];
        let est = mc_variance(&v, NormScheme::L2, &levels, 20_000, 9).unwrap();
        assert!((est.mean - 0.125).abs() <= 5.0 * est.stderr, "{est:?}");
    }

    #[test]
    fn stderr_scales_as_inverse_sqrt_n() {
        let v = [0.3, -0.8, 0.1, 0.52];
        let mut prev: Option<f64> = None;
        for &n in &[1000usize, 10_000, 100_000] {
            let est = mc_variance(&v, NormScheme::L2, &levels_half(), n, 11).unwrap();
            if let Some(p) = prev {
                let shrink = p / est.stderr;
                let ideal = 10f64.sqrt();
                assert!(
                    shrink > ideal / 2.0 && shrink < ideal * 2.0,
                    "n={n}: shrink {shrink}"
                );
            }
            prev = Some(est.stderr);
        }
    }

    #[test]
    fn mc_agrees_with_closed_form_small_corpus() {
        let rng = RandomSource::new(21, 0);
        for s in 1..=3usize {
            let levels = LevelSequence::exponential(0.5, s).unwrap();
            for trial in 0..10u64 {
                let v = rng.substream((s as u64) << 8 | trial).normal_vec(16);
                let cf = closed_form_variance(&v, &levels, NormScheme::L2).unwrap();
                let est = mc_variance(&v, NormScheme::L2, &levels, 5000, trial).unwrap();
                assert!(
                    (est.mean - cf).abs() <= 5.0 * est.stderr.max(1e-12),
                    "s={s} trial={trial}: {} vs {cf} ({})",
                    est.mean,
                    est.stderr
                );
            }
        }
    }

    #[test]
    fn normalized_variance_cases() {
        let g = vec![vec![1.0, 2.0, -1.0], vec![1.0, 2.0, -1.0]];
        // deterministic gradient, no quantization
        assert_eq!(normalized_variance(&g, None).unwrap(), 0.0);
        // deterministic gradient with quantization: closed form over
        // second moment
        let levels = levels_half();
        let got = normalized_variance(&g, Some((NormScheme::L2, &levels))).unwrap();
        let want = closed_form_variance(&g[0], &levels, NormScheme::L2).unwrap() / 6.0;
        assert!((got - want).abs() < 1e-15);
        // scale invariance
        let scaled: Vec<Vec<f64>> = g
            .iter()
            .map(|v| v.iter().map(|x| 3.0 * x).collect())
            .collect();
        let got2 = normalized_variance(&scaled, Some((NormScheme::L2, &levels))).unwrap();
        assert!((got - got2).abs() < 1e-12);
        // degenerate inputs
        assert_eq!(
            normalized_variance(&[vec![0.0; 3], vec![0.0; 3]], None),
            Err(VarianceError::DegenerateSamples)
        );
        assert!(matches!(
            normalized_variance(&[vec![1.0]], None),
            Err(VarianceError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn separation_conditions() {
        let bad = SeparationInputs {
            d: 4,
            s: 1,
            k1: 2.0,
            k2: 1.0,
        };
        assert!(matches!(
            separation_vector(&bad),
            Err(VarianceError::ConditionViolated(_))
        ));

        let good = SeparationInputs {
            d: 10_000,
            s: 4,
            k1: 50.0,
            k2: 30.0,
        };
        let report = separation_vector(&good).unwrap();
        assert!(report.var_nuq < report.var_qinf_gap_s, "{report:?}");
        assert!(report.var_nuq < report.var_qinf_gap_s1, "{report:?}");
        // homogeneity: scaling the vector scales both variances by c^2
        let scaled: Vec<f64> = report.vector.iter().map(|x| 2.0 * x).collect();
        let exp = LevelSequence::exponential(0.5, 4).unwrap();
        let nuq2 = closed_form_variance(&scaled, &exp, NormScheme::L2).unwrap();
        assert!((nuq2 - 4.0 * report.var_nuq).abs() < 1e-9 * nuq2.max(1.0));
    }

    #[test]
    fn separation_search_finds_a_witness() {
        let found = search_separation(&[4096, 10_000, 65_536], &[2, 3, 4]);
        let (inputs, report) = found.expect("search should succeed");
        assert!(inputs.validate().is_ok());
        assert!(report.var_nuq < report.var_qinf_gap_s);
        assert!(report.var_nuq < report.var_qinf_gap_s1);
    }

    #[test]
    fn corpus_csv_shape() {
        let rng = RandomSource::new(2, 0);
        let vectors = vec![rng.normal_vec(8), rng.substream(1).normal_vec(8)];
        let rows = variance_corpus(&vectors, NormScheme::L2, &levels_half(), 500, 4).unwrap();
        let csv = corpus_csv(&rows);
        assert_eq!(
            csv.lines().next().unwrap(),
            "vector_id,scheme,s,closed_form,mc_mean,mc_stderr"
        );
        assert_eq!(csv.lines().count(), 3);
    }

    use crate::rng::RandomSource;
}
