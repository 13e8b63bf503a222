//! Closed-form variance and code-length guarantees, plus the worst-case
//! variance programs.
//!
//! Everything here is a pure function of `(s, d, b)` or of a level grid:
//! per-scheme variance ceilings ([`epsilon_q`], [`epsilon_q_hat_exact`],
//! [`qsgd_bounds`]), expected code length ([`code_length_bound`]), a
//! matching lower-bound construction ([`lower_bound_construction`]), the
//! LP and QCQP worst-case programs ([`lp_bound`], [`qcqp_bound`]), level
//! grid tuning ([`optimal_p`]), and the momentum-SGD gap bound
//! ([`momentum_convex_gap_bound`]).

mod qcqp;
mod simplex;

use crate::quantizer::{closed_form_variance, LevelSequence, NormScheme};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use qcqp::QcqpSolution;
pub use simplex::LpSolution;

#[derive(Debug, Error, PartialEq)]
pub enum BoundsError {
    #[error("requires s >= 1 and d >= 1")]
    BadShape,
    #[error("requires d >= 4^s, got d = {d}, 4^s = {min}")]
    DimensionTooSmall { d: usize, min: u64 },
    #[error("code length bound needs 4^s + 2^s sqrt(d) <= d/e: {lhs:.3} > {rhs:.3}")]
    CodeLengthPrecondition { lhs: f64, rhs: f64 },
    #[error("lower-bound construction needs d >= (2/l_1)^2 = {min:.3}, got {d}")]
    LowerBoundDimension { d: usize, min: f64 },
    #[error("momentum parameter must satisfy 0 <= mu < 1")]
    BadMomentum,
    #[error("momentum inputs must be nonnegative with alpha > 0")]
    BadMomentumInputs,
    #[error("solver failure: {0}")]
    Solver(String),
}

/// Variance ceiling for the L2-normalized quantizer on dyadic levels.
///
/// Two branches split at `d = 2^{2s+1}`:
/// `1/8 + 2^{-2s-2} d` below, `2^{-s} sqrt(d) - 7/8` at or above.
pub fn epsilon_q(s: usize, d: usize) -> Result<f64, BoundsError> {
    if s < 1 || d < 1 {
        return Err(BoundsError::BadShape);
    }
    let sd = d as f64;
    Ok(if (d as u128) < 1u128 << (2 * s + 1) {
        0.125 + 2f64.powi(-2 * s as i32 - 2) * sd
    } else {
        2f64.powi(-(s as i32)) * sd.sqrt() - 0.875
    })
}

/// Fully explicit refinement of the variance ceiling: evaluates the
/// per-bin bound at the extremal occupancies
/// `(d - 4^s, 3*4^{s-1}, ..., 3*4, 4)`.
pub fn epsilon_q_hat_exact(s: usize, d: usize, levels: &LevelSequence) -> Result<f64, BoundsError> {
    if s < 1 || d < 1 {
        return Err(BoundsError::BadShape);
    }
    let min = 1u64 << (2 * s);
    if (d as u64) < min {
        return Err(BoundsError::DimensionTooSmall { d, min });
    }
    let occupancy = |j: usize| -> f64 {
        if j == 0 {
            (d as u64 - min) as f64
        } else if j == s {
            4.0
        } else {
            3.0 * 2f64.powi(2 * (s as i32 - j as i32))
        }
    };
    let mut total = 0.0;
    for j in 0..=s {
        let dj = occupancy(j);
        let tau = levels.gap(j);
        let lj = levels.level(j); // l_0 = 0 makes the j = 0 term tau*sqrt(d0)
        total += (tau * tau * dj / 4.0).min(tau * (dj.sqrt() - lj * dj));
    }
    Ok(total)
}

/// `4^s + 2^s sqrt(d)`: the expected-sparsity figure in the code length
/// bound.
pub fn expected_sparsity_bound(s: usize, d: usize) -> f64 {
    4f64.powi(s as i32) + 2f64.powi(s as i32) * (d as f64).sqrt()
}

/// Expected bits per encoded gradient:
/// `(b-1) + 3n + slack*n*log2(d/n) + slack*n*log2(log2(8(4^s+d)/n))`
/// with `n = 4^s + 2^s sqrt(d)`. `slack = 1` is the nominal bound; larger
/// values widen the asymptotic log factors.
pub fn code_length_bound(s: usize, d: usize, b: u32, slack: f64) -> Result<f64, BoundsError> {
    if s < 1 || d < 1 {
        return Err(BoundsError::BadShape);
    }
    let n = expected_sparsity_bound(s, d);
    let rhs = d as f64 / std::f64::consts::E;
    if n > rhs {
        return Err(BoundsError::CodeLengthPrecondition { lhs: n, rhs });
    }
    let c = f64::from(b) - 1.0;
    let log_term = n * (d as f64 / n).log2();
    let loglog_term = n * ((8.0 * (4f64.powi(s as i32) + d as f64) / n).log2()).log2();
    Ok(c + 3.0 * n + slack * (log_term + loglog_term))
}

/// Variance ceiling and expected bits for the uniform-grid baseline
/// quantizer with `s` levels.
pub fn qsgd_bounds(s: usize, d: usize, b: u32) -> Result<(f64, f64), BoundsError> {
    if s < 1 || d < 1 {
        return Err(BoundsError::BadShape);
    }
    let (sf, df) = (s as f64, d as f64);
    let eps = (df / (sf * sf)).min(df.sqrt() / sf);
    let n = sf * sf + sf * df.sqrt();
    let bits =
        3.0 * n + 1.5 * n * (2.0 * (sf * sf + df) / (sf * sf + df.sqrt())).log2() + f64::from(b);
    Ok((eps, bits))
}

/// A unit vector whose quantization variance provably scales like
/// `l_1 sqrt(d) / 2`: all coordinates equal. Returns the vector and the
/// bound; the closed-form variance of the vector meets or exceeds it.
pub fn lower_bound_construction(
    d: usize,
    levels: &LevelSequence,
) -> Result<(Vec<f64>, f64), BoundsError> {
    let l1 = levels.level(1);
    let min = (2.0 / l1).powi(2);
    if (d as f64) < min {
        return Err(BoundsError::LowerBoundDimension { d, min });
    }
    let a = 1.0 / (d as f64).sqrt();
    let v = vec![a; d];
    let bound = l1 * (d as f64).sqrt() / 2.0;
    Ok((v, bound))
}

/// Worst case of the coarse per-bin bound `sum tau_j^2 d_j / 4` over the
/// occupancy polytope; exact LP optimum plus the maximizing occupancies.
pub fn lp_bound(levels: &LevelSequence, d: usize) -> Result<LpSolution, BoundsError> {
    let s = levels.s();
    let n = s + 1;
    let c: Vec<f64> = (0..n).map(|j| levels.gap(j).powi(2) / 4.0).collect();
    let mut a: Vec<Vec<f64>> = Vec::new();
    let mut b: Vec<f64> = Vec::new();
    // sparsity cuts: d - (d_0 + ... + d_j) <= (1/l_{j+1})^2
    for j in 0..s {
        let mut row = vec![0.0; n];
        for coeff in row.iter_mut().take(j + 1) {
            *coeff = -1.0;
        }
        a.push(row);
        b.push((1.0 / levels.level(j + 1)).powi(2) - d as f64);
    }
    a.push(vec![1.0; n]);
    b.push(d as f64);
    simplex::solve_max(&c, &a, &b).map_err(BoundsError::Solver)
}

/// Closed form of [`lp_bound`] for a single internal level `l_1`:
/// `max(tau_0^2 d, tau_0^2 d + tau_1^2/tau_0^2 - 1) / 4`. Valid when
/// `d >= (1/l_1)^2`, where the sparsity cut can bind; below that the LP
/// simply fills the best bin.
pub fn lp_bound_s1_closed_form(l1: f64, d: usize) -> f64 {
    let (t0, t1) = (l1, 1.0 - l1);
    let base = t0 * t0 * d as f64;
    base.max(base + (t1 / t0).powi(2) - 1.0) / 4.0
}

/// Worst case of the tight per-bin bound (each term capped by its
/// sqrt-branch) over the same polytope; concave program optimum plus the
/// maximizing occupancies. Never exceeds [`lp_bound`].
pub fn qcqp_bound(levels: &LevelSequence, d: usize) -> Result<QcqpSolution, BoundsError> {
    let lp = lp_bound(levels, d)?;
    qcqp::solve(levels, d, Some(&lp.x)).map_err(BoundsError::Solver)
}

/// Minimize the QCQP worst case over exponential level grids `L_p`,
/// `p in [0.05, 0.95]`: 19-point grid scan, then golden-section refinement
/// around the grid minimum. Returns `(p*, value at p*)`.
pub fn optimal_p(s: usize, d: usize) -> Result<(f64, f64), BoundsError> {
    if s < 1 || d < 1 {
        return Err(BoundsError::BadShape);
    }
    let eval = |p: f64| -> Result<f64, BoundsError> {
        let levels = LevelSequence::exponential(p, s)
            .map_err(|e| BoundsError::Solver(e.to_string()))?;
        Ok(qcqp_bound(&levels, d)?.value)
    };
    let grid: Vec<f64> = (1..=19).map(|k| 0.05 * k as f64).collect();
    let mut best_k = 0;
    let mut best_v = f64::INFINITY;
    let mut values = Vec::with_capacity(grid.len());
    for (k, &p) in grid.iter().enumerate() {
        let v = eval(p)?;
        values.push(v);
        if v < best_v {
            best_v = v;
            best_k = k;
        }
    }
    let lo = if best_k == 0 { 0.05 } else { grid[best_k - 1] };
    let hi = if best_k == grid.len() - 1 { 0.95 } else { grid[best_k + 1] };
    const GOLD: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - GOLD * (b - a);
    let mut x2 = a + GOLD * (b - a);
    let (mut f1, mut f2) = (eval(x1)?, eval(x2)?);
    for _ in 0..40 {
        if f1 > f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + GOLD * (b - a);
            f2 = eval(x2)?;
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - GOLD * (b - a);
            f1 = eval(x1)?;
        }
    }
    let (p, v) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    if best_v < v {
        Ok((grid[best_k], best_v))
    } else {
        Ok((p, v))
    }
}

/// Inputs to the momentum-SGD convex optimality-gap bound.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MomentumBoundInputs {
    /// Momentum parameter, `0 <= mu < 1`.
    pub mu: f64,
    /// 0 = heavy ball, 1 = Nesterov.
    pub l: u8,
    /// Learning rate, positive.
    pub alpha: f64,
    /// Iteration count.
    pub t: u64,
    /// Worker count.
    pub k: u64,
    /// Second-moment bound on stochastic gradients.
    pub b: f64,
    /// Gradient-norm bound.
    pub v: f64,
    /// Initial optimality gap `f(w_0) - f(w*)`.
    pub f_gap: f64,
    /// Initial squared distance `||w_0 - w*||^2`.
    pub dist_sq: f64,
}

/// Optimality-gap bound for momentum SGD with quantization variance
/// factor `eps_q`:
///
/// ```text
/// mu f_gap / ((1-mu)(T+1)) + (1-mu) dist_sq / (2 alpha (T+1))
///   + alpha (1+2 l mu)(V^2 + (1+eps_q) B / K) / (2 (1-mu))
/// ```
pub fn momentum_convex_gap_bound(
    inputs: &MomentumBoundInputs,
    eps_q: f64,
) -> Result<f64, BoundsError> {
    if !(0.0..1.0).contains(&inputs.mu) {
        return Err(BoundsError::BadMomentum);
    }
    if inputs.alpha <= 0.0
        || inputs.k == 0
        || [inputs.b, inputs.v, inputs.f_gap, inputs.dist_sq]
            .iter()
            .any(|x| !x.is_finite() || *x < 0.0)
    {
        return Err(BoundsError::BadMomentumInputs);
    }
    let mu = inputs.mu;
    let t1 = (inputs.t + 1) as f64;
    let term1 = mu * inputs.f_gap / ((1.0 - mu) * t1);
    let term2 = (1.0 - mu) * inputs.dist_sq / (2.0 * inputs.alpha * t1);
    let noise = inputs.v * inputs.v + (1.0 + eps_q) * inputs.b / inputs.k as f64;
    let term3 =
        inputs.alpha * (1.0 + 2.0 * f64::from(inputs.l) * mu) * noise / (2.0 * (1.0 - mu));
    Ok(term1 + term2 + term3)
}

/// Closed-form variance and code-length figures for one `(s, d, b)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundReport {
    pub s: usize,
    pub d: usize,
    pub b: u32,
    pub eps_q: f64,
    pub eps_q_hat: f64,
    /// Expected bits; absent when the precondition `n <= d/e` fails.
    pub n_q: Option<f64>,
    pub qsgd_eps: f64,
    pub qsgd_n: f64,
}

impl BoundReport {
    /// Evaluate all closed forms on the dyadic exponential grid.
    pub fn compute(s: usize, d: usize, b: u32) -> Result<Self, BoundsError> {
        let levels = LevelSequence::exponential(0.5, s)
            .map_err(|e| BoundsError::Solver(e.to_string()))?;
        let (qsgd_eps, qsgd_n) = qsgd_bounds(s, d, b)?;
        Ok(BoundReport {
            s,
            d,
            b,
            eps_q: epsilon_q(s, d)?,
            eps_q_hat: epsilon_q_hat_exact(s, d, &levels)?,
            n_q: code_length_bound(s, d, b, 1.0).ok(),
            qsgd_eps,
            qsgd_n,
        })
    }
}

/// Bits-times-variance products whose ratio tracks the total
/// communication cost of the two schemes at matched accuracy.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BitsComparison {
    pub nuq_product: f64,
    pub qsgd_product: f64,
    /// `nuq_product / qsgd_product`; below 1 means the nonuniform scheme
    /// wins.
    pub ratio: f64,
}

pub fn bits_comparison(s: usize, d: usize, b: u32) -> Result<BitsComparison, BoundsError> {
    let n_q = code_length_bound(s, d, b, 1.0)?;
    let eps = epsilon_q(s, d)?;
    let (qe, qn) = qsgd_bounds(s, d, b)?;
    let nuq_product = n_q * eps;
    let qsgd_product = qn * qe;
    Ok(BitsComparison {
        nuq_product,
        qsgd_product,
        ratio: nuq_product / qsgd_product,
    })
}

/// One row of a `(s, d, p)` sweep.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub s: usize,
    pub d: usize,
    pub p: f64,
    pub eps_q: f64,
    pub eps_lp: f64,
    pub eps_qp: f64,
    pub n_q: Option<f64>,
}

/// Evaluate the bound family over a grid; row order follows the input
/// order and results do not depend on evaluation order.
pub fn sweep(
    s_values: &[usize],
    d_values: &[usize],
    p_values: &[f64],
    b: u32,
) -> Result<Vec<SweepRow>, BoundsError> {
    let mut rows = Vec::new();
    for &s in s_values {
        for &d in d_values {
            for &p in p_values {
                let levels = LevelSequence::exponential(p, s)
                    .map_err(|e| BoundsError::Solver(e.to_string()))?;
                rows.push(SweepRow {
                    s,
                    d,
                    p,
                    eps_q: epsilon_q(s, d)?,
                    eps_lp: lp_bound(&levels, d)?.value,
                    eps_qp: qcqp_bound(&levels, d)?.value,
                    n_q: code_length_bound(s, d, b, 1.0).ok(),
                });
            }
        }
    }
    Ok(rows)
}

/// Render sweep rows as CSV with the standard header.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("s,d,p,eps_q,eps_lp,eps_qp,n_q\n");
    for r in rows {
        let n_q = r.n_q.map_or(String::new(), |v| format!("{v}"));
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.s, r.d, r.p, r.eps_q, r.eps_lp, r.eps_qp, n_q
        ));
    }
    out
}

/// Convenience used by tests and the acceptance suite: closed-form
/// variance ratio of a vector under the given levels.
pub fn variance_ratio(v: &[f64], levels: &LevelSequence) -> f64 {
    let norm_sq: f64 = v.iter().map(|x| x * x).sum();
    if norm_sq == 0.0 {
        return 0.0;
    }
    closed_form_variance(v, levels, NormScheme::L2).expect("finite input") / norm_sq
}
