//! Built-in desk-scale optimization problems with analytic gradients,
//! row-sampling stochastic oracles, and known smoothness constants.

use crate::rng::RandomSource;

/// A finite-sum objective `f(w) = (1/n) sum_i loss_i(w)` with an unbiased
/// row-sampling gradient oracle and per-worker contiguous shards.
#[derive(Clone, Debug)]
pub struct Problem {
    pub name: &'static str,
    pub dim: usize,
    pub n_samples: usize,
    /// Smoothness constant of the full objective.
    pub beta: f64,
    /// Known minimum value, when available.
    pub min_value: Option<f64>,
    kind: Kind,
}

#[derive(Clone, Debug)]
enum Kind {
    /// `f = ||X w - y||^2 / (2n)`
    LeastSquares { x: Matrix, y: Vec<f64> },
    /// `f = (1/n) sum log(1 + exp(-y_i x_i.w)) + (lambda/2)||w||^2`
    Logistic { x: Matrix, y: Vec<f64>, lambda: f64 },
    /// `f = (1/n) sum sigmoid(x_i.w - y_i)`: bounded, smooth, nonconvex
    SmoothNonconvex { x: Matrix, y: Vec<f64> },
}

#[derive(Clone, Debug)]
struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    fn gaussian(rows: usize, cols: usize, rng: &RandomSource) -> Self {
        Matrix {
            rows,
            cols,
            data: (0..rows * cols).map(|k| rng.normal(k as u64)).collect(),
        }
    }

    /// Largest eigenvalue of `X^T X` by power iteration.
    fn gram_lambda_max(&self) -> f64 {
        let mut v = vec![1.0 / (self.cols as f64).sqrt(); self.cols];
        let mut lambda = 0.0;
        for _ in 0..300 {
            // u = X v; w = X^T u
            let mut w = vec![0.0; self.cols];
            for i in 0..self.rows {
                let r = self.row(i);
                let u: f64 = r.iter().zip(&v).map(|(a, b)| a * b).sum();
                for (wj, rj) in w.iter_mut().zip(r) {
                    *wj += u * rj;
                }
            }
            lambda = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if lambda == 0.0 {
                return 0.0;
            }
            for (vj, wj) in v.iter_mut().zip(&w) {
                *vj = wj / lambda;
            }
        }
        lambda
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Problem {
    /// `f = ||X w - y||^2/(2n)` with `y = X w*`, so the minimum is 0.
    pub fn least_squares(dim: usize, n_samples: usize, seed: u64) -> Self {
        let rng = RandomSource::new(seed, 0);
        let x = Matrix::gaussian(n_samples, dim, &rng.substream(1));
        let w_star = rng.substream(2).normal_vec(dim);
        let y: Vec<f64> = (0..n_samples)
            .map(|i| x.row(i).iter().zip(&w_star).map(|(a, b)| a * b).sum())
            .collect();
        let beta = x.gram_lambda_max() / n_samples as f64;
        Problem {
            name: "least_squares",
            dim,
            n_samples,
            beta,
            min_value: Some(0.0),
            kind: Kind::LeastSquares { x, y },
        }
    }

    /// Ridge-regularized logistic regression on a separable-ish synthetic
    /// set; strictly convex, minimum value unknown in closed form.
    pub fn logistic(dim: usize, n_samples: usize, seed: u64) -> Self {
        let rng = RandomSource::new(seed, 1);
        let x = Matrix::gaussian(n_samples, dim, &rng.substream(1));
        let w_true = rng.substream(2).normal_vec(dim);
        let y: Vec<f64> = (0..n_samples)
            .map(|i| {
                let z: f64 = x.row(i).iter().zip(&w_true).map(|(a, b)| a * b).sum();
                if z >= 0.0 { 1.0 } else { -1.0 }
            })
            .collect();
        let lambda = 0.01;
        let beta = x.gram_lambda_max() / (4.0 * n_samples as f64) + lambda;
        Problem {
            name: "logistic",
            dim,
            n_samples,
            beta,
            min_value: None,
            kind: Kind::Logistic { x, y, lambda },
        }
    }

    /// Mean of sigmoids of affine forms: bounded and smooth but
    /// nonconvex. `|sigmoid''| <= 1/(6 sqrt(3))` gives the smoothness
    /// constant.
    pub fn smooth_nonconvex(dim: usize, n_samples: usize, seed: u64) -> Self {
        let rng = RandomSource::new(seed, 2);
        let x = Matrix::gaussian(n_samples, dim, &rng.substream(1));
        let y = rng.substream(2).normal_vec(n_samples);
        let beta = x.gram_lambda_max() / (6.0 * 3f64.sqrt() * n_samples as f64);
        Problem {
            name: "smooth_nonconvex",
            dim,
            n_samples,
            beta,
            min_value: None,
            kind: Kind::SmoothNonconvex { x, y },
        }
    }

    /// `f = ||w||^2 / 2` style sanity case: identity design, zero target.
    pub fn least_squares_identity(dim: usize) -> Self {
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = 1.0;
        }
        let x = Matrix {
            rows: dim,
            cols: dim,
            data,
        };
        Problem {
            name: "least_squares",
            dim,
            n_samples: dim,
            beta: 1.0 / dim as f64,
            min_value: Some(0.0),
            kind: Kind::LeastSquares {
                x,
                y: vec![0.0; dim],
            },
        }
    }

    pub fn value(&self, w: &[f64]) -> f64 {
        self.range_value(w, 0, self.n_samples)
    }

    pub fn grad(&self, w: &[f64]) -> Vec<f64> {
        self.range_grad(w, 0, self.n_samples)
    }

    /// Objective restricted to rows `[lo, hi)` (a data shard).
    pub fn range_value(&self, w: &[f64], lo: usize, hi: usize) -> f64 {
        let n = (hi - lo) as f64;
        match &self.kind {
            Kind::LeastSquares { x, y } => {
                let mut acc = 0.0;
                for i in lo..hi {
                    let r: f64 = x.row(i).iter().zip(w).map(|(a, b)| a * b).sum();
                    acc += (r - y[i]).powi(2);
                }
                acc / (2.0 * n)
            }
            Kind::Logistic { x, y, lambda } => {
                let mut acc = 0.0;
                for i in lo..hi {
                    let z: f64 = x.row(i).iter().zip(w).map(|(a, b)| a * b).sum();
                    let m = -y[i] * z;
                    // log(1 + exp(m)) without overflow
                    acc += if m > 0.0 {
                        m + (-m).exp().ln_1p()
                    } else {
                        m.exp().ln_1p()
                    };
                }
                acc / n + lambda / 2.0 * w.iter().map(|x| x * x).sum::<f64>()
            }
            Kind::SmoothNonconvex { x, y } => {
                let mut acc = 0.0;
                for i in lo..hi {
                    let z: f64 = x.row(i).iter().zip(w).map(|(a, b)| a * b).sum();
                    acc += sigmoid(z - y[i]);
                }
                acc / n
            }
        }
    }

    /// Exact gradient of [`Self::range_value`].
    pub fn range_grad(&self, w: &[f64], lo: usize, hi: usize) -> Vec<f64> {
        let n = (hi - lo) as f64;
        let mut g = vec![0.0; self.dim];
        match &self.kind {
            Kind::LeastSquares { x, y } => {
                for i in lo..hi {
                    let r: f64 =
                        x.row(i).iter().zip(w).map(|(a, b)| a * b).sum::<f64>() - y[i];
                    for (gj, xj) in g.iter_mut().zip(x.row(i)) {
                        *gj += r * xj / n;
                    }
                }
            }
            Kind::Logistic { x, y, lambda } => {
                for i in lo..hi {
                    let z: f64 = x.row(i).iter().zip(w).map(|(a, b)| a * b).sum();
                    let coeff = -y[i] * sigmoid(-y[i] * z) / n;
                    for (gj, xj) in g.iter_mut().zip(x.row(i)) {
                        *gj += coeff * xj;
                    }
                }
                for (gj, wj) in g.iter_mut().zip(w) {
                    *gj += lambda * wj;
                }
            }
            Kind::SmoothNonconvex { x, y } => {
                for i in lo..hi {
                    let z: f64 = x.row(i).iter().zip(w).map(|(a, b)| a * b).sum();
                    let s = sigmoid(z - y[i]);
                    let coeff = s * (1.0 - s) / n;
                    for (gj, xj) in g.iter_mut().zip(x.row(i)) {
                        *gj += coeff * xj;
                    }
                }
            }
        }
        g
    }

    /// Unbiased single-row stochastic gradient over the shard `[lo, hi)`;
    /// the row index comes from draw `counter` of `rng`.
    pub fn sample_grad(
        &self,
        w: &[f64],
        lo: usize,
        hi: usize,
        rng: &RandomSource,
        counter: u64,
    ) -> Vec<f64> {
        let i = lo + rng.uniform_index(counter, hi - lo);
        self.range_grad(w, i, i + 1)
    }

    /// Contiguous shard bounds for worker `k` of `workers`.
    pub fn shard(&self, k: usize, workers: usize) -> (usize, usize) {
        let per = self.n_samples / workers;
        let lo = k * per;
        let hi = if k + 1 == workers {
            self.n_samples
        } else {
            lo + per
        };
        (lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problems() -> Vec<Problem> {
        vec![
            Problem::least_squares(16, 64, 10),
            Problem::logistic(16, 64, 10),
            Problem::smooth_nonconvex(16, 64, 10),
        ]
    }

    #[test]
    fn identity_case_minimum() {
        let p = Problem::least_squares_identity(8);
        assert_eq!(p.value(&vec![0.0; 8]), 0.0);
        assert!(p.value(&vec![1.0; 8]) > 0.0);
        assert_eq!(p.min_value, Some(0.0));
    }

    #[test]
    fn least_squares_min_is_zero() {
        let p = Problem::least_squares(16, 64, 3);
        // gradient descent at 1/beta from zero converges toward 0
        let mut w = vec![0.0; 16];
        let mut prev = p.value(&w);
        for _ in 0..500 {
            let g = p.grad(&w);
            for (wj, gj) in w.iter_mut().zip(&g) {
                *wj -= gj / p.beta;
            }
            let v = p.value(&w);
            assert!(v <= prev + 1e-12);
            prev = v;
        }
        assert!(prev < 1e-6, "final value {prev}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let rng = RandomSource::new(99, 0);
        for p in problems() {
            for trial in 0..10u64 {
                let w = rng.substream(trial).normal_vec(p.dim);
                let g = p.grad(&w);
                let h = 1e-6;
                for j in 0..p.dim {
                    let mut wp = w.clone();
                    let mut wm = w.clone();
                    wp[j] += h;
                    wm[j] -= h;
                    let fd = (p.value(&wp) - p.value(&wm)) / (2.0 * h);
                    let scale = g[j].abs().max(1.0);
                    assert!(
                        (fd - g[j]).abs() <= 1e-6 * scale,
                        "{} coord {j}: fd {fd} vs {}",
                        p.name,
                        g[j]
                    );
                }
            }
        }
    }

    #[test]
    fn oracle_unbiased() {
        for p in problems() {
            let rng = RandomSource::new(123, 7);
            let w = rng.substream(0).normal_vec(p.dim);
            let full = p.grad(&w);
            let n = 10_000u64;
            let mut sum = vec![0.0; p.dim];
            let mut sq = vec![0.0; p.dim];
            let oracle = rng.substream(1);
            for k in 0..n {
                let g = p.sample_grad(&w, 0, p.n_samples, &oracle, k);
                for j in 0..p.dim {
                    sum[j] += g[j];
                    sq[j] += g[j] * g[j];
                }
            }
            for j in 0..p.dim {
                let mean = sum[j] / n as f64;
                let var = (sq[j] / n as f64 - mean * mean).max(0.0);
                let stderr = (var / n as f64).sqrt();
                assert!(
                    (mean - full[j]).abs() <= 5.0 * stderr.max(1e-12),
                    "{} coord {j}: {mean} vs {}",
                    p.name,
                    full[j]
                );
            }
        }
    }

    #[test]
    fn smoothness_constant_holds_empirically() {
        // ||grad(u) - grad(v)|| <= beta ||u - v|| on random pairs
        let rng = RandomSource::new(7, 0);
        for p in problems() {
            for trial in 0..20u64 {
                let u = rng.substream(2 * trial).normal_vec(p.dim);
                let v = rng.substream(2 * trial + 1).normal_vec(p.dim);
                let gu = p.grad(&u);
                let gv = p.grad(&v);
                let dg: f64 = gu
                    .iter()
                    .zip(&gv)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let dw: f64 = u
                    .iter()
                    .zip(&v)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!(dg <= p.beta * dw * (1.0 + 1e-9), "{}: {dg} > {}", p.name, p.beta * dw);
            }
        }
    }

    #[test]
    fn shards_partition_rows() {
        let p = Problem::least_squares(8, 30, 1);
        let mut covered = 0;
        for k in 0..4 {
            let (lo, hi) = p.shard(k, 4);
            assert_eq!(lo, covered);
            covered = hi;
        }
        assert_eq!(covered, 30);
    }
}
