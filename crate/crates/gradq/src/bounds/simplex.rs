//! Dense two-phase tableau simplex for the tiny LPs in this crate
//! (`s + 1` variables, `s + 1` constraints). Bland's rule for pivot
//! selection, so cycling is impossible.

const TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub value: f64,
    pub x: Vec<f64>,
}

/// Maximize `c . x` subject to `a x <= b`, `x >= 0`. Rows of `a` may have
/// negative right-hand sides; feasibility is established in phase 1.
pub fn solve_max(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Result<LpSolution, String> {
    let n = c.len();
    let m = b.len();
    assert!(a.len() == m && a.iter().all(|row| row.len() == n));

    let n_art = b.iter().filter(|&&bi| bi < 0.0).count();
    let ncols = n + m + n_art;
    // tableau rows: [vars | slacks | artificials | rhs]
    let mut t = vec![vec![0.0; ncols + 1]; m];
    let mut basis = vec![0usize; m];
    let mut art = 0usize;
    for i in 0..m {
        let flip = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i][j] = flip * a[i][j];
        }
        t[i][n + i] = flip; // slack
        t[i][ncols] = flip * b[i];
        if b[i] < 0.0 {
            t[i][n + m + art] = 1.0;
            basis[i] = n + m + art;
            art += 1;
        } else {
            basis[i] = n + i;
        }
    }

    if n_art > 0 {
        // phase 1: maximize -(sum of artificials)
        let mut c1 = vec![0.0; ncols];
        for j in n + m..ncols {
            c1[j] = -1.0;
        }
        let v1 = run_simplex(&mut t, &mut basis, &c1, ncols)?;
        if v1 < -1e-7 {
            return Err("infeasible linear program".into());
        }
        // drive any degenerate artificial out of the basis
        for i in 0..m {
            if basis[i] >= n + m {
                if let Some(j) = (0..n + m).find(|&j| t[i][j].abs() > TOL) {
                    pivot(&mut t, &mut basis, i, j);
                } else {
                    // redundant row: zero it so it never pivots again
                    for v in t[i].iter_mut() {
                        *v = 0.0;
                    }
                }
            }
        }
        // forbid artificials from re-entering
        for row in t.iter_mut() {
            for j in n + m..ncols {
                row[j] = 0.0;
            }
        }
    }

    let mut c2 = vec![0.0; ncols];
    c2[..n].copy_from_slice(c);
    run_simplex(&mut t, &mut basis, &c2, ncols)?;

    let mut x = vec![0.0; n];
    for i in 0..m {
        if basis[i] < n {
            x[basis[i]] = t[i][ncols];
        }
    }
    let value = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
    Ok(LpSolution { value, x })
}

/// Bland's rule iterations on an already-feasible tableau; returns the
/// objective value.
fn run_simplex(
    t: &mut [Vec<f64>],
    basis: &mut [usize],
    c: &[f64],
    ncols: usize,
) -> Result<f64, String> {
    let m = t.len();
    for _ in 0..10_000 {
        // reduced costs relative to the current basis
        let mut entering = None;
        for j in 0..ncols {
            if basis.contains(&j) {
                continue;
            }
            let mut r = c[j];
            for i in 0..m {
                r -= c[basis[i]] * t[i][j];
            }
            if r > TOL {
                entering = Some(j); // smallest index: Bland
                break;
            }
        }
        let Some(j) = entering else {
            let mut value = 0.0;
            for i in 0..m {
                value += c[basis[i]] * t[i][ncols];
            }
            return Ok(value);
        };
        // ratio test, ties broken by smallest basis index (Bland)
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            if t[i][j] > TOL {
                let ratio = t[i][ncols] / t[i][j];
                match leave {
                    None => leave = Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio < lr - TOL || (ratio < lr + TOL && basis[i] < basis[li]) {
                            leave = Some((i, ratio));
                        }
                    }
                }
            }
        }
        let Some((i, _)) = leave else {
            return Err("linear program is unbounded".into());
        };
        pivot(t, basis, i, j);
    }
    Err("simplex iteration limit reached".into())
}

fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], row: usize, col: usize) {
    let p = t[row][col];
    for v in t[row].iter_mut() {
        *v /= p;
    }
    for i in 0..t.len() {
        if i != row && t[i][col].abs() > 0.0 {
            let f = t[i][col];
            for j in 0..t[i].len() {
                t[i][j] -= f * t[row][j];
            }
        }
    }
    basis[row] = col;
}
