use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative diagonal-of-R threshold for declaring rank deficiency (on
/// unit-norm columns).
const RANK_RCOND: f64 = 1e-10;

/// Least-squares solution of `a x ≈ b`.
///
/// Columns are scaled to unit norm, then solved by Householder QR. When `R`
/// shows rank deficiency the solve falls back to column-pivoted QR and returns
/// the basic solution (zeros on the dependent columns). All-zero columns get a
/// zero coefficient.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let (m, n) = a.shape();
    if b.len() != m {
        return Err(Error::ShapeMismatch(format!(
            "lstsq: matrix has {m} rows, right-hand side {}",
            b.len()
        )));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("lstsq input".into()));
    }
    let norms: Vec<f64> = a.column_iter().map(|c| c.norm()).collect();
    let live: Vec<usize> = (0..n).filter(|&j| norms[j] > 0.0).collect();
    let mut x = DVector::zeros(n);
    if live.is_empty() {
        return Ok(x);
    }
    let scaled = DMatrix::from_fn(m, live.len(), |i, k| a[(i, live[k])] / norms[live[k]]);

    let sol = if m >= live.len() {
        householder_solve(&scaled, b).unwrap_or_else(|| pivoted_solve(&scaled, b))
    } else {
        pivoted_solve(&scaled, b)
    };
    for (k, &j) in live.iter().enumerate() {
        x[j] = sol[k] / norms[j];
    }
    Ok(x)
}

fn householder_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let n = a.ncols();
    let qr = a.clone().qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..n).map(|i| r[(i, i)].abs()).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    if diag.iter().any(|d| *d <= RANK_RCOND * max) {
        return None;
    }
    let mut qtb = b.clone();
    qr.q_tr_mul(&mut qtb);
    let rhs = qtb.rows(0, n).into_owned();
    r.solve_upper_triangular(&rhs)
}

/// Householder QR with column pivoting; basic solution on the numerical rank.
fn pivoted_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let (m, n) = a.shape();
    let mut r = a.clone();
    let mut y = b.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let steps = m.min(n);
    let mut rank = 0;
    let mut r00 = 0.0;

    for k in 0..steps {
        let (best, best_norm) = (k..n)
            .map(|j| (j, r.view((k, j), (m - k, 1)).norm()))
            .fold((k, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if k == 0 {
            r00 = best_norm;
        }
        if best_norm <= RANK_RCOND * r00 || best_norm == 0.0 {
            break;
        }
        r.swap_columns(k, best);
        perm.swap(k, best);

        let alpha = if r[(k, k)] > 0.0 { -best_norm } else { best_norm };
        let mut v: DVector<f64> = r.view((k, k), (m - k, 1)).column(0).into_owned();
        v[0] -= alpha;
        let vnorm = v.norm();
        if vnorm > 0.0 {
            v /= vnorm;
            for j in k..n {
                let dot = v.dot(&r.view((k, j), (m - k, 1)).column(0));
                for i in k..m {
                    r[(i, j)] -= 2.0 * dot * v[i - k];
                }
            }
            let dot = v.dot(&y.rows(k, m - k));
            for i in k..m {
                y[i] -= 2.0 * dot * v[i - k];
            }
        }
        rank = k + 1;
    }

    let mut z = DVector::zeros(n);
    for i in (0..rank).rev() {
        let mut s = y[i];
        for j in i + 1..rank {
            s -= r[(i, j)] * z[j];
        }
        z[i] = s / r[(i, i)];
    }
    let mut x = DVector::zeros(n);
    for (k, &j) in perm.iter().enumerate() {
        x[j] = z[k];
    }
    x
}
