//! Lowest eigenpairs of a real symmetric tridiagonal matrix.
//!
//! Eigenvalues come from Sturm-sequence bisection, eigenvectors from inverse
//! iteration with a partially pivoted tridiagonal solve, re-orthogonalized
//! against the lower vectors already found.

/// Why an eigenpair could not be produced.
#[derive(Debug, Clone, PartialEq)]
pub enum EigenFailure {
    BadInput(String),
    NotConverged { state: usize, residual: f64 },
}

impl std::fmt::Display for EigenFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EigenFailure::BadInput(msg) => write!(f, "{msg}"),
            EigenFailure::NotConverged { state, residual } => {
                write!(f, "state {state} residual {residual:.3e} after inverse iteration")
            }
        }
    }
}

/// Number of eigenvalues strictly below `x`.
fn sturm_count(diag: &[f64], off: &[f64], x: f64, pivmin: f64) -> usize {
    let mut count = 0;
    let mut q = diag[0] - x;
    if q.abs() < pivmin {
        q = -pivmin;
    }
    if q < 0.0 {
        count += 1;
    }
    for i in 1..diag.len() {
        q = diag[i] - x - off[i - 1] * off[i - 1] / q;
        if q.abs() < pivmin {
            q = -pivmin;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

fn gershgorin(diag: &[f64], off: &[f64]) -> (f64, f64) {
    let n = diag.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let left = if i > 0 { off[i - 1].abs() } else { 0.0 };
        let right = if i + 1 < n { off[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - left - right);
        hi = hi.max(diag[i] + left + right);
    }
    (lo, hi)
}

/// Solves `(T − shift) x = b` in place with partial pivoting; zero pivots are
/// nudged to `tiny`, which is what inverse iteration wants.
fn shifted_solve(diag: &[f64], off: &[f64], shift: f64, b: &mut [f64], tiny: f64) {
    let n = diag.len();
    let mut d: Vec<f64> = diag.iter().map(|v| v - shift).collect();
    let mut du: Vec<f64> = off.to_vec();
    let dl = off;
    let mut du2 = vec![0.0; n.saturating_sub(2)];
    let nudge = |v: f64| if v.abs() < tiny { if v < 0.0 { -tiny } else { tiny } } else { v };
    for i in 0..n - 1 {
        if d[i].abs() >= dl[i].abs() {
            let p = nudge(d[i]);
            d[i] = p;
            let fact = dl[i] / p;
            d[i + 1] -= fact * du[i];
            b[i + 1] -= fact * b[i];
        } else {
            let fact = d[i] / dl[i];
            d[i] = dl[i];
            let temp = d[i + 1];
            d[i + 1] = du[i] - fact * temp;
            if i + 2 < n {
                du2[i] = du[i + 1];
                du[i + 1] = -fact * du2[i];
            }
            du[i] = temp;
            let bi = b[i];
            b[i] = b[i + 1];
            b[i + 1] = bi - fact * b[i + 1];
        }
    }
    d[n - 1] = nudge(d[n - 1]);
    b[n - 1] /= d[n - 1];
    if n >= 2 {
        b[n - 2] = (b[n - 2] - du[n - 2] * b[n - 1]) / d[n - 2];
    }
    for i in (0..n.saturating_sub(2)).rev() {
        b[i] = (b[i] - du[i] * b[i + 1] - du2[i] * b[i + 2]) / d[i];
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Lowest `k` eigenvalues (ascending) and unit-norm eigenvectors.
pub fn lowest_eigenpairs(diag: &[f64], off: &[f64], k: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>), EigenFailure> {
    let n = diag.len();
    if n == 0 || off.len() + 1 != n {
        return Err(EigenFailure::BadInput(format!(
            "diagonal of length {n} needs {} off-diagonal entries, got {}",
            n.saturating_sub(1),
            off.len()
        )));
    }
    if k == 0 || k > n {
        return Err(EigenFailure::BadInput(format!("cannot extract {k} eigenpairs from a {n}×{n} matrix")));
    }
    if diag.iter().chain(off).any(|v| !v.is_finite()) {
        return Err(EigenFailure::BadInput("matrix has non-finite entries".into()));
    }
    let (glo, ghi) = gershgorin(diag, off);
    let scale = glo.abs().max(ghi.abs()).max(f64::MIN_POSITIVE);
    let pivmin = f64::MIN_POSITIVE.max(f64::EPSILON * f64::EPSILON * scale);

    let mut values = Vec::with_capacity(k);
    for idx in 0..k {
        let (mut lo, mut hi) = (glo - 1e-12 * scale, ghi + 1e-12 * scale);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if sturm_count(diag, off, mid, pivmin) > idx {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 2.0 * f64::EPSILON * (lo.abs().max(hi.abs())) + pivmin {
                break;
            }
        }
        values.push(0.5 * (lo + hi));
    }

    let tiny = f64::EPSILON * scale;
    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(k);
    for (state, &lambda) in values.iter().enumerate() {
        // deterministic, non-symmetric start so no eigenvector is missed by parity
        let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i * 7919 + state * 104_729) % 97) as f64 / 97.0).collect();
        let mut residual = f64::INFINITY;
        for _ in 0..6 {
            shifted_solve(diag, off, lambda, &mut x, tiny);
            for prev in &vectors {
                let overlap: f64 = prev.iter().zip(&x).map(|(a, b)| a * b).sum();
                x.iter_mut().zip(prev).for_each(|(xi, pi)| *xi -= overlap * pi);
            }
            let nx = norm(&x);
            if nx == 0.0 || !nx.is_finite() {
                break;
            }
            x.iter_mut().for_each(|v| *v /= nx);
            residual = (0..n)
                .map(|i| {
                    let mut tx = diag[i] * x[i];
                    if i > 0 {
                        tx += off[i - 1] * x[i - 1];
                    }
                    if i + 1 < n {
                        tx += off[i] * x[i + 1];
                    }
                    (tx - lambda * x[i]).powi(2)
                })
                .sum::<f64>()
                .sqrt();
            if residual <= 1e-12 * scale {
                break;
            }
        }
        if !(residual <= 1e-9 * scale) {
            return Err(EigenFailure::NotConverged { state, residual });
        }
        vectors.push(x);
    }
    Ok((values, vectors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn discrete_laplacian_spectrum() {
        // tridiag(−1, 2, −1) of size n has eigenvalues 2 − 2cos(kπ/(n+1))
        let n = 50;
        let diag = vec![2.0; n];
        let off = vec![-1.0; n - 1];
        let (vals, vecs) = lowest_eigenpairs(&diag, &off, 4).unwrap();
        for (k, v) in vals.iter().enumerate() {
            let exact = 2.0 - 2.0 * ((k + 1) as f64 * PI / (n + 1) as f64).cos();
            assert!((v - exact).abs() < 1e-13, "{v} vs {exact}");
        }
        for a in 0..4 {
            for b in 0..4 {
                let dot: f64 = vecs[a].iter().zip(&vecs[b]).map(|(x, y)| x * y).sum();
                let expected = if a == b { 1.0 } else { 0.0 };
                assert!((dot - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(lowest_eigenpairs(&[1.0, 2.0], &[], 1).is_err());
        assert!(lowest_eigenpairs(&[1.0, 2.0], &[0.5], 3).is_err());
        assert!(lowest_eigenpairs(&[1.0, f64::NAN], &[0.5], 1).is_err());
    }

    #[test]
    fn near_degenerate_pair_stays_orthogonal() {
        // two weakly coupled identical blocks: tunnelling-split doublet
        let n = 40;
        let mut diag = vec![2.0; n];
        let mut off = vec![-1.0; n - 1];
        off[n / 2 - 1] = -1e-6;
        diag[0] = 1.0;
        diag[n - 1] = 1.0;
        let (vals, vecs) = lowest_eigenpairs(&diag, &off, 2).unwrap();
        assert!(vals[1] - vals[0] < 1e-5);
        let dot: f64 = vecs[0].iter().zip(&vecs[1]).map(|(x, y)| x * y).sum();
        assert!(dot.abs() < 1e-8);
    }
}
