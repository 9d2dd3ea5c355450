//! Small dense linear-algebra helpers on top of nalgebra.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;

pub type CMat = DMatrix<C64>;
pub type RMat = DMatrix<f64>;

pub fn to_complex(a: &RMat) -> CMat {
    a.map(|x| C64::new(x, 0.0))
}

pub fn real_part(a: &CMat) -> RMat {
    a.map(|z| z.re)
}

/// Eigenpairs of a real symmetric matrix, sorted by ascending |eigenvalue|.
pub fn sym_eigen_by_magnitude(a: &RMat) -> (Vec<f64>, RMat) {
    let n = a.nrows();
    if n == 0 {
        return (vec![], RMat::zeros(0, 0));
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[i].abs().total_cmp(&eig.eigenvalues[j].abs()));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = RMat::zeros(n, n);
    for (k, &i) in idx.iter().enumerate() {
        vecs.set_column(k, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

pub fn spectral_norm_real(a: &RMat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().singular_values().max()
}

pub fn spectral_norm(a: &CMat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().singular_values().max()
}

pub fn min_singular_value(a: &CMat) -> f64 {
    if a.is_empty() {
        return f64::INFINITY;
    }
    a.clone().singular_values().min()
}

/// Inverse via LU; fails when the reciprocal condition estimate is below `rcond_min`.
pub fn inverse(a: &CMat, what: &str, rcond_min: f64) -> Result<CMat> {
    let n = a.nrows();
    if n == 0 {
        return Ok(CMat::zeros(0, 0));
    }
    let inv = a.clone().lu().try_inverse();
    match inv {
        Some(inv) => {
            let rc = 1.0 / (max_abs(a) * max_abs(&inv) * n as f64);
            if rc.is_finite() && rc > rcond_min {
                Ok(inv)
            } else {
                Err(Error::Inversion { what: what.to_string(), min_sv: min_singular_value(a) })
            }
        }
        None => Err(Error::Inversion { what: what.to_string(), min_sv: 0.0 }),
    }
}

pub fn max_abs(a: &CMat) -> f64 {
    a.iter().fold(0.0, |m, z| m.max(z.norm()))
}

/// Orthogonal projection onto the span of the orthonormal columns of `b`.
pub fn projector(b: &RMat, n: usize) -> RMat {
    if b.ncols() == 0 {
        return RMat::zeros(n, n);
    }
    b * b.transpose()
}

/// Modified Gram–Schmidt; drops columns whose residual norm falls below `tol`.
pub fn orthonormalize(cols: &[DVector<f64>], tol: f64) -> RMat {
    let n = cols.first().map_or(0, |c| c.len());
    let mut out: Vec<DVector<f64>> = Vec::new();
    for c in cols {
        let mut v = c.clone();
        for _ in 0..2 {
            for q in &out {
                let d = q.dot(&v);
                v -= q * d;
            }
        }
        let nv = v.norm();
        if nv > tol * c.norm().max(1e-300) {
            out.push(v / nv);
        }
    }
    let mut m = RMat::zeros(n, out.len());
    for (k, q) in out.iter().enumerate() {
        m.set_column(k, q);
    }
    m
}

/// Ordinary least squares slope/intercept with stderr of the slope and RMS residual.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let ss: f64 = x.iter().zip(y).map(|(a, b)| (b - icpt - slope * a).powi(2)).sum();
    let rms = (ss / n).sqrt();
    let stderr = if n > 2.0 { (ss / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    (slope, icpt, stderr, rms)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_sorted_by_magnitude() {
        let a = RMat::from_diagonal(&DVector::from_vec(vec![3.0, -1e-15, -2.0]));
        let (v, _) = sym_eigen_by_magnitude(&a);
        assert!(v[0].abs() < 1e-14 && (v[1] + 2.0).abs() < 1e-14 && (v[2] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn fit_recovers_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|t| 2.0 - 0.75 * t).collect();
        let (s, c, e, r) = linear_fit(&x, &y);
        assert!((s + 0.75).abs() < 1e-14 && (c - 2.0).abs() < 1e-13 && e < 1e-13 && r < 1e-13);
    }
}
