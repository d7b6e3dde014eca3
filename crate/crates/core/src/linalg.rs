//! Small dense and banded linear algebra used across the crate.

use crate::error::{Error, Result};
use crate::C64;
use nalgebra::DMatrix;

/// Eigenvalues of a small dense real matrix, sorted by real part then
/// imaginary part.
///
/// Backed by nalgebra's real Schur decomposition (Hessenberg reduction
/// followed by shifted QR sweeps).
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<C64>> {
    if !m.is_square() {
        return Err(Error::InvalidArgument(format!(
            "eigenvalues of a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericalFailure("non-finite matrix entry".into()));
    }
    let mut ev: Vec<C64> = m.clone().complex_eigenvalues().iter().copied().collect();
    sort_complex(&mut ev);
    Ok(ev)
}

pub(crate) fn sort_complex(v: &mut [C64]) {
    v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().singular_values().iter().fold(0.0_f64, |acc, s| acc.max(*s))
}

pub fn frobenius_sq(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|x| x * x).sum()
}

/// Tridiagonal matrix stored by diagonals; `sub[0]` and `sup[n-1]` are unused.
#[derive(Clone, Debug, PartialEq)]
pub struct Tridiagonal {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
}

impl Tridiagonal {
    pub fn new(sub: Vec<f64>, diag: Vec<f64>, sup: Vec<f64>) -> Result<Self> {
        let n = diag.len();
        if n == 0 || sub.len() != n || sup.len() != n {
            return Err(Error::InvalidArgument(format!(
                "tridiagonal band lengths {}/{}/{}",
                sub.len(),
                n,
                sup.len()
            )));
        }
        Ok(Self { sub, diag, sup })
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// `out = A x`
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let n = self.len();
        debug_assert_eq!(x.len(), n);
        debug_assert_eq!(out.len(), n);
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.sub[i] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.sup[i] * x[i + 1];
            }
            out[i] = acc;
        }
    }

    /// `I + s A`
    pub fn shifted_identity(&self, s: f64) -> Self {
        Self {
            sub: self.sub.iter().map(|x| s * x).collect(),
            diag: self.diag.iter().map(|x| 1.0 + s * x).collect(),
            sup: self.sup.iter().map(|x| s * x).collect(),
        }
    }

    /// Thomas-algorithm factorisation without pivoting.
    pub fn factor(&self) -> Result<ThomasFactor> {
        let n = self.len();
        let mut inv_pivot = vec![0.0; n];
        let mut sup_prime = vec![0.0; n];
        let mut prev = 0.0;
        for i in 0..n {
            let pivot = if i == 0 {
                self.diag[0]
            } else {
                self.diag[i] - self.sub[i] * prev
            };
            let scale = self.diag[i].abs() + self.sub[i].abs() + self.sup[i].abs();
            if !pivot.is_finite() || pivot.abs() <= 1e-14 * scale || pivot == 0.0 {
                return Err(Error::NumericalFailure(format!(
                    "tridiagonal solver breakdown at row {i} (pivot {pivot:e})"
                )));
            }
            inv_pivot[i] = 1.0 / pivot;
            prev = if i + 1 < n { self.sup[i] * inv_pivot[i] } else { 0.0 };
            sup_prime[i] = prev;
        }
        Ok(ThomasFactor {
            sub: self.sub.clone(),
            inv_pivot,
            sup_prime,
        })
    }
}

#[derive(Clone, Debug)]
pub struct ThomasFactor {
    sub: Vec<f64>,
    inv_pivot: Vec<f64>,
    sup_prime: Vec<f64>,
}

impl ThomasFactor {
    pub fn len(&self) -> usize {
        self.inv_pivot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inv_pivot.is_empty()
    }

    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = self.len();
        debug_assert_eq!(rhs.len(), n);
        rhs[0] *= self.inv_pivot[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.sub[i] * rhs[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.sup_prime[i] * rhs[i + 1];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thomas_matches_dense_solve() {
        let n = 7;
        let sub: Vec<f64> = (0..n).map(|i| -1.0 - 0.1 * i as f64).collect();
        let diag: Vec<f64> = (0..n).map(|i| 4.0 + 0.3 * i as f64).collect();
        let sup: Vec<f64> = (0..n).map(|i| -0.5 + 0.05 * i as f64).collect();
        let t = Tridiagonal::new(sub, diag, sup).unwrap();
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin() + 2.0).collect();
        let mut b = vec![0.0; n];
        t.apply(&x, &mut b);
        t.factor().unwrap().solve_in_place(&mut b);
        for (a, e) in b.iter().zip(&x) {
            assert!((a - e).abs() < 1e-13);
        }
    }

    #[test]
    fn thomas_reports_breakdown() {
        let t = Tridiagonal::new(vec![0.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]).unwrap();
        assert!(matches!(t.factor(), Err(Error::NumericalFailure(_))));
    }

    #[test]
    fn eigenvalues_of_rotation_block() {
        let m = DMatrix::from_row_slice(3, 3, &[0.0, -2.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, -1.0]);
        let ev = eigenvalues(&m).unwrap();
        assert!((ev[0] - C64::new(-1.0, 0.0)).norm() < 1e-12);
        assert!((ev[1] - C64::new(0.0, -2.0)).norm() < 1e-12);
        assert!((ev[2] - C64::new(0.0, 2.0)).norm() < 1e-12);
    }
}
