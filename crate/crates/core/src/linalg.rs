//! Dense complex matrices, LU factorization with partial pivoting and an
//! infinity-norm condition estimate computed from the LU factors.

use crate::error::{Error, Result};
use num_complex::Complex64;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Clone + Default> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::default(); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length must equal rows * cols");
        Self { rows, cols, data }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].clone())
    }

    pub fn column(&self, c: usize) -> Vec<T> {
        (0..self.rows).map(|r| self[(r, c)].clone()).collect()
    }
}

impl<T> Matrix<T> {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (r, c): (usize, usize)) -> &T {
        &self.data[r * self.cols + c]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        &mut self.data[r * self.cols + c]
    }
}

pub type CMatrix = Matrix<Complex64>;

impl CMatrix {
    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| {
            if r == c {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn scale(&self, s: Complex64) -> Self {
        self.map(|z| z * s)
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|r| self.row(r).iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Assemble `[a b; c d]` from four equally sized square blocks.
    pub fn from_blocks(a: &Self, b: &Self, c: &Self, d: &Self) -> Self {
        let n = a.rows;
        for blk in [b, c, d] {
            assert_eq!((blk.rows, blk.cols), (n, n), "blocks must share one order");
        }
        Self::from_fn(2 * n, 2 * n, |r, col| {
            let blk = match (r < n, col < n) {
                (true, true) => a,
                (true, false) => b,
                (false, true) => c,
                (false, false) => d,
            };
            blk[(r % n, col % n)]
        })
    }

    /// Largest `|M[p][l] - M[(p - l) mod n][0]|`, zero for an exactly circulant matrix.
    pub fn circulant_deviation(&self) -> f64 {
        assert!(self.is_square());
        let n = self.rows;
        let mut worst = 0.0f64;
        for p in 0..n {
            for l in 0..n {
                let k = (p + n - l) % n;
                worst = worst.max((self[(p, l)] - self[(k, 0)]).norm());
            }
        }
        worst
    }
}

pub fn norm_inf_vec(x: &[Complex64]) -> f64 {
    x.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn norm1_vec(x: &[Complex64]) -> f64 {
    x.iter().map(|z| z.norm()).sum()
}

/// LU factors `P A = L U` with unit lower-triangular `L`, stored in place.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: CMatrix,
    perm: Vec<usize>,
    norm_inf: f64,
}

impl Lu {
    pub fn factor(a: &CMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Invalid(format!(
                "LU needs a square matrix, got {}x{}",
                a.rows, a.cols
            )));
        }
        let n = a.rows;
        let norm_inf = a.norm_inf();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let tiny = f64::MIN_POSITIVE * norm_inf.max(1.0) * n as f64;

        for k in 0..n {
            let (piv, mag) = (k..n)
                .map(|r| (r, lu[(r, k)].norm()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if !(mag > tiny) {
                return Err(Error::SingularMatrix { pivot: k, size: n });
            }
            if piv != k {
                for c in 0..n {
                    lu.data.swap(k * n + c, piv * n + c);
                }
                perm.swap(k, piv);
            }
            let pivot = lu[(k, k)];
            for r in k + 1..n {
                let factor = lu[(r, k)] / pivot;
                lu[(r, k)] = factor;
                if factor != Complex64::new(0.0, 0.0) {
                    for c in k + 1..n {
                        let u = lu[(k, c)];
                        lu[(r, c)] -= factor * u;
                    }
                }
            }
        }
        Ok(Self { lu, perm, norm_inf })
    }

    pub fn order(&self) -> usize {
        self.lu.rows
    }

    /// Solve `A x = b`.
    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.order();
        assert_eq!(b.len(), n);
        let mut x: Vec<Complex64> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 0..n {
            let s: Complex64 = (0..r).map(|c| self.lu[(r, c)] * x[c]).sum();
            x[r] -= s;
        }
        for r in (0..n).rev() {
            let s: Complex64 = (r + 1..n).map(|c| self.lu[(r, c)] * x[c]).sum();
            x[r] = (x[r] - s) / self.lu[(r, r)];
        }
        x
    }

    /// Solve `A^H x = b`.
    pub fn solve_adjoint(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.order();
        assert_eq!(b.len(), n);
        // A^H = U^H L^H P, so solve U^H y = b, L^H z = y, x = P^T z.
        let mut y = b.to_vec();
        for r in 0..n {
            let s: Complex64 = (0..r).map(|c| self.lu[(c, r)].conj() * y[c]).sum();
            y[r] = (y[r] - s) / self.lu[(r, r)].conj();
        }
        for r in (0..n).rev() {
            let s: Complex64 = (r + 1..n).map(|c| self.lu[(c, r)].conj() * y[c]).sum();
            y[r] -= s;
        }
        let mut x = vec![Complex64::new(0.0, 0.0); n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = y[k];
        }
        x
    }

    /// Estimate of `||A||_inf * ||A^{-1}||_inf`.
    ///
    /// `||A^{-1}||_inf = ||A^{-H}||_1`, estimated with Hager's power
    /// iteration (Higham's complex variant) using solves with `A` and `A^H`.
    pub fn condition_estimate_inf(&self) -> f64 {
        let n = self.order();
        let zero = Complex64::new(0.0, 0.0);
        let mut x = vec![Complex64::new(1.0 / n as f64, 0.0); n];
        let mut estimate = 0.0;
        for _ in 0..5 {
            // y = B x with B = A^{-H}
            let y = self.solve_adjoint(&x);
            let new_estimate = norm1_vec(&y);
            let xi: Vec<Complex64> = y
                .iter()
                .map(|v| if v.norm() > 0.0 { v / v.norm() } else { Complex64::new(1.0, 0.0) })
                .collect();
            // z = B^H xi = A^{-1} xi
            let z = self.solve(&xi);
            let (j, zmax) = z
                .iter()
                .enumerate()
                .map(|(i, v)| (i, v.norm()))
                .fold((0, -1.0), |b, c| if c.1 > b.1 { c } else { b });
            let ztx: f64 = z.iter().zip(&x).map(|(a, b)| (a.conj() * b).re).sum();
            if new_estimate <= estimate || zmax <= ztx {
                estimate = estimate.max(new_estimate);
                break;
            }
            estimate = new_estimate;
            x = vec![zero; n];
            x[j] = Complex64::new(1.0, 0.0);
        }
        // Higham's alternating-sign safeguard.
        let alt: Vec<Complex64> = (0..n)
            .map(|i| {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                Complex64::new(sign * (1.0 + i as f64 / (n.max(2) - 1) as f64), 0.0)
            })
            .collect();
        let alt_est = 2.0 * norm1_vec(&self.solve_adjoint(&alt)) / (3.0 * n as f64);
        self.norm_inf * estimate.max(alt_est)
    }
}

/// `||A x - b||_inf / ||b||_inf` (or the absolute residual when `b = 0`).
pub fn relative_residual(a: &CMatrix, x: &[Complex64], b: &[Complex64]) -> f64 {
    let ax = a.mul_vec(x);
    let r = ax
        .iter()
        .zip(b)
        .map(|(u, v)| (u - v).norm())
        .fold(0.0, f64::max);
    let nb = norm_inf_vec(b);
    if nb > 0.0 {
        r / nb
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Textbook Gaussian elimination on the augmented matrix, no pivot search
    /// beyond swapping out exact zeros.
    fn naive_solve(a: &CMatrix, b: &[Complex64]) -> Vec<Complex64> {
        let n = a.rows();
        let mut m: Vec<Vec<Complex64>> = (0..n)
            .map(|r| {
                let mut row = a.row(r).to_vec();
                row.push(b[r]);
                row
            })
            .collect();
        for k in 0..n {
            let p = (k..n).find(|&r| m[r][k].norm() > 0.0).unwrap();
            m.swap(k, p);
            for r in 0..n {
                if r != k {
                    let f = m[r][k] / m[k][k];
                    for cc in k..=n {
                        let t = m[k][cc];
                        m[r][cc] -= f * t;
                    }
                }
            }
        }
        (0..n).map(|r| m[r][n] / m[r][r]).collect()
    }

    fn pseudo_random_matrix(n: usize, seed: u64) -> CMatrix {
        let mut state = seed;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut m = CMatrix::from_fn(n, n, |_, _| c(next(), next()));
        for i in 0..n {
            m[(i, i)] += c(n as f64, 0.0);
        }
        m
    }

    #[test]
    fn identity_returns_rhs() {
        let a = CMatrix::identity(6);
        let b: Vec<_> = (0..6).map(|i| c(i as f64, -(i as f64))).collect();
        let x = Lu::factor(&a).unwrap().solve(&b);
        assert_eq!(x, b);
    }

    #[test]
    fn lu_matches_naive_elimination() {
        let a = pseudo_random_matrix(16, 7);
        let b: Vec<_> = (0..16).map(|i| c((i as f64).sin(), (i as f64).cos())).collect();
        let lu = Lu::factor(&a).unwrap();
        let x = lu.solve(&b);
        let y = naive_solve(&a, &b);
        let diff = x.iter().zip(&y).map(|(u, v)| (u - v).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-12 * norm_inf_vec(&y), "diff {diff}");
        assert!(relative_residual(&a, &x, &b) < 1e-14);
    }

    #[test]
    fn adjoint_solve() {
        let a = pseudo_random_matrix(9, 3);
        let b: Vec<_> = (0..9).map(|i| c(1.0 + i as f64, 0.5)).collect();
        let x = Lu::factor(&a).unwrap().solve_adjoint(&b);
        let ah = CMatrix::from_fn(9, 9, |r, cc| a[(cc, r)].conj());
        assert!(relative_residual(&ah, &x, &b) < 1e-14);
    }

    #[test]
    fn singular_matrix_rejected() {
        let mut a = CMatrix::identity(4);
        a[(2, 2)] = c(0.0, 0.0);
        assert!(matches!(Lu::factor(&a), Err(Error::SingularMatrix { .. })));
    }

    #[test]
    fn condition_estimate_against_explicit_inverse() {
        let a = pseudo_random_matrix(12, 11);
        let lu = Lu::factor(&a).unwrap();
        let inv_cols: Vec<Vec<Complex64>> = (0..12)
            .map(|j| {
                let mut e = vec![c(0.0, 0.0); 12];
                e[j] = c(1.0, 0.0);
                lu.solve(&e)
            })
            .collect();
        let inv = CMatrix::from_fn(12, 12, |r, cc| inv_cols[cc][r]);
        let exact = a.norm_inf() * inv.norm_inf();
        let est = lu.condition_estimate_inf();
        // Hager's estimate is a lower bound, usually within a small factor.
        assert!(est <= exact * (1.0 + 1e-10) && est >= exact / 3.0, "{est} vs {exact}");

        let diag = CMatrix::from_fn(5, 5, |r, cc| if r == cc { c(10f64.powi(r as i32), 0.0) } else { c(0.0, 0.0) });
        let est = Lu::factor(&diag).unwrap().condition_estimate_inf();
        assert!((est - 1e4).abs() < 1e-6 * 1e4);
    }

    #[test]
    fn circulant_deviation_detects_structure() {
        let col = [c(1.0, 0.0), c(2.0, 1.0), c(3.0, -1.0), c(0.5, 0.5)];
        let m = CMatrix::from_fn(4, 4, |p, l| col[(p + 4 - l) % 4]);
        assert_eq!(m.circulant_deviation(), 0.0);
        let mut broken = m.clone();
        broken[(1, 2)] += c(1e-3, 0.0);
        assert!(broken.circulant_deviation() > 1e-4);
    }
}
