//! Symmetric positive definite banded storage with an in-place Cholesky
//! factorization. Every linear system in the crate (beam quadratic program,
//! transmission problem on the tensor grid) is banded once unknowns are
//! numbered column by column.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not positive definite (pivot {pivot} = {value:e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: usize, value: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Lower band of a symmetric matrix: `A[i][i - k]` for `k in 0..=bw`.
#[derive(Debug, Clone)]
pub struct BandedSpd {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedSpd {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (i - j)
    }

    /// Adds `v` to the symmetric pair `(i, j)`, `(j, i)`.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        assert!(r - c <= self.bw, "entry ({r},{c}) outside band {}", self.bw);
        let k = self.idx(r, c);
        self.data[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if r - c > self.bw {
            0.0
        } else {
            self.data[self.idx(r, c)]
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            y[i] += self.data[self.idx(i, i)] * x[i];
            for j in lo..i {
                let a = self.data[self.idx(i, j)];
                y[i] += a * x[j];
                y[j] += a * x[i];
            }
        }
        y
    }

    /// Cholesky factorization `A = L L^T`, consuming the matrix.
    pub fn factor(mut self) -> Result<BandedCholesky, LinalgError> {
        let (n, bw) = (self.n, self.bw);
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let plo = lo.max(j.saturating_sub(bw));
                let mut s = self.data[self.idx(i, j)];
                for p in plo..j {
                    s -= self.data[self.idx(i, p)] * self.data[self.idx(j, p)];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(LinalgError::NotPositiveDefinite {
                            row: i,
                            pivot: i,
                            value: s,
                        });
                    }
                    let k = self.idx(i, i);
                    self.data[k] = s.sqrt();
                } else {
                    let k = self.idx(i, j);
                    self.data[k] = s / self.data[self.idx(j, j)];
                }
            }
        }
        Ok(BandedCholesky { l: self })
    }
}

#[derive(Debug, Clone)]
pub struct BandedCholesky {
    l: BandedSpd,
}

impl BandedCholesky {
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let n = self.l.n;
        if rhs.len() != n {
            return Err(LinalgError::Dimension {
                expected: n,
                got: rhs.len(),
            });
        }
        let bw = self.l.bw;
        let mut y = rhs.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for p in i.saturating_sub(bw)..i {
                s -= self.l.data[self.l.idx(i, p)] * y[p];
            }
            y[i] = s / self.l.data[self.l.idx(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for r in (i + 1)..n.min(i + bw + 1) {
                s -= self.l.data[self.l.idx(r, i)] * y[r];
            }
            y[i] = s / self.l.data[self.l.idx(i, i)];
        }
        Ok(y)
    }
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian(n: usize) -> BandedSpd {
        let mut a = BandedSpd::zeros(n, 1);
        for i in 0..n {
            a.add(i, i, 2.0);
            if i + 1 < n {
                a.add(i + 1, i, -1.0);
            }
        }
        a
    }

    #[test]
    fn solves_tridiagonal_exactly() {
        let n = 9;
        let a = laplacian(n);
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let b = a.mul_vec(&x);
        let sol = a.factor().unwrap().solve(&b).unwrap();
        for (s, e) in sol.iter().zip(&x) {
            assert!((s - e).abs() < 1e-12);
        }
    }

    #[test]
    fn wide_band_matches_dense_product() {
        let n = 20;
        let bw = 4;
        let mut a = BandedSpd::zeros(n, bw);
        for i in 0..n {
            a.add(i, i, 10.0 + i as f64);
            for k in 1..=bw {
                if i >= k {
                    a.add(i, i - k, 1.0 / (1.0 + (i + k) as f64));
                }
            }
        }
        let x: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * i as f64).collect();
        let b = a.mul_vec(&x);
        let sol = a.factor().unwrap().solve(&b).unwrap();
        assert!(sol.iter().zip(&x).all(|(s, e)| (s - e).abs() < 1e-12));
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let mut a = BandedSpd::zeros(2, 1);
        a.add(0, 0, 1.0);
        a.add(1, 1, 1.0);
        a.add(1, 0, 2.0);
        assert!(matches!(
            a.factor(),
            Err(LinalgError::NotPositiveDefinite { row: 1, .. })
        ));
    }
}
