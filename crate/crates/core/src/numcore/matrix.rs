//! Dense row-major matrices sized for regression designs: tall-and-thin
//! data matrices and small square Gram matrices.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        assert!(!rows.is_empty());
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Matrix {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self.data[i * self.cols + l];
                if a == 0.0 {
                    continue;
                }
                let src = &other.data[l * other.cols..(l + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "matvec dimension mismatch");
        self.data
            .chunks_exact(self.cols)
            .map(|row| dot(row, v))
            .collect()
    }

    /// X'X / scale, accumulated over rows.
    pub fn gram(&self, scale: f64) -> Matrix {
        let m = self.cols;
        let mut g = Matrix::zeros(m, m);
        for row in self.data.chunks_exact(m) {
            for i in 0..m {
                let xi = row[i];
                for j in i..m {
                    g.data[i * m + j] += xi * row[j];
                }
            }
        }
        for i in 0..m {
            for j in 0..i {
                g.data[i * m + j] = g.data[j * m + i];
            }
        }
        if scale != 1.0 {
            for v in &mut g.data {
                *v /= scale;
            }
        }
        g
    }

    /// Copy of a contiguous block of columns.
    pub fn columns(&self, start: usize, count: usize) -> Matrix {
        assert!(start + count <= self.cols);
        let mut out = Matrix::zeros(self.rows, count);
        for i in 0..self.rows {
            out.data[i * count..(i + 1) * count]
                .copy_from_slice(&self.data[i * self.cols + start..i * self.cols + start + count]);
        }
        out
    }

    /// Copy of a contiguous block of rows [start, end).
    pub fn row_block(&self, start: usize, end: usize) -> Matrix {
        assert!(start < end && end <= self.rows);
        Matrix {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    pub fn sub_block(&self, row0: usize, col0: usize, rows: usize, cols: usize) -> Matrix {
        assert!(row0 + rows <= self.rows && col0 + cols <= self.cols);
        let mut out = Matrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                out.data[i * cols + j] = self.get(row0 + i, col0 + j);
            }
        }
        out
    }

    pub fn trace(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        (0..self.rows).map(|i| self.get(i, i)).sum()
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                if (self.get(i, j) - self.get(j, i)).abs() > tol {
                    return false;
                }
            }
        }
        true
    }

    /// Solve the square system `self * x = b` by LU with partial pivoting.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(self.rows, self.cols);
        assert_eq!(b.len(), self.rows);
        let n = self.rows;
        let mut a = self.data.clone();
        let mut x = b.to_vec();
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for col in 0..n {
            let mut piv = col;
            let mut best = a[col * n + col].abs();
            for r in (col + 1)..n {
                let v = a[r * n + col].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best <= 1e-13 * scale.max(1e-300) {
                return Err(Error::Singular {
                    index: col,
                    pivot: a[piv * n + col],
                });
            }
            if piv != col {
                for j in 0..n {
                    a.swap(col * n + j, piv * n + j);
                }
                x.swap(col, piv);
            }
            let d = a[col * n + col];
            for r in (col + 1)..n {
                let f = a[r * n + col] / d;
                if f == 0.0 {
                    continue;
                }
                for j in (col + 1)..n {
                    a[r * n + j] -= f * a[col * n + j];
                }
                x[r] -= f * x[col];
            }
        }
        for col in (0..n).rev() {
            let mut s = x[col];
            for j in (col + 1)..n {
                s -= a[col * n + j] * x[j];
            }
            x[col] = s / a[col * n + col];
        }
        Ok(x)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cholesky factorization of a symmetric positive-definite matrix,
/// `M = L L'` with `L` lower triangular.
#[derive(Clone, Debug)]
pub struct CholFactor {
    lower: Matrix,
}

impl CholFactor {
    /// Factor `m`; fails with the offending pivot index when a pivot drops
    /// below `1e-12 * trace`.
    pub fn factor(m: &Matrix) -> Result<Self> {
        assert_eq!(m.rows(), m.cols());
        let n = m.rows();
        let tol = 1e-12 * m.trace().abs().max(1e-300);
        let mut l = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = m.get(i, j);
                for k in 0..j {
                    s -= l.get(i, k) * l.get(j, k);
                }
                if i == j {
                    if s <= tol {
                        return Err(Error::Singular { index: i, pivot: s });
                    }
                    l.set(i, j, s.sqrt());
                } else {
                    l.set(i, j, s / l.get(j, j));
                }
            }
        }
        Ok(CholFactor { lower: l })
    }

    pub fn lower(&self) -> &Matrix {
        &self.lower
    }

    /// Solve `M x = b` using the stored factor.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lower.rows();
        assert_eq!(b.len(), n);
        let mut x = b.to_vec();
        // forward: L y = b
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.lower.get(i, k) * x[k];
            }
            x[i] = s / self.lower.get(i, i);
        }
        // backward: L' x = y
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.lower.get(k, i) * x[k];
            }
            x[i] = s / self.lower.get(i, i);
        }
        x
    }

    /// Explicit inverse of the factored matrix.
    pub fn inverse(&self) -> Matrix {
        let n = self.lower.rows();
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = self.solve(&e);
            e[j] = 0.0;
            for i in 0..n {
                inv.set(i, j, col[i]);
            }
        }
        // symmetrize against roundoff
        for i in 0..n {
            for j in 0..i {
                let v = 0.5 * (inv.get(i, j) + inv.get(j, i));
                inv.set(i, j, v);
                inv.set(j, i, v);
            }
        }
        inv
    }
}

/// Inverse square root in the Cholesky convention: the upper-triangular `C`
/// with `C'C = M⁻¹`, i.e. the transpose of the lower Cholesky factor of
/// `M⁻¹`.
pub fn inv_sqrt(m: &Matrix) -> Result<Matrix> {
    if m.rows() != m.cols() {
        return Err(Error::DimensionMismatch(format!(
            "inv_sqrt needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    if !m.is_symmetric(1e-10 * (1.0 + m.trace().abs())) {
        return Err(Error::InvalidArgument(
            "inv_sqrt needs a symmetric matrix".into(),
        ));
    }
    let chol = CholFactor::factor(m)?;
    let minv = chol.inverse();
    let f = CholFactor::factor(&minv)?;
    Ok(f.lower().transpose())
}

/// Square root in the same convention: upper-triangular `U` with `U'U = M`,
/// i.e. the transpose of the lower Cholesky factor of `M`.
pub fn sqrt_factor(m: &Matrix) -> Result<Matrix> {
    let chol = CholFactor::factor(m)?;
    Ok(chol.lower().transpose())
}
