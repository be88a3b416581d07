//! Sequential subgradient processes: raw partial sums of quantile scores,
//! their standardized version, the bridged (CUSUM) version, and subsample
//! variants on a window of the sample.

use crate::error::{Error, Result};
use crate::numcore::{dot, inv_sqrt, psi_unchecked, validate_tau, Matrix};

/// A time window given as sample fractions `[a, b]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubsampleWindow {
    pub a: f64,
    pub b: f64,
}

impl SubsampleWindow {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&a) || !(a < b && b <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "window fractions must satisfy 0 <= a < b <= 1, got ({a}, {b})"
            )));
        }
        Ok(SubsampleWindow { a, b })
    }

    pub fn full() -> Self {
        SubsampleWindow { a: 0.0, b: 1.0 }
    }

    /// floor(a*n), robust to fractions stored as i/n.
    pub fn start_index(&self, n: usize) -> usize {
        floor_index(self.a, n)
    }

    /// floor(b*n).
    pub fn end_index(&self, n: usize) -> usize {
        floor_index(self.b, n)
    }

    pub fn len(&self, n: usize) -> usize {
        self.end_index(n).saturating_sub(self.start_index(n))
    }
}

pub(crate) fn floor_index(fraction: f64, n: usize) -> usize {
    (((fraction * n as f64) + 1e-9).floor() as usize).min(n)
}

/// A subgradient-type process evaluated on the natural lambda grid
/// `{i/n}`. Row `j` corresponds to the global index `start + j`; row 0 is
/// the zero vector (empty sum).
#[derive(Clone, Debug)]
pub struct ProcessPath {
    n: usize,
    tau: f64,
    m: usize,
    start: usize,
    values: Vec<f64>,
    standardizer: Matrix,
}

impl ProcessPath {
    /// Number of grid rows (window length + 1).
    pub fn len(&self) -> usize {
        self.values.len() / self.m
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn sample_size(&self) -> usize {
        self.n
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn start(&self) -> usize {
        self.start
    }

    #[inline]
    pub fn value(&self, j: usize) -> &[f64] {
        &self.values[j * self.m..(j + 1) * self.m]
    }

    pub fn last(&self) -> &[f64] {
        self.value(self.len() - 1)
    }

    /// The time fraction of row `j`.
    pub fn lambda(&self, j: usize) -> f64 {
        (self.start + j) as f64 / self.n as f64
    }

    pub fn standardizer(&self) -> &Matrix {
        &self.standardizer
    }

    /// Apply an m-by-m matrix rowwise; the recorded standardizer composes.
    pub fn standardized(&self, c: &Matrix) -> ProcessPath {
        assert_eq!(c.rows(), self.m);
        assert_eq!(c.cols(), self.m);
        let rows = self.len();
        let mut values = vec![0.0; rows * self.m];
        for j in 0..rows {
            let src = self.value(j);
            let dst = &mut values[j * self.m..(j + 1) * self.m];
            for r in 0..self.m {
                dst[r] = dot(c.row(r), src);
            }
        }
        ProcessPath {
            n: self.n,
            tau: self.tau,
            m: self.m,
            start: self.start,
            values,
            standardizer: c.matmul(&self.standardizer),
        }
    }

    /// Bridge the path: row j becomes `v_j - rel_j * v_last`, where `rel_j`
    /// is the position of row j within the window. Rows 0 and last are then
    /// exactly zero.
    pub fn bridged(&self) -> ProcessPath {
        let rows = self.len();
        let last = self.value(rows - 1).to_vec();
        let denom = (rows - 1) as f64;
        let mut values = vec![0.0; rows * self.m];
        for j in 0..rows {
            let rel = j as f64 / denom;
            let src = self.value(j);
            let dst = &mut values[j * self.m..(j + 1) * self.m];
            for r in 0..self.m {
                dst[r] = src[r] - rel * last[r];
            }
        }
        ProcessPath {
            n: self.n,
            tau: self.tau,
            m: self.m,
            start: self.start,
            values,
            standardizer: self.standardizer.clone(),
        }
    }
}

fn check_dims(y: &[f64], x: &Matrix, beta: &[f64]) -> Result<()> {
    if y.len() != x.rows() || beta.len() != x.cols() {
        return Err(Error::DimensionMismatch(format!(
            "y: {}, X: {}x{}, beta: {}",
            y.len(),
            x.rows(),
            x.cols(),
            beta.len()
        )));
    }
    Ok(())
}

/// Partial sums of `x_i * psi_tau(y_i - x_i'beta) / sqrt(n)`.
pub fn subgradient_path(y: &[f64], x: &Matrix, tau: f64, beta: &[f64]) -> Result<ProcessPath> {
    validate_tau(tau)?;
    check_dims(y, x, beta)?;
    let n = x.rows();
    let m = x.cols();
    let scale = 1.0 / (n as f64).sqrt();
    let mut values = vec![0.0; (n + 1) * m];
    let mut acc = vec![0.0; m];
    for i in 0..n {
        let row = x.row(i);
        let p = psi_unchecked(y[i] - dot(row, beta), tau) * scale;
        for r in 0..m {
            acc[r] += row[r] * p;
        }
        values[(i + 1) * m..(i + 2) * m].copy_from_slice(&acc);
    }
    Ok(ProcessPath {
        n,
        tau,
        m,
        start: 0,
        values,
        standardizer: Matrix::identity(m),
    })
}

/// The subgradient path standardized by `inv_sqrt(X'X/n)`.
pub fn standardized_path(y: &[f64], x: &Matrix, tau: f64, beta: &[f64]) -> Result<ProcessPath> {
    let c = inv_sqrt(&x.gram(x.rows() as f64))?;
    Ok(subgradient_path(y, x, tau, beta)?.standardized(&c))
}

/// Bridged version of a (standardized) path.
pub fn bridged_path(h: &ProcessPath) -> ProcessPath {
    h.bridged()
}

/// Scaled subgradient on a window: the partial sums over rows
/// `floor(a n)+1 ..= floor(lambda n)` standardized by the inverse square
/// root of the window Gram matrix, so that the window plays the role of the
/// full sample. At `(a, b) = (0, 1)` this reproduces the full-sample
/// standardized path exactly.
pub fn subsample_path(
    y: &[f64],
    x: &Matrix,
    tau: f64,
    beta: &[f64],
    window: &SubsampleWindow,
) -> Result<ProcessPath> {
    validate_tau(tau)?;
    check_dims(y, x, beta)?;
    let n = x.rows();
    let m = x.cols();
    let ia = window.start_index(n);
    let ib = window.end_index(n);
    if ib.saturating_sub(ia) <= m {
        return Err(Error::WindowTooSmall {
            observations: ib.saturating_sub(ia),
            columns: m,
        });
    }

    let mut gram = Matrix::zeros(m, m);
    for i in ia..ib {
        let row = x.row(i);
        for r in 0..m {
            for c in r..m {
                let v = gram.get(r, c) + row[r] * row[c];
                gram.set(r, c, v);
            }
        }
    }
    for r in 0..m {
        for c in 0..r {
            let v = gram.get(c, r);
            gram.set(r, c, v);
        }
    }
    let std = inv_sqrt(&gram)?;

    let rows = ib - ia + 1;
    let mut values = vec![0.0; rows * m];
    let mut acc = vec![0.0; m];
    for (j, i) in (ia..ib).enumerate() {
        let row = x.row(i);
        let p = psi_unchecked(y[i] - dot(row, beta), tau);
        for r in 0..m {
            acc[r] += row[r] * p;
        }
        values[(j + 1) * m..(j + 2) * m].copy_from_slice(&acc);
    }
    let raw = ProcessPath {
        n,
        tau,
        m,
        start: ia,
        values,
        standardizer: Matrix::identity(m),
    };
    Ok(raw.standardized(&std))
}
