//! Linear algebra primitives and the check-loss quantile regression solver
//! that every statistic in this crate is built on.

mod matrix;
pub mod solver;

pub use matrix::{dot, inv_sqrt, sqrt_factor, CholFactor, Matrix};

use crate::error::{Error, Result};

/// Check loss `rho_tau(u)`: the asymmetric absolute loss whose minimizer is
/// the conditional tau-quantile. Nonnegative, zero iff `u == 0`.
pub fn check_loss(u: f64, tau: f64) -> Result<f64> {
    validate_tau(tau)?;
    Ok(if u <= 0.0 { u * (tau - 1.0) } else { u * tau })
}

/// Quantile score `psi_tau(u) = 1{u <= 0} - tau`. The boundary `u == 0`
/// counts as nonpositive.
pub fn psi(u: f64, tau: f64) -> Result<f64> {
    validate_tau(tau)?;
    Ok(psi_unchecked(u, tau))
}

#[inline]
pub(crate) fn psi_unchecked(u: f64, tau: f64) -> f64 {
    if u <= 0.0 {
        1.0 - tau
    } else {
        -tau
    }
}

pub(crate) fn validate_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::TauOutOfRange(tau));
    }
    Ok(())
}

/// Result of a check-loss minimization at one quantile level.
#[derive(Clone, Debug)]
pub struct QuantileFit {
    pub tau: f64,
    /// Coefficients for the design the fit was run on (length m, or k for
    /// restricted fits).
    pub beta: Vec<f64>,
    /// Sum of check losses at `beta`.
    pub objective: f64,
    /// `y - X beta`, length n.
    pub residuals: Vec<f64>,
}

impl QuantileFit {
    /// Zero-pad a restricted coefficient vector to the full length, placing
    /// the fitted block after `p` leading zeros.
    pub fn padded_beta(&self, p: usize) -> Vec<f64> {
        let mut full = vec![0.0; p + self.beta.len()];
        full[p..].copy_from_slice(&self.beta);
        full
    }
}

/// Minimize the check loss over all coefficients.
///
/// The minimizer can be set-valued at breakpoints; callers should rely on
/// the objective, not the argmin. Constant-only designs report the lower
/// endpoint of the solution interval.
pub fn fit_unrestricted(y: &[f64], x: &Matrix, tau: f64) -> Result<QuantileFit> {
    validate_tau(tau)?;
    let n = x.rows();
    let m = x.cols();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "y has {} entries for a {}x{} design",
            y.len(),
            n,
            m
        )));
    }
    if n <= m {
        return Err(Error::InvalidArgument(format!(
            "need more observations than coefficients (n = {n}, m = {m})"
        )));
    }

    if let Some(c) = constant_column(x) {
        return Ok(fit_constant(y, c, tau));
    }

    let chol_xtx = CholFactor::factor(&x.gram(1.0))?;

    // a loose first solve is usually enough for the vertex polish to land;
    // retry at the tight gap when the polish is rejected
    let sol = solver::solve_with_tol(x, y, tau, &chol_xtx, LOOSE_GAP)?;
    let (beta, objective, residuals, polished) = polish(x, y, tau, sol.beta);
    let (beta, objective, residuals) = if polished {
        (beta, objective, residuals)
    } else {
        let sol = solver::solve(x, y, tau, &chol_xtx)?;
        let (b, o, r, _) = polish(x, y, tau, sol.beta);
        (b, o, r)
    };
    Ok(QuantileFit {
        tau,
        beta,
        objective,
        residuals,
    })
}

const LOOSE_GAP: f64 = 3e-6;

/// Fit every level of an ascending quantile grid on the same data.
pub fn fit_grid(y: &[f64], x: &Matrix, taus: &[f64]) -> Result<Vec<QuantileFit>> {
    taus.iter().map(|&tau| fit_unrestricted(y, x, tau)).collect()
}

/// Minimize the check loss over the control block only. The result carries
/// the k-vector `alpha`; use [`QuantileFit::padded_beta`] for the zero-padded
/// full coefficient vector.
pub fn fit_restricted(y: &[f64], w: &Matrix, tau: f64) -> Result<QuantileFit> {
    fit_unrestricted(y, w, tau)
}

fn objective_at(y: &[f64], x: &Matrix, beta: &[f64], tau: f64) -> (f64, Vec<f64>) {
    let mut obj = 0.0;
    let mut resid = Vec::with_capacity(y.len());
    for i in 0..y.len() {
        let u = y[i] - dot(x.row(i), beta);
        obj += if u <= 0.0 { u * (tau - 1.0) } else { u * tau };
        resid.push(u);
    }
    (obj, resid)
}

/// Snap the interior point solution to the vertex interpolating the m
/// smallest residuals, when that does not worsen the objective. Exact
/// optima of the check loss sit at such vertices.
fn polish(x: &Matrix, y: &[f64], tau: f64, beta_ip: Vec<f64>) -> (Vec<f64>, f64, Vec<f64>, bool) {

    let m = x.cols();
    let (obj_ip, resid_ip) = objective_at(y, x, &beta_ip, tau);

    // m smallest |residuals| in one pass; m is tiny
    let mut basis: Vec<usize> = Vec::with_capacity(m);
    let mut vals: Vec<f64> = Vec::with_capacity(m);
    for (i, &u) in resid_ip.iter().enumerate() {
        let v = u.abs();
        if vals.len() < m {
            let pos = vals.partition_point(|&q| q < v);
            vals.insert(pos, v);
            basis.insert(pos, i);
        } else if v < vals[m - 1] {
            let pos = vals.partition_point(|&q| q < v);
            vals.insert(pos, v);
            basis.insert(pos, i);
            vals.pop();
            basis.pop();
        }
    }
    let basis = &basis[..m];
    let mut sub = Matrix::zeros(m, m);
    let mut rhs = vec![0.0; m];
    for (r, &i) in basis.iter().enumerate() {
        for j in 0..m {
            sub.set(r, j, x.get(i, j));
        }
        rhs[r] = y[i];
    }
    if let Ok(beta_v) = sub.solve(&rhs) {
        let (_, mut resid_v) = objective_at(y, x, &beta_v, tau);
        // basis rows are interpolated exactly; zero them so the boundary
        // convention of psi is applied deterministically
        for &i in basis {
            resid_v[i] = 0.0;
        }
        let obj_v: f64 = resid_v
            .iter()
            .map(|&u| if u <= 0.0 { u * (tau - 1.0) } else { u * tau })
            .sum();
        if obj_v <= obj_ip * (1.0 + 1e-12) + 1e-12 && obj_v.is_finite() {
            return (beta_v, obj_v, resid_v, true);
        }
    }
    (beta_ip, obj_ip, resid_ip, false)
}

/// Exact fit for a single constant regressor: the breakpoint structure of
/// the loss makes the lower endpoint of the minimizing interval an order
/// statistic.
fn fit_constant(y: &[f64], c: f64, tau: f64) -> QuantileFit {
    let n = y.len();
    let mut sorted = y.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = sorted[quantile_index(n, tau)];
    let beta = vec![q / c];
    let mut obj = 0.0;
    let mut resid = Vec::with_capacity(n);
    for &yi in y {
        let u = yi - q;
        obj += if u <= 0.0 { u * (tau - 1.0) } else { u * tau };
        resid.push(u);
    }
    QuantileFit {
        tau,
        beta,
        objective: obj,
        residuals: resid,
    }
}

/// Zero-based index of the lower-endpoint tau-quantile order statistic,
/// i.e. ceil(n*tau) in one-based terms, with a guard against floating-point
/// representation of n*tau landing just off an integer.
pub fn quantile_index(n: usize, tau: f64) -> usize {
    let t = n as f64 * tau;
    let j = if (t - t.round()).abs() < 1e-9 {
        t.round()
    } else {
        t.ceil()
    };
    (j as usize).clamp(1, n) - 1
}

fn constant_column(x: &Matrix) -> Option<f64> {
    if x.cols() != 1 {
        return None;
    }
    let c = x.get(0, 0);
    if c != 0.0 && (0..x.rows()).all(|i| x.get(i, 0) == c) {
        Some(c)
    } else {
        None
    }
}

#[cfg(test)]
mod tests;
