//! Estimation of the nuisance objects that drive the limiting laws when the
//! pivotality condition fails: the design second moment J, the density-
//! weighted moment H(tau), the cross block Q(tau), and the de-correlating
//! transform T(tau).

use crate::error::{Error, Result};
use crate::norm;
use crate::numcore::{
    dot, fit_restricted, inv_sqrt, sqrt_factor, validate_tau, CholFactor, Matrix,
};

/// `X'X / n`, with positive definiteness verified.
pub fn estimate_j(x: &Matrix) -> Result<Matrix> {
    let j = x.gram(x.rows() as f64);
    CholFactor::factor(&j)?;
    Ok(j)
}

/// Powell's kernel estimator of the density-weighted design moment:
/// `(2 n c_n)^{-1} sum 1{|u_i(tau)| <= c_n} x_i x_i'`.
pub fn powell_h(y: &[f64], x: &Matrix, beta_tilde: &[f64], tau: f64, c_n: f64) -> Result<Matrix> {
    validate_tau(tau)?;
    if c_n <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "bandwidth must be positive, got {c_n}"
        )));
    }
    if y.len() != x.rows() || beta_tilde.len() != x.cols() {
        return Err(Error::DimensionMismatch("powell_h inputs".into()));
    }
    let n = x.rows();
    let m = x.cols();
    let mut h = Matrix::zeros(m, m);
    for i in 0..n {
        let row = x.row(i);
        let u = y[i] - dot(row, beta_tilde);
        if u.abs() <= c_n {
            for r in 0..m {
                for c in r..m {
                    let v = h.get(r, c) + row[r] * row[c];
                    h.set(r, c, v);
                }
            }
        }
    }
    let scale = 1.0 / (2.0 * n as f64 * c_n);
    for r in 0..m {
        for c in r..m {
            let v = h.get(r, c) * scale;
            h.set(r, c, v);
            h.set(c, r, v);
        }
    }
    Ok(h)
}

/// Hall–Sheather rate for the Powell bandwidth, before scaling by the
/// residual spread.
pub fn hall_sheather(n: usize, tau: f64) -> f64 {
    let z975 = norm::quantile(0.975);
    let z_tau = norm::quantile(tau);
    let phi = norm::pdf(z_tau);
    (n as f64).powf(-1.0 / 3.0)
        * z975.powf(2.0 / 3.0)
        * (1.5 * phi * phi / (2.0 * z_tau * z_tau + 1.0)).powf(1.0 / 3.0)
}

/// Bandwidth `c_n`: the Hall–Sheather rate scaled by the interquartile
/// range of the residuals divided by 1.349.
pub fn bandwidth(n: usize, tau: f64, residuals: &[f64]) -> f64 {
    let mut sorted = residuals.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = sorted.len();
    let iqr = sorted[crate::numcore::quantile_index(k, 0.75)]
        - sorted[crate::numcore::quantile_index(k, 0.25)];
    let scale = (iqr / 1.349).max(f64::MIN_POSITIVE);
    hall_sheather(n, tau) * scale
}

/// The p-by-k nuisance block `Q(tau) = R' C(tau) Rbar H_a^{-1}(tau)
/// J_a^{1/2}` with `C(tau) = J^{-1/2} H(tau)`; zero exactly when the limit
/// is pivotal (homoskedasticity, conditional mean independence).
pub fn q_matrix(j_hat: &Matrix, h_hat: &Matrix, p: usize) -> Result<Matrix> {
    let m = j_hat.rows();
    if h_hat.rows() != m || h_hat.cols() != m || j_hat.cols() != m || p >= m {
        return Err(Error::DimensionMismatch("q_matrix inputs".into()));
    }
    let k = m - p;
    let c = inv_sqrt(j_hat)?.matmul(h_hat);
    let c_top_right = c.sub_block(0, p, p, k);
    let h_alpha = h_hat.sub_block(p, p, k, k);
    let h_alpha_inv = CholFactor::factor(&h_alpha)?.inverse();
    let j_alpha_sqrt = sqrt_factor(&j_hat.sub_block(p, p, k, k))?;
    Ok(c_top_right.matmul(&h_alpha_inv).matmul(&j_alpha_sqrt))
}

/// The oblique projection `P(tau)` written as an orthogonal projection
/// perturbed by a nilpotent block.
pub fn projection(q: &Matrix) -> Matrix {
    let p = q.rows();
    let k = q.cols();
    let m = p + k;
    let mut proj = Matrix::zeros(m, m);
    for i in 0..k {
        proj.set(p + i, p + i, 1.0);
    }
    for i in 0..p {
        for j in 0..k {
            proj.set(i, p + j, q.get(i, j));
        }
    }
    proj
}

/// The transform `T = [[I, -Q], [0, I]]` diagonalizing `I - P(tau)` in
/// closed form.
pub fn t_matrix(q: &Matrix) -> Matrix {
    let p = q.rows();
    let k = q.cols();
    let mut t = Matrix::identity(p + k);
    for i in 0..p {
        for j in 0..k {
            t.set(i, p + j, -q.get(i, j));
        }
    }
    t
}

/// Pivotal rescaling of the terminal statistic for a single tested
/// coefficient: divide by `sqrt(1 + Q Q')`. Only defined for p = 1.
pub fn rescale_lm2(lm2: f64, q: &Matrix) -> Result<f64> {
    if q.rows() != 1 {
        return Err(Error::UnsupportedRescaling(q.rows()));
    }
    let qq: f64 = q.data().iter().map(|v| v * v).sum();
    Ok(lm2 / (1.0 + qq).sqrt())
}

/// All nuisance estimates on a grid of quantile levels.
#[derive(Clone, Debug)]
pub struct NuisanceSet {
    pub j_hat: Matrix,
    pub taus: Vec<f64>,
    pub h_hat: Vec<Matrix>,
    pub q_hat: Vec<Matrix>,
    pub t_hat: Vec<Matrix>,
    pub bandwidths: Vec<f64>,
}

impl NuisanceSet {
    /// Estimate J, H(tau), Q(tau), T(tau) from restricted fits at each
    /// level in `taus`. The first `p` design columns form the tested block.
    pub fn estimate(y: &[f64], x: &Matrix, p: usize, taus: &[f64]) -> Result<NuisanceSet> {
        let n = x.rows();
        let j_hat = estimate_j(x)?;
        let w = x.columns(p, x.cols() - p);
        let mut h_all = Vec::with_capacity(taus.len());
        let mut q_all = Vec::with_capacity(taus.len());
        let mut t_all = Vec::with_capacity(taus.len());
        let mut bw_all = Vec::with_capacity(taus.len());
        for &tau in taus {
            let fit = fit_restricted(y, &w, tau)?;
            let c_n = bandwidth(n, tau, &fit.residuals);
            let h = powell_h(y, x, &fit.padded_beta(p), tau, c_n)?;
            let q = q_matrix(&j_hat, &h, p)?;
            t_all.push(t_matrix(&q));
            h_all.push(h);
            q_all.push(q);
            bw_all.push(c_n);
        }
        Ok(NuisanceSet {
            j_hat,
            taus: taus.to_vec(),
            h_hat: h_all,
            q_hat: q_all,
            t_hat: t_all,
            bandwidths: bw_all,
        })
    }
}
