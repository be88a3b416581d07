//! Frisch–Newton interior point solver for check-loss quantile regression.
//!
//! Solves the bounded-variables dual LP
//!     max y'a   s.t.   X'a = (1-tau) X'1,   0 <= a <= 1,
//! with a Mehrotra predictor-corrector primal-dual iteration. The regression
//! coefficients are the multipliers of the equality constraints.
//!
//! This is the hot path of every Monte Carlo run, so the loop body is
//! monomorphized over the (small) column count: with `M > 0` the row dot
//! products unroll completely and the passes vectorize. `M = 0` selects the
//! runtime-width fallback.

use super::matrix::{dot, CholFactor, Matrix};
use crate::error::{Error, Result};

const STEP_FACTOR: f64 = 0.99995;
const GAP_TOL: f64 = 1e-9;
pub const MAX_ITER: usize = 100;

pub struct DualSolution {
    pub beta: Vec<f64>,
}

/// Run the interior point iteration. `chol_xtx` is the factor of X'X and is
/// reused for the starting value (the least-squares fit).
pub fn solve(x: &Matrix, y: &[f64], tau: f64, chol_xtx: &CholFactor) -> Result<DualSolution> {
    solve_with_tol(x, y, tau, chol_xtx, GAP_TOL)
}

/// Same iteration with an explicit duality-gap tolerance (relative to the
/// response scale). Callers that post-polish to a vertex can afford a
/// looser gap and retry tight only when the polish is rejected.
pub fn solve_with_tol(
    x: &Matrix,
    y: &[f64],
    tau: f64,
    chol_xtx: &CholFactor,
    gap_tol: f64,
) -> Result<DualSolution> {
    match x.cols() {
        1 => solve_impl::<1>(x, y, tau, chol_xtx, gap_tol),
        2 => solve_impl::<2>(x, y, tau, chol_xtx, gap_tol),
        3 => solve_impl::<3>(x, y, tau, chol_xtx, gap_tol),
        4 => solve_impl::<4>(x, y, tau, chol_xtx, gap_tol),
        5 => solve_impl::<5>(x, y, tau, chol_xtx, gap_tol),
        6 => solve_impl::<6>(x, y, tau, chol_xtx, gap_tol),
        7 => solve_impl::<7>(x, y, tau, chol_xtx, gap_tol),
        8 => solve_impl::<8>(x, y, tau, chol_xtx, gap_tol),
        _ => solve_impl::<0>(x, y, tau, chol_xtx, gap_tol),
    }
}

#[inline(always)]
fn rdot<const M: usize>(row: &[f64], b: &[f64]) -> f64 {
    if M > 0 {
        let mut acc = 0.0;
        for j in 0..M {
            acc += row[j] * b[j];
        }
        acc
    } else {
        dot(row, b)
    }
}

/// Cholesky factorization of a flat m-by-m matrix, in place (lower factor).
fn chol_inplace(g: &mut [f64], m: usize) -> std::result::Result<(), ()> {
    for i in 0..m {
        for j in 0..=i {
            let mut s = g[i * m + j];
            for k in 0..j {
                s -= g[i * m + k] * g[j * m + k];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(());
                }
                g[i * m + i] = s.sqrt();
            } else {
                g[i * m + j] = s / g[j * m + j];
            }
        }
    }
    Ok(())
}

/// Solve using the in-place lower factor.
fn chol_solve_into(l: &[f64], m: usize, b: &mut [f64]) {
    for i in 0..m {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * m + k] * b[k];
        }
        b[i] = s / l[i * m + i];
    }
    for i in (0..m).rev() {
        let mut s = b[i];
        for k in (i + 1)..m {
            s -= l[k * m + i] * b[k];
        }
        b[i] = s / l[i * m + i];
    }
}

fn solve_impl<const M: usize>(
    x: &Matrix,
    y: &[f64],
    tau: f64,
    chol_xtx: &CholFactor,
    gap_tol: f64,
) -> Result<DualSolution> {
    let n = x.rows();
    let m = if M > 0 { M } else { x.cols() };
    let xd = x.data();

    let mut beta = {
        let mut xty = vec![0.0; m];
        for i in 0..n {
            let row = &xd[i * m..(i + 1) * m];
            let yi = y[i];
            for j in 0..m {
                xty[j] += row[j] * yi;
            }
        }
        chol_xtx.solve(&xty)
    };

    let mut a = vec![1.0 - tau; n];
    let mut s = vec![tau; n];
    let mut z = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut inv_a = vec![0.0; n];
    let mut inv_s = vec![0.0; n];
    let mut theta = vec![0.0; n];
    let mut r = vec![0.0; n];
    let mut da = vec![0.0; n];
    let mut dz = vec![0.0; n];
    let mut dw = vec![0.0; n];
    let mut da_aff = vec![0.0; n];
    let mut dz_aff = vec![0.0; n];
    let mut dw_aff = vec![0.0; n];
    let mut gram = vec![0.0; m * m];
    let mut chol_buf = vec![0.0; m * m];
    let mut rhs = vec![0.0; m];

    {
        let mut abs_sum = 0.0;
        for i in 0..n {
            let r0 = y[i] - rdot::<M>(&xd[i * m..(i + 1) * m], &beta);
            r[i] = r0;
            abs_sum += r0.abs();
        }
        let eps = 1e-4 * (1.0 + abs_sum / n as f64);
        for i in 0..n {
            w[i] = r[i].max(0.0) + eps;
            z[i] = (-r[i]).max(0.0) + eps;
        }
    }

    let obj_scale = 1.0 + y.iter().map(|v| v.abs()).sum::<f64>() / n as f64;
    let tol = gap_tol * (n as f64) * obj_scale;
    let two_n = 2.0 * n as f64;

    let mut gap = dot(&a, &z) + dot(&s, &w);
    for _ in 0..MAX_ITER {
        if gap <= tol {
            return Ok(DualSolution { beta });
        }

        // pass 1: reciprocals, barrier weights, residuals, Gram, rhs
        gram.iter_mut().for_each(|v| *v = 0.0);
        rhs.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            let ia = 1.0 / a[i];
            let is = 1.0 / s[i];
            inv_a[i] = ia;
            inv_s[i] = is;
            theta[i] = 1.0 / (z[i] * ia + w[i] * is);
        }
        for i in 0..n {
            let row = &xd[i * m..(i + 1) * m];
            let ri = y[i] - rdot::<M>(row, &beta);
            r[i] = ri;
            let th = theta[i];
            let tr = th * ri;
            for j in 0..m {
                rhs[j] += tr * row[j];
                let tj = th * row[j];
                for l in j..m {
                    gram[j * m + l] += tj * row[l];
                }
            }
        }
        for j in 0..m {
            for l in 0..j {
                gram[j * m + l] = gram[l * m + j];
            }
        }
        chol_buf.copy_from_slice(&gram);
        if chol_inplace(&mut chol_buf, m).is_err() {
            chol_buf.copy_from_slice(&gram);
            let trace: f64 = (0..m).map(|j| gram[j * m + j]).sum();
            let bump = 1e-11 * trace.abs().max(1e-300);
            for j in 0..m {
                chol_buf[j * m + j] += bump;
            }
            if chol_inplace(&mut chol_buf, m).is_err() {
                return Err(Error::Singular {
                    index: 0,
                    pivot: 0.0,
                });
            }
        }

        // pass 2: predictor direction. All blocking ratios reduce to maxima
        // of division-free candidates:
        //   -a/da = 1/(-da*ia),  s/da = 1/(da*is),
        //   -z/dz_aff = 1/(1 + da*ia),  -w/dw_aff = 1/(1 - da*is).
        // Cross sums turn the affine gap into a closed form, saving a pass.
        let mut dbeta_aff = rhs.clone();
        chol_solve_into(&chol_buf, m, &mut dbeta_aff);
        let mut cand_p = 0.0f64;
        let mut cand_d = 0.0f64;
        let (mut s_az, mut s_za, mut s_dd, mut s_sw, mut s_wa, mut s_dd2) =
            (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for i in 0..n {
            let row = &xd[i * m..(i + 1) * m];
            let d = theta[i] * (r[i] - rdot::<M>(row, &dbeta_aff));
            let u = d * inv_a[i];
            let v = d * inv_s[i];
            let dzi = -z[i] * (1.0 + u);
            let dwi = -w[i] * (1.0 - v);
            da_aff[i] = d;
            dz_aff[i] = dzi;
            dw_aff[i] = dwi;
            cand_p = cand_p.max((-u).max(v));
            cand_d = cand_d.max((1.0 + u).max(1.0 - v));
            s_az += a[i] * dzi;
            s_za += d * z[i];
            s_dd += d * dzi;
            s_sw += s[i] * dwi;
            s_wa += d * w[i];
            s_dd2 += d * dwi;
        }
        let ap_aff = safe_step(cand_p);
        let ad_aff = safe_step(cand_d);
        let gap_aff = gap
            + ad_aff * (s_az + s_sw)
            + ap_aff * (s_za - s_wa)
            + ap_aff * ad_aff * (s_dd - s_dd2);
        let mu = (gap_aff / gap).powi(3) * gap / two_n;

        // pass 3: corrector rhs (the corrected residual replaces r)
        rhs.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            let row = &xd[i * m..(i + 1) * m];
            let corr = da_aff[i] * (dw_aff[i] * inv_s[i] + dz_aff[i] * inv_a[i]);
            let xi = r[i] - mu * (inv_s[i] - inv_a[i]) - corr;
            r[i] = xi;
            let txi = theta[i] * xi;
            for j in 0..m {
                rhs[j] += txi * row[j];
            }
        }
        let mut dbeta = rhs.clone();
        chol_solve_into(&chol_buf, m, &mut dbeta);

        // pass 4: corrector directions and blocking ratios
        let mut cand_p = 0.0f64;
        let mut cand_d = 0.0f64;
        for i in 0..n {
            let row = &xd[i * m..(i + 1) * m];
            let d = theta[i] * (r[i] - rdot::<M>(row, &dbeta));
            let ia = inv_a[i];
            let is = inv_s[i];
            let u = d * ia;
            let v = d * is;
            let dzi = mu * ia - z[i] - z[i] * u - da_aff[i] * dz_aff[i] * ia;
            let dwi = mu * is - w[i] + w[i] * v + da_aff[i] * dw_aff[i] * is;
            da[i] = d;
            dz[i] = dzi;
            dw[i] = dwi;
            cand_p = cand_p.max((-u).max(v));
            cand_d = cand_d.max((-dzi / z[i]).max(-dwi / w[i]));
        }
        let ap = safe_step(cand_p);
        let ad = safe_step(cand_d);

        // pass 5: update and fresh complementarity gap
        let mut new_gap = 0.0;
        for i in 0..n {
            let ai = a[i] + ap * da[i];
            let si = s[i] - ap * da[i];
            let zi = z[i] + ad * dz[i];
            let wi = w[i] + ad * dw[i];
            a[i] = ai;
            s[i] = si;
            z[i] = zi;
            w[i] = wi;
            new_gap += ai * zi + si * wi;
        }
        for j in 0..m {
            beta[j] += ad * dbeta[j];
        }
        gap = new_gap;
    }

    if gap <= tol {
        Ok(DualSolution { beta })
    } else {
        Err(Error::NoConvergence {
            iterations: MAX_ITER,
            gap,
        })
    }
}

/// Step length from the largest blocking ratio: `STEP_FACTOR / cand`,
/// capped at a full step when nothing blocks.
#[inline]
fn safe_step(cand: f64) -> f64 {
    if cand <= 0.0 {
        1.0
    } else {
        (STEP_FACTOR / cand).min(1.0)
    }
}
