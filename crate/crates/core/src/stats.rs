//! Test statistics for Granger causality in quantiles under instability:
//! the per-quantile LM statistic, its sup/exp aggregations over a quantile
//! grid, subsample variants, and the sup-Wald benchmark.

use crate::bootstrap::{bootstrap_statistics, BootstrapConfig};
use crate::error::{Error, Result};
use crate::limitsim::{CvCache, NullFamily, NullSampler};
use crate::numcore::{
    dot, fit_restricted, fit_unrestricted, inv_sqrt, psi_unchecked, validate_tau, CholFactor,
    Matrix,
};
use crate::nuisance::NuisanceSet;
use crate::process::SubsampleWindow;
use rayon::prelude::*;

/// Statistic families reported in a [`TestResult`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    LmFixed,
    SupLm,
    ExpLm,
    SupWald,
    ExpCusum,
    SupCusum,
    ExpLmSub,
    ExpCusumSub,
}

impl Family {
    pub fn as_str(&self) -> &'static str {
        match self {
            Family::LmFixed => "LM_fixed",
            Family::SupLm => "supLM",
            Family::ExpLm => "expLM",
            Family::SupWald => "supWald",
            Family::ExpCusum => "expCUSUM",
            Family::SupCusum => "supCUSUM",
            Family::ExpLmSub => "expLM_sub",
            Family::ExpCusumSub => "expCUSUM_sub",
        }
    }
}

/// How critical values are obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    /// Simulated limit under the pivotality assumption.
    Asymptotic,
    /// Simulated limit adjusted with the estimated nuisance block.
    Adjusted,
    /// Semiparametric bootstrap with the null enforced.
    Bootstrap,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Asymptotic => "asymptotic",
            Method::Adjusted => "adjusted",
            Method::Bootstrap => "bootstrap",
        }
    }
}

/// Outcome of one test: the statistic, its critical value at `level`, and
/// the Monte Carlo p-value. Ties at the boundary resolve to rejection.
#[derive(Clone, Debug)]
pub struct TestResult {
    pub family: Family,
    pub value: f64,
    pub critical_value: f64,
    pub p_value: f64,
    pub level: f64,
    pub method: Method,
    pub window: Option<SubsampleWindow>,
}

impl TestResult {
    pub fn reject(&self) -> bool {
        self.value >= self.critical_value
    }
}

/// An evenly spaced grid of quantile levels inside (0, 1).
#[derive(Clone, Debug, PartialEq)]
pub struct QuantileGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
    points: Vec<f64>,
}

impl QuantileGrid {
    pub fn new(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(lo > 0.0 && hi < 1.0 && lo <= hi && step > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "invalid quantile grid ({lo}, {hi}, {step})"
            )));
        }
        let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        let points = (0..count).map(|i| lo + i as f64 * step).collect();
        Ok(QuantileGrid {
            lo,
            hi,
            step,
            points,
        })
    }

    /// The default testing range used throughout: [0.05, 0.95] with step 0.01.
    pub fn default_range() -> Self {
        QuantileGrid::new(0.05, 0.95, 0.01).unwrap()
    }

    /// A single quantile level; the exp aggregation then reduces to
    /// `exp(statistic / 2)`.
    pub fn single(tau: f64) -> Result<Self> {
        validate_tau(tau)?;
        Ok(QuantileGrid {
            lo: tau,
            hi: tau,
            step: 1.0,
            points: vec![tau],
        })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// `h(tau) = 1 / sqrt(tau (1 - tau))`.
pub fn h_weight(tau: f64) -> f64 {
    1.0 / (tau * (1.0 - tau)).sqrt()
}

/// Left-endpoint Riemann rule shared by observed statistics, bootstrap
/// statistics, and simulated nulls: `step * sum exp(stat / 2)`.
pub(crate) fn exp_aggregate(per_tau: &[f64], step: f64) -> f64 {
    step * per_tau.iter().map(|s| (0.5 * s).exp()).sum::<f64>()
}

pub(crate) fn sup_aggregate(per_tau: &[f64]) -> f64 {
    per_tau.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
}

/// Index of the maximum, ties broken toward the smallest index.
pub(crate) fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0usize;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Reusable per-design quantities: the control block, the standardizer, and
/// dimension bookkeeping.
pub(crate) struct PreparedDesign {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub w: Matrix,
    /// inv_sqrt(X'X / n)
    pub c: Matrix,
}

pub(crate) fn prepare(x: &Matrix, p: usize) -> Result<PreparedDesign> {
    let m = x.cols();
    if p == 0 || p >= m {
        return Err(Error::InvalidArgument(format!(
            "tested block must satisfy 0 < p < m, got p = {p}, m = {m}"
        )));
    }
    let c = inv_sqrt(&x.gram(x.rows() as f64))?;
    Ok(PreparedDesign {
        n: x.rows(),
        m,
        p,
        w: x.columns(p, m - p),
        c,
    })
}

/// Per-quantile components: the CUSUM part (supremum over time of the
/// bridged standardized subgradient) and the terminal LM part.
#[derive(Clone, Copy, Debug)]
pub struct TauStat {
    pub sup_lm1: f64,
    pub lm2: f64,
}

impl TauStat {
    pub fn combined(&self) -> f64 {
        self.sup_lm1 + self.lm2
    }
}

/// Raw subgradient partial sums, kept unstandardized; the standardizer is
/// applied on the fly when forming norms. Scores come from the fit's own
/// residual vector, whose interpolated entries are exact zeros.
fn raw_sums(x: &Matrix, tau: f64, residuals: &[f64]) -> Vec<f64> {
    let n = x.rows();
    let m = x.cols();
    let scale = 1.0 / (n as f64).sqrt();
    let mut sums = vec![0.0; (n + 1) * m];
    let mut acc = vec![0.0; m];
    for i in 0..n {
        let row = x.row(i);
        let ps = psi_unchecked(residuals[i], tau) * scale;
        for r in 0..m {
            acc[r] += row[r] * ps;
        }
        sums[(i + 1) * m..(i + 2) * m].copy_from_slice(&acc);
    }
    sums
}

fn first_p_norm(c: &Matrix, v: &[f64], p: usize) -> f64 {
    let mut best = 0.0f64;
    for r in 0..p {
        best = best.max(dot(c.row(r), v).abs());
    }
    best
}

pub(crate) fn tau_stat_prepared(
    y: &[f64],
    x: &Matrix,
    prep: &PreparedDesign,
    tau: f64,
) -> Result<TauStat> {
    let fit = fit_restricted(y, &prep.w, tau)?;
    let sums = raw_sums(x, tau, &fit.residuals);
    let (n, m, p) = (prep.n, prep.m, prep.p);
    let last = &sums[n * m..(n + 1) * m];
    let lm2 = first_p_norm(&prep.c, last, p);
    let mut sup = 0.0f64;
    let mut v = vec![0.0; m];
    for i in 0..=n {
        let rel = i as f64 / n as f64;
        let row = &sums[i * m..(i + 1) * m];
        for r in 0..m {
            v[r] = row[r] - rel * last[r];
        }
        sup = sup.max(first_p_norm(&prep.c, &v, p));
    }
    Ok(TauStat { sup_lm1: sup, lm2 })
}

/// The CUSUM detector path: entry `i` is the sup-norm of the tested block
/// of the bridged standardized subgradient at lambda = i/n, evaluated at
/// the restricted fit.
pub fn lm1_path(y: &[f64], x: &Matrix, p: usize, tau: f64) -> Result<Vec<f64>> {
    let prep = prepare(x, p)?;
    let fit = fit_restricted(y, &prep.w, tau)?;
    let sums = raw_sums(x, tau, &fit.residuals);
    let (n, m) = (prep.n, prep.m);
    let last = &sums[n * m..(n + 1) * m].to_vec();
    let mut out = Vec::with_capacity(n + 1);
    let mut v = vec![0.0; m];
    for i in 0..=n {
        let rel = i as f64 / n as f64;
        let row = &sums[i * m..(i + 1) * m];
        for r in 0..m {
            v[r] = row[r] - rel * last[r];
        }
        out.push(first_p_norm(&prep.c, &v, p));
    }
    Ok(out)
}

/// The terminal LM detector: sup-norm of the tested block of the
/// standardized subgradient at lambda = 1, evaluated at the restricted fit.
pub fn lm2(y: &[f64], x: &Matrix, p: usize, tau: f64) -> Result<f64> {
    let prep = prepare(x, p)?;
    Ok(tau_stat_prepared(y, x, &prep, tau)?.lm2)
}

/// Per-quantile components over a grid, evaluated in parallel and merged in
/// grid order.
pub(crate) fn grid_stats(
    y: &[f64],
    x: &Matrix,
    prep: &PreparedDesign,
    grid: &QuantileGrid,
) -> Result<Vec<TauStat>> {
    grid.points()
        .par_iter()
        .map(|&tau| tau_stat_prepared(y, x, prep, tau))
        .collect()
}

/// Sequential variant used inside already-parallel loops.
pub(crate) fn grid_stats_seq(
    y: &[f64],
    x: &Matrix,
    prep: &PreparedDesign,
    grid: &QuantileGrid,
) -> Result<Vec<TauStat>> {
    grid.points()
        .iter()
        .map(|&tau| tau_stat_prepared(y, x, prep, tau))
        .collect()
}

/// Observed sup/exp statistics over the grid, sharing one pass of fits.
pub fn observed_sup_exp(
    y: &[f64],
    x: &Matrix,
    p: usize,
    grid: &QuantileGrid,
) -> Result<(f64, f64)> {
    let prep = prepare(x, p)?;
    let stats = grid_stats(y, x, &prep, grid)?;
    let combined: Vec<f64> = stats.iter().map(TauStat::combined).collect();
    Ok((sup_aggregate(&combined), exp_aggregate(&combined, grid.step)))
}

/// Standardizer for a window: inv_sqrt of the unnormalized window Gram.
pub(crate) fn window_standardizer(
    x: &Matrix,
    window: &SubsampleWindow,
    min_cols: usize,
) -> Result<Matrix> {
    let n = x.rows();
    let _m = x.cols();
    let ia = window.start_index(n);
    let ib = window.end_index(n);
    if ib.saturating_sub(ia) <= min_cols {
        return Err(Error::WindowTooSmall {
            observations: ib.saturating_sub(ia),
            columns: min_cols,
        });
    }
    let block = x.row_block(ia, ib);
    inv_sqrt(&block.gram(1.0))
}

/// The exp-weighted CUSUM objective on a window: for every lambda in the
/// window grid, `step * sum_tau exp(LM1(lambda, tau) / 2)`. Returns the
/// per-lambda objective values (index 0 is lambda = a).
pub(crate) fn cusum_objective(
    y: &[f64],
    x: &Matrix,
    p: usize,
    grid: &QuantileGrid,
    window: &SubsampleWindow,
    sup_variant: bool,
) -> Result<Vec<f64>> {
    let n = x.rows();
    let m = x.cols();
    let ia = window.start_index(n);
    let ib = window.end_index(n);
    let gram_std = window_standardizer(x, window, m)?;
    let len = ib - ia;
    let w_block = x.sub_block(ia, p, len, m - p);

    let per_tau: Vec<Vec<f64>> = grid
        .points()
        .par_iter()
        .map(|&tau| -> Result<Vec<f64>> {
            let fit = fit_restricted(&y[ia..ib], &w_block, tau)?;
            let mut sums = vec![0.0; (len + 1) * m];
            let mut acc = vec![0.0; m];
            for (j, i) in (ia..ib).enumerate() {
                let row = x.row(i);
                let ps = psi_unchecked(fit.residuals[j], tau);
                for r in 0..m {
                    acc[r] += row[r] * ps;
                }
                sums[(j + 1) * m..(j + 2) * m].copy_from_slice(&acc);
            }
            let last = sums[len * m..(len + 1) * m].to_vec();
            let mut vals = Vec::with_capacity(len + 1);
            let mut v = vec![0.0; m];
            for j in 0..=len {
                let rel = j as f64 / len as f64;
                let row = &sums[j * m..(j + 1) * m];
                for r in 0..m {
                    v[r] = row[r] - rel * last[r];
                }
                vals.push(first_p_norm(&gram_std, &v, p));
            }
            Ok(vals)
        })
        .collect::<Result<_>>()?;

    let mut objective = vec![0.0f64; len + 1];
    if sup_variant {
        for vals in &per_tau {
            for (j, &v) in vals.iter().enumerate() {
                objective[j] = objective[j].max(v);
            }
        }
    } else {
        for vals in &per_tau {
            for (j, &v) in vals.iter().enumerate() {
                objective[j] += (0.5 * v).exp();
            }
        }
        for o in &mut objective {
            *o *= grid.step;
        }
    }
    Ok(objective)
}

mod runner;
pub use runner::{CusumOutcome, TestRunner};
