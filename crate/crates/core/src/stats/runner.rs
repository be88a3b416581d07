//! Ties the raw statistics to critical values: simulated limits, nuisance
//! adjustment, or the bootstrap.

use super::*;
use crate::bootstrap::Resampling;
use crate::limitsim::{CriticalValueTable, QCurve, TableKey};
use crate::rng::{stream, uniform};
use std::sync::Arc;

/// Shared configuration for running tests: where critical values come from
/// and how stochastic steps are seeded. Levels are passed per call.
///
/// `sim_seed` keys the simulated null tables (kept fixed so tables are
/// shared across replications); `stoch_seed` drives the bootstrap and
/// resampling steps and is typically varied per replication.
pub struct TestRunner {
    pub method: Method,
    /// Replications for simulated null tables.
    pub sim_reps: usize,
    pub lambda_steps: usize,
    /// Bootstrap replications for `Method::Bootstrap`.
    pub bootstrap_b: usize,
    pub resampling: Resampling,
    pub sim_seed: u64,
    pub stoch_seed: u64,
    pub cache: Arc<CvCache>,
}

impl TestRunner {
    pub fn new(method: Method, seed: u64) -> Self {
        TestRunner {
            method,
            sim_reps: 9999,
            lambda_steps: 1000,
            bootstrap_b: 499,
            resampling: Resampling::Index,
            sim_seed: seed,
            stoch_seed: seed,
            cache: Arc::new(CvCache::in_memory()),
        }
    }

    pub fn with_cache(mut self, cache: Arc<CvCache>) -> Self {
        self.cache = cache;
        self
    }

    pub fn with_bootstrap_b(mut self, b: usize) -> Self {
        self.bootstrap_b = b;
        self
    }

    pub fn with_sim_reps(mut self, reps: usize) -> Self {
        self.sim_reps = reps;
        self
    }

    pub fn with_stoch_seed(mut self, seed: u64) -> Self {
        self.stoch_seed = seed;
        self
    }

    fn sampler(
        &self,
        family: NullFamily,
        p: usize,
        k: usize,
        grid: &QuantileGrid,
        q: Option<QCurve>,
    ) -> Result<NullSampler> {
        let mut s = NullSampler::new(family, p, k, grid.clone(), self.sim_reps, self.sim_seed)?
            .with_lambda_steps(self.lambda_steps)?;
        if let Some(q) = q {
            s = s.with_q_curve(q)?;
        }
        Ok(s)
    }

    fn table(
        &self,
        family: NullFamily,
        p: usize,
        k: usize,
        grid: &QuantileGrid,
        q: Option<QCurve>,
    ) -> Result<Arc<CriticalValueTable>> {
        self.cache.get_or_simulate(&self.sampler(family, p, k, grid, q)?)
    }

    fn result_from_table(
        &self,
        family: Family,
        value: f64,
        table: &CriticalValueTable,
        level: f64,
        method: Method,
        window: Option<SubsampleWindow>,
    ) -> Result<TestResult> {
        Ok(TestResult {
            family,
            value,
            critical_value: table.critical_value(level)?,
            p_value: table.p_value(value),
            level,
            method,
            window,
        })
    }

    /// Ad-hoc table around a bootstrap statistic vector, so that critical
    /// values and p-values follow the same conventions as simulated nulls.
    fn bootstrap_table(&self, family: Family, grid: &QuantileGrid, samples: Vec<f64>) -> CriticalValueTable {
        let key = TableKey {
            family: format!("boot-{}", family.as_str()),
            p: 0,
            k: 0,
            lo: grid.lo,
            hi: grid.hi,
            step: grid.step,
            lambda_steps: 0,
            reps: samples.len(),
            seed: self.stoch_seed,
            q_digest: 0,
        };
        CriticalValueTable::new(key, samples)
    }

    /// Estimated nuisance curve over the grid, reshaped for the simulator.
    fn q_curve(&self, y: &[f64], x: &Matrix, p: usize, grid: &QuantileGrid) -> Result<QCurve> {
        let set = NuisanceSet::estimate(y, x, p, grid.points())?;
        Ok(QCurve {
            taus: set.taus.clone(),
            qs: set.q_hat,
        })
    }

    /// Fixed-quantile LM test: `h(tau) (sup_lambda LM1 + LM2)` against the
    /// simulated bridge-plus-terminal null, optionally adjusted with the
    /// estimated nuisance block, or against the bootstrap.
    pub fn lm_fixed(
        &self,
        y: &[f64],
        x: &Matrix,
        p: usize,
        tau: f64,
        level: f64,
    ) -> Result<TestResult> {
        let prep = prepare(x, p)?;
        let k = prep.m - p;
        let ts = tau_stat_prepared(y, x, &prep, tau)?;
        let value = h_weight(tau) * ts.combined();
        let grid = QuantileGrid::single(tau)?;
        match self.method {
            Method::Asymptotic => {
                let table = self.table(NullFamily::LmFixed, p, k, &grid, None)?;
                self.result_from_table(Family::LmFixed, value, &table, level, self.method, None)
            }
            Method::Adjusted => {
                let set = NuisanceSet::estimate(y, x, p, &[tau])?;
                let q = QCurve::constant(tau, set.q_hat[0].clone());
                let table = self.table(NullFamily::LmFixed, p, k, &grid, Some(q))?;
                self.result_from_table(Family::LmFixed, value, &table, level, self.method, None)
            }
            Method::Bootstrap => {
                let config = BootstrapConfig {
                    b: self.bootstrap_b,
                    seed: self.stoch_seed,
                    grid: grid.clone(),
                    resampling: self.resampling,
                };
                let run = bootstrap_statistics(y, x, p, &config)?;
                let samples: Vec<f64> = run
                    .replicated
                    .iter()
                    .map(|stats| h_weight(tau) * stats[0].combined())
                    .collect();
                let table = self.bootstrap_table(Family::LmFixed, &grid, samples);
                self.result_from_table(Family::LmFixed, value, &table, level, self.method, None)
            }
        }
    }

    /// Both continuum statistics from one pass of restricted fits. The two
    /// results share the null draws (asymptotic) or bootstrap replications.
    pub fn sup_exp_lm(
        &self,
        y: &[f64],
        x: &Matrix,
        p: usize,
        grid: &QuantileGrid,
        level: f64,
    ) -> Result<(TestResult, TestResult)> {
        let prep = prepare(x, p)?;
        let k = prep.m - p;
        let stats = grid_stats(y, x, &prep, grid)?;
        let combined: Vec<f64> = stats.iter().map(TauStat::combined).collect();
        let sup_value = sup_aggregate(&combined);
        let exp_value = exp_aggregate(&combined, grid.step);

        match self.method {
            Method::Asymptotic | Method::Adjusted => {
                let q = if self.method == Method::Adjusted {
                    Some(self.q_curve(y, x, p, grid)?)
                } else {
                    None
                };
                let sup_table = self.table(NullFamily::SupLm, p, k, grid, q.clone())?;
                let exp_table = self.table(NullFamily::ExpLm, p, k, grid, q)?;
                Ok((
                    self.result_from_table(Family::SupLm, sup_value, &sup_table, level, self.method, None)?,
                    self.result_from_table(Family::ExpLm, exp_value, &exp_table, level, self.method, None)?,
                ))
            }
            Method::Bootstrap => {
                let config = BootstrapConfig {
                    b: self.bootstrap_b,
                    seed: self.stoch_seed,
                    grid: grid.clone(),
                    resampling: self.resampling,
                };
                let run = bootstrap_statistics(y, x, p, &config)?;
                let mut sup_samples = Vec::with_capacity(run.replicated.len());
                let mut exp_samples = Vec::with_capacity(run.replicated.len());
                for rep in &run.replicated {
                    let c: Vec<f64> = rep.iter().map(TauStat::combined).collect();
                    sup_samples.push(sup_aggregate(&c));
                    exp_samples.push(exp_aggregate(&c, grid.step));
                }
                let sup_table = self.bootstrap_table(Family::SupLm, grid, sup_samples);
                let exp_table = self.bootstrap_table(Family::ExpLm, grid, exp_samples);
                Ok((
                    self.result_from_table(Family::SupLm, sup_value, &sup_table, level, self.method, None)?,
                    self.result_from_table(Family::ExpLm, exp_value, &exp_table, level, self.method, None)?,
                ))
            }
        }
    }

    pub fn sup_lm(&self, y: &[f64], x: &Matrix, p: usize, grid: &QuantileGrid, level: f64) -> Result<TestResult> {
        Ok(self.sup_exp_lm(y, x, p, grid, level)?.0)
    }

    pub fn exp_lm(&self, y: &[f64], x: &Matrix, p: usize, grid: &QuantileGrid, level: f64) -> Result<TestResult> {
        Ok(self.sup_exp_lm(y, x, p, grid, level)?.1)
    }

    /// Subsample LM test on a window; identical to the full-sample test run
    /// on the window rows.
    pub fn sup_exp_lm_sub(
        &self,
        y: &[f64],
        x: &Matrix,
        p: usize,
        grid: &QuantileGrid,
        window: &SubsampleWindow,
        level: f64,
    ) -> Result<(TestResult, TestResult)> {
        let n = x.rows();
        let ia = window.start_index(n);
        let ib = window.end_index(n);
        if ib.saturating_sub(ia) <= x.cols() + 1 {
            return Err(Error::WindowTooSmall {
                observations: ib.saturating_sub(ia),
                columns: x.cols(),
            });
        }
        let xw = x.row_block(ia, ib);
        let yw = &y[ia..ib];
        let (mut sup, mut exp) = self.sup_exp_lm(yw, &xw, p, grid, level)?;
        sup.family = Family::SupLm;
        sup.window = Some(*window);
        exp.family = Family::ExpLmSub;
        exp.window = Some(*window);
        Ok((sup, exp))
    }

    pub fn exp_lm_sub(
        &self,
        y: &[f64],
        x: &Matrix,
        p: usize,
        grid: &QuantileGrid,
        window: &SubsampleWindow,
        level: f64,
    ) -> Result<TestResult> {
        Ok(self.sup_exp_lm_sub(y, x, p, grid, window, level)?.1)
    }

    /// CUSUM test on a window with the break-date argmax recorded.
    /// `sup_variant` switches between the sup and exp weightings over the
    /// quantile grid.
    pub fn cusum(
        &self,
        y: &[f64],
        x: &Matrix,
        p: usize,
        grid: &QuantileGrid,
        window: &SubsampleWindow,
        sup_variant: bool,
        level: f64,
    ) -> Result<CusumOutcome> {
        let objective = cusum_objective(y, x, p, grid, window, sup_variant)?;
        let n = x.rows();
        let ia = window.start_index(n);
        let best_j = argmax_first(&objective);
        let best_v = objective[best_j];
        let break_fraction = (ia + best_j) as f64 / n as f64;
        let family = if sup_variant {
            NullFamily::SupCusum
        } else {
            NullFamily::ExpCusum
        };
        let table = self.table(family, p, x.cols() - p, grid, None)?;
        let result = self.result_from_table(
            if sup_variant { Family::SupCusum } else { Family::ExpCusum },
            best_v,
            &table,
            level,
            Method::Asymptotic,
            Some(*window),
        )?;
        Ok(CusumOutcome {
            result,
            break_fraction,
        })
    }

    /// The maximum of two window CUSUM statistics against the null of the
    /// maximum of two independent pillows.
    pub fn max_two_cusum(
        &self,
        y: &[f64],
        x: &Matrix,
        p: usize,
        grid: &QuantileGrid,
        left: &SubsampleWindow,
        right: &SubsampleWindow,
        sup_variant: bool,
        level: f64,
    ) -> Result<(TestResult, CusumOutcome, CusumOutcome)> {
        // per-window outcomes reuse the single-pillow table for tracing;
        // the decision compares the max against the two-pillow null
        let a = self.cusum(y, x, p, grid, left, sup_variant, level)?;
        let b = self.cusum(y, x, p, grid, right, sup_variant, level)?;
        let value = a.result.value.max(b.result.value);
        let family = if sup_variant {
            NullFamily::MaxTwoSupCusum
        } else {
            NullFamily::MaxTwoExpCusum
        };
        let table = self.table(family, p, x.cols() - p, grid, None)?;
        let result = self.result_from_table(
            Family::ExpCusumSub,
            value,
            &table,
            level,
            Method::Asymptotic,
            None,
        )?;
        Ok((result, a, b))
    }

    /// Estimated break date: the argmax over the window grid of the
    /// CUSUM objective; ties break toward the smallest fraction.
    pub fn estimate_breakpoint(
        &self,
        y: &[f64],
        x: &Matrix,
        p: usize,
        grid: &QuantileGrid,
        window: &SubsampleWindow,
    ) -> Result<f64> {
        Ok(self
            .cusum(y, x, p, grid, window, false, 0.05)?
            .break_fraction)
    }

    /// sup-Wald benchmark with pairs-bootstrap covariance.
    pub fn sup_wald(
        &self,
        y: &[f64],
        x: &Matrix,
        p: usize,
        grid: &QuantileGrid,
        b: usize,
        level: f64,
    ) -> Result<TestResult> {
        if b < 99 {
            return Err(Error::InvalidArgument(format!(
                "need at least 99 bootstrap resamples for the covariance, got {b}"
            )));
        }
        let n = x.rows();
        let taus = grid.points();
        let gammas: Vec<Vec<f64>> = taus
            .par_iter()
            .map(|&tau| fit_unrestricted(y, x, tau).map(|f| f.beta[..p].to_vec()))
            .collect::<Result<_>>()?;

        // pairs bootstrap: resample whole rows, refit every quantile
        let draws: Vec<Vec<Vec<f64>>> = (0..b)
            .into_par_iter()
            .map(|rep| -> Result<Vec<Vec<f64>>> {
                let mut rng = stream(self.stoch_seed ^ 0x5057414c44, rep as u64);
                let mut yb = Vec::with_capacity(n);
                let mut xb = Matrix::zeros(n, x.cols());
                for i in 0..n {
                    let src = (uniform(&mut rng) * n as f64) as usize % n;
                    yb.push(y[src]);
                    for j in 0..x.cols() {
                        xb.set(i, j, x.get(src, j));
                    }
                }
                taus.iter()
                    .map(|&tau| Ok(fit_unrestricted(&yb, &xb, tau)?.beta[..p].to_vec()))
                    .collect()
            })
            .collect::<Result<_>>()?;

        let mut value = f64::NEG_INFINITY;
        for (t, &tau) in taus.iter().enumerate() {
            // covariance of the bootstrap draws of the tested block
            let mut mean = vec![0.0; p];
            for d in &draws {
                for r in 0..p {
                    mean[r] += d[t][r];
                }
            }
            for v in &mut mean {
                *v /= b as f64;
            }
            let mut omega = Matrix::zeros(p, p);
            for d in &draws {
                for r in 0..p {
                    for c in r..p {
                        let v = omega.get(r, c) + (d[t][r] - mean[r]) * (d[t][c] - mean[c]);
                        omega.set(r, c, v);
                    }
                }
            }
            for r in 0..p {
                for c in 0..r {
                    let v = omega.get(c, r);
                    omega.set(r, c, v);
                }
            }
            for v in 0..p {
                for u in 0..p {
                    let val = omega.get(v, u) / (b as f64 - 1.0);
                    omega.set(v, u, val);
                }
            }
            // omega estimates the full Var(gamma_hat), which already
            // carries the n^{-1} and tau(1-tau) factors of the displayed
            // n h^2 gamma' Omega^{-1} gamma form; the plain quadratic is
            // the statistic matching the sup h^2 ||BB||^2 null
            let gamma = &gammas[t];
            let solved = CholFactor::factor(&omega)
                .map_err(|_| Error::Singular { index: t, pivot: 0.0 })?
                .solve(gamma);
            let stat: f64 = gamma.iter().zip(&solved).map(|(a, b)| a * b).sum();
            let _ = tau;
            value = value.max(stat);
        }

        let table = self.table(NullFamily::SupWald, p, x.cols() - p, grid, None)?;
        self.result_from_table(Family::SupWald, value, &table, level, Method::Asymptotic, None)
    }
}

/// A CUSUM test outcome together with the estimated break fraction.
pub struct CusumOutcome {
    pub result: TestResult,
    pub break_fraction: f64,
}
