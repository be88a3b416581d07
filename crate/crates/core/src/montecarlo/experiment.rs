//! Deterministic experiment harness: size/power tables over replicated
//! draws of a design, and break-detection statistics for the sequential
//! procedure.

use super::{gamma_path, true_breaks, DgpKind, DgpSpec, Scenario};
use crate::error::Result;
use crate::limitsim::{CvCache, FixedTauParts, NullFamily, NullSampler};
use crate::numcore::{quantile_index, Matrix};
use crate::nuisance::NuisanceSet;
use crate::regimes::{detect_regimes, RegimeLabel, RegimeOptions, Variant};
use crate::rng::stream;
use crate::stats::{Method, QuantileGrid, TestRunner};
use rayon::prelude::*;
use std::sync::Arc;

/// One test column of a size/power table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TestSpec {
    SupLmAsy,
    ExpLmAsy,
    SupLmBoot,
    ExpLmBoot,
    LmFixedAsy(f64),
    LmFixedAdj(f64),
    SupWald,
    WaldFixed(f64),
}

impl TestSpec {
    pub fn label(&self) -> String {
        match self {
            TestSpec::SupLmAsy => "supLM_asy".into(),
            TestSpec::ExpLmAsy => "expLM_asy".into(),
            TestSpec::SupLmBoot => "supLM_boot".into(),
            TestSpec::ExpLmBoot => "expLM_boot".into(),
            TestSpec::LmFixedAsy(t) => format!("LM_asy_{t}"),
            TestSpec::LmFixedAdj(t) => format!("LM_adj_{t}"),
            TestSpec::SupWald => "supW_asy".into(),
            TestSpec::WaldFixed(t) => format!("Wald_asy_{t}"),
        }
    }
}

/// A replicated run of one design.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub dgp: DgpSpec,
    pub grid: QuantileGrid,
    pub level: f64,
    pub reps: usize,
    pub base_seed: u64,
    pub bootstrap_b: usize,
    /// Resamples for the sup-Wald covariance.
    pub wald_b: usize,
    pub sim_reps: usize,
    pub lambda_steps: usize,
}

impl Experiment {
    pub fn new(dgp: DgpSpec, reps: usize, base_seed: u64) -> Self {
        Experiment {
            dgp,
            grid: QuantileGrid::default_range(),
            level: 0.05,
            reps,
            base_seed,
            bootstrap_b: 299,
            wald_b: 199,
            sim_reps: 9999,
            lambda_steps: 1000,
        }
    }

    fn dims(&self) -> (usize, usize) {
        let p = self.dgp.p();
        let m = match self.dgp.kind {
            DgpKind::LocationScale => 3,
            DgpKind::Qadl => 8,
        };
        (p, m - p)
    }

    fn runner(&self, rep: usize, method: Method, cache: &Arc<CvCache>) -> TestRunner {
        let mut r = TestRunner::new(method, self.base_seed)
            .with_cache(cache.clone())
            .with_bootstrap_b(self.bootstrap_b)
            .with_sim_reps(self.sim_reps);
        r.lambda_steps = self.lambda_steps;
        r.with_stoch_seed(
            self.base_seed
                .wrapping_add((rep as u64).wrapping_mul(0x9E3779B97F4A7C15)),
        )
    }

    fn prewarm(&self, tests: &[TestSpec], cache: &Arc<CvCache>) -> Result<Option<Arc<FixedTauParts>>> {
        let (p, k) = self.dims();
        let needs_continuum = tests.iter().any(|t| {
            matches!(t, TestSpec::SupLmAsy | TestSpec::ExpLmAsy)
        });
        if needs_continuum {
            for family in [NullFamily::SupLm, NullFamily::ExpLm] {
                let sampler = NullSampler::new(family, p, k, self.grid.clone(), self.sim_reps, self.base_seed)?
                    .with_lambda_steps(self.lambda_steps)?;
                cache.get_or_simulate(&sampler)?;
            }
        }
        if tests.iter().any(|t| matches!(t, TestSpec::SupWald)) {
            let sampler = NullSampler::new(NullFamily::SupWald, p, k, self.grid.clone(), self.sim_reps, self.base_seed)?;
            cache.get_or_simulate(&sampler)?;
        }
        for t in tests {
            if let TestSpec::WaldFixed(tau) = t {
                let sampler = NullSampler::new(
                    NullFamily::SupWald,
                    p,
                    k,
                    QuantileGrid::single(*tau)?,
                    self.sim_reps,
                    self.base_seed,
                )?;
                cache.get_or_simulate(&sampler)?;
            }
        }
        let needs_fixed = tests
            .iter()
            .any(|t| matches!(t, TestSpec::LmFixedAsy(_) | TestSpec::LmFixedAdj(_)));
        Ok(if needs_fixed {
            Some(Arc::new(FixedTauParts::simulate(
                p,
                k,
                self.lambda_steps,
                self.sim_reps,
                self.base_seed,
            )))
        } else {
            None
        })
    }

    /// Rejection frequencies of the requested tests at `level`.
    pub fn rejection_rates(
        &self,
        tests: &[TestSpec],
        cache: &Arc<CvCache>,
    ) -> Result<ExperimentResult> {
        let (p, _k) = self.dims();
        let parts = self.prewarm(tests, cache)?;
        let pivotal_fixed_cv: Option<f64> = parts.as_ref().map(|pp| {
            let s = pp.samples_with_q(None);
            s[quantile_index(s.len(), 1.0 - self.level)]
        });

        let per_rep: Vec<Result<Vec<bool>>> = (0..self.reps)
            .into_par_iter()
            .map(|rep| -> Result<Vec<bool>> {
                let mut rng = stream(self.base_seed, rep as u64);
                let (y, x) = self.dgp.generate(&mut rng);
                let mut decisions = Vec::with_capacity(tests.len());

                // share passes: asymptotic continuum tests from one runner,
                // bootstrap continuum tests from one bootstrap run
                let mut asy_pair: Option<(bool, bool)> = None;
                let mut boot_pair: Option<(bool, bool)> = None;

                for t in tests {
                    let d = match t {
                        TestSpec::SupLmAsy | TestSpec::ExpLmAsy => {
                            if asy_pair.is_none() {
                                let runner = self.runner(rep, Method::Asymptotic, cache);
                                let (s, e) =
                                    runner.sup_exp_lm(&y, &x, p, &self.grid, self.level)?;
                                asy_pair = Some((s.reject(), e.reject()));
                            }
                            let (s, e) = asy_pair.unwrap();
                            if matches!(t, TestSpec::SupLmAsy) {
                                s
                            } else {
                                e
                            }
                        }
                        TestSpec::SupLmBoot | TestSpec::ExpLmBoot => {
                            if boot_pair.is_none() {
                                let runner = self.runner(rep, Method::Bootstrap, cache);
                                let (s, e) =
                                    runner.sup_exp_lm(&y, &x, p, &self.grid, self.level)?;
                                boot_pair = Some((s.reject(), e.reject()));
                            }
                            let (s, e) = boot_pair.unwrap();
                            if matches!(t, TestSpec::SupLmBoot) {
                                s
                            } else {
                                e
                            }
                        }
                        TestSpec::LmFixedAsy(tau) => {
                            let value = fixed_statistic(&y, &x, p, *tau)?;
                            value >= pivotal_fixed_cv.expect("fixed parts prewarmed")
                        }
                        TestSpec::LmFixedAdj(tau) => {
                            let value = fixed_statistic(&y, &x, p, *tau)?;
                            let set = NuisanceSet::estimate(&y, &x, p, &[*tau])?;
                            let samples = parts
                                .as_ref()
                                .expect("fixed parts prewarmed")
                                .samples_with_q(Some(&set.q_hat[0]));
                            value >= samples[quantile_index(samples.len(), 1.0 - self.level)]
                        }
                        TestSpec::SupWald => {
                            let runner = self.runner(rep, Method::Asymptotic, cache);
                            runner
                                .sup_wald(&y, &x, p, &self.grid, self.wald_b, self.level)?
                                .reject()
                        }
                        TestSpec::WaldFixed(tau) => {
                            let runner = self.runner(rep, Method::Asymptotic, cache);
                            let g = QuantileGrid::single(*tau)?;
                            runner
                                .sup_wald(&y, &x, p, &g, self.wald_b, self.level)?
                                .reject()
                        }
                    };
                    decisions.push(d);
                }
                Ok(decisions)
            })
            .collect();

        let mut counts = vec![0usize; tests.len()];
        let mut failures = 0usize;
        let mut completed = 0usize;
        for r in per_rep {
            match r {
                Ok(decisions) => {
                    completed += 1;
                    for (c, d) in counts.iter_mut().zip(decisions) {
                        if d {
                            *c += 1;
                        }
                    }
                }
                Err(_) => failures += 1,
            }
        }
        Ok(ExperimentResult {
            rates: tests
                .iter()
                .zip(&counts)
                .map(|(t, &c)| (t.label(), c as f64 / completed.max(1) as f64))
                .collect(),
            reps: completed,
            failures,
            base_seed: self.base_seed,
        })
    }
}

/// The fixed-quantile statistic `h(tau) (sup LM1 + LM2)`.
fn fixed_statistic(y: &[f64], x: &Matrix, p: usize, tau: f64) -> Result<f64> {
    let prep = crate::stats::prepare(x, p)?;
    let ts = crate::stats::tau_stat_prepared(y, x, &prep, tau)?;
    Ok(crate::stats::h_weight(tau) * ts.combined())
}

/// Rejection rates of one experiment.
#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub rates: Vec<(String, f64)>,
    pub reps: usize,
    pub failures: usize,
    pub base_seed: u64,
}

impl ExperimentResult {
    pub fn rate(&self, label: &str) -> Option<f64> {
        self.rates
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, r)| *r)
    }
}

/// Summary statistics of an estimated break date, conditional on a break
/// having been announced.
#[derive(Clone, Copy, Debug, Default)]
pub struct BreakStats {
    pub mean: f64,
    pub median: f64,
    pub var: f64,
    pub count: usize,
}

fn break_stats(mut values: Vec<f64>) -> BreakStats {
    if values.is_empty() {
        return BreakStats::default();
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    BreakStats {
        mean,
        median: values[n / 2],
        var,
        count: n,
    }
}

/// Break-detection breakdown over replications.
#[derive(Clone, Debug, Default)]
pub struct Detection {
    /// Rates relative to all replications.
    pub lm_reject: f64,
    pub cusum_reject: f64,
    /// Detected-break breakdown: exactly right, too few, too many,
    /// inconclusive.
    pub eq: f64,
    pub lt: f64,
    pub gt: f64,
    pub inconclusive: f64,
    /// Rejection rate of the segment tests by final segment position,
    /// conditional on reaching them.
    pub segment_gc_rates: Vec<f64>,
}

/// A replicated run of the sequential regime procedure on a scenario.
#[derive(Clone, Debug)]
pub struct RegimeExperiment {
    pub scenario: Scenario,
    pub gamma: f64,
    pub n: usize,
    pub reps: usize,
    pub base_seed: u64,
    pub variant: Variant,
    pub method: Method,
    pub alpha: f64,
    pub grid: QuantileGrid,
    pub sim_reps: usize,
    pub lambda_steps: usize,
    pub bootstrap_b: usize,
}

impl RegimeExperiment {
    pub fn new(scenario: Scenario, gamma: f64, n: usize, reps: usize, base_seed: u64) -> Self {
        RegimeExperiment {
            scenario,
            gamma,
            n,
            reps,
            base_seed,
            variant: Variant::Exp,
            method: Method::Asymptotic,
            alpha: 0.05,
            grid: QuantileGrid::default_range(),
            sim_reps: 9999,
            lambda_steps: 1000,
            bootstrap_b: 299,
        }
    }

    pub fn run(&self, cache: &Arc<CvCache>) -> Result<(Detection, BreakStats, BreakStats)> {
        // warm the tables needed by the procedure so parallel replications
        // hit the cache
        let (p, k) = (1usize, 2usize);
        let families: &[NullFamily] = match self.variant {
            Variant::Exp => &[
                NullFamily::SupLm,
                NullFamily::ExpLm,
                NullFamily::ExpCusum,
                NullFamily::MaxTwoExpCusum,
            ],
            Variant::Sup => &[
                NullFamily::SupLm,
                NullFamily::ExpLm,
                NullFamily::SupCusum,
                NullFamily::MaxTwoSupCusum,
            ],
        };
        for family in families {
            let sampler = NullSampler::new(*family, p, k, self.grid.clone(), self.sim_reps, self.base_seed)?
                .with_lambda_steps(self.lambda_steps)?;
            cache.get_or_simulate(&sampler)?;
        }

        let truth = true_breaks(self.scenario);
        let opts = RegimeOptions {
            alpha: self.alpha,
            method: self.method,
            variant: self.variant,
            refine: false,
        };

        struct RepOutcome {
            lm: bool,
            cusum: bool,
            category: u8, // 0 eq, 1 lt, 2 gt, 3 inconclusive
            b1: Option<f64>,
            b2: Option<f64>,
            segments: Vec<Option<bool>>,
        }

        let outcomes: Vec<Result<RepOutcome>> = (0..self.reps)
            .into_par_iter()
            .map(|rep| -> Result<RepOutcome> {
                let gamma = gamma_path(self.scenario, self.gamma, self.n);
                let spec = DgpSpec::location_scale(self.n, 0.0, false, gamma, 0)?;
                let mut rng = stream(self.base_seed, rep as u64);
                let (y, x) = spec.generate(&mut rng);
                let mut runner = TestRunner::new(self.method, self.base_seed)
                    .with_cache(cache.clone())
                    .with_bootstrap_b(self.bootstrap_b)
                    .with_sim_reps(self.sim_reps)
                    .with_stoch_seed(
                        self.base_seed
                            .wrapping_add((rep as u64).wrapping_mul(0x9E3779B97F4A7C15)),
                    );
                runner.lambda_steps = self.lambda_steps;
                let report = detect_regimes(&y, &x, 1, &self.grid, &opts, &runner)?;

                let lm = report
                    .trace
                    .iter()
                    .find(|t| t.step == "step1-lm")
                    .map(|t| t.reject)
                    .unwrap_or(false);
                let cusum = report
                    .trace
                    .iter()
                    .find(|t| t.step == "step2-cusum")
                    .map(|t| t.reject)
                    .unwrap_or(false);
                let announced = report.breakpoints.len();
                let inconclusive = report.has_label(RegimeLabel::Inconclusive);
                let category = if inconclusive {
                    3
                } else if announced == truth {
                    0
                } else if announced < truth {
                    1
                } else {
                    2
                };
                let segments = report
                    .segments
                    .iter()
                    .map(|s| match s.label {
                        RegimeLabel::Gc => Some(true),
                        RegimeLabel::NoGc => Some(false),
                        RegimeLabel::Inconclusive => None,
                    })
                    .collect();
                Ok(RepOutcome {
                    lm,
                    cusum,
                    category,
                    b1: report.breakpoints.first().copied(),
                    b2: report.breakpoints.get(1).copied(),
                    segments,
                })
            })
            .collect();

        let mut det = Detection::default();
        let mut seg_reject = vec![0usize; 3];
        let mut seg_tested = vec![0usize; 3];
        let mut b1 = Vec::new();
        let mut b2 = Vec::new();
        let mut completed = 0usize;
        let mut cat = [0usize; 4];
        for o in outcomes {
            let o = o?;
            completed += 1;
            if o.lm {
                det.lm_reject += 1.0;
            }
            if o.cusum {
                det.cusum_reject += 1.0;
            }
            cat[o.category as usize] += 1;
            if let Some(v) = o.b1 {
                b1.push(v);
            }
            if let Some(v) = o.b2 {
                b2.push(v);
            }
            if o.cusum {
                for (j, s) in o.segments.iter().take(3).enumerate() {
                    if let Some(r) = s {
                        seg_tested[j] += 1;
                        if *r {
                            seg_reject[j] += 1;
                        }
                    }
                }
            }
        }
        let denom = completed.max(1) as f64;
        det.lm_reject /= denom;
        det.cusum_reject /= denom;
        det.eq = cat[0] as f64 / denom;
        det.lt = cat[1] as f64 / denom;
        det.gt = cat[2] as f64 / denom;
        det.inconclusive = cat[3] as f64 / denom;
        det.segment_gc_rates = seg_reject
            .iter()
            .zip(&seg_tested)
            .map(|(&r, &t)| if t == 0 { f64::NAN } else { r as f64 / t as f64 })
            .collect();
        Ok((det, break_stats(b1), break_stats(b2)))
    }
}
