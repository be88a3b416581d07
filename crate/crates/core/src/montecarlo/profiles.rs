//! Named experiment profiles reproducing the published size, power, and
//! break-detection tables at two scales: `desk` for a workstation run and
//! `full` for the original replication counts.

use super::{gamma_path, DgpSpec, Experiment, RegimeExperiment, Scenario, TestSpec};
use crate::error::Result;
use crate::limitsim::CvCache;
use crate::regimes::Variant;
use crate::stats::Method;
use std::fmt::Write as _;
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    Desk,
    Full,
}

/// One emitted table: a file stem and tab-separated content.
pub struct TableOutput {
    pub name: String,
    pub content: String,
}

fn fixed_taus() -> [f64; 5] {
    [0.05, 0.25, 0.5, 0.75, 0.95]
}

/// Size study over the three location-scale panels: per-quantile LM tests
/// (asymptotic and nuisance-adjusted), the continuum tests (asymptotic and
/// bootstrap), and the Wald benchmarks.
pub fn profile_table1(scale: Scale, seed: u64, cache: &Arc<CvCache>) -> Result<Vec<TableOutput>> {
    let (ns, reps, b): (&[usize], usize, usize) = match scale {
        Scale::Desk => (&[300, 2000], 500, 299),
        Scale::Full => (&[150, 300, 1000, 2000], 2000, 499),
    };
    let mut out = String::new();
    writeln!(
        out,
        "panel\tn\ttest\tmethod\ttau\trate\treps\tseed"
    )
    .unwrap();
    for (panel, alpha_scale, correlated) in
        [("a", 0.0, false), ("b", 3.0, false), ("c", 3.0, true)]
    {
        for &n in ns {
            let spec = DgpSpec::location_scale(n, alpha_scale, correlated, vec![0.0; n], 0)?;
            let mut exp = Experiment::new(spec, reps, seed);
            exp.bootstrap_b = b;
            let mut tests = vec![
                TestSpec::SupLmAsy,
                TestSpec::ExpLmAsy,
                TestSpec::SupLmBoot,
                TestSpec::ExpLmBoot,
                TestSpec::SupWald,
            ];
            for tau in fixed_taus() {
                tests.push(TestSpec::LmFixedAsy(tau));
                tests.push(TestSpec::LmFixedAdj(tau));
                tests.push(TestSpec::WaldFixed(tau));
            }
            let res = exp.rejection_rates(&tests, cache)?;
            for (label, rate) in &res.rates {
                let (test, method, tau) = split_label(label);
                writeln!(
                    out,
                    "{panel}\t{n}\t{test}\t{method}\t{tau}\t{rate:.4}\t{}\t{seed}",
                    res.reps
                )
                .unwrap();
            }
        }
    }
    Ok(vec![TableOutput {
        name: "table1.tsv".into(),
        content: out,
    }])
}

fn split_label(label: &str) -> (String, String, String) {
    let mut parts = label.splitn(3, '_');
    let test = parts.next().unwrap_or_default().to_string();
    let method = parts.next().unwrap_or_default().to_string();
    let tau = parts.next().unwrap_or("-").to_string();
    (test, method, tau)
}

/// Power curves over the break scenarios: rejection rate against the break
/// size for the bootstrap continuum tests and the sup-Wald benchmark.
/// Emitted as plot data, one block per (scenario, n).
pub fn profile_fig3(scale: Scale, seed: u64, cache: &Arc<CvCache>) -> Result<Vec<TableOutput>> {
    let (reps, b): (usize, usize) = match scale {
        Scale::Desk => (300, 199),
        Scale::Full => (2000, 499),
    };
    let gammas: Vec<f64> = (0..=6).map(|i| i as f64 * 0.05).collect();
    let mut out = String::new();
    writeln!(out, "scenario\tn\tgamma\tsupLM\texpLM\tsupW\treps").unwrap();
    for scenario in [Scenario::A, Scenario::B, Scenario::C] {
        for &n in &[150usize, 300, 500] {
            for &g in &gammas {
                let path = gamma_path(scenario, g, n);
                let spec = DgpSpec::location_scale(n, 0.0, false, path, 0)?;
                let mut exp = Experiment::new(spec, reps, seed);
                exp.bootstrap_b = b;
                exp.wald_b = b.min(199);
                let res = exp.rejection_rates(
                    &[TestSpec::SupLmBoot, TestSpec::ExpLmBoot, TestSpec::SupWald],
                    cache,
                )?;
                writeln!(
                    out,
                    "{:?}\t{n}\t{g:.2}\t{:.4}\t{:.4}\t{:.4}\t{}",
                    scenario,
                    res.rate("supLM_boot").unwrap_or(f64::NAN),
                    res.rate("expLM_boot").unwrap_or(f64::NAN),
                    res.rate("supW_asy").unwrap_or(f64::NAN),
                    res.reps
                )
                .unwrap();
            }
        }
    }
    Ok(vec![TableOutput {
        name: "fig3-power.tsv".into(),
        content: out,
    }])
}

/// Break-detection study over the regime tuples: detection breakdown and
/// break-date statistics for the sequential procedure.
pub fn profile_table3(scale: Scale, seed: u64, cache: &Arc<CvCache>) -> Result<Vec<TableOutput>> {
    let (ns, reps, variants): (&[usize], usize, &[Variant]) = match scale {
        Scale::Desk => (&[1000], 200, &[Variant::Exp]),
        Scale::Full => (&[500, 1000, 2000, 4000], 2000, &[Variant::Sup, Variant::Exp]),
    };
    let gamma = 0.5;
    let tuples = [
        Scenario::Tuple(0.0, 0.0, gamma),
        Scenario::Tuple(gamma, 0.0, 0.0),
        Scenario::Tuple(gamma, 0.0, gamma),
        Scenario::Tuple(0.0, gamma, 0.0),
    ];
    let mut out = String::new();
    writeln!(
        out,
        "design\tn\tvariant\tlm\tcusum\tseg1\tseg2\tseg3\teq\tlt\tgt\tinc\tb1_mean\tb1_median\tb1_var\tb2_mean\tb2_median\tb2_var\treps"
    )
    .unwrap();
    for scenario in tuples {
        for &n in ns {
            for &variant in variants {
                let mut exp = RegimeExperiment::new(scenario, gamma, n, reps, seed);
                exp.variant = variant;
                exp.method = Method::Asymptotic;
                let (det, b1, b2) = exp.run(cache)?;
                let segs: Vec<String> = (0..3)
                    .map(|j| {
                        det.segment_gc_rates
                            .get(j)
                            .map_or("-".into(), |r| format!("{r:.4}"))
                    })
                    .collect();
                writeln!(
                    out,
                    "{scenario:?}\t{n}\t{variant:?}\t{:.4}\t{:.4}\t{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.6}\t{:.4}\t{:.4}\t{:.6}\t{reps}",
                    det.lm_reject,
                    det.cusum_reject,
                    segs[0],
                    segs[1],
                    segs[2],
                    det.eq,
                    det.lt,
                    det.gt,
                    det.inconclusive,
                    b1.mean,
                    b1.median,
                    b1.var,
                    b2.mean,
                    b2.median,
                    b2.var,
                )
                .unwrap();
            }
        }
    }
    Ok(vec![TableOutput {
        name: "table3-regimes.tsv".into(),
        content: out,
    }])
}

/// Size and local power in the quantile ADL design with trends.
pub fn profile_appb(scale: Scale, seed: u64, cache: &Arc<CvCache>) -> Result<Vec<TableOutput>> {
    let (ns, reps, b): (&[usize], usize, usize) = match scale {
        Scale::Desk => (&[1000], 500, 299),
        Scale::Full => (&[150, 300, 1000, 2000], 2000, 499),
    };
    let mut out = String::new();
    writeln!(out, "study\tn\ttest\tmethod\trate\treps").unwrap();
    for &n in ns {
        for (study, local) in [("size", false), ("power", true)] {
            let gamma: Vec<f64> = if local {
                // sqrt(n) gamma = 1 on the first half, zero afterwards
                let half = n / 2;
                (1..=n)
                    .map(|i| if i < half { 1.0 / (n as f64).sqrt() } else { 0.0 })
                    .collect()
            } else {
                vec![0.0; n]
            };
            let spec = DgpSpec::qadl(n, gamma, 0)?;
            let mut exp = Experiment::new(spec, reps, seed);
            exp.bootstrap_b = b;
            let res = exp.rejection_rates(
                &[
                    TestSpec::SupLmAsy,
                    TestSpec::ExpLmAsy,
                    TestSpec::SupLmBoot,
                    TestSpec::ExpLmBoot,
                ],
                cache,
            )?;
            for (label, rate) in &res.rates {
                let (test, method, _) = split_label(label);
                writeln!(out, "{study}\t{n}\t{test}\t{method}\t{rate:.4}\t{}", res.reps)
                    .unwrap();
            }
        }
    }
    Ok(vec![TableOutput {
        name: "appendix-qadl.tsv".into(),
        content: out,
    }])
}
