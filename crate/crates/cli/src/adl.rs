//! Autoregressive distributed lag design construction: the tested block is
//! the lags of the causal series, the control block is an intercept, lags
//! of the dependent series, declared controls, and polynomial trends.

use crate::data::Dataset;
use anyhow::{bail, Context, Result};
use qgc::numcore::Matrix;

#[derive(Clone, Debug)]
pub struct AdlSpec {
    pub dependent: String,
    pub causal: Vec<String>,
    pub controls: Vec<String>,
    pub lags_dep: usize,
    pub lags_causal: usize,
    pub include_intercept: bool,
    pub trend_terms: usize,
}

#[derive(Debug)]
pub struct AdlDesign {
    pub y: Vec<f64>,
    pub x: Matrix,
    /// Number of tested columns (lags of the causal series).
    pub p: usize,
    /// Labels aligned with the usable rows.
    pub labels: Option<Vec<String>>,
    pub column_names: Vec<String>,
}

/// Build `(y, X)` with the first `p = lags_causal * #causal` columns the
/// tested block; the first `max(lags)` observations are consumed by the
/// lags.
pub fn build_adl(data: &Dataset, spec: &AdlSpec) -> Result<AdlDesign> {
    if spec.lags_dep == 0 || spec.lags_causal == 0 {
        bail!("lag orders must be at least 1");
    }
    let dep = data
        .column(&spec.dependent)
        .with_context(|| format!("no column named `{}`", spec.dependent))?;
    let n_total = dep.len();
    let q = spec.lags_dep.max(spec.lags_causal);
    if n_total <= q + 2 {
        bail!("not enough rows ({n_total}) for {q} lags");
    }
    let n = n_total - q;

    let mut columns: Vec<(String, Vec<f64>)> = Vec::new();
    for name in &spec.causal {
        let series = data
            .column(name)
            .with_context(|| format!("no column named `{name}`"))?;
        for lag in 1..=spec.lags_causal {
            let vals: Vec<f64> = (q..n_total).map(|i| series[i - lag]).collect();
            columns.push((format!("{name}[-{lag}]"), vals));
        }
    }
    let p = columns.len();
    if spec.include_intercept {
        columns.push(("const".into(), vec![1.0; n]));
    }
    for lag in 1..=spec.lags_dep {
        let vals: Vec<f64> = (q..n_total).map(|i| dep[i - lag]).collect();
        columns.push((format!("{}[-{lag}]", spec.dependent), vals));
    }
    for name in &spec.controls {
        let series = data
            .column(name)
            .with_context(|| format!("no column named `{name}`"))?;
        columns.push((name.clone(), (q..n_total).map(|i| series[i]).collect()));
    }
    for t in 1..=spec.trend_terms {
        let vals: Vec<f64> = (1..=n).map(|i| (i as f64 / n as f64).powi(t as i32)).collect();
        columns.push((format!("trend^{t}"), vals));
    }

    let m = columns.len();
    if p == 0 {
        bail!("no causal columns requested");
    }
    let mut x = Matrix::zeros(n, m);
    for (j, (_, col)) in columns.iter().enumerate() {
        for i in 0..n {
            x.set(i, j, col[i]);
        }
    }
    let y: Vec<f64> = dep[q..].to_vec();

    // full-rank requirement
    if let Err(e) = qgc::numcore::CholFactor::factor(&x.gram(n as f64)) {
        bail!("design is rank deficient after construction: {e}");
    }

    let labels = data
        .labels
        .as_ref()
        .map(|l| l[q..].to_vec());
    Ok(AdlDesign {
        y,
        x,
        p,
        labels,
        column_names: columns.into_iter().map(|(n, _)| n).collect(),
    })
}
