//! Simulation designs for validating the tests: a location-scale model with
//! optional heteroskedasticity and regressor correlation, a quantile
//! autoregressive distributed lag model with trends, break scenarios for
//! the causal coefficient, and a deterministic experiment harness.

mod experiment;
pub mod profiles;

pub use experiment::{
    BreakStats, Detection, Experiment, ExperimentResult, RegimeExperiment, TestSpec,
};

use crate::error::{Error, Result};
use crate::numcore::Matrix;
use crate::rng::{chi_squared, std_normal};
use crate::stats::QuantileGrid;
use rand::Rng;

/// Which data generating process to simulate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DgpKind {
    LocationScale,
    Qadl,
}

/// A fully specified simulation design.
#[derive(Clone, Debug)]
pub struct DgpSpec {
    pub kind: DgpKind,
    pub n: usize,
    /// Scale slope of the error: 0 for homoskedastic, 3 for the
    /// heteroskedastic design.
    pub alpha_scale: f64,
    /// Correlate the tested regressor with the control (cov = -3/4).
    pub correlated: bool,
    /// Per-observation causal coefficient.
    pub gamma_path: Vec<f64>,
    pub seed: u64,
}

impl DgpSpec {
    pub fn location_scale(n: usize, alpha_scale: f64, correlated: bool, gamma: Vec<f64>, seed: u64) -> Result<Self> {
        if gamma.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "gamma path has {} entries for n = {n}",
                gamma.len()
            )));
        }
        Ok(DgpSpec {
            kind: DgpKind::LocationScale,
            n,
            alpha_scale,
            correlated,
            gamma_path: gamma,
            seed,
        })
    }

    pub fn qadl(n: usize, gamma: Vec<f64>, seed: u64) -> Result<Self> {
        if gamma.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "gamma path has {} entries for n = {n}",
                gamma.len()
            )));
        }
        Ok(DgpSpec {
            kind: DgpKind::Qadl,
            n,
            alpha_scale: 0.0,
            correlated: false,
            gamma_path: gamma,
            seed,
        })
    }

    /// Number of tested coefficients of the design.
    pub fn p(&self) -> usize {
        match self.kind {
            DgpKind::LocationScale => 1,
            DgpKind::Qadl => 2,
        }
    }

    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, Matrix) {
        match self.kind {
            DgpKind::LocationScale => gen_location_scale(self, rng),
            DgpKind::Qadl => gen_qadl(self.n, &self.gamma_path, rng),
        }
    }
}

/// Break scenarios for the causal coefficient.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Scenario {
    /// +gamma for the first half, -gamma afterwards (cancelling break).
    A,
    /// zero for the first half, gamma afterwards.
    B,
    /// constant gamma.
    C,
    /// values over thirds of the sample.
    Tuple(f64, f64, f64),
}

/// The per-observation coefficient path of a scenario.
pub fn gamma_path(scenario: Scenario, gamma: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    match scenario {
        Scenario::A => {
            let half = n / 2;
            for i in 1..=n {
                out.push(if i <= half { gamma } else { -gamma });
            }
        }
        Scenario::B => {
            let half = n / 2;
            for i in 1..=n {
                out.push(if i <= half { 0.0 } else { gamma });
            }
        }
        Scenario::C => out.resize(n, gamma),
        Scenario::Tuple(a, b, c) => {
            let t1 = n / 3;
            let t2 = 2 * n / 3;
            for i in 1..=n {
                out.push(if i <= t1 {
                    a
                } else if i <= t2 {
                    b
                } else {
                    c
                });
            }
        }
    }
    out
}

/// True number of breaks in a scenario path.
pub fn true_breaks(scenario: Scenario) -> usize {
    match scenario {
        Scenario::A | Scenario::B => 1,
        Scenario::C => 0,
        Scenario::Tuple(a, b, c) => (a != b) as usize + (b != c) as usize,
    }
}

/// Loading of the correlated tested regressor on the Gaussianized control,
/// calibrated so that corr(z, w) = -3/4.
const CORRELATED_LOADING: f64 = 0.8036;

/// Chi-squared(3) distribution function.
fn chi3_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let s = x.sqrt();
    (2.0 * crate::norm::cdf(s) - 1.0 - 2.0 * s * crate::norm::pdf(s)).clamp(1e-15, 1.0 - 1e-15)
}

/// Location-scale design: `y = w + gamma_i z + (1 + alpha w) eps`, with
/// chi-squared(3) control, standard normal tested regressor and error, and
/// design columns ordered (z, 1, w).
///
/// The correlated variant loads z on the Gaussianized control,
/// `z = -rho Phi^{-1}(F(w)) + sqrt(1 - rho^2) eta`, which keeps z exactly
/// standard normal, sets corr(z, w) = -3/4, and makes E[z | w] nonlinear so
/// that the restricted estimation genuinely distorts the unadjusted limits.
/// A linear loading would leave the tests pivotal: the density-weighted and
/// unweighted projections of z on the control span coincide whenever the
/// dependence stays inside that span.
pub fn gen_location_scale<R: Rng + ?Sized>(spec: &DgpSpec, rng: &mut R) -> (Vec<f64>, Matrix) {
    let n = spec.n;
    let rho = CORRELATED_LOADING;
    let b = (1.0 - rho * rho).sqrt();
    let mut y = Vec::with_capacity(n);
    let mut x = Matrix::zeros(n, 3);
    for i in 0..n {
        let w = chi_squared(rng, 3);
        let z = if spec.correlated {
            -rho * crate::norm::quantile(chi3_cdf(w)) + b * std_normal(rng)
        } else {
            std_normal(rng)
        };
        let eps = std_normal(rng);
        y.push(w + spec.gamma_path[i] * z + (1.0 + spec.alpha_scale * w) * eps);
        x.set(i, 0, z);
        x.set(i, 1, 1.0);
        x.set(i, 2, w);
    }
    (y, x)
}

const QADL_BURN_IN: usize = 200;

/// Quantile ADL design with trends: `y_i = gamma_i (z_1 + z_2) + y_{i-1}/3
/// + y_{i-2}/4 + (i/n)/2 + (i/n)^2/2 + w_1/2 + u`, where z_1 is an AR(1)
/// with coefficient 1/3, z_2 and w_1 are chi-squared, and u is standard
/// normal. Columns: (z1, z2, 1, y_lag1, y_lag2, trend, trend^2, w1), so
/// p = 2 and k = 6. A burn-in of 200 observations is discarded.
pub fn gen_qadl<R: Rng + ?Sized>(n: usize, gamma: &[f64], rng: &mut R) -> (Vec<f64>, Matrix) {
    assert!(n >= 50, "QADL design needs at least 50 observations");
    let mut y = Vec::with_capacity(n);
    let mut x = Matrix::zeros(n, 8);
    let mut z1 = 0.0f64;
    let mut y1 = 0.0f64;
    let mut y2 = 0.0f64;
    for t in 0..(QADL_BURN_IN + n) {
        z1 = z1 / 3.0 + std_normal(rng);
        let z2 = chi_squared(rng, 4);
        let w1 = chi_squared(rng, 3);
        let u = std_normal(rng);
        let (g, trend) = if t >= QADL_BURN_IN {
            let i = t - QADL_BURN_IN;
            (gamma[i], (i + 1) as f64 / n as f64)
        } else {
            (0.0, 0.0)
        };
        let yt = g * (z1 + z2)
            + y1 / 3.0
            + y2 / 4.0
            + trend / 2.0
            + trend * trend / 2.0
            + w1 / 2.0
            + u;
        if t >= QADL_BURN_IN {
            let i = t - QADL_BURN_IN;
            x.set(i, 0, z1);
            x.set(i, 1, z2);
            x.set(i, 2, 1.0);
            x.set(i, 3, y1);
            x.set(i, 4, y2);
            x.set(i, 5, trend);
            x.set(i, 6, trend * trend);
            x.set(i, 7, w1);
            y.push(yt);
        }
        y2 = y1;
        y1 = yt;
    }
    (y, x)
}

/// Deterministic local-alternative drift specification on a quantile grid:
/// the constant direction, the break magnitude, and the break shape
/// tabulated on the time grid.
#[derive(Clone, Debug)]
pub struct DriftSpec {
    pub grid: QuantileGrid,
    /// Per grid quantile: the constant drift direction (p entries each).
    pub big_delta: Vec<Vec<f64>>,
    /// Per grid quantile: scalar magnitude of the break component.
    pub small_delta: Vec<f64>,
    /// Break shape tabulated on the lambda grid (p entries each).
    pub g: Vec<Vec<f64>>,
}

impl DriftSpec {
    pub fn constant(grid: QuantileGrid, delta: Vec<f64>, lambda_points: usize) -> Result<Self> {
        if delta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("drift must be finite".into()));
        }
        let p = delta.len();
        let t = grid.len();
        Ok(DriftSpec {
            grid,
            big_delta: vec![delta; t],
            small_delta: vec![0.0; t],
            g: vec![vec![0.0; p]; lambda_points],
        })
    }

    /// The coefficient path this drift induces at sample size n for a
    /// single (scalar) tested coefficient.
    pub fn gamma_path_scalar(&self, n: usize) -> Vec<f64> {
        let root = (n as f64).sqrt();
        (0..n)
            .map(|i| {
                let lam_idx = (i * self.g.len().saturating_sub(1)) / n.max(1);
                (self.big_delta[0][0] + self.small_delta[0] * self.g[lam_idx][0]) / root
            })
            .collect()
    }
}
