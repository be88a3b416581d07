//! Simulation of the limiting null distributions: Brownian bridges for the
//! fixed-quantile statistic, pinned Gaussian sheets (Brownian pillows) for
//! the continuum statistics, the maximum of two independent pillows for the
//! second-break step, and the bridge functional of the sup-Wald benchmark.

mod table;

pub use table::{CriticalValueTable, TableKey};

use crate::error::{Error, Result};
use crate::numcore::Matrix;
use crate::rng::{std_normal, stream, uniform};
use crate::stats::{exp_aggregate, h_weight, sup_aggregate, QuantileGrid};
use rayon::prelude::*;
use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

/// Which limiting functional is simulated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NullFamily {
    /// sup-over-time bridge norm plus terminal norm at one quantile.
    LmFixed,
    /// sup over quantiles of (pillow sup + terminal slice norm).
    SupLm,
    /// exp integral over quantiles of the same per-quantile statistic.
    ExpLm,
    /// sup over quantiles of the squared-bridge form.
    SupWald,
    /// sup over time and quantiles of the pillow norm.
    SupCusum,
    /// sup over time of the exp integral of the pillow norm.
    ExpCusum,
    /// maximum of two independent sup-weighted pillows.
    MaxTwoSupCusum,
    /// maximum of two independent exp-weighted pillows.
    MaxTwoExpCusum,
}

impl NullFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            NullFamily::LmFixed => "LM_fixed",
            NullFamily::SupLm => "supLM",
            NullFamily::ExpLm => "expLM",
            NullFamily::SupWald => "supWald",
            NullFamily::SupCusum => "supCUSUM",
            NullFamily::ExpCusum => "expCUSUM",
            NullFamily::MaxTwoSupCusum => "maxTwoSupCUSUM",
            NullFamily::MaxTwoExpCusum => "maxTwoExpCUSUM",
        }
    }
}

/// The nuisance adjustment applied to the terminal slice of the null: a
/// p-by-k matrix per grid quantile.
#[derive(Clone, Debug)]
pub struct QCurve {
    pub taus: Vec<f64>,
    pub qs: Vec<Matrix>,
}

impl QCurve {
    pub fn constant(tau: f64, q: Matrix) -> Self {
        QCurve {
            taus: vec![tau],
            qs: vec![q],
        }
    }

    fn digest(&self) -> u64 {
        let mut bytes = Vec::new();
        for (t, q) in self.taus.iter().zip(&self.qs) {
            bytes.extend_from_slice(&t.to_bits().to_le_bytes());
            for v in q.data() {
                bytes.extend_from_slice(&v.to_bits().to_le_bytes());
            }
        }
        table::fnv1a(&bytes)
    }
}

/// Full configuration of one simulated null distribution.
#[derive(Clone, Debug)]
pub struct NullSampler {
    pub family: NullFamily,
    pub p: usize,
    pub k: usize,
    pub lambda_steps: usize,
    pub tau_grid: QuantileGrid,
    pub reps: usize,
    pub seed: u64,
    pub q_curve: Option<QCurve>,
}

pub const DEFAULT_LAMBDA_STEPS: usize = 1000;

impl NullSampler {
    pub fn new(
        family: NullFamily,
        p: usize,
        k: usize,
        tau_grid: QuantileGrid,
        reps: usize,
        seed: u64,
    ) -> Result<Self> {
        let sampler = NullSampler {
            family,
            p,
            k,
            lambda_steps: DEFAULT_LAMBDA_STEPS,
            tau_grid,
            reps,
            seed,
            q_curve: None,
        };
        sampler.validate()?;
        Ok(sampler)
    }

    pub fn with_lambda_steps(mut self, steps: usize) -> Result<Self> {
        self.lambda_steps = steps;
        self.validate()?;
        Ok(self)
    }

    pub fn with_q_curve(mut self, q: QCurve) -> Result<Self> {
        if q.qs.iter().any(|m| m.rows() != self.p || m.cols() != self.k) {
            return Err(Error::DimensionMismatch(
                "Q curve entries must be p x k".into(),
            ));
        }
        self.q_curve = Some(q);
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if self.reps < 500 {
            return Err(Error::InvalidArgument(format!(
                "need at least 500 replications, got {}",
                self.reps
            )));
        }
        if self.lambda_steps < 200 {
            return Err(Error::InvalidArgument(format!(
                "need at least 200 lambda steps, got {}",
                self.lambda_steps
            )));
        }
        if self.p == 0 {
            return Err(Error::InvalidArgument("p must be positive".into()));
        }
        Ok(())
    }

    pub fn key(&self) -> TableKey {
        TableKey {
            family: self.family.as_str().to_string(),
            p: self.p,
            k: self.k,
            lo: self.tau_grid.lo,
            hi: self.tau_grid.hi,
            step: self.tau_grid.step,
            lambda_steps: self.lambda_steps,
            reps: self.reps,
            seed: self.seed,
            q_digest: self.q_curve.as_ref().map_or(0, QCurve::digest),
        }
    }

    /// Simulate the configured family into a sorted table.
    pub fn simulate(&self) -> Result<CriticalValueTable> {
        let samples = match self.family {
            NullFamily::LmFixed => simulate_fixed_tau_null(self)?,
            NullFamily::SupLm | NullFamily::ExpLm => simulate_many_tau_null(self)?,
            NullFamily::SupWald => simulate_sup_wald_null(self)?,
            NullFamily::SupCusum | NullFamily::ExpCusum => simulate_cusum_null(self)?,
            NullFamily::MaxTwoSupCusum | NullFamily::MaxTwoExpCusum => {
                simulate_max_two_pillows(self)?
            }
        };
        Ok(CriticalValueTable::new(self.key(), samples))
    }

    fn q_at(&self, tau_index: usize) -> Option<&Matrix> {
        self.q_curve.as_ref().map(|c| &c.qs[tau_index.min(c.qs.len() - 1)])
    }
}

/// One draw of the fixed-quantile null: `sup_t ||BB_p(t)||_inf +
/// ||B_p(1) - Q B_k(1)||_inf`. The bridge and the terminal value are
/// independent by construction, and both come from one Brownian path.
/// Returns the two components separately.
fn fixed_tau_draw(
    rng: &mut rand_chacha::ChaCha8Rng,
    p: usize,
    k: usize,
    steps: usize,
    q: Option<&Matrix>,
) -> (f64, f64) {
    let scale = 1.0 / (steps as f64).sqrt();
    let mut sup_bb = 0.0f64;
    let mut b1_p = vec![0.0; p];
    let mut path = vec![0.0; steps];
    for coord in 0..p {
        let mut acc = 0.0;
        for v in path.iter_mut() {
            acc += std_normal(rng) * scale;
            *v = acc;
        }
        let terminal = acc;
        b1_p[coord] = terminal;
        for (i, &v) in path.iter().enumerate() {
            let rel = (i + 1) as f64 / steps as f64;
            sup_bb = sup_bb.max((v - rel * terminal).abs());
        }
    }
    let mut term = vec![0.0; p];
    term.copy_from_slice(&b1_p);
    if let Some(qm) = q {
        for l in 0..k {
            let b1k: f64 = (0..steps).map(|_| std_normal(rng) * scale).sum();
            for (r, t) in term.iter_mut().enumerate() {
                *t -= qm.get(r, l) * b1k;
            }
        }
    }
    let term_norm = term.iter().map(|v| v.abs()).fold(0.0, f64::max);
    (sup_bb, term_norm)
}

/// Empirical null sample for the fixed-quantile statistic.
pub fn simulate_fixed_tau_null(sampler: &NullSampler) -> Result<Vec<f64>> {
    Ok(simulate_fixed_tau_components(sampler)?
        .into_iter()
        .map(|(sup_bb, term)| sup_bb + term)
        .collect())
}

/// The two components of every fixed-quantile draw: the bridge supremum and
/// the terminal norm. Used for calibration checks against closed-form
/// oracles.
pub fn simulate_fixed_tau_components(sampler: &NullSampler) -> Result<Vec<(f64, f64)>> {
    let (p, k, steps) = (sampler.p, sampler.k, sampler.lambda_steps);
    let q = sampler.q_at(0).cloned();
    Ok((0..sampler.reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream(sampler.seed, rep as u64);
            fixed_tau_draw(&mut rng, p, k, steps, q.as_ref())
        })
        .collect())
}

/// Raw components of the fixed-quantile null draws: the bridge supremum of
/// the tested block and the terminal values of every coordinate. A null
/// sample for any nuisance block Q is recombined without resimulating.
#[derive(Clone, Debug)]
pub struct FixedTauParts {
    pub sup_bb: Vec<f64>,
    /// reps x p terminal values of the tested coordinates
    pub b1_p: Vec<Vec<f64>>,
    /// reps x k terminal values of the control coordinates
    pub b1_k: Vec<Vec<f64>>,
}

impl FixedTauParts {
    pub fn simulate(p: usize, k: usize, steps: usize, reps: usize, seed: u64) -> Self {
        let scale = 1.0 / (steps as f64).sqrt();
        let rows: Vec<(f64, Vec<f64>, Vec<f64>)> = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let mut rng = stream(seed, rep as u64);
                let mut sup_bb = 0.0f64;
                let mut b1_p = vec![0.0; p];
                let mut path = vec![0.0; steps];
                for slot in b1_p.iter_mut() {
                    let mut acc = 0.0;
                    for v in path.iter_mut() {
                        acc += std_normal(&mut rng) * scale;
                        *v = acc;
                    }
                    *slot = acc;
                    for (i, &v) in path.iter().enumerate() {
                        let rel = (i + 1) as f64 / steps as f64;
                        sup_bb = sup_bb.max((v - rel * acc).abs());
                    }
                }
                let b1_k: Vec<f64> = (0..k)
                    .map(|_| (0..steps).map(|_| std_normal(&mut rng) * scale).sum())
                    .collect();
                (sup_bb, b1_p, b1_k)
            })
            .collect();
        let mut parts = FixedTauParts {
            sup_bb: Vec::with_capacity(reps),
            b1_p: Vec::with_capacity(reps),
            b1_k: Vec::with_capacity(reps),
        };
        for (s, bp, bk) in rows {
            parts.sup_bb.push(s);
            parts.b1_p.push(bp);
            parts.b1_k.push(bk);
        }
        parts
    }

    /// Null sample `sup||BB_p|| + ||B_p(1) - Q B_k(1)||` for the given Q
    /// (or the pivotal version when absent), sorted ascending.
    pub fn samples_with_q(&self, q: Option<&Matrix>) -> Vec<f64> {
        let p = self.b1_p.first().map_or(0, Vec::len);
        let k = self.b1_k.first().map_or(0, Vec::len);
        let mut out: Vec<f64> = (0..self.sup_bb.len())
            .map(|i| {
                let mut term = 0.0f64;
                for r in 0..p {
                    let mut v = self.b1_p[i][r];
                    if let Some(qm) = q {
                        for l in 0..k {
                            v -= qm.get(r, l) * self.b1_k[i][l];
                        }
                    }
                    term = term.max(v.abs());
                }
                self.sup_bb[i] + term
            })
            .collect();
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out
    }
}

/// Values of one sheet coordinate at the given `(lambda, tau)` probe
/// points, one row per replication. Exposes the exact construction used by
/// the null samplers so its covariance can be verified externally.
pub fn sheet_probe(
    seed: u64,
    reps: usize,
    steps: usize,
    probes: &[(f64, f64)],
) -> Vec<Vec<f64>> {
    let scale = 1.0 / (steps as f64).sqrt();
    (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream(seed, rep as u64);
            let u: Vec<f64> = (0..steps).map(|_| uniform(&mut rng)).collect();
            probes
                .iter()
                .map(|&(lambda, tau)| {
                    let upto = ((lambda * steps as f64) + 1e-9).floor() as usize;
                    let mut s = 0.0;
                    for &ui in &u[..upto.min(steps)] {
                        s += if ui <= tau { 1.0 - tau } else { -tau };
                    }
                    s * scale
                })
                .collect()
        })
        .collect()
}

/// Per-quantile statistic of one sheet draw: for each grid quantile,
/// `sup_t ||SS_p(t, tau)||_inf + ||S_p(1, tau) - Q(tau) S_k(1, tau)||_inf`.
fn many_tau_draw(
    rng: &mut rand_chacha::ChaCha8Rng,
    sampler: &NullSampler,
    per_tau: &mut [f64],
) {
    let taus = sampler.tau_grid.points();
    let t_count = taus.len();
    let n = sampler.lambda_steps;
    let scale = 1.0 / (n as f64).sqrt();
    let (p, k) = (sampler.p, sampler.k);

    let mut sup = vec![0.0f64; t_count];
    let mut s1_p = vec![0.0f64; p * t_count];
    let mut u = vec![0.0f64; n];

    for coord in 0..p {
        for v in u.iter_mut() {
            *v = uniform(rng);
        }
        for (t, &tau) in taus.iter().enumerate() {
            // terminal slice and bridged sup in one pass: the bridged sheet
            // depends only on the indicator counts
            let mut cnt = 0usize;
            let mut counts_total = 0usize;
            for &ui in u.iter() {
                if ui <= tau {
                    counts_total += 1;
                }
            }
            let total = counts_total as f64;
            let mut best = 0.0f64;
            for (i, &ui) in u.iter().enumerate() {
                if ui <= tau {
                    cnt += 1;
                }
                let rel = (i + 1) as f64 / n as f64;
                let bridged = (cnt as f64 - rel * total) * scale;
                best = best.max(bridged.abs());
            }
            sup[t] = sup[t].max(best);
            s1_p[coord * t_count + t] = (total - n as f64 * tau) * scale;
        }
    }

    // terminal slices of the control coordinates, needed only under Q
    let need_k = sampler.q_curve.is_some();
    let mut s1_k = vec![0.0f64; if need_k { k * t_count } else { 0 }];
    if need_k {
        for coord in 0..k {
            for v in u.iter_mut() {
                *v = uniform(rng);
            }
            let mut sorted = u.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (t, &tau) in taus.iter().enumerate() {
                let cnt = sorted.partition_point(|&v| v <= tau) as f64;
                s1_k[coord * t_count + t] = (cnt - n as f64 * tau) * scale;
            }
        }
    }

    for (t, slot) in per_tau.iter_mut().enumerate() {
        let mut term = 0.0f64;
        for r in 0..p {
            let mut v = s1_p[r * t_count + t];
            if let Some(qm) = sampler.q_at(t) {
                for l in 0..k {
                    v -= qm.get(r, l) * s1_k[l * t_count + t];
                }
            }
            term = term.max(v.abs());
        }
        *slot = sup[t] + term;
    }
}

/// Empirical null for the continuum statistics; the sup and exp weightings
/// of the same draws. Returns the pair (sup table, exp table).
pub fn simulate_sup_exp_nulls(sampler: &NullSampler) -> Result<(Vec<f64>, Vec<f64>)> {
    let t_count = sampler.tau_grid.len();
    let pairs: Vec<(f64, f64)> = (0..sampler.reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream(sampler.seed, rep as u64);
            let mut per_tau = vec![0.0; t_count];
            many_tau_draw(&mut rng, sampler, &mut per_tau);
            (
                sup_aggregate(&per_tau),
                exp_aggregate(&per_tau, sampler.tau_grid.step),
            )
        })
        .collect();
    Ok(pairs.into_iter().unzip())
}

/// Empirical null for the family picked in the sampler (sup or exp).
pub fn simulate_many_tau_null(sampler: &NullSampler) -> Result<Vec<f64>> {
    let (sup, exp) = simulate_sup_exp_nulls(sampler)?;
    Ok(match sampler.family {
        NullFamily::SupLm => sup,
        NullFamily::ExpLm => exp,
        other => {
            return Err(Error::InvalidArgument(format!(
                "many-tau simulation asked for family {other:?}"
            )))
        }
    })
}

/// One pillow draw aggregated over quantiles: the CUSUM-type null.
fn cusum_draw(rng: &mut rand_chacha::ChaCha8Rng, sampler: &NullSampler, exp_variant: bool) -> f64 {
    let taus = sampler.tau_grid.points();
    let t_count = taus.len();
    let n = sampler.lambda_steps;
    let scale = 1.0 / (n as f64).sqrt();
    let p = sampler.p;

    if !exp_variant {
        // sup over time, quantiles, and coordinates
        let mut best = 0.0f64;
        let mut u = vec![0.0f64; n];
        for _ in 0..p {
            for v in u.iter_mut() {
                *v = uniform(rng);
            }
            for &tau in taus {
                let total = u.iter().filter(|&&v| v <= tau).count() as f64;
                let mut cnt = 0.0f64;
                for (i, &ui) in u.iter().enumerate() {
                    if ui <= tau {
                        cnt += 1.0;
                    }
                    let rel = (i + 1) as f64 / n as f64;
                    best = best.max(((cnt - rel * total) * scale).abs());
                }
            }
        }
        return best;
    }

    // exp variant: need the field max_j |SS_j(lambda, tau)| jointly
    let mut field = vec![0.0f64; (n + 1) * t_count];
    let mut u = vec![0.0f64; n];
    for _ in 0..p {
        for v in u.iter_mut() {
            *v = uniform(rng);
        }
        for (t, &tau) in taus.iter().enumerate() {
            let total = u.iter().filter(|&&v| v <= tau).count() as f64;
            let mut cnt = 0.0f64;
            for (i, &ui) in u.iter().enumerate() {
                if ui <= tau {
                    cnt += 1.0;
                }
                let rel = (i + 1) as f64 / n as f64;
                let v = ((cnt - rel * total) * scale).abs();
                let slot = &mut field[(i + 1) * t_count + t];
                if v > *slot {
                    *slot = v;
                }
            }
        }
    }
    let mut best = 0.0f64;
    for row in field.chunks_exact(t_count) {
        let mut acc = 0.0;
        for &v in row {
            acc += (0.5 * v).exp();
        }
        best = best.max(acc * sampler.tau_grid.step);
    }
    best
}

/// Empirical null for the sup/exp CUSUM statistics.
pub fn simulate_cusum_null(sampler: &NullSampler) -> Result<Vec<f64>> {
    let exp_variant = match sampler.family {
        NullFamily::ExpCusum => true,
        NullFamily::SupCusum => false,
        other => {
            return Err(Error::InvalidArgument(format!(
                "CUSUM simulation asked for family {other:?}"
            )))
        }
    };
    Ok((0..sampler.reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream(sampler.seed, rep as u64);
            cusum_draw(&mut rng, sampler, exp_variant)
        })
        .collect())
}

/// Null of the second-break step: the maximum of two independent pillow
/// draws.
pub fn simulate_max_two_pillows(sampler: &NullSampler) -> Result<Vec<f64>> {
    let exp_variant = match sampler.family {
        NullFamily::MaxTwoExpCusum => true,
        NullFamily::MaxTwoSupCusum => false,
        other => {
            return Err(Error::InvalidArgument(format!(
                "max-of-two simulation asked for family {other:?}"
            )))
        }
    };
    Ok((0..sampler.reps)
        .into_par_iter()
        .map(|rep| {
            let mut a = stream(sampler.seed, 2 * rep as u64);
            let mut b = stream(sampler.seed, 2 * rep as u64 + 1);
            let da = cusum_draw(&mut a, sampler, exp_variant);
            let db = cusum_draw(&mut b, sampler, exp_variant);
            da.max(db)
        })
        .collect())
}

/// Null of the sup-Wald benchmark: `sup_tau h^2(tau) ||BB_p(tau)||^2` with a
/// Brownian bridge over the quantile axis, evaluated exactly on the grid.
pub fn simulate_sup_wald_null(sampler: &NullSampler) -> Result<Vec<f64>> {
    let taus = sampler.tau_grid.points().to_vec();
    let p = sampler.p;
    Ok((0..sampler.reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream(sampler.seed, rep as u64);
            let t_count = taus.len();
            // Brownian motion sampled at the grid quantiles plus the endpoint 1
            let mut b = vec![0.0f64; p * t_count];
            let mut b1 = vec![0.0f64; p];
            for coord in 0..p {
                let mut prev_t = 0.0;
                let mut acc = 0.0;
                for (t, &tau) in taus.iter().enumerate() {
                    acc += std_normal(&mut rng) * (tau - prev_t).sqrt();
                    b[coord * t_count + t] = acc;
                    prev_t = tau;
                }
                acc += std_normal(&mut rng) * (1.0 - prev_t).sqrt();
                b1[coord] = acc;
            }
            let mut best = 0.0f64;
            for (t, &tau) in taus.iter().enumerate() {
                let mut ss = 0.0;
                for coord in 0..p {
                    let bb = b[coord * t_count + t] - tau * b1[coord];
                    ss += bb * bb;
                }
                let h2 = h_weight(tau).powi(2);
                best = best.max(h2 * ss);
            }
            best
        })
        .collect())
}

/// In-memory (and optionally on-disk) cache of simulated tables, keyed by
/// the full sampler configuration.
pub struct CvCache {
    dir: Option<PathBuf>,
    mem: Mutex<HashMap<String, Arc<CriticalValueTable>>>,
}

impl CvCache {
    pub fn in_memory() -> Self {
        CvCache {
            dir: None,
            mem: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_dir(dir: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&dir)?;
        Ok(CvCache {
            dir: Some(dir),
            mem: Mutex::new(HashMap::new()),
        })
    }

    pub fn get_or_simulate(&self, sampler: &NullSampler) -> Result<Arc<CriticalValueTable>> {
        let key = sampler.key();
        let key_line = key.header_line();
        if let Some(hit) = self.mem.lock().unwrap().get(&key_line) {
            return Ok(hit.clone());
        }
        if let Some(dir) = &self.dir {
            let path = dir.join(key.file_name());
            if path.exists() {
                let table = CriticalValueTable::read_from_path(&path)?;
                if table.key == key {
                    let arc = Arc::new(table);
                    self.mem
                        .lock()
                        .unwrap()
                        .insert(key_line, arc.clone());
                    return Ok(arc);
                }
            }
        }
        let table = Arc::new(sampler.simulate()?);
        if let Some(dir) = &self.dir {
            table.write_to_path(&dir.join(key.file_name()))?;
        }
        self.mem.lock().unwrap().insert(key_line, table.clone());
        Ok(table)
    }
}

#[cfg(test)]
mod tests;
