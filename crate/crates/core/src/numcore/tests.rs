use super::*;
use proptest::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Exhaustive search over all m-subset interpolation vertices. Some optimum
/// of the check loss interpolates m observations, so the best vertex
/// objective is the global minimum.
fn vertex_oracle(y: &[f64], x: &Matrix, tau: f64) -> f64 {
    let _n = x.rows();
    let m = x.cols();
    let mut best = f64::INFINITY;
    let mut subset = vec![0usize; m];
    fn recurse(
        y: &[f64],
        x: &Matrix,
        tau: f64,
        start: usize,
        depth: usize,
        subset: &mut Vec<usize>,
        best: &mut f64,
    ) {
        let m = x.cols();
        if depth == m {
            let mut sub = Matrix::zeros(m, m);
            let mut rhs = vec![0.0; m];
            for (r, &i) in subset.iter().enumerate() {
                for j in 0..m {
                    sub.set(r, j, x.get(i, j));
                }
                rhs[r] = y[i];
            }
            if let Ok(beta) = sub.solve(&rhs) {
                let mut obj = 0.0;
                for i in 0..x.rows() {
                    let u = y[i] - dot(x.row(i), &beta);
                    obj += check_loss(u, tau).unwrap();
                }
                if obj < *best {
                    *best = obj;
                }
            }
            return;
        }
        for i in start..x.rows() {
            subset[depth] = i;
            recurse(y, x, tau, i + 1, depth + 1, subset, best);
        }
    }
    recurse(y, x, tau, 0, 0, &mut subset, &mut best);
    best
}

#[test]
fn check_loss_values() {
    assert_eq!(check_loss(0.0, 0.3).unwrap(), 0.0);
    assert_eq!(check_loss(-1.0, 0.5).unwrap(), 0.5);
    assert_eq!(check_loss(2.0, 0.25).unwrap(), 0.5);
    assert!(matches!(
        check_loss(1.0, 0.0),
        Err(Error::TauOutOfRange(_))
    ));
    assert!(matches!(
        check_loss(1.0, 1.0),
        Err(Error::TauOutOfRange(_))
    ));
}

#[test]
fn psi_values() {
    assert_eq!(psi(0.0, 0.5).unwrap(), 0.5);
    assert_eq!(psi(3.0, 0.25).unwrap(), -0.25);
    assert_eq!(psi(-0.1, 0.25).unwrap(), 0.75);
}

proptest! {
    #[test]
    fn check_loss_reflection(u in -50.0..50.0f64, tau in 0.01..0.99f64) {
        let a = check_loss(u, tau).unwrap();
        let b = check_loss(-u, 1.0 - tau).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        prop_assert!(a >= 0.0);
    }

    #[test]
    fn psi_range(u in -50.0..50.0f64, tau in 0.01..0.99f64) {
        let v = psi(u, tau).unwrap();
        prop_assert!(v == 1.0 - tau || v == -tau);
    }
}

#[test]
fn median_of_three() {
    let x = Matrix::from_rows(&[vec![1.0], vec![1.0], vec![1.0]]);
    let fit = fit_unrestricted(&[1.0, 2.0, 3.0], &x, 0.5).unwrap();
    assert_eq!(fit.beta, vec![2.0]);
    assert!((fit.objective - 1.0).abs() < 1e-12);
}

#[test]
fn quartile_breakpoint_objective() {
    // beta anywhere in [1,2] is optimal; objective pinned at 1.5 and the
    // reported point is the lower endpoint.
    let x = Matrix::from_rows(&vec![vec![1.0]; 4]);
    let fit = fit_unrestricted(&[1.0, 2.0, 3.0, 4.0], &x, 0.25).unwrap();
    assert!((fit.objective - 1.5).abs() < 1e-12);
    assert_eq!(fit.beta, vec![1.0]);
}

#[test]
fn restricted_constant_is_sample_quantile() {
    let w = Matrix::from_rows(&vec![vec![1.0]; 5]);
    let y = [3.0, 1.0, 4.0, 1.5, 9.0];
    for &(tau, want) in &[(0.2, 1.0), (0.5, 3.0), (0.8, 4.0)] {
        let fit = fit_restricted(&y, &w, tau).unwrap();
        assert_eq!(fit.beta[0], want, "tau = {tau}");
    }
    // padded form
    let fit = fit_restricted(&y, &w, 0.5).unwrap();
    assert_eq!(fit.padded_beta(2), vec![0.0, 0.0, 3.0]);
}

#[test]
fn solver_matches_vertex_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for case in 0..40 {
        let n = rng.random_range(5..=12usize);
        let m = rng.random_range(1..=3usize.min(n - 1));
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            let mut row = vec![1.0];
            row.extend(normal_vec(&mut rng, m - 1));
            rows.push(row);
        }
        let x = Matrix::from_rows(&rows);
        let y = normal_vec(&mut rng, n);
        let tau = *[0.1, 0.25, 0.5, 0.75, 0.9]
            .iter()
            .nth(rng.random_range(0..5))
            .unwrap();
        let fit = fit_unrestricted(&y, &x, tau).unwrap();
        let oracle = vertex_oracle(&y, &x, tau);
        assert!(
            (fit.objective - oracle).abs() <= 1e-8,
            "case {case}: solver {} vs oracle {}",
            fit.objective,
            oracle
        );
    }
}

#[test]
fn restricted_matches_vertex_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10 {
        let n = 10;
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            rows.push(vec![1.0, StandardNormal.sample(&mut rng)]);
        }
        let w = Matrix::from_rows(&rows);
        let y = normal_vec(&mut rng, n);
        let fit = fit_restricted(&y, &w, 0.3).unwrap();
        let oracle = vertex_oracle(&y, &w, 0.3);
        assert!((fit.objective - oracle).abs() <= 1e-8);
    }
}

#[test]
fn scale_equivariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 40;
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        rows.push(vec![
            1.0,
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
        ]);
    }
    let x = Matrix::from_rows(&rows);
    let y = normal_vec(&mut rng, n);
    let c = 2.5;
    let fit = fit_unrestricted(&y, &x, 0.4).unwrap();
    let scaled: Vec<f64> = y.iter().map(|v| c * v).collect();
    let fit_c = fit_unrestricted(&scaled, &x, 0.4).unwrap();
    for j in 0..3 {
        assert!(
            (fit_c.beta[j] - c * fit.beta[j]).abs() < 1e-7,
            "coefficient {j}"
        );
    }
}

#[test]
fn regressor_scale_equivariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 35;
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        rows.push(vec![1.0, StandardNormal.sample(&mut rng)]);
    }
    let x = Matrix::from_rows(&rows);
    let y = normal_vec(&mut rng, n);
    let d = [3.0, 0.5];
    let mut rows_scaled = Vec::with_capacity(n);
    for i in 0..n {
        rows_scaled.push(vec![x.get(i, 0) * d[0], x.get(i, 1) * d[1]]);
    }
    let xd = Matrix::from_rows(&rows_scaled);
    let fit = fit_unrestricted(&y, &x, 0.6).unwrap();
    let fit_d = fit_unrestricted(&y, &xd, 0.6).unwrap();
    for j in 0..2 {
        assert!((fit_d.beta[j] - fit.beta[j] / d[j]).abs() < 1e-7);
    }
}

#[test]
fn restricted_intercept_covers_tau_fraction() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 500;
    let y = normal_vec(&mut rng, n);
    let w = Matrix::from_rows(&vec![vec![1.0]; n]);
    for &tau in &[0.1, 0.5, 0.9] {
        let fit = fit_restricted(&y, &w, tau).unwrap();
        let frac = fit.residuals.iter().filter(|&&u| u <= 0.0).count() as f64 / n as f64;
        assert!(
            frac >= tau - 1.0 / n as f64 - 1e-12 && frac <= tau + 1.0 / n as f64 + 1e-12,
            "tau = {tau}, frac = {frac}"
        );
    }
}

#[test]
fn subgradient_bound_at_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    for _ in 0..10 {
        let n = 60;
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            rows.push(vec![
                1.0,
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
            ]);
        }
        let x = Matrix::from_rows(&rows);
        let y = normal_vec(&mut rng, n);
        let tau = 0.35;
        let fit = fit_unrestricted(&y, &x, tau).unwrap();
        let m = x.cols();
        let mut s = vec![0.0; m];
        let mut max_row = 0.0f64;
        for i in 0..n {
            let p = psi_unchecked(fit.residuals[i], tau);
            for j in 0..m {
                s[j] += x.get(i, j) * p;
                max_row = max_row.max(x.get(i, j).abs());
            }
        }
        let sup = s.iter().map(|v| v.abs()).fold(0.0, f64::max) / (n as f64).sqrt();
        let bound = m as f64 * max_row / (n as f64).sqrt();
        assert!(sup <= bound + 1e-10, "subgradient {sup} > bound {bound}");
    }
}

#[test]
fn collinear_design_rejected() {
    let x = Matrix::from_rows(&[
        vec![1.0, 2.0],
        vec![1.0, 2.0],
        vec![1.0, 2.0],
        vec![1.0, 2.0],
    ]);
    match fit_unrestricted(&[1.0, 2.0, 3.0, 4.0], &x, 0.5) {
        Err(Error::Singular { .. }) => {}
        other => panic!("expected singularity, got {other:?}"),
    }
}

#[test]
fn quantile_index_knife_edges() {
    assert_eq!(quantile_index(4, 0.25), 0); // n*tau integer: lower endpoint
    assert_eq!(quantile_index(3, 0.5), 1);
    assert_eq!(quantile_index(1000, 0.3), 299);
    assert_eq!(quantile_index(5, 0.999), 4);
}
