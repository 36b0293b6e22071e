//! Measures the unnamed constants in the filter guarantees and prints them.

use rand_distr::{Distribution, StandardNormal};
use simrobust::data::stream_rng;
use simrobust::linalg::{dot, norm2, normalize, random_unit, Points};
use simrobust::robust::{energy_ratio, gaussian_c4, robust_mean, robust_top_eigenvector, FilterConfig};

const TRIALS: u64 = 50;

fn gaussian(n: usize, d: usize, rng: &mut impl rand::Rng) -> Vec<f64> {
    (0..n * d).map(|_| StandardNormal.sample(rng)).collect()
}

/// `‖μ̂ − μ‖ ≤ C_rm·σ′√ε` with `σ′ = 1`; the worst ratio over the trials is `C_rm`.
#[test]
fn robust_mean_constant() {
    let (n, d) = (10_000, 20);
    for eps in [0.02, 0.05, 0.1] {
        let mut worst: f64 = 0.0;
        for t in 0..TRIALS {
            let mut rng = stream_rng(500 + t, 60, 0);
            let mut pts = Points::new(n, d, gaussian(n, d, &mut rng)).unwrap();
            let v = random_unit(d, &mut rng);
            for i in 0..(eps * n as f64) as usize {
                pts.row_mut(i)
                    .iter_mut()
                    .zip(&v)
                    .for_each(|(x, vj)| *x = 8.0 / eps.sqrt() * vj);
            }
            let est = robust_mean(&pts, &FilterConfig::with_eps(eps), 1.0).unwrap();
            worst = worst.max(norm2(&est) / eps.sqrt());
        }
        println!("robust mean: eps {eps}: C_rm = {worst:.3}");
        assert!(worst <= 5.0, "C_rm = {worst} at eps {eps}");
    }
}

/// `1 − energy_ratio(û; clean rows) ≤ c_ρ·C₄²√ε` on a spiked Gaussian model.
#[test]
fn energy_pca_constant() {
    let (n, d) = (20_000, 10);
    let c4 = gaussian_c4();
    for eps in [0.02, 0.05, 0.1] {
        let mut worst: f64 = 0.0;
        let bad = (eps * n as f64) as usize;
        for t in 0..TRIALS {
            let mut rng = stream_rng(900 + t, 61, 0);
            let mut pts = Points::new(n, d, gaussian(n, d, &mut rng)).unwrap();
            let beta = random_unit(d, &mut rng);
            let stretch = 3f64.sqrt() - 1.0;
            for i in 0..n {
                let row = pts.row_mut(i);
                let p = dot(row, &beta);
                row.iter_mut().zip(&beta).for_each(|(x, b)| *x += stretch * p * b);
            }
            let mut v = random_unit(d, &mut rng);
            let p = dot(&v, &beta);
            v.iter_mut().zip(&beta).for_each(|(x, b)| *x -= p * b);
            normalize(&mut v);
            let clean = pts.select(&(bad..n).collect::<Vec<_>>());
            for i in 0..bad {
                pts.row_mut(i).iter_mut().zip(&v).for_each(|(x, vj)| *x = 50.0 * vj);
            }
            let u = robust_top_eigenvector(&pts, &FilterConfig::with_eps(eps)).unwrap();
            let shortfall = 1.0 - energy_ratio(&u, &clean);
            worst = worst.max(shortfall / (c4 * c4 * eps.sqrt()));
        }
        println!("energy PCA: eps {eps}: c_rho = {worst:.3e}");
        assert!(worst <= 1.0, "c_rho = {worst} at eps {eps}");
    }
}
