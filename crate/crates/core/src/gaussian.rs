//! One-dimensional Gaussian expectations and the Stein-identity checks built
//! on them.
//!
//! The default rule is 200-node Gauss–Hermite, rescaled to the standard normal
//! measure. An adaptive Gauss–Kronrod rule over a truncated window is kept for
//! cross-validation.

use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{operator_norm, SymMatrix};

pub const DEFAULT_NODES: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    GaussHermite,
    AdaptiveTruncated,
}

/// Integration rule for `E[h(Z)]`, `Z ~ N(0, σ²)`.
///
/// For Gauss–Hermite the weights are normalized so that they sum to one
/// (probability weights on standard-normal abscissae). The adaptive rule has
/// no fixed nodes; it integrates `h(σx)φ(x)` over `[-half_width, half_width]`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    kind: RuleKind,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    half_width: f64,
    tol: f64,
}

impl Default for QuadratureRule {
    fn default() -> Self {
        Self::gauss_hermite(DEFAULT_NODES)
    }
}

impl QuadratureRule {
    /// `n`-point Gauss–Hermite rule on the standard normal measure.
    pub fn gauss_hermite(n: usize) -> Self {
        static DEFAULT: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
        let fresh;
        let (x, w) = if n == DEFAULT_NODES {
            DEFAULT.get_or_init(|| hermite_nodes(DEFAULT_NODES))
        } else {
            fresh = hermite_nodes(n.max(1));
            &fresh
        };
        let sqrt_pi = std::f64::consts::PI.sqrt();
        Self {
            kind: RuleKind::GaussHermite,
            nodes: x.iter().map(|v| v * std::f64::consts::SQRT_2).collect(),
            weights: w.iter().map(|v| v / sqrt_pi).collect(),
            half_width: f64::INFINITY,
            tol: 0.0,
        }
    }

    /// Adaptive 15-point Gauss–Kronrod over `[-10, 10]` in standardized units,
    /// split at the origin.
    pub fn adaptive() -> Self {
        Self {
            kind: RuleKind::AdaptiveTruncated,
            nodes: Vec::new(),
            weights: Vec::new(),
            half_width: 10.0,
            tol: 1e-13,
        }
    }

    pub fn kind(&self) -> RuleKind {
        self.kind
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Nodes and weights for the weight function `exp(-x²)`, ascending.
///
/// Eigenvalues of the Jacobi matrix seed the nodes, which are then polished
/// by Newton steps on the orthonormal Hermite recurrence; the weights come
/// from the polished nodes.
fn hermite_nodes(n: usize) -> (Vec<f64>, Vec<f64>) {
    let jacobi = nalgebra::DMatrix::from_fn(n, n, |i, j| {
        if i.abs_diff(j) == 1 {
            (i.max(j) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let mut x: Vec<f64> = jacobi.symmetric_eigen().eigenvalues.iter().copied().collect();
    x.sort_by(f64::total_cmp);
    let w = x
        .iter_mut()
        .map(|z| {
            let mut pp = hermite_orthonormal(*z, n).1;
            for _ in 0..8 {
                let (p, dp) = hermite_orthonormal(*z, n);
                pp = dp;
                let step = p / dp;
                *z -= step;
                if step.abs() <= 1e-16 * z.abs().max(1.0) {
                    break;
                }
            }
            2.0 / (pp * pp)
        })
        .collect();
    (x, w)
}

/// `(p_n(z), p_n'(z))` for Hermite polynomials orthonormal under `exp(-x²)`.
fn hermite_orthonormal(z: f64, n: usize) -> (f64, f64) {
    const PIM4: f64 = 0.751_125_544_464_942_5; // π^{-1/4}
    let mut p1 = PIM4;
    let mut p2 = 0.0;
    for j in 1..=n {
        let jf = j as f64;
        let p3 = p2;
        p2 = p1;
        p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
    }
    (p1, (2.0 * n as f64).sqrt() * p2)
}

/// `E[h(Z)]` for `Z ~ N(0, σ²)`.
pub fn gauss_expect<H>(h: H, sigma: f64, rule: &QuadratureRule) -> Result<f64>
where
    H: Fn(f64) -> f64,
{
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(invalid(format!("sigma must be positive, got {sigma}")));
    }
    match rule.kind {
        RuleKind::GaussHermite => {
            let mut acc = 0.0;
            for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
                let z = sigma * x;
                let v = h(z);
                if !v.is_finite() {
                    return Err(Error::NonFiniteIntegrand { at: z });
                }
                acc += w * v;
            }
            Ok(acc)
        }
        RuleKind::AdaptiveTruncated => {
            let integrand = |x: f64| -> Result<f64> {
                let z = sigma * x;
                let v = h(z);
                if !v.is_finite() {
                    return Err(Error::NonFiniteIntegrand { at: z });
                }
                Ok(v * std_normal_pdf(x))
            };
            let left = adaptive_gk15(&integrand, -rule.half_width, 0.0, rule.tol)?;
            let right = adaptive_gk15(&integrand, 0.0, rule.half_width, rule.tol)?;
            Ok(left + right)
        }
    }
}

#[inline]
pub fn std_normal_pdf(x: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

#[inline]
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> Result<f64>>(f: &F, a: f64, b: f64) -> Result<(f64, f64)> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c)?;
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx)? + f(c + dx)?;
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    Ok((kronrod * h, ((kronrod - gauss) * h).abs()))
}

fn adaptive_gk15<F: Fn(f64) -> Result<f64>>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64> {
    const LIMIT: usize = 200;
    let (r0, e0) = gk15(f, a, b)?;
    let mut segs = vec![(a, b, r0, e0)];
    loop {
        let total: f64 = segs.iter().map(|s| s.2).sum();
        let err: f64 = segs.iter().map(|s| s.3).sum();
        if err <= tol.max(tol * total.abs()) || segs.len() >= LIMIT {
            return Ok(total);
        }
        let (worst, _) = segs
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (lo, hi, _, _) = segs.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (r1, e1) = gk15(f, lo, mid)?;
        let (r2, e2) = gk15(f, mid, hi)?;
        segs.push((lo, mid, r1, e1));
        segs.push((mid, hi, r2, e2));
    }
}

/// Maximizer and maximum of `s ↦ E[h(Z_s)]`, `Z_s ~ N(0, s²)`, over
/// `[s_lo, s_hi]`.
///
/// Golden-section search to `tol` in `s`, then a 64-point grid pass; if the
/// grid beats the golden-section answer the search is repeated inside the
/// grid cell around the better point.
pub fn sup_expect_over_scale<H>(h: H, s_lo: f64, s_hi: f64, rule: &QuadratureRule, tol: f64) -> Result<(f64, f64)>
where
    H: Fn(f64) -> f64,
{
    if !(s_lo > 0.0 && s_lo <= s_hi) {
        return Err(invalid(format!("bad scale interval [{s_lo}, {s_hi}]")));
    }
    let eval = |s: f64| gauss_expect(&h, s, rule);
    if s_hi - s_lo <= tol {
        let (vl, vh) = (eval(s_lo)?, eval(s_hi)?);
        return Ok(if vh >= vl { (s_hi, vh) } else { (s_lo, vl) });
    }
    let mut best = golden_max(&eval, s_lo, s_hi, tol)?;

    const GRID: usize = 64;
    let step = (s_hi - s_lo) / (GRID - 1) as f64;
    let mut grid_best = (s_lo, f64::NEG_INFINITY, 0usize);
    for k in 0..GRID {
        let s = if k == GRID - 1 { s_hi } else { s_lo + k as f64 * step };
        let v = eval(s)?;
        if v > grid_best.1 {
            grid_best = (s, v, k);
        }
    }
    if grid_best.1 > best.1 {
        let k = grid_best.2;
        let lo = if k == 0 { s_lo } else { s_lo + (k - 1) as f64 * step };
        let hi = if k + 1 >= GRID {
            s_hi
        } else {
            (s_lo + (k + 1) as f64 * step).min(s_hi)
        };
        let refined = golden_max(&eval, lo, hi, tol)?;
        best = if refined.1 >= grid_best.1 {
            refined
        } else {
            (grid_best.0, grid_best.1)
        };
    }
    Ok(best)
}

fn golden_max<F: Fn(f64) -> Result<f64>>(f: &F, lo: f64, hi: f64, tol: f64) -> Result<(f64, f64)> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    // endpoints are candidates too: the objective is often monotone
    let mut best = if fc >= fd { (c, fc) } else { (d, fd) };
    for s in [lo, hi] {
        let v = f(s)?;
        if v > best.1 {
            best = (s, v);
        }
    }
    Ok(best)
}

/// `|E[g(Z)(Z² − 1)] − E[g''(Z)]|`, `Z ~ N(0, 1)`.
pub fn stein_check_univariate<G, G2>(g: G, g_second: G2, rule: &QuadratureRule) -> Result<f64>
where
    G: Fn(f64) -> f64,
    G2: Fn(f64) -> f64,
{
    let lhs = gauss_expect(|z| g(z) * (z * z - 1.0), 1.0, rule)?;
    let rhs = gauss_expect(g_second, 1.0, rule)?;
    Ok((lhs - rhs).abs())
}

/// Outcome of the Monte-Carlo second-order Stein check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultivariateStein {
    /// Operator norm of `mean[g(X)(XXᵀ − I) − ∇²g(X)]`.
    pub residual: f64,
    /// Frobenius norm of the entrywise standard errors of that mean; the
    /// residual is expected to be a few multiples of this at most.
    pub stderr: f64,
    pub samples: usize,
}

/// Monte-Carlo estimate of `‖E[g(X)(XXᵀ − I)] − E[∇²g(X)]‖_op` for
/// `X ~ N(0, I_d)`. `hessian` writes the row-major `d × d` Hessian.
pub fn stein_check_multivariate<G, H>(
    g: G,
    hessian: H,
    d: usize,
    mc_samples: usize,
    seed: u64,
) -> Result<MultivariateStein>
where
    G: Fn(&[f64]) -> f64,
    H: Fn(&[f64], &mut [f64]),
{
    if d == 0 || d > 5 {
        return Err(invalid(format!("dimension {d} outside 1..=5")));
    }
    if mc_samples < 2 {
        return Err(invalid("need at least two Monte-Carlo samples"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dd = d * d;
    let mut sum = vec![0.0; dd];
    let mut sum_sq = vec![0.0; dd];
    let mut x = vec![0.0; d];
    let mut hess = vec![0.0; dd];
    let mut diff = vec![0.0; dd];
    for _ in 0..mc_samples {
        for v in x.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let gv = g(&x);
        hessian(&x, &mut hess);
        for i in 0..d {
            for j in 0..d {
                let k = i * d + j;
                let outer = x[i] * x[j] - if i == j { 1.0 } else { 0.0 };
                diff[k] = gv * outer - hess[k];
            }
        }
        for k in 0..dd {
            sum[k] += diff[k];
            sum_sq[k] += diff[k] * diff[k];
        }
    }
    let n = mc_samples as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let stderr = sum_sq
        .iter()
        .zip(&mean)
        .map(|(sq, m)| ((sq / n - m * m).max(0.0) * n / (n - 1.0)) / n)
        .sum::<f64>()
        .sqrt();
    // symmetrize against rounding in user Hessians
    let mut sym = vec![0.0; dd];
    for i in 0..d {
        for j in 0..d {
            sym[i * d + j] = 0.5 * (mean[i * d + j] + mean[j * d + i]);
        }
    }
    let residual = operator_norm(&SymMatrix::from_full(d, sym)?);
    Ok(MultivariateStein {
        residual,
        stderr,
        samples: mc_samples,
    })
}
