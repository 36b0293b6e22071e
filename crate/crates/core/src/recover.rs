//! The recovery pipeline: robust spectral initialization (LRSI), robust
//! gradient descent (LRGD) on fresh buckets, and the unfiltered baseline.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{split_buckets, Dataset, NoiseModel, SampleView};
use crate::error::{invalid, Error, Result};
use crate::gaussian::{gauss_expect, QuadratureRule};
use crate::linalg::{dot, norm2, normalize, Points};
use crate::link::{builtin, constants_report, ConstantsReport, LinkFunction};
use crate::par::{self, Exec, CHUNK_ROWS};
use crate::robust::{robust_mean, robust_top_eigenvector, FilterConfig};

/// Iteration cap for the default step count.
pub const MAX_DEFAULT_STEPS: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryConfig {
    pub eps: f64,
    pub delta: f64,
    /// Number of gradient steps; the data is split into `P + 1` buckets.
    #[serde(rename = "P")]
    pub steps: usize,
    /// Step size; `None` means `2/(μ + μ₁)`.
    #[serde(default)]
    pub eta: Option<f64>,
    /// Noise standard deviation assumed by the gradient filter.
    pub sigma: f64,
    pub constants: ConstantsReport,
    pub filter: FilterConfig,
    /// Hypercontractivity constant of the clean `y·x` rows, used by LRSI.
    pub init_c4: f64,
    /// `λ_max(E[y² xxᵀ]) = σ² + E[f²] + 2·ESC`, the clean LRSI scale.
    pub init_scale: f64,
}

impl RecoveryConfig {
    /// Configuration for data drawn with `link` and `noise` at contamination `eps`.
    pub fn new(link: &LinkFunction, noise: &NoiseModel, eps: f64, rule: &QuadratureRule) -> Result<Self> {
        let sigma = noise.sigma();
        let constants = constants_report(link, sigma, noise.k4(), rule)?;
        let steps = default_steps(&constants, sigma, eps);
        Ok(Self {
            eps,
            delta: 0.05,
            steps,
            eta: None,
            sigma,
            init_c4: init_hypercontractivity(link, noise, rule)?,
            init_scale: init_second_moment(link, noise, rule)?,
            filter: FilterConfig::with_eps(eps),
            constants,
        })
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.filter.exec = exec;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps < 1 {
            return Err(invalid("recovery needs P >= 1"));
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(invalid(format!("step size must be positive, got {eta}")));
            }
        }
        self.filter.validate()
    }

    pub fn eta(&self) -> f64 {
        self.eta.unwrap_or(self.constants.eta)
    }

    pub fn link(&self) -> LinkFunction {
        builtin(self.constants.link)
    }

    /// `√(6φ₁R² + √3·σ²φ₂)`: covariance bound of the gradient rows anywhere in
    /// the basin.
    pub fn sigma_bound(&self) -> f64 {
        let c = &self.constants;
        let r = c.basin_radius;
        let v = 6.0 * c.phi1 * r * r + 3f64.sqrt() * self.sigma * self.sigma * c.phi2;
        v.sqrt().max(f64::MIN_POSITIVE.sqrt())
    }

    /// Filter used by the spectral initialization: model-derived C4 and scale bound.
    pub fn init_filter(&self) -> FilterConfig {
        FilterConfig {
            c4: self.init_c4,
            scale_bound: Some(self.init_scale),
            ..self.filter
        }
    }

    /// Same configuration with every filter disabled.
    fn unfiltered(&self) -> Self {
        let mut cfg = self.clone();
        cfg.filter.eps = 0.0;
        cfg.filter.tail_removal_fraction = None;
        cfg
    }
}

/// `⌈((α+γ)/γ)·ln(2R/(σ√ε))⌉`, at least 1 and at most [`MAX_DEFAULT_STEPS`].
pub fn default_steps(c: &ConstantsReport, sigma: f64, eps: f64) -> usize {
    let floor = sigma * eps.sqrt();
    if floor <= 0.0 {
        return MAX_DEFAULT_STEPS;
    }
    let p = ((c.alpha + c.gamma) / c.gamma) * (2.0 * c.basin_radius / floor).ln();
    if !p.is_finite() {
        return MAX_DEFAULT_STEPS;
    }
    (p.ceil().max(1.0) as usize).min(MAX_DEFAULT_STEPS)
}

/// Largest eigenvalue of the clean second moment `E[y² xxᵀ]`.
pub fn init_second_moment(link: &LinkFunction, noise: &NoiseModel, rule: &QuadratureRule) -> Result<f64> {
    let s2 = noise.sigma().powi(2);
    let along = gauss_expect(|z| ((link.f)(z).powi(2) + s2) * z * z, 1.0, rule)?;
    let across = gauss_expect(|z| (link.f)(z).powi(2) + s2, 1.0, rule)?;
    Ok(along.max(across))
}

/// Smallest `C` with `E⟨w, yx⟩⁴ ≤ C⁴ (E⟨w, yx⟩²)²` over unit `w`, for clean
/// rows of the model. The ratio only depends on the angle between `w` and β*.
pub fn init_hypercontractivity(link: &LinkFunction, noise: &NoiseModel, rule: &QuadratureRule) -> Result<f64> {
    let s2 = noise.sigma().powi(2);
    let m4 = noise.fourth_moment();
    let a = |k: i32| {
        gauss_expect(
            |z| {
                let f = (link.f)(z);
                let f2 = f * f;
                (f2 * f2 + 6.0 * f2 * s2 + m4) * z.powi(k)
            },
            1.0,
            rule,
        )
    };
    let b = |k: i32| gauss_expect(|z| ((link.f)(z).powi(2) + s2) * z.powi(k), 1.0, rule);
    let (a0, a2, a4) = (a(0)?, a(2)?, a(4)?);
    let (b0, b2) = (b(0)?, b(2)?);
    if !(b0 > 0.0) {
        return Err(invalid("responses are identically zero"));
    }
    let ratio = |t: f64| {
        let (c2, s2) = (t.cos().powi(2), t.sin().powi(2));
        let num = c2 * c2 * a4 + 6.0 * c2 * s2 * a2 + 3.0 * s2 * s2 * a0;
        let den = c2 * b2 + s2 * b0;
        num / (den * den)
    };
    // grid, then golden-section refinement around the best grid angle
    const STEPS: usize = 512;
    let h = std::f64::consts::FRAC_PI_2 / STEPS as f64;
    let best = (0..=STEPS)
        .map(|i| i as f64 * h)
        .max_by(|x, y| ratio(*x).total_cmp(&ratio(*y)))
        .expect("non-empty grid");
    let (mut lo, mut hi) = ((best - h).max(0.0), (best + h).min(std::f64::consts::FRAC_PI_2));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    while hi - lo > 1e-12 {
        let (m1, m2) = (hi - g * (hi - lo), lo + g * (hi - lo));
        if ratio(m1) < ratio(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    let worst = ratio(best).max(ratio(0.5 * (lo + hi)));
    Ok(worst.powf(0.25))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub iteration: usize,
    /// `‖g_t‖`; absent for the final iterate.
    pub grad_norm: Option<f64>,
    /// `dist(β_t, β*)`, when the truth is known.
    pub dist: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    pub beta_hat: Vec<f64>,
    pub beta0: Vec<f64>,
    pub trajectory: Vec<TrajectoryPoint>,
    pub dist_init: Option<f64>,
    /// Sign-agnostic final error `min ‖β̂ ∓ β*‖`.
    pub dist_final: Option<f64>,
    /// `‖β̂ − β*‖`, reported for links whose sign is identifiable.
    pub dist_final_raw: Option<f64>,
}

impl RecoveryResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Writes `iteration,grad_norm,dist`; missing values are empty cells.
pub fn write_trajectory_csv<W: Write>(trajectory: &[TrajectoryPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "grad_norm", "dist"])?;
    let cell = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
    for p in trajectory {
        w.write_record([p.iteration.to_string(), cell(p.grad_norm), cell(p.dist)])?;
    }
    w.flush()?;
    Ok(())
}

/// Distance between unit vectors, sign-agnostic and raw.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Distance {
    pub min: f64,
    /// Present only for links that are not even-symmetric.
    pub raw: Option<f64>,
}

pub fn distance(beta: &[f64], beta_star: &[f64], even_symmetric: bool) -> Distance {
    let minus: f64 = beta
        .iter()
        .zip(beta_star)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let plus: f64 = beta
        .iter()
        .zip(beta_star)
        .map(|(a, b)| (a + b).powi(2))
        .sum::<f64>()
        .sqrt();
    Distance {
        min: minus.min(plus),
        raw: (!even_symmetric).then_some(minus),
    }
}

fn min_distance(beta: &[f64], beta_star: &[f64]) -> f64 {
    distance(beta, beta_star, true).min
}

/// Rows `y_j · x_j`.
pub fn response_weighted(view: SampleView<'_>, exec: Exec) -> Points {
    let (n, d) = (view.n(), view.d());
    let mut data = view.x.as_slice().to_vec();
    par::for_each_chunk_mut(exec, &mut data, CHUNK_ROWS * d.max(1), |c, block| {
        for (k, row) in block.chunks_exact_mut(d).enumerate() {
            let y = view.y[c * CHUNK_ROWS + k];
            row.iter_mut().for_each(|v| *v *= y);
        }
    });
    Points::new(n, d, data).expect("shape preserved")
}

/// Robust spectral initialization: robust top eigenvector of `{y_j x_j}`.
pub fn lrsi(ds: &Dataset, cfg: &RecoveryConfig) -> Result<Vec<f64>> {
    if ds.n() == 0 {
        return Err(invalid("LRSI on an empty dataset"));
    }
    let pts = response_weighted(ds.view(), cfg.filter.exec);
    robust_top_eigenvector(&pts, &cfg.init_filter())
}

/// Row `j` is `(f(x_jᵀβ) − y_j) f'(x_jᵀβ) x_j`.
pub fn gradient_points(view: SampleView<'_>, beta: &[f64], link: &LinkFunction) -> Points {
    gradient_points_with(view, beta, link, Exec::default())
}

pub fn gradient_points_with(view: SampleView<'_>, beta: &[f64], link: &LinkFunction, exec: Exec) -> Points {
    let (n, d) = (view.n(), view.d());
    let mut data = view.x.as_slice().to_vec();
    par::for_each_chunk_mut(exec, &mut data, CHUNK_ROWS * d.max(1), |c, block| {
        for (k, row) in block.chunks_exact_mut(d).enumerate() {
            let z = dot(row, beta);
            let w = ((link.f)(z) - view.y[c * CHUNK_ROWS + k]) * (link.d1)(z);
            row.iter_mut().for_each(|v| *v *= w);
        }
    });
    Points::new(n, d, data).expect("shape preserved")
}

/// Iterates of one LRGD run.
#[derive(Clone, Debug, PartialEq)]
pub struct LrgdOutput {
    /// `β_P / ‖β_P‖`.
    pub beta: Vec<f64>,
    /// `β_0, …, β_P`, unnormalized.
    pub iterates: Vec<Vec<f64>>,
    /// `‖g_0‖, …, ‖g_{P−1}‖`.
    pub grad_norms: Vec<f64>,
}

impl LrgdOutput {
    fn trajectory(&self, beta_star: Option<&[f64]>) -> Vec<TrajectoryPoint> {
        trajectory_of(&self.iterates, &self.grad_norms, beta_star)
    }
}

fn trajectory_of(iterates: &[Vec<f64>], grad_norms: &[f64], beta_star: Option<&[f64]>) -> Vec<TrajectoryPoint> {
    iterates
        .iter()
        .enumerate()
        .map(|(t, b)| TrajectoryPoint {
            iteration: t,
            grad_norm: grad_norms.get(t).copied(),
            dist: beta_star.map(|s| min_distance(b, s)),
        })
        .collect()
}

/// Robust gradient descent, one fresh bucket per step.
pub fn lrgd(buckets: &[Dataset], beta0: &[f64], cfg: &RecoveryConfig) -> Result<LrgdOutput> {
    lrgd_tracked(buckets, beta0, cfg, None)
}

fn lrgd_tracked(
    buckets: &[Dataset],
    beta0: &[f64],
    cfg: &RecoveryConfig,
    beta_star: Option<&[f64]>,
) -> Result<LrgdOutput> {
    cfg.validate()?;
    if buckets.len() != cfg.steps {
        return Err(invalid(format!(
            "LRGD needs P = {} buckets, got {}",
            cfg.steps,
            buckets.len()
        )));
    }
    let link = cfg.link();
    let eta = cfg.eta();
    let sigma_bound = cfg.sigma_bound();
    let mut beta = beta0.to_vec();
    let mut iterates = vec![beta.clone()];
    let mut grad_norms = Vec::with_capacity(cfg.steps);
    for (t, bucket) in buckets.iter().enumerate() {
        if bucket.d() != beta.len() {
            return Err(invalid("bucket dimension does not match beta0"));
        }
        let pts = gradient_points_with(bucket.view(), &beta, &link, cfg.filter.exec);
        let g = robust_mean(&pts, &cfg.filter, sigma_bound)?;
        grad_norms.push(norm2(&g));
        beta.iter_mut().zip(&g).for_each(|(b, gi)| *b -= eta * gi);
        iterates.push(beta.clone());
        if beta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteIterate {
                iteration: t + 1,
                trajectory: Box::new(trajectory_of(&iterates, &grad_norms, beta_star)),
            });
        }
    }
    let mut out = beta;
    normalize(&mut out);
    Ok(LrgdOutput {
        beta: out,
        iterates,
        grad_norms,
    })
}

/// Squared loss at `beta` averaged after dropping the largest `trim` fraction.
fn trimmed_loss(view: SampleView<'_>, beta: &[f64], link: &LinkFunction, trim: f64) -> f64 {
    let mut losses: Vec<f64> = view
        .x
        .iter_rows()
        .zip(view.y)
        .map(|(x, y)| ((link.f)(dot(x, beta)) - y).powi(2))
        .collect();
    let keep = losses.len() - ((trim * losses.len() as f64).ceil() as usize).min(losses.len() - 1);
    if keep < losses.len() {
        losses.select_nth_unstable_by(keep, f64::total_cmp);
    }
    losses[..keep].iter().sum::<f64>() / keep as f64
}

/// The full pipeline: `P + 1` buckets, LRSI on the first, LRGD on the rest.
pub fn recover(ds: &Dataset, cfg: &RecoveryConfig) -> Result<RecoveryResult> {
    run_pipeline(ds, cfg, 2.0 * cfg.filter.eps)
}

/// Same pipeline with plain PCA, untrimmed sign choice and plain-mean gradients.
pub fn baseline_erm(ds: &Dataset, cfg: &RecoveryConfig) -> Result<RecoveryResult> {
    run_pipeline(ds, &cfg.unfiltered(), 0.0)
}

fn run_pipeline(ds: &Dataset, cfg: &RecoveryConfig, trim: f64) -> Result<RecoveryResult> {
    cfg.validate()?;
    let buckets = cfg.steps + 1;
    if ds.n() < buckets * ds.d().max(1) {
        return Err(Error::TooFewSamples { n: ds.n(), buckets });
    }
    let parts = split_buckets(ds, buckets, ds.seed())?;
    let link = cfg.link();
    let mut beta0 = lrsi(&parts[0], cfg)?;
    if !link.even_symmetric {
        let flipped: Vec<f64> = beta0.iter().map(|v| -v).collect();
        let view = parts[0].view();
        if trimmed_loss(view, &flipped, &link, trim) < trimmed_loss(view, &beta0, &link, trim) {
            beta0 = flipped;
        }
    }
    let truth = ds.truth().map(|t| t.beta_star.as_slice());
    let out = lrgd_tracked(&parts[1..], &beta0, cfg, truth)?;
    let final_dist = truth.map(|s| distance(&out.beta, s, link.even_symmetric));
    Ok(RecoveryResult {
        trajectory: out.trajectory(truth),
        dist_init: truth.map(|s| min_distance(&beta0, s)),
        dist_final: final_dist.map(|d| d.min),
        dist_final_raw: final_dist.and_then(|d| d.raw),
        beta_hat: out.beta,
        beta0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{sample_clean, GroundTruth};
    use crate::link::LinkName;

    fn rule() -> QuadratureRule {
        QuadratureRule::default()
    }

    fn config(name: LinkName, sigma: f64, eps: f64) -> RecoveryConfig {
        let noise = NoiseModel::gaussian(sigma).unwrap();
        RecoveryConfig::new(&builtin(name), &noise, eps, &rule()).unwrap()
    }

    #[test]
    fn distance_examples() {
        let b = [0.6, 0.8];
        assert_eq!(
            distance(&b, &b, false),
            Distance {
                min: 0.0,
                raw: Some(0.0)
            }
        );
        let neg = [-0.6, -0.8];
        let d = distance(&neg, &b, false);
        assert_eq!(d.min, 0.0);
        assert!((d.raw.unwrap() - 2.0).abs() < 1e-15);
        let d = distance(&[0.8, -0.6], &b, true);
        assert!((d.min - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(d.raw, None);
    }

    #[test]
    fn gradient_point_arithmetic() {
        let x = Points::from_rows(&[[1.0, 0.0]]).unwrap();
        let view = SampleView { x: &x, y: &[0.0] };
        let g = gradient_points(view, &[1.0, 0.0], &builtin(LinkName::Square));
        assert_eq!(g.row(0), &[2.0, 0.0]);
    }

    #[test]
    fn gradient_rows_vanish_at_truth_without_noise() {
        for name in LinkName::ALL {
            let t = GroundTruth::random(4, name, NoiseModel::gaussian(0.0).unwrap(), 3);
            let ds = sample_clean(3000, 4, &t, 3).unwrap();
            let g = gradient_points(ds.view(), &t.beta_star, &builtin(name));
            assert!(g.as_slice().iter().all(|v| *v == 0.0), "{name}");
        }
    }

    #[test]
    fn default_steps_formula() {
        let cfg = config(LinkName::Gelu, 0.5, 0.05);
        let c = &cfg.constants;
        let want = ((c.alpha + c.gamma) / c.gamma * (2.0 * c.basin_radius / (0.5 * 0.05f64.sqrt())).ln()).ceil();
        assert_eq!(
            default_steps(c, 0.5, 0.05),
            (want.max(1.0) as usize).min(MAX_DEFAULT_STEPS)
        );
        assert_eq!(default_steps(c, 0.5, 0.0), MAX_DEFAULT_STEPS);
        assert_eq!(default_steps(c, 0.0, 0.1), MAX_DEFAULT_STEPS);
        let eta_sum = cfg.eta() * (c.alpha + c.gamma);
        assert!((eta_sum - 2.0).abs() < 1e-12);
    }

    #[test]
    fn init_constant_for_square_is_finite_and_sane() {
        let sq = builtin(LinkName::Square);
        // noiseless square: the ratio (10395c⁴ + 5670c²s² + 315s⁴)/(15c² + 3s²)²
        // peaks at 105/2 for θ = π/3
        let c = init_hypercontractivity(&sq, &NoiseModel::gaussian(0.0).unwrap(), &rule()).unwrap();
        assert!((c.powi(4) - 52.5).abs() < 1e-8, "{}", c.powi(4));
        let noisy = init_hypercontractivity(&sq, &NoiseModel::gaussian(0.5).unwrap(), &rule()).unwrap();
        assert!(noisy < c);
    }

    #[test]
    fn init_scale_matches_spectral_formula() {
        let cfg = config(LinkName::Gelu, 0.5, 0.05);
        let link = builtin(LinkName::Gelu);
        let ef2 = gauss_expect(|z| (link.f)(z).powi(2), 1.0, &rule()).unwrap();
        let want = 0.25 + ef2 + 2.0 * cfg.constants.esc;
        assert!((cfg.init_scale - want).abs() < 1e-12);
    }

    #[test]
    fn fixed_point_is_exact() {
        let cfg = config(LinkName::Tanh, 0.0, 0.0).with_steps(5);
        let t = GroundTruth::random(6, LinkName::Tanh, NoiseModel::gaussian(0.0).unwrap(), 1);
        let ds = sample_clean(6000, 6, &t, 1).unwrap();
        let buckets = split_buckets(&ds, 5, 2).unwrap();
        let out = lrgd(&buckets, &t.beta_star, &cfg).unwrap();
        assert!(out.iterates.iter().all(|b| b == &t.beta_star));
        assert!(out.grad_norms.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn clean_square_recovers() {
        let cfg = config(LinkName::Square, 0.1, 0.0).with_steps(10);
        let t = GroundTruth::random(5, LinkName::Square, NoiseModel::gaussian(0.1).unwrap(), 4);
        let ds = sample_clean(44_000, 5, &t, 4).unwrap();
        let res = recover(&ds, &cfg).unwrap();
        assert_eq!(res.trajectory.len(), 11);
        assert!(res.trajectory.last().unwrap().grad_norm.is_none());
        assert!((norm2(&res.beta_hat) - 1.0).abs() < 1e-12);
        assert!(res.dist_init.unwrap() < 0.1, "{res:?}");
        assert!(res.dist_final.unwrap() < 0.02, "{res:?}");
        assert!(res.dist_final_raw.is_none());
    }

    #[test]
    fn asymmetric_sign_is_resolved() {
        let cfg = config(LinkName::Gelu, 0.5, 0.0).with_steps(4);
        for seed in 0..3 {
            let t = GroundTruth::random(5, LinkName::Gelu, NoiseModel::gaussian(0.5).unwrap(), seed);
            let ds = sample_clean(50_000, 5, &t, seed).unwrap();
            let res = recover(&ds, &cfg).unwrap();
            assert!(dot(&res.beta0, &t.beta_star) > 0.0);
            assert!(res.dist_final_raw.unwrap() < 0.1);
        }
    }

    #[test]
    fn too_few_rows_rejected() {
        let cfg = config(LinkName::Gelu, 0.5, 0.0).with_steps(10);
        let t = GroundTruth::random(5, LinkName::Gelu, NoiseModel::gaussian(0.5).unwrap(), 0);
        let ds = sample_clean(50, 5, &t, 0).unwrap();
        assert!(matches!(recover(&ds, &cfg), Err(Error::TooFewSamples { .. })));
    }

    #[test]
    fn trajectory_csv_layout() {
        let traj = vec![
            TrajectoryPoint {
                iteration: 0,
                grad_norm: Some(0.5),
                dist: Some(0.1),
            },
            TrajectoryPoint {
                iteration: 1,
                grad_norm: None,
                dist: None,
            },
        ];
        let mut buf = Vec::new();
        write_trajectory_csv(&traj, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "iteration,grad_norm,dist\n0,0.5,0.1\n1,,\n"
        );
    }
}
