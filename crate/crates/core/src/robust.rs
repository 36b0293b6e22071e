//! Filtered robust mean and robust top-eigenvector estimation.
//!
//! Both estimators work on a shrinking set of active rows. Each round does two
//! kinds of hard removal along the current top direction `u`:
//!
//! * pruning: rows whose score is implausible under the clean model (Chebyshev
//!   bound with tail mass `ε / prune_divisor`) are dropped outright;
//! * tail removal: when no row is implausible but the stopping test still
//!   fails, the `tail_removal_fraction` of rows with the largest scores are
//!   dropped.
//!
//! The mean filter stops as soon as its eigenvalue test passes; the
//! eigenvector filter prunes before consulting its fourth-moment certificate.
//!
//! The loops cost `O(rounds · n · d)`. More than `4εn` removed rows is reported
//! as [`Error::FilterCollapse`].

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, mean_of, operator_norm, scatter_of, second_moment, Points, PowerOptions};
use crate::par::{self, Exec, CHUNK_ROWS};

/// Gaussian hypercontractivity constant, `E[z⁴]^{1/4} / E[z²]^{1/2} = 3^{1/4}`.
pub fn gaussian_c4() -> f64 {
    3f64.powf(0.25)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Contamination fraction the filter defends against; `0` disables it.
    pub eps: f64,
    pub delta: f64,
    pub max_rounds: usize,
    /// Fraction of active rows dropped per tail-removal step; `None` means `ε/2`.
    pub tail_removal_fraction: Option<f64>,
    /// Mean filter stops once `λ_max ≤ multiplier · σ_b²`.
    pub score_threshold_multiplier: f64,
    /// Eigenvector filter accepts `E[s²] ≤ C₄⁴ · E[s]² · (1 + slack)`.
    pub certificate_slack: f64,
    /// Hypercontractivity constant of the clean rows.
    pub c4: f64,
    /// Pruning keeps the clean tail mass removed per round below `ε / divisor`.
    pub prune_divisor: f64,
    /// Upper bound on `E⟨u, x⟩²` over unit `u` for clean rows. The eigenvector
    /// filter otherwise estimates the scale by a trimmed mean, which is biased
    /// low for heavy-tailed rows.
    #[serde(default)]
    pub scale_bound: Option<f64>,
    pub power: PowerOptions,
    #[serde(default)]
    pub exec: Exec,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            eps: 0.05,
            delta: 0.05,
            max_rounds: 10,
            tail_removal_fraction: None,
            score_threshold_multiplier: 9.0,
            certificate_slack: 1.5,
            c4: gaussian_c4(),
            prune_divisor: 4.0,
            scale_bound: None,
            power: PowerOptions::default(),
            exec: Exec::default(),
        }
    }
}

impl FilterConfig {
    pub fn with_eps(eps: f64) -> Self {
        Self { eps, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.2).contains(&self.eps) {
            return Err(invalid(format!("filter eps must lie in [0, 0.2], got {}", self.eps)));
        }
        if self.max_rounds < 1 {
            return Err(invalid("filter needs max_rounds >= 1"));
        }
        let tail = self.tail_fraction();
        if self.eps > 0.0 && !(tail > 0.0 && tail <= 2.0 * self.eps) {
            return Err(invalid(format!("tail_removal_fraction {tail} outside (0, 2·eps]")));
        }
        if !(self.score_threshold_multiplier > 0.0 && self.c4 > 0.0 && self.prune_divisor > 0.0) {
            return Err(invalid("filter multipliers must be positive"));
        }
        if self.scale_bound.is_some_and(|b| !(b > 0.0 && b.is_finite())) {
            return Err(invalid("scale bound must be positive and finite"));
        }
        if !(self.certificate_slack >= 0.0) {
            return Err(invalid("certificate slack must be non-negative"));
        }
        Ok(())
    }

    pub fn tail_fraction(&self) -> f64 {
        self.tail_removal_fraction.unwrap_or(self.eps / 2.0)
    }

    /// Maximum number of rows the filter may discard out of `n`.
    pub fn budget(&self, n: usize) -> usize {
        (4.0 * self.eps * n as f64 + 1e-9).floor() as usize
    }

    fn is_active(&self) -> bool {
        self.eps > 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundAction {
    Accepted,
    Pruned,
    TailRemoved,
    /// Filter disabled (`ε = 0`) or round limit reached.
    Stopped,
}

/// Diagnostics for one filtering round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub round: usize,
    pub active: usize,
    pub removed: usize,
    pub top_eigenvalue: f64,
    /// `λ_max / σ_b²` for the mean filter, `E[s²]/E[s]²` for the eigenvector filter.
    pub certificate: f64,
    pub threshold: f64,
    pub action: RoundAction,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterOutcome {
    pub estimate: Vec<f64>,
    /// Indices of the rows that survived, ascending.
    pub retained: Vec<usize>,
    pub trace: Vec<RoundTrace>,
}

impl FilterOutcome {
    pub fn removed(&self, n: usize) -> usize {
        n - self.retained.len()
    }
}

/// Robust estimate of the mean of rows whose clean covariance is at most
/// `sigma_bound² · I`.
///
/// Error guarantees were checked for `n ≥ 10·d/ε`.
pub fn robust_mean(points: &Points, cfg: &FilterConfig, sigma_bound: f64) -> Result<Vec<f64>> {
    robust_mean_traced(points, cfg, sigma_bound).map(|o| o.estimate)
}

pub fn robust_mean_traced(points: &Points, cfg: &FilterConfig, sigma_bound: f64) -> Result<FilterOutcome> {
    cfg.validate()?;
    if points.rows() == 0 {
        return Err(invalid("robust mean of an empty point set"));
    }
    if !(sigma_bound > 0.0 && sigma_bound.is_finite()) {
        return Err(invalid(format!("sigma_bound must be positive, got {sigma_bound}")));
    }
    let n = points.rows();
    let exec = cfg.exec;
    let var_bound = sigma_bound * sigma_bound;
    let threshold = cfg.score_threshold_multiplier * var_bound;
    let prune_cut = if cfg.is_active() {
        cfg.prune_divisor * var_bound / cfg.eps
    } else {
        f64::INFINITY
    };
    let mut active: Vec<usize> = (0..n).collect();
    let mut trace = Vec::new();

    for round in 0..cfg.max_rounds {
        let mu = mean_of(points, &active, exec);
        let cov = scatter_of(points, &active, Some(&mu), exec);
        let (lambda, u) = cov.top_eigenpair(cfg.power);
        let mut rec = RoundTrace {
            round,
            active: active.len(),
            removed: 0,
            top_eigenvalue: lambda,
            certificate: lambda / var_bound,
            threshold: cfg.score_threshold_multiplier,
            action: RoundAction::Accepted,
        };
        if lambda <= threshold || !cfg.is_active() {
            if lambda > threshold {
                rec.action = RoundAction::Stopped;
            }
            trace.push(rec);
            return Ok(FilterOutcome {
                estimate: mu,
                retained: active,
                trace,
            });
        }
        let proj = projections(points, &active, &u, exec);
        let med = median(&proj);
        let before = active.len();
        let kept: Vec<usize> = active
            .iter()
            .zip(&proj)
            .filter(|(_, p)| (*p - med).powi(2) <= prune_cut)
            .map(|(&i, _)| i)
            .collect();
        if kept.len() < before {
            rec.action = RoundAction::Pruned;
            active = kept;
        } else {
            let m = dot(&mu, &u);
            let scores: Vec<f64> = proj.iter().map(|p| (p - m).powi(2)).collect();
            active = drop_largest(&active, &scores, cfg.tail_fraction());
            rec.action = RoundAction::TailRemoved;
        }
        rec.removed = before - active.len();
        trace.push(rec);
        check_budget(cfg, n, active.len())?;
    }
    let mu = mean_of(points, &active, exec);
    if let Some(last) = trace.last_mut() {
        last.action = RoundAction::Stopped;
    }
    Ok(FilterOutcome {
        estimate: mu,
        retained: active,
        trace,
    })
}

/// Robust top eigenvector of the second moment of rows whose clean
/// distribution is `(4, cfg.c4)`-hypercontractive. Returns a unit vector with
/// the sign fixed so that its largest-magnitude entry is positive.
pub fn robust_top_eigenvector(points: &Points, cfg: &FilterConfig) -> Result<Vec<f64>> {
    robust_top_eigenvector_traced(points, cfg).map(|o| o.estimate)
}

pub fn robust_top_eigenvector_traced(points: &Points, cfg: &FilterConfig) -> Result<FilterOutcome> {
    cfg.validate()?;
    if points.rows() == 0 {
        return Err(invalid("top eigenvector of an empty point set"));
    }
    let n = points.rows();
    let exec = cfg.exec;
    let c4_sq = cfg.c4 * cfg.c4;
    let bound = c4_sq * c4_sq * (1.0 + cfg.certificate_slack);
    let mut active: Vec<usize> = (0..n).collect();
    let mut trace = Vec::new();

    for round in 0..=cfg.max_rounds {
        let m = scatter_of(points, &active, None, exec);
        let (lambda, mut u) = m.top_eigenpair(cfg.power);
        canonical_sign(&mut u);
        let scores: Vec<f64> = projections(points, &active, &u, exec)
            .into_iter()
            .map(|p| p * p)
            .collect();
        let len = scores.len() as f64;
        let m2 = scores.iter().sum::<f64>() / len;
        let m4 = scores.iter().map(|s| s * s).sum::<f64>() / len;
        let cert = if m2 > 0.0 { m4 / (m2 * m2) } else { 0.0 };
        let mut rec = RoundTrace {
            round,
            active: active.len(),
            removed: 0,
            top_eigenvalue: lambda,
            certificate: cert,
            threshold: bound,
            action: RoundAction::Accepted,
        };
        if !cfg.is_active() || round == cfg.max_rounds {
            if cert > bound {
                rec.action = RoundAction::Stopped;
            }
            trace.push(rec);
            return Ok(FilterOutcome {
                estimate: u,
                retained: active,
                trace,
            });
        }
        // A point mass of weight ε has score kurtosis near 1/ε, which can sit
        // below the certificate bound, so pruning runs before the certificate.
        let typical = cfg.scale_bound.unwrap_or_else(|| trimmed_mean(&scores, 2.0 * cfg.eps));
        let cut = c4_sq * typical * (cfg.prune_divisor / cfg.eps).sqrt();
        let before = active.len();
        let kept: Vec<usize> = active
            .iter()
            .zip(&scores)
            .filter(|(_, s)| **s <= cut)
            .map(|(&i, _)| i)
            .collect();
        if kept.len() < before {
            rec.action = RoundAction::Pruned;
            active = kept;
        } else if cert <= bound {
            trace.push(rec);
            return Ok(FilterOutcome {
                estimate: u,
                retained: active,
                trace,
            });
        } else {
            active = drop_largest(&active, &scores, cfg.tail_fraction());
            rec.action = RoundAction::TailRemoved;
        }
        rec.removed = before - active.len();
        trace.push(rec);
        check_budget(cfg, n, active.len())?;
    }
    unreachable!("the final round always returns")
}

/// `⟨uuᵀ, Σ̂⟩ / λ_max(Σ̂)` for the empirical second moment `Σ̂` of `points`.
pub fn energy_ratio(u: &[f64], points: &Points) -> f64 {
    let m = second_moment(points, Exec::default());
    let top = operator_norm(&m);
    if top == 0.0 {
        return 0.0;
    }
    (m.energy(u) / top).clamp(0.0, 1.0)
}

fn check_budget(cfg: &FilterConfig, n: usize, active: usize) -> Result<()> {
    let removed = n - active;
    let budget = cfg.budget(n);
    if removed > budget || active == 0 {
        return Err(Error::FilterCollapse { removed, budget });
    }
    Ok(())
}

fn projections(points: &Points, idx: &[usize], u: &[f64], exec: Exec) -> Vec<f64> {
    par::map_chunks(exec, idx.len(), CHUNK_ROWS, |r| {
        idx[r].iter().map(|&i| dot(points.row(i), u)).collect::<Vec<_>>()
    })
    .concat()
}

/// Flips `u` so its largest-magnitude coordinate is positive.
fn canonical_sign(u: &mut [f64]) {
    let pivot = u
        .iter()
        .copied()
        .fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
    if pivot < 0.0 {
        u.iter_mut().for_each(|v| *v = -*v);
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    let mid = v.len() / 2;
    let (_, m, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *m;
    if v.len() % 2 == 1 {
        return upper;
    }
    let lower = v[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    0.5 * (lower + upper)
}

/// Mean after discarding the largest `frac` of the values.
fn trimmed_mean(values: &[f64], frac: f64) -> f64 {
    let drop = ((frac * values.len() as f64).ceil() as usize).min(values.len().saturating_sub(1));
    let keep = values.len() - drop;
    let mut v = values.to_vec();
    if drop > 0 {
        v.select_nth_unstable_by(keep, f64::total_cmp);
    }
    v[..keep].iter().sum::<f64>() / keep as f64
}

/// Drops the `⌈frac · len⌉` entries of `idx` with the largest scores (at least
/// one), keeping the survivors in their original order.
fn drop_largest(idx: &[usize], scores: &[f64], frac: f64) -> Vec<usize> {
    let k = ((frac * idx.len() as f64).ceil() as usize).clamp(1, idx.len());
    let mut order: Vec<usize> = (0..idx.len()).collect();
    order.select_nth_unstable_by(idx.len() - k, |&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let mut keep = order[..idx.len() - k].to_vec();
    keep.sort_unstable();
    keep.into_iter().map(|j| idx[j]).collect()
}
