//! Synthetic single-index data: Gaussian design, heavy-tailed noise,
//! adversarial corruption and bucket splitting.
//!
//! Every random draw comes from a ChaCha stream keyed by `(seed, operation)`
//! and indexed by row block, so sampling and corruption are reproducible
//! independently of each other and of the execution policy.

mod io;
mod noise;

pub use io::{load, read_binary, read_csv, save, write_binary, write_csv, BINARY_MAGIC};
pub use noise::{NoiseKind, NoiseModel};

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, normalize, random_unit, Points};
use crate::link::{builtin, LinkFunction, LinkName};
use crate::par::{self, Exec};

/// Operation tags for the keyed random streams.
pub(crate) mod stream {
    pub const TRUTH: u64 = 1;
    pub const SAMPLE: u64 = 2;
    pub const CORRUPT: u64 = 3;
    pub const DIRECTION: u64 = 4;
    pub const SPLIT: u64 = 5;
    pub const MONTE_CARLO: u64 = 6;
}

/// Counter-based generator for `(seed, op)`, positioned on block `block`.
pub fn stream_rng(seed: u64, op: u64, block: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&op.to_le_bytes());
    key[16..24].copy_from_slice(b"simrobst");
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(block);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub beta_star: Vec<f64>,
    pub link: LinkName,
    pub noise: NoiseModel,
}

impl GroundTruth {
    pub fn new(beta_star: Vec<f64>, link: LinkName, noise: NoiseModel) -> Result<Self> {
        let norm = dot(&beta_star, &beta_star).sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("beta_star must be unit norm, got {norm}")));
        }
        Ok(Self { beta_star, link, noise })
    }

    /// Uniformly random unit β* drawn from `seed`.
    pub fn random(d: usize, link: LinkName, noise: NoiseModel, seed: u64) -> Self {
        let mut rng = stream_rng(seed, stream::TRUTH, 0);
        let mut beta = random_unit(d, &mut rng);
        // exact unit norm after rounding
        normalize(&mut beta);
        Self {
            beta_star: beta,
            link,
            noise,
        }
    }

    pub fn sigma(&self) -> f64 {
        self.noise.sigma()
    }

    pub fn link_fn(&self) -> LinkFunction {
        builtin(self.link)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversaryKind {
    None,
    LabelFlip,
    PointMass,
    Leverage,
    Mixed,
}

/// Strategy used by the strong adversary to rewrite its `⌊εn⌋` rows.
///
/// * `label_flip`: `y ↦ −y`.
/// * `point_mass`: every corrupted row becomes `(x, y) = (m·v, m)` for a unit
///   `v ⟂ β*` drawn from `direction_seed`.
/// * `leverage`: `x ↦ m·x`, `y ↦ m`.
/// * `mixed`: the first half of the corrupted rows get `point_mass`, the rest
///   `label_flip`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdversaryModel {
    pub kind: AdversaryKind,
    #[serde(default = "default_magnitude")]
    pub magnitude: f64,
    #[serde(default)]
    pub direction_seed: u64,
}

fn default_magnitude() -> f64 {
    100.0
}

impl AdversaryModel {
    pub fn none() -> Self {
        Self {
            kind: AdversaryKind::None,
            magnitude: 0.0,
            direction_seed: 0,
        }
    }

    pub fn new(kind: AdversaryKind, magnitude: f64, direction_seed: u64) -> Self {
        Self {
            kind,
            magnitude,
            direction_seed,
        }
    }

    /// Unit direction orthogonal to `beta_star` used by planted rows.
    pub fn direction(&self, beta_star: &[f64]) -> Vec<f64> {
        let mut rng = stream_rng(self.direction_seed, stream::DIRECTION, 0);
        loop {
            let mut v = random_unit(beta_star.len(), &mut rng);
            let proj = dot(&v, beta_star);
            v.iter_mut().zip(beta_star).for_each(|(a, b)| *a -= proj * b);
            if normalize(&mut v) > 1e-6 {
                return v;
            }
        }
    }
}

impl Default for AdversaryModel {
    fn default() -> Self {
        Self::none()
    }
}

/// Samples with their diagnostics. Estimators only ever see [`SampleView`].
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    covariates: Points,
    responses: Vec<f64>,
    corrupted_mask: Vec<bool>,
    row_ids: Vec<usize>,
    truth: Option<GroundTruth>,
    seed: u64,
}

/// The part of a dataset an estimator may read: covariates and responses.
#[derive(Clone, Copy, Debug)]
pub struct SampleView<'a> {
    pub x: &'a Points,
    pub y: &'a [f64],
}

impl SampleView<'_> {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.x.cols()
    }
}

impl Dataset {
    /// Assembles a dataset from raw parts; the mask starts all clean.
    pub fn from_parts(covariates: Points, responses: Vec<f64>, truth: Option<GroundTruth>, seed: u64) -> Result<Self> {
        if covariates.rows() != responses.len() {
            return Err(invalid(format!(
                "{} covariate rows but {} responses",
                covariates.rows(),
                responses.len()
            )));
        }
        if let Some(t) = &truth {
            if t.beta_star.len() != covariates.cols() {
                return Err(invalid("beta_star dimension does not match covariates"));
            }
        }
        let n = responses.len();
        Ok(Self {
            covariates,
            responses,
            corrupted_mask: vec![false; n],
            row_ids: (0..n).collect(),
            truth,
            seed,
        })
    }

    pub(crate) fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.n() {
            return Err(invalid("mask length mismatch"));
        }
        self.corrupted_mask = mask;
        Ok(self)
    }

    pub fn view(&self) -> SampleView<'_> {
        SampleView {
            x: &self.covariates,
            y: &self.responses,
        }
    }

    pub fn n(&self) -> usize {
        self.responses.len()
    }

    pub fn d(&self) -> usize {
        self.covariates.cols()
    }

    pub fn covariates(&self) -> &Points {
        &self.covariates
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    /// Diagnostic only: which rows the adversary rewrote.
    pub fn corrupted_mask(&self) -> &[bool] {
        &self.corrupted_mask
    }

    pub fn corrupted_count(&self) -> usize {
        self.corrupted_mask.iter().filter(|&&c| c).count()
    }

    /// Row indices in the dataset this one was drawn from.
    pub fn row_ids(&self) -> &[usize] {
        &self.row_ids
    }

    pub fn truth(&self) -> Option<&GroundTruth> {
        self.truth.as_ref()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            covariates: self.covariates.select(idx),
            responses: idx.iter().map(|&i| self.responses[i]).collect(),
            corrupted_mask: idx.iter().map(|&i| self.corrupted_mask[i]).collect(),
            row_ids: idx.iter().map(|&i| self.row_ids[i]).collect(),
            truth: self.truth.clone(),
            seed: self.seed,
        }
    }
}

/// Draws `n` clean rows `x ~ N(0, I_d)`, `y = f(xᵀβ*) + ζ`.
pub fn sample_clean(n: usize, d: usize, truth: &GroundTruth, seed: u64) -> Result<Dataset> {
    sample_clean_with(n, d, truth, seed, Exec::default())
}

pub fn sample_clean_with(n: usize, d: usize, truth: &GroundTruth, seed: u64, exec: Exec) -> Result<Dataset> {
    if n < 1 || d < 2 {
        return Err(invalid(format!("need n >= 1 and d >= 2, got n={n}, d={d}")));
    }
    if truth.beta_star.len() != d {
        return Err(invalid("beta_star dimension does not match d"));
    }
    let link = truth.link_fn();
    let noise = truth.noise.sampler()?;
    let beta = &truth.beta_star;
    let mut x = vec![0.0; n * d];
    let mut y = vec![0.0; n];
    par::for_each_row_block(exec, &mut x, &mut y, d, |block, xs, ys| {
        let mut rng = stream_rng(seed, stream::SAMPLE, block as u64);
        for (row, yi) in xs.chunks_exact_mut(d).zip(ys.iter_mut()) {
            for v in row.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            *yi = (link.f)(dot(row, beta)) + noise.sample(&mut rng);
        }
    });
    Dataset::from_parts(Points::new(n, d, x)?, y, Some(truth.clone()), seed)
}

/// Number of rows an adversary with budget `eps` rewrites: `⌊εn⌋`.
pub fn corruption_budget(eps: f64, n: usize) -> usize {
    ((eps * n as f64) + 1e-9).floor() as usize
}

/// Lets the adversary rewrite `⌊εn⌋` rows.
pub fn corrupt(ds: Dataset, eps: f64, adversary: &AdversaryModel, seed: u64) -> Result<Dataset> {
    if !(0.0..0.5).contains(&eps) {
        return Err(Error::EpsOutOfRange(eps));
    }
    if adversary.kind == AdversaryKind::None || eps == 0.0 {
        return Ok(ds);
    }
    let truth = ds.truth.clone().ok_or(Error::MissingTruth)?;
    let n = ds.n();
    let k = corruption_budget(eps, n);
    let mut rng = stream_rng(seed, stream::CORRUPT, 0);
    let mut rows = index::sample(&mut rng, n, k).into_vec();
    rows.sort_unstable();
    // shuffle so the mixed strategy's halves are not position-biased
    rows.shuffle(&mut rng);
    let v = adversary.direction(&truth.beta_star);
    let m = adversary.magnitude;
    let mut ds = ds;
    let plant = |ds: &mut Dataset, i: usize| {
        ds.covariates
            .row_mut(i)
            .iter_mut()
            .zip(&v)
            .for_each(|(x, vj)| *x = m * vj);
        ds.responses[i] = m;
    };
    for (j, &i) in rows.iter().enumerate() {
        match adversary.kind {
            AdversaryKind::None => unreachable!(),
            AdversaryKind::LabelFlip => ds.responses[i] = -ds.responses[i],
            AdversaryKind::PointMass => plant(&mut ds, i),
            AdversaryKind::Leverage => {
                ds.covariates.row_mut(i).iter_mut().for_each(|x| *x *= m);
                ds.responses[i] = m;
            }
            AdversaryKind::Mixed => {
                if j < k / 2 {
                    plant(&mut ds, i);
                } else {
                    ds.responses[i] = -ds.responses[i];
                }
            }
        }
        ds.corrupted_mask[i] = true;
    }
    Ok(ds)
}

/// Uniformly random partition into `buckets` equal parts; the `n mod buckets`
/// leftover rows are dropped.
pub fn split_buckets(ds: &Dataset, buckets: usize, seed: u64) -> Result<Vec<Dataset>> {
    if buckets < 2 {
        return Err(invalid(format!("need at least two buckets, got {buckets}")));
    }
    let n = ds.n();
    if n < buckets {
        return Err(Error::TooFewSamples { n, buckets });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut stream_rng(seed, stream::SPLIT, 0));
    let size = n / buckets;
    Ok(perm
        .chunks_exact(size)
        .take(buckets)
        .map(|chunk| {
            let mut idx = chunk.to_vec();
            idx.sort_unstable();
            ds.subset(&idx)
        })
        .collect())
}

/// Everything needed to regenerate one corrupted dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n: usize,
    pub d: usize,
    pub link: LinkName,
    pub sigma: f64,
    #[serde(default)]
    pub noise: NoiseKind,
    #[serde(default)]
    pub eps: f64,
    #[serde(default)]
    pub adversary: AdversaryModel,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn noise_model(&self) -> Result<NoiseModel> {
        NoiseModel::new(self.noise, self.sigma)
    }

    pub fn truth(&self) -> Result<GroundTruth> {
        Ok(GroundTruth::random(self.d, self.link, self.noise_model()?, self.seed))
    }

    /// Clean sample, then corruption at `self.eps`.
    pub fn simulate(&self, exec: Exec) -> Result<Dataset> {
        self.simulate_at(self.eps, self.seed, exec)
    }

    /// Same scenario with a different contamination level and data seed.
    pub fn simulate_at(&self, eps: f64, seed: u64, exec: Exec) -> Result<Dataset> {
        let truth = GroundTruth::random(self.d, self.link, self.noise_model()?, seed);
        let ds = sample_clean_with(self.n, self.d, &truth, seed, exec)?;
        corrupt(ds, eps, &self.adversary, seed)
    }
}
