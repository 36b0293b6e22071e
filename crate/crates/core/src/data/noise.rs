use rand::Rng;
use rand_distr::{Distribution, Pareto, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Noise family; each is rescaled to variance `σ²`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    Gaussian,
    StudentT {
        nu: f64,
    },
    /// `R·P` with `R` a Rademacher sign and `P ~ Pareto(1, a)`.
    ScaledParetoSymmetrized {
        a: f64,
    },
}

impl NoiseKind {
    pub const DEFAULT_NU: f64 = 6.0;
}

/// Zero-mean noise with variance `σ²` and finite fourth moment `K₄⁴`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    kind: NoiseKind,
    sigma: f64,
}

impl NoiseModel {
    pub fn new(kind: NoiseKind, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(invalid(format!(
                "noise sigma must be finite and non-negative, got {sigma}"
            )));
        }
        match kind {
            NoiseKind::StudentT { nu } if !(nu > 4.0) => {
                return Err(invalid(format!(
                    "Student-t needs nu > 4 for a finite fourth moment, got {nu}"
                )))
            }
            NoiseKind::ScaledParetoSymmetrized { a } if !(a > 4.0) => {
                return Err(invalid(format!(
                    "Pareto needs a > 4 for a finite fourth moment, got {a}"
                )))
            }
            _ => {}
        }
        Ok(Self { kind, sigma })
    }

    pub fn gaussian(sigma: f64) -> Result<Self> {
        Self::new(NoiseKind::Gaussian, sigma)
    }

    pub fn student_t(nu: f64, sigma: f64) -> Result<Self> {
        Self::new(NoiseKind::StudentT { nu }, sigma)
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Kurtosis `E[ζ⁴]/σ⁴` of the unit-variance member of the family.
    pub fn kurtosis(&self) -> f64 {
        match self.kind {
            NoiseKind::Gaussian => 3.0,
            NoiseKind::StudentT { nu } => 3.0 * (nu - 2.0) / (nu - 4.0),
            NoiseKind::ScaledParetoSymmetrized { a } => (a - 2.0).powi(2) / (a * (a - 4.0)),
        }
    }

    pub fn fourth_moment(&self) -> f64 {
        self.kurtosis() * self.sigma.powi(4)
    }

    /// `K₄ = E[ζ⁴]^{1/4}`.
    pub fn k4(&self) -> f64 {
        self.kurtosis().powf(0.25) * self.sigma
    }

    pub(crate) fn sampler(&self) -> Result<NoiseSampler> {
        let s = self.sigma;
        Ok(match self.kind {
            NoiseKind::Gaussian => NoiseSampler::Gaussian { scale: s },
            NoiseKind::StudentT { nu } => NoiseSampler::StudentT {
                dist: StudentT::new(nu).map_err(|e| invalid(e.to_string()))?,
                scale: s * ((nu - 2.0) / nu).sqrt(),
            },
            NoiseKind::ScaledParetoSymmetrized { a } => NoiseSampler::Pareto {
                dist: Pareto::new(1.0, a).map_err(|e| invalid(e.to_string()))?,
                scale: s / (a / (a - 2.0)).sqrt(),
            },
        })
    }
}

pub(crate) enum NoiseSampler {
    Gaussian { scale: f64 },
    StudentT { dist: StudentT<f64>, scale: f64 },
    Pareto { dist: Pareto<f64>, scale: f64 },
}

impl Distribution<f64> for NoiseSampler {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            NoiseSampler::Gaussian { scale } => {
                if *scale == 0.0 {
                    return 0.0;
                }
                let z: f64 = StandardNormal.sample(rng);
                scale * z
            }
            NoiseSampler::StudentT { dist, scale } => {
                if *scale == 0.0 {
                    return 0.0;
                }
                scale * dist.sample(rng)
            }
            NoiseSampler::Pareto { dist, scale } => {
                if *scale == 0.0 {
                    return 0.0;
                }
                let p = dist.sample(rng);
                if rng.random::<bool>() {
                    scale * p
                } else {
                    -scale * p
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::stream_rng;

    fn moments(model: &NoiseModel, n: usize, seed: u64) -> (f64, f64, f64) {
        let s = model.sampler().unwrap();
        let mut rng = stream_rng(seed, 99, 0);
        let (mut m1, mut m2, mut m4) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let z = s.sample(&mut rng);
            m1 += z;
            m2 += z * z;
            m4 += z.powi(4);
        }
        let n = n as f64;
        (m1 / n, m2 / n, m4 / n)
    }

    #[test]
    fn rejects_infinite_fourth_moment() {
        assert!(NoiseModel::student_t(4.0, 1.0).is_err());
        assert!(NoiseModel::new(NoiseKind::ScaledParetoSymmetrized { a: 3.5 }, 1.0).is_err());
        assert!(NoiseModel::gaussian(-1.0).is_err());
    }

    #[test]
    fn k4_closed_forms() {
        let g = NoiseModel::gaussian(2.0).unwrap();
        assert!((g.k4() - 3f64.powf(0.25) * 2.0).abs() < 1e-15);
        let t = NoiseModel::student_t(6.0, 0.5).unwrap();
        assert!((t.k4() - 0.5 * 6f64.powf(0.25)).abs() < 1e-15);
        assert!(t.k4() >= t.sigma());
    }

    #[test]
    fn monte_carlo_moments() {
        let n = 1_000_000;
        let sigma = 0.7;
        let cases = [
            (NoiseModel::gaussian(sigma).unwrap(), true),
            (NoiseModel::student_t(6.0, sigma).unwrap(), false),
            (NoiseModel::student_t(10.0, sigma).unwrap(), true),
            (
                NoiseModel::new(NoiseKind::ScaledParetoSymmetrized { a: 10.0 }, sigma).unwrap(),
                true,
            ),
        ];
        for (k, (model, check_fourth)) in cases.iter().enumerate() {
            let (m1, m2, m4) = moments(model, n, k as u64);
            assert!(m1.abs() <= 4.0 * sigma / (n as f64).sqrt(), "{model:?} mean {m1}");
            assert!((m2 / (sigma * sigma) - 1.0).abs() <= 0.02, "{model:?} var {m2}");
            if *check_fourth {
                assert!((m4 / model.fourth_moment() - 1.0).abs() <= 0.05, "{model:?} m4 {m4}");
            }
        }
    }

    #[test]
    fn zero_sigma_is_silent() {
        let s = NoiseModel::student_t(6.0, 0.0).unwrap().sampler().unwrap();
        let mut rng = stream_rng(0, 0, 0);
        assert_eq!(s.sample(&mut rng), 0.0);
    }
}
