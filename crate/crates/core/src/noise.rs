//! Additive noise models for simulated targets, `y = f(x) + C·σ(x)·ε`.

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{self, normal_cdf, student_t_cdf, RngStream};

pub const GAMMA_NOISE_SHAPE: f64 = 0.1;
pub const GAMMA_NOISE_SCALE: f64 = 3.162_277_660_168_379_5; // sqrt(10)

/// Distribution of the standardized noise `ε`.
///
/// * `Gaussian`: `ε ~ N(0, 1)`, `C = 1`.
/// * `StudentT3`: `ε ~ t(3)`, `C = sqrt(1/3)` so that `Var(Cε) = 1`.
/// * `Gamma`: `ε ~ Γ(1/10, sqrt(10))` shifted by its mean, `C = 1`; the
///   variance is already `shape · scale² = 1`, the skewness is `2/sqrt(0.1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NoiseModel {
    #[default]
    Gaussian,
    #[serde(rename = "t3")]
    StudentT3,
    Gamma,
}

impl NoiseModel {
    pub fn scale_constant(self) -> f64 {
        match self {
            NoiseModel::Gaussian | NoiseModel::Gamma => 1.0,
            NoiseModel::StudentT3 => (1.0f64 / 3.0).sqrt(),
        }
    }

    fn gamma_mean() -> f64 {
        GAMMA_NOISE_SHAPE * GAMMA_NOISE_SCALE
    }

    pub fn sampler(self) -> NoiseSampler {
        NoiseSampler {
            model: self,
            gamma: Gamma::new(GAMMA_NOISE_SHAPE, GAMMA_NOISE_SCALE).expect("valid constants"),
            chi2_3: Gamma::new(1.5, 2.0).expect("valid constants"),
        }
    }

    /// CDF of the noise term `C·σ·ε` at `z`.
    pub fn cdf(self, sigma: f64, z: f64) -> Result<f64> {
        if !(sigma > 0.0) {
            return Err(Error::invalid(format!("noise scale {sigma} must be positive")));
        }
        let u = z / (self.scale_constant() * sigma);
        Ok(match self {
            NoiseModel::Gaussian => normal_cdf(u),
            NoiseModel::StudentT3 => student_t_cdf(3.0, u),
            NoiseModel::Gamma => {
                let raw = u + Self::gamma_mean();
                if raw <= 0.0 {
                    0.0
                } else {
                    math::gamma_cdf(GAMMA_NOISE_SHAPE, GAMMA_NOISE_SCALE, raw)
                }
            }
        })
    }
}

/// Free-function form of [`NoiseModel::cdf`].
pub fn noise_cdf(model: NoiseModel, ground_sigma: f64, z: f64) -> Result<f64> {
    model.cdf(ground_sigma, z)
}

impl fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseModel::Gaussian => "gaussian",
            NoiseModel::StudentT3 => "t3",
            NoiseModel::Gamma => "gamma",
        })
    }
}

impl FromStr for NoiseModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" | "normal" => Ok(NoiseModel::Gaussian),
            "t3" | "student_t3" => Ok(NoiseModel::StudentT3),
            "gamma" => Ok(NoiseModel::Gamma),
            other => Err(Error::invalid(format!("unknown noise model `{other}`"))),
        }
    }
}

/// Draws `C·ε` for one noise model.
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    model: NoiseModel,
    gamma: Gamma<f64>,
    chi2_3: Gamma<f64>,
}

impl NoiseSampler {
    /// One draw of the scaled, zero-mean noise `C·ε` (unit variance).
    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        match self.model {
            NoiseModel::Gaussian => rng.standard_normal(),
            NoiseModel::StudentT3 => {
                let z = rng.standard_normal();
                let c = self.chi2_3.sample(rng);
                self.model.scale_constant() * z / (c / 3.0).sqrt()
            }
            NoiseModel::Gamma => self.gamma.sample(rng) - NoiseModel::gamma_mean(),
        }
    }
}
