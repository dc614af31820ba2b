//! Simulation oracles with a known regression function and noise level.
//!
//! A ground truth is fitted once to a real (or synthetic) dataset. It then
//! serves as the true `f(x)` and `σ²(x)` from which any number of replicate
//! target vectors are drawn over fixed covariates.

mod forest;
mod synthetic;

use serde::{Deserialize, Serialize};

pub use forest::{fit_forest, ForestConfig, RandomForest, RegressionTree};
pub use synthetic::{synthetic_dataset, synthetic_header, SYNTHETIC_ROWS, SYNTHETIC_SEED};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::math::{Mat, RngStream};
use crate::network::{self, MlpConfig, NetworkParams, Standardizer};
use crate::noise::NoiseModel;

/// Lower bound on the true variance, original scale.
pub const SIGMA_SQ_FLOOR: f64 = 1e-6;
pub const TEST_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Simulator {
    /// Forest for `f`, second forest on squared residuals for `σ²`.
    Forest { f: RandomForest, sigma_sq: RandomForest },
    /// One mean-variance network trained on the data.
    Network {
        config: MlpConfig,
        params: NetworkParams,
        standardizer: Standardizer,
    },
}

impl Simulator {
    fn evaluate(&self, x: &Mat) -> Result<(Vec<f64>, Vec<f64>)> {
        match self {
            Simulator::Forest { f, sigma_sq } => Ok(x
                .iter_rows()
                .map(|r| (f.predict(r), sigma_sq.predict(r).max(SIGMA_SQ_FLOOR)))
                .unzip()),
            Simulator::Network {
                config,
                params,
                standardizer,
            } => {
                let z = standardizer.transform_x(x)?;
                let (m, v) = network::predict(params, config, &z);
                Ok(m.iter()
                    .zip(&v)
                    .map(|(&m, &v)| {
                        (
                            standardizer.inverse_mean(m),
                            standardizer.inverse_variance(v).max(SIGMA_SQ_FLOOR),
                        )
                    })
                    .unzip())
            }
        }
    }
}

/// Known `f`, `σ²` and noise model, with the covariates split once into a
/// training part (replicates are drawn there) and a test part (coverage is
/// measured there).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub simulator: Simulator,
    pub noise: NoiseModel,
    pub x_train: Mat,
    pub x_test: Mat,
    f_train: Vec<f64>,
    sigma_sq_train: Vec<f64>,
    f_test: Vec<f64>,
    sigma_sq_test: Vec<f64>,
}

impl GroundTruth {
    fn new(simulator: Simulator, noise: NoiseModel, data: &Dataset, rng: &RngStream) -> Result<Self> {
        let (train_idx, test_idx) = split_indices(data.len(), rng)?;
        let x_train = data.x.select_rows(&train_idx);
        let x_test = data.x.select_rows(&test_idx);
        let (f_train, sigma_sq_train) = simulator.evaluate(&x_train)?;
        let (f_test, sigma_sq_test) = simulator.evaluate(&x_test)?;
        if f_train.iter().chain(&f_test).any(|v| !v.is_finite()) {
            return Err(Error::invalid("simulator produced non-finite values"));
        }
        Ok(GroundTruth {
            simulator,
            noise,
            x_train,
            x_test,
            f_train,
            sigma_sq_train,
            f_test,
            sigma_sq_test,
        })
    }

    /// `(f(x), σ²(x))` at arbitrary inputs.
    pub fn evaluate(&self, x: &Mat) -> Result<(Vec<f64>, Vec<f64>)> {
        if x.cols() != self.x_train.cols() {
            return Err(Error::shape("input dimension differs from ground truth"));
        }
        self.simulator.evaluate(x)
    }

    pub fn f_train(&self) -> &[f64] {
        &self.f_train
    }

    pub fn sigma_sq_train(&self) -> &[f64] {
        &self.sigma_sq_train
    }

    pub fn f_test(&self) -> &[f64] {
        &self.f_test
    }

    pub fn sigma_sq_test(&self) -> &[f64] {
        &self.sigma_sq_test
    }

    /// Same simulator on a different noise model.
    pub fn with_noise(&self, noise: NoiseModel) -> GroundTruth {
        GroundTruth {
            noise,
            ..self.clone()
        }
    }
}

/// Random 90/10 split of row indices, each part kept in ascending order.
fn split_indices(n: usize, rng: &RngStream) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 4 {
        return Err(Error::invalid("need at least four rows to split"));
    }
    let n_test = ((n as f64 * TEST_FRACTION).round() as usize).max(1);
    let mut idx: Vec<usize> = (0..n).collect();
    rng.derive("split", 0).shuffle(&mut idx);
    let mut test = idx[..n_test].to_vec();
    let mut train = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

/// Forest ground truth: `f` is a forest on `(X, Y)`, `σ²` a second forest
/// on the squared in-sample residuals, floored at [`SIGMA_SQ_FLOOR`].
pub fn build_ground_truth_rf(
    data: &Dataset,
    forest: &ForestConfig,
    noise: NoiseModel,
    rng: &RngStream,
) -> Result<GroundTruth> {
    let f = fit_forest(data, forest, &rng.derive("forest-f", 0))?;
    let sq_resid: Vec<f64> = data
        .x
        .iter_rows()
        .zip(&data.y)
        .map(|(x, y)| (y - f.predict(x)).powi(2))
        .collect();
    let sigma_sq = fit_forest(&data.with_targets(sq_resid)?, forest, &rng.derive("forest-var", 0))?;
    GroundTruth::new(Simulator::Forest { f, sigma_sq }, noise, data, rng)
}

/// Network ground truth: one mean-variance network trained on the
/// standardized data supplies `f` and `σ²`.
pub fn build_ground_truth_nn(
    data: &Dataset,
    net: &MlpConfig,
    noise: NoiseModel,
    rng: &RngStream,
) -> Result<GroundTruth> {
    let standardizer = Standardizer::fit(data)?;
    let z = standardizer.transform(data)?;
    let (params, _) = network::train(net, &z, &rng.derive("simulator-net", 0), None)?;
    let simulator = Simulator::Network {
        config: net.clone(),
        params,
        standardizer,
    };
    GroundTruth::new(simulator, noise, data, rng)
}

/// One simulated dataset: new training targets and new test targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Replicate {
    pub train: Dataset,
    pub y_test: Vec<f64>,
}

/// `y = f(x) + C·σ(x)·ε` at the fixed training and test covariates.
pub fn simulate_replicate(gt: &GroundTruth, rng: &RngStream) -> Result<Replicate> {
    let sampler = gt.noise.sampler();
    let draw = |f: &[f64], s2: &[f64], rng: &mut RngStream| -> Vec<f64> {
        f.iter().zip(s2).map(|(f, s2)| f + s2.sqrt() * sampler.sample(rng)).collect()
    };
    let y_train = draw(&gt.f_train, &gt.sigma_sq_train, &mut rng.derive("train-targets", 0));
    let y_test = draw(&gt.f_test, &gt.sigma_sq_test, &mut rng.derive("test-targets", 0));
    Ok(Replicate {
        train: Dataset::new(gt.x_train.clone(), y_train)?,
        y_test,
    })
}
