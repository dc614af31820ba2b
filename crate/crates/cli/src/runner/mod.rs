//! Experiment runners. Each writes a manifest, a `summary.json` and CSV
//! tables under the configured output directory.
//!
//! Randomness hangs off `RngStream::new(seed, 0)`: the ground truth uses
//! `("ground-truth", 0)`, replicate `r` of a coverage run uses
//! `("replicate", r)`, and every other component has its own tag. Results
//! therefore do not depend on `--jobs`.

mod coverage;
mod exp2;
mod exp3;
mod exp4;
mod variants;

use bde::math::{Mat, RngStream};
use bde::network::{predict, train, MlpConfig, Standardizer};
use bde::simulate::{build_ground_truth_nn, build_ground_truth_rf, GroundTruth};
use bde::Dataset;

pub use coverage::{run_coverage, run_exp1, CoverageRow, CoverageSummary};
pub use exp2::{run_exp2, Exp2Row, Exp2Summary};
pub use exp3::{run_exp3, Exp3Summary};
pub use exp4::{run_exp4, Exp4Summary};
pub use variants::{run_variants, VariantEntry, VariantsSummary};

use crate::config::{ExperimentConfig, SimulatorKind};
use crate::error::{CliError, Result};
use crate::output::{DatasetInfo, Manifest};

/// Runs `f` on a pool of `jobs` threads; `0` uses rayon's default.
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if jobs == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

pub(crate) fn root(cfg: &ExperimentConfig) -> RngStream {
    RngStream::new(cfg.seed, 0)
}

/// Validated config, loaded data and a manifest with the dataset recorded.
pub(crate) fn prepare(cfg: &ExperimentConfig, experiment: &str) -> Result<(Dataset, Manifest)> {
    cfg.validate()?;
    let loaded = cfg.load_dataset()?;
    let mut manifest = Manifest::new(experiment, cfg);
    manifest.dataset = Some(DatasetInfo {
        source: loaded.source,
        rows: loaded.data.len(),
        features: loaded.data.dim(),
        digest: loaded.data.digest(),
    });
    manifest.seed("root", cfg.seed);
    Ok((loaded.data, manifest))
}

/// As [`prepare`], for experiments that generate their own data.
pub(crate) fn prepare_without_data(cfg: &ExperimentConfig, experiment: &str) -> Result<Manifest> {
    cfg.validate()?;
    let mut manifest = Manifest::new(experiment, cfg);
    manifest.seed("root", cfg.seed);
    Ok(manifest)
}

pub(crate) fn ground_truth(cfg: &ExperimentConfig, data: &Dataset) -> Result<GroundTruth> {
    let stream = root(cfg).derive("ground-truth", 0);
    Ok(match cfg.simulator {
        SimulatorKind::Rf => build_ground_truth_rf(data, &cfg.forest.forest(), cfg.noise, &stream)?,
        SimulatorKind::Nn => build_ground_truth_nn(data, &cfg.network.mlp(data.dim()), cfg.noise, &stream)?,
    })
}

/// One network trained on its own standardization of `data`; returns the
/// predicted means at `at` on the original scale.
pub(crate) fn fit_single(net: &MlpConfig, data: &Dataset, stream: &RngStream, at: &Mat) -> Result<Vec<f64>> {
    let s = Standardizer::fit(data)?;
    let z = s.transform(data)?;
    let (params, _) = train(net, &z, stream, None)?;
    let (m, _) = predict(&params, net, &s.transform_x(at)?);
    Ok(m.into_iter().map(|m| s.inverse_mean(m)).collect())
}

/// Simulated targets at the rows `idx` of the ground truth's training part.
pub(crate) fn simulate_rows(gt: &GroundTruth, idx: &[usize], rng: &mut RngStream) -> Result<Dataset> {
    let sampler = gt.noise.sampler();
    let y = idx
        .iter()
        .map(|&i| gt.f_train()[i] + gt.sigma_sq_train()[i].sqrt() * sampler.sample(rng))
        .collect();
    Ok(Dataset::new(gt.x_train.select_rows(idx), y)?)
}

pub(crate) fn desk_scale_note() -> String {
    "desk scale: replicate, ensemble and oracle counts are reduced from the full protocol; \
     conclusions are directional"
        .to_string()
}
