//! Deep ensembles, bootstrapped deep ensembles and the naive bootstrap.
//!
//! All randomness hangs off one root stream `RngStream::new(base_seed, 0)`.
//! Member `i` draws from children keyed by `(tag, i)`:
//!
//! | tag               | use                                             |
//! |-------------------|-------------------------------------------------|
//! | `member`          | initialisation and batch order of original `i`  |
//! | `boot`            | simulated targets for the retrain of `i`        |
//! | `retrain-order`   | batch order of the retrain when not replaying   |
//! | `nb`              | row resample of naive-bootstrap member `i`      |
//! | `nb-train`        | training stream of naive-bootstrap member `i`   |
//! | `*-retry`         | the same, for the single retry after divergence |
//!
//! Members are therefore independent of each other and of scheduling.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::intervals::MemberPredictions;
use crate::math::{Mat, RngStream};
use crate::network::{
    self, resume_train_run, train_with_checkpoints, BatchOrder, Checkpoint, MlpConfig, NetworkParams,
    Standardizer, TrainRun,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    /// Number of members `M`.
    pub members: usize,
    /// Fraction `r` of the epochs repeated on simulated targets.
    pub retrain_fraction: f64,
    pub net: MlpConfig,
    pub base_seed: u64,
    /// Replay the original batch order while retraining.
    pub reuse_order: bool,
}

impl EnsembleConfig {
    /// `M = 5`, `r = 0.3`, default network, batch order replayed.
    pub fn new(input_dim: usize, base_seed: u64) -> Self {
        EnsembleConfig {
            members: 5,
            retrain_fraction: 0.3,
            net: MlpConfig::new(input_dim),
            base_seed,
            reuse_order: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.members < 2 {
            return Err(Error::invalid(format!("{} members; need at least 2", self.members)));
        }
        check_fraction(self.retrain_fraction)?;
        self.net.validate()
    }

    /// Epochs completed when the retrain checkpoint is taken,
    /// `round(Nₑ(1 − r))` with ties to even.
    pub fn checkpoint_epoch(&self) -> usize {
        checkpoint_epoch(self.net.epochs, self.retrain_fraction)
    }

    fn root(&self) -> RngStream {
        RngStream::new(self.base_seed, 0)
    }
}

fn check_fraction(r: f64) -> Result<()> {
    if (0.0..=1.0).contains(&r) {
        Ok(())
    } else {
        Err(Error::invalid(format!("retrain fraction {r} outside [0, 1]")))
    }
}

pub fn checkpoint_epoch(epochs: usize, r: f64) -> usize {
    (epochs as f64 * (1.0 - r)).round_ties_even() as usize
}

/// Members sharing one network configuration and one standardizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub net: MlpConfig,
    pub standardizer: Standardizer,
    /// Final training state of each member.
    pub members: Vec<Checkpoint>,
}

pub type DeepEnsemble = Ensemble;

impl Ensemble {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn params(&self, i: usize) -> &NetworkParams {
        &self.members[i].params
    }

    /// Member means and variances at `x`, on the original target scale.
    pub fn predict(&self, x: &Mat) -> Result<MemberPredictions> {
        predict_members(&self.net, &self.standardizer, self.members.iter().map(|c| &c.params), x)
    }
}

fn predict_members<'a>(
    net: &MlpConfig,
    standardizer: &Standardizer,
    members: impl Iterator<Item = &'a NetworkParams>,
    x: &Mat,
) -> Result<MemberPredictions> {
    let z = standardizer.transform_x(x)?;
    let (means, variances) = members
        .map(|p| {
            let (m, v) = network::predict(p, net, &z);
            (
                m.into_iter().map(|m| standardizer.inverse_mean(m)).collect(),
                v.into_iter().map(|v| standardizer.inverse_variance(v)).collect(),
            )
        })
        .unzip();
    MemberPredictions::new(means, variances)
}

/// Original members `f̂_i` and their retrained counterparts `f̂̂_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrappedEnsemble {
    pub originals: Ensemble,
    pub retrained: Vec<Checkpoint>,
    pub retrain_fraction: f64,
    pub checkpoint_epoch: usize,
    /// `r = 1`: the checkpoint is the untrained initialisation.
    pub full_retrain: bool,
    /// Epochs run in total, originals plus retrains.
    pub epochs_run: usize,
}

impl BootstrappedEnsemble {
    /// `(originals, retrained)` predictions at `x`, original scale.
    pub fn predict(&self, x: &Mat) -> Result<(MemberPredictions, MemberPredictions)> {
        let o = &self.originals;
        Ok((
            o.predict(x)?,
            predict_members(&o.net, &o.standardizer, self.retrained.iter().map(|c| &c.params), x)?,
        ))
    }

    pub fn retrained_ensemble(&self) -> Ensemble {
        Ensemble {
            net: self.originals.net.clone(),
            standardizer: self.originals.standardizer.clone(),
            members: self.retrained.clone(),
        }
    }
}

/// Runs `attempt(stream)` and, on divergence, once more on `retry`.
fn with_retry<T>(primary: RngStream, retry: RngStream, attempt: impl Fn(RngStream) -> Result<T>) -> Result<T> {
    match attempt(primary) {
        Err(e) if e.is_divergence() => attempt(retry),
        other => other,
    }
}

fn train_original(cfg: &EnsembleConfig, z: &Dataset, i: usize, checkpoints: &[usize]) -> Result<TrainRun> {
    let root = cfg.root();
    with_retry(
        root.derive("member", i as u64),
        root.derive("member-retry", i as u64),
        |s| train_with_checkpoints(&cfg.net, z, &s, checkpoints),
    )
}

fn fit_standardized(cfg: &EnsembleConfig, data: &Dataset) -> Result<(Standardizer, Dataset)> {
    cfg.validate()?;
    if data.dim() != cfg.net.input_dim {
        return Err(Error::shape(format!(
            "data has {} features, network expects {}",
            data.dim(),
            cfg.net.input_dim
        )));
    }
    let standardizer = Standardizer::fit(data)?;
    let z = standardizer.transform(data)?;
    Ok((standardizer, z))
}

/// `M` members on the same standardized data, differing only in their
/// initialisation and batch order.
pub fn train_deep_ensemble(cfg: &EnsembleConfig, data: &Dataset) -> Result<DeepEnsemble> {
    let (standardizer, z) = fit_standardized(cfg, data)?;
    let members = (0..cfg.members)
        .into_par_iter()
        .map(|i| Ok(train_original(cfg, &z, i, &[])?.final_state))
        .collect::<Result<Vec<_>>>()?;
    Ok(Ensemble {
        net: cfg.net.clone(),
        standardizer,
        members,
    })
}

/// Trains the originals once and derives one bootstrapped ensemble per
/// retrain fraction. Simulated targets depend only on the member, so every
/// fraction retrains on the same `Y_new`.
pub fn train_bootstrapped_sweep(
    cfg: &EnsembleConfig,
    data: &Dataset,
    fractions: &[f64],
) -> Result<Vec<BootstrappedEnsemble>> {
    let (standardizer, z) = fit_standardized(cfg, data)?;
    for &r in fractions {
        check_fraction(r)?;
    }
    let epochs = cfg.net.epochs;
    let ck_epochs: Vec<usize> = fractions.iter().map(|&r| checkpoint_epoch(epochs, r)).collect();
    let mut distinct = ck_epochs.clone();
    distinct.sort_unstable();
    distinct.dedup();

    let root = cfg.root();
    let per_member: Vec<(Checkpoint, Vec<Checkpoint>)> = (0..cfg.members)
        .into_par_iter()
        .map(|i| {
            let run = train_original(cfg, &z, i, &distinct)?;
            let retrained = ck_epochs
                .iter()
                .map(|e| {
                    let pos = distinct.binary_search(e).expect("checkpoint requested");
                    let ck = &run.checkpoints[pos];
                    with_retry(root.derive("boot", i as u64), root.derive("boot-retry", i as u64), |boot| {
                        retrain_member(cfg, &z, &run.params, ck, boot, i)
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((run.final_state, retrained))
        })
        .collect::<Result<Vec<_>>>()?;

    let originals = Ensemble {
        net: cfg.net.clone(),
        standardizer,
        members: per_member.iter().map(|(o, _)| o.clone()).collect(),
    };
    Ok(fractions
        .iter()
        .zip(&ck_epochs)
        .enumerate()
        .map(|(k, (&r, &ck))| BootstrappedEnsemble {
            originals: originals.clone(),
            retrained: per_member.iter().map(|(_, rs)| rs[k].clone()).collect(),
            retrain_fraction: r,
            checkpoint_epoch: ck,
            full_retrain: ck == 0,
            epochs_run: cfg.members * (2 * epochs - ck),
        })
        .collect())
}

/// Simulates `Y_new ~ N(f̂_i(X), σ̂_i²(X))` from the fully trained member
/// and repeats the epochs after `ck` on it.
fn retrain_member(
    cfg: &EnsembleConfig,
    z: &Dataset,
    trained: &NetworkParams,
    ck: &Checkpoint,
    mut boot: RngStream,
    i: usize,
) -> Result<Checkpoint> {
    let (m, v) = network::predict(trained, &cfg.net, &z.x);
    let y_new: Vec<f64> = m
        .iter()
        .zip(&v)
        .map(|(m, v)| m + v.sqrt() * boot.standard_normal())
        .collect();
    let order = if cfg.reuse_order {
        BatchOrder::Replay
    } else {
        BatchOrder::Fresh(Box::new(cfg.root().derive("retrain-order", i as u64)))
    };
    Ok(resume_train_run(&cfg.net, ck, &z.with_targets(y_new)?, order)?.final_state)
}

/// Bootstrapped deep ensemble at `cfg.retrain_fraction`. With `r = 0` no
/// epoch is repeated and the retrained members equal the originals.
pub fn train_bootstrapped_ensemble(cfg: &EnsembleConfig, data: &Dataset) -> Result<BootstrappedEnsemble> {
    Ok(train_bootstrapped_sweep(cfg, data, &[cfg.retrain_fraction])?
        .pop()
        .expect("one fraction"))
}

/// `n` row indices drawn with replacement.
pub fn bootstrap_indices(n: usize, rng: &mut RngStream) -> Vec<usize> {
    (0..n).map(|_| rng.below(n)).collect()
}

/// Members trained on with-replacement resamples of the data. The
/// standardizer is fitted on the full data so all members share one scale.
pub fn train_naive_bootstrap(cfg: &EnsembleConfig, data: &Dataset) -> Result<DeepEnsemble> {
    if data.len() < 2 {
        return Err(Error::invalid("naive bootstrap needs at least two rows"));
    }
    let (standardizer, z) = fit_standardized(cfg, data)?;
    let root = cfg.root();
    let members = (0..cfg.members)
        .into_par_iter()
        .map(|i| {
            let idx = bootstrap_indices(z.len(), &mut root.derive("nb", i as u64));
            let sample = z.select(&idx);
            let run = with_retry(
                root.derive("nb-train", i as u64),
                root.derive("nb-train-retry", i as u64),
                |s| train_with_checkpoints(&cfg.net, &sample, &s, &[]),
            )?;
            Ok(run.final_state)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Ensemble {
        net: cfg.net.clone(),
        standardizer,
        members,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct EnsembleManifest {
    net: MlpConfig,
    standardizer: Standardizer,
    members: usize,
    retrained: bool,
    retrain_fraction: Option<f64>,
    checkpoint_epoch: Option<usize>,
}

fn member_path(dir: &Path, kind: &str, i: usize) -> std::path::PathBuf {
    dir.join(format!("{kind}_{i:03}.ckpt"))
}

fn write_manifest(dir: &Path, manifest: &EnsembleManifest) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("ensemble.json");
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

fn read_manifest(dir: &Path) -> Result<EnsembleManifest> {
    let path = dir.join("ensemble.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path,
        detail: e.to_string(),
    })
}

fn load_members(dir: &Path, kind: &str, n: usize, net: &MlpConfig) -> Result<Vec<Checkpoint>> {
    (0..n)
        .map(|i| {
            let ck = Checkpoint::load(member_path(dir, kind, i))?;
            if ck.config_digest != net.digest() || !ck.params.matches(net) {
                return Err(Error::CheckpointMismatch(format!("{kind} {i} does not match ensemble.json")));
            }
            Ok(ck)
        })
        .collect()
}

impl Ensemble {
    /// `ensemble.json` plus one `member_NNN.ckpt` per member.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        write_manifest(
            dir,
            &EnsembleManifest {
                net: self.net.clone(),
                standardizer: self.standardizer.clone(),
                members: self.len(),
                retrained: false,
                retrain_fraction: None,
                checkpoint_epoch: None,
            },
        )?;
        for (i, m) in self.members.iter().enumerate() {
            m.save(member_path(dir, "member", i))?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let m = read_manifest(dir)?;
        Ok(Ensemble {
            members: load_members(dir, "member", m.members, &m.net)?,
            net: m.net,
            standardizer: m.standardizer,
        })
    }
}

impl BootstrappedEnsemble {
    /// As [`Ensemble::save`], plus `retrained_NNN.ckpt` per member.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let o = &self.originals;
        write_manifest(
            dir,
            &EnsembleManifest {
                net: o.net.clone(),
                standardizer: o.standardizer.clone(),
                members: o.len(),
                retrained: true,
                retrain_fraction: Some(self.retrain_fraction),
                checkpoint_epoch: Some(self.checkpoint_epoch),
            },
        )?;
        for i in 0..o.len() {
            o.members[i].save(member_path(dir, "member", i))?;
            self.retrained[i].save(member_path(dir, "retrained", i))?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let m = read_manifest(dir)?;
        let (Some(r), Some(ck)) = (m.retrain_fraction, m.checkpoint_epoch) else {
            return Err(Error::Format {
                path: dir.join("ensemble.json"),
                detail: "not a bootstrapped ensemble".into(),
            });
        };
        let members = load_members(dir, "member", m.members, &m.net)?;
        let retrained = load_members(dir, "retrained", m.members, &m.net)?;
        let epochs = m.net.epochs;
        Ok(BootstrappedEnsemble {
            originals: Ensemble {
                net: m.net,
                standardizer: m.standardizer,
                members,
            },
            retrained,
            retrain_fraction: r,
            checkpoint_epoch: ck,
            full_retrain: ck == 0,
            epochs_run: m.members * (2 * epochs - ck),
        })
    }
}
