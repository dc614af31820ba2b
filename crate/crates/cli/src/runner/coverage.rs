//! Coverage runs: simulate replicates from a ground truth, train each
//! method on every replicate and score its intervals at the test points.

use std::path::Path;

use bde::ensemble::{train_bootstrapped_sweep, train_deep_ensemble, train_naive_bootstrap};
use bde::evaluation::{rmse, CoverageReport};
use bde::intervals::{estimate_sigma_d_sq, interval_sets, IntervalKind, IntervalSet, MemberPredictions, Method};
use bde::math::RngStream;
use bde::simulate::{simulate_replicate, GroundTruth};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{desk_scale_note, ground_truth, prepare, root};
use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::output::{fmt, write_json, write_table, ReplicateStore, MANIFEST, SUMMARY};

/// One method's result on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MethodOutcome {
    label: String,
    method: Method,
    retrain_fraction: Option<f64>,
    rmse: f64,
    /// Mean over test points of `σ̂_d²` (BDE only).
    sigma_d_sq: Option<f64>,
    /// `[ci(α₀), pi(α₀), ci(α₁), …]`.
    sets: Vec<IntervalSet>,
}

/// One table row: a method (and retrain fraction) at one `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub label: String,
    pub method: Method,
    pub retrain_fraction: Option<f64>,
    pub alpha: f64,
    pub brier_ci: f64,
    pub brier_pi: f64,
    pub width_ci: f64,
    pub width_pi: f64,
    pub mean_cicf: f64,
    pub mean_picf: f64,
    pub rmse: f64,
    pub sigma_d_sq: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageSummary {
    pub experiment: String,
    pub config_digest: String,
    pub dataset_digest: String,
    pub simulator: String,
    pub noise: String,
    pub n_sim: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub rows: Vec<CoverageRow>,
}

impl CoverageSummary {
    pub fn row(&self, label: &str, alpha: f64) -> Option<&CoverageRow> {
        self.rows.iter().find(|r| r.label == label && r.alpha == alpha)
    }
}

fn bde_label(fractions: &[f64], r: f64) -> String {
    if fractions.len() == 1 {
        "bde".to_string()
    } else {
        format!("bde-r{r}")
    }
}

fn mean_sigma_d_sq(orig: &MemberPredictions, retr: &MemberPredictions) -> Result<f64> {
    let n = orig.n_points();
    let mut total = 0.0;
    for j in 0..n {
        total += estimate_sigma_d_sq(&orig.means_at(j), &retr.means_at(j))?;
    }
    Ok(total / n as f64)
}

fn run_replicate(
    cfg: &ExperimentConfig,
    gt: &GroundTruth,
    fractions: &[f64],
    r: usize,
) -> Result<Vec<MethodOutcome>> {
    let stream = root(cfg).derive("replicate", r as u64);
    let rep = simulate_replicate(gt, &stream)?;
    let ecfg = cfg.ensemble_config(rep.train.dim(), replicate_seed(&stream));
    let x = &gt.x_test;
    let score = |p: &MemberPredictions| rmse(&p.ensemble_mean(), &rep.y_test);
    let sets = |method, p: &MemberPredictions, retr: Option<&MemberPredictions>, label: &str| {
        interval_sets(method, p, retr, &cfg.alphas, cfg.pi_draws, &stream.derive(&format!("pi-{label}"), 0))
    };
    let wants = |m| cfg.methods.contains(&m);
    let mut out = Vec::new();

    if wants(Method::Bde) {
        let sweep = train_bootstrapped_sweep(&ecfg, &rep.train, fractions)?;
        let orig = sweep[0].originals.predict(x)?;
        if wants(Method::De) {
            out.push(MethodOutcome {
                label: "de".into(),
                method: Method::De,
                retrain_fraction: None,
                rmse: score(&orig)?,
                sigma_d_sq: None,
                sets: sets(Method::De, &orig, None, "de")?,
            });
        }
        for b in &sweep {
            let (_, retr) = b.predict(x)?;
            let label = bde_label(fractions, b.retrain_fraction);
            out.push(MethodOutcome {
                method: Method::Bde,
                retrain_fraction: Some(b.retrain_fraction),
                rmse: score(&orig)?,
                sigma_d_sq: Some(mean_sigma_d_sq(&orig, &retr)?),
                sets: sets(Method::Bde, &orig, Some(&retr), &label)?,
                label,
            });
        }
    } else if wants(Method::De) {
        let orig = train_deep_ensemble(&ecfg, &rep.train)?.predict(x)?;
        out.push(MethodOutcome {
            label: "de".into(),
            method: Method::De,
            retrain_fraction: None,
            rmse: score(&orig)?,
            sigma_d_sq: None,
            sets: sets(Method::De, &orig, None, "de")?,
        });
    }
    if wants(Method::Nb) {
        let p = train_naive_bootstrap(&ecfg, &rep.train)?.predict(x)?;
        out.push(MethodOutcome {
            label: "nb".into(),
            method: Method::Nb,
            retrain_fraction: None,
            rmse: score(&p)?,
            sigma_d_sq: None,
            sets: sets(Method::Nb, &p, None, "nb")?,
        });
    }
    Ok(out)
}

fn replicate_seed(stream: &RngStream) -> u64 {
    stream.derive("ensemble-seed", 0).draw_seed()
}

/// Exp1: BDE, DE and NB at the configured retrain fraction.
pub fn run_exp1(cfg: &ExperimentConfig) -> Result<CoverageSummary> {
    run_coverage(cfg, "exp1", &[cfg.ensemble.retrain_fraction])
}

/// Coverage run over `fractions` (one BDE per fraction, sharing the
/// original members). Writes into `cfg.out`.
pub fn run_coverage(cfg: &ExperimentConfig, experiment: &str, fractions: &[f64]) -> Result<CoverageSummary> {
    let (data, mut manifest) = prepare(cfg, experiment)?;
    if fractions.is_empty() {
        return Err(CliError::config("no retrain fractions"));
    }
    let gt = ground_truth(cfg, &data)?;
    manifest.seed("ground-truth", root(cfg).derive("ground-truth", 0).stream_id());
    for r in 0..cfg.n_sim {
        let stream = root(cfg).derive("replicate", r as u64);
        manifest.seed(format!("replicate-{r}/ensemble"), replicate_seed(&stream));
    }
    manifest.notes.push(desk_scale_note());
    manifest.notes.push(format!(
        "covariates split {}/{} into train/test rows once per ground truth",
        gt.x_train.rows(),
        gt.x_test.rows()
    ));
    let out = &cfg.out;
    write_json(&out.join(MANIFEST), &manifest)?;

    let store = ReplicateStore::new(out.join("replicates"), &manifest.config_digest)?;
    let outcomes = (0..cfg.n_sim)
        .into_par_iter()
        .map(|r| match store.load::<Vec<MethodOutcome>>(r) {
            Some(done) => Ok(done),
            None => {
                let res = run_replicate(cfg, &gt, fractions, r)?;
                store.store(r, &res)?;
                Ok(res)
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let summary = aggregate(cfg, experiment, &manifest, &gt, &outcomes)?;
    write_coverage_tables(out, cfg, &gt, &outcomes)?;
    write_json(&out.join(SUMMARY), &summary)?;
    Ok(summary)
}

fn sets_for<'a>(
    outcomes: &'a [Vec<MethodOutcome>],
    label: &str,
    k: usize,
) -> Result<(Vec<IntervalSet>, Vec<IntervalSet>, Vec<&'a MethodOutcome>)> {
    let mut ci = Vec::new();
    let mut pi = Vec::new();
    let mut per_rep = Vec::new();
    for rep in outcomes {
        let m = rep
            .iter()
            .find(|m| m.label == label)
            .ok_or_else(|| CliError::Invariant(format!("replicate lacks method `{label}`")))?;
        ci.push(m.sets[2 * k].clone());
        pi.push(m.sets[2 * k + 1].clone());
        per_rep.push(m);
    }
    Ok((ci, pi, per_rep))
}

fn aggregate(
    cfg: &ExperimentConfig,
    experiment: &str,
    manifest: &crate::output::Manifest,
    gt: &GroundTruth,
    outcomes: &[Vec<MethodOutcome>],
) -> Result<CoverageSummary> {
    let mut rows = Vec::new();
    for proto in &outcomes[0] {
        for (k, &alpha) in cfg.alphas.iter().enumerate() {
            let (ci, pi, per_rep) = sets_for(outcomes, &proto.label, k)?;
            if ci.iter().any(|s| s.kind != IntervalKind::Confidence) {
                return Err(CliError::Invariant("interval sets out of order".into()));
            }
            let n = per_rep.len() as f64;
            let mean_rmse = per_rep.iter().map(|m| m.rmse).sum::<f64>() / n;
            let report = CoverageReport::new(gt.f_test(), gt.sigma_sq_test(), gt.noise, &ci, &pi, mean_rmse)?;
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            rows.push(CoverageRow {
                label: proto.label.clone(),
                method: proto.method,
                retrain_fraction: proto.retrain_fraction,
                alpha,
                brier_ci: report.brier_ci,
                brier_pi: report.brier_pi,
                width_ci: report.width_ci,
                width_pi: report.width_pi,
                mean_cicf: mean(&report.cicf),
                mean_picf: mean(&report.picf),
                rmse: report.rmse,
                sigma_d_sq: proto
                    .sigma_d_sq
                    .map(|_| per_rep.iter().filter_map(|m| m.sigma_d_sq).sum::<f64>() / n),
            });
        }
    }
    Ok(CoverageSummary {
        experiment: experiment.to_string(),
        config_digest: manifest.config_digest.clone(),
        dataset_digest: manifest.dataset.as_ref().map(|d| d.digest.clone()).unwrap_or_default(),
        simulator: format!("{:?}", cfg.simulator).to_lowercase(),
        noise: cfg.noise.to_string(),
        n_sim: cfg.n_sim,
        n_train: gt.x_train.rows(),
        n_test: gt.x_test.rows(),
        rows,
    })
}

/// Raw per-point coverages, one file per (method, kind, alpha); these are
/// the points behind violin plots of CICF and PICF.
fn write_coverage_tables(
    out: &Path,
    cfg: &ExperimentConfig,
    gt: &GroundTruth,
    outcomes: &[Vec<MethodOutcome>],
) -> Result<()> {
    for proto in &outcomes[0] {
        for (k, &alpha) in cfg.alphas.iter().enumerate() {
            let (ci, pi, _) = sets_for(outcomes, &proto.label, k)?;
            let cicf = bde::evaluation::cicf(gt.f_test(), &ci)?;
            let picf = bde::evaluation::picf(gt, &pi)?;
            for (kind, cov) in [("ci", &cicf), ("pi", &picf)] {
                let path = out.join("coverage").join(format!("{}_{kind}_{alpha}.csv", proto.label));
                let rows = (0..cov.len()).map(|j| {
                    vec![
                        j.to_string(),
                        fmt(gt.f_test()[j]),
                        fmt(gt.sigma_sq_test()[j]),
                        fmt(cov[j]),
                    ]
                });
                write_table(&path, &["point", "f", "sigma_sq", "coverage"], rows)?;
            }
        }
    }
    Ok(())
}
