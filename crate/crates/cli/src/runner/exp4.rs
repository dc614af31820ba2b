//! Overfitting: a large unregularised network on a few pure-noise points.
//! Members of a deep ensemble all interpolate the same targets and agree;
//! retrained members interpolate different simulated targets and do not.

use bde::ensemble::train_bootstrapped_ensemble;
use bde::intervals::{bde_confidence_interval, de_confidence_interval, Interval, PointPrediction};
use bde::math::Mat;
use bde::Dataset;
use serde::{Deserialize, Serialize};

use super::{prepare_without_data, root};
use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::output::{fmt, write_json, write_table, MANIFEST, SUMMARY};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp4Summary {
    pub experiment: String,
    pub config_digest: String,
    pub alpha: f64,
    pub members: usize,
    pub n_points: usize,
    /// Mean CI width at the training inputs.
    pub bde_width_train: f64,
    pub de_width_train: f64,
    /// `bde_width_train / de_width_train`.
    pub width_ratio: f64,
    pub all_finite: bool,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn intervals(
    bde: &bde::ensemble::BootstrappedEnsemble,
    x: &Mat,
    alpha: f64,
) -> Result<(Vec<f64>, Vec<Interval>, Vec<Interval>)> {
    let (orig, retr) = bde.predict(x)?;
    let mut f = Vec::new();
    let mut b = Vec::new();
    let mut d = Vec::new();
    for j in 0..orig.n_points() {
        let means = orig.means_at(j);
        let p = PointPrediction::from_members(&means, &retr.means_at(j), &orig.variances_at(j))?;
        f.push(p.f_star);
        b.push(bde_confidence_interval(&p, alpha)?);
        d.push(de_confidence_interval(&means, alpha)?);
    }
    Ok((f, b, d))
}

pub fn run_exp4(cfg: &ExperimentConfig) -> Result<Exp4Summary> {
    let mut manifest = prepare_without_data(cfg, "exp4")?;
    let e = &cfg.exp4;
    let base = root(cfg);
    let x = linspace(-1.0, 1.0, e.n_points);
    let mut rng = base.derive("exp4-targets", 0);
    let y: Vec<f64> = x.iter().map(|_| e.target_sd * rng.standard_normal()).collect();
    let data = Dataset::new(Mat::from_vec(e.n_points, 1, x.clone())?, y.clone())?;

    let ens_seed = base.derive("exp4-ensemble", 0).draw_seed();
    manifest.seed("exp4/ensemble", ens_seed);
    manifest
        .notes
        .push("training inputs evenly spaced on [-1, 1]; no L2 penalty".to_string());
    write_json(&cfg.out.join(MANIFEST), &manifest)?;

    let mut ecfg = cfg.ensemble_config(1, ens_seed);
    ecfg.members = e.members;
    ecfg.net.hidden_sizes = e.hidden_sizes.clone();
    ecfg.net.l2_coefficient = Some(0.0);
    let bde = train_bootstrapped_ensemble(&ecfg, &data)?;

    let grid = linspace(-e.grid_half_width, e.grid_half_width, e.grid_points);
    let (f, b, d) = intervals(&bde, &Mat::from_vec(grid.len(), 1, grid.clone())?, e.alpha)?;
    let (_, bt, dt) = intervals(&bde, &data.x, e.alpha)?;
    let mean_width = |v: &[Interval]| v.iter().map(Interval::width).sum::<f64>() / v.len() as f64;
    let all_finite = b
        .iter()
        .chain(&d)
        .all(|i| i.lower.is_finite() && i.upper.is_finite());
    if !all_finite {
        return Err(CliError::Invariant("non-finite interval on the exp4 grid".into()));
    }

    write_table(
        &cfg.out.join("fig5.csv"),
        &["x", "f_star", "bde_lower", "bde_upper", "de_lower", "de_upper"],
        (0..grid.len()).map(|j| {
            vec![
                fmt(grid[j]),
                fmt(f[j]),
                fmt(b[j].lower),
                fmt(b[j].upper),
                fmt(d[j].lower),
                fmt(d[j].upper),
            ]
        }),
    )?;
    write_table(
        &cfg.out.join("fig5_train.csv"),
        &["x", "y", "bde_width", "de_width"],
        (0..x.len()).map(|j| vec![fmt(x[j]), fmt(y[j]), fmt(bt[j].width()), fmt(dt[j].width())]),
    )?;
    let (bw, dw) = (mean_width(&bt), mean_width(&dt));
    let summary = Exp4Summary {
        experiment: "exp4".into(),
        config_digest: manifest.config_digest.clone(),
        alpha: e.alpha,
        members: e.members,
        n_points: e.n_points,
        bde_width_train: bw,
        de_width_train: dw,
        width_ratio: bw / dw,
        all_finite,
    };
    write_json(&cfg.out.join(SUMMARY), &summary)?;
    Ok(summary)
}
