//! `simulate`, `train`, `evaluate` and `report`.

use std::fmt::Write as _;
use std::path::Path;

use bde::ensemble::{
    train_bootstrapped_ensemble, train_deep_ensemble, train_naive_bootstrap, BootstrappedEnsemble, Ensemble,
};
use bde::evaluation::rmse;
use bde::intervals::{interval_sets, IntervalKind, Method};
use bde::math::RngStream;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::output::{fmt, read_json, write_json, write_table, MANIFEST, SUMMARY};
use crate::runner::{
    ground_truth, prepare, root, CoverageSummary, Exp2Summary, Exp3Summary, Exp4Summary, VariantsSummary,
};

/// Builds the ground truth and writes it with its test-point values.
pub fn simulate(cfg: &ExperimentConfig) -> Result<()> {
    let (data, manifest) = prepare(cfg, "simulate")?;
    let gt = ground_truth(cfg, &data)?;
    write_json(&cfg.out.join(MANIFEST), &manifest)?;
    write_json(&cfg.out.join("ground_truth.json"), &gt)?;
    let d = gt.x_test.cols();
    let mut header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    header.extend(["f".into(), "sigma_sq".into()]);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_table(
        &cfg.out.join("ground_truth_test.csv"),
        &header,
        gt.x_test.iter_rows().enumerate().map(|(j, row)| {
            let mut cells: Vec<String> = row.iter().map(|v| fmt(*v)).collect();
            cells.push(fmt(gt.f_test()[j]));
            cells.push(fmt(gt.sigma_sq_test()[j]));
            cells
        }),
    )
}

/// Which construction produced a saved model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelInfo {
    pub method: Method,
    pub retrain_fraction: Option<f64>,
    pub members: usize,
}

const MODEL_INFO: &str = "model.json";

/// Trains one method on the dataset's own targets and saves it to
/// `out/model`.
pub fn train(cfg: &ExperimentConfig, method: Method) -> Result<()> {
    let (data, mut manifest) = prepare(cfg, "train")?;
    let seed = root(cfg).derive("train", 0).draw_seed();
    manifest.seed("ensemble", seed);
    let ecfg = cfg.ensemble_config(data.dim(), seed);
    let dir = cfg.out.join("model");
    match method {
        Method::Bde => train_bootstrapped_ensemble(&ecfg, &data)?.save(&dir)?,
        Method::De => train_deep_ensemble(&ecfg, &data)?.save(&dir)?,
        Method::Nb => train_naive_bootstrap(&ecfg, &data)?.save(&dir)?,
    }
    write_json(
        &dir.join(MODEL_INFO),
        &ModelInfo {
            method,
            retrain_fraction: (method == Method::Bde).then_some(ecfg.retrain_fraction),
            members: ecfg.members,
        },
    )?;
    write_json(&cfg.out.join(MANIFEST), &manifest)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluateSummary {
    pub method: Method,
    pub n_points: usize,
    pub rmse: f64,
    /// Fraction of targets inside each prediction interval, by `alpha`.
    pub pi_hit_rate: Vec<(f64, f64)>,
}

/// Intervals from a saved model at the rows of a CSV, plus RMSE and the
/// empirical prediction-interval hit rate against its target column.
pub fn evaluate(cfg: &ExperimentConfig, model: &Path, data_path: &Path) -> Result<EvaluateSummary> {
    cfg.validate()?;
    let info: ModelInfo = read_json(&model.join(MODEL_INFO))?;
    let test = bde::data::read_csv(data_path)?.data;
    let (members, retrained) = if info.method == Method::Bde {
        let (o, r) = BootstrappedEnsemble::load(model)?.predict(&test.x)?;
        (o, Some(r))
    } else {
        (Ensemble::load(model)?.predict(&test.x)?, None)
    };
    let rng = RngStream::new(cfg.seed, 0).derive("evaluate", 0);
    let sets = interval_sets(info.method, &members, retrained.as_ref(), &cfg.alphas, cfg.pi_draws, &rng)?;
    let f_star = members.ensemble_mean();
    let mut rows = Vec::new();
    let mut hits = Vec::new();
    for s in &sets {
        if s.kind == IntervalKind::Prediction {
            let inside = s.bounds.iter().zip(&test.y).filter(|(b, y)| b.contains(**y)).count();
            hits.push((s.alpha, inside as f64 / test.len() as f64));
        }
        for (j, b) in s.bounds.iter().enumerate() {
            rows.push(vec![
                j.to_string(),
                s.kind.short().to_string(),
                fmt(s.alpha),
                fmt(f_star[j]),
                fmt(b.lower),
                fmt(b.upper),
            ]);
        }
    }
    write_table(
        &cfg.out.join("intervals.csv"),
        &["point", "kind", "alpha", "f_star", "lower", "upper"],
        rows,
    )?;
    let summary = EvaluateSummary {
        method: info.method,
        n_points: test.len(),
        rmse: rmse(&f_star, &test.y)?,
        pi_hit_rate: hits,
    };
    write_json(&cfg.out.join("evaluate.json"), &summary)?;
    Ok(summary)
}

fn sci(v: f64) -> String {
    format!("{v:.3e}")
}

fn coverage_table(s: &CoverageSummary, out: &mut String) {
    let _ = writeln!(
        out,
        "{} ({} simulator, {} noise, n_sim={}, n_train={}, n_test={})",
        s.experiment, s.simulator, s.noise, s.n_sim, s.n_train, s.n_test
    );
    let _ = writeln!(
        out,
        "{:<10} {:>6} {:>10} {:>10} {:>9} {:>9} {:>9} {:>10}",
        "method", "alpha", "brier_ci", "brier_pi", "width_ci", "width_pi", "rmse", "sigma_d^2"
    );
    for r in &s.rows {
        let _ = writeln!(
            out,
            "{:<10} {:>6} {:>10} {:>10} {:>9.3} {:>9.3} {:>9.3} {:>10}",
            r.label,
            r.alpha,
            sci(r.brier_ci),
            sci(r.brier_pi),
            r.width_ci,
            r.width_pi,
            r.rmse,
            r.sigma_d_sq.map(sci).unwrap_or_else(|| "-".into())
        );
    }
}

/// Renders a run directory's `summary.json` as a text table.
pub fn report(dir: &Path) -> Result<String> {
    let path = dir.join(SUMMARY);
    let value: Value = read_json(&path)?;
    let kind = value.get("experiment").and_then(Value::as_str).unwrap_or_default().to_string();
    let parse_err = |e: serde_json::Error| {
        CliError::Core(bde::Error::Format {
            path: path.clone(),
            detail: e.to_string(),
        })
    };
    let mut out = String::new();
    match kind.as_str() {
        "exp2" => {
            let s: Exp2Summary = serde_json::from_value(value).map_err(parse_err)?;
            let _ = writeln!(out, "exp2 (K={}, n_test={})", s.k, s.n_test);
            let _ = writeln!(out, "{:>6} {:>12} {:>12}", "N", "sigma_t^2", "sigma_d^2");
            for r in &s.rows {
                let flag = if r.clamped { " (clamped)" } else { "" };
                let _ = writeln!(out, "{:>6} {:>12} {:>12}{flag}", r.n, sci(r.sigma_t_sq), sci(r.sigma_d_sq));
            }
            if let Some(rho) = s.spearman_sigma_d_vs_n {
                let _ = writeln!(out, "spearman(sigma_d^2, N) = {rho:.3}");
            }
        }
        "exp3" => {
            let s: Exp3Summary = serde_json::from_value(value).map_err(parse_err)?;
            let c = &s.check;
            let _ = writeln!(out, "exp3 (M={}, r={}, n_test={})", s.members, s.retrain_fraction, s.n_test);
            let _ = writeln!(
                out,
                "{:>12} {:>12} {:>12} {:>12} {:>8}",
                "truth", "sigma_t^2", "sigma_d^2", "sum", "ratio"
            );
            let _ = writeln!(
                out,
                "{:>12} {:>12} {:>12} {:>12} {:>8}",
                sci(c.truth_total),
                sci(c.sigma_t_sq_hat),
                sci(c.sigma_d_sq_hat),
                sci(c.estimate_total),
                c.ratio.map(|r| format!("{r:.3}")).unwrap_or_else(|| "-".into())
            );
            if s.degenerate {
                let _ = writeln!(out, "r = 0: sigma_d^2 is zero by construction");
            }
        }
        "exp4" => {
            let s: Exp4Summary = serde_json::from_value(value).map_err(parse_err)?;
            let _ = writeln!(
                out,
                "exp4 ({} points, M={}, {}% CI)",
                s.n_points,
                s.members,
                100.0 * (1.0 - s.alpha)
            );
            let _ = writeln!(out, "mean CI width at training inputs: BDE {:.4}, DE {:.4}", s.bde_width_train, s.de_width_train);
            let _ = writeln!(out, "ratio {:.2}", s.width_ratio);
        }
        "variants" => {
            let s: VariantsSummary = serde_json::from_value(value).map_err(parse_err)?;
            for e in &s.variants {
                let _ = writeln!(out, "[{}]", e.dir);
                coverage_table(&e.summary, &mut out);
                out.push('\n');
            }
        }
        _ => {
            let s: CoverageSummary = serde_json::from_value(value).map_err(parse_err)?;
            coverage_table(&s, &mut out);
        }
    }
    Ok(out)
}
