//! Variance of network predictions against training-set size, split into
//! the part from random training and the part from random targets.

use bde::evaluation::variance_decomposition;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{desk_scale_note, fit_single, ground_truth, prepare, root, simulate_rows};
use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::output::{fmt, write_json, write_table, MANIFEST, SUMMARY};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp2Row {
    pub n: usize,
    pub sigma_t_sq: f64,
    pub sigma_d_sq: f64,
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp2Summary {
    pub experiment: String,
    pub config_digest: String,
    pub k: usize,
    pub n_test: usize,
    pub rows: Vec<Exp2Row>,
    /// Rank correlation of `σ̂_d²` with `N`; absent for fewer than 3 sizes.
    pub spearman_sigma_d_vs_n: Option<f64>,
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman's rho as the Pearson correlation of average ranks.
pub(crate) fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() < 3 || a.len() != b.len() {
        return None;
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let m = (n - 1.0) / 2.0;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - m) * (y - m)).sum();
    let va: f64 = ra.iter().map(|x| (x - m).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - m).powi(2)).sum();
    let rho = cov / (va * vb).sqrt();
    rho.is_finite().then_some(rho)
}

pub fn run_exp2(cfg: &ExperimentConfig) -> Result<Exp2Summary> {
    let (data, mut manifest) = prepare(cfg, "exp2")?;
    let gt = ground_truth(cfg, &data)?;
    let n_train = gt.x_train.rows();
    if let Some(n) = cfg.exp2.n_grid.iter().find(|&&n| n > n_train || n < 2) {
        return Err(CliError::config(format!(
            "exp2 size {n} outside 2..={n_train} (training rows of the ground truth)"
        )));
    }
    manifest.notes.push(desk_scale_note());
    manifest
        .notes
        .push("each N is a random subsample of the ground truth's training rows".to_string());
    write_json(&cfg.out.join(MANIFEST), &manifest)?;

    let k = cfg.exp2.k;
    let net = cfg.network.mlp(data.dim());
    let mut rows = Vec::new();
    for &n in &cfg.exp2.n_grid {
        let s = root(cfg).derive("exp2", n as u64);
        let mut idx: Vec<usize> = (0..n_train).collect();
        s.derive("subsample", 0).shuffle(&mut idx);
        idx.truncate(n);
        idx.sort_unstable();
        let fixed_data = simulate_rows(&gt, &idx, &mut s.derive("fixed-targets", 0))?;
        let fixed = (0..k)
            .into_par_iter()
            .map(|i| fit_single(&net, &fixed_data, &s.derive("fixed-net", i as u64), &gt.x_test))
            .collect::<Result<Vec<_>>>()?;
        let random = (0..k)
            .into_par_iter()
            .map(|i| {
                let d = simulate_rows(&gt, &idx, &mut s.derive("random-targets", i as u64))?;
                fit_single(&net, &d, &s.derive("random-net", i as u64), &gt.x_test)
            })
            .collect::<Result<Vec<_>>>()?;
        let dec = variance_decomposition(&fixed, &random)?;
        rows.push(Exp2Row {
            n,
            sigma_t_sq: dec.sigma_t_sq,
            sigma_d_sq: dec.sigma_d_sq,
            clamped: dec.clamped,
        });
    }

    let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let ds: Vec<f64> = rows.iter().map(|r| r.sigma_d_sq).collect();
    let summary = Exp2Summary {
        experiment: "exp2".into(),
        config_digest: manifest.config_digest.clone(),
        k,
        n_test: gt.x_test.rows(),
        spearman_sigma_d_vs_n: spearman(&ns, &ds),
        rows,
    };
    write_table(
        &cfg.out.join("fig4.csv"),
        &["n", "sigma_t_sq", "sigma_d_sq", "sigma_t", "sigma_d", "clamped"],
        summary.rows.iter().map(|r| {
            vec![
                r.n.to_string(),
                fmt(r.sigma_t_sq),
                fmt(r.sigma_d_sq),
                fmt(r.sigma_t_sq.sqrt()),
                fmt(r.sigma_d_sq.sqrt()),
                r.clamped.to_string(),
            ]
        }),
    )?;
    write_json(&cfg.out.join(SUMMARY), &summary)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_examples() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 4.0, 9.0, 16.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0], &[1.0, 2.0]), None);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]), None);
    }
}
