//! Ensemble constructions on toy problems with closed-form answers.

use bde::ensemble::{
    bootstrap_indices, train_bootstrapped_ensemble, train_bootstrapped_sweep, train_deep_ensemble,
    train_naive_bootstrap, BootstrappedEnsemble, Ensemble, EnsembleConfig,
};
use bde::evaluation::{mean_network_variance, rmse};
use bde::intervals::{estimate_sigma_d_sq, MemberPredictions};
use bde::math::Mat;
use bde::network::{predict, train, MlpConfig, Standardizer};
use bde::{Dataset, RngStream};

fn linear_toy(n: usize, noise_sd: f64, seed: u64) -> Dataset {
    let mut rng = RngStream::new(seed, 11);
    let x: Vec<f64> = (0..n).map(|_| 2.0 * rng.uniform() - 1.0).collect();
    let y = x.iter().map(|x| 2.0 * x + noise_sd * rng.standard_normal()).collect();
    Dataset::new(Mat::from_vec(n, 1, x).unwrap(), y).unwrap()
}

fn grid(n: usize) -> Mat {
    Mat::from_vec(n, 1, (0..n).map(|i| -0.9 + 1.8 * i as f64 / (n - 1) as f64).collect()).unwrap()
}

fn cfg(members: usize, seed: u64) -> EnsembleConfig {
    EnsembleConfig {
        members,
        ..EnsembleConfig::new(1, seed)
    }
}

fn mean_sigma_d_sq(orig: &MemberPredictions, retr: &MemberPredictions) -> f64 {
    let n = orig.n_points();
    (0..n)
        .map(|j| estimate_sigma_d_sq(&orig.means_at(j), &retr.means_at(j)).unwrap())
        .sum::<f64>()
        / n as f64
}

#[test]
fn members_differ_but_each_fits() {
    let data = linear_toy(500, 0.1, 1);
    let de = train_deep_ensemble(&cfg(2, 3), &data).unwrap();
    assert_ne!(de.params(0), de.params(1));
    let x = grid(11);
    let p = de.predict(&x).unwrap();
    for i in 0..2 {
        for (j, xv) in x.column_values(0).iter().enumerate() {
            assert!((p.means[i][j] - 2.0 * xv).abs() < 0.1, "member {i} at {xv}: {}", p.means[i][j]);
        }
    }
}

#[test]
fn same_seed_same_ensemble() {
    let data = linear_toy(200, 0.3, 2);
    assert_eq!(
        train_deep_ensemble(&cfg(3, 9), &data).unwrap(),
        train_deep_ensemble(&cfg(3, 9), &data).unwrap()
    );
}

#[test]
fn averaging_does_not_lose_to_the_best_member() {
    let mut rng = RngStream::new(4, 0);
    let n = 600;
    let x: Vec<f64> = (0..n).map(|_| 2.0 * rng.uniform() - 1.0).collect();
    let y: Vec<f64> = x.iter().map(|x| (3.0 * x).sin() + 0.3 * rng.standard_normal()).collect();
    let all = Dataset::new(Mat::from_vec(n, 1, x).unwrap(), y).unwrap();
    let train = all.select(&(0..500).collect::<Vec<_>>());
    let test = all.select(&(500..n).collect::<Vec<_>>());
    let de = train_deep_ensemble(&cfg(5, 5), &train).unwrap();
    let p = de.predict(&test.x).unwrap();
    let best = (0..5).map(|i| rmse(&p.means[i], &test.y).unwrap()).fold(f64::INFINITY, f64::min);
    let ens = rmse(&p.ensemble_mean(), &test.y).unwrap();
    assert!(ens <= 1.05 * best, "ensemble {ens}, best member {best}");
}

#[test]
fn bootstrapped_originals_are_the_deep_ensemble() {
    let data = linear_toy(150, 0.3, 6);
    let c = cfg(3, 7);
    let de = train_deep_ensemble(&c, &data).unwrap();
    let bde = train_bootstrapped_ensemble(&c, &data).unwrap();
    assert_eq!(bde.originals, de);
    assert_eq!(bde.checkpoint_epoch, 56);
    assert_eq!(bde.epochs_run, 3 * (80 + 24));
    assert!(!bde.full_retrain);
}

#[test]
fn zero_fraction_repeats_nothing_and_one_retrains_fully() {
    let data = linear_toy(100, 0.3, 8);
    let sweep = train_bootstrapped_sweep(&cfg(2, 1), &data, &[0.0, 0.3, 1.0]).unwrap();
    let (zero, mid, full) = (&sweep[0], &sweep[1], &sweep[2]);
    assert_eq!(zero.retrained, zero.originals.members);
    assert_eq!(zero.epochs_run, 2 * 80);
    let (o, r) = zero.predict(&grid(5)).unwrap();
    assert_eq!(mean_sigma_d_sq(&o, &r), 0.0);

    assert_ne!(mid.retrained, mid.originals.members);
    assert!(full.full_retrain);
    assert_eq!(full.checkpoint_epoch, 0);
    assert_eq!(full.epochs_run, 2 * 160);
    // One training run serves every fraction.
    assert_eq!(zero.originals, full.originals);
}

#[test]
fn near_noiseless_fit_barely_moves_on_retraining() {
    let data = linear_toy(300, 1e-3f64.sqrt(), 9);
    let bde = train_bootstrapped_ensemble(&cfg(3, 2), &data).unwrap();
    let (o, r) = bde.predict(&grid(21)).unwrap();
    let mean_abs = (0..3)
        .flat_map(|i| o.means[i].iter().zip(&r.means[i]).map(|(a, b)| (a - b).abs()).collect::<Vec<_>>())
        .sum::<f64>()
        / 63.0;
    // Targets span about [-2, 2].
    assert!(mean_abs < 0.05, "{mean_abs}");
    assert!(mean_sigma_d_sq(&o, &r) < 5e-3);
}

/// Across-network variance of the mean at `x` when the initialisation and
/// batch order are held fixed and only the targets are redrawn from the
/// true model. This is the data variance the retrain should reproduce.
fn fresh_target_variance(data: &Dataset, truth: &[f64], sd: f64, x: &Mat, k: u64) -> f64 {
    let s = Standardizer::fit(data).unwrap();
    let net = MlpConfig::new(1);
    let at = s.transform_x(x).unwrap();
    let preds: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            let mut rng = RngStream::new(99, i);
            let y = truth.iter().map(|f| f + sd * rng.standard_normal()).collect();
            let z = s.transform(&data.with_targets(y).unwrap()).unwrap();
            let (p, _) = train(&net, &z, &RngStream::new(5, 0), None).unwrap();
            predict(&p, &net, &at).0.into_iter().map(|m| s.inverse_mean(m)).collect()
        })
        .collect();
    mean_network_variance(&preds).unwrap()
}

#[test]
fn data_variance_matches_fresh_target_oracle() {
    let (n, sd) = (200, 0.5);
    let data = linear_toy(n, sd, 10);
    let bde = train_bootstrapped_ensemble(&cfg(10, 3), &data).unwrap();
    let x = grid(9);
    let (o, r) = bde.predict(&x).unwrap();
    let got = mean_sigma_d_sq(&o, &r);
    let truth: Vec<f64> = data.x.column_values(0).iter().map(|v| 2.0 * v).collect();
    let oracle = fresh_target_variance(&data, &truth, sd, &x, 20);
    assert!(got > oracle / 2.0 && got < oracle * 2.0, "sigma_d^2 {got}, oracle {oracle}");
    // σ² (1, x)ᵀ (XᵀX)⁻¹ (1, x): the two-parameter least-squares variance.
    // The network has far more freedom, so this is only a lower bound.
    let xs = data.x.column_values(0);
    let (s0, s1, s2) = (n as f64, xs.iter().sum::<f64>(), xs.iter().map(|v| v * v).sum::<f64>());
    let det = s0 * s2 - s1 * s1;
    let ols = x
        .column_values(0)
        .iter()
        .map(|v| sd * sd * (s2 - 2.0 * s1 * v + s0 * v * v) / det)
        .sum::<f64>()
        / 9.0;
    assert!(got > ols / 2.0, "sigma_d^2 {got}, OLS {ols}");
}

#[test]
fn bootstrap_resamples_are_reproducible_and_cover_two_thirds() {
    let a = bootstrap_indices(50, &mut RngStream::new(1, 0));
    assert_eq!(a, bootstrap_indices(50, &mut RngStream::new(1, 0)));
    let n = 1000;
    let mut rng = RngStream::new(2, 0);
    let reps = 200;
    let mut total = 0.0;
    for _ in 0..reps {
        let mut idx = bootstrap_indices(n, &mut rng);
        idx.sort_unstable();
        idx.dedup();
        total += idx.len() as f64 / n as f64;
    }
    let frac = total / reps as f64;
    assert!((frac - (1.0 - (-1f64).exp())).abs() < 0.01, "{frac}");
}

#[test]
fn naive_bootstrap_members_see_different_rows() {
    let data = linear_toy(120, 0.3, 12);
    let c = cfg(2, 4);
    let nb = train_naive_bootstrap(&c, &data).unwrap();
    assert_eq!(nb, train_naive_bootstrap(&c, &data).unwrap());
    assert_eq!(nb.standardizer, train_deep_ensemble(&c, &data).unwrap().standardizer);
    assert_ne!(nb.params(0), nb.params(1));
}

#[test]
fn predictions_follow_the_target_scale() {
    let data = linear_toy(100, 0.3, 13);
    let scaled = data.with_targets(data.y.iter().map(|y| 10.0 * y).collect()).unwrap();
    let c = cfg(2, 5);
    let x = grid(7);
    let a = train_deep_ensemble(&c, &data).unwrap().predict(&x).unwrap();
    let b = train_deep_ensemble(&c, &scaled).unwrap().predict(&x).unwrap();
    for i in 0..2 {
        for j in 0..7 {
            let (ma, mb) = (a.means[i][j], b.means[i][j]);
            assert!((mb - 10.0 * ma).abs() <= 1e-9 * mb.abs().max(1.0), "{mb} vs {ma}");
            let (va, vb) = (a.variances[i][j], b.variances[i][j]);
            assert!((vb - 100.0 * va).abs() <= 1e-9 * vb);
        }
    }
}

#[test]
fn single_member_ensemble_predicts_one_row() {
    let data = linear_toy(60, 0.3, 14);
    let de = train_deep_ensemble(&cfg(2, 6), &data).unwrap();
    let one = Ensemble {
        members: vec![de.members[0].clone()],
        ..de.clone()
    };
    let p = one.predict(&grid(4)).unwrap();
    assert_eq!(p.n_members(), 1);
    assert_eq!(p.means[0], de.predict(&grid(4)).unwrap().means[0]);
}

#[test]
fn ensembles_survive_a_save_and_load() {
    let data = linear_toy(80, 0.3, 15);
    let bde = train_bootstrapped_ensemble(&cfg(2, 8), &data).unwrap();
    let dir = tempfile::tempdir().unwrap();
    bde.save(dir.path().join("bde")).unwrap();
    let back = BootstrappedEnsemble::load(dir.path().join("bde")).unwrap();
    assert_eq!(back, bde);
    bde.originals.save(dir.path().join("de")).unwrap();
    assert_eq!(Ensemble::load(dir.path().join("de")).unwrap(), bde.originals);
    assert!(Ensemble::load(dir.path().join("missing")).is_err());
}

#[test]
fn dimension_mismatch_is_rejected() {
    let data = linear_toy(40, 0.3, 16);
    let c = EnsembleConfig::new(2, 0);
    assert!(train_deep_ensemble(&c, &data).is_err());
    let c = EnsembleConfig {
        members: 1,
        ..EnsembleConfig::new(1, 0)
    };
    assert!(train_deep_ensemble(&c, &data).is_err());
}
