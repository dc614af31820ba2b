//! Calibration metrics over simulation replicates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intervals::{Interval, IntervalKind, IntervalSet, Method};
use crate::math;
use crate::noise::NoiseModel;
use crate::simulate::GroundTruth;

fn check_sets(n_points: usize, sets: &[IntervalSet]) -> Result<()> {
    if sets.is_empty() {
        return Err(Error::invalid("no replicates"));
    }
    if let Some(s) = sets.iter().find(|s| s.bounds.len() != n_points) {
        return Err(Error::shape(format!(
            "interval set has {} points, truth has {n_points}",
            s.bounds.len()
        )));
    }
    Ok(())
}

/// Per point, the fraction of replicates whose interval contains `f(x)`.
pub fn cicf(true_f: &[f64], intervals: &[IntervalSet]) -> Result<Vec<f64>> {
    check_sets(true_f.len(), intervals)?;
    let n_sim = intervals.len() as f64;
    Ok(true_f
        .iter()
        .enumerate()
        .map(|(j, &f)| intervals.iter().filter(|s| s.bounds[j].contains(f)).count() as f64 / n_sim)
        .collect())
}

/// `P(y ∈ [L, R])` for `y = f + C·σ·ε`.
pub fn containment_probability(noise: NoiseModel, f: f64, sigma_sq: f64, interval: &Interval) -> Result<f64> {
    let sigma = sigma_sq.sqrt();
    if interval.upper <= interval.lower {
        return Ok(0.0);
    }
    Ok(noise.cdf(sigma, interval.upper - f)? - noise.cdf(sigma, interval.lower - f)?)
}

/// Per point, the containment probability averaged over replicates.
pub fn picf_values(
    true_f: &[f64],
    sigma_sq: &[f64],
    noise: NoiseModel,
    intervals: &[IntervalSet],
) -> Result<Vec<f64>> {
    if sigma_sq.len() != true_f.len() {
        return Err(Error::shape("f and sigma² differ in length"));
    }
    check_sets(true_f.len(), intervals)?;
    let n_sim = intervals.len() as f64;
    true_f
        .iter()
        .zip(sigma_sq)
        .enumerate()
        .map(|(j, (&f, &s2))| {
            let mut total = 0.0;
            for set in intervals {
                total += containment_probability(noise, f, s2, &set.bounds[j])?;
            }
            Ok(total / n_sim)
        })
        .collect()
}

/// [`picf_values`] at the test covariates of `gt`.
pub fn picf(gt: &GroundTruth, intervals: &[IntervalSet]) -> Result<Vec<f64>> {
    picf_values(gt.f_test(), gt.sigma_sq_test(), gt.noise, intervals)
}

/// Mean squared deviation of coverages from `1 - alpha`.
pub fn brier(coverages: &[f64], alpha: f64) -> Result<f64> {
    if coverages.is_empty() {
        return Err(Error::invalid("no coverages"));
    }
    if coverages.iter().any(|c| !(0.0..=1.0).contains(c)) {
        return Err(Error::invalid("coverage outside [0, 1]"));
    }
    let target = 1.0 - alpha;
    Ok(coverages.iter().map(|c| (c - target) * (c - target)).sum::<f64>() / coverages.len() as f64)
}

pub fn rmse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.is_empty() || predictions.len() != targets.len() {
        return Err(Error::shape(format!(
            "{} predictions for {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    let mse = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / predictions.len() as f64;
    Ok(mse.sqrt())
}

/// Averaged variance components from fixed- and random-target networks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceDecomposition {
    /// Mean over points of the across-network variance, fixed targets.
    pub sigma_t_sq: f64,
    /// Random-target mean variance minus `sigma_t_sq`, floored at zero.
    pub sigma_d_sq: f64,
    /// Set when the raw difference was negative.
    pub clamped: bool,
}

fn mean_pointwise_variance(preds: &[Vec<f64>]) -> Result<f64> {
    if preds.len() < 2 {
        return Err(Error::invalid("need at least two networks"));
    }
    let n = preds[0].len();
    if n == 0 || preds.iter().any(|p| p.len() != n) {
        return Err(Error::shape("networks predict different numbers of points"));
    }
    let per_point: Vec<f64> = (0..n)
        .map(|j| math::sample_variance(&preds.iter().map(|p| p[j]).collect::<Vec<_>>()))
        .collect();
    Ok(math::mean(&per_point))
}

/// `fixed` and `random` are `K × n_test` prediction matrices.
pub fn variance_decomposition(fixed: &[Vec<f64>], random: &[Vec<f64>]) -> Result<VarianceDecomposition> {
    let t = mean_pointwise_variance(fixed)?;
    let total = mean_pointwise_variance(random)?;
    if fixed[0].len() != random[0].len() {
        return Err(Error::shape("fixed and random sets predict different points"));
    }
    let d = total - t;
    Ok(VarianceDecomposition {
        sigma_t_sq: t,
        sigma_d_sq: d.max(0.0),
        clamped: d < 0.0,
    })
}

/// One row of the decomposition table: ground-truth total from networks
/// trained on fresh targets against the ensemble's own estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionCheck {
    pub truth_total: f64,
    pub sigma_t_sq_hat: f64,
    pub sigma_d_sq_hat: f64,
    pub estimate_total: f64,
    /// `estimate_total / truth_total`; `None` when the truth is zero or the
    /// ratio is not finite.
    pub ratio: Option<f64>,
}

/// `truth_total` is the averaged across-network variance of the oracle
/// ensemble; the hats are averaged BDE estimates.
pub fn decomposition_check(truth_total: f64, sigma_t_sq_hat: f64, sigma_d_sq_hat: f64) -> DecompositionCheck {
    let estimate_total = sigma_t_sq_hat + sigma_d_sq_hat;
    let ratio = estimate_total / truth_total;
    DecompositionCheck {
        truth_total,
        sigma_t_sq_hat,
        sigma_d_sq_hat,
        estimate_total,
        ratio: (truth_total > 0.0 && ratio.is_finite()).then_some(ratio),
    }
}

/// Averaged across-network variance of a `K × n_test` prediction matrix.
pub fn mean_network_variance(preds: &[Vec<f64>]) -> Result<f64> {
    mean_pointwise_variance(preds)
}

/// Coverage summary of one method at one `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub method: Method,
    pub alpha: f64,
    pub n_sim: usize,
    pub cicf: Vec<f64>,
    pub picf: Vec<f64>,
    pub brier_ci: f64,
    pub brier_pi: f64,
    pub width_ci: f64,
    pub width_pi: f64,
    pub rmse: f64,
}

impl CoverageReport {
    /// `ci` and `pi` hold one set per replicate; `rmse` is computed by the
    /// caller because it needs test targets.
    pub fn new(
        true_f: &[f64],
        sigma_sq: &[f64],
        noise: NoiseModel,
        ci: &[IntervalSet],
        pi: &[IntervalSet],
        rmse: f64,
    ) -> Result<Self> {
        let first = ci.first().ok_or_else(|| Error::invalid("no replicates"))?;
        let (method, alpha) = (first.method, first.alpha);
        let consistent = |sets: &[IntervalSet], kind| {
            sets.iter().all(|s| s.method == method && s.alpha == alpha && s.kind == kind)
        };
        if ci.len() != pi.len()
            || !consistent(ci, IntervalKind::Confidence)
            || !consistent(pi, IntervalKind::Prediction)
        {
            return Err(Error::invalid("interval sets mix methods, levels or kinds"));
        }
        let cicf = cicf(true_f, ci)?;
        let picf = picf_values(true_f, sigma_sq, noise, pi)?;
        let widths = |sets: &[IntervalSet]| math::mean(&sets.iter().map(IntervalSet::mean_width).collect::<Vec<_>>());
        Ok(CoverageReport {
            method,
            alpha,
            n_sim: ci.len(),
            brier_ci: brier(&cicf, alpha)?,
            brier_pi: brier(&picf, alpha)?,
            width_ci: widths(ci),
            width_pi: widths(pi),
            cicf,
            picf,
            rmse,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{normal_quantile, student_t_quantile};

    fn set(bounds: Vec<Interval>) -> IntervalSet {
        IntervalSet {
            bounds,
            alpha: 0.2,
            kind: IntervalKind::Confidence,
            method: Method::Bde,
        }
    }

    #[test]
    fn cicf_extremes() {
        let f = [0.0, 1.0, -3.0];
        let huge = set(vec![Interval { lower: -1e300, upper: 1e300 }; 3]);
        assert_eq!(cicf(&f, &[huge.clone(), huge]).unwrap(), [1.0; 3]);
        let point = set(vec![Interval { lower: 5.0, upper: 5.0 }; 3]);
        assert_eq!(cicf(&f, &[point]).unwrap(), [0.0; 3]);
        // closed containment
        let edge = set(vec![Interval { lower: 0.0, upper: 1.0 }; 3]);
        assert_eq!(cicf(&f, &[edge]).unwrap(), [1.0, 1.0, 0.0]);
        assert!(cicf(&f, &[set(vec![])]).is_err());
    }

    #[test]
    fn picf_examples() {
        let z = normal_quantile(0.9).unwrap();
        let sigma: f64 = 1.7;
        let iv = Interval::centered(2.0, z * sigma);
        let p = containment_probability(NoiseModel::Gaussian, 2.0, sigma * sigma, &iv).unwrap();
        assert!((p - 0.8).abs() < 1e-10);
        let empty = Interval { lower: 1.0, upper: 1.0 };
        assert_eq!(containment_probability(NoiseModel::Gaussian, 1.0, 1.0, &empty).unwrap(), 0.0);

        let t = student_t_quantile(3, 0.9).unwrap();
        let iv = Interval::centered(0.0, (1.0f64 / 3.0).sqrt() * sigma * t);
        let p = containment_probability(NoiseModel::StudentT3, 0.0, sigma * sigma, &iv).unwrap();
        assert!((p - 0.8).abs() < 1e-6);
    }

    #[test]
    fn brier_examples() {
        assert_eq!(brier(&[0.8, 0.8], 0.2).unwrap(), 0.0);
        assert!((brier(&[1.0; 4], 0.2).unwrap() - 0.04).abs() < 1e-15);
        assert!((brier(&[0.7, 0.9], 0.2).unwrap() - 0.01).abs() < 1e-15);
        assert!(brier(&[1.2], 0.2).is_err());
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        let t = [1.0, 4.0, 2.0, 9.0];
        let m = math::mean(&t);
        let pop_sd = (t.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / 4.0).sqrt();
        assert!((rmse(&[m; 4], &t).unwrap() - pop_sd).abs() < 1e-14);
        assert!(rmse(&[1.0], &[]).is_err());
    }

    #[test]
    fn decomposition_trivial_cases() {
        let same = vec![vec![1.0, 2.0]; 3];
        let d = variance_decomposition(&same, &same).unwrap();
        assert_eq!((d.sigma_t_sq, d.sigma_d_sq, d.clamped), (0.0, 0.0, false));
        let fixed = vec![vec![0.0, 1.0], vec![2.0, 3.0]];
        let d = variance_decomposition(&fixed, &fixed).unwrap();
        assert_eq!(d.sigma_t_sq, 2.0);
        assert_eq!(d.sigma_d_sq, 0.0);
        let narrow = vec![vec![0.0, 1.0], vec![0.5, 1.5]];
        assert!(variance_decomposition(&fixed, &narrow).unwrap().clamped);
        assert!(variance_decomposition(&fixed[..1], &fixed).is_err());
    }

    #[test]
    fn decomposition_check_ratio() {
        assert_eq!(decomposition_check(2.0, 1.5, 0.5).ratio, Some(1.0));
        assert_eq!(decomposition_check(0.0, 0.0, 0.0).ratio, None);
    }
}
