//! Confidence and prediction intervals from member predictions.
//!
//! Everything here works on the original target scale; member outputs are
//! inverted before they arrive (see [`crate::ensemble::Ensemble::predict`]).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{self, normal_quantile, student_t_quantile, RngStream};
use crate::math::dist::StudentTSampler;

/// Monte-Carlo draws per point for prediction intervals.
pub const DEFAULT_PI_DRAWS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntervalKind {
    Confidence,
    Prediction,
}

impl IntervalKind {
    pub fn short(self) -> &'static str {
        match self {
            IntervalKind::Confidence => "ci",
            IntervalKind::Prediction => "pi",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Bde,
    De,
    Nb,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Bde => "bde",
            Method::De => "de",
            Method::Nb => "nb",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bde" => Ok(Method::Bde),
            "de" => Ok(Method::De),
            "nb" => Ok(Method::Nb),
            other => Err(Error::invalid(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn centered(center: f64, half_width: f64) -> Self {
        Interval {
            lower: center - half_width,
            upper: center + half_width,
        }
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    /// Closed containment: endpoints count as inside.
    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

/// One method's intervals at one `alpha` over all test points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalSet {
    pub bounds: Vec<Interval>,
    pub alpha: f64,
    pub kind: IntervalKind,
    pub method: Method,
}

impl IntervalSet {
    pub fn mean_width(&self) -> f64 {
        math::mean(&self.bounds.iter().map(Interval::width).collect::<Vec<_>>())
    }
}

/// Per-member means and variances, indexed `[member][point]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberPredictions {
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

impl MemberPredictions {
    pub fn new(means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) -> Result<Self> {
        let n = means.first().map_or(0, Vec::len);
        if means.is_empty() || means.len() != variances.len() {
            return Err(Error::shape("need the same, nonzero number of mean and variance rows"));
        }
        if means.iter().chain(&variances).any(|r| r.len() != n) {
            return Err(Error::shape("members predict different numbers of points"));
        }
        Ok(MemberPredictions { means, variances })
    }

    pub fn n_members(&self) -> usize {
        self.means.len()
    }

    pub fn n_points(&self) -> usize {
        self.means[0].len()
    }

    pub fn means_at(&self, point: usize) -> Vec<f64> {
        self.means.iter().map(|m| m[point]).collect()
    }

    pub fn variances_at(&self, point: usize) -> Vec<f64> {
        self.variances.iter().map(|v| v[point]).collect()
    }

    /// Ensemble mean `f*` at every point.
    pub fn ensemble_mean(&self) -> Vec<f64> {
        (0..self.n_points()).map(|j| math::mean(&self.means_at(j))).collect()
    }
}

/// Summary statistics of the ensemble at one input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointPrediction {
    pub f_star: f64,
    pub sigma_t_sq: f64,
    pub sigma_d_sq: f64,
    /// Mean of the member variances.
    pub sigma_alea_sq: f64,
    pub m: usize,
}

impl PointPrediction {
    /// Statistics at one point from original and retrained member means and
    /// the original members' variances.
    pub fn from_members(means: &[f64], retrained_means: &[f64], variances: &[f64]) -> Result<Self> {
        if variances.len() != means.len() {
            return Err(Error::shape("means and variances differ in length"));
        }
        Ok(PointPrediction {
            f_star: math::mean(means),
            sigma_t_sq: estimate_sigma_t_sq(means)?,
            sigma_d_sq: estimate_sigma_d_sq(means, retrained_means)?,
            sigma_alea_sq: math::mean(variances),
            m: means.len(),
        })
    }

    /// Variance of the ensemble mean, `σ̂_d² + σ̂_t²/M`.
    pub fn epistemic_var(&self) -> f64 {
        self.sigma_d_sq + self.sigma_t_sq / self.m as f64
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("alpha {alpha} outside (0, 1)")))
    }
}

fn check_members(m: usize) -> Result<()> {
    if m < 2 {
        return Err(Error::invalid(format!("{m} members; need at least 2")));
    }
    Ok(())
}

/// `|t_{α/2}|` with `M - 1` degrees of freedom.
pub fn t_critical(m: usize, alpha: f64) -> Result<f64> {
    check_members(m)?;
    check_alpha(alpha)?;
    student_t_quantile(m - 1, 1.0 - alpha / 2.0)
}

/// Sample variance (divisor `M - 1`) of the member means.
pub fn estimate_sigma_t_sq(member_means: &[f64]) -> Result<f64> {
    check_members(member_means.len())?;
    Ok(math::sample_variance(member_means))
}

/// `M⁻¹ Σ (f̂_i − f̂̂_i)²`.
pub fn estimate_sigma_d_sq(original_means: &[f64], retrained_means: &[f64]) -> Result<f64> {
    if original_means.is_empty() || original_means.len() != retrained_means.len() {
        return Err(Error::shape(format!(
            "{} original and {} retrained members",
            original_means.len(),
            retrained_means.len()
        )));
    }
    let ss: f64 = original_means
        .iter()
        .zip(retrained_means)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(ss / original_means.len() as f64)
}

/// `f* ± |t_{α/2}^{(M−1)}| · sqrt(σ̂_d² + σ̂_t²/M)`.
pub fn bde_confidence_interval(p: &PointPrediction, alpha: f64) -> Result<Interval> {
    let t = t_critical(p.m, alpha)?;
    Ok(Interval::centered(p.f_star, t * p.epistemic_var().sqrt()))
}

/// Monte-Carlo prediction interval: `μ = f* + t·sqrt(σ̂_d² + σ̂_t²/M)` with
/// `t ~ t(M−1)`, then `y ~ N(μ, σ̂_alea²)`; the bounds are type-7 empirical
/// quantiles of `n_draws` such `y`.
pub fn bde_prediction_interval(
    p: &PointPrediction,
    alpha: f64,
    n_draws: usize,
    rng: &mut RngStream,
) -> Result<Interval> {
    Ok(bde_prediction_intervals(p, &[alpha], n_draws, rng)?[0])
}

/// [`bde_prediction_interval`] for several levels from one shared sample,
/// so intervals at smaller `alpha` always contain those at larger `alpha`.
pub fn bde_prediction_intervals(
    p: &PointPrediction,
    alphas: &[f64],
    n_draws: usize,
    rng: &mut RngStream,
) -> Result<Vec<Interval>> {
    check_members(p.m)?;
    for &a in alphas {
        check_alpha(a)?;
    }
    if n_draws < 2 {
        return Err(Error::invalid("prediction interval needs at least 2 draws"));
    }
    let draws = bde_predictive_draws(p, n_draws, rng)?;
    Ok(alphas
        .iter()
        .map(|&a| Interval {
            lower: math::sorted_quantile(&draws, a / 2.0),
            upper: math::sorted_quantile(&draws, 1.0 - a / 2.0),
        })
        .collect())
}

/// Sorted draws from the predictive distribution used by the prediction
/// interval.
pub fn bde_predictive_draws(p: &PointPrediction, n_draws: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
    check_members(p.m)?;
    let t = StudentTSampler::new(p.m - 1)?;
    let epi = p.epistemic_var().sqrt();
    let alea = p.sigma_alea_sq.sqrt();
    let mut draws: Vec<f64> = (0..n_draws)
        .map(|_| {
            let mu = p.f_star + t.sample(rng) * epi;
            mu + alea * rng.standard_normal()
        })
        .collect();
    draws.sort_by(f64::total_cmp);
    Ok(draws)
}

/// Mean and variance of the equally weighted Gaussian mixture of members.
pub fn de_mixture_moments(member_means: &[f64], member_variances: &[f64]) -> Result<(f64, f64)> {
    if member_means.is_empty() || member_means.len() != member_variances.len() {
        return Err(Error::shape("need equal, nonzero numbers of means and variances"));
    }
    let m = member_means.len() as f64;
    let f_star = member_means.iter().sum::<f64>() / m;
    let second = member_means.iter().map(|v| v * v).sum::<f64>() / m;
    let alea = member_variances.iter().sum::<f64>() / m;
    Ok((f_star, (second - f_star * f_star).max(0.0) + alea))
}

/// `f* ± z_{α/2} σ*`.
pub fn de_prediction_interval(f_star: f64, sigma_star_sq: f64, alpha: f64) -> Result<Interval> {
    check_alpha(alpha)?;
    if !(sigma_star_sq >= 0.0) {
        return Err(Error::invalid(format!("negative variance {sigma_star_sq}")));
    }
    let z = normal_quantile(1.0 - alpha / 2.0)?;
    Ok(Interval::centered(f_star, z * sigma_star_sq.sqrt()))
}

/// `f* ± |t_{α/2}^{(M−1)}|` times the divisor-`M` spread of member means.
pub fn de_confidence_interval(member_means: &[f64], alpha: f64) -> Result<Interval> {
    let t = t_critical(member_means.len(), alpha)?;
    let m = member_means.len() as f64;
    let f_star = member_means.iter().sum::<f64>() / m;
    let pop_var = member_means.iter().map(|v| (v - f_star) * (v - f_star)).sum::<f64>() / m;
    Ok(Interval::centered(f_star, t * pop_var.sqrt()))
}

/// Confidence and prediction intervals for every alpha, in the order
/// `[ci(α₀), pi(α₀), ci(α₁), pi(α₁), ...]`. DE and NB use the mixture
/// formulas; `retrained` is ignored for them.
pub fn interval_sets(
    method: Method,
    members: &MemberPredictions,
    retrained: Option<&MemberPredictions>,
    alphas: &[f64],
    n_draws: usize,
    rng: &RngStream,
) -> Result<Vec<IntervalSet>> {
    let n = members.n_points();
    let mut ci: Vec<Vec<Interval>> = vec![Vec::with_capacity(n); alphas.len()];
    let mut pi: Vec<Vec<Interval>> = vec![Vec::with_capacity(n); alphas.len()];
    for j in 0..n {
        let means = members.means_at(j);
        let vars = members.variances_at(j);
        match method {
            Method::Bde => {
                let retrained = retrained.ok_or_else(|| Error::invalid("BDE intervals need retrained members"))?;
                if retrained.n_points() != n {
                    return Err(Error::shape("retrained members predict different points"));
                }
                let p = PointPrediction::from_members(&means, &retrained.means_at(j), &vars)?;
                let mut point_rng = rng.derive("pi", j as u64);
                let pis = bde_prediction_intervals(&p, alphas, n_draws, &mut point_rng)?;
                for (k, &a) in alphas.iter().enumerate() {
                    ci[k].push(bde_confidence_interval(&p, a)?);
                    pi[k].push(pis[k]);
                }
            }
            Method::De | Method::Nb => {
                let (f_star, s2) = de_mixture_moments(&means, &vars)?;
                for (k, &a) in alphas.iter().enumerate() {
                    ci[k].push(de_confidence_interval(&means, a)?);
                    pi[k].push(de_prediction_interval(f_star, s2, a)?);
                }
            }
        }
    }
    let mut out = Vec::with_capacity(2 * alphas.len());
    for ((&alpha, c), p) in alphas.iter().zip(ci).zip(pi) {
        out.push(IntervalSet {
            bounds: c,
            alpha,
            kind: IntervalKind::Confidence,
            method,
        });
        out.push(IntervalSet {
            bounds: p,
            alpha,
            kind: IntervalKind::Prediction,
            method,
        });
    }
    Ok(out)
}
