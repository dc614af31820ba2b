use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand_distr::{Distribution, Gamma};

use super::rng::RngStream;
use super::special::{beta_reg, erfc, gamma_p, ln_gamma};
use crate::error::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal CDF `Φ(z)`.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

pub fn normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// `Φ⁻¹(p)`: rational initial guess refined by bracketed Newton on the
/// normal tail `Q(x) = erfc(x/√2)/2`. Working with the smaller of `p` and
/// `1 - p` keeps full relative accuracy deep in either tail.
pub fn normal_quantile(p: f64) -> Result<f64> {
    check_probability(p)?;
    if p == 0.5 {
        return Ok(0.0);
    }
    let tail = p.min(1.0 - p);
    let guess = -acklam(tail);
    let x = invert_cdf(
        -tail,
        guess,
        0.0,
        |x| -0.5 * erfc(x * FRAC_1_SQRT_2),
        normal_pdf,
    );
    Ok(if p < 0.5 { -x } else { x })
}

/// Student t CDF with `df` degrees of freedom, through the regularized
/// incomplete beta function.
pub fn student_t_cdf(df: f64, t: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return if t > 0.0 { 1.0 } else { 0.0 };
    }
    let t2 = t * t;
    let x = df / (df + t2);
    let y = t2 / (df + t2);
    let tail = 0.5 * beta_reg(0.5 * df, 0.5, x, y);
    if t > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

pub fn student_t_pdf(df: f64, t: f64) -> f64 {
    let ln_norm = ln_gamma(0.5 * (df + 1.0)) - ln_gamma(0.5 * df) - 0.5 * (df * PI).ln();
    (ln_norm - 0.5 * (df + 1.0) * (t * t / df).ln_1p()).exp()
}

/// Student t quantile. `q(1 - p) == -q(p)` holds exactly.
pub fn student_t_quantile(df: usize, p: f64) -> Result<f64> {
    if df == 0 {
        return Err(Error::invalid("t distribution needs df >= 1"));
    }
    check_probability(p)?;
    let nu = df as f64;
    Ok(symmetric_quantile(p, |q| {
        let guess = match df {
            1 => (PI * (q - 0.5)).tan(),
            2 => (2.0 * q - 1.0) / (2.0 * q * (1.0 - q)).sqrt(),
            _ => {
                let z = acklam(q);
                let z3 = z * z * z;
                z + (z3 + z) / (4.0 * nu) + (5.0 * z3 * z * z + 16.0 * z3 + 3.0 * z) / (96.0 * nu * nu)
            }
        };
        invert_cdf(q, guess, 0.0, |t| student_t_cdf(nu, t), |t| student_t_pdf(nu, t))
    }))
}

pub fn chi_square_cdf(df: f64, x: f64) -> f64 {
    gamma_p(0.5 * df, 0.5 * x)
}

/// CDF of the gamma distribution in shape/scale form.
pub fn gamma_cdf(shape: f64, scale: f64, x: f64) -> f64 {
    gamma_p(shape, x / scale)
}

/// Draw from `N(mu, sigma²)`; `sigma == 0` returns `mu` exactly.
pub fn normal_sample(rng: &mut RngStream, mu: f64, sigma: f64) -> Result<f64> {
    if !mu.is_finite() || !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::invalid(format!("normal(mu={mu}, sigma={sigma})")));
    }
    if sigma == 0.0 {
        return Ok(mu);
    }
    Ok(mu + sigma * rng.standard_normal())
}

/// Student t draw built as `Z / sqrt(χ²(df) / df)`.
pub fn student_t_sample(rng: &mut RngStream, df: usize) -> Result<f64> {
    Ok(StudentTSampler::new(df)?.sample(rng))
}

pub fn chi_square_sample(rng: &mut RngStream, df: usize) -> Result<f64> {
    if df == 0 {
        return Err(Error::invalid("chi-square needs df >= 1"));
    }
    Ok(chi_square_gamma(df as f64)?.sample(rng))
}

/// Gamma draw (shape/scale). Shapes below one go through the boosting
/// transform `Γ(shape + 1) · U^(1/shape)`, which `rand_distr` applies.
pub fn gamma_sample(rng: &mut RngStream, shape: f64, scale: f64) -> Result<f64> {
    Ok(gamma_distribution(shape, scale)?.sample(rng))
}

pub(crate) fn gamma_distribution(shape: f64, scale: f64) -> Result<Gamma<f64>> {
    if !(shape > 0.0 && scale > 0.0 && shape.is_finite() && scale.is_finite()) {
        return Err(Error::invalid(format!("gamma(shape={shape}, scale={scale})")));
    }
    Gamma::new(shape, scale).map_err(|e| Error::invalid(e.to_string()))
}

fn chi_square_gamma(df: f64) -> Result<Gamma<f64>> {
    gamma_distribution(0.5 * df, 2.0)
}

/// Reusable t sampler for hot loops.
#[derive(Debug, Clone)]
pub(crate) struct StudentTSampler {
    df: f64,
    chi2: Gamma<f64>,
}

impl StudentTSampler {
    pub(crate) fn new(df: usize) -> Result<Self> {
        if df == 0 {
            return Err(Error::invalid("t distribution needs df >= 1"));
        }
        Ok(StudentTSampler {
            df: df as f64,
            chi2: chi_square_gamma(df as f64)?,
        })
    }

    #[inline]
    pub(crate) fn sample(&self, rng: &mut RngStream) -> f64 {
        let z = rng.standard_normal();
        let c = self.chi2.sample(rng);
        z / (c / self.df).sqrt()
    }
}

fn check_probability(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("probability {p} outside (0, 1)")))
    }
}

/// Evaluates an upper-half quantile routine and mirrors it for `p < 1/2`.
fn symmetric_quantile(p: f64, upper: impl Fn(f64) -> f64) -> f64 {
    if p == 0.5 {
        0.0
    } else if p > 0.5 {
        upper(p)
    } else {
        -upper(1.0 - p)
    }
}

/// Newton iteration on `cdf(x) = p`, kept inside a bracket that falls back
/// to bisection whenever a step would leave it.
fn invert_cdf(
    p: f64,
    guess: f64,
    lower_bound: f64,
    cdf: impl Fn(f64) -> f64,
    pdf: impl Fn(f64) -> f64,
) -> f64 {
    let mut lo = lower_bound;
    let mut hi = guess.max(lower_bound + 1.0);
    while cdf(hi) < p {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return f64::INFINITY;
        }
    }
    let mut x = if guess > lo && guess < hi { guess } else { 0.5 * (lo + hi) };
    for _ in 0..300 {
        let f = cdf(x) - p;
        if f == 0.0 {
            return x;
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = pdf(x);
        let mut next = x - f / d;
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE) {
            return next;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi.abs() {
            return next;
        }
        x = next;
    }
    x
}

/// Acklam's rational approximation to `Φ⁻¹` (relative error ~1e-9), used
/// only as a starting point.
fn acklam(p: f64) -> f64 {
    #[allow(clippy::excessive_precision)]
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let p_low = 0.02425;
    if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}
