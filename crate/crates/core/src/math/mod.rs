//! Numerical building blocks shared by every other module.

pub(crate) mod dist;
mod mat;
mod rng;
pub mod special;

pub use dist::{
    chi_square_cdf, chi_square_sample, gamma_cdf, gamma_sample, normal_cdf, normal_pdf,
    normal_quantile, normal_sample, student_t_cdf, student_t_pdf, student_t_quantile,
    student_t_sample,
};
pub use mat::Mat;
pub use rng::{RngStream, StreamState};

/// Linear-interpolation (type 7) quantile of an already sorted slice.
pub fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Arithmetic mean; `NaN` for an empty slice.
pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased (divisor `n - 1`) sample variance.
pub fn sample_variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() as f64 - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type7_quantile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(sorted_quantile(&v, 0.0), 1.0);
        assert_eq!(sorted_quantile(&v, 1.0), 4.0);
        assert!((sorted_quantile(&v, 0.5) - 2.5).abs() < 1e-15);
        assert!((sorted_quantile(&v, 0.9) - 3.7).abs() < 1e-12);
    }

    #[test]
    fn sample_variance_matches_hand_value() {
        assert!((sample_variance(&[1.0, 2.0, 3.0, 4.0, 5.0]) - 2.5).abs() < 1e-15);
    }
}
