use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::math::Mat;

/// Per-column affine map to zero mean and unit (population) variance for
/// covariates and targets, fitted on one training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub x_mean: Vec<f64>,
    pub x_scale: Vec<f64>,
    pub y_mean: f64,
    pub y_scale: f64,
}

fn mean_and_scale(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl Standardizer {
    pub fn fit(data: &Dataset) -> Result<Self> {
        let n = data.len();
        if n < 2 {
            return Err(Error::invalid("standardizing needs at least two rows"));
        }
        let mut x_mean = Vec::with_capacity(data.dim());
        let mut x_scale = Vec::with_capacity(data.dim());
        for c in 0..data.dim() {
            let (m, s) = mean_and_scale(&data.x.column_values(c));
            if !(s > 0.0) {
                return Err(Error::invalid(format!("feature column {c} is constant")));
            }
            x_mean.push(m);
            x_scale.push(s);
        }
        let (y_mean, y_scale) = mean_and_scale(&data.y);
        if !(y_scale > 0.0) {
            return Err(Error::invalid("target is constant"));
        }
        Ok(Standardizer {
            x_mean,
            x_scale,
            y_mean,
            y_scale,
        })
    }

    pub fn transform_x(&self, x: &Mat) -> Result<Mat> {
        if x.cols() != self.x_mean.len() {
            return Err(Error::shape(format!(
                "{} columns, standardizer fitted on {}",
                x.cols(),
                self.x_mean.len()
            )));
        }
        let mut out = x.clone();
        for r in 0..out.rows() {
            for ((v, m), s) in out.row_mut(r).iter_mut().zip(&self.x_mean).zip(&self.x_scale) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }

    pub fn transform_y(&self, y: f64) -> f64 {
        (y - self.y_mean) / self.y_scale
    }

    pub fn transform(&self, data: &Dataset) -> Result<Dataset> {
        Dataset::new(
            self.transform_x(&data.x)?,
            data.y.iter().map(|&y| self.transform_y(y)).collect(),
        )
    }

    pub fn inverse_mean(&self, m: f64) -> f64 {
        self.y_mean + self.y_scale * m
    }

    pub fn inverse_variance(&self, v: f64) -> f64 {
        self.y_scale * self.y_scale * v
    }

    /// Maps an interval from the standardized target scale back.
    pub fn inverse_interval(&self, lower: f64, upper: f64) -> (f64, f64) {
        (self.inverse_mean(lower), self.inverse_mean(upper))
    }
}
