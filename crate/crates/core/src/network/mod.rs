//! Dual-head MLP trained with the Gaussian negative log-likelihood.
//!
//! The last layer has two linear outputs: the mean `m(x)` and a raw
//! log-scale `s(x)`. The predicted variance is `exp(s(x)) + floor`, so it is
//! bounded below by the floor whatever the weights are.
//!
//! All training happens on standardized data (see [`Standardizer`]).

mod adam;
mod checkpoint;
mod standardize;
mod train;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use adam::AdamState;
pub use checkpoint::Checkpoint;
pub use standardize::Standardizer;
pub use train::{resume_train, resume_train_run, train, train_with_checkpoints, BatchOrder, TrainRun};

use crate::error::{Error, Result};
use crate::math::{Mat, RngStream};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum VarianceTransform {
    #[default]
    Exp,
}

/// Architecture and optimisation settings of one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_sizes: Vec<usize>,
    pub activation: Activation,
    pub variance_floor: f64,
    /// Weight-decay strength; `None` means `1 / n_train`.
    pub l2_coefficient: Option<f64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub variance_transform: VarianceTransform,
}

impl MlpConfig {
    /// Three hidden ReLU layers of 40, 30 and 20 units, 80 epochs of ADAM
    /// (lr 1e-3) in batches of 32, variance floor 1e-3, L2 of `1/n`.
    pub fn new(input_dim: usize) -> Self {
        MlpConfig {
            input_dim,
            hidden_sizes: vec![40, 30, 20],
            activation: Activation::Relu,
            variance_floor: 1e-3,
            l2_coefficient: None,
            epochs: 80,
            batch_size: 32,
            learning_rate: 1e-3,
            variance_transform: VarianceTransform::Exp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::invalid("input_dim must be positive"));
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return Err(Error::invalid("hidden_sizes must be nonempty and positive"));
        }
        if !(self.variance_floor > 0.0) {
            return Err(Error::invalid("variance_floor must be positive"));
        }
        if let Some(l2) = self.l2_coefficient {
            if !(l2 >= 0.0 && l2.is_finite()) {
                return Err(Error::invalid("l2_coefficient must be finite and >= 0"));
            }
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch_size must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        Ok(())
    }

    /// Effective L2 strength for a training set of `n` rows.
    pub fn l2_for(&self, n: usize) -> f64 {
        self.l2_coefficient.unwrap_or(1.0 / n as f64)
    }

    /// Layer widths including input and the two-unit output.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden_sizes.len() + 2);
        w.push(self.input_dim);
        w.extend(&self.hidden_sizes);
        w.push(2);
        w
    }

    /// SHA-256 of the canonical JSON form; stored in checkpoints.
    pub fn digest(&self) -> [u8; 32] {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).into()
    }
}

/// One affine layer; `weights` is `fan_in × fan_out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: Mat,
    pub bias: Vec<f64>,
}

/// All weights and biases of a network. Gradients and ADAM moments use the
/// same shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub layers: Vec<Dense>,
}

impl NetworkParams {
    pub fn zeros(cfg: &MlpConfig) -> Self {
        let w = cfg.widths();
        NetworkParams {
            layers: w
                .windows(2)
                .map(|p| Dense {
                    weights: Mat::zeros(p[0], p[1]),
                    bias: vec![0.0; p[1]],
                })
                .collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        NetworkParams {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    weights: Mat::zeros(l.weights.rows(), l.weights.cols()),
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    /// He-uniform hidden layers; the output mean column is Glorot-uniform
    /// and the raw-variance column `U(±1e-3)`, so the initial variance is
    /// close to `1 + floor`. Biases start at zero.
    pub fn init(cfg: &MlpConfig, rng: &mut RngStream) -> Self {
        let mut params = NetworkParams::zeros(cfg);
        let n_layers = params.layers.len();
        for (li, layer) in params.layers.iter_mut().enumerate() {
            let fan_in = layer.weights.rows();
            let fan_out = layer.weights.cols();
            let last = li + 1 == n_layers;
            let he = (6.0 / fan_in as f64).sqrt();
            let glorot = (6.0 / (fan_in + 1) as f64).sqrt();
            for r in 0..fan_in {
                for c in 0..fan_out {
                    let limit = match (last, c) {
                        (false, _) => he,
                        (true, 0) => glorot,
                        (true, _) => 1e-3,
                    };
                    layer.weights.set(r, c, limit * (2.0 * rng.uniform() - 1.0));
                }
            }
        }
        params
    }

    pub fn matches(&self, cfg: &MlpConfig) -> bool {
        let w = cfg.widths();
        self.layers.len() + 1 == w.len()
            && self.layers.iter().zip(w.windows(2)).all(|(l, p)| {
                l.weights.rows() == p[0] && l.weights.cols() == p[1] && l.bias.len() == p[1]
            })
    }

    /// Weight matrices and bias vectors, in layer order.
    pub fn tensors(&self) -> impl Iterator<Item = &[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
    }

    pub fn len(&self) -> usize {
        self.tensors().map(<[f64]>::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().flatten().copied().collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.len() {
            return Err(Error::shape(format!("{} values for {} parameters", values.len(), self.len())));
        }
        let mut it = values.iter();
        for t in self.tensors_mut() {
            for v in t {
                *v = *it.next().expect("length checked");
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().flatten().all(|v| v.is_finite())
    }

    /// `Σ w²` over weight matrices (biases excluded).
    pub fn weight_sq_norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.as_slice())
            .map(|w| w * w)
            .sum()
    }
}

/// Gaussian negative log-likelihood of one observation.
#[inline]
pub fn nll_loss(mean: f64, variance: f64, y: f64) -> f64 {
    let r = y - mean;
    0.5 * (LN_2PI + variance.ln()) + r * r / (2.0 * variance)
}

/// Forward pass for one input; returns `(mean, variance)`.
pub fn forward(params: &NetworkParams, cfg: &MlpConfig, x: &[f64]) -> Result<(f64, f64)> {
    if x.len() != cfg.input_dim {
        return Err(Error::shape(format!("input has {} features, network expects {}", x.len(), cfg.input_dim)));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite input"));
    }
    let input = Mat::from_vec(1, x.len(), x.to_vec())?;
    let (m, v) = predict(params, cfg, &input);
    if !(m[0].is_finite() && v[0].is_finite()) {
        return Err(Error::Diverged {
            epoch: 0,
            detail: "non-finite network output".into(),
        });
    }
    Ok((m[0], v[0]))
}

/// Batched forward pass; returns per-row means and variances.
pub fn predict(params: &NetworkParams, cfg: &MlpConfig, x: &Mat) -> (Vec<f64>, Vec<f64>) {
    let acts = propagate(params, x);
    let out = acts.last().expect("at least one layer");
    let means = out.iter_rows().map(|r| r[0]).collect();
    let vars = out
        .iter_rows()
        .map(|r| variance_from_raw(r[1], cfg.variance_floor))
        .collect();
    (means, vars)
}

#[inline]
fn variance_from_raw(s: f64, floor: f64) -> f64 {
    s.exp() + floor
}

/// Layer outputs: ReLU activations for hidden layers, the raw linear
/// output for the last one.
fn propagate(params: &NetworkParams, x: &Mat) -> Vec<Mat> {
    let n_layers = params.layers.len();
    let mut outs: Vec<Mat> = Vec::with_capacity(n_layers);
    for (li, layer) in params.layers.iter().enumerate() {
        let input = if li == 0 { x } else { &outs[li - 1] };
        let fan_out = layer.weights.cols();
        let mut out = Mat::zeros(input.rows(), fan_out);
        for b in 0..input.rows() {
            let o = out.row_mut(b);
            o.copy_from_slice(&layer.bias);
            for (i, &a) in input.row(b).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (ov, &w) in o.iter_mut().zip(layer.weights.row(i)) {
                    *ov += a * w;
                }
            }
            if li + 1 < n_layers {
                for v in o.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
        }
        outs.push(out);
    }
    outs
}

/// Mean NLL over the batch plus `l2 · Σw²`.
pub fn batch_loss(params: &NetworkParams, cfg: &MlpConfig, x: &Mat, y: &[f64], l2: f64) -> f64 {
    let (m, v) = predict(params, cfg, x);
    let nll: f64 = m.iter().zip(&v).zip(y).map(|((&m, &v), &y)| nll_loss(m, v, y)).sum();
    nll / y.len() as f64 + l2 * params.weight_sq_norm()
}

/// Batch loss and its exact gradient.
///
/// The raw-variance head sees `dL/ds = dL/dv · exp(s)`; the floor is an
/// additive constant inside `v` and only enters through `v` itself.
pub fn backward(
    params: &NetworkParams,
    cfg: &MlpConfig,
    x: &Mat,
    y: &[f64],
    l2: f64,
) -> Result<(f64, NetworkParams)> {
    if y.is_empty() || x.rows() != y.len() {
        return Err(Error::shape(format!("batch of {} rows with {} targets", x.rows(), y.len())));
    }
    let acts = propagate(params, x);
    let out = acts.last().expect("at least one layer");
    let batch = y.len() as f64;
    let mut nll = 0.0;
    let mut delta = Mat::zeros(out.rows(), 2);
    for (b, &target) in y.iter().enumerate() {
        let m = out.get(b, 0);
        let s = out.get(b, 1);
        let es = s.exp();
        let v = es + cfg.variance_floor;
        let r = target - m;
        nll += nll_loss(m, v, target);
        delta.set(b, 0, -r / v / batch);
        delta.set(b, 1, (0.5 / v - r * r / (2.0 * v * v)) * es / batch);
    }
    let loss = nll / batch + l2 * params.weight_sq_norm();

    let mut grad = params.zeros_like();
    for li in (0..params.layers.len()).rev() {
        let layer = &params.layers[li];
        let input = if li == 0 { x } else { &acts[li - 1] };
        let g = &mut grad.layers[li];
        for b in 0..input.rows() {
            let d = delta.row(b);
            for (gb, &dv) in g.bias.iter_mut().zip(d) {
                *gb += dv;
            }
            for (i, &a) in input.row(b).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (gw, &dv) in g.weights.row_mut(i).iter_mut().zip(d) {
                    *gw += a * dv;
                }
            }
        }
        if l2 != 0.0 {
            for (gw, &w) in g.weights.as_mut_slice().iter_mut().zip(layer.weights.as_slice()) {
                *gw += 2.0 * l2 * w;
            }
        }
        if li > 0 {
            let mut prev = Mat::zeros(input.rows(), input.cols());
            for b in 0..input.rows() {
                let d = delta.row(b);
                let a_row = input.row(b);
                let p = prev.row_mut(b);
                for (i, pv) in p.iter_mut().enumerate() {
                    // ReLU: zero activation means a zero (or negative) pre-activation.
                    if a_row[i] > 0.0 {
                        *pv = layer.weights.row(i).iter().zip(d).map(|(w, dv)| w * dv).sum();
                    }
                }
            }
            delta = prev;
        }
    }
    if !loss.is_finite() {
        return Err(Error::Diverged {
            epoch: 0,
            detail: format!("non-finite batch loss {loss}"),
        });
    }
    Ok((loss, grad))
}
