//! Feed-forward binary classifier: ReLU hidden layers, one sigmoid output,
//! mean binary cross-entropy with L2 on weights, trained by Adam on seeded
//! mini-batches.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpParams {
    pub hidden_sizes: Vec<usize>,
    pub activation: Activation,
    pub l2_alpha: f64,
    /// `None` means `min(200, n)`.
    pub batch_size: Option<usize>,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            hidden_sizes: vec![100],
            activation: Activation::Relu,
            l2_alpha: 1e-4,
            batch_size: None,
            learning_rate: 1e-3,
            max_epochs: 200,
            seed: 0,
        }
    }
}

impl MlpParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParam("learning_rate must be > 0".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidParam("max_epochs must be >= 1".into()));
        }
        if self.hidden_sizes.contains(&0) {
            return Err(Error::InvalidParam("hidden layer sizes must be positive".into()));
        }
        if self.batch_size == Some(0) {
            return Err(Error::InvalidParam("batch_size must be positive".into()));
        }
        if self.l2_alpha.is_nan() || self.l2_alpha < 0.0 {
            return Err(Error::InvalidParam("l2_alpha must be >= 0".into()));
        }
        Ok(())
    }

    pub fn effective_batch_size(&self, n: usize) -> usize {
        self.batch_size.unwrap_or(200).min(n).max(1)
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// Dense layer, weights stored input-major: `weights[i * n_out + o]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer<T> {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<T>,
    pub biases: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network<T> {
    pub layers: Vec<Layer<T>>,
}

#[inline]
fn relu<T: Scalar>(v: T) -> T {
    v.max(T::zero())
}

#[inline]
fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + e^z) - y z`, stable for large `|z|`.
#[inline]
fn bce_with_logit<T: Scalar>(z: T, y: T) -> T {
    z.max(T::zero()) - y * z + (-z.abs()).exp().ln_1p()
}

impl<T: Scalar> Network<T> {
    /// Glorot-uniform weights, zero biases.
    pub fn init(sizes: &[usize], rng: &mut rng::Rng) -> Self {
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (n_in, n_out) = (w[0], w[1]);
                let bound = (6.0 / (n_in + n_out) as f64).sqrt();
                Layer {
                    n_in,
                    n_out,
                    weights: (0..n_in * n_out)
                        .map(|_| T::lit(rng.gen_range(-bound..bound)))
                        .collect(),
                    biases: vec![T::zero(); n_out],
                }
            })
            .collect();
        Self { layers }
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Flattened parameters: each layer's weights then biases, in order.
    pub fn params(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[T]) {
        assert_eq!(flat.len(), self.n_params());
        let mut k = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&flat[k..k + nw]);
            k += nw;
            let nb = l.biases.len();
            l.biases.copy_from_slice(&flat[k..k + nb]);
            k += nb;
        }
    }

    fn sum_sq_weights(&self) -> T {
        self.layers.iter().flat_map(|l| l.weights.iter()).map(|&w| w * w).sum()
    }

    /// Pre-activations of every layer for a batch of `rows` inputs. The last
    /// entry holds the output logits.
    fn forward(&self, x: &[T], rows: usize) -> Vec<Vec<T>> {
        let mut pre: Vec<Vec<T>> = Vec::with_capacity(self.layers.len());
        let mut input: Vec<T> = x.to_vec();
        for (li, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(rows * layer.n_out);
            for r in 0..rows {
                z.extend_from_slice(&layer.biases);
                let zr = &mut z[r * layer.n_out..];
                for (i, &a) in input[r * layer.n_in..(r + 1) * layer.n_in].iter().enumerate() {
                    if a == T::zero() {
                        continue;
                    }
                    let w = &layer.weights[i * layer.n_out..(i + 1) * layer.n_out];
                    for (zo, &wo) in zr.iter_mut().zip(w) {
                        *zo += a * wo;
                    }
                }
            }
            if li + 1 < self.layers.len() {
                input = z.iter().map(|&v| relu(v)).collect();
            }
            pre.push(z);
        }
        pre
    }

    /// Output logits for `rows` (already standardized) inputs.
    pub fn logits(&self, x: &[T], rows: usize) -> Vec<T> {
        self.forward(x, rows).pop().unwrap_or_default()
    }

    /// Objective on one batch: mean binary cross-entropy plus
    /// `alpha / (2 * rows) * ||W||^2` over all weights (biases excluded).
    pub fn loss(&self, x: &[T], y: &[u8], alpha: T) -> T {
        let rows = y.len();
        let logits = self.logits(x, rows);
        let n = T::from_count(rows);
        let data: T = logits
            .iter()
            .zip(y)
            .map(|(&z, &t)| bce_with_logit(z, T::from_count(usize::from(t))))
            .sum();
        data / n + alpha / (T::lit(2.0) * n) * self.sum_sq_weights()
    }

    /// Batch objective and its gradient, flattened like [`Network::params`].
    pub fn loss_and_gradient(&self, x: &[T], y: &[u8], alpha: T) -> (T, Vec<T>) {
        let rows = y.len();
        let n = T::from_count(rows);
        let pre = self.forward(x, rows);
        let logits = pre.last().expect("at least one layer");

        let mut data = T::zero();
        let mut delta: Vec<T> = Vec::with_capacity(rows);
        for (&z, &t) in logits.iter().zip(y) {
            let t = T::from_count(usize::from(t));
            data += bce_with_logit(z, t);
            delta.push((sigmoid(z) - t) / n);
        }
        let loss = data / n + alpha / (T::lit(2.0) * n) * self.sum_sq_weights();

        let mut grads: Vec<(Vec<T>, Vec<T>)> = Vec::with_capacity(self.layers.len());
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let input: Vec<T> = if li == 0 {
                x.to_vec()
            } else {
                pre[li - 1].iter().map(|&v| relu(v)).collect()
            };
            let mut gw: Vec<T> = layer.weights.iter().map(|&w| alpha / n * w).collect();
            let mut gb = vec![T::zero(); layer.n_out];
            for r in 0..rows {
                let d = &delta[r * layer.n_out..(r + 1) * layer.n_out];
                for (g, &dv) in gb.iter_mut().zip(d) {
                    *g += dv;
                }
                for (i, &a) in input[r * layer.n_in..(r + 1) * layer.n_in].iter().enumerate() {
                    if a == T::zero() {
                        continue;
                    }
                    for (g, &dv) in gw[i * layer.n_out..(i + 1) * layer.n_out].iter_mut().zip(d) {
                        *g += a * dv;
                    }
                }
            }
            if li > 0 {
                let z_prev = &pre[li - 1];
                let mut next = vec![T::zero(); rows * layer.n_in];
                for r in 0..rows {
                    let d = &delta[r * layer.n_out..(r + 1) * layer.n_out];
                    for i in 0..layer.n_in {
                        if z_prev[r * layer.n_in + i] <= T::zero() {
                            continue;
                        }
                        let w = &layer.weights[i * layer.n_out..(i + 1) * layer.n_out];
                        next[r * layer.n_in + i] = w.iter().zip(d).map(|(&wv, &dv)| wv * dv).sum();
                    }
                }
                delta = next;
            }
            grads.push((gw, gb));
        }
        let mut flat = Vec::with_capacity(self.n_params());
        for (gw, gb) in grads.into_iter().rev() {
            flat.extend(gw);
            flat.extend(gb);
        }
        (loss, flat)
    }
}

/// Per-feature z-score transform captured at fit time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer<T> {
    pub mean: Vec<T>,
    pub std: Vec<T>,
}

impl<T: Scalar> Standardizer<T> {
    /// Population standard deviation; constant features get `std = 1`.
    pub fn fit(ds: &Dataset<T>) -> Self {
        let n = T::from_count(ds.n_samples());
        let d = ds.n_features();
        let mut mean = vec![T::zero(); d];
        for row in ds.rows() {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![T::zero(); d];
        for row in ds.rows() {
            for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > T::zero() {
                    sd
                } else {
                    T::one()
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn transform(&self, x: &[T]) -> Vec<T> {
        let d = self.mean.len();
        x.iter()
            .enumerate()
            .map(|(k, &v)| (v - self.mean[k % d]) / self.std[k % d])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel<T> {
    pub standardizer: Standardizer<T>,
    pub network: Network<T>,
    /// Mean training objective per epoch.
    pub loss_curve: Vec<T>,
}

impl<T: Scalar> MlpModel<T> {
    pub fn n_features(&self) -> usize {
        self.network.n_inputs()
    }

    /// Class-1 probabilities for a row-major matrix of raw features.
    pub fn predict_proba(&self, x: &[T]) -> Vec<T> {
        let rows = x.len() / self.n_features().max(1);
        let z = self.standardizer.transform(x);
        self.network.logits(&z, rows).into_iter().map(sigmoid).collect()
    }
}

struct Adam<T> {
    m: Vec<T>,
    v: Vec<T>,
    step: i32,
    lr: T,
    b1: T,
    b2: T,
    eps: T,
}

impl<T: Scalar> Adam<T> {
    fn new(n: usize, lr: f64) -> Self {
        Self {
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            step: 0,
            lr: T::lit(lr),
            b1: T::lit(ADAM_BETA1),
            b2: T::lit(ADAM_BETA2),
            eps: T::lit(ADAM_EPSILON),
        }
    }

    fn update(&mut self, params: &mut [T], grad: &[T]) {
        self.step += 1;
        let one = T::one();
        let c1 = one - self.b1.powi(self.step);
        let c2 = one - self.b2.powi(self.step);
        for k in 0..params.len() {
            let g = grad[k];
            self.m[k] = self.b1 * self.m[k] + (one - self.b1) * g;
            self.v[k] = self.b2 * self.v[k] + (one - self.b2) * g * g;
            let m_hat = self.m[k] / c1;
            let v_hat = self.v[k] / c2;
            params[k] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Trains for exactly `max_epochs` epochs (no early stopping). The seed
/// drives weight initialization and the per-epoch reshuffle.
pub fn train_mlp<T: Scalar>(train: &Dataset<T>, params: &MlpParams) -> Result<MlpModel<T>> {
    params.validate()?;
    train.require_both_classes()?;
    let d = train.n_features();
    if d == 0 {
        return Err(Error::InvalidDataset("no features".into()));
    }
    let n = train.n_samples();
    let standardizer = Standardizer::fit(train);
    let x = standardizer.transform(train.features());

    let mut rng = rng::seeded(params.seed);
    let mut sizes = vec![d];
    sizes.extend(&params.hidden_sizes);
    sizes.push(1);
    let mut network = Network::<T>::init(&sizes, &mut rng);

    let alpha = T::lit(params.l2_alpha);
    let batch = params.effective_batch_size(n);
    let mut adam = Adam::new(network.n_params(), params.learning_rate);
    let mut order: Vec<usize> = (0..n).collect();
    let mut flat = network.params();
    let mut loss_curve = Vec::with_capacity(params.max_epochs);
    let mut xb: Vec<T> = Vec::with_capacity(batch * d);
    let mut yb: Vec<u8> = Vec::with_capacity(batch);

    for epoch in 0..params.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = T::zero();
        for chunk in order.chunks(batch) {
            xb.clear();
            yb.clear();
            for &i in chunk {
                xb.extend_from_slice(&x[i * d..(i + 1) * d]);
                yb.push(train.labels()[i]);
            }
            let (loss, grad) = network.loss_and_gradient(&xb, &yb, alpha);
            if !loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite loss {loss:?} in epoch {epoch} (batch of {})",
                    chunk.len()
                )));
            }
            epoch_loss += loss * T::from_count(chunk.len());
            adam.update(&mut flat, &grad);
            network.set_params(&flat);
        }
        loss_curve.push(epoch_loss / T::from_count(n));
    }
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged("non-finite weights after training".into()));
    }
    Ok(MlpModel {
        standardizer,
        network,
        loss_curve,
    })
}
