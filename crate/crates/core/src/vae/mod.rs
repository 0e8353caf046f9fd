//! Variational autoencoder over min-max scaled embeddings.
//!
//! The encoder is a ReLU MLP followed by two affine heads producing the mean
//! and log-variance of a diagonal Gaussian. The decoder mirrors the encoder
//! and ends in a sigmoid. Training minimizes binary cross-entropy plus the
//! closed-form KL divergence to a standard normal prior; the per-row loss at
//! `z = mu` is the out-of-domain score.

mod io;
mod train;

pub use io::{load_model, save_model, MODEL_FILE, WEIGHTS_FILE};
pub use train::{
    calibrate_threshold, detect_ood, reconstruction_scores, train, write_loss_history, EpochLoss,
    OodDecision,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::dataset::ScalerStats;
use crate::{Error, Result, Scalar};

/// Decoder outputs are clamped to `[SIGMOID_CLAMP, 1 - SIGMOID_CLAMP]`.
pub const SIGMOID_CLAMP: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VaeConfig {
    pub encoder_hidden: Vec<usize>,
    pub latent_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub early_stop_patience: usize,
}

impl Default for VaeConfig {
    fn default() -> Self {
        Self {
            encoder_hidden: vec![512, 256, 128, 64],
            latent_dim: 32,
            epochs: 100,
            batch_size: 64,
            learning_rate: 1e-3,
            seed: 0,
            early_stop_patience: 10,
        }
    }
}

impl VaeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.encoder_hidden.contains(&0) {
            return Err(Error::InvalidConfig(
                "hidden widths must be at least 1".into(),
            ));
        }
        if self.latent_dim == 0 {
            return Err(Error::InvalidConfig("latent_dim must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(
                "learning_rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerRole {
    Encoder,
    MuHead,
    LogvarHead,
    Decoder,
}

/// Shape and location of one affine layer inside the flat parameter vector.
/// The weight is stored `input × output`, row-major, followed by the bias.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub role: LayerRole,
    pub input: usize,
    pub output: usize,
    pub offset: usize,
}

impl LayerShape {
    pub fn num_params(&self) -> usize {
        self.input * self.output + self.output
    }

    fn weight_range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.input * self.output
    }

    fn bias_range(&self) -> std::ops::Range<usize> {
        let start = self.offset + self.input * self.output;
        start..start + self.output
    }
}

fn layer_shapes(dim: usize, hidden: &[usize], latent: usize) -> Vec<LayerShape> {
    let mut shapes = Vec::new();
    let mut offset = 0;
    let mut push = |role, input, output| {
        let s = LayerShape {
            role,
            input,
            output,
            offset,
        };
        offset += s.num_params();
        shapes.push(s);
    };
    let mut prev = dim;
    for &w in hidden {
        push(LayerRole::Encoder, prev, w);
        prev = w;
    }
    push(LayerRole::MuHead, prev, latent);
    push(LayerRole::LogvarHead, prev, latent);
    let mut prev = latent;
    for &w in hidden.iter().rev() {
        push(LayerRole::Decoder, prev, w);
        prev = w;
    }
    push(LayerRole::Decoder, prev, dim);
    shapes
}

#[derive(Clone, Debug, PartialEq)]
pub struct VaeModel<T> {
    config: VaeConfig,
    dim: usize,
    layers: Vec<LayerShape>,
    params: Vec<T>,
    scaler: ScalerStats,
    threshold: Option<f64>,
}

/// Per-row (or batch-mean) loss terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LossBreakdown<T> {
    pub reconstruction: T,
    pub kl: T,
    pub total: T,
}

/// Glorot-uniform weights, zero biases; deterministic in `cfg.seed`.
pub fn init_model<T: Scalar>(
    cfg: &VaeConfig,
    dim: usize,
    scaler: ScalerStats,
) -> Result<VaeModel<T>> {
    cfg.validate()?;
    if dim == 0 {
        return Err(Error::InvalidConfig(
            "input dimension must be at least 1".into(),
        ));
    }
    if scaler.dim() != dim {
        return Err(Error::DimMismatch {
            expected: dim,
            got: scaler.dim(),
        });
    }
    let layers = layer_shapes(dim, &cfg.encoder_hidden, cfg.latent_dim);
    let total = layers.iter().map(LayerShape::num_params).sum();
    let mut params = vec![T::zero(); total];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for layer in &layers {
        let limit = (6.0 / (layer.input + layer.output) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
        for p in &mut params[layer.weight_range()] {
            *p = T::from_f64_lossy(dist.sample(&mut rng));
        }
    }
    Ok(VaeModel {
        config: cfg.clone(),
        dim,
        layers,
        params,
        scaler,
        threshold: None,
    })
}

impl<T: Scalar> VaeModel<T> {
    pub fn config(&self) -> &VaeConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn scaler(&self) -> &ScalerStats {
        &self.scaler
    }

    pub fn threshold(&self) -> Option<f64> {
        self.threshold
    }

    pub fn set_threshold(&mut self, t: Option<f64>) {
        self.threshold = t;
    }

    fn encoder_layers(&self) -> &[LayerShape] {
        &self.layers[..self.config.encoder_hidden.len()]
    }

    fn mu_head(&self) -> &LayerShape {
        &self.layers[self.config.encoder_hidden.len()]
    }

    fn logvar_head(&self) -> &LayerShape {
        &self.layers[self.config.encoder_hidden.len() + 1]
    }

    fn decoder_layers(&self) -> &[LayerShape] {
        &self.layers[self.config.encoder_hidden.len() + 2..]
    }

    /// Mean and log-variance of the latent Gaussian for one scaled row.
    pub fn encode(&self, x: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        self.check_input(x.len())?;
        let h = self.encoder_forward(x, 1, &mut Vec::new());
        let mu = affine(&self.params, self.mu_head(), &h, 1);
        let logvar = affine(&self.params, self.logvar_head(), &h, 1);
        Ok((mu, logvar))
    }

    /// Clamped sigmoid reconstruction of one latent vector.
    pub fn decode(&self, z: &[T]) -> Result<Vec<T>> {
        if z.len() != self.latent_dim() {
            return Err(Error::DimMismatch {
                expected: self.latent_dim(),
                got: z.len(),
            });
        }
        let logits = self.decoder_forward(z, 1, &mut Vec::new());
        Ok(logits.into_iter().map(clamped_sigmoid).collect())
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: len,
            });
        }
        Ok(())
    }

    /// Returns the last hidden activation; `acts` receives the input of every
    /// encoder layer.
    fn encoder_forward(&self, x: &[T], rows: usize, acts: &mut Vec<Vec<T>>) -> Vec<T> {
        let mut h = x.to_vec();
        for layer in self.encoder_layers() {
            let mut next = affine(&self.params, layer, &h, rows);
            relu_in_place(&mut next);
            acts.push(std::mem::replace(&mut h, next));
        }
        h
    }

    /// Returns output logits; `acts` receives the input of every decoder layer.
    fn decoder_forward(&self, z: &[T], rows: usize, acts: &mut Vec<Vec<T>>) -> Vec<T> {
        let layers = self.decoder_layers();
        let mut h = z.to_vec();
        for (k, layer) in layers.iter().enumerate() {
            let mut next = affine(&self.params, layer, &h, rows);
            if k + 1 < layers.len() {
                relu_in_place(&mut next);
            }
            acts.push(std::mem::replace(&mut h, next));
        }
        h
    }

    /// Mean-over-rows loss of a row-major batch of scaled rows with the given
    /// standard-normal draws (`rows × latent_dim`).
    pub fn batch_loss(&self, batch: &[T], eps: &[T]) -> Result<LossBreakdown<T>> {
        Ok(self.forward(batch, eps)?.mean_loss())
    }

    /// Per-row losses of a batch.
    pub fn row_losses(&self, batch: &[T], eps: &[T]) -> Result<Vec<LossBreakdown<T>>> {
        Ok(self.forward(batch, eps)?.row_losses())
    }

    fn forward(&self, batch: &[T], eps: &[T]) -> Result<Forward<T>> {
        if !batch.len().is_multiple_of(self.dim) {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: batch.len() % self.dim,
            });
        }
        let rows = batch.len() / self.dim;
        let latent = self.latent_dim();
        if eps.len() != rows * latent {
            return Err(Error::LengthMismatch {
                left: eps.len(),
                right: rows * latent,
            });
        }
        let mut enc_acts = Vec::new();
        let h = self.encoder_forward(batch, rows, &mut enc_acts);
        let mu = affine(&self.params, self.mu_head(), &h, rows);
        let logvar = affine(&self.params, self.logvar_head(), &h, rows);
        let z = reparameterize(&mu, &logvar, eps);
        let mut dec_acts = Vec::new();
        let logits = self.decoder_forward(&z, rows, &mut dec_acts);
        let xhat = logits.into_iter().map(clamped_sigmoid).collect();
        Ok(Forward {
            rows,
            dim: self.dim,
            latent,
            y: batch.to_vec(),
            enc_acts,
            h,
            mu,
            logvar,
            eps: eps.to_vec(),
            dec_acts,
            xhat,
        })
    }

    /// Batch-mean loss and its exact gradient with respect to every parameter,
    /// including the pathwise term through the reparameterization.
    pub fn loss_and_gradient(&self, batch: &[T], eps: &[T]) -> Result<(LossBreakdown<T>, Vec<T>)> {
        let fwd = self.forward(batch, eps)?;
        let loss = fwd.mean_loss();
        let rows = fwd.rows;
        let inv_rows = T::one() / T::from_usize_lossy(rows);
        let mut grad = vec![T::zero(); self.params.len()];
        let lo = T::from_f64_lossy(SIGMOID_CLAMP);
        let hi = T::one() - lo;

        // d(BCE)/d(logit) = xhat - y inside the clamp, 0 where the clamp is active
        let mut delta: Vec<T> = fwd
            .xhat
            .iter()
            .zip(&fwd.y)
            .map(|(&p, &y)| {
                if p > lo && p < hi {
                    (p - y) * inv_rows
                } else {
                    T::zero()
                }
            })
            .collect();

        let dec_layers = self.decoder_layers();
        for (k, layer) in dec_layers.iter().enumerate().rev() {
            let input = &fwd.dec_acts[k];
            let mut d_input = affine_backward(&self.params, layer, input, &delta, rows, &mut grad);
            if k > 0 {
                relu_backward(&mut d_input, input);
            }
            delta = d_input;
        }
        // delta is now dL/dz
        let half = T::from_f64_lossy(0.5);
        let mut d_mu = vec![T::zero(); delta.len()];
        let mut d_logvar = vec![T::zero(); delta.len()];
        for j in 0..delta.len() {
            let (mu, lv, e) = (fwd.mu[j], fwd.logvar[j], fwd.eps[j]);
            let sigma = (lv * half).exp();
            d_mu[j] = delta[j] + mu * inv_rows;
            d_logvar[j] = delta[j] * half * sigma * e + half * (lv.exp() - T::one()) * inv_rows;
        }
        let mut d_h = affine_backward(&self.params, self.mu_head(), &fwd.h, &d_mu, rows, &mut grad);
        let d_h_lv = affine_backward(
            &self.params,
            self.logvar_head(),
            &fwd.h,
            &d_logvar,
            rows,
            &mut grad,
        );
        for (a, b) in d_h.iter_mut().zip(d_h_lv) {
            *a += b;
        }
        let enc_layers = self.encoder_layers();
        if !enc_layers.is_empty() {
            relu_backward(&mut d_h, &fwd.h);
        }
        for (k, layer) in enc_layers.iter().enumerate().rev() {
            let input = &fwd.enc_acts[k];
            let mut d_input = affine_backward(&self.params, layer, input, &d_h, rows, &mut grad);
            if k > 0 {
                relu_backward(&mut d_input, input);
            }
            d_h = d_input;
        }
        Ok((loss, grad))
    }

    /// Active/inactive state of every hidden ReLU unit for a batch.
    pub fn relu_pattern(&self, batch: &[T], eps: &[T]) -> Result<Vec<bool>> {
        let fwd = self.forward(batch, eps)?;
        let mut pattern = Vec::new();
        let mut record = |act: &[T]| pattern.extend(act.iter().map(|&v| v > T::zero()));
        if !self.encoder_layers().is_empty() {
            fwd.enc_acts[1..].iter().for_each(|a| record(a));
            record(&fwd.h);
        }
        fwd.dec_acts[1..].iter().for_each(|a| record(a));
        Ok(pattern)
    }

    /// Copy of the model with every parameter rounded through `f32`.
    pub fn round_to_f32(&self) -> Self {
        let mut out = self.clone();
        for p in &mut out.params {
            *p = T::from_f64_lossy(p.to_f64_lossy() as f32 as f64);
        }
        out
    }
}

struct Forward<T> {
    rows: usize,
    dim: usize,
    latent: usize,
    y: Vec<T>,
    enc_acts: Vec<Vec<T>>,
    h: Vec<T>,
    mu: Vec<T>,
    logvar: Vec<T>,
    eps: Vec<T>,
    dec_acts: Vec<Vec<T>>,
    xhat: Vec<T>,
}

impl<T: Scalar> Forward<T> {
    fn row_losses(&self) -> Vec<LossBreakdown<T>> {
        (0..self.rows)
            .map(|r| {
                let d = r * self.dim..(r + 1) * self.dim;
                let l = r * self.latent..(r + 1) * self.latent;
                let reconstruction = bce(&self.y[d.clone()], &self.xhat[d]);
                let kl = kl_divergence(&self.mu[l.clone()], &self.logvar[l]);
                LossBreakdown {
                    reconstruction,
                    kl,
                    total: reconstruction + kl,
                }
            })
            .collect()
    }

    fn mean_loss(&self) -> LossBreakdown<T> {
        let losses = self.row_losses();
        let n = T::from_usize_lossy(self.rows.max(1));
        let reconstruction = losses.iter().map(|l| l.reconstruction).sum::<T>() / n;
        let kl = losses.iter().map(|l| l.kl).sum::<T>() / n;
        LossBreakdown {
            reconstruction,
            kl,
            total: reconstruction + kl,
        }
    }
}

/// `z = mu + exp(logvar / 2) ⊙ eps`.
pub fn reparameterize<T: Scalar>(mu: &[T], logvar: &[T], eps: &[T]) -> Vec<T> {
    let half = T::from_f64_lossy(0.5);
    mu.iter()
        .zip(logvar)
        .zip(eps)
        .map(|((&m, &lv), &e)| m + (lv * half).exp() * e)
        .collect()
}

/// KL divergence of `N(mu, exp(logvar))` from the standard normal.
pub fn kl_divergence<T: Scalar>(mu: &[T], logvar: &[T]) -> T {
    let half = T::from_f64_lossy(0.5);
    half * mu
        .iter()
        .zip(logvar)
        .map(|(&m, &lv)| lv.exp() + m * m - T::one() - lv)
        .sum::<T>()
}

fn bce<T: Scalar>(y: &[T], xhat: &[T]) -> T {
    -y.iter()
        .zip(xhat)
        .map(|(&t, &p)| t * p.ln() + (T::one() - t) * (T::one() - p).ln())
        .sum::<T>()
}

/// Loss of one row: binary cross-entropy summed over dimensions plus KL.
/// Reconstructions must lie strictly inside `(0, 1)`.
pub fn loss<T: Scalar>(y: &[T], xhat: &[T], mu: &[T], logvar: &[T]) -> Result<LossBreakdown<T>> {
    if y.len() != xhat.len() {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: xhat.len(),
        });
    }
    if mu.len() != logvar.len() {
        return Err(Error::LengthMismatch {
            left: mu.len(),
            right: logvar.len(),
        });
    }
    if xhat.iter().any(|&p| !(p > T::zero() && p < T::one())) {
        return Err(Error::InvalidConfig(
            "reconstruction outside the open unit interval".into(),
        ));
    }
    let reconstruction = bce(y, xhat);
    let kl = kl_divergence(mu, logvar);
    Ok(LossBreakdown {
        reconstruction,
        kl,
        total: reconstruction + kl,
    })
}

fn clamped_sigmoid<T: Scalar>(v: T) -> T {
    let lo = T::from_f64_lossy(SIGMOID_CLAMP);
    let s = T::one() / (T::one() + (-v).exp());
    s.max(lo).min(T::one() - lo)
}

fn relu_in_place<T: Scalar>(v: &mut [T]) {
    for x in v {
        if *x < T::zero() {
            *x = T::zero();
        }
    }
}

/// Zeroes gradient entries whose ReLU output was not positive.
fn relu_backward<T: Scalar>(grad: &mut [T], activation: &[T]) {
    for (g, &a) in grad.iter_mut().zip(activation) {
        if a <= T::zero() {
            *g = T::zero();
        }
    }
}

/// `rows × input` times `input × output`, plus bias.
fn affine<T: Scalar>(params: &[T], layer: &LayerShape, input: &[T], rows: usize) -> Vec<T> {
    let w = &params[layer.weight_range()];
    let b = &params[layer.bias_range()];
    let mut out = Vec::with_capacity(rows * layer.output);
    for r in 0..rows {
        out.extend_from_slice(b);
        let o = &mut out[r * layer.output..];
        for (i, &x) in input[r * layer.input..(r + 1) * layer.input]
            .iter()
            .enumerate()
        {
            if x == T::zero() {
                continue;
            }
            let w_row = &w[i * layer.output..(i + 1) * layer.output];
            for (acc, &wv) in o.iter_mut().zip(w_row) {
                *acc += x * wv;
            }
        }
    }
    out
}

/// Accumulates weight/bias gradients into `grad` and returns the gradient with
/// respect to the layer input.
fn affine_backward<T: Scalar>(
    params: &[T],
    layer: &LayerShape,
    input: &[T],
    d_out: &[T],
    rows: usize,
    grad: &mut [T],
) -> Vec<T> {
    let (n_in, n_out) = (layer.input, layer.output);
    {
        let (gw, gb) =
            grad[layer.offset..layer.offset + layer.num_params()].split_at_mut(n_in * n_out);
        for r in 0..rows {
            let d = &d_out[r * n_out..(r + 1) * n_out];
            for (acc, &dv) in gb.iter_mut().zip(d) {
                *acc += dv;
            }
            for (i, &x) in input[r * n_in..(r + 1) * n_in].iter().enumerate() {
                if x == T::zero() {
                    continue;
                }
                for (acc, &dv) in gw[i * n_out..(i + 1) * n_out].iter_mut().zip(d) {
                    *acc += x * dv;
                }
            }
        }
    }
    let w = &params[layer.weight_range()];
    let mut d_in = vec![T::zero(); rows * n_in];
    for r in 0..rows {
        let d = &d_out[r * n_out..(r + 1) * n_out];
        for i in 0..n_in {
            d_in[r * n_in + i] = crate::linalg::dot(&w[i * n_out..(i + 1) * n_out], d);
        }
    }
    d_in
}
