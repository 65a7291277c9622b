//! Learned time embedding feeding a small feed-forward regressor.
//!
//! The embedding maps a scaled time scalar to `k` dimensions: unit 0 is
//! linear (`w*tau + b`), units 1..k are sinusoidal (`sin(w_i*tau + b_i)`).
//! The embedding, the standardized feature vector and a normalized horizon
//! input are concatenated and passed through ReLU layers of 128/64/32 units
//! with a scalar linear head. Everything (including the embedding
//! frequencies) trains by backprop with Adam; the analytic gradients are
//! checked against finite differences in the test suite.
//!
//! One network serves every horizon: the normalized horizon `h/144` is an
//! input rather than one model per step. Training is single-threaded and
//! bit-deterministic for a fixed seed.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ModelError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct T2vConfig {
    /// Embedding width: 1 linear unit + (k-1) periodic units.
    pub embed_dim: usize,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Early-stop patience in epochs on the validation tail; 0 disables.
    pub patience: usize,
    /// Fraction of training rows held out (time-ordered tail) for early
    /// stopping.
    pub val_fraction: f64,
    /// Horizon normalizer: `h_frac = h / horizon_cap`.
    pub horizon_cap: usize,
    pub seed: u64,
}

impl Default for T2vConfig {
    fn default() -> Self {
        Self {
            embed_dim: 64,
            hidden: vec![128, 64, 32],
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 200,
            patience: 20,
            val_fraction: 0.1,
            horizon_cap: 144,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub n_in: usize,
    pub n_out: usize,
    /// Row-major `n_out x n_in`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn forward(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.n_out {
            let row = &self.weights[o * self.n_in..(o + 1) * self.n_in];
            let mut acc = self.bias[o];
            for (w, x) in row.iter().zip(input) {
                acc += w * x;
            }
            out.push(acc);
        }
    }
}

/// All trainable parameters plus the input/output scalings captured at
/// training time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct T2vParams {
    pub omega: Vec<f64>,
    pub phase: Vec<f64>,
    /// Hidden layers (ReLU) followed by the scalar linear head.
    pub layers: Vec<DenseLayer>,
    pub n_features: usize,
    /// Denominator scaling block index to tau.
    pub tau_denom: f64,
    /// Target centering/scaling: predictions are `mean + std * net_out`.
    pub y_mean: f64,
    pub y_std: f64,
}

impl T2vParams {
    pub fn embed_dim(&self) -> usize {
        self.omega.len()
    }

    pub fn input_dim(&self) -> usize {
        self.embed_dim() + self.n_features + 1
    }

    /// Time embedding: element 0 is linear, the rest sinusoidal.
    pub fn embed(&self, tau: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.omega.len());
        out.push(self.omega[0] * tau + self.phase[0]);
        for i in 1..self.omega.len() {
            out.push((self.omega[i] * tau + self.phase[i]).sin());
        }
        out
    }

    fn assemble_input(&self, tau: f64, features: &[f64], h_frac: f64) -> Vec<f64> {
        let mut input = self.embed(tau);
        input.extend_from_slice(features);
        input.push(h_frac);
        input
    }

    /// Network output in internal (standardized-target) units.
    pub fn forward(&self, tau: f64, features: &[f64], h_frac: f64) -> Result<f64, ModelError> {
        if features.len() != self.n_features {
            return Err(ModelError::ShapeMismatch(format!(
                "{} features, expected {}",
                features.len(),
                self.n_features
            )));
        }
        let mut act = self.assemble_input(tau, features, h_frac);
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            layer.forward(&act, &mut next);
            if li < last {
                for v in next.iter_mut() {
                    *v = v.max(0.0);
                }
            }
            std::mem::swap(&mut act, &mut next);
        }
        Ok(act[0])
    }

    /// Prediction on the raw target scale.
    pub fn predict(&self, tau: f64, features: &[f64], h_frac: f64) -> Result<f64, ModelError> {
        Ok(self.y_mean + self.y_std * self.forward(tau, features, h_frac)?)
    }

    /// Flatten every trainable parameter in a fixed order (omega, phase,
    /// then each layer's weights and bias).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.omega);
        out.extend_from_slice(&self.phase);
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    /// Inverse of [`flatten`].
    pub fn load_flat(&mut self, flat: &[f64]) {
        let mut pos = 0;
        let k = self.omega.len();
        self.omega.copy_from_slice(&flat[pos..pos + k]);
        pos += k;
        self.phase.copy_from_slice(&flat[pos..pos + k]);
        pos += k;
        for l in self.layers.iter_mut() {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&flat[pos..pos + nw]);
            pos += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&flat[pos..pos + nb]);
            pos += nb;
        }
        debug_assert_eq!(pos, flat.len());
    }
}

/// One training sample in network units: the target is on the standardized
/// scale.
#[derive(Debug, Clone)]
pub struct Sample {
    pub tau: f64,
    pub features: Vec<f64>,
    pub h_frac: f64,
    pub target: f64,
}

/// Mean squared error over the batch plus the gradient with respect to the
/// flattened parameter vector.
pub fn loss_and_grad(params: &T2vParams, batch: &[Sample]) -> (f64, Vec<f64>) {
    let k = params.embed_dim();
    let n_layers = params.layers.len();
    let mut grad_omega = vec![0.0; k];
    let mut grad_phase = vec![0.0; k];
    let mut grad_layers: Vec<(Vec<f64>, Vec<f64>)> = params
        .layers
        .iter()
        .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]))
        .collect();

    let mut loss = 0.0;
    let scale = 1.0 / batch.len().max(1) as f64;

    for sample in batch {
        // Forward with caches.
        let input = params.assemble_input(sample.tau, &sample.features, sample.h_frac);
        let mut pre: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
        activations.push(input);
        for (li, layer) in params.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.forward(activations.last().unwrap(), &mut z);
            pre.push(z.clone());
            if li < n_layers - 1 {
                for v in z.iter_mut() {
                    *v = v.max(0.0);
                }
            }
            activations.push(z);
        }
        let out = activations.last().unwrap()[0];
        let err = out - sample.target;
        loss += err * err * scale;

        // Backward.
        let mut delta = vec![2.0 * err * scale];
        for li in (0..n_layers).rev() {
            let layer = &params.layers[li];
            let (gw, gb) = &mut grad_layers[li];
            let below = &activations[li];
            for o in 0..layer.n_out {
                gb[o] += delta[o];
                let row = &mut gw[o * layer.n_in..(o + 1) * layer.n_in];
                for (g, x) in row.iter_mut().zip(below) {
                    *g += delta[o] * x;
                }
            }
            if li == 0 {
                // Propagate into the embedding parameters.
                let mut dinput = vec![0.0; layer.n_in];
                for o in 0..layer.n_out {
                    let row = &layer.weights[o * layer.n_in..(o + 1) * layer.n_in];
                    for (di, w) in dinput.iter_mut().zip(row) {
                        *di += delta[o] * w;
                    }
                }
                grad_omega[0] += dinput[0] * sample.tau;
                grad_phase[0] += dinput[0];
                for i in 1..k {
                    let arg = params.omega[i] * sample.tau + params.phase[i];
                    let c = arg.cos();
                    grad_omega[i] += dinput[i] * c * sample.tau;
                    grad_phase[i] += dinput[i] * c;
                }
            } else {
                let mut below_delta = vec![0.0; layer.n_in];
                for o in 0..layer.n_out {
                    let row = &layer.weights[o * layer.n_in..(o + 1) * layer.n_in];
                    for (bd, w) in below_delta.iter_mut().zip(row) {
                        *bd += delta[o] * w;
                    }
                }
                // ReLU derivative of the layer below.
                for (bd, z) in below_delta.iter_mut().zip(&pre[li - 1]) {
                    if *z <= 0.0 {
                        *bd = 0.0;
                    }
                }
                delta = below_delta;
            }
        }
    }

    let mut flat = Vec::new();
    flat.extend_from_slice(&grad_omega);
    flat.extend_from_slice(&grad_phase);
    for (gw, gb) in grad_layers {
        flat.extend(gw);
        flat.extend(gb);
    }
    (loss, flat)
}

fn init_params(cfg: &T2vConfig, n_features: usize, tau_denom: f64, rng: &mut ChaCha8Rng) -> T2vParams {
    let k = cfg.embed_dim.max(2);
    let mut omega = vec![0.0; k];
    let mut phase = vec![0.0; k];
    omega[0] = 1.0;
    // Periodic frequencies log-spaced over block-unit periods of 14.4 to
    // 1440 blocks, converted to tau units by the tau denominator.
    let lo = (2.0 * std::f64::consts::PI / 1440.0) * tau_denom;
    let hi = (2.0 * std::f64::consts::PI * 10.0 / 144.0) * tau_denom;
    for i in 1..k {
        let frac = (i - 1) as f64 / (k - 2).max(1) as f64;
        omega[i] = lo * (hi / lo).powf(frac);
        phase[i] = rng.random_range(0.0..std::f64::consts::TAU);
    }

    let mut dims = vec![k + n_features + 1];
    dims.extend_from_slice(&cfg.hidden);
    dims.push(1);
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for w in dims.windows(2) {
        let (n_in, n_out) = (w[0], w[1]);
        let bound = (6.0 / (n_in + n_out) as f64).sqrt();
        let weights = (0..n_in * n_out).map(|_| rng.random_range(-bound..bound)).collect();
        layers.push(DenseLayer { n_in, n_out, weights, bias: vec![0.0; n_out] });
    }

    T2vParams { omega, phase, layers, n_features, tau_denom, y_mean: 0.0, y_std: 1.0 }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: usize,
    lr: f64,
}

impl Adam {
    fn new(dim: usize, lr: f64) -> Self {
        Self { m: vec![0.0; dim], v: vec![0.0; dim], t: 0, lr }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        let bc1 = 1.0 - B1.powi(self.t as i32);
        let bc2 = 1.0 - B2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + EPS);
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct T2vModel {
    pub params: T2vParams,
    pub config: T2vConfig,
    pub train_len: usize,
    /// Full-train loss of the best-so-far snapshot per epoch
    /// (non-increasing by construction).
    pub train_loss_history: Vec<f64>,
    pub val_loss_history: Vec<f64>,
}

impl T2vModel {
    pub fn tau_of_row(&self, row: usize) -> f64 {
        row as f64 / self.params.tau_denom
    }
}

fn dataset_loss(params: &T2vParams, samples: &[Sample]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let mut loss = 0.0;
    for s in samples {
        let out = params.forward(s.tau, &s.features, s.h_frac).expect("shapes fixed");
        loss += (out - s.target).powi(2);
    }
    loss / samples.len() as f64
}

/// Train on `features` (row-major, standardized) against the raw-scale
/// target `y`. The last `val_fraction` of rows form the early-stopping
/// tail; the returned model carries the best-validation snapshot.
pub fn train(features: &[Vec<f64>], y: &[f64], cfg: &T2vConfig) -> Result<T2vModel, ModelError> {
    let n = y.len();
    if features.len() != n {
        return Err(ModelError::LengthMismatch(format!(
            "{} feature rows vs {} targets",
            features.len(),
            n
        )));
    }
    if n < 20 {
        return Err(ModelError::TooFewRows(format!("{n} rows; need at least 20")));
    }
    let n_features = features[0].len();
    if features.iter().any(|r| r.len() != n_features) {
        return Err(ModelError::ShapeMismatch("ragged feature rows".into()));
    }

    let val_len = if cfg.patience > 0 {
        ((n as f64 * cfg.val_fraction).round() as usize).clamp(1, n / 2)
    } else {
        0
    };
    let grow_len = n - val_len;

    let tau_denom = (n - 1).max(1) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = init_params(cfg, n_features, tau_denom, &mut rng);

    // Center/scale the target on the grow slice.
    let (y_mean, raw_std) = feecast_core::prep::mean_std(&y[..grow_len]);
    let y_std = if raw_std == 0.0 { 1.0 } else { raw_std };
    params.y_mean = y_mean;
    params.y_std = y_std;

    let make_sample = |row: usize, h_frac: f64| Sample {
        tau: row as f64 / tau_denom,
        features: features[row].clone(),
        h_frac,
        target: (y[row] - y_mean) / y_std,
    };

    let eval_grow: Vec<Sample> = (0..grow_len).map(|r| make_sample(r, 1.0)).collect();
    let eval_val: Vec<Sample> = (grow_len..n).map(|r| make_sample(r, 1.0)).collect();

    let mut flat = params.flatten();
    let mut adam = Adam::new(flat.len(), cfg.learning_rate);
    let mut indices: Vec<usize> = (0..grow_len).collect();

    let mut best_val = f64::INFINITY;
    let mut best_val_flat = flat.clone();
    let mut best_train = f64::INFINITY;
    let mut best_train_flat = flat.clone();
    let mut stale_epochs = 0usize;
    let mut train_history = Vec::new();
    let mut val_history = Vec::new();

    for epoch in 0..cfg.max_epochs {
        indices.shuffle(&mut rng);
        for chunk in indices.chunks(cfg.batch_size.max(1)) {
            let batch: Vec<Sample> = chunk
                .iter()
                .map(|&r| {
                    let h = rng.random_range(1..=cfg.horizon_cap.max(1));
                    make_sample(r, h as f64 / cfg.horizon_cap.max(1) as f64)
                })
                .collect();
            params.load_flat(&flat);
            let (batch_loss, grad) = loss_and_grad(&params, &batch);
            if !batch_loss.is_finite() {
                return Err(ModelError::Diverged(epoch));
            }
            adam.step(&mut flat, &grad);
        }
        params.load_flat(&flat);

        let train_loss = dataset_loss(&params, &eval_grow);
        if !train_loss.is_finite() {
            return Err(ModelError::Diverged(epoch));
        }
        if train_loss < best_train {
            best_train = train_loss;
            best_train_flat = flat.clone();
        }
        train_history.push(best_train);

        if val_len > 0 {
            let val_loss = dataset_loss(&params, &eval_val);
            val_history.push(val_loss);
            if val_loss < best_val - 1e-12 {
                best_val = val_loss;
                best_val_flat = flat.clone();
                stale_epochs = 0;
            } else {
                stale_epochs += 1;
                if stale_epochs >= cfg.patience {
                    break;
                }
            }
        }
    }

    let chosen = if val_len > 0 { best_val_flat } else { best_train_flat };
    params.load_flat(&chosen);

    Ok(T2vModel {
        params,
        config: cfg.clone(),
        train_len: n,
        train_loss_history: train_history,
        val_loss_history: val_history,
    })
}

/// Forecast `horizon` rows past the training window. `future_features`
/// holds one standardized feature row per step (the caller fills them with
/// its carry policy).
pub fn forecast(
    model: &T2vModel,
    horizon: usize,
    future_features: &[Vec<f64>],
) -> Result<Vec<f64>, ModelError> {
    if horizon == 0 {
        return Err(ModelError::HorizonNonPositive);
    }
    if future_features.len() != horizon {
        return Err(ModelError::ShapeMismatch(format!(
            "{} future feature rows, expected {horizon}",
            future_features.len()
        )));
    }
    let cap = model.config.horizon_cap.max(1) as f64;
    let mut out = Vec::with_capacity(horizon);
    for (j, feats) in future_features.iter().enumerate() {
        let row = model.train_len + j;
        let h_frac = (j + 1) as f64 / cap;
        out.push(model.params.predict(model.tau_of_row(row), feats, h_frac)?);
    }
    Ok(out)
}
