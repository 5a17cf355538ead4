//! Training: MSE loss, Adam with bias correction, the mini-batch loop with
//! chronological validation split and early stopping, and a finite-difference
//! gradient checker.

use chrono::{TimeZone, Utc};

use crate::data::WindowSample;
use crate::error::{Error, Result};
use crate::layers::{conv1d_backward, dense_backward, maxpool1d_backward, relu_backward};
use crate::model::{
    build_bp_mlp, build_paper_cnn, forward_trace, model_forward, CnnSpec, ForwardTrace, Layer,
    MlpSpec, Model,
};
use crate::rng::Prng;
use crate::tensor::Tensor;

/// Gradient clip bound applied elementwise when `clip_gradients` is on.
pub const CLIP_VALUE: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub patience: usize,
    pub val_fraction: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub clip_gradients: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            epochs: 200,
            batch_size: 32,
            seed: 42,
            patience: 20,
            val_fraction: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_gradients: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Spec(format!(
                "learning_rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Spec("batch_size must be >= 1".into()));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::Spec(format!(
                "val_fraction must be in (0, 1), got {}",
                self.val_fraction
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Spec(format!(
                "beta1/beta2 must be in [0, 1), got {} / {}",
                self.beta1, self.beta2
            )));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::Spec(format!(
                "epsilon must be positive and finite, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Adam moments, one pair of tensors per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &[&Tensor]) -> Self {
        let zeros: Vec<Tensor> = params
            .iter()
            .map(|p| Tensor::new(p.shape().clone(), 0.0).expect("zero fill is finite"))
            .collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// Squared-error loss for one prediction: (loss, dloss/dpred).
pub fn mse_loss(pred: f64, target: f64) -> (f64, f64) {
    let d = pred - target;
    (d * d, 2.0 * d)
}

/// One Adam update over all parameter tensors. The step counter increments
/// first so bias correction at t=1 uses (1 - beta^1). `names` labels the
/// tensors in error messages; it must align with `params`.
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &[Tensor],
    names: &[String],
    state: &mut AdamState,
    config: &TrainConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Argument(format!(
            "adam_step: {} params, {} grads, {} moment tensors",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, g) in grads.iter().enumerate() {
        let name = names.get(i).map(String::as_str).unwrap_or("<unnamed>");
        if g.dims() != params[i].dims() {
            return Err(Error::Argument(format!(
                "adam_step: gradient shape {} does not match {name} shape {}",
                g.shape(),
                params[i].shape()
            )));
        }
        if !g.all_finite() {
            return Err(Error::Training(format!("non-finite gradient in {name}")));
        }
    }
    state.t += 1;
    let bc1 = 1.0 - config.beta1.powi(state.t as i32);
    let bc2 = 1.0 - config.beta2.powi(state.t as i32);
    for i in 0..params.len() {
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let p = params[i].data_mut();
        let g = grads[i].data();
        for j in 0..p.len() {
            let gj = if config.clip_gradients {
                g[j].clamp(-CLIP_VALUE, CLIP_VALUE)
            } else {
                g[j]
            };
            m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * gj;
            v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * gj * gj;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            p[j] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
        }
    }
    Ok(())
}

/// Backward sweep over the whole stack for one sample. Returns parameter
/// gradients aligned with `model.params()` order.
pub fn backward(model: &Model, trace: &ForwardTrace, dloss_dpred: f64) -> Result<Vec<Tensor>> {
    let n = model.layers.len();
    if trace.inputs.len() != n {
        return Err(Error::Internal(format!(
            "trace has {} layer inputs for {} layers",
            trace.inputs.len(),
            n
        )));
    }
    let mut grad = Tensor::new(crate::tensor::Shape::new(&trace.output_dims)?, dloss_dpred)?;
    let mut per_layer: Vec<Option<(Tensor, Tensor)>> = vec![None; n];
    for i in (0..n).rev() {
        let input = &trace.inputs[i];
        match &model.layers[i] {
            Layer::Conv(c) => {
                let g = conv1d_backward(c, input, &grad)?;
                per_layer[i] = Some((
                    g.grad_weights.expect("conv backward yields weight grads"),
                    g.grad_bias.expect("conv backward yields bias grads"),
                ));
                grad = g.grad_input;
            }
            Layer::Pool(_) => {
                let idx = trace.pool_indices[i]
                    .as_ref()
                    .ok_or_else(|| Error::Internal("missing pool argmax trace".into()))?;
                grad = maxpool1d_backward(idx, &grad, input.shape())?;
            }
            Layer::Relu => grad = relu_backward(input, &grad)?,
            Layer::Flatten => grad = grad.reshape(input.dims())?,
            Layer::Dense(d) => {
                let g = dense_backward(d, input, &grad)?;
                per_layer[i] = Some((
                    g.grad_weights.expect("dense backward yields weight grads"),
                    g.grad_bias.expect("dense backward yields bias grads"),
                ));
                grad = g.grad_input;
            }
        }
    }
    let mut out = Vec::new();
    for pair in per_layer.into_iter().flatten() {
        out.push(pair.0);
        out.push(pair.1);
    }
    Ok(out)
}

/// Per-epoch loss curves plus the early-stopping outcome.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: Option<usize>,
    pub best_val_loss: Option<f64>,
}

impl TrainHistory {
    /// CSV export: `epoch,train_loss,val_loss`, 6 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for (e, (tr, va)) in self.train_loss.iter().zip(&self.val_loss).enumerate() {
            out.push_str(&format!("{e},{tr:.5e},{va:.5e}\n"));
        }
        out
    }
}

/// Chronological validation split: the trailing `val_fraction` of samples
/// (at least 1, at most n-1; none when only one sample exists). Returns
/// (fit, val) in target-time order.
pub fn split_validation(
    samples: &[WindowSample],
    val_fraction: f64,
) -> (Vec<&WindowSample>, Vec<&WindowSample>) {
    let mut ordered: Vec<&WindowSample> = samples.iter().collect();
    ordered.sort_by_key(|w| w.target_time);
    let n = ordered.len();
    let n_val = if n >= 2 {
        ((n as f64 * val_fraction).floor() as usize).clamp(1, n - 1)
    } else {
        0
    };
    let val = ordered.split_off(n - n_val);
    (ordered, val)
}

/// Mean MSE of the model over a sample set (normalized space).
pub fn mean_mse(model: &Model, samples: &[&WindowSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Argument("cannot average over zero samples".into()));
    }
    let mut sum = 0.0;
    for s in samples {
        let (loss, _) = mse_loss(model_forward(model, &s.input)?, s.target);
        sum += loss;
    }
    Ok(sum / samples.len() as f64)
}

/// Mini-batch training with Adam and early stopping. Deterministic given the
/// initial model, the data, and `config.seed`: shuffling uses the seeded
/// PRNG and gradient reduction order is fixed. Returns the model restored to
/// its best-validation-epoch parameters.
pub fn train(
    model: Model,
    train_set: &[WindowSample],
    config: &TrainConfig,
) -> Result<(Model, TrainHistory)> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Argument("train_set must be non-empty".into()));
    }
    let mut history = TrainHistory::default();
    if config.epochs == 0 {
        return Ok((model, history));
    }

    let (fit, val) = split_validation(train_set, config.val_fraction);
    let mut work = model;
    let names = work.param_names();
    let mut state = AdamState::new(&work.params());
    let mut rng = Prng::new(config.seed);
    let mut indices: Vec<usize> = (0..fit.len()).collect();
    let mut best: Option<(f64, Vec<Tensor>, usize)> = None;
    let mut since_best = 0usize;

    for epoch in 0..config.epochs {
        for i in (1..indices.len()).rev() {
            let j = rng.next_index(i + 1);
            indices.swap(i, j);
        }
        let mut epoch_loss_sum = 0.0;
        for (batch_no, batch) in indices.chunks(config.batch_size).enumerate() {
            let mut accum: Vec<Tensor> = work
                .params()
                .iter()
                .map(|p| Tensor::new(p.shape().clone(), 0.0).expect("zero fill is finite"))
                .collect();
            for &si in batch {
                let sample = fit[si];
                let trace = forward_trace(&work, &sample.input)?;
                let (loss, dloss) = mse_loss(trace.output, sample.target);
                if !loss.is_finite() {
                    return Err(Error::Training(format!(
                        "non-finite loss at epoch {epoch}, batch {batch_no}"
                    )));
                }
                epoch_loss_sum += loss;
                let grads = backward(&work, &trace, dloss)?;
                for (a, g) in accum.iter_mut().zip(&grads) {
                    for (av, gv) in a.data_mut().iter_mut().zip(g.data()) {
                        *av += gv;
                    }
                }
            }
            // mean, not sum: keeps the learning rate batch-size-insensitive
            let scale = 1.0 / batch.len() as f64;
            for a in &mut accum {
                for v in a.data_mut() {
                    *v *= scale;
                }
            }
            let mut params = work.params_mut();
            adam_step(&mut params, &accum, &names, &mut state, config)?;
        }
        let train_loss = epoch_loss_sum / fit.len() as f64;
        // with a degenerate single-sample set there is no holdout; fall back
        // to the train loss so the early-stopping signal stays defined
        let val_loss = if val.is_empty() {
            train_loss
        } else {
            mean_mse(&work, &val)?
        };
        history.train_loss.push(train_loss);
        history.val_loss.push(val_loss);
        if best.as_ref().is_none_or(|(b, _, _)| val_loss < *b) {
            let snapshot = work.params().iter().map(|p| (*p).clone()).collect();
            best = Some((val_loss, snapshot, epoch));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }

    if let Some((val_loss, snapshot, epoch)) = best {
        for (p, b) in work.params_mut().into_iter().zip(&snapshot) {
            *p = b.clone();
        }
        history.best_epoch = Some(epoch);
        history.best_val_loss = Some(val_loss);
    }
    Ok((work, history))
}

fn loss_at(model: &Model, sample: &WindowSample) -> Result<f64> {
    Ok(mse_loss(model_forward(model, &sample.input)?, sample.target).0)
}

/// Compare every backprop partial derivative against central finite
/// differences of the loss; returns the maximum relative error with
/// denominator max(|a|, |b|, 1e-8).
pub fn grad_check(model: &Model, sample: &WindowSample, epsilon: f64) -> Result<f64> {
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(Error::Argument(format!(
            "epsilon must be in [1e-7, 1e-3], got {epsilon}"
        )));
    }
    let mut work = model.clone();
    let trace = forward_trace(&work, &sample.input)?;
    let (_, dloss) = mse_loss(trace.output, sample.target);
    let analytic = backward(&work, &trace, dloss)?;

    let mut max_rel = 0.0f64;
    for (ti, grad) in analytic.iter().enumerate() {
        for j in 0..grad.len() {
            let orig = work.params()[ti].data()[j];
            work.params_mut()[ti].data_mut()[j] = orig + epsilon;
            let plus = loss_at(&work, sample)?;
            work.params_mut()[ti].data_mut()[j] = orig - epsilon;
            let minus = loss_at(&work, sample)?;
            work.params_mut()[ti].data_mut()[j] = orig;
            let fd = (plus - minus) / (2.0 * epsilon);
            let a = grad.data()[j];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-8);
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(max_rel)
}

/// Architecture family for randomized gradient-check trials.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Cnn,
    Bp,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cnn" => Ok(ModelKind::Cnn),
            "bp" => Ok(ModelKind::Bp),
            other => Err(Error::Argument(format!(
                "unknown model kind '{other}' (expected cnn|bp)"
            ))),
        }
    }
}

/// Small random architecture of the given kind; every sampled spec is valid
/// for a 23-hour input by construction.
pub fn random_small_model(kind: ModelKind, rng: &mut Prng) -> Result<Model> {
    match kind {
        ModelKind::Cnn => {
            let spec = CnnSpec {
                conv_channels: [
                    1 + rng.next_index(4),
                    1 + rng.next_index(4),
                    1 + rng.next_index(4),
                ],
                kernel: 1 + rng.next_index(3),
                pool_width: 1 + rng.next_index(2),
                dense_widths: if rng.next_index(2) == 0 {
                    vec![]
                } else {
                    vec![2 + rng.next_index(7)]
                },
                input_len: 23,
            };
            build_paper_cnn(&spec, rng)
        }
        ModelKind::Bp => {
            let n_hidden = rng.next_index(3);
            let spec = MlpSpec {
                hidden_widths: (0..n_hidden).map(|_| 1 + rng.next_index(16)).collect(),
                input_len: 23,
            };
            build_bp_mlp(&spec, rng)
        }
    }
}

/// Minimum distance every ReLU pre-activation and pool argmax gap must keep
/// from the decision boundary for a finite-difference probe to stay on one
/// linear piece. 5e-3 covers an epsilon of 1e-5 amplified by the worst-case
/// path gain of the small trial networks.
const KINK_MARGIN: f64 = 5e-3;

/// Replaces every zero-initialized bias with a uniform draw from [-0.5, 0.5).
/// Trial models need generic biases: with zero biases, a convolution over a
/// dead (all-zero) channel lands its pre-activation exactly on the ReLU kink,
/// where central differences and the subgradient legitimately disagree.
fn randomize_biases(model: &mut Model, rng: &mut Prng) {
    for layer in &mut model.layers {
        let bias = match layer {
            Layer::Conv(c) => &mut c.bias,
            Layer::Dense(d) => &mut d.bias,
            _ => continue,
        };
        for b in bias.data_mut() {
            *b = rng.next_f64() - 0.5;
        }
    }
}

/// True when the forward pass at `window` keeps KINK_MARGIN clear of every
/// ReLU kink and pool argmax switch, so the loss is locally smooth and a
/// central difference measures the same derivative the backward pass reports.
fn well_conditioned(model: &Model, window: &Tensor) -> Result<bool> {
    let trace = forward_trace(model, window)?;
    for (i, layer) in model.layers.iter().enumerate() {
        match layer {
            Layer::Relu => {
                if trace.inputs[i].data().iter().any(|x| x.abs() < KINK_MARGIN) {
                    return Ok(false);
                }
            }
            Layer::Pool(p) => {
                if p.width < 2 {
                    continue;
                }
                let input = &trace.inputs[i];
                let (channels, len) = (input.shape().dims()[0], input.shape().dims()[1]);
                let n_out = crate::layers::out_len(len, p.width, p.stride)?;
                for c in 0..channels {
                    let row = &input.data()[c * len..(c + 1) * len];
                    for o in 0..n_out {
                        let win = &row[o * p.stride..o * p.stride + p.width];
                        let mut best = f64::NEG_INFINITY;
                        let mut second = f64::NEG_INFINITY;
                        for &v in win {
                            if v > best {
                                second = best;
                                best = v;
                            } else if v > second {
                                second = v;
                            }
                        }
                        if best - second < KINK_MARGIN {
                            return Ok(false);
                        }
                    }
                }
            }
            _ => {}
        }
    }
    Ok(true)
}

/// One randomized gradient-check trial: random small model of `kind` with
/// randomized biases, random uniform window and target, epsilon 1e-5.
///
/// Central differences only measure a derivative where one exists, so
/// candidate (model, window) pairs whose forward pass runs too close to a
/// ReLU kink or a pool argmax switch are rejected and redrawn from the same
/// seeded stream. Rejection keeps the trial deterministic per seed.
pub fn gradcheck_trial(kind: ModelKind, seed: u64) -> Result<f64> {
    let mut rng = Prng::new(seed);
    for _ in 0..64 {
        let mut model = random_small_model(kind, &mut rng)?;
        randomize_biases(&mut model, &mut rng);
        let input_len = model.input_len;
        let window = Tensor::from_vec(
            &[input_len],
            (0..input_len).map(|_| rng.next_f64()).collect(),
        )?;
        let target = rng.next_f64();
        if !well_conditioned(&model, &window)? {
            continue;
        }
        let sample = WindowSample {
            input: window,
            target,
            target_time: Utc.with_ymd_and_hms(2017, 1, 1, 0, 0, 0).unwrap(),
        };
        return grad_check(&model, &sample, 1e-5);
    }
    Err(Error::Internal(format!(
        "no well-conditioned gradcheck candidate in 64 draws for seed {seed}"
    )))
}
