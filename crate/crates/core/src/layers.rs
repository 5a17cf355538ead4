//! Forward and backward passes for the five layer kinds: 1D convolution,
//! 1D max-pooling, ReLU, flatten, dense.
//!
//! Single-sample layout throughout: conv/pool inputs are [C, L], dense inputs
//! are [in_dim]. Mini-batching happens in the training module by accumulating
//! gradients across samples, so every function here is pure.

use crate::error::{Error, Result};
use crate::rng::{he_init, Prng};
use crate::tensor::{Shape, Tensor};

/// Output length for a window op with valid padding:
/// L_out = floor((L - window) / stride) + 1.
pub fn out_len(l: usize, window: usize, stride: usize) -> Result<usize> {
    if window == 0 || stride == 0 {
        return Err(Error::Argument(format!(
            "window and stride must be >= 1, got window {window}, stride {stride}"
        )));
    }
    if l < window {
        return Err(Error::Shape(format!(
            "input length {l} shorter than window {window}"
        )));
    }
    Ok((l - window) / stride + 1)
}

/// Gradients produced by a layer's backward pass. `grad_weights`/`grad_bias`
/// are absent for parameterless layers (pool, ReLU, flatten).
#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub grad_input: Tensor,
    pub grad_weights: Option<Tensor>,
    pub grad_bias: Option<Tensor>,
}

/// 1D convolution, valid padding. Weights are [out_ch, in_ch, k].
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    pub weights: Tensor,
    pub bias: Tensor,
    pub stride: usize,
}

impl Conv1d {
    /// He-initialized weights (fan_in = in_ch * k), zero bias.
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        k: usize,
        stride: usize,
        rng: &mut Prng,
    ) -> Result<Self> {
        if in_ch == 0 || out_ch == 0 || k == 0 || stride == 0 {
            return Err(Error::Argument(format!(
                "conv dims must be >= 1, got in_ch {in_ch}, out_ch {out_ch}, k {k}, stride {stride}"
            )));
        }
        let weights = he_init(Shape::new(&[out_ch, in_ch, k])?, in_ch * k, rng)?;
        let bias = Tensor::zeros(&[out_ch])?;
        Ok(Conv1d {
            weights,
            bias,
            stride,
        })
    }

    /// Wrap existing parameters, validating the shape contract.
    pub fn from_parts(weights: Tensor, bias: Tensor, stride: usize) -> Result<Self> {
        if weights.dims().len() != 3 {
            return Err(Error::Shape(format!(
                "conv weights must be rank 3 [out_ch, in_ch, k], got {}",
                weights.shape()
            )));
        }
        if bias.dims() != [weights.dims()[0]] {
            return Err(Error::Shape(format!(
                "conv bias shape {} does not match out_ch {}",
                bias.shape(),
                weights.dims()[0]
            )));
        }
        if stride == 0 {
            return Err(Error::Argument("conv stride must be >= 1".into()));
        }
        Ok(Conv1d {
            weights,
            bias,
            stride,
        })
    }

    pub fn out_ch(&self) -> usize {
        self.weights.dims()[0]
    }

    pub fn in_ch(&self) -> usize {
        self.weights.dims()[1]
    }

    pub fn kernel(&self) -> usize {
        self.weights.dims()[2]
    }
}

pub fn conv1d_forward(layer: &Conv1d, input: &Tensor) -> Result<Tensor> {
    let [in_ch, l] = rank2_dims(input, "conv input")?;
    if in_ch != layer.in_ch() {
        return Err(Error::Shape(format!(
            "conv expects {} input channels, got {in_ch}",
            layer.in_ch()
        )));
    }
    let k = layer.kernel();
    let l_out = out_len(l, k, layer.stride)?;
    let out_ch = layer.out_ch();
    let w = layer.weights.data();
    let x = input.data();
    let mut out = Tensor::zeros(&[out_ch, l_out])?;
    let o = out.data_mut();
    for c in 0..out_ch {
        let b = layer.bias.data()[c];
        for t in 0..l_out {
            let start = t * layer.stride;
            let mut acc = b;
            for i in 0..in_ch {
                let wrow = &w[(c * in_ch + i) * k..(c * in_ch + i) * k + k];
                let xrow = &x[i * l + start..i * l + start + k];
                for j in 0..k {
                    acc += wrow[j] * xrow[j];
                }
            }
            o[c * l_out + t] = acc;
        }
    }
    Ok(out)
}

pub fn conv1d_backward(layer: &Conv1d, input: &Tensor, grad_out: &Tensor) -> Result<LayerGrads> {
    let [in_ch, l] = rank2_dims(input, "conv input")?;
    let k = layer.kernel();
    let l_out = out_len(l, k, layer.stride)?;
    let out_ch = layer.out_ch();
    if grad_out.dims() != [out_ch, l_out] {
        return Err(Error::Shape(format!(
            "conv grad_out shape {} does not match forward output [{out_ch}, {l_out}]",
            grad_out.shape()
        )));
    }
    if in_ch != layer.in_ch() {
        return Err(Error::Shape(format!(
            "conv expects {} input channels, got {in_ch}",
            layer.in_ch()
        )));
    }
    let w = layer.weights.data();
    let x = input.data();
    let g = grad_out.data();
    let mut grad_w = Tensor::zeros(&[out_ch, in_ch, k])?;
    let mut grad_b = Tensor::zeros(&[out_ch])?;
    let mut grad_in = Tensor::zeros(&[in_ch, l])?;
    {
        let gw = grad_w.data_mut();
        let gb = grad_b.data_mut();
        let gi = grad_in.data_mut();
        for c in 0..out_ch {
            for t in 0..l_out {
                let go = g[c * l_out + t];
                if go == 0.0 {
                    continue;
                }
                gb[c] += go;
                let start = t * layer.stride;
                for i in 0..in_ch {
                    let base_w = (c * in_ch + i) * k;
                    let base_x = i * l + start;
                    for j in 0..k {
                        gw[base_w + j] += go * x[base_x + j];
                        gi[base_x + j] += go * w[base_w + j];
                    }
                }
            }
        }
    }
    Ok(LayerGrads {
        grad_input: grad_in,
        grad_weights: Some(grad_w),
        grad_bias: Some(grad_b),
    })
}

/// 1D max-pool over non-parameterized windows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaxPool1d {
    pub width: usize,
    pub stride: usize,
}

impl MaxPool1d {
    pub fn new(width: usize, stride: usize) -> Result<Self> {
        if width == 0 || stride == 0 {
            return Err(Error::Argument(format!(
                "pool width and stride must be >= 1, got width {width}, stride {stride}"
            )));
        }
        Ok(MaxPool1d { width, stride })
    }
}

/// Returns the pooled tensor plus one flat input index (c * L + j) per output
/// element, recording where each max came from. Ties break to the lowest index
/// so backward routes exactly where forward read.
pub fn maxpool1d_forward(layer: &MaxPool1d, input: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let [ch, l] = rank2_dims(input, "pool input")?;
    let l_out = out_len(l, layer.width, layer.stride)?;
    let x = input.data();
    let mut out = Tensor::zeros(&[ch, l_out])?;
    let mut indices = vec![0usize; ch * l_out];
    let o = out.data_mut();
    for c in 0..ch {
        for t in 0..l_out {
            let start = c * l + t * layer.stride;
            let mut best = x[start];
            let mut best_idx = start;
            for j in 1..layer.width {
                let v = x[start + j];
                if v > best {
                    best = v;
                    best_idx = start + j;
                }
            }
            o[c * l_out + t] = best;
            indices[c * l_out + t] = best_idx;
        }
    }
    Ok((out, indices))
}

/// Routes each upstream gradient to the input position its max came from,
/// summing on collisions (possible when windows overlap).
pub fn maxpool1d_backward(
    argmax_indices: &[usize],
    grad_out: &Tensor,
    input_shape: &Shape,
) -> Result<Tensor> {
    if argmax_indices.len() != grad_out.len() {
        return Err(Error::Shape(format!(
            "argmax count {} does not match grad_out length {}",
            argmax_indices.len(),
            grad_out.len()
        )));
    }
    let mut grad_in = Tensor::new(input_shape.clone(), 0.0)?;
    let n = grad_in.len();
    let gi = grad_in.data_mut();
    for (&idx, &g) in argmax_indices.iter().zip(grad_out.data()) {
        if idx >= n {
            return Err(Error::Internal(format!(
                "argmax index {idx} out of range for input of {n} elements"
            )));
        }
        gi[idx] += g;
    }
    Ok(grad_in)
}

/// Elementwise max(0, x).
pub fn relu_forward(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    for v in out.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// Passes gradient where pre-activation input was > 0; subgradient at 0 is 0.
pub fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    if input.dims() != grad_out.dims() {
        return Err(Error::Shape(format!(
            "relu grad_out shape {} does not match input {}",
            grad_out.shape(),
            input.shape()
        )));
    }
    let mut grad_in = grad_out.clone();
    for (g, &x) in grad_in.data_mut().iter_mut().zip(input.data()) {
        if x <= 0.0 {
            *g = 0.0;
        }
    }
    Ok(grad_in)
}

/// Fully connected layer. Weights are [out_dim, in_dim].
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Tensor,
    pub bias: Tensor,
}

impl Dense {
    /// He-initialized weights (fan_in = in_dim), zero bias.
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut Prng) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Argument(format!(
                "dense dims must be >= 1, got in {in_dim}, out {out_dim}"
            )));
        }
        let weights = he_init(Shape::new(&[out_dim, in_dim])?, in_dim, rng)?;
        let bias = Tensor::zeros(&[out_dim])?;
        Ok(Dense { weights, bias })
    }

    pub fn from_parts(weights: Tensor, bias: Tensor) -> Result<Self> {
        if weights.dims().len() != 2 {
            return Err(Error::Shape(format!(
                "dense weights must be rank 2 [out, in], got {}",
                weights.shape()
            )));
        }
        if bias.dims() != [weights.dims()[0]] {
            return Err(Error::Shape(format!(
                "dense bias shape {} does not match out_dim {}",
                bias.shape(),
                weights.dims()[0]
            )));
        }
        Ok(Dense { weights, bias })
    }

    pub fn out_dim(&self) -> usize {
        self.weights.dims()[0]
    }

    pub fn in_dim(&self) -> usize {
        self.weights.dims()[1]
    }
}

pub fn dense_forward(layer: &Dense, input: &Tensor) -> Result<Tensor> {
    let in_dim = rank1_len(input, "dense input")?;
    if in_dim != layer.in_dim() {
        return Err(Error::Shape(format!(
            "dense expects input length {}, got {in_dim}",
            layer.in_dim()
        )));
    }
    let out_dim = layer.out_dim();
    let w = layer.weights.data();
    let x = input.data();
    let mut out = Tensor::zeros(&[out_dim])?;
    let o = out.data_mut();
    for (r, ov) in o.iter_mut().enumerate() {
        let row = &w[r * in_dim..(r + 1) * in_dim];
        let mut acc = layer.bias.data()[r];
        for (wv, xv) in row.iter().zip(x) {
            acc += wv * xv;
        }
        *ov = acc;
    }
    Ok(out)
}

pub fn dense_backward(layer: &Dense, input: &Tensor, grad_out: &Tensor) -> Result<LayerGrads> {
    let in_dim = rank1_len(input, "dense input")?;
    if in_dim != layer.in_dim() {
        return Err(Error::Shape(format!(
            "dense expects input length {}, got {in_dim}",
            layer.in_dim()
        )));
    }
    if grad_out.dims() != [layer.out_dim()] {
        return Err(Error::Shape(format!(
            "dense grad_out shape {} does not match out_dim {}",
            grad_out.shape(),
            layer.out_dim()
        )));
    }
    let out_dim = layer.out_dim();
    let w = layer.weights.data();
    let x = input.data();
    let g = grad_out.data();
    let mut grad_w = Tensor::zeros(&[out_dim, in_dim])?;
    let mut grad_in = Tensor::zeros(&[in_dim])?;
    {
        let gw = grad_w.data_mut();
        let gi = grad_in.data_mut();
        for r in 0..out_dim {
            let go = g[r];
            for i in 0..in_dim {
                gw[r * in_dim + i] = go * x[i];
                gi[i] += w[r * in_dim + i] * go;
            }
        }
    }
    Ok(LayerGrads {
        grad_input: grad_in,
        grad_weights: Some(grad_w),
        grad_bias: Some(grad_out.clone()),
    })
}

/// Row-major flatten of a [C, L] tensor into [C * L]. The inverse (for the
/// backward pass) is a plain reshape back to the recorded input shape.
pub fn flatten(input: &Tensor) -> Result<Tensor> {
    let [c, l] = rank2_dims(input, "flatten input")?;
    input.reshape(&[c * l])
}

fn rank2_dims(t: &Tensor, what: &str) -> Result<[usize; 2]> {
    match t.dims() {
        &[a, b] => Ok([a, b]),
        _ => Err(Error::Shape(format!(
            "{what} must be rank 2 [C, L], got {}",
            t.shape()
        ))),
    }
}

fn rank1_len(t: &Tensor, what: &str) -> Result<usize> {
    match t.dims() {
        &[n] => Ok(n),
        _ => Err(Error::Shape(format!(
            "{what} must be rank 1, got {}",
            t.shape()
        ))),
    }
}
