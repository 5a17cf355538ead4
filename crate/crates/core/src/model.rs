//! Model assembly: the seasonal CNN and the BP (back-propagation MLP)
//! baseline as ordered layer stacks mapping a 23-hour window to one scalar.

use crate::data::{NormStats, Season};
use crate::error::{Error, Result};
use crate::layers::{
    conv1d_forward, dense_forward, flatten, maxpool1d_forward, relu_forward, Conv1d, Dense,
    MaxPool1d,
};
use crate::rng::Prng;
use crate::tensor::Tensor;

/// CNN architecture hyperparameters. The stack is three conv+ReLU+pool
/// stages, flatten, hidden dense layers with ReLU, and a final dense to one
/// output. Channel counts, kernel, pool width, and dense widths are declared
/// configuration, not ground truth from any reference result.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CnnSpec {
    pub conv_channels: [usize; 3],
    pub kernel: usize,
    pub pool_width: usize,
    pub dense_widths: Vec<usize>,
    pub input_len: usize,
}

impl Default for CnnSpec {
    fn default() -> Self {
        CnnSpec {
            conv_channels: [8, 16, 32],
            kernel: 3,
            pool_width: 2,
            dense_widths: vec![16],
            input_len: 23,
        }
    }
}

impl CnnSpec {
    /// Sequence lengths through the conv/pool stack: input, then after each
    /// conv and each pool (7 entries for 3 stages). Errors name the stage
    /// whose input is too short.
    pub fn stage_lengths(&self) -> Result<Vec<usize>> {
        let mut lens = vec![self.input_len];
        let mut l = self.input_len;
        for stage in 1..=3 {
            if l < self.kernel {
                return Err(Error::Spec(format!(
                    "conv stage {stage}: input length {l} shorter than kernel {}",
                    self.kernel
                )));
            }
            l = l - self.kernel + 1; // conv stride 1
            lens.push(l);
            if l < self.pool_width {
                return Err(Error::Spec(format!(
                    "pool stage {stage}: input length {l} shorter than pool width {}",
                    self.pool_width
                )));
            }
            l = (l - self.pool_width) / self.pool_width + 1; // pool stride = width
            lens.push(l);
        }
        Ok(lens)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_len == 0 {
            return Err(Error::Spec("input_len must be >= 1".into()));
        }
        if self.kernel == 0 || self.pool_width == 0 {
            return Err(Error::Spec("kernel and pool_width must be >= 1".into()));
        }
        if self.conv_channels.contains(&0) {
            return Err(Error::Spec(format!(
                "conv_channels must all be >= 1, got {:?}",
                self.conv_channels
            )));
        }
        if self.dense_widths.contains(&0) {
            return Err(Error::Spec(format!(
                "dense_widths must all be >= 1, got {:?}",
                self.dense_widths
            )));
        }
        self.stage_lengths()?;
        Ok(())
    }
}

/// BP baseline hyperparameters: plain MLP, ReLU-activated hidden layers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    pub hidden_widths: Vec<usize>,
    pub input_len: usize,
}

impl Default for MlpSpec {
    fn default() -> Self {
        MlpSpec {
            hidden_widths: vec![64, 32],
            input_len: 23,
        }
    }
}

impl MlpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_len == 0 {
            return Err(Error::Spec("input_len must be >= 1".into()));
        }
        if self.hidden_widths.contains(&0) {
            return Err(Error::Spec(format!(
                "hidden_widths must all be >= 1, got {:?}",
                self.hidden_widths
            )));
        }
        Ok(())
    }
}

/// Which builder produced a model; echoed into checkpoints so a saved file is
/// self-describing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelSpec {
    Cnn(CnnSpec),
    Mlp(MlpSpec),
}

impl ModelSpec {
    /// User-facing kind label; matches the CLI's --model values.
    pub fn kind(&self) -> &'static str {
        match self {
            ModelSpec::Cnn(_) => "cnn",
            ModelSpec::Mlp(_) => "bp",
        }
    }
}

/// Provenance carried alongside the parameters. `spec` is None for
/// hand-assembled models (tests, diagnostics), which cannot be checkpointed.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMeta {
    pub season: Option<Season>,
    pub seed: u64,
    pub spec: Option<ModelSpec>,
}

impl ModelMeta {
    pub fn custom() -> Self {
        ModelMeta {
            season: None,
            seed: 0,
            spec: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv(Conv1d),
    Pool(MaxPool1d),
    Relu,
    Flatten,
    Dense(Dense),
}

/// An ordered layer stack plus the normalization stats its inputs assume.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub layers: Vec<Layer>,
    pub norm_stats: NormStats,
    pub input_len: usize,
    pub meta: ModelMeta,
}

/// Everything backprop needs from a forward pass: the input each layer saw
/// (after any rank promotion) and each pool's argmax routing.
pub struct ForwardTrace {
    pub inputs: Vec<Tensor>,
    pub pool_indices: Vec<Option<Vec<usize>>>,
    pub output: f64,
    /// Dims of the final tensor (length 1, but possibly rank 2 for
    /// hand-assembled stacks); backward seeds its gradient in this shape.
    pub output_dims: Vec<usize>,
}

impl Model {
    pub fn custom(layers: Vec<Layer>, input_len: usize) -> Self {
        Model {
            layers,
            norm_stats: NormStats::identity(),
            input_len,
            meta: ModelMeta::custom(),
        }
    }

    /// Kind label for reports: "cnn", "bp", or "custom".
    pub fn name(&self) -> &'static str {
        match &self.meta.spec {
            Some(s) => s.kind(),
            None => "custom",
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv(c) => {
                    out.push(&c.weights);
                    out.push(&c.bias);
                }
                Layer::Dense(d) => {
                    out.push(&d.weights);
                    out.push(&d.bias);
                }
                _ => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv(c) => {
                    out.push(&mut c.weights);
                    out.push(&mut c.bias);
                }
                Layer::Dense(d) => {
                    out.push(&mut d.weights);
                    out.push(&mut d.bias);
                }
                _ => {}
            }
        }
        out
    }

    /// Stable per-tensor names, aligned with params()/params_mut() order.
    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Conv(_) | Layer::Dense(_) => {
                    out.push(format!("layer{i}.weights"));
                    out.push(format!("layer{i}.bias"));
                }
                _ => {}
            }
        }
        out
    }
}

fn check_input(model: &Model, window: &Tensor) -> Result<()> {
    if window.dims() != [model.input_len] {
        return Err(Error::Shape(format!(
            "model expects input [{}], got {}",
            model.input_len,
            window.shape()
        )));
    }
    Ok(())
}

/// Promote a rank-1 vector to a single-channel [1, L] map for a conv layer.
fn promote_for_conv(t: &Tensor) -> Result<Tensor> {
    match *t.dims() {
        [l] => t.reshape(&[1, l]),
        [_, _] => Ok(t.clone()),
        _ => Err(Error::Shape(format!(
            "conv input must be rank 1 or 2, got {}",
            t.shape()
        ))),
    }
}

fn scalar_output(t: &Tensor) -> Result<f64> {
    if t.len() == 1 {
        Ok(t.data()[0])
    } else {
        Err(Error::Shape(format!(
            "model output must be a single scalar, got {}",
            t.shape()
        )))
    }
}

/// Run the stack on one normalized window; returns the normalized prediction.
pub fn model_forward(model: &Model, window: &Tensor) -> Result<f64> {
    check_input(model, window)?;
    let mut cur = window.clone();
    for layer in &model.layers {
        cur = match layer {
            Layer::Conv(c) => conv1d_forward(c, &promote_for_conv(&cur)?)?,
            Layer::Pool(p) => maxpool1d_forward(p, &cur)?.0,
            Layer::Relu => relu_forward(&cur),
            Layer::Flatten => flatten(&cur)?,
            Layer::Dense(d) => dense_forward(d, &cur)?,
        };
    }
    scalar_output(&cur)
}

/// Forward pass that records per-layer inputs and pool routing for backprop.
pub fn forward_trace(model: &Model, window: &Tensor) -> Result<ForwardTrace> {
    check_input(model, window)?;
    let mut inputs = Vec::with_capacity(model.layers.len());
    let mut pool_indices = Vec::with_capacity(model.layers.len());
    let mut cur = window.clone();
    for layer in &model.layers {
        match layer {
            Layer::Conv(c) => {
                let promoted = promote_for_conv(&cur)?;
                inputs.push(promoted.clone());
                pool_indices.push(None);
                cur = conv1d_forward(c, &promoted)?;
            }
            Layer::Pool(p) => {
                inputs.push(cur.clone());
                let (out, idx) = maxpool1d_forward(p, &cur)?;
                pool_indices.push(Some(idx));
                cur = out;
            }
            Layer::Relu => {
                inputs.push(cur.clone());
                pool_indices.push(None);
                cur = relu_forward(&cur);
            }
            Layer::Flatten => {
                inputs.push(cur.clone());
                pool_indices.push(None);
                cur = flatten(&cur)?;
            }
            Layer::Dense(d) => {
                inputs.push(cur.clone());
                pool_indices.push(None);
                cur = dense_forward(d, &cur)?;
            }
        }
    }
    let output = scalar_output(&cur)?;
    Ok(ForwardTrace {
        inputs,
        pool_indices,
        output,
        output_dims: cur.dims().to_vec(),
    })
}

/// Assemble the CNN: (conv -> ReLU -> pool) x3, flatten, hidden dense layers
/// with ReLU, final dense to one output. He-initialized weights, zero biases.
pub fn build_paper_cnn(spec: &CnnSpec, rng: &mut Prng) -> Result<Model> {
    spec.validate()?;
    let lens = spec.stage_lengths()?;
    let mut layers = Vec::new();
    let mut in_ch = 1;
    for &out_ch in &spec.conv_channels {
        layers.push(Layer::Conv(Conv1d::new(
            in_ch,
            out_ch,
            spec.kernel,
            1,
            rng,
        )?));
        layers.push(Layer::Relu);
        layers.push(Layer::Pool(MaxPool1d::new(
            spec.pool_width,
            spec.pool_width,
        )?));
        in_ch = out_ch;
    }
    layers.push(Layer::Flatten);
    let mut dim = spec.conv_channels[2] * lens[lens.len() - 1];
    for &w in &spec.dense_widths {
        layers.push(Layer::Dense(Dense::new(dim, w, rng)?));
        layers.push(Layer::Relu);
        dim = w;
    }
    layers.push(Layer::Dense(Dense::new(dim, 1, rng)?));
    Ok(Model {
        layers,
        norm_stats: NormStats::identity(),
        input_len: spec.input_len,
        meta: ModelMeta {
            season: None,
            seed: 0,
            spec: Some(ModelSpec::Cnn(spec.clone())),
        },
    })
}

/// Assemble the BP baseline: dense -> ReLU per hidden width, final dense to
/// one output. Empty hidden_widths gives a pure affine model.
pub fn build_bp_mlp(spec: &MlpSpec, rng: &mut Prng) -> Result<Model> {
    spec.validate()?;
    let mut layers = Vec::new();
    let mut dim = spec.input_len;
    for &w in &spec.hidden_widths {
        layers.push(Layer::Dense(Dense::new(dim, w, rng)?));
        layers.push(Layer::Relu);
        dim = w;
    }
    layers.push(Layer::Dense(Dense::new(dim, 1, rng)?));
    Ok(Model {
        layers,
        norm_stats: NormStats::identity(),
        input_len: spec.input_len,
        meta: ModelMeta {
            season: None,
            seed: 0,
            spec: Some(ModelSpec::Mlp(spec.clone())),
        },
    })
}

pub fn model_param_count(model: &Model) -> usize {
    model.params().iter().map(|t| t.len()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn window(vals: &[f64]) -> Tensor {
        Tensor::from_vec(&[vals.len()], vals.to_vec()).unwrap()
    }

    #[test]
    fn default_stage_lengths() {
        let lens = CnnSpec::default().stage_lengths().unwrap();
        assert_eq!(lens, vec![23, 21, 10, 8, 4, 2, 1]);
    }

    #[test]
    fn default_cnn_trailing_dense_dim() {
        let mut rng = Prng::new(0);
        let model = build_paper_cnn(&CnnSpec::default(), &mut rng).unwrap();
        // flatten of [c3=32, 1] feeds the first dense layer
        let first_dense = model
            .layers
            .iter()
            .find_map(|l| match l {
                Layer::Dense(d) => Some(d),
                _ => None,
            })
            .unwrap();
        assert_eq!(first_dense.in_dim(), 32);
    }

    #[test]
    fn oversized_kernel_is_spec_error() {
        let spec = CnnSpec {
            kernel: 25,
            ..CnnSpec::default()
        };
        let mut rng = Prng::new(0);
        match build_paper_cnn(&spec, &mut rng) {
            Err(Error::Spec(msg)) => assert!(msg.contains("conv stage 1"), "{msg}"),
            other => panic!("expected spec error, got {other:?}"),
        }
    }

    #[test]
    fn default_cnn_outputs_scalar() {
        let mut rng = Prng::new(42);
        let model = build_paper_cnn(&CnnSpec::default(), &mut rng).unwrap();
        let w = window(&(0..23).map(|i| i as f64 / 23.0).collect::<Vec<_>>());
        let y = model_forward(&model, &w).unwrap();
        assert!(y.is_finite());
    }

    #[test]
    fn cnn_conv1_param_count() {
        let mut rng = Prng::new(0);
        let model = build_paper_cnn(&CnnSpec::default(), &mut rng).unwrap();
        let first_conv = model
            .layers
            .iter()
            .find_map(|l| match l {
                Layer::Conv(c) => Some(c),
                _ => None,
            })
            .unwrap();
        assert_eq!(first_conv.weights.len() + first_conv.bias.len(), 32);
    }

    #[test]
    fn bp_param_count_3649() {
        let mut rng = Prng::new(0);
        let model = build_bp_mlp(&MlpSpec::default(), &mut rng).unwrap();
        assert_eq!(model_param_count(&model), 3649);
    }

    #[test]
    fn bp_empty_hidden_is_affine() {
        let spec = MlpSpec {
            hidden_widths: vec![],
            input_len: 23,
        };
        let mut rng = Prng::new(0);
        let model = build_bp_mlp(&spec, &mut rng).unwrap();
        assert_eq!(model_param_count(&model), 24);
        assert_eq!(model.layers.len(), 1);
    }

    #[test]
    fn bp_zero_width_rejected() {
        let spec = MlpSpec {
            hidden_widths: vec![0],
            input_len: 23,
        };
        let mut rng = Prng::new(0);
        assert!(matches!(build_bp_mlp(&spec, &mut rng), Err(Error::Spec(_))));
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mut rng = Prng::new(7);
        let mut model = build_paper_cnn(&CnnSpec::default(), &mut rng).unwrap();
        for p in model.params_mut() {
            for v in p.data_mut() {
                *v = 0.0;
            }
        }
        let w = window(&(0..23).map(|i| (i as f64).sin()).collect::<Vec<_>>());
        assert_eq!(model_forward(&model, &w).unwrap(), 0.0);
    }

    #[test]
    fn forward_deterministic_for_fixed_seed() {
        let build = || {
            let mut rng = Prng::new(99);
            build_paper_cnn(&CnnSpec::default(), &mut rng).unwrap()
        };
        let w = window(&(0..23).map(|i| (i as f64 * 0.37).cos()).collect::<Vec<_>>());
        let a = model_forward(&build(), &w).unwrap();
        let b = model_forward(&build(), &w).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn hand_composed_identity_chain_picks_element() {
        // conv k=1 w=1 b=0 keeps the sequence, flatten, dense row e_2 picks
        // the third element.
        let conv = Conv1d::from_parts(
            Tensor::from_vec(&[1, 1, 1], vec![1.0]).unwrap(),
            Tensor::zeros(&[1]).unwrap(),
            1,
        )
        .unwrap();
        let mut w = Tensor::zeros(&[1, 4]).unwrap();
        w.data_mut()[2] = 1.0;
        let dense = Dense::from_parts(w, Tensor::zeros(&[1]).unwrap()).unwrap();
        let model = Model::custom(
            vec![Layer::Conv(conv), Layer::Flatten, Layer::Dense(dense)],
            4,
        );
        let y = model_forward(&model, &window(&[10.0, 20.0, 30.0, 40.0])).unwrap();
        assert_eq!(y, 30.0);
    }

    #[test]
    fn wrong_input_length_rejected() {
        let mut rng = Prng::new(0);
        let model = build_paper_cnn(&CnnSpec::default(), &mut rng).unwrap();
        assert!(matches!(
            model_forward(&model, &window(&[1.0; 22])),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn zero_layer_model_has_no_params() {
        let model = Model::custom(vec![], 1);
        assert_eq!(model_param_count(&model), 0);
        assert_eq!(model_forward(&model, &window(&[0.25])).unwrap(), 0.25);
    }

    #[test]
    fn param_names_align_with_params() {
        let mut rng = Prng::new(0);
        let model = build_bp_mlp(&MlpSpec::default(), &mut rng).unwrap();
        let names = model.param_names();
        let params = model.params();
        assert_eq!(names.len(), params.len());
        assert_eq!(names[0], "layer0.weights");
        assert_eq!(names[1], "layer0.bias");
    }

    #[test]
    fn builders_are_pure_in_spec_and_seed() {
        let spec = CnnSpec::default();
        let run = || {
            let mut rng = Prng::new(5);
            build_paper_cnn(&spec, &mut rng).unwrap()
        };
        assert_eq!(run(), run());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn every_valid_cnn_spec_maps_23_to_scalar(
            c1 in 1usize..6, c2 in 1usize..6, c3 in 1usize..6,
            kernel in 1usize..6, pool in 1usize..4,
            dense in proptest::collection::vec(1usize..12, 0..3),
            seed in 0u64..1000,
        ) {
            let spec = CnnSpec {
                conv_channels: [c1, c2, c3],
                kernel,
                pool_width: pool,
                dense_widths: dense,
                input_len: 23,
            };
            prop_assume!(spec.stage_lengths().is_ok());
            let mut rng = Prng::new(seed);
            let model = build_paper_cnn(&spec, &mut rng).unwrap();
            let mut wrng = Prng::new(seed ^ 0xABCD);
            let w = Tensor::from_vec(&[23], (0..23).map(|_| wrng.next_f64()).collect()).unwrap();
            let y = model_forward(&model, &w).unwrap();
            prop_assert!(y.is_finite());
        }

        #[test]
        fn every_valid_mlp_spec_maps_23_to_scalar(
            widths in proptest::collection::vec(1usize..40, 0..4),
            seed in 0u64..1000,
        ) {
            let spec = MlpSpec { hidden_widths: widths, input_len: 23 };
            let mut rng = Prng::new(seed);
            let model = build_bp_mlp(&spec, &mut rng).unwrap();
            let mut wrng = Prng::new(seed ^ 0x1234);
            let w = Tensor::from_vec(&[23], (0..23).map(|_| wrng.next_f64()).collect()).unwrap();
            let y = model_forward(&model, &w).unwrap();
            prop_assert!(y.is_finite());
        }
    }
}
