use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gemm::{gemm, Mat};
use super::{Gradients, NnError, Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Init {
    /// Weights uniform in `±scale / sqrt(fan_in)`, biases zero.
    FanInUniform { scale: Real },
    /// Identity weight matrix (square layers only), zero bias.
    Identity,
    Zeros,
}

impl Default for Init {
    fn default() -> Self {
        Self::FanInUniform { scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Valid (unpadded) 2D convolution over `[channels, height, width]`.
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        #[serde(default)]
        init: Init,
    },
    Dense {
        inputs: usize,
        outputs: usize,
        #[serde(default)]
        init: Init,
    },
    Relu,
    Flatten,
}

impl LayerSpec {
    pub fn conv(in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        Self::Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            init: Init::default(),
        }
    }

    pub fn dense(inputs: usize, outputs: usize) -> Self {
        Self::Dense {
            inputs,
            outputs,
            init: Init::default(),
        }
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, String> {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                ..
            } => {
                let &[c, h, w] = input else {
                    return Err(format!("convolution needs a [c, h, w] input, got {input:?}"));
                };
                if c != in_channels || kernel == 0 || stride == 0 || out_channels == 0 {
                    return Err(format!("convolution expects {in_channels} channels, got {c}"));
                }
                if kernel > h || kernel > w {
                    return Err(format!("kernel {kernel} larger than input {h}x{w}"));
                }
                Ok(vec![out_channels, (h - kernel) / stride + 1, (w - kernel) / stride + 1])
            }
            LayerSpec::Dense { inputs, outputs, .. } => {
                if input != [inputs] || outputs == 0 {
                    return Err(format!("dense layer expects [{inputs}], got {input:?}"));
                }
                Ok(vec![outputs])
            }
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
        }
    }

    fn param_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![vec![out_channels, in_channels, kernel, kernel], vec![out_channels]],
            LayerSpec::Dense { inputs, outputs, .. } => vec![vec![outputs, inputs], vec![outputs]],
            LayerSpec::Relu | LayerSpec::Flatten => vec![],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Softmax,
}

/// A named fully connected output on top of the trunk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub name: String,
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
    #[serde(default)]
    pub init: Init,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Per-sample input shape; the batch dimension is implicit.
    pub input: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub heads: Vec<HeadSpec>,
}

impl NetworkSpec {
    /// Per-sample activation shapes: the input followed by every layer output.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>, NnError> {
        if self.input.is_empty() || self.input.contains(&0) {
            return Err(NnError::InvalidSpec("input shape must be non-empty and positive".into()));
        }
        let mut shapes = vec![self.input.clone()];
        for (i, layer) in self.layers.iter().enumerate() {
            let next = layer
                .output_shape(shapes.last().unwrap())
                .map_err(|e| NnError::InvalidSpec(format!("layer {i}: {e}")))?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let shapes = self.shapes()?;
        let trunk = shapes.last().unwrap();
        if self.heads.is_empty() {
            return Err(NnError::InvalidSpec("at least one head is required".into()));
        }
        for (i, h) in self.heads.iter().enumerate() {
            if trunk != &[h.inputs] || h.outputs == 0 {
                return Err(NnError::InvalidSpec(format!(
                    "head {} expects [{}], trunk gives {trunk:?}",
                    h.name, h.inputs
                )));
            }
            if self.heads[..i].iter().any(|o| o.name == h.name) {
                return Err(NnError::InvalidSpec(format!("duplicate head {}", h.name)));
            }
        }
        let inits = self
            .layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Dense { inputs, outputs, init } => Some((*inputs, *outputs, *init)),
                LayerSpec::Conv2d { init, .. } => Some((0, 1, *init)),
                _ => None,
            })
            .chain(self.heads.iter().map(|h| (h.inputs, h.outputs, h.init)));
        for (inputs, outputs, init) in inits {
            if init == Init::Identity && inputs != outputs {
                return Err(NnError::InvalidSpec("identity init needs a square layer".into()));
            }
        }
        Ok(())
    }

    /// Shapes of every parameter tensor, in storage order: each layer's
    /// weight then bias, followed by each head's weight then bias.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = self.layers.iter().flat_map(LayerSpec::param_shapes).collect();
        for h in &self.heads {
            out.push(vec![h.outputs, h.inputs]);
            out.push(vec![h.outputs]);
        }
        out
    }

    pub fn head_index(&self, name: &str) -> Option<usize> {
        self.heads.iter().position(|h| h.name == name)
    }

    fn trunk_len(&self) -> usize {
        self.shapes().ok().and_then(|s| s.last().map(|l| l.iter().product())).unwrap_or(0)
    }

    /// Dueling value-function network: `value` (1) and `advantage` (`actions`) heads.
    pub fn dueling(input: Vec<usize>, layers: Vec<LayerSpec>, actions: usize) -> Self {
        let mut spec = Self {
            input,
            layers,
            heads: vec![],
        };
        let f = spec.trunk_len();
        spec.heads = vec![
            HeadSpec {
                name: "value".into(),
                inputs: f,
                outputs: 1,
                activation: Activation::Identity,
                init: Init::default(),
            },
            HeadSpec {
                name: "advantage".into(),
                inputs: f,
                outputs: actions,
                activation: Activation::Identity,
                init: Init::default(),
            },
        ];
        spec
    }

    /// Actor-critic network: softmax `policy` (`actions`) and `value` (1) heads.
    /// The policy head starts close to uniform.
    pub fn actor_critic(input: Vec<usize>, layers: Vec<LayerSpec>, actions: usize) -> Self {
        let mut spec = Self {
            input,
            layers,
            heads: vec![],
        };
        let f = spec.trunk_len();
        spec.heads = vec![
            HeadSpec {
                name: "policy".into(),
                inputs: f,
                outputs: actions,
                activation: Activation::Softmax,
                init: Init::FanInUniform { scale: 0.01 },
            },
            HeadSpec {
                name: "value".into(),
                inputs: f,
                outputs: 1,
                activation: Activation::Identity,
                init: Init::default(),
            },
        ];
        spec
    }
}

/// Convolutional trunk for 64×64 RGB frames: 8×8/4 ×16, 4×4/2 ×32, 256 units.
pub fn default_trunk() -> Vec<LayerSpec> {
    vec![
        LayerSpec::conv(3, 16, 8, 4),
        LayerSpec::Relu,
        LayerSpec::conv(16, 32, 4, 2),
        LayerSpec::Relu,
        LayerSpec::Flatten,
        LayerSpec::dense(32 * 6 * 6, 256),
        LayerSpec::Relu,
    ]
}

pub fn default_dueling_spec(actions: usize) -> NetworkSpec {
    NetworkSpec::dueling(vec![3, 64, 64], default_trunk(), actions)
}

pub fn default_actor_critic_spec(actions: usize) -> NetworkSpec {
    NetworkSpec::actor_critic(vec![3, 64, 64], default_trunk(), actions)
}

/// Parameter tensors in [`NetworkSpec::param_shapes`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub tensors: Vec<Tensor>,
}

impl Params {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        Self {
            tensors: spec.param_shapes().iter().map(|s| Tensor::zeros(s)).collect(),
        }
    }

    pub fn zeros_like(other: &Params) -> Self {
        Self {
            tensors: other.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect(),
        }
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn congruent(&self, other: &Params) -> bool {
        self.tensors.len() == other.tensors.len()
            && self.tensors.iter().zip(&other.tensors).all(|(a, b)| a.shape() == b.shape())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Real> {
        self.tensors.iter().flat_map(|t| t.data().iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Real> {
        self.tensors.iter_mut().flat_map(|t| t.data_mut().iter_mut())
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, alpha: Real, other: &Params) {
        assert!(self.congruent(other));
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: Real) {
        self.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn norm(&self) -> Real {
        self.iter().map(|v| v * v).sum::<Real>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    /// Rescales so the global norm is at most `max_norm`; returns the norm before clipping.
    pub fn clip_norm(&mut self, max_norm: Real) -> Real {
        let n = self.norm();
        if n > max_norm && n > 0.0 {
            self.scale(max_norm / n);
        }
        n
    }
}

/// Saved activations of one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    batch: usize,
    /// `acts[0]` is the input, `acts[i + 1]` the output of layer `i`.
    acts: Vec<Tensor>,
    logits: Vec<Tensor>,
    outputs: Vec<Tensor>,
    names: Vec<String>,
}

impl Forward {
    pub fn batch(&self) -> usize {
        self.batch
    }

    fn index(&self, name: &str) -> usize {
        self.names
            .iter()
            .position(|n| n == name)
            .unwrap_or_else(|| panic!("no head named {name}"))
    }

    /// Head output after its activation, shape `[batch, outputs]`.
    pub fn output(&self, name: &str) -> &Tensor {
        &self.outputs[self.index(name)]
    }

    /// Head output before its activation.
    pub fn logits(&self, name: &str) -> &Tensor {
        &self.logits[self.index(name)]
    }

    /// Trunk features fed to the heads.
    pub fn features(&self) -> &Tensor {
        self.acts.last().unwrap()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub spec: NetworkSpec,
    pub params: Params,
}

fn init_tensor(t: &mut Tensor, init: Init, fan_in: usize, bias: bool, rng: &mut impl Rng) {
    match init {
        Init::Zeros => {}
        _ if bias => {}
        Init::Identity => {
            let n = t.shape()[0];
            for i in 0..n {
                t.data_mut()[i * n + i] = 1.0;
            }
        }
        Init::FanInUniform { scale } => {
            let bound = scale / (fan_in as Real).sqrt();
            for v in t.data_mut() {
                *v = rng.random_range(-bound..bound);
            }
        }
    }
}

impl Network {
    /// Fresh network with weights drawn from `rng` per each layer's init rule.
    pub fn new(spec: NetworkSpec, rng: &mut impl Rng) -> Result<Self, NnError> {
        spec.validate()?;
        let mut params = Params::zeros(&spec);
        let mut k = 0;
        let mut layer_inits = vec![];
        for layer in &spec.layers {
            match *layer {
                LayerSpec::Conv2d {
                    in_channels,
                    kernel,
                    init,
                    ..
                } => layer_inits.push((init, in_channels * kernel * kernel)),
                LayerSpec::Dense { inputs, init, .. } => layer_inits.push((init, inputs)),
                _ => {}
            }
        }
        layer_inits.extend(spec.heads.iter().map(|h| (h.init, h.inputs)));
        for (init, fan_in) in layer_inits {
            init_tensor(&mut params.tensors[k], init, fan_in, false, rng);
            init_tensor(&mut params.tensors[k + 1], init, fan_in, true, rng);
            k += 2;
        }
        Ok(Self { spec, params })
    }

    pub fn from_parts(spec: NetworkSpec, params: Params) -> Result<Self, NnError> {
        spec.validate()?;
        let want = spec.param_shapes();
        if want.len() != params.tensors.len() {
            return Err(NnError::InvalidSpec("parameter count differs from spec".into()));
        }
        for (s, t) in want.iter().zip(&params.tensors) {
            if s.as_slice() != t.shape() {
                return Err(NnError::ShapeMismatch {
                    expected: s.clone(),
                    got: t.shape().to_vec(),
                });
            }
        }
        Ok(Self { spec, params })
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    /// Evaluates every head on a batch `[n, ..spec.input]`.
    pub fn forward(&self, input: &Tensor) -> Result<Forward, NnError> {
        let shape = input.shape();
        if shape.len() != self.spec.input.len() + 1 || shape[1..] != self.spec.input[..] {
            let mut expected = vec![shape.first().copied().unwrap_or(1)];
            expected.extend(&self.spec.input);
            return Err(NnError::ShapeMismatch {
                expected,
                got: shape.to_vec(),
            });
        }
        let n = shape[0];
        let shapes = self.spec.shapes()?;
        let mut acts = vec![input.clone()];
        let mut p = 0;
        for (i, layer) in self.spec.layers.iter().enumerate() {
            let x = acts.last().unwrap();
            let mut out_shape = vec![n];
            out_shape.extend(&shapes[i + 1]);
            let y = match *layer {
                LayerSpec::Conv2d { kernel, stride, .. } => {
                    let y = conv_forward(
                        x,
                        &self.params.tensors[p],
                        &self.params.tensors[p + 1],
                        &shapes[i],
                        &shapes[i + 1],
                        kernel,
                        stride,
                    );
                    p += 2;
                    y
                }
                LayerSpec::Dense { .. } => {
                    let y = dense_forward(x, &self.params.tensors[p], &self.params.tensors[p + 1]);
                    p += 2;
                    y
                }
                LayerSpec::Relu => x.map(|v| v.max(0.0)),
                LayerSpec::Flatten => x.clone(),
            };
            acts.push(y.reshape(&out_shape)?);
        }
        let features = acts.last().unwrap();
        let mut logits = Vec::with_capacity(self.spec.heads.len());
        let mut outputs = Vec::with_capacity(self.spec.heads.len());
        for head in &self.spec.heads {
            let z = dense_forward(features, &self.params.tensors[p], &self.params.tensors[p + 1]);
            p += 2;
            let out = match head.activation {
                Activation::Identity => z.clone(),
                Activation::Softmax => softmax_rows(&z),
            };
            if !out.is_finite() {
                return Err(NnError::NonFinite(format!("head {}", head.name)));
            }
            logits.push(z);
            outputs.push(out);
        }
        Ok(Forward {
            batch: n,
            acts,
            logits,
            outputs,
            names: self.spec.heads.iter().map(|h| h.name.clone()).collect(),
        })
    }

    /// Gradients of a scalar loss given `dL/d(output)` for some heads.
    /// Heads not listed contribute nothing.
    pub fn backward(&self, fwd: &Forward, output_grads: &[(&str, &Tensor)]) -> Result<Gradients, NnError> {
        let mut logit_grads = Vec::with_capacity(output_grads.len());
        for &(name, g) in output_grads {
            let h = self.head(name)?;
            let out = fwd.output(name);
            check_shape(g, out.shape())?;
            logit_grads.push((name, match self.spec.heads[h].activation {
                Activation::Identity => g.clone(),
                Activation::Softmax => softmax_backward(out, g),
            }));
        }
        let refs: Vec<(&str, &Tensor)> = logit_grads.iter().map(|(n, t)| (*n, t)).collect();
        self.backward_logits(fwd, &refs)
    }

    /// Like [`Network::backward`], with gradients taken with respect to each
    /// head's pre-activation values.
    pub fn backward_logits(&self, fwd: &Forward, logit_grads: &[(&str, &Tensor)]) -> Result<Gradients, NnError> {
        let shapes = self.spec.shapes()?;
        let mut grads = Params::zeros(&self.spec);
        let n_layer_params: usize = self.spec.layers.iter().map(|l| l.param_shapes().len()).sum();
        let features = fwd.features();
        let mut d = Tensor::zeros(features.shape());
        for &(name, g) in logit_grads {
            let h = self.head(name)?;
            check_shape(g, fwd.logits(name).shape())?;
            let p = n_layer_params + 2 * h;
            let (gw, rest) = grads.tensors[p..].split_first_mut().unwrap();
            dense_backward(features, &self.params.tensors[p], g, gw, &mut rest[0], Some(&mut d));
        }
        let mut p = n_layer_params;
        for (i, layer) in self.spec.layers.iter().enumerate().rev() {
            let x = &fwd.acts[i];
            let need_input_grad = i > 0;
            d = match *layer {
                LayerSpec::Relu => {
                    let y = &fwd.acts[i + 1];
                    let mut d = d;
                    for (g, &v) in d.data_mut().iter_mut().zip(y.data()) {
                        if v <= 0.0 {
                            *g = 0.0;
                        }
                    }
                    d.reshape(x.shape())?
                }
                LayerSpec::Flatten => d.reshape(x.shape())?,
                LayerSpec::Dense { .. } => {
                    p -= 2;
                    let (gw, rest) = grads.tensors[p..].split_first_mut().unwrap();
                    let mut dx = need_input_grad.then(|| Tensor::zeros(x.shape()));
                    dense_backward(x, &self.params.tensors[p], &d, gw, &mut rest[0], dx.as_mut());
                    dx.unwrap_or(d)
                }
                LayerSpec::Conv2d { kernel, stride, .. } => {
                    p -= 2;
                    let (gw, rest) = grads.tensors[p..].split_first_mut().unwrap();
                    let mut dx = need_input_grad.then(|| Tensor::zeros(x.shape()));
                    conv_backward(
                        x,
                        &self.params.tensors[p],
                        &d,
                        gw,
                        &mut rest[0],
                        dx.as_mut(),
                        &shapes[i],
                        &shapes[i + 1],
                        kernel,
                        stride,
                    );
                    dx.unwrap_or(d)
                }
            };
        }
        if !grads.is_finite() {
            return Err(NnError::NonFinite("gradients".into()));
        }
        Ok(grads)
    }

    /// Sign pattern (`> 0`) of every ReLU output in `fwd`. Finite-difference
    /// checks use it to detect perturbations that cross a kink.
    pub fn relu_pattern(&self, fwd: &Forward) -> Vec<bool> {
        self.spec
            .layers
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, LayerSpec::Relu))
            .flat_map(|(i, _)| fwd.acts[i + 1].data().iter().map(|&v| v > 0.0))
            .collect()
    }

    fn head(&self, name: &str) -> Result<usize, NnError> {
        self.spec
            .head_index(name)
            .ok_or_else(|| NnError::InvalidSpec(format!("no head named {name}")))
    }
}

fn check_shape(t: &Tensor, want: &[usize]) -> Result<(), NnError> {
    if t.shape() != want {
        return Err(NnError::ShapeMismatch {
            expected: want.to_vec(),
            got: t.shape().to_vec(),
        });
    }
    Ok(())
}

fn softmax_rows(z: &Tensor) -> Tensor {
    let mut out = z.clone();
    let k = z.row_len();
    for row in out.data_mut().chunks_mut(k) {
        let max = row.iter().copied().fold(Real::NEG_INFINITY, Real::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

fn softmax_backward(p: &Tensor, g: &Tensor) -> Tensor {
    let k = p.row_len();
    let mut out = g.clone();
    for (row, (pr, gr)) in out.data_mut().chunks_mut(k).zip(p.data().chunks(k).zip(g.data().chunks(k))) {
        let dot: Real = pr.iter().zip(gr).map(|(a, b)| a * b).sum();
        for ((o, &pi), &gi) in row.iter_mut().zip(pr).zip(gr) {
            *o = pi * (gi - dot);
        }
    }
    out
}

/// `y = x · Wᵀ + b` for `x: [n, in]`, `W: [out, in]`.
fn dense_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let (n, inputs, outputs) = (x.rows(), x.row_len(), w.shape()[0]);
    let mut y = Tensor::zeros(&[n, outputs]);
    for row in y.data_mut().chunks_mut(outputs) {
        row.copy_from_slice(b.data());
    }
    gemm(Mat::new(x.data(), n, inputs), Mat::new(w.data(), outputs, inputs).t(), 1.0, y.data_mut());
    y
}

fn dense_backward(x: &Tensor, w: &Tensor, dy: &Tensor, gw: &mut Tensor, gb: &mut Tensor, dx: Option<&mut Tensor>) {
    let (n, inputs, outputs) = (x.rows(), x.row_len(), w.shape()[0]);
    gemm(Mat::new(dy.data(), n, outputs).t(), Mat::new(x.data(), n, inputs), 1.0, gw.data_mut());
    for row in dy.data().chunks(outputs) {
        for (g, v) in gb.data_mut().iter_mut().zip(row) {
            *g += v;
        }
    }
    if let Some(dx) = dx {
        gemm(Mat::new(dy.data(), n, outputs), Mat::new(w.data(), outputs, inputs), 1.0, dx.data_mut());
    }
}

/// Unrolls one `[c, h, w]` sample into `[c·k·k, oh·ow]` patch columns.
fn im2col(x: &[Real], ins: &[usize], outs: &[usize], k: usize, s: usize, cols: &mut [Real]) {
    let (c, h, w) = (ins[0], ins[1], ins[2]);
    let (oh, ow) = (outs[1], outs[2]);
    let p = oh * ow;
    for ch in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ch * k + ki) * k + kj;
                let dst = &mut cols[row * p..(row + 1) * p];
                for i in 0..oh {
                    let src = &x[ch * h * w + (i * s + ki) * w + kj..];
                    for j in 0..ow {
                        dst[i * ow + j] = src[j * s];
                    }
                }
            }
        }
    }
}

fn col2im_add(cols: &[Real], ins: &[usize], outs: &[usize], k: usize, s: usize, dx: &mut [Real]) {
    let (c, h, w) = (ins[0], ins[1], ins[2]);
    let (oh, ow) = (outs[1], outs[2]);
    let p = oh * ow;
    for ch in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ch * k + ki) * k + kj;
                let src = &cols[row * p..(row + 1) * p];
                for i in 0..oh {
                    let base = ch * h * w + (i * s + ki) * w + kj;
                    for j in 0..ow {
                        dx[base + j * s] += src[i * ow + j];
                    }
                }
            }
        }
    }
}

fn conv_forward(x: &Tensor, w: &Tensor, b: &Tensor, ins: &[usize], outs: &[usize], k: usize, s: usize) -> Tensor {
    let n = x.rows();
    let (o, p) = (outs[0], outs[1] * outs[2]);
    let ckk = ins[0] * k * k;
    let mut y = Tensor::zeros(&[n, o * p]);
    let mut cols = vec![0.0; ckk * p];
    for (xs, ys) in x.data().chunks(x.row_len()).zip(y.data_mut().chunks_mut(o * p)) {
        im2col(xs, ins, outs, k, s, &mut cols);
        for (ch, row) in ys.chunks_mut(p).enumerate() {
            row.fill(b.data()[ch]);
        }
        gemm(Mat::new(w.data(), o, ckk), Mat::new(&cols, ckk, p), 1.0, ys);
    }
    y
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    x: &Tensor,
    w: &Tensor,
    dy: &Tensor,
    gw: &mut Tensor,
    gb: &mut Tensor,
    mut dx: Option<&mut Tensor>,
    ins: &[usize],
    outs: &[usize],
    k: usize,
    s: usize,
) {
    let (o, p) = (outs[0], outs[1] * outs[2]);
    let ckk = ins[0] * k * k;
    let in_len = x.row_len();
    let mut cols = vec![0.0; ckk * p];
    let mut dcols = vec![0.0; ckk * p];
    for (n, (xs, dys)) in x.data().chunks(in_len).zip(dy.data().chunks(o * p)).enumerate() {
        im2col(xs, ins, outs, k, s, &mut cols);
        gemm(Mat::new(dys, o, p), Mat::new(&cols, ckk, p).t(), 1.0, gw.data_mut());
        for (g, row) in gb.data_mut().iter_mut().zip(dys.chunks(p)) {
            *g += row.iter().sum::<Real>();
        }
        if let Some(dx) = dx.as_deref_mut() {
            gemm(Mat::new(w.data(), o, ckk).t(), Mat::new(dys, o, p), 0.0, &mut dcols);
            col2im_add(&dcols, ins, outs, k, s, &mut dx.data_mut()[n * in_len..(n + 1) * in_len]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{rng_for, stream};

    fn single_head(input: Vec<usize>, layers: Vec<LayerSpec>, outputs: usize, activation: Activation, init: Init) -> NetworkSpec {
        let mut spec = NetworkSpec {
            input,
            layers,
            heads: vec![],
        };
        spec.heads.push(HeadSpec {
            name: "out".into(),
            inputs: spec.trunk_len(),
            outputs,
            activation,
            init,
        });
        spec
    }

    #[test]
    fn identity_dense_passes_input_through() {
        let spec = single_head(vec![4], vec![], 4, Activation::Identity, Init::Identity);
        let net = Network::new(spec, &mut rng_for(0, stream::INIT)).unwrap();
        let x = Tensor::new(vec![2, 4], vec![1.0, -2.0, 3.5, 0.0, 7.0, 8.0, -9.0, 0.25]).unwrap();
        assert_eq!(net.forward(&x).unwrap().output("out"), &x);
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let spec = single_head(vec![2], vec![], 3, Activation::Softmax, Init::Zeros);
        let net = Network::new(spec, &mut rng_for(0, stream::INIT)).unwrap();
        let x = Tensor::new(vec![1, 2], vec![0.3, -1.2]).unwrap();
        for p in net.forward(&x).unwrap().output("out").data() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let z = Tensor::from_fn(&[5, 7], |i| ((i * 31) % 17) as Real * 40.0 - 300.0);
        let p = softmax_rows(&z);
        for r in 0..5 {
            assert!((p.row(r).iter().sum::<Real>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn hand_computed_convolution() {
        // 2x2 kernel, stride 1, on a 4x4 input: out[i][j] = sum_{a,b} x[i+a][j+b] k[a][b] + bias.
        let spec = single_head(
            vec![1, 4, 4],
            vec![
                LayerSpec::Conv2d {
                    in_channels: 1,
                    out_channels: 1,
                    kernel: 2,
                    stride: 1,
                    init: Init::Zeros,
                },
                LayerSpec::Flatten,
            ],
            9,
            Activation::Identity,
            Init::Identity,
        );
        let mut net = Network::new(spec, &mut rng_for(0, stream::INIT)).unwrap();
        net.params.tensors[0] = Tensor::new(vec![1, 1, 2, 2], vec![1.0, 2.0, -1.0, 0.5]).unwrap();
        net.params.tensors[1] = Tensor::scalar(0.25);
        let x = Tensor::from_fn(&[1, 1, 4, 4], |i| i as Real);
        let out = net.forward(&x).unwrap();
        // Rows of x: [0 1 2 3] [4 5 6 7] [8 9 10 11] [12 13 14 15]
        // Window at (0,0): 0*1 + 1*2 + 4*(-1) + 5*0.5 = 0.5, plus bias.
        let want = [
            0.5, 3.0, 5.5, //
            10.5, 13.0, 15.5, //
            20.5, 23.0, 25.5,
        ];
        for (got, w) in out.output("out").data().iter().zip(want) {
            assert!((got - (w + 0.25)).abs() < 1e-12, "{got} vs {w}");
        }

        let spec = single_head(
            vec![1, 4, 4],
            vec![
                LayerSpec::Conv2d {
                    in_channels: 1,
                    out_channels: 1,
                    kernel: 2,
                    stride: 2,
                    init: Init::Zeros,
                },
                LayerSpec::Flatten,
            ],
            4,
            Activation::Identity,
            Init::Identity,
        );
        let mut net = Network::new(spec, &mut rng_for(0, stream::INIT)).unwrap();
        net.params.tensors[0] = Tensor::new(vec![1, 1, 2, 2], vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let out = net.forward(&x).unwrap();
        assert_eq!(out.output("out").data(), &[10.0, 18.0, 42.0, 50.0]);
    }

    #[test]
    fn linear_sum_gradient_is_input_outer_structure() {
        let spec = single_head(vec![3], vec![], 2, Activation::Identity, Init::default());
        let net = Network::new(spec, &mut rng_for(1, stream::INIT)).unwrap();
        let x = Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, -1.0, 0.5, 4.0]).unwrap();
        let f = net.forward(&x).unwrap();
        let ones = Tensor::from_fn(&[2, 2], |_| 1.0);
        let g = net.backward(&f, &[("out", &ones)]).unwrap();
        // d(sum y)/dW[o][i] = sum_n x[n][i]; d/db[o] = n.
        assert_eq!(g.tensors[0].data(), &[0.0, 2.5, 7.0, 0.0, 2.5, 7.0]);
        assert_eq!(g.tensors[1].data(), &[2.0, 2.0]);
    }

    #[test]
    fn zero_output_gradient_gives_zero_gradients() {
        let net = Network::new(default_actor_critic_spec(3), &mut rng_for(2, stream::INIT)).unwrap();
        let x = Tensor::from_fn(&[1, 3, 64, 64], |i| (i % 5) as Real / 4.0);
        let f = net.forward(&x).unwrap();
        let g = net
            .backward(&f, &[("policy", &Tensor::zeros(&[1, 3])), ("value", &Tensor::zeros(&[1, 1]))])
            .unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
        assert!(net.backward(&f, &[]).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn default_architecture_shapes() {
        let spec = default_dueling_spec(3);
        let shapes = spec.shapes().unwrap();
        assert_eq!(shapes[1], vec![16, 15, 15]);
        assert_eq!(shapes[3], vec![32, 6, 6]);
        assert_eq!(shapes.last().unwrap(), &vec![256]);
        let net = Network::new(spec, &mut rng_for(0, stream::INIT)).unwrap();
        let conv = 16 * 3 * 64 + 16 + 32 * 16 * 16 + 32;
        let fc = 1152 * 256 + 256;
        let heads = 256 + 1 + 256 * 3 + 3;
        assert_eq!(net.param_count(), conv + fc + heads);
    }

    #[test]
    fn invalid_specs_rejected() {
        let bad_dense = single_head(vec![4], vec![LayerSpec::dense(5, 2)], 1, Activation::Identity, Init::default());
        assert!(bad_dense.validate().is_err());
        let conv_on_flat = single_head(vec![16], vec![LayerSpec::conv(1, 1, 2, 1)], 1, Activation::Identity, Init::default());
        assert!(conv_on_flat.validate().is_err());
        let no_heads = NetworkSpec {
            input: vec![2],
            layers: vec![],
            heads: vec![],
        };
        assert!(no_heads.validate().is_err());
        let mut dup = NetworkSpec::dueling(vec![2], vec![], 2);
        dup.heads[1].name = "value".into();
        assert!(dup.validate().is_err());
    }

    #[test]
    fn forward_rejects_wrong_input_shape() {
        let net = Network::new(NetworkSpec::dueling(vec![3], vec![], 2), &mut rng_for(0, stream::INIT)).unwrap();
        assert!(matches!(
            net.forward(&Tensor::zeros(&[1, 4])),
            Err(NnError::ShapeMismatch { .. })
        ));
        assert!(net.forward(&Tensor::zeros(&[3])).is_err());
    }

    #[test]
    fn initialization_is_seeded() {
        let a = Network::new(default_dueling_spec(3), &mut rng_for(5, stream::INIT)).unwrap();
        let b = Network::new(default_dueling_spec(3), &mut rng_for(5, stream::INIT)).unwrap();
        let c = Network::new(default_dueling_spec(3), &mut rng_for(6, stream::INIT)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let bound = 1.0 / ((3 * 64) as Real).sqrt();
        assert!(a.params.tensors[0].data().iter().all(|v| v.abs() <= bound));
        assert!(a.params.tensors[1].data().iter().all(|&v| v == 0.0));
    }
}
