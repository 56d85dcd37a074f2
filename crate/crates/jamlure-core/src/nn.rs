//! Dense feedforward networks with hand-rolled reverse-mode gradients.
//!
//! Everything runs on `f64` and plain `Vec` storage. The module exposes the
//! pieces a value-function learner needs: construction with fan-balanced
//! uniform init, forward passes, parameter gradients of a scalar projection
//! of the output, a bias-corrected Adam rule, and a versioned byte snapshot
//! that round-trips bit for bit.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand_core::RngCore;

use crate::sample;

/// Elementwise nonlinearity applied after a layer's affine map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    /// max(0, x). The derivative at exactly 0 is taken as 0.
    Rectifier,
    /// Pass-through, used on output layers.
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Rectifier => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Identity => x,
        }
    }

    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Rectifier => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    fn tag(self) -> u8 {
        match self {
            Activation::Rectifier => 0,
            Activation::Identity => 1,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Rectifier),
            1 => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// One affine layer. Weights are row-major, `outputs` rows of `inputs`
/// columns, so `weights[o * inputs + i]` scales input `i` into output `o`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        debug_assert_eq!(x.len(), self.inputs);
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let mut acc = self.biases[o];
            for (w, v) in row.iter().zip(x) {
                acc += w * v;
            }
            out.push(acc);
        }
    }
}

/// A multilayer perceptron, input to output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    layers: Vec<Layer>,
}

/// How `mlp_new` fills the weight matrices. Biases start at zero either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitRule {
    /// Uniform on +-sqrt(6 / (fan_in + fan_out)).
    FanBalanced,
    /// Everything zero. Useful for tests that need a known fixed point.
    Zeros,
}

/// Rejected network shape.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ShapeError {
    /// Fewer than two widths, so there is no layer to build.
    TooFewWidths { widths: usize },
    /// One activation is needed per layer, which is one fewer than widths.
    ActivationCountMismatch { widths: usize, activations: usize },
    /// A width of zero makes the affine maps degenerate.
    ZeroWidth { index: usize },
}

impl fmt::Display for ShapeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ShapeError::TooFewWidths { widths } => {
                write!(f, "need at least two layer widths, got {widths}")
            }
            ShapeError::ActivationCountMismatch { widths, activations } => write!(
                f,
                "{widths} widths require {} activations, got {activations}",
                widths - 1
            ),
            ShapeError::ZeroWidth { index } => {
                write!(f, "layer width at position {index} is zero")
            }
        }
    }
}

impl core::error::Error for ShapeError {}

/// Builds a network from layer widths and per-layer activations.
pub fn mlp_new(
    widths: &[usize],
    activations: &[Activation],
    init: InitRule,
    rng: &mut impl RngCore,
) -> Result<MlpNetwork, ShapeError> {
    if widths.len() < 2 {
        return Err(ShapeError::TooFewWidths { widths: widths.len() });
    }
    if activations.len() != widths.len() - 1 {
        return Err(ShapeError::ActivationCountMismatch {
            widths: widths.len(),
            activations: activations.len(),
        });
    }
    if let Some(index) = widths.iter().position(|&w| w == 0) {
        return Err(ShapeError::ZeroWidth { index });
    }
    let mut layers = Vec::with_capacity(widths.len() - 1);
    for (l, &activation) in activations.iter().enumerate() {
        let inputs = widths[l];
        let outputs = widths[l + 1];
        let mut weights = vec![0.0; inputs * outputs];
        if init == InitRule::FanBalanced {
            let bound = libm::sqrt(6.0 / (inputs + outputs) as f64);
            for w in &mut weights {
                *w = (sample::uniform_f64(rng) * 2.0 - 1.0) * bound;
            }
        }
        layers.push(Layer {
            inputs,
            outputs,
            weights,
            biases: vec![0.0; outputs],
            activation,
        });
    }
    Ok(MlpNetwork { layers })
}

/// Per-layer values cached by a forward pass, enough to backpropagate
/// without recomputing. `inputs[l]` feeds layer `l`; `pre[l]` holds its
/// affine outputs before the nonlinearity.
pub struct ForwardTrace {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl MlpNetwork {
    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    /// Runs the network on one input vector.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.input_width(), "input width mismatch");
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for layer in &self.layers {
            layer.affine(&cur, &mut next);
            for v in &mut next {
                *v = layer.activation.apply(*v);
            }
            core::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    /// Forward pass that also returns the cached intermediates needed by
    /// [`MlpNetwork::backward_from_trace`].
    pub fn forward_trace(&self, x: &[f64]) -> (Vec<f64>, ForwardTrace) {
        assert_eq!(x.len(), self.input_width(), "input width mismatch");
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_vec();
        for layer in &self.layers {
            let mut affine = Vec::new();
            layer.affine(&cur, &mut affine);
            inputs.push(cur);
            cur = affine.iter().map(|&v| layer.activation.apply(v)).collect();
            pre.push(affine);
        }
        (cur, ForwardTrace { inputs, pre })
    }

    /// Gradients of the scalar `output . grad_output` with respect to every
    /// parameter, evaluated at input `x`. Runs its own forward pass.
    pub fn backward(&self, x: &[f64], grad_output: &[f64]) -> Gradients {
        let (_, trace) = self.forward_trace(x);
        let mut grads = Gradients::zeros_like(self);
        self.backward_from_trace(&trace, grad_output, &mut grads);
        grads
    }

    /// Accumulates the same gradients as [`MlpNetwork::backward`] into
    /// `grads`, reusing a cached forward trace. Callers batching over many
    /// inputs sum into one accumulator and scale once.
    pub fn backward_from_trace(
        &self,
        trace: &ForwardTrace,
        grad_output: &[f64],
        grads: &mut Gradients,
    ) {
        assert_eq!(grad_output.len(), self.output_width(), "output width mismatch");
        assert_eq!(grads.layers.len(), self.layers.len(), "gradient shape mismatch");
        let mut upstream = grad_output.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let pre = &trace.pre[l];
            let input = &trace.inputs[l];
            let slot = &mut grads.layers[l];
            // delta = upstream through the activation's local slope.
            let mut delta = upstream;
            for (d, &p) in delta.iter_mut().zip(pre) {
                *d *= layer.activation.derivative(p);
            }
            for o in 0..layer.outputs {
                slot.biases[o] += delta[o];
                let row = &mut slot.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (g, &v) in row.iter_mut().zip(input) {
                    *g += delta[o] * v;
                }
            }
            if l == 0 {
                break;
            }
            let mut down = vec![0.0; layer.inputs];
            for o in 0..layer.outputs {
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (d, &w) in down.iter_mut().zip(row) {
                    *d += delta[o] * w;
                }
            }
            upstream = down;
        }
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// Reads the parameter at `index` in flat order: per layer, weights
    /// row-major then biases. The same order is used by [`Gradients::flatten`]
    /// and the Adam state, so the three always line up.
    pub fn param_get(&self, index: usize) -> f64 {
        let mut rest = index;
        for layer in &self.layers {
            if rest < layer.weights.len() {
                return layer.weights[rest];
            }
            rest -= layer.weights.len();
            if rest < layer.biases.len() {
                return layer.biases[rest];
            }
            rest -= layer.biases.len();
        }
        panic!("parameter index {index} out of range");
    }

    /// Writes the parameter at `index` in the flat order of
    /// [`MlpNetwork::param_get`].
    pub fn param_set(&mut self, index: usize, value: f64) {
        let mut rest = index;
        for layer in &mut self.layers {
            if rest < layer.weights.len() {
                layer.weights[rest] = value;
                return;
            }
            rest -= layer.weights.len();
            if rest < layer.biases.len() {
                layer.biases[rest] = value;
                return;
            }
            rest -= layer.biases.len();
        }
        panic!("parameter index {index} out of range");
    }

    /// Serializes the full network, shape and parameters, to a snapshot that
    /// [`MlpNetwork::from_bytes`] restores bit for bit.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(SNAPSHOT_MAGIC);
        out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for layer in &self.layers {
            out.extend_from_slice(&(layer.inputs as u32).to_le_bytes());
            out.extend_from_slice(&(layer.outputs as u32).to_le_bytes());
            out.push(layer.activation.tag());
        }
        for layer in &self.layers {
            for w in layer.weights.iter().chain(&layer.biases) {
                out.extend_from_slice(&w.to_le_bytes());
            }
        }
        out
    }

    /// Restores a network from [`MlpNetwork::to_bytes`] output.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SnapshotError> {
        let mut cursor = Cursor { bytes, pos: 0 };
        let magic = cursor.take(SNAPSHOT_MAGIC.len())?;
        if magic != SNAPSHOT_MAGIC {
            return Err(SnapshotError::BadMagic);
        }
        let version = cursor.u32()?;
        if version != SNAPSHOT_VERSION {
            return Err(SnapshotError::UnsupportedVersion(version));
        }
        let layer_count = cursor.u32()? as usize;
        if layer_count == 0 {
            return Err(SnapshotError::Malformed(String::from("no layers")));
        }
        let mut shapes = Vec::with_capacity(layer_count);
        for _ in 0..layer_count {
            let inputs = cursor.u32()? as usize;
            let outputs = cursor.u32()? as usize;
            let tag = cursor.take(1)?[0];
            let activation = Activation::from_tag(tag)
                .ok_or(SnapshotError::Malformed(format!("activation tag {tag}")))?;
            if inputs == 0 || outputs == 0 {
                return Err(SnapshotError::Malformed(String::from("zero layer width")));
            }
            shapes.push((inputs, outputs, activation));
        }
        for pair in shapes.windows(2) {
            if pair[0].1 != pair[1].0 {
                return Err(SnapshotError::Malformed(String::from(
                    "adjacent layer widths disagree",
                )));
            }
        }
        let mut layers = Vec::with_capacity(layer_count);
        for (inputs, outputs, activation) in shapes {
            let mut weights = Vec::with_capacity(inputs * outputs);
            for _ in 0..inputs * outputs {
                weights.push(cursor.f64()?);
            }
            let mut biases = Vec::with_capacity(outputs);
            for _ in 0..outputs {
                biases.push(cursor.f64()?);
            }
            layers.push(Layer { inputs, outputs, weights, biases, activation });
        }
        if cursor.pos != bytes.len() {
            return Err(SnapshotError::Malformed(String::from("trailing bytes")));
        }
        Ok(MlpNetwork { layers })
    }
}

const SNAPSHOT_MAGIC: &[u8] = b"MLPW";
const SNAPSHOT_VERSION: u32 = 1;

/// Rejected snapshot bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SnapshotError {
    BadMagic,
    UnsupportedVersion(u32),
    Truncated,
    Malformed(String),
}

impl fmt::Display for SnapshotError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SnapshotError::BadMagic => write!(f, "snapshot header is not a network snapshot"),
            SnapshotError::UnsupportedVersion(v) => {
                write!(f, "snapshot version {v} is not supported")
            }
            SnapshotError::Truncated => write!(f, "snapshot ends mid-field"),
            SnapshotError::Malformed(why) => write!(f, "snapshot is malformed: {why}"),
        }
    }
}

impl core::error::Error for SnapshotError {}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SnapshotError> {
        if self.pos + n > self.bytes.len() {
            return Err(SnapshotError::Truncated);
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, SnapshotError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f64(&mut self) -> Result<f64, SnapshotError> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes([
            b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7],
        ]))
    }
}

/// Parameter gradients in the same shapes as the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradients>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(net: &MlpNetwork) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGradients {
                    weights: vec![0.0; l.weights.len()],
                    biases: vec![0.0; l.biases.len()],
                })
                .collect(),
        }
    }

    pub fn zero(&mut self) {
        for l in &mut self.layers {
            l.weights.fill(0.0);
            l.biases.fill(0.0);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(&mut l.biases) {
                *w *= factor;
            }
        }
    }

    /// All entries in the flat parameter order of
    /// [`MlpNetwork::param_get`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }
}

/// Adam step sizes and moment decay rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment accumulators, flat in the parameter order of
/// [`MlpNetwork::param_get`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(net: &MlpNetwork) -> Self {
        let n = net.param_count();
        AdamState { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update of every parameter in `net`.
pub fn optimizer_step(
    net: &mut MlpNetwork,
    grads: &Gradients,
    state: &mut AdamState,
    params: &AdamParams,
) {
    assert_eq!(grads.layers.len(), net.layers.len(), "gradient shape mismatch");
    state.t += 1;
    let t = state.t as f64;
    let bias1 = 1.0 - libm::pow(params.beta1, t);
    let bias2 = 1.0 - libm::pow(params.beta2, t);
    let mut flat = 0;
    for (layer, slot) in net.layers.iter_mut().zip(&grads.layers) {
        for (p, &g) in layer
            .weights
            .iter_mut()
            .chain(&mut layer.biases)
            .zip(slot.weights.iter().chain(&slot.biases))
        {
            let m = &mut state.m[flat];
            let v = &mut state.v[flat];
            *m = params.beta1 * *m + (1.0 - params.beta1) * g;
            *v = params.beta2 * *v + (1.0 - params.beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= params.learning_rate * m_hat / (libm::sqrt(v_hat) + params.epsilon);
            flat += 1;
        }
    }
    debug_assert_eq!(flat, state.m.len());
}
