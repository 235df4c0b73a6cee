//! Small fully-connected networks with hand-written reverse-mode gradients.
//!
//! A network is an ordered slice of [`LinearLayer`]s. [`forward`] runs a batch
//! (one sample per row) and keeps every layer's input and output in a
//! [`Trace`]; [`backward`] walks the trace in reverse, accumulating parameter
//! gradients into [`LayerGrad`] buffers and returning the gradient with respect
//! to the network input so that several networks can be chained.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::numerics::{gemm, Matrix, Op};

/// Lower bound applied to probabilities inside the log of the cross-entropy.
/// Anything larger would cut the gradient of a saturated softmax that is
/// confidently wrong, leaving it stuck there.
pub const LOG_CLAMP: f64 = f64::MIN_POSITIVE;

/// Slope of the negative half of every leaky ReLU in the Smile-GAN networks.
pub const LEAKY_ALPHA: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DiffError {
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },
    #[error("backward called without a matching retained forward trace")]
    GraphNotRetained,
}

fn shape_err(expected: impl ToString, found: impl ToString) -> DiffError {
    DiffError::ShapeMismatch { expected: expected.to_string(), found: found.to_string() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "alpha", rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu(f64),
    Sigmoid,
    Softmax,
    None,
}

impl Activation {
    fn apply_rows(self, z: &mut Matrix) {
        match self {
            Activation::None => {}
            Activation::LeakyRelu(alpha) => z.as_mut_slice().iter_mut().for_each(|v| {
                if *v <= 0.0 {
                    *v *= alpha;
                }
            }),
            Activation::Sigmoid => z.as_mut_slice().iter_mut().for_each(|v| *v = sigmoid(*v)),
            Activation::Softmax => {
                for r in 0..z.rows() {
                    softmax_in_place(z.row_mut(r));
                }
            }
        }
    }

    /// Converts d(loss)/d(output) into d(loss)/d(pre-activation), in place.
    fn backprop(self, out: &Matrix, grad: &mut Matrix) {
        match self {
            Activation::None => {}
            Activation::LeakyRelu(alpha) => {
                for (g, &o) in grad.as_mut_slice().iter_mut().zip(out.as_slice()) {
                    if o <= 0.0 {
                        *g *= alpha;
                    }
                }
            }
            Activation::Sigmoid => {
                for (g, &s) in grad.as_mut_slice().iter_mut().zip(out.as_slice()) {
                    *g *= s * (1.0 - s);
                }
            }
            Activation::Softmax => {
                for r in 0..out.rows() {
                    let p = out.row(r);
                    let g = grad.row_mut(r);
                    let inner: f64 = p.iter().zip(g.iter()).map(|(a, b)| a * b).sum();
                    for (gj, &pj) in g.iter_mut().zip(p) {
                        *gj = pj * (*gj - inner);
                    }
                }
            }
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn leaky_relu(x: f64, alpha: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        alpha * x
    }
}

pub fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    v.iter_mut().for_each(|x| *x /= sum);
}

pub fn softmax(v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    softmax_in_place(&mut out);
    out
}

/// Affine map `out = W·in (+ b)` followed by an activation.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLayer {
    /// `out × in`
    pub weight: Matrix,
    pub bias: Option<Vec<f64>>,
    pub activation: Activation,
}

impl LinearLayer {
    /// Weights drawn from U(-1/√fan_in, 1/√fan_in); biases start at zero.
    pub fn init<R: Rng + ?Sized>(
        input: usize,
        output: usize,
        bias: bool,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        let data = (0..input * output).map(|_| rng.random_range(-bound..bound)).collect();
        Self {
            weight: Matrix::from_raw(output, input, data),
            bias: bias.then(|| vec![0.0; output]),
            activation,
        }
    }

    pub fn zeros(input: usize, output: usize, bias: bool, activation: Activation) -> Self {
        Self { weight: Matrix::zeros(output, input), bias: bias.then(|| vec![0.0; output]), activation }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn num_params(&self) -> usize {
        self.weight.as_slice().len() + self.bias.as_ref().map_or(0, Vec::len)
    }

    fn forward(&self, input: &Matrix) -> Matrix {
        let mut z = Matrix::zeros(input.rows(), self.output_dim());
        gemm(Op::N, input, Op::T, &self.weight, 0.0, &mut z);
        if let Some(b) = &self.bias {
            for r in 0..z.rows() {
                z.row_mut(r).iter_mut().zip(b).for_each(|(v, bi)| *v += bi);
            }
        }
        self.activation.apply_rows(&mut z);
        z
    }
}

/// Gradient buffer with the same shape as a [`LinearLayer`]'s parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weight: Matrix,
    pub bias: Option<Vec<f64>>,
}

impl LayerGrad {
    fn zeros_like(layer: &LinearLayer) -> Self {
        Self {
            weight: Matrix::zeros(layer.weight.rows(), layer.weight.cols()),
            bias: layer.bias.as_ref().map(|b| vec![0.0; b.len()]),
        }
    }

    fn clear(&mut self) {
        self.weight.as_mut_slice().fill(0.0);
        if let Some(b) = &mut self.bias {
            b.fill(0.0);
        }
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.weight.as_slice().iter().chain(self.bias.iter().flatten())
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weight.as_mut_slice().iter_mut().chain(self.bias.iter_mut().flatten())
    }
}

/// Retained activations of one forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    inputs: Vec<Matrix>,
    outputs: Vec<Matrix>,
}

impl Trace {
    pub fn output(&self) -> &Matrix {
        self.outputs.last().expect("trace of an empty network")
    }

    pub fn into_output(mut self) -> Matrix {
        self.outputs.pop().expect("trace of an empty network")
    }

    pub fn num_layers(&self) -> usize {
        self.outputs.len()
    }
}

fn check_input(layers: &[LinearLayer], input: &Matrix) -> Result<(), DiffError> {
    let first = layers.first().ok_or_else(|| shape_err("at least one layer", "empty network"))?;
    if input.cols() != first.input_dim() {
        return Err(shape_err(
            format!("{} input features", first.input_dim()),
            format!("{} input features", input.cols()),
        ));
    }
    Ok(())
}

/// Runs a batch through the layers, retaining everything needed by [`backward`].
pub fn forward(layers: &[LinearLayer], input: &Matrix) -> Result<Trace, DiffError> {
    check_input(layers, input)?;
    let mut inputs = Vec::with_capacity(layers.len());
    let mut outputs = Vec::with_capacity(layers.len());
    let mut current = input.clone();
    for layer in layers {
        let out = layer.forward(&current);
        inputs.push(current);
        current = out.clone();
        outputs.push(out);
    }
    Ok(Trace { inputs, outputs })
}

/// Forward pass that keeps only the final output.
pub fn forward_output(layers: &[LinearLayer], input: &Matrix) -> Result<Matrix, DiffError> {
    check_input(layers, input)?;
    let mut current = layers[0].forward(input);
    for layer in &layers[1..] {
        current = layer.forward(&current);
    }
    Ok(current)
}

/// Reverse pass for a retained trace.
///
/// `grad_output` is d(loss)/d(network output). When `grads` is given, parameter
/// gradients are added to it (callers clear buffers between steps). Returns
/// d(loss)/d(network input).
pub fn backward(
    layers: &[LinearLayer],
    trace: &Trace,
    grad_output: &Matrix,
    mut grads: Option<&mut [LayerGrad]>,
) -> Result<Matrix, DiffError> {
    if trace.num_layers() != layers.len() || trace.num_layers() == 0 {
        return Err(DiffError::GraphNotRetained);
    }
    for (layer, out) in layers.iter().zip(&trace.outputs) {
        if out.cols() != layer.output_dim() {
            return Err(DiffError::GraphNotRetained);
        }
    }
    let out = trace.output();
    if (grad_output.rows(), grad_output.cols()) != (out.rows(), out.cols()) {
        return Err(shape_err(
            format!("{}x{}", out.rows(), out.cols()),
            format!("{}x{}", grad_output.rows(), grad_output.cols()),
        ));
    }
    if let Some(g) = grads.as_deref() {
        if g.len() != layers.len() {
            return Err(shape_err(format!("{} gradient buffers", layers.len()), g.len()));
        }
    }

    let mut grad = grad_output.clone();
    for (idx, layer) in layers.iter().enumerate().rev() {
        layer.activation.backprop(&trace.outputs[idx], &mut grad);
        let input = &trace.inputs[idx];
        if let Some(buffers) = grads.as_deref_mut() {
            let buf = &mut buffers[idx];
            gemm(Op::T, &grad, Op::N, input, 1.0, &mut buf.weight);
            if let Some(b) = &mut buf.bias {
                for r in 0..grad.rows() {
                    b.iter_mut().zip(grad.row(r)).for_each(|(acc, g)| *acc += g);
                }
            }
        }
        let mut grad_in = Matrix::zeros(grad.rows(), layer.input_dim());
        gemm(Op::N, &grad, Op::N, &layer.weight, 0.0, &mut grad_in);
        grad = grad_in;
    }
    Ok(grad)
}

/// Cross-entropy `-Σ target_i · ln(max(predicted_i, LOG_CLAMP))`.
pub fn cross_entropy(target: &[f64], predicted: &[f64]) -> Result<f64, DiffError> {
    if target.len() != predicted.len() {
        return Err(shape_err(target.len(), predicted.len()));
    }
    // `f64::max` would swallow a NaN prediction, so clamp by comparison.
    let s: f64 = target.iter().zip(predicted).map(|(&t, &p)| t * (if p < LOG_CLAMP { LOG_CLAMP } else { p }).ln()).sum();
    Ok(-s)
}

/// Batch mean of [`cross_entropy`] with its gradient w.r.t. the predictions.
pub fn cross_entropy_batch(targets: &Matrix, predicted: &Matrix) -> Result<(f64, Matrix), DiffError> {
    if (targets.rows(), targets.cols()) != (predicted.rows(), predicted.cols()) {
        return Err(shape_err(
            format!("{}x{}", targets.rows(), targets.cols()),
            format!("{}x{}", predicted.rows(), predicted.cols()),
        ));
    }
    let m = predicted.rows() as f64;
    let mut total = 0.0;
    let mut grad = Matrix::zeros(predicted.rows(), predicted.cols());
    for r in 0..predicted.rows() {
        total += cross_entropy(targets.row(r), predicted.row(r))?;
        for ((g, &t), &p) in grad.row_mut(r).iter_mut().zip(targets.row(r)).zip(predicted.row(r)) {
            // The clamp is flat below LOG_CLAMP, so no gradient flows there.
            if p >= LOG_CLAMP {
                *g = -t / (p * m);
            }
        }
    }
    Ok((total / m, grad))
}

/// L1 distance `Σ |y'_i − x_i|`.
pub fn l1_change(y_prime: &[f64], x: &[f64]) -> Result<f64, DiffError> {
    if y_prime.len() != x.len() {
        return Err(shape_err(x.len(), y_prime.len()));
    }
    Ok(y_prime.iter().zip(x).map(|(a, b)| (a - b).abs()).sum())
}

/// Batch mean of [`l1_change`] with its (sub)gradient w.r.t. `y_prime`.
pub fn l1_change_batch(y_prime: &Matrix, x: &Matrix) -> Result<(f64, Matrix), DiffError> {
    if (y_prime.rows(), y_prime.cols()) != (x.rows(), x.cols()) {
        return Err(shape_err(
            format!("{}x{}", x.rows(), x.cols()),
            format!("{}x{}", y_prime.rows(), y_prime.cols()),
        ));
    }
    let m = x.rows() as f64;
    let mut total = 0.0;
    let mut grad = Matrix::zeros(x.rows(), x.cols());
    for r in 0..x.rows() {
        total += l1_change(y_prime.row(r), x.row(r))?;
        for ((g, a), b) in grad.row_mut(r).iter_mut().zip(y_prime.row(r)).zip(x.row(r)) {
            let d = a - b;
            *g = if d > 0.0 {
                1.0 / m
            } else if d < 0.0 {
                -1.0 / m
            } else {
                0.0
            };
        }
    }
    Ok((total / m, grad))
}

/// ADAM hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self { learning_rate, ..Self::default() }
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { learning_rate: 0.002, beta1: 0.5, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Parameters of one network together with its gradient and ADAM buffers.
#[derive(Debug, Clone)]
pub struct ParamSet {
    layers: Vec<LinearLayer>,
    grads: Vec<LayerGrad>,
    first_moment: Vec<LayerGrad>,
    second_moment: Vec<LayerGrad>,
    step: u64,
}

impl PartialEq for ParamSet {
    /// Two sets are equal when their parameters are; optimizer state is ignored.
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl ParamSet {
    pub fn new(layers: Vec<LinearLayer>) -> Self {
        let zeros: Vec<LayerGrad> = layers.iter().map(LayerGrad::zeros_like).collect();
        Self {
            grads: zeros.clone(),
            first_moment: zeros.clone(),
            second_moment: zeros,
            layers,
            step: 0,
        }
    }

    pub fn layers(&self) -> &[LinearLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LinearLayer] {
        &mut self.layers
    }

    pub fn grads(&self) -> &[LayerGrad] {
        &self.grads
    }

    pub fn grads_mut(&mut self) -> &mut [LayerGrad] {
        &mut self.grads
    }

    /// Splits into (layers, gradient buffers) so a backward pass can read the
    /// former while writing the latter.
    pub fn split_mut(&mut self) -> (&[LinearLayer], &mut [LayerGrad]) {
        (&self.layers, &mut self.grads)
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(LinearLayer::num_params).sum()
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(LayerGrad::clear);
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.as_slice().iter().chain(l.bias.iter().flatten()))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weight.as_mut_slice().iter_mut().chain(l.bias.iter_mut().flatten()))
    }

    pub fn grad_values(&self) -> impl Iterator<Item = &f64> {
        self.grads.iter().flat_map(LayerGrad::values)
    }

    pub fn max_abs_param(&self) -> f64 {
        self.params().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn grad_norm(&self) -> f64 {
        self.grad_values().map(|g| g * g).sum::<f64>().sqrt()
    }

    /// One bias-corrected ADAM update; clears the gradient buffers afterwards.
    pub fn adam_step(&mut self, cfg: &OptimizerConfig) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for (((layer, grad), m), v) in self
            .layers
            .iter_mut()
            .zip(&mut self.grads)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            let params = layer.weight.as_mut_slice().iter_mut().chain(layer.bias.iter_mut().flatten());
            for (((p, g), m), v) in params.zip(grad.values_mut()).zip(m.values_mut()).zip(v.values_mut()) {
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * *g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * *g * *g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
                *g = 0.0;
            }
        }
    }

    /// Rescales all gradients so their global L2 norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_gradients(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm > max_norm {
            let scale = max_norm / norm;
            self.grads.iter_mut().flat_map(LayerGrad::values_mut).for_each(|g| *g *= scale);
        }
        norm
    }

    /// Clamps every weight and bias into `[-c, c]`.
    pub fn clip_weights(&mut self, c: f64) {
        self.params_mut().for_each(|w| *w = w.clamp(-c, c));
    }
}
