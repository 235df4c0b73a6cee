//! The Smile-GAN networks and their training loop.
//!
//! * mapping `f(x, z) = x + δ`: `x` is encoded to a latent vector, the one-hot
//!   subtype `z` is decoded (sigmoid) to a vector of the same width, and their
//!   elementwise product is decoded into the change `δ`;
//! * discriminator `D(y)`: two-way softmax, index 1 = real patient, 0 = synthesized;
//! * clustering `g(y)`: M-way softmax over subtypes.
//!
//! One training iteration updates D, then f, then g on a CN batch, a PT batch
//! and freshly sampled subtypes, and finally clamps the parameters of f and g
//! into `[-c, c]`.

mod checkpoint;
mod config;

pub use checkpoint::FORMAT_VERSION;
pub use config::{ChangeReduction, TrainingConfig};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffnet::{
    backward, cross_entropy_batch, forward, forward_output, l1_change_batch, Activation, DiffError, LinearLayer,
    ParamSet, Trace, LEAKY_ALPHA,
};
use crate::monitor::{epoch_monitor, should_stop, LabelHistory, MonitorRecord};
use crate::numerics::Matrix;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("CN and PT data must both be non-empty")]
    EmptyDataset,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite {loss} loss at epoch {epoch}, iteration {iteration}")]
    NonFiniteLoss {
        loss: &'static str,
        epoch: usize,
        iteration: usize,
        /// Model as of the start of the failing epoch.
        last_finite: Box<SmileGanModel>,
        monitor: Vec<MonitorRecord>,
    },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("checkpoint format version mismatch: expected {expected}, found {found}")]
    FormatVersionMismatch { expected: u32, found: String },
    #[error("checkpoint integrity check failed")]
    ChecksumMismatch,
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

impl From<DiffError> for ModelError {
    fn from(e: DiffError) -> Self {
        ModelError::ShapeMismatch(e.to_string())
    }
}

impl From<std::io::Error> for ModelError {
    fn from(e: std::io::Error) -> Self {
        ModelError::Io(e.to_string())
    }
}

/// Layer widths of the three networks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub feature_dim: usize,
    pub m: usize,
    /// Hidden widths of the x-encoder; the last one is the latent width shared
    /// with the subtype decoder.
    pub encoder: Vec<usize>,
    /// Leaky-ReLU widths of the change decoder, followed by a final linear
    /// layer to `feature_dim`.
    pub change_decoder: Vec<usize>,
    pub discriminator: Vec<usize>,
    pub clustering: Vec<usize>,
}

impl ArchitectureSpec {
    /// Widths scaled from the feature count: d → d/2 → d/4 encoders, and so
    /// on. For 145 ROIs this gives 145→72→36.
    pub fn new(feature_dim: usize, m: usize) -> Self {
        let half = (feature_dim / 2).max(2);
        let quarter = (feature_dim / 4).max(2);
        Self {
            feature_dim,
            m,
            encoder: vec![half, quarter],
            change_decoder: vec![half, feature_dim],
            discriminator: vec![half, quarter],
            clustering: vec![feature_dim, half, quarter],
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
        if self.m < 2 {
            return bad(format!("M must be at least 2, got {}", self.m));
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be positive".into());
        }
        for (name, w) in [
            ("encoder", &self.encoder),
            ("change_decoder", &self.change_decoder),
            ("discriminator", &self.discriminator),
            ("clustering", &self.clustering),
        ] {
            if w.is_empty() && name == "encoder" {
                return bad("encoder needs at least one layer".into());
            }
            if w.contains(&0) {
                return bad(format!("{name} has a zero-width layer"));
            }
        }
        Ok(())
    }

    pub fn latent_dim(&self) -> usize {
        *self.encoder.last().expect("validated encoder")
    }

    fn build_mapping<R: Rng>(&self, rng: &mut R) -> ParamSet {
        let leaky = Activation::LeakyRelu(LEAKY_ALPHA);
        let mut layers = Vec::new();
        let mut input = self.feature_dim;
        for &w in &self.encoder {
            layers.push(LinearLayer::init(input, w, false, leaky, rng));
            input = w;
        }
        layers.push(LinearLayer::init(self.m, self.latent_dim(), true, Activation::Sigmoid, rng));
        let mut input = self.latent_dim();
        for &w in &self.change_decoder {
            layers.push(LinearLayer::init(input, w, false, leaky, rng));
            input = w;
        }
        layers.push(LinearLayer::init(input, self.feature_dim, false, Activation::None, rng));
        ParamSet::new(layers)
    }

    fn build_classifier<R: Rng>(&self, hidden: &[usize], out: usize, rng: &mut R) -> ParamSet {
        let mut layers = Vec::new();
        let mut input = self.feature_dim;
        for &w in hidden {
            layers.push(LinearLayer::init(input, w, true, Activation::LeakyRelu(LEAKY_ALPHA), rng));
            input = w;
        }
        layers.push(LinearLayer::init(input, out, true, Activation::Softmax, rng));
        ParamSet::new(layers)
    }

    /// Index ranges of the encoder, subtype decoder and change decoder inside
    /// the mapping network's layer list.
    fn mapping_ranges(&self) -> (std::ops::Range<usize>, std::ops::Range<usize>, std::ops::Range<usize>) {
        let e = self.encoder.len();
        (0..e, e..e + 1, e + 1..e + 2 + self.change_decoder.len())
    }
}

/// One-hot subtype vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SubtypeVector(pub Vec<f64>);

impl SubtypeVector {
    pub fn one_hot(m: usize, index: usize) -> Self {
        let mut v = vec![0.0; m];
        v[index] = 1.0;
        Self(v)
    }

    /// Position of the 1 (first maximum).
    pub fn index(&self) -> usize {
        argmax(&self.0)
    }
}

/// Draws a subtype uniformly from the M one-hot vectors.
pub fn sample_subtype<R: Rng + ?Sized>(m: usize, rng: &mut R) -> SubtypeVector {
    assert!(m >= 2, "need at least two subtypes");
    SubtypeVector::one_hot(m, rng.random_range(0..m))
}

/// `count` sampled subtypes stacked as rows.
pub fn sample_subtype_batch<R: Rng + ?Sized>(m: usize, count: usize, rng: &mut R) -> Matrix {
    let mut z = Matrix::zeros(count, m);
    for r in 0..count {
        z.set(r, rng.random_range(0..m), 1.0);
    }
    z
}

/// All rows equal to the `index`-th one-hot vector.
pub fn constant_subtype_batch(m: usize, count: usize, index: usize) -> Matrix {
    let mut z = Matrix::zeros(count, m);
    for r in 0..count {
        z.set(r, index, 1.0);
    }
    z
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Dominant pattern of each row of a probability matrix.
pub fn dominant_patterns(probs: &Matrix) -> Vec<usize> {
    (0..probs.rows()).map(|r| argmax(probs.row(r))).collect()
}

fn class_targets(count: usize, class: usize) -> Matrix {
    constant_subtype_batch(2, count, class)
}

const FAKE: usize = 0;
const REAL: usize = 1;

struct MappingTrace {
    encoder: Trace,
    decoder: Trace,
    change: Trace,
}

/// Losses of one iteration, each computed just before its network's update.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepLosses {
    pub discriminator: f64,
    pub mapping: f64,
    pub clustering: f64,
}

/// Hooks for watching a training run.
pub trait TrainObserver {
    fn on_iteration(&mut self, _model: &SmileGanModel, _losses: &StepLosses) {}
    fn on_epoch(&mut self, _model: &SmileGanModel, _record: &MonitorRecord) {}
}

impl TrainObserver for () {}

/// Mapping, discriminator and clustering networks plus the run metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SmileGanModel {
    pub arch: ArchitectureSpec,
    pub config: TrainingConfig,
    pub seed: u64,
    pub epoch: usize,
    pub(crate) mapping: ParamSet,
    pub(crate) discriminator: ParamSet,
    pub(crate) clustering: ParamSet,
}

impl SmileGanModel {
    /// Freshly initialised networks; draws from `rng`.
    pub fn init<R: Rng>(arch: ArchitectureSpec, config: TrainingConfig, seed: u64, rng: &mut R) -> Result<Self, ModelError> {
        arch.validate()?;
        config.validate().map_err(ModelError::InvalidConfig)?;
        if arch.m != config.m {
            return Err(ModelError::InvalidConfig(format!("architecture M={} but config M={}", arch.m, config.m)));
        }
        let mapping = arch.build_mapping(rng);
        let discriminator = arch.build_classifier(&arch.discriminator, 2, rng);
        let clustering = arch.build_classifier(&arch.clustering, arch.m, rng);
        Ok(Self { arch, config, seed, epoch: 0, mapping, discriminator, clustering })
    }

    /// Initialisation used by [`train`] for this seed.
    pub fn from_seed(arch: ArchitectureSpec, config: TrainingConfig, seed: u64) -> Result<Self, ModelError> {
        Self::init(arch, config, seed, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn m(&self) -> usize {
        self.arch.m
    }

    pub fn mapping(&self) -> &ParamSet {
        &self.mapping
    }

    pub fn discriminator(&self) -> &ParamSet {
        &self.discriminator
    }

    pub fn clustering(&self) -> &ParamSet {
        &self.clustering
    }

    pub fn mapping_mut(&mut self) -> &mut ParamSet {
        &mut self.mapping
    }

    pub fn discriminator_mut(&mut self) -> &mut ParamSet {
        &mut self.discriminator
    }

    pub fn clustering_mut(&mut self) -> &mut ParamSet {
        &mut self.clustering
    }

    fn check_features(&self, rows: &Matrix) -> Result<(), ModelError> {
        if rows.cols() != self.arch.feature_dim {
            return Err(ModelError::ShapeMismatch(format!(
                "expected {} features, found {}",
                self.arch.feature_dim,
                rows.cols()
            )));
        }
        Ok(())
    }

    fn check_subtypes(&self, x: &Matrix, z: &Matrix) -> Result<(), ModelError> {
        self.check_features(x)?;
        if z.cols() != self.arch.m || z.rows() != x.rows() {
            return Err(ModelError::ShapeMismatch(format!(
                "subtype batch is {}x{}, expected {}x{}",
                z.rows(),
                z.cols(),
                x.rows(),
                self.arch.m
            )));
        }
        Ok(())
    }

    fn mapping_traced(&self, x: &Matrix, z: &Matrix) -> Result<(Matrix, MappingTrace), ModelError> {
        self.check_subtypes(x, z)?;
        let (enc, dec, chg) = self.arch.mapping_ranges();
        let layers = self.mapping.layers();
        let encoder = forward(&layers[enc], x)?;
        let decoder = forward(&layers[dec], z)?;
        let mut product = encoder.output().clone();
        product.as_mut_slice().iter_mut().zip(decoder.output().as_slice()).for_each(|(a, b)| *a *= b);
        let change = forward(&layers[chg], &product)?;
        let mut y = x.clone();
        y.as_mut_slice().iter_mut().zip(change.output().as_slice()).for_each(|(a, b)| *a += b);
        Ok((y, MappingTrace { encoder, decoder, change }))
    }

    /// Backpropagates d(loss)/d(y') into the mapping's gradient buffers.
    fn mapping_backward(&mut self, trace: &MappingTrace, grad_y: &Matrix) -> Result<(), ModelError> {
        let (enc, dec, chg) = self.arch.mapping_ranges();
        let (layers, grads) = self.mapping.split_mut();
        // y' = x + δ, x is data
        let grad_product = backward(&layers[chg.clone()], &trace.change, grad_y, Some(&mut grads[chg]))?;
        let mut grad_h = grad_product.clone();
        grad_h.as_mut_slice().iter_mut().zip(trace.decoder.output().as_slice()).for_each(|(g, s)| *g *= s);
        let mut grad_s = grad_product;
        grad_s.as_mut_slice().iter_mut().zip(trace.encoder.output().as_slice()).for_each(|(g, h)| *g *= h);
        backward(&layers[enc.clone()], &trace.encoder, &grad_h, Some(&mut grads[enc]))?;
        backward(&layers[dec.clone()], &trace.decoder, &grad_s, Some(&mut grads[dec]))?;
        Ok(())
    }

    /// Factor applied to the batch-mean L1 change: μ, divided by the
    /// feature count under [`ChangeReduction::Mean`].
    pub fn change_weight(&self) -> f64 {
        match self.config.change_reduction {
            ChangeReduction::Mean => self.config.mu / self.arch.feature_dim as f64,
            ChangeReduction::Sum => self.config.mu,
        }
    }

    /// Synthesized patients `y' = x + δ` and the changes `δ`, one row per sample.
    pub fn forward_f(&self, x: &Matrix, z: &Matrix) -> Result<(Matrix, Matrix), ModelError> {
        self.check_subtypes(x, z)?;
        let (enc, dec, chg) = self.arch.mapping_ranges();
        let layers = self.mapping.layers();
        let mut product = forward_output(&layers[enc], x)?;
        let s = forward_output(&layers[dec], z)?;
        product.as_mut_slice().iter_mut().zip(s.as_slice()).for_each(|(a, b)| *a *= b);
        let delta = forward_output(&layers[chg], &product)?;
        let mut y = x.clone();
        y.as_mut_slice().iter_mut().zip(delta.as_slice()).for_each(|(a, b)| *a += b);
        Ok((y, delta))
    }

    /// Real/synthesized probabilities `[p_fake, p_real]` per row.
    pub fn forward_d(&self, y: &Matrix) -> Result<Matrix, ModelError> {
        self.check_features(y)?;
        Ok(forward_output(self.discriminator.layers(), y)?)
    }

    /// Subtype probabilities per row.
    pub fn forward_g(&self, y: &Matrix) -> Result<Matrix, ModelError> {
        self.check_features(y)?;
        Ok(forward_output(self.clustering.layers(), y)?)
    }

    /// Pattern probabilities of each row under this model.
    pub fn assign(&self, rows: &Matrix) -> Result<Matrix, ModelError> {
        self.forward_g(rows)
    }

    fn finish_step(ps: &mut ParamSet, max_norm: f64, opt: &crate::diffnet::OptimizerConfig) {
        ps.clip_gradients(max_norm);
        ps.adam_step(opt);
    }

    /// Fills D's gradient buffers with the gradient of
    /// `mean l_c(D(y), e_real) + mean l_c(D(f(x,z)), e_fake)` and returns that loss.
    pub fn discriminator_gradients(&mut self, x: &Matrix, y: &Matrix, z: &Matrix) -> Result<f64, ModelError> {
        self.check_features(y)?;
        let (fake, _) = self.forward_f(x, z)?;
        let layers = self.discriminator.layers();
        let real_trace = forward(layers, y)?;
        let fake_trace = forward(layers, &fake)?;
        let (real_loss, real_grad) = cross_entropy_batch(&class_targets(y.rows(), REAL), real_trace.output())?;
        let (fake_loss, fake_grad) = cross_entropy_batch(&class_targets(fake.rows(), FAKE), fake_trace.output())?;
        self.discriminator.zero_grad();
        let (layers, grads) = self.discriminator.split_mut();
        backward(layers, &real_trace, &real_grad, Some(&mut *grads))?;
        backward(layers, &fake_trace, &fake_grad, Some(grads))?;
        Ok(real_loss + fake_loss)
    }

    /// Fills f's gradient buffers with the gradient of
    /// `mean l_c(D(y'), e_real) + λ mean l_c(g(y'), z) + w mean ‖y' − x‖₁`
    /// (`w` from [`Self::change_weight`]) and returns that loss.
    pub fn mapping_gradients(&mut self, x: &Matrix, z: &Matrix) -> Result<f64, ModelError> {
        let (y, trace) = self.mapping_traced(x, z)?;
        let d_trace = forward(self.discriminator.layers(), &y)?;
        let g_trace = forward(self.clustering.layers(), &y)?;
        let (adv, adv_grad) = cross_entropy_batch(&class_targets(y.rows(), REAL), d_trace.output())?;
        let (cluster, cluster_grad) = cross_entropy_batch(z, g_trace.output())?;
        let (change, change_grad) = l1_change_batch(&y, x)?;
        let (lambda, mu) = (self.config.lambda, self.change_weight());

        let mut grad_y = backward(self.discriminator.layers(), &d_trace, &adv_grad, None)?;
        let via_g = backward(self.clustering.layers(), &g_trace, &cluster_grad, None)?;
        for ((gy, gg), gc) in grad_y.as_mut_slice().iter_mut().zip(via_g.as_slice()).zip(change_grad.as_slice()) {
            *gy += lambda * gg + mu * gc;
        }
        self.mapping.zero_grad();
        self.mapping_backward(&trace, &grad_y)?;
        Ok(adv + lambda * cluster + mu * change)
    }

    /// Fills g's gradient buffers with the gradient of `mean l_c(g(f(x, z)), z)`
    /// and returns that loss.
    pub fn clustering_gradients(&mut self, x: &Matrix, z: &Matrix) -> Result<f64, ModelError> {
        let (y, _) = self.forward_f(x, z)?;
        let trace = forward(self.clustering.layers(), &y)?;
        let (loss, grad) = cross_entropy_batch(z, trace.output())?;
        self.clustering.zero_grad();
        let (layers, grads) = self.clustering.split_mut();
        backward(layers, &trace, &grad, Some(grads))?;
        Ok(loss)
    }

    /// Discriminator loss evaluated without touching any buffers.
    pub fn discriminator_loss(&self, x: &Matrix, y: &Matrix, z: &Matrix) -> Result<f64, ModelError> {
        let (fake, _) = self.forward_f(x, z)?;
        let (real, _) = cross_entropy_batch(&class_targets(y.rows(), REAL), &self.forward_d(y)?)?;
        let (synth, _) = cross_entropy_batch(&class_targets(fake.rows(), FAKE), &self.forward_d(&fake)?)?;
        Ok(real + synth)
    }

    /// Mapping loss evaluated without touching any buffers.
    pub fn mapping_loss(&self, x: &Matrix, z: &Matrix) -> Result<f64, ModelError> {
        let (y, _) = self.forward_f(x, z)?;
        let (adv, _) = cross_entropy_batch(&class_targets(y.rows(), REAL), &self.forward_d(&y)?)?;
        let (cluster, _) = cross_entropy_batch(z, &self.forward_g(&y)?)?;
        let (change, _) = l1_change_batch(&y, x)?;
        Ok(adv + self.config.lambda * cluster + self.change_weight() * change)
    }

    /// Clustering loss evaluated without touching any buffers.
    pub fn clustering_loss(&self, x: &Matrix, z: &Matrix) -> Result<f64, ModelError> {
        let (y, _) = self.forward_f(x, z)?;
        Ok(cross_entropy_batch(z, &self.forward_g(&y)?)?.0)
    }

    /// Gradient-clipped ADAM step on D; returns the loss before the step.
    pub fn update_discriminator(&mut self, x: &Matrix, y: &Matrix, z: &Matrix) -> Result<f64, ModelError> {
        let loss = self.discriminator_gradients(x, y, z)?;
        let opt = self.config.discriminator_optimizer();
        Self::finish_step(&mut self.discriminator, self.config.grad_clip, &opt);
        Ok(loss)
    }

    /// Gradient-clipped ADAM step on f; returns the loss before the step.
    pub fn update_mapping(&mut self, x: &Matrix, z: &Matrix) -> Result<f64, ModelError> {
        let loss = self.mapping_gradients(x, z)?;
        let opt = self.config.mapping_optimizer();
        Self::finish_step(&mut self.mapping, self.config.grad_clip, &opt);
        Ok(loss)
    }

    /// Gradient-clipped ADAM step on g; returns the loss before the step.
    pub fn update_clustering(&mut self, x: &Matrix, z: &Matrix) -> Result<f64, ModelError> {
        let loss = self.clustering_gradients(x, z)?;
        let opt = self.config.clustering_optimizer();
        Self::finish_step(&mut self.clustering, self.config.grad_clip, &opt);
        Ok(loss)
    }

    /// Clamps the mapping and clustering parameters into `[-c, c]`.
    pub fn clip_box(&mut self) {
        let c = self.config.clip_c;
        self.mapping.clip_weights(c);
        self.clustering.clip_weights(c);
    }

    /// One full iteration: D, f and g updates followed by the weight box.
    pub fn train_step(&mut self, x: &Matrix, y: &Matrix, z: &Matrix) -> Result<StepLosses, ModelError> {
        let discriminator = self.update_discriminator(x, y, z)?;
        let mapping = self.update_mapping(x, z)?;
        let clustering = self.update_clustering(x, z)?;
        self.clip_box();
        Ok(StepLosses { discriminator, mapping, clustering })
    }
}

/// Cycles through a shuffled index set, reshuffling whenever it runs out.
struct BatchCursor {
    order: Vec<usize>,
    pos: usize,
}

impl BatchCursor {
    fn new<R: Rng>(n: usize, rng: &mut R) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        Self { order, pos: 0 }
    }

    fn next<R: Rng>(&mut self, size: usize, rng: &mut R) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.pos == self.order.len() {
                self.order.shuffle(rng);
                self.pos = 0;
            }
            let take = (size - out.len()).min(self.order.len() - self.pos);
            out.extend_from_slice(&self.order[self.pos..self.pos + take]);
            self.pos += take;
        }
        out
    }
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: SmileGanModel,
    pub monitor: Vec<MonitorRecord>,
}

/// Trains a model from the seed's initialisation until the stopping rule
/// fires or `max_epoch` is reached.
pub fn train(cn: &Matrix, pt: &Matrix, config: &TrainingConfig, seed: u64) -> Result<TrainOutcome, ModelError> {
    train_with_observer(cn, pt, config, seed, &mut ())
}

pub fn train_with_observer(
    cn: &Matrix,
    pt: &Matrix,
    config: &TrainingConfig,
    seed: u64,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome, ModelError> {
    if cn.rows() == 0 || pt.rows() == 0 {
        return Err(ModelError::EmptyDataset);
    }
    if cn.cols() != pt.cols() {
        return Err(ModelError::ShapeMismatch(format!(
            "CN has {} features but PT has {}",
            cn.cols(),
            pt.cols()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arch = ArchitectureSpec::new(cn.cols(), config.m);
    let mut model = SmileGanModel::init(arch, config.clone(), seed, &mut rng)?;

    let batch = config.batch_size.min(cn.rows()).min(pt.rows());
    let iterations = cn.rows().max(pt.rows()).div_ceil(batch);
    let mut cn_cursor = BatchCursor::new(cn.rows(), &mut rng);
    let mut pt_cursor = BatchCursor::new(pt.rows(), &mut rng);
    let mut history = LabelHistory::default();
    let mut records: Vec<MonitorRecord> = Vec::new();

    while model.epoch < config.max_epoch {
        let snapshot = model.clone();
        for iteration in 0..iterations {
            let x = cn.select_rows(&cn_cursor.next(batch, &mut rng));
            let y = pt.select_rows(&pt_cursor.next(batch, &mut rng));
            let z = sample_subtype_batch(config.m, batch, &mut rng);
            let losses = model.train_step(&x, &y, &z)?;
            let bad = [
                ("discriminator", losses.discriminator),
                ("mapping", losses.mapping),
                ("clustering", losses.clustering),
            ]
            .into_iter()
            .find(|(_, v)| !v.is_finite());
            if let Some((loss, _)) = bad {
                return Err(ModelError::NonFiniteLoss {
                    loss,
                    epoch: snapshot.epoch + 1,
                    iteration,
                    last_finite: Box::new(snapshot),
                    monitor: records,
                });
            }
            observer.on_iteration(&model, &losses);
        }
        model.epoch += 1;

        let (mut record, labels) = epoch_monitor(&model, cn, pt, &history, &mut rng)?;
        history.push(labels);
        records.push(record.clone());
        record.stop = should_stop(&records, &config.stop, pt.rows());
        *records.last_mut().expect("just pushed") = record.clone();
        observer.on_epoch(&model, &record);
        if record.stop {
            break;
        }
    }
    Ok(TrainOutcome { model, monitor: records })
}
