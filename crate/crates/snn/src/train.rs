use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use satneuro_core::encoding::SpikeRaster;

use crate::engine::{loss_and_grad, Dynamics, Mode};
use crate::network::{predict_counts, stack_rasters, LayeredSnn};
use crate::neuron::NeuronParams;
use crate::{Error, Result};

/// Examples per gradient job; fixed so the reduction order never depends on
/// the thread count.
const GRAD_CHUNK: usize = 8;
const EVAL_BATCH: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainHyper {
    /// Target rate of the labelled output neuron.
    pub rho: f64,
    /// Target rate of every other output neuron.
    pub rho_false: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub schedule: LrSchedule,
    /// Compute gradient chunks on the rayon pool; results are identical
    /// either way.
    pub parallel: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// Half-cosine from the base rate towards zero, stepped per epoch.
    #[default]
    Cosine,
}

impl LrSchedule {
    pub fn factor(&self, epoch: usize, epochs: usize) -> f64 {
        match self {
            LrSchedule::Constant => 1.0,
            LrSchedule::Cosine => 0.5 * (1.0 + (std::f64::consts::PI * epoch as f64 / epochs as f64).cos()),
        }
    }
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            rho: 0.5,
            rho_false: 0.01,
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            schedule: LrSchedule::Cosine,
            parallel: false,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::Config(format!("rho must lie in (0, 1], got {}", self.rho)));
        }
        if !(self.rho_false >= 0.0 && self.rho_false < self.rho) {
            return Err(Error::Config(format!("rho_false must lie in [0, rho), got {}", self.rho_false)));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("epochs and batch size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("invalid optimizer coefficients".into()));
        }
        Ok(())
    }
}

/// Pre-encoded rasters with labels; all rasters share one shape.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSet {
    rasters: Vec<SpikeRaster>,
    labels: Vec<usize>,
}

impl EncodedSet {
    pub fn new(rasters: Vec<SpikeRaster>, labels: Vec<usize>) -> Result<Self> {
        if rasters.len() != labels.len() {
            return Err(Error::Shape { expected: rasters.len(), got: labels.len() });
        }
        if let Some(first) = rasters.first() {
            let (n, t) = (first.neurons(), first.steps());
            if let Some(r) = rasters.iter().find(|r| r.neurons() != n || r.steps() != t) {
                return Err(Error::Shape { expected: n * t, got: r.neurons() * r.steps() });
            }
        }
        Ok(Self { rasters, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn rasters(&self) -> &[SpikeRaster] {
        &self.rasters
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

pub fn spike_rate_loss(out: &SpikeRaster, label: usize, rho: f64, rho_false: f64) -> f64 {
    let steps = out.steps() as f64;
    out.row_counts()
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            let target = if k == label { rho } else { rho_false };
            let err = c as f64 / steps - target;
            0.5 * err * err
        })
        .sum()
}

/// Mean loss over the batch and its gradient for every weight matrix.
pub fn loss_and_gradients(
    weights: &[Array2<f64>],
    neurons: &[NeuronParams],
    rasters: &[&SpikeRaster],
    labels: &[usize],
    rho: f64,
    rho_false: f64,
    mode: Mode,
) -> Result<(f64, Vec<Array2<f64>>)> {
    if rasters.is_empty() || rasters.len() != labels.len() || neurons.len() != weights.len() {
        return Err(Error::Config("inconsistent gradient request".into()));
    }
    let x0 = stack_rasters(rasters, weights[0].ncols())?.mapv(f64::from);
    let dynamics: Vec<Dynamics<f64>> = neurons.iter().map(|p| Dynamics::new(p, mode)).collect();
    Ok(loss_and_grad(weights, &dynamics, x0, labels, rho, rho_false, 1.0 / labels.len() as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
    pub predictions: Vec<usize>,
    /// Output spike counts per example.
    pub counts: Vec<Vec<u32>>,
    /// Spike totals per layer (input first) per example.
    pub layer_spikes: Vec<Vec<u64>>,
    pub synops: Vec<u64>,
    /// Wall-clock inference time per example.
    pub latency_s: f64,
}

impl Evaluation {
    pub fn mean_synops(&self) -> f64 {
        self.synops.iter().sum::<u64>() as f64 / self.synops.len().max(1) as f64
    }

    /// Mean spike total of layer `l` per example.
    pub fn mean_layer_spikes(&self, l: usize) -> f64 {
        self.layer_spikes.iter().map(|s| s[l]).sum::<u64>() as f64 / self.layer_spikes.len().max(1) as f64
    }
}

pub fn evaluate(net: &LayeredSnn, set: &EncodedSet, hyper: &TrainHyper) -> Result<Evaluation> {
    let mut predictions = Vec::with_capacity(set.len());
    let mut counts = Vec::with_capacity(set.len());
    let mut layer_spikes = Vec::with_capacity(set.len());
    let mut synops = Vec::with_capacity(set.len());
    let mut loss = 0.0;
    let start = std::time::Instant::now();
    for (chunk, labels) in set.rasters.chunks(EVAL_BATCH).zip(set.labels.chunks(EVAL_BATCH)) {
        let refs: Vec<&SpikeRaster> = chunk.iter().collect();
        for ((out, stats), &label) in net.forward_batch(&refs)?.into_iter().zip(labels) {
            layer_spikes.push(stats.layer_totals());
            synops.push(stats.synops);
            loss += spike_rate_loss(&out, label, hyper.rho, hyper.rho_false);
            let c: Vec<u32> = out.row_counts().into_iter().map(|c| c as u32).collect();
            predictions.push(predict_counts(&c));
            counts.push(c);
        }
    }
    let correct = predictions.iter().zip(&set.labels).filter(|(p, l)| p == l).count();
    let n = set.len().max(1) as f64;
    Ok(Evaluation {
        accuracy: correct as f64 / n,
        loss: loss / n,
        predictions,
        counts,
        layer_spikes,
        synops,
        latency_s: start.elapsed().as_secs_f64() / n,
    })
}

struct Adam {
    m: Vec<Array2<f32>>,
    v: Vec<Array2<f32>>,
    step: i32,
}

impl Adam {
    fn new(weights: &[Array2<f32>]) -> Self {
        let zeros = || weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect();
        Self { m: zeros(), v: zeros(), step: 0 }
    }

    fn update(&mut self, weights: &mut [Array2<f32>], grads: &[Array2<f32>], h: &TrainHyper, lr: f64) {
        self.step += 1;
        let (b1, b2) = (h.beta1 as f32, h.beta2 as f32);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        let (lr, eps) = (lr as f32, h.epsilon as f32);
        for (((w, g), m), v) in weights.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            ndarray::Zip::from(w).and(g).and(m).and(v).for_each(|w, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            });
        }
    }
}

/// Batch gradient as an ordered sum of fixed-size chunk gradients.
fn batch_gradient(
    net: &LayeredSnn,
    dynamics: &[Dynamics<f32>],
    set: &EncodedSet,
    idx: &[usize],
    h: &TrainHyper,
) -> Result<(f64, Vec<Array2<f32>>)> {
    let scale = 1.0 / idx.len() as f64;
    let job = |chunk: &[usize]| -> Result<(f64, Vec<Array2<f32>>)> {
        let rasters: Vec<&SpikeRaster> = chunk.iter().map(|&i| &set.rasters[i]).collect();
        let labels: Vec<usize> = chunk.iter().map(|&i| set.labels[i]).collect();
        let x0 = stack_rasters(&rasters, net.num_inputs())?;
        Ok(loss_and_grad(net.weights(), dynamics, x0, &labels, h.rho, h.rho_false, scale))
    };
    let parts: Vec<Result<(f64, Vec<Array2<f32>>)>> = if h.parallel {
        idx.par_chunks(GRAD_CHUNK).map(job).collect()
    } else {
        idx.chunks(GRAD_CHUNK).map(job).collect()
    };
    let mut parts = parts.into_iter();
    let (mut loss, mut grads) = parts.next().expect("nonempty batch")?;
    for p in parts {
        let (l, g) = p?;
        loss += l;
        for (acc, g) in grads.iter_mut().zip(g) {
            *acc += &g;
        }
    }
    Ok((loss, grads))
}

/// Adam on the squared rate loss; the train set is reshuffled every epoch
/// from `(seed, epoch)`. `on_epoch` sees each record as it is produced.
pub fn train(
    net: &mut LayeredSnn,
    train_set: &EncodedSet,
    val_set: &EncodedSet,
    hyper: &TrainHyper,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<History> {
    hyper.validate()?;
    if train_set.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    if let Some(&bad) = train_set.labels.iter().chain(&val_set.labels).find(|&&l| l >= net.num_classes()) {
        return Err(Error::Config(format!("label {bad} >= {} classes", net.num_classes())));
    }
    let dynamics = net.dynamics::<f32>(Mode::Spiking);
    let mut adam = Adam::new(net.weights());
    let mut history = History::default();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..hyper.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
        rng.set_stream(epoch as u64 + 1);
        order.sort_unstable();
        order.shuffle(&mut rng);
        let lr = hyper.learning_rate * hyper.schedule.factor(epoch, hyper.epochs);
        let mut total = 0.0;
        for (b, idx) in order.chunks(hyper.batch_size).enumerate() {
            let (loss, grads) = batch_gradient(net, &dynamics, train_set, idx, hyper)?;
            if !loss.is_finite() || grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
                return Err(Error::Diverged { epoch, batch: b, loss });
            }
            adam.update(net.weights_mut(), &grads, hyper, lr);
            total += loss * idx.len() as f64;
        }
        let (val_loss, val_accuracy) = if val_set.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            let e = evaluate(net, val_set, hyper)?;
            (e.loss, e.accuracy)
        };
        let rec = EpochRecord {
            epoch,
            train_loss: total / train_set.len() as f64,
            val_loss,
            val_accuracy,
        };
        on_epoch(&rec);
        history.epochs.push(rec);
    }
    Ok(history)
}
