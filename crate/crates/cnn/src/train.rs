use std::path::Path;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use satneuro_core::checkpoint::{Checkpoint, Tensor};
use satneuro_core::util::F32Hasher;

use crate::model::{Cnn, LayerParams, Loss};
use crate::spec::CnnSpec;
use crate::{Error, Result};

const EVAL_BATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgdHyper {
    pub learning_rate: f64,
    pub momentum: f64,
    pub nesterov: bool,
    pub epochs: usize,
    pub batch_size: usize,
    /// Epochs without a validation-loss improvement before stopping.
    pub patience: usize,
    /// On return, roll back to the epoch with the lowest validation loss.
    pub restore_best: bool,
    pub loss: Loss,
    pub seed: u64,
    pub parallel: bool,
}

impl Default for SgdHyper {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            nesterov: true,
            epochs: 25,
            batch_size: 128,
            patience: 5,
            restore_best: true,
            loss: Loss::CrossEntropy,
            seed: 0,
            parallel: false,
        }
    }
}

impl SgdHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "need learning rate > 0 and momentum in [0, 1), got {} and {}",
                self.learning_rate, self.momentum
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Row-per-example inputs (flattened `height x width` grids) and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnDataset {
    pub inputs: Array2<f32>,
    pub labels: Vec<usize>,
}

impl CnnDataset {
    pub fn new(inputs: Array2<f32>, labels: Vec<usize>) -> Result<Self> {
        if inputs.nrows() != labels.len() {
            return Err(Error::Shape { expected: inputs.nrows(), got: labels.len() });
        }
        Ok(Self { inputs, labels })
    }

    pub fn from_rows(rows: &[Vec<f32>], labels: Vec<usize>) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        let mut inputs = Array2::<f32>::zeros((rows.len(), n));
        for (mut dst, src) in inputs.rows_mut().into_iter().zip(rows) {
            if src.len() != n {
                return Err(Error::Shape { expected: n, got: src.len() });
            }
            dst.as_slice_mut().expect("contiguous").copy_from_slice(src);
        }
        Self::new(inputs, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn rows(&self, idx: &[usize]) -> (Array2<f32>, Vec<usize>) {
        (self.inputs.select(ndarray::Axis(0), idx), idx.iter().map(|&i| self.labels[i]).collect())
    }
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
    pub stopped_early: bool,
    /// Epoch whose weights were kept when `restore_best` is set.
    pub best_epoch: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
    pub predictions: Vec<usize>,
    pub probabilities: Array2<f32>,
    /// Wall-clock inference time per example.
    pub latency_s: f64,
}

pub fn evaluate(net: &Cnn<f32>, data: &CnnDataset, loss: Loss) -> Result<Evaluation> {
    let z = net.classes();
    let mut probabilities = Array2::<f32>::zeros((data.len(), z));
    let mut total = 0.0;
    let start = Instant::now();
    let all: Vec<usize> = (0..data.len()).collect();
    for (c, idx) in all.chunks(EVAL_BATCH).enumerate() {
        let (x, labels) = data.rows(idx);
        let p = net.forward(&x)?;
        for (b, &l) in labels.iter().enumerate() {
            total += match loss {
                Loss::CrossEntropy => -f64::from(p[[b, l]]).max(f64::MIN_POSITIVE).ln(),
                Loss::Mse => {
                    (0..z).map(|k| (f64::from(p[[b, k]]) - f64::from(u8::from(k == l))).powi(2)).sum::<f64>()
                        / z as f64
                }
            };
        }
        probabilities.slice_mut(ndarray::s![c * EVAL_BATCH..c * EVAL_BATCH + idx.len(), ..]).assign(&p);
    }
    let latency_s = start.elapsed().as_secs_f64() / data.len().max(1) as f64;
    let predictions: Vec<usize> = probabilities
        .rows()
        .into_iter()
        .map(|r| {
            let mut best = 0;
            for k in 1..z {
                if r[k] > r[best] {
                    best = k;
                }
            }
            best
        })
        .collect();
    let correct = predictions.iter().zip(&data.labels).filter(|(p, l)| p == l).count();
    let n = data.len().max(1) as f64;
    Ok(Evaluation { accuracy: correct as f64 / n, loss: total / n, predictions, probabilities, latency_s })
}

fn zeros_like(params: &[LayerParams<f32>]) -> Vec<LayerParams<f32>> {
    params
        .iter()
        .map(|p| match p {
            LayerParams::Conv { w, b } => LayerParams::Conv { w: vec![0.0; w.len()], b: vec![0.0; b.len()] },
            LayerParams::Dense { w, b } => {
                LayerParams::Dense { w: Array2::zeros(w.raw_dim()), b: Array1::zeros(b.len()) }
            }
            LayerParams::None => LayerParams::None,
        })
        .collect()
}

fn for_each_pair(
    params: &mut [LayerParams<f32>],
    velocity: &mut [LayerParams<f32>],
    grads: &[LayerParams<f32>],
    mut f: impl FnMut(&mut f32, &mut f32, f32),
) {
    for ((p, v), g) in params.iter_mut().zip(velocity).zip(grads) {
        match (p, v, g) {
            (LayerParams::Conv { w, b }, LayerParams::Conv { w: vw, b: vb }, LayerParams::Conv { w: gw, b: gb }) => {
                w.iter_mut().zip(vw.iter_mut()).zip(gw).for_each(|((p, v), &g)| f(p, v, g));
                b.iter_mut().zip(vb.iter_mut()).zip(gb).for_each(|((p, v), &g)| f(p, v, g));
            }
            (
                LayerParams::Dense { w, b },
                LayerParams::Dense { w: vw, b: vb },
                LayerParams::Dense { w: gw, b: gb },
            ) => {
                ndarray::Zip::from(w).and(vw).and(gw).for_each(|p, v, &g| f(p, v, g));
                ndarray::Zip::from(b).and(vb).and(gb).for_each(|p, v, &g| f(p, v, g));
            }
            _ => {}
        }
    }
}

/// Minibatch SGD with (Nesterov) momentum, reshuffled every epoch from
/// `(seed, epoch)`. Stops once validation loss has not improved for
/// `patience` epochs. With `restore_best` the weights of the lowest
/// validation loss are returned, otherwise the last ones.
pub fn cnn_train(
    net: &mut Cnn<f32>,
    train: &CnnDataset,
    val: &CnnDataset,
    hyper: &SgdHyper,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<History> {
    hyper.validate()?;
    if train.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    let mut velocity = zeros_like(net.params());
    let (lr, mu) = (hyper.learning_rate as f32, hyper.momentum as f32);
    let mut history = History::default();
    let mut best = f64::INFINITY;
    let mut best_params: Option<Vec<LayerParams<f32>>> = None;
    let mut stale = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..hyper.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
        rng.set_stream(epoch as u64 + 1);
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, idx) in order.chunks(hyper.batch_size).enumerate() {
            let (x, labels) = train.rows(idx);
            let (loss, grads) = net.loss_and_grad(&x, &labels, hyper.loss, hyper.parallel)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, batch: b, loss });
            }
            let nesterov = hyper.nesterov;
            for_each_pair(net.params_mut(), &mut velocity, &grads, |p, v, g| {
                *v = mu * *v - lr * g;
                *p += if nesterov { mu * *v - lr * g } else { *v };
            });
            total += loss * idx.len() as f64;
        }
        let eval = if val.is_empty() {
            None
        } else {
            Some(evaluate(net, val, hyper.loss)?)
        };
        let rec = EpochRecord {
            epoch,
            train_loss: total / train.len() as f64,
            val_loss: eval.as_ref().map_or(f64::NAN, |e| e.loss),
            val_accuracy: eval.as_ref().map_or(f64::NAN, |e| e.accuracy),
        };
        on_epoch(&rec);
        let val_loss = rec.val_loss;
        history.epochs.push(rec);
        if val_loss < best {
            best = val_loss;
            stale = 0;
            if hyper.restore_best {
                best_params = Some(net.params().to_vec());
                history.best_epoch = Some(epoch);
            }
        } else if eval.is_some() {
            stale += 1;
            if stale >= hyper.patience {
                history.stopped_early = epoch + 1 < hyper.epochs;
                break;
            }
        }
    }
    if let Some(p) = best_params {
        net.params_mut().clone_from_slice(&p);
    }
    Ok(history)
}

pub fn weight_hash(net: &Cnn<f32>) -> String {
    let mut h = F32Hasher::new();
    for p in net.params() {
        match p {
            LayerParams::Conv { w, b } => {
                h.update(w);
                h.update(b);
            }
            LayerParams::Dense { w, b } => {
                h.update(w.as_standard_layout().as_slice().expect("standard layout"));
                h.update(b.as_slice().expect("contiguous"));
            }
            LayerParams::None => {}
        }
    }
    h.finish()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CnnMeta {
    spec: CnnSpec,
    height: usize,
    width: usize,
    #[serde(default)]
    extra: serde_json::Value,
}

pub fn to_checkpoint(net: &Cnn<f32>, extra: serde_json::Value) -> Result<Checkpoint> {
    let (height, width) = net.input_shape();
    let meta = CnnMeta { spec: net.spec().clone(), height, width, extra };
    let mut tensors = Vec::new();
    for (l, p) in net.params().iter().enumerate() {
        match p {
            LayerParams::Conv { w, b } => {
                tensors.push(Tensor::new(format!("l{l}.w"), vec![w.len()], w.clone())?);
                tensors.push(Tensor::new(format!("l{l}.b"), vec![b.len()], b.clone())?);
            }
            LayerParams::Dense { w, b } => {
                let data = w.as_standard_layout().iter().copied().collect();
                tensors.push(Tensor::new(format!("l{l}.w"), vec![w.nrows(), w.ncols()], data)?);
                tensors.push(Tensor::new(format!("l{l}.b"), vec![b.len()], b.to_vec())?);
            }
            LayerParams::None => {}
        }
    }
    Ok(Checkpoint { kind: "cnn".into(), meta: serde_json::to_value(meta).map_err(satneuro_core::Error::from)?, tensors })
}

pub fn from_checkpoint(ck: &Checkpoint) -> Result<(Cnn<f32>, serde_json::Value)> {
    if ck.kind != "cnn" {
        return Err(Error::Config(format!("checkpoint holds a '{}' model, not a cnn", ck.kind)));
    }
    let meta: CnnMeta = serde_json::from_value(ck.meta.clone()).map_err(satneuro_core::Error::from)?;
    let template = Cnn::<f32>::new(meta.spec.clone(), meta.height, meta.width, 0)?;
    let mut tensors = ck.tensors.iter();
    let mut next = |want: usize| -> Result<&Tensor> {
        let t = tensors.next().ok_or_else(|| Error::Spec("checkpoint is missing tensors".into()))?;
        if t.data.len() != want {
            return Err(Error::Shape { expected: want, got: t.data.len() });
        }
        Ok(t)
    };
    let mut params = Vec::new();
    for p in template.params() {
        params.push(match p {
            LayerParams::Conv { w, b } => {
                LayerParams::Conv { w: next(w.len())?.data.clone(), b: next(b.len())?.data.clone() }
            }
            LayerParams::Dense { w, b } => {
                let wd = next(w.len())?.data.clone();
                let bd = next(b.len())?.data.clone();
                LayerParams::Dense {
                    w: Array2::from_shape_vec(w.raw_dim(), wd).expect("sized"),
                    b: Array1::from_vec(bd),
                }
            }
            LayerParams::None => LayerParams::None,
        });
    }
    Ok((Cnn::from_params(meta.spec, meta.height, meta.width, params)?, meta.extra))
}

pub fn save(net: &Cnn<f32>, path: &Path, extra: serde_json::Value) -> Result<()> {
    Ok(to_checkpoint(net, extra)?.save(path)?)
}

pub fn load(path: &Path) -> Result<(Cnn<f32>, serde_json::Value)> {
    from_checkpoint(&Checkpoint::load(path)?)
}
