use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use satneuro_cnn::{Cnn, CnnDataset, CnnSpec};
use satneuro_core::encoding::{preprocess, PreprocessParams};
use satneuro_core::oracle::LabeledDataset;
use satneuro_core::util::{sample_seed, sha256_hex};
use satneuro_snn::{EncodedSet, LayeredSnn};

use crate::config::{CnnConfig, SnnConfig};
use crate::metrics::{capacity_gap, classification_report, MetricsReport};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
}

impl Split {
    pub fn indices<'a>(&self, ds: &'a LabeledDataset) -> &'a [usize] {
        match self {
            Split::Train => &ds.train,
            Split::Validation => &ds.validation,
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "val" => Ok(Split::Validation),
            _ => Err(Error::Invalid(format!("unknown split '{s}' (train or validation)"))),
        }
    }
}

/// Preprocessed features per parameter set, indexed by sample id. Grids are
/// regenerated from their seeds; one pass serves every requested set.
#[derive(Debug, Default)]
pub struct FeatureCache {
    sets: BTreeMap<(u64, usize), Arc<Vec<Vec<f32>>>>,
}

fn cache_key(p: &PreprocessParams) -> (u64, usize) {
    (p.percentile.to_bits(), p.ds)
}

impl FeatureCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Computes every missing parameter set in a single pass over the grids.
    pub fn fill(&mut self, ds: &LabeledDataset, params: &[PreprocessParams]) -> Result<()> {
        let mut missing: Vec<PreprocessParams> = Vec::new();
        for p in params {
            p.validate()?;
            if !self.sets.contains_key(&cache_key(p)) && !missing.iter().any(|m| cache_key(m) == cache_key(p)) {
                missing.push(*p);
            }
        }
        if missing.is_empty() {
            return Ok(());
        }
        let generator = ds.generator()?;
        let per_sample: Vec<Vec<Vec<f32>>> = (0..ds.samples.len())
            .into_par_iter()
            .map(|i| -> Result<Vec<Vec<f32>>> {
                let grid = ds.grid(&generator, i)?;
                Ok(missing.iter().map(|p| preprocess(&grid, p)).collect::<satneuro_core::Result<_>>()?)
            })
            .collect::<Result<_>>()?;
        let mut sets: Vec<Vec<Vec<f32>>> = missing.iter().map(|_| Vec::with_capacity(per_sample.len())).collect();
        for sample in per_sample {
            for (set, x) in sets.iter_mut().zip(sample) {
                set.push(x);
            }
        }
        for (p, set) in missing.iter().zip(sets) {
            self.sets.insert(cache_key(p), Arc::new(set));
        }
        Ok(())
    }

    pub fn get(&mut self, ds: &LabeledDataset, params: &PreprocessParams) -> Result<Arc<Vec<Vec<f32>>>> {
        self.fill(ds, std::slice::from_ref(params))?;
        Ok(Arc::clone(&self.sets[&cache_key(params)]))
    }
}

pub fn input_shape(ds: &LabeledDataset, params: &PreprocessParams) -> (usize, usize) {
    let g = &ds.spec.model.grid;
    params.pooled_shape(g.rows, g.cols)
}

pub fn encode_set(features: &[Vec<f32>], labels: &[usize], idx: &[usize], cfg: &SnnConfig) -> Result<EncodedSet> {
    let rasters = idx
        .par_iter()
        .map(|&i| cfg.encoder.encode(&features[i], cfg.steps, sample_seed(cfg.encode_seed, i as u64)))
        .collect::<satneuro_core::Result<Vec<_>>>()?;
    Ok(EncodedSet::new(rasters, idx.iter().map(|&i| labels[i]).collect())?)
}

/// Predictions and scores of one model on one split, the input of reports
/// and comparisons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEvaluation {
    pub kind: String,
    pub split: Split,
    pub feature_hash: String,
    pub sample_ids: Vec<usize>,
    pub labels: Vec<usize>,
    /// Output spike counts / T (SNN) or softmax probabilities (CNN).
    pub scores: Vec<Vec<f64>>,
    pub predictions: Vec<usize>,
    pub accuracy: f64,
    pub latency_s: f64,
    /// Synops (SNN) or MACs (CNN) per example.
    pub ops_per_example: f64,
    /// Mean spikes per example by layer, input first (SNN only).
    #[serde(default)]
    pub mean_layer_spikes: Vec<f64>,
}

impl ModelEvaluation {
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        Ok(std::fs::write(path, serde_json::to_string(self)?)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Metrics report including the capacity gap of the predicted classes.
    pub fn report(&self, ds: &LabeledDataset) -> Result<MetricsReport> {
        if self.feature_hash != ds.feature_hash {
            return Err(Error::Invalid("evaluation was produced on a different dataset".into()));
        }
        let mut r = classification_report(&self.labels, &self.scores, ds.num_classes())?;
        let demands: Vec<_> = self.sample_ids.iter().map(|&i| ds.samples[i].demand.clone()).collect();
        let configs: Vec<_> = self.predictions.iter().map(|&p| ds.catalog.class(p)).collect();
        r.capacity_gap_bps = Some(capacity_gap(&demands, &configs)?);
        r.latency_s = Some(self.latency_s);
        r.ops_per_example = Some(self.ops_per_example);
        Ok(r)
    }
}

pub fn evaluate_snn(
    net: &LayeredSnn,
    ds: &LabeledDataset,
    features: &[Vec<f32>],
    cfg: &SnnConfig,
    split: Split,
) -> Result<ModelEvaluation> {
    let idx = split.indices(ds);
    let set = encode_set(features, &ds.labels(), idx, cfg)?;
    let e = satneuro_snn::evaluate(net, &set, &cfg.train)?;
    let steps = cfg.steps as f64;
    let layers = net.sizes().len();
    Ok(ModelEvaluation {
        kind: "snn".into(),
        split,
        feature_hash: ds.feature_hash.clone(),
        sample_ids: idx.to_vec(),
        labels: set.labels().to_vec(),
        scores: e.counts.iter().map(|c| c.iter().map(|&v| f64::from(v) / steps).collect()).collect(),
        predictions: e.predictions.clone(),
        accuracy: e.accuracy,
        latency_s: e.latency_s,
        ops_per_example: e.mean_synops(),
        mean_layer_spikes: (0..layers).map(|l| e.mean_layer_spikes(l)).collect(),
    })
}

pub fn cnn_dataset(features: &[Vec<f32>], labels: &[usize], idx: &[usize]) -> Result<CnnDataset> {
    let rows: Vec<Vec<f32>> = idx.iter().map(|&i| features[i].clone()).collect();
    Ok(CnnDataset::from_rows(&rows, idx.iter().map(|&i| labels[i]).collect())?)
}

pub fn evaluate_cnn(
    net: &Cnn<f32>,
    ds: &LabeledDataset,
    features: &[Vec<f32>],
    cfg: &CnnConfig,
    split: Split,
) -> Result<ModelEvaluation> {
    let idx = split.indices(ds);
    let data = cnn_dataset(features, &ds.labels(), idx)?;
    let e = satneuro_cnn::evaluate(net, &data, cfg.train.loss)?;
    let (h, w) = net.input_shape();
    Ok(ModelEvaluation {
        kind: "cnn".into(),
        split,
        feature_hash: ds.feature_hash.clone(),
        sample_ids: idx.to_vec(),
        labels: data.labels.clone(),
        scores: e.probabilities.rows().into_iter().map(|r| r.iter().map(|&p| f64::from(p)).collect()).collect(),
        predictions: e.predictions.clone(),
        accuracy: e.accuracy,
        latency_s: e.latency_s,
        ops_per_example: net.spec().mac_count(h, w)? as f64,
        mean_layer_spikes: Vec::new(),
    })
}

pub struct SnnRun {
    pub net: LayeredSnn,
    pub history: satneuro_snn::History,
    pub evaluation: ModelEvaluation,
    pub train_seconds: f64,
}

/// Trains on the train split and evaluates on the validation split.
pub fn train_snn(
    ds: &LabeledDataset,
    features: &[Vec<f32>],
    cfg: &SnnConfig,
    on_epoch: impl FnMut(&satneuro_snn::EpochRecord),
) -> Result<SnnRun> {
    let labels = ds.labels();
    let train = encode_set(features, &labels, &ds.train, cfg)?;
    let val = encode_set(features, &labels, &ds.validation, cfg)?;
    let n_in = cfg.encoder.output_neurons(features[0].len());
    let mut net = LayeredSnn::reference(n_in, ds.num_classes(), cfg.init_gain, cfg.init_seed)?;
    let start = Instant::now();
    let history = satneuro_snn::train(&mut net, &train, &val, &cfg.train, on_epoch)?;
    let train_seconds = start.elapsed().as_secs_f64();
    let evaluation = evaluate_snn(&net, ds, features, cfg, Split::Validation)?;
    Ok(SnnRun { net, history, evaluation, train_seconds })
}

pub struct CnnRun {
    pub net: Cnn<f32>,
    pub history: satneuro_cnn::History,
    pub evaluation: ModelEvaluation,
    pub train_seconds: f64,
}

pub fn train_cnn(
    ds: &LabeledDataset,
    features: &[Vec<f32>],
    cfg: &CnnConfig,
    on_epoch: impl FnMut(&satneuro_cnn::EpochRecord),
) -> Result<CnnRun> {
    let labels = ds.labels();
    let train = cnn_dataset(features, &labels, &ds.train)?;
    let val = cnn_dataset(features, &labels, &ds.validation)?;
    let (h, w) = input_shape(ds, &cfg.preprocess);
    let mut net = Cnn::<f32>::new(CnnSpec::reference(ds.num_classes()), h, w, cfg.init_seed)?;
    let start = Instant::now();
    let history = satneuro_cnn::cnn_train(&mut net, &train, &val, &cfg.train, on_epoch)?;
    let train_seconds = start.elapsed().as_secs_f64();
    let evaluation = evaluate_cnn(&net, ds, features, cfg, Split::Validation)?;
    Ok(CnnRun { net, history, evaluation, train_seconds })
}

/// Hashes that pin a dataset: grids, labels and splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n_samples: usize,
    pub seed: u64,
    pub num_classes: usize,
    pub class_counts: Vec<usize>,
    pub feasible_count: usize,
    pub relabeled: usize,
    pub feature_hash: String,
    pub label_hash: String,
    pub split_hash: String,
}

pub fn summarize(ds: &LabeledDataset) -> Result<DatasetSummary> {
    Ok(DatasetSummary {
        n_samples: ds.samples.len(),
        seed: ds.spec.seed,
        num_classes: ds.num_classes(),
        class_counts: ds.class_counts(),
        feasible_count: ds.feasible_count,
        relabeled: ds.samples.iter().filter(|s| s.relabeled).count(),
        feature_hash: ds.feature_hash.clone(),
        label_hash: sha256_hex(serde_json::to_string(&ds.labels())?.as_bytes()),
        split_hash: sha256_hex(serde_json::to_string(&(&ds.train, &ds.validation))?.as_bytes()),
    })
}

/// Writes `dataset.json`, `catalog.csv` and `summary.json` into `dir`.
pub fn save_dataset(dir: &Path, ds: &LabeledDataset) -> Result<DatasetSummary> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("dataset.json"), serde_json::to_string(ds)?)?;
    ds.catalog.write_csv(std::fs::File::create(dir.join("catalog.csv"))?)?;
    let summary = summarize(ds)?;
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

pub fn load_dataset(dir: &Path) -> Result<LabeledDataset> {
    let path = dir.join("dataset.json");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Invalid(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}
