use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use satneuro_core::checkpoint::{Checkpoint, Tensor};
use satneuro_core::encoding::SpikeRaster;
use satneuro_core::util::F32Hasher;

use crate::engine::{unroll, Dynamics, Mode};
use crate::neuron::NeuronParams;
use crate::{Error, Result};

pub const HIDDEN_SIZES: [usize; 3] = [512, 256, 512];

/// Fully connected feed-forward spiking network. `weights[l]` maps layer `l`
/// (size `sizes[l]`) to layer `l + 1` and is stored `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredSnn {
    sizes: Vec<usize>,
    weights: Vec<Array2<f32>>,
    neurons: Vec<NeuronParams>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SnnMeta {
    sizes: Vec<usize>,
    neurons: Vec<NeuronParams>,
    #[serde(default)]
    extra: serde_json::Value,
}

impl LayeredSnn {
    /// `[n_in, 512, 256, 512, z]` with default neurons.
    pub fn reference(n_in: usize, z: usize, init_gain: f64, seed: u64) -> Result<Self> {
        let mut sizes = vec![n_in];
        sizes.extend(HIDDEN_SIZES);
        sizes.push(z);
        Self::new(&sizes, NeuronParams::default(), init_gain, seed)
    }

    /// Weights ~ U(-g/sqrt(fan_in), g/sqrt(fan_in)), drawn layer by layer in
    /// row-major order.
    pub fn new(sizes: &[usize], neuron: NeuronParams, init_gain: f64, seed: u64) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
        }
        if !(init_gain > 0.0) {
            return Err(Error::Config(format!("init gain must be > 0, got {init_gain}")));
        }
        neuron.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = sizes
            .windows(2)
            .map(|d| {
                let k = (init_gain / (d[0] as f64).sqrt()) as f32;
                let dist = Uniform::new_inclusive(-k, k).expect("finite bound");
                Array2::from_shape_simple_fn((d[1], d[0]), || dist.sample(&mut rng))
            })
            .collect();
        Ok(Self { sizes: sizes.to_vec(), weights, neurons: vec![neuron; sizes.len() - 1] })
    }

    pub fn from_weights(weights: Vec<Array2<f32>>, neurons: Vec<NeuronParams>) -> Result<Self> {
        if weights.is_empty() || neurons.len() != weights.len() {
            return Err(Error::Config("need one neuron parameter set per weight layer".into()));
        }
        let mut sizes = vec![weights[0].ncols()];
        for w in &weights {
            if w.ncols() != *sizes.last().expect("nonempty") {
                return Err(Error::Shape { expected: *sizes.last().expect("nonempty"), got: w.ncols() });
            }
            sizes.push(w.nrows());
        }
        for n in &neurons {
            n.validate()?;
        }
        Ok(Self { sizes, weights, neurons })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn weights(&self) -> &[Array2<f32>] {
        &self.weights
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [Array2<f32>] {
        &mut self.weights
    }

    pub fn neurons(&self) -> &[NeuronParams] {
        &self.neurons
    }

    pub fn num_inputs(&self) -> usize {
        self.sizes[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.sizes.last().expect("nonempty")
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum()
    }

    pub fn weight_hash(&self) -> String {
        let mut h = F32Hasher::new();
        for w in &self.weights {
            h.update(w.as_standard_layout().as_slice().expect("standard layout"));
        }
        h.finish()
    }

    pub(crate) fn dynamics<F: crate::engine::Real>(&self, mode: Mode) -> Vec<Dynamics<F>> {
        self.neurons.iter().map(|p| Dynamics::new(p, mode)).collect()
    }

    /// Output raster and accounting for one input raster.
    pub fn forward(&self, raster: &SpikeRaster) -> Result<(SpikeRaster, RunStats)> {
        let mut out = self.forward_batch(&[raster])?;
        Ok(out.pop().expect("one result"))
    }

    /// Batched inference; wall-clock is the batch time split evenly.
    pub fn forward_batch(&self, rasters: &[&SpikeRaster]) -> Result<Vec<(SpikeRaster, RunStats)>> {
        if rasters.is_empty() {
            return Ok(Vec::new());
        }
        let start = Instant::now();
        let batch = rasters.len();
        let steps = rasters[0].steps();
        let x0 = stack_rasters(rasters, self.num_inputs())?;
        let un = unroll(&self.weights, &self.dynamics::<f32>(Mode::Spiking), x0, batch);
        let per_example = start.elapsed().as_secs_f64() / batch as f64;
        let layers: Vec<&Array2<f32>> =
            std::iter::once(&un.inputs[0]).chain(un.traces.iter().map(|t| &t.spikes)).collect();
        let z = self.num_classes();
        let mut results = Vec::with_capacity(batch);
        for b in 0..batch {
            let mut spikes = vec![vec![0u32; steps]; layers.len()];
            for (l, act) in layers.iter().enumerate() {
                for t in 0..steps {
                    let row = act.row(t * batch + b);
                    debug_assert!(row.iter().all(|&s| s == 0.0 || s == 1.0));
                    spikes[l][t] = row.iter().filter(|&&s| s != 0.0).count() as u32;
                }
            }
            let out = layers.last().expect("output layer");
            let mut bits = vec![0u8; z * steps];
            for t in 0..steps {
                for (k, &s) in out.row(t * batch + b).iter().enumerate() {
                    bits[k * steps + t] = u8::from(s != 0.0);
                }
            }
            let raster = SpikeRaster::from_bits(z, steps, bits)?;
            results.push((raster, RunStats::new(&self.sizes, spikes, per_example)));
        }
        Ok(results)
    }

    /// Spike raster of every layer, input first, for one example.
    pub fn forward_rasters(&self, raster: &SpikeRaster) -> Result<Vec<SpikeRaster>> {
        let steps = raster.steps();
        let x0 = stack_rasters(&[raster], self.num_inputs())?;
        let un = unroll(&self.weights, &self.dynamics::<f32>(Mode::Spiking), x0, 1);
        std::iter::once(&un.inputs[0])
            .chain(un.traces.iter().map(|t| &t.spikes))
            .map(|act| {
                let n = act.ncols();
                let mut bits = vec![0u8; n * steps];
                for t in 0..steps {
                    for (k, &s) in act.row(t).iter().enumerate() {
                        bits[k * steps + t] = u8::from(s != 0.0);
                    }
                }
                Ok(SpikeRaster::from_bits(n, steps, bits)?)
            })
            .collect()
    }

    pub fn predict(&self, raster: &SpikeRaster) -> Result<usize> {
        Ok(predict_counts(&self.forward(raster)?.0.row_counts()))
    }

    /// `extra` carries encoder settings and the training manifest.
    pub fn to_checkpoint(&self, extra: serde_json::Value) -> Result<Checkpoint> {
        let meta = SnnMeta { sizes: self.sizes.clone(), neurons: self.neurons.clone(), extra };
        let tensors = self
            .weights
            .iter()
            .enumerate()
            .map(|(l, w)| {
                let data = w.as_standard_layout().iter().copied().collect();
                Tensor::new(format!("w{l}"), vec![w.nrows(), w.ncols()], data)
            })
            .collect::<satneuro_core::Result<Vec<_>>>()?;
        Ok(Checkpoint {
            kind: "snn".into(),
            meta: serde_json::to_value(meta).map_err(satneuro_core::Error::from)?,
            tensors,
        })
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<(Self, serde_json::Value)> {
        if ck.kind != "snn" {
            return Err(Error::Config(format!("checkpoint holds a '{}' model, not an snn", ck.kind)));
        }
        let meta: SnnMeta = serde_json::from_value(ck.meta.clone()).map_err(satneuro_core::Error::from)?;
        let weights = ck
            .tensors
            .iter()
            .map(|t| match t.info.shape.as_slice() {
                &[r, c] => Array2::from_shape_vec((r, c), t.data.clone())
                    .map_err(|_| Error::Shape { expected: r * c, got: t.data.len() }),
                _ => Err(Error::Config(format!("tensor {} is not a matrix", t.info.name))),
            })
            .collect::<Result<Vec<_>>>()?;
        let net = Self::from_weights(weights, meta.neurons)?;
        if net.sizes != meta.sizes {
            return Err(Error::Config("checkpoint sizes disagree with its tensors".into()));
        }
        Ok((net, meta.extra))
    }

    pub fn save(&self, path: &Path, extra: serde_json::Value) -> Result<()> {
        Ok(self.to_checkpoint(extra)?.save(path)?)
    }

    pub fn load(path: &Path) -> Result<(Self, serde_json::Value)> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// First maximal count wins.
pub fn predict_counts<T: PartialOrd + Copy>(counts: &[T]) -> usize {
    let mut best = 0;
    for (k, &c) in counts.iter().enumerate().skip(1) {
        if c > counts[best] {
            best = k;
        }
    }
    best
}

/// Time-major `(steps * batch) x n` stack of rasters.
pub(crate) fn stack_rasters(rasters: &[&SpikeRaster], n_in: usize) -> Result<Array2<f32>> {
    let batch = rasters.len();
    let steps = rasters[0].steps();
    let mut x = Array2::<f32>::zeros((steps * batch, n_in));
    for (b, r) in rasters.iter().enumerate() {
        if r.neurons() != n_in {
            return Err(Error::Shape { expected: n_in, got: r.neurons() });
        }
        if r.steps() != steps {
            return Err(Error::Shape { expected: steps, got: r.steps() });
        }
        for i in 0..n_in {
            for (t, &s) in r.row(i).iter().enumerate() {
                if s != 0 {
                    x[[t * batch + b, i]] = 1.0;
                }
            }
        }
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    /// `spikes[l][t]`: spike count of layer `l` (0 = input) at step `t`.
    pub spikes: Vec<Vec<u32>>,
    /// Each spike of layer `l < L` costs `sizes[l + 1]` operations.
    pub synops: u64,
    /// Sum over non-input layers of neurons times steps.
    pub neuron_updates: u64,
    pub wall_clock_s: f64,
}

impl RunStats {
    pub fn new(sizes: &[usize], spikes: Vec<Vec<u32>>, wall_clock_s: f64) -> Self {
        let steps = spikes.first().map_or(0, Vec::len) as u64;
        let synops = synops_from_counts(sizes, &spikes);
        let neuron_updates = sizes[1..].iter().map(|&n| n as u64 * steps).sum();
        Self { spikes, synops, neuron_updates, wall_clock_s }
    }

    pub fn layer_totals(&self) -> Vec<u64> {
        self.spikes.iter().map(|l| l.iter().map(|&c| u64::from(c)).sum()).collect()
    }

    pub fn input_spikes(&self) -> u64 {
        self.layer_totals()[0]
    }

    pub fn output_spikes(&self) -> u64 {
        *self.layer_totals().last().expect("nonempty")
    }

    /// Spikes of all layers strictly between input and output.
    pub fn hidden_spikes(&self) -> u64 {
        let t = self.layer_totals();
        t[1..t.len() - 1].iter().sum()
    }
}

pub fn synops_from_counts(sizes: &[usize], spikes: &[Vec<u32>]) -> u64 {
    spikes
        .iter()
        .zip(&sizes[1..])
        .map(|(layer, &fan_out)| layer.iter().map(|&c| u64::from(c)).sum::<u64>() * fan_out as u64)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raster(n: usize, steps: usize, seed: u64) -> SpikeRaster {
        satneuro_core::encoding::rate_encode(&vec![0.5; n], steps, seed).unwrap()
    }

    #[test]
    fn zero_net_only_counts_input_fan_out() {
        let w = vec![Array2::zeros((4, 3)), Array2::zeros((2, 4))];
        let net = LayeredSnn::from_weights(w, vec![NeuronParams::default(); 2]).unwrap();
        let r = raster(3, 8, 1);
        let (out, stats) = net.forward(&r).unwrap();
        assert_eq!(out.total_spikes(), 0);
        assert_eq!(stats.synops, r.total_spikes() as u64 * 4);
        assert_eq!(stats.neuron_updates, (4 + 2) * 8);
    }

    #[test]
    fn forward_is_deterministic_and_batch_invariant() {
        let net = LayeredSnn::new(&[20, 16, 3], NeuronParams::default(), 3.0, 5).unwrap();
        let rs: Vec<SpikeRaster> = (0..4).map(|s| raster(20, 8, s)).collect();
        let single: Vec<_> = rs.iter().map(|r| net.forward(r).unwrap()).collect();
        let refs: Vec<&SpikeRaster> = rs.iter().collect();
        let batched = net.forward_batch(&refs).unwrap();
        for (a, b) in single.iter().zip(&batched) {
            assert_eq!(a.0, b.0);
            assert_eq!(a.1.spikes, b.1.spikes);
        }
        assert_eq!(net.forward(&rs[0]).unwrap().0, single[0].0);
    }

    #[test]
    fn predict_tie_rules() {
        assert_eq!(predict_counts(&[3, 1, 0, 0, 0, 0]), 0);
        assert_eq!(predict_counts(&[0, 0, 0, 0, 0, 0]), 0);
        assert_eq!(predict_counts(&[2, 5, 5, 0, 0, 0]), 1);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let net = LayeredSnn::new(&[5, 3], NeuronParams::default(), 1.0, 0).unwrap();
        assert!(net.forward(&raster(4, 8, 0)).is_err());
        assert!(LayeredSnn::new(&[5], NeuronParams::default(), 1.0, 0).is_err());
    }

    #[test]
    fn reference_topology() {
        let net = LayeredSnn::reference(220, 6, 1.0, 0).unwrap();
        assert_eq!(net.sizes(), &[220, 512, 256, 512, 6]);
        assert_eq!(net.num_params(), 220 * 512 + 512 * 256 + 256 * 512 + 512 * 6);
    }

    #[test]
    fn checkpoint_round_trip() {
        let net = LayeredSnn::new(&[6, 5, 3], NeuronParams { tau_mem: 8.0, ..Default::default() }, 1.0, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        net.save(&p, serde_json::json!({"encoder": "tem"})).unwrap();
        let (back, extra) = LayeredSnn::load(&p).unwrap();
        assert_eq!(back, net);
        assert_eq!(back.weight_hash(), net.weight_hash());
        assert_eq!(extra["encoder"], "tem");
    }
}
