//! Grid preprocessing (percentile clip, normalization, max-pooling) and the
//! two spike encoders: stochastic rate coding and a deterministic
//! time-encoding machine built from two-state LIF neurons.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::traffic::TrafficGrid;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessParams {
    /// Values above this percentile of the grid are clipped to it.
    pub percentile: f64,
    /// Side of the non-overlapping max-pooling window.
    pub ds: usize,
}

impl Default for PreprocessParams {
    fn default() -> Self {
        Self { percentile: 99.0, ds: 32 }
    }
}

impl PreprocessParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.percentile > 0.0 && self.percentile <= 100.0) {
            return Err(Error::Config(format!("percentile must be in (0, 100], got {}", self.percentile)));
        }
        if self.ds == 0 {
            return Err(Error::Config("pooling stride must be >= 1".into()));
        }
        Ok(())
    }

    /// Pooled (rows, cols) for an `m x n` grid.
    pub fn pooled_shape(&self, m: usize, n: usize) -> (usize, usize) {
        (m / self.ds, n / self.ds)
    }
}

/// Linear-interpolated percentile (the `(n - 1) p / 100` rank convention).
pub fn percentile(values: &[f32], p: f64) -> f32 {
    assert!(!values.is_empty());
    let mut v = values.to_vec();
    let rank = (v.len() - 1) as f64 * p / 100.0;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let (_, &mut lo_v, rest) = v.select_nth_unstable_by(lo, f32::total_cmp);
    if hi == lo {
        return lo_v;
    }
    // the (lo+1)-th order statistic is the minimum of the upper partition
    let hi_v = rest.iter().copied().fold(f32::INFINITY, f32::min);
    let frac = (rank - lo as f64) as f32;
    lo_v + frac * (hi_v - lo_v)
}

/// Clip at the percentile, scale into [0, 1], max-pool `ds x ds` (remainders
/// dropped) and flatten row-major.
pub fn preprocess(grid: &TrafficGrid, params: &PreprocessParams) -> Result<Vec<f32>> {
    preprocess_values(grid.values(), grid.rows(), grid.cols(), params)
}

pub fn preprocess_values(values: &[f32], m: usize, n: usize, params: &PreprocessParams) -> Result<Vec<f32>> {
    params.validate()?;
    if values.len() != m * n {
        return Err(Error::DimensionMismatch { expected: m * n, got: values.len() });
    }
    if params.ds > m.min(n) {
        return Err(Error::Config(format!("pooling stride {} exceeds grid {m}x{n}", params.ds)));
    }
    let clip = percentile(values, params.percentile);
    let max = values.iter().map(|&v| v.min(clip)).fold(0f32, f32::max);
    let scale = if max > 0.0 { 1.0 / max } else { 0.0 };
    let (pm, pn) = params.pooled_shape(m, n);
    let ds = params.ds;
    let mut out = vec![0f32; pm * pn];
    for (pi, out_row) in out.chunks_exact_mut(pn).enumerate() {
        for i in pi * ds..(pi + 1) * ds {
            let row = &values[i * n..i * n + pn * ds];
            for (pj, o) in out_row.iter_mut().enumerate() {
                let cell = row[pj * ds..(pj + 1) * ds].iter().fold(0f32, |a, &v| a.max(v));
                *o = o.max(cell);
            }
        }
    }
    for o in &mut out {
        *o = (o.min(clip) * scale).clamp(0.0, 1.0);
    }
    Ok(out)
}

/// Binary neurons x time-steps matrix, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikeRaster {
    neurons: usize,
    steps: usize,
    bits: Vec<u8>,
}

impl SpikeRaster {
    pub fn zeros(neurons: usize, steps: usize) -> Self {
        Self { neurons, steps, bits: vec![0; neurons * steps] }
    }

    pub fn from_bits(neurons: usize, steps: usize, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != neurons * steps {
            return Err(Error::DimensionMismatch { expected: neurons * steps, got: bits.len() });
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::Domain("spike raster entries must be 0 or 1".into()));
        }
        Ok(Self { neurons, steps, bits })
    }

    pub fn neurons(&self) -> usize {
        self.neurons
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn get(&self, neuron: usize, t: usize) -> bool {
        self.bits[neuron * self.steps + t] != 0
    }

    pub fn set(&mut self, neuron: usize, t: usize, spike: bool) {
        self.bits[neuron * self.steps + t] = u8::from(spike);
    }

    pub fn row(&self, neuron: usize) -> &[u8] {
        &self.bits[neuron * self.steps..(neuron + 1) * self.steps]
    }

    pub fn row_counts(&self) -> Vec<usize> {
        (0..self.neurons)
            .map(|i| self.row(i).iter().map(|&b| usize::from(b)).sum())
            .collect()
    }

    pub fn total_spikes(&self) -> usize {
        self.bits.iter().map(|&b| usize::from(b)).sum()
    }

    /// Spikes of every neuron at step `t`.
    pub fn column(&self, t: usize) -> impl Iterator<Item = u8> + '_ {
        (0..self.neurons).map(move |i| self.bits[i * self.steps + t])
    }

    /// Packs row-major bits, least significant bit first.
    pub fn pack(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.bits.len().div_ceil(8)];
        for (k, &b) in self.bits.iter().enumerate() {
            out[k / 8] |= b << (k % 8);
        }
        out
    }

    pub fn unpack(neurons: usize, steps: usize, packed: &[u8]) -> Result<Self> {
        let n = neurons * steps;
        if packed.len() != n.div_ceil(8) {
            return Err(Error::DimensionMismatch { expected: n.div_ceil(8), got: packed.len() });
        }
        let bits = (0..n).map(|k| (packed[k / 8] >> (k % 8)) & 1).collect();
        Ok(Self { neurons, steps, bits })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TemParams {
    pub alpha_u: f64,
    pub alpha_v: f64,
    pub threshold: f64,
    /// Encoders per input value.
    pub replicas: usize,
    /// Replica `r` uses decays `alpha * replica_ratio^r`.
    pub replica_ratio: f64,
}

impl Default for TemParams {
    fn default() -> Self {
        Self { alpha_u: 0.25, alpha_v: 0.25, threshold: 1.0, replicas: 1, replica_ratio: 0.5 }
    }
}

impl TemParams {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |a: f64| a > 0.0 && a < 1.0;
        if !open_unit(self.alpha_u) || !open_unit(self.alpha_v) {
            return Err(Error::Config(format!(
                "TEM decays must lie in (0, 1), got alpha_u={} alpha_v={}",
                self.alpha_u, self.alpha_v
            )));
        }
        if !(self.threshold > 0.0) {
            return Err(Error::Config(format!("TEM threshold must be > 0, got {}", self.threshold)));
        }
        if self.replicas == 0 {
            return Err(Error::Config("TEM needs at least one replica".into()));
        }
        if !open_unit(self.replica_ratio) && self.replicas > 1 {
            return Err(Error::Config(format!("replica ratio must lie in (0, 1), got {}", self.replica_ratio)));
        }
        Ok(())
    }
}

fn check_unit_interval(x: &[f32]) -> Result<()> {
    match x.iter().position(|&v| !(0.0..=1.0).contains(&v)) {
        Some(i) => Err(Error::Domain(format!("input {i} = {} outside [0, 1]", x[i]))),
        None => Ok(()),
    }
}

/// Independent Bernoulli(x_i) spikes at every step. Draws are taken neuron by
/// neuron, step by step, from a ChaCha8 stream seeded with `seed`.
pub fn rate_encode(x: &[f32], steps: usize, seed: u64) -> Result<SpikeRaster> {
    check_unit_interval(x)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raster = SpikeRaster::zeros(x.len(), steps);
    for (i, &p) in x.iter().enumerate() {
        for t in 0..steps {
            let u: f64 = rng.random();
            raster.set(i, t, u < f64::from(p));
        }
    }
    Ok(raster)
}

/// Spike train of one LIF time-encoding neuron driven by the constant `x`.
pub fn tem_train(x: f64, steps: usize, alpha_u: f64, alpha_v: f64, threshold: f64) -> Vec<u8> {
    let (mut u, mut v) = (0.0, 0.0);
    (0..steps)
        .map(|_| {
            u = (1.0 - alpha_u) * u + x;
            v = (1.0 - alpha_v) * v + u;
            let s = v >= threshold;
            if s {
                v = 0.0;
            }
            u8::from(s)
        })
        .collect()
}

/// Deterministic TEM encoding; input `i` replica `r` lands on row
/// `i * replicas + r`.
pub fn tem_encode(x: &[f32], steps: usize, params: &TemParams) -> Result<SpikeRaster> {
    params.validate()?;
    check_unit_interval(x)?;
    let reps = params.replicas;
    let mut bits = Vec::with_capacity(x.len() * reps * steps);
    for &xi in x {
        for r in 0..reps {
            let k = params.replica_ratio.powi(r as i32);
            bits.extend(tem_train(
                f64::from(xi),
                steps,
                params.alpha_u * k,
                params.alpha_v * k,
                params.threshold,
            ));
        }
    }
    Ok(SpikeRaster { neurons: x.len() * reps, steps, bits })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Encoder {
    Rate,
    Tem(TemParams),
}

impl Encoder {
    pub fn name(&self) -> &'static str {
        match self {
            Encoder::Rate => "rate",
            Encoder::Tem(_) => "tem",
        }
    }

    /// Raster rows produced for `n_inputs` features.
    pub fn output_neurons(&self, n_inputs: usize) -> usize {
        match self {
            Encoder::Rate => n_inputs,
            Encoder::Tem(p) => n_inputs * p.replicas,
        }
    }

    /// `seed` only matters for rate coding.
    pub fn encode(&self, x: &[f32], steps: usize, seed: u64) -> Result<SpikeRaster> {
        match self {
            Encoder::Rate => rate_encode(x, steps, seed),
            Encoder::Tem(p) => tem_encode(x, steps, p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterHeader {
    #[serde(rename = "N")]
    pub neurons: usize,
    #[serde(rename = "T")]
    pub steps: usize,
    pub encoder: Encoder,
    pub params: PreprocessParams,
}

/// `u32` LE header length, JSON header, packed bits.
pub fn write_raster<W: Write>(mut w: W, raster: &SpikeRaster, header: &RasterHeader) -> Result<()> {
    let json = serde_json::to_vec(header)?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    w.write_all(&raster.pack())?;
    Ok(())
}

pub fn read_raster<R: Read>(mut r: R) -> Result<(SpikeRaster, RasterHeader)> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut json)?;
    let header: RasterHeader = serde_json::from_slice(&json)?;
    let mut packed = vec![0u8; (header.neurons * header.steps).div_ceil(8)];
    r.read_exact(&mut packed)?;
    Ok((SpikeRaster::unpack(header.neurons, header.steps, &packed)?, header))
}

pub fn dump_raster(path: &Path, raster: &SpikeRaster, header: &RasterHeader) -> Result<()> {
    write_raster(std::io::BufWriter::new(std::fs::File::create(path)?), raster, header)
}
