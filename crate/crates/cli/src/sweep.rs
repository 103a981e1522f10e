use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use satneuro_core::encoding::{Encoder, TemParams};
use satneuro_core::oracle::LabeledDataset;

use crate::config::SnnConfig;
use crate::pipeline::{train_snn, FeatureCache};
use crate::svg::{line_chart, Series};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Encoder,
    Steps,
    Ds,
    Rho,
    /// TEM firing threshold.
    ThetaEnc,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Encoder => "encoder",
            SweepAxis::Steps => "steps",
            SweepAxis::Ds => "ds",
            SweepAxis::Rho => "rho",
            SweepAxis::ThetaEnc => "theta_enc",
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "encoder" => Ok(SweepAxis::Encoder),
            "steps" | "T" => Ok(SweepAxis::Steps),
            "ds" => Ok(SweepAxis::Ds),
            "rho" => Ok(SweepAxis::Rho),
            "theta_enc" => Ok(SweepAxis::ThetaEnc),
            _ => Err(Error::Invalid(format!("unknown sweep axis '{s}' (encoder, steps, ds, rho, theta_enc)"))),
        }
    }
}

/// One axis varied over `values`; every other setting stays at the base
/// configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<String>,
}

impl SweepSpec {
    pub fn new(axis: SweepAxis, values: Vec<String>) -> Result<Self> {
        let s = Self { axis, values };
        s.validate()?;
        Ok(s)
    }

    /// Values must be nonempty, parse for the axis and be sorted ascending.
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Invalid("sweep needs at least one value".into()));
        }
        let base = SnnConfig::default();
        for v in &self.values {
            self.apply(&base, v)?;
        }
        let sorted = match self.axis {
            SweepAxis::Encoder => self.values.windows(2).all(|w| w[0] < w[1]),
            _ => {
                let x: Vec<f64> = self.values.iter().map(|v| v.parse().expect("validated")).collect();
                x.windows(2).all(|w| w[0] < w[1])
            }
        };
        if !sorted {
            return Err(Error::Invalid(format!("sweep values must be sorted ascending, got {:?}", self.values)));
        }
        Ok(())
    }

    /// Configuration of the point `value`.
    pub fn apply(&self, base: &SnnConfig, value: &str) -> Result<SnnConfig> {
        let bad = || Error::Invalid(format!("invalid {} value '{value}'", self.axis.name()));
        let mut cfg = *base;
        match self.axis {
            SweepAxis::Encoder => {
                cfg.encoder = match value {
                    "rate" => Encoder::Rate,
                    "tem" => match base.encoder {
                        Encoder::Tem(p) => Encoder::Tem(p),
                        Encoder::Rate => Encoder::Tem(TemParams::default()),
                    },
                    _ => return Err(bad()),
                }
            }
            SweepAxis::Steps => cfg.steps = value.parse().ok().filter(|&t| t > 0).ok_or_else(bad)?,
            SweepAxis::Ds => cfg.preprocess.ds = value.parse().ok().filter(|&d| d > 0).ok_or_else(bad)?,
            SweepAxis::Rho => cfg.train.rho = value.parse().map_err(|_| bad())?,
            SweepAxis::ThetaEnc => {
                let th: f64 = value.parse().map_err(|_| bad())?;
                let Encoder::Tem(mut p) = cfg.encoder else {
                    return Err(Error::Invalid("theta_enc sweep needs a TEM encoder".into()));
                };
                p.threshold = th;
                cfg.encoder = Encoder::Tem(p);
            }
        }
        cfg.train.validate()?;
        if let Encoder::Tem(p) = cfg.encoder {
            p.validate()?;
        }
        Ok(cfg)
    }
}

/// Validation-split measurements of one trained sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: String,
    pub accuracy: f64,
    pub latency_s: f64,
    pub synops: f64,
    /// Mean encoded input spikes per example.
    pub input_spikes: f64,
    /// Mean spikes per example over all layers, input included.
    pub total_spikes: f64,
    pub train_seconds: f64,
}

/// Trains and evaluates one model per value. Points are independent jobs.
pub fn run_sweep(
    spec: &SweepSpec,
    ds: &LabeledDataset,
    cache: &mut FeatureCache,
    base: &SnnConfig,
) -> Result<Vec<SweepPoint>> {
    spec.validate()?;
    let configs = spec.values.iter().map(|v| spec.apply(base, v)).collect::<Result<Vec<_>>>()?;
    let params: Vec<_> = configs.iter().map(|c| c.preprocess).collect();
    cache.fill(ds, &params)?;
    let features = configs.iter().map(|c| cache.get(ds, &c.preprocess)).collect::<Result<Vec<_>>>()?;
    spec.values
        .par_iter()
        .zip(configs.par_iter())
        .zip(features.par_iter())
        .map(|((value, cfg), feats)| {
            let run = train_snn(ds, feats, cfg, |_| ())?;
            let e = &run.evaluation;
            Ok(SweepPoint {
                value: value.clone(),
                accuracy: e.accuracy,
                latency_s: e.latency_s,
                synops: e.ops_per_example,
                input_spikes: e.mean_layer_spikes[0],
                total_spikes: e.mean_layer_spikes.iter().sum(),
                train_seconds: run.train_seconds,
            })
        })
        .collect()
}

/// `sweep_<axis>.csv`, `sweep_<axis>_accuracy.svg` and
/// `sweep_<axis>_spikes.svg`.
pub fn write_sweep(dir: &Path, spec: &SweepSpec, points: &[SweepPoint]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let name = spec.axis.name();
    let mut w = csv::Writer::from_path(dir.join(format!("sweep_{name}.csv")))?;
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    let x = |k: usize, p: &SweepPoint| match spec.axis {
        SweepAxis::Encoder => k as f64,
        _ => p.value.parse().unwrap_or(k as f64),
    };
    let series = |f: fn(&SweepPoint) -> f64, label: &str| {
        vec![Series { name: label.into(), points: points.iter().enumerate().map(|(k, p)| (x(k, p), f(p))).collect() }]
    };
    let acc = line_chart(&format!("Accuracy over {name}"), name, "validation accuracy", &series(|p| p.accuracy, "accuracy"));
    std::fs::write(dir.join(format!("sweep_{name}_accuracy.svg")), acc)?;
    let spk = line_chart(
        &format!("Spikes over {name}"),
        name,
        "spikes per example",
        &[
            series(|p| p.input_spikes, "input").remove(0),
            series(|p| p.total_spikes, "all layers").remove(0),
        ],
    );
    std::fs::write(dir.join(format!("sweep_{name}_spikes.svg")), spk)?;
    Ok(())
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepPoint>> {
    let mut rdr = csv::Reader::from_path(path)?;
    Ok(rdr.deserialize().collect::<std::result::Result<_, _>>()?)
}
