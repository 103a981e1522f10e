use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::pipeline::{ModelEvaluation, Split};
use crate::{Error, Result};

/// SNN versus CNN on the same split. Ratios are CNN over SNN, so values
/// above 1 favour the SNN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub split: Split,
    pub examples: usize,
    pub snn_accuracy: f64,
    pub cnn_accuracy: f64,
    /// SNN minus CNN accuracy.
    pub accuracy_delta: f64,
    pub snn_latency_s: f64,
    pub cnn_latency_s: f64,
    pub latency_ratio: f64,
    pub snn_synops: f64,
    pub cnn_macs: f64,
    pub ops_ratio: f64,
}

pub fn compare_models(snn: &ModelEvaluation, cnn: &ModelEvaluation) -> Result<Comparison> {
    if snn.split != cnn.split || snn.sample_ids != cnn.sample_ids || snn.feature_hash != cnn.feature_hash {
        return Err(Error::Invalid("evaluations cover different splits".into()));
    }
    Ok(Comparison {
        split: snn.split,
        examples: snn.sample_ids.len(),
        snn_accuracy: snn.accuracy,
        cnn_accuracy: cnn.accuracy,
        accuracy_delta: snn.accuracy - cnn.accuracy,
        snn_latency_s: snn.latency_s,
        cnn_latency_s: cnn.latency_s,
        latency_ratio: cnn.latency_s / snn.latency_s,
        snn_synops: snn.ops_per_example,
        cnn_macs: cnn.ops_per_example,
        ops_ratio: cnn.ops_per_example / snn.ops_per_example,
    })
}

pub fn write_comparison<W: std::io::Write>(w: W, c: &Comparison) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.serialize(c)?;
    w.flush()?;
    Ok(())
}

pub fn read_comparison<R: std::io::Read>(r: R) -> Result<Comparison> {
    let mut rdr = csv::Reader::from_reader(r);
    let row = rdr.deserialize().next().ok_or_else(|| Error::Invalid("empty comparison file".into()))?;
    Ok(row?)
}

pub fn save_comparison(path: &Path, c: &Comparison) -> Result<()> {
    write_comparison(std::fs::File::create(path)?, c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(kind: &str, preds: Vec<usize>, ops: f64) -> ModelEvaluation {
        let labels = vec![0, 1, 1, 0];
        let acc = preds.iter().zip(&labels).filter(|(p, l)| p == l).count() as f64 / 4.0;
        ModelEvaluation {
            kind: kind.into(),
            split: Split::Validation,
            feature_hash: "h".into(),
            sample_ids: vec![3, 5, 8, 9],
            labels,
            scores: preds.iter().map(|&p| if p == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] }).collect(),
            predictions: preds,
            accuracy: acc,
            latency_s: 1e-3 / 3.0,
            ops_per_example: ops,
            mean_layer_spikes: vec![],
        }
    }

    #[test]
    fn identical_predictions_give_zero_delta() {
        let c = compare_models(&eval("snn", vec![0, 1, 0, 0], 1e4), &eval("cnn", vec![0, 1, 0, 0], 6.5e6)).unwrap();
        assert_eq!(c.accuracy_delta, 0.0);
        assert_eq!(c.ops_ratio, 650.0);
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let c = compare_models(&eval("snn", vec![0, 1, 1, 0], 12345.678), &eval("cnn", vec![1, 1, 0, 0], 6540656.0))
            .unwrap();
        let mut buf = Vec::new();
        write_comparison(&mut buf, &c).unwrap();
        assert_eq!(read_comparison(buf.as_slice()).unwrap(), c);
    }

    #[test]
    fn split_mismatch_is_an_error() {
        let mut other = eval("cnn", vec![0, 1, 1, 0], 1.0);
        other.split = Split::Train;
        assert!(compare_models(&eval("snn", vec![0, 1, 1, 0], 1.0), &other).is_err());
        let mut other = eval("cnn", vec![0, 1, 1, 0], 1.0);
        other.sample_ids[0] = 4;
        assert!(compare_models(&eval("snn", vec![0, 1, 1, 0], 1.0), &other).is_err());
    }
}
