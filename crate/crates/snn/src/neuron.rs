//! Current-based LIF neuron with reset-to-zero, the first-order filter form
//! of a spike response model.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NeuronParams {
    /// Synaptic time constant in steps; decay is `1 - 1/tau_syn`.
    pub tau_syn: f64,
    /// Membrane time constant in steps; decay is `1 - 1/tau_mem`.
    pub tau_mem: f64,
    pub threshold: f64,
    /// Width `a` of the surrogate `exp(-|u - threshold| / a) / a`.
    pub surrogate_width: f64,
}

impl Default for NeuronParams {
    fn default() -> Self {
        Self { tau_syn: 2.0, tau_mem: 4.0, threshold: 1.0, surrogate_width: 1.0 }
    }
}

impl NeuronParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_syn >= 1.0 && self.tau_mem >= 1.0) {
            return Err(Error::Config(format!(
                "time constants must be >= 1 step, got tau_syn={} tau_mem={}",
                self.tau_syn, self.tau_mem
            )));
        }
        if !(self.threshold > 0.0 && self.surrogate_width > 0.0) {
            return Err(Error::Config(format!(
                "threshold and surrogate width must be > 0, got {} and {}",
                self.threshold, self.surrogate_width
            )));
        }
        Ok(())
    }

    pub fn lambda_syn(&self) -> f64 {
        1.0 - 1.0 / self.tau_syn
    }

    pub fn lambda_mem(&self) -> f64 {
        1.0 - 1.0 / self.tau_mem
    }
}

/// Per-layer state carried across steps.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    pub current: Vec<f64>,
    pub potential: Vec<f64>,
    /// Output spikes of the previous step (drive the reset).
    pub spikes: Vec<u8>,
}

impl LayerState {
    pub fn zeros(n: usize) -> Self {
        Self { current: vec![0.0; n], potential: vec![0.0; n], spikes: vec![0; n] }
    }
}

/// Advances one layer by one step. `weights` is `out x in`.
pub fn layer_step(
    state: &mut LayerState,
    in_spikes: &[u8],
    weights: &Array2<f32>,
    params: &NeuronParams,
) -> Result<Vec<u8>> {
    let (n_out, n_in) = weights.dim();
    if in_spikes.len() != n_in {
        return Err(Error::Shape { expected: n_in, got: in_spikes.len() });
    }
    if state.current.len() != n_out {
        return Err(Error::Shape { expected: n_out, got: state.current.len() });
    }
    let (ls, lm) = (params.lambda_syn(), params.lambda_mem());
    for j in 0..n_out {
        let drive: f64 = weights
            .row(j)
            .iter()
            .zip(in_spikes)
            .filter(|(_, &s)| s != 0)
            .map(|(&w, _)| f64::from(w))
            .sum();
        let i = ls * state.current[j] + drive;
        let u = lm * state.potential[j] * f64::from(1 - state.spikes[j]) + i;
        state.current[j] = i;
        state.potential[j] = u;
        state.spikes[j] = u8::from(u >= params.threshold);
    }
    Ok(state.spikes.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_weights_never_spike() {
        let w = Array2::<f32>::zeros((3, 2));
        let mut st = LayerState::zeros(3);
        for _ in 0..10 {
            assert_eq!(layer_step(&mut st, &[1, 1], &w, &NeuronParams::default()).unwrap(), vec![0; 3]);
        }
    }

    #[test]
    fn strong_synapse_fires_immediately() {
        let p = NeuronParams::default();
        let w = array![[2.0f32 * p.threshold as f32]];
        let mut st = LayerState::zeros(1);
        assert_eq!(layer_step(&mut st, &[1], &w, &p).unwrap(), vec![1]);
        assert_eq!(st.potential[0], 2.0);
    }

    #[test]
    fn weak_synapse_without_memory_never_fires() {
        let p = NeuronParams { tau_syn: 1.0, tau_mem: 1.0, ..NeuronParams::default() };
        let w = array![[0.4f32]];
        let mut st = LayerState::zeros(1);
        for _ in 0..50 {
            assert_eq!(layer_step(&mut st, &[1], &w, &p).unwrap(), vec![0]);
        }
    }

    #[test]
    fn reset_clears_potential_but_not_current() {
        let p = NeuronParams { tau_syn: 2.0, tau_mem: 2.0, ..NeuronParams::default() };
        let w = array![[1.0f32]];
        let mut st = LayerState::zeros(1);
        assert_eq!(layer_step(&mut st, &[1], &w, &p).unwrap(), vec![1]);
        // i = 0.5, u = 0.5 * 1 * (1 - 1) + 0.5
        assert_eq!(layer_step(&mut st, &[0], &w, &p).unwrap(), vec![0]);
        assert_eq!(st.current[0], 0.5);
        assert_eq!(st.potential[0], 0.5);
    }

    #[test]
    fn rejects_bad_params_and_shapes() {
        assert!(NeuronParams { tau_syn: 0.5, ..NeuronParams::default() }.validate().is_err());
        assert!(NeuronParams { surrogate_width: 0.0, ..NeuronParams::default() }.validate().is_err());
        let w = Array2::<f32>::zeros((1, 2));
        assert!(layer_step(&mut LayerState::zeros(1), &[1], &w, &NeuronParams::default()).is_err());
    }
}
