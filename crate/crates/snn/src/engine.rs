//! Batched time-unrolled simulation and exact backpropagation through time.
//!
//! Activations are stored time-major: row `t * batch + b` holds example `b`
//! at step `t`, so each step is a contiguous `batch x n` block.

use ndarray::{Array2, ArrayView2, LinalgScalar};
use num_traits::Float;

use crate::neuron::NeuronParams;

pub trait Real: Float + LinalgScalar + Send + Sync + std::fmt::Debug + 'static {}

impl<T: Float + LinalgScalar + Send + Sync + std::fmt::Debug + 'static> Real for T {}

/// Hard threshold with a surrogate derivative, or a sigmoid used in both
/// directions (differentiable, for finite-difference checks).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Spiking,
    Relaxed,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Dynamics<F> {
    ls: F,
    lm: F,
    theta: F,
    a: F,
    mode: Mode,
}

impl<F: Real> Dynamics<F> {
    pub(crate) fn new(p: &NeuronParams, mode: Mode) -> Self {
        let c = |v: f64| F::from(v).expect("finite parameter");
        Self { ls: c(p.lambda_syn()), lm: c(p.lambda_mem()), theta: c(p.threshold), a: c(p.surrogate_width), mode }
    }

    #[inline]
    fn fire(&self, u: F) -> F {
        match self.mode {
            Mode::Spiking => {
                if u >= self.theta {
                    F::one()
                } else {
                    F::zero()
                }
            }
            Mode::Relaxed => F::one() / (F::one() + (-(u - self.theta) / self.a).exp()),
        }
    }

    #[inline]
    fn dfire(&self, u: F, s: F) -> F {
        match self.mode {
            Mode::Spiking => (-(u - self.theta).abs() / self.a).exp() / self.a,
            Mode::Relaxed => s * (F::one() - s) / self.a,
        }
    }
}

pub(crate) struct LayerTrace<F> {
    pub potential: Array2<F>,
    pub spikes: Array2<F>,
}

/// Runs one layer over all steps. `x` is `(steps * batch) x n_in`, `w` is
/// `n_out x n_in`.
pub(crate) fn layer_forward<F: Real>(
    x: ArrayView2<F>,
    w: ArrayView2<F>,
    batch: usize,
    dynamics: &Dynamics<F>,
) -> LayerTrace<F> {
    let drive = x.dot(&w.t());
    let n = w.nrows();
    let bn = batch * n;
    let rows = x.nrows();
    let mut potential = Array2::<F>::zeros((rows, n));
    let mut spikes = Array2::<F>::zeros((rows, n));
    let mut cur = vec![F::zero(); bn];
    let mut u_prev = vec![F::zero(); bn];
    let mut s_prev = vec![F::zero(); bn];
    let drive = drive.as_standard_layout();
    let drive = drive.as_slice().expect("standard layout");
    let pot = potential.as_slice_mut().expect("standard layout");
    let spk = spikes.as_slice_mut().expect("standard layout");
    let d = dynamics;
    for (t, block) in drive.chunks_exact(bn).enumerate() {
        let base = t * bn;
        for k in 0..bn {
            let i = d.ls * cur[k] + block[k];
            let u = d.lm * u_prev[k] * (F::one() - s_prev[k]) + i;
            let s = d.fire(u);
            cur[k] = i;
            u_prev[k] = u;
            s_prev[k] = s;
            pot[base + k] = u;
            spk[base + k] = s;
        }
    }
    LayerTrace { potential, spikes }
}

/// Returns `(dL/dw, dL/dx)` given `dL/ds` for every step. The reset path is
/// differentiated through both the gate `(1 - s)` and the carried potential.
pub(crate) fn layer_backward<F: Real>(
    grad_spikes: &Array2<F>,
    trace: &LayerTrace<F>,
    x: ArrayView2<F>,
    w: ArrayView2<F>,
    batch: usize,
    dynamics: &Dynamics<F>,
    need_input_grad: bool,
) -> (Array2<F>, Option<Array2<F>>) {
    let n = w.nrows();
    let bn = batch * n;
    let rows = x.nrows();
    let steps = rows / batch;
    let mut grad_current = Array2::<F>::zeros((rows, n));
    let gi_all = grad_current.as_slice_mut().expect("standard layout");
    let gs_ext = grad_spikes.as_slice().expect("standard layout");
    let pot = trace.potential.as_slice().expect("standard layout");
    let spk = trace.spikes.as_slice().expect("standard layout");
    let mut gu_next = vec![F::zero(); bn];
    let mut gi_next = vec![F::zero(); bn];
    let d = dynamics;
    for t in (0..steps).rev() {
        let base = t * bn;
        for k in 0..bn {
            let (u, s) = (pot[base + k], spk[base + k]);
            let gs = gs_ext[base + k] - gu_next[k] * d.lm * u;
            let gu = gs * d.dfire(u, s) + gu_next[k] * d.lm * (F::one() - s);
            let gi = gu + d.ls * gi_next[k];
            gi_all[base + k] = gi;
            gu_next[k] = gu;
            gi_next[k] = gi;
        }
    }
    let grad_w = grad_current.t().dot(&x);
    let grad_x = need_input_grad.then(|| grad_current.dot(&w));
    (grad_w, grad_x)
}

/// Squared rate loss summed over the batch and its gradient w.r.t. output
/// spikes, both scaled by `scale`.
pub(crate) fn rate_loss<F: Real>(
    out_spikes: &Array2<F>,
    labels: &[usize],
    rho: f64,
    rho_false: f64,
    scale: f64,
) -> (f64, Array2<F>) {
    let batch = labels.len();
    let (rows, z) = out_spikes.dim();
    let steps = rows / batch;
    let mut counts = vec![0f64; batch * z];
    for (r, row) in out_spikes.rows().into_iter().enumerate() {
        let b = r % batch;
        for (k, &s) in row.iter().enumerate() {
            counts[b * z + k] += s.to_f64().unwrap_or(f64::NAN);
        }
    }
    let mut loss = 0.0;
    let mut g_rate = vec![0f64; batch * z];
    for (b, &label) in labels.iter().enumerate() {
        for k in 0..z {
            let target = if k == label { rho } else { rho_false };
            let err = counts[b * z + k] / steps as f64 - target;
            loss += 0.5 * err * err;
            g_rate[b * z + k] = err / steps as f64;
        }
    }
    let mut grad = Array2::<F>::zeros((rows, z));
    for (r, mut row) in grad.rows_mut().into_iter().enumerate() {
        let b = r % batch;
        for (k, g) in row.iter_mut().enumerate() {
            *g = F::from(g_rate[b * z + k] * scale).unwrap_or(F::nan());
        }
    }
    (loss * scale, grad)
}

pub(crate) struct Unrolled<F> {
    pub inputs: Vec<Array2<F>>,
    pub traces: Vec<LayerTrace<F>>,
}

/// Forward through every layer; `inputs[l]` is the spike input of layer `l`.
pub(crate) fn unroll<F: Real>(
    weights: &[Array2<F>],
    dynamics: &[Dynamics<F>],
    x0: Array2<F>,
    batch: usize,
) -> Unrolled<F> {
    let mut inputs = Vec::with_capacity(weights.len());
    let mut traces: Vec<LayerTrace<F>> = Vec::with_capacity(weights.len());
    let mut x = x0;
    for (w, d) in weights.iter().zip(dynamics) {
        let trace = layer_forward(x.view(), w.view(), batch, d);
        inputs.push(x);
        x = trace.spikes.clone();
        traces.push(trace);
    }
    Unrolled { inputs, traces }
}

/// Loss and weight gradients for one batch.
pub(crate) fn loss_and_grad<F: Real>(
    weights: &[Array2<F>],
    dynamics: &[Dynamics<F>],
    x0: Array2<F>,
    labels: &[usize],
    rho: f64,
    rho_false: f64,
    scale: f64,
) -> (f64, Vec<Array2<F>>) {
    let batch = labels.len();
    let un = unroll(weights, dynamics, x0, batch);
    let last = un.traces.last().expect("at least one layer");
    let (loss, mut grad) = rate_loss(&last.spikes, labels, rho, rho_false, scale);
    let mut grads = vec![Array2::<F>::zeros((0, 0)); weights.len()];
    for l in (0..weights.len()).rev() {
        let (gw, gx) = layer_backward(
            &grad,
            &un.traces[l],
            un.inputs[l].view(),
            weights[l].view(),
            batch,
            &dynamics[l],
            l > 0,
        );
        grads[l] = gw;
        if let Some(gx) = gx {
            grad = gx;
        }
    }
    (loss, grads)
}
