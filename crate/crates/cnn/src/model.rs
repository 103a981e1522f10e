//! Parameters, batched forward pass and backpropagation. Activations are
//! `batch x features` matrices; feature maps are flattened channel-major.

use ndarray::{Array1, Array2, Axis, LinalgScalar};
use num_traits::Float;
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::spec::{Activation, CnnSpec, LayerSpec, Shape};
use crate::{Error, Result};

pub trait Real: Float + LinalgScalar + Send + Sync + std::fmt::Debug + 'static {}

impl<T: Float + LinalgScalar + Send + Sync + std::fmt::Debug + 'static> Real for T {}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams<F> {
    /// `w` is `filters x channels x k x k`, row-major.
    Conv { w: Vec<F>, b: Vec<F> },
    /// `w` is `out x in`.
    Dense { w: Array2<F>, b: Array1<F> },
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cnn<F> {
    spec: CnnSpec,
    input: (usize, usize),
    shapes: Vec<Shape>,
    params: Vec<LayerParams<F>>,
}

impl<F: Real> Cnn<F> {
    /// Glorot-uniform kernels and zero biases, drawn layer by layer.
    pub fn new(spec: CnnSpec, height: usize, width: usize, seed: u64) -> Result<Self> {
        let shapes = spec.shapes(height, width)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut glorot = |n: usize, fan_in: usize, fan_out: usize| -> Vec<F> {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite bound");
            (0..n).map(|_| F::from(dist.sample(&mut rng)).expect("finite")).collect()
        };
        let params = spec
            .layers
            .iter()
            .zip(&shapes)
            .map(|(layer, input)| match (*layer, *input) {
                (LayerSpec::Conv2d { filters, kernel, .. }, Shape::Map { channels, .. }) => {
                    let kk = kernel * kernel;
                    LayerParams::Conv {
                        w: glorot(filters * channels * kk, channels * kk, filters * kk),
                        b: vec![F::zero(); filters],
                    }
                }
                (LayerSpec::Dense { units, .. }, input) => {
                    let n = input.len();
                    let w = Array2::from_shape_vec((units, n), glorot(units * n, n, units)).expect("sized");
                    LayerParams::Dense { w, b: Array1::zeros(units) }
                }
                _ => LayerParams::None,
            })
            .collect();
        Ok(Self { spec, input: (height, width), shapes, params })
    }

    pub fn from_params(spec: CnnSpec, height: usize, width: usize, params: Vec<LayerParams<F>>) -> Result<Self> {
        let template = Self::new(spec, height, width, 0)?;
        if params.len() != template.params.len() {
            return Err(Error::Shape { expected: template.params.len(), got: params.len() });
        }
        for (p, t) in params.iter().zip(&template.params) {
            let ok = match (p, t) {
                (LayerParams::Conv { w, b }, LayerParams::Conv { w: tw, b: tb }) => {
                    w.len() == tw.len() && b.len() == tb.len()
                }
                (LayerParams::Dense { w, b }, LayerParams::Dense { w: tw, b: tb }) => {
                    w.dim() == tw.dim() && b.len() == tb.len()
                }
                (LayerParams::None, LayerParams::None) => true,
                _ => false,
            };
            if !ok {
                return Err(Error::Spec("parameter shapes do not match the layer layout".into()));
            }
        }
        Ok(Self { params, ..template })
    }

    pub fn spec(&self) -> &CnnSpec {
        &self.spec
    }

    pub fn input_shape(&self) -> (usize, usize) {
        self.input
    }

    pub fn params(&self) -> &[LayerParams<F>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [LayerParams<F>] {
        &mut self.params
    }

    pub fn classes(&self) -> usize {
        self.spec.classes()
    }

    pub fn num_params(&self) -> usize {
        self.params
            .iter()
            .map(|p| match p {
                LayerParams::Conv { w, b } => w.len() + b.len(),
                LayerParams::Dense { w, b } => w.len() + b.len(),
                LayerParams::None => 0,
            })
            .sum()
    }

    fn check_input(&self, x: &Array2<F>) -> Result<()> {
        let n = self.input.0 * self.input.1;
        if x.ncols() != n {
            return Err(Error::Shape { expected: n, got: x.ncols() });
        }
        Ok(())
    }

    /// Class probabilities, one row per input row.
    pub fn forward(&self, x: &Array2<F>) -> Result<Array2<F>> {
        self.check_input(x)?;
        let trace = self.run(x.clone(), false);
        Ok(softmax(trace.acts.last().expect("output")))
    }

    fn run(&self, x: Array2<F>, parallel: bool) -> Trace<F> {
        let mut acts = vec![x];
        let mut argmax = Vec::with_capacity(self.params.len());
        for (l, layer) in self.spec.layers.iter().enumerate() {
            let input = &acts[l];
            let (inp, out) = (self.shapes[l], self.shapes[l + 1]);
            let (y, idx) = match (*layer, &self.params[l]) {
                (LayerSpec::Conv2d { kernel, activation, .. }, LayerParams::Conv { w, b }) => {
                    let mut y = Array2::<F>::zeros((input.nrows(), out.len()));
                    let f = |(xr, mut yr): (ndarray::ArrayView1<F>, ndarray::ArrayViewMut1<F>)| {
                        let yr = yr.as_slice_mut().expect("contiguous");
                        conv_forward(xr.as_slice().expect("contiguous"), yr, w, b, inp, out, kernel);
                        activate(yr, activation);
                    };
                    let rows = input.rows().into_iter().zip(y.rows_mut());
                    if parallel {
                        rows.collect::<Vec<_>>().into_par_iter().for_each(f);
                    } else {
                        rows.for_each(f);
                    }
                    (y, None)
                }
                (LayerSpec::MaxPool { size }, _) => {
                    let (y, idx) = pool_forward(input, inp, out, size);
                    (y, Some(idx))
                }
                (LayerSpec::Flatten, _) => (input.clone(), None),
                (LayerSpec::Dense { activation, .. }, LayerParams::Dense { w, b }) => {
                    let mut y = input.dot(&w.t()) + b;
                    activate(y.as_slice_mut().expect("standard layout"), activation);
                    (y, None)
                }
                _ => unreachable!("params built from spec"),
            };
            acts.push(y);
            argmax.push(idx);
        }
        Trace { acts, argmax }
    }

    /// Mean loss over the rows of `x` and the gradient of every parameter.
    pub fn loss_and_grad(
        &self,
        x: &Array2<F>,
        labels: &[usize],
        loss: Loss,
        parallel: bool,
    ) -> Result<(f64, Vec<LayerParams<F>>)> {
        self.check_input(x)?;
        if labels.len() != x.nrows() {
            return Err(Error::Shape { expected: x.nrows(), got: labels.len() });
        }
        let z = self.classes();
        if let Some(&bad) = labels.iter().find(|&&l| l >= z) {
            return Err(Error::Config(format!("label {bad} >= {z} classes")));
        }
        let trace = self.run(x.clone(), parallel);
        let probs = softmax(trace.acts.last().expect("output"));
        let (value, mut g) = loss.value_and_logit_grad(&probs, labels);
        let mut grads = vec![LayerParams::None; self.params.len()];
        for l in (0..self.spec.layers.len()).rev() {
            let input = &trace.acts[l];
            let output = &trace.acts[l + 1];
            let (inp, out) = (self.shapes[l], self.shapes[l + 1]);
            match (self.spec.layers[l], &self.params[l]) {
                (LayerSpec::Conv2d { kernel, activation, .. }, LayerParams::Conv { w, b }) => {
                    gate(&mut g, output, activation);
                    let job = |(xr, gr): (ndarray::ArrayView1<F>, ndarray::ArrayView1<F>)| {
                        let mut gw = vec![F::zero(); w.len()];
                        let mut gb = vec![F::zero(); b.len()];
                        let mut gx = vec![F::zero(); inp.len()];
                        conv_backward(
                            xr.as_slice().expect("contiguous"),
                            gr.as_slice().expect("contiguous"),
                            w,
                            inp,
                            out,
                            kernel,
                            &mut gw,
                            &mut gb,
                            &mut gx,
                        );
                        (gw, gb, gx)
                    };
                    let rows = input.rows().into_iter().zip(g.rows());
                    let parts: Vec<_> = if parallel {
                        rows.collect::<Vec<_>>().into_par_iter().map(job).collect()
                    } else {
                        rows.map(job).collect()
                    };
                    let mut gw = vec![F::zero(); w.len()];
                    let mut gb = vec![F::zero(); b.len()];
                    let mut gx = Array2::<F>::zeros(input.raw_dim());
                    for (mut row, (pw, pb, px)) in gx.rows_mut().into_iter().zip(parts) {
                        add_into(&mut gw, &pw);
                        add_into(&mut gb, &pb);
                        row.as_slice_mut().expect("contiguous").copy_from_slice(&px);
                    }
                    grads[l] = LayerParams::Conv { w: gw, b: gb };
                    g = gx;
                }
                (LayerSpec::MaxPool { .. }, _) => {
                    let idx = trace.argmax[l].as_ref().expect("pool indices");
                    let mut gx = Array2::<F>::zeros(input.raw_dim());
                    for ((mut gxr, gr), ir) in gx.rows_mut().into_iter().zip(g.rows()).zip(idx.chunks(out.len())) {
                        for (&gv, &i) in gr.iter().zip(ir) {
                            gxr[i as usize] = gxr[i as usize] + gv;
                        }
                    }
                    g = gx;
                }
                (LayerSpec::Flatten, _) => {}
                (LayerSpec::Dense { activation, .. }, LayerParams::Dense { w, .. }) => {
                    gate(&mut g, output, activation);
                    let gw = g.t().dot(input);
                    let gb = g.sum_axis(Axis(0));
                    grads[l] = LayerParams::Dense { w: gw, b: gb };
                    if l > 0 {
                        g = g.dot(w);
                    }
                }
                _ => unreachable!("params built from spec"),
            }
        }
        Ok((value, grads))
    }
}

struct Trace<F> {
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`
    /// (post-activation; logits for the last layer).
    acts: Vec<Array2<F>>,
    argmax: Vec<Option<Vec<u32>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    #[default]
    CrossEntropy,
    /// Mean over classes of squared probability errors.
    Mse,
}

impl Loss {
    fn value_and_logit_grad<F: Real>(&self, probs: &Array2<F>, labels: &[usize]) -> (f64, Array2<F>) {
        let (batch, z) = probs.dim();
        let inv_b = F::from(1.0 / batch as f64).expect("finite");
        let mut g = Array2::<F>::zeros((batch, z));
        let mut total = 0.0;
        for (b, (&label, p)) in labels.iter().zip(probs.rows()).enumerate() {
            match self {
                Loss::CrossEntropy => {
                    let pl = p[label].to_f64().expect("finite");
                    total -= pl.max(f64::MIN_POSITIVE).ln();
                    for k in 0..z {
                        let y = if k == label { F::one() } else { F::zero() };
                        g[[b, k]] = (p[k] - y) * inv_b;
                    }
                }
                Loss::Mse => {
                    let zf = F::from(z as f64).expect("finite");
                    let two = F::one() + F::one();
                    let dp: Vec<F> = (0..z)
                        .map(|k| {
                            let y = if k == label { F::one() } else { F::zero() };
                            let e = p[k] - y;
                            total += (e * e).to_f64().expect("finite") / z as f64;
                            two * e / zf
                        })
                        .collect();
                    let dot = (0..z).fold(F::zero(), |a, k| a + p[k] * dp[k]);
                    for k in 0..z {
                        g[[b, k]] = p[k] * (dp[k] - dot) * inv_b;
                    }
                }
            }
        }
        (total / batch as f64, g)
    }
}

pub fn softmax<F: Real>(logits: &Array2<F>) -> Array2<F> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let m = row.iter().fold(F::neg_infinity(), |a, &v| a.max(v));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    out
}

fn activate<F: Real>(y: &mut [F], activation: Activation) {
    if activation == Activation::Relu {
        for v in y {
            *v = v.max(F::zero());
        }
    }
}

/// Multiplies the gradient by the activation derivative, read off the
/// post-activation output.
fn gate<F: Real>(g: &mut Array2<F>, output: &Array2<F>, activation: Activation) {
    if activation == Activation::Relu {
        ndarray::Zip::from(g).and(output).for_each(|g, &y| {
            if y <= F::zero() {
                *g = F::zero();
            }
        });
    }
}

fn add_into<F: Real>(acc: &mut [F], v: &[F]) {
    for (a, &b) in acc.iter_mut().zip(v) {
        *a = *a + b;
    }
}

fn map_dims(s: Shape) -> (usize, usize, usize) {
    match s {
        Shape::Map { channels, height, width } => (channels, height, width),
        Shape::Flat(_) => unreachable!("convolution needs a feature map"),
    }
}

fn conv_forward<F: Real>(x: &[F], y: &mut [F], w: &[F], b: &[F], inp: Shape, out: Shape, k: usize) {
    let (c_in, ih, iw) = map_dims(inp);
    let (c_out, oh, ow) = map_dims(out);
    for f in 0..c_out {
        let yf = &mut y[f * oh * ow..(f + 1) * oh * ow];
        yf.fill(b[f]);
        for c in 0..c_in {
            let xc = &x[c * ih * iw..(c + 1) * ih * iw];
            for di in 0..k {
                for dj in 0..k {
                    let wv = w[((f * c_in + c) * k + di) * k + dj];
                    for i in 0..oh {
                        let src = &xc[(i + di) * iw + dj..(i + di) * iw + dj + ow];
                        for (o, &s) in yf[i * ow..(i + 1) * ow].iter_mut().zip(src) {
                            *o = *o + wv * s;
                        }
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_backward<F: Real>(
    x: &[F],
    gy: &[F],
    w: &[F],
    inp: Shape,
    out: Shape,
    k: usize,
    gw: &mut [F],
    gb: &mut [F],
    gx: &mut [F],
) {
    let (c_in, ih, iw) = map_dims(inp);
    let (c_out, oh, ow) = map_dims(out);
    for f in 0..c_out {
        let gf = &gy[f * oh * ow..(f + 1) * oh * ow];
        gb[f] = gf.iter().fold(gb[f], |a, &v| a + v);
        for c in 0..c_in {
            let xc = &x[c * ih * iw..(c + 1) * ih * iw];
            let gxc = &mut gx[c * ih * iw..(c + 1) * ih * iw];
            for di in 0..k {
                for dj in 0..k {
                    let wi = ((f * c_in + c) * k + di) * k + dj;
                    let wv = w[wi];
                    let mut acc = F::zero();
                    for i in 0..oh {
                        let g_row = &gf[i * ow..(i + 1) * ow];
                        let off = (i + di) * iw + dj;
                        for (&g, &s) in g_row.iter().zip(&xc[off..off + ow]) {
                            acc = acc + g * s;
                        }
                        for (d, &g) in gxc[off..off + ow].iter_mut().zip(g_row) {
                            *d = *d + wv * g;
                        }
                    }
                    gw[wi] = gw[wi] + acc;
                }
            }
        }
    }
}

/// Pooled maps and, per output cell, the flat input index of its maximum
/// (first maximum in row-major window order).
fn pool_forward<F: Real>(x: &Array2<F>, inp: Shape, out: Shape, size: usize) -> (Array2<F>, Vec<u32>) {
    let (c_in, ih, iw) = map_dims(inp);
    let (_, oh, ow) = map_dims(out);
    let mut y = Array2::<F>::zeros((x.nrows(), out.len()));
    let mut idx = vec![0u32; x.nrows() * out.len()];
    for (b, (xr, mut yr)) in x.rows().into_iter().zip(y.rows_mut()).enumerate() {
        let ib = &mut idx[b * out.len()..(b + 1) * out.len()];
        for c in 0..c_in {
            for i in 0..oh {
                for j in 0..ow {
                    let mut best = c * ih * iw + i * size * iw + j * size;
                    for di in 0..size {
                        for dj in 0..size {
                            let p = c * ih * iw + (i * size + di) * iw + j * size + dj;
                            if xr[p] > xr[best] {
                                best = p;
                            }
                        }
                    }
                    let o = (c * oh + i) * ow + j;
                    yr[o] = xr[best];
                    ib[o] = best as u32;
                }
            }
        }
    }
    (y, idx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> CnnSpec {
        CnnSpec {
            layers: vec![
                LayerSpec::Conv2d { filters: 2, kernel: 3, activation: Activation::Relu },
                LayerSpec::MaxPool { size: 2 },
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 3, activation: Activation::Linear },
            ],
        }
    }

    #[test]
    fn zero_weights_give_uniform_probabilities() {
        let mut net = Cnn::<f64>::new(tiny(), 6, 6, 0).unwrap();
        for p in net.params_mut() {
            match p {
                LayerParams::Conv { w, b } => {
                    w.fill(0.0);
                    b.fill(0.0);
                }
                LayerParams::Dense { w, b } => {
                    w.fill(0.0);
                    b.fill(0.0);
                }
                LayerParams::None => {}
            }
        }
        let p = net.forward(&Array2::from_elem((2, 36), 0.7)).unwrap();
        assert!(p.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn pool_keeps_first_maximum_and_truncates() {
        let inp = Shape::Map { channels: 1, height: 3, width: 3 };
        let out = Shape::Map { channels: 1, height: 1, width: 1 };
        let x = Array2::from_shape_vec((1, 9), vec![1.0, 5.0, 9.0, 5.0, 2.0, 9.0, 9.0, 9.0, 9.0]).unwrap();
        let (y, idx) = pool_forward(&x, inp, out, 2);
        assert_eq!(y[[0, 0]], 5.0);
        assert_eq!(idx, vec![1]);
    }

    #[test]
    fn wrong_input_width_is_an_error() {
        let net = Cnn::<f32>::new(tiny(), 6, 6, 0).unwrap();
        assert!(net.forward(&Array2::zeros((1, 35))).is_err());
        assert!(net.loss_and_grad(&Array2::zeros((1, 36)), &[3], Loss::CrossEntropy, false).is_err());
    }

    #[test]
    fn parallel_gradients_are_identical() {
        let net = Cnn::<f32>::new(tiny(), 7, 6, 3).unwrap();
        let x = Array2::from_shape_fn((5, 42), |(i, j)| ((i * 7 + j * 3) % 11) as f32 / 11.0);
        let labels = [0, 1, 2, 1, 0];
        let a = net.loss_and_grad(&x, &labels, Loss::CrossEntropy, false).unwrap();
        let b = net.loss_and_grad(&x, &labels, Loss::CrossEntropy, true).unwrap();
        assert_eq!(a, b);
    }
}
