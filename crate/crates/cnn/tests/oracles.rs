use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use satneuro_cnn::{Activation, Cnn, CnnSpec, LayerParams, LayerSpec, Loss};

fn conv_pool_dense(filters: usize, classes: usize) -> CnnSpec {
    CnnSpec {
        layers: vec![
            LayerSpec::Conv2d { filters, kernel: 3, activation: Activation::Relu },
            LayerSpec::MaxPool { size: 2 },
            LayerSpec::Flatten,
            LayerSpec::Dense { units: classes, activation: Activation::Linear },
        ],
    }
}

fn randomize(net: &mut Cnn<f64>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in net.params_mut() {
        match p {
            LayerParams::Conv { w, b } => w.iter_mut().chain(b.iter_mut()).for_each(|v| *v = rng.random_range(-1.0..1.0)),
            LayerParams::Dense { w, b } => w.iter_mut().chain(b.iter_mut()).for_each(|v| *v = rng.random_range(-1.0..1.0)),
            LayerParams::None => {}
        }
    }
}

/// Direct nested-loop evaluation of conv(relu) -> pool -> dense -> softmax.
fn naive(net: &Cnn<f64>, img: &[Vec<f64>]) -> Vec<f64> {
    let (LayerParams::Conv { w: cw, b: cb }, LayerParams::Dense { w: dw, b: db }) = (&net.params()[0], &net.params()[3]) else {
        panic!("unexpected layout")
    };
    let (h, wd) = (img.len(), img[0].len());
    let filters = cb.len();
    let (oh, ow) = (h - 2, wd - 2);
    let mut maps = vec![vec![vec![0.0; ow]; oh]; filters];
    for f in 0..filters {
        for i in 0..oh {
            for j in 0..ow {
                let mut s = cb[f];
                for di in 0..3 {
                    for dj in 0..3 {
                        s += cw[f * 9 + di * 3 + dj] * img[i + di][j + dj];
                    }
                }
                maps[f][i][j] = f64::max(s, 0.0);
            }
        }
    }
    let mut flat = Vec::new();
    for map in &maps {
        for i in 0..oh / 2 {
            for j in 0..ow / 2 {
                let m = [map[2 * i][2 * j], map[2 * i][2 * j + 1], map[2 * i + 1][2 * j], map[2 * i + 1][2 * j + 1]];
                flat.push(m.iter().copied().fold(f64::NEG_INFINITY, f64::max));
            }
        }
    }
    let logits: Vec<f64> = (0..db.len()).map(|k| db[k] + (0..flat.len()).map(|i| dw[[k, i]] * flat[i]).sum::<f64>()).collect();
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

#[test]
fn forward_matches_direct_convolution() {
    let mut net = Cnn::<f64>::new(conv_pool_dense(3, 4), 8, 8, 0).unwrap();
    randomize(&mut net, 11);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let img: Vec<Vec<f64>> = (0..8).map(|_| (0..8).map(|_| rng.random()).collect()).collect();
    let x = Array2::from_shape_fn((1, 64), |(_, p)| img[p / 8][p % 8]);
    let got = net.forward(&x).unwrap();
    for (k, want) in naive(&net, &img).iter().enumerate() {
        assert!((got[[0, k]] - want).abs() < 1e-12, "class {k}: {} vs {want}", got[[0, k]]);
    }
}

/// Fraction of parameters whose analytic gradient is within `tol` relative
/// error of a central difference.
fn gradient_agreement(spec: CnnSpec, h: usize, w: usize, loss: Loss, seed: u64) -> f64 {
    let mut net = Cnn::<f64>::new(spec, h, w, seed).unwrap();
    randomize(&mut net, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    let x = Array2::from_shape_simple_fn((3, h * w), || rng.random::<f64>());
    let labels = [0, 1, 1];
    let (_, grads) = net.loss_and_grad(&x, &labels, loss, false).unwrap();
    let eps = 1e-6;
    let eval = |n: &Cnn<f64>| n.loss_and_grad(&x, &labels, loss, false).unwrap().0;
    let (mut ok, mut total) = (0usize, 0usize);
    for l in 0..net.params().len() {
        let count = match &net.params()[l] {
            LayerParams::Conv { w, b } => w.len() + b.len(),
            LayerParams::Dense { w, b } => w.len() + b.len(),
            LayerParams::None => 0,
        };
        for i in 0..count {
            let nudge = |n: &mut Cnn<f64>, d: f64| match &mut n.params_mut()[l] {
                LayerParams::Conv { w, b } => *w.iter_mut().chain(b.iter_mut()).nth(i).unwrap() += d,
                LayerParams::Dense { w, b } => *w.iter_mut().chain(b.iter_mut()).nth(i).unwrap() += d,
                LayerParams::None => {}
            };
            let mut plus = net.clone();
            nudge(&mut plus, eps);
            let mut minus = net.clone();
            nudge(&mut minus, -eps);
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * eps);
            let analytic = match &grads[l] {
                LayerParams::Conv { w, b } => *w.iter().chain(b.iter()).nth(i).unwrap(),
                LayerParams::Dense { w, b } => *w.iter().chain(b.iter()).nth(i).unwrap(),
                LayerParams::None => unreachable!(),
            };
            let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-7);
            total += 1;
            ok += usize::from(rel <= 1e-3);
        }
    }
    ok as f64 / total as f64
}

#[test]
fn gradients_match_finite_differences_on_tiny_net() {
    let tiny = CnnSpec {
        layers: vec![
            LayerSpec::Conv2d { filters: 1, kernel: 3, activation: Activation::Relu },
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 2, activation: Activation::Linear },
        ],
    };
    for loss in [Loss::CrossEntropy, Loss::Mse] {
        for seed in 0..3 {
            let frac = gradient_agreement(tiny.clone(), 4, 4, loss, seed);
            assert!(frac >= 0.95, "{loss:?} seed {seed}: {frac}");
        }
    }
}

#[test]
fn gradients_match_through_pooling_and_depth() {
    let spec = CnnSpec {
        layers: vec![
            LayerSpec::Conv2d { filters: 2, kernel: 3, activation: Activation::Relu },
            LayerSpec::MaxPool { size: 2 },
            LayerSpec::Conv2d { filters: 2, kernel: 2, activation: Activation::Relu },
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 5, activation: Activation::Relu },
            LayerSpec::Dense { units: 3, activation: Activation::Linear },
        ],
    };
    let frac = gradient_agreement(spec, 9, 8, Loss::CrossEntropy, 4);
    assert!(frac >= 0.95, "{frac}");
}

/// Per-layer recount of multiply-accumulates for the reference network.
#[test]
fn mac_count_matches_layer_table() {
    // 120 x 213 input (ds = 3), 6 classes
    let table: [u64; 5] = [
        118 * 211 * 8 * 9,     // conv 8@3x3 on 1 channel
        57 * 103 * 4 * 8 * 9,  // conv 4@3x3 on 8 channels (after pool 59 x 105)
        (28 * 51 * 4) * 512,   // dense 5712 -> 512
        512 * 256,             // dense 512 -> 256
        256 * 6,               // dense 256 -> 6
    ];
    assert_eq!(table.iter().sum::<u64>(), 6_540_656);
    assert_eq!(CnnSpec::reference(6).mac_count(120, 213).unwrap(), 6_540_656);
    // 10 x 17 input (ds = 36): conv 8x15, pool 4x7, conv 2x5, pool 1x2
    let small: u64 = 8 * 15 * 8 * 9 + 2 * 5 * 4 * 8 * 9 + 8 * 512 + 512 * 256 + 256 * 6;
    assert_eq!(CnnSpec::reference(6).mac_count(10, 17).unwrap(), small);
}

#[test]
fn param_count_reference_input() {
    let expected = 8 * 10 + 4 * (8 * 9 + 1) + 5713 * 512 + 513 * 256 + 257 * 6;
    assert_eq!(expected, 3_058_298);
    assert_eq!(CnnSpec::reference(6).param_count(120, 213).unwrap(), expected);
    let net = Cnn::<f32>::new(CnnSpec::reference(6), 120, 213, 0).unwrap();
    assert_eq!(net.num_params(), expected);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn softmax_rows_normalized(seed in 0u64..10_000, scale in 0.1f64..50.0) {
        let mut net = Cnn::<f64>::new(conv_pool_dense(2, 5), 6, 7, seed).unwrap();
        randomize(&mut net, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_simple_fn((4, 42), || rng.random::<f64>() * scale);
        let p = net.forward(&x).unwrap();
        for row in p.rows() {
            prop_assert!(row.iter().all(|&v| v >= 0.0));
            prop_assert!((row.sum() - 1.0).abs() < 1e-6);
        }
    }
}
