use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use satneuro_core::encoding::{rate_encode, SpikeRaster};
use satneuro_snn::{loss_and_gradients, Mode, NeuronParams};

/// Fraction of parameters whose analytic gradient agrees with a central
/// difference within `tol` relative error.
fn agreement(sizes: &[usize], seed: u64, tol: f64) -> (f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<Array2<f64>> = sizes
        .windows(2)
        .map(|d| Array2::from_shape_simple_fn((d[1], d[0]), || rng.random_range(-1.5..1.5)))
        .collect();
    let neurons = vec![NeuronParams { surrogate_width: 0.5, ..NeuronParams::default() }; weights.len()];
    let rasters: Vec<SpikeRaster> = (0..3)
        .map(|k| rate_encode(&vec![0.6; sizes[0]], 6, seed * 10 + k).unwrap())
        .collect();
    let refs: Vec<&SpikeRaster> = rasters.iter().collect();
    let labels = [0, 1, 0];
    let loss = |w: &[Array2<f64>]| {
        loss_and_gradients(w, &neurons, &refs, &labels, 0.5, 0.01, Mode::Relaxed).unwrap().0
    };
    let (_, grads) = loss_and_gradients(&weights, &neurons, &refs, &labels, 0.5, 0.01, Mode::Relaxed).unwrap();
    let h = 1e-5;
    let (mut ok, mut total) = (0, 0);
    for l in 0..weights.len() {
        for idx in 0..weights[l].len() {
            let (r, c) = (idx / weights[l].ncols(), idx % weights[l].ncols());
            let mut wp = weights.clone();
            wp[l][[r, c]] += h;
            let mut wm = weights.clone();
            wm[l][[r, c]] -= h;
            let numeric = (loss(&wp) - loss(&wm)) / (2.0 * h);
            let analytic = grads[l][[r, c]];
            let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-8);
            total += 1;
            if rel <= tol {
                ok += 1;
            }
        }
    }
    (ok as f64 / total as f64, total)
}

#[test]
fn relaxed_gradients_match_finite_differences() {
    for seed in 0..3 {
        let (frac, n) = agreement(&[3, 4, 2], seed, 1e-3);
        assert!(frac >= 0.95, "seed {seed}: {frac} of {n} parameters agree");
    }
}

#[test]
fn relaxed_gradients_match_through_depth() {
    let (frac, n) = agreement(&[3, 4, 4, 4, 2], 7, 1e-3);
    assert!(frac >= 0.95, "{frac} of {n} parameters agree");
}
