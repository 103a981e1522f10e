use proptest::prelude::*;
use satneuro_core::configspace::{Constraints, FeasibleSpace};
use satneuro_core::encoding::{preprocess_values, rate_encode, tem_encode, tem_train, PreprocessParams, TemParams};
use satneuro_core::linkbudget::*;
use satneuro_core::oracle::{build_dataset, solve_exhaustive, DatasetSpec, ObjectiveWeights};
use satneuro_core::traffic::{BeamAssignment, BoundingBox, DemandVector, GridSpec, TrafficGrid};

fn small_grid() -> GridSpec {
    GridSpec { rows: 12, cols: 20, bbox: BoundingBox { lat_min: 35.0, lat_max: 60.0, lon_min: -10.0, lon_max: 20.0 } }
}

fn beam_strategy() -> impl Strategy<Value = Vec<Beam>> {
    prop::collection::vec((35.0f64..60.0, -10.0f64..20.0), 2..6).prop_map(|c| {
        c.into_iter().enumerate().map(|(i, (lat, lon))| Beam::new(i as u32, lat, lon).unwrap()).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn demand_is_conserved_and_nonnegative(
        values in prop::collection::vec(0f32..50.0, 240),
        beams in beam_strategy(),
    ) {
        let grid = TrafficGrid::new(small_grid(), 0, values).unwrap();
        let d = BeamAssignment::new(&small_grid(), &beams).unwrap().aggregate(&grid).unwrap();
        prop_assert_eq!(d.len(), beams.len());
        prop_assert!(d.as_slice().iter().all(|&r| r >= 0.0));
        let total = grid.total_mbps() * 1e6;
        prop_assert!((d.total_bps() - total).abs() <= 1e-6 * total.max(1.0));
    }

    #[test]
    fn beam_permutation_permutes_demand(
        values in prop::collection::vec(0f32..50.0, 240),
        beams in beam_strategy(),
        rot in 0usize..6,
    ) {
        let grid = TrafficGrid::new(small_grid(), 0, values).unwrap();
        let d = BeamAssignment::new(&small_grid(), &beams).unwrap().aggregate(&grid).unwrap();
        let mut permuted = beams.clone();
        permuted.rotate_left(rot % beams.len());
        let dp = BeamAssignment::new(&small_grid(), &permuted).unwrap().aggregate(&grid).unwrap();
        for (k, b) in permuted.iter().enumerate() {
            prop_assert_eq!(dp.0[k], d.0[b.id as usize]);
        }
    }

    #[test]
    fn cinr_is_linear_in_power_without_interference(p in -10.0f64..30.0, dp in 0.0f64..10.0, w in 50e6f64..1e9) {
        let sys = SystemParams::default();
        let b = reference_beams()[0];
        let g0 = cinr(p, w, &b, &sys, 0.0);
        let g1 = cinr(p + dp, w, &b, &sys, 0.0);
        prop_assert!((g1 - g0 - dp).abs() < 1e-9);
    }

    #[test]
    fn capacity_is_monotone(g0 in -20.0f64..30.0, dg in 0.0f64..10.0, w in 1e6f64..1e9, dw in 0.0f64..1e9) {
        let mc = ModCodTable::reference();
        let k0 = spectral_efficiency(g0, &mc);
        let k1 = spectral_efficiency(g0 + dg, &mc);
        prop_assert!(k1 >= k0);
        prop_assert!(offered_capacity(w + dw, k1) >= offered_capacity(w, k0));
    }

    #[test]
    fn analytic_tables_are_monotone_and_eirp_consistent(
        powers in prop::collection::btree_set(0i32..30, 1..4),
        bws in prop::collection::btree_set(1i32..20, 1..4),
        interference in 0.0f64..1e-12,
    ) {
        let powers: Vec<f64> = powers.into_iter().map(f64::from).collect();
        let bws: Vec<f64> = bws.into_iter().map(|b| f64::from(b) * 50e6).collect();
        let sys = SystemParams::default();
        let b = reference_beams()[0];
        let mc = ModCodTable::reference();
        let link = AnalyticLink { sys: &sys, beam: &b, modcod: &mc, interference_w: interference };
        let t = build_capacity_table(&powers, &bws, CapacityMode::Analytic(link)).unwrap();
        // bandwidth monotonicity needs the step table to absorb the 3 dB loss
        // of a doubled carrier, which coarse steps do not guarantee
        for a in t.rows() {
            for b in t.rows() {
                if a.bandwidth_hz == b.bandwidth_hz && a.power_dbw <= b.power_dbw {
                    prop_assert!(a.capacity_bps <= b.capacity_bps);
                }
            }
        }
        for r in t.rows() {
            prop_assert!((r.eirp_dbw - r.power_dbw - sys.sat_peak_gain_dbi).abs() < 1e-9);
            prop_assert!((r.capacity_bps - r.bandwidth_hz * r.efficiency).abs() <= 1e-6 * r.capacity_bps.max(1.0));
        }
    }

    #[test]
    fn tem_count_is_monotone_in_input(a in 0.0f64..1.0, b in 0.0f64..1.0, steps in 1usize..64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let count = |x| tem_train(x, steps, 0.25, 0.25, 1.0).iter().map(|&s| usize::from(s)).sum::<usize>();
        prop_assert!(count(lo) <= count(hi));
    }

    #[test]
    fn tem_is_deterministic_and_binary(x in prop::collection::vec(0f32..=1.0, 1..20), reps in 1usize..4) {
        let p = TemParams { replicas: reps, ..TemParams::default() };
        let r1 = tem_encode(&x, 16, &p).unwrap();
        let r2 = tem_encode(&x, 16, &p).unwrap();
        prop_assert_eq!(r1.neurons(), x.len() * reps);
        prop_assert!(r1.bits().iter().all(|&s| s <= 1));
        prop_assert_eq!(r1, r2);
    }

    #[test]
    fn preprocessed_features_lie_in_unit_interval(
        values in prop::collection::vec(0f32..1e4, 96),
        ds in 1usize..5,
    ) {
        let x = preprocess_values(&values, 8, 12, &PreprocessParams { percentile: 99.0, ds }).unwrap();
        prop_assert_eq!(x.len(), (8 / ds) * (12 / ds));
        prop_assert!(x.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn argmin_is_invariant_to_weight_scaling(
        demand in prop::collection::vec(100e6f64..1200e6, 4),
        factor in 1e-3f64..1e3,
    ) {
        let t = CapacityTable::reference();
        let space = FeasibleSpace::build(4, &t, &Constraints::new(70.0, f64::INFINITY));
        let w = ObjectiveWeights::default();
        let d = DemandVector(demand);
        let a = solve_exhaustive(&d, &space, &w).unwrap();
        let b = solve_exhaustive(&d, &space, &w.scaled(factor)).unwrap();
        prop_assert_eq!(a.config, b.config);
    }
}

#[test]
fn relabeled_scores_never_beat_the_full_optimum() {
    let spec = DatasetSpec { min_support: 0.05, ..DatasetSpec::reference(60, 3) };
    let ds = build_dataset(&spec).unwrap();
    assert!(ds.samples.iter().any(|s| s.relabeled));
    for s in &ds.samples {
        assert!(s.score >= s.full_score);
        if !s.relabeled {
            assert_eq!(s.score, s.full_score);
        }
        assert!(s.class_id < ds.num_classes());
    }
}

#[test]
fn rate_counts_stay_within_three_sigma() {
    // fixed seeds: a random search would eventually hit the 0.27% tail
    let (n, steps) = (200, 50);
    let trials = (n * steps) as f64;
    for (k, p) in [0.05f32, 0.2, 0.5, 0.77, 0.95].into_iter().enumerate() {
        for seed in 0..16u64 {
            let r = rate_encode(&vec![p; n], steps, seed * 31 + k as u64).unwrap();
            let mean = trials * f64::from(p);
            let sd = (trials * f64::from(p) * (1.0 - f64::from(p))).sqrt();
            assert!((r.total_spikes() as f64 - mean).abs() <= 3.0 * sd, "p={p} seed={seed}");
        }
    }
}
