use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use satneuro_core::configspace::*;
use satneuro_core::linkbudget::CapacityTable;
use satneuro_core::oracle::{objective, solve_exhaustive, ObjectiveWeights};
use satneuro_core::traffic::DemandVector;

/// Counts feasible configurations by enumerating how many beams take each
/// option (compositions of B into |table| parts) and weighting each count
/// vector by its multinomial coefficient.
fn count_by_compositions(num_beams: usize, powers_w: &[f64], bandwidths: &[f64], p_max: f64, w_max: f64) -> u64 {
    fn rec(
        k: usize,
        left: usize,
        counts: &mut Vec<usize>,
        powers: &[f64],
        bws: &[f64],
        p_max: f64,
        w_max: f64,
        fact: &[u64],
        total_beams: usize,
    ) -> u64 {
        if k == powers.len() - 1 {
            counts.push(left);
            let p: f64 = counts.iter().zip(powers).map(|(&c, &p)| c as f64 * p).sum();
            let w: f64 = counts.iter().zip(bws).map(|(&c, &w)| c as f64 * w).sum();
            let ways = if p <= p_max && w <= w_max {
                counts.iter().fold(fact[total_beams], |acc, &c| acc / fact[c])
            } else {
                0
            };
            counts.pop();
            return ways;
        }
        (0..=left)
            .map(|c| {
                counts.push(c);
                let r = rec(k + 1, left - c, counts, powers, bws, p_max, w_max, fact, total_beams);
                counts.pop();
                r
            })
            .sum()
    }
    let fact: Vec<u64> = (0..=num_beams as u64).scan(1u64, |f, i| {
        *f *= i.max(1);
        Some(*f)
    }).collect();
    rec(0, num_beams, &mut Vec::new(), powers_w, bandwidths, p_max, w_max, &fact, num_beams)
}

fn table_columns(t: &CapacityTable) -> (Vec<f64>, Vec<f64>) {
    (
        t.rows().iter().map(|r| 10f64.powf(r.power_dbw / 10.0)).collect(),
        t.rows().iter().map(|r| r.bandwidth_hz).collect(),
    )
}

#[test]
fn feasible_count_matches_composition_oracle() {
    let t = CapacityTable::reference();
    let (p, w) = table_columns(&t);
    let c = Constraints::reference(8, &t);
    let want = count_by_compositions(8, &p, &w, c.p_max_w, c.w_max_hz);
    assert_eq!(feasible_count(8, &t, &c), want);
    assert_eq!(want, 194_304);
    for (b, pm, wm) in [(3, 40.0, 1e9), (4, 60.0, 1.25e9), (5, 1e9, 1e18)] {
        let c = Constraints::new(pm, wm);
        assert_eq!(feasible_count(b, &t, &c), count_by_compositions(b, &p, &w, pm, wm), "B={b}");
    }
}

#[test]
fn unconstrained_space_is_full() {
    let t = CapacityTable::reference();
    assert_eq!(config_count(8, 6), Some(1_679_616));
    assert_eq!(enumerate_configs(8, &t).len(), 1_679_616);
    assert_eq!(feasible_count(4, &t, &Constraints::unconstrained()), 6u64.pow(4));
}

/// Independent brute force over three beams with its own arithmetic and the
/// documented tie order (score, total power, total bandwidth, index).
fn brute_force3(t: &CapacityTable, demand: [f64; 3], w: &ObjectiveWeights, p_max: f64) -> ([usize; 3], f64) {
    let rows = t.rows();
    let mut best: Option<([usize; 3], (f64, f64, f64))> = None;
    for a in 0..rows.len() {
        for b in 0..rows.len() {
            for c in 0..rows.len() {
                let opts = [a, b, c];
                let power: f64 = opts.iter().map(|&o| 10f64.powf(rows[o].power_dbw / 10.0)).sum();
                if power > p_max {
                    continue;
                }
                let bw: f64 = opts.iter().map(|&o| rows[o].bandwidth_hz).sum();
                let mismatch: f64 = opts.iter().zip(demand).map(|(&o, d)| (rows[o].capacity_bps - d).abs()).sum();
                let score = w.beta0 * mismatch + w.beta1 * power + w.beta2 * bw;
                let key = (score, power, bw);
                if best.as_ref().is_none_or(|(_, k)| key < *k) {
                    best = Some((opts, key));
                }
            }
        }
    }
    let (opts, key) = best.expect("nonempty");
    (opts, key.0)
}

#[test]
fn exhaustive_matches_brute_force_on_random_three_beam_instances() {
    let t = CapacityTable::reference();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..20 {
        let demand = [(); 3].map(|_| rng.random_range(200e6..1200e6));
        let w = ObjectiveWeights {
            beta0: 1e-6 * rng.random_range(0.5..2.0),
            beta1: rng.random_range(0.0..5.0),
            beta2: rng.random_range(0.0..1e-8),
        };
        let p_max = rng.random_range(30.0..80.0);
        let space = FeasibleSpace::build(3, &t, &Constraints::new(p_max, f64::INFINITY));
        let sol = solve_exhaustive(&DemandVector(demand.to_vec()), &space, &w).unwrap();
        let (opts, score) = brute_force3(&t, demand, &w, p_max);
        assert_eq!(sol.config.options(), opts.to_vec(), "case {case}");
        assert_eq!(sol.score, score, "case {case}");
        let via_objective = objective(&sol.config, &DemandVector(demand.to_vec()), &w).unwrap();
        assert_eq!(via_objective, sol.score);
    }
}
