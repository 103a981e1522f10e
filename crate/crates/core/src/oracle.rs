//! Allocation objective, exhaustive search over the feasible space, and the
//! labeled dataset built from it.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::configspace::{
    reduce_classes, ClassCatalog, Constraints, FeasibleSpace, PayloadConfig, DEFAULT_MIN_SUPPORT,
};
use crate::linkbudget::{validate_beams, Beam, CapacityTable};
use crate::traffic::{BeamAssignment, DemandVector, TrafficGenerator, TrafficGrid, TrafficModel};
use crate::util::{db_to_linear, sample_seed, sha256_hex, F32Hasher};
use crate::{Error, Result};

/// Weights of the three objective terms, in SI units (per bps, per W, per Hz).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveWeights {
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for ObjectiveWeights {
    /// 1 per Mbps of mismatch, 0.01 per W, 0.01 per 100 MHz.
    fn default() -> Self {
        Self { beta0: 1e-6, beta1: 1e-2, beta2: 1e-2 / 100e6 }
    }
}

impl ObjectiveWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta0 > 0.0 && self.beta1 >= 0.0 && self.beta2 >= 0.0) {
            return Err(Error::Config(format!(
                "objective weights need beta0 > 0 and beta1, beta2 >= 0, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { beta0: self.beta0 * factor, beta1: self.beta1 * factor, beta2: self.beta2 * factor }
    }
}

/// `beta0 * sum|C - R| + beta1 * sum P + beta2 * sum W`, power in watts.
/// Smaller is better.
pub fn objective(cfg: &PayloadConfig, demand: &DemandVector, w: &ObjectiveWeights) -> Result<f64> {
    if cfg.num_beams() != demand.len() {
        return Err(Error::DimensionMismatch { expected: cfg.num_beams(), got: demand.len() });
    }
    let mut mismatch = 0.0;
    let mut power = 0.0;
    let mut bandwidth = 0.0;
    for (b, &r) in cfg.beams().iter().zip(demand.as_slice()) {
        mismatch += (b.capacity_bps - r).abs();
        power += db_to_linear(b.power_dbw);
        bandwidth += b.bandwidth_hz;
    }
    Ok(w.beta0 * mismatch + w.beta1 * power + w.beta2 * bandwidth)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    /// Position of the winner in the searched space.
    pub index: usize,
    pub config: PayloadConfig,
    pub score: f64,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    score: f64,
    power: f64,
    bandwidth: f64,
    index: usize,
}

impl Candidate {
    /// Score, then total power, then total bandwidth, then enumeration order.
    fn better_than(&self, other: &Candidate) -> bool {
        self.score
            .total_cmp(&other.score)
            .then(self.power.total_cmp(&other.power))
            .then(self.bandwidth.total_cmp(&other.bandwidth))
            .then(self.index.cmp(&other.index))
            == Ordering::Less
    }
}

const SOLVE_CHUNK: usize = 8192;

/// Global minimizer of [`objective`] over `space`.
pub fn solve_exhaustive(
    demand: &DemandVector,
    space: &FeasibleSpace,
    w: &ObjectiveWeights,
) -> Result<Solution> {
    if space.is_empty() {
        return Err(Error::EmptySpace);
    }
    let b = space.num_beams();
    if demand.len() != b {
        return Err(Error::DimensionMismatch { expected: b, got: demand.len() });
    }
    let rows = space.table().rows();
    // mismatch[beam * n + option], evaluated exactly as in `objective`
    let n = rows.len();
    let mut mismatch = vec![0.0; b * n];
    for (beam, &r) in demand.as_slice().iter().enumerate() {
        for (o, row) in rows.iter().enumerate() {
            mismatch[beam * n + o] = (row.capacity_bps - r).abs();
        }
    }
    let power: Vec<f64> = rows.iter().map(|r| db_to_linear(r.power_dbw)).collect();
    let bandwidth: Vec<f64> = rows.iter().map(|r| r.bandwidth_hz).collect();

    let evaluate = |index: usize, opts: &[u8]| {
        let (mut m, mut p, mut bw) = (0.0, 0.0, 0.0);
        for (beam, &o) in opts.iter().enumerate() {
            let o = usize::from(o);
            m += mismatch[beam * n + o];
            p += power[o];
            bw += bandwidth[o];
        }
        Candidate { score: w.beta0 * m + w.beta1 * p + w.beta2 * bw, power: p, bandwidth: bw, index }
    };

    let n_chunks = space.len().div_ceil(SOLVE_CHUNK);
    let best = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * SOLVE_CHUNK;
            let hi = (lo + SOLVE_CHUNK).min(space.len());
            let mut best = evaluate(lo, space.options(lo));
            for i in lo + 1..hi {
                let cand = evaluate(i, space.options(i));
                if cand.better_than(&best) {
                    best = cand;
                }
            }
            best
        })
        .reduce_with(|a, b| if b.better_than(&a) { b } else { a })
        .expect("nonempty space");
    Ok(Solution { index: best.index, config: space.config(best.index), score: best.score })
}

/// How the per-sample traffic was produced and labeled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub model: TrafficModel,
    pub beams: Vec<Beam>,
    pub table: CapacityTable,
    pub constraints: Constraints,
    pub weights: ObjectiveWeights,
    pub min_support: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub train_fraction: f64,
}

impl DatasetSpec {
    /// Reference scenario: default traffic model, the eight reference beams,
    /// the shipped capacity table, 115 W and default weights.
    pub fn reference(n_samples: usize, seed: u64) -> Self {
        let beams = crate::linkbudget::reference_beams();
        let table = CapacityTable::reference();
        let constraints = Constraints::reference(beams.len(), &table);
        Self {
            model: TrafficModel::default(),
            beams,
            table,
            constraints,
            weights: ObjectiveWeights::default(),
            min_support: DEFAULT_MIN_SUPPORT,
            n_samples,
            seed,
            train_fraction: 0.8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        validate_beams(&self.beams)?;
        self.weights.validate()?;
        if self.n_samples < 10 {
            return Err(Error::Config(format!("need at least 10 samples, got {}", self.n_samples)));
        }
        if !(self.min_support >= 0.0 && self.min_support <= 1.0) {
            return Err(Error::Config(format!("min_support must be in [0, 1], got {}", self.min_support)));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!("train fraction must be in (0, 1), got {}", self.train_fraction)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: usize,
    pub hour: u8,
    /// Seed of the grid noise stream.
    pub seed: u64,
    pub demand: DemandVector,
    pub class_id: usize,
    /// Best objective over the full feasible space.
    pub full_score: f64,
    /// Objective of the assigned class.
    pub score: f64,
    /// Whether the full-space optimum was dropped from the catalog.
    pub relabeled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub spec: DatasetSpec,
    pub samples: Vec<Sample>,
    pub catalog: ClassCatalog,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    /// SHA-256 over the concatenated per-sample grid digests (hex), in
    /// sample order.
    pub feature_hash: String,
    /// Size of the pre-filtered search space.
    pub feasible_count: usize,
}

impl LabeledDataset {
    pub fn num_classes(&self) -> usize {
        self.catalog.len()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.class_id).collect()
    }

    /// Per-class sample counts after relabeling.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.catalog.len()];
        for s in &self.samples {
            counts[s.class_id] += 1;
        }
        counts
    }

    /// Regenerates the traffic grid of sample `i`.
    pub fn grid(&self, generator: &TrafficGenerator, i: usize) -> Result<TrafficGrid> {
        let s = &self.samples[i];
        generator.generate(s.hour, s.seed)
    }

    pub fn generator(&self) -> Result<TrafficGenerator> {
        TrafficGenerator::new(self.spec.model.clone())
    }
}

/// Draws the hour of sample `index` (uniform over 0..=23) from a stream
/// separate from the grid noise.
pub fn sample_hour(master_seed: u64, index: u64) -> u8 {
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(master_seed, index));
    rng.set_stream(1);
    rng.random_range(0..24u8)
}

/// Seeded 80/20 (or `train_fraction`) split; both halves sorted ascending.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    idx.shuffle(&mut rng);
    let n_train = (train_fraction * n as f64).round() as usize;
    let mut train = idx[..n_train].to_vec();
    let mut validation = idx[n_train..].to_vec();
    train.sort_unstable();
    validation.sort_unstable();
    (train, validation)
}

/// Generates, labels and splits `spec.n_samples` samples.
///
/// Labels come from the exhaustive search; configurations below the support
/// threshold are dropped and their samples relabeled with the best surviving
/// class. Deterministic given `spec`.
pub fn build_dataset(spec: &DatasetSpec) -> Result<LabeledDataset> {
    build_dataset_with(spec, |_| ())
}

/// [`build_dataset`] with a callback receiving the number of samples labeled
/// so far.
pub fn build_dataset_with(
    spec: &DatasetSpec,
    progress: impl Fn(usize) + Sync,
) -> Result<LabeledDataset> {
    spec.validate()?;
    let generator = TrafficGenerator::new(spec.model.clone())?;
    let assignment = BeamAssignment::new(&spec.model.grid, &spec.beams)?;
    let space = FeasibleSpace::build(spec.beams.len(), &spec.table, &spec.constraints);
    if space.is_empty() {
        return Err(Error::EmptySpace);
    }

    struct Raw {
        hour: u8,
        seed: u64,
        demand: DemandVector,
        best: Solution,
        grid_digest: String,
    }
    let done = std::sync::atomic::AtomicUsize::new(0);
    let raw: Vec<Raw> = (0..spec.n_samples)
        .into_par_iter()
        .map(|i| -> Result<Raw> {
            let seed = sample_seed(spec.seed, i as u64);
            let hour = sample_hour(spec.seed, i as u64);
            let grid = generator.generate(hour, seed)?;
            let demand = assignment.aggregate(&grid)?;
            let best = solve_exhaustive(&demand, &space, &spec.weights)?;
            let n = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
            progress(n);
            let mut h = F32Hasher::new();
            h.update(grid.values());
            Ok(Raw { hour, seed, demand, best, grid_digest: h.finish() })
        })
        .collect::<Result<_>>()?;

    let feature_hash =
        sha256_hex(raw.iter().map(|r| r.grid_digest.as_str()).collect::<String>().as_bytes());

    let optimal: Vec<PayloadConfig> = raw.iter().map(|r| r.best.config.clone()).collect();
    let catalog = reduce_classes(&optimal, spec.min_support)?;

    let mut lex_classes: Vec<(usize, PayloadConfig)> =
        catalog.classes().iter().cloned().enumerate().collect();
    lex_classes.sort_by(|a, b| a.1.cmp(&b.1));
    let restricted = FeasibleSpace::from_configs(
        &spec.table,
        &lex_classes.iter().map(|(_, c)| c.clone()).collect::<Vec<_>>(),
    )?;

    let samples = raw
        .into_iter()
        .enumerate()
        .map(|(i, r)| -> Result<Sample> {
            let (class_id, score, relabeled) = match catalog.index_of(&r.best.config) {
                Some(id) => (id, r.best.score, false),
                None => {
                    let sol = solve_exhaustive(&r.demand, &restricted, &spec.weights)?;
                    (lex_classes[sol.index].0, sol.score, true)
                }
            };
            Ok(Sample {
                id: i,
                hour: r.hour,
                seed: r.seed,
                demand: r.demand,
                class_id,
                full_score: r.best.score,
                score,
                relabeled,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let (train, validation) = split_indices(spec.n_samples, spec.train_fraction, spec.seed);
    Ok(LabeledDataset {
        spec: spec.clone(),
        samples,
        catalog,
        train,
        validation,
        feature_hash,
        feasible_count: space.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::configspace::enumerate_configs;
    use crate::traffic::GridSpec;

    use crate::linkbudget::CapacityRow;

    fn table() -> CapacityTable {
        CapacityTable::reference()
    }

    #[test]
    fn perfect_match_scores_zero() {
        let t = table();
        let cfg = PayloadConfig::from_options(&[0, 5], &t).unwrap();
        let demand = DemandVector(cfg.capacities_bps().collect());
        let w = ObjectiveWeights { beta0: 1.0, beta1: 0.0, beta2: 0.0 };
        assert_eq!(objective(&cfg, &demand, &w).unwrap(), 0.0);
    }

    #[test]
    fn single_beam_mismatch() {
        let t = table();
        let cfg = PayloadConfig::from_options(&[0], &t).unwrap();
        let w = ObjectiveWeights { beta0: 1e-6, beta1: 0.0, beta2: 0.0 };
        let u = objective(&cfg, &DemandVector(vec![400e6]), &w).unwrap();
        assert!((u - 71.6312).abs() < 1e-9, "{u}");
        let u2 = objective(&cfg, &DemandVector(vec![400e6]), &w.scaled(2.0)).unwrap();
        assert_eq!(u2, 2.0 * u);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let t = table();
        let cfg = PayloadConfig::from_options(&[0, 1], &t).unwrap();
        let err = objective(&cfg, &DemandVector(vec![1.0]), &ObjectiveWeights::default());
        assert!(matches!(err, Err(Error::DimensionMismatch { expected: 2, got: 1 })));
    }

    #[test]
    fn singleton_space() {
        let t = table();
        let cfg = PayloadConfig::from_options(&[3, 1], &t).unwrap();
        let space = FeasibleSpace::from_configs(&t, &[cfg.clone()]).unwrap();
        let sol = solve_exhaustive(&DemandVector(vec![1e9, 0.0]), &space, &ObjectiveWeights::default())
            .unwrap();
        assert_eq!(sol.config, cfg);
        assert_eq!(sol.index, 0);
    }

    #[test]
    fn empty_space_is_an_error() {
        let t = table();
        let space = FeasibleSpace::build(2, &t, &Constraints::new(1.0, f64::INFINITY));
        assert!(matches!(
            solve_exhaustive(&DemandVector(vec![0.0, 0.0]), &space, &ObjectiveWeights::default()),
            Err(Error::EmptySpace)
        ));
    }

    #[test]
    fn zero_demand_prefers_cheapest() {
        let t = table();
        let space = FeasibleSpace::build(2, &t, &Constraints::unconstrained());
        let w = ObjectiveWeights::default();
        let demand = DemandVector(vec![0.0, 0.0]);
        let sol = solve_exhaustive(&demand, &space, &w).unwrap();
        let brute = enumerate_configs(2, &t)
            .map(|c| objective(&c, &demand, &w).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert_eq!(sol.score, brute);
        assert_eq!(sol.config.options(), vec![0, 0]);
    }

    fn row(bw: f64, p: f64, kappa: f64) -> CapacityRow {
        CapacityRow {
            bandwidth_hz: bw,
            power_dbw: p,
            eirp_dbw: p + 44.94,
            cinr_db: 0.0,
            efficiency: kappa,
            capacity_bps: bw * kappa,
        }
    }

    #[test]
    fn ties_prefer_lower_power_then_bandwidth() {
        // capacities 200 and 600 Mbps at equal power; demand 400 ties all four configs
        let t = CapacityTable::new(vec![row(100e6, 10.0, 2.0), row(200e6, 10.0, 3.0)]).unwrap();
        let space = FeasibleSpace::build(2, &t, &Constraints::unconstrained());
        let w = ObjectiveWeights { beta0: 1.0, beta1: 0.0, beta2: 0.0 };
        let sol = solve_exhaustive(&DemandVector(vec![400e6, 400e6]), &space, &w).unwrap();
        assert_eq!(sol.config.options(), vec![0, 0]);

        // equal bandwidth, different power: lower power wins
        let t = CapacityTable::new(vec![row(100e6, 12.0, 2.0), row(100e6, 10.0, 4.0)]).unwrap();
        let space = FeasibleSpace::build(1, &t, &Constraints::unconstrained());
        let sol = solve_exhaustive(&DemandVector(vec![300e6]), &space, &w).unwrap();
        assert_eq!(sol.config.options(), vec![1]);
    }

    #[test]
    fn split_is_disjoint_and_exhaustive() {
        let (train, val) = split_indices(101, 0.8, 5);
        assert_eq!(train.len(), 81);
        let mut all: Vec<usize> = train.iter().chain(&val).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..101).collect::<Vec<_>>());
        assert_eq!(split_indices(101, 0.8, 5), (train, val));
    }

    fn small_spec(n: usize, seed: u64) -> DatasetSpec {
        let mut spec = DatasetSpec::reference(n, seed);
        spec.model.grid = GridSpec { rows: 90, cols: 160, ..GridSpec::europe() };
        spec
    }

    #[test]
    fn dataset_is_deterministic() {
        let a = build_dataset(&small_spec(10, 42)).unwrap();
        let b = build_dataset(&small_spec(10, 42)).unwrap();
        assert_eq!(a.labels(), b.labels());
        assert_eq!(a.train, b.train);
        assert_eq!(a.feature_hash, b.feature_hash);
        assert_eq!(a.train.len(), 8);
        let c = build_dataset(&small_spec(10, 43)).unwrap();
        assert_ne!(a.feature_hash, c.feature_hash);
    }

    #[test]
    fn dataset_labels_are_feasible_catalog_entries() {
        let spec = small_spec(40, 3);
        let d = build_dataset(&spec).unwrap();
        for s in &d.samples {
            assert!(s.class_id < d.num_classes());
            let cfg = d.catalog.class(s.class_id);
            assert!(crate::configspace::is_feasible(
                cfg,
                spec.constraints.p_max_w,
                spec.constraints.w_max_hz
            ));
            assert!(s.score >= s.full_score);
            let recomputed = objective(cfg, &s.demand, &spec.weights).unwrap();
            assert_eq!(recomputed, s.score);
        }
    }

    #[test]
    fn too_few_samples_rejected() {
        assert!(build_dataset(&small_spec(9, 1)).is_err());
    }
}
