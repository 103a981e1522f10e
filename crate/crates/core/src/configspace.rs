//! Payload configurations: per-beam option choices, the total power and
//! bandwidth constraints, and the reduced class catalog that becomes the
//! classifier output space.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linkbudget::CapacityTable;
use crate::util::db_to_linear;
use crate::{Error, Result};

/// Total RF power budget of the reference payload, watts.
pub const REFERENCE_P_MAX_W: f64 = 115.0;

/// Minimum share of labeled samples a configuration needs to stay a class.
pub const DEFAULT_MIN_SUPPORT: f64 = 0.005;

/// One beam's choice: a row of the capacity table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamConfig {
    /// Row index into the [`CapacityTable`].
    pub option: usize,
    pub power_dbw: f64,
    pub bandwidth_hz: f64,
    pub capacity_bps: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PayloadConfig {
    beams: Vec<BeamConfig>,
    total_power_w: f64,
    total_bandwidth_hz: f64,
}

impl PayloadConfig {
    pub fn from_options(options: &[usize], table: &CapacityTable) -> Result<Self> {
        if options.is_empty() {
            return Err(Error::Config("a payload configuration needs at least one beam".into()));
        }
        let mut beams = Vec::with_capacity(options.len());
        for &option in options {
            let row = table.rows().get(option).ok_or_else(|| {
                Error::Config(format!("option {option} outside a {}-row table", table.len()))
            })?;
            beams.push(BeamConfig {
                option,
                power_dbw: row.power_dbw,
                bandwidth_hz: row.bandwidth_hz,
                capacity_bps: row.capacity_bps,
            });
        }
        Ok(Self::from_beams(beams))
    }

    fn from_beams(beams: Vec<BeamConfig>) -> Self {
        let total_power_w = beams.iter().map(|b| db_to_linear(b.power_dbw)).sum();
        let total_bandwidth_hz = beams.iter().map(|b| b.bandwidth_hz).sum();
        Self { beams, total_power_w, total_bandwidth_hz }
    }

    pub fn beams(&self) -> &[BeamConfig] {
        &self.beams
    }

    pub fn num_beams(&self) -> usize {
        self.beams.len()
    }

    pub fn options(&self) -> Vec<usize> {
        self.beams.iter().map(|b| b.option).collect()
    }

    pub fn total_power_w(&self) -> f64 {
        self.total_power_w
    }

    pub fn total_bandwidth_hz(&self) -> f64 {
        self.total_bandwidth_hz
    }

    pub fn capacities_bps(&self) -> impl Iterator<Item = f64> + '_ {
        self.beams.iter().map(|b| b.capacity_bps)
    }
}

/// Configurations compare by their per-beam option indices.
impl PartialEq for PayloadConfig {
    fn eq(&self, other: &Self) -> bool {
        self.beams.len() == other.beams.len()
            && self.beams.iter().zip(&other.beams).all(|(a, b)| a.option == b.option)
    }
}

impl Eq for PayloadConfig {}

impl PartialOrd for PayloadConfig {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PayloadConfig {
    fn cmp(&self, other: &Self) -> Ordering {
        self.beams
            .iter()
            .map(|b| b.option)
            .cmp(other.beams.iter().map(|b| b.option))
    }
}

impl std::hash::Hash for PayloadConfig {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        for b in &self.beams {
            b.option.hash(state);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constraints {
    #[serde(with = "crate::serde_inf")]
    pub p_max_w: f64,
    #[serde(with = "crate::serde_inf")]
    pub w_max_hz: f64,
}

impl Constraints {
    pub fn new(p_max_w: f64, w_max_hz: f64) -> Self {
        Self { p_max_w, w_max_hz }
    }

    pub fn unconstrained() -> Self {
        Self::new(f64::INFINITY, f64::INFINITY)
    }

    /// 115 W total power; bandwidth cap at `num_beams` times the widest
    /// option, which never binds.
    pub fn reference(num_beams: usize, table: &CapacityTable) -> Self {
        let widest = table.rows().iter().map(|r| r.bandwidth_hz).fold(0.0, f64::max);
        Self::new(REFERENCE_P_MAX_W, num_beams as f64 * widest)
    }
}

pub fn is_feasible(cfg: &PayloadConfig, p_max_w: f64, w_max_hz: f64) -> bool {
    cfg.total_power_w <= p_max_w && cfg.total_bandwidth_hz <= w_max_hz
}

/// `n_options ^ num_beams`, or `None` on overflow.
pub fn config_count(num_beams: usize, n_options: usize) -> Option<u64> {
    (n_options as u64).checked_pow(u32::try_from(num_beams).ok()?)
}

/// Per-beam options of the `index`-th configuration in lexicographic order
/// (beam 0 is the most significant digit).
pub fn decode_index(mut index: u64, num_beams: usize, n_options: usize, out: &mut [usize]) {
    debug_assert_eq!(out.len(), num_beams);
    for slot in out.iter_mut().rev() {
        *slot = (index % n_options as u64) as usize;
        index /= n_options as u64;
    }
}

/// Lexicographic enumeration of all `|table|^B` configurations.
pub struct ConfigIter<'a> {
    table: &'a CapacityTable,
    digits: Vec<usize>,
    remaining: u64,
}

impl Iterator for ConfigIter<'_> {
    type Item = PayloadConfig;

    fn next(&mut self) -> Option<PayloadConfig> {
        if self.remaining == 0 {
            return None;
        }
        let cfg = PayloadConfig::from_options(&self.digits, self.table).expect("digits in range");
        self.remaining -= 1;
        advance(&mut self.digits, self.table.len());
        Some(cfg)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = usize::try_from(self.remaining).unwrap_or(usize::MAX);
        (n, Some(n))
    }
}

impl ExactSizeIterator for ConfigIter<'_> {}

fn advance(digits: &mut [usize], n_options: usize) {
    for d in digits.iter_mut().rev() {
        *d += 1;
        if *d < n_options {
            return;
        }
        *d = 0;
    }
}

pub fn enumerate_configs(num_beams: usize, table: &CapacityTable) -> ConfigIter<'_> {
    assert!(num_beams >= 1, "at least one beam");
    ConfigIter {
        table,
        digits: vec![0; num_beams],
        remaining: config_count(num_beams, table.len()).expect("configuration count overflows u64"),
    }
}

/// Row-level power (W) and bandwidth (Hz) lookups shared by the scans.
struct OptionCosts {
    power_w: Vec<f64>,
    bandwidth_hz: Vec<f64>,
}

impl OptionCosts {
    fn new(table: &CapacityTable) -> Self {
        Self {
            power_w: table.rows().iter().map(|r| r.power_w()).collect(),
            bandwidth_hz: table.rows().iter().map(|r| r.bandwidth_hz).collect(),
        }
    }

    fn feasible(&self, digits: &[usize], c: &Constraints) -> bool {
        // summed in beam order, matching PayloadConfig::from_beams
        let p: f64 = digits.iter().map(|&d| self.power_w[d]).sum();
        let w: f64 = digits.iter().map(|&d| self.bandwidth_hz[d]).sum();
        p <= c.p_max_w && w <= c.w_max_hz
    }
}

const SCAN_CHUNK: u64 = 1 << 16;

/// Folds every configuration of the full product, chunked by index range and
/// run in parallel; chunk results come back in index order.
fn scan_chunks<T: Send>(
    num_beams: usize,
    table: &CapacityTable,
    init: impl Fn() -> T + Sync,
    visit: impl Fn(&mut T, &[usize]) + Sync,
) -> Vec<T> {
    assert!(num_beams >= 1, "at least one beam");
    let n = table.len();
    let total = config_count(num_beams, n).expect("configuration count overflows u64");
    (0..total.div_ceil(SCAN_CHUNK))
        .into_par_iter()
        .map(|c| {
            let start = c * SCAN_CHUNK;
            let end = (start + SCAN_CHUNK).min(total);
            let mut digits = vec![0; num_beams];
            decode_index(start, num_beams, n, &mut digits);
            let mut acc = init();
            for _ in start..end {
                visit(&mut acc, &digits);
                advance(&mut digits, n);
            }
            acc
        })
        .collect()
}

/// Number of configurations satisfying both constraints.
pub fn feasible_count(num_beams: usize, table: &CapacityTable, constraints: &Constraints) -> u64 {
    let costs = OptionCosts::new(table);
    scan_chunks(num_beams, table, || 0u64, |count, d| {
        *count += u64::from(costs.feasible(d, constraints));
    })
    .into_iter()
    .sum()
}

/// The pre-filtered search space: option indices of every feasible
/// configuration, in enumeration order.
#[derive(Debug, Clone)]
pub struct FeasibleSpace {
    num_beams: usize,
    table: CapacityTable,
    options: Vec<u8>,
}

impl FeasibleSpace {
    pub fn build(num_beams: usize, table: &CapacityTable, constraints: &Constraints) -> Self {
        assert!(table.len() <= u8::MAX as usize + 1, "at most 256 options per beam");
        let costs = OptionCosts::new(table);
        let parts = scan_chunks(num_beams, table, Vec::new, |out, d| {
            if costs.feasible(d, constraints) {
                out.extend(d.iter().map(|&x| x as u8));
            }
        });
        Self { num_beams, table: table.clone(), options: parts.concat() }
    }

    /// A space holding exactly the given configurations, in the given order.
    pub fn from_configs(table: &CapacityTable, configs: &[PayloadConfig]) -> Result<Self> {
        let num_beams = configs.first().map(PayloadConfig::num_beams).ok_or(Error::EmptySpace)?;
        let mut options = Vec::with_capacity(configs.len() * num_beams);
        for c in configs {
            if c.num_beams() != num_beams {
                return Err(Error::DimensionMismatch { expected: num_beams, got: c.num_beams() });
            }
            options.extend(c.beams().iter().map(|b| b.option as u8));
        }
        Ok(Self { num_beams, table: table.clone(), options })
    }

    pub fn num_beams(&self) -> usize {
        self.num_beams
    }

    pub fn len(&self) -> usize {
        self.options.len() / self.num_beams.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.options.is_empty()
    }

    pub fn table(&self) -> &CapacityTable {
        &self.table
    }

    pub fn options(&self, i: usize) -> &[u8] {
        &self.options[i * self.num_beams..(i + 1) * self.num_beams]
    }

    pub fn iter_options(&self) -> impl Iterator<Item = &[u8]> {
        self.options.chunks_exact(self.num_beams)
    }

    pub fn config(&self, i: usize) -> PayloadConfig {
        let opts: Vec<usize> = self.options(i).iter().map(|&o| o as usize).collect();
        PayloadConfig::from_options(&opts, &self.table).expect("options come from the table")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCatalog {
    classes: Vec<PayloadConfig>,
    support: Vec<usize>,
}

impl ClassCatalog {
    pub fn new(classes: Vec<PayloadConfig>, support: Vec<usize>) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::Config("a class catalog needs at least one class".into()));
        }
        if classes.len() != support.len() {
            return Err(Error::DimensionMismatch { expected: classes.len(), got: support.len() });
        }
        let mut sorted: Vec<&PayloadConfig> = classes.iter().collect();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("catalog classes must be distinct".into()));
        }
        Ok(Self { classes, support })
    }

    pub fn classes(&self) -> &[PayloadConfig] {
        &self.classes
    }

    pub fn class(&self, id: usize) -> &PayloadConfig {
        &self.classes[id]
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn index_of(&self, cfg: &PayloadConfig) -> Option<usize> {
        self.classes.iter().position(|c| c == cfg)
    }

    /// `class_id,beam_id,power_dbw,bandwidth_hz`, one row per beam.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["class_id", "beam_id", "power_dbw", "bandwidth_hz"])?;
        for (id, cfg) in self.classes.iter().enumerate() {
            for (b, beam) in cfg.beams().iter().enumerate() {
                wtr.write_record([
                    id.to_string(),
                    (b + 1).to_string(),
                    beam.power_dbw.to_string(),
                    beam.bandwidth_hz.to_string(),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    /// Inverse of [`ClassCatalog::write_csv`]; support comes from the manifest.
    pub fn read_csv<R: Read>(reader: R, table: &CapacityTable, support: Vec<usize>) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            class_id: usize,
            beam_id: usize,
            power_dbw: f64,
            bandwidth_hz: f64,
        }
        let mut per_class: Vec<Vec<(usize, usize)>> = Vec::new();
        for row in csv::Reader::from_reader(reader).deserialize() {
            let row: Row = row?;
            let option = table.find(row.bandwidth_hz, row.power_dbw).ok_or_else(|| {
                Error::Config(format!(
                    "catalog row ({} Hz, {} dBW) not in capacity table",
                    row.bandwidth_hz, row.power_dbw
                ))
            })?;
            if per_class.len() <= row.class_id {
                per_class.resize(row.class_id + 1, Vec::new());
            }
            per_class[row.class_id].push((row.beam_id, option));
        }
        let classes = per_class
            .into_iter()
            .map(|mut beams| {
                beams.sort_unstable();
                let opts: Vec<usize> = beams.iter().map(|&(_, o)| o).collect();
                PayloadConfig::from_options(&opts, table)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(classes, support)
    }
}

/// Sidecar written next to the catalog CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogManifest {
    pub constraints: Constraints,
    pub min_support: f64,
    pub support: Vec<usize>,
    pub num_samples: usize,
    pub num_beams: usize,
}

pub fn write_catalog(dir: &Path, catalog: &ClassCatalog, manifest: &CatalogManifest) -> Result<()> {
    catalog.write_csv(std::fs::File::create(dir.join("catalog.csv"))?)?;
    std::fs::write(dir.join("catalog.json"), serde_json::to_vec_pretty(manifest)?)?;
    Ok(())
}

pub fn read_catalog(dir: &Path, table: &CapacityTable) -> Result<(ClassCatalog, CatalogManifest)> {
    let manifest: CatalogManifest =
        serde_json::from_slice(&std::fs::read(dir.join("catalog.json"))?)?;
    let catalog = ClassCatalog::read_csv(
        std::fs::File::open(dir.join("catalog.csv"))?,
        table,
        manifest.support.clone(),
    )?;
    Ok((catalog, manifest))
}

/// Keeps the labels whose share reaches `min_support`, ordered by descending
/// support and then lexicographically.
pub fn reduce_classes(labels: &[PayloadConfig], min_support: f64) -> Result<ClassCatalog> {
    if labels.is_empty() {
        return Err(Error::Config("cannot build a catalog from zero labels".into()));
    }
    let mut counts: HashMap<&PayloadConfig, usize> = HashMap::new();
    for l in labels {
        *counts.entry(l).or_default() += 1;
    }
    let threshold = min_support * labels.len() as f64;
    let mut kept: Vec<(&PayloadConfig, usize)> =
        counts.into_iter().filter(|&(_, n)| n as f64 >= threshold).collect();
    if kept.is_empty() {
        return Err(Error::EmptyCatalog {
            min_support,
            threshold: threshold.ceil() as usize,
        });
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let (classes, support) = kept.into_iter().map(|(c, n)| (c.clone(), n)).unzip();
    ClassCatalog::new(classes, support)
}
