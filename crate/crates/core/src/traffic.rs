//! Synthetic spatio-temporal traffic demand.
//!
//! A demand grid is the sum of three spatial components (population
//! hotspots, aeronautical routes, maritime lanes), each scaled by its own
//! 24-hour profile, times seeded multiplicative log-normal noise. Cells are
//! then aggregated onto the nearest beam center.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::linkbudget::Beam;
use crate::util::sha256_hex;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

/// Grid geometry. Row 0 is the northernmost band, column 0 the westernmost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub bbox: BoundingBox,
}

impl GridSpec {
    /// 360 x 640 cells over lat [35, 60], lon [-10, 20].
    pub fn europe() -> Self {
        Self {
            rows: 360,
            cols: 640,
            bbox: BoundingBox { lat_min: 35.0, lat_max: 60.0, lon_min: -10.0, lon_max: 20.0 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let b = &self.bbox;
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::Config("grid needs at least one row and one column".into()));
        }
        if !(b.lat_min < b.lat_max && b.lon_min < b.lon_max)
            || b.lat_min < -90.0
            || b.lat_max > 90.0
            || b.lon_min < -180.0
            || b.lon_max > 180.0
        {
            return Err(Error::Config(format!("invalid bounding box {b:?}")));
        }
        Ok(())
    }

    pub fn cell_lat(&self, row: usize) -> f64 {
        let d = (self.bbox.lat_max - self.bbox.lat_min) / self.rows as f64;
        self.bbox.lat_max - (row as f64 + 0.5) * d
    }

    pub fn cell_lon(&self, col: usize) -> f64 {
        let d = (self.bbox.lon_max - self.bbox.lon_min) / self.cols as f64;
        self.bbox.lon_min + (col as f64 + 0.5) * d
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub const fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }
}

/// Gaussian demand blob around a population center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hotspot {
    pub center: GeoPoint,
    /// Demand of the center cell at multiplier 1, Mbps.
    pub peak_mbps: f64,
    pub sigma_deg: f64,
}

/// Demand concentrated along a great-circle segment (flight corridor or
/// shipping lane), with a Gaussian cross-section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub from: GeoPoint,
    pub to: GeoPoint,
    /// Demand of a centerline cell at multiplier 1, Mbps.
    pub intensity_mbps: f64,
    pub width_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiurnalProfiles {
    pub population: [f64; 24],
    pub aeronautical: [f64; 24],
    pub maritime: [f64; 24],
}

impl Default for DiurnalProfiles {
    fn default() -> Self {
        Self {
            population: [
                0.40, 0.32, 0.26, 0.22, 0.22, 0.26, 0.36, 0.50, 0.60, 0.66, 0.70, 0.72, //
                0.74, 0.74, 0.72, 0.72, 0.76, 0.82, 0.90, 0.98, 1.00, 0.96, 0.78, 0.56,
            ],
            aeronautical: [
                0.10, 0.05, 0.03, 0.03, 0.06, 0.16, 0.42, 0.76, 0.94, 1.00, 1.00, 0.96, //
                0.94, 0.94, 0.96, 1.00, 1.00, 0.96, 0.90, 0.80, 0.64, 0.46, 0.30, 0.18,
            ],
            maritime: [
                0.90, 0.88, 0.86, 0.86, 0.88, 0.90, 0.92, 0.94, 0.96, 0.98, 1.00, 1.00, //
                1.00, 1.00, 1.00, 1.00, 0.98, 0.98, 0.96, 0.96, 0.94, 0.94, 0.92, 0.92,
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficModel {
    pub grid: GridSpec,
    pub hotspots: Vec<Hotspot>,
    pub aero_routes: Vec<Route>,
    pub maritime_lanes: Vec<Route>,
    pub diurnal: DiurnalProfiles,
    /// Log-normal sigma of the per-cell multiplicative noise.
    pub noise_sigma: f64,
}

const fn hs(lat: f64, lon: f64, peak_mbps: f64, sigma_deg: f64) -> Hotspot {
    Hotspot { center: GeoPoint::new(lat, lon), peak_mbps, sigma_deg }
}

const fn rt(a: (f64, f64), b: (f64, f64), intensity_mbps: f64, width_deg: f64) -> Route {
    Route {
        from: GeoPoint::new(a.0, a.1),
        to: GeoPoint::new(b.0, b.1),
        intensity_mbps,
        width_deg,
    }
}

impl Default for TrafficModel {
    /// A European scenario: major population centers, the busiest flight
    /// corridors and the main shipping lanes.
    fn default() -> Self {
        let hotspots = vec![
            hs(40.42, -3.70, 0.34, 0.9),  // Madrid
            hs(41.39, 2.17, 0.28, 0.7),   // Barcelona
            hs(38.72, -9.14, 0.20, 0.7),  // Lisbon
            hs(37.39, -5.98, 0.16, 0.8),  // Seville
            hs(48.86, 2.35, 0.42, 0.9),   // Paris
            hs(45.76, 4.84, 0.20, 0.7),   // Lyon
            hs(43.30, 5.37, 0.20, 0.7),   // Marseille
            hs(43.60, 1.44, 0.14, 0.6),   // Toulouse
            hs(51.51, -0.13, 0.44, 0.9),  // London
            hs(53.48, -2.24, 0.24, 0.8),  // Manchester
            hs(52.37, 4.90, 0.26, 0.7),   // Amsterdam
            hs(50.85, 4.35, 0.20, 0.7),   // Brussels
            hs(50.94, 6.96, 0.30, 0.9),   // Rhine-Ruhr
            hs(50.11, 8.68, 0.20, 0.7),   // Frankfurt
            hs(53.55, 9.99, 0.22, 0.7),   // Hamburg
            hs(52.52, 13.40, 0.30, 0.8),  // Berlin
            hs(48.14, 11.58, 0.24, 0.7),  // Munich
            hs(47.37, 8.54, 0.16, 0.6),   // Zurich
            hs(48.21, 16.37, 0.20, 0.7),  // Vienna
            hs(45.46, 9.19, 0.32, 0.8),   // Milan
            hs(41.90, 12.50, 0.26, 0.8),  // Rome
            hs(40.85, 14.27, 0.22, 0.7),  // Naples
            hs(55.68, 12.57, 0.18, 0.6),  // Copenhagen
            hs(59.33, 18.07, 0.18, 0.7),  // Stockholm
            hs(57.71, 11.97, 0.12, 0.6),  // Gothenburg
        ];
        let aero_routes = vec![
            rt((51.47, -0.45), (40.47, -3.56), 0.05, 0.25),  // London-Madrid
            rt((49.01, 2.55), (41.80, 12.25), 0.05, 0.25),   // Paris-Rome
            rt((50.03, 8.57), (40.47, -3.56), 0.04, 0.25),   // Frankfurt-Madrid
            rt((52.31, 4.76), (45.63, 8.72), 0.04, 0.25),    // Amsterdam-Milan
            rt((51.47, -0.45), (48.35, 11.79), 0.04, 0.25),  // London-Munich
            rt((55.62, 12.65), (41.30, 2.08), 0.04, 0.25),   // Copenhagen-Barcelona
            rt((52.36, 13.50), (38.77, -9.13), 0.03, 0.25),  // Berlin-Lisbon
            rt((59.65, 17.92), (50.03, 8.57), 0.03, 0.25),   // Stockholm-Frankfurt
            rt((53.63, 10.00), (43.44, 5.22), 0.03, 0.25),   // Hamburg-Marseille
            rt((51.47, -0.45), (59.00, -10.00), 0.05, 0.30), // North Atlantic exit
            rt((48.30, -4.00), (36.00, -10.00), 0.04, 0.30), // Iberian Atlantic corridor
        ];
        let maritime_lanes = vec![
            rt((50.00, -10.00), (51.00, 1.50), 0.05, 0.25), // English Channel
            rt((51.00, 1.50), (53.80, 8.00), 0.05, 0.25),   // North Sea coast
            rt((53.80, 8.00), (57.80, 10.50), 0.04, 0.25),  // Skagerrak approach
            rt((55.50, 12.80), (59.00, 20.00), 0.04, 0.25), // Baltic
            rt((36.00, -10.00), (36.00, -5.50), 0.05, 0.25), // Gibraltar approach
            rt((36.00, -5.50), (37.50, 11.00), 0.05, 0.30), // Western Mediterranean
            rt((43.20, 5.40), (38.50, 15.50), 0.04, 0.25),  // Tyrrhenian
            rt((41.40, 2.20), (39.50, 8.50), 0.03, 0.25),   // Balearic crossing
            rt((45.40, 13.20), (40.00, 19.00), 0.03, 0.25), // Adriatic
            rt((43.50, -9.50), (47.50, -5.00), 0.04, 0.25), // Bay of Biscay
        ];
        Self {
            grid: GridSpec::europe(),
            hotspots,
            aero_routes,
            maritime_lanes,
            diurnal: DiurnalProfiles::default(),
            noise_sigma: 0.2,
        }
    }
}

impl TrafficModel {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        for h in &self.hotspots {
            if !(h.peak_mbps >= 0.0 && h.sigma_deg > 0.0) {
                return Err(Error::Config(format!("invalid hotspot {h:?}")));
            }
        }
        for r in self.aero_routes.iter().chain(&self.maritime_lanes) {
            if !(r.intensity_mbps >= 0.0 && r.width_deg > 0.0) {
                return Err(Error::Config(format!("invalid route {r:?}")));
            }
        }
        let d = &self.diurnal;
        if d.population.iter().chain(&d.aeronautical).chain(&d.maritime).any(|&m| !(m >= 0.0)) {
            return Err(Error::Config("diurnal multipliers must be >= 0".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!("noise sigma must be >= 0, got {}", self.noise_sigma)));
        }
        Ok(())
    }

    /// SHA-256 of the model's JSON form; recorded in grid manifests.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("model serializes"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficGrid {
    spec: GridSpec,
    hour: u8,
    values: Vec<f32>,
}

impl TrafficGrid {
    pub fn new(spec: GridSpec, hour: u8, values: Vec<f32>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::DimensionMismatch { expected: spec.len(), got: values.len() });
        }
        if hour > 23 {
            return Err(Error::Domain(format!("hour must be in 0..=23, got {hour}")));
        }
        if values.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::Domain("traffic values must be >= 0".into()));
        }
        Ok(Self { spec, hour, values })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn rows(&self) -> usize {
        self.spec.rows
    }

    pub fn cols(&self) -> usize {
        self.spec.cols
    }

    pub fn hour(&self) -> u8 {
        self.hour
    }

    /// Row-major Mbps values.
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.spec.cols + col]
    }

    pub fn total_mbps(&self) -> f64 {
        self.values.iter().map(|&v| f64::from(v)).sum()
    }
}

/// Demand per beam, bps, in the order of the beam list it was aggregated on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandVector(pub Vec<f64>);

impl DemandVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn total_bps(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// Hour-independent spatial fields of the three components, cached so that a
/// sample costs one weighted sum plus noise.
#[derive(Debug, Clone)]
pub struct TrafficGenerator {
    model: TrafficModel,
    population: Vec<f32>,
    aeronautical: Vec<f32>,
    maritime: Vec<f32>,
}

const KERNEL_CUTOFF_SIGMAS: f64 = 4.0;
/// Great-circle routes are densified into this many planar pieces.
const ROUTE_PIECES: usize = 32;

impl TrafficGenerator {
    pub fn new(model: TrafficModel) -> Result<Self> {
        model.validate()?;
        let spec = model.grid;
        let mut population = vec![0f32; spec.len()];
        for h in &model.hotspots {
            add_hotspot(&spec, h, &mut population);
        }
        let mut aeronautical = vec![0f32; spec.len()];
        for r in &model.aero_routes {
            add_route(&spec, r, &mut aeronautical);
        }
        let mut maritime = vec![0f32; spec.len()];
        for r in &model.maritime_lanes {
            add_route(&spec, r, &mut maritime);
        }
        Ok(Self { model, population, aeronautical, maritime })
    }

    pub fn model(&self) -> &TrafficModel {
        &self.model
    }

    /// Noise-free demand at `hour`, Mbps.
    pub fn expected(&self, hour: u8) -> Vec<f64> {
        let h = usize::from(hour);
        let d = &self.model.diurnal;
        let (p, a, m) = (d.population[h], d.aeronautical[h], d.maritime[h]);
        (0..self.population.len())
            .map(|k| {
                p * f64::from(self.population[k])
                    + a * f64::from(self.aeronautical[k])
                    + m * f64::from(self.maritime[k])
            })
            .collect()
    }

    pub fn generate(&self, hour: u8, seed: u64) -> Result<TrafficGrid> {
        if hour > 23 {
            return Err(Error::Domain(format!("hour must be in 0..=23, got {hour}")));
        }
        let mut values = self.expected(hour);
        let sigma = self.model.noise_sigma;
        if sigma > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noise = LogNormal::new(-0.5 * sigma * sigma, sigma).expect("valid sigma");
            for v in &mut values {
                *v *= noise.sample(&mut rng);
            }
        }
        let values = values.into_iter().map(|v| v.max(0.0) as f32).collect();
        Ok(TrafficGrid { spec: self.model.grid, hour, values })
    }
}

/// Deterministic in `(model, hour, seed)`. Prefer [`TrafficGenerator`] when
/// producing many grids from one model.
pub fn generate_grid(model: &TrafficModel, hour: u8, seed: u64) -> Result<TrafficGrid> {
    TrafficGenerator::new(model.clone())?.generate(hour, seed)
}

fn index_range(lo: f64, hi: f64, start: f64, step: f64, n: usize) -> std::ops::Range<usize> {
    // cells whose centers start + (k + 0.5) step fall in [lo, hi]
    let a = ((lo - start) / step - 0.5).ceil().max(0.0);
    let b = ((hi - start) / step - 0.5).floor() + 1.0;
    let b = b.clamp(0.0, n as f64);
    (a.min(b) as usize)..(b as usize)
}

fn row_range(spec: &GridSpec, lat_lo: f64, lat_hi: f64) -> std::ops::Range<usize> {
    // rows count southward from lat_max
    let step = (spec.bbox.lat_max - spec.bbox.lat_min) / spec.rows as f64;
    index_range(spec.bbox.lat_max - lat_hi, spec.bbox.lat_max - lat_lo, 0.0, step, spec.rows)
}

fn col_range(spec: &GridSpec, lon_lo: f64, lon_hi: f64) -> std::ops::Range<usize> {
    let step = (spec.bbox.lon_max - spec.bbox.lon_min) / spec.cols as f64;
    index_range(lon_lo, lon_hi, spec.bbox.lon_min, step, spec.cols)
}

fn add_hotspot(spec: &GridSpec, h: &Hotspot, out: &mut [f32]) {
    // separable: exp(-(dlat^2 + (dlon cos lat0)^2) / 2 sigma^2)
    let coslat = h.center.lat.to_radians().cos();
    let reach = KERNEL_CUTOFF_SIGMAS * h.sigma_deg;
    let rows = row_range(spec, h.center.lat - reach, h.center.lat + reach);
    let cols = col_range(spec, h.center.lon - reach / coslat, h.center.lon + reach / coslat);
    let two_s2 = 2.0 * h.sigma_deg * h.sigma_deg;
    let lon_part: Vec<f64> = cols
        .clone()
        .map(|j| {
            let d = (spec.cell_lon(j) - h.center.lon) * coslat;
            (-d * d / two_s2).exp()
        })
        .collect();
    for i in rows {
        let d = spec.cell_lat(i) - h.center.lat;
        let a = h.peak_mbps * (-d * d / two_s2).exp();
        let row = &mut out[i * spec.cols..(i + 1) * spec.cols];
        for (j, b) in cols.clone().zip(&lon_part) {
            row[j] += (a * b) as f32;
        }
    }
}

fn to_unit(p: GeoPoint) -> [f64; 3] {
    let (lat, lon) = (p.lat.to_radians(), p.lon.to_radians());
    [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()]
}

fn from_unit(v: [f64; 3]) -> GeoPoint {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    GeoPoint::new((v[2] / n).asin().to_degrees(), v[1].atan2(v[0]).to_degrees())
}

/// Points along the great circle from `a` to `b` (spherical interpolation).
fn great_circle_points(a: GeoPoint, b: GeoPoint, pieces: usize) -> Vec<GeoPoint> {
    let (ua, ub) = (to_unit(a), to_unit(b));
    let omega = (ua[0] * ub[0] + ua[1] * ub[1] + ua[2] * ub[2]).clamp(-1.0, 1.0).acos();
    if omega < 1e-12 {
        return vec![a, b];
    }
    (0..=pieces)
        .map(|k| {
            let t = k as f64 / pieces as f64;
            let wa = ((1.0 - t) * omega).sin() / omega.sin();
            let wb = (t * omega).sin() / omega.sin();
            from_unit([0, 1, 2].map(|i| wa * ua[i] + wb * ub[i]))
        })
        .collect()
}

fn add_route(spec: &GridSpec, r: &Route, out: &mut [f32]) {
    let pts = great_circle_points(r.from, r.to, ROUTE_PIECES);
    let reach = KERNEL_CUTOFF_SIGMAS * r.width_deg;
    let two_w2 = 2.0 * r.width_deg * r.width_deg;
    let lat_lo = pts.iter().map(|p| p.lat).fold(f64::INFINITY, f64::min) - reach;
    let lat_hi = pts.iter().map(|p| p.lat).fold(f64::NEG_INFINITY, f64::max) + reach;
    let coslat = ((lat_lo + lat_hi) / 2.0).to_radians().cos();
    let lon_lo = pts.iter().map(|p| p.lon).fold(f64::INFINITY, f64::min) - reach / coslat;
    let lon_hi = pts.iter().map(|p| p.lon).fold(f64::NEG_INFINITY, f64::max) + reach / coslat;
    let cols = col_range(spec, lon_lo, lon_hi);
    for i in row_range(spec, lat_lo, lat_hi) {
        let lat = spec.cell_lat(i);
        let c = lat.to_radians().cos();
        for j in cols.clone() {
            let lon = spec.cell_lon(j);
            let d2 = pts
                .windows(2)
                .map(|s| segment_distance2((lat, lon * c), (s[0].lat, s[0].lon * c), (s[1].lat, s[1].lon * c)))
                .fold(f64::INFINITY, f64::min);
            if d2 <= reach * reach {
                out[i * spec.cols + j] += (r.intensity_mbps * (-d2 / two_w2).exp()) as f32;
            }
        }
    }
}

/// Squared planar distance from `p` to segment `ab`.
fn segment_distance2(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (ex, ey) = (p.0 - (a.0 + t * dx), p.1 - (a.1 + t * dy));
    ex * ex + ey * ey
}

/// Great-circle central angle between two points, radians.
pub fn central_angle(a: GeoPoint, b: GeoPoint) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dp = p2 - p1;
    let dl = (b.lon - a.lon).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * h.sqrt().min(1.0).asin()
}

/// Cell-to-beam map: each cell goes to the nearest beam center by
/// great-circle distance, ties to the lowest beam id.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamAssignment {
    spec: GridSpec,
    num_beams: usize,
    cell_beam: Vec<u16>,
}

impl BeamAssignment {
    pub fn new(spec: &GridSpec, beams: &[Beam]) -> Result<Self> {
        if beams.is_empty() {
            return Err(Error::Config("at least one beam is required".into()));
        }
        let centers: Vec<GeoPoint> =
            beams.iter().map(|b| GeoPoint::new(b.center_lat, b.center_lon)).collect();
        let mut cell_beam = Vec::with_capacity(spec.len());
        for i in 0..spec.rows {
            let lat = spec.cell_lat(i);
            for j in 0..spec.cols {
                let p = GeoPoint::new(lat, spec.cell_lon(j));
                let mut best = 0usize;
                let mut best_d = f64::INFINITY;
                for (k, c) in centers.iter().enumerate() {
                    let d = central_angle(p, *c);
                    if d < best_d || (d == best_d && beams[k].id < beams[best].id) {
                        best = k;
                        best_d = d;
                    }
                }
                cell_beam.push(best as u16);
            }
        }
        Ok(Self { spec: *spec, num_beams: beams.len(), cell_beam })
    }

    pub fn beam_of(&self, row: usize, col: usize) -> usize {
        usize::from(self.cell_beam[row * self.spec.cols + col])
    }

    pub fn aggregate(&self, grid: &TrafficGrid) -> Result<DemandVector> {
        if grid.spec.rows != self.spec.rows || grid.spec.cols != self.spec.cols {
            return Err(Error::DimensionMismatch { expected: self.spec.len(), got: grid.values.len() });
        }
        let mut mbps = vec![0f64; self.num_beams];
        for (&b, &v) in self.cell_beam.iter().zip(&grid.values) {
            mbps[usize::from(b)] += f64::from(v);
        }
        Ok(DemandVector(mbps.into_iter().map(|m| m * 1e6).collect()))
    }
}

pub fn aggregate_demand(grid: &TrafficGrid, beams: &[Beam]) -> Result<DemandVector> {
    BeamAssignment::new(grid.spec(), beams)?.aggregate(grid)
}

/// Sidecar for a single persisted grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridManifest {
    pub m: usize,
    pub n: usize,
    pub bbox: BoundingBox,
    pub hour: u8,
    pub seed: u64,
    pub model_hash: String,
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes `values` as little-endian `f32`, row-major.
pub fn write_f32_le<W: Write>(mut w: W, values: &[f32]) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 4);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

pub fn read_f32_le<R: Read>(mut r: R, count: usize) -> std::io::Result<Vec<f32>> {
    let mut buf = vec![0u8; count * 4];
    r.read_exact(&mut buf)?;
    Ok(buf.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

/// Persists `grid` to `path` (raw `f32`) plus a `.json` sidecar.
pub fn write_grid(path: &Path, grid: &TrafficGrid, seed: u64, model_hash: &str) -> Result<()> {
    write_f32_le(BufWriter::new(std::fs::File::create(path)?), &grid.values)?;
    let manifest = GridManifest {
        m: grid.rows(),
        n: grid.cols(),
        bbox: grid.spec.bbox,
        hour: grid.hour,
        seed,
        model_hash: model_hash.to_owned(),
    };
    std::fs::write(sidecar_path(path), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

pub fn read_grid(path: &Path) -> Result<(TrafficGrid, GridManifest)> {
    let manifest: GridManifest = serde_json::from_slice(&std::fs::read(sidecar_path(path))?)?;
    let len = std::fs::metadata(path)?.len();
    if len != (manifest.m * manifest.n * 4) as u64 {
        return Err(Error::Format {
            path: path.to_owned(),
            reason: format!("expected {} bytes, found {len}", manifest.m * manifest.n * 4),
        });
    }
    let values = read_f32_le(BufReader::new(std::fs::File::open(path)?), manifest.m * manifest.n)?;
    let spec = GridSpec { rows: manifest.m, cols: manifest.n, bbox: manifest.bbox };
    Ok((TrafficGrid::new(spec, manifest.hour, values)?, manifest))
}
