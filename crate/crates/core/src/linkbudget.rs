//! Downlink link budget for a multibeam GEO satellite.
//!
//! Channel gain, CINR, ModCod lookup and offered capacity, plus the
//! per-beam [`CapacityTable`] that drives the rest of the pipeline. All
//! arithmetic is done in linear units; dB only appears at the interfaces.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::util::{db_to_linear, linear_to_db};
use crate::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Spherical Earth radius (equatorial), meters.
pub const EARTH_RADIUS_M: f64 = 6_378_137.0;
/// Off-axis attenuation floor of the satellite antenna pattern, dB.
pub const PATTERN_FLOOR_DB: f64 = 30.0;
/// Reference receiver system noise temperature, K.
pub const REFERENCE_NOISE_TEMPERATURE_K: f64 = 290.0;

pub const CAPACITY_CSV_HEADER: [&str; 6] = [
    "bandwidth_hz",
    "power_dbw",
    "eirp_dbw",
    "cinr_db",
    "efficiency_bps_hz",
    "capacity_bps",
];

/// Maximum allowed |capacity - bandwidth * efficiency| for a table row, bps.
pub const CAPACITY_CONSISTENCY_BPS: f64 = 5.0e4;

const DEFAULT_TABLE_CSV: &str = include_str!("../data/capacity_table4.csv");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub carrier_frequency_hz: f64,
    pub satellite_longitude_deg: f64,
    pub satellite_altitude_m: f64,
    pub theta_3db_deg: f64,
    pub sat_peak_gain_dbi: f64,
    /// Receive figure of merit G/T, dB/K.
    pub rx_gain_over_t_dbk: f64,
    pub noise_psd_w_hz: f64,
    /// Lumped shadowing and atmospheric loss, dB.
    pub extra_loss_db: f64,
    pub boltzmann: f64,
}

impl Default for SystemParams {
    /// 19 GHz GEO at 13E, 1 degree beams, G/T 17 dB/K, peak gain taken from
    /// EIRP - P of the default capacity table. `extra_loss_db` is left at 0
    /// until [`calibrate_extra_loss`] is run.
    fn default() -> Self {
        Self {
            carrier_frequency_hz: 19.0e9,
            satellite_longitude_deg: 13.0,
            satellite_altitude_m: 35_786_000.0,
            theta_3db_deg: 1.0,
            sat_peak_gain_dbi: 44.94,
            rx_gain_over_t_dbk: 17.0,
            noise_psd_w_hz: BOLTZMANN * REFERENCE_NOISE_TEMPERATURE_K,
            extra_loss_db: 0.0,
            boltzmann: BOLTZMANN,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_frequency_hz", self.carrier_frequency_hz),
            ("satellite_altitude_m", self.satellite_altitude_m),
            ("theta_3db_deg", self.theta_3db_deg),
            ("noise_psd_w_hz", self.noise_psd_w_hz),
            ("boltzmann", self.boltzmann),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency_hz
    }

    /// Receive antenna peak gain (linear) implied by G/T and the noise
    /// temperature `noise_psd / k`.
    pub fn rx_peak_gain_linear(&self) -> f64 {
        db_to_linear(self.rx_gain_over_t_dbk) * self.noise_psd_w_hz / self.boltzmann
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Beam {
    pub id: u32,
    pub center_lat: f64,
    pub center_lon: f64,
}

impl Beam {
    pub fn new(id: u32, center_lat: f64, center_lon: f64) -> Result<Self> {
        if !(center_lat.abs() <= 90.0 && center_lon.abs() <= 180.0) {
            return Err(Error::Domain(format!(
                "beam {id} center ({center_lat}, {center_lon}) out of range"
            )));
        }
        Ok(Self { id, center_lat, center_lon })
    }
}

/// The eight European beam centers used throughout the reference scenario.
pub fn reference_beams() -> Vec<Beam> {
    const LAT: [f64; 8] = [39.3, 42.0, 44.7, 47.4, 51.0, 53.7, 56.4, 39.5];
    const LON: [f64; 8] = [-5.3, 0.0, 5.3, 10.6, -0.5, 6.0, 12.3, 14.4];
    LAT.iter()
        .zip(LON.iter())
        .enumerate()
        .map(|(i, (&lat, &lon))| Beam { id: i as u32 + 1, center_lat: lat, center_lon: lon })
        .collect()
}

/// Checks beam ids are unique and coordinates in range.
pub fn validate_beams(beams: &[Beam]) -> Result<()> {
    if beams.is_empty() {
        return Err(Error::Config("at least one beam is required".into()));
    }
    let mut ids: Vec<u32> = beams.iter().map(|b| b.id).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config("beam ids must be unique".into()));
    }
    for b in beams {
        Beam::new(b.id, b.center_lat, b.center_lon)?;
    }
    Ok(())
}

fn ground_point_ecef(lat_deg: f64, lon_deg: f64) -> [f64; 3] {
    let (lat, lon) = (lat_deg.to_radians(), lon_deg.to_radians());
    [
        EARTH_RADIUS_M * lat.cos() * lon.cos(),
        EARTH_RADIUS_M * lat.cos() * lon.sin(),
        EARTH_RADIUS_M * lat.sin(),
    ]
}

fn satellite_ecef(sys: &SystemParams) -> [f64; 3] {
    let r = EARTH_RADIUS_M + sys.satellite_altitude_m;
    let lon = sys.satellite_longitude_deg.to_radians();
    [r * lon.cos(), r * lon.sin(), 0.0]
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Distance from the satellite to a ground point on a spherical Earth.
pub fn slant_range_to(lat_deg: f64, lon_deg: f64, sys: &SystemParams) -> f64 {
    let r = EARTH_RADIUS_M;
    let rs = r + sys.satellite_altitude_m;
    let cos_psi = lat_deg.to_radians().cos()
        * (lon_deg - sys.satellite_longitude_deg).to_radians().cos();
    (r * r + rs * rs - 2.0 * r * rs * cos_psi).max(0.0).sqrt()
}

/// Satellite to beam-center distance in meters.
pub fn slant_range(beam: &Beam, sys: &SystemParams) -> f64 {
    slant_range_to(beam.center_lat, beam.center_lon, sys)
}

/// Angle at the satellite between the beam boresight (pointed at the beam
/// center) and the direction of a ground point, degrees.
pub fn off_boresight_angle(beam: &Beam, lat_deg: f64, lon_deg: f64, sys: &SystemParams) -> f64 {
    let sat = satellite_ecef(sys);
    let a = sub(ground_point_ecef(beam.center_lat, beam.center_lon), sat);
    let b = sub(ground_point_ecef(lat_deg, lon_deg), sat);
    let c = dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt());
    c.clamp(-1.0, 1.0).acos().to_degrees()
}

/// Parabolic-in-dB pattern `G_max - 12 (theta / theta_3dB)^2`, floored 30 dB
/// below the peak.
pub fn antenna_gain(theta_deg: f64, sys: &SystemParams) -> Result<f64> {
    if !(theta_deg >= 0.0) {
        return Err(Error::Domain(format!("off-boresight angle must be >= 0, got {theta_deg}")));
    }
    let rolloff = 12.0 * (theta_deg / sys.theta_3db_deg).powi(2);
    Ok(sys.sat_peak_gain_dbi - rolloff.min(PATTERN_FLOOR_DB))
}

/// Free-space path loss `(4 pi D / lambda)^2`, linear.
pub fn free_space_path_loss(distance_m: f64, sys: &SystemParams) -> f64 {
    (4.0 * PI * distance_m / sys.wavelength_m()).powi(2)
}

/// Linear channel power gain towards a ground point served by `beam`.
pub fn channel_gain_at(beam: &Beam, lat_deg: f64, lon_deg: f64, sys: &SystemParams) -> f64 {
    let theta = off_boresight_angle(beam, lat_deg, lon_deg, sys);
    let g_sat = db_to_linear(antenna_gain(theta, sys).expect("acos is non-negative"));
    let d = slant_range_to(lat_deg, lon_deg, sys);
    g_sat * sys.rx_peak_gain_linear()
        / (free_space_path_loss(d, sys) * db_to_linear(sys.extra_loss_db))
}

/// Linear channel power gain `|h|^2` at the beam center.
pub fn channel_gain(beam: &Beam, sys: &SystemParams) -> f64 {
    channel_gain_at(beam, beam.center_lat, beam.center_lon, sys)
}

/// CINR in dB for transmit power `power_dbw` over `bandwidth_hz`, with a
/// constant interference power `interference_w` (watts).
pub fn cinr(
    power_dbw: f64,
    bandwidth_hz: f64,
    beam: &Beam,
    sys: &SystemParams,
    interference_w: f64,
) -> f64 {
    debug_assert!(bandwidth_hz > 0.0 && interference_w >= 0.0);
    let signal = db_to_linear(power_dbw) * channel_gain(beam, sys);
    linear_to_db(signal / (interference_w + sys.noise_psd_w_hz * bandwidth_hz))
}

/// Returns `sys` with `extra_loss_db` set so that `cinr(power, bandwidth)`
/// equals `target_cinr_db` exactly.
pub fn calibrate_extra_loss(
    sys: &SystemParams,
    beam: &Beam,
    power_dbw: f64,
    bandwidth_hz: f64,
    target_cinr_db: f64,
    interference_w: f64,
) -> Result<SystemParams> {
    sys.validate()?;
    let mut lossless = sys.clone();
    lossless.extra_loss_db = 0.0;
    let uncalibrated = cinr(power_dbw, bandwidth_hz, beam, &lossless, interference_w);
    lossless.extra_loss_db = uncalibrated - target_cinr_db;
    Ok(lossless)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModCod {
    pub cinr_threshold_db: f64,
    pub efficiency: f64,
}

/// Step mapping from CINR to spectral efficiency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModCodTable {
    rows: Vec<ModCod>,
}

impl ModCodTable {
    pub fn new(rows: Vec<ModCod>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Config("ModCod table must not be empty".into()));
        }
        for w in rows.windows(2) {
            if !(w[1].cinr_threshold_db > w[0].cinr_threshold_db) {
                return Err(Error::Config("ModCod thresholds must be strictly increasing".into()));
            }
            if !(w[1].efficiency > w[0].efficiency) {
                return Err(Error::Config("ModCod efficiencies must be strictly increasing".into()));
            }
        }
        Ok(Self { rows })
    }

    /// ModCod steps taken from the (CINR, efficiency) pairs of a capacity table.
    pub fn from_capacity_table(table: &CapacityTable) -> Result<Self> {
        let mut rows: Vec<ModCod> = table
            .rows()
            .iter()
            .map(|r| ModCod { cinr_threshold_db: r.cinr_db, efficiency: r.efficiency })
            .collect();
        rows.sort_by(|a, b| a.cinr_threshold_db.total_cmp(&b.cinr_threshold_db));
        rows.dedup_by(|a, b| a == b);
        Self::new(rows)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::from_capacity_table(&CapacityTable::read_csv(path)?)
    }

    /// The table built from the shipped capacity CSV.
    pub fn reference() -> Self {
        Self::from_capacity_table(&CapacityTable::reference()).expect("shipped table is valid")
    }

    pub fn rows(&self) -> &[ModCod] {
        &self.rows
    }
}

/// Efficiency of the highest ModCod whose threshold is <= `cinr_db`; 0 when
/// the link does not close.
pub fn spectral_efficiency(cinr_db: f64, table: &ModCodTable) -> f64 {
    let idx = table.rows.partition_point(|m| m.cinr_threshold_db <= cinr_db);
    if idx == 0 {
        0.0
    } else {
        table.rows[idx - 1].efficiency
    }
}

#[inline]
pub fn offered_capacity(bandwidth_hz: f64, efficiency: f64) -> f64 {
    bandwidth_hz * efficiency
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityRow {
    pub bandwidth_hz: f64,
    pub power_dbw: f64,
    pub eirp_dbw: f64,
    pub cinr_db: f64,
    #[serde(rename = "efficiency_bps_hz")]
    pub efficiency: f64,
    pub capacity_bps: f64,
}

impl CapacityRow {
    pub fn power_w(&self) -> f64 {
        db_to_linear(self.power_dbw)
    }
}

/// Per-beam resource options and the capacity each one offers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityTable {
    rows: Vec<CapacityRow>,
}

fn same_value(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

impl CapacityTable {
    pub fn new(rows: Vec<CapacityRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Config("capacity table must not be empty".into()));
        }
        for (i, r) in rows.iter().enumerate() {
            let expected = offered_capacity(r.bandwidth_hz, r.efficiency);
            if (r.capacity_bps - expected).abs() > CAPACITY_CONSISTENCY_BPS {
                return Err(Error::Config(format!(
                    "row {i}: capacity {} deviates from W*kappa = {expected}",
                    r.capacity_bps
                )));
            }
            if rows[..i].iter().any(|o| {
                same_value(o.bandwidth_hz, r.bandwidth_hz) && same_value(o.power_dbw, r.power_dbw)
            }) {
                return Err(Error::Config(format!(
                    "duplicate (bandwidth, power) pair ({}, {})",
                    r.bandwidth_hz, r.power_dbw
                )));
            }
        }
        Ok(Self { rows })
    }

    /// The six power/bandwidth options of the reference payload, as shipped in
    /// `data/capacity_table4.csv`.
    pub fn reference() -> Self {
        Self::from_csv_reader(DEFAULT_TABLE_CSV.as_bytes()).expect("shipped table is valid")
    }

    pub fn rows(&self) -> &[CapacityRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn find(&self, bandwidth_hz: f64, power_dbw: f64) -> Option<usize> {
        self.rows.iter().position(|r| {
            same_value(r.bandwidth_hz, bandwidth_hz) && same_value(r.power_dbw, power_dbw)
        })
    }

    /// Capacity non-decreasing in power at fixed bandwidth and in bandwidth at
    /// fixed power.
    pub fn is_monotone(&self) -> bool {
        self.rows.iter().all(|a| {
            self.rows.iter().all(|b| {
                let dominated = (same_value(a.bandwidth_hz, b.bandwidth_hz)
                    && a.power_dbw <= b.power_dbw)
                    || (same_value(a.power_dbw, b.power_dbw) && a.bandwidth_hz <= b.bandwidth_hz);
                !dominated || a.capacity_bps <= b.capacity_bps
            })
        })
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        if header != CAPACITY_CSV_HEADER {
            return Err(Error::Config(format!(
                "capacity CSV header must be {}, got {}",
                CAPACITY_CSV_HEADER.join(","),
                header.join(",")
            )));
        }
        let rows = rdr.deserialize().collect::<std::result::Result<Vec<CapacityRow>, _>>()?;
        Self::new(rows)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        for r in &self.rows {
            wtr.serialize(r)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Everything needed to evaluate a row from first principles.
#[derive(Debug, Clone, Copy)]
pub struct AnalyticLink<'a> {
    pub sys: &'a SystemParams,
    pub beam: &'a Beam,
    pub modcod: &'a ModCodTable,
    pub interference_w: f64,
}

#[derive(Debug, Clone, Copy)]
pub enum CapacityMode<'a> {
    /// Rows copied from the reference table; every pair must exist there.
    PaperValues,
    /// Rows computed through cinr -> spectral_efficiency -> offered_capacity.
    Analytic(AnalyticLink<'a>),
}

/// One row per (power, bandwidth) pair, power-major.
pub fn build_capacity_table(
    powers_dbw: &[f64],
    bandwidths_hz: &[f64],
    mode: CapacityMode<'_>,
) -> Result<CapacityTable> {
    if powers_dbw.is_empty() || bandwidths_hz.is_empty() {
        return Err(Error::Config("power and bandwidth sets must be nonempty".into()));
    }
    let reference = CapacityTable::reference();
    let mut rows = Vec::with_capacity(powers_dbw.len() * bandwidths_hz.len());
    for &p in powers_dbw {
        for &w in bandwidths_hz {
            let row = match mode {
                CapacityMode::PaperValues => {
                    let idx = reference.find(w, p).ok_or_else(|| {
                        Error::Config(format!("no reference row for ({w} Hz, {p} dBW)"))
                    })?;
                    reference.rows[idx]
                }
                CapacityMode::Analytic(link) => {
                    if !(w > 0.0) {
                        return Err(Error::Domain(format!("bandwidth must be positive, got {w}")));
                    }
                    let g = cinr(p, w, link.beam, link.sys, link.interference_w);
                    let kappa = spectral_efficiency(g, link.modcod);
                    CapacityRow {
                        bandwidth_hz: w,
                        power_dbw: p,
                        eirp_dbw: p + antenna_gain(0.0, link.sys)?,
                        cinr_db: g,
                        efficiency: kappa,
                        capacity_bps: offered_capacity(w, kappa),
                    }
                }
            };
            rows.push(row);
        }
    }
    CapacityTable::new(rows)
}

pub const REFERENCE_POWERS_DBW: [f64; 3] = [10.0, 12.0, 14.0];
pub const REFERENCE_BANDWIDTHS_HZ: [f64; 2] = [250.0e6, 500.0e6];
