use sha2::{Digest, Sha256};

#[inline]
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[inline]
pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Per-sample seed for independent random streams: `master ^ index`.
#[inline]
pub fn sample_seed(master: u64, index: u64) -> u64 {
    master ^ index
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex_string(&Sha256::digest(bytes))
}

pub fn hex_string(bytes: &[u8]) -> String {
    use std::fmt::Write;
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Streaming hash over `f32` slices in their little-endian byte form.
#[derive(Default)]
pub struct F32Hasher(Sha256);

impl F32Hasher {
    pub fn new() -> Self {
        Self(Sha256::new())
    }

    pub fn update(&mut self, values: &[f32]) {
        for v in values {
            self.0.update(v.to_le_bytes());
        }
    }

    pub fn finish(self) -> String {
        hex_string(&self.0.finalize())
    }
}
