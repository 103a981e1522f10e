//! Serde helpers for `f64` limits where `+inf` means "unconstrained".
//!
//! JSON has no infinity literal, so infinite values are written as `null`.

use serde::{Deserialize, Deserializer, Serializer};

pub fn serialize<S: Serializer>(value: &f64, s: S) -> Result<S::Ok, S::Error> {
    if value.is_infinite() && *value > 0.0 {
        s.serialize_none()
    } else {
        s.serialize_f64(*value)
    }
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}
