//! Unit-suffixed scalar parsing for config documents.
//!
//! A config scalar is either a bare JSON number (taken as SI) or a string of
//! the form `"<number> <unit>"`, e.g. `"20 ms"`, `"6 uK"`, `"1 G/cm"`.
//! Everything is converted to SI at ingestion.

use serde_json::Value;

use crate::error::{Error, Result};

/// Physical dimension expected by a config field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Dimensionless,
    Time,
    Length,
    Mass,
    Temperature,
    Velocity,
    Acceleration,
    Frequency,
    AngularRate,
    Wavenumber,
    Angle,
    MagneticField,
    FieldGradient,
    Intensity,
    FieldPerFrequency,
}

impl Dimension {
    /// Multiplicative factor from `unit` to SI (gauss for magnetic quantities).
    fn factor(self, unit: &str) -> Option<f64> {
        use Dimension::*;
        let f = match (self, unit) {
            (Dimensionless, "") => 1.0,
            (Time, "s") => 1.0,
            (Time, "ms") => 1e-3,
            (Time, "us" | "μs" | "µs") => 1e-6,
            (Time, "ns") => 1e-9,
            (Length, "m") => 1.0,
            (Length, "cm") => 1e-2,
            (Length, "mm") => 1e-3,
            (Length, "um" | "μm" | "µm") => 1e-6,
            (Length, "nm") => 1e-9,
            (Mass, "kg") => 1.0,
            (Mass, "g") => 1e-3,
            (Mass, "u" | "amu") => 1.660_539_066_60e-27,
            (Temperature, "K") => 1.0,
            (Temperature, "mK") => 1e-3,
            (Temperature, "uK" | "μK" | "µK") => 1e-6,
            (Temperature, "nK") => 1e-9,
            (Velocity, "m/s") => 1.0,
            (Velocity, "cm/s") => 1e-2,
            (Velocity, "mm/s") => 1e-3,
            (Acceleration, "m/s^2" | "m/s2") => 1.0,
            (Acceleration, "g") => crate::physics::STANDARD_GRAVITY,
            (Frequency, "Hz") => 1.0,
            (Frequency, "kHz") => 1e3,
            (Frequency, "MHz") => 1e6,
            (Frequency, "GHz") => 1e9,
            (AngularRate, "rad/s") => 1.0,
            (AngularRate, "mrad/s") => 1e-3,
            (AngularRate, "urad/s" | "μrad/s" | "µrad/s") => 1e-6,
            (Wavenumber, "rad/m" | "1/m") => 1.0,
            (Wavenumber, "rad/mm" | "1/mm") => 1e3,
            (Angle, "rad") => 1.0,
            (Angle, "mrad") => 1e-3,
            (Angle, "deg") => std::f64::consts::PI / 180.0,
            (MagneticField, "G") => 1.0,
            (MagneticField, "mG") => 1e-3,
            (MagneticField, "T") => 1e4,
            (FieldGradient, "G/cm") => 1.0,
            (FieldGradient, "G/m") => 1e-2,
            (Intensity, "W/m^2" | "W/m2") => 1.0,
            (Intensity, "mW/cm^2" | "mW/cm2") => 10.0,
            (FieldPerFrequency, "Hz/G") => 1.0,
            (FieldPerFrequency, "MHz/G") => 1e6,
            _ => return None,
        };
        Some(f)
    }
}

/// Parses a `"<number> <unit>"` string into SI units.
pub fn parse_quantity(field: &str, text: &str, dim: Dimension) -> Result<f64> {
    let text = text.trim();
    let split = text
        .find(|c: char| c.is_whitespace())
        .unwrap_or(text.len());
    let (num, unit) = text.split_at(split);
    let unit = unit.trim();
    let value: f64 = num
        .parse()
        .map_err(|_| Error::field(field, format!("cannot parse number from {text:?}")))?;
    let factor = dim.factor(unit).ok_or_else(|| {
        Error::field(field, format!("unit {unit:?} not valid for {dim:?}"))
    })?;
    Ok(value * factor)
}

/// Reads a scalar JSON value (number = SI, string = unit-suffixed).
pub fn quantity(field: &str, value: &Value, dim: Dimension) -> Result<f64> {
    match value {
        Value::Number(n) => n
            .as_f64()
            .ok_or_else(|| Error::field(field, "number out of range")),
        Value::String(s) => parse_quantity(field, s, dim),
        other => Err(Error::field(
            field,
            format!("expected number or unit string, got {other}"),
        )),
    }
}
