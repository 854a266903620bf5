//! Physical constants, atom species data and the shared experiment configuration.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{ensure_non_negative, ensure_positive, Error, Result};
use crate::units::{quantity, Dimension};

pub const PLANCK: f64 = 6.626_070_15e-34;
pub const HBAR: f64 = PLANCK / (2.0 * PI);
pub const BOLTZMANN: f64 = 1.380_649e-23;
pub const STANDARD_GRAVITY: f64 = 9.806_65;
/// 1 dyn in newtons.
pub const DYNE: f64 = 1e-5;

/// Atomic species parameters, SI units (magnetic quantities in gauss).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeciesData {
    /// kg
    pub mass: f64,
    /// D2 line wavelength, m
    pub wavelength: f64,
    /// Ground-state hyperfine splitting, Hz
    pub hyperfine_splitting: f64,
    /// W/m^2
    pub saturation_intensity: f64,
    pub electron_g_factor: f64,
    /// Bohr magneton over Planck constant, Hz/G
    pub bohr_magneton_over_h: f64,
}

impl SpeciesData {
    pub fn new(
        mass: f64,
        wavelength: f64,
        hyperfine_splitting: f64,
        saturation_intensity: f64,
        electron_g_factor: f64,
        bohr_magneton_over_h: f64,
    ) -> Result<Self> {
        Ok(Self {
            mass: ensure_positive("mass", mass)?,
            wavelength: ensure_positive("wavelength", wavelength)?,
            hyperfine_splitting: ensure_positive("hyperfine_splitting", hyperfine_splitting)?,
            saturation_intensity: ensure_positive("saturation_intensity", saturation_intensity)?,
            electron_g_factor: ensure_positive("electron_g_factor", electron_g_factor)?,
            bohr_magneton_over_h: ensure_positive("bohr_magneton_over_h", bohr_magneton_over_h)?,
        })
    }

    /// Built-in ⁸⁷Rb record.
    pub fn rubidium_87() -> Self {
        Self {
            mass: 1.443_16e-25,
            wavelength: 780.241e-9,
            hyperfine_splitting: 6.8347e9,
            saturation_intensity: 50.1,
            electron_g_factor: 2.0,
            bohr_magneton_over_h: 1.3996e6,
        }
    }

    /// Single-photon wavenumber 2π/λ.
    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    /// One-dimensional thermal velocity spread sqrt(k_B T / m).
    pub fn thermal_velocity(&self, temperature: f64) -> f64 {
        (BOLTZMANN * temperature / self.mass).sqrt()
    }

    fn from_json(value: &Value) -> Result<Self> {
        match value {
            Value::String(name) if matches!(name.as_str(), "Rb87" | "87Rb" | "rubidium_87") => {
                Ok(Self::rubidium_87())
            }
            Value::String(name) => Err(Error::field("species", format!("unknown species {name:?}"))),
            Value::Object(map) => {
                let get = |key: &str, dim| -> Result<f64> {
                    let v = map
                        .get(key)
                        .ok_or_else(|| Error::field(format!("species.{key}"), "missing"))?;
                    quantity(&format!("species.{key}"), v, dim)
                };
                Self::new(
                    get("mass", Dimension::Mass)?,
                    get("wavelength", Dimension::Length)?,
                    get("hyperfine_splitting", Dimension::Frequency)?,
                    get("saturation_intensity", Dimension::Intensity)?,
                    get("electron_g_factor", Dimension::Dimensionless)?,
                    get("bohr_magneton_over_h", Dimension::FieldPerFrequency)?,
                )
            }
            other => Err(Error::field("species", format!("expected name or object, got {other}"))),
        }
    }
}

/// Effective two-photon wavenumber of a counter-propagating Raman pair, 2·(2π/λ).
pub fn k_eff(species: &SpeciesData) -> f64 {
    2.0 * species.wavenumber()
}

/// Durations of the hardware phases of one axis cycle. All assumptions, overridable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub molasses: f64,
    pub launch: f64,
    pub state_selection: f64,
    pub blow_away: f64,
    pub imaging: f64,
    pub half_pi_pulse: f64,
    pub pi_pulse: f64,
    /// Dead time between axis segments.
    pub inter_axis_dead_time: f64,
}

impl Default for PhaseTimings {
    fn default() -> Self {
        Self {
            molasses: 10e-3,
            launch: 1e-3,
            state_selection: 100e-6,
            blow_away: 50e-6,
            imaging: 100e-6,
            half_pi_pulse: 5e-6,
            pi_pulse: 10e-6,
            inter_axis_dead_time: 0.0,
        }
    }
}

/// Experiment parameters shared by every module. SI units throughout.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub species: SpeciesData,
    pub lmt_order: usize,
    /// Interval between A_0 and B_0, s.
    pub big_t: f64,
    /// T_j for j = 1..=lmt_order, s.
    pub extra_intervals: Vec<f64>,
    pub contrast: f64,
    pub atom_number: u64,
    pub sigma_0: f64,
    pub temperature: f64,
    pub bias_velocity: f64,
    pub expansion_time: f64,
    /// Single-shot duration τ0 including dead time, s.
    pub cycle_time: f64,
    pub mot_load_time: f64,
    pub pixel_pitch: f64,
    pub grid_size: (usize, usize),
    /// Rotation rate component perpendicular to k_eff, rad/s.
    pub rotation_rate: f64,
    /// Acceleration along k_eff, m/s^2.
    pub acceleration: f64,
    /// Overrides the fringe wavevector derived from `rotation_rate`.
    pub k_omega: Option<f64>,
    /// Overrides the fringe phase derived from `acceleration`.
    pub phi_a: Option<f64>,
    /// Doppler separation margin in thermal widths.
    pub resonance_margin: f64,
    pub timings: PhaseTimings,
}

impl ExperimentConfig {
    /// Parameters of the worked example: T = 20 ms, c = 0.5, N = 10⁶, launched ⁸⁷Rb at 6 μK.
    pub fn reference_defaults() -> Self {
        Self {
            species: SpeciesData::rubidium_87(),
            lmt_order: 0,
            big_t: 20e-3,
            extra_intervals: Vec::new(),
            contrast: 0.5,
            atom_number: 1_000_000,
            sigma_0: 0.2e-3,
            temperature: 6e-6,
            bias_velocity: 1.0,
            expansion_time: 40.9e-3,
            cycle_time: 1.0,
            mot_load_time: 1.0,
            pixel_pitch: 31.25e-6,
            grid_size: (256, 64),
            rotation_rate: 0.0,
            acceleration: 0.0,
            k_omega: None,
            phi_a: None,
            resonance_margin: 10.0,
            timings: PhaseTimings::default(),
        }
    }

    /// Checks every invariant, naming the first offending field.
    pub fn validate(&self) -> Result<()> {
        let s = &self.species;
        SpeciesData::new(
            s.mass,
            s.wavelength,
            s.hyperfine_splitting,
            s.saturation_intensity,
            s.electron_g_factor,
            s.bohr_magneton_over_h,
        )?;
        ensure_positive("big_t", self.big_t)?;
        if self.extra_intervals.len() != self.lmt_order {
            return Err(Error::field(
                "extra_intervals",
                format!(
                    "expected {} entries for lmt_order {}, got {}",
                    self.lmt_order,
                    self.lmt_order,
                    self.extra_intervals.len()
                ),
            ));
        }
        for (j, &t) in self.extra_intervals.iter().enumerate() {
            ensure_positive(&format!("extra_intervals[{j}]"), t)?;
        }
        if !(self.contrast > 0.0 && self.contrast <= 1.0) {
            return Err(Error::field("contrast", format!("must lie in (0, 1], got {}", self.contrast)));
        }
        if self.atom_number == 0 {
            return Err(Error::field("atom_number", "must be > 0"));
        }
        ensure_positive("sigma_0", self.sigma_0)?;
        ensure_positive("temperature", self.temperature)?;
        ensure_non_negative("bias_velocity", self.bias_velocity)?;
        ensure_positive("expansion_time", self.expansion_time)?;
        ensure_positive("cycle_time", self.cycle_time)?;
        ensure_positive("mot_load_time", self.mot_load_time)?;
        ensure_positive("pixel_pitch", self.pixel_pitch)?;
        if self.grid_size.0 == 0 || self.grid_size.1 == 0 {
            return Err(Error::field("grid_size", "both dimensions must be >= 1"));
        }
        if !self.rotation_rate.is_finite() {
            return Err(Error::field("rotation_rate", "must be finite"));
        }
        if !self.acceleration.is_finite() {
            return Err(Error::field("acceleration", "must be finite"));
        }
        if let Some(k) = self.k_omega {
            ensure_non_negative("k_omega", k)?;
        }
        if let Some(p) = self.phi_a {
            if !p.is_finite() {
                return Err(Error::field("phi_a", "must be finite"));
            }
        }
        ensure_positive("resonance_margin", self.resonance_margin)?;
        let t = &self.timings;
        for (name, v) in [
            ("timings.molasses", t.molasses),
            ("timings.launch", t.launch),
            ("timings.state_selection", t.state_selection),
            ("timings.blow_away", t.blow_away),
            ("timings.imaging", t.imaging),
            ("timings.half_pi_pulse", t.half_pi_pulse),
            ("timings.pi_pulse", t.pi_pulse),
        ] {
            ensure_positive(name, v)?;
        }
        ensure_non_negative("timings.inter_axis_dead_time", t.inter_axis_dead_time)?;
        if self.sigma_0 >= sigma_f(self) {
            return Err(Error::field("sigma_0", "must be smaller than the final cloud size"));
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)?;
        Self::from_json(&value)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    /// Builds a config from a JSON object. Absent fields keep their
    /// [`reference_defaults`](Self::reference_defaults) value; unknown fields are rejected.
    pub fn from_json(value: &Value) -> Result<Self> {
        let map = value
            .as_object()
            .ok_or_else(|| Error::Config("config root must be a JSON object".into()))?;
        let mut cfg = Self::reference_defaults();
        for (key, v) in map {
            apply_field(&mut cfg, key, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sum of the extra LMT intervals.
    pub fn extra_interval_sum(&self) -> f64 {
        self.extra_intervals.iter().sum()
    }
}

fn scalar(key: &str, v: &Value, dim: Dimension) -> Result<f64> {
    quantity(key, v, dim)
}

fn count(key: &str, v: &Value) -> Result<u64> {
    let x = quantity(key, v, Dimension::Dimensionless)?;
    if x < 0.0 || x.fract() != 0.0 || x > u64::MAX as f64 {
        return Err(Error::field(key, format!("expected a non-negative integer, got {x}")));
    }
    Ok(x as u64)
}

fn apply_timings(t: &mut PhaseTimings, map: &Map<String, Value>) -> Result<()> {
    for (key, v) in map {
        let name = format!("timings.{key}");
        let x = scalar(&name, v, Dimension::Time)?;
        match key.as_str() {
            "molasses" => t.molasses = x,
            "launch" => t.launch = x,
            "state_selection" => t.state_selection = x,
            "blow_away" => t.blow_away = x,
            "imaging" => t.imaging = x,
            "half_pi_pulse" => t.half_pi_pulse = x,
            "pi_pulse" => t.pi_pulse = x,
            "inter_axis_dead_time" => t.inter_axis_dead_time = x,
            _ => return Err(Error::field(name, "unknown field")),
        }
    }
    Ok(())
}

fn apply_field(cfg: &mut ExperimentConfig, key: &str, v: &Value) -> Result<()> {
    use Dimension::*;
    match key {
        "species" => cfg.species = SpeciesData::from_json(v)?,
        "lmt_order" => cfg.lmt_order = count(key, v)? as usize,
        "big_t" => cfg.big_t = scalar(key, v, Time)?,
        "extra_intervals" => {
            let arr = v
                .as_array()
                .ok_or_else(|| Error::field(key, "expected an array"))?;
            cfg.extra_intervals = arr
                .iter()
                .enumerate()
                .map(|(j, x)| scalar(&format!("extra_intervals[{j}]"), x, Time))
                .collect::<Result<_>>()?;
        }
        "contrast" => cfg.contrast = scalar(key, v, Dimensionless)?,
        "atom_number" => cfg.atom_number = count(key, v)?,
        "sigma_0" => cfg.sigma_0 = scalar(key, v, Length)?,
        "temperature" => cfg.temperature = scalar(key, v, Temperature)?,
        "bias_velocity" => cfg.bias_velocity = scalar(key, v, Velocity)?,
        "expansion_time" => cfg.expansion_time = scalar(key, v, Time)?,
        "cycle_time" => cfg.cycle_time = scalar(key, v, Time)?,
        "mot_load_time" => cfg.mot_load_time = scalar(key, v, Time)?,
        "pixel_pitch" => cfg.pixel_pitch = scalar(key, v, Length)?,
        "grid_size" => {
            let arr = v
                .as_array()
                .filter(|a| a.len() == 2)
                .ok_or_else(|| Error::field(key, "expected [nx, ny]"))?;
            cfg.grid_size = (count("grid_size[0]", &arr[0])? as usize, count("grid_size[1]", &arr[1])? as usize);
        }
        "rotation_rate" => cfg.rotation_rate = scalar(key, v, AngularRate)?,
        "acceleration" => cfg.acceleration = scalar(key, v, Acceleration)?,
        "k_omega" if v.is_null() => cfg.k_omega = None,
        "k_omega" => cfg.k_omega = Some(scalar(key, v, Wavenumber)?),
        "phi_a" if v.is_null() => cfg.phi_a = None,
        "phi_a" => cfg.phi_a = Some(scalar(key, v, Angle)?),
        "resonance_margin" => cfg.resonance_margin = scalar(key, v, Dimensionless)?,
        "timings" => {
            let map = v
                .as_object()
                .ok_or_else(|| Error::field(key, "expected an object"))?;
            apply_timings(&mut cfg.timings, map)?;
        }
        _ => return Err(Error::field(key, "unknown field")),
    }
    Ok(())
}

/// Momentum transfer divided by ħ for LMT order n: (n + 1)·k_eff.
pub fn momentum_transfer_wavenumber(cfg: &ExperimentConfig) -> f64 {
    (cfg.lmt_order as f64 + 1.0) * k_eff(&cfg.species)
}

/// Cloud size after ballistic expansion for `time` from initial size `sigma_0`.
pub fn expanded_size(species: &SpeciesData, sigma_0: f64, temperature: f64, time: f64) -> f64 {
    let v = species.thermal_velocity(temperature);
    (sigma_0 * sigma_0 + v * v * time * time).sqrt()
}

/// Final cloud size σ_f = sqrt(σ0² + (k_B T/m)·t²) at the configured expansion time.
pub fn sigma_f(cfg: &ExperimentConfig) -> f64 {
    expanded_size(&cfg.species, cfg.sigma_0, cfg.temperature, cfg.expansion_time)
}

/// Expansion time needed to grow from `sigma_0` to `sigma_target`.
pub fn expansion_time_for(
    species: &SpeciesData,
    sigma_0: f64,
    sigma_target: f64,
    temperature: f64,
) -> Result<f64> {
    if sigma_target < sigma_0 {
        return Err(Error::Domain(format!(
            "target size {sigma_target} smaller than initial size {sigma_0}"
        )));
    }
    let v = species.thermal_velocity(ensure_positive("temperature", temperature)?);
    Ok((sigma_target * sigma_target - sigma_0 * sigma_0).sqrt() / v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn k_eff_rubidium() {
        let rb = SpeciesData::rubidium_87();
        // 4π / 780.241 nm
        assert_relative_eq!(k_eff(&rb), 1.610_55e7, max_relative = 1e-4);
        let mut doubled = rb;
        doubled.wavelength *= 2.0;
        assert_relative_eq!(k_eff(&doubled), k_eff(&rb) / 2.0, max_relative = 1e-15);
    }

    #[test]
    fn zero_wavelength_rejected() {
        let err = SpeciesData::new(1e-25, 0.0, 1e9, 1.0, 2.0, 1e6).unwrap_err();
        assert!(err.to_string().contains("wavelength"));
    }

    #[test]
    fn momentum_transfer_scales_with_order() {
        let mut cfg = ExperimentConfig::reference_defaults();
        let ke = k_eff(&cfg.species);
        assert_eq!(momentum_transfer_wavenumber(&cfg), ke);
        cfg.lmt_order = 1;
        cfg.extra_intervals = vec![5e-3];
        assert_relative_eq!(momentum_transfer_wavenumber(&cfg), 2.0 * ke);
        cfg.lmt_order = 9;
        assert_relative_eq!(momentum_transfer_wavenumber(&cfg), 1.611e8, max_relative = 1e-3);
        for n in 0..50 {
            cfg.lmt_order = n;
            assert_relative_eq!(momentum_transfer_wavenumber(&cfg) / ke, n as f64 + 1.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn sigma_f_examples() {
        let rb = SpeciesData::rubidium_87();
        assert_relative_eq!(expanded_size(&rb, 0.2e-3, 6e-6, 40.9e-3), 1.0e-3, max_relative = 5e-3);
        assert_relative_eq!(expanded_size(&rb, 0.0, 6e-6, 0.1), 2.40e-3, max_relative = 5e-3);
        assert_eq!(expanded_size(&rb, 0.2e-3, 6e-6, 0.0), 0.2e-3);
        let t = expansion_time_for(&rb, 0.2e-3, 1e-3, 6e-6).unwrap();
        assert!((t - 40e-3).abs() < 2e-3, "t = {t}");
    }

    #[test]
    fn sigma_f_monotone() {
        let rb = SpeciesData::rubidium_87();
        let base = expanded_size(&rb, 0.2e-3, 6e-6, 0.04);
        assert!(expanded_size(&rb, 0.3e-3, 6e-6, 0.04) >= base);
        assert!(expanded_size(&rb, 0.2e-3, 7e-6, 0.04) >= base);
        assert!(expanded_size(&rb, 0.2e-3, 6e-6, 0.05) >= base);
    }

    #[test]
    fn json_config_with_units() {
        let cfg = ExperimentConfig::from_json_str(
            r#"{"big_t": "20 ms", "lmt_order": 2, "extra_intervals": ["15 ms", "10 ms"],
                "temperature": "6 uK", "sigma_0": "0.2 mm", "grid_size": [128, 32],
                "timings": {"molasses": "5 ms"}}"#,
        )
        .unwrap();
        assert_eq!(cfg.big_t, 0.02);
        assert_eq!(cfg.extra_intervals, vec![0.015, 0.01]);
        assert_eq!(cfg.grid_size, (128, 32));
        assert_eq!(cfg.timings.molasses, 5e-3);
    }

    #[test]
    fn json_config_diagnostics_name_field() {
        for (doc, field) in [
            (r#"{"big_t": "-20 ms"}"#, "big_t"),
            (r#"{"lmt_order": 2, "extra_intervals": ["1 ms"]}"#, "extra_intervals"),
            (r#"{"contrast": 1.5}"#, "contrast"),
            (r#"{"bogus": 1}"#, "bogus"),
            (r#"{"temperature": "0 K"}"#, "temperature"),
        ] {
            let err = ExperimentConfig::from_json_str(doc).unwrap_err();
            assert!(err.to_string().contains(field), "{doc}: {err}");
        }
    }
}
