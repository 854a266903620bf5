//! Second-order Zeeman systematics of the clock transition.
//!
//! Uses the quadratic term of the Breit–Rabi expansion only, which holds while
//! g_S·μ_B·B ≪ h·Δ_HFS (B ≪ ~2.4 kG for ⁸⁷Rb). Fields are in gauss and
//! gradients in G/cm; everything else is SI.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{ensure_non_negative, ensure_positive, Error, Result};
use crate::physics::{SpeciesData, DYNE, PLANCK, STANDARD_GRAVITY};
use crate::units::{quantity, Dimension};

/// Field history of one interferometer: a step from B₁ to B₂ at the central π pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeemanScenario {
    /// G
    pub b_first_half: f64,
    /// G
    pub b_second_half: f64,
    /// G/cm
    pub gradient: f64,
    /// s
    #[serde(rename = "T")]
    pub big_t: f64,
}

impl ZeemanScenario {
    pub fn new(b_first_half: f64, b_second_half: f64, gradient: f64, big_t: f64) -> Result<Self> {
        Ok(Self {
            b_first_half: ensure_non_negative("b_first_half", b_first_half)?,
            b_second_half: ensure_non_negative("b_second_half", b_second_half)?,
            gradient: ensure_non_negative("gradient", gradient)?,
            big_t: ensure_positive("T", big_t)?,
        })
    }

    /// 3 G → 3.01 G across a 1 G/cm gradient, T = 20 ms.
    pub fn reference_example() -> Self {
        Self {
            b_first_half: 3.0,
            b_second_half: 3.01,
            gradient: 1.0,
            big_t: 20e-3,
        }
    }

    /// Reads a scenario document. Returns the scenario and an optional phase budget in rad.
    pub fn from_json(value: &Value) -> Result<(Self, Option<f64>)> {
        let Value::Object(map) = value else {
            return Err(Error::Config("scenario must be a JSON object".into()));
        };
        let mut s = Self::reference_example();
        let mut budget = None;
        for (key, v) in map {
            match key.as_str() {
                "b_first_half" => s.b_first_half = quantity(key, v, Dimension::MagneticField)?,
                "b_second_half" => s.b_second_half = quantity(key, v, Dimension::MagneticField)?,
                "gradient" => s.gradient = quantity(key, v, Dimension::FieldGradient)?,
                "T" | "big_t" => s.big_t = quantity(key, v, Dimension::Time)?,
                "phase_budget" => budget = Some(quantity(key, v, Dimension::Angle)?),
                other => return Err(Error::field(other, "unknown scenario field")),
            }
        }
        let s = Self::new(s.b_first_half, s.b_second_half, s.gradient, s.big_t)?;
        if let Some(b) = budget {
            ensure_positive("phase_budget", b)?;
        }
        Ok((s, budget))
    }
}

/// Δ_Z = (g_S·μ_B·B/h)²/(4·Δ_HFS), Hz. The clock transition shifts by 2Δ_Z.
pub fn second_order_shift(b: f64, species: &SpeciesData) -> Result<f64> {
    ensure_non_negative("B", b)?;
    let zeeman = species.electron_g_factor * species.bohr_magneton_over_h * b;
    Ok(zeeman * zeeman / (4.0 * species.hyperfine_splitting))
}

/// Differential clock shift 2Δ_Z(B₂) − 2Δ_Z(B₁), Hz.
pub fn differential_shift(scn: &ZeemanScenario, species: &SpeciesData) -> Result<f64> {
    Ok(2.0 * (second_order_shift(scn.b_second_half, species)?
        - second_order_shift(scn.b_first_half, species)?))
}

/// Phase accumulated from the differential shift over the second half, rad.
pub fn zeeman_phase_error(scn: &ZeemanScenario, species: &SpeciesData) -> Result<f64> {
    Ok(2.0 * PI * differential_shift(scn, species)? * scn.big_t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeemanForce {
    /// N
    pub force: f64,
    /// dyn
    pub force_dyn: f64,
    /// m/s²
    pub acceleration: f64,
    /// units of standard gravity
    pub acceleration_g: f64,
}

/// Gradient force h·(dΔ_Z/dB)·(dB/dz) on a clock-state atom.
pub fn zeeman_force(b: f64, gradient: f64, species: &SpeciesData) -> Result<ZeemanForce> {
    ensure_non_negative("B", b)?;
    ensure_non_negative("gradient", gradient)?;
    let mu = species.electron_g_factor * species.bohr_magneton_over_h;
    let d_shift_d_b = mu * mu * b / (2.0 * species.hyperfine_splitting);
    // G/cm → G/m
    let force = PLANCK * d_shift_d_b * gradient * 100.0;
    let acceleration = force / species.mass;
    Ok(ZeemanForce {
        force,
        force_dyn: force / DYNE,
        acceleration,
        acceleration_g: acceleration / STANDARD_GRAVITY,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystematicsReport {
    pub scenario: ZeemanScenario,
    /// Δ_Z at B₁ and B₂, Hz.
    pub shift_first_half: f64,
    pub shift_second_half: f64,
    /// Hz
    pub differential_shift: f64,
    /// rad
    pub phase_error: f64,
    /// phase error in units of π
    pub phase_error_pi: f64,
    pub force: ZeemanForce,
    /// rad, if supplied
    pub phase_budget: Option<f64>,
    pub within_budget: Option<bool>,
}

/// All three quantities, with the force evaluated at B₁.
pub fn systematics_report(
    scn: &ZeemanScenario,
    species: &SpeciesData,
    phase_budget: Option<f64>,
) -> Result<SystematicsReport> {
    let phase = zeeman_phase_error(scn, species)?;
    Ok(SystematicsReport {
        scenario: *scn,
        shift_first_half: second_order_shift(scn.b_first_half, species)?,
        shift_second_half: second_order_shift(scn.b_second_half, species)?,
        differential_shift: differential_shift(scn, species)?,
        phase_error: phase,
        phase_error_pi: phase / PI,
        force: zeeman_force(scn.b_first_half, scn.gradient, species)?,
        phase_budget,
        within_budget: phase_budget.map(|b| phase.abs() <= b),
    })
}
