//! Cloud expansion effects, molasses launch geometry and free-flight kinematics.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_non_negative, ensure_positive, Error, Result};
use crate::physics::{expanded_size, SpeciesData};

/// Length scale that makes the contrast-loss exponent dimensionless.
///
/// The exponent is (k_Ω·L)²·b(1−b). `InitialSize` uses L = σ0, which gives no
/// loss for a point source.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthScale {
    #[default]
    InitialSize,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BroadeningResult {
    /// Fringe broadening factor 1 − σ0²/σf².
    pub b: f64,
    pub k_omega_observed: f64,
    pub contrast_observed: f64,
    /// Actual over ideal sensitivity, b·exp[−(k_Ω L)² b(1−b)].
    pub sensitivity_ratio: f64,
    /// L used in the contrast-loss exponent, m. The exponent's length scale is
    /// an assumption; it is echoed in every result.
    pub length_scale_m: f64,
}

pub fn broadening(
    sigma_0: f64,
    sigma_f: f64,
    k_omega: f64,
    contrast: f64,
    scale: LengthScale,
) -> Result<BroadeningResult> {
    ensure_non_negative("sigma_0", sigma_0)?;
    ensure_positive("sigma_f", sigma_f)?;
    if sigma_0 > sigma_f {
        return Err(Error::Domain(format!(
            "initial size {sigma_0} m exceeds final size {sigma_f} m"
        )));
    }
    let b = 1.0 - (sigma_0 / sigma_f).powi(2);
    let length = match scale {
        LengthScale::InitialSize => sigma_0,
        LengthScale::Fixed(l) => l,
    };
    let x = (k_omega * length).powi(2);
    let loss = (-x * b * (1.0 - b)).exp();
    Ok(BroadeningResult {
        b,
        k_omega_observed: b * k_omega,
        contrast_observed: contrast * loss,
        sensitivity_ratio: b * loss,
        length_scale_m: length,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioPoint {
    #[serde(rename = "T_s")]
    pub big_t: f64,
    pub ratio: f64,
}

/// Sensitivity ratio versus T, with σf evaluated after the full 2T expansion.
pub fn sensitivity_ratio_curve(
    species: &SpeciesData,
    sigma_0: f64,
    temperature: f64,
    k_omega_of_t: impl Fn(f64) -> f64,
    t_values: &[f64],
    scale: LengthScale,
) -> Result<Vec<RatioPoint>> {
    if t_values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("T range must be strictly increasing".into()));
    }
    t_values
        .iter()
        .map(|&t| {
            ensure_positive("T", t)?;
            let sigma_f = expanded_size(species, sigma_0, temperature, 2.0 * t);
            let r = broadening(sigma_0, sigma_f, k_omega_of_t(t), 1.0, scale)?;
            Ok(RatioPoint {
                big_t: t,
                ratio: r.sensitivity_ratio,
            })
        })
        .collect()
}

pub fn ratio_curve_csv(points: &[RatioPoint]) -> String {
    let mut out = String::from("T_s,ratio\n");
    for p in points {
        out.push_str(&format!("{},{}\n", p.big_t, p.ratio));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Axis {
    #[serde(rename = "PSI-1")]
    Psi1,
    #[serde(rename = "PSI-2")]
    Psi2,
    #[serde(rename = "PSI-3")]
    Psi3,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::Psi1, Axis::Psi2, Axis::Psi3];
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Psi1 => "PSI-1",
            Axis::Psi2 => "PSI-2",
            Axis::Psi3 => "PSI-3",
        })
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "PSI-1" | "psi-1" | "1" => Ok(Axis::Psi1),
            "PSI-2" | "psi-2" | "2" => Ok(Axis::Psi2),
            "PSI-3" | "psi-3" | "3" => Ok(Axis::Psi3),
            _ => Err(Error::Config(format!("unknown axis {s:?}"))),
        }
    }
}

/// The six MOT / molasses beams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MotBeam {
    #[serde(rename = "MOT 1")]
    Mot1,
    #[serde(rename = "MOT 1'")]
    Mot1Prime,
    #[serde(rename = "MOT 2")]
    Mot2,
    #[serde(rename = "MOT 2'")]
    Mot2Prime,
    #[serde(rename = "MOT 3")]
    Mot3,
    #[serde(rename = "MOT 3'")]
    Mot3Prime,
}

impl MotBeam {
    pub const ALL: [MotBeam; 6] = [
        MotBeam::Mot1,
        MotBeam::Mot1Prime,
        MotBeam::Mot2,
        MotBeam::Mot2Prime,
        MotBeam::Mot3,
        MotBeam::Mot3Prime,
    ];

    /// 1-based index of the AOM driving this beam.
    pub fn aom_index(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_aom_index(i: u8) -> Option<Self> {
        Self::ALL.get(usize::from(i).checked_sub(1)?).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LaunchPlan {
    pub axis: Axis,
    /// Beams whose frequencies are reduced to launch along `axis`.
    pub reduced_beams: Vec<MotBeam>,
}

pub fn launch_plan(axis: Axis) -> LaunchPlan {
    use MotBeam::*;
    let reduced_beams = match axis {
        Axis::Psi1 => vec![Mot2Prime, Mot3Prime],
        Axis::Psi2 => vec![Mot1Prime, Mot2Prime, Mot3],
        Axis::Psi3 => vec![Mot1, Mot2Prime, Mot3],
    };
    LaunchPlan {
        axis,
        reduced_beams,
    }
}

/// Longitudinal travel and transverse sag during a free flight of `span`.
pub fn flight_kinematics(v_bias: f64, span: f64, transverse_g: f64) -> Result<(f64, f64)> {
    ensure_non_negative("v_bias", v_bias)?;
    ensure_non_negative("span", span)?;
    ensure_non_negative("transverse_g", transverse_g)?;
    Ok((v_bias * span, 0.5 * transverse_g * span * span))
}
