//! LMT pulse sequences, inertial phase observables, Raman resonances and the
//! VCO frequency schedule.
//!
//! Pulses are zero-length events. For LMT order `n` the sequence holds the
//! π/2–π–π/2 core (A_0, B_0, C_0) plus 4n extra π pulses. With A_0 at t = 0,
//! B_0 at T and C_0 at 2T, the pair (A_j, B_j) spans T_j centred on T/2 and
//! the pair (B_-j, C_-j) is its mirror image about B_0:
//!
//! ```text
//! A_0  A_1 .. A_n  B_n .. B_1  B_0  B_-1 .. B_-n  C_-n .. C_-1  C_0
//! ```
//!
//! Times are strictly increasing iff T > T_1 > T_2 > ... > T_n > 0.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use log::warn;
use nalgebra::Vector3;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{ensure_non_negative, ensure_positive, Error, Result};
use crate::physics::{k_eff, SpeciesData, HBAR};

/// Pulse family and signed index: `A(j)` j ≥ 0, `B(j)` any sign, `C(j)` j ≤ 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PulseLabel {
    A(i32),
    B(i32),
    C(i32),
}

impl PulseLabel {
    /// Label of the pulse mirrored about B_0.
    pub fn mirror(self) -> Self {
        match self {
            PulseLabel::A(j) => PulseLabel::C(-j),
            PulseLabel::C(j) => PulseLabel::A(-j),
            PulseLabel::B(j) => PulseLabel::B(-j),
        }
    }

    fn index(self) -> i32 {
        match self {
            PulseLabel::A(j) | PulseLabel::B(j) | PulseLabel::C(j) => j,
        }
    }
}

impl fmt::Display for PulseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PulseLabel::A(j) => write!(f, "A_{j}"),
            PulseLabel::B(j) => write!(f, "B_{j}"),
            PulseLabel::C(j) => write!(f, "C_{j}"),
        }
    }
}

impl FromStr for PulseLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("bad pulse label {s:?}"));
        let (family, idx) = s.split_once('_').ok_or_else(bad)?;
        let j: i32 = idx.parse().map_err(|_| bad())?;
        match family {
            "A" if j >= 0 => Ok(PulseLabel::A(j)),
            "B" => Ok(PulseLabel::B(j)),
            "C" if j <= 0 => Ok(PulseLabel::C(j)),
            _ => Err(bad()),
        }
    }
}

impl Serialize for PulseLabel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PulseLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseKind {
    HalfPi,
    Pi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub label: PulseLabel,
    #[serde(rename = "time_s")]
    pub time: f64,
    pub kind: PulseKind,
    /// Effective Raman direction, +1 or -1.
    pub direction: i8,
}

/// Effective direction of a pulse under the alternating LMT pattern.
fn direction_of(label: PulseLabel) -> i8 {
    if label.index().rem_euclid(2) == 0 {
        1
    } else {
        -1
    }
}

/// A validated LMT pulse train.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PulseSequence {
    order: usize,
    pulses: Vec<Pulse>,
}

/// Builds the order-`n` sequence with core interval `big_t` and extra intervals `intervals`.
pub fn build_sequence(n: usize, big_t: f64, intervals: &[f64]) -> Result<PulseSequence> {
    if intervals.len() != n {
        return Err(Error::Config(format!(
            "LMT order {n} needs {n} extra intervals, got {}",
            intervals.len()
        )));
    }
    ensure_positive("big_t", big_t)?;
    for (j, &t) in intervals.iter().enumerate() {
        ensure_positive(&format!("extra_intervals[{j}]"), t)?;
    }

    let mut pulses = Vec::with_capacity(4 * n + 3);
    let mut push = |label: PulseLabel, time: f64| {
        let kind = if matches!(label, PulseLabel::A(0) | PulseLabel::C(0)) {
            PulseKind::HalfPi
        } else {
            PulseKind::Pi
        };
        pulses.push(Pulse {
            label,
            time,
            kind,
            direction: direction_of(label),
        });
    };

    push(PulseLabel::A(0), 0.0);
    for (j, &tj) in intervals.iter().enumerate() {
        push(PulseLabel::A(j as i32 + 1), 0.5 * (big_t - tj));
    }
    for (j, &tj) in intervals.iter().enumerate().rev() {
        push(PulseLabel::B(j as i32 + 1), 0.5 * (big_t + tj));
    }
    push(PulseLabel::B(0), big_t);
    for (j, &tj) in intervals.iter().enumerate() {
        push(PulseLabel::B(-(j as i32 + 1)), 0.5 * (3.0 * big_t - tj));
    }
    for (j, &tj) in intervals.iter().enumerate().rev() {
        push(PulseLabel::C(-(j as i32 + 1)), 0.5 * (3.0 * big_t + tj));
    }
    push(PulseLabel::C(0), 2.0 * big_t);

    PulseSequence::from_pulses(pulses)
}

impl PulseSequence {
    /// Validates a pulse list (e.g. deserialized) and wraps it.
    pub fn from_pulses(pulses: Vec<Pulse>) -> Result<Self> {
        if pulses.len() < 3 || !(pulses.len() - 3).is_multiple_of(4) {
            return Err(Error::Config(format!(
                "pulse count {} is not of the form 4n + 3",
                pulses.len()
            )));
        }
        let seq = Self {
            order: (pulses.len() - 3) / 4,
            pulses,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.order as i32;
        if self.pulses.len() != 4 * self.order + 3 {
            return Err(Error::Config("pulse count does not match order".into()));
        }
        let mut expected = vec![PulseLabel::A(0)];
        expected.extend((1..=n).map(PulseLabel::A));
        expected.extend((1..=n).rev().map(PulseLabel::B));
        expected.push(PulseLabel::B(0));
        expected.extend((1..=n).map(|j| PulseLabel::B(-j)));
        expected.extend((1..=n).rev().map(|j| PulseLabel::C(-j)));
        expected.push(PulseLabel::C(0));

        for (p, want) in self.pulses.iter().zip(&expected) {
            if p.label != *want {
                return Err(Error::Config(format!("expected pulse {want}, found {}", p.label)));
            }
            let kind = if matches!(p.label, PulseLabel::A(0) | PulseLabel::C(0)) {
                PulseKind::HalfPi
            } else {
                PulseKind::Pi
            };
            if p.kind != kind {
                return Err(Error::Config(format!("pulse {} has wrong kind {:?}", p.label, p.kind)));
            }
            if p.direction != direction_of(p.label) {
                return Err(Error::Config(format!(
                    "pulse {} has direction {} breaking the alternating pattern",
                    p.label, p.direction
                )));
            }
            if !p.time.is_finite() {
                return Err(Error::Config(format!("pulse {} has non-finite time", p.label)));
            }
        }
        for w in self.pulses.windows(2) {
            if w[1].time <= w[0].time {
                return Err(Error::Config(format!(
                    "pulse times must be increasing: {} at {} s is not after {} at {} s",
                    w[1].label, w[1].time, w[0].label, w[0].time
                )));
            }
        }
        let center = self.pulses[2 * self.order + 1].time;
        let span = self.span();
        for (p, q) in self.pulses.iter().zip(self.pulses.iter().rev()) {
            if q.label != p.label.mirror() {
                return Err(Error::Config(format!("pulse {} lacks its mirror", p.label)));
            }
            if ((center - p.time) - (q.time - center)).abs() > 1e-12 * span {
                return Err(Error::Config(format!(
                    "sequence not symmetric about B_0 at pulse {}",
                    p.label
                )));
            }
        }
        Ok(())
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn pulses(&self) -> &[Pulse] {
        &self.pulses
    }

    fn time_of(&self, label: PulseLabel) -> f64 {
        self.pulses
            .iter()
            .find(|p| p.label == label)
            .map(|p| p.time)
            .expect("validated sequence contains every label")
    }

    /// Interval T between A_0 and B_0.
    pub fn big_t(&self) -> f64 {
        self.time_of(PulseLabel::B(0)) - self.time_of(PulseLabel::A(0))
    }

    /// Interval T_j between A_j and B_j, j = 1..=order.
    pub fn interval(&self, j: usize) -> f64 {
        let j = j as i32;
        self.time_of(PulseLabel::B(j)) - self.time_of(PulseLabel::A(j))
    }

    pub fn intervals(&self) -> Vec<f64> {
        (1..=self.order).map(|j| self.interval(j)).collect()
    }

    /// Total duration A_0 → C_0 (= 2T).
    pub fn span(&self) -> f64 {
        self.pulses.last().unwrap().time - self.pulses[0].time
    }

    /// T + ΣT_j, the factor in the printed fringe wavevector.
    pub fn fringe_factor(&self) -> f64 {
        self.big_t() + self.intervals().iter().sum::<f64>()
    }

    /// T + 2ΣT_j, the factor of the LMT phase shifts.
    pub fn phase_factor(&self) -> f64 {
        self.big_t() + 2.0 * self.intervals().iter().sum::<f64>()
    }

    /// Same sequence with every effective direction flipped. Not a valid
    /// [`PulseSequence`] (A_0 must be +1), so it is returned as raw pulses.
    pub fn reversed_directions(&self) -> Vec<Pulse> {
        self.pulses
            .iter()
            .map(|p| Pulse {
                direction: -p.direction,
                ..*p
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.pulses)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let pulses: Vec<Pulse> = serde_json::from_str(text)?;
        Self::from_pulses(pulses)
    }
}

/// Acceleration phase k_eff·a·T·(T + 2ΣT_j), signed by the direction of A_0.
pub fn acceleration_phase(seq: &PulseSequence, accel: f64, k_eff: f64) -> f64 {
    let dir = f64::from(seq.pulses[0].direction);
    dir * k_eff * accel * seq.big_t() * seq.phase_factor()
}

fn check_small_rotation(seq: &PulseSequence, omega: &Vector3<f64>) {
    let theta = omega.norm() * seq.big_t();
    if theta > 0.1 {
        warn!("|Ω|·T = {theta:.3} exceeds 0.1; small-rotation phase formulas are inaccurate");
    }
}

/// Rotation phase (k_eff × Ω)·r·(T + 2ΣT_j), with `r` the displacement from A_0 to C_0.
pub fn rotation_phase(
    seq: &PulseSequence,
    omega: &Vector3<f64>,
    r: &Vector3<f64>,
    k_eff_vec: &Vector3<f64>,
) -> f64 {
    check_small_rotation(seq, omega);
    k_eff_vec.cross(omega).dot(r) * seq.phase_factor()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseObservables {
    pub phi_a: f64,
    /// k_eff × Ω·(T + ΣT_j)
    pub k_omega: Vector3<f64>,
    /// k_eff × Ω·(T + 2ΣT_j)
    pub k_omega_appendix: Vector3<f64>,
}

/// Both fringe wavevector variants. They coincide for n = 0.
pub fn fringe_wavevector(
    seq: &PulseSequence,
    omega: &Vector3<f64>,
    k_eff_vec: &Vector3<f64>,
) -> (Vector3<f64>, Vector3<f64>) {
    check_small_rotation(seq, omega);
    let base = k_eff_vec.cross(omega);
    (base * seq.fringe_factor(), base * seq.phase_factor())
}

/// Fringe wavevector and phase for a given inertial state.
pub fn phase_observables(
    seq: &PulseSequence,
    omega: &Vector3<f64>,
    accel: &Vector3<f64>,
    k_eff_vec: &Vector3<f64>,
) -> PhaseObservables {
    let (k_omega, k_omega_appendix) = fringe_wavevector(seq, omega, k_eff_vec);
    let k = k_eff_vec.norm();
    let a_par = if k > 0.0 { k_eff_vec.dot(accel) / k } else { 0.0 };
    PhaseObservables {
        phi_a: acceleration_phase(seq, a_par, k),
        k_omega,
        k_omega_appendix,
    }
}

/// The three Raman resonance frequencies for bias velocity `v` along the beams.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RamanResonances {
    /// Co-propagating resonance (hyperfine splitting), Hz.
    pub co: f64,
    pub up: f64,
    pub down: f64,
    /// k_eff·v / 2π, Hz.
    pub doppler: f64,
    /// ħ k_eff² / (2m) / 2π, Hz.
    pub recoil: f64,
}

pub fn raman_resonances(v: f64, species: &SpeciesData) -> Result<RamanResonances> {
    ensure_non_negative("bias_velocity", v)?;
    let ke = k_eff(species);
    let doppler = ke * v / (2.0 * PI);
    let recoil = HBAR * ke * ke / (2.0 * species.mass) / (2.0 * PI);
    let co = species.hyperfine_splitting;
    Ok(RamanResonances {
        co,
        up: co + doppler + recoil,
        down: co - doppler - recoil,
        doppler,
        recoil,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeparationCheck {
    pub ok: bool,
    /// Doppler splitting over thermal Doppler width, i.e. v / v_rms.
    pub ratio: f64,
    pub margin: f64,
}

/// Whether the bias Doppler splitting 2kv clears `margin` thermal widths 2k·v_rms.
pub fn resonance_separation_ok(
    v: f64,
    temperature: f64,
    species: &SpeciesData,
    margin: f64,
) -> SeparationCheck {
    let v_rms = species.thermal_velocity(temperature);
    SeparationCheck {
        ok: v > 0.0 && v >= margin * v_rms,
        ratio: v / v_rms,
        margin,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VcoEntry {
    pub time: f64,
    pub frequency: f64,
    pub direction: i8,
}

/// VCO set-points: f_up for effective direction +1, f_down for -1.
pub fn vco_schedule(pulses: &[Pulse], v: f64, species: &SpeciesData) -> Result<Vec<VcoEntry>> {
    let res = raman_resonances(v, species)?;
    Ok(pulses
        .iter()
        .map(|p| VcoEntry {
            time: p.time,
            frequency: if p.direction >= 0 { res.up } else { res.down },
            direction: p.direction,
        })
        .collect())
}
