//! Compiles the sequential 3-axis IMU cycle into a hardware event timeline.
//!
//! Each axis segment runs MOT load → molasses → moving-molasses launch →
//! state selection → LMT Raman train → imaging. Event values are positive RF
//! drive frequencies (Hz) or discrete states. Phase durations other than the
//! MOT load come from [`PhaseTimings`] and are recorded as assumptions.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::interferometer::{build_sequence, raman_resonances, vco_schedule, PulseKind, PulseSequence};
use crate::kinematics::{launch_plan, Axis, MotBeam};
use crate::physics::{ExperimentConfig, PhaseTimings, SpeciesData};

/// Laser and RF frequency plan, Hz. Detunings are relative to F = 2 → F' = 3.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyPlan {
    pub lock_offset: f64,
    /// double-pass
    pub mot_aom: f64,
    pub molasses_aom: f64,
    pub repump_eom: f64,
    pub raman_aom: f64,
    pub raman_eom: f64,
    pub imaging_offset: f64,
}

impl Default for FrequencyPlan {
    fn default() -> Self {
        Self {
            lock_offset: -212e6,
            mot_aom: 100e6,
            molasses_aom: 60e6,
            repump_eom: 6.623e9,
            raman_aom: -500e6,
            raman_eom: 6.8347e9,
            imaging_offset: 212e6,
        }
    }
}

pub const MOT_DETUNING: f64 = -12e6;
pub const MOLASSES_DETUNING: f64 = -92e6;

impl FrequencyPlan {
    pub fn mot_detuning(&self) -> f64 {
        self.lock_offset + 2.0 * self.mot_aom
    }

    pub fn molasses_detuning(&self) -> f64 {
        self.lock_offset + 2.0 * self.molasses_aom
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Channel {
    /// 1..=6, in the order MOT 1, 1', 2, 2', 3, 3'
    MotAom(u8),
    RepumpEom,
    RamanAom,
    RamanEom,
    ImagingAom,
    /// 1..=4
    Vr(u8),
    MotCoils,
    BiasCoil,
    Camera,
}

impl Channel {
    pub fn mot(beam: MotBeam) -> Self {
        Channel::MotAom(beam.aom_index())
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Channel::MotAom(i) => write!(f, "MOT_AOM_{i}"),
            Channel::RepumpEom => f.write_str("REPUMP_EOM"),
            Channel::RamanAom => f.write_str("RAMAN_AOM"),
            Channel::RamanEom => f.write_str("RAMAN_EOM"),
            Channel::ImagingAom => f.write_str("IMAGING_AOM"),
            Channel::Vr(i) => write!(f, "VR_{i}"),
            Channel::MotCoils => f.write_str("MOT_COILS"),
            Channel::BiasCoil => f.write_str("BIAS_COIL"),
            Channel::Camera => f.write_str("CAMERA"),
        }
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let indexed = |prefix: &str, max: u8| -> Option<u8> {
            let i: u8 = s.strip_prefix(prefix)?.parse().ok()?;
            (1..=max).contains(&i).then_some(i)
        };
        let ch = match s {
            "REPUMP_EOM" => Channel::RepumpEom,
            "RAMAN_AOM" => Channel::RamanAom,
            "RAMAN_EOM" => Channel::RamanEom,
            "IMAGING_AOM" => Channel::ImagingAom,
            "MOT_COILS" => Channel::MotCoils,
            "BIAS_COIL" => Channel::BiasCoil,
            "CAMERA" => Channel::Camera,
            _ => {
                if let Some(i) = indexed("MOT_AOM_", 6) {
                    Channel::MotAom(i)
                } else if let Some(i) = indexed("VR_", 4) {
                    Channel::Vr(i)
                } else {
                    return Err(Error::Parse(format!("unknown channel {s:?}")));
                }
            }
        };
        Ok(ch)
    }
}

impl Serialize for Channel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Channel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    SetFrequency,
    GateOn,
    GateOff,
    SetState,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::SetFrequency => "set_frequency",
            Action::GateOn => "gate_on",
            Action::GateOff => "gate_off",
            Action::SetState => "set_state",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum State {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    /// Hz
    Frequency(f64),
    State(State),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Frequency(hz) => write!(f, "{hz}"),
            Value::State(State::On) => f.write_str("on"),
            Value::State(State::Off) => f.write_str("off"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// s
    pub t_start: f64,
    /// s
    pub duration: f64,
    pub channel: Channel,
    pub action: Action,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Value>,
}

impl Event {
    pub fn end(&self) -> f64 {
        self.t_start + self.duration
    }
}

/// Phase boundaries of one axis segment, absolute times in s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub axis: Axis,
    pub start: f64,
    pub molasses_start: f64,
    pub launch_start: f64,
    pub launch_end: f64,
    pub train_start: f64,
    pub train_end: f64,
    pub imaging_start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineMetadata {
    pub bias_velocity: f64,
    pub species: SpeciesData,
    pub plan: FrequencyPlan,
    pub mot_load_time: f64,
    pub expansion_time: f64,
    pub timings: PhaseTimings,
    /// Durations and mappings that are modelling assumptions rather than measured values.
    pub assumptions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub events: Vec<Event>,
    pub axis_order: Vec<Axis>,
    pub total_duration: f64,
    pub segments: Vec<Segment>,
    pub metadata: TimelineMetadata,
}

impl Timeline {
    /// Update rate of the full 3-axis cycle, Hz.
    pub fn bandwidth(&self) -> f64 {
        1.0 / self.total_duration
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_start_s,duration_s,channel,action,value\n");
        for e in &self.events {
            let value = e.value.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                e.t_start, e.duration, e.channel, e.action, value
            ));
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = format!(
            "3-axis cycle: {} events, total {:.6} s, bandwidth {:.4} Hz\n",
            self.events.len(),
            self.total_duration,
            self.bandwidth()
        );
        for s in &self.segments {
            let raman = self
                .events
                .iter()
                .filter(|e| {
                    e.channel == Channel::RamanAom
                        && e.action == Action::GateOn
                        && e.t_start >= s.train_start
                        && e.t_start <= s.train_end
                })
                .count();
            out.push_str(&format!(
                "  {}: {:.6}-{:.6} s, launch ends {:.6} s, {} Raman pulses, imaging at {:.6} s\n",
                s.axis, s.start, s.end, s.launch_end, raman, s.imaging_start
            ));
        }
        out.push_str("  assumptions:\n");
        for a in &self.metadata.assumptions {
            out.push_str(&format!("    - {a}\n"));
        }
        out
    }
}

struct Builder {
    events: Vec<Event>,
}

impl Builder {
    fn push(&mut self, t_start: f64, duration: f64, channel: Channel, action: Action, value: Option<Value>) {
        self.events.push(Event {
            t_start,
            duration,
            channel,
            action,
            value,
        });
    }

    fn freq(&mut self, t: f64, channel: Channel, hz: f64) {
        self.push(t, 0.0, channel, Action::SetFrequency, Some(Value::Frequency(hz)));
    }

    fn state(&mut self, t: f64, duration: f64, channel: Channel, state: State) {
        self.push(t, duration, channel, Action::SetState, Some(Value::State(state)));
    }

    fn gate(&mut self, t: f64, duration: f64, channel: Channel) {
        self.push(t, duration, channel, Action::GateOn, None);
    }

    fn gate_off(&mut self, t: f64, channel: Channel) {
        self.push(t, 0.0, channel, Action::GateOff, None);
    }
}

fn axis_vr(axis: Axis) -> Channel {
    Channel::Vr(match axis {
        Axis::Psi1 => 1,
        Axis::Psi2 => 2,
        Axis::Psi3 => 3,
    })
}

/// Light routing switch between the MOT and Raman beam paths.
const ROUTING_VR: Channel = Channel::Vr(4);

fn pulse_width(kind: PulseKind, timings: &PhaseTimings) -> f64 {
    match kind {
        PulseKind::HalfPi => timings.half_pi_pulse,
        PulseKind::Pi => timings.pi_pulse,
    }
}

/// One axis segment starting at `start`. Returns its events and phase boundaries.
pub fn build_axis_cycle(
    axis: Axis,
    cfg: &ExperimentConfig,
    seq: &PulseSequence,
    plan: &FrequencyPlan,
    start: f64,
) -> Result<(Vec<Event>, Segment)> {
    let tm = &cfg.timings;
    let mut b = Builder { events: Vec::new() };
    let mot_aoms: Vec<Channel> = MotBeam::ALL.iter().map(|&m| Channel::mot(m)).collect();

    let molasses_start = start + cfg.mot_load_time;
    let launch_start = molasses_start + tm.molasses;
    let launch_end = launch_start + tm.launch;
    let cooling_window = launch_end - start;

    // MOT load
    b.state(start, cfg.mot_load_time, Channel::MotCoils, State::On);
    b.state(start, 0.0, ROUTING_VR, State::Off);
    for &ch in &mot_aoms {
        b.freq(start, ch, plan.mot_aom);
        b.gate(start, cooling_window, ch);
    }
    b.freq(start, Channel::RepumpEom, plan.repump_eom);
    b.gate(start, cooling_window, Channel::RepumpEom);

    // molasses: field off first, then the AOM step
    b.state(molasses_start, 0.0, Channel::MotCoils, State::Off);
    for &ch in &mot_aoms {
        b.freq(molasses_start, ch, plan.molasses_aom);
    }
    b.freq(molasses_start, Channel::RepumpEom, plan.repump_eom);

    // moving-molasses launch
    let launch_shift = cfg.bias_velocity / cfg.species.wavelength;
    for beam in launch_plan(axis).reduced_beams {
        b.freq(launch_start, Channel::mot(beam), plan.molasses_aom - launch_shift);
    }

    // release
    for &ch in &mot_aoms {
        b.gate_off(launch_end, ch);
    }
    b.gate_off(launch_end, Channel::RepumpEom);
    let imaging_start = launch_end + cfg.expansion_time;
    let imaging_end = imaging_start + tm.imaging;
    b.state(launch_end, imaging_end - launch_end, Channel::BiasCoil, State::On);
    b.state(launch_end, 0.0, ROUTING_VR, State::On);
    b.state(launch_end, imaging_end - launch_end, axis_vr(axis), State::On);

    // state selection: Raman π pulse on the upper resonance, then blow-away
    if tm.pi_pulse + tm.blow_away > tm.state_selection {
        return Err(Error::Config(format!(
            "state selection window {:e} s is shorter than pi pulse + blow-away {:e} s",
            tm.state_selection,
            tm.pi_pulse + tm.blow_away
        )));
    }
    let res = raman_resonances(cfg.bias_velocity, &cfg.species)?;
    b.freq(launch_end, Channel::RamanAom, plan.raman_aom.abs());
    b.freq(launch_end, Channel::RamanEom, res.up);
    b.gate(launch_end, tm.pi_pulse, Channel::RamanAom);
    b.freq(launch_end + tm.pi_pulse, Channel::ImagingAom, plan.imaging_offset);
    b.gate(launch_end + tm.pi_pulse, tm.blow_away, Channel::ImagingAom);

    // LMT train, each gate centred on its nominal pulse time
    let train_start = launch_end + tm.state_selection;
    let max_width = tm.half_pi_pulse.max(tm.pi_pulse);
    let origin = train_start + 0.5 * max_width;
    let vco = vco_schedule(seq.pulses(), cfg.bias_velocity, &cfg.species)?;
    let mut train_end = train_start;
    for (pulse, entry) in seq.pulses().iter().zip(&vco) {
        let w = pulse_width(pulse.kind, tm);
        let t = origin + pulse.time - 0.5 * w;
        b.freq(t, Channel::RamanEom, entry.frequency);
        b.gate(t, w, Channel::RamanAom);
        train_end = t + w;
    }
    if train_end > imaging_start {
        return Err(Error::Config(format!(
            "free-flight budget violated on {axis}: Raman train ends {:.6e} s after release but imaging starts at {:.6e} s",
            train_end - launch_end,
            cfg.expansion_time
        )));
    }

    // imaging
    b.freq(imaging_start, Channel::ImagingAom, plan.imaging_offset);
    b.gate(imaging_start, tm.imaging, Channel::ImagingAom);
    b.gate(imaging_start, tm.imaging, Channel::Camera);
    b.state(imaging_end, 0.0, axis_vr(axis), State::Off);

    let end = imaging_end + tm.inter_axis_dead_time;
    let mut events = b.events;
    events.sort_by(|a, b| a.t_start.total_cmp(&b.t_start));
    Ok((
        events,
        Segment {
            axis,
            start,
            molasses_start,
            launch_start,
            launch_end,
            train_start,
            train_end,
            imaging_start,
            end,
        },
    ))
}

fn assumptions(cfg: &ExperimentConfig) -> Vec<String> {
    let t = &cfg.timings;
    vec![
        format!("molasses duration {} s", t.molasses),
        format!("launch duration {} s", t.launch),
        format!("state selection window {} s", t.state_selection),
        format!("blow-away pulse {} s", t.blow_away),
        format!("imaging window {} s", t.imaging),
        format!("pi/2 pulse {} s, pi pulse {} s", t.half_pi_pulse, t.pi_pulse),
        format!("inter-axis dead time {} s", t.inter_axis_dead_time),
        "launch lowers the reduced beams' AOM drive by bias_velocity / wavelength".into(),
        "repump detuning change during molasses emitted as one set_frequency at molasses start".into(),
        "VR_1..3 route Raman light to PSI-1..3; VR_4 switches MOT/Raman paths (binary states)".into(),
        "imaging AOM at +212 MHz; the 92 MHz caption value is not used".into(),
    ]
}

/// Three axis segments back to back, PSI-1, PSI-2, PSI-3.
pub fn build_imu_cycle(cfg: &ExperimentConfig, plan: &FrequencyPlan) -> Result<Timeline> {
    build_imu_cycle_ordered(cfg, plan, Axis::ALL)
}

pub fn build_imu_cycle_ordered(
    cfg: &ExperimentConfig,
    plan: &FrequencyPlan,
    order: [Axis; 3],
) -> Result<Timeline> {
    cfg.validate()?;
    if order.iter().collect::<HashSet<_>>().len() != 3 {
        return Err(Error::Config(format!("axis order {order:?} must name each axis once")));
    }
    let seq = build_sequence(cfg.lmt_order, cfg.big_t, &cfg.extra_intervals)?;
    let mut events = Vec::new();
    let mut segments = Vec::new();
    let mut t = 0.0;
    for axis in order {
        let (ev, seg) = build_axis_cycle(axis, cfg, &seq, plan, t)?;
        events.extend(ev);
        t = seg.end;
        segments.push(seg);
    }
    let total_duration = events.iter().map(Event::end).fold(t, f64::max);
    Ok(Timeline {
        events,
        axis_order: order.to_vec(),
        total_duration,
        segments,
        metadata: TimelineMetadata {
            bias_velocity: cfg.bias_velocity,
            species: cfg.species,
            plan: *plan,
            mot_load_time: cfg.mot_load_time,
            expansion_time: cfg.expansion_time,
            timings: cfg.timings,
            assumptions: assumptions(cfg),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: String,
    pub message: String,
}

fn violation(rule: &str, message: impl Into<String>) -> Violation {
    Violation {
        rule: rule.into(),
        message: message.into(),
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300)
}

/// Checks a timeline against the plan and every structural invariant.
pub fn validate_timeline(t: &Timeline, plan: &FrequencyPlan) -> Vec<Violation> {
    let mut out = Vec::new();

    if plan.mot_detuning() != MOT_DETUNING {
        out.push(violation(
            "mot_detuning",
            format!("lock_offset + 2*mot_aom = {} Hz, expected {MOT_DETUNING} Hz", plan.mot_detuning()),
        ));
    }
    if plan.molasses_detuning() != MOLASSES_DETUNING {
        out.push(violation(
            "molasses_detuning",
            format!(
                "lock_offset + 2*molasses_aom = {} Hz, expected {MOLASSES_DETUNING} Hz",
                plan.molasses_detuning()
            ),
        ));
    }

    let mut seen = HashSet::new();
    let mut last_t = f64::NEG_INFINITY;
    let mut last_end: f64 = 0.0;
    for (i, e) in t.events.iter().enumerate() {
        if !(e.t_start.is_finite() && e.t_start >= 0.0) {
            out.push(violation("event_time", format!("event {i} starts at {}", e.t_start)));
        }
        if !(e.duration.is_finite() && e.duration >= 0.0) {
            out.push(violation("event_duration", format!("event {i} has duration {}", e.duration)));
        }
        if let Some(Value::Frequency(hz)) = e.value {
            if !(hz.is_finite() && hz > 0.0) {
                out.push(violation("frequency_positive", format!("event {i} on {} sets {hz} Hz", e.channel)));
            }
        }
        if e.t_start < last_t {
            out.push(violation(
                "ordering",
                format!("event {i} at {} s precedes the previous event at {last_t} s", e.t_start),
            ));
        }
        if !seen.insert((e.t_start.to_bits(), e.channel, e.action)) {
            out.push(violation(
                "ordering",
                format!("duplicate {} {} at {} s", e.channel, e.action, e.t_start),
            ));
        }
        last_t = last_t.max(e.t_start);
        last_end = last_end.max(e.end());
    }
    let expected_total = t.segments.last().map_or(last_end, |s| s.end.max(last_end));
    if !close(t.total_duration, expected_total) {
        out.push(violation(
            "total_duration",
            format!("total_duration {} s, expected {expected_total} s", t.total_duration),
        ));
    }

    let axes: HashSet<_> = t.axis_order.iter().collect();
    if t.axis_order.len() != 3 || axes.len() != 3 || t.segments.len() != 3 {
        out.push(violation("axis_order", format!("expected three distinct axes, got {:?}", t.axis_order)));
    }

    let allowed_vco = raman_resonances(t.metadata.bias_velocity, &t.metadata.species).ok();
    for (i, e) in t.events.iter().enumerate() {
        if e.channel == Channel::RamanEom && e.action == Action::SetFrequency {
            let ok = match (allowed_vco, e.value) {
                (Some(r), Some(Value::Frequency(hz))) => close(hz, r.up) || close(hz, r.down),
                _ => false,
            };
            if !ok {
                out.push(violation(
                    "vco_frequency",
                    format!("event {i}: RAMAN_EOM value {:?} is not a Raman resonance", e.value),
                ));
            }
        }
    }

    for s in &t.segments {
        let seg_events: Vec<&Event> = t
            .events
            .iter()
            .filter(|e| e.t_start >= s.start && e.t_start < s.end)
            .collect();

        let cameras = seg_events
            .iter()
            .filter(|e| e.channel == Channel::Camera && e.action == Action::GateOn)
            .count();
        if cameras != 1 {
            out.push(violation("imaging_window", format!("{}: {cameras} camera windows", s.axis)));
        }

        let coils_off = seg_events
            .iter()
            .filter(|e| e.channel == Channel::MotCoils && e.value == Some(Value::State(State::Off)))
            .map(|e| e.t_start)
            .fold(f64::INFINITY, f64::min);
        if coils_off > s.molasses_start {
            out.push(violation(
                "coils_before_molasses",
                format!("{}: MOT coils still on at molasses start {} s", s.axis, s.molasses_start),
            ));
        }

        let mut reduced: Vec<MotBeam> = seg_events
            .iter()
            .filter(|e| e.t_start == s.launch_start && e.action == Action::SetFrequency)
            .filter_map(|e| match e.channel {
                Channel::MotAom(i) => MotBeam::from_aom_index(i),
                _ => None,
            })
            .collect();
        reduced.sort();
        let mut expected = launch_plan(s.axis).reduced_beams;
        expected.sort();
        if reduced != expected {
            out.push(violation(
                "launch_beams",
                format!("{}: launch reduces {reduced:?}, expected {expected:?}", s.axis),
            ));
        }

        let raman_end = seg_events
            .iter()
            .filter(|e| e.channel == Channel::RamanAom && e.action == Action::GateOn)
            .map(|e| e.end())
            .fold(f64::NEG_INFINITY, f64::max);
        if raman_end > s.imaging_start {
            out.push(violation(
                "free_flight",
                format!("{}: Raman light until {raman_end} s overlaps imaging at {} s", s.axis, s.imaging_start),
            ));
        }
    }
    out
}
