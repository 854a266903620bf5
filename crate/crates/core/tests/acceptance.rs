//! Acceptance criteria 1-9. Each criterion prints one PASS/FAIL line.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use libtest_mimic::{Arguments, Failed, Trial};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use psi_core::estimation::fit_profile;
use psi_core::exec::{pairwise_sum, Execution};
use psi_core::interferometer::{acceleration_phase, build_sequence, rotation_phase, PulseLabel, PulseSequence};
use psi_core::kinematics::{flight_kinematics, launch_plan, Axis, MotBeam};
use psi_core::physics::{expanded_size, expansion_time_for, k_eff, ExperimentConfig, SpeciesData, STANDARD_GRAVITY};
use psi_core::sensitivity::{
    closed_form_variances, imu_bandwidth, monte_carlo_validate, numeric_variances, sensitivity, SensitivityInputs,
};
use psi_core::sequencer::{build_imu_cycle, validate_timeline, Action, Channel, FrequencyPlan};
use psi_core::synthesis::{derive_seed, wrap_phase, FringeScenario};
use psi_core::systematics::{differential_shift, zeeman_force, zeeman_phase_error, ZeemanScenario};

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Outcome);

fn report(id: u32, title: &str, outcome: Outcome) -> Result<(), Failed> {
    match outcome {
        Ok(detail) => {
            println!("acceptance {id} ({title}): PASS - {detail}");
            Ok(())
        }
        Err(detail) => {
            println!("acceptance {id} ({title}): FAIL - {detail}");
            Err(detail.into())
        }
    }
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    ((value - target) / target).abs() <= rel
}

fn check(ok: bool, detail: String, failures: &mut Vec<String>) -> String {
    if !ok {
        failures.push(detail.clone());
    }
    detail
}

fn finish(parts: Vec<String>, failures: Vec<String>) -> Outcome {
    if failures.is_empty() {
        Ok(parts.join("; "))
    } else {
        Err(format!("{} [failing: {}]", parts.join("; "), failures.join("; ")))
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let ke = k_eff(&SpeciesData::rubidium_87());
    let inputs = SensitivityInputs {
        k_t: 10.0 * ke,
        big_t: 20e-3,
        contrast: 0.5,
        atom_number: 1e6,
        sigma_f: 1e-3,
        cycle_time: 1.0,
    };
    let r = sensitivity(&inputs, 1.0).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let mut failures = Vec::new();
    let parts = vec![
        check(
            within(r.delta_omega_urad_per_rt_hz, 0.88, 0.02),
            format!("dOmega = {:.4} urad/s/rtHz (0.88 +-2%)", r.delta_omega_urad_per_rt_hz),
            &mut failures,
        ),
        check(
            within(r.delta_a_nano_g_per_rt_hz, 4.5, 0.02),
            format!("da = {:.4} nano-g/rtHz (4.5 +-2%)", r.delta_a_nano_g_per_rt_hz),
            &mut failures,
        ),
        check(elapsed < Duration::from_secs(1), format!("{elapsed:.2?} (< 1 s)"), &mut failures),
    ];
    finish(parts, failures)
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let rb = SpeciesData::rubidium_87();
    let scn = ZeemanScenario::reference_example();
    let shift = differential_shift(&scn, &rb).map_err(|e| e.to_string())?;
    let phase = zeeman_phase_error(&scn, &rb).map_err(|e| e.to_string())?;
    let force = zeeman_force(scn.b_first_half, scn.gradient, &rb).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let mut failures = Vec::new();
    let parts = vec![
        check(within(shift, 35.0, 0.05), format!("shift {shift:.2} Hz (35 +-5%)"), &mut failures),
        check(
            within(phase / PI, 1.4, 0.05),
            format!("phase {:.3} pi rad (1.4 pi +-5%)", phase / PI),
            &mut failures,
        ),
        check(
            within(force.force_dyn, 1.1e-23, 0.10),
            format!("force {:.3e} dyn (1.1e-23 +-10%)", force.force_dyn),
            &mut failures,
        ),
        check(
            within(force.acceleration_g * 1e6, 81.0, 0.05),
            format!("acceleration {:.2} micro-g (81 +-5%)", force.acceleration_g * 1e6),
            &mut failures,
        ),
        check(elapsed < Duration::from_secs(1), format!("{elapsed:.2?} (< 1 s)"), &mut failures),
    ];
    finish(parts, failures)
}

fn criterion_3() -> Outcome {
    let rb = SpeciesData::rubidium_87();
    let sigma = expanded_size(&rb, 0.2e-3, 6e-6, 0.1);
    let t = expansion_time_for(&rb, 0.2e-3, 1e-3, 6e-6).map_err(|e| e.to_string())?;
    let (travel, sag) = flight_kinematics(1.0, 40e-3, STANDARD_GRAVITY).map_err(|e| e.to_string())?;
    let mut failures = Vec::new();
    let parts = vec![
        check(
            within(sigma, 2.4e-3, 0.03),
            format!("sigma(100 ms) = {:.4} mm (2.4 +-3%)", sigma * 1e3),
            &mut failures,
        ),
        check(
            (t - 40e-3).abs() <= 2e-3,
            format!("expansion to 1 mm = {:.2} ms (40 +-2)", t * 1e3),
            &mut failures,
        ),
        check(
            (7.8e-3..=8.0e-3).contains(&sag),
            format!("sag = {:.3} mm (7.8-8.0)", sag * 1e3),
            &mut failures,
        ),
        check(
            (travel - 0.04).abs() < 1e-12,
            format!("travel = {:.3} cm (4)", travel * 1e2),
            &mut failures,
        ),
    ];
    finish(parts, failures)
}

fn criterion_4() -> Outcome {
    let sigma = 1e-3;
    let sc = FringeScenario::one_dimensional(1e4, 0.5, sigma, 20.0 / sigma, 0.4, 256, 4.0)
        .map_err(|e| e.to_string())?;
    let start = Instant::now();
    let r = monte_carlo_validate(&sc, 2000, 20_240_501, Execution::Sequential).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let target_phi = ((4.0f64 - 0.25) / (2.0 * 1e4 * 0.25)).sqrt();
    let target_k = target_phi / sigma;
    let mut failures = Vec::new();
    let parts = vec![
        check(
            within(r.std_phi_a, target_phi, 0.10),
            format!("std(phi) = {:.5} rad vs {:.5} (ratio {:.3})", r.std_phi_a, target_phi, r.std_phi_a / target_phi),
            &mut failures,
        ),
        check(
            within(r.std_k_omega, target_k, 0.10),
            format!("std(k) = {:.3} rad/m vs {:.3} (ratio {:.3})", r.std_k_omega, target_k, r.std_k_omega / target_k),
            &mut failures,
        ),
        check(!r.flagged, format!("{} failed fits", r.failures), &mut failures),
        check(
            elapsed < Duration::from_secs(300),
            format!("{elapsed:.2?} single-threaded (< 5 min)"),
            &mut failures,
        ),
    ];
    finish(parts, failures)
}

/// Worst relative deviation of (var_phi, var_k) from the closed form over a grid of φ_a.
fn variance_deviation(k_sigma: f64) -> Result<(f64, f64), String> {
    let sigma = 1e-3;
    let c = 0.5;
    let mut worst: (f64, f64) = (0.0, 0.0);
    for i in 0..24 {
        let phi = -PI + 2.0 * PI * (i as f64 + 0.5) / 24.0;
        let sc = FringeScenario::one_dimensional(1e4, c, sigma, k_sigma / sigma, phi, 512, 4.0)
            .map_err(|e| e.to_string())?;
        let f = sc.cloud().map_err(|e| e.to_string())?;
        let cf = closed_form_variances(pairwise_sum(&f), c, sigma).map_err(|e| e.to_string())?;
        let nv = numeric_variances(&f, &sc.grid.x_centers(), sc.k_omega, phi, c).map_err(|e| e.to_string())?;
        let dp = nv.var_phi_a / cf.var_phi_a - 1.0;
        let dk = nv.var_k_omega / cf.var_k_omega - 1.0;
        if dp.abs() > worst.0.abs() {
            worst.0 = dp;
        }
        if dk.abs() > worst.1.abs() {
            worst.1 = dk;
        }
    }
    Ok(worst)
}

fn criterion_5() -> Outcome {
    let (p20, k20) = variance_deviation(20.0)?;
    let (p50, k50) = variance_deviation(50.0)?;
    let (p2, k2) = variance_deviation(2.0)?;
    let mut failures = Vec::new();
    let parts = vec![
        check(
            p20.abs() < 0.02 && k20.abs() < 0.02,
            format!("k*sigma=20: max dev phi {:+.3}%, k {:+.3}% (< 2%)", p20 * 100.0, k20 * 100.0),
            &mut failures,
        ),
        check(
            p50.abs() < 0.005 && k50.abs() < 0.005,
            format!("k*sigma=50: max dev phi {:+.3}%, k {:+.3}% (< 0.5%)", p50 * 100.0, k50 * 100.0),
            &mut failures,
        ),
        check(
            p2.abs() > 0.10 || k2.abs() > 0.10,
            format!("k*sigma=2: max dev phi {:+.3}%, k {:+.3}% (> 10% required)", p2 * 100.0, k2 * 100.0),
            &mut failures,
        ),
    ];
    finish(parts, failures)
}

fn pulse_weight(label: PulseLabel) -> f64 {
    match label {
        PulseLabel::A(0) | PulseLabel::C(0) => 1.0,
        PulseLabel::B(0) => -2.0,
        PulseLabel::A(_) | PulseLabel::C(_) => 2.0,
        PulseLabel::B(_) => -2.0,
    }
}

/// Σ w_p k(t_p)·r(t_p) over the pulse decomposition, with a beam rotating at Ω.
fn brute_force_phase(
    seq: &PulseSequence,
    k0: Vector3<f64>,
    omega: Vector3<f64>,
    r0: Vector3<f64>,
    v: Vector3<f64>,
    a: Vector3<f64>,
) -> f64 {
    seq.pulses()
        .iter()
        .map(|p| {
            let t = p.time;
            let k = k0 + k0.cross(&omega) * t;
            let r = r0 + v * t + a * (0.5 * t * t);
            pulse_weight(p.label) * k.dot(&r)
        })
        .sum()
}

fn random_sequence(rng: &mut ChaCha8Rng, n: usize) -> PulseSequence {
    loop {
        let big_t = rng.random_range(5e-3..50e-3);
        let mut intervals: Vec<f64> = (0..n).map(|_| big_t * rng.random_range(0.02..0.98)).collect();
        intervals.sort_by(|a, b| b.total_cmp(a));
        if let Ok(seq) = build_sequence(n, big_t, &intervals) {
            return seq;
        }
    }
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let ke = k_eff(&SpeciesData::rubidium_87());
    let mut worst_a: f64 = 0.0;
    let mut worst_r: f64 = 0.0;
    let mut cases = 0;
    for n in 0..=5 {
        for _ in 0..50 {
            let seq = random_sequence(&mut rng, n);
            let k_hat = Vector3::new(1.0, 0.0, 0.0);
            let accel = rng.random_range(-20.0..20.0);
            let oracle_a = brute_force_phase(
                &seq,
                k_hat * ke,
                Vector3::zeros(),
                Vector3::new(rng.random_range(-1e-3..1e-3), 0.0, 0.0),
                Vector3::new(rng.random_range(-1.0..1.0), 0.0, 0.0),
                Vector3::new(accel, 0.0, 0.0),
            );
            let got_a = acceleration_phase(&seq, accel, ke);
            worst_a = worst_a.max(((got_a - oracle_a) / oracle_a).abs());

            let omega = Vector3::new(0.0, rng.random_range(-1e-3..1e-3), rng.random_range(-1e-3..1e-3));
            // transverse launch: k0·r(t) = 0
            let v = Vector3::new(0.0, rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let r0 = Vector3::zeros();
            let oracle_r = brute_force_phase(&seq, k_hat * ke, omega, r0, v, Vector3::zeros());
            let r = v * (2.0 * seq.big_t());
            let got_r = rotation_phase(&seq, &omega, &r, &(k_hat * ke));
            worst_r = worst_r.max(((got_r - oracle_r) / oracle_r).abs());
            cases += 1;
        }
    }
    let mut failures = Vec::new();
    let parts = vec![
        check(
            worst_a <= 1e-10,
            format!("acceleration: worst rel err {worst_a:.2e} over {cases} sequences n=0..5 (<= 1e-10)"),
            &mut failures,
        ),
        check(
            worst_r <= 1e-10,
            format!("rotation: worst rel err {worst_r:.2e} (<= 1e-10)"),
            &mut failures,
        ),
    ];
    finish(parts, failures)
}

fn criterion_7() -> Outcome {
    let bw = imu_bandwidth(1.0, 0.0).map_err(|e| e.to_string())?;
    let cfg = ExperimentConfig::reference_defaults();
    let timeline = build_imu_cycle(&cfg, &FrequencyPlan::default()).map_err(|e| e.to_string())?;
    let overhead = timeline.total_duration / 3.0 - cfg.mot_load_time;
    let with_overhead = imu_bandwidth(cfg.mot_load_time, overhead).map_err(|e| e.to_string())?;
    let mut failures = Vec::new();
    let parts = vec![
        check(within(bw, 0.333, 0.01), format!("bandwidth {bw:.4} Hz (0.333 +-1%)"), &mut failures),
        check(
            within(with_overhead, timeline.bandwidth(), 1e-12),
            format!(
                "compiled cycle {:.4} s -> {:.4} Hz with {:.1} ms per-axis overhead",
                timeline.total_duration,
                timeline.bandwidth(),
                overhead * 1e3
            ),
            &mut failures,
        ),
    ];
    finish(parts, failures)
}

fn criterion_8() -> Outcome {
    let mut cfg = ExperimentConfig::reference_defaults();
    cfg.lmt_order = 2;
    cfg.extra_intervals = vec![12e-3, 6e-3];
    let plan = FrequencyPlan::default();
    let timeline = build_imu_cycle(&cfg, &plan).map_err(|e| e.to_string())?;
    let violations = validate_timeline(&timeline, &plan);

    let mut beam_sets_ok = true;
    for s in &timeline.segments {
        let mut reduced: Vec<MotBeam> = timeline
            .events
            .iter()
            .filter(|e| e.t_start == s.launch_start && e.action == Action::SetFrequency)
            .filter_map(|e| match e.channel {
                Channel::MotAom(i) => MotBeam::from_aom_index(i),
                _ => None,
            })
            .collect();
        reduced.sort();
        let expected = match s.axis {
            Axis::Psi1 => vec![MotBeam::Mot2Prime, MotBeam::Mot3Prime],
            Axis::Psi2 => vec![MotBeam::Mot1Prime, MotBeam::Mot2Prime, MotBeam::Mot3],
            Axis::Psi3 => vec![MotBeam::Mot1, MotBeam::Mot2Prime, MotBeam::Mot3],
        };
        beam_sets_ok &= reduced == expected && launch_plan(s.axis).reduced_beams == expected;
    }

    let mut failures = Vec::new();
    let parts = vec![
        check(
            violations.is_empty(),
            format!("{} events, {} violations {:?}", timeline.events.len(), violations.len(), violations),
            &mut failures,
        ),
        check(beam_sets_ok, format!("launch beam sets match: {beam_sets_ok}"), &mut failures),
        check(
            plan.mot_detuning() == -12e6 && plan.molasses_detuning() == -92e6,
            format!(
                "MOT detuning {} MHz, molasses {} MHz",
                plan.mot_detuning() / 1e6,
                plan.molasses_detuning() / 1e6
            ),
            &mut failures,
        ),
    ];
    finish(parts, failures)
}

fn criterion_9() -> Outcome {
    let sigma = 1e-3;
    let sc = FringeScenario::one_dimensional(1e4, 0.5, sigma, 20.0 / sigma, 0.4, 256, 4.0)
        .map_err(|e| e.to_string())?;
    let f = sc.cloud().map_err(|e| e.to_string())?;
    let pred = numeric_variances(&f, &sc.grid.x_centers(), sc.k_omega, sc.phi_a, sc.contrast)
        .map_err(|e| e.to_string())?;
    let runs = 500;
    let mut phi_err = Vec::with_capacity(runs);
    let mut k_err = Vec::with_capacity(runs);
    for i in 0..runs {
        let img = sc
            .sample_with_cloud(&f, derive_seed(9, i as u64), Execution::Parallel)
            .map_err(|e| e.to_string())?;
        let (_, wls) = fit_profile(&img.profile_f64(), &f, &sc.grid).map_err(|e| format!("run {i}: {e}"))?;
        phi_err.push(wrap_phase(wls.phi_a_hat - sc.phi_a));
        k_err.push(wls.k_omega_hat - sc.k_omega);
    }
    let mean_phi = pairwise_sum(&phi_err) / runs as f64;
    let mean_k = pairwise_sum(&k_err) / runs as f64;
    let bound_phi = 5.0 * pred.std_phi_a() / (runs as f64).sqrt();
    let bound_k = 5.0 * pred.std_k_omega() / (runs as f64).sqrt();

    // Fourier/WLS agreement on noiseless profiles
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst_k: f64 = 0.0;
    let mut worst_phi: f64 = 0.0;
    for _ in 0..runs {
        let ks = rng.random_range(20.0..40.0);
        let phi = rng.random_range(-PI..PI);
        let s = FringeScenario::one_dimensional(1e4, 0.5, sigma, ks / sigma, phi, 256, 4.0)
            .map_err(|e| e.to_string())?;
        let p = s.expected_profile_1d().map_err(|e| e.to_string())?;
        let (fo, wl) = fit_profile(&p, &s.cloud().map_err(|e| e.to_string())?, &s.grid)
            .map_err(|e| e.to_string())?;
        worst_k = worst_k.max((fo.k_omega_hat / wl.k_omega_hat - 1.0).abs());
        worst_phi = worst_phi.max(wrap_phase(fo.phi_a_hat - wl.phi_a_hat).abs());
    }

    let mut failures = Vec::new();
    let parts = vec![
        check(
            mean_phi.abs() <= bound_phi,
            format!("mean phi error {mean_phi:+.2e} rad (|.| <= {bound_phi:.2e})"),
            &mut failures,
        ),
        check(
            mean_k.abs() <= bound_k,
            format!("mean k error {mean_k:+.3} rad/m (|.| <= {bound_k:.3})"),
            &mut failures,
        ),
        check(
            worst_k <= 1e-3 && worst_phi <= 1e-3,
            format!("Fourier vs WLS worst: k {:.2e} rel (<= 1e-3), phi {worst_phi:.2e} rad (<= 1e-3)", worst_k),
            &mut failures,
        ),
    ];
    finish(parts, failures)
}

fn main() {
    let args = Arguments::from_args();
    let criteria: Vec<Criterion> = vec![
        (1, "reference sensitivity numbers", criterion_1),
        (2, "Zeeman systematics", criterion_2),
        (3, "cloud kinematics", criterion_3),
        (4, "Monte Carlo vs closed form", criterion_4),
        (5, "numeric-to-closed-form convergence", criterion_5),
        (6, "LMT phase formulas vs brute-force oracle", criterion_6),
        (7, "IMU bandwidth", criterion_7),
        (8, "sequencer round trip", criterion_8),
        (9, "estimator properties", criterion_9),
    ];
    let trials = criteria
        .into_iter()
        .map(|(id, title, f)| Trial::test(format!("criterion_{id}"), move || report(id, title, f())))
        .collect();
    libtest_mimic::run(&args, trials).exit();
}
