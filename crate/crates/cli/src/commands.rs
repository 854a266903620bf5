use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Result;
use serde::Serialize;
use serde_json::json;

use psi_core::estimation::{fit_profile, fourier_estimate, FringeEstimate};
use psi_core::exec::Execution;
use psi_core::kinematics::{broadening, ratio_curve_csv, sensitivity_ratio_curve, LengthScale};
use psi_core::physics::{k_eff, sigma_f, ExperimentConfig, SpeciesData};
use psi_core::sensitivity::{
    imu_bandwidth, lmt_enhancement, lmt_optimize, monte_carlo_validate, sensitivity, sensitivity_for_config,
    sensitivity_sweep, sweep_csv, MonteCarloReport, SensitivityInputs, SweepParam,
};
use psi_core::sequencer::{build_imu_cycle, validate_timeline, FrequencyPlan, Timeline, Violation};
use psi_core::synthesis::{cloud_profile, FringeImage, FringeScenario, ImageSidecar};
use psi_core::systematics::{systematics_report, ZeemanScenario};
use psi_core::Error as CoreError;

use crate::output::{OutputDir, RunManifest, MANIFEST_FILE};
use crate::{Common, MethodArg, ReportKind, Sweep};

const DEMO_CONFIG: &str = include_str!("../../../configs/demo.json");

#[derive(Debug, thiserror::Error)]
pub enum Exit {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Estimation(String),
    #[error("{count} validation violation(s): {summary}")]
    Violations { count: usize, summary: String },
}

impl Exit {
    fn code(&self) -> u8 {
        match self {
            Exit::Config(_) => 2,
            Exit::Estimation(_) => 3,
            Exit::Violations { .. } => 4,
        }
    }
}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Exit>() {
            return e.code();
        }
        if let Some(e) = cause.downcast_ref::<CoreError>() {
            return match e {
                CoreError::InvalidField { .. } | CoreError::Config(_) | CoreError::Parse(_) | CoreError::Json(_) => 2,
                CoreError::FringesUnresolved { .. } | CoreError::Unidentifiable(_) | CoreError::Ambiguous { .. } => 3,
                CoreError::Domain(_) | CoreError::Io(_) => 1,
            };
        }
    }
    1
}

fn estimation_error(e: CoreError) -> anyhow::Error {
    match e {
        CoreError::FringesUnresolved { .. } | CoreError::Unidentifiable(_) | CoreError::Ambiguous { .. } => {
            Exit::Estimation(e.to_string()).into()
        }
        other => other.into(),
    }
}

fn read_config_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Exit::Config(format!("cannot read config {}: {e}", path.display())).into())
}

/// Loads the experiment config and the bytes hashed into the manifest.
fn load_config(path: Option<&Path>) -> Result<(ExperimentConfig, Vec<u8>)> {
    match path {
        Some(p) => {
            let bytes = read_config_bytes(p)?;
            let text = String::from_utf8_lossy(&bytes);
            let cfg = ExperimentConfig::from_json_str(&text)
                .map_err(|e| Exit::Config(format!("{}: {e}", p.display())))?;
            Ok((cfg, bytes))
        }
        None => {
            let cfg = ExperimentConfig::reference_defaults();
            let bytes = serde_json::to_vec(&cfg)?;
            Ok((cfg, bytes))
        }
    }
}

fn config_from_text(text: &str) -> Result<ExperimentConfig> {
    ExperimentConfig::from_json_str(text).map_err(|e| Exit::Config(e.to_string()).into())
}

pub fn simulate(common: &Common) -> Result<()> {
    let (cfg, bytes) = load_config(common.config.as_deref())?;
    let mut out = OutputDir::new(common.out.clone(), RunManifest::new("simulate", &bytes, common.seed));
    let image = simulate_into(&cfg, common.seed, &mut out, "image")?;
    out.finish()?;
    println!("{}", image.display());
    Ok(())
}

fn simulate_into(cfg: &ExperimentConfig, seed: u64, out: &mut OutputDir, stem: &str) -> Result<PathBuf> {
    let sc = FringeScenario::from_config(cfg)?;
    let image = sc.sample(seed, Execution::Parallel)?;
    let sidecar = image.sidecar(Some(seed), Some(MANIFEST_FILE.to_string()));
    let csv = out.text(&format!("{stem}.csv"), &image.to_csv())?;
    let mut side = serde_json::to_string_pretty(&sidecar)?;
    side.push('\n');
    out.text(&format!("{stem}.json"), &side)?;
    Ok(csv)
}

#[derive(Debug, Serialize)]
struct FitResult {
    image: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    fourier: Option<FringeEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    wls: Option<FringeEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    truth: Option<psi_core::synthesis::Truth>,
}

fn load_image(path: &Path) -> Result<(FringeImage, Vec<u8>)> {
    let side_path = path.with_extension("json");
    let csv = fs::read(path).map_err(|e| Exit::Config(format!("cannot read image {}: {e}", path.display())))?;
    let side_bytes = fs::read(&side_path)
        .map_err(|e| Exit::Config(format!("cannot read sidecar {}: {e}", side_path.display())))?;
    let sidecar: ImageSidecar = serde_json::from_slice(&side_bytes)
        .map_err(|e| Exit::Config(format!("{}: {e}", side_path.display())))?;
    let image = FringeImage::from_csv(&String::from_utf8_lossy(&csv), &sidecar)
        .map_err(|e| Exit::Config(format!("{}: {e}", path.display())))?;
    let mut bytes = csv;
    bytes.extend_from_slice(&side_bytes);
    Ok((image, bytes))
}

fn fit_image(path: &Path, image: &FringeImage, method: MethodArg) -> Result<FitResult> {
    let row = image.grid.row();
    let profile = image.profile_f64();
    let (fourier, wls) = match method {
        MethodArg::Fourier => (Some(fourier_estimate(&profile, &row).map_err(estimation_error)?), None),
        MethodArg::Wls | MethodArg::Both => {
            let truth = image.truth.ok_or_else(|| {
                Exit::Config(format!("{}: sidecar lacks the cloud size needed for the WLS model", path.display()))
            })?;
            let f = cloud_profile(truth.atom_number, truth.sigma_f, &row)?;
            let (fo, wl) = fit_profile(&profile, &f, &row).map_err(estimation_error)?;
            if method == MethodArg::Both {
                (Some(fo), Some(wl))
            } else {
                (None, Some(wl))
            }
        }
    };
    Ok(FitResult {
        image: path.display().to_string(),
        fourier,
        wls,
        truth: image.truth,
    })
}

const BATCH_HEADER: &str = "image,fourier_k_omega,fourier_phi_a,fourier_contrast,wls_k_omega,wls_phi_a,wls_contrast,wls_converged,wls_iterations,error\n";

fn cells(e: Option<&FringeEstimate>) -> String {
    match e {
        Some(e) => format!("{:e},{:e},{:e}", e.k_omega_hat, e.phi_a_hat, e.contrast_hat),
        None => ",,".into(),
    }
}

fn batch_row(r: &FitResult) -> String {
    let (converged, iterations) = match &r.wls {
        Some(w) => (w.converged.to_string(), w.iterations.to_string()),
        None => (String::new(), String::new()),
    };
    format!(
        "{},{},{},{converged},{iterations},\n",
        r.image,
        cells(r.fourier.as_ref()),
        cells(r.wls.as_ref())
    )
}

pub fn fit(images: &[PathBuf], method: MethodArg, out_dir: &Path) -> Result<()> {
    if images.len() == 1 {
        let (image, bytes) = load_image(&images[0])?;
        let result = fit_image(&images[0], &image, method)?;
        let seed = side_seed(&images[0]);
        let mut out = OutputDir::new(out_dir.to_path_buf(), RunManifest::new("fit", &bytes, seed));
        let path = out.json("estimate.json", &result)?;
        out.finish()?;
        println!("{}", path.display());
        return Ok(());
    }
    let mut csv = String::from(BATCH_HEADER);
    let mut hashed = Vec::new();
    let mut failed = 0;
    for path in images {
        let name = path.display().to_string();
        let outcome = load_image(path).and_then(|(image, bytes)| {
            hashed.extend_from_slice(&bytes);
            fit_image(path, &image, method)
        });
        match outcome {
            Ok(r) => csv.push_str(&batch_row(&r)),
            Err(e) => {
                failed += 1;
                csv.push_str(&format!("{name},,,,,,,,,\"{}\"\n", format!("{e:#}").replace('"', "'")));
            }
        }
    }
    let mut out = OutputDir::new(out_dir.to_path_buf(), RunManifest::new("fit", &hashed, 0));
    let path = out.text("estimates.csv", &csv)?;
    out.finish()?;
    println!("{}", path.display());
    if failed > 0 {
        return Err(Exit::Estimation(format!("{failed} of {} images could not be fitted", images.len())).into());
    }
    Ok(())
}

fn side_seed(image: &Path) -> u64 {
    fs::read(image.with_extension("json"))
        .ok()
        .and_then(|b| serde_json::from_slice::<ImageSidecar>(&b).ok())
        .and_then(|s| s.seed)
        .unwrap_or(0)
}

pub fn report(
    kind: ReportKind,
    common: &Common,
    sweep: Option<&Sweep>,
    tau: f64,
    eta: f64,
    n_max: usize,
) -> Result<()> {
    let name = match kind {
        ReportKind::Sensitivity => "report-sensitivity",
        ReportKind::Systematics => "report-systematics",
        ReportKind::Bandwidth => "report-bandwidth",
        ReportKind::Lmt => "report-lmt",
        ReportKind::Broadening => "report-broadening",
    };
    if kind == ReportKind::Systematics {
        let (scn, budget, bytes) = load_zeeman(common.config.as_deref())?;
        let mut out = OutputDir::new(common.out.clone(), RunManifest::new(name, &bytes, common.seed));
        write_systematics(&mut out, &scn, budget)?;
        out.finish()?;
        return Ok(());
    }
    let (cfg, bytes) = load_config(common.config.as_deref())?;
    let mut out = OutputDir::new(common.out.clone(), RunManifest::new(name, &bytes, common.seed));
    match kind {
        ReportKind::Sensitivity => write_sensitivity(&mut out, &cfg, sweep, tau)?,
        ReportKind::Bandwidth => write_bandwidth(&mut out, &cfg)?,
        ReportKind::Lmt => write_lmt(&mut out, eta, cfg.contrast, n_max)?,
        ReportKind::Broadening => write_broadening(&mut out, &cfg, sweep)?,
        ReportKind::Systematics => unreachable!(),
    }
    out.finish()?;
    Ok(())
}

fn load_zeeman(path: Option<&Path>) -> Result<(ZeemanScenario, Option<f64>, Vec<u8>)> {
    match path {
        Some(p) => {
            let bytes = read_config_bytes(p)?;
            let value: serde_json::Value =
                serde_json::from_slice(&bytes).map_err(|e| Exit::Config(format!("{}: {e}", p.display())))?;
            let (scn, budget) =
                ZeemanScenario::from_json(&value).map_err(|e| Exit::Config(format!("{}: {e}", p.display())))?;
            Ok((scn, budget, bytes))
        }
        None => {
            let scn = ZeemanScenario::reference_example();
            Ok((scn, None, serde_json::to_vec(&scn)?))
        }
    }
}

fn write_sensitivity(out: &mut OutputDir, cfg: &ExperimentConfig, sweep: Option<&Sweep>, tau: f64) -> Result<()> {
    let report = sensitivity_for_config(cfg, tau)?;
    let path = out.json("sensitivity.json", &report)?;
    println!(
        "{}: {:.4} urad/s/rtHz, {:.4} nano-g/rtHz",
        path.display(),
        report.delta_omega_urad_per_rt_hz,
        report.delta_a_nano_g_per_rt_hz
    );
    if let Some(s) = sweep {
        let base = SensitivityInputs::from_config(cfg)?;
        let rows = sensitivity_sweep(&base, k_eff(&cfg.species), s.param, &s.values)?;
        let path = out.text("sensitivity_sweep.csv", &sweep_csv(s.param, &rows))?;
        println!("{}", path.display());
    }
    Ok(())
}

fn write_systematics(out: &mut OutputDir, scn: &ZeemanScenario, budget: Option<f64>) -> Result<()> {
    let r = systematics_report(scn, &SpeciesData::rubidium_87(), budget)?;
    let path = out.json("systematics.json", &r)?;
    println!(
        "{}: {:.2} Hz, {:.3} pi rad, {:.3e} dyn, {:.2} micro-g",
        path.display(),
        r.differential_shift,
        r.phase_error_pi,
        r.force.force_dyn,
        r.force.acceleration_g * 1e6
    );
    Ok(())
}

fn write_bandwidth(out: &mut OutputDir, cfg: &ExperimentConfig) -> Result<()> {
    let ideal = imu_bandwidth(cfg.mot_load_time, 0.0)?;
    let timeline = build_imu_cycle(cfg, &FrequencyPlan::default())?;
    let doc = json!({
        "tau_mot_s": cfg.mot_load_time,
        "bandwidth_zero_overhead_hz": ideal,
        "cycle_duration_s": timeline.total_duration,
        "bandwidth_compiled_hz": timeline.bandwidth(),
    });
    let path = out.json("bandwidth.json", &doc)?;
    println!("{}: {ideal:.4} Hz ideal, {:.4} Hz compiled", path.display(), timeline.bandwidth());
    Ok(())
}

fn write_lmt(out: &mut OutputDir, eta: f64, c0: f64, n_max: usize) -> Result<()> {
    let best = lmt_optimize(eta, c0, n_max)?;
    let table: Vec<_> = (0..=n_max)
        .map(|n| json!({"n": n, "enhancement": lmt_enhancement(eta, n)}))
        .collect();
    let doc = json!({"eta": eta, "contrast": c0, "n_max": n_max, "optimum": best, "table": table});
    let path = out.json("lmt.json", &doc)?;
    println!("{}: n* = {} (E = {:.4})", path.display(), best.n_star, best.enhancement);
    Ok(())
}

fn write_broadening(out: &mut OutputDir, cfg: &ExperimentConfig, sweep: Option<&Sweep>) -> Result<()> {
    let sc = FringeScenario::from_config(cfg)?;
    let point = broadening(cfg.sigma_0, sigma_f(cfg), sc.k_omega, cfg.contrast, LengthScale::InitialSize)?;
    let path = out.json("broadening.json", &point)?;
    println!("{}: b = {:.4}, ratio = {:.4}", path.display(), point.b, point.sensitivity_ratio);
    let t_values = match sweep {
        Some(s) if s.param == SweepParam::BigT => s.values.clone(),
        Some(_) => return Err(Exit::Config("broadening sweeps only support T".into()).into()),
        None => (1..=10).map(|i| 5e-3 * i as f64).collect(),
    };
    let k_per_t = sc.k_omega / cfg.big_t;
    let curve = sensitivity_ratio_curve(
        &cfg.species,
        cfg.sigma_0,
        cfg.temperature,
        |t| k_per_t * t,
        &t_values,
        LengthScale::InitialSize,
    )?;
    let path = out.text("broadening_curve.csv", &ratio_curve_csv(&curve))?;
    println!("{}", path.display());
    Ok(())
}

fn desk_scenario() -> Result<FringeScenario> {
    Ok(FringeScenario::one_dimensional(1e4, 0.5, 1e-3, 2e4, 0.4, 256, 4.0)?)
}

fn check_monte_carlo(r: &MonteCarloReport) -> Vec<String> {
    let mut problems = Vec::new();
    if r.flagged {
        problems.push(format!("failure rate {:.2}%", r.failure_rate * 100.0));
    }
    let band = 5.0 * r.sampling_band;
    for (name, ratio) in [("phi_a", r.ratio_phi_a_numeric), ("k_omega", r.ratio_k_omega_numeric)] {
        if (ratio - 1.0).abs() > band {
            problems.push(format!("{name} spread ratio {ratio:.3} outside 1 +- {band:.3}"));
        }
    }
    problems
}

pub fn validate(common: &Common, trials: usize) -> Result<()> {
    let (sc, bytes) = match common.config.as_deref() {
        Some(p) => {
            let (cfg, bytes) = load_config(Some(p))?;
            (FringeScenario::from_config(&cfg)?, bytes)
        }
        None => {
            let sc = desk_scenario()?;
            (sc, serde_json::to_vec(&sc)?)
        }
    };
    let mut out = OutputDir::new(common.out.clone(), RunManifest::new("validate", &bytes, common.seed));
    let problems = write_validation(&mut out, &sc, trials, common.seed)?;
    out.finish()?;
    violations(problems)
}

fn write_validation(out: &mut OutputDir, sc: &FringeScenario, trials: usize, seed: u64) -> Result<Vec<String>> {
    let r = monte_carlo_validate(sc, trials, seed, Execution::Parallel).map_err(|e| match e {
        CoreError::InvalidField { .. } => Exit::Config(e.to_string()).into(),
        other => estimation_error(other),
    })?;
    let path = out.json("validation.json", &r)?;
    println!(
        "{}: std ratios phi {:.3}, k {:.3} (closed form); {:.3}, {:.3} (numeric); {} failures",
        path.display(),
        r.ratio_phi_a,
        r.ratio_k_omega,
        r.ratio_phi_a_numeric,
        r.ratio_k_omega_numeric,
        r.failures
    );
    Ok(check_monte_carlo(&r))
}

fn violations(problems: Vec<String>) -> Result<()> {
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Exit::Violations {
            count: problems.len(),
            summary: problems.join("; "),
        }
        .into())
    }
}

fn violation_lines(v: &[Violation]) -> Vec<String> {
    v.iter().map(|v| format!("[{}] {}", v.rule, v.message)).collect()
}

pub fn sequence(common: &Common, check: Option<&Path>) -> Result<()> {
    let plan = FrequencyPlan::default();
    if let Some(path) = check {
        let text = fs::read_to_string(path)
            .map_err(|e| Exit::Config(format!("cannot read timeline {}: {e}", path.display())))?;
        let timeline = Timeline::from_json(&text).map_err(|e| Exit::Config(format!("{}: {e}", path.display())))?;
        let found = validate_timeline(&timeline, &plan);
        for line in violation_lines(&found) {
            println!("{line}");
        }
        if found.is_empty() {
            println!("{}: valid", path.display());
        }
        return violations(violation_lines(&found));
    }
    let (cfg, bytes) = load_config(common.config.as_deref())?;
    let mut out = OutputDir::new(common.out.clone(), RunManifest::new("sequence", &bytes, common.seed));
    let problems = write_sequence(&mut out, &cfg, &plan)?;
    out.finish()?;
    violations(problems)
}

fn write_sequence(out: &mut OutputDir, cfg: &ExperimentConfig, plan: &FrequencyPlan) -> Result<Vec<String>> {
    let timeline = build_imu_cycle(cfg, plan).map_err(|e| Exit::Config(e.to_string()))?;
    let mut text = timeline.to_json()?;
    text.push('\n');
    out.text("timeline.json", &text)?;
    out.text("timeline.csv", &timeline.to_csv())?;
    out.text("timeline_summary.txt", &timeline.summary())?;
    let found = validate_timeline(&timeline, plan);
    if !found.is_empty() {
        out.json("violations.json", &found)?;
    }
    print!("{}", timeline.summary());
    Ok(violation_lines(&found))
}

pub fn demo(seed: u64, out_dir: &Path) -> Result<()> {
    let demo_cfg = config_from_text(DEMO_CONFIG)?;
    let mut lmt_cfg = ExperimentConfig::reference_defaults();
    lmt_cfg.lmt_order = 2;
    lmt_cfg.extra_intervals = vec![12e-3, 6e-3];
    let mut out = OutputDir::new(out_dir.to_path_buf(), RunManifest::new("demo", DEMO_CONFIG.as_bytes(), seed));

    println!("== sensitivity (k_t = 10 k_eff, sigma_f = 1 mm)");
    let reference = SensitivityInputs {
        k_t: 10.0 * k_eff(&SpeciesData::rubidium_87()),
        big_t: 20e-3,
        contrast: 0.5,
        atom_number: 1e6,
        sigma_f: 1e-3,
        cycle_time: 1.0,
    };
    let s = sensitivity(&reference, 1.0)?;
    let path = out.json("sensitivity.json", &s)?;
    println!(
        "{}: {:.4} urad/s/rtHz, {:.4} nano-g/rtHz",
        path.display(),
        s.delta_omega_urad_per_rt_hz,
        s.delta_a_nano_g_per_rt_hz
    );

    println!("== systematics");
    write_systematics(&mut out, &ZeemanScenario::reference_example(), None)?;

    println!("== bandwidth and LMT order");
    write_bandwidth(&mut out, &ExperimentConfig::reference_defaults())?;
    write_lmt(&mut out, 0.9, 0.5, 10)?;

    println!("== simulate and fit");
    let image = simulate_into(&demo_cfg, seed, &mut out, "image")?;
    let (img, _) = load_image(&image)?;
    let fitted = fit_image(&image, &img, MethodArg::Both)?;
    out.json("estimate.json", &fitted)?;
    if let (Some(w), Some(t)) = (fitted.wls, fitted.truth) {
        println!(
            "k_omega {:.2} (truth {:.2}), phi_a {:.4} (truth {:.4})",
            w.k_omega_hat, t.k_omega, w.phi_a_hat, t.phi_a
        );
    }

    println!("== Monte Carlo");
    let mut problems = write_validation(&mut out, &desk_scenario()?, 500, seed)?;

    println!("== sequence (n = 2)");
    problems.extend(write_sequence(&mut out, &lmt_cfg, &FrequencyPlan::default())?);
    let manifest = out.finish()?;
    println!("{}", manifest.display());
    violations(problems)
}
