//! Shot-noise uncertainty of the fringe observables and the resulting
//! rotation/acceleration sensitivity.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::estimation::fit_profile;
use crate::exec::{map_indexed, pairwise_sum, Execution};
use crate::physics::{momentum_transfer_wavenumber, sigma_f, ExperimentConfig, STANDARD_GRAVITY};
use crate::synthesis::{derive_seed, wrap_phase, FringeScenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    GeneralNumeric,
    SeparatedClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariancePrediction {
    /// rad²/m²
    pub var_k_omega: f64,
    /// rad²
    pub var_phi_a: f64,
    pub regime: Regime,
}

impl VariancePrediction {
    pub fn std_k_omega(&self) -> f64 {
        self.var_k_omega.sqrt()
    }

    pub fn std_phi_a(&self) -> f64 {
        self.var_phi_a.sqrt()
    }
}

/// Information sums α, β, γ over pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InformationSums {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// α·γ with every sin² set to 1; the scale against which degeneracy is judged.
    pub reference: f64,
}

/// Rejects αγ − β² ≤ 10⁻¹²·`reference` (with `reference` ≥ αγ).
pub(crate) fn check_information(alpha: f64, beta: f64, gamma: f64, reference: f64) -> Result<()> {
    let det = alpha * gamma - beta * beta;
    let scale = reference.max(alpha * gamma);
    if alpha * gamma <= 0.0 || (alpha * gamma).is_nan() || det <= 1e-12 * scale {
        return Err(Error::Unidentifiable(format!(
            "alpha*gamma - beta^2 = {det:.3e} is degenerate"
        )));
    }
    Ok(())
}

fn gradients(x: f64, fl: f64, k: f64, phi: f64, c: f64) -> (Vector2<f64>, f64) {
    let (s, co) = (k * x + phi).sin_cos();
    let g = Vector2::new(-0.5 * c * x * s * fl, -0.5 * c * s * fl);
    (g, co)
}

pub fn information_sums(f: &[f64], x: &[f64], k_omega: f64, phi_a: f64, c: f64) -> InformationSums {
    let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
    let (mut ra, mut rg) = (0.0, 0.0);
    for (&fl, &xl) in f.iter().zip(x) {
        if fl <= 0.0 {
            continue;
        }
        let (g, _) = gradients(xl, fl, k_omega, phi_a, c);
        alpha += g[0] * g[0] / fl;
        beta += g[0] * g[1] / fl;
        gamma += g[1] * g[1] / fl;
        let w = 0.25 * c * c * fl;
        ra += w * xl * xl;
        rg += w;
    }
    InformationSums {
        alpha,
        beta,
        gamma,
        reference: ra * rg,
    }
}

fn invert(s: &InformationSums) -> Result<Matrix2<f64>> {
    check_information(s.alpha, s.beta, s.gamma, s.reference)?;
    let (a, b, c) = (s.alpha, s.beta, s.gamma);
    Ok(Matrix2::new(c, -b, -b, a) / (a * c - b * b))
}

/// Exact per-pixel propagation of binomial shot noise into (k_Ω, φ_a).
pub fn numeric_variances(
    f: &[f64],
    x: &[f64],
    k_omega: f64,
    phi_a: f64,
    c: f64,
) -> Result<VariancePrediction> {
    if f.len() != x.len() {
        return Err(Error::Domain("cloud and coordinates differ in length".into()));
    }
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::field("contrast", format!("must lie in [0, 1], got {c}")));
    }
    let m_inv = invert(&information_sums(f, x, k_omega, phi_a, c))?;
    let (mut vk, mut vp) = (0.0, 0.0);
    for (&fl, &xl) in f.iter().zip(x) {
        if fl <= 0.0 {
            continue;
        }
        let (g, co) = gradients(xl, fl, k_omega, phi_a, c);
        let d = m_inv * g / fl;
        let dp2 = 0.25 * (1.0 - c * c * co * co) * fl;
        vk += d[0] * d[0] * dp2;
        vp += d[1] * d[1] * dp2;
    }
    Ok(VariancePrediction {
        var_k_omega: vk,
        var_phi_a: vp,
        regime: Regime::GeneralNumeric,
    })
}

/// Well-separated-peak limit: Δφ² = (4 − c²)/(2Nc²), Δk² = Δφ²/σf².
pub fn closed_form_variances(atom_number: f64, c: f64, sigma_f: f64) -> Result<VariancePrediction> {
    if atom_number.is_nan() || atom_number < 1.0 {
        return Err(Error::field("atom_number", "must be at least 1"));
    }
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::field("contrast", format!("must lie in (0, 1], got {c}")));
    }
    ensure_positive("sigma_f", sigma_f)?;
    let var_phi = (4.0 - c * c) / (2.0 * atom_number * c * c);
    Ok(VariancePrediction {
        var_k_omega: var_phi / (sigma_f * sigma_f),
        var_phi_a: var_phi,
        regime: Regime::SeparatedClosedForm,
    })
}

/// Inputs of the closed-form sensitivity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityInputs {
    /// rad/m
    pub k_t: f64,
    /// s
    pub big_t: f64,
    pub contrast: f64,
    pub atom_number: f64,
    /// m
    pub sigma_f: f64,
    /// τ0, s
    pub cycle_time: f64,
}

impl SensitivityInputs {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            k_t: momentum_transfer_wavenumber(cfg),
            big_t: cfg.big_t,
            contrast: cfg.contrast,
            atom_number: cfg.atom_number as f64,
            sigma_f: sigma_f(cfg),
            cycle_time: cfg.cycle_time,
        })
    }

    fn validate(&self) -> Result<()> {
        ensure_positive("k_t", self.k_t)?;
        ensure_positive("big_t", self.big_t)?;
        ensure_positive("contrast", self.contrast)?;
        ensure_positive("atom_number", self.atom_number)?;
        ensure_positive("sigma_f", self.sigma_f)?;
        ensure_positive("cycle_time", self.cycle_time)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub inputs: SensitivityInputs,
    /// Integration time, s.
    pub tau: f64,
    /// m/s² per shot
    pub delta_a_per_shot: f64,
    /// rad/s per shot
    pub delta_omega_per_shot: f64,
    /// m/s² after τ
    pub delta_a: f64,
    /// rad/s after τ
    pub delta_omega: f64,
    /// m/s²/√Hz
    pub delta_a_per_rt_hz: f64,
    /// rad/s/√Hz
    pub delta_omega_per_rt_hz: f64,
    pub delta_a_nano_g_per_rt_hz: f64,
    pub delta_omega_urad_per_rt_hz: f64,
}

/// Δa = [k_t T² c √(Nτ/2τ0)]⁻¹ and ΔΩ = [k_t T c σf √(Nτ/2τ0)]⁻¹.
pub fn sensitivity(inputs: &SensitivityInputs, tau: f64) -> Result<SensitivityReport> {
    inputs.validate()?;
    ensure_positive("tau", tau)?;
    let SensitivityInputs {
        k_t,
        big_t,
        contrast,
        atom_number,
        sigma_f,
        cycle_time,
    } = *inputs;
    let shot = contrast * (atom_number / 2.0).sqrt();
    let delta_a_per_shot = 1.0 / (k_t * big_t * big_t * shot);
    let delta_omega_per_shot = 1.0 / (k_t * big_t * sigma_f * shot);
    let averaging = (tau / cycle_time).sqrt();
    let rt = cycle_time.sqrt();
    Ok(SensitivityReport {
        inputs: *inputs,
        tau,
        delta_a_per_shot,
        delta_omega_per_shot,
        delta_a: delta_a_per_shot / averaging,
        delta_omega: delta_omega_per_shot / averaging,
        delta_a_per_rt_hz: delta_a_per_shot * rt,
        delta_omega_per_rt_hz: delta_omega_per_shot * rt,
        delta_a_nano_g_per_rt_hz: delta_a_per_shot * rt / STANDARD_GRAVITY * 1e9,
        delta_omega_urad_per_rt_hz: delta_omega_per_shot * rt * 1e6,
    })
}

pub fn sensitivity_for_config(cfg: &ExperimentConfig, tau: f64) -> Result<SensitivityReport> {
    sensitivity(&SensitivityInputs::from_config(cfg)?, tau)
}

/// Parameters that can be swept in a sensitivity table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    #[serde(rename = "T")]
    BigT,
    #[serde(rename = "N")]
    AtomNumber,
    #[serde(rename = "c")]
    Contrast,
    #[serde(rename = "n")]
    LmtOrder,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "T" | "big_t" => Ok(Self::BigT),
            "N" | "atom_number" => Ok(Self::AtomNumber),
            "c" | "contrast" => Ok(Self::Contrast),
            "n" | "lmt_order" => Ok(Self::LmtOrder),
            other => Err(Error::Parse(format!(
                "unknown sweep parameter {other:?} (expected T, N, c or n)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub delta_a_per_rt_hz: f64,
    pub delta_omega_per_rt_hz: f64,
}

/// Sensitivity at each value of one parameter, others taken from `base`.
pub fn sensitivity_sweep(
    base: &SensitivityInputs,
    k_eff: f64,
    param: SweepParam,
    values: &[f64],
) -> Result<Vec<SweepRow>> {
    values
        .iter()
        .map(|&v| {
            let mut s = *base;
            match param {
                SweepParam::BigT => s.big_t = v,
                SweepParam::AtomNumber => s.atom_number = v,
                SweepParam::Contrast => s.contrast = v,
                SweepParam::LmtOrder => {
                    if v < 0.0 || v.fract() != 0.0 {
                        return Err(Error::field("lmt_order", format!("must be a whole number, got {v}")));
                    }
                    s.k_t = (v + 1.0) * k_eff;
                }
            }
            let r = sensitivity(&s, s.cycle_time)?;
            Ok(SweepRow {
                value: v,
                delta_a_per_rt_hz: r.delta_a_per_rt_hz,
                delta_omega_per_rt_hz: r.delta_omega_per_rt_hz,
            })
        })
        .collect()
}

pub fn sweep_csv(param: SweepParam, rows: &[SweepRow]) -> String {
    let name = serde_json::to_value(param).unwrap();
    let mut out = format!("{},delta_a_per_rt_hz,delta_omega_per_rt_hz\n", name.as_str().unwrap());
    for r in rows {
        out.push_str(&format!("{},{:e},{:e}\n", r.value, r.delta_a_per_rt_hz, r.delta_omega_per_rt_hz));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub scenario: FringeScenario,
    pub trials: usize,
    pub seed: u64,
    pub failures: usize,
    pub failure_rate: f64,
    /// Set when more than 1% of fits failed or did not converge.
    pub flagged: bool,
    pub mean_error_phi_a: f64,
    pub mean_error_k_omega: f64,
    pub std_phi_a: f64,
    pub std_k_omega: f64,
    pub closed_form: VariancePrediction,
    pub numeric: VariancePrediction,
    /// empirical / closed-form std
    pub ratio_phi_a: f64,
    pub ratio_k_omega: f64,
    /// empirical / numeric std
    pub ratio_phi_a_numeric: f64,
    pub ratio_k_omega_numeric: f64,
    /// Relative 1σ sampling uncertainty of an empirical std, √(1/(2·trials)).
    pub sampling_band: f64,
}

pub const MIN_TRIALS: usize = 100;
pub const FAILURE_FLAG_RATE: f64 = 0.01;

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean).powi(2)).collect();
    (mean, (pairwise_sum(&dev) / (n - 1.0)).sqrt())
}

/// Repeated simulate → fit on a one-row grid, compared with the predicted spread.
///
/// Trial i uses seed `derive_seed(seed, i)`, so the report is a pure function of
/// (scenario, trials, seed) regardless of scheduling.
pub fn monte_carlo_validate(
    scenario: &FringeScenario,
    trials: usize,
    seed: u64,
    exec: Execution,
) -> Result<MonteCarloReport> {
    if trials < MIN_TRIALS {
        return Err(Error::field("trials", format!("must be at least {MIN_TRIALS}, got {trials}")));
    }
    let sc = FringeScenario {
        grid: scenario.grid.row(),
        ..*scenario
    };
    let f = sc.cloud()?;
    let x = sc.grid.x_centers();
    let closed_form = closed_form_variances(sc.atom_number, sc.contrast, sc.sigma_f)?;
    let numeric = numeric_variances(&f, &x, sc.k_omega, sc.phi_a, sc.contrast)?;

    let outcomes = map_indexed(trials, exec, |i| {
        let image = sc.sample_with_cloud(&f, derive_seed(seed, i as u64), Execution::Sequential).ok()?;
        let (_, wls) = fit_profile(&image.profile_f64(), &f, &sc.grid).ok()?;
        wls.converged.then(|| {
            (
                wrap_phase(wls.phi_a_hat - sc.phi_a),
                wls.k_omega_hat - sc.k_omega,
            )
        })
    });
    let ok: Vec<(f64, f64)> = outcomes.iter().flatten().copied().collect();
    let failures = trials - ok.len();
    if ok.len() < 2 {
        return Err(Error::Domain(format!("{failures} of {trials} fits failed")));
    }
    let (phi_err, k_err): (Vec<f64>, Vec<f64>) = ok.into_iter().unzip();
    let (mean_phi, std_phi) = mean_std(&phi_err);
    let (mean_k, std_k) = mean_std(&k_err);
    let failure_rate = failures as f64 / trials as f64;
    Ok(MonteCarloReport {
        scenario: sc,
        trials,
        seed,
        failures,
        failure_rate,
        flagged: failure_rate > FAILURE_FLAG_RATE,
        mean_error_phi_a: mean_phi,
        mean_error_k_omega: mean_k,
        std_phi_a: std_phi,
        std_k_omega: std_k,
        closed_form,
        numeric,
        ratio_phi_a: std_phi / closed_form.std_phi_a(),
        ratio_k_omega: std_k / closed_form.std_k_omega(),
        ratio_phi_a_numeric: std_phi / numeric.std_phi_a(),
        ratio_k_omega_numeric: std_k / numeric.std_k_omega(),
        sampling_band: (1.0 / (2.0 * trials as f64)).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmtOptimum {
    pub n_star: usize,
    pub enhancement: f64,
    pub contrast_at_n_star: f64,
}

/// E(n) = (n + 1)·η^(4n): momentum gain against contrast lost over 4n extra π pulses.
pub fn lmt_enhancement(eta: f64, n: usize) -> f64 {
    (n as f64 + 1.0) * eta.powi(4 * n as i32)
}

pub fn lmt_optimize(eta: f64, c0: f64, n_max: usize) -> Result<LmtOptimum> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::field("eta", format!("must lie in (0, 1], got {eta}")));
    }
    if !(c0 > 0.0 && c0 <= 1.0) {
        return Err(Error::field("contrast", format!("must lie in (0, 1], got {c0}")));
    }
    let mut best = 0;
    let mut best_e = lmt_enhancement(eta, 0);
    for n in 1..=n_max {
        let e = lmt_enhancement(eta, n);
        if e > best_e {
            best = n;
            best_e = e;
        }
    }
    Ok(LmtOptimum {
        n_star: best,
        enhancement: best_e,
        contrast_at_n_star: c0 * eta.powi(4 * best as i32),
    })
}

/// Upper bound on the IMU update rate: one cycle per axis, three axes.
pub fn imu_bandwidth(tau_mot: f64, overhead: f64) -> Result<f64> {
    ensure_positive("tau_mot", tau_mot)?;
    if overhead.is_nan() || overhead < 0.0 {
        return Err(Error::field("overhead", "must be non-negative"));
    }
    Ok(1.0 / (3.0 * (tau_mot + overhead)))
}
