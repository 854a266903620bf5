//! Fringe parameter extraction from a 1D detected-state profile.
//!
//! [`fourier_estimate`] reads k_Ω and φ_a off the positive-frequency side peak.
//! [`wls_fit`] minimises Σ (p_l − ⟨p_l⟩)²/f(x_l) over (k_Ω, φ_a, c) and is the
//! precision estimator; it is normally seeded by the Fourier result.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::interferometer::PulseSequence;
use crate::sensitivity::numeric_variances;
use crate::synthesis::{wrap_phase, PixelGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Fourier,
    Wls,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringeEstimate {
    /// rad/m, never negative
    pub k_omega_hat: f64,
    /// rad, in (−π, π]
    pub phi_a_hat: f64,
    pub contrast_hat: f64,
    pub method: Method,
    pub converged: bool,
    pub iterations: usize,
    /// Largest gradient component over the square root of its curvature (WLS only).
    #[serde(default)]
    pub normal_residual: Option<f64>,
    /// Shot-noise variance predicted at the estimate (WLS only).
    #[serde(default)]
    pub var_k_omega: Option<f64>,
    #[serde(default)]
    pub var_phi_a: Option<f64>,
}

impl FringeEstimate {
    pub fn new(k_omega: f64, phi_a: f64, contrast: f64, method: Method) -> Self {
        Self {
            k_omega_hat: k_omega,
            phi_a_hat: phi_a,
            contrast_hat: contrast,
            method,
            converged: true,
            iterations: 0,
            normal_residual: None,
            var_k_omega: None,
            var_phi_a: None,
        }
    }
}

const MIN_PROFILE: usize = 8;
const EXCLUSION_SIGMAS: f64 = 2.5;
const NOISE_FACTOR: f64 = 4.0;
const MIN_PEAK_WIDTH: f64 = 0.5;

fn profile_sigma(profile: &[f64], x: &[f64]) -> f64 {
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for (&p, &xl) in profile.iter().zip(x) {
        s0 += p;
        s1 += p * xl;
        s2 += p * xl * xl;
    }
    if s0 <= 0.0 {
        return 0.0;
    }
    let mean = s1 / s0;
    (s2 / s0 - mean * mean).max(0.0).sqrt()
}

/// Σ p_l e^{−ik x_l}
fn dtft(profile: &[f64], x: &[f64], k: f64) -> Complex64 {
    profile
        .iter()
        .zip(x)
        .map(|(&p, &xl)| Complex64::from_polar(p, -k * xl))
        .sum()
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Side-peak estimate of (k_Ω, φ_a, c) from the x profile.
pub fn fourier_estimate(profile: &[f64], grid: &PixelGrid) -> Result<FringeEstimate> {
    let n = profile.len();
    if n < MIN_PROFILE {
        return Err(Error::Domain(format!(
            "profile needs at least {MIN_PROFILE} pixels, got {n}"
        )));
    }
    if n != grid.nx {
        return Err(Error::Domain(format!(
            "profile has {n} pixels, grid has {}",
            grid.nx
        )));
    }
    let x = grid.x_centers();
    let m = (4 * n).next_power_of_two();
    let mut buf: Vec<Complex64> = profile.iter().map(|&p| Complex64::new(p, 0.0)).collect();
    buf.resize(m, Complex64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let mag: Vec<f64> = buf[..=m / 2].iter().map(|z| z.norm()).collect();
    let dk = 2.0 * PI / (m as f64 * grid.pitch);

    let sigma = profile_sigma(profile, &x);
    let exclusion = if sigma > 0.0 {
        ((EXCLUSION_SIGMAS / sigma / dk).ceil() as usize).max(2)
    } else {
        2
    };
    let dc = mag[0];
    let last = mag.len() - 1;
    let mut best: Option<usize> = None;
    for b in exclusion.max(1)..last {
        if mag[b] > mag[b - 1] && mag[b] > mag[b + 1] && best.is_none_or(|i| mag[b] > mag[i]) {
            best = Some(b);
        }
    }
    let halo = if sigma > 0.0 {
        ((3.0 / sigma / dk).ceil() as usize).max(2)
    } else {
        2
    };
    let off_peak: Vec<f64> = (exclusion..=last)
        .filter(|&b| best.is_none_or(|i| b.abs_diff(i) > halo))
        .map(|b| mag[b])
        .collect();
    let floor = NOISE_FACTOR * median(off_peak);
    let peak = best.map_or(0.0, |i| mag[i]);
    let b = match best {
        Some(b) if peak > floor && peak > 1e-9 * dc => b,
        _ => return Err(Error::FringesUnresolved { peak, floor }),
    };

    let (lm, l0, lp) = (mag[b - 1].ln(), mag[b].ln(), mag[b + 1].ln());
    let denom = lm - 2.0 * l0 + lp;
    // a fringe peak is as wide as the envelope spectrum, ~1/σ; window ripples are much narrower
    if sigma > 0.0 && denom < 0.0 && dk / (-denom).sqrt() * sigma < MIN_PEAK_WIDTH {
        return Err(Error::FringesUnresolved { peak, floor });
    }
    let offset = if denom < 0.0 {
        (0.5 * (lm - lp) / denom).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    let k_hat = (b as f64 + offset) * dk;
    let side = dtft(profile, &x, k_hat);
    let zero: f64 = profile.iter().sum();
    let contrast = if zero > 0.0 { 2.0 * side.norm() / zero } else { 0.0 };
    Ok(FringeEstimate::new(
        k_hat,
        wrap_phase(side.arg()),
        contrast,
        Method::Fourier,
    ))
}

pub const WLS_FLOOR: f64 = 1e-3;
pub const WLS_MAX_ITER: usize = 200;
pub const WLS_TOL: f64 = 1e-8;

struct Normal {
    h: Matrix3<f64>,
    g: Vector3<f64>,
    chi2: f64,
    /// (k, φ) diagonal with every sin² replaced by 1
    reference: (f64, f64),
}

fn normal_equations(p: &[f64], f: &[f64], x: &[f64], theta: &Vector3<f64>) -> Normal {
    let (k, phi, c) = (theta[0], theta[1], theta[2]);
    let mut h = Matrix3::zeros();
    let mut g = Vector3::zeros();
    let mut chi2 = 0.0;
    let mut reference = (0.0, 0.0);
    for ((&pl, &fl), &xl) in p.iter().zip(f).zip(x) {
        let (s, co) = (k * xl + phi).sin_cos();
        let r = pl - 0.5 * fl * (1.0 + c * co);
        // weighted Jacobian row J_l / sqrt(f_l) and residual r_l / sqrt(f_l)
        let j = Vector3::new(-0.5 * c * xl * s, -0.5 * c * s, 0.5 * co) * fl.sqrt();
        let rw = r / fl.sqrt();
        h += j * j.transpose();
        g += j * rw;
        chi2 += rw * rw;
        let w = 0.25 * c * c * fl;
        reference.0 += w * xl * xl;
        reference.1 += w;
    }
    Normal { h, g, chi2, reference }
}

fn check_identifiable(n: &Normal) -> Result<()> {
    crate::sensitivity::check_information(
        n.h[(0, 0)],
        n.h[(0, 1)],
        n.h[(1, 1)],
        n.reference.0 * n.reference.1,
    )
}

fn normal_residual(n: &Normal) -> f64 {
    (0..3)
        .map(|i| {
            let d = n.h[(i, i)];
            if d > 0.0 {
                n.g[i].abs() / d.sqrt()
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

/// Weighted least-squares fit of ½f(x)(1 + c·cos(k x + φ)) to `profile`.
///
/// `f` is the expected cloud profile (trial counts), used both in the model and
/// as the weight. Pixels with f below `WLS_FLOOR·max f` are ignored.
pub fn wls_fit(
    profile: &[f64],
    f: &[f64],
    grid: &PixelGrid,
    init: &FringeEstimate,
) -> Result<FringeEstimate> {
    if profile.len() != grid.nx || f.len() != grid.nx {
        return Err(Error::Domain(format!(
            "profile ({}) and cloud ({}) must both have {} pixels",
            profile.len(),
            f.len(),
            grid.nx
        )));
    }
    wls_fit_at(profile, f, &grid.x_centers(), init)
}

/// [`wls_fit`] on explicit pixel coordinates.
pub fn wls_fit_at(
    profile: &[f64],
    f: &[f64],
    x: &[f64],
    init: &FringeEstimate,
) -> Result<FringeEstimate> {
    if profile.len() != f.len() || f.len() != x.len() {
        return Err(Error::Domain("profile, cloud and coordinates differ in length".into()));
    }
    let fmax = f.iter().cloned().fold(0.0, f64::max);
    if fmax <= 0.0 || !fmax.is_finite() {
        return Err(Error::Domain("cloud profile has no positive pixels".into()));
    }
    let keep: Vec<usize> = (0..f.len()).filter(|&l| f[l] >= WLS_FLOOR * fmax).collect();
    let p: Vec<f64> = keep.iter().map(|&l| profile[l]).collect();
    let fk: Vec<f64> = keep.iter().map(|&l| f[l]).collect();
    let xk: Vec<f64> = keep.iter().map(|&l| x[l]).collect();
    let span = xk.last().unwrap() - xk.first().unwrap() + 1e-300;

    let mut theta = Vector3::new(init.k_omega_hat, init.phi_a_hat, init.contrast_hat);
    let mut cur = normal_equations(&p, &fk, &xk, &theta);
    check_identifiable(&cur)?;
    let mut lambda = 1e-6;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < WLS_MAX_ITER {
        iterations += 1;
        let scale = Vector3::new(theta[0].abs() + 1.0 / span, theta[1].abs().max(1.0), theta[2].abs().max(1e-3));
        let mut accepted = false;
        for _ in 0..40 {
            let mut a = cur.h;
            for i in 0..3 {
                a[(i, i)] *= 1.0 + lambda;
            }
            let Some(step) = a.cholesky().map(|ch| ch.solve(&cur.g)) else {
                lambda = (lambda * 10.0).max(1e-9);
                continue;
            };
            let small = (0..3).all(|i| step[i].abs() <= WLS_TOL * scale[i]);
            let trial = theta + step;
            let next = normal_equations(&p, &fk, &xk, &trial);
            if next.chi2 <= cur.chi2 || small {
                theta = trial;
                cur = next;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                converged = small;
                break;
            }
            lambda *= 10.0;
        }
        if converged {
            break;
        }
        if !accepted {
            // no downhill step at any damping: stationary to working precision
            converged = normal_residual(&cur) < 1e-6;
            break;
        }
    }
    check_identifiable(&cur)?;

    let (mut k, mut phi, mut c) = (theta[0], theta[1], theta[2]);
    if c < 0.0 {
        c = -c;
        phi += PI;
    }
    if k < 0.0 {
        k = -k;
        phi = -phi;
    }
    let phi = wrap_phase(phi);
    let var = numeric_variances(&fk, &xk, k, phi, c.min(1.0)).ok();
    Ok(FringeEstimate {
        k_omega_hat: k,
        phi_a_hat: phi,
        contrast_hat: c,
        method: Method::Wls,
        converged,
        iterations,
        normal_residual: Some(normal_residual(&cur)),
        var_k_omega: var.map(|v| v.var_k_omega),
        var_phi_a: var.map(|v| v.var_phi_a),
    })
}

/// Fourier estimate followed by a WLS refinement seeded from it.
pub fn fit_profile(
    profile: &[f64],
    f: &[f64],
    grid: &PixelGrid,
) -> Result<(FringeEstimate, FringeEstimate)> {
    let fourier = fourier_estimate(profile, grid)?;
    let init = FringeEstimate {
        contrast_hat: fourier.contrast_hat.clamp(0.05, 1.0),
        ..fourier
    };
    let wls = wls_fit(profile, f, grid, &init)?;
    Ok((fourier, wls))
}

/// Fits many profiles sharing one grid; results keep the input order.
pub fn fit_batch(
    profiles: &[Vec<f64>],
    f: &[f64],
    grid: &PixelGrid,
    exec: Execution,
) -> Vec<Result<(FringeEstimate, FringeEstimate)>> {
    map_indexed(profiles.len(), exec, |i| fit_profile(&profiles[i], f, grid))
}

/// Acceleration from a wrapped phase, using a coarse accelerometer to pick the fringe.
pub fn unwrap_acceleration(
    phi_a_hat: f64,
    seq: &PulseSequence,
    k_eff: f64,
    a_coarse: f64,
    a_coarse_sigma: f64,
) -> Result<f64> {
    let scale = k_eff * seq.big_t() * seq.phase_factor();
    let required = PI / 3.0 / scale;
    if a_coarse_sigma.is_nan() || a_coarse_sigma < 0.0 || a_coarse_sigma * scale >= PI / 3.0 {
        return Err(Error::Ambiguous {
            coarse_sigma: a_coarse_sigma,
            required,
        });
    }
    let m = ((scale * a_coarse - phi_a_hat) / (2.0 * PI)).round();
    Ok((phi_a_hat + 2.0 * PI * m) / scale)
}
