//! Synthetic PSI detection images.
//!
//! The expected count in pixel l is ½(1 + c·cos(k_Ω x_l + φ_a))·f(x_l), where
//! f is the Gaussian cloud integrated over the pixel. Sampled images draw each
//! pixel independently from a binomial with trial count f(x_l), rounded to an
//! integer. Fringes run along +x; rotate coordinates before calling for any
//! other orientation.
//!
//! Randomness is derived from a single 64-bit seed. Each pixel owns a ChaCha8
//! stream selected by its row-major index, so an image is identical no matter
//! how the pixel loop is scheduled.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt::Write as _;

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{ensure_non_negative, ensure_positive, Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::interferometer::{acceleration_phase, build_sequence};
use crate::physics::{k_eff, sigma_f, ExperimentConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelGrid {
    pub nx: usize,
    pub ny: usize,
    /// m
    pub pitch: f64,
    /// Coordinates of the grid centre relative to the cloud centre, m.
    pub origin: [f64; 2],
}

impl PixelGrid {
    pub fn new(nx: usize, ny: usize, pitch: f64) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::field("grid_size", "both dimensions must be >= 1"));
        }
        Ok(Self {
            nx,
            ny,
            pitch: ensure_positive("pixel_pitch", pitch)?,
            origin: [0.0, 0.0],
        })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x_centers(&self) -> Vec<f64> {
        centers(self.nx, self.pitch, self.origin[0])
    }

    pub fn y_centers(&self) -> Vec<f64> {
        centers(self.ny, self.pitch, self.origin[1])
    }

    /// Same x axis collapsed to a single row.
    pub fn row(&self) -> Self {
        Self { ny: 1, ..*self }
    }
}

fn centers(n: usize, pitch: f64, origin: f64) -> Vec<f64> {
    let mid = (n as f64 - 1.0) / 2.0;
    (0..n).map(|i| origin + (i as f64 - mid) * pitch).collect()
}

/// Fraction of a unit Gaussian of width `sigma` falling in each pixel.
fn pixel_masses(centers: &[f64], pitch: f64, sigma: f64) -> Vec<f64> {
    let s = FRAC_1_SQRT_2 / sigma;
    centers
        .iter()
        .map(|&x| {
            let (lo, hi) = ((x - 0.5 * pitch) * s, (x + 0.5 * pitch) * s);
            // evaluate on the side away from the tail to limit cancellation
            if lo > 0.0 {
                0.5 * (erf(-lo) - erf(-hi))
            } else {
                0.5 * (erf(hi) - erf(lo))
            }
        })
        .collect()
}

/// Expected atoms per pixel, row-major (`iy * nx + ix`), summing to `atom_number`.
pub fn cloud_profile(atom_number: f64, sigma_f: f64, grid: &PixelGrid) -> Result<Vec<f64>> {
    ensure_positive("atom_number", atom_number)?;
    ensure_positive("sigma_f", sigma_f)?;
    if sigma_f < grid.pitch / 10.0 {
        warn!(
            "cloud size {sigma_f:.3e} m is under-resolved by pixel pitch {:.3e} m",
            grid.pitch
        );
    }
    let mx = pixel_masses(&grid.x_centers(), grid.pitch, sigma_f);
    let my = pixel_masses(&grid.y_centers(), grid.pitch, sigma_f);
    let total = mx.iter().sum::<f64>() * my.iter().sum::<f64>();
    if total <= 0.0 {
        return Err(Error::Domain("cloud lies entirely outside the grid".into()));
    }
    let scale = atom_number / total;
    let mut f = Vec::with_capacity(grid.len());
    for &wy in &my {
        f.extend(mx.iter().map(|&wx| wx * wy * scale));
    }
    Ok(f)
}

/// Per-pixel binomial mean and variance.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedCounts {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

/// Detected-state probability ½(1 + c·cos φ).
#[inline]
pub fn detection_probability(contrast: f64, phase: f64) -> f64 {
    0.5 * (1.0 + contrast * phase.cos())
}

pub fn expected_counts(
    f: &[f64],
    grid: &PixelGrid,
    k_omega: f64,
    phi_a: f64,
    contrast: f64,
) -> Result<ExpectedCounts> {
    check_contrast(contrast)?;
    check_len(f, grid)?;
    let xs = grid.x_centers();
    let (mean, variance) = f
        .iter()
        .enumerate()
        .map(|(l, &fl)| {
            let phase = k_omega * xs[l % grid.nx] + phi_a;
            let cc = contrast * phase.cos();
            (0.5 * (1.0 + cc) * fl, 0.25 * (1.0 - cc * cc) * fl)
        })
        .unzip();
    Ok(ExpectedCounts { mean, variance })
}

fn check_contrast(c: f64) -> Result<()> {
    if (0.0..=1.0).contains(&c) {
        Ok(())
    } else {
        Err(Error::field("contrast", format!("must lie in [0, 1], got {c}")))
    }
}

fn check_len(f: &[f64], grid: &PixelGrid) -> Result<()> {
    if f.len() != grid.len() {
        return Err(Error::Domain(format!(
            "profile has {} pixels, grid has {}",
            f.len(),
            grid.len()
        )));
    }
    Ok(())
}

/// Parameters that generated an image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub k_omega: f64,
    pub phi_a: f64,
    pub contrast: f64,
    pub atom_number: f64,
    pub sigma_f: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FringeImage {
    pub grid: PixelGrid,
    /// Row-major detected-state counts.
    pub counts: Vec<u64>,
    /// Column sums of `counts`.
    pub profile_1d: Vec<u64>,
    pub truth: Option<Truth>,
}

#[inline]
pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent child seed for stream `index` of `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(0xA076_1D64_78BD_642F)))
}

fn unit_f64(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Integer trial counts with E[trials_l] = f_l and Σ trials = round(Σ f).
///
/// Systematic rounding with one seeded offset: each pixel gets ⌊f_l⌋ or ⌈f_l⌉,
/// rounding up with probability equal to the fractional part, and the total
/// never exceeds the atom number.
pub fn trial_counts(f: &[f64], seed: u64) -> Vec<u64> {
    let u = unit_f64(splitmix64(seed ^ 0x5EED_0F7A_1A15));
    let total = f.iter().sum::<f64>().round();
    let mut out = Vec::with_capacity(f.len());
    let mut cum = 0.0;
    let mut prev = u.floor();
    for (l, &fl) in f.iter().enumerate() {
        cum += fl;
        let c = if l + 1 == f.len() { total } else { cum.min(total) };
        let next = (c + u).floor();
        out.push((next - prev).max(0.0) as u64);
        prev = prev.max(next);
    }
    out
}

fn pixel_rng(seed: u64, pixel: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(pixel);
    rng
}

/// Draws per-pixel binomial counts, deterministic in `seed`.
pub fn sample_image(
    f: &[f64],
    grid: &PixelGrid,
    k_omega: f64,
    phi_a: f64,
    contrast: f64,
    seed: u64,
    exec: Execution,
) -> Result<FringeImage> {
    check_contrast(contrast)?;
    check_len(f, grid)?;
    for (l, &fl) in f.iter().enumerate() {
        ensure_non_negative(&format!("profile[{l}]"), fl)?;
    }
    let trials = trial_counts(f, seed);
    let xs = grid.x_centers();
    let counts = map_indexed(grid.len(), exec, |l| {
        let n = trials[l];
        if n == 0 {
            return 0;
        }
        let p = detection_probability(contrast, k_omega * xs[l % grid.nx] + phi_a).clamp(0.0, 1.0);
        let mut rng = pixel_rng(seed, l as u64);
        Binomial::new(n, p)
            .expect("probability clamped to [0, 1]")
            .sample(&mut rng)
    });
    let mut image = FringeImage {
        grid: *grid,
        counts,
        profile_1d: Vec::new(),
        truth: None,
    };
    image.profile_1d = integrate_y(&image);
    Ok(image)
}

/// Column sums over y.
pub fn integrate_y(image: &FringeImage) -> Vec<u64> {
    let nx = image.grid.nx;
    let mut profile = vec![0u64; nx];
    for row in image.counts.chunks(nx) {
        for (acc, &c) in profile.iter_mut().zip(row) {
            *acc += c;
        }
    }
    profile
}

/// Column sums of a real-valued row-major field.
pub fn integrate_y_f64(values: &[f64], nx: usize) -> Vec<f64> {
    let mut profile = vec![0.0; nx];
    for row in values.chunks(nx) {
        for (acc, &c) in profile.iter_mut().zip(row) {
            *acc += c;
        }
    }
    profile
}

/// A complete simulation setup: cloud, fringe parameters and detector grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringeScenario {
    pub atom_number: f64,
    pub contrast: f64,
    pub sigma_f: f64,
    pub k_omega: f64,
    pub phi_a: f64,
    pub grid: PixelGrid,
}

impl FringeScenario {
    /// One-row scenario whose `n_pixels` span ±`half_width_sigmas`·σf.
    pub fn one_dimensional(
        atom_number: f64,
        contrast: f64,
        sigma_f: f64,
        k_omega: f64,
        phi_a: f64,
        n_pixels: usize,
        half_width_sigmas: f64,
    ) -> Result<Self> {
        let pitch = 2.0 * half_width_sigmas * sigma_f / n_pixels as f64;
        Ok(Self {
            atom_number,
            contrast,
            sigma_f,
            k_omega,
            phi_a,
            grid: PixelGrid::new(n_pixels, 1, pitch)?,
        })
    }

    /// Scenario implied by an experiment config. The fringe wavevector uses the
    /// (T + ΣT_j) form unless `k_omega` is given explicitly.
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let seq = build_sequence(cfg.lmt_order, cfg.big_t, &cfg.extra_intervals)?;
        let ke = k_eff(&cfg.species);
        let k_omega = cfg
            .k_omega
            .unwrap_or_else(|| (ke * cfg.rotation_rate * seq.fringe_factor()).abs());
        let phi_a = cfg
            .phi_a
            .unwrap_or_else(|| wrap_phase(acceleration_phase(&seq, cfg.acceleration, ke)));
        Ok(Self {
            atom_number: cfg.atom_number as f64,
            contrast: cfg.contrast,
            sigma_f: sigma_f(cfg),
            k_omega,
            phi_a,
            grid: PixelGrid::new(cfg.grid_size.0, cfg.grid_size.1, cfg.pixel_pitch)?,
        })
    }

    pub fn truth(&self) -> Truth {
        Truth {
            k_omega: self.k_omega,
            phi_a: self.phi_a,
            contrast: self.contrast,
            atom_number: self.atom_number,
            sigma_f: self.sigma_f,
        }
    }

    pub fn cloud(&self) -> Result<Vec<f64>> {
        cloud_profile(self.atom_number, self.sigma_f, &self.grid)
    }

    /// Expected cloud profile integrated over y.
    pub fn cloud_1d(&self) -> Result<Vec<f64>> {
        Ok(integrate_y_f64(&self.cloud()?, self.grid.nx))
    }

    /// Noise-free 1D profile of expected detected counts.
    pub fn expected_profile_1d(&self) -> Result<Vec<f64>> {
        let f = self.cloud()?;
        let e = expected_counts(&f, &self.grid, self.k_omega, self.phi_a, self.contrast)?;
        Ok(integrate_y_f64(&e.mean, self.grid.nx))
    }

    pub fn sample(&self, seed: u64, exec: Execution) -> Result<FringeImage> {
        let f = self.cloud()?;
        self.sample_with_cloud(&f, seed, exec)
    }

    /// Same as [`sample`](Self::sample) with a precomputed cloud profile.
    pub fn sample_with_cloud(&self, f: &[f64], seed: u64, exec: Execution) -> Result<FringeImage> {
        let mut image = sample_image(
            f,
            &self.grid,
            self.k_omega,
            self.phi_a,
            self.contrast,
            seed,
            exec,
        )?;
        image.truth = Some(self.truth());
        Ok(image)
    }
}

/// Wraps a phase into (−π, π].
pub fn wrap_phase(phi: f64) -> f64 {
    if phi > -PI && phi <= PI {
        return phi;
    }
    let mut w = phi - 2.0 * PI * (phi / (2.0 * PI)).round();
    if w <= -PI {
        w += 2.0 * PI;
    } else if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Metadata written next to an image CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSidecar {
    pub grid: PixelGrid,
    pub truth: Option<Truth>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Identifier of the run manifest that produced the image.
    #[serde(default)]
    pub manifest: Option<String>,
}

impl FringeImage {
    /// One CSV row per pixel row, comma-separated counts.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.counts.len() * 4);
        for row in self.counts.chunks(self.grid.nx) {
            for (i, c) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write!(out, "{c}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn sidecar(&self, seed: Option<u64>, manifest: Option<String>) -> ImageSidecar {
        ImageSidecar {
            grid: self.grid,
            truth: self.truth,
            seed,
            manifest,
        }
    }

    /// Parses the CSV produced by [`to_csv`](Self::to_csv). The grid comes from the sidecar.
    pub fn from_csv(text: &str, sidecar: &ImageSidecar) -> Result<Self> {
        let grid = sidecar.grid;
        let mut counts = Vec::with_capacity(grid.len());
        let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        if rows.len() != grid.ny {
            return Err(Error::Parse(format!(
                "expected {} rows, found {}",
                grid.ny,
                rows.len()
            )));
        }
        for (r, line) in rows.iter().enumerate() {
            let before = counts.len();
            for cell in line.split(',') {
                let v: u64 = cell.trim().parse().map_err(|_| {
                    Error::Parse(format!("row {r}: bad count {:?}", cell.trim()))
                })?;
                counts.push(v);
            }
            if counts.len() - before != grid.nx {
                return Err(Error::Parse(format!(
                    "row {r}: expected {} columns, found {}",
                    grid.nx,
                    counts.len() - before
                )));
            }
        }
        let mut image = Self {
            grid,
            counts,
            profile_1d: Vec::new(),
            truth: sidecar.truth,
        };
        image.profile_1d = integrate_y(&image);
        Ok(image)
    }

    pub fn profile_f64(&self) -> Vec<f64> {
        self.profile_1d.iter().map(|&c| c as f64).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn profile_matches_quadrature() {
        let sigma = 1e-3;
        let grid = PixelGrid::new(64, 48, 8.0 * sigma / 64.0).unwrap();
        let f = cloud_profile(1e5, sigma, &grid).unwrap();
        assert_relative_eq!(f.iter().sum::<f64>(), 1e5, max_relative = 1e-6);

        let g = |x: f64| (-0.5 * (x / sigma).powi(2)).exp();
        let xs = grid.x_centers();
        let ys = grid.y_centers();
        let p = grid.pitch;
        let qx: Vec<f64> = xs.iter().map(|&x| simpson(g, x - p / 2.0, x + p / 2.0, 64)).collect();
        let qy: Vec<f64> = ys.iter().map(|&y| simpson(g, y - p / 2.0, y + p / 2.0, 64)).collect();
        let total: f64 = qx.iter().sum::<f64>() * qy.iter().sum::<f64>();
        for iy in 0..grid.ny {
            for ix in 0..grid.nx {
                let want = 1e5 * qx[ix] * qy[iy] / total;
                assert_relative_eq!(f[iy * grid.nx + ix], want, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn wide_cloud_is_flat_and_symmetric() {
        let grid = PixelGrid::new(33, 1, 1e-5).unwrap();
        let f = cloud_profile(1e4, 1.0, &grid).unwrap();
        let max = f.iter().cloned().fold(0.0, f64::max);
        let min = f.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((max - min) / max < 1e-6);
        let g = cloud_profile(1e4, 1e-4, &grid).unwrap();
        for i in 0..33 {
            assert_relative_eq!(g[i], g[32 - i], max_relative = 1e-12);
        }
    }

    #[test]
    fn expected_count_endpoints() {
        let grid = PixelGrid::new(21, 1, 1e-5).unwrap();
        let f = cloud_profile(1e4, 1e-4, &grid).unwrap();
        let e = expected_counts(&f, &grid, 3e4, 0.4, 0.0).unwrap();
        for (m, fl) in e.mean.iter().zip(&f) {
            assert_relative_eq!(*m, fl / 2.0);
        }
        // centre pixel sits at x = 0
        let e = expected_counts(&f, &grid, 3e4, 0.0, 1.0).unwrap();
        assert_relative_eq!(e.mean[10], f[10]);
        assert_eq!(e.variance[10], 0.0);
    }

    #[test]
    fn ten_pixel_period() {
        let grid = PixelGrid::new(101, 1, 1e-5).unwrap();
        let f = vec![100.0; 101];
        let k = 2.0 * PI / (10.0 * grid.pitch);
        let e = expected_counts(&f, &grid, k, 0.3, 0.8).unwrap();
        for l in 0..91 {
            assert_relative_eq!(e.mean[l], e.mean[l + 10], max_relative = 1e-9);
        }
        assert!((e.mean[0] - e.mean[5]).abs() > 1.0);
    }

    #[test]
    fn trial_counts_are_unbiased_and_bounded() {
        let f: Vec<f64> = (0..50).map(|i| 0.37 + i as f64 * 0.11).collect();
        let total: f64 = f.iter().sum();
        let mut mean = vec![0.0; f.len()];
        let reps = 20_000;
        for s in 0..reps {
            let t = trial_counts(&f, s);
            assert!(t.iter().sum::<u64>() as f64 <= total.round());
            for (l, &n) in t.iter().enumerate() {
                assert!(n as f64 == f[l].floor() || n as f64 == f[l].ceil());
                mean[l] += n as f64 / reps as f64;
            }
        }
        // the last pixel absorbs the rounding of the total
        for (m, fl) in mean.iter().zip(&f).take(f.len() - 1) {
            assert!((m - fl).abs() < 0.02, "{m} vs {fl}");
        }
    }

    #[test]
    fn sampling_is_deterministic_and_schedule_free() {
        let sc = FringeScenario::one_dimensional(1e4, 0.5, 1e-3, 2e4, 0.3, 256, 4.0).unwrap();
        let a = sc.sample(42, Execution::Parallel).unwrap();
        let b = sc.sample(42, Execution::Sequential).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.counts, sc.sample(43, Execution::Parallel).unwrap().counts);
    }

    #[test]
    fn sampled_counts_respect_bounds() {
        let grid = PixelGrid::new(64, 16, 50e-6).unwrap();
        let f = cloud_profile(2e4, 0.5e-3, &grid).unwrap();
        let img = sample_image(&f, &grid, 3e4, 0.1, 0.9, 7, Execution::Parallel).unwrap();
        let trials = trial_counts(&f, 7);
        assert!(img.counts.iter().zip(&trials).all(|(c, t)| c <= t));
        assert!(img.counts.iter().sum::<u64>() <= 20_000);
        assert_eq!(img.profile_1d.iter().sum::<u64>(), img.counts.iter().sum::<u64>());
    }

    #[test]
    fn pixel_moments_match_binomial() {
        // one pixel repeated 10^4 times with different seeds
        let grid = PixelGrid::new(3, 1, 1e-4).unwrap();
        let f = vec![40.0, 40.0, 40.0];
        let (k, phi, c) = (5e3, 0.4, 0.7);
        let e = expected_counts(&f, &grid, k, phi, c).unwrap();
        let draws = 10_000;
        for l in 0..3 {
            let samples: Vec<f64> = (0..draws)
                .map(|s| sample_image(&f, &grid, k, phi, c, s, Execution::Sequential).unwrap().counts[l] as f64)
                .collect();
            let mean = samples.iter().sum::<f64>() / draws as f64;
            let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
            let se = (e.variance[l] / draws as f64).sqrt();
            assert!((mean - e.mean[l]).abs() < 4.0 * se, "pixel {l}: {mean} vs {}", e.mean[l]);
            assert!((var / e.variance[l] - 1.0).abs() < 0.1, "pixel {l}: {var} vs {}", e.variance[l]);
        }
    }

    /// Exact binomial pmf by enumeration of all 2^n outcomes.
    fn enumerated_pmf(n: u32, p: f64) -> Vec<f64> {
        let mut pmf = vec![0.0; n as usize + 1];
        for mask in 0u32..(1 << n) {
            let k = mask.count_ones();
            pmf[k as usize] += p.powi(k as i32) * (1.0 - p).powi((n - k) as i32);
        }
        pmf
    }

    #[test]
    fn binomial_sampler_chi_square() {
        // chi-square critical values at significance 1e-3 for dof 1..=12
        const CRIT: [f64; 12] = [
            10.828, 13.816, 16.266, 18.467, 20.515, 22.458, 24.322, 26.124, 27.877, 29.588, 31.264,
            32.909,
        ];
        for (n, p) in [(1u32, 0.3), (5, 0.5), (8, 0.15), (12, 0.62)] {
            let pmf = enumerated_pmf(n, p);
            let draws = 50_000u64;
            let mut hist = vec![0u64; n as usize + 1];
            for s in 0..draws {
                let mut rng = pixel_rng(s, 0);
                hist[Binomial::new(n as u64, p).unwrap().sample(&mut rng) as usize] += 1;
            }
            // pool cells with expectation < 5 into their neighbour
            let mut obs = Vec::new();
            let mut exp = Vec::new();
            let (mut o, mut e) = (0.0, 0.0);
            for k in 0..=n as usize {
                o += hist[k] as f64;
                e += pmf[k] * draws as f64;
                if e >= 5.0 {
                    obs.push(o);
                    exp.push(e);
                    o = 0.0;
                    e = 0.0;
                }
            }
            if e > 0.0 {
                *obs.last_mut().unwrap() += o;
                *exp.last_mut().unwrap() += e;
            }
            let chi2: f64 = obs.iter().zip(&exp).map(|(o, e)| (o - e).powi(2) / e).sum();
            let dof = obs.len() - 1;
            assert!(chi2 < CRIT[dof - 1], "n={n} p={p}: chi2 {chi2} dof {dof}");
        }
    }

    #[test]
    fn integrate_y_preserves_totals() {
        let grid = PixelGrid::new(4, 1, 1.0).unwrap();
        let img = FringeImage {
            grid,
            counts: vec![1, 2, 3, 4],
            profile_1d: vec![],
            truth: None,
        };
        assert_eq!(integrate_y(&img), vec![1, 2, 3, 4]);
        let grid = PixelGrid::new(2, 3, 1.0).unwrap();
        let img = FringeImage {
            grid,
            counts: vec![1, 2, 3, 4, 5, 6],
            profile_1d: vec![],
            truth: None,
        };
        assert_eq!(integrate_y(&img), vec![9, 12]);
    }

    #[test]
    fn csv_round_trip() {
        let sc = FringeScenario::one_dimensional(5e3, 0.5, 1e-3, 2e4, 0.3, 32, 4.0).unwrap();
        let mut sc2 = sc;
        sc2.grid.ny = 3;
        let img = sc2.sample(1, Execution::Parallel).unwrap();
        let side = img.sidecar(Some(1), None);
        let back = FringeImage::from_csv(&img.to_csv(), &side).unwrap();
        assert_eq!(back, img);
        assert!(FringeImage::from_csv("1,2\n", &side).is_err());
    }

    #[test]
    fn wrap_phase_range() {
        assert_eq!(wrap_phase(PI), PI);
        assert_relative_eq!(wrap_phase(-PI), PI);
        assert_relative_eq!(wrap_phase(2.0 * PI + 0.1), 0.1, epsilon = 1e-12);
        assert_relative_eq!(wrap_phase(-0.1), -0.1);
    }

    proptest::proptest! {
        #[test]
        fn counts_never_exceed_trials(seed in proptest::num::u64::ANY, c in 0.0f64..=1.0, phi in -3.0f64..3.0) {
            let grid = PixelGrid::new(40, 2, 40e-6).unwrap();
            let f = cloud_profile(3000.0, 0.3e-3, &grid).unwrap();
            let img = sample_image(&f, &grid, 4e4, phi, c, seed, Execution::Sequential).unwrap();
            let t = trial_counts(&f, seed);
            proptest::prop_assert!(img.counts.iter().zip(&t).all(|(a, b)| a <= b));
            proptest::prop_assert!(img.counts.iter().sum::<u64>() <= 3000);
        }
    }
}
