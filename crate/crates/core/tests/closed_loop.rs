use psi_core::estimation::{fit_batch, fit_profile};
use psi_core::exec::Execution;
use psi_core::physics::ExperimentConfig;
use psi_core::synthesis::{wrap_phase, FringeImage, FringeScenario};

fn config() -> ExperimentConfig {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/lmt2.json")).unwrap();
    ExperimentConfig::from_json_str(&text).unwrap()
}

#[test]
fn simulate_then_fit_recovers_truth() {
    let sc = FringeScenario::from_config(&config()).unwrap();
    let f = sc.cloud().unwrap();
    let row = sc.grid.row();
    let f1 = sc.cloud_1d().unwrap();
    let img = sc.sample_with_cloud(&f, 42, Execution::Parallel).unwrap();
    let (fourier, wls) = fit_profile(&img.profile_f64(), &f1, &row).unwrap();
    assert!(wls.converged);
    let sd_k = wls.var_k_omega.unwrap().sqrt();
    let sd_phi = wls.var_phi_a.unwrap().sqrt();
    assert!((wls.k_omega_hat - sc.k_omega).abs() < 6.0 * sd_k, "{wls:?} vs {sc:?}");
    assert!(wrap_phase(wls.phi_a_hat - sc.phi_a).abs() < 6.0 * sd_phi);
    assert!((fourier.k_omega_hat / sc.k_omega - 1.0).abs() < 0.05);
}

#[test]
fn sampling_is_independent_of_execution() {
    let sc = FringeScenario::from_config(&config()).unwrap();
    let a = sc.sample(7, Execution::Sequential).unwrap();
    let b = sc.sample(7, Execution::Parallel).unwrap();
    assert_eq!(a.counts, b.counts);
    let c = sc.sample(8, Execution::Sequential).unwrap();
    assert_ne!(a.counts, c.counts);
}

#[test]
fn csv_round_trip_preserves_fit() {
    let sc = FringeScenario::from_config(&config()).unwrap();
    let img = sc.sample(3, Execution::Parallel).unwrap();
    let side = img.sidecar(Some(3), None);
    let back = FringeImage::from_csv(&img.to_csv(), &side).unwrap();
    assert_eq!(back.counts, img.counts);
    let f1 = sc.cloud_1d().unwrap();
    let row = sc.grid.row();
    let a = fit_profile(&img.profile_f64(), &f1, &row).unwrap();
    let b = fit_profile(&back.profile_f64(), &f1, &row).unwrap();
    assert_eq!(a.1.k_omega_hat, b.1.k_omega_hat);
}

#[test]
fn batch_matches_single_fits() {
    let sc = FringeScenario::one_dimensional(1e4, 0.5, 1e-3, 2.5e4, -1.0, 256, 4.0).unwrap();
    let f = sc.cloud().unwrap();
    let profiles: Vec<Vec<f64>> = (0..16)
        .map(|i| sc.sample_with_cloud(&f, i, Execution::Sequential).unwrap().profile_f64())
        .collect();
    let seq = fit_batch(&profiles, &f, &sc.grid, Execution::Sequential);
    let par = fit_batch(&profiles, &f, &sc.grid, Execution::Parallel);
    for (s, p) in seq.iter().zip(&par) {
        let (s, p) = (s.as_ref().unwrap(), p.as_ref().unwrap());
        assert_eq!(s.1.k_omega_hat, p.1.k_omega_hat);
        assert_eq!(s.1.phi_a_hat, p.1.phi_a_hat);
    }
}
