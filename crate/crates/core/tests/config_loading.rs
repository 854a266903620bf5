use psi_core::physics::ExperimentConfig;
use psi_core::systematics::ZeemanScenario;

const ROOT: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs");

#[test]
fn lmt2_config_parses_with_units() {
    let cfg = ExperimentConfig::from_path(format!("{ROOT}/lmt2.json")).unwrap();
    assert_eq!(cfg.lmt_order, 2);
    assert_eq!(cfg.extra_intervals, vec![12e-3, 6e-3]);
    assert!((cfg.temperature - 6e-6).abs() < 1e-18);
    assert!((cfg.rotation_rate - 0.03).abs() < 1e-15);
    assert_eq!(cfg.grid_size, (256, 64));
}

#[test]
fn zeeman_config_parses() {
    let text = std::fs::read_to_string(format!("{ROOT}/zeeman.json")).unwrap();
    let (scn, budget) = ZeemanScenario::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
    assert_eq!(scn, ZeemanScenario::reference_example());
    assert_eq!(budget, Some(0.1));
}

#[test]
fn invalid_configs_name_the_field() {
    let cases = [
        (r#"{"contrast": 1.5}"#, "contrast"),
        (r#"{"lmt_order": 2, "extra_intervals": ["5 ms"]}"#, "extra_intervals"),
        (r#"{"big_t": "20 furlongs"}"#, "big_t"),
        (r#"{"colour": "blue"}"#, "colour"),
    ];
    for (text, field) in cases {
        let err = ExperimentConfig::from_json_str(text).unwrap_err().to_string();
        assert!(err.contains(field), "{text}: {err}");
    }
}

#[test]
fn defaults_round_trip_through_json() {
    let cfg = ExperimentConfig::reference_defaults();
    let text = serde_json::to_string(&cfg).unwrap();
    let back = ExperimentConfig::from_json_str(&text).unwrap();
    assert_eq!(back, cfg);
}
