use periodic_peaks::run::{
    config_hash, error_report, gapped_configuration, perturbed_uniform, run, to_json_string, Command, RunConfig,
};
use periodic_peaks::Error;
use serde_json::json;

fn tmp(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join(name)
}

#[test]
fn toml_round_trip_and_sections() {
    let text = r#"
        seed = 3
        [groundstate]
        exponent = 2.5
        [peaks]
        epsilon = 0.25
        k = 2
        [reduction]
        sigma_sweep = [4.0, 5.0]
    "#;
    let c = RunConfig::from_toml(text).unwrap();
    assert_eq!(c.seed, 3);
    assert_eq!(c.groundstate.exponent, 2.5);
    assert_eq!(c.groundstate.dimension, 2);
    assert_eq!(c.reduction.sigma_sweep, vec![4.0, 5.0]);
    let again = RunConfig::from_toml(&c.to_toml().unwrap()).unwrap();
    assert_eq!(again, c);
}

#[test]
fn unknown_keys_are_config_errors() {
    let e = RunConfig::from_toml("[peaks]\nepsilonn = 0.2\n").unwrap_err();
    assert!(matches!(e, Error::Config(_)));
    assert_eq!(e.exit_code(), 2);
}

#[test]
fn validation_names_the_constraint() {
    let mut c = RunConfig::default();
    c.groundstate.exponent = 1.5;
    let e = c.validate(Command::Groundstate).unwrap_err();
    match &e {
        Error::InvalidParameter { name, constraint } => {
            assert_eq!(*name, "groundstate.exponent");
            assert!(constraint.contains("p ≥ 2"));
        }
        other => panic!("{other:?}"),
    }
    let r = error_report(&e);
    assert_eq!(r["exit_code"], 2);
    assert_eq!(r["error"], "invalid_parameter");

    let mut c = RunConfig::default();
    c.groundstate.dimension = 3;
    c.groundstate.exponent = 5.0;
    assert!(c.validate(Command::Groundstate).is_err());
    c.groundstate.exponent = 3.0;
    assert!(c.validate(Command::Groundstate).is_ok());
    assert!(c.validate(Command::Spectrum).is_err());

    let mut c = RunConfig::default();
    c.peaks.k = 1;
    assert!(c.validate(Command::Equilibrate).is_err());
    c.dancer.eta_prime = 1.5;
    assert!(c.validate(Command::Dancer).is_err());
    c.oracle.a = 0.5;
    assert!(c.validate(Command::OracleInteractions).is_err());
}

#[test]
fn json_floats_carry_seventeen_digits() {
    let x = 0.1f64 + 0.2;
    let s = to_json_string(&json!({"x": x, "n": 3, "v": [1.0, -2.5e-300]}));
    assert!(s.contains("3.0000000000000004e-1"), "{s}");
    assert!(s.contains("\"n\": 3"));
    let back: serde_json::Value = serde_json::from_str(&s).unwrap();
    assert_eq!(back["x"].as_f64().unwrap().to_bits(), x.to_bits());
    assert_eq!(back["v"][1].as_f64().unwrap(), -2.5e-300);
}

#[test]
fn hash_tracks_config_and_command() {
    let a = RunConfig::default();
    let mut b = a.clone();
    b.seed += 1;
    let h = config_hash(Command::Ansatz, &a).unwrap();
    assert_eq!(h.len(), 64);
    assert_eq!(h, config_hash(Command::Ansatz, &a).unwrap());
    assert_ne!(h, config_hash(Command::Ansatz, &b).unwrap());
    assert_ne!(h, config_hash(Command::Spectrum, &a).unwrap());
}

#[test]
fn perturbations_are_seeded_and_zero_sum() {
    let a = perturbed_uniform(0.2, 3, 0.05, -std::f64::consts::PI / 0.2, 5).unwrap();
    let b = perturbed_uniform(0.2, 3, 0.05, -std::f64::consts::PI / 0.2, 5).unwrap();
    assert_eq!(a, b);
    let target = a.period() / 3.0;
    let dev: Vec<f64> = a.gaps().iter().map(|g| g / target - 1.0).collect();
    assert!(dev.iter().sum::<f64>().abs() < 1e-12);
    assert!((dev.iter().map(|d| d.abs()).fold(0.0, f64::max) - 0.05).abs() < 1e-12, "{dev:?}");
    let g = gapped_configuration(2, 5.0, 2.0).unwrap().gaps();
    assert!((g[0] - 10.0).abs() < 1e-12 && (g[1] - 12.0).abs() < 1e-12);
}

#[test]
fn groundstate_run_writes_summary_and_profile() {
    let mut c = RunConfig::default();
    c.out_dir = tmp("run_groundstate");
    c.groundstate.dimension = 1;
    let out = run(Command::Groundstate, &c).unwrap();
    let r = &out.summary["result"];
    assert!((r["center_value"].as_f64().unwrap() - 2f64.sqrt()).abs() < 1e-9);
    assert!(r["closed_form_sup_error_0_10"].as_f64().unwrap() < 1e-8);
    assert_eq!(out.summary["config"]["groundstate"]["dimension"], 1);
    assert!(out.summary_path.exists());
    assert!(out.artifacts.iter().all(|p| p.exists()));
}

#[test]
fn spectrum_run_reports_lambda_min() {
    let mut c = RunConfig::default();
    c.out_dir = tmp("run_spectrum");
    c.peaks.k = 1;
    c.spectrum.count = 3;
    let out = run(Command::Spectrum, &c).unwrap();
    let l = out.summary["result"]["lambda_min"].as_f64().unwrap();
    assert!((l + 2.0).abs() < 0.04, "{l}");
    assert_eq!(out.summary["result"]["near_kernel_count"], 1);
}

#[test]
fn sweep_tables_preserve_order() {
    let mut c = RunConfig::default();
    c.out_dir = tmp("run_ansatz");
    c.peaks.epsilon_sweep = vec![0.35, 0.2, 0.3];
    let out = run(Command::Ansatz, &c).unwrap();
    let csv = std::fs::read_to_string(out.artifacts.iter().find(|p| p.ends_with("ansatz.csv")).unwrap()).unwrap();
    let eps: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(eps, vec![0.35, 0.2, 0.3]);
}
