use periodic_peaks::groundstate::{fit_tail_constants, solve_ground_state};
use periodic_peaks::GroundStateProfile;

fn sech(x: f64) -> f64 {
    1.0 / x.cosh()
}

fn soliton3() -> GroundStateProfile {
    solve_ground_state(1, 3.0, 1e-10).unwrap()
}

#[test]
fn cubic_line_soliton_center_and_shape() {
    let p = soliton3();
    assert!((p.center_value - 2f64.sqrt()).abs() < 1e-10, "{}", p.center_value);
    assert!((p.eval(&[5.0]) - 2f64.sqrt() * sech(5.0)).abs() < 1e-10);
    let worst = (0..=2000)
        .map(|i| i as f64 * 0.005)
        .map(|x| (p.value(x) - 2f64.sqrt() * sech(x)).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-8, "{worst}");
}

#[test]
fn quadratic_line_soliton() {
    let p: GroundStateProfile = solve_ground_state(1, 2.0, 1e-10).unwrap();
    assert!((p.center_value - 1.5).abs() < 1e-10);
    let fit = fit_tail_constants(&p, [8.0, 12.0]).unwrap();
    assert!((fit.l0 - 6.0).abs() < 6.0 * 1e-3, "{}", fit.l0);
    assert!((p.tail_l0 - 6.0).abs() < 1e-5, "{}", p.tail_l0);
}

#[test]
fn cubic_line_tail_constants() {
    let p = soliton3();
    let l = 2.0 * 2f64.sqrt();
    assert!((p.tail_l0 - l).abs() < 1e-6 * l, "{}", p.tail_l0);
    assert!((p.tail_l1 - l).abs() < 1e-6 * l, "{}", p.tail_l1);
    let near = fit_tail_constants(&p, [6.0, 8.0]).unwrap();
    let far = fit_tail_constants(&p, [10.0, 14.0]).unwrap();
    assert!((far.l1 / far.l0 - 1.0).abs() < (near.l1 / near.l0 - 1.0).abs());
}

#[test]
fn profile_invariants_in_the_plane() {
    let p: GroundStateProfile = solve_ground_state(2, 3.0, 1e-10).unwrap();
    assert_eq!(p.derivatives[0], 0.0);
    assert!(p.values.windows(2).all(|w| w[1] < w[0]));
    assert!(p.values.iter().all(|v| *v > 0.0));
    assert!(p.ode_residual < 1e-10);
    // energy dissipates for N ≥ 2
    assert!((1..p.values.len()).all(|j| p.energy(j) <= p.energy(j - 1) + 1e-14));
    let fit = fit_tail_constants(&p, [8.0, 12.0]).unwrap();
    assert!(fit.l0_spread < 0.02);
    assert!((fit.l0 / p.tail_l0 - 1.0).abs() < 0.02);
    // branches agree at the matching radius
    let rm = p.tail_match_radius;
    let inner = p.value(rm - 1e-9);
    let outer = p.value(rm + 1e-9);
    assert!((inner / outer - 1.0).abs() < 1e-4);
    assert_eq!(p.value(1e4), 0.0);
    eprintln!("N=2 p=3: U(0)={} L0={} L1={} rm={}", p.center_value, p.tail_l0, p.tail_l1, rm);
}

#[test]
fn energy_conserved_on_the_line() {
    let p = soliton3();
    let e0 = p.energy(0);
    let jm = (8.0 / p.grid_step()) as usize;
    assert!((0..jm).all(|j| (p.energy(j) - e0).abs() < 1e-9));
}

#[test]
fn single_precision_profile() {
    let p = solve_ground_state(1, 3.0f32, 1e-3).unwrap();
    assert!((p.center_value - 2f32.sqrt()).abs() < 1e-4);
}

#[test]
fn three_dimensional_profile_exists() {
    let p: GroundStateProfile = solve_ground_state(3, 3.0, 1e-9).unwrap();
    assert!(p.center_value > 2.0 && p.center_value < 6.0);
    assert!(fit_tail_constants(&p, [8.0, 12.0]).is_ok());
}
