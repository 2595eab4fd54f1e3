use std::sync::Arc;

use periodic_peaks::ansatz::PeakConfiguration;
use periodic_peaks::dancer::{
    align_x1, lattice_through, minimal_period, newton_solve, psi_decay_fit, reflection_defect, verify_evenness,
    DancerOptions,
};
use periodic_peaks::domain::StripGrid;
use periodic_peaks::groundstate::solve_ground_state;
use periodic_peaks::{Error, GroundStateProfile};

fn plane() -> Arc<GroundStateProfile> {
    Arc::new(solve_ground_state(2, 3.0, 1e-10).unwrap())
}

fn grid(eps: f64, k: usize) -> StripGrid {
    StripGrid::with_spacing(eps, 14.0, 0.25, k).unwrap()
}

#[test]
fn single_peak_solution() {
    let opts = DancerOptions::default();
    let c = PeakConfiguration::uniform(0.3, 1).unwrap();
    let s = newton_solve(&c, plane(), &grid(0.3, 1), None, 0, &opts).unwrap();
    assert!(s.residual <= opts.tol);
    assert!(s.min_value > 0.0);
    assert!(s.iterations() <= 8);
    assert!(verify_evenness(&s, opts.tol).passes);
    assert!(minimal_period(&s, opts.tol).unwrap().passes);
    // ψ is the small defect from the periodized ground state
    assert!(s.psi.sup_norm() < 1e-4 && s.psi.sup_norm() > 0.0);
    let json = serde_json::to_value(&s).unwrap();
    assert!(json.get("field").is_none() && json.get("newton_history").is_some());
}

#[test]
fn two_peaks_relax_to_equal_spacing() {
    let opts = DancerOptions::default();
    let eps = 0.3;
    // pinned peak on a grid node, so the half-period shift is a node shift
    let first = -std::f64::consts::PI / eps;
    let c = PeakConfiguration::from_positions(eps, &[first, first + 10.0]).unwrap();
    let s = newton_solve(&c, plane(), &grid(eps, 2), None, 0, &opts).unwrap();
    let g = s.config.gaps();
    assert!((g[0] - g[1]).abs() < 1e-6, "{g:?}");
    // the relative-translation direction is only e^{-2σ}-stiff, so the
    // period defect sits well above the residual
    let m = minimal_period(&s, opts.tol).unwrap();
    assert!(m.period_defect < 1e-6 && m.half_period_defect > 0.5 * m.amplitude, "{m:?}");
    assert!(s.quadratic_ratio.is_none_or(|q| q.is_finite()));
}

#[test]
fn alignment_recovers_a_roll() {
    let opts = DancerOptions::default();
    let c = PeakConfiguration::uniform(0.35, 1).unwrap();
    let s = newton_solve(&c, plane(), &grid(0.35, 1), None, 0, &opts).unwrap();
    let (shift, diff) = align_x1(&s.field.shift_x1(7), &s.field).unwrap();
    assert!(diff < 1e-14);
    assert_eq!(shift.rem_euclid(s.field.grid().nodes_x1 as isize), (s.field.grid().nodes_x1 - 7) as isize);
    assert!(reflection_defect(&s.field, s.pinned_location) < 1e-12);
}

#[test]
fn lattice_is_uniform() {
    let l = lattice_through(0.2, 3, 4.0).unwrap();
    assert!(l.positions().iter().any(|x| (x - 4.0).abs() < 1e-12));
    let g = l.gaps();
    assert!(g.iter().all(|x| (x - g[0]).abs() < 1e-12));
}

#[test]
fn bad_inputs() {
    let opts = DancerOptions::default();
    let c = PeakConfiguration::uniform(0.3, 1).unwrap();
    assert!(matches!(
        newton_solve(&c, plane(), &grid(0.3, 1), None, 1, &opts),
        Err(Error::InvalidParameter { .. })
    ));
    let s = newton_solve(&c, plane(), &grid(0.3, 1), None, 0, &opts).unwrap();
    assert!(psi_decay_fit(std::slice::from_ref(&s), 0.3, 0.5).is_err());
    assert!(psi_decay_fit(&[s.clone(), s], 0.3, 1.2).is_err());
}
