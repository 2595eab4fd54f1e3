use std::sync::Arc;

use periodic_peaks::ansatz::{build_ansatz, PeakConfiguration};
use periodic_peaks::domain::{h1_product, StripGrid};
use periodic_peaks::groundstate::solve_ground_state;
use periodic_peaks::spectrum::{
    assemble_linearized, eigenpairs_near, h1_orthonormalize, lowest_eigenpairs, near_kernel, principal_angles,
};
use periodic_peaks::{Error, GroundStateProfile};

fn plane() -> Arc<GroundStateProfile> {
    Arc::new(solve_ground_state(2, 3.0, 1e-10).unwrap())
}

fn bundle(eps: f64, k: usize) -> periodic_peaks::ansatz::AnsatzBundle {
    let c = PeakConfiguration::uniform(eps, k).unwrap();
    let g = StripGrid::with_spacing(eps, 14.0, 0.25, k).unwrap();
    build_ansatz(&c, plane(), &g).unwrap()
}

#[test]
fn eigenpairs_are_accurate_and_sorted() {
    let b = bundle(0.25, 2);
    let op = assemble_linearized(&b).unwrap();
    let r = lowest_eigenpairs(&op, 3.0, 5, 1e-9).unwrap();
    assert!(r.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    assert!(r.residuals.iter().all(|x| *x < 1e-7), "{:?}", r.residuals);
    // two negative directions (one per peak), then the near-kernel pair
    assert!(r.eigenvalues[0] < -1.9 && r.eigenvalues[1] < -1.9);
    assert!(r.eigenvalues[2].abs() < 0.1 && r.eigenvalues[3].abs() < 0.1);
    for (i, v) in r.eigenvectors.iter().enumerate() {
        assert!((h1_product(v, v) - 1.0).abs() < 1e-8);
        for w in &r.eigenvectors[..i] {
            assert!(h1_product(v, w).abs() < 1e-7);
        }
    }
}

#[test]
fn shifted_search_finds_the_same_near_kernel() {
    let b = bundle(0.25, 2);
    let op = assemble_linearized(&b).unwrap();
    let low = lowest_eigenpairs(&op, 3.0, 5, 1e-9).unwrap();
    let near = eigenpairs_near(&op, 0.0, 2, 1e-9).unwrap();
    for (a, b) in near.eigenvalues.iter().zip(&low.eigenvalues[2..4]) {
        assert!((a - b).abs() < 1e-8, "{a} {b}");
    }
}

#[test]
fn near_kernel_basis_aligns_with_translations() {
    let b = bundle(0.2, 3);
    let (_, basis) = near_kernel(&b, 1e-9).unwrap();
    assert_eq!(basis.len(), 3);
    assert!(basis.alphas.iter().all(|a| *a > 0.0));
    assert!(basis.rayleigh.iter().all(|r| r.abs() < 0.1));
    let angles = principal_angles(&basis.phis, &b.translation_modes);
    assert!(angles.iter().all(|a| *a < 0.1), "{angles:?}");
}

#[test]
fn wrong_near_kernel_count_is_an_error() {
    let b = bundle(0.25, 2);
    let op = assemble_linearized(&b).unwrap();
    let r = lowest_eigenpairs(&op, 3.0, 5, 1e-9).unwrap();
    let b1 = bundle(0.25, 1);
    let err = periodic_peaks::spectrum::near_kernel_basis(&r, &b1).unwrap_err();
    assert!(matches!(err, Error::NearKernel { expected: 1, found: 2, .. }));
}

#[test]
fn principal_angles_of_a_span_with_itself_vanish() {
    let b = bundle(0.25, 2);
    let q = h1_orthonormalize(&b.translation_modes);
    assert_eq!(q.len(), 2);
    let a = principal_angles(&b.translation_modes, &q);
    assert!(a.iter().all(|x| *x < 1e-6), "{a:?}");
}
