use std::sync::Arc;

use periodic_peaks::ansatz::{residual, PeakConfiguration};
use periodic_peaks::domain::{h1_product, GridField};
use periodic_peaks::groundstate::solve_ground_state;
use periodic_peaks::reduction::{reduce, ReductionOptions};
use periodic_peaks::weighted::{distance_to_peaks, solve_orthogonal, weighted_norms, weighted_sup};
use periodic_peaks::Error;

#[test]
fn distance_vanishes_at_peaks_and_respects_images() {
    let c = PeakConfiguration::uniform(0.3, 2).unwrap();
    let g = ReductionOptions::default().grid(0.3, 2).unwrap();
    let d = distance_to_peaks(&g, &c);
    let i = g.nearest_x1(c.positions()[0]);
    assert!(d[g.index(i, 0)] < 1e-12);
    let half = c.period() / 4.0;
    assert!(d.iter().all(|x| *x <= (half * half + g.transverse_extent.powi(2)).sqrt() + 1e-9));
}

#[test]
fn weighted_sup_dominates_plain_sup() {
    let c = PeakConfiguration::uniform(0.3, 1).unwrap();
    let g = ReductionOptions::default().grid(0.3, 1).unwrap();
    let d = distance_to_peaks(&g, &c);
    let c0 = c.positions()[0];
    let f = GridField::from_fn(g, |x1, x2| (-((x1 - c0).powi(2) + x2 * x2).sqrt()).exp());
    let w = weighted_sup(&f, &d, 0.5);
    assert!(w >= f.sup_norm());
    // e^{-r} e^{η r} with η < 1 is maximal at the peak
    assert!((w - 1.0).abs() < 1e-2, "{w}");
}

#[test]
fn eta_outside_unit_interval_is_rejected() {
    let c = PeakConfiguration::uniform(0.3, 1).unwrap();
    let g = ReductionOptions::default().grid(0.3, 1).unwrap();
    let f = GridField::zeros(g);
    for eta in [0.0, 1.0, -0.2] {
        assert!(matches!(weighted_norms(&f, &f, &c, eta), Err(Error::InvalidParameter { .. })));
    }
}

#[test]
fn orthogonal_solve_keeps_weighted_decay() {
    let opts = ReductionOptions::default();
    let c = PeakConfiguration::uniform(0.25, 2).unwrap();
    let prof = Arc::new(solve_ground_state(2, 3.0, 1e-10).unwrap());
    let st = reduce(&c, prof, &opts.grid(0.25, 2).unwrap(), &opts).unwrap();
    let h = residual(&st.bundle).scaled(-1.0);
    let xi = solve_orthogonal(&st.bundle, &h, &st.basis, 1e-9).unwrap();
    for phi in &st.basis.phis {
        assert!(h1_product(&xi, phi).abs() < 1e-10 * xi.h1_norm() * phi.h1_norm());
    }
    let ratios: Vec<f64> = [0.3, 0.5, 0.7]
        .iter()
        .map(|&eta| weighted_norms(&h, &xi, &c, eta).unwrap().ratio)
        .collect();
    assert!(ratios.iter().all(|r| r.is_finite() && *r > 0.0 && *r < 50.0), "{ratios:?}");
}
