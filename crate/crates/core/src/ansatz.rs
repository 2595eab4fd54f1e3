//! Periodized multi-peak ansatz `ū = Σ_i Σ_l U(x − (a^i/ε + l·2π/ε) e₁)`.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use crate::domain::{apply_helmholtz, GridField, StripGrid};
use crate::error::{Error, Result};
use crate::GroundStateProfile;

/// Peak angles on the circle and the derived half-gaps.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PeakConfiguration {
    pub epsilon: f64,
    pub k: usize,
    pub angles: Vec<f64>,
    pub half_gaps: Vec<f64>,
    pub sigma_min: f64,
    pub lattice_cutoff: usize,
}

impl PeakConfiguration {
    pub fn new(epsilon: f64, angles: Vec<f64>) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::param("epsilon", "ε > 0"));
        }
        if angles.is_empty() {
            return Err(Error::param("angles", "k ≥ 1"));
        }
        if angles.iter().any(|a| !(-PI..PI).contains(a)) {
            return Err(Error::param("angles", "each angle in [−π, π)"));
        }
        if angles.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("angles", "strictly increasing"));
        }
        let k = angles.len();
        let gaps = gaps_of(epsilon, &angles);
        if let Some((i, g)) = gaps.iter().enumerate().find(|(_, g)| **g <= 2.0) {
            return Err(Error::Separation(format!(
                "gap after peak {} is {g:.4} ≤ 2",
                i + 1
            )));
        }
        let half_gaps: Vec<f64> = (0..k)
            .map(|i| 0.5 * gaps[i].min(gaps[(i + k - 1) % k]))
            .collect();
        let sigma_min = half_gaps.iter().copied().fold(f64::INFINITY, f64::min);
        let max_gap = gaps.iter().copied().fold(0.0, f64::max);
        let lattice_cutoff = (epsilon * (30.0 + max_gap) / (2.0 * PI)).ceil() as usize + 1;
        Ok(Self {
            epsilon,
            k,
            angles,
            half_gaps,
            sigma_min,
            lattice_cutoff,
        })
    }

    /// `a^i = a¹ + 2π(i−1)/k`.
    pub fn uniform_from(epsilon: f64, k: usize, first: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::param("k", "k ≥ 1"));
        }
        let angles = (0..k)
            .map(|i| wrap_angle(first + 2.0 * PI * i as f64 / k as f64))
            .collect::<Vec<_>>();
        let mut angles = angles;
        angles.sort_by(f64::total_cmp);
        Self::new(epsilon, angles)
    }

    /// `a^i = −π + 2π(i−1)/k`.
    pub fn uniform(epsilon: f64, k: usize) -> Result<Self> {
        Self::uniform_from(epsilon, k, -PI)
    }

    /// Peaks at the given x₁ positions (reduced modulo the period and sorted).
    pub fn from_positions(epsilon: f64, positions: &[f64]) -> Result<Self> {
        let mut angles: Vec<f64> = positions.iter().map(|x| wrap_angle(x * epsilon)).collect();
        angles.sort_by(f64::total_cmp);
        Self::new(epsilon, angles)
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.epsilon
    }

    /// Peak positions `a^i/ε`.
    pub fn positions(&self) -> Vec<f64> {
        self.angles.iter().map(|a| a / self.epsilon).collect()
    }

    /// Gap from peak `i` to peak `i+1` (the last wraps to the first).
    pub fn gaps(&self) -> Vec<f64> {
        gaps_of(self.epsilon, &self.angles)
    }

    /// `a⁰ = a^k − 2π` and `a^{k+1} = a¹ + 2π`.
    pub fn ghost_angles(&self) -> (f64, f64) {
        (self.angles[self.k - 1] - 2.0 * PI, self.angles[0] + 2.0 * PI)
    }
}

fn wrap_angle(a: f64) -> f64 {
    a - 2.0 * PI * ((a + PI) / (2.0 * PI)).floor()
}

fn gaps_of(epsilon: f64, angles: &[f64]) -> Vec<f64> {
    let k = angles.len();
    (0..k)
        .map(|i| {
            let next = if i + 1 < k { angles[i + 1] } else { angles[0] + 2.0 * PI };
            (next - angles[i]) / epsilon
        })
        .collect()
}

/// `e^{−2σ} σ^{(1−N)/2}`.
pub fn interaction_scale(sigma: f64, dimension: usize) -> f64 {
    (-2.0 * sigma).exp() * sigma.powf((1.0 - dimension as f64) / 2.0)
}

/// The ansatz sampled on a grid, with everything derived from it.
#[derive(Clone, Debug)]
pub struct AnsatzBundle {
    pub config: PeakConfiguration,
    pub profile: Arc<GroundStateProfile>,
    pub ubar: GridField,
    pub peak_fields: Vec<GridField>,
    pub translation_modes: Vec<GridField>,
    pub cell_labels: Vec<usize>,
}

/// Per-node image offsets `x₁ − c_i − l·P` for `l = −L..=L`.
fn image_offsets(x1: f64, c: f64, period: f64, cutoff: usize) -> impl Iterator<Item = f64> {
    let l = cutoff as i64;
    (-l..=l).map(move |m| x1 - c - m as f64 * period)
}

pub fn build_ansatz(
    config: &PeakConfiguration,
    profile: Arc<GroundStateProfile>,
    grid: &StripGrid,
) -> Result<AnsatzBundle> {
    if profile.dimension != 2 {
        return Err(Error::param("dimension", "strip solvers need an N = 2 profile"));
    }
    if ((grid.epsilon - config.epsilon) / config.epsilon).abs() > 1e-12 {
        return Err(Error::param("epsilon", "grid period must equal 2π/ε of the configuration"));
    }
    let period = config.period();
    let centers = config.positions();
    let mut peak_fields = Vec::with_capacity(config.k);
    let mut modes = Vec::with_capacity(config.k);
    for &c in &centers {
        let mut v = GridField::zeros(*grid);
        let mut t = GridField::zeros(*grid);
        for i in 0..grid.nodes_x1 {
            let x1 = grid.x1(i);
            for j in 0..grid.nodes_xp {
                let x2 = grid.x2(j);
                let (mut sv, mut st) = (0.0, 0.0);
                for dx in image_offsets(x1, c, period, config.lattice_cutoff) {
                    let r = dx.hypot(x2);
                    sv += profile.value(r);
                    if r > 0.0 {
                        st += profile.derivative(r) * dx / r;
                    }
                }
                let n = grid.index(i, j);
                v.data_mut()[n] = sv;
                t.data_mut()[n] = st;
            }
        }
        peak_fields.push(v);
        modes.push(t);
    }
    let mut ubar = GridField::zeros(*grid);
    for v in &peak_fields {
        ubar.axpy(1.0, v);
    }
    let cell_labels = (0..grid.len())
        .map(|n| {
            let x1 = grid.x1(grid.coords(n).0);
            let tie = 1e-9 * grid.h1();
            let mut best = 0;
            let mut bd = f64::INFINITY;
            for (i, &c) in centers.iter().enumerate() {
                let d = grid.wrap(x1 - c).abs();
                if d < bd - tie {
                    bd = d;
                    best = i;
                }
            }
            best
        })
        .collect();
    Ok(AnsatzBundle {
        config: config.clone(),
        profile,
        ubar,
        peak_fields,
        translation_modes: modes,
        cell_labels,
    })
}

impl AnsatzBundle {
    pub fn grid(&self) -> &StripGrid {
        self.ubar.grid()
    }

    pub fn exponent(&self) -> f64 {
        self.profile.exponent
    }

    /// Visits every image term `U_{i,l}` at node `(i1, j)`.
    pub(crate) fn for_each_term(&self, i1: usize, j: usize, mut f: impl FnMut(usize, f64, f64, f64)) {
        let g = self.grid();
        let x1 = g.x1(i1);
        let x2 = g.x2(j);
        let period = self.config.period();
        for (i, c) in self.config.positions().into_iter().enumerate() {
            for dx in image_offsets(x1, c, period, self.config.lattice_cutoff) {
                let r = dx.hypot(x2);
                f(i, dx, x2, r);
            }
        }
    }
}

/// `M(ū) = Σ U_{i,l}^p − (Σ U_{i,l})^p`, evaluated without cancellation.
pub fn residual(bundle: &AnsatzBundle) -> GridField {
    let g = *bundle.grid();
    let p = bundle.exponent();
    let mut out = GridField::zeros(g);
    let mut terms = Vec::new();
    for i1 in 0..g.nodes_x1 {
        for j in 0..g.nodes_xp {
            terms.clear();
            bundle.for_each_term(i1, j, |_, _, _, r| terms.push(bundle.profile.value(r)));
            out.data_mut()[g.index(i1, j)] = sum_power_defect(&terms, p);
        }
    }
    out
}

/// `Σ t^p − (Σ t)^p` for nonnegative terms.
pub(crate) fn sum_power_defect(terms: &[f64], p: f64) -> f64 {
    let (imax, &a) = match terms
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.total_cmp(y.1))
    {
        Some(m) => m,
        None => return 0.0,
    };
    if a <= 0.0 {
        return 0.0;
    }
    let mut rest = 0.0;
    let mut rest_pow = 0.0;
    for (i, &t) in terms.iter().enumerate() {
        if i != imax && t > 0.0 {
            rest += t;
            rest_pow += t.powf(p);
        }
    }
    rest_pow - a.powf(p) * (p * (rest / a).ln_1p()).exp_m1()
}

/// Same quantity through the discrete operator: `A_h ū − ū^p`.
pub fn residual_discrete(bundle: &AnsatzBundle) -> GridField {
    let p = bundle.exponent();
    apply_helmholtz(&bundle.ubar).zip_map(&bundle.ubar, |a, u| a - u.max(0.0).powf(p))
}

pub fn residual_l2(bundle: &AnsatzBundle) -> f64 {
    residual(bundle).l2_norm()
}

/// Position derivatives used by the Newton solvers.
pub(crate) struct PositionDerivatives {
    /// `∂M/∂c_i`.
    pub d_residual: Vec<GridField>,
    /// `∂t_i/∂c_i = −Σ_l ∂₁₁U_{i,l}`.
    pub d_mode: Vec<GridField>,
}

pub(crate) fn position_derivatives(bundle: &AnsatzBundle) -> PositionDerivatives {
    let g = *bundle.grid();
    let p = bundle.exponent();
    let k = bundle.config.k;
    let prof = &bundle.profile;
    let mut dm: Vec<GridField> = (0..k).map(|_| GridField::zeros(g)).collect();
    let mut dt: Vec<GridField> = (0..k).map(|_| GridField::zeros(g)).collect();
    let mut acc = vec![(0.0, 0.0); k];
    for i1 in 0..g.nodes_x1 {
        for j in 0..g.nodes_xp {
            let n = g.index(i1, j);
            let ub = bundle.ubar.data()[n];
            acc.iter_mut().for_each(|a| *a = (0.0, 0.0));
            bundle.for_each_term(i1, j, |i, dx, _, r| {
                let u = prof.value(r);
                let up = prof.derivative(r);
                let (d1, d11) = if r > 0.0 {
                    let c = dx / r;
                    (up * c, prof.second_derivative(r) * c * c + up * (1.0 - c * c) / r)
                } else {
                    (0.0, prof.second_derivative(0.0))
                };
                acc[i].0 += u.max(0.0).powf(p - 1.0) * d1;
                acc[i].1 += d11;
            });
            for i in 0..k {
                let t = bundle.translation_modes[i].data()[n];
                dm[i].data_mut()[n] = p * (ub.max(0.0).powf(p - 1.0) * t - acc[i].0);
                dt[i].data_mut()[n] = -acc[i].1;
            }
        }
    }
    PositionDerivatives {
        d_residual: dm,
        d_mode: dt,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_close_peaks() {
        assert!(matches!(
            PeakConfiguration::new(0.5, vec![0.0, 0.5]),
            Err(Error::Separation(_))
        ));
        assert!(PeakConfiguration::new(0.5, vec![0.5, 0.0]).is_err());
        assert!(PeakConfiguration::new(0.5, vec![4.0]).is_err());
    }

    #[test]
    fn antipodal_half_gaps() {
        let c = PeakConfiguration::new(0.2, vec![0.0, PI - 1e-15]).unwrap();
        for s in &c.half_gaps {
            assert!((s - PI / (2.0 * 0.2)).abs() < 1e-9);
        }
        let u = PeakConfiguration::uniform(0.2, 2).unwrap();
        assert_eq!(u.angles, vec![-PI, 0.0]);
    }

    #[test]
    fn single_peak_half_gap_is_half_period() {
        let c = PeakConfiguration::new(0.5, vec![0.0]).unwrap();
        assert!((c.sigma_min - PI / 0.5).abs() < 1e-12);
        let (lo, hi) = c.ghost_angles();
        assert!((lo + 2.0 * PI).abs() < 1e-12 && (hi - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn lattice_truncation_tail_is_negligible() {
        let c = PeakConfiguration::new(0.3, vec![-2.0, 0.5]).unwrap();
        let max_gap = c.gaps().into_iter().fold(0.0, f64::max);
        let tail = (-(2.0 * PI * c.lattice_cutoff as f64 / c.epsilon - max_gap)).exp();
        assert!(tail < 1e-12);
    }

    #[test]
    fn power_defect_is_exact_for_one_term_and_negative_for_two() {
        assert_eq!(sum_power_defect(&[0.7], 3.0), 0.0);
        let m = sum_power_defect(&[0.3, 0.3], 3.0);
        assert!((m - (2.0 * 0.027 - 0.216)).abs() < 1e-15);
        let tiny = sum_power_defect(&[1.0, 1e-20], 3.0);
        assert!((tiny + 3e-20).abs() < 1e-33);
    }
}
