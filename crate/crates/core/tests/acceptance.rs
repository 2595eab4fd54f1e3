//! One test per acceptance criterion; each prints a PASS/FAIL line.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use periodic_peaks::ansatz::{build_ansatz, interaction_scale, residual, PeakConfiguration};
use periodic_peaks::asymptotics::{
    exponential_interaction, interaction_limit, interaction_quadrature, taylor_remainder, taylor_remainder_check,
    Cell, InteractionSpec, Shape,
};
use periodic_peaks::dancer::{align_x1, minimal_period, newton_solve, psi_decay_fit, verify_evenness, DancerOptions};
use periodic_peaks::domain::StripGrid;
use periodic_peaks::groundstate::{fit_tail_constants, solve_ground_state};
use periodic_peaks::reduction::{equilibrate, interaction_d, reduce, EquilibrateOptions, ReductionOptions};
use periodic_peaks::run::{gapped_configuration, helmholtz_refinement, perturbed_uniform, run, Command, RunConfig};
use periodic_peaks::spectrum::{assemble_linearized, lowest_eigenpairs, principal_angles};
use periodic_peaks::GroundStateProfile;

fn plane() -> Arc<GroundStateProfile> {
    static P: OnceLock<Arc<GroundStateProfile>> = OnceLock::new();
    P.get_or_init(|| Arc::new(solve_ground_state(2, 3.0, 1e-10).unwrap()))
        .clone()
}

fn grid(eps: f64, k: usize) -> StripGrid {
    StripGrid::with_spacing(eps, 14.0, 0.25, k).unwrap()
}

fn verdict(n: u32, name: &str, pass: bool, detail: String) {
    println!("{} criterion {n:>2} [{name}]: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} failed: {detail}");
}

fn band(v: &[f64]) -> f64 {
    let hi = v.iter().copied().fold(f64::MIN, f64::max);
    let lo = v.iter().copied().fold(f64::MAX, f64::min);
    hi / lo
}

#[test]
fn criterion_01_line_soliton() {
    let t = Instant::now();
    let p = solve_ground_state(1, 3.0, 1e-10).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let err = (0..=10_000)
        .map(|i| i as f64 * 1e-3)
        .map(|x| (p.value(x) - 2f64.sqrt() / x.cosh()).abs())
        .fold(0.0, f64::max);
    verdict(
        1,
        "ground state vs sech",
        err <= 1e-8 && secs < 1.0,
        format!("sup error {err:.3e} (≤ 1e-8), runtime {secs:.3} s (< 1 s)"),
    );
}

#[test]
fn criterion_02_tail_constants() {
    let p = plane();
    let (spread, l0) = match fit_tail_constants(&p, [8.0, 12.0]) {
        Ok(f) => (f.l0_spread, f.l0),
        Err(e) => panic!("tail fit failed: {e}"),
    };
    verdict(
        2,
        "tail constants",
        spread < 0.02,
        format!("r^(1/2) e^r U relative spread {spread:.3e} on [8, 12] (< 2e-2), mean {l0:.6}"),
    );
}

#[test]
fn criterion_03_single_peak_spectrum() {
    let eps = 0.2;
    let b = build_ansatz(&PeakConfiguration::uniform(eps, 1).unwrap(), plane(), &grid(eps, 1)).unwrap();
    let op = assemble_linearized(&b).unwrap();
    let mut r = lowest_eigenpairs(&op, 3.0, 4, 1e-9).unwrap();
    r.attach_overlaps(&b.translation_modes);
    let lmin = r.eigenvalues[0];
    let near: Vec<(f64, f64)> = r
        .eigenvalues
        .iter()
        .zip(&r.overlap_matrix)
        .filter(|(l, _)| l.abs() < 0.1)
        .map(|(l, o)| (*l, o[0].abs()))
        .collect();
    let best = near.iter().map(|x| x.1).fold(0.0, f64::max);
    verdict(
        3,
        "single-peak spectrum",
        (lmin + 2.0).abs() <= 0.04 && best > 0.99,
        format!("lambda_min {lmin:.6} (within 2% of -2), near-zero eigenpairs {near:?}, overlap {best:.6} (> 0.99)"),
    );
}

#[test]
fn criterion_04_near_kernel_dimension() {
    let mut ok = true;
    let mut lines = Vec::new();
    for k in [2usize, 3] {
        let eps = 0.2;
        let b = build_ansatz(&PeakConfiguration::uniform(eps, k).unwrap(), plane(), &grid(eps, k)).unwrap();
        let op = assemble_linearized(&b).unwrap();
        let r = lowest_eigenpairs(&op, 3.0, 2 * k + 3, 1e-9).unwrap();
        let (vals, vecs) = r.near_kernel();
        let next = r
            .eigenvalues
            .iter()
            .copied()
            .filter(|l| *l > 0.1)
            .fold(f64::INFINITY, f64::min);
        let ang = principal_angles(&vecs, &b.translation_modes);
        let worst = ang.iter().copied().fold(0.0, f64::max);
        let outside = r.eigenvalues.iter().all(|l| l.abs() < 0.1 || l.abs() >= 0.3);
        ok &= vals.len() == k && next >= 0.3 && outside && worst < 0.1;
        lines.push(format!(
            "k={k}: {} in (-0.1, 0.1), next {next:.4}, max angle {worst:.3e} rad",
            vals.len()
        ));
    }
    verdict(4, "near-kernel dimension", ok, lines.join("; "));
}

struct SweepRow {
    m_sup: f64,
    m_l2: f64,
    v_sup: f64,
    iterations: usize,
}

fn reduction_sweep() -> &'static [SweepRow] {
    static S: OnceLock<Vec<SweepRow>> = OnceLock::new();
    S.get_or_init(|| {
        let opts = ReductionOptions::default();
        [4.0, 5.0, 6.0, 7.0, 8.0]
            .iter()
            .map(|&s| {
                let pc = gapped_configuration(2, s, 0.0).unwrap();
                let st = reduce(&pc, plane(), &opts.grid(pc.epsilon, 2).unwrap(), &opts).unwrap();
                let m = residual(&st.bundle);
                let scale = interaction_scale(pc.sigma_min, 2);
                SweepRow {
                    m_sup: m.sup_norm() / scale,
                    m_l2: m.l2_norm() / scale,
                    v_sup: st.sup_norm / scale,
                    iterations: st.iterations,
                }
            })
            .collect()
    })
}

#[test]
fn criterion_05_residual_rate() {
    let rows = reduction_sweep();
    let sup: Vec<f64> = rows.iter().map(|r| r.m_sup).collect();
    let l2: Vec<f64> = rows.iter().map(|r| r.m_l2).collect();
    verdict(
        5,
        "residual rate",
        band(&sup) <= 3.0 && band(&l2) <= 3.0,
        format!(
            "sup ratios {sup:.3?} band {:.3}; L2 ratios {l2:.3?} band {:.3} (≤ 3)",
            band(&sup),
            band(&l2)
        ),
    );
}

#[test]
fn criterion_06_correction_rate() {
    let rows = reduction_sweep();
    let v: Vec<f64> = rows.iter().map(|r| r.v_sup).collect();
    let its: Vec<usize> = rows.iter().map(|r| r.iterations).collect();
    verdict(
        6,
        "correction rate",
        band(&v) <= 3.0 && its.iter().all(|&n| n <= 30),
        format!("sup ratios {v:.3?} band {:.3} (≤ 3), iterations {its:?} (≤ 30)", band(&v)),
    );
}

#[test]
fn criterion_07_d_consistency() {
    let opts = ReductionOptions::default();
    let rel: Vec<f64> = [6.0, 7.0, 8.0]
        .iter()
        .map(|&s| {
            let pc = gapped_configuration(2, s, 2.0).unwrap();
            let st = reduce(&pc, plane(), &opts.grid(pc.epsilon, 2).unwrap(), &opts).unwrap();
            (0..2)
                .map(|i| {
                    let di = interaction_d(&st.bundle, &st.basis, i).unwrap();
                    (di - st.d_coeffs[i]).abs() / st.d_coeffs[i].abs()
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let decreasing = rel.windows(2).all(|w| w[1] < w[0]);
    verdict(
        7,
        "d_i consistency",
        rel[0] <= 0.2 && rel[2] <= 0.1 && decreasing,
        format!(
            "relative difference at sigma 6, 7, 8: {rel:.4?} (≤ 0.2 at 6, ≤ 0.1 at 8, decreasing: {decreasing})"
        ),
    );
}

#[test]
fn criterion_08_equidistribution() {
    let opts = EquilibrateOptions::default();
    let mut ok = true;
    let mut lines = Vec::new();
    for (k, eps) in [(2usize, 0.3), (3, 0.2)] {
        let start = perturbed_uniform(eps, k, 0.05, -PI / eps, 7).unwrap();
        let r = equilibrate(&start, plane(), &opts).unwrap();
        let target = start.period() / k as f64;
        let dev = r
            .config
            .gaps()
            .iter()
            .map(|g| (g / target - 1.0).abs())
            .fold(0.0, f64::max);
        ok &= dev <= 1e-3;
        lines.push(format!("k={k} from 5% start: {} steps, gap deviation {dev:.2e}", r.steps));

        let sym = equilibrate(&PeakConfiguration::uniform(eps, k).unwrap(), plane(), &opts).unwrap();
        let dmax = sym.final_d.iter().map(|d| d.abs()).fold(0.0, f64::max);
        let scale = interaction_scale(sym.config.sigma_min, 2);
        ok &= sym.steps == 0 && dmax <= 1e-10 * scale;
        lines.push(format!("k={k} uniform: {} steps, max |d| {dmax:.2e}", sym.steps));
    }
    verdict(8, "equidistribution", ok, lines.join("; "));
}

#[test]
fn criterion_09_dancer_solution() {
    let opts = DancerOptions::default();
    let eps = 0.3;
    let s = newton_solve(&PeakConfiguration::uniform(eps, 1).unwrap(), plane(), &grid(eps, 1), None, 0, &opts).unwrap();
    let ev = verify_evenness(&s, opts.tol);
    let mp = minimal_period(&s, opts.tol).unwrap();

    let g2 = grid(eps, 2);
    let first = -PI / eps;
    let a = perturbed_uniform(eps, 2, 0.05, first, 11).unwrap();
    let b = perturbed_uniform(eps, 2, -0.05, first + 4.0 * g2.h1(), 11).unwrap();
    let sa = newton_solve(&a, plane(), &g2, None, 0, &opts).unwrap();
    let sb = newton_solve(&b, plane(), &g2, None, 0, &opts).unwrap();
    let (shift, diff) = align_x1(&sa.field, &sb.field).unwrap();
    verdict(
        9,
        "dancer solution",
        s.iterations() <= 8 && diff < 1e-6 && ev.passes && mp.passes && s.min_value > 0.0,
        format!(
            "k=1: {} iterations, evenness {:.2e} (< {:.0e}), period defect {:.2e}, half-period defect {:.3}; \
             k=2 starts agree to {diff:.2e} after {shift}-node shift",
            s.iterations(),
            ev.sup_difference,
            ev.threshold,
            mp.period_defect,
            mp.half_period_defect
        ),
    );
}

#[test]
fn criterion_10_psi_decay() {
    let opts = DancerOptions::default();
    let sols: Vec<_> = [0.35, 0.3, 0.25, 0.2]
        .iter()
        .map(|&e| newton_solve(&PeakConfiguration::uniform(e, 1).unwrap(), plane(), &grid(e, 1), None, 0, &opts).unwrap())
        .collect();
    let fit = psi_decay_fit(&sols, 0.3, 0.69).unwrap();
    verdict(
        10,
        "psi decay",
        fit.slope <= -1.5,
        format!("slope {:.4} (≤ -1.5), monotone {}", fit.slope, fit.monotone),
    );
}

#[test]
fn criterion_11_interaction_asymptotics() {
    let spec = InteractionSpec {
        dimension: 2,
        f: Shape::Profile(plane()),
        g: Shape::Profile(plane()),
        a: 2.0,
        b: 1.0,
        y0: 8.0,
        cell: Cell::Full,
    };
    let lim = interaction_limit(&spec, &[8.0, 10.0, 12.0, 16.0]).unwrap();
    let at12 = lim.points.iter().find(|q| q.y0 == 12.0).unwrap().rescaled;
    let rel = at12 / lim.stated_limit - 1.0;

    let line = InteractionSpec {
        dimension: 1,
        f: Shape::Exponential,
        g: Shape::Exponential,
        a: 2.0,
        b: 1.0,
        y0: 12.0,
        cell: Cell::Whole,
    };
    let q = interaction_quadrature(&line).unwrap();
    let exact = exponential_interaction(2.0, 1.0, 12.0);
    let line_rel = (q.value / exact - 1.0).abs();
    let rescaled: Vec<f64> = lim.points.iter().map(|q| q.rescaled).collect();
    verdict(
        11,
        "interaction asymptotics",
        rel.abs() <= 0.1 && lim.monotone && line_rel <= 0.02,
        format!(
            "rescaled {rescaled:.4?}; at |y0|=12 {at12:.4} vs L*C0 {:.4} ({:+.1}%), monotone {}; \
             L^b*int f^a e^(b x1) = {:.4}; 1-D closed form error {line_rel:.2e}",
            lim.stated_limit,
            100.0 * rel,
            lim.monotone,
            lim.weighted_limit
        ),
    );
}

#[test]
fn criterion_12_taylor_remainder() {
    let r: Vec<f64> = [1u64, 2, 3]
        .iter()
        .map(|&s| taylor_remainder_check(100_000, 3.0, s).unwrap().max_ratio)
        .collect();
    let mean = r.iter().sum::<f64>() / 3.0;
    let spread = r.iter().map(|x| (x / mean - 1.0).abs()).fold(0.0, f64::max);
    let zero = taylor_remainder(1.7, 0.0, 3.0);
    verdict(
        12,
        "Taylor remainder",
        r.iter().all(|x| x.is_finite()) && spread <= 0.05 && zero == 0.0,
        format!("max ratios {r:.7?}, spread {spread:.2e} (≤ 5e-2), b=0 remainder {zero:e}"),
    );
}

#[test]
fn criterion_13_reproducibility_and_helmholtz() {
    let dir = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance_repro");
    let cfg = RunConfig {
        out_dir: dir,
        ..RunConfig::default()
    };
    let mut dcfg = cfg.clone();
    dcfg.peaks.epsilon = 0.3;
    dcfg.peaks.k = 2;
    dcfg.peaks.perturbation = 0.05;
    let mut same = true;
    for (cmd, c) in [(Command::OracleTaylor, &cfg), (Command::Dancer, &dcfg)] {
        let first = run(cmd, c).unwrap();
        let bytes: Vec<Vec<u8>> = std::iter::once(&first.summary_path)
            .chain(&first.artifacts)
            .map(|p| std::fs::read(p).unwrap())
            .collect();
        let second = run(cmd, c).unwrap();
        let again: Vec<Vec<u8>> = std::iter::once(&second.summary_path)
            .chain(&second.artifacts)
            .map(|p| std::fs::read(p).unwrap())
            .collect();
        same &= bytes == again;
    }
    let h = helmholtz_refinement(0.2, 14.0, 0.25, 2).unwrap();
    let ratios: Vec<f64> = h.windows(2).map(|w| w[0].1 / w[1].1).collect();
    verdict(
        13,
        "reproducibility and Helmholtz order",
        same && ratios.iter().all(|r| (3.6..=4.4).contains(r)),
        format!("bit-identical artifacts: {same}; error ratios on halving {ratios:.4?} (3.6 to 4.4)"),
    );
}
