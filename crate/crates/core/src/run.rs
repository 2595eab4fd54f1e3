//! Declarative runs: TOML config, subcommand dispatch, JSON and CSV artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::ansatz::{build_ansatz, interaction_scale, residual, residual_discrete, PeakConfiguration};
use crate::asymptotics::{
    exponential_interaction, interaction_limit, taylor_remainder, taylor_remainder_check, Cell, InteractionSpec,
    Shape,
};
use crate::dancer::{align_x1, minimal_period, newton_solve, psi_decay_fit, verify_evenness, DancerOptions};
use crate::domain::{solve_helmholtz, GridField, StripGrid};
use crate::error::{Error, Result};
use crate::groundstate::{fit_tail_constants, solve_ground_state};
use crate::reduction::{equilibrate, interaction_d, reduce, EquilibrateOptions, ReductionOptions};
use crate::spectrum::{assemble_linearized, lowest_eigenpairs, near_kernel, principal_angles, GAP_THRESHOLD};
use crate::weighted::{distance_to_peaks, weighted_norms, weighted_sup_with_gradient};
use crate::GroundStateProfile;

/// Environment variable overriding `out_dir`.
pub const OUT_DIR_ENV: &str = "PEAKS_OUT_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Groundstate,
    Ansatz,
    Spectrum,
    Reduce,
    Equilibrate,
    Dancer,
    OracleInteractions,
    OracleTaylor,
    OracleHelmholtz,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Groundstate => "groundstate",
            Command::Ansatz => "ansatz",
            Command::Spectrum => "spectrum",
            Command::Reduce => "reduce",
            Command::Equilibrate => "equilibrate",
            Command::Dancer => "dancer",
            Command::OracleInteractions => "oracle-interactions",
            Command::OracleTaylor => "oracle-taylor",
            Command::OracleHelmholtz => "oracle-helmholtz",
        }
    }

    fn on_strip(self) -> bool {
        matches!(
            self,
            Command::Ansatz | Command::Spectrum | Command::Reduce | Command::Equilibrate | Command::Dancer
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroundStateSection {
    pub dimension: usize,
    pub exponent: f64,
    pub tol: f64,
    /// Profile dump, relative to the output directory.
    pub profile_file: String,
}

impl Default for GroundStateSection {
    fn default() -> Self {
        Self {
            dimension: 2,
            exponent: 3.0,
            tol: 1e-10,
            profile_file: "profile.json".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub transverse_extent: f64,
    pub mesh: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            transverse_extent: 14.0,
            mesh: 0.25,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeaksSection {
    pub epsilon: f64,
    pub epsilon_sweep: Vec<f64>,
    pub k: usize,
    /// Explicit angles `a^i`; overrides `k` when present.
    pub angles: Option<Vec<f64>>,
    /// Relative gap perturbation for equilibrate and dancer starts.
    pub perturbation: f64,
}

impl Default for PeaksSection {
    fn default() -> Self {
        Self {
            epsilon: 0.2,
            epsilon_sweep: Vec::new(),
            k: 1,
            angles: None,
            perturbation: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumSection {
    pub count: usize,
    pub tol: f64,
    pub weighted_report: bool,
    pub etas: Vec<f64>,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self {
            count: 8,
            tol: 1e-9,
            weighted_report: false,
            etas: crate::weighted::DEFAULT_ETAS.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReductionSection {
    pub tol: f64,
    /// Half-gap sweep; each point uses gaps `2σ, …, 2σ, 2σ + gap_offset`.
    pub sigma_sweep: Vec<f64>,
    pub gap_offset: f64,
}

impl Default for ReductionSection {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            sigma_sweep: Vec::new(),
            gap_offset: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquilibrateSection {
    pub tol: f64,
    pub max_steps: usize,
    pub fd_step: f64,
}

impl Default for EquilibrateSection {
    fn default() -> Self {
        let d = EquilibrateOptions::default();
        Self {
            tol: d.tol,
            max_steps: d.max_steps,
            fd_step: d.fd_step,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DancerSection {
    pub tol: f64,
    pub pin: usize,
    pub eta: f64,
    pub eta_prime: f64,
    pub uniqueness_probe: bool,
    pub snapshots: bool,
}

impl Default for DancerSection {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            pin: 0,
            eta: 0.3,
            eta_prime: 0.69,
            uniqueness_probe: false,
            snapshots: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    pub samples: usize,
    /// `profile`, `exponential` or `sech`.
    pub shape: String,
    pub a: f64,
    pub b: f64,
    pub separations: Vec<f64>,
    /// `whole`, `full` or `half`.
    pub cell: String,
    pub refinements: usize,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            samples: 100_000,
            shape: "profile".into(),
            a: 2.0,
            b: 1.0,
            separations: vec![8.0, 10.0, 12.0, 16.0],
            cell: "full".into(),
            refinements: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub groundstate: GroundStateSection,
    pub grid: GridSection,
    pub peaks: PeaksSection,
    pub spectrum: SpectrumSection,
    pub reduction: ReductionSection,
    pub equilibrate: EquilibrateSection,
    pub dancer: DancerSection,
    pub oracle: OracleSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            out_dir: PathBuf::from("out"),
            groundstate: Default::default(),
            grid: Default::default(),
            peaks: Default::default(),
            spectrum: Default::default(),
            reduction: Default::default(),
            equilibrate: Default::default(),
            dancer: Default::default(),
            oracle: Default::default(),
        }
    }
}

fn bad(name: &'static str, constraint: &str) -> Error {
    Error::InvalidParameter {
        name,
        constraint: constraint.to_string(),
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// `PEAKS_OUT_DIR` if set, else `out_dir`.
    pub fn resolved_out_dir(&self) -> PathBuf {
        std::env::var_os(OUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| self.out_dir.clone())
    }

    /// Checks the preconditions of `command` without computing anything.
    pub fn validate(&self, command: Command) -> Result<()> {
        let gs = &self.groundstate;
        let n = gs.dimension;
        let p = gs.exponent;
        if n == 0 {
            return Err(bad("groundstate.dimension", "N ≥ 1"));
        }
        if !(p >= 2.0) || !p.is_finite() {
            return Err(bad("groundstate.exponent", "p ≥ 2"));
        }
        if n >= 3 && p >= (n as f64 + 2.0) / (n as f64 - 2.0) {
            return Err(bad("groundstate.exponent", "p < (N+2)/(N−2)"));
        }
        if !(gs.tol > 0.0) {
            return Err(bad("groundstate.tol", "tol > 0"));
        }
        if command.on_strip() {
            if n != 2 {
                return Err(bad("groundstate.dimension", "strip commands need N = 2"));
            }
            for &e in self.epsilons() {
                if !(e > 0.0 && e.is_finite()) {
                    return Err(bad("peaks.epsilon", "ε > 0"));
                }
            }
            if !(self.grid.mesh > 0.0) {
                return Err(bad("grid.mesh", "mesh > 0"));
            }
            if !(self.grid.transverse_extent >= 4.0) {
                return Err(bad("grid.transverse_extent", "R ≥ 4"));
            }
            if self.peak_count() == 0 {
                return Err(bad("peaks.k", "k ≥ 1"));
            }
            if !(0.0..0.5).contains(&self.peaks.perturbation) {
                return Err(bad("peaks.perturbation", "0 ≤ δ < 0.5"));
            }
            if command != Command::Reduce || self.reduction.sigma_sweep.is_empty() {
                for &e in self.epsilons() {
                    self.configuration(e)?;
                }
            }
        }
        match command {
            Command::Spectrum => {
                if self.spectrum.count < self.peak_count() + 1 {
                    return Err(bad("spectrum.count", "count ≥ k + 1"));
                }
                if !(self.spectrum.tol > 0.0) {
                    return Err(bad("spectrum.tol", "tol > 0"));
                }
                self.check_etas()?;
            }
            Command::Reduce => {
                if !(self.reduction.tol > 0.0) {
                    return Err(bad("reduction.tol", "tol > 0"));
                }
                if self.reduction.sigma_sweep.iter().any(|s| !(*s > 1.0)) {
                    return Err(bad("reduction.sigma_sweep", "σ̲ > 1"));
                }
                if !(self.reduction.gap_offset >= 0.0) {
                    return Err(bad("reduction.gap_offset", "offset ≥ 0"));
                }
                self.check_etas()?;
            }
            Command::Equilibrate => {
                if self.peak_count() < 2 {
                    return Err(bad("peaks.k", "equilibrate needs k ≥ 2"));
                }
                if !(self.equilibrate.tol > 0.0 && self.equilibrate.fd_step > 0.0) {
                    return Err(bad("equilibrate.tol", "tol > 0 and fd_step > 0"));
                }
            }
            Command::Dancer => {
                let d = &self.dancer;
                if !(d.tol > 0.0) {
                    return Err(bad("dancer.tol", "tol > 0"));
                }
                if d.pin >= self.peak_count() {
                    return Err(bad("dancer.pin", "pin < k"));
                }
                if !(d.eta > 0.0 && d.eta < 1.0) {
                    return Err(bad("dancer.eta", "0 < η < 1"));
                }
                if !(d.eta_prime < 1.0 && d.eta_prime < p - 1.0 - d.eta) {
                    return Err(bad("dancer.eta_prime", "η′ < min(1, p − 1 − η)"));
                }
                if d.uniqueness_probe && self.peak_count() < 2 {
                    return Err(bad("dancer.uniqueness_probe", "needs k ≥ 2"));
                }
            }
            Command::OracleInteractions => {
                let o = &self.oracle;
                if !(o.b > 0.0 && o.a > o.b) {
                    return Err(bad("oracle.a", "a > b > 0"));
                }
                if o.separations.len() < 2 || o.separations.iter().any(|y| !(y.abs() >= 2.0)) {
                    return Err(bad("oracle.separations", "at least two, each |y₀| ≥ 2"));
                }
                if n > 2 {
                    return Err(bad("groundstate.dimension", "N ∈ {1, 2}"));
                }
                self.shape(None)?;
                self.cell()?;
            }
            Command::OracleTaylor => {
                if self.oracle.samples == 0 {
                    return Err(bad("oracle.samples", "samples ≥ 1"));
                }
            }
            Command::OracleHelmholtz => {
                if !(self.peaks.epsilon > 0.0 && self.grid.mesh > 0.0) {
                    return Err(bad("peaks.epsilon", "ε > 0 and mesh > 0"));
                }
                if self.oracle.refinements == 0 || self.oracle.refinements > 4 {
                    return Err(bad("oracle.refinements", "1 ≤ refinements ≤ 4"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn check_etas(&self) -> Result<()> {
        if self.spectrum.etas.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return Err(bad("spectrum.etas", "0 < η < 1"));
        }
        Ok(())
    }

    fn epsilons(&self) -> &[f64] {
        if self.peaks.epsilon_sweep.is_empty() {
            std::slice::from_ref(&self.peaks.epsilon)
        } else {
            &self.peaks.epsilon_sweep
        }
    }

    fn peak_count(&self) -> usize {
        self.peaks.angles.as_ref().map_or(self.peaks.k, Vec::len)
    }

    /// Peaks at `ε`: explicit angles, else `k` uniform peaks starting at `−π`.
    pub fn configuration(&self, epsilon: f64) -> Result<PeakConfiguration> {
        match &self.peaks.angles {
            Some(a) => {
                let pos: Vec<f64> = a.iter().map(|x| x / epsilon).collect();
                PeakConfiguration::from_positions(epsilon, &pos)
            }
            None => PeakConfiguration::uniform(epsilon, self.peaks.k),
        }
    }

    fn grid_for(&self, epsilon: f64, k: usize) -> Result<StripGrid> {
        StripGrid::with_spacing(epsilon, self.grid.transverse_extent, self.grid.mesh, k)
    }

    fn reduction_options(&self) -> ReductionOptions {
        ReductionOptions {
            transverse_extent: self.grid.transverse_extent,
            mesh: self.grid.mesh,
            eigen_tol: self.spectrum.tol,
            fixed_point_tol: self.reduction.tol,
        }
    }

    fn shape(&self, profile: Option<&Arc<GroundStateProfile>>) -> Result<Shape> {
        let need = || {
            profile
                .cloned()
                .ok_or_else(|| Error::Config("profile shape needs a ground state".into()))
        };
        match self.oracle.shape.as_str() {
            "profile" if profile.is_none() => Ok(Shape::Exponential),
            "profile" => Ok(Shape::Profile(need()?)),
            "exponential" => Ok(Shape::Exponential),
            "sech" if self.groundstate.dimension == 1 => Ok(Shape::Sech),
            "sech" => Err(bad("oracle.shape", "sech needs N = 1")),
            _ => Err(bad("oracle.shape", "one of profile, exponential, sech")),
        }
    }

    fn cell(&self) -> Result<Cell> {
        match self.oracle.cell.as_str() {
            "whole" => Ok(Cell::Whole),
            "full" => Ok(Cell::Full),
            "half" => Ok(Cell::Half),
            _ => Err(bad("oracle.cell", "one of whole, full, half")),
        }
    }
}

/// Uniform `k`-peak configuration with gaps scaled by `1 + δ s_i`, where `s`
/// is a seeded zero-sum pattern normalized to `max |s_i| = 1`.
pub fn perturbed_uniform(epsilon: f64, k: usize, delta: f64, first: f64, seed: u64) -> Result<PeakConfiguration> {
    if k == 0 {
        return Err(bad("k", "k ≥ 1"));
    }
    let period = 2.0 * std::f64::consts::PI / epsilon;
    let mut s = vec![0.0; k];
    if k >= 2 && delta != 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        s.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        let mean = s.iter().sum::<f64>() / k as f64;
        s.iter_mut().for_each(|x| *x -= mean);
        let m = s.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        s.iter_mut().for_each(|x| *x /= m);
    }
    let mut pos = vec![first];
    for si in &s[..k - 1] {
        let last = *pos.last().expect("nonempty");
        pos.push(last + period / k as f64 * (1.0 + delta * si));
    }
    PeakConfiguration::from_positions(epsilon, &pos)
}

/// Serializes with every float as 17 significant digits.
pub fn to_json_string(value: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, value, 0);
    out.push('\n');
    out
}

fn write_value(out: &mut String, v: &Value, depth: usize) {
    let pad = |out: &mut String, d: usize| out.extend(std::iter::repeat_n("  ", d));
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                let _ = write!(out, "{:.16e}", n.as_f64().unwrap_or(f64::NAN));
            } else {
                let _ = write!(out, "{n}");
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(a) if a.is_empty() => out.push_str("[]"),
        Value::Array(a) => {
            let flat = a.iter().all(|x| !x.is_array() && !x.is_object());
            out.push('[');
            for (i, x) in a.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                if flat {
                    if i > 0 {
                        out.push(' ');
                    }
                } else {
                    out.push('\n');
                    pad(out, depth + 1);
                }
                write_value(out, x, depth + 1);
            }
            if !flat {
                out.push('\n');
                pad(out, depth);
            }
            out.push(']');
        }
        Value::Object(m) if m.is_empty() => out.push_str("{}"),
        Value::Object(m) => {
            out.push('{');
            for (i, (k, x)) in m.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push('\n');
                pad(out, depth + 1);
                out.push_str(&Value::String(k.clone()).to_string());
                out.push_str(": ");
                write_value(out, x, depth + 1);
            }
            out.push('\n');
            pad(out, depth);
            out.push('}');
        }
    }
}

/// SHA-256 of the command name and the canonical JSON of the config.
pub fn config_hash(command: Command, config: &RunConfig) -> Result<String> {
    let canon = to_json_string(&serde_json::to_value(config)?);
    let mut h = Sha256::new();
    h.update(command.name().as_bytes());
    h.update(b"\n");
    h.update(canon.as_bytes());
    Ok(hex::encode(h.finalize()))
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        let cells: Vec<String> = r.iter().map(|x| format!("{x:.16e}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

/// Machine-readable error record for stderr.
pub fn error_report(err: &Error) -> Value {
    let constraint = match err {
        Error::InvalidParameter { name, constraint } => json!({"name": name, "constraint": constraint}),
        _ => Value::Null,
    };
    json!({
        "error": err.kind(),
        "message": err.to_string(),
        "violated": constraint,
        "exit_code": err.exit_code(),
    })
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub summary: Value,
    pub summary_path: PathBuf,
    pub artifacts: Vec<PathBuf>,
}

struct Ctx<'a> {
    config: &'a RunConfig,
    dir: PathBuf,
    artifacts: Vec<PathBuf>,
}

impl Ctx<'_> {
    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.artifacts.push(p.clone());
        p
    }

    fn profile(&self) -> Result<Arc<GroundStateProfile>> {
        let gs = &self.config.groundstate;
        Ok(Arc::new(solve_ground_state(gs.dimension, gs.exponent, gs.tol)?))
    }
}

/// Validates, runs `command`, and writes `<out>/<command>.json` plus any tables.
pub fn run(command: Command, config: &RunConfig) -> Result<RunOutput> {
    config.validate(command)?;
    let dir = config.resolved_out_dir();
    fs::create_dir_all(&dir)?;
    let mut ctx = Ctx {
        config,
        dir,
        artifacts: Vec::new(),
    };
    let result = match command {
        Command::Groundstate => run_groundstate(&mut ctx)?,
        Command::Ansatz => run_ansatz(&mut ctx)?,
        Command::Spectrum => run_spectrum(&mut ctx)?,
        Command::Reduce => run_reduce(&mut ctx)?,
        Command::Equilibrate => run_equilibrate(&mut ctx)?,
        Command::Dancer => run_dancer(&mut ctx)?,
        Command::OracleInteractions => run_interactions(&mut ctx)?,
        Command::OracleTaylor => run_taylor(&ctx)?,
        Command::OracleHelmholtz => run_helmholtz(&ctx)?,
    };
    let summary = json!({
        "command": command.name(),
        "config": serde_json::to_value(config)?,
        "config_hash": config_hash(command, config)?,
        "result": result,
    });
    let summary_path = ctx.dir.join(format!("{}.json", command.name()));
    fs::write(&summary_path, to_json_string(&summary))?;
    Ok(RunOutput {
        summary,
        summary_path,
        artifacts: ctx.artifacts,
    })
}

/// `((p+1)/2)^{1/(p−1)} sech^{2/(p−1)}((p−1)x/2)`.
pub fn line_soliton(p: f64, x: f64) -> f64 {
    ((p + 1.0) / 2.0).powf(1.0 / (p - 1.0)) * (1.0 / ((p - 1.0) * x / 2.0).cosh()).powf(2.0 / (p - 1.0))
}

fn run_groundstate(ctx: &mut Ctx) -> Result<Value> {
    let prof = ctx.profile()?;
    let gs = &ctx.config.groundstate;
    let tail = match fit_tail_constants(&prof, [8.0, 12.0]) {
        Ok(t) => serde_json::to_value(t)?,
        Err(e) => json!({"error": e.to_string()}),
    };
    let closed = if gs.dimension == 1 {
        let err = (0..=1000)
            .map(|i| {
                let r = i as f64 * 0.01;
                (prof.value(r) - line_soliton(gs.exponent, r)).abs()
            })
            .fold(0.0, f64::max);
        json!(err)
    } else {
        Value::Null
    };
    let path = ctx.path(&gs.profile_file);
    fs::write(&path, to_json_string(&serde_json::to_value(&*prof)?))?;
    Ok(json!({
        "center_value": prof.center_value,
        "tail_l0": prof.tail_l0,
        "tail_l1": prof.tail_l1,
        "tail_match_radius": prof.tail_match_radius,
        "bracket_width": prof.bracket_width,
        "ode_residual": prof.ode_residual,
        "tail_fit_8_12": tail,
        "closed_form_sup_error_0_10": closed,
    }))
}

fn run_ansatz(ctx: &mut Ctx) -> Result<Value> {
    let cfg = ctx.config;
    let prof = ctx.profile()?;
    let rows = cfg
        .epsilons()
        .par_iter()
        .map(|&eps| -> Result<Vec<f64>> {
            let pc = cfg.configuration(eps)?;
            let grid = cfg.grid_for(eps, pc.k)?;
            let b = build_ansatz(&pc, prof.clone(), &grid)?;
            let m = residual(&b);
            let scale = interaction_scale(pc.sigma_min, 2);
            Ok(vec![
                eps,
                pc.sigma_min,
                scale,
                m.sup_norm(),
                m.l2_norm(),
                m.sup_norm() / scale,
                m.l2_norm() / scale,
                residual_discrete(&b).sup_norm(),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    let header = [
        "epsilon",
        "sigma_min",
        "scale",
        "residual_sup",
        "residual_l2",
        "sup_ratio",
        "l2_ratio",
        "discrete_residual_sup",
    ];
    write_csv(&ctx.path("ansatz.csv"), &header, &rows)?;
    Ok(json!({"rows": rows_json(&header, &rows)}))
}

fn rows_json(header: &[&str], rows: &[Vec<f64>]) -> Value {
    Value::Array(
        rows.iter()
            .map(|r| {
                Value::Object(
                    header
                        .iter()
                        .zip(r)
                        .map(|(h, x)| (h.to_string(), json!(x)))
                        .collect(),
                )
            })
            .collect(),
    )
}

fn run_spectrum(ctx: &mut Ctx) -> Result<Value> {
    let cfg = ctx.config;
    let prof = ctx.profile()?;
    let eps = cfg.peaks.epsilon;
    let pc = cfg.configuration(eps)?;
    let grid = cfg.grid_for(eps, pc.k)?;
    let b = build_ansatz(&pc, prof, &grid)?;
    let op = assemble_linearized(&b)?;
    let mut low = lowest_eigenpairs(&op, b.exponent(), cfg.spectrum.count, cfg.spectrum.tol)?;
    let modes: Vec<GridField> = b.translation_modes.clone();
    low.attach_overlaps(&modes);
    let (nk_vals, nk_vecs) = low.near_kernel();
    let next = low.eigenvalues.iter().copied().find(|l| *l >= GAP_THRESHOLD);
    let overlaps: Vec<f64> = low
        .overlap_matrix
        .iter()
        .map(|row| row.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let angles = principal_angles(&nk_vecs, &modes);
    let basis = match near_kernel(&b, cfg.spectrum.tol) {
        Ok((_, basis)) => json!({
            "eigenvalues": basis.eigenvalues,
            "alphas": basis.alphas,
            "alignment_residuals": basis.alignment_residuals,
            "rayleigh": basis.rayleigh,
            "principal_angles": principal_angles(&basis.phis, &modes),
        }),
        Err(e) => json!({"error": e.to_string()}),
    };
    let weighted = if cfg.spectrum.weighted_report {
        let dist = distance_to_peaks(&grid, &pc);
        let mut rows = Vec::new();
        for &eta in &cfg.spectrum.etas {
            let norms: Vec<f64> = nk_vecs
                .iter()
                .map(|v| weighted_sup_with_gradient(v, &dist, eta))
                .collect();
            rows.push(json!({"eta": eta, "near_kernel_weighted_norms": norms}));
        }
        Value::Array(rows)
    } else {
        Value::Null
    };
    Ok(json!({
        "epsilon": eps,
        "k": pc.k,
        "grid": grid,
        "lambda_min": low.eigenvalues.first(),
        "eigenvalues": low.eigenvalues,
        "residuals": low.residuals,
        "translation_overlaps": overlaps,
        "overlap_matrix": low.overlap_matrix,
        "near_kernel_count": nk_vals.len(),
        "near_kernel_eigenvalues": nk_vals,
        "next_eigenvalue": next,
        "principal_angles": angles,
        "near_kernel_basis": basis,
        "shift": low.shift,
        "restarts": low.restarts,
        "weighted_report": weighted,
    }))
}

/// `k` peaks with gaps `2σ` except the last, which is `2σ + offset`.
pub fn gapped_configuration(k: usize, sigma: f64, offset: f64) -> Result<PeakConfiguration> {
    if k == 0 {
        return Err(bad("k", "k ≥ 1"));
    }
    let period = 2.0 * sigma * k as f64 + offset;
    let eps = 2.0 * std::f64::consts::PI / period;
    let pos: Vec<f64> = (0..k).map(|i| -period / 2.0 + 2.0 * sigma * i as f64).collect();
    PeakConfiguration::from_positions(eps, &pos)
}

fn run_reduce(ctx: &mut Ctx) -> Result<Value> {
    let cfg = ctx.config;
    let prof = ctx.profile()?;
    let opts = cfg.reduction_options();
    if !cfg.reduction.sigma_sweep.is_empty() {
        let k = cfg.peak_count();
        let rows = cfg
            .reduction
            .sigma_sweep
            .par_iter()
            .map(|&s| -> Result<(Vec<f64>, Value)> {
                let pc = gapped_configuration(k, s, cfg.reduction.gap_offset)?;
                let grid = opts.grid(pc.epsilon, k)?;
                let st = reduce(&pc, prof.clone(), &grid, &opts)?;
                let m = residual(&st.bundle);
                let scale = interaction_scale(pc.sigma_min, 2);
                let d_int: Vec<f64> = if k >= 2 {
                    (0..k)
                        .map(|i| interaction_d(&st.bundle, &st.basis, i))
                        .collect::<Result<_>>()?
                } else {
                    Vec::new()
                };
                let rel = d_int
                    .iter()
                    .zip(&st.d_coeffs)
                    .map(|(a, b)| (a - b).abs() / b.abs())
                    .fold(0.0, f64::max);
                let row = vec![
                    s,
                    pc.epsilon,
                    scale,
                    m.sup_norm() / scale,
                    m.l2_norm() / scale,
                    st.sup_norm / scale,
                    st.h1_norm / scale,
                    st.iterations as f64,
                    if k >= 2 { rel } else { f64::NAN },
                ];
                let extra = json!({"sigma": s, "d_projection": st.d_coeffs, "d_interaction": d_int});
                Ok((row, extra))
            })
            .collect::<Result<Vec<_>>>()?;
        let header = [
            "sigma",
            "epsilon",
            "scale",
            "residual_sup_ratio",
            "residual_l2_ratio",
            "correction_sup_ratio",
            "correction_h1_ratio",
            "iterations",
            "d_relative_difference",
        ];
        let (table, extra): (Vec<Vec<f64>>, Vec<Value>) = rows.into_iter().unzip();
        write_csv(&ctx.path("reduce_sweep.csv"), &header, &table)?;
        return Ok(json!({"rows": rows_json(&header, &table), "d": extra}));
    }
    let eps = cfg.peaks.epsilon;
    let pc = cfg.configuration(eps)?;
    let grid = opts.grid(eps, pc.k)?;
    let st = reduce(&pc, prof, &grid, &opts)?;
    let d_int: Vec<f64> = if pc.k >= 2 {
        (0..pc.k)
            .map(|i| interaction_d(&st.bundle, &st.basis, i))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    let trace: Vec<Vec<f64>> = st
        .increments
        .iter()
        .enumerate()
        .map(|(i, x)| vec![(i + 1) as f64, *x])
        .collect();
    write_csv(&ctx.path("reduce_trace.csv"), &["iteration", "increment"], &trace)?;
    let weighted = if cfg.spectrum.weighted_report {
        let minus_m = residual(&st.bundle).scaled(-1.0);
        cfg.spectrum
            .etas
            .iter()
            .map(|&eta| weighted_norms(&minus_m, &st.correction, &pc, eta).and_then(|r| Ok(serde_json::to_value(r)?)))
            .collect::<Result<Vec<_>>>()?
            .into()
    } else {
        Value::Null
    };
    Ok(json!({
        "epsilon": eps,
        "configuration": pc,
        "state": st,
        "scale": interaction_scale(pc.sigma_min, 2),
        "d_interaction": d_int,
        "weighted_report": weighted,
    }))
}

fn run_equilibrate(ctx: &mut Ctx) -> Result<Value> {
    let cfg = ctx.config;
    let prof = ctx.profile()?;
    let eps = cfg.peaks.epsilon;
    let k = cfg.peak_count();
    let initial = if cfg.peaks.angles.is_some() {
        cfg.configuration(eps)?
    } else {
        perturbed_uniform(eps, k, cfg.peaks.perturbation, -std::f64::consts::PI / eps, cfg.seed)?
    };
    let opts = EquilibrateOptions {
        tol: cfg.equilibrate.tol,
        max_steps: cfg.equilibrate.max_steps,
        fd_step: cfg.equilibrate.fd_step,
        reduction: cfg.reduction_options(),
    };
    let r = equilibrate(&initial, prof, &opts)?;
    let target = initial.period() / k as f64;
    let deviation = r
        .config
        .gaps()
        .iter()
        .map(|g| (g / target - 1.0).abs())
        .fold(0.0, f64::max);
    let mut header: Vec<String> = vec!["step".into(), "damping".into()];
    header.extend((0..k).map(|i| format!("position_{i}")));
    header.extend((0..k).map(|i| format!("d_{i}")));
    let rows: Vec<Vec<f64>> = r
        .trace
        .iter()
        .map(|t| {
            let mut row = vec![t.step as f64, t.damping];
            row.extend(&t.positions);
            row.extend(&t.d);
            row
        })
        .collect();
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(&ctx.path("equilibrate_trace.csv"), &h, &rows)?;
    Ok(json!({
        "initial": initial,
        "initial_gaps": initial.gaps(),
        "result": r,
        "final_gaps": r.config.gaps(),
        "max_relative_gap_deviation": deviation,
    }))
}

fn run_dancer(ctx: &mut Ctx) -> Result<Value> {
    let cfg = ctx.config;
    let prof = ctx.profile()?;
    let d = &cfg.dancer;
    let opts = DancerOptions {
        tol: d.tol,
        ..Default::default()
    };
    let k = cfg.peak_count();
    let sols = cfg
        .epsilons()
        .par_iter()
        .map(|&eps| {
            let pc = if cfg.peaks.angles.is_some() {
                cfg.configuration(eps)?
            } else {
                perturbed_uniform(eps, k, cfg.peaks.perturbation, -std::f64::consts::PI / eps, cfg.seed)?
            };
            let grid = cfg.grid_for(eps, k)?;
            newton_solve(&pc, prof.clone(), &grid, None, d.pin, &opts)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for s in &sols {
        let ev = verify_evenness(s, d.tol);
        let mp = minimal_period(s, d.tol)?;
        if d.snapshots {
            let path = ctx.path(&format!("dancer_eps{:.6}.field", s.epsilon));
            s.field.write_binary(&path)?;
        }
        rows.push(json!({
            "solution": s,
            "psi_sup": s.psi.sup_norm(),
            "evenness": ev,
            "minimal_period": mp,
        }));
    }
    let fit = if sols.len() >= 2 {
        serde_json::to_value(psi_decay_fit(&sols, d.eta, d.eta_prime)?)?
    } else {
        Value::Null
    };
    let probe = if d.uniqueness_probe {
        let eps = cfg.peaks.epsilon;
        let grid = cfg.grid_for(eps, k)?;
        let delta = if cfg.peaks.perturbation > 0.0 { cfg.peaks.perturbation } else { 0.05 };
        let first = -std::f64::consts::PI / eps;
        let a = perturbed_uniform(eps, k, delta, first, cfg.seed)?;
        let b = perturbed_uniform(eps, k, -delta, first + 4.0 * grid.h1(), cfg.seed)?;
        let sa = newton_solve(&a, prof.clone(), &grid, None, 0, &opts)?;
        let sb = newton_solve(&b, prof.clone(), &grid, None, 0, &opts)?;
        let (shift, diff) = align_x1(&sa.field, &sb.field)?;
        json!({
            "start_a_gaps": a.gaps(),
            "start_b_gaps": b.gaps(),
            "iterations": [sa.iterations(), sb.iterations()],
            "alignment_shift_nodes": shift,
            "aligned_sup_difference": diff,
        })
    } else {
        Value::Null
    };
    Ok(json!({"runs": rows, "psi_fit": fit, "uniqueness_probe": probe}))
}

fn run_interactions(ctx: &mut Ctx) -> Result<Value> {
    let cfg = ctx.config;
    let o = &cfg.oracle;
    let prof = if o.shape == "profile" { Some(ctx.profile()?) } else { None };
    let shape = cfg.shape(prof.as_ref())?;
    let spec = InteractionSpec {
        dimension: cfg.groundstate.dimension,
        f: shape.clone(),
        g: shape,
        a: o.a,
        b: o.b,
        y0: o.separations[0],
        cell: cfg.cell()?,
    };
    let lim = interaction_limit(&spec, &o.separations)?;
    let closed: Vec<Option<f64>> = lim
        .points
        .iter()
        .map(|p| {
            (o.shape == "exponential" && spec.dimension == 1 && spec.cell == Cell::Whole)
                .then(|| exponential_interaction(o.a, o.b, p.y0))
        })
        .collect();
    Ok(json!({"limit": lim, "closed_form": closed}))
}

fn run_taylor(ctx: &Ctx) -> Result<Value> {
    let cfg = ctx.config;
    let p = cfg.groundstate.exponent;
    let r = taylor_remainder_check(cfg.oracle.samples, p, cfg.seed)?;
    Ok(json!({"report": r, "remainder_at_b_zero": taylor_remainder(1.0, 0.0, p)}))
}

/// Manufactured solution `cos(εx₁) e^{−x₂²/2}` on successively halved meshes.
fn run_helmholtz(ctx: &Ctx) -> Result<Value> {
    let cfg = ctx.config;
    let rows = helmholtz_refinement(cfg.peaks.epsilon, cfg.grid.transverse_extent, cfg.grid.mesh, cfg.oracle.refinements)?;
    let errors: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    Ok(json!({
        "meshes": rows.iter().map(|r| r.0).collect::<Vec<_>>(),
        "sup_errors": errors,
        "ratios": ratios,
    }))
}

/// `(h₁, sup error)` for the manufactured Helmholtz problem at `levels + 1` meshes.
pub fn helmholtz_refinement(epsilon: f64, extent: f64, mesh: f64, levels: usize) -> Result<Vec<(f64, f64)>> {
    let mut grid = StripGrid::with_spacing(epsilon, extent, mesh, 1)?;
    let exact = move |x1: f64, x2: f64| (epsilon * x1).cos() * (-x2 * x2 / 2.0).exp();
    let rhs = move |x1: f64, x2: f64| exact(x1, x2) * (epsilon * epsilon + 2.0 - x2 * x2);
    let mut out = Vec::new();
    for _ in 0..=levels {
        let f = GridField::from_fn(grid, rhs);
        let sol = solve_helmholtz(&f, 1e-12)?;
        let err = sol.field.sub(&GridField::from_fn(grid, exact)).sup_norm();
        out.push((grid.h1(), err));
        grid = grid.refined();
    }
    Ok(out)
}
