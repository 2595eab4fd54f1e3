use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use periodic_peaks::run::{error_report, run, to_json_string, Command, RunConfig};
use periodic_peaks::{Error, Result};

#[derive(Parser)]
#[command(name = "peaks", version, about = "Periodic multi-peak solutions of -Δu + u = u^p on a strip")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (PEAKS_OUT_DIR takes precedence).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print the resolved config as TOML and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Default)]
struct Strip {
    #[arg(long)]
    eps: Option<f64>,
    /// Comma-separated peak angles in [-π, π).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    peaks: Option<Vec<f64>>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    mesh: Option<f64>,
    #[arg(long)]
    extent: Option<f64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Radial ground state and its tail constants.
    Groundstate {
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Ansatz residual for one or more ε.
    Ansatz {
        #[command(flatten)]
        strip: Strip,
        /// a:b:n, n values from a to b.
        #[arg(long)]
        eps_sweep: Option<String>,
    },
    /// Lowest eigenvalues of the linearized operator.
    Spectrum {
        #[command(flatten)]
        strip: Strip,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        weighted_report: bool,
    },
    /// Lyapunov–Schmidt correction and reduced coefficients.
    Reduce {
        #[command(flatten)]
        strip: Strip,
        #[arg(long, value_delimiter = ',')]
        sigma_sweep: Option<Vec<f64>>,
        #[arg(long)]
        gap_offset: Option<f64>,
        #[arg(long)]
        weighted_report: bool,
    },
    /// Move peaks until the reduced coefficients vanish.
    Equilibrate {
        #[command(flatten)]
        strip: Strip,
        #[arg(long)]
        perturbation: Option<f64>,
    },
    /// Full Newton solve and the periodic-defect analysis.
    Dancer {
        #[command(flatten)]
        strip: Strip,
        #[arg(long)]
        eps_sweep: Option<String>,
        #[arg(long)]
        perturbation: Option<f64>,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        probe_uniqueness: bool,
    },
    /// Independent checks.
    Oracle {
        #[command(subcommand)]
        which: Oracle,
    },
}

#[derive(Subcommand)]
enum Oracle {
    /// Rescaled interaction integrals over growing separations.
    Interactions {
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        shape: Option<String>,
        #[arg(long)]
        a: Option<f64>,
        #[arg(long)]
        b: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        separations: Option<Vec<f64>>,
        #[arg(long)]
        cell: Option<String>,
    },
    /// Randomized bound on the power-law Taylor remainder.
    Taylor {
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Manufactured-solution refinement of the Helmholtz solver.
    Helmholtz {
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        mesh: Option<f64>,
        #[arg(long)]
        levels: Option<usize>,
    },
}

fn parse_sweep(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("sweep '{s}' is not a:b:n"));
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, n] = parts[..] else { return Err(bad()) };
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    let n: usize = n.trim().parse().map_err(|_| bad())?;
    Ok(match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    })
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn apply_strip(cfg: &mut RunConfig, s: Strip) {
    set(&mut cfg.peaks.epsilon, s.eps);
    set(&mut cfg.peaks.k, s.k);
    set(&mut cfg.grid.mesh, s.mesh);
    set(&mut cfg.grid.transverse_extent, s.extent);
    if s.peaks.is_some() {
        cfg.peaks.angles = s.peaks;
    }
}

fn resolve(cli: Cli) -> Result<(Command, RunConfig, bool)> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    set(&mut cfg.out_dir, cli.out_dir);
    set(&mut cfg.seed, cli.seed);
    let command = match cli.command {
        Cmd::Groundstate { dim, p, tol } => {
            set(&mut cfg.groundstate.dimension, dim);
            set(&mut cfg.groundstate.exponent, p);
            set(&mut cfg.groundstate.tol, tol);
            Command::Groundstate
        }
        Cmd::Ansatz { strip, eps_sweep } => {
            apply_strip(&mut cfg, strip);
            if let Some(s) = eps_sweep {
                cfg.peaks.epsilon_sweep = parse_sweep(&s)?;
            }
            Command::Ansatz
        }
        Cmd::Spectrum {
            strip,
            count,
            weighted_report,
        } => {
            apply_strip(&mut cfg, strip);
            set(&mut cfg.spectrum.count, count);
            cfg.spectrum.weighted_report |= weighted_report;
            Command::Spectrum
        }
        Cmd::Reduce {
            strip,
            sigma_sweep,
            gap_offset,
            weighted_report,
        } => {
            apply_strip(&mut cfg, strip);
            set(&mut cfg.reduction.sigma_sweep, sigma_sweep);
            set(&mut cfg.reduction.gap_offset, gap_offset);
            cfg.spectrum.weighted_report |= weighted_report;
            Command::Reduce
        }
        Cmd::Equilibrate { strip, perturbation } => {
            apply_strip(&mut cfg, strip);
            set(&mut cfg.peaks.perturbation, perturbation);
            Command::Equilibrate
        }
        Cmd::Dancer {
            strip,
            eps_sweep,
            perturbation,
            eta,
            probe_uniqueness,
        } => {
            apply_strip(&mut cfg, strip);
            if let Some(s) = eps_sweep {
                cfg.peaks.epsilon_sweep = parse_sweep(&s)?;
            }
            set(&mut cfg.peaks.perturbation, perturbation);
            set(&mut cfg.dancer.eta, eta);
            cfg.dancer.uniqueness_probe |= probe_uniqueness;
            Command::Dancer
        }
        Cmd::Oracle { which } => match which {
            Oracle::Interactions {
                dim,
                shape,
                a,
                b,
                separations,
                cell,
            } => {
                set(&mut cfg.groundstate.dimension, dim);
                set(&mut cfg.oracle.shape, shape);
                set(&mut cfg.oracle.a, a);
                set(&mut cfg.oracle.b, b);
                set(&mut cfg.oracle.separations, separations);
                set(&mut cfg.oracle.cell, cell);
                Command::OracleInteractions
            }
            Oracle::Taylor { p, n } => {
                set(&mut cfg.groundstate.exponent, p);
                set(&mut cfg.oracle.samples, n);
                Command::OracleTaylor
            }
            Oracle::Helmholtz { eps, mesh, levels } => {
                set(&mut cfg.peaks.epsilon, eps);
                set(&mut cfg.grid.mesh, mesh);
                set(&mut cfg.oracle.refinements, levels);
                Command::OracleHelmholtz
            }
        },
    };
    Ok((command, cfg, cli.print_config))
}

fn main() -> ExitCode {
    let start = Instant::now();
    let outcome = resolve(Cli::parse()).and_then(|(command, cfg, print)| {
        if print {
            print!("{}", cfg.to_toml()?);
            return Ok(());
        }
        let out = run(command, &cfg)?;
        println!("{}", out.summary_path.display());
        for a in &out.artifacts {
            println!("{}", a.display());
        }
        Ok(())
    });
    let code = match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprint!("{}", to_json_string(&error_report(&e)));
            e.exit_code()
        }
    };
    eprintln!("elapsed {:.3} s", start.elapsed().as_secs_f64());
    ExitCode::from(code as u8)
}
