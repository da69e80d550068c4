//! `nlw`: experiment runner for the blow-up laboratory.
//!
//! Exit codes: 0 on success, 2 on configuration errors (bad flags, bad TOML,
//! missing artifacts), 3 on numerical failures (blow-up cap, fit misfits,
//! integrator trouble).

mod commands;
mod config;
mod plots;
mod rundir;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nlw_core::error::Error;

use commands::EnergyMode;

#[derive(Parser)]
#[command(name = "nlw", version, about = "Numerical laboratory for ODE-type wave blow-up")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the derived exponent table for a given nonlinearity power
    Exponents {
        #[arg(long)]
        p: f64,
    },
    /// Integrate the homogeneous blow-up ODE from its singular expansion
    OdeRun {
        #[arg(long)]
        p: f64,
        /// scattering datum of the seeded trajectory
        #[arg(long)]
        psi: f64,
        /// seeding time; integrate toward `t_end` (usually inward, where the
        /// gauge-law window lies)
        #[arg(long, default_value_t = 1e-2)]
        t_seed: f64,
        #[arg(long, default_value_t = 1e-4)]
        t_end: f64,
        #[arg(long, default_value_t = 1e-10)]
        rtol: f64,
        /// expansion order of the seed (default 2β + 4)
        #[arg(long)]
        order: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recover (ψ, t₀) from a stored trajectory through the gauge law
    OdeExtract {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 1e-4)]
        tau_lo: f64,
        #[arg(long, default_value_t = 1e-2)]
        tau_hi: f64,
    },
    /// Build the singular expansion for (f, ψ) profiles and report its residual
    AnsatzBuild {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        f_spec: String,
        #[arg(long)]
        psi_spec: String,
        /// expansion order (default 2β + 4)
        #[arg(long)]
        order: Option<f64>,
        #[arg(long, default_value_t = 128)]
        n: usize,
        #[arg(long, default_value_t = 2.0 * std::f64::consts::PI)]
        length: f64,
        /// window for the residual decay measurement
        #[arg(long, default_value_t = 1e-3)]
        slope_lo: f64,
        #[arg(long, default_value_t = 1e-2)]
        slope_hi: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the evolution described by a TOML config into a run directory
    PdeEvolve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract the blow-up surface from a stored run
    ExtractSurface {
        #[arg(long)]
        run: PathBuf,
    },
    /// Extract the scattering data (f, ψ) from a stored run
    ExtractScattering {
        #[arg(long)]
        run: PathBuf,
    },
    /// Run the stability experiment across several perturbation sizes
    StabilitySweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        eps_list: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check an energy current (divergence theorem, coercivity) on a run
    EnergyReport {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_enum)]
        mode: EnergyMode,
        /// weight exponent (default 4κ for either direction)
        #[arg(long)]
        q: Option<f64>,
    },
    /// Emit gnuplot-ready TSV files for the artifacts in a run directory
    Plots {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn dispatch(cmd: Cmd) -> nlw_core::error::Result<()> {
    match cmd {
        Cmd::Exponents { p } => commands::cmd_exponents(p),
        Cmd::OdeRun { p, psi, t_seed, t_end, rtol, order, out } => {
            commands::cmd_ode_run(p, psi, t_seed, t_end, rtol, order, &out)
        }
        Cmd::OdeExtract { input, tau_lo, tau_hi } => {
            commands::cmd_ode_extract(&input, tau_lo, tau_hi)
        }
        Cmd::AnsatzBuild { p, f_spec, psi_spec, order, n, length, slope_lo, slope_hi, out } => {
            commands::cmd_ansatz_build(
                p,
                &f_spec,
                &psi_spec,
                order,
                n,
                length,
                (slope_lo, slope_hi),
                &out,
            )
        }
        Cmd::PdeEvolve { config, out } => commands::cmd_pde_evolve(&config, &out),
        Cmd::ExtractSurface { run } => commands::cmd_extract_surface(&run),
        Cmd::ExtractScattering { run } => commands::cmd_extract_scattering(&run),
        Cmd::StabilitySweep { config, eps_list, out } => {
            commands::cmd_stability_sweep(&config, &eps_list, &out)
        }
        Cmd::EnergyReport { run, mode, q } => commands::cmd_energy_report(&run, mode, q),
        Cmd::Plots { run, out } => plots::cmd_plots(&run, out.as_deref()),
    }
}

/// Configuration problems exit with 2, numerical failures with 3.
fn classify(err: &Error) -> u8 {
    match err {
        Error::InvalidParameter(_) | Error::Io(_) | Error::MismatchedGrids(..) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(classify(&err))
        }
    }
}
