//! `blowup-profiles`: compute self-similar profiles and emit diagnostics.
//!
//! Exit status: 0 when every asserted check passes, 1 for parameter,
//! configuration or I/O errors, 2 for diagnostic or numerical failures.

mod commands;
mod config;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::table::Format;

#[derive(Debug, Parser)]
#[command(
    name = "blowup-profiles",
    version,
    about = "Self-similar profiles of a sublinear heat equation and their diagnostics"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

// Options shared by every command; each mirrors a config-file key.
#[derive(Debug, Args)]
pub struct Global {
    /// `key = value` file with [output], [params] and per-command sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default `out`).
    #[arg(long, global = true, env = "BLOWUP_PROFILES_OUT")]
    pub out: Option<PathBuf>,
    /// Format of tabular artifacts.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Reading of the zero-crossing window formula: literal or offset.
    #[arg(long, global = true)]
    pub mode: Option<String>,
    /// Exponent of the nonlinearity, 0 < p < 1 (default 0.5).
    #[arg(long, global = true)]
    pub p: Option<f64>,
    /// Spatial dimension (default 3).
    #[arg(long, global = true)]
    pub n: Option<u32>,
    /// Initial value w(0) (default 0.2).
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    /// Relative integration tolerance.
    #[arg(long, global = true)]
    pub rel_tol: Option<f64>,
    /// Absolute tolerance of the integrator and of asserted checks.
    #[arg(long, global = true)]
    pub abs_tol: Option<f64>,
    /// End of the integration interval.
    #[arg(long, global = true)]
    pub eta_max: Option<f64>,
    /// Oscillation frequency above which the tail is treated as quiescent.
    #[arg(long, global = true)]
    pub max_frequency: Option<f64>,
    /// Amplitude below which the tail is treated as quiescent.
    #[arg(long, global = true)]
    pub quiescent_amplitude: Option<f64>,
    /// Resolve oscillations at least up to this η.
    #[arg(long, global = true)]
    pub resolve_to: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one profile: trace table and metadata.
    Solve,
    /// Envelope decay-rate fit.
    Decay {
        /// Fit window `lo,hi`.
        #[arg(long)]
        window: Option<String>,
        /// Allowed shortfall below 2/(1-p).
        #[arg(long)]
        slack: Option<f64>,
    },
    /// Zero census and oscillation check.
    Zeros {
        /// Required number of resolved zeros.
        #[arg(long)]
        min_zeros: Option<usize>,
    },
    /// Energy decay, range, convergence and tail-slope bounds.
    Energy {
        /// Largest admissible onset of the tail-slope bound.
        #[arg(long)]
        eta_alpha_limit: Option<f64>,
    },
    /// Sup-distance to perturbed profiles.
    Continuity {
        /// Comma-separated perturbations of α.
        #[arg(long)]
        deltas: Option<String>,
        /// Bound on the distance at the smallest perturbation.
        #[arg(long)]
        limit: Option<f64>,
    },
    /// Rebuild the PDE solution and check residual, bound and sign.
    PdeCheck {
        /// Outer radius.
        #[arg(long)]
        r_max: Option<f64>,
        /// Radial nodes of the coarse grid.
        #[arg(long)]
        r_points: Option<usize>,
        /// Final time.
        #[arg(long)]
        t_max: Option<f64>,
        /// Time nodes of the coarse grid.
        #[arg(long)]
        t_points: Option<usize>,
        /// Time shift τ = t + offset.
        #[arg(long)]
        t_offset: Option<f64>,
        /// Use the ((1-p)τ)^{1/(1-p)} amplitude instead of τ^{1/(1-p)}.
        #[arg(long)]
        literal_factor: Option<bool>,
        /// Required residual reduction when both spacings halve.
        #[arg(long)]
        min_ratio: Option<f64>,
    },
    /// Regularised non-negative problems with bump data.
    Cpplus {
        /// Comma-separated regularisation indices.
        #[arg(long)]
        ms: Option<String>,
        /// Bump radius η*.
        #[arg(long)]
        eta_star: Option<f64>,
        /// Bump scale; derived from the profile when absent.
        #[arg(long)]
        g: Option<f64>,
        /// Final time (default from g).
        #[arg(long)]
        horizon: Option<f64>,
        /// Outer radius (default 2(4η* + 4√T)).
        #[arg(long)]
        r_max: Option<f64>,
        /// Radial nodes.
        #[arg(long)]
        r_points: Option<usize>,
        /// Output time steps.
        #[arg(long)]
        t_steps: Option<usize>,
        /// Number of random probe nodes besides (0, 0.1).
        #[arg(long)]
        probes: Option<usize>,
        /// Seed for probe-node selection.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Profiles and diagnostics over a grid of α.
    Sweep {
        /// Comma-separated initial values.
        #[arg(long)]
        alphas: Option<String>,
        /// Fit window `lo,hi`.
        #[arg(long)]
        window: Option<String>,
        /// Allowed shortfall below 2/(1-p).
        #[arg(long)]
        slack: Option<f64>,
        /// Required number of resolved zeros.
        #[arg(long)]
        min_zeros: Option<usize>,
    },
    /// Bootstrap decay exponents σ_1..σ_m.
    Sigma {
        #[arg(long)]
        m: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match commands::run(&cli) {
        Ok(commands::Outcome::Pass) => ExitCode::SUCCESS,
        Ok(commands::Outcome::Fail(path)) => {
            eprintln!("diagnostic failure: see {}", path.display());
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            let numerical = matches!(
                e.downcast_ref::<blowup_core::Error>(),
                Some(blowup_core::Error::Numerical(_))
            );
            ExitCode::from(if numerical { 2 } else { 1 })
        }
    }
}
