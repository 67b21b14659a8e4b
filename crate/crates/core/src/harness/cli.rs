use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};

use super::compare::compare_baselines;
use super::config::ExperimentConfig;
use super::experiment::run_experiment;
use super::tradeoff::{tradeoff_curves, write_tradeoff};
use crate::analysis::comm_overhead;
use crate::coding::NoiseParams;
use crate::error::Result;
use crate::privacy::{epsilon_of, sigma_for_epsilon, PrivacyLevel};

#[derive(Debug, Parser)]
#[command(name = "acfl", version, about = "Adaptive coded federated learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train every replicate of a config and write trace.csv and summary.csv.
    Run { config: PathBuf },
    /// Run ACFL and the fixed-weight baseline on paired seeds at each `[compare]` noise level.
    Compare { config: PathBuf },
    /// Convert a noise variance to epsilon (nats) or back.
    Privacy(PrivacyArgs),
    /// Write privacy/convergence trade-off curves from the `[tradeoff]` table.
    Tradeoff { config: PathBuf },
    /// Upload volume in bits.
    Overhead(OverheadArgs),
}

#[derive(Debug, Args)]
struct PrivacyArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    o: usize,
    /// σ₁² = σ₂²
    #[arg(long, allow_negative_numbers = true, required_unless_present = "epsilon", conflicts_with = "epsilon")]
    sigma_sq: Option<f64>,
    /// Target leakage in nats.
    #[arg(long, allow_negative_numbers = true)]
    epsilon: Option<f64>,
}

#[derive(Debug, Args)]
struct OverheadArgs {
    /// Bits per transmitted scalar.
    #[arg(long, default_value_t = 32)]
    phi: u64,
    #[arg(long)]
    d: u64,
    #[arg(long)]
    o: u64,
    #[arg(long)]
    n: u64,
    #[arg(long)]
    t: u64,
}

/// Entry point of the `acfl` binary. Returns the process exit code:
/// 0 on success, 1 on a usage error, 2 when the command itself fails.
pub fn cli_main<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    0
                }
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand | ErrorKind::MissingSubcommand => {
                    let _ = write!(err, "{}", Cli::command().render_help());
                    1
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    1
                }
            };
        }
    };
    match execute(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}

fn execute(command: Command, out: &mut dyn Write) -> Result<()> {
    let mut lines = Vec::new();
    match command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let result = run_experiment(&cfg)?;
            lines.extend(result.written.iter().map(|p| p.display().to_string()));
        }
        Command::Compare { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let cmp = compare_baselines(&cfg, &cfg.compare.noise_levels)?;
            lines.extend(cmp.written.iter().map(|p| p.display().to_string()));
        }
        Command::Tradeoff { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let curves = tradeoff_curves(&cfg.tradeoff)?;
            let written = write_tradeoff(&cfg.run.output_dir, &curves)?;
            lines.extend(written.iter().map(|p| p.display().to_string()));
        }
        Command::Privacy(a) => match (a.sigma_sq, a.epsilon) {
            (Some(s), _) => {
                let eps = epsilon_of(NoiseParams::equal(s)?, a.d, a.o)?;
                lines.push(format!("epsilon_nats={}", eps.epsilon));
            }
            (None, Some(e)) => {
                let noise = sigma_for_epsilon(PrivacyLevel::new(e)?, a.d, a.o)?;
                lines.push(format!("sigma_sq={}", noise.sigma1_sq));
            }
            (None, None) => unreachable!("clap enforces one of --sigma-sq/--epsilon"),
        },
        Command::Overhead(a) => {
            let c = comm_overhead(a.phi, a.d, a.o, a.n, a.t)?;
            lines.push(format!("psi1={} psi2={} psi_total={}", c.psi1, c.psi2, c.psi_total));
        }
    }
    for l in lines {
        // a closed stdout is not worth a failure exit
        let _ = writeln!(out, "{l}");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = cli_main(std::iter::once("acfl").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn overhead_prints_integers() {
        let (code, out, _) = run(&["overhead", "--phi", "32", "--d", "10", "--o", "10", "--n", "100", "--t", "1000"]);
        assert_eq!(code, 0);
        assert_eq!(out, "psi1=640000 psi2=320000000 psi_total=320640000\n");
    }

    #[test]
    fn usage_errors() {
        let (code, _, err) = run(&[]);
        assert_eq!(code, 1);
        assert!(err.contains("Usage"));
        assert_eq!(run(&["frobnicate"]).0, 1);
        assert_eq!(run(&["privacy", "--d", "10", "--o", "10"]).0, 1);
        assert_eq!(run(&["privacy", "--d", "10", "--o", "10", "--sigma-sq", "1", "--epsilon", "2"]).0, 1);
    }

    #[test]
    fn runtime_errors() {
        assert_eq!(run(&["privacy", "--d", "10", "--o", "10", "--sigma-sq", "-1"]).0, 2);
        assert_eq!(run(&["run", "/nonexistent/acfl.toml"]).0, 2);
    }
}
