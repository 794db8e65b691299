use clap::{Parser, Subcommand};
use magtunnel_cli::commands::{cmd_asymptotics, cmd_check, cmd_fit, cmd_report, cmd_sweep};
use magtunnel_cli::{CliError, RunConfig};
use std::path::PathBuf;
use std::process::ExitCode;

/// Tunneling between two magnetic wells: asymptotics, spectra and gap fits
#[derive(Debug, Parser)]
#[command(author, version, about)]
#[command(propagate_version = true)]
struct Cli {
    /// Run configuration (TOML)
    #[arg(long, global = true, default_value = "magtunnel.toml")]
    config: PathBuf,
    /// Output directory; overrides `output.dir`
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed of the eigensolver start vectors; overrides `seed`
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Verify the field assumptions by sampling
    Check,
    /// Eikonal weight, action, transport amplitude and prefactor
    Asymptotics,
    /// Two lowest eigenvalues over the h list
    Sweep,
    /// Fit the gap law to the sweep
    Fit,
    /// Merge all outputs and emit plot data
    Report,
}

fn run(cli: Cli) -> Result<i32, CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads {n}: {e}")))?;
    }
    let mut config = RunConfig::load(&cli.config)?;
    if let Some(out) = cli.out {
        config.output.dir = out;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let run = config.validate()?;
    let dir = run.out_dir().display().to_string();
    match cli.command {
        Command::Check => {
            let out = cmd_check(&run)?;
            print!("{}", out.summary());
            Ok(if out.report.all_passed { 0 } else { 1 })
        }
        Command::Asymptotics => {
            let a = cmd_asymptotics(&run)?;
            println!("S = {:.10}  phi''(c_u) = {:.10}", a.s, a.phi_dd_cu);
            println!("z2: transport {:.6}, closed form {:.6}", a.z2_transport, a.z2_closed);
            println!("c0 = {:.6}  (second route {:.6})", a.c0, a.c0_secondary);
            println!("constancy spread {:.3e}; outputs in {dir}", a.const_check_spread);
            Ok(0)
        }
        Command::Sweep => {
            let s = cmd_sweep(&run)?;
            for e in &s.entries {
                match (&e.error, e.gap) {
                    (None, Some(g)) => println!("h = {:<8} gap = {:.6e}  parities {:?}", e.h, g, e.parities),
                    (Some(err), _) => println!("h = {:<8} FAILED: {err}", e.h),
                    _ => {}
                }
            }
            if let Some(r) = &s.refinement {
                println!("refinement at h = {}: shift / gap = {:.3e}", r.h, r.shift_over_gap);
            }
            println!("outputs in {dir}");
            Ok(s.exit_code())
        }
        Command::Fit => {
            let f = cmd_fit(&run)?;
            println!("{} points used ({})", f.n_used, f.window_rule);
            println!("S_fit = {:.6} +- {:.2e}  S_pred = {:.6}  rel err {:+.3e}", f.s_fit, f.s_fit_std, f.s_pred, f.s_rel_err);
            println!("c0_fit = {:.4e} +- {:.2e}  c0_pred = {:.4e}  ratio {:.3e}", f.c0_fit, f.c0_fit_std, f.c0_pred, f.c0_ratio);
            println!("free exponent p = {:.4} +- {:.2e}", f.free_exponent.p, f.free_exponent.p_std);
            Ok(0)
        }
        Command::Report => {
            let r = cmd_report(&run)?;
            for flag in &r.flags {
                println!("flag: {flag}");
            }
            println!("report in {dir}");
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
