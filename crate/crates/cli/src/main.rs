use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use patchflow::commands::{self, VerifyOptions};
use patchflow::output::OutputDir;
use patchflow::CliResult;

#[derive(Parser)]
#[command(name = "patchflow", version, about = "Compressible Navier-Stokes runs with density-patch diagnostics")]
struct Cli {
    /// Directory for all outputs.
    #[arg(long, global = true, env = "SNS_OUTPUT_DIR", default_value = "out")]
    out: PathBuf,
    /// Worker threads for sweeps and corpora.
    #[arg(long, global = true, env = "SNS_WORKERS", default_value_t = 1)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configuration (TOML or JSON) to its end time.
    Run { config: PathBuf },
    /// Continue a run from a snapshot.
    Resume {
        snapshot: PathBuf,
        /// Must hash to the configuration stored in the snapshot.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Bulk-viscosity sweep from a manifest.
    Sweep { manifest: PathBuf },
    /// Run a verification suite: spectral-identities or inequalities.
    Verify {
        suite: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        samples: Option<usize>,
        /// Frozen constants; the shipped ones when absent.
        #[arg(long)]
        constants: Option<PathBuf>,
    },
    /// Recompute the inequality constants from a seeded corpus.
    Calibrate {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "constants.json")]
        output: PathBuf,
    },
    /// Write the reference patch configuration, curve and initial snapshot.
    PatchDemo {
        #[arg(long, default_value_t = 256)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        t_end: f64,
    },
}

fn execute(cli: Cli) -> CliResult<()> {
    let out = OutputDir::new(&cli.out)?;
    let workers = cli.workers.max(1);
    match cli.command {
        Command::Run { config } => {
            let o = commands::run(&config, &out)?;
            println!("completed t = {} after {} steps, {} records", o.summary.t, o.summary.steps, o.summary.records);
        }
        Command::Resume { snapshot, config } => {
            let o = commands::resume(&snapshot, config.as_deref(), &out)?;
            println!("completed t = {} after {} steps, {} records", o.summary.t, o.summary.steps, o.summary.records);
        }
        Command::Sweep { manifest } => {
            let m = commands::sweep(&manifest, workers, &out)?;
            match &m.div_fit {
                Some(f) => println!("divergence slope {:.4} [{:.4}, {:.4}]", f.slope, f.ci_low, f.ci_high),
                None => println!("{} member(s), no fit", m.members.len()),
            }
        }
        Command::Verify {
            suite,
            seed,
            samples,
            constants,
        } => {
            let opts = VerifyOptions {
                seed,
                samples,
                constants: constants.as_deref(),
                workers,
            };
            let report = commands::verify(&suite, &opts, &out)?;
            for l in &report.lines {
                println!("{} {}: {}", if l.passed { "PASS" } else { "FAIL" }, l.property, l.detail);
            }
            if !report.passed {
                return Err(patchflow::CliError::Failed(format!("suite {suite} failed")));
            }
        }
        Command::Calibrate { seed, output } => {
            let c = commands::calibrate_constants(seed, workers, &output)?;
            println!("calibrated with seed {} into {}", c.seed, output.display());
        }
        Command::PatchDemo { n, t_end } => {
            let r = commands::patch_demo(n, t_end, &out)?;
            println!("patch area {:.6}, nondegeneracy {:.4}", r.area, r.nondegeneracy);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
