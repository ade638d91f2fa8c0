use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use liftlab::{cmd_analyze, cmd_catalog, cmd_verify, Outcome, EXIT_ERROR};

#[derive(Parser)]
#[command(name = "liftlab", version, about = "Conformal analysis of lifted vector fields on tangent bundles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify the configured fields and run the suites listed in the config.
    Analyze {
        config: PathBuf,
        /// Test hook: deliberately corrupt one closed-form term.
        #[arg(long)]
        perturb_closed_form: bool,
    },
    /// Run verification suites.
    Verify {
        config: PathBuf,
        #[arg(long = "suite", value_name = "NAME")]
        suites: Vec<String>,
        #[arg(long)]
        perturb_closed_form: bool,
    },
    /// List built-in manifolds, fields and suites as JSON lines.
    Catalog,
}

fn init_threads() -> anyhow::Result<()> {
    let Ok(v) = std::env::var("LIFTLAB_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().map_err(|_| anyhow::anyhow!("LIFTLAB_THREADS must be a positive integer, got `{v}`"))?;
    if n == 0 {
        anyhow::bail!("LIFTLAB_THREADS must be a positive integer, got `{v}`");
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn summarize(o: &Outcome) {
    let r = &o.report;
    for s in &r.suites {
        let verdict = if s.passed { "pass" } else { "FAIL" };
        eprintln!("{verdict} {} on {}: {} checks, worst {:.3e}", s.suite, s.manifold, s.checks, s.worst_defect);
    }
    for f in &r.cross_check_failures {
        eprintln!("cross-check failure: {f}");
    }
    eprintln!("report written to {}", o.report_path.display());
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match cli.command {
        Command::Analyze { config, perturb_closed_form } => cmd_analyze(&config, perturb_closed_form).map(Some),
        Command::Verify { config, suites, perturb_closed_form } => {
            cmd_verify(&config, &suites, perturb_closed_form).map(Some)
        }
        Command::Catalog => cmd_catalog(std::io::stdout().lock()).map(|()| None),
    });
    match result {
        Ok(Some(o)) => {
            summarize(&o);
            ExitCode::from(o.exit_code() as u8)
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
