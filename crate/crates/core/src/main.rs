use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use specular_vp::cli::{self, CliError, RunConfig};
use specular_vp::diagnostics::{audit_green, energy_bound_check};
use specular_vp::geometry::Domain;

#[derive(Parser)]
#[command(
    name = "specvp",
    version,
    about = "Vlasov-Poisson particle simulator with specular walls"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Configuration file (TOML sections, see README)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named fixture used instead of a configuration file
    #[arg(long, conflicts_with = "config")]
    fixture: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core); never changes results
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    cadence_snapshot: Option<usize>,
    #[arg(long)]
    cadence_ledger: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate an ensemble and write snapshots, events, ledger and manifest
    Simulate(RunArgs),
    /// Picard iteration over the [picard] window
    Picard(RunArgs),
    /// Energy bound verdict for a ledger CSV
    Diagnose {
        #[arg(long)]
        ledger: PathBuf,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[arg(long, default_value_t = 0.0)]
        tol_abs: f64,
    },
    /// Event-driven half-space run against the folded whole-space run
    CompareBackends(RunArgs),
    /// Randomized audit of the Green-function bounds
    AuditGreen {
        #[arg(long, default_value_t = 10_000)]
        pairs: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match (&self.config, &self.fixture) {
            (Some(p), _) => cli::parse_config(p)?,
            (None, Some(name)) => {
                cli::fixture_config(name).ok_or_else(|| CliError::Usage(format!("unknown fixture {name:?}")))?
            }
            (None, None) => return Err(CliError::Usage("pass --config PATH or --fixture NAME".into())),
        };
        if let Some(s) = self.seed {
            cfg.run.seed = s;
        }
        if let Some(w) = self.workers {
            cfg.run.workers = w;
        }
        if let Some(o) = &self.out {
            cfg.output.dir = o.display().to_string();
        }
        if let Some(k) = self.cadence_snapshot {
            cfg.output.cadence_snapshot = k;
        }
        if let Some(k) = self.cadence_ledger {
            cfg.output.cadence_ledger = k;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn execute(command: Command) -> Result<bool, CliError> {
    match command {
        Command::Simulate(args) => {
            let cfg = args.load()?;
            let out = cli::simulate(&cfg, cfg.output.dir.as_ref())?;
            println!("{}", serde_json::to_string(&out.report).unwrap_or_default());
            Ok(true)
        }
        Command::Picard(args) => {
            let cfg = args.load()?;
            let (state, _) = cli::picard(&cfg, cfg.output.dir.as_ref())?;
            for (k, z) in state.z.iter().enumerate() {
                let ratio = if k > 0 {
                    format!("{:e}", state.ratios[k - 1])
                } else {
                    String::new()
                };
                println!("n={} Z={z:e} ratio={ratio}", k + 1);
            }
            Ok(true)
        }
        Command::Diagnose { ledger, tol, tol_abs } => {
            let l = cli::read_ledger_csv(&ledger)?;
            let c = energy_bound_check(&l, tol, tol_abs);
            println!(
                "{} min_margin={:e} worst_t={:e} max_abs_drift={:e}",
                if c.pass { "PASS" } else { "FAIL" },
                c.min_margin,
                c.worst_time,
                l.max_abs_drift()
            );
            Ok(c.pass)
        }
        Command::CompareBackends(args) => {
            let cfg = args.load()?;
            let c = cli::compare_backends(&cfg)?;
            println!("{}", serde_json::to_string(&c).unwrap_or_default());
            Ok(c.pass)
        }
        Command::AuditGreen { pairs, seed } => {
            let mut ok = true;
            for d in 3..=5 {
                let doms = [Domain::half_space(d), Domain::ball(d, 1.0)];
                for dom in doms.into_iter().flatten() {
                    let a = audit_green(&dom, pairs, seed)?;
                    ok &= a.pass;
                    println!("{}", serde_json::to_string(&a).unwrap_or_default());
                }
            }
            println!("{}", if ok { "PASS" } else { "FAIL" });
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
