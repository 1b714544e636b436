use clap::{Args, Parser, Subcommand, ValueEnum};
use isihd::harness::{self, ExperimentConfig, Format, Outcome, PRESETS};
use isihd::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "isihd", version, about = "Stochastic inertial gradient dynamics laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every path and write one file per path.
    Simulate(RunArgs),
    /// Run the ensemble and write per-checkpoint statistics.
    Ensemble(RunArgs),
    /// Verify the coefficient system of the configured quadruple.
    VerifyLyapunov(RunArgs),
    /// Run the ensemble, fit rates and evaluate every configured check.
    Rates(RunArgs),
    /// List the presets, or print one as TOML with --preset.
    Presets {
        #[arg(long)]
        preset: Option<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<usize>,
    /// Worker threads; affects speed only.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
}

impl RunArgs {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::from_path(path)?,
            (None, Some(name)) => harness::preset(name)?,
            (None, None) => unreachable!("clap requires one of --config/--preset"),
        };
        if let Some(seed) = self.seed {
            cfg.master_seed = seed;
        }
        if let Some(paths) = self.paths {
            cfg.paths = paths;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = Some(out.display().to_string());
        }
        Ok(cfg)
    }
}

fn report(outcome: &Outcome) {
    for c in &outcome.checks {
        println!("{} {} {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    for f in &outcome.files {
        eprintln!("wrote {}", f.display());
    }
}

fn run(which: &str, args: &RunArgs) -> Result<Outcome, Error> {
    let cfg = args.load()?;
    let exp = cfg.build()?;
    let out = cfg.output_dir();
    let format = match args.format {
        FormatArg::Csv => Format::Csv,
        FormatArg::Json => Format::Json,
    };
    let go = || match which {
        "simulate" => harness::cmd_simulate(&exp, &out, format),
        "ensemble" => harness::cmd_ensemble(&exp, &out, format),
        "verify-lyapunov" => harness::cmd_verify_lyapunov(&exp, &out),
        _ => harness::cmd_rates(&exp, &out, format),
    };
    match args.threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::Config(format!("--threads: {e}")))?
            .install(go),
        None => go(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (which, args) = match &cli.command {
        Command::Presets { preset: None } => {
            for p in PRESETS {
                println!("{:<18} {}", p.name, p.description);
            }
            return ExitCode::SUCCESS;
        }
        Command::Presets { preset: Some(name) } => {
            return match harness::preset(name) {
                Ok(cfg) => {
                    print!("{}", cfg.to_toml());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            };
        }
        Command::Simulate(a) => ("simulate", a),
        Command::Ensemble(a) => ("ensemble", a),
        Command::VerifyLyapunov(a) => ("verify-lyapunov", a),
        Command::Rates(a) => ("rates", a),
    };
    match run(which, args) {
        Ok(outcome) => {
            report(&outcome);
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
