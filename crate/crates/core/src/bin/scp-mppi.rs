use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use scp_mppi::bench::{format_report, read_records, run_suite_config, write_summary_csv, SuiteOptions, SuiteReport};
use scp_mppi::config::{EnvironmentSpec, FileConfig, VariantSpec};
use scp_mppi::world::{generate_forest, save_environment, DensityTier};
use scp_mppi::{Error, Variant};

#[derive(Parser)]
#[command(name = "scp-mppi", version, about = "Sparse-control-point MPPI benchmark runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run closed-loop trials and print a per-environment summary.
    Run(RunArgs),
    /// Summarize a previous run directory.
    Report {
        /// Directory containing `trials.csv`.
        #[arg(long = "in")]
        input: PathBuf,
        /// Where to write the summary CSV (default: <in>/summary.csv).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Generate a forest and save it as an environment file.
    Forest {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "mid")]
        density: DensityTier,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    /// Flat TOML config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run a single variant instead of the configured list.
    #[arg(long)]
    variant: Option<Variant>,
    /// Environment file to use instead of the configured environments.
    #[arg(long, conflicts_with = "density")]
    env: Option<PathBuf>,
    /// Density tier (low, mid, high) to use instead of the configured environments.
    #[arg(long)]
    density: Option<DensityTier>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Write trials.csv, summary.csv, report.txt and trajectories here.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Also write one SVG per trial (requires --out-dir).
    #[arg(long, requires = "out_dir")]
    export_plots: bool,
    /// Overlay the sampled rollouts of the final solve on each plot.
    #[arg(long)]
    capture_candidates: bool,
    /// Override any config key, e.g. `--set lambda=5 --set sigma=[0.5,0.5,0.05]`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<FileConfig, Error> {
    let file = match path {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    file.with_overrides(overrides)
}

fn run(args: RunArgs) -> Result<(), Error> {
    let mut file = load_config(args.config.as_deref(), &args.overrides)?;
    if let Some(variant) = args.variant {
        let spec = file
            .variant_specs()
            .into_iter()
            .find(|v| v.variant == variant)
            .unwrap_or_else(|| VariantSpec::new(variant));
        file.variants = vec![spec];
    }
    if let Some(env) = args.env {
        file.environments = vec![EnvironmentSpec {
            density: None,
            file: Some(env),
        }];
    } else if let Some(tier) = args.density {
        file.environments = vec![EnvironmentSpec {
            density: Some(tier.as_str().to_string()),
            file: None,
        }];
    }
    if let Some(seed) = args.seed {
        file.seed = seed;
    }
    if let Some(trials) = args.trials {
        file.trials = trials;
    }
    let base = args
        .config
        .as_deref()
        .and_then(Path::parent)
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    let options = SuiteOptions {
        out_dir: args.out_dir.clone(),
        export_plots: args.export_plots,
        capture_candidates: args.capture_candidates,
    };
    if let Some(dir) = &args.out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.toml"), file.to_toml())?;
    }
    let run = run_suite_config(&file, &base, &options)?;
    print!("{}", format_report(&run.report));
    if let Some(dir) = &args.out_dir {
        eprintln!("wrote {}", dir.display());
    }
    Ok(())
}

fn report(input: &Path, csv: Option<PathBuf>) -> Result<(), Error> {
    let records = read_records(&input.join("trials.csv"))?;
    let summary = SuiteReport::from_records(&records);
    print!("{}", format_report(&summary));
    write_summary_csv(&csv.unwrap_or_else(|| input.join("summary.csv")), &summary)?;
    Ok(())
}

fn forest(config: Option<&Path>, tier: DensityTier, seed: u64, out: &Path) -> Result<(), Error> {
    let file = load_config(config, &[])?;
    let env = generate_forest(&file.forest(tier), seed)?;
    save_environment(&env, out)?;
    eprintln!("{} cylinders -> {}", env.obstacles.len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Report { input, csv } => report(&input, csv),
        Command::Forest {
            config,
            density,
            seed,
            out,
        } => forest(config.as_deref(), density, seed, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidConfig { .. } | Error::Parse { .. } | Error::InvalidArgs(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
