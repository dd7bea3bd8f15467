use std::path::PathBuf;
use std::process::ExitCode;

use cellfree_thp::config::{parse_config, serialize_config};
use cellfree_thp::montecarlo::{run_experiment, ExperimentConfig, Scheme};
use cellfree_thp::output::{write_results, ResultRecord, RunManifest};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "cfthp",
    version,
    about = "Cell-free RS-THP ergodic sum-rate simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        exec: ExecArgs,
    },
    /// Run a preset sweep, optionally on top of a base config.
    Sweep {
        preset: Preset,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        exec: ExecArgs,
    },
    /// Parse and validate a config file, then print it with defaults filled in.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct ExecArgs {
    /// Parent directory for the run directory.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(long, env = "CFTHP_THREADS", default_value_t = 0)]
    threads: usize,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// ESR against SNR.
    Fig1,
    /// ESR against CSIT error variance at 20 dB.
    Fig2,
    /// ESR against the number of branches.
    Fig3,
}

fn apply_preset(mut cfg: ExperimentConfig, preset: Preset) -> ExperimentConfig {
    match preset {
        Preset::Fig1 => {
            cfg.sigma_e2 = vec![0.15];
            cfg.snr_db = (0..=6).map(|i| 5.0 * i as f64).collect();
            cfg.schemes = vec![
                Scheme::LinearZf,
                Scheme::RsLinearZf,
                Scheme::RsCthp,
                Scheme::RsDthp,
            ];
        }
        Preset::Fig2 => {
            cfg.snr_db = vec![20.0];
            cfg.sigma_e2 = vec![0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3];
            cfg.schemes = vec![
                Scheme::LinearZf,
                Scheme::RsLinearZf,
                Scheme::RsCthp,
                Scheme::RsDthp,
            ];
        }
        Preset::Fig3 => {
            cfg.sigma_e2 = vec![0.15];
            cfg.snr_db = (0..=6).map(|i| 5.0 * i as f64).collect();
            cfg.branch_counts = vec![1, 2, 3, 4];
            cfg.schemes = vec![Scheme::MbRsCthp, Scheme::MbRsDthp];
        }
    }
    cfg
}

fn execute(mut cfg: ExperimentConfig, exec: &ExecArgs) -> Result<(), String> {
    if let Some(seed) = exec.seed {
        cfg.master_seed = seed;
    }
    cfg.validate()
        .map_err(|e| format!("invalid configuration: {e}"))?;
    let started = chrono::Utc::now();
    let output = run_experiment(&cfg, exec.threads).map_err(|e| e.to_string())?;
    let manifest = RunManifest::new(&cfg, &output, started);
    let records: Vec<ResultRecord> = output.rows.iter().map(ResultRecord::from).collect();
    let dir = write_results(&records, &manifest, &exec.out).map_err(|e| e.to_string())?;
    let retries: usize = output.grid_stats.iter().map(|g| g.retries).sum();
    eprintln!(
        "{} rows, {retries} resampled trials, {:.1} s",
        records.len(),
        output.wall_time_s
    );
    println!("{}", dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, exec } => parse_config(&config)
            .map_err(|e| e.to_string())
            .and_then(|cfg| execute(cfg, &exec)),
        Command::Sweep {
            preset,
            config,
            exec,
        } => config
            .map_or_else(|| Ok(ExperimentConfig::default()), parse_config)
            .map_err(|e| e.to_string())
            .and_then(|cfg| execute(apply_preset(cfg, preset), &exec)),
        Command::Validate { config } => parse_config(&config)
            .map(|cfg| print!("{}", serialize_config(&cfg)))
            .map_err(|e| e.to_string()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
