use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sgmc::experiment::{self, ExperimentConfig};
use sgmc::{Error, Result};

#[derive(Parser)]
#[command(name = "sgmc", version, about = "Geometric matrix completion experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment file; built-in defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the top-level seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default `$SGMC_OUT_DIR`, then `runs`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for grid commands.
    #[arg(long)]
    threads: Option<usize>,
    /// `key.path=value` override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and export it.
    SynthGen(Common),
    /// Train one model.
    Train(Common),
    /// Score a saved model on the configured test set.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
    },
    /// Grid over init scale, mu, rho and p_max.
    Sweep(Common),
    /// Cold-start grid over N_c x N_r.
    ColdStart(Common),
    /// Adjacency-noise grid.
    NoisyGraph(Common),
    /// Drug-target cross-validation.
    DtiCv(Common),
}

fn setup(c: &Common) -> Result<(ExperimentConfig, PathBuf)> {
    let mut sets = c.sets.clone();
    if let Some(seed) = c.seed {
        sets.push(format!("seed={seed}"));
    }
    let cfg = match &c.config {
        Some(path) => ExperimentConfig::load(path, &sets)?,
        None => ExperimentConfig::from_toml_str("", &sets)?,
    };
    if let Some(n) = c.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok((cfg, experiment::output_root(c.out.as_deref())))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SynthGen(c) => {
            let (cfg, out) = setup(&c)?;
            experiment::synth_gen(&cfg, &out)?;
        }
        Command::Train(c) => {
            let (cfg, out) = setup(&c)?;
            let (run, _) = experiment::train_command(&cfg, &out)?;
            println!(
                "{}: {} iterations, test rmse {}, effective rank {:.3}",
                run.run_id,
                run.outcome.iterations,
                run.test_rmse.map_or("n/a".into(), |r| format!("{r:.6}")),
                run.effective_rank
            );
        }
        Command::Eval { common, model } => {
            let (cfg, out) = setup(&common)?;
            experiment::eval_command(&cfg, &model, &out)?;
        }
        Command::Sweep(c) => {
            let (cfg, out) = setup(&c)?;
            print_rows(&experiment::sweep_command(&cfg, &out)?);
        }
        Command::ColdStart(c) => {
            let (cfg, out) = setup(&c)?;
            print_rows(&experiment::cold_start_command(&cfg, &out)?);
        }
        Command::NoisyGraph(c) => {
            let (cfg, out) = setup(&c)?;
            print_rows(&experiment::noisy_graph_command(&cfg, &out)?);
        }
        Command::DtiCv(c) => {
            let (cfg, out) = setup(&c)?;
            experiment::dti_cv_command(&cfg, &out)?;
        }
    }
    Ok(())
}

fn print_rows(rows: &[sgmc::metrics::MetricRow]) {
    for r in rows {
        println!("{} rmse {}", r.run_id, r.rmse.map_or("n/a".into(), |v| format!("{v:.6}")));
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
