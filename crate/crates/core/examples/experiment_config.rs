//! Runs a TOML experiment file the way the `sgmc train` command does and
//! prints where the artifacts went.
//!
//! `cargo run --release --example experiment_config -- examples/configs/netflix_sgmc.toml`

use std::path::PathBuf;

use sgmc::experiment::{train_command, ExperimentConfig};

fn main() -> sgmc::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/configs/netflix_sgmc.toml")));
    let cfg = ExperimentConfig::load(&path, &["train.max_iters=2000".into()])?;
    let out = std::env::temp_dir().join(format!("sgmc-{}", cfg.name));
    let (run, artifacts) = train_command(&cfg, &out)?;
    println!("{} -> {}", run.run_id, out.display());
    for (file, hash) in &artifacts.files {
        println!("  {file:<14} {}", &hash[..12]);
    }
    println!("test rmse {:.5}", run.test_rmse.unwrap_or(f64::NAN));
    Ok(())
}
