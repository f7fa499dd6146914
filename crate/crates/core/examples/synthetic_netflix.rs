//! Community-graph benchmark: rank-10 band-limited ratings on 150 users ×
//! 200 items, 15% observed. Trains the variants named on the command line
//! (default `sgmc`), e.g. `cargo run --release --example synthetic_netflix -- sgmc fm dmf`.

use sgmc::experiment::{load_problem, run_training, synthetic_netflix};
use sgmc::metrics::effective_rank;
use sgmc::Variant;

fn main() -> sgmc::Result<()> {
    let mut variants: Vec<Variant> = std::env::args().skip(1).map(|a| a.parse()).collect::<sgmc::Result<_>>()?;
    if variants.is_empty() {
        variants.push(Variant::Sgmc);
    }
    for v in variants {
        let cfg = synthetic_netflix(v);
        let problem = load_problem(&cfg.data, cfg.seed)?;
        if let Some(truth) = &problem.truth {
            println!("ground truth effective rank {:.2}", effective_rank(&truth.view())?);
        }
        let t0 = std::time::Instant::now();
        let run = run_training(&cfg, &problem, &cfg.name)?;
        println!(
            "{:<7} test rmse {:.5}  effective rank {:.2}  {} iterations in {:.1?}",
            v.name(),
            run.test_rmse.unwrap_or(f64::NAN),
            run.effective_rank,
            run.outcome.iterations,
            t0.elapsed()
        );
    }
    Ok(())
}
