//! Cold start: the 100 sparsest users keep at most 5 training ratings.
//! Graph side information carries SGMC where DMF has nothing to go on.

use sgmc::experiment::{load_problem, run_training, synthetic_netflix, Problem};
use sgmc::seeding::stream_seed;
use sgmc::synthdata::cold_start_subset;
use sgmc::Variant;

fn main() -> sgmc::Result<()> {
    let base = synthetic_netflix(Variant::Sgmc);
    let problem = load_problem(&base.data, base.seed)?;
    let train = cold_start_subset(&problem.train, 100, 5, stream_seed(base.seed, "cold-start"))?;
    println!("training ratings {} -> {}", problem.train.count(), train.count());
    let cold = Problem { train, ..problem };
    let variants: &[Variant] = if std::env::args().any(|a| a == "--with-dmf") {
        &[Variant::Sgmc, Variant::Dmf]
    } else {
        &[Variant::Sgmc]
    };
    for &v in variants {
        let cfg = synthetic_netflix(v);
        let run = run_training(&cfg, &cold, v.name())?;
        println!("{:<5} test rmse {:.5}", v.name(), run.test_rmse.unwrap_or(f64::NAN));
    }
    Ok(())
}
