//! Degradation of SGMC as Gaussian noise is added to both graphs' edge
//! weights, against the graph-free DMF baseline.

use sgmc::experiment::{load_problem, noisy_problem, run_training, synthetic_netflix};
use sgmc::Variant;

fn main() -> sgmc::Result<()> {
    let cfg = synthetic_netflix(Variant::Sgmc);
    let problem = load_problem(&cfg.data, cfg.seed)?;
    for level in [0.0, 0.1, 0.5, 2.0] {
        let noisy = noisy_problem(&problem, level, cfg.seed)?;
        let run = run_training(&cfg, &noisy, &format!("noise={level}"))?;
        println!("noise {level:>3} x mean weight: test rmse {:.5}", run.test_rmse.unwrap_or(f64::NAN));
    }
    if std::env::args().any(|a| a == "--with-dmf") {
        let dmf = synthetic_netflix(Variant::Dmf);
        let run = run_training(&dmf, &problem, "dmf")?;
        println!("dmf baseline: test rmse {:.5}", run.test_rmse.unwrap_or(f64::NAN));
    }
    Ok(())
}
