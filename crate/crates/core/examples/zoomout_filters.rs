//! SGMC-Z: the data term is averaged over a bank of low-pass filters
//! `P[:, :p] C[:p, :q] Q[:, :q]ᵀ`, pushing signal into the leading spectral
//! coefficients.

use sgmc::experiment::{build_model, load_problem, ModelConfig};
use sgmc::metrics::rmse;
use sgmc::synthdata::CommunityBenchmark;
use sgmc::{train, LossWeights, SpectralFilterBank, TrainConfig, Variant};

fn main() -> sgmc::Result<()> {
    let bench = CommunityBenchmark {
        rows: 60,
        cols: 80,
        rank: 5,
        row_communities: 5,
        col_communities: 5,
        density: 0.2,
        ..Default::default()
    };
    let problem = load_problem(&sgmc::experiment::DataConfig::Community(bench), 0)?;
    let bank = SpectralFilterBank::new(40, 40, 3, 3)?;
    println!("{} filters: rows {:?}", bank.len(), bank.row_indices());

    let model_cfg = ModelConfig {
        variant: Variant::SgmcZ,
        p_max: 40,
        q_max: 40,
        p_skip: 3,
        q_skip: 3,
        trainable: vec!["P".into(), "C".into()],
    };
    let model = build_model(&model_cfg, 1.0, &problem)?;
    let config = TrainConfig {
        learning_rate: 2e-4,
        weights: LossWeights { mu_r: 0.01, mu_c: 0.01, rho_r: 0.01, rho_c: 0.0 },
        max_iters: 3000,
        ..Default::default()
    };
    let out = train(model, &problem.train, &config, problem.test.as_ref())?;
    let test = problem.test.as_ref().expect("synthetic data has a test set");
    for p in [1, 4, 10, 40] {
        let x = out.model.filtered_product(p, p);
        let r = rmse(&x.view(), &test.values().view(), &test.mask().view())?;
        println!("filter {p:>2}x{p:<2} test rmse {r:.4}");
    }
    println!("{} iterations, converged {}", out.iterations, out.converged);
    Ok(())
}
