//! Drug–target style cross-validation on a small synthetic interaction
//! matrix whose similarity graphs encode the interaction blocks.

use ndarray::Array2;
use sgmc::experiment::{dti_fold, mean_std, ExperimentConfig, Problem};
use sgmc::metrics::{dti_splits, CvScheme};
use sgmc::synthdata::{community_graph, even_sizes};
use sgmc::{LaplacianSpectrum, MaskedMatrix};

fn main() -> sgmc::Result<()> {
    let (m, n) = (24, 18);
    let drugs = community_graph(&even_sizes(m, 3), 1.0, 0.01, 0.2, 1)?;
    let targets = community_graph(&even_sizes(n, 3), 1.0, 0.01, 0.2, 2)?;
    // Drugs in block b bind targets in block b.
    let interactions = Array2::from_shape_fn((m, n), |(i, j)| if i * 3 / m == j * 3 / n { 1.0 } else { 0.0 });
    let problem = Problem {
        train: MaskedMatrix::fully_observed(interactions)?,
        test: None,
        row_spectrum: LaplacianSpectrum::of_graph(&drugs)?,
        col_spectrum: LaplacianSpectrum::of_graph(&targets)?,
        row_graph: drugs,
        col_graph: targets,
        truth: None,
        input_hash: String::new(),
    };
    let mut cfg = ExperimentConfig::default();
    cfg.model.p_max = 10;
    cfg.model.q_max = 10;
    cfg.train.learning_rate = 1e-2;
    cfg.train.weights.mu_r = 0.01;
    cfg.train.weights.mu_c = 0.01;
    cfg.train.max_iters = 2000;

    for scheme in CvScheme::ALL {
        let mut aucs = Vec::new();
        let mut rmses = Vec::new();
        for (fold, masks) in dti_splits((m, n), scheme, 5, 0)?.iter().enumerate() {
            let row = dti_fold(&cfg, &problem, scheme, fold, 0, masks)?;
            aucs.extend(row.auc);
            rmses.extend(row.rmse);
        }
        let (a, sa) = mean_std(&aucs);
        let (r, sr) = mean_std(&rmses);
        println!("{scheme}: AUC {a:.3} ± {sa:.3}   RMSE {r:.3} ± {sr:.3}");
    }
    Ok(())
}
