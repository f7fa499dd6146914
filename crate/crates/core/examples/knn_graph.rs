//! Gaussian-weighted k-nearest-neighbour graph on random features.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sgmc::graphs::build_knn_graph;
use sgmc::LaplacianSpectrum;

fn main() -> sgmc::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let features = Array2::from_shape_fn((60, 5), |_| StandardNormal.sample(&mut rng));
    for k in [2, 5, 10] {
        let g = build_knn_graph(&features.view(), k, 1.0)?;
        let spec = LaplacianSpectrum::of_graph(&g)?;
        let components = spec.eigenvalues.iter().filter(|&&l| l < 1e-9).count();
        println!(
            "k = {k:>2}: {:>3} edges, mean weight {:.3}, {components} connected component(s), λ_max {:.3}",
            g.edge_count(),
            g.mean_edge_weight(),
            spec.eigenvalues[g.n() - 1]
        );
    }
    Ok(())
}
