//! Eigendecomposition of a community graph's Laplacian and the Dirichlet
//! energy of smooth versus rough signals.

use ndarray::Array1;
use sgmc::graphs::{dirichlet_vector, laplacian};
use sgmc::synthdata::{community_graph, even_sizes};
use sgmc::LaplacianSpectrum;

fn main() -> sgmc::Result<()> {
    let g = community_graph(&even_sizes(30, 3), 1.0, 1e-3, 0.1, 7)?;
    let spec = LaplacianSpectrum::of_graph(&g)?;
    println!("{} vertices, {} edges, mean weight {:.3}", g.n(), g.edge_count(), g.mean_edge_weight());
    println!("smallest eigenvalues: {:.4}", spec.eigenvalues.slice(ndarray::s![..6]));
    println!("reconstruction residual {:.2e}", spec.reconstruction_residual());

    // Three near-zero modes: one per community.
    let l = laplacian(&g);
    for k in [0, 2, 3, 29] {
        let v: Array1<f64> = spec.eigenvectors.column(k).to_owned();
        println!("eigenvector {k:>2}: energy {:.4}", dirichlet_vector(&l.view(), &v.view())?);
    }
    Ok(())
}
