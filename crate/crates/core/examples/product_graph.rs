//! The Laplacian of a Cartesian product graph has every pairwise sum of the
//! factor eigenvalues as its spectrum.

use sgmc::graphs::{eigendecompose, laplacian, product_laplacian};
use sgmc::WeightedGraph;

fn main() -> sgmc::Result<()> {
    let path = WeightedGraph::from_edges(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)])?;
    let cycle = WeightedGraph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)])?;
    let (l1, l2) = (laplacian(&path), laplacian(&cycle));
    let a = eigendecompose(l1.clone())?;
    let b = eigendecompose(l2.clone())?;
    let prod = eigendecompose(product_laplacian(&l1.view(), &l2.view()))?;

    let mut sums: Vec<f64> = a.eigenvalues.iter().flat_map(|x| b.eigenvalues.iter().map(move |y| x + y)).collect();
    sums.sort_by(f64::total_cmp);
    let worst = sums
        .iter()
        .zip(prod.eigenvalues.iter())
        .map(|(s, p)| (s - p).abs())
        .fold(0.0, f64::max);
    println!("path spectrum  {:.4}", a.eigenvalues);
    println!("cycle spectrum {:.4}", b.eigenvalues);
    println!("product spectrum {:.4}", prod.eigenvalues);
    println!("max |sorted sums - product| = {worst:.2e}");
    Ok(())
}
