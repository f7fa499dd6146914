//! Weighted graphs, combinatorial Laplacians and their spectra.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::linalg::{self, SymmetricEigen};

/// Undirected graph with nonnegative edge weights, stored as a dense
/// adjacency matrix with an exactly symmetric layout and a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    adjacency: Array2<f64>,
}

impl WeightedGraph {
    pub fn new(adjacency: Array2<f64>) -> Result<Self> {
        let (n, c) = adjacency.dim();
        if n != c {
            return Err(Error::InvalidGraph(format!("adjacency is {n}x{c}")));
        }
        for a in 0..n {
            if adjacency[[a, a]] != 0.0 {
                return Err(Error::InvalidGraph(format!("nonzero diagonal at {a}")));
            }
            for b in 0..n {
                let w = adjacency[[a, b]];
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::InvalidGraph(format!("weight {w} at ({a}, {b})")));
                }
                if w != adjacency[[b, a]] {
                    return Err(Error::InvalidGraph(format!("asymmetric at ({a}, {b})")));
                }
            }
        }
        Ok(Self { adjacency })
    }

    /// Graph without edges; its Laplacian is zero and its basis the identity.
    pub fn empty(n: usize) -> Self {
        Self {
            adjacency: Array2::zeros((n, n)),
        }
    }

    /// Builds a graph from `(a, b, weight)` triples. Both orientations of an
    /// edge may be listed; later entries overwrite earlier ones.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut adjacency = Array2::zeros((n, n));
        for &(a, b, w) in edges {
            if a >= n || b >= n {
                return Err(Error::IndexOutOfBounds {
                    row: a,
                    col: b,
                    rows: n,
                    cols: n,
                });
            }
            if a == b {
                if w != 0.0 {
                    return Err(Error::InvalidGraph(format!("self loop at {a}")));
                }
                continue;
            }
            adjacency[[a, b]] = w;
            adjacency[[b, a]] = w;
        }
        Self::new(adjacency)
    }

    pub fn n(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn adjacency(&self) -> &Array2<f64> {
        &self.adjacency
    }

    /// Edges `(a, b, w)` with `a < b` and `w > 0`, in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.n();
        (0..n).flat_map(move |a| {
            ((a + 1)..n).filter_map(move |b| {
                let w = self.adjacency[[a, b]];
                (w > 0.0).then_some((a, b, w))
            })
        })
    }

    pub fn edge_count(&self) -> usize {
        self.edges().count()
    }

    /// Mean weight over existing edges, zero for an edgeless graph.
    pub fn mean_edge_weight(&self) -> f64 {
        let (count, total) = self
            .edges()
            .fold((0usize, 0.0), |(c, t), (_, _, w)| (c + 1, t + w));
        if count == 0 {
            0.0
        } else {
            total / count as f64
        }
    }
}

/// Combinatorial Laplacian `L = D − Ω`.
pub fn laplacian(g: &WeightedGraph) -> Array2<f64> {
    let mut l = -g.adjacency();
    for (a, row) in g.adjacency().rows().into_iter().enumerate() {
        l[[a, a]] = row.sum();
    }
    l
}

/// A Laplacian together with its ascending eigenvalues and orthonormal
/// eigenvector basis (as columns).
#[derive(Debug, Clone)]
pub struct LaplacianSpectrum {
    pub laplacian: Array2<f64>,
    pub eigenvalues: Array1<f64>,
    pub eigenvectors: Array2<f64>,
}

impl LaplacianSpectrum {
    /// Stand-in for a missing graph: zero Laplacian, identity basis.
    pub fn absent(n: usize) -> Self {
        Self {
            laplacian: Array2::zeros((n, n)),
            eigenvalues: Array1::zeros(n),
            eigenvectors: Array2::eye(n),
        }
    }

    pub fn of_graph(g: &WeightedGraph) -> Result<Self> {
        eigendecompose(laplacian(g))
    }

    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `‖L − ΦΛΦᵀ‖_F / ‖L‖_F` (absolute when `L = 0`).
    pub fn reconstruction_residual(&self) -> f64 {
        let rec = linalg::reconstruct_symmetric(&self.eigenvalues, &self.eigenvectors);
        let diff = linalg::frobenius(&(&self.laplacian - &rec).view());
        let norm = linalg::frobenius(&self.laplacian.view());
        if norm == 0.0 {
            diff
        } else {
            diff / norm
        }
    }
}

pub fn eigendecompose(laplacian: Array2<f64>) -> Result<LaplacianSpectrum> {
    let SymmetricEigen { values, vectors } = linalg::symmetric_eigen(&laplacian.view())?;
    Ok(LaplacianSpectrum {
        laplacian,
        eigenvalues: values,
        eigenvectors: vectors,
    })
}

/// Kronecker sum `L1 ⊗ I + I ⊗ L2`, the Laplacian of the Cartesian product
/// graph. Vertex `(a, b)` maps to index `a·n + b`, which matches row-major
/// vectorisation of an `m×n` signal.
pub fn product_laplacian(l1: &ArrayView2<'_, f64>, l2: &ArrayView2<'_, f64>) -> Array2<f64> {
    let m = l1.nrows();
    let n = l2.nrows();
    let mut out = Array2::zeros((m * n, m * n));
    for a in 0..m {
        for a2 in 0..m {
            let w = l1[[a, a2]];
            if w != 0.0 {
                for b in 0..n {
                    out[[a * n + b, a2 * n + b]] += w;
                }
            }
        }
        for b in 0..n {
            for b2 in 0..n {
                out[[a * n + b, a * n + b2]] += l2[[b, b2]];
            }
        }
    }
    out
}

/// Gaussian-kernel k-nearest-neighbour graph, symmetrised by union.
///
/// Neighbours are ranked by squared Euclidean distance with ties resolved by
/// the lower index.
pub fn build_knn_graph(features: &ArrayView2<'_, f64>, k: usize, sigma: f64) -> Result<WeightedGraph> {
    let n = features.nrows();
    if k >= n {
        return Err(Error::DegenerateFeatures { k, n });
    }
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(Error::InvalidArgument(format!("kernel width {sigma} must be positive")));
    }
    let sq_dist = |a: usize, b: usize| -> f64 {
        features
            .row(a)
            .iter()
            .zip(features.row(b).iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum()
    };
    let denom = 2.0 * sigma * sigma;
    let mut adjacency = Array2::zeros((n, n));
    let mut candidates: Vec<(f64, usize)> = Vec::with_capacity(n);
    for a in 0..n {
        candidates.clear();
        candidates.extend((0..n).filter(|&b| b != a).map(|b| (sq_dist(a, b), b)));
        candidates.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        for &(d2, b) in candidates.iter().take(k) {
            let w = (-d2 / denom).exp();
            adjacency[[a, b]] = w;
            adjacency[[b, a]] = w;
        }
    }
    WeightedGraph::new(adjacency)
}

/// Adds i.i.d. `N(0, noise_std²)` to every existing edge (upper triangle,
/// row-major order), drops edges that turn negative and mirrors the result.
pub fn perturb_graph(g: &WeightedGraph, noise_std: f64, seed: u64) -> Result<WeightedGraph> {
    if !noise_std.is_finite() || noise_std < 0.0 {
        return Err(Error::InvalidArgument(format!("noise std {noise_std}")));
    }
    if noise_std == 0.0 {
        return Ok(g.clone());
    }
    let normal = Normal::new(0.0, noise_std).expect("finite positive std");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = g.n();
    let mut adjacency = g.adjacency().clone();
    for a in 0..n {
        for b in (a + 1)..n {
            let w = adjacency[[a, b]];
            if w > 0.0 {
                let noisy = (w + normal.sample(&mut rng)).max(0.0);
                adjacency[[a, b]] = noisy;
                adjacency[[b, a]] = noisy;
            }
        }
    }
    WeightedGraph::new(adjacency)
}

/// Dirichlet energy `xᵀ L x`.
pub fn dirichlet_vector(l: &ArrayView2<'_, f64>, x: &ArrayView1<'_, f64>) -> Result<f64> {
    if l.nrows() != x.len() || l.ncols() != x.len() {
        return Err(Error::ShapeMismatch(format!(
            "Laplacian {}x{} against vector of length {}",
            l.nrows(),
            l.ncols(),
            x.len()
        )));
    }
    Ok(x.dot(&l.dot(x)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;

    fn path(n: usize) -> WeightedGraph {
        let edges: Vec<_> = (0..n - 1).map(|a| (a, a + 1, 1.0)).collect();
        WeightedGraph::from_edges(n, &edges).unwrap()
    }

    fn random_graph(n: usize, seed: u64) -> WeightedGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut adj = Array2::zeros((n, n));
        for a in 0..n {
            for b in (a + 1)..n {
                if rng.random_bool(0.4) {
                    let w = rng.random_range(0.1..2.0);
                    adj[[a, b]] = w;
                    adj[[b, a]] = w;
                }
            }
        }
        WeightedGraph::new(adj).unwrap()
    }

    #[test]
    fn laplacian_by_hand() {
        assert_eq!(
            laplacian(&path(3)),
            array![[1.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]]
        );
        assert_eq!(laplacian(&WeightedGraph::empty(4)), Array2::<f64>::zeros((4, 4)));
        let g = WeightedGraph::from_edges(2, &[(0, 1, 2.0)]).unwrap();
        assert_eq!(laplacian(&g), array![[2.0, -2.0], [-2.0, 2.0]]);
    }

    #[test]
    fn invalid_adjacency_is_rejected() {
        assert!(WeightedGraph::new(array![[0.0, 1.0], [0.5, 0.0]]).is_err());
        assert!(WeightedGraph::new(array![[0.0, -1.0], [-1.0, 0.0]]).is_err());
        assert!(WeightedGraph::new(array![[1.0, 0.0], [0.0, 0.0]]).is_err());
    }

    #[test]
    fn spectrum_invariants_on_random_graphs() {
        for seed in 0..10 {
            let spec = LaplacianSpectrum::of_graph(&random_graph(12, seed)).unwrap();
            assert!(spec.reconstruction_residual() <= 1e-10);
            assert!(spec.eigenvalues[0].abs() <= 1e-9);
            assert!(linalg::orthonormality_defect(&spec.eigenvectors.view()) <= 1e-10);
        }
    }

    #[test]
    fn product_of_two_edges() {
        let l = laplacian(&WeightedGraph::from_edges(2, &[(0, 1, 1.0)]).unwrap());
        let prod = product_laplacian(&l.view(), &l.view());
        let spec = eigendecompose(prod).unwrap();
        for (got, want) in spec.eigenvalues.iter().zip([0.0, 2.0, 2.0, 4.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn product_with_zero_factor_is_block_diagonal() {
        let l2 = laplacian(&path(3));
        let prod = product_laplacian(&Array2::zeros((2, 2)).view(), &l2.view());
        for blk in 0..2 {
            for i in 0..3 {
                for j in 0..3 {
                    assert_eq!(prod[[blk * 3 + i, blk * 3 + j]], l2[[i, j]]);
                    assert_eq!(prod[[blk * 3 + i, (1 - blk) * 3 + j]], 0.0);
                }
            }
        }
    }

    #[test]
    fn knn_on_a_line() {
        let f = array![[0.0], [1.0], [10.0]];
        let g = build_knn_graph(&f.view(), 1, 1.0).unwrap();
        let a = g.adjacency();
        assert!((a[[0, 1]] - (-0.5f64).exp()).abs() < 1e-15);
        assert!((a[[1, 2]] - (-40.5f64).exp()).abs() < 1e-30);
        assert_eq!(a[[0, 2]], 0.0);
        assert_eq!(g.edge_count(), 2);
    }

    #[test]
    fn knn_identical_features_and_bad_k() {
        let f = Array2::from_elem((4, 2), 3.0);
        let g = build_knn_graph(&f.view(), 1, 1.0).unwrap();
        assert!(g.edges().all(|(_, _, w)| w == 1.0));
        assert!(g.edge_count() >= 2);
        assert!(matches!(
            build_knn_graph(&f.view(), 4, 1.0),
            Err(Error::DegenerateFeatures { k: 4, n: 4 })
        ));
    }

    #[test]
    fn perturbation_rules() {
        let g = random_graph(10, 1);
        assert_eq!(perturb_graph(&g, 0.0, 9).unwrap(), g);
        let a = perturb_graph(&g, 0.5, 42).unwrap();
        let b = perturb_graph(&g, 0.5, 42).unwrap();
        assert_eq!(a, b);
        // no new edges appear
        for (x, y, _) in a.edges() {
            assert!(g.adjacency()[[x, y]] > 0.0);
        }
        let huge = perturb_graph(&g, 1e6, 3).unwrap();
        assert!(huge.edge_count() < g.edge_count());
    }

    #[test]
    fn negative_weight_edge_is_removed() {
        let g = WeightedGraph::from_edges(2, &[(0, 1, 1e-9)]).unwrap();
        // Search seeds until the noise pushes the single edge below zero.
        let seed = (0..100)
            .find(|&s| perturb_graph(&g, 1.0, s).unwrap().edge_count() == 0)
            .expect("some seed yields negative noise");
        let p = perturb_graph(&g, 1.0, seed).unwrap();
        assert_eq!(p.adjacency()[[0, 1]], 0.0);
        assert_eq!(p.adjacency()[[1, 0]], 0.0);
    }

    #[test]
    fn dirichlet_examples() {
        let g = WeightedGraph::from_edges(2, &[(0, 1, 2.0)]).unwrap();
        let l = laplacian(&g);
        assert_eq!(dirichlet_vector(&l.view(), &array![1.0, 3.0].view()).unwrap(), 8.0);
        let lp = laplacian(&random_graph(7, 4));
        let c = Array1::from_elem(7, 2.5);
        assert!(dirichlet_vector(&lp.view(), &c.view()).unwrap().abs() < 1e-12);
        let spec = eigendecompose(lp.clone()).unwrap();
        for i in 0..7 {
            let e = dirichlet_vector(&lp.view(), &spec.eigenvectors.column(i)).unwrap();
            assert!((e - spec.eigenvalues[i]).abs() < 1e-10);
        }
        assert!(dirichlet_vector(&lp.view(), &c.slice(ndarray::s![..3])).is_err());
    }
}
