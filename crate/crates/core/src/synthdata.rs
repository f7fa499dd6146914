//! Synthetic graphs, band-limited ground truths, sampling masks and the
//! cold-start and histogram-matching transforms.

use ndarray::{s, Array2, ArrayView2};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::{build_knn_graph, LaplacianSpectrum, WeightedGraph};
use crate::objectives::MaskedMatrix;
use crate::seeding::stream_seed;

/// Dense block graph: weight `w_in·(1 + U(−jitter, jitter))` inside each
/// community and `w_out` between communities.
pub fn community_graph(sizes: &[usize], w_in: f64, w_out: f64, jitter: f64, seed: u64) -> Result<WeightedGraph> {
    if !(w_in > w_out && w_out >= 0.0 && w_in.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "community weights need w_in > w_out >= 0, got {w_in}, {w_out}"
        )));
    }
    if !(0.0..1.0).contains(&jitter) {
        return Err(Error::InvalidArgument(format!("jitter {jitter} outside [0, 1)")));
    }
    let n: usize = sizes.iter().sum();
    let label: Vec<usize> = sizes.iter().enumerate().flat_map(|(c, &k)| std::iter::repeat_n(c, k)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adj = Array2::zeros((n, n));
    for a in 0..n {
        for b in (a + 1)..n {
            let w = if label[a] == label[b] {
                let u: f64 = if jitter > 0.0 { rng.random_range(-jitter..jitter) } else { 0.0 };
                w_in * (1.0 + u)
            } else {
                w_out
            };
            adj[[a, b]] = w;
            adj[[b, a]] = w;
        }
    }
    WeightedGraph::new(adj)
}

/// `n` items split into `k` communities whose sizes differ by at most one.
pub fn even_sizes(n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|c| n / k + usize::from(c < n % k)).collect()
}

/// Which product-graph frequencies carry the random coefficients.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandOrdering {
    /// The leading `r×r` block of factor frequencies.
    #[default]
    LeadingBlock,
    /// The `r²` smallest sums `λ_i + μ_j`.
    CartesianSum,
}

/// Random band-limited matrix `Φ R Ψᵀ` whose coefficient matrix `R` is
/// standard Gaussian on the selected frequencies and zero elsewhere.
pub fn bandlimited_matrix(
    spec_r: &LaplacianSpectrum,
    spec_c: &LaplacianSpectrum,
    rank: usize,
    ordering: BandOrdering,
    seed: u64,
) -> Result<Array2<f64>> {
    let (m, n) = (spec_r.n(), spec_c.n());
    if rank == 0 || rank > m.min(n) {
        return Err(Error::RankTooLarge {
            rank,
            max: m.min(n),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs = match ordering {
        BandOrdering::LeadingBlock => {
            let mut c = Array2::zeros((m, n));
            for i in 0..rank {
                for j in 0..rank {
                    c[[i, j]] = StandardNormal.sample(&mut rng);
                }
            }
            c
        }
        BandOrdering::CartesianSum => {
            let mut pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
            let freq = |&(i, j): &(usize, usize)| spec_r.eigenvalues[i] + spec_c.eigenvalues[j];
            pairs.sort_by(|a, b| freq(a).total_cmp(&freq(b)).then(a.cmp(b)));
            let mut c = Array2::zeros((m, n));
            for &ix in &pairs[..rank * rank] {
                c[ix] = StandardNormal.sample(&mut rng);
            }
            c
        }
    };
    Ok(spec_r.eigenvectors.dot(&coeffs).dot(&spec_c.eigenvectors.t()))
}

/// Binary mask with exactly `round(density·m·n)` ones at uniformly random
/// positions.
pub fn sample_mask(m: usize, n: usize, density: f64, seed: u64) -> Result<Array2<f64>> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::InvalidArgument(format!("density {density} outside (0, 1]")));
    }
    let total = m * n;
    let count = (density * total as f64).round() as usize;
    if count == 0 {
        return Err(Error::TooFewObservations { needed: 1, found: 0 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = Array2::zeros((m, n));
    for k in index::sample(&mut rng, total, count.min(total)) {
        mask[[k / n, k % n]] = 1.0;
    }
    Ok(mask)
}

/// Keeps at most `n_r` random ratings of each of the `n_c` users with the
/// fewest ratings (ties broken by index).
pub fn cold_start_subset(ratings: &MaskedMatrix, n_c: usize, n_r: usize, seed: u64) -> Result<MaskedMatrix> {
    let (m, n) = ratings.shape();
    if n_c > m {
        return Err(Error::InvalidArgument(format!("N_c = {n_c} exceeds {m} users")));
    }
    let counts = ratings.row_counts();
    let mut users: Vec<usize> = (0..m).collect();
    users.sort_by_key(|&u| (counts[u], u));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = ratings.mask().clone();
    for &u in &users[..n_c] {
        let mut observed: Vec<usize> = (0..n).filter(|&j| mask[[u, j]] == 1.0).collect();
        if observed.len() <= n_r {
            continue;
        }
        observed.shuffle(&mut rng);
        for &j in &observed[n_r..] {
            mask[[u, j]] = 0.0;
        }
    }
    ratings.with_mask(mask)
}

/// Monotone remap of `x` onto the reference histogram: entries sorted by
/// value (ties by row-major position) receive the sorted reference levels.
/// When the reference size differs from `m·n` each level's count is
/// rescaled by largest remainders.
pub fn histogram_match(x: &ArrayView2<'_, f64>, reference: &[f64]) -> Result<Array2<f64>> {
    if reference.is_empty() {
        return Err(Error::InvalidArgument("empty reference histogram".into()));
    }
    if reference.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite reference value".into()));
    }
    let (m, n) = x.dim();
    let total = m * n;
    let mut levels: Vec<f64> = reference.to_vec();
    levels.sort_by(f64::total_cmp);
    let targets = if levels.len() == total {
        levels
    } else {
        rescale_histogram(&levels, total)
    };
    let flat: Vec<f64> = x.iter().cloned().collect();
    let mut order: Vec<usize> = (0..total).collect();
    order.sort_by(|&a, &b| flat[a].total_cmp(&flat[b]).then(a.cmp(&b)));
    let mut out = Array2::zeros((m, n));
    for (rank, &k) in order.iter().enumerate() {
        out[[k / n, k % n]] = targets[rank];
    }
    Ok(out)
}

/// Sorted sample of size `total` with level frequencies proportional to
/// those of the sorted `levels`.
fn rescale_histogram(levels: &[f64], total: usize) -> Vec<f64> {
    let mut distinct: Vec<(f64, usize)> = Vec::new();
    for &v in levels {
        match distinct.last_mut() {
            Some((last, c)) if *last == v => *c += 1,
            _ => distinct.push((v, 1)),
        }
    }
    let scale = total as f64 / levels.len() as f64;
    let mut counts: Vec<usize> = distinct.iter().map(|&(_, c)| (c as f64 * scale).floor() as usize).collect();
    let mut short = total - counts.iter().sum::<usize>();
    let mut by_remainder: Vec<usize> = (0..distinct.len()).collect();
    by_remainder.sort_by(|&a, &b| {
        let ra = distinct[a].1 as f64 * scale - counts[a] as f64;
        let rb = distinct[b].1 as f64 * scale - counts[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in by_remainder.iter().cycle() {
        if short == 0 {
            break;
        }
        counts[i] += 1;
        short -= 1;
    }
    distinct
        .iter()
        .zip(&counts)
        .flat_map(|(&(v, _), &c)| std::iter::repeat_n(v, c))
        .collect()
}

/// `Φ_k Φ_kᵀ X Ψ_k Ψ_kᵀ` with the first `k` eigenvectors of each factor.
pub fn project_bandlimit(
    x: &ArrayView2<'_, f64>,
    spec_r: &LaplacianSpectrum,
    spec_c: &LaplacianSpectrum,
    k: usize,
) -> Result<Array2<f64>> {
    let (m, n) = x.dim();
    if spec_r.n() != m || spec_c.n() != n {
        return Err(Error::ShapeMismatch(format!(
            "spectra of size {}/{} for a {m}x{n} matrix",
            spec_r.n(),
            spec_c.n()
        )));
    }
    if k > m.min(n) {
        return Err(Error::RankTooLarge { rank: k, max: m.min(n) });
    }
    let phi = spec_r.eigenvectors.slice(s![.., ..k]);
    let psi = spec_c.eigenvectors.slice(s![.., ..k]);
    let coeffs = phi.t().dot(x).dot(&psi);
    Ok(phi.dot(&coeffs).dot(&psi.t()))
}

/// A generated completion problem: graphs, ground truth and a train/test
/// split of its entries.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub row_graph: WeightedGraph,
    pub col_graph: WeightedGraph,
    pub row_spectrum: LaplacianSpectrum,
    pub col_spectrum: LaplacianSpectrum,
    pub truth: Array2<f64>,
    pub train: MaskedMatrix,
    pub test: MaskedMatrix,
}

impl SyntheticDataset {
    /// Same problem with a different training mask; the test set is kept.
    pub fn with_train_mask(&self, mask: Array2<f64>) -> Result<Self> {
        Ok(Self {
            train: self.train.with_mask(mask)?,
            ..self.clone()
        })
    }
}

/// Community-graph band-limited benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommunityBenchmark {
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
    pub density: f64,
    pub row_communities: usize,
    pub col_communities: usize,
    pub w_in: f64,
    pub w_out: f64,
    pub jitter: f64,
    pub ordering: BandOrdering,
}

impl Default for CommunityBenchmark {
    fn default() -> Self {
        Self {
            rows: 150,
            cols: 200,
            rank: 10,
            density: 0.15,
            row_communities: 10,
            col_communities: 10,
            w_in: 1.0,
            w_out: 1e-4,
            jitter: 0.1,
            ordering: BandOrdering::LeadingBlock,
        }
    }
}

impl CommunityBenchmark {
    /// Graphs, spectra and ground truth; independent of the sampling mask.
    pub fn geometry(&self, seed: u64) -> Result<(WeightedGraph, WeightedGraph, LaplacianSpectrum, LaplacianSpectrum, Array2<f64>)> {
        let row_graph = community_graph(
            &even_sizes(self.rows, self.row_communities),
            self.w_in,
            self.w_out,
            self.jitter,
            stream_seed(seed, "row-graph"),
        )?;
        let col_graph = community_graph(
            &even_sizes(self.cols, self.col_communities),
            self.w_in,
            self.w_out,
            self.jitter,
            stream_seed(seed, "col-graph"),
        )?;
        let row_spectrum = LaplacianSpectrum::of_graph(&row_graph)?;
        let col_spectrum = LaplacianSpectrum::of_graph(&col_graph)?;
        let truth = bandlimited_matrix(&row_spectrum, &col_spectrum, self.rank, self.ordering, stream_seed(seed, "truth"))?;
        Ok((row_graph, col_graph, row_spectrum, col_spectrum, truth))
    }

    /// Full dataset: the mask samples the training entries and every other
    /// entry is a test entry.
    pub fn generate(&self, seed: u64) -> Result<SyntheticDataset> {
        let (row_graph, col_graph, row_spectrum, col_spectrum, truth) = self.geometry(seed)?;
        let mask = sample_mask(self.rows, self.cols, self.density, stream_seed(seed, "mask"))?;
        let test_mask = 1.0 - &mask;
        let train = MaskedMatrix::new(truth.clone(), mask)?;
        let test = MaskedMatrix::new(truth.clone(), test_mask)?;
        Ok(SyntheticDataset {
            row_graph,
            col_graph,
            row_spectrum,
            col_spectrum,
            truth,
            train,
            test,
        })
    }
}

/// Rating counts of the five levels of the 100k MovieLens release.
pub const ML100K_HISTOGRAM: [(f64, usize); 5] = [(1.0, 6110), (2.0, 11370), (3.0, 27145), (4.0, 34174), (5.0, 21201)];

/// Reference multiset built from `(level, count)` pairs.
pub fn histogram_levels(hist: &[(f64, usize)]) -> Vec<f64> {
    hist.iter().flat_map(|&(v, c)| std::iter::repeat_n(v, c)).collect()
}

/// Feature-graph rating benchmark: k-nearest-neighbour graphs on random
/// features, a Gaussian matrix projected onto the leading eigenvectors and
/// histogram-matched to rating levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureRatingBenchmark {
    pub rows: usize,
    pub cols: usize,
    pub feature_dim: usize,
    pub neighbours: usize,
    pub sigma: f64,
    pub projection_rank: usize,
    pub observed: usize,
    pub test_fraction: f64,
}

impl Default for FeatureRatingBenchmark {
    fn default() -> Self {
        Self {
            rows: 943,
            cols: 1682,
            feature_dim: 20,
            neighbours: 10,
            sigma: 1.0,
            projection_rank: 50,
            observed: 100_000,
            test_fraction: 0.2,
        }
    }
}

impl FeatureRatingBenchmark {
    pub fn generate(&self, reference: &[f64], seed: u64) -> Result<SyntheticDataset> {
        let features = |rows: usize, purpose: &str| {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, purpose));
            Array2::from_shape_fn((rows, self.feature_dim), |_| StandardNormal.sample(&mut rng))
        };
        let row_graph = build_knn_graph(&features(self.rows, "row-features").view(), self.neighbours, self.sigma)?;
        let col_graph = build_knn_graph(&features(self.cols, "col-features").view(), self.neighbours, self.sigma)?;
        let row_spectrum = LaplacianSpectrum::of_graph(&row_graph)?;
        let col_spectrum = LaplacianSpectrum::of_graph(&col_graph)?;
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, "truth"));
        let raw = Array2::from_shape_fn((self.rows, self.cols), |_| StandardNormal.sample(&mut rng));
        let smooth = project_bandlimit(&raw.view(), &row_spectrum, &col_spectrum, self.projection_rank)?;
        let truth = histogram_match(&smooth.view(), reference)?;

        let total = self.rows * self.cols;
        if self.observed == 0 || self.observed > total {
            return Err(Error::InvalidArgument(format!("{} observed of {total}", self.observed)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, "mask"));
        let picked = index::sample(&mut rng, total, self.observed).into_vec();
        let n_test = (self.test_fraction * picked.len() as f64).round() as usize;
        let mut train_mask = Array2::zeros((self.rows, self.cols));
        let mut test_mask = Array2::zeros((self.rows, self.cols));
        for (pos, k) in picked.into_iter().enumerate() {
            let target = if pos < n_test { &mut test_mask } else { &mut train_mask };
            target[[k / self.cols, k % self.cols]] = 1.0;
        }
        Ok(SyntheticDataset {
            train: MaskedMatrix::new(truth.clone(), train_mask)?,
            test: MaskedMatrix::new(truth.clone(), test_mask)?,
            row_graph,
            col_graph,
            row_spectrum,
            col_spectrum,
            truth,
        })
    }
}

/// Value counts of a matrix, keyed by exact value in ascending order.
pub fn value_histogram(x: &ArrayView2<'_, f64>) -> Vec<(f64, usize)> {
    let mut v: Vec<f64> = x.iter().cloned().collect();
    v.sort_by(f64::total_cmp);
    let mut out: Vec<(f64, usize)> = Vec::new();
    for x in v {
        match out.last_mut() {
            Some((last, c)) if *last == x => *c += 1,
            _ => out.push((x, 1)),
        }
    }
    out
}

/// Functional-map coefficients `Φᵀ X Ψ`.
pub fn coefficients(x: &ArrayView2<'_, f64>, spec_r: &LaplacianSpectrum, spec_c: &LaplacianSpectrum) -> Array2<f64> {
    spec_r.eigenvectors.t().dot(x).dot(&spec_c.eigenvectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::laplacian;
    use crate::linalg::singular_values;
    use crate::spectral::dirichlet_matrix;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest, ProptestConfig};

    #[test]
    fn single_community_is_complete() {
        let g = community_graph(&[3], 1.0, 0.0, 0.0, 0).unwrap();
        assert_eq!(g.adjacency(), &array![[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]]);
    }

    #[test]
    fn disconnected_communities_have_two_zero_modes() {
        let g = community_graph(&[4, 3], 1.0, 0.0, 0.1, 5).unwrap();
        let spec = LaplacianSpectrum::of_graph(&g).unwrap();
        let zeros = spec.eigenvalues.iter().filter(|v| v.abs() < 1e-10).count();
        assert_eq!(zeros, 2);
    }

    #[test]
    fn weak_links_give_small_fiedler_value() {
        let g = community_graph(&[5, 5], 1.0, 0.01, 0.1, 2).unwrap();
        let spec = LaplacianSpectrum::of_graph(&g).unwrap();
        let block = g.adjacency().slice(s![..5, ..5]).to_owned();
        let inner = LaplacianSpectrum::of_graph(&WeightedGraph::new(block).unwrap()).unwrap();
        assert!(spec.eigenvalues[1] < inner.eigenvalues[1]);
        assert!(community_graph(&[2], 1.0, 1.0, 0.0, 0).is_err());
    }

    #[test]
    fn jitter_stays_in_band() {
        let g = community_graph(&[6, 6], 2.0, 0.5, 0.1, 9).unwrap();
        for (a, b, w) in g.edges() {
            if a / 6 == b / 6 {
                assert!((1.8..2.2).contains(&w));
            } else {
                assert_eq!(w, 0.5);
            }
        }
    }

    fn spectra(seed: u64) -> (LaplacianSpectrum, LaplacianSpectrum) {
        let r = community_graph(&even_sizes(15, 3), 1.0, 0.01, 0.1, seed).unwrap();
        let c = community_graph(&even_sizes(20, 4), 1.0, 0.01, 0.1, seed + 1).unwrap();
        (LaplacianSpectrum::of_graph(&r).unwrap(), LaplacianSpectrum::of_graph(&c).unwrap())
    }

    #[test]
    fn rank_one_bandlimited_is_outer_product() {
        let (sr, sc) = spectra(0);
        let m = bandlimited_matrix(&sr, &sc, 1, BandOrdering::LeadingBlock, 4).unwrap();
        let sv = singular_values(&m.view()).unwrap();
        assert!(sv.iter().skip(1).all(|&s| s <= 1e-12 * sv[0]));
        let outer = sr.eigenvectors.column(0).insert_axis(ndarray::Axis(1)).dot(&sc.eigenvectors.column(0).insert_axis(ndarray::Axis(0)));
        let ratio = m[[0, 0]] / outer[[0, 0]];
        assert!((&m - &(outer * ratio)).iter().all(|v| v.abs() < 1e-12));
        assert!(matches!(
            bandlimited_matrix(&sr, &sc, 16, BandOrdering::LeadingBlock, 0),
            Err(Error::RankTooLarge { rank: 16, max: 15 })
        ));
    }

    #[test]
    fn default_benchmark_has_exact_rank() {
        let bench = CommunityBenchmark::default();
        let (_, _, sr, sc, m) = bench.geometry(1).unwrap();
        let sv = singular_values(&m.view()).unwrap();
        assert!(sv[9] > 1e-6 * sv[0]);
        assert!(sv[10] <= 1e-10 * sv[0]);
        let c = coefficients(&m.view(), &sr, &sc);
        let norm = crate::linalg::frobenius(&c.view());
        let mut outside = c.clone();
        outside.slice_mut(s![..10, ..10]).fill(0.0);
        assert!(crate::linalg::frobenius(&outside.view()) <= 1e-10 * norm);
    }

    #[test]
    fn bandlimited_energy_respects_rayleigh_bound() {
        for seed in 0..5 {
            let (sr, sc) = spectra(seed);
            let r = 4;
            let m = bandlimited_matrix(&sr, &sc, r, BandOrdering::LeadingBlock, seed).unwrap();
            let (er, ec) = dirichlet_matrix(&sr.laplacian.view(), &sc.laplacian.view(), &m.view()).unwrap();
            let s1 = singular_values(&m.view()).unwrap()[0];
            let bound = s1 * s1 * (sr.eigenvalues[r - 1] + sc.eigenvalues[r - 1]) * r as f64;
            assert!(er + ec <= bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn cartesian_ordering_uses_lowest_sums() {
        let (sr, sc) = spectra(3);
        let m = bandlimited_matrix(&sr, &sc, 2, BandOrdering::CartesianSum, 1).unwrap();
        let c = coefficients(&m.view(), &sr, &sc);
        let support = c.iter().filter(|v| v.abs() > 1e-9).count();
        assert_eq!(support, 4);
    }

    #[test]
    fn mask_examples() {
        assert_eq!(sample_mask(3, 4, 1.0, 0).unwrap(), Array2::<f64>::ones((3, 4)));
        let m = sample_mask(150, 200, 0.15, 7).unwrap();
        assert_eq!(m.sum(), 4500.0);
        assert_eq!(m, sample_mask(150, 200, 0.15, 7).unwrap());
        assert!(sample_mask(2, 2, 0.01, 0).is_err());
    }

    #[test]
    fn cold_start_examples() {
        let mut mask = Array2::zeros((3, 6));
        mask[[0, 0]] = 1.0;
        for j in 0..2 {
            mask[[1, j]] = 1.0;
        }
        for j in 0..5 {
            mask[[2, j]] = 1.0;
        }
        let data = MaskedMatrix::new(Array2::ones((3, 6)), mask).unwrap();
        let out = cold_start_subset(&data, 2, 1, 3).unwrap();
        assert_eq!(out.row_counts(), vec![1, 1, 5]);
        assert_eq!(cold_start_subset(&data, 3, 5, 3).unwrap(), data);
        assert_eq!(cold_start_subset(&data, 0, 0, 3).unwrap(), data);
        assert!(cold_start_subset(&data, 4, 0, 3).is_err());
    }

    #[test]
    fn histogram_examples() {
        let x = array![[1.0, 2.0], [3.0, 4.0]];
        assert_eq!(histogram_match(&x.view(), &[1.0, 2.0, 3.0, 4.0]).unwrap(), x);

        let constant = Array2::from_elem((2, 5), 0.3);
        let reference = [1.0, 2.0, 3.0, 4.0, 5.0];
        let out = histogram_match(&constant.view(), &reference).unwrap();
        assert_eq!(out, array![[1.0, 1.0, 2.0, 2.0, 3.0], [3.0, 4.0, 4.0, 5.0, 5.0]]);
    }

    #[test]
    fn histogram_rescaling_uses_largest_remainders() {
        let levels = histogram_levels(&[(1.0, 1), (2.0, 2)]);
        let x = Array2::from_shape_fn((1, 4), |(_, j)| j as f64);
        let out = histogram_match(&x.view(), &levels).unwrap();
        // 4·(1/3, 2/3) = (1.33, 2.67) → (1, 3)
        assert_eq!(out, array![[1.0, 2.0, 2.0, 2.0]]);
    }

    #[test]
    fn projection_examples() {
        let (sr, sc) = spectra(4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let sq_r = community_graph(&[3, 3], 1.0, 0.1, 0.1, 1).unwrap();
        let sq = LaplacianSpectrum::of_graph(&sq_r).unwrap();
        let x = Array2::from_shape_fn((6, 6), |_| rng.random_range(-1.0..1.0));
        let full = project_bandlimit(&x.view(), &sq, &sq, 6).unwrap();
        assert!((&full - &x).iter().all(|v| v.abs() < 1e-10));

        let k = 3;
        let phi = sr.eigenvectors.column(k).insert_axis(ndarray::Axis(1)).to_owned();
        let psi = sc.eigenvectors.column(0).insert_axis(ndarray::Axis(0)).to_owned();
        let x = phi.dot(&psi);
        let p = project_bandlimit(&x.view(), &sr, &sc, k).unwrap();
        assert!(p.iter().all(|v| v.abs() < 1e-12));

        let x = Array2::from_shape_fn((15, 20), |_| rng.random_range(-1.0..1.0));
        let once = project_bandlimit(&x.view(), &sr, &sc, 5).unwrap();
        let twice = project_bandlimit(&once.view(), &sr, &sc, 5).unwrap();
        assert!((&once - &twice).iter().all(|v| v.abs() < 1e-12));
        assert!(project_bandlimit(&x.view(), &sr, &sc, 16).is_err());
    }

    #[test]
    fn generated_split_partitions_entries() {
        let bench = CommunityBenchmark {
            rows: 30,
            cols: 40,
            rank: 4,
            row_communities: 3,
            col_communities: 4,
            ..Default::default()
        };
        let data = bench.generate(3).unwrap();
        assert_eq!(data.train.count(), 180);
        assert_eq!(data.train.mask() + data.test.mask(), Array2::<f64>::ones((30, 40)));
        assert_eq!(laplacian(&data.row_graph), data.row_spectrum.laplacian);
    }

    #[test]
    fn feature_benchmark_matches_reference_histogram() {
        let bench = FeatureRatingBenchmark {
            rows: 30,
            cols: 40,
            feature_dim: 4,
            neighbours: 5,
            projection_rank: 6,
            observed: 600,
            ..Default::default()
        };
        let reference = histogram_levels(&ML100K_HISTOGRAM);
        let data = bench.generate(&reference, 2).unwrap();
        let hist = value_histogram(&data.truth.view());
        assert_eq!(hist.iter().map(|h| h.1).sum::<usize>(), 1200);
        assert_eq!(hist.len(), 5);
        assert_eq!(data.train.count() + data.test.count(), 600);
        assert_eq!(data.test.count(), 120);
        let smooth_rank = crate::metrics::effective_rank(&project_bandlimit(&data.truth.view(), &data.row_spectrum, &data.col_spectrum, 6).unwrap().view()).unwrap();
        let matched_rank = crate::metrics::effective_rank(&data.truth.view()).unwrap();
        assert!(matched_rank > smooth_rank);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn histogram_match_is_exact_and_monotone(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = Array2::from_shape_fn((10, 10), |_| rng.random_range(-1.0..1.0));
            let reference: Vec<f64> = (0..100).map(|_| rng.random_range(1..=5) as f64).collect();
            let out = histogram_match(&x.view(), &reference).unwrap();
            let mut want = reference.clone();
            want.sort_by(f64::total_cmp);
            let mut got: Vec<f64> = out.iter().cloned().collect();
            got.sort_by(f64::total_cmp);
            prop_assert_eq!(got, want);
            for (a, b) in x.iter().zip(out.iter()) {
                for (c, d) in x.iter().zip(out.iter()) {
                    if a < c {
                        prop_assert!(b <= d);
                    }
                }
            }
        }

        #[test]
        fn cold_start_only_shrinks_bottom_users(seed in 0u64..10_000, n_c in 0usize..8, n_r in 0usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut mask = Array2::from_shape_fn((8, 6), |_| if rng.random_bool(0.5) { 1.0 } else { 0.0 });
            mask[[7, 0]] = 1.0;
            let data = MaskedMatrix::new(Array2::zeros((8, 6)), mask).unwrap();
            let before = data.row_counts();
            let mut order: Vec<usize> = (0..8).collect();
            order.sort_by_key(|&u| (before[u], u));
            if let Ok(out) = cold_start_subset(&data, n_c, n_r, seed) {
                let after = out.row_counts();
                for (rank, &u) in order.iter().enumerate() {
                    prop_assert!(after[u] <= before[u]);
                    if rank >= n_c {
                        prop_assert_eq!(out.mask().row(u), data.mask().row(u));
                    } else {
                        prop_assert_eq!(after[u], before[u].min(n_r));
                    }
                }
            }
        }
    }

    #[test]
    fn even_sizes_split() {
        assert_eq!(even_sizes(10, 3), vec![4, 3, 3]);
        assert_abs_diff_eq!(even_sizes(150, 10).iter().sum::<usize>() as f64, 150.0);
    }
}
