//! Initialisation, full-batch gradient descent and training traces.

use std::io::Write;

use ndarray::{Array1, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{frobenius, rect_identity, svd};
use crate::metrics::{effective_rank_of_spectrum, rmse, SignedTriplets};
use crate::objectives::{evaluate, LossBreakdown, LossWeights, MaskedMatrix};
use crate::spectral::FactorModel;

/// Initial `P`, `C`, `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct Init {
    pub p: Array2<f64>,
    pub c: Array2<f64>,
    pub q: Array2<f64>,
}

/// `P = s·I_{m×d_p}`, `C = s·I_{d_p×d_q}`, `Q = s·I_{n×d_q}`.
pub fn balanced_identity_init(m: usize, n: usize, d_p: usize, d_q: usize, scale: f64) -> Result<Init> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::InvalidArgument(format!("init scale {scale} must be positive")));
    }
    Ok(Init {
        p: rect_identity(m, d_p, scale),
        c: rect_identity(d_p, d_q, scale),
        q: rect_identity(n, d_q, scale),
    })
}

/// Largest relative violation of `F_iᵀF_i = F_{i+1}F_{i+1}ᵀ` along a chain.
pub fn balance_residual(factors: &[ArrayView2<'_, f64>]) -> f64 {
    factors
        .windows(2)
        .map(|w| {
            let left = w[0].t().dot(&w[0]);
            let right = w[1].dot(&w[1].t());
            let scale = frobenius(&left.view()).max(frobenius(&right.view()));
            if scale == 0.0 {
                0.0
            } else {
                frobenius(&(&left - &right).view()) / scale
            }
        })
        .fold(0.0, f64::max)
}

/// Balance residual of the chain `P, C, Qᵀ` of a model.
pub fn model_balance_residual(model: &FactorModel) -> f64 {
    let qt = model.q.t();
    balance_residual(&[model.p.view(), model.c.view(), qt])
}

/// Product `X = F_1 F_2 ⋯ F_N` of a depth-`N` chain of factors.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorChain {
    factors: Vec<Array2<f64>>,
    initial_imbalance: f64,
}

impl FactorChain {
    pub fn new(factors: Vec<Array2<f64>>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidArgument("a chain needs at least one factor".into()));
        }
        for w in factors.windows(2) {
            if w[0].ncols() != w[1].nrows() {
                return Err(Error::ShapeMismatch(format!(
                    "chain factors {:?} and {:?} do not conform",
                    w[0].dim(),
                    w[1].dim()
                )));
            }
        }
        let views: Vec<_> = factors.iter().map(|f| f.view()).collect();
        let initial_imbalance = balance_residual(&views);
        Ok(Self {
            factors,
            initial_imbalance,
        })
    }

    /// Chain of rectangular identities through the given dimensions
    /// (`dims[i] × dims[i+1]` for factor `i`).
    pub fn identity(dims: &[usize], scale: f64) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidArgument("need at least two dimensions".into()));
        }
        Self::new(dims.windows(2).map(|w| rect_identity(w[0], w[1], scale)).collect())
    }

    /// Depth-`depth` balanced chain whose product is `x0`, built from the
    /// thin SVD of `x0` with random orthogonal gauges between factors.
    pub fn balanced_from(x0: &ArrayView2<'_, f64>, depth: usize, seed: u64) -> Result<Self> {
        if depth == 0 {
            return Err(Error::InvalidArgument("depth must be positive".into()));
        }
        let d = svd(x0)?;
        let r = d.s.iter().take_while(|&&s| s > 0.0).count();
        if r == 0 {
            return Err(Error::ZeroMatrix);
        }
        let root = d.s.slice(ndarray::s![..r]).mapv(|s| s.powf(1.0 / depth as f64));
        let u = d.u.slice(ndarray::s![.., ..r]).to_owned();
        let v = d.v.slice(ndarray::s![.., ..r]).to_owned();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gauges: Vec<Array2<f64>> = (0..depth - 1)
            .map(|_| random_orthogonal(r, &mut rng))
            .collect::<Result<_>>()?;
        let sigma = Array2::from_diag(&root);
        let mut factors = Vec::with_capacity(depth);
        for i in 0..depth {
            let left = if i == 0 { u.clone() } else { gauges[i - 1].clone() };
            let right_t = if i == depth - 1 {
                v.t().to_owned()
            } else {
                gauges[i].t().to_owned()
            };
            factors.push(left.dot(&sigma).dot(&right_t));
        }
        Self::new(factors)
    }

    pub fn depth(&self) -> usize {
        self.factors.len()
    }

    pub fn factors(&self) -> &[Array2<f64>] {
        &self.factors
    }

    pub fn product(&self) -> Array2<f64> {
        let mut out = self.factors[0].clone();
        for f in &self.factors[1..] {
            out = out.dot(f);
        }
        out
    }

    pub fn balance_residual(&self) -> f64 {
        let views: Vec<_> = self.factors.iter().map(|f| f.view()).collect();
        balance_residual(&views)
    }

    /// Balance residual when the chain was constructed.
    pub fn initial_imbalance(&self) -> f64 {
        self.initial_imbalance
    }

    /// `∂ℓ/∂F_i = (F_1⋯F_{i−1})ᵀ ∇ℓ(X) (F_{i+1}⋯F_N)ᵀ`.
    pub fn gradients(&self, grad_x: &ArrayView2<'_, f64>) -> Vec<Array2<f64>> {
        let n = self.factors.len();
        let mut prefix: Vec<Option<Array2<f64>>> = vec![None; n];
        for i in 1..n {
            prefix[i] = Some(match &prefix[i - 1] {
                Some(p) => p.dot(&self.factors[i - 1]),
                None => self.factors[0].clone(),
            });
        }
        let mut out = vec![Array2::zeros((0, 0)); n];
        let mut suffix: Option<Array2<f64>> = None;
        for i in (0..n).rev() {
            let mut g = match &prefix[i] {
                Some(p) => p.t().dot(grad_x),
                None => grad_x.to_owned(),
            };
            if let Some(s) = &suffix {
                g = g.dot(&s.t());
            }
            out[i] = g;
            suffix = Some(match suffix {
                Some(s) => self.factors[i].dot(&s),
                None => self.factors[i].clone(),
            });
        }
        out
    }

    /// One gradient step `F_i ← F_i − lr·∂ℓ/∂F_i`.
    pub fn step(&mut self, grad_x: &ArrayView2<'_, f64>, lr: f64) {
        let grads = self.gradients(grad_x);
        for (f, g) in self.factors.iter_mut().zip(&grads) {
            f.scaled_add(-lr, g);
        }
    }
}

fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> Result<Array2<f64>> {
    let g = Array2::from_shape_fn((n, n), |_| StandardNormal.sample(rng));
    let d = svd(&g.view())?;
    Ok(d.u.dot(&d.v.t()))
}

/// Gradient-descent hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    #[serde(flatten)]
    pub weights: LossWeights,
    pub init_scale: f64,
    pub tol: f64,
    pub max_iters: usize,
    /// Stopping rule is not checked before this many iterations.
    pub min_iters: usize,
    pub val_fraction: f64,
    pub seed: u64,
    pub eval_every: usize,
    pub track_singular_values: bool,
    pub track_top_k: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            weights: LossWeights::default(),
            init_scale: 1.0,
            tol: 1e-6,
            max_iters: 100_000,
            min_iters: 0,
            val_fraction: 0.05,
            seed: 0,
            eval_every: 100,
            track_singular_values: false,
            track_top_k: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config(format!(
                "learning_rate = {} must be finite and >= 0",
                self.learning_rate
            )));
        }
        self.weights.validate()?;
        if !(self.init_scale.is_finite() && self.init_scale > 0.0) {
            return Err(Error::Config(format!("init_scale = {} must be > 0", self.init_scale)));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::Config(format!("tol = {} must be > 0", self.tol)));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::Config(format!(
                "val_fraction = {} must lie in (0, 1)",
                self.val_fraction
            )));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be positive".into()));
        }
        Ok(())
    }
}

/// Random partition of the observed support into training and validation
/// masks with `round(fraction·|observed|)` (at least one) validation entries.
pub fn split_validation(data: &MaskedMatrix, fraction: f64, seed: u64) -> Result<(Array2<f64>, Array2<f64>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("fraction {fraction} outside (0, 1)")));
    }
    let mut observed = data.observed();
    if observed.len() < 2 {
        return Err(Error::TooFewObservations {
            needed: 2,
            found: observed.len(),
        });
    }
    let n_val = ((fraction * observed.len() as f64).round() as usize).clamp(1, observed.len() - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    observed.shuffle(&mut rng);
    let mut train = data.mask().clone();
    let mut val = Array2::zeros(data.shape());
    for &ix in &observed[..n_val] {
        train[ix] = 0.0;
        val[ix] = 1.0;
    }
    Ok((train, val))
}

/// One evaluation point of a training run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub loss: LossBreakdown,
    pub train_rmse: f64,
    pub val_rmse: f64,
    pub test_rmse: Option<f64>,
    /// Signed, continuity-tracked leading singular values of the product.
    pub singular_values: Vec<f64>,
    pub effective_rank: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainTrace {
    /// Balance residual of the initial `P, C, Qᵀ` chain.
    pub initial_balance_residual: f64,
    pub records: Vec<TraceRecord>,
}

impl TrainTrace {
    pub const COLUMNS: [&'static str; 12] = [
        "iteration",
        "total",
        "data",
        "dirichlet_row",
        "dirichlet_col",
        "diag_row",
        "diag_col",
        "train_rmse",
        "val_rmse",
        "test_rmse",
        "effective_rank",
        "singular_values",
    ];

    /// CSV with one row per record. Missing values are empty; singular
    /// values are `;`-separated.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(Self::COLUMNS).map_err(csv_err)?;
        for r in &self.records {
            let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
            let sv = r
                .singular_values
                .iter()
                .map(|s| format!("{s:e}"))
                .collect::<Vec<_>>()
                .join(";");
            out.write_record([
                r.iteration.to_string(),
                format!("{:e}", r.loss.total),
                format!("{:e}", r.loss.data),
                format!("{:e}", r.loss.dirichlet_row),
                format!("{:e}", r.loss.dirichlet_col),
                format!("{:e}", r.loss.diag_row),
                format!("{:e}", r.loss.diag_col),
                format!("{:e}", r.train_rmse),
                format!("{:e}", r.val_rmse),
                opt(r.test_rmse),
                opt(r.effective_rank),
                sv,
            ])
            .map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Smallest test RMSE seen at any record (test-set early stopping).
    pub fn best_test_rmse(&self) -> Option<f64> {
        self.records
            .iter()
            .filter_map(|r| r.test_rmse)
            .min_by(|a, b| a.total_cmp(b))
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidArgument(format!("{other:?}")),
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: FactorModel,
    /// Checkpoint with the smallest validation RMSE.
    pub best_model: FactorModel,
    pub best_iteration: usize,
    pub iterations: usize,
    /// Whether the tolerance rule (rather than `max_iters`) ended the run.
    pub converged: bool,
    pub trace: TrainTrace,
}

impl TrainOutcome {
    pub fn final_record(&self) -> &TraceRecord {
        self.trace.records.last().expect("at least one record")
    }

    pub fn best_record(&self) -> &TraceRecord {
        self.trace
            .records
            .iter()
            .find(|r| r.iteration == self.best_iteration)
            .expect("best record present")
    }
}

/// Full-batch gradient descent on a validation split of `data`.
///
/// Validation RMSE is recorded every `eval_every` iterations; the run
/// stops once two consecutive records differ by less than `tol`. `test`
/// is only evaluated for the trace.
pub fn train(
    model: FactorModel,
    data: &MaskedMatrix,
    config: &TrainConfig,
    test: Option<&MaskedMatrix>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if let Some(t) = test {
        if t.shape() != data.shape() {
            return Err(Error::ShapeMismatch("test set shape differs from training data".into()));
        }
    }
    let (train_mask, val_mask) = split_validation(data, config.val_fraction, config.seed)?;
    let train_data = data.with_mask(train_mask)?;
    let mut model = model;
    let mut trace = TrainTrace {
        initial_balance_residual: model_balance_residual(&model),
        records: Vec::new(),
    };
    let mut tracker: Option<SignedTriplets> = None;
    let mut best_model = model.clone();
    let mut best_iteration = 0;
    let mut best_val = f64::INFINITY;
    let mut converged = false;
    let lr = config.learning_rate;
    let t = model.trainable();

    let mut iteration = 0;
    loop {
        let due = iteration % config.eval_every == 0 || iteration == config.max_iters;
        let (loss, grads) = evaluate(&model, &train_data, &config.weights, iteration < config.max_iters)?;
        if !loss.total.is_finite() {
            return Err(Error::DivergenceDetected { iteration });
        }
        if due {
            let record = make_record(iteration, loss, &model, &train_data, data, &val_mask, test, config, &mut tracker)?;
            if !record.val_rmse.is_finite() {
                return Err(Error::DivergenceDetected { iteration });
            }
            let previous = trace.records.last().map(|r| r.val_rmse);
            if record.val_rmse < best_val {
                best_val = record.val_rmse;
                best_model = model.clone();
                best_iteration = iteration;
            }
            let val = record.val_rmse;
            trace.records.push(record);
            if let Some(prev) = previous {
                if iteration >= config.min_iters && (val - prev).abs() < config.tol {
                    converged = true;
                    break;
                }
            }
        }
        if iteration >= config.max_iters {
            break;
        }
        let g = grads.expect("gradients requested");
        if t.p {
            model.p.scaled_add(-lr, g.p.as_ref().expect("trainable P"));
        }
        if t.c {
            model.c.scaled_add(-lr, g.c.as_ref().expect("trainable C"));
        }
        if t.q {
            model.q.scaled_add(-lr, g.q.as_ref().expect("trainable Q"));
        }
        iteration += 1;
    }

    Ok(TrainOutcome {
        model,
        best_model,
        best_iteration,
        iterations: iteration,
        converged,
        trace,
    })
}

#[allow(clippy::too_many_arguments)]
fn make_record(
    iteration: usize,
    loss: LossBreakdown,
    model: &FactorModel,
    train_data: &MaskedMatrix,
    data: &MaskedMatrix,
    val_mask: &Array2<f64>,
    test: Option<&MaskedMatrix>,
    config: &TrainConfig,
    tracker: &mut Option<SignedTriplets>,
) -> Result<TraceRecord> {
    let x = model.product_matrix();
    let train_rmse = rmse(&x.view(), &data.values().view(), &train_data.mask().view())?;
    let val_rmse = rmse(&x.view(), &data.values().view(), &val_mask.view())?;
    let test_rmse = match test {
        Some(t) => Some(rmse(&x.view(), &t.values().view(), &t.mask().view())?),
        None => None,
    };
    let (singular_values, effective_rank) = if config.track_singular_values {
        let d = svd(&x.view())?;
        let erank = effective_rank_of_spectrum(&d.s.view()).ok();
        let current = SignedTriplets::from_svd(&d, config.track_top_k);
        let aligned = match tracker.as_ref() {
            Some(prev) => current.aligned_to(prev),
            None => current,
        };
        let values = aligned.values.to_vec();
        *tracker = Some(aligned);
        (values, erank)
    } else {
        (Vec::new(), None)
    };
    Ok(TraceRecord {
        iteration,
        loss,
        train_rmse,
        val_rmse,
        test_rmse,
        singular_values,
        effective_rank,
    })
}

/// Signed singular values along a gradient-descent trajectory of a chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainDynamics {
    /// Product-matrix triplets at steps `0..=steps`.
    pub triplets: Vec<SignedTriplets>,
    /// `∇ℓ(X)` at steps `0..=steps`.
    pub loss_gradients: Vec<Array2<f64>>,
}

impl ChainDynamics {
    /// Finite-difference rates `(σ_r(t+1) − σ_r(t)) / lr`.
    pub fn measured_rates(&self, lr: f64) -> Vec<Array1<f64>> {
        self.triplets
            .windows(2)
            .map(|w| (&w[1].values - &w[0].values) / lr)
            .collect()
    }
}

/// Runs `steps` gradient steps of `‖(X − M) ⊙ S‖²` on a chain, tracking the
/// top-`k` signed singular triplets of the product after every step.
pub fn track_chain_dynamics(
    chain: &mut FactorChain,
    target: &MaskedMatrix,
    lr: f64,
    steps: usize,
    k: usize,
) -> Result<ChainDynamics> {
    let x0 = chain.product();
    if x0.dim() != target.shape() {
        return Err(Error::ShapeMismatch("chain product and target differ".into()));
    }
    let mut triplets = vec![SignedTriplets::from_svd(&svd(&x0.view())?, k)];
    let mut loss_gradients = Vec::with_capacity(steps + 1);
    let mut x = x0;
    for iteration in 0..steps {
        let grad = (&x - target.values()) * target.mask() * 2.0;
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::DivergenceDetected { iteration });
        }
        chain.step(&grad.view(), lr);
        loss_gradients.push(grad);
        x = chain.product();
        let next = SignedTriplets::from_svd(&svd(&x.view())?, k).aligned_to(triplets.last().expect("nonempty"));
        triplets.push(next);
    }
    loss_gradients.push((&x - target.values()) * target.mask() * 2.0);
    Ok(ChainDynamics {
        triplets,
        loss_gradients,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{Basis, Trainable, Variant};
    use ndarray::array;
    use rand::Rng;

    #[test]
    fn identity_init_examples() {
        let init = balanced_identity_init(4, 4, 4, 4, 0.01).unwrap();
        for f in [&init.p, &init.c, &init.q] {
            assert_eq!(f, &(Array2::<f64>::eye(4) * 0.01));
        }
        let qt = init.q.t();
        assert_eq!(balance_residual(&[init.p.view(), init.c.view(), qt]), 0.0);

        let r = balanced_identity_init(3, 2, 5, 2, 2.0).unwrap();
        assert_eq!(r.p.dim(), (3, 5));
        for i in 0..3 {
            for j in 0..5 {
                assert_eq!(r.p[[i, j]], if i == j { 2.0 } else { 0.0 });
            }
        }
        assert!(balanced_identity_init(2, 2, 2, 2, 0.0).is_err());
    }

    #[test]
    fn fm_identity_init_reproduces_basis_product() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let phi = array![[h, h], [h, -h]];
        let psi = array![[1.0, 0.0, 0.0], [0.0, 0.6, 0.8], [0.0, 0.8, -0.6]];
        let rb = Basis::from_parts(Some(phi.clone()), array![0.0, 2.0]).unwrap();
        let cb = Basis::from_parts(Some(psi.clone()), array![0.0, 1.0, 3.0]).unwrap();
        let fm = FactorModel::identity_init(Variant::Fm, rb, cb, 2, 3, 1.0, Trainable::C_ONLY, None).unwrap();
        let want = phi.dot(&rect_identity(2, 3, 1.0)).dot(&psi.t());
        assert!((&fm.product_matrix() - &want).iter().all(|v| v.abs() < 1e-15));
    }

    fn observed(n: usize) -> MaskedMatrix {
        let mut mask = Array2::zeros((10, 10));
        for k in 0..n {
            mask[[k / 10, k % 10]] = 1.0;
        }
        MaskedMatrix::new(Array2::from_elem((10, 10), 1.0), mask).unwrap()
    }

    #[test]
    fn split_validation_examples() {
        let data = observed(100);
        let (tr, va) = split_validation(&data, 0.05, 3).unwrap();
        assert_eq!(tr.sum(), 95.0);
        assert_eq!(va.sum(), 5.0);
        assert_eq!(&tr + &va, *data.mask());
        assert_eq!(split_validation(&data, 0.05, 3).unwrap(), (tr, va));
        let (_, va) = split_validation(&observed(20), 0.05, 1).unwrap();
        assert_eq!(va.sum(), 1.0);
        assert!(matches!(
            split_validation(&observed(1), 0.05, 1),
            Err(Error::TooFewObservations { needed: 2, found: 1 })
        ));
    }

    fn dmf(m: usize, n: usize, d: usize, scale: f64) -> FactorModel {
        FactorModel::identity_init(
            Variant::Dmf,
            Basis::identity(m),
            Basis::identity(n),
            d,
            d,
            scale,
            Trainable::ALL,
            None,
        )
        .unwrap()
    }

    #[test]
    fn zero_learning_rate_stops_after_two_evaluations() {
        let target = MaskedMatrix::fully_observed(array![[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]]).unwrap();
        let model = dmf(2, 3, 3, 0.5);
        let config = TrainConfig {
            learning_rate: 0.0,
            val_fraction: 0.2,
            ..Default::default()
        };
        let out = train(model.clone(), &target, &config, None).unwrap();
        assert_eq!(out.trace.records.len(), 2);
        assert!(out.converged);
        assert_eq!(out.model, model);
    }

    #[test]
    fn rank_one_toy_run_decreases_monotonically() {
        let target = MaskedMatrix::fully_observed(array![[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]]).unwrap();
        // depth two: C is frozen at the identity
        let mut model = FactorModel::from_parts(
            Variant::Dmf,
            Basis::identity(2),
            Basis::identity(3),
            rect_identity(2, 3, 0.5),
            Array2::eye(3),
            rect_identity(3, 3, 0.5),
            Trainable::from_names(&["P", "Q"]).unwrap(),
            None,
        )
        .unwrap();
        let weights = LossWeights::default();
        let mut last = f64::INFINITY;
        for _ in 0..40_000 {
            let (loss, g) = evaluate(&model, &target, &weights, true).unwrap();
            assert!(loss.total <= last + 1e-15);
            last = loss.total;
            let g = g.unwrap();
            assert!(g.c.is_none());
            model.p.scaled_add(-0.01, g.p.as_ref().unwrap());
            model.q.scaled_add(-0.01, g.q.as_ref().unwrap());
        }
        assert!(last < 1e-6, "final loss {last}");
    }

    #[test]
    fn negative_learning_rate_is_rejected() {
        let config = TrainConfig {
            learning_rate: -1.0,
            ..Default::default()
        };
        assert!(matches!(config.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn divergence_is_reported() {
        let target = MaskedMatrix::fully_observed(Array2::from_elem((3, 3), 50.0)).unwrap();
        let config = TrainConfig {
            learning_rate: 10.0,
            eval_every: 1,
            val_fraction: 0.2,
            ..Default::default()
        };
        let err = train(dmf(3, 3, 3, 1.0), &target, &config, None).unwrap_err();
        assert!(matches!(err, Error::DivergenceDetected { .. }));
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let values = Array2::from_shape_fn((6, 5), |_| rng.random_range(-1.0..1.0));
        let data = MaskedMatrix::fully_observed(values).unwrap();
        let config = TrainConfig {
            learning_rate: 0.01,
            max_iters: 300,
            eval_every: 50,
            track_singular_values: true,
            track_top_k: 3,
            ..Default::default()
        };
        let a = train(dmf(6, 5, 5, 0.3), &data, &config, None).unwrap();
        let b = train(dmf(6, 5, 5, 0.3), &data, &config, None).unwrap();
        assert_eq!(a.trace, b.trace);
        let mut ca = Vec::new();
        let mut cb = Vec::new();
        a.trace.write_csv(&mut ca).unwrap();
        b.trace.write_csv(&mut cb).unwrap();
        assert_eq!(ca, cb);
        let text = String::from_utf8(ca).unwrap();
        assert!(text.starts_with("iteration,total,data,"));
        assert_eq!(text.lines().count(), a.trace.records.len() + 1);
    }

    #[test]
    fn chain_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let factors: Vec<Array2<f64>> = [(4, 3), (3, 5), (5, 2)]
            .iter()
            .map(|&(r, c)| Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0)))
            .collect();
        let chain = FactorChain::new(factors).unwrap();
        let w = Array2::from_shape_fn((4, 2), |_| rng.random_range(-1.0..1.0));
        // linear loss ℓ(X) = ⟨W, X⟩ has ∇ℓ = W
        let grads = chain.gradients(&w.view());
        let h = 1e-6;
        for (i, g) in grads.iter().enumerate() {
            for ((a, b), &analytic) in g.indexed_iter() {
                let mut plus = chain.clone();
                let mut minus = chain.clone();
                plus.factors[i][[a, b]] += h;
                minus.factors[i][[a, b]] -= h;
                let numeric = ((&plus.product() * &w).sum() - (&minus.product() * &w).sum()) / (2.0 * h);
                assert!((numeric - analytic).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn balanced_chain_reproduces_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x0 = Array2::from_shape_fn((5, 4), |_| rng.random_range(-1.0..1.0));
        let chain = FactorChain::balanced_from(&x0.view(), 3, 1).unwrap();
        assert!(chain.initial_imbalance() < 1e-12);
        assert!((&chain.product() - &x0).iter().all(|v| v.abs() < 1e-12));
        let unbalanced = FactorChain::new(vec![x0.clone(), Array2::eye(4) * 3.0]).unwrap();
        assert!(unbalanced.initial_imbalance() > 0.1);
    }

    #[test]
    fn balance_is_conserved_under_small_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let target = Array2::from_shape_fn((4, 4), |_| rng.random_range(-1.0..1.0));
        let mut chain = FactorChain::identity(&[4, 4, 4, 4], 0.5).unwrap();
        for _ in 0..1000 {
            let grad = (&chain.product() - &target) * 2.0;
            chain.step(&grad.view(), 1e-5);
        }
        assert!(chain.balance_residual() <= 1e-6, "{}", chain.balance_residual());
    }
}
