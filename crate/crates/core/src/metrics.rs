//! Evaluation quantities: RMSE, effective rank, ranking scores,
//! singular-value dynamics and cross-validation splits.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{svd, Svd};
use crate::trainer::{csv_err, ChainDynamics, FactorChain};

/// Imbalance above which the singular-value evolution law is not expected
/// to hold.
pub const BALANCE_TOL: f64 = 1e-8;

/// Regulariser of the relative dynamics residual.
pub const RESIDUAL_EPS: f64 = 1e-8;

/// `sqrt(‖(X − M) ⊙ S‖² / ΣS)`.
pub fn rmse(x: &ArrayView2<'_, f64>, m: &ArrayView2<'_, f64>, mask: &ArrayView2<'_, f64>) -> Result<f64> {
    if x.dim() != m.dim() || x.dim() != mask.dim() {
        return Err(Error::ShapeMismatch(format!(
            "rmse of {:?} against {:?} with mask {:?}",
            x.dim(),
            m.dim(),
            mask.dim()
        )));
    }
    let mut sum = 0.0;
    let mut count = 0.0;
    for ((a, b), s) in x.iter().zip(m.iter()).zip(mask.iter()) {
        if *s != 0.0 {
            sum += s * (a - b) * (a - b);
            count += s;
        }
    }
    if count == 0.0 {
        return Err(Error::EmptyMask);
    }
    Ok((sum / count).sqrt())
}

/// Exponential of the entropy of the ℓ₁-normalised singular values.
pub fn effective_rank(x: &ArrayView2<'_, f64>) -> Result<f64> {
    let d = svd(x)?;
    effective_rank_of_spectrum(&d.s.view())
}

/// Effective rank from singular values; values below `1e−12·σ₁` are
/// dropped.
pub fn effective_rank_of_spectrum(sigma: &ArrayView1<'_, f64>) -> Result<f64> {
    let top = sigma.iter().cloned().fold(0.0, f64::max);
    if top <= 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let kept: Vec<f64> = sigma.iter().cloned().filter(|&v| v >= 1e-12 * top).collect();
    let total: f64 = kept.iter().sum();
    let entropy: f64 = kept
        .iter()
        .map(|&v| {
            let p = v / total;
            -p * p.ln()
        })
        .sum();
    Ok(entropy.exp())
}

/// Leading singular triplets `X ≈ Σ σ_r u_r v_rᵀ` where `σ_r` may carry a
/// sign that follows the trajectory continuously.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedTriplets {
    pub values: Array1<f64>,
    pub u: Array2<f64>,
    pub v: Array2<f64>,
}

impl SignedTriplets {
    pub fn from_svd(d: &Svd, k: usize) -> Self {
        let k = k.min(d.s.len());
        Self {
            values: d.s.slice(s![..k]).to_owned(),
            u: d.u.slice(s![.., ..k]).to_owned(),
            v: d.v.slice(s![.., ..k]).to_owned(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Reorders and re-signs the triplets to match `prev`: each previous
    /// triplet takes the unused current one with the largest singular-vector
    /// overlap, and the vector signs are flipped towards the previous ones.
    pub fn aligned_to(&self, prev: &SignedTriplets) -> SignedTriplets {
        let k = self.len();
        let mut used = vec![false; k];
        let mut order = Vec::with_capacity(k);
        let mut signs = Vec::with_capacity(k);
        for r in 0..prev.len().min(k) {
            let (up, vp) = (prev.u.column(r), prev.v.column(r));
            let mut best = None;
            let mut best_score = f64::NEG_INFINITY;
            for j in (0..k).filter(|&j| !used[j]) {
                let score = up.dot(&self.u.column(j)).abs() + vp.dot(&self.v.column(j)).abs();
                if score > best_score {
                    best_score = score;
                    best = Some(j);
                }
            }
            let j = best.expect("unused triplet");
            used[j] = true;
            let a = if up.dot(&self.u.column(j)) < 0.0 { -1.0 } else { 1.0 };
            let b = if vp.dot(&self.v.column(j)) < 0.0 { -1.0 } else { 1.0 };
            order.push(j);
            signs.push((a, b));
        }
        for j in (0..k).filter(|&j| !used[j]) {
            order.push(j);
            signs.push((1.0, 1.0));
        }
        let mut out = self.clone();
        for (r, (&j, &(a, b))) in order.iter().zip(&signs).enumerate() {
            out.values[r] = a * b * self.values[j];
            out.u.column_mut(r).assign(&(&self.u.column(j) * a));
            out.v.column_mut(r).assign(&(&self.v.column(j) * b));
        }
        out
    }
}

/// `dσ_r/dt = −N (σ_r²)^{1−1/N} ⟨∇ℓ, u_r v_rᵀ⟩` for each tracked triplet.
pub fn predicted_rates(triplets: &SignedTriplets, loss_gradient: &ArrayView2<'_, f64>, depth: usize) -> Array1<f64> {
    let n = depth as f64;
    Array1::from_shape_fn(triplets.len(), |r| {
        let u = triplets.u.column(r);
        let v = triplets.v.column(r);
        let inner = u.dot(&loss_gradient.dot(&v));
        let s2 = triplets.values[r] * triplets.values[r];
        -n * s2.powf(1.0 - 1.0 / n) * inner
    })
}

/// `|predicted − measured| / (|measured| + ε)` per singular value.
pub fn instantaneous_rate_residual(
    chain: &FactorChain,
    loss_gradient: &ArrayView2<'_, f64>,
    triplets: &SignedTriplets,
    measured: &ArrayView1<'_, f64>,
) -> Result<Array1<f64>> {
    if chain.initial_imbalance() > BALANCE_TOL {
        return Err(Error::UnbalancedFactors(chain.initial_imbalance()));
    }
    if measured.len() != triplets.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} measured rates for {} singular values",
            measured.len(),
            triplets.len()
        )));
    }
    let predicted = predicted_rates(triplets, loss_gradient, chain.depth());
    Ok(Array1::from_shape_fn(predicted.len(), |r| {
        (predicted[r] - measured[r]).abs() / (measured[r].abs() + RESIDUAL_EPS)
    }))
}

/// Per-singular-value maximum residual along a recorded trajectory. Each
/// one-step finite difference is compared with the mean of the predicted
/// rates at the two ends of the step.
pub fn trajectory_residuals(chain: &FactorChain, dynamics: &ChainDynamics, lr: f64) -> Result<Array1<f64>> {
    if chain.initial_imbalance() > BALANCE_TOL {
        return Err(Error::UnbalancedFactors(chain.initial_imbalance()));
    }
    let rates = dynamics.measured_rates(lr);
    if dynamics.loss_gradients.len() != rates.len() + 1 {
        return Err(Error::ShapeMismatch(format!(
            "{} loss gradients for {} steps",
            dynamics.loss_gradients.len(),
            rates.len()
        )));
    }
    let depth = chain.depth();
    let k = dynamics.triplets.first().map_or(0, SignedTriplets::len);
    let mut worst = Array1::<f64>::zeros(k);
    let mut start = predicted_rates(&dynamics.triplets[0], &dynamics.loss_gradients[0].view(), depth);
    for (t, rate) in rates.iter().enumerate() {
        let end = predicted_rates(&dynamics.triplets[t + 1], &dynamics.loss_gradients[t + 1].view(), depth);
        let predicted = (&start + &end) / 2.0;
        for r in 0..k {
            let res = (predicted[r] - rate[r]).abs() / (rate[r].abs() + RESIDUAL_EPS);
            worst[r] = worst[r].max(res);
        }
        start = end;
    }
    Ok(worst)
}

/// Largest entry of [`trajectory_residuals`].
pub fn max_trajectory_residual(chain: &FactorChain, dynamics: &ChainDynamics, lr: f64) -> Result<f64> {
    Ok(trajectory_residuals(chain, dynamics, lr)?.iter().cloned().fold(0.0, f64::max))
}

/// Probability that a random positive outranks a random negative, ties
/// counting one half.
pub fn auc(scores: &[(f64, bool)]) -> Result<f64> {
    let pos = scores.iter().filter(|s| s.1).count();
    let neg = scores.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateLabels(" and one negative"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].0.total_cmp(&scores[b].0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]].0 == scores[order[i]].0 {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| scores[k].1).count() as f64;
        i = j + 1;
    }
    let pos = pos as f64;
    Ok((rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg as f64))
}

/// Step integral `Σ (R_k − R_{k−1}) P_k` of the precision–recall curve over
/// descending distinct thresholds.
pub fn aupr(scores: &[(f64, bool)]) -> Result<f64> {
    let pos = scores.iter().filter(|s| s.1).count();
    if pos == 0 {
        return Err(Error::DegenerateLabels(""));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].0.total_cmp(&scores[a].0));
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]].0;
        while i < order.len() && scores[order[i]].0 == threshold {
            tp += scores[order[i]].1 as usize;
            seen += 1;
            i += 1;
        }
        let recall = tp as f64 / pos as f64;
        let precision = tp as f64 / seen as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(area)
}

/// Drug–target cross-validation scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CvScheme {
    /// Random entries.
    #[serde(rename = "CVS1")]
    Pairs,
    /// Whole rows.
    #[serde(rename = "CVS2")]
    Rows,
    /// Whole columns.
    #[serde(rename = "CVS3")]
    Cols,
}

impl CvScheme {
    pub const ALL: [CvScheme; 3] = [CvScheme::Pairs, CvScheme::Rows, CvScheme::Cols];
}

impl fmt::Display for CvScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CvScheme::Pairs => "CVS1",
            CvScheme::Rows => "CVS2",
            CvScheme::Cols => "CVS3",
        })
    }
}

impl FromStr for CvScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "CVS1" => Ok(CvScheme::Pairs),
            "CVS2" => Ok(CvScheme::Rows),
            "CVS3" => Ok(CvScheme::Cols),
            other => Err(Error::Config(format!("unknown CV scheme {other:?}"))),
        }
    }
}

/// `(train_mask, test_mask)` per fold. Units (entries, rows or columns)
/// are shuffled and dealt round-robin into folds.
pub fn dti_splits(
    shape: (usize, usize),
    scheme: CvScheme,
    folds: usize,
    seed: u64,
) -> Result<Vec<(Array2<f64>, Array2<f64>)>> {
    if folds < 2 {
        return Err(Error::InvalidArgument(format!("{folds} folds; need at least 2")));
    }
    let (m, n) = shape;
    let units = match scheme {
        CvScheme::Pairs => m * n,
        CvScheme::Rows => m,
        CvScheme::Cols => n,
    };
    let mut order: Vec<usize> = (0..units).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out: Vec<(Array2<f64>, Array2<f64>)> = (0..folds)
        .map(|_| (Array2::ones((m, n)), Array2::zeros((m, n))))
        .collect();
    for (pos, &unit) in order.iter().enumerate() {
        let (train, test) = &mut out[pos % folds];
        let mut hold = |i: usize, j: usize| {
            train[[i, j]] = 0.0;
            test[[i, j]] = 1.0;
        };
        match scheme {
            CvScheme::Pairs => hold(unit / n, unit % n),
            CvScheme::Rows => (0..n).for_each(|j| hold(unit, j)),
            CvScheme::Cols => (0..m).for_each(|i| hold(i, unit)),
        }
    }
    Ok(out)
}

/// Scores of the entries selected by `mask`, labelled by `labels > 0.5`.
pub fn masked_scores(
    scores: &ArrayView2<'_, f64>,
    labels: &ArrayView2<'_, f64>,
    mask: &ArrayView2<'_, f64>,
) -> Vec<(f64, bool)> {
    scores
        .iter()
        .zip(labels.iter())
        .zip(mask.iter())
        .filter(|(_, &s)| s != 0.0)
        .map(|((&x, &y), _)| (x, y > 0.5))
        .collect()
}

/// One row of a metrics report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub run_id: String,
    pub scheme: String,
    pub fold: usize,
    pub seed: u64,
    pub auc: Option<f64>,
    pub aupr: Option<f64>,
    pub rmse: Option<f64>,
}

/// CSV with header `run_id,scheme,fold,seed,auc,aupr,rmse`.
pub fn write_metric_rows<W: Write>(w: W, rows: &[MetricRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r).map_err(csv_err)?;
    }
    if rows.is_empty() {
        out.write_record(["run_id", "scheme", "fold", "seed", "auc", "aupr", "rmse"])
            .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}
