//! Training objectives for every model variant and their exact gradients.
//!
//! All losses are unnormalised sums of squares. Gradient contributions are
//! accumulated in a fixed order (data, row Dirichlet, column Dirichlet, row
//! diagonalisation, column diagonalisation) so repeated evaluations are
//! bit-identical.

use ndarray::{s, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{trace_sandwich, weighted_gram, FactorModel, SpectralFilterBank, Variant};

/// Observed values `M` and the binary support mask `S`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedMatrix {
    values: Array2<f64>,
    mask: Array2<f64>,
}

impl MaskedMatrix {
    pub fn new(values: Array2<f64>, mask: Array2<f64>) -> Result<Self> {
        if values.dim() != mask.dim() {
            return Err(Error::ShapeMismatch(format!(
                "values {:?} and mask {:?}",
                values.dim(),
                mask.dim()
            )));
        }
        let mut observed = 0usize;
        for (v, &s) in values.iter().zip(mask.iter()) {
            if s == 1.0 {
                observed += 1;
                if !v.is_finite() {
                    return Err(Error::InvalidArgument("non-finite observed value".into()));
                }
            } else if s != 0.0 {
                return Err(Error::InvalidArgument(format!("mask entry {s} is not binary")));
            }
        }
        if observed == 0 {
            return Err(Error::EmptyMask);
        }
        Ok(Self { values, mask })
    }

    /// Every entry observed.
    pub fn fully_observed(values: Array2<f64>) -> Result<Self> {
        let mask = Array2::ones(values.dim());
        Self::new(values, mask)
    }

    pub fn with_mask(&self, mask: Array2<f64>) -> Result<Self> {
        Self::new(self.values.clone(), mask)
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn mask(&self) -> &Array2<f64> {
        &self.mask
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&s| s == 1.0).count()
    }

    /// Observed positions in row-major order.
    pub fn observed(&self) -> Vec<(usize, usize)> {
        self.mask
            .indexed_iter()
            .filter_map(|(ix, &s)| (s == 1.0).then_some(ix))
            .collect()
    }

    /// Number of observed entries in each row.
    pub fn row_counts(&self) -> Vec<usize> {
        self.mask
            .rows()
            .into_iter()
            .map(|r| r.iter().filter(|&&s| s == 1.0).count())
            .collect()
    }
}

/// Weights of the regularisers: Dirichlet `μ_r`, `μ_c` and
/// diagonalisation `ρ_r`, `ρ_c`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub mu_r: f64,
    pub mu_c: f64,
    pub rho_r: f64,
    pub rho_c: f64,
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("mu_r", self.mu_r),
            ("mu_c", self.mu_c),
            ("rho_r", self.rho_r),
            ("rho_c", self.rho_c),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

/// Unweighted loss terms and the weighted total.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub data: f64,
    pub dirichlet_row: f64,
    pub dirichlet_col: f64,
    pub diag_row: f64,
    pub diag_col: f64,
    pub total: f64,
}

/// Gradients for the trainable factors; frozen factors stay `None`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    pub p: Option<Array2<f64>>,
    pub c: Option<Array2<f64>>,
    pub q: Option<Array2<f64>>,
}

fn check_shapes(model: &FactorModel, data: &MaskedMatrix) -> Result<()> {
    if model.shape() != data.shape() {
        return Err(Error::ShapeMismatch(format!(
            "model {:?} against data {:?}",
            model.shape(),
            data.shape()
        )));
    }
    Ok(())
}

/// `‖(Φ P C Qᵀ Ψᵀ − M) ⊙ S‖_F²`.
pub fn e_data(model: &FactorModel, data: &MaskedMatrix) -> Result<f64> {
    check_shapes(model, data)?;
    let x = model.product_matrix();
    Ok(masked_sq_residual(&x, data))
}

fn masked_sq_residual(x: &Array2<f64>, data: &MaskedMatrix) -> f64 {
    let mut acc = 0.0;
    for ((xv, mv), sv) in x.iter().zip(data.values.iter()).zip(data.mask.iter()) {
        if *sv == 1.0 {
            acc += (xv - mv) * (xv - mv);
        }
    }
    acc
}

/// Zoomout data term: the data residual summed over every filter pair of
/// the model's bank, in ascending `p` then `q` order.
pub fn e_zoomout(model: &FactorModel, data: &MaskedMatrix) -> Result<f64> {
    check_shapes(model, data)?;
    let bank = model.bank().ok_or(Error::MissingFilterBank)?;
    let a = model.row_embedding();
    let b = model.col_embedding();
    Ok(zoomout_term(&a, &model.c, &b, data, bank, false).0)
}

/// `‖off(Pᵀ Λ P)‖_F²`.
pub fn e_diag(p: &ArrayView2<'_, f64>, lambda: &ArrayView1<'_, f64>) -> Result<f64> {
    if p.nrows() != lambda.len() {
        return Err(Error::ShapeMismatch(format!(
            "factor {:?} with {} eigenvalues",
            p.dim(),
            lambda.len()
        )));
    }
    let k = weighted_gram(p, lambda);
    Ok(off_diagonal(&k).iter().map(|v| v * v).sum())
}

fn off_diagonal(k: &Array2<f64>) -> Array2<f64> {
    let mut o = k.clone();
    o.diag_mut().fill(0.0);
    o
}

pub fn total_loss(model: &FactorModel, data: &MaskedMatrix, weights: &LossWeights) -> Result<LossBreakdown> {
    evaluate(model, data, weights, false).map(|(l, _)| l)
}

pub fn gradients(model: &FactorModel, data: &MaskedMatrix, weights: &LossWeights) -> Result<Gradients> {
    evaluate(model, data, weights, true).map(|(_, g)| g.expect("requested"))
}

/// Loss breakdown and, when `with_grad` is set, the gradients of the total
/// loss with respect to each trainable factor.
pub fn evaluate(
    model: &FactorModel,
    data: &MaskedMatrix,
    weights: &LossWeights,
    with_grad: bool,
) -> Result<(LossBreakdown, Option<Gradients>)> {
    check_shapes(model, data)?;
    let t = model.trainable();
    let (p, c, q) = (&model.p, &model.c, &model.q);
    let a = model.row_embedding();
    let b = model.col_embedding();

    let mut g_a = None;
    let mut g_c = None;
    let mut g_b = None;
    let data_loss = match model.variant() {
        Variant::SgmcZ => {
            let bank = model.bank().ok_or(Error::MissingFilterBank)?;
            let (loss, grads) = zoomout_term(&a, c, &b, data, bank, with_grad);
            if let Some((ga, gc, gb)) = grads {
                g_a = Some(ga);
                g_c = Some(gc);
                g_b = Some(gb);
            }
            loss
        }
        _ => {
            let ac = a.dot(c);
            let x = ac.dot(&b.t());
            let mut resid = &x - &data.values;
            resid *= &data.mask;
            let loss = resid.iter().map(|v| v * v).sum();
            if with_grad {
                resid *= 2.0;
                let rb = resid.dot(&b);
                if t.p {
                    g_a = Some(rb.dot(&c.t()));
                }
                if t.c {
                    g_c = Some(a.t().dot(&rb));
                }
                if t.q {
                    g_b = Some(resid.t().dot(&ac));
                }
            }
            loss
        }
    };

    let mut grad = with_grad.then(|| Gradients {
        p: t.p.then(|| model.row_basis().apply_t(&g_a.as_ref().expect("data grad").view())),
        c: t.c.then(|| g_c.take().expect("data grad")),
        q: t.q.then(|| model.col_basis().apply_t(&g_b.as_ref().expect("data grad").view())),
    });

    let lam_r = model.row_basis().eigenvalues();
    let lam_c = model.col_basis().eigenvalues();
    let row_geometry = lam_r.iter().any(|&l| l != 0.0);
    let col_geometry = lam_c.iter().any(|&l| l != 0.0);

    // Gram blocks shared by the Dirichlet and diagonalisation terms.
    let k_r = row_geometry.then(|| weighted_gram(&p.view(), &lam_r.view()));
    let k_c = col_geometry.then(|| weighted_gram(&q.view(), &lam_c.view()));
    let g_p = col_geometry.then(|| p.t().dot(p));
    let g_q = row_geometry.then(|| q.t().dot(q));

    let mut out = LossBreakdown {
        data: data_loss,
        ..Default::default()
    };

    if let (Some(k_r), Some(g_q)) = (&k_r, &g_q) {
        out.dirichlet_row = trace_sandwich(k_r, &c.view(), g_q);
        if let Some(g) = grad.as_mut().filter(|_| weights.mu_r != 0.0) {
            let w = 2.0 * weights.mu_r;
            if let Some(gp) = g.p.as_mut() {
                let inner = c.dot(g_q).dot(&c.t());
                gp.scaled_add(w, &scale_rows(&p.dot(&inner), lam_r));
            }
            if let Some(gc) = g.c.as_mut() {
                gc.scaled_add(w, &k_r.dot(c).dot(g_q));
            }
            if let Some(gq) = g.q.as_mut() {
                gq.scaled_add(w, &q.dot(&c.t().dot(k_r).dot(c)));
            }
        }
    }
    if let (Some(k_c), Some(g_p)) = (&k_c, &g_p) {
        out.dirichlet_col = trace_sandwich(g_p, &c.view(), k_c);
        if let Some(g) = grad.as_mut().filter(|_| weights.mu_c != 0.0) {
            let w = 2.0 * weights.mu_c;
            if let Some(gp) = g.p.as_mut() {
                gp.scaled_add(w, &p.dot(&c.dot(k_c).dot(&c.t())));
            }
            if let Some(gc) = g.c.as_mut() {
                gc.scaled_add(w, &g_p.dot(c).dot(k_c));
            }
            if let Some(gq) = g.q.as_mut() {
                let inner = c.t().dot(g_p).dot(c);
                gq.scaled_add(w, &scale_rows(&q.dot(&inner), lam_c));
            }
        }
    }
    if let Some(k_r) = &k_r {
        let off = off_diagonal(k_r);
        out.diag_row = off.iter().map(|v| v * v).sum();
        if let Some(gp) = grad.as_mut().and_then(|g| g.p.as_mut()).filter(|_| weights.rho_r != 0.0) {
            gp.scaled_add(4.0 * weights.rho_r, &scale_rows(&p.dot(&off), lam_r));
        }
    }
    if let Some(k_c) = &k_c {
        let off = off_diagonal(k_c);
        out.diag_col = off.iter().map(|v| v * v).sum();
        if let Some(gq) = grad.as_mut().and_then(|g| g.q.as_mut()).filter(|_| weights.rho_c != 0.0) {
            gq.scaled_add(4.0 * weights.rho_c, &scale_rows(&q.dot(&off), lam_c));
        }
    }

    out.total = out.data
        + weights.mu_r * out.dirichlet_row
        + weights.mu_c * out.dirichlet_col
        + weights.rho_r * out.diag_row
        + weights.rho_c * out.diag_col;
    Ok((out, grad))
}

/// `diag(λ) · F`.
fn scale_rows(f: &Array2<f64>, lambda: &ndarray::Array1<f64>) -> Array2<f64> {
    f * &lambda.view().insert_axis(Axis(1))
}

type ZoomoutGrads = (Array2<f64>, Array2<f64>, Array2<f64>);

/// Zoomout data term on the observed entries only.
///
/// With `A = Φ P` and `B = Ψ Q`, `X_{p,q} = A[:, :p] C[:p, :q] B[:, :q]ᵀ`.
/// Row filters are visited from the widest down, peeling rank-one blocks
/// off `W_p = A[:, :p] C[:p, :]`. For each observed entry the column
/// filters are swept with a running prefix sum over the columns of `W`, and
/// the backward pass uses suffix sums of the per-filter residuals. The gradient with respect to
/// `W` is accumulated over all `p' ≥ p`, so each column block of `A` and
/// each row block of `C` is touched once. Per-filter losses are added in
/// ascending `p` order. Returns gradients with respect to `A`, `C`, `B`.
fn zoomout_term(
    a: &Array2<f64>,
    c: &Array2<f64>,
    b: &Array2<f64>,
    data: &MaskedMatrix,
    bank: &SpectralFilterBank,
    with_grad: bool,
) -> (f64, Option<ZoomoutGrads>) {
    let (m, d_p) = a.dim();
    let (n, d_q) = b.dim();
    let obs = data.observed();
    let rows = bank.clipped_rows(d_p);
    let cols = bank.clipped_cols(d_q);
    let b = b.as_standard_layout();
    let bs = b.as_slice().expect("standard layout");

    let top = rows.last().expect("nonempty bank").0;
    let mut w = a.slice(s![.., ..top]).dot(&c.slice(s![..top, ..]));
    let mut h_w = Array2::<f64>::zeros((m, d_q));
    let mut g_a = Array2::<f64>::zeros((m, d_p));
    let mut g_c = Array2::<f64>::zeros((d_p, d_q));
    let mut g_b = Array2::<f64>::zeros((n, d_q));
    let mut per_row = vec![0.0; rows.len()];
    // Column filter `q` contributes at index `q − 1` with its multiplicity.
    let q_top = cols.last().expect("nonempty bank").0;
    let mut end_weight = vec![0.0; q_top];
    for &(q, mult) in &cols {
        end_weight[q - 1] = mult as f64;
    }
    let mut resid = vec![0.0; q_top];

    for ri in (0..rows.len()).rev() {
        let (p, mult_p) = rows[ri];
        if ri + 1 < rows.len() {
            let next = rows[ri + 1].0;
            w -= &a.slice(s![.., p..next]).dot(&c.slice(s![p..next, ..]));
        }
        let ws = w.as_slice().expect("standard layout");
        let hws = h_w.as_slice_mut().expect("standard layout");
        let gbs = g_b.as_slice_mut().expect("standard layout");
        let mut loss_p = 0.0;
        for &(ai, bi) in &obs {
            let wr = &ws[ai * d_q..ai * d_q + q_top];
            let br = &bs[bi * d_q..bi * d_q + q_top];
            let y = data.values[[ai, bi]];
            let mut x = 0.0;
            for j in 0..q_top {
                x += wr[j] * br[j];
                let wt = end_weight[j];
                if wt != 0.0 {
                    let r = x - y;
                    let weight = mult_p as f64 * wt;
                    loss_p += weight * r * r;
                    resid[j] = 2.0 * weight * r;
                }
            }
            if !with_grad {
                continue;
            }
            let hw = &mut hws[ai * d_q..ai * d_q + q_top];
            let gb = &mut gbs[bi * d_q..bi * d_q + q_top];
            let mut h = 0.0;
            for j in (0..q_top).rev() {
                h += resid[j];
                hw[j] += h * br[j];
                gb[j] += h * wr[j];
            }
        }
        per_row[ri] = loss_p;
        if with_grad {
            let lo = if ri == 0 { 0 } else { rows[ri - 1].0 };
            let mut ga = g_a.slice_mut(s![.., lo..p]);
            ga += &h_w.dot(&c.slice(s![lo..p, ..]).t());
            let mut gc = g_c.slice_mut(s![lo..p, ..]);
            gc += &a.slice(s![.., lo..p]).t().dot(&h_w);
        }
    }
    let loss = per_row.iter().sum();
    (loss, with_grad.then_some((g_a, g_c, g_b)))
}
