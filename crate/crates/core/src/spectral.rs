//! Spectral factor models `X = Φ P C Qᵀ Ψᵀ`, the low-pass filter bank and
//! Dirichlet energies in spatial and spectral form.

use std::io::{Read, Write};

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::LaplacianSpectrum;
use crate::linalg::rect_identity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Plain deep matrix factorization `P C Qᵀ`, no bases.
    Dmf,
    /// Functional map: only `C` is trained, `P` and `Q` are identities.
    Fm,
    /// Spectral geometric matrix completion.
    Sgmc,
    /// SGMC trained through the low-pass filter bank.
    SgmcZ,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Dmf => "dmf",
            Variant::Fm => "fm",
            Variant::Sgmc => "sgmc",
            Variant::SgmcZ => "sgmc-z",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "dmf" => Ok(Variant::Dmf),
            "fm" | "sgmc1" => Ok(Variant::Fm),
            "sgmc" => Ok(Variant::Sgmc),
            "sgmc-z" | "sgmcz" => Ok(Variant::SgmcZ),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

/// Which of `P`, `C`, `Q` receive gradient updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trainable {
    pub p: bool,
    pub c: bool,
    pub q: bool,
}

impl Trainable {
    pub const ALL: Trainable = Trainable {
        p: true,
        c: true,
        q: true,
    };
    pub const C_ONLY: Trainable = Trainable {
        p: false,
        c: true,
        q: false,
    };
    pub const P_AND_C: Trainable = Trainable {
        p: true,
        c: true,
        q: false,
    };

    /// Parses names such as `["P", "C"]`.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let mut t = Trainable {
            p: false,
            c: false,
            q: false,
        };
        for name in names {
            match name.as_ref().trim().to_ascii_uppercase().as_str() {
                "P" => t.p = true,
                "C" => t.c = true,
                "Q" => t.q = true,
                other => return Err(Error::Config(format!("unknown factor `{other}`"))),
            }
        }
        if !(t.p || t.c || t.q) {
            return Err(Error::Config("no trainable factor".into()));
        }
        Ok(t)
    }

    pub fn names(&self) -> Vec<&'static str> {
        [(self.p, "P"), (self.c, "C"), (self.q, "Q")]
            .into_iter()
            .filter_map(|(on, n)| on.then_some(n))
            .collect()
    }
}

/// Bank of low-pass filters `diag(1_p)` with `p = 1 + k·p_skip ≤ p_max`
/// (and likewise for `q`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpectralFilterBank {
    pub p_max: usize,
    pub q_max: usize,
    pub p_skip: usize,
    pub q_skip: usize,
}

impl SpectralFilterBank {
    pub fn new(p_max: usize, q_max: usize, p_skip: usize, q_skip: usize) -> Result<Self> {
        if p_max == 0 || q_max == 0 || p_skip == 0 || q_skip == 0 {
            return Err(Error::Config(format!(
                "filter bank needs positive sizes, got {p_max}/{q_max} skip {p_skip}/{q_skip}"
            )));
        }
        Ok(Self {
            p_max,
            q_max,
            p_skip,
            q_skip,
        })
    }

    pub fn row_indices(&self) -> Vec<usize> {
        (0..).map(|k| 1 + k * self.p_skip).take_while(|&p| p <= self.p_max).collect()
    }

    pub fn col_indices(&self) -> Vec<usize> {
        (0..).map(|k| 1 + k * self.q_skip).take_while(|&q| q <= self.q_max).collect()
    }

    /// Row filter sizes clipped to `d_p`, merged into `(size, multiplicity)`.
    pub fn clipped_rows(&self, d_p: usize) -> Vec<(usize, usize)> {
        clip_with_multiplicity(&self.row_indices(), d_p)
    }

    pub fn clipped_cols(&self, d_q: usize) -> Vec<(usize, usize)> {
        clip_with_multiplicity(&self.col_indices(), d_q)
    }

    pub fn len(&self) -> usize {
        self.row_indices().len() * self.col_indices().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn clip_with_multiplicity(indices: &[usize], width: usize) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = Vec::new();
    for &i in indices {
        let c = i.min(width);
        match out.last_mut() {
            Some((last, mult)) if *last == c => *mult += 1,
            _ => out.push((c, 1)),
        }
    }
    out
}

/// An orthonormal basis with the matching Laplacian eigenvalues. `None`
/// vectors stand for the identity (no graph, or the DMF baseline).
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    vectors: Option<Array2<f64>>,
    eigenvalues: Array1<f64>,
}

impl Basis {
    pub fn identity(n: usize) -> Self {
        Self {
            vectors: None,
            eigenvalues: Array1::zeros(n),
        }
    }

    pub fn from_spectrum(spec: &LaplacianSpectrum) -> Self {
        Self {
            vectors: Some(spec.eigenvectors.clone()),
            eigenvalues: spec.eigenvalues.clone(),
        }
    }

    pub fn from_parts(vectors: Option<Array2<f64>>, eigenvalues: Array1<f64>) -> Result<Self> {
        if let Some(v) = &vectors {
            if v.dim() != (eigenvalues.len(), eigenvalues.len()) {
                return Err(Error::ShapeMismatch(format!(
                    "basis {:?} with {} eigenvalues",
                    v.dim(),
                    eigenvalues.len()
                )));
            }
        }
        Ok(Self {
            vectors,
            eigenvalues,
        })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_identity(&self) -> bool {
        self.vectors.is_none()
    }

    pub fn vectors(&self) -> Option<&Array2<f64>> {
        self.vectors.as_ref()
    }

    pub fn eigenvalues(&self) -> &Array1<f64> {
        &self.eigenvalues
    }

    pub fn dense(&self) -> Array2<f64> {
        self.vectors.clone().unwrap_or_else(|| Array2::eye(self.dim()))
    }

    /// `Φ · F`, skipping the product for the identity basis.
    pub fn apply(&self, f: &ArrayView2<'_, f64>) -> Array2<f64> {
        match &self.vectors {
            Some(v) => v.dot(f),
            None => f.to_owned(),
        }
    }

    /// `Φᵀ · F`.
    pub fn apply_t(&self, f: &ArrayView2<'_, f64>) -> Array2<f64> {
        match &self.vectors {
            Some(v) => v.t().dot(f),
            None => f.to_owned(),
        }
    }
}

/// Trainable spectral factorization `X = Φ P C Qᵀ Ψᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    variant: Variant,
    row_basis: Basis,
    col_basis: Basis,
    pub p: Array2<f64>,
    pub c: Array2<f64>,
    pub q: Array2<f64>,
    trainable: Trainable,
    bank: Option<SpectralFilterBank>,
}

impl FactorModel {
    /// Assembles a model and checks every structural invariant.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        variant: Variant,
        row_basis: Basis,
        col_basis: Basis,
        p: Array2<f64>,
        c: Array2<f64>,
        q: Array2<f64>,
        trainable: Trainable,
        bank: Option<SpectralFilterBank>,
    ) -> Result<Self> {
        let (m, d_p) = p.dim();
        let (n, d_q) = q.dim();
        if d_p == 0 || d_q == 0 {
            return Err(Error::ShapeMismatch("factor widths must be positive".into()));
        }
        if c.dim() != (d_p, d_q) {
            return Err(Error::ShapeMismatch(format!(
                "C is {:?}, expected ({d_p}, {d_q})",
                c.dim()
            )));
        }
        if row_basis.dim() != m || col_basis.dim() != n {
            return Err(Error::ShapeMismatch(format!(
                "bases of size {}/{} for a {m}x{n} model",
                row_basis.dim(),
                col_basis.dim()
            )));
        }
        match variant {
            Variant::Fm => {
                if trainable != Trainable::C_ONLY
                    || p != rect_identity(m, d_p, 1.0)
                    || q != rect_identity(n, d_q, 1.0)
                {
                    return Err(Error::InvalidArgument(
                        "FM keeps P and Q at the identity and trains C only".into(),
                    ));
                }
            }
            Variant::Dmf => {
                if !row_basis.is_identity() || !col_basis.is_identity() {
                    return Err(Error::InvalidArgument("DMF has identity bases".into()));
                }
            }
            Variant::SgmcZ => {
                if bank.is_none() {
                    return Err(Error::MissingFilterBank);
                }
            }
            Variant::Sgmc => {}
        }
        Ok(Self {
            variant,
            row_basis,
            col_basis,
            p,
            c,
            q,
            trainable,
            bank,
        })
    }

    /// Model with every factor at `scale · I` (FM keeps `P`, `Q` at `I`).
    /// DMF discards the supplied bases.
    #[allow(clippy::too_many_arguments)]
    pub fn identity_init(
        variant: Variant,
        row_basis: Basis,
        col_basis: Basis,
        d_p: usize,
        d_q: usize,
        scale: f64,
        trainable: Trainable,
        bank: Option<SpectralFilterBank>,
    ) -> Result<Self> {
        let (m, n) = (row_basis.dim(), col_basis.dim());
        let (row_basis, col_basis) = match variant {
            Variant::Dmf => (Basis::identity(m), Basis::identity(n)),
            _ => (row_basis, col_basis),
        };
        let init = crate::trainer::balanced_identity_init(m, n, d_p, d_q, scale)?;
        let (p, q, trainable) = match variant {
            Variant::Fm => (
                rect_identity(m, d_p, 1.0),
                rect_identity(n, d_q, 1.0),
                Trainable::C_ONLY,
            ),
            _ => (init.p, init.q, trainable),
        };
        Self::from_parts(variant, row_basis, col_basis, p, init.c, q, trainable, bank)
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn trainable(&self) -> Trainable {
        self.trainable
    }

    pub fn bank(&self) -> Option<&SpectralFilterBank> {
        self.bank.as_ref()
    }

    pub fn row_basis(&self) -> &Basis {
        &self.row_basis
    }

    pub fn col_basis(&self) -> &Basis {
        &self.col_basis
    }

    /// `(m, n)` of the product matrix.
    pub fn shape(&self) -> (usize, usize) {
        (self.p.nrows(), self.q.nrows())
    }

    pub fn widths(&self) -> (usize, usize) {
        (self.p.ncols(), self.q.ncols())
    }

    /// `A = Φ P`.
    pub fn row_embedding(&self) -> Array2<f64> {
        self.row_basis.apply(&self.p.view())
    }

    /// `B = Ψ Q`.
    pub fn col_embedding(&self) -> Array2<f64> {
        self.col_basis.apply(&self.q.view())
    }

    /// The product matrix `X = Φ P C Qᵀ Ψᵀ`.
    pub fn product_matrix(&self) -> Array2<f64> {
        product_with_core(&self.row_embedding(), &self.c, &self.col_embedding())
    }

    /// `X_{p,q} = Φ P F_p C G_qᵀ Qᵀ Ψᵀ`.
    pub fn filtered_product(&self, p: usize, q: usize) -> Array2<f64> {
        let filtered = apply_filter(&self.c.view(), p, q);
        product_with_core(&self.row_embedding(), &filtered, &self.col_embedding())
    }

    /// Writes the model as a self-describing binary bundle: a magic tag, a
    /// JSON metadata header and little-endian `f64` payloads.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let (m, n) = self.shape();
        let (d_p, d_q) = self.widths();
        let header = ModelHeader {
            variant: self.variant,
            rows: m,
            cols: n,
            d_p,
            d_q,
            trainable: self.trainable,
            bank: self.bank,
            row_basis_identity: self.row_basis.is_identity(),
            col_basis_identity: self.col_basis.is_identity(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Config(e.to_string()))?;
        w.write_all(MODEL_MAGIC)?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        let mut put = |xs: &mut dyn Iterator<Item = f64>| -> Result<()> {
            for x in xs {
                w.write_all(&x.to_le_bytes())?;
            }
            Ok(())
        };
        put(&mut self.row_basis.eigenvalues.iter().copied())?;
        if let Some(v) = &self.row_basis.vectors {
            put(&mut v.iter().copied())?;
        }
        put(&mut self.col_basis.eigenvalues.iter().copied())?;
        if let Some(v) = &self.col_basis.vectors {
            put(&mut v.iter().copied())?;
        }
        put(&mut self.p.iter().copied())?;
        put(&mut self.c.iter().copied())?;
        put(&mut self.q.iter().copied())?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MODEL_MAGIC {
            return Err(Error::Parse {
                line: 0,
                message: "not a model checkpoint".into(),
            });
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
        r.read_exact(&mut json)?;
        let h: ModelHeader = serde_json::from_slice(&json).map_err(|e| Error::Parse {
            line: 0,
            message: e.to_string(),
        })?;
        let mut take = |rows: usize, cols: usize| -> Result<Array2<f64>> {
            let mut buf = vec![0u8; rows * cols * 8];
            r.read_exact(&mut buf)?;
            let data = buf
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
            Ok(Array2::from_shape_vec((rows, cols), data).expect("sized buffer"))
        };
        let row_vals = take(1, h.rows)?.into_shape_with_order(h.rows).expect("row");
        let row_vecs = (!h.row_basis_identity)
            .then(|| take(h.rows, h.rows))
            .transpose()?;
        let col_vals = take(1, h.cols)?.into_shape_with_order(h.cols).expect("row");
        let col_vecs = (!h.col_basis_identity)
            .then(|| take(h.cols, h.cols))
            .transpose()?;
        let p = take(h.rows, h.d_p)?;
        let c = take(h.d_p, h.d_q)?;
        let q = take(h.cols, h.d_q)?;
        Self::from_parts(
            h.variant,
            Basis::from_parts(row_vecs, row_vals)?,
            Basis::from_parts(col_vecs, col_vals)?,
            p,
            c,
            q,
            h.trainable,
            h.bank,
        )
    }
}

const MODEL_MAGIC: &[u8; 8] = b"SGMCMODL";

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    variant: Variant,
    rows: usize,
    cols: usize,
    d_p: usize,
    d_q: usize,
    trainable: Trainable,
    bank: Option<SpectralFilterBank>,
    row_basis_identity: bool,
    col_basis_identity: bool,
}

/// `A C Bᵀ`, associating to minimise flops.
pub fn product_with_core(a: &Array2<f64>, c: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (m, d_p) = a.dim();
    let (n, d_q) = b.dim();
    let left_first = m * d_p * d_q + m * d_q * n;
    let right_first = d_p * d_q * n + m * d_p * n;
    if left_first <= right_first {
        a.dot(c).dot(&b.t())
    } else {
        a.dot(&c.dot(&b.t()))
    }
}

/// `F_p C G_qᵀ`: keeps the leading `min(p, d_p) × min(q, d_q)` block of `C`.
pub fn apply_filter(c: &ArrayView2<'_, f64>, p: usize, q: usize) -> Array2<f64> {
    let (d_p, d_q) = c.dim();
    let (p, q) = (p.min(d_p), q.min(d_q));
    let mut out = Array2::zeros((d_p, d_q));
    out.slice_mut(s![..p, ..q]).assign(&c.slice(s![..p, ..q]));
    out
}

/// Functional map `C = Φᵀ X Ψ`.
pub fn functional_map(
    phi: &ArrayView2<'_, f64>,
    psi: &ArrayView2<'_, f64>,
    x: &ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    if phi.nrows() != x.nrows() || psi.nrows() != x.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "bases {:?}/{:?} for a signal of shape {:?}",
            phi.dim(),
            psi.dim(),
            x.dim()
        )));
    }
    Ok(phi.t().dot(x).dot(psi))
}

/// Row and column Dirichlet energies `(tr(XᵀL_rX), tr(X L_c Xᵀ))`.
pub fn dirichlet_matrix(
    l_r: &ArrayView2<'_, f64>,
    l_c: &ArrayView2<'_, f64>,
    x: &ArrayView2<'_, f64>,
) -> Result<(f64, f64)> {
    let (m, n) = x.dim();
    if l_r.dim() != (m, m) || l_c.dim() != (n, n) {
        return Err(Error::ShapeMismatch(format!(
            "Laplacians {:?}/{:?} for a signal of shape {:?}",
            l_r.dim(),
            l_c.dim(),
            x.dim()
        )));
    }
    let row = (&l_r.dot(x) * x).sum();
    let col = (&x.dot(l_c) * x).sum();
    Ok((row, col))
}

/// Spectral form of the Dirichlet energies of `P C Qᵀ` expressed in the
/// Laplacian eigenbases:
/// `tr(Q Cᵀ Pᵀ Λ_r P C Qᵀ)` and `tr(P C Qᵀ Λ_c Q Cᵀ Pᵀ)`.
pub fn dirichlet_spectral(
    lambda_r: &ArrayView1<'_, f64>,
    lambda_c: &ArrayView1<'_, f64>,
    p: &ArrayView2<'_, f64>,
    c: &ArrayView2<'_, f64>,
    q: &ArrayView2<'_, f64>,
) -> Result<(f64, f64)> {
    if p.nrows() != lambda_r.len()
        || q.nrows() != lambda_c.len()
        || c.dim() != (p.ncols(), q.ncols())
    {
        return Err(Error::ShapeMismatch(format!(
            "P {:?}, C {:?}, Q {:?} with spectra {}/{}",
            p.dim(),
            c.dim(),
            q.dim(),
            lambda_r.len(),
            lambda_c.len()
        )));
    }
    let k_r = weighted_gram(p, lambda_r);
    let k_c = weighted_gram(q, lambda_c);
    let g_p = p.t().dot(p);
    let g_q = q.t().dot(q);
    Ok((trace_sandwich(&k_r, c, &g_q), trace_sandwich(&g_p, c, &k_c)))
}

/// `Fᵀ diag(λ) F`.
pub(crate) fn weighted_gram(f: &ArrayView2<'_, f64>, lambda: &ArrayView1<'_, f64>) -> Array2<f64> {
    let scaled = f * &lambda.view().insert_axis(ndarray::Axis(1));
    f.t().dot(&scaled)
}

/// `tr(K C G Cᵀ)` for symmetric `K`, `G`.
pub(crate) fn trace_sandwich(k: &Array2<f64>, c: &ArrayView2<'_, f64>, g: &Array2<f64>) -> f64 {
    (&k.dot(c) * &c.dot(g)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::{self, WeightedGraph};
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    fn naive_product(mats: &[&Array2<f64>]) -> Array2<f64> {
        let mut acc = mats[0].clone();
        for next in &mats[1..] {
            let (r, k) = acc.dim();
            let c = next.ncols();
            let mut out = Array2::zeros((r, c));
            for i in 0..r {
                for j in 0..c {
                    for l in 0..k {
                        out[[i, j]] += acc[[i, l]] * next[[l, j]];
                    }
                }
            }
            acc = out;
        }
        acc
    }

    fn random_spectrum(n: usize, seed: u64) -> LaplacianSpectrum {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut adj = Array2::zeros((n, n));
        for a in 0..n {
            for b in (a + 1)..n {
                let w = rng.random_range(0.0..1.0);
                adj[[a, b]] = w;
                adj[[b, a]] = w;
            }
        }
        LaplacianSpectrum::of_graph(&WeightedGraph::new(adj).unwrap()).unwrap()
    }

    fn sgmc_model(m: usize, n: usize, d_p: usize, d_q: usize, seed: u64) -> FactorModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FactorModel::from_parts(
            Variant::Sgmc,
            Basis::from_spectrum(&random_spectrum(m, seed)),
            Basis::from_spectrum(&random_spectrum(n, seed + 1000)),
            random(m, d_p, &mut rng),
            random(d_p, d_q, &mut rng),
            random(n, d_q, &mut rng),
            Trainable::ALL,
            None,
        )
        .unwrap()
    }

    #[test]
    fn identity_factors_give_identity() {
        let m = FactorModel::identity_init(
            Variant::Sgmc,
            Basis::identity(4),
            Basis::identity(4),
            4,
            4,
            1.0,
            Trainable::ALL,
            None,
        )
        .unwrap();
        assert_eq!(m.product_matrix(), Array2::<f64>::eye(4));
        let small = FactorModel::identity_init(
            Variant::Dmf,
            Basis::identity(3),
            Basis::identity(3),
            3,
            3,
            0.01,
            Trainable::ALL,
            None,
        )
        .unwrap();
        let x = small.product_matrix();
        for i in 0..3 {
            assert!((x[[i, i]] - 1e-6).abs() < 1e-20);
        }
    }

    #[test]
    fn product_matches_naive_loops() {
        let model = sgmc_model(4, 5, 3, 6, 7);
        let phi = model.row_basis().dense();
        let psi = model.col_basis().dense();
        let naive = naive_product(&[&phi, &model.p, &model.c, &model.q.t().to_owned(), &psi.t().to_owned()]);
        let diff = (&naive - &model.product_matrix()).mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b));
        assert!(diff < 1e-12);
    }

    #[test]
    fn filter_examples() {
        let c = array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [7.0, 8.0, 9.0]];
        let f = apply_filter(&c.view(), 2, 3);
        assert_eq!(f.row(2), array![0.0, 0.0, 0.0]);
        assert_eq!(f.slice(s![..2, ..]), c.slice(s![..2, ..]));
        assert_eq!(apply_filter(&c.view(), 5, 9), c);
        let one = apply_filter(&c.view(), 1, 1);
        assert_eq!(one.sum(), 1.0);
        assert_eq!(apply_filter(&one.view(), 1, 1), one);
    }

    #[test]
    fn filtered_product_matches_compose_then_multiply() {
        let model = sgmc_model(5, 4, 4, 3, 2);
        assert_eq!(model.filtered_product(10, 10), model.product_matrix());
        let filtered = apply_filter(&model.c.view(), 2, 2);
        let naive = naive_product(&[
            &model.row_basis().dense(),
            &model.p,
            &filtered,
            &model.q.t().to_owned(),
            &model.col_basis().dense().t().to_owned(),
        ]);
        let diff = (&naive - &model.filtered_product(2, 2)).mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b));
        assert!(diff < 1e-12);
    }

    #[test]
    fn fm_single_coefficient_is_rank_one() {
        let rs = random_spectrum(4, 1);
        let cs = random_spectrum(3, 2);
        let mut model = FactorModel::identity_init(
            Variant::Fm,
            Basis::from_spectrum(&rs),
            Basis::from_spectrum(&cs),
            4,
            3,
            1.0,
            Trainable::C_ONLY,
            None,
        )
        .unwrap();
        model.c[[0, 0]] = 2.5;
        let x = model.filtered_product(1, 1);
        for a in 0..4 {
            for b in 0..3 {
                let want = 2.5 * rs.eigenvectors[[a, 0]] * cs.eigenvectors[[b, 0]];
                assert!((x[[a, b]] - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn functional_map_examples() {
        let rs = random_spectrum(5, 3);
        let cs = random_spectrum(4, 4);
        let (phi, psi) = (rs.eigenvectors.view(), cs.eigenvectors.view());
        let x = phi.column(1).insert_axis(ndarray::Axis(1)).dot(&psi.column(2).insert_axis(ndarray::Axis(0)));
        let c = functional_map(&phi, &psi, &x.view()).unwrap();
        for i in 0..5 {
            for j in 0..4 {
                let want = if (i, j) == (1, 2) { 1.0 } else { 0.0 };
                assert!((c[[i, j]] - want).abs() < 1e-12);
            }
        }
        let eye5 = Array2::<f64>::eye(5);
        let eye4 = Array2::<f64>::eye(4);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let y = random(5, 4, &mut rng);
        assert_eq!(functional_map(&eye5.view(), &eye4.view(), &y.view()).unwrap(), y);
        let cy = functional_map(&phi, &psi, &y.view()).unwrap();
        let back = phi.dot(&cy).dot(&psi.t());
        assert!((&back - &y).mapv(f64::abs).sum() < 1e-12);
    }

    #[test]
    fn dirichlet_matrix_examples() {
        let rs = random_spectrum(4, 5);
        let cs = random_spectrum(3, 6);
        let constant_cols = Array2::from_shape_fn((4, 3), |(_, j)| j as f64 + 1.0);
        let (row, _) = dirichlet_matrix(&rs.laplacian.view(), &cs.laplacian.view(), &constant_cols.view()).unwrap();
        assert!(row.abs() < 1e-12);

        let x = rs.eigenvectors.column(2).insert_axis(ndarray::Axis(1))
            .dot(&cs.eigenvectors.column(1).insert_axis(ndarray::Axis(0)));
        let (row, col) = dirichlet_matrix(&rs.laplacian.view(), &cs.laplacian.view(), &x.view()).unwrap();
        assert!((row - rs.eigenvalues[2]).abs() < 1e-12);
        assert!((col - cs.eigenvalues[1]).abs() < 1e-12);

        // tensor-sum oracle on the row-major vectorisation
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let y = random(4, 3, &mut rng);
        let prod = graphs::product_laplacian(&rs.laplacian.view(), &cs.laplacian.view());
        let v = Array1::from_iter(y.iter().copied());
        let oracle = graphs::dirichlet_vector(&prod.view(), &v.view()).unwrap();
        let (row, col) = dirichlet_matrix(&rs.laplacian.view(), &cs.laplacian.view(), &y.view()).unwrap();
        assert!(((row + col) - oracle).abs() <= 1e-10 * oracle.abs());
    }

    #[test]
    fn dirichlet_spectral_examples() {
        let lr = array![0.0, 1.0, 2.0];
        let lc = array![0.0, 3.0, 5.0];
        let eye = Array2::<f64>::eye(3);
        let (r, c) = dirichlet_spectral(&lr.view(), &lc.view(), &eye.view(), &eye.view(), &eye.view()).unwrap();
        assert_eq!((r, c), (3.0, 8.0));
        let zero = Array2::<f64>::zeros((3, 3));
        assert_eq!(
            dirichlet_spectral(&lr.view(), &lc.view(), &eye.view(), &zero.view(), &eye.view()).unwrap(),
            (0.0, 0.0)
        );
        assert!(dirichlet_spectral(&lr.view(), &lc.slice(s![..2]), &eye.view(), &eye.view(), &eye.view()).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let model = sgmc_model(5, 4, 3, 2, 12);
        let mut buf = Vec::new();
        model.write_to(&mut buf).unwrap();
        let back = FactorModel::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, model);

        let dmf = FactorModel::identity_init(
            Variant::SgmcZ,
            Basis::identity(3),
            Basis::identity(2),
            4,
            4,
            0.5,
            Trainable::P_AND_C,
            Some(SpectralFilterBank::new(5, 5, 2, 1).unwrap()),
        )
        .unwrap();
        let mut buf = Vec::new();
        dmf.write_to(&mut buf).unwrap();
        assert_eq!(FactorModel::read_from(buf.as_slice()).unwrap(), dmf);
    }

    #[test]
    fn bank_indices_and_clipping() {
        let bank = SpectralFilterBank::new(10, 5, 3, 2).unwrap();
        assert_eq!(bank.row_indices(), vec![1, 4, 7, 10]);
        assert_eq!(bank.col_indices(), vec![1, 3, 5]);
        assert_eq!(bank.clipped_rows(5), vec![(1, 1), (4, 1), (5, 2)]);
        assert_eq!(bank.len(), 12);
        assert!(SpectralFilterBank::new(0, 1, 1, 1).is_err());
    }

    #[test]
    fn variant_invariants_are_enforced() {
        let err = FactorModel::from_parts(
            Variant::Fm,
            Basis::identity(2),
            Basis::identity(2),
            Array2::eye(2) * 2.0,
            Array2::eye(2),
            Array2::eye(2),
            Trainable::C_ONLY,
            None,
        );
        assert!(err.is_err());
        let err = FactorModel::from_parts(
            Variant::SgmcZ,
            Basis::identity(2),
            Basis::identity(2),
            Array2::eye(2),
            Array2::eye(2),
            Array2::eye(2),
            Trainable::ALL,
            None,
        );
        assert!(matches!(err, Err(Error::MissingFilterBank)));
    }
}
