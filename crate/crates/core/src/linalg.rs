//! Dense symmetric eigensolver and singular value decomposition.
//!
//! The eigensolver is Householder tridiagonalisation followed by implicit QL
//! with Wilkinson-style shifts. The SVD is one-sided (Hestenes) Jacobi, which
//! keeps small singular values accurate to working precision relative to the
//! largest one.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Relative asymmetry tolerated by [`symmetric_eigen`].
pub const SYMMETRY_TOL: f64 = 1e-10;

/// `scale` on the main diagonal, zeros elsewhere; works for any shape.
pub fn rect_identity(rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    let mut out = Array2::zeros((rows, cols));
    for i in 0..rows.min(cols) {
        out[[i, i]] = scale;
    }
    out
}

pub fn frobenius(a: &ArrayView2<'_, f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `‖A − Aᵀ‖_F / ‖A‖_F`, or the absolute asymmetry when `A = 0`.
pub fn relative_asymmetry(a: &ArrayView2<'_, f64>) -> f64 {
    let norm = frobenius(a);
    let diff = (a - &a.t()).iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        diff
    } else {
        diff / norm
    }
}

/// Result of [`symmetric_eigen`]: ascending eigenvalues and orthonormal
/// eigenvectors stored as columns.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
}

/// Full eigendecomposition of a dense symmetric matrix.
///
/// Eigenvalues come back in ascending order. Each eigenvector is flipped so
/// that its largest-magnitude entry is positive (first such index on ties).
pub fn symmetric_eigen(a: &ArrayView2<'_, f64>) -> Result<SymmetricEigen> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::ShapeMismatch(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    let asym = relative_asymmetry(a);
    if asym > SYMMETRY_TOL {
        return Err(Error::AsymmetricInput(asym));
    }
    if n == 0 {
        return Ok(SymmetricEigen {
            values: Array1::zeros(0),
            vectors: Array2::zeros((0, 0)),
        });
    }

    // Row-major working copy of the symmetrised input.
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            v[i * n + j] = 0.5 * (a[[i, j]] + a[[j, i]]);
        }
    }
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(n, &mut v, &mut d, &mut e);

    // QL rotates pairs of eigenvector columns; store them as rows instead.
    let mut zt = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            zt[i * n + k] = v[k * n + i];
        }
    }
    implicit_ql(n, &mut zt, &mut d, &mut e, 100 * n)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| d[x].total_cmp(&d[y]).then(x.cmp(&y)));

    let mut values = Array1::zeros(n);
    let mut vectors = Array2::zeros((n, n));
    for (col, &src) in order.iter().enumerate() {
        values[col] = d[src];
        let row = &zt[src * n..(src + 1) * n];
        let sign = sign_of_dominant(row);
        for k in 0..n {
            vectors[[k, col]] = sign * row[k];
        }
    }
    Ok(SymmetricEigen { values, vectors })
}

fn sign_of_dominant(v: &[f64]) -> f64 {
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for &x in v {
        if x.abs() > best {
            best = x.abs();
            sign = if x < 0.0 { -1.0 } else { 1.0 };
        }
    }
    sign
}

/// Householder reduction to tridiagonal form. On exit `v` holds the
/// accumulated orthogonal transform, `d` the diagonal and `e[1..]` the
/// sub-diagonal.
fn tridiagonalize(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    let at = |i: usize, j: usize| i * n + j;
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in &d[..i] {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
                v[at(j, i)] = 0.0;
            }
        } else {
            for dk in &mut d[..i] {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[at(j, i)] = f;
                g = e[j] + v[at(j, j)] * f;
                for k in (j + 1)..i {
                    g += v[at(k, j)] * d[k];
                    e[k] += v[at(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[at(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n.saturating_sub(1) {
        v[at(n - 1, i)] = v[at(i, i)];
        v[at(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[at(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[at(k, i + 1)] * v[at(k, j)];
                }
                for k in 0..=i {
                    v[at(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[at(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
        v[at(n - 1, j)] = 0.0;
    }
    v[at(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

/// Implicit QL on a symmetric tridiagonal matrix. `zt` holds eigenvectors
/// as rows and is updated in place.
fn implicit_ql(
    n: usize,
    zt: &mut [f64],
    d: &mut [f64],
    e: &mut [f64],
    budget: usize,
) -> Result<()> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let eps = f64::EPSILON;
    let mut f = 0.0;
    let mut tst1 = 0.0f64;
    let mut iterations = 0usize;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            loop {
                iterations += 1;
                if iterations > budget {
                    return Err(Error::ConvergenceFailure(budget));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    let (lo, hi) = zt.split_at_mut((i + 1) * n);
                    let row_i = &mut lo[i * n..];
                    let row_next = &mut hi[..n];
                    for k in 0..n {
                        let zh = row_next[k];
                        row_next[k] = s * row_i[k] + c * zh;
                        row_i[k] = c * row_i[k] - s * zh;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Thin SVD `A = U diag(s) Vᵀ` with `k = min(m, n)` singular triplets in
/// descending order. Left vectors belonging to exactly zero singular values
/// are returned as zero columns.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Array2<f64>,
    pub s: Array1<f64>,
    pub v: Array2<f64>,
}

const JACOBI_MAX_SWEEPS: usize = 80;

pub fn svd(a: &ArrayView2<'_, f64>) -> Result<Svd> {
    let (m, n) = a.dim();
    if m < n {
        let t = svd(&a.t())?;
        return Ok(Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        });
    }
    // Columns of A as contiguous rows.
    let mut w: Vec<f64> = a.t().iter().copied().collect();
    let mut vt = vec![0.0; n * n];
    for i in 0..n {
        vt[i * n + i] = 1.0;
    }
    let tol = 1e-15;
    // Columns below this squared norm are numerically zero.
    let negligible = (f64::EPSILON * f64::EPSILON) * w.iter().map(|x| x * x).sum::<f64>();
    let mut converged = n < 2;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for i in 0..n - 1 {
            for j in (i + 1)..n {
                let (alpha, beta, gamma) = {
                    let ci = &w[i * m..(i + 1) * m];
                    let cj = &w[j * m..(j + 1) * m];
                    let mut alpha = 0.0;
                    let mut beta = 0.0;
                    let mut gamma = 0.0;
                    for k in 0..m {
                        alpha += ci[k] * ci[k];
                        beta += cj[k] * cj[k];
                        gamma += ci[k] * cj[k];
                    }
                    (alpha, beta, gamma)
                };
                if alpha <= negligible || beta <= negligible || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_rows(&mut w, m, i, j, c, s);
                rotate_rows(&mut vt, n, i, j, c, s);
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(Error::ConvergenceFailure(JACOBI_MAX_SWEEPS));
    }

    let norms: Vec<f64> = (0..n)
        .map(|i| w[i * m..(i + 1) * m].iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]).then(x.cmp(&y)));

    let mut u = Array2::zeros((m, n));
    let mut s = Array1::zeros(n);
    let mut v = Array2::zeros((n, n));
    for (col, &src) in order.iter().enumerate() {
        let sigma = norms[src];
        s[col] = sigma;
        if sigma > 0.0 {
            for k in 0..m {
                u[[k, col]] = w[src * m + k] / sigma;
            }
        }
        for k in 0..n {
            v[[k, col]] = vt[src * n + k];
        }
    }
    Ok(Svd { u, s, v })
}

fn rotate_rows(buf: &mut [f64], len: usize, i: usize, j: usize, c: f64, s: f64) {
    let (lo, hi) = buf.split_at_mut(j * len);
    let ri = &mut lo[i * len..(i + 1) * len];
    let rj = &mut hi[..len];
    for k in 0..len {
        let x = ri[k];
        let y = rj[k];
        ri[k] = c * x - s * y;
        rj[k] = s * x + c * y;
    }
}

/// Singular values only, descending.
pub fn singular_values(a: &ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    svd(a).map(|d| d.s)
}

/// `‖QᵀQ − I‖_F` for a matrix with (intended) orthonormal columns.
pub fn orthonormality_defect(q: &ArrayView2<'_, f64>) -> f64 {
    let gram = q.t().dot(q);
    let k = gram.nrows();
    let mut acc = 0.0;
    for i in 0..k {
        for j in 0..k {
            let target = if i == j { 1.0 } else { 0.0 };
            acc += (gram[[i, j]] - target).powi(2);
        }
    }
    acc.sqrt()
}

/// Reassemble `V diag(λ) Vᵀ`.
pub fn reconstruct_symmetric(values: &Array1<f64>, vectors: &Array2<f64>) -> Array2<f64> {
    let scaled = vectors * &values.view().insert_axis(Axis(0));
    scaled.dot(&vectors.t())
}
