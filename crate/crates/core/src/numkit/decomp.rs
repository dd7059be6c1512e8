//! One-sided Jacobi SVD and cyclic Jacobi symmetric eigendecomposition.
//!
//! Both routines canonicalize their output so factorizations are reproducible:
//! values are sorted (descending singular value, or descending eigenvalue
//! magnitude), near-ties within `1e-12` keep the original column order, and
//! each left vector is flipped so its largest-magnitude entry is positive.

use super::matrix::{dot, norm2, Matrix};
use crate::error::{BsiError, Result};

const MAX_SWEEPS: usize = 80;
const ROTATION_TOL: f64 = 1e-15;
const TIE_TOL: f64 = 1e-12;

/// Thin SVD `W = U · Diag(S) · Vᵀ` with `r = min(rows, cols)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    pub fn reconstruct(&self) -> Matrix {
        let mut w = Matrix::zeros(self.u.rows(), self.v.rows());
        for (k, &s) in self.s.iter().enumerate() {
            w.add_outer(s, &self.u.column(k), &self.v.column(k));
        }
        w
    }
}

pub fn svd(w: &Matrix) -> Result<SvdFactors> {
    if w.rows() == 0 || w.cols() == 0 {
        return Err(BsiError::invalid("svd of an empty matrix"));
    }
    if !w.is_finite() {
        return Err(BsiError::invalid("svd input contains non-finite entries"));
    }
    if w.rows() >= w.cols() {
        let (u_cols, s, v_cols) = jacobi_tall(w);
        assemble(w.rows(), w.cols(), u_cols, s, v_cols)
    } else {
        let (v_cols, s, u_cols) = jacobi_tall(&w.transpose());
        assemble(w.rows(), w.cols(), u_cols, s, v_cols)
    }
}

/// Hestenes iteration on the columns of a tall matrix. Returns unsorted
/// (left columns, singular values, right columns).
fn jacobi_tall(a: &Matrix) -> (Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>) {
    let (n, m) = a.shape();
    let mut cols: Vec<Vec<f64>> = (0..m).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..m)
        .map(|j| {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            e
        })
        .collect();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..m {
            for q in (p + 1)..m {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma == 0.0 || gamma.abs() <= ROTATION_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut cols, p, q, c, s);
                rotate_pair(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let sigma: Vec<f64> = cols.iter().map(|c| norm2(c)).collect();
    let sigma_max = sigma.iter().cloned().fold(0.0, f64::max);
    let null_tol = sigma_max * (n.max(m) as f64) * f64::EPSILON;

    let mut left: Vec<Option<Vec<f64>>> = cols
        .into_iter()
        .zip(&sigma)
        .map(|(c, &s)| {
            if s > null_tol && s > 0.0 {
                Some(c.iter().map(|x| x / s).collect())
            } else {
                None
            }
        })
        .collect();
    complete_orthonormal(n, &mut left);
    (left.into_iter().map(Option::unwrap).collect(), sigma, v)
}

fn rotate_pair(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = cols.split_at_mut(q);
    let cp = &mut head[p];
    let cq = &mut tail[0];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Fills `None` slots with unit vectors orthogonal to every other slot.
fn complete_orthonormal(n: usize, cols: &mut [Option<Vec<f64>>]) {
    let missing: Vec<usize> = (0..cols.len()).filter(|&j| cols[j].is_none()).collect();
    let mut candidate = 0usize;
    for j in missing {
        loop {
            assert!(candidate < n, "orthonormal completion ran out of candidates");
            let mut e = vec![0.0; n];
            e[candidate] = 1.0;
            candidate += 1;
            // Two Gram-Schmidt passes.
            for _ in 0..2 {
                for c in cols.iter().flatten() {
                    let d = dot(&e, c);
                    for (x, y) in e.iter_mut().zip(c) {
                        *x -= d * y;
                    }
                }
            }
            let len = norm2(&e);
            if len > 1e-6 {
                e.iter_mut().for_each(|x| *x /= len);
                cols[j] = Some(e);
                break;
            }
        }
    }
}

/// Sort order: descending key, near-ties (within `TIE_TOL` of the group
/// leader) kept in original index order.
fn canonical_order(keys: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]).then(a.cmp(&b)));
    let mut start = 0;
    while start < order.len() {
        let lead = keys[order[start]];
        let mut end = start + 1;
        while end < order.len() && (lead - keys[order[end]]).abs() <= TIE_TOL {
            end += 1;
        }
        order[start..end].sort_unstable();
        start = end;
    }
    order
}

/// Flips `left` (and `right`, if given) so the largest-magnitude entry of
/// `left` is positive.
fn fix_sign(left: &mut [f64], right: Option<&mut [f64]>) {
    let mut best = 0usize;
    for (i, x) in left.iter().enumerate() {
        if x.abs() > left[best].abs() {
            best = i;
        }
    }
    if left[best] < 0.0 {
        left.iter_mut().for_each(|x| *x = -*x);
        if let Some(r) = right {
            r.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

fn assemble(
    rows: usize,
    cols: usize,
    mut u_cols: Vec<Vec<f64>>,
    s: Vec<f64>,
    mut v_cols: Vec<Vec<f64>>,
) -> Result<SvdFactors> {
    let order = canonical_order(&s);
    for k in 0..s.len() {
        fix_sign(&mut u_cols[k], Some(&mut v_cols[k]));
    }
    let u: Vec<Vec<f64>> = order.iter().map(|&k| u_cols[k].clone()).collect();
    let v: Vec<Vec<f64>> = order.iter().map(|&k| v_cols[k].clone()).collect();
    let s: Vec<f64> = order.iter().map(|&k| s[k]).collect();
    Ok(SvdFactors {
        u: Matrix::from_columns(rows, &u)?,
        s,
        v: Matrix::from_columns(cols, &v)?,
    })
}

/// Eigenpairs of a symmetric matrix, sorted by descending `|λ|`.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: Vec<f64>,
    /// Eigenvectors as columns, in the same order as `values`.
    pub vectors: Matrix,
}

impl SymEig {
    pub fn reconstruct(&self) -> Matrix {
        let n = self.vectors.rows();
        let mut h = Matrix::zeros(n, n);
        for (k, &lam) in self.values.iter().enumerate() {
            let u = self.vectors.column(k);
            h.add_outer(lam, &u, &u);
        }
        h
    }
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations. Inputs with
/// asymmetry above `1e-8 · max(1, max|h|)` are rejected; smaller asymmetry is
/// removed by symmetrizing.
pub fn sym_eig(h: &Matrix) -> Result<SymEig> {
    if !h.is_square() {
        return Err(BsiError::invalid(format!(
            "sym_eig needs a square matrix, got {}x{}",
            h.rows(),
            h.cols()
        )));
    }
    if !h.is_finite() {
        return Err(BsiError::invalid("sym_eig input contains non-finite entries"));
    }
    let scale = h.max_abs().max(1.0);
    if h.asymmetry() > 1e-8 * scale {
        return Err(BsiError::invalid(format!(
            "sym_eig input is not symmetric (asymmetry {:.3e})",
            h.asymmetry()
        )));
    }
    let n = h.rows();
    let mut a = h.symmetrized();
    let mut v = Matrix::identity(n);
    let total = a.frobenius_norm();

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= ROTATION_TOL * total || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if theta.is_infinite() {
                    0.0
                } else {
                    let sgn = if theta >= 0.0 { 1.0 } else { -1.0 };
                    sgn / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                if t == 0.0 {
                    a[(p, q)] = 0.0;
                    a[(q, p)] = 0.0;
                    continue;
                }
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..n {
                    if r == p || r == q {
                        continue;
                    }
                    let arp = a[(r, p)];
                    let arq = a[(r, q)];
                    let new_p = c * arp - s * arq;
                    let new_q = s * arp + c * arq;
                    a[(r, p)] = new_p;
                    a[(p, r)] = new_p;
                    a[(r, q)] = new_q;
                    a[(q, r)] = new_q;
                }
                a[(p, p)] -= t * apq;
                a[(q, q)] += t * apq;
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for r in 0..n {
                    let vrp = v[(r, p)];
                    let vrq = v[(r, q)];
                    v[(r, p)] = c * vrp - s * vrq;
                    v[(r, q)] = s * vrp + c * vrq;
                }
            }
        }
    }

    let raw: Vec<f64> = a.diagonal();
    let magnitudes: Vec<f64> = raw.iter().map(|x| x.abs()).collect();
    let order = canonical_order(&magnitudes);
    let mut columns = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    for &k in &order {
        let mut col = v.column(k);
        fix_sign(&mut col, None);
        columns.push(col);
        values.push(raw[k]);
    }
    Ok(SymEig {
        values,
        vectors: Matrix::from_columns(n, &columns)?,
    })
}
