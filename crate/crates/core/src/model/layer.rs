use crate::error::{BsiError, Result};
use crate::numkit::{svd, Matrix, RngStream};

/// Linear map in basis form:
/// `W̃ = Σ_{i active} σ_i u_i v_iᵀ + Σ_j ũ_j ṽ_jᵀ`, mapping `ℝ^m → ℝ^n`.
///
/// `u` (n×r) and `v` (m×r) are fixed at reparameterization time; only the
/// singular values and the auxiliary factors are trainable. A pruned basis
/// has `active[i] == false` and `sigma[i] == 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisLinear {
    u: Matrix,
    v: Matrix,
    sigma: Vec<f64>,
    aux_u: Matrix,
    aux_v: Matrix,
    active: Vec<bool>,
}

/// Init scale numerator for auxiliary factors; entries are drawn as
/// `N(0,1) · AUX_INIT_SCALE / √max(n, m)`.
pub const AUX_INIT_SCALE: f64 = 1e-3;

impl BasisLinear {
    /// Factors `w` by SVD and appends `aux_rank` small random rank-one terms.
    pub fn reparameterize(w: &Matrix, aux_rank: usize, rng: &mut RngStream) -> Result<Self> {
        let f = svd(w)?;
        let (n, m) = w.shape();
        let scale = AUX_INIT_SCALE / (n.max(m) as f64).sqrt();
        let aux_u = Matrix::from_fn(n, aux_rank, |_, _| rng.standard_normal() * scale);
        let aux_v = Matrix::from_fn(m, aux_rank, |_, _| rng.standard_normal() * scale);
        let r = f.s.len();
        Ok(Self {
            u: f.u,
            v: f.v,
            sigma: f.s,
            aux_u,
            aux_v,
            active: vec![true; r],
        })
    }

    pub fn from_parts(
        u: Matrix,
        v: Matrix,
        sigma: Vec<f64>,
        aux_u: Matrix,
        aux_v: Matrix,
        active: Vec<bool>,
    ) -> Result<Self> {
        let r = sigma.len();
        if u.cols() != r || v.cols() != r || active.len() != r {
            return Err(BsiError::invalid(format!(
                "basis rank mismatch: U has {}, V has {}, sigma {}, active {}",
                u.cols(),
                v.cols(),
                r,
                active.len()
            )));
        }
        if aux_u.rows() != u.rows() || aux_v.rows() != v.rows() || aux_u.cols() != aux_v.cols() {
            return Err(BsiError::invalid("auxiliary factor shapes do not match the bases"));
        }
        if sigma.iter().any(|s| !s.is_finite()) {
            return Err(BsiError::invalid("non-finite singular value"));
        }
        if sigma.iter().zip(&active).any(|(&s, &a)| !a && s != 0.0) {
            return Err(BsiError::invalid("inactive basis with non-zero singular value"));
        }
        Ok(Self {
            u,
            v,
            sigma,
            aux_u,
            aux_v,
            active,
        })
    }

    pub fn out_dim(&self) -> usize {
        self.u.rows()
    }

    pub fn in_dim(&self) -> usize {
        self.v.rows()
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn aux_rank(&self) -> usize {
        self.aux_u.cols()
    }

    pub fn u(&self) -> &Matrix {
        &self.u
    }

    pub fn v(&self) -> &Matrix {
        &self.v
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn aux_u(&self) -> &Matrix {
        &self.aux_u
    }

    pub fn aux_v(&self) -> &Matrix {
        &self.aux_v
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.rank()).filter(|&i| self.active[i]).collect()
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    /// Overwrites the singular values. Entries of inactive bases must be 0.
    pub fn set_sigma(&mut self, sigma: &[f64]) -> Result<()> {
        if sigma.len() != self.rank() {
            return Err(BsiError::invalid(format!(
                "expected {} singular values, got {}",
                self.rank(),
                sigma.len()
            )));
        }
        if sigma.iter().zip(&self.active).any(|(&s, &a)| !a && s != 0.0) {
            return Err(BsiError::invalid("cannot assign a value to a pruned basis"));
        }
        self.sigma.copy_from_slice(sigma);
        Ok(())
    }

    pub(crate) fn sigma_mut(&mut self) -> &mut [f64] {
        &mut self.sigma
    }

    pub(crate) fn aux_mut(&mut self) -> (&mut Matrix, &mut Matrix) {
        (&mut self.aux_u, &mut self.aux_v)
    }

    /// Effective weight `W̃` (n×m).
    pub fn weight(&self) -> Matrix {
        let mut w = self.basis_weight();
        for j in 0..self.aux_rank() {
            w.add_outer(1.0, &self.aux_u.column(j), &self.aux_v.column(j));
        }
        w
    }

    /// Basis part of `W̃` only.
    pub fn basis_weight(&self) -> Matrix {
        let mut w = Matrix::zeros(self.out_dim(), self.in_dim());
        for i in self.active_indices() {
            w.add_outer(self.sigma[i], &self.u.column(i), &self.v.column(i));
        }
        w
    }

    /// Auxiliary part of `W̃` only.
    pub fn aux_weight(&self) -> Matrix {
        let mut w = Matrix::zeros(self.out_dim(), self.in_dim());
        for j in 0..self.aux_rank() {
            w.add_outer(1.0, &self.aux_u.column(j), &self.aux_v.column(j));
        }
        w
    }

    /// `∂ℓ/∂σ_i = u_iᵀ G v_i` for a weight gradient `G = ∂ℓ/∂W̃`; 0 for pruned
    /// bases.
    pub fn sigma_grad_from_weight_grad(&self, g: &Matrix) -> Result<Vec<f64>> {
        if g.shape() != (self.out_dim(), self.in_dim()) {
            return Err(BsiError::invalid("weight gradient shape mismatch"));
        }
        let gv = g.matmul(&self.v)?;
        Ok((0..self.rank())
            .map(|i| {
                if !self.active[i] {
                    return 0.0;
                }
                (0..self.out_dim()).map(|k| self.u[(k, i)] * gv[(k, i)]).sum()
            })
            .collect())
    }

    /// Prunes the listed bases. Already-pruned indices are ignored; returns
    /// how many bases were newly pruned.
    pub fn prune(&mut self, indices: &[usize]) -> Result<usize> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.rank()) {
            return Err(BsiError::invalid(format!(
                "basis index {bad} out of range for rank {}",
                self.rank()
            )));
        }
        let mut pruned = 0;
        for &i in indices {
            if self.active[i] {
                self.active[i] = false;
                self.sigma[i] = 0.0;
                pruned += 1;
            }
        }
        Ok(pruned)
    }

    /// Stored parameters: each active basis keeps σ plus its two vectors;
    /// every auxiliary pair keeps both vectors.
    pub fn param_count(&self) -> usize {
        let (n, m) = (self.out_dim(), self.in_dim());
        self.active_count() * (1 + n + m) + self.aux_rank() * (n + m)
    }

    /// Basis storage only (no auxiliary factors).
    pub fn basis_param_count(&self) -> usize {
        self.active_count() * (1 + self.out_dim() + self.in_dim())
    }
}
