//! Basis selection with second-order importance.
//!
//! Linear layers are rewritten as `W̃ = Σ σ_i u_i v_iᵀ + Σ ũ_j ṽ_jᵀ` with the
//! SVD bases frozen. Bases are pruned by a second-order Taylor importance
//! score whose Hessian-diagonal term is estimated from gradient differences
//! at symmetric Rademacher perturbations of σ.

pub mod cli;
pub mod error;
pub mod importance;
pub mod model;
pub mod numkit;
pub mod oracles;
pub mod persist;
pub mod probe;
pub mod spectra;

pub use error::{BsiError, Result};
