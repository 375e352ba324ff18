use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::math::{kron, softmax_covariance, softmax_slice};

/// Quadratic forms from the three-class construction where a symmetric
/// regularizer cannot be dominated by the loss Hessian with a constant
/// independent of `exp(BR)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HessianDominance {
    /// `vᵀ[(σ − e₁ − ψ')(σ − e₁ − ψ')ᵀ − ψ'ψ'ᵀ] ⊗ xxᵀ v`.
    pub lhs: f64,
    /// `vᵀ[(diag σ − σσᵀ) ⊗ xxᵀ]v`.
    pub rhs_coeff: f64,
}

impl HessianDominance {
    /// The smallest `c` with `lhs ≤ c · rhs_coeff` along `v`.
    pub fn required_c(&self) -> f64 {
        self.lhs / self.rhs_coeff
    }
}

/// Evaluates both sides along `v = (e₁ − e₂) ⊗ x` at `W = diag(0, 0, B)`,
/// `x = (0, 0, R)`, with the symmetric regularizer gradient `ψ' = σ − 1/3`.
pub fn hessian_dominance_counterexample(b: f64, r: f64) -> Result<HessianDominance> {
    if !(b >= 0.0 && b.is_finite() && r > 0.0 && r.is_finite()) {
        return Err(Error::config("counterexample needs B ≥ 0 and R > 0"));
    }
    let x = DVector::from_vec(vec![0.0, 0.0, r]);
    let w = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 0.0, b]));
    let sigma = softmax_slice((&w * &x).as_slice());
    let psi = sigma.add_scalar(-1.0 / 3.0);
    let mut e1 = DVector::zeros(3);
    e1[0] = 1.0;

    let u = &sigma - &e1 - &psi;
    let outer = &u * u.transpose() - &psi * psi.transpose();
    let xx = &x * x.transpose();
    let lhs_matrix = outer.kronecker(&xx);
    let hessian = softmax_covariance(&sigma).kronecker(&xx);

    let v = kron(&DVector::from_vec(vec![1.0, -1.0, 0.0]), &x);
    Ok(HessianDominance {
        lhs: v.dot(&(&lhs_matrix * &v)),
        rhs_coeff: v.dot(&(&hessian * &v)),
    })
}
