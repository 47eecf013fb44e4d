//! The β-divergence, its convex/concave split, and its derivatives in the
//! model argument.
//!
//! For β ∉ {0, 1}
//!
//! ```text
//! d_β(y | x) = y (y^(β-1) - x^(β-1)) / (β(β-1)) + x^(β-1) (x - y) / β
//! ```
//!
//! with the Kullback-Leibler (β = 1) and Itakura-Saito (β = 0) forms used at
//! the two poles of that expression.

use ndarray::{ArrayBase, Data, Ix2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

/// Divergence shape parameter, `β ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Beta(f64);

impl Beta {
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "beta must be finite and nonnegative, got {value}"
            )));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Exponent of the ratio in the convex gradient term: `(β-1)·1[β>1]`.
    pub fn alpha1(self) -> f64 {
        if self.0 > 1.0 {
            self.0 - 1.0
        } else {
            0.0
        }
    }

    /// Exponent of the ratio in the data gradient term: `(β-2)·1[β≤2]`.
    pub fn alpha2(self) -> f64 {
        if self.0 <= 2.0 {
            self.0 - 2.0
        } else {
            0.0
        }
    }

    /// Multiplicative-update exponent `1 / (α₁ - α₂)`.
    pub fn eta(self) -> f64 {
        1.0 / (self.alpha1() - self.alpha2())
    }
}

impl TryFrom<f64> for Beta {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Beta::new(v)
    }
}

impl From<Beta> for f64 {
    fn from(b: Beta) -> f64 {
        b.0
    }
}

impl std::fmt::Display for Beta {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

fn is_singular(y: f64, x: f64, beta: f64) -> bool {
    (x <= 0.0 && y > 0.0 && beta < 2.0) || (beta == 0.0 && y <= 0.0)
}

/// Element-wise divergence. Callers are responsible for singular entries;
/// see [`beta_divergence`].
#[inline]
pub fn divergence_entry(y: f64, x: f64, beta: Beta) -> f64 {
    let b = beta.0;
    if b == 0.0 {
        let r = y / x;
        return r - r.ln() - 1.0;
    }
    if b == 1.0 {
        let ylog = if y > 0.0 { y * (y / x).ln() } else { 0.0 };
        return ylog - y + x;
    }
    if y == 0.0 {
        return if x == 0.0 { 0.0 } else { x.powf(b) / b };
    }
    let xb1 = x.powf(b - 1.0);
    y * (y.powf(b - 1.0) - xb1) / (b * (b - 1.0)) + xb1 * (x - y) / b
}

/// `(convex, concave)` parts of one entry. The two sum to [`divergence_entry`].
///
/// At the poles the generic expressions diverge, so the split is taken as
/// `(KL, 0)` for β = 1 and `(y/x - ln y - 1, ln x)` for β = 0.
#[inline]
pub fn split_entry(y: f64, x: f64, beta: Beta) -> (f64, f64) {
    let b = beta.0;
    if b == 1.0 {
        return (divergence_entry(y, x, beta), 0.0);
    }
    if b == 0.0 {
        return (y / x - y.ln() - 1.0, x.ln());
    }
    let xb = x.powf(b);
    let yxb1 = if y == 0.0 { 0.0 } else { y * x.powf(b - 1.0) };
    let yb = y.powf(b);

    let mut convex = yb / (b * (b - 1.0));
    let mut concave = 0.0;
    if b > 1.0 {
        convex += xb / b;
    }
    if b < 1.0 {
        concave += xb / b;
    }
    if b <= 2.0 {
        convex -= yxb1 / (b - 1.0);
    } else {
        concave -= yxb1 / (b - 1.0);
    }
    (convex, concave)
}

/// `∂d_β(y|x)/∂x = x^(β-1) - y x^(β-2)`.
#[inline]
pub fn gradient_entry(y: f64, x: f64, beta: Beta) -> f64 {
    let b = beta.0;
    x.powf(b - 1.0) - y * x.powf(b - 2.0)
}

/// `∂²d_β(y|x)/∂x² = (β-1) x^(β-2) + (2-β) x^(β-3) y`.
pub fn second_derivative(y: f64, x: f64, beta: Beta) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::DivergenceSingularity { row: 0, col: 0 });
    }
    let b = beta.0;
    Ok((b - 1.0) * x.powf(b - 2.0) + (2.0 - b) * x.powf(b - 3.0) * y)
}

fn check_inputs<S1, S2>(y: &ArrayBase<S1, Ix2>, x: &ArrayBase<S2, Ix2>, beta: Beta) -> Result<()>
where
    S1: Data<Elem = f64>,
    S2: Data<Elem = f64>,
{
    if y.dim() != x.dim() {
        return Err(shape_err("divergence operands", y.dim(), x.dim()));
    }
    for ((row, col), &yv) in y.indexed_iter() {
        if is_singular(yv, x[[row, col]], beta.0) {
            return Err(Error::DivergenceSingularity { row, col });
        }
    }
    Ok(())
}

/// `D_β(Y‖X)` summed over all entries.
pub fn beta_divergence<S1, S2>(y: &ArrayBase<S1, Ix2>, x: &ArrayBase<S2, Ix2>, beta: Beta) -> Result<f64>
where
    S1: Data<Elem = f64>,
    S2: Data<Elem = f64>,
{
    check_inputs(y, x, beta)?;
    Ok(Zip::from(y)
        .and(x)
        .fold(0.0, |acc, &yv, &xv| acc + divergence_entry(yv, xv, beta)))
}

/// `(Ď_β, D̂_β)`, the convex and concave parts of `D_β(Y‖X)` in `X`.
pub fn beta_divergence_split<S1, S2>(
    y: &ArrayBase<S1, Ix2>,
    x: &ArrayBase<S2, Ix2>,
    beta: Beta,
) -> Result<(f64, f64)>
where
    S1: Data<Elem = f64>,
    S2: Data<Elem = f64>,
{
    check_inputs(y, x, beta)?;
    if beta.0 == 0.0 && x.iter().any(|&v| v <= 0.0) {
        return Err(Error::DivergenceSingularity { row: 0, col: 0 });
    }
    Ok(Zip::from(y).and(x).fold((0.0, 0.0), |(c, v), &yv, &xv| {
        let (a, b) = split_entry(yv, xv, beta);
        (c + a, v + b)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn b(v: f64) -> Beta {
        Beta::new(v).unwrap()
    }

    #[test]
    fn beta_validation_and_exponents() {
        assert!(Beta::new(-0.1).is_err());
        assert!(Beta::new(f64::NAN).is_err());
        assert_eq!(b(2.0).alpha1(), 1.0);
        assert_eq!(b(2.0).alpha2(), 0.0);
        assert_eq!(b(2.0).eta(), 1.0);
        assert_eq!(b(0.5).eta(), 1.0 / 1.5);
        assert_eq!(b(3.0).eta(), 0.5);
        // α₁ - α₂ ≥ 1 everywhere on [0, 3], so η never blows up
        for i in 0..=300 {
            let beta = b(i as f64 / 100.0);
            assert!(beta.alpha1() - beta.alpha2() >= 1.0 - 1e-12, "{beta}");
        }
    }

    #[test]
    fn identity_is_zero() {
        let y = array![[0.3, 1.7], [2.0, 0.01]];
        for beta in [0.0, 0.5, 1.0, 1.5, 2.0, 3.0] {
            assert!(beta_divergence(&y, &y, b(beta)).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn frobenius_case() {
        let d = beta_divergence(&array![[2.0]], &array![[1.0]], b(2.0)).unwrap();
        assert!((d - 0.5).abs() < 1e-15);
    }

    #[test]
    fn kl_value_and_limit() {
        let e = std::f64::consts::E;
        let d = beta_divergence(&array![[e]], &array![[1.0]], b(1.0)).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
        for beta in [1.0 - 1e-6, 1.0 + 1e-6] {
            let g = divergence_entry(e, 1.0, b(beta));
            assert!((g - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn singular_entries_rejected() {
        let r = beta_divergence(&array![[1.0, 1.0]], &array![[1.0, 0.0]], b(1.0));
        assert!(matches!(r, Err(Error::DivergenceSingularity { row: 0, col: 1 })));
        // zero model against zero data is fine
        assert_eq!(beta_divergence(&array![[0.0]], &array![[0.0]], b(0.5)).unwrap(), 0.0);
        // β = 2 has no singularity
        assert_eq!(beta_divergence(&array![[1.0]], &array![[0.0]], b(2.0)).unwrap(), 0.5);
        assert!(beta_divergence(&array![[1.0]], &array![[1.0, 2.0]], b(2.0)).is_err());
    }

    #[test]
    fn split_hand_expansion() {
        // β = 2: Ď = x²/2 - yx + y²/2 = 2 - 2 + 0.5, D̂ = 0
        let (c, v) = beta_divergence_split(&array![[1.0]], &array![[2.0]], b(2.0)).unwrap();
        assert!((c - 0.5).abs() < 1e-15);
        assert_eq!(v, 0.0);
        let y = array![[0.4, 2.5]];
        let (c, v) = beta_divergence_split(&y, &y, b(0.5)).unwrap();
        assert!((c + v).abs() < 1e-12);
    }

    #[test]
    fn second_derivative_cases() {
        assert_eq!(second_derivative(3.0, 0.7, b(2.0)).unwrap(), 1.0);
        assert!((second_derivative(4.0, 2.0, b(1.0)).unwrap() - 1.0).abs() < 1e-15);
        assert!(second_derivative(1.0, 0.0, b(1.0)).is_err());
    }
}
