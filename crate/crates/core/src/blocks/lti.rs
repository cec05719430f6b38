//! Linear time-invariant pieces: rational transfer functions in `s` and their
//! controllable canonical state-space realization.

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TfError {
    #[error("denominator is the zero polynomial")]
    ZeroDenominator,
    #[error("improper transfer function: numerator degree {num} exceeds denominator degree {den}")]
    ImproperTF { num: usize, den: usize },
    #[error("non-finite coefficient")]
    NonFinite,
}

/// Rational function `num(s) / den(s)`, coefficients in ascending powers of `s`.
///
/// Construction strips exact trailing zeros, so the last entry of `den` is
/// always the nonzero leading coefficient and `degree(num) <= degree(den)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferFunction {
    num: Vec<f64>,
    den: Vec<f64>,
}

pub(crate) fn trim_poly(mut p: Vec<f64>) -> Vec<f64> {
    while p.len() > 1 && p[p.len() - 1] == 0.0 {
        p.pop();
    }
    if p.is_empty() {
        p.push(0.0);
    }
    p
}

pub(crate) fn poly_degree(p: &[f64]) -> Option<usize> {
    p.iter().rposition(|&c| c != 0.0)
}

impl TransferFunction {
    pub fn new(num: Vec<f64>, den: Vec<f64>) -> Result<Self, TfError> {
        if num.iter().chain(den.iter()).any(|c| !c.is_finite()) {
            return Err(TfError::NonFinite);
        }
        let num = trim_poly(num);
        let den = trim_poly(den);
        let den_deg = poly_degree(&den).ok_or(TfError::ZeroDenominator)?;
        let num_deg = poly_degree(&num).unwrap_or(0);
        if num_deg > den_deg {
            return Err(TfError::ImproperTF {
                num: num_deg,
                den: den_deg,
            });
        }
        Ok(Self { num, den })
    }

    pub fn num(&self) -> &[f64] {
        &self.num
    }

    pub fn den(&self) -> &[f64] {
        &self.den
    }

    pub fn order(&self) -> usize {
        self.den.len() - 1
    }

    /// True when numerator and denominator have equal degree (nonzero direct term).
    pub fn is_biproper(&self) -> bool {
        poly_degree(&self.num) == Some(self.order())
    }
}

/// Single-input single-output realization `x' = A x + B u`, `y = C x + D u`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: RowDVector<f64>,
    pub d: f64,
}

impl StateSpace {
    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn output(&self, x: &[f64], u: f64) -> f64 {
        self.c.iter().zip(x).map(|(c, x)| c * x).sum::<f64>() + self.d * u
    }

    pub fn derivative(&self, x: &[f64], u: f64, dx: &mut [f64]) {
        let n = self.order();
        for (i, dxi) in dx.iter_mut().enumerate().take(n) {
            let mut acc = self.b[i] * u;
            for (j, xj) in x.iter().enumerate().take(n) {
                acc += self.a[(i, j)] * xj;
            }
            *dxi = acc;
        }
    }
}

/// Controllable canonical form of `tf` after scaling the denominator to be monic.
pub fn tf_to_state_space(tf: &TransferFunction) -> StateSpace {
    let n = tf.order();
    let lead = tf.den[n];
    let a_coef: Vec<f64> = tf.den.iter().map(|c| c / lead).collect();
    let mut b_coef: Vec<f64> = tf.num.iter().map(|c| c / lead).collect();
    b_coef.resize(n + 1, 0.0);

    let d = b_coef[n];
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n.saturating_sub(1) {
        a[(i, i + 1)] = 1.0;
    }
    if n > 0 {
        for j in 0..n {
            a[(n - 1, j)] = -a_coef[j];
        }
    }
    let mut b = DVector::zeros(n);
    if n > 0 {
        b[n - 1] = 1.0;
    }
    let c = RowDVector::from_iterator(n, (0..n).map(|i| b_coef[i] - d * a_coef[i]));
    StateSpace { a, b, c, d }
}
