//! Discrete-time rational transfer function primitives.
//!
//! Coefficients are stored ascending in powers of the backward shift
//! `q^{-1}`, so `num = [b0, b1, ..]` means `b0 + b1 q^{-1} + ..`. The
//! denominator is kept monic (`den[0] == 1`); constructors normalize and
//! reject a zero leading coefficient.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{Error, Result};

/// SISO rational transfer function in `q^{-1}` with monic denominator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalTf {
    num: Vec<f64>,
    den: Vec<f64>,
}

impl RationalTf {
    pub fn new(num: Vec<f64>, den: Vec<f64>) -> Result<Self> {
        if den.is_empty() {
            return Err(Error::InvalidTf("empty denominator".into()));
        }
        if num.iter().chain(den.iter()).any(|c| !c.is_finite()) {
            return Err(Error::InvalidTf("non-finite coefficient".into()));
        }
        let a0 = den[0];
        if a0 == 0.0 {
            return Err(Error::InvalidTf("leading denominator coefficient is zero".into()));
        }
        let num = num.iter().map(|b| b / a0).collect();
        let den = den.iter().map(|a| a / a0).collect();
        Ok(Self { num, den })
    }

    /// Unit transfer function (gain 1, no dynamics).
    pub fn identity() -> Self {
        Self { num: vec![1.0], den: vec![1.0] }
    }

    pub fn num(&self) -> &[f64] {
        &self.num
    }

    pub fn den(&self) -> &[f64] {
        &self.den
    }

    /// A module has no direct feedthrough iff its zero-lag numerator
    /// coefficient vanishes.
    pub fn is_strictly_proper(&self) -> bool {
        self.num.first().copied().unwrap_or(0.0) == 0.0
    }

    /// Monic with unit feedthrough, as required of diagonal noise filters.
    pub fn is_monic(&self) -> bool {
        self.num.first().copied().unwrap_or(0.0) == 1.0 && self.den[0] == 1.0
    }

    /// Evaluate at an arbitrary point `x = z^{-1}` of the shift variable.
    pub fn eval_at(&self, x: Complex64) -> Complex64 {
        poly_eval(&self.num, x) / poly_eval(&self.den, x)
    }

    /// Frequency response on the DFT grid `z_k = e^{j 2 pi k / n}` at the
    /// requested lines, in input order.
    pub fn freq_response(&self, line_indices: &[usize], n: usize) -> Result<Vec<Complex64>> {
        let mut out = Vec::with_capacity(line_indices.len());
        for &k in line_indices {
            assert!(k < n, "line index {k} out of range for N = {n}");
            let x = Complex64::from_polar(1.0, -TAU * k as f64 / n as f64);
            let d = poly_eval(&self.den, x);
            if d.norm() < 1e-14 {
                return Err(Error::DenominatorZeroOnGrid { line: k });
            }
            out.push(poly_eval(&self.num, x) / d);
        }
        Ok(out)
    }

    /// Run the difference equation
    /// `y(t) = sum_s b_s u(t-s) - sum_{s>=1} a_s y(t-s)`
    /// over the whole input record, zero initial conditions.
    pub fn filter(&self, input: &[f64]) -> Vec<f64> {
        assert!(input.iter().all(|u| u.is_finite()), "non-finite input sample");
        let mut y = vec![0.0; input.len()];
        for t in 0..input.len() {
            let mut acc = 0.0;
            for (s, &b) in self.num.iter().enumerate() {
                if s <= t {
                    acc += b * input[t - s];
                }
            }
            for (s, &a) in self.den.iter().enumerate().skip(1) {
                if s <= t {
                    acc -= a * y[t - s];
                }
            }
            y[t] = acc;
        }
        y
    }

    /// First `length` samples of the impulse response.
    pub fn impulse_response(&self, length: usize) -> Vec<f64> {
        assert!(length >= 1);
        let mut impulse = vec![0.0; length];
        impulse[0] = 1.0;
        self.filter(&impulse)
    }

    /// Largest pole magnitude, from the eigenvalues of the denominator
    /// companion matrix. Returns 0 for a static denominator.
    pub fn pole_radius(&self) -> f64 {
        poly_root_radius(&self.den)
    }
}

pub(crate) fn poly_eval(coeffs: &[f64], x: Complex64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        acc = acc * x + c;
    }
    acc
}

/// Largest root magnitude of `c[0] + c[1] x + ...` interpreted as a
/// polynomial in `q^{-1}`; the roots in `z` are the reciprocals, so this
/// reports max |z| over the corresponding poles/zeros.
pub(crate) fn poly_root_radius(coeffs: &[f64]) -> f64 {
    // Trim trailing zeros; the polynomial in z is
    // z^n * (c0 + c1/z + .. + cn/z^n) = c0 z^n + c1 z^{n-1} + .. + cn.
    let mut c = coeffs.to_vec();
    while c.len() > 1 && c.last() == Some(&0.0) {
        c.pop();
    }
    let n = c.len() - 1;
    if n == 0 {
        return 0.0;
    }
    // Companion matrix of the monic z-polynomial z^n + (c1/c0) z^{n-1} + ...
    let c0 = c[0];
    let mut m = nalgebra::DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        m[(i, i - 1)] = 1.0;
    }
    for s in 1..=n {
        m[(0, s - 1)] = -c[s] / c0;
    }
    m.complex_eigenvalues().iter().map(|e| e.norm()).fold(0.0, f64::max)
}

pub(crate) fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}
