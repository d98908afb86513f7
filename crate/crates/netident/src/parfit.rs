//! Variance-weighted parametric smoothing of a nonparametric FRF.
//!
//! The cost is the mean over frequency of `|G_hat(f) - G(f, theta)|^2 /
//! sigma^2(f)` with the nonparametric variance as the noise model. A
//! linearized (Levy) solve with iterative denominator reweighting seeds a
//! damped Gauss-Newton descent on the true cost; complex residuals are
//! stacked as real pairs with the same weight on both parts.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indirect::IndirectResult;
use crate::tf::RationalTf;

/// Orders of the parametric target-module model.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ModelOrders {
    pub numerator_order: usize,
    pub denominator_order: usize,
    /// Minimum input delay; 1 keeps the module strictly proper.
    pub delay: usize,
}

impl ModelOrders {
    pub fn n_params(&self) -> usize {
        (self.numerator_order + 1 - self.delay) + self.denominator_order
    }
}

/// Nonparametric target FRF samples feeding the parametric step.
#[derive(Debug, Clone)]
pub struct TargetFrf {
    pub lines: Vec<usize>,
    pub n: usize,
    pub g: Vec<Complex64>,
    pub var: Vec<f64>,
}

impl TargetFrf {
    /// Mid-band samples of an indirect-method result (edge-shifted
    /// windows excluded, which is the default fitting grid).
    pub fn from_indirect(result: &IndirectResult) -> Self {
        let keep = result.mid_band_positions();
        Self {
            lines: keep.iter().map(|&p| result.line_indices[p]).collect(),
            n: result.n,
            g: keep.iter().map(|&p| result.target_frf[p]).collect(),
            var: keep.iter().map(|&p| result.target_var[p]).collect(),
        }
    }

    /// All samples, edge lines included.
    pub fn from_indirect_full(result: &IndirectResult) -> Self {
        Self {
            lines: result.line_indices.clone(),
            n: result.n,
            g: result.target_frf.clone(),
            var: result.target_var.clone(),
        }
    }

    /// Replace each variance by a moving average over `2*half_width + 1`
    /// neighboring samples. Per-line variance estimates carry few degrees
    /// of freedom and their fluctuations correlate with the FRF errors;
    /// using them raw as weights skews the weighted fit. The underlying
    /// noise level varies slowly with frequency, so averaging is cheap
    /// insurance.
    pub fn smooth_variance(&mut self, half_width: usize) {
        if half_width == 0 || self.var.is_empty() {
            return;
        }
        let n = self.var.len();
        let smoothed: Vec<f64> = (0..n)
            .map(|i| {
                let lo = i.saturating_sub(half_width);
                let hi = (i + half_width).min(n - 1);
                self.var[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
            })
            .collect();
        self.var = smoothed;
    }

    fn grid_points(&self) -> Vec<Complex64> {
        self.lines
            .iter()
            .map(|&k| Complex64::from_polar(1.0, -TAU * k as f64 / self.n as f64))
            .collect()
    }

    /// Weights `1/sigma^2` with near-zero variances floored so single
    /// lines cannot dominate the cost.
    fn weights(&self) -> Vec<f64> {
        let max = self.var.iter().cloned().fold(0.0, f64::max);
        if max == 0.0 {
            return vec![1.0; self.var.len()];
        }
        let floor = 1e-14 * max;
        self.var.iter().map(|&v| 1.0 / v.max(floor)).collect()
    }
}

/// Parametric fit result.
#[derive(Debug, Clone, Serialize)]
pub struct ModuleEstimate {
    pub orders: ModelOrders,
    /// `(b_delay .. b_nb, a_1 .. a_na)`.
    pub theta: Vec<f64>,
    pub cost: f64,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    /// Approximate covariance from the weighted Gauss-Newton Hessian.
    pub theta_cov: Vec<Vec<f64>>,
    pub stable: bool,
    /// Cost after each accepted iterate.
    pub cost_history: Vec<f64>,
}

impl ModuleEstimate {
    pub fn to_tf(&self) -> Result<RationalTf> {
        theta_to_tf(&self.theta, &self.orders)
    }
}

pub fn theta_to_tf(theta: &[f64], orders: &ModelOrders) -> Result<RationalTf> {
    let (b, a) = split_theta(theta, orders);
    let mut num = vec![0.0; orders.numerator_order + 1];
    for (k, &bk) in b.iter().enumerate() {
        num[orders.delay + k] = bk;
    }
    let mut den = vec![1.0];
    den.extend_from_slice(a);
    RationalTf::new(num, den)
}

fn split_theta<'a>(theta: &'a [f64], orders: &ModelOrders) -> (&'a [f64], &'a [f64]) {
    let nb = orders.numerator_order + 1 - orders.delay;
    (&theta[..nb], &theta[nb..])
}

fn eval_num_den(theta: &[f64], orders: &ModelOrders, x: Complex64) -> (Complex64, Complex64) {
    let (b, a) = split_theta(theta, orders);
    let mut num = Complex64::new(0.0, 0.0);
    for &bk in b.iter().rev() {
        num = num * x + bk;
    }
    num *= x.powi(orders.delay as i32);
    let mut den = Complex64::new(0.0, 0.0);
    for &ak in a.iter().rev() {
        den = den * x + ak;
    }
    den = den * x + 1.0;
    (num, den)
}

/// Model FRF at a grid point `x = z^{-1}`.
pub fn eval_model(theta: &[f64], orders: &ModelOrders, x: Complex64) -> Complex64 {
    let (num, den) = eval_num_den(theta, orders, x);
    num / den
}

/// Weighted cost: mean of squared weighted residuals over the grid.
pub fn cost(theta: &[f64], orders: &ModelOrders, frf: &TargetFrf, weights: &[f64]) -> f64 {
    let x = frf.grid_points();
    let f = frf.g.len() as f64;
    let mut acc = 0.0;
    for (i, &xi) in x.iter().enumerate() {
        acc += weights[i] * (frf.g[i] - eval_model(theta, orders, xi)).norm_sqr();
    }
    acc / f
}

/// Linearized weighted LS initialization with iterative denominator
/// reweighting; returns the pass with the best true cost.
pub fn init_theta(frf: &TargetFrf, orders: &ModelOrders) -> Result<Vec<f64>> {
    let n_params = orders.n_params();
    let f = frf.g.len();
    if f < n_params {
        return Err(Error::RankDeficient(format!(
            "{f} frequency lines cannot identify {n_params} parameters"
        )));
    }
    let x = frf.grid_points();
    let base_w = frf.weights();
    let nb = orders.numerator_order + 1 - orders.delay;

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut theta = vec![0.0; n_params];
    for pass in 0..20 {
        let mut a = DMatrix::<f64>::zeros(2 * f, n_params);
        let mut rhs = DVector::<f64>::zeros(2 * f);
        for (i, &xi) in x.iter().enumerate() {
            let sk = if pass == 0 {
                1.0
            } else {
                let (_, den) = eval_num_den(&theta, orders, xi);
                1.0 / den.norm_sqr().max(1e-12)
            };
            let w = (base_w[i] * sk).sqrt();
            for k in 0..nb {
                let col = xi.powi((orders.delay + k) as i32) * w;
                a[(i, k)] = col.re;
                a[(f + i, k)] = col.im;
            }
            for k in 0..orders.denominator_order {
                let col = -frf.g[i] * xi.powi((k + 1) as i32) * w;
                a[(i, nb + k)] = col.re;
                a[(f + i, nb + k)] = col.im;
            }
            let b = frf.g[i] * w;
            rhs[i] = b.re;
            rhs[f + i] = b.im;
        }
        // Truncated pseudo-inverse: degenerate directions (e.g. zero FRF
        // data leaving the denominator unidentified) fall back to the
        // minimum-norm solution.
        let svd = a.svd(true, true);
        let smax = svd.singular_values.max();
        if smax <= 0.0 {
            return Err(Error::RankDeficient("degenerate linearized system".into()));
        }
        let sol = svd.solve(&rhs, 1e-12 * smax).expect("SVD solve");
        theta = sol.iter().copied().collect();
        let c = cost(&theta, orders, frf, &base_w);
        if c.is_finite() && best.as_ref().map_or(true, |(bc, _)| c < *bc) {
            best = Some((c, theta.clone()));
        }
    }
    best.map(|(_, t)| t).ok_or(Error::NonFiniteCost)
}

/// Stacked real residuals `rho` (so the cost is `sum rho^2`) and the
/// Jacobian `d rho / d theta` at `theta`. Complex residuals are split into
/// real and imaginary rows with the same weight.
pub fn residual_jacobian(
    frf: &TargetFrf,
    orders: &ModelOrders,
    theta: &[f64],
) -> (DVector<f64>, DMatrix<f64>) {
    let weights = frf.weights();
    let x = frf.grid_points();
    let f = frf.g.len();
    let n_params = orders.n_params();
    let nb = orders.numerator_order + 1 - orders.delay;
    let scale = 1.0 / f as f64;
    let mut rho = DVector::<f64>::zeros(2 * f);
    let mut jac = DMatrix::<f64>::zeros(2 * f, n_params);
    for (i, &xi) in x.iter().enumerate() {
        let w = (weights[i] * scale).sqrt();
        let (num, den) = eval_num_den(theta, orders, xi);
        let g = num / den;
        let r = (frf.g[i] - g) * w;
        rho[i] = r.re;
        rho[f + i] = r.im;
        for k in 0..nb {
            let d = -xi.powi((orders.delay + k) as i32) / den * w;
            jac[(i, k)] = d.re;
            jac[(f + i, k)] = d.im;
        }
        for k in 0..orders.denominator_order {
            let d = g * xi.powi((k + 1) as i32) / den * w;
            jac[(i, nb + k)] = d.re;
            jac[(f + i, nb + k)] = d.im;
        }
    }
    (rho, jac)
}

/// Minimize the weighted cost by damped Gauss-Newton from `theta0`.
pub fn fit_module(
    frf: &TargetFrf,
    orders: &ModelOrders,
    theta0: &[f64],
) -> Result<ModuleEstimate> {
    assert_eq!(theta0.len(), orders.n_params());
    let f = frf.g.len();
    let n_params = orders.n_params();

    let residual_jacobian = |theta: &[f64]| residual_jacobian(frf, orders, theta);

    let mut theta = theta0.to_vec();
    let (mut rho, mut jac) = residual_jacobian(&theta);
    let mut current = rho.norm_squared();
    if !current.is_finite() {
        return Err(Error::NonFiniteCost);
    }
    let mut cost_history = vec![current];
    let mut lambda = 1e-6;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < 500 {
        iterations += 1;
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &rho;
        let mut accepted = false;
        for _ in 0..40 {
            let mut damped = jtj.clone();
            for d in 0..n_params {
                damped[(d, d)] += lambda * jtj[(d, d)].max(1e-30);
            }
            let step = match damped.cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let candidate: Vec<f64> =
                theta.iter().zip(step.iter()).map(|(t, s)| t + s).collect();
            let (new_rho, new_jac) = residual_jacobian(&candidate);
            let new_cost = new_rho.norm_squared();
            if new_cost.is_finite() && new_cost <= current {
                let step_norm = step.norm();
                let rel_decrease = (current - new_cost) / current.max(1e-300);
                theta = candidate;
                rho = new_rho;
                jac = new_jac;
                current = new_cost;
                cost_history.push(current);
                lambda = (lambda * 0.25).max(1e-12);
                accepted = true;
                if rel_decrease < 1e-10 || step_norm < 1e-12 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // No admissible step: either we are at a (possibly flat)
            // minimum, or every candidate was non-finite.
            converged = grad.norm() <= 1e-8 * (1.0 + current);
            break;
        }
        if converged {
            break;
        }
    }

    let gradient_norm = (jac.transpose() * &rho).norm() * 2.0;
    let jtj = jac.transpose() * &jac;
    let theta_cov = match jtj.try_inverse() {
        Some(inv) => {
            let c = inv * (2.0 * current / f as f64);
            (0..n_params)
                .map(|i| (0..n_params).map(|j| c[(i, j)]).collect())
                .collect()
        }
        None => vec![vec![f64::NAN; n_params]; n_params],
    };
    let stable = theta_to_tf(&theta, orders)?.pole_radius() < 1.0;

    Ok(ModuleEstimate {
        orders: *orders,
        theta,
        cost: current,
        converged,
        iterations,
        gradient_norm,
        theta_cov,
        stable,
        cost_history,
    })
}

/// Initialization plus descent, with a few perturbed restarts.
///
/// The linearized init occasionally lands in a degenerate basin where the
/// numerator and denominator blow up together (the constant denominator
/// term becomes negligible and the model collapses to a lower-order
/// ratio). Restarting from deterministically perturbed inits and keeping
/// the lowest-cost result escapes that basin when a better minimum exists.
pub fn fit(frf: &TargetFrf, orders: &ModelOrders) -> Result<ModuleEstimate> {
    use rand::{Rng, SeedableRng};
    let theta0 = init_theta(frf, orders)?;
    let mut best = fit_module(frf, orders, &theta0)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..4 {
        let start: Vec<f64> = theta0
            .iter()
            .map(|t| {
                t * (1.0 + 0.3 * (2.0 * rng.gen::<f64>() - 1.0))
                    + 0.1 * (2.0 * rng.gen::<f64>() - 1.0)
            })
            .collect();
        if let Ok(est) = fit_module(frf, orders, &start) {
            if est.cost < best.cost {
                best = est;
            }
        }
    }
    Ok(best)
}
