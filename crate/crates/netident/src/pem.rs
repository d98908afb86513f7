//! Direct prediction-error baseline: time-domain MISO identification with
//! parametric modules and a parametric (Box-Jenkins style) noise model.
//!
//! The predictor error is `eps = H^{-1} (w_j - sum_k G_k w_k - r_j)` with
//! independent rational modules `G_k = b_k / a_k` and a monic rational
//! noise model `H = C / D`. The sum of squared errors is minimized by
//! damped Gauss-Newton with analytic gradients, initialized from a
//! high-order ARX projection reduced to the requested orders, with a few
//! perturbed restarts to dodge local minima.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::parfit::{self, ModelOrders, TargetFrf};
use crate::simulator::TimeSeriesDataset;
use crate::tf::{poly_mul, poly_root_radius, RationalTf};

/// MISO problem structure: output node, per-predictor module orders, and
/// noise-model orders (both polynomials monic).
#[derive(Debug, Clone)]
pub struct MisoStructure {
    pub output: usize,
    pub predictors: BTreeMap<usize, ModelOrders>,
    pub noise_num_order: usize,
    pub noise_den_order: usize,
}

impl MisoStructure {
    pub fn n_params(&self) -> usize {
        self.predictors.values().map(ModelOrders::n_params).sum::<usize>()
            + self.noise_num_order
            + self.noise_den_order
    }

    fn max_order(&self) -> usize {
        self.predictors
            .values()
            .flat_map(|o| [o.numerator_order, o.denominator_order])
            .chain([self.noise_num_order, self.noise_den_order])
            .max()
            .unwrap_or(0)
    }
}

/// Fitted MISO model: one rational module per predictor plus the noise
/// model `H = C / D`.
#[derive(Debug, Clone, Serialize)]
pub struct PemResult {
    /// Per-predictor `(b_delay..b_nb, a_1..a_na)`.
    pub module_theta: BTreeMap<usize, Vec<f64>>,
    /// Noise numerator `(c_1..c_nc)` and denominator `(d_1..d_nd)`.
    pub noise_c: Vec<f64>,
    pub noise_d: Vec<f64>,
    pub cost: f64,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub restarts_used: usize,
}

impl PemResult {
    pub fn module_tf(&self, structure: &MisoStructure, node: usize) -> Result<RationalTf> {
        let orders = structure.predictors.get(&node).ok_or(Error::UnknownNode(node))?;
        parfit::theta_to_tf(&self.module_theta[&node], orders)
    }

    pub fn noise_tf(&self) -> Result<RationalTf> {
        let mut num = vec![1.0];
        num.extend_from_slice(&self.noise_c);
        let mut den = vec![1.0];
        den.extend_from_slice(&self.noise_d);
        RationalTf::new(num, den)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PemOptions {
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for PemOptions {
    fn default() -> Self {
        Self { restarts: 5, max_iter: 100, seed: 0 }
    }
}

// Internal parameter pack: flat theta with per-predictor (b, a), then c, d.
struct Layout {
    nodes: Vec<usize>,
    orders: Vec<ModelOrders>,
    nc: usize,
    nd: usize,
}

impl Layout {
    fn new(structure: &MisoStructure) -> Self {
        Self {
            nodes: structure.predictors.keys().copied().collect(),
            orders: structure.predictors.values().copied().collect(),
            nc: structure.noise_num_order,
            nd: structure.noise_den_order,
        }
    }

    fn n_params(&self) -> usize {
        self.orders.iter().map(ModelOrders::n_params).sum::<usize>() + self.nc + self.nd
    }

    /// Per-predictor `(b_full, a_full)` polynomials plus `(c_full, d_full)`.
    fn unpack(&self, theta: &[f64]) -> (Vec<(Vec<f64>, Vec<f64>)>, Vec<f64>, Vec<f64>) {
        let mut pos = 0;
        let mut modules = Vec::with_capacity(self.orders.len());
        for o in &self.orders {
            let nb = o.numerator_order + 1 - o.delay;
            let mut b_full = vec![0.0; o.numerator_order + 1];
            for k in 0..nb {
                b_full[o.delay + k] = theta[pos + k];
            }
            pos += nb;
            let mut a_full = vec![1.0];
            a_full.extend_from_slice(&theta[pos..pos + o.denominator_order]);
            pos += o.denominator_order;
            modules.push((b_full, a_full));
        }
        let mut c_full = vec![1.0];
        c_full.extend_from_slice(&theta[pos..pos + self.nc]);
        pos += self.nc;
        let mut d_full = vec![1.0];
        d_full.extend_from_slice(&theta[pos..pos + self.nd]);
        (modules, c_full, d_full)
    }

    /// All filtering denominators must stay strictly stable for the
    /// simulation-form predictor to be admissible.
    fn admissible(&self, theta: &[f64]) -> bool {
        let (modules, c_full, _) = self.unpack(theta);
        if poly_root_radius(&c_full) >= 0.999 {
            return false;
        }
        modules.iter().all(|(_, a)| poly_root_radius(a) < 0.999)
    }
}

fn filter_poly(num: &[f64], den: &[f64], input: &[f64]) -> Vec<f64> {
    RationalTf::new(num.to_vec(), den.to_vec()).expect("monic filter").filter(input)
}

fn shift(base: &[f64], lag: usize) -> Vec<f64> {
    let mut out = vec![0.0; base.len()];
    out[lag..].copy_from_slice(&base[..base.len() - lag]);
    out
}

/// Prediction-error record for a parameter vector.
fn prediction_error(
    layout: &Layout,
    theta: &[f64],
    inputs: &[&[f64]],
    output: &[f64],
) -> Vec<f64> {
    let (modules, c_full, d_full) = layout.unpack(theta);
    let n = output.len();
    let mut z = output.to_vec();
    for ((b, a), u) in modules.iter().zip(inputs) {
        let y = filter_poly(b, a, u);
        for t in 0..n {
            z[t] -= y[t];
        }
    }
    filter_poly(&d_full, &c_full, &z)
}

struct GnState {
    eps: Vec<f64>,
    jac: DMatrix<f64>,
    cost: f64,
}

fn evaluate(
    layout: &Layout,
    theta: &[f64],
    inputs: &[&[f64]],
    output: &[f64],
    skip: usize,
) -> GnState {
    let n = output.len();
    let n_eff = n - skip;
    let (modules, c_full, d_full) = layout.unpack(theta);

    let mut z = output.to_vec();
    let mut module_outputs = Vec::with_capacity(modules.len());
    for ((b, a), u) in modules.iter().zip(inputs) {
        let y = filter_poly(b, a, u);
        for t in 0..n {
            z[t] -= y[t];
        }
        module_outputs.push(y);
    }
    let eps = filter_poly(&d_full, &c_full, &z);

    let n_params = layout.n_params();
    let mut jac = DMatrix::<f64>::zeros(n_eff, n_params);
    let mut col = 0;
    for (idx, (b, a)) in modules.iter().enumerate() {
        let o = &layout.orders[idx];
        let u = inputs[idx];
        // d eps / d b_m = -q^{-m} (D / (C a)) u
        let base_b = filter_poly(&d_full, &poly_mul(&c_full, a), u);
        for m in o.delay..=o.numerator_order {
            let s = shift(&base_b, m);
            for t in 0..n_eff {
                jac[(t, col)] = -s[skip + t];
            }
            col += 1;
        }
        // d eps / d a_m = +q^{-m} (D b / (C a^2)) u = +q^{-m} (D/(C a)) y
        let _ = b;
        let base_a = filter_poly(&d_full, &poly_mul(&c_full, a), &module_outputs[idx]);
        for m in 1..=o.denominator_order {
            let s = shift(&base_a, m);
            for t in 0..n_eff {
                jac[(t, col)] = s[skip + t];
            }
            col += 1;
        }
    }
    // d eps / d c_m = -q^{-m} (1/C) eps
    let base_c = filter_poly(&[1.0], &c_full, &eps);
    for m in 1..=layout.nc {
        let s = shift(&base_c, m);
        for t in 0..n_eff {
            jac[(t, col)] = -s[skip + t];
        }
        col += 1;
    }
    // d eps / d d_m = +q^{-m} (1/C) z
    let base_d = filter_poly(&[1.0], &c_full, &z);
    for m in 1..=layout.nd {
        let s = shift(&base_d, m);
        for t in 0..n_eff {
            jac[(t, col)] = s[skip + t];
        }
        col += 1;
    }
    debug_assert_eq!(col, n_params);

    let cost = eps[skip..].iter().map(|e| e * e).sum::<f64>() / n_eff as f64;
    GnState { eps, jac, cost }
}

fn gauss_newton(
    layout: &Layout,
    theta0: &[f64],
    inputs: &[&[f64]],
    output: &[f64],
    skip: usize,
    max_iter: usize,
) -> Result<(Vec<f64>, f64, bool, usize, f64)> {
    if !layout.admissible(theta0) {
        return Err(Error::UnstableNoiseInverse);
    }
    let n_eff = output.len() - skip;
    let mut theta = theta0.to_vec();
    let mut state = evaluate(layout, &theta, inputs, output, skip);
    if !state.cost.is_finite() {
        return Err(Error::NonFiniteCost);
    }
    let mut lambda = 1e-4;
    let mut converged = false;
    let mut iterations = 0;
    let n_params = layout.n_params();

    while iterations < max_iter {
        iterations += 1;
        let eps_eff = DVector::from_iterator(n_eff, state.eps[skip..].iter().copied());
        let jtj = state.jac.transpose() * &state.jac;
        let grad = state.jac.transpose() * &eps_eff;
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
            if !layout.admissible(&candidate) {
                lambda *= 10.0;
                continue;
            }
            let new_state = evaluate(layout, &candidate, inputs, output, skip);
            if new_state.cost.is_finite() && new_state.cost <= state.cost {
                let rel = (state.cost - new_state.cost) / state.cost.max(1e-300);
                let step_norm = step.norm();
                theta = candidate;
                state = new_state;
                lambda = (lambda * 0.25).max(1e-12);
                accepted = true;
                if rel < 1e-10 || step_norm < 1e-12 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            converged = grad.norm() * 2.0 / n_eff as f64 <= 1e-8 * (1.0 + state.cost);
            break;
        }
        if converged {
            break;
        }
    }
    let eps_eff = DVector::from_iterator(n_eff, state.eps[skip..].iter().copied());
    let gradient_norm = (state.jac.transpose() * eps_eff).norm() * 2.0 / n_eff as f64;
    Ok((theta, state.cost, converged, iterations, gradient_norm))
}

/// High-order ARX projection followed by rational order reduction, used
/// as the automatic starting point.
fn arx_init(
    layout: &Layout,
    inputs: &[&[f64]],
    output: &[f64],
    arx_order: usize,
) -> Result<Vec<f64>> {
    let n = output.len();
    let p = arx_order;
    let n_inputs = inputs.len();
    let cols = p * (1 + n_inputs);
    if n <= p + cols {
        return Err(Error::RankDeficient("record too short for ARX projection".into()));
    }
    let rows = n - p;
    let mut a = DMatrix::<f64>::zeros(rows, cols);
    let mut b = DVector::<f64>::zeros(rows);
    for t in p..n {
        let row = t - p;
        for s in 1..=p {
            a[(row, s - 1)] = -output[t - s];
            for (i, u) in inputs.iter().enumerate() {
                a[(row, p * (1 + i) + s - 1)] = u[t - s];
            }
        }
        b[row] = output[t];
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    if smax <= 0.0 {
        return Err(Error::RankDeficient("degenerate ARX regression".into()));
    }
    let sol = svd.solve(&b, 1e-10 * smax).expect("SVD solve");

    let mut a_poly = vec![1.0];
    a_poly.extend((0..p).map(|s| sol[s]));
    // Reduce each high-order module FRF to the requested orders with the
    // linearized rational fit.
    let grid_n = 512;
    let lines: Vec<usize> = (1..grid_n / 2).collect();
    let a_resp: Vec<Complex64> = lines
        .iter()
        .map(|&k| {
            crate::tf::poly_eval(&a_poly, Complex64::from_polar(1.0, -TAU * k as f64 / grid_n as f64))
        })
        .collect();

    let mut theta = Vec::with_capacity(layout.n_params());
    for (i, o) in layout.orders.iter().enumerate() {
        let mut b_poly = vec![0.0];
        b_poly.extend((0..p).map(|s| sol[p * (1 + i) + s]));
        let g: Vec<Complex64> = lines
            .iter()
            .enumerate()
            .map(|(idx, &k)| {
                let x = Complex64::from_polar(1.0, -TAU * k as f64 / grid_n as f64);
                crate::tf::poly_eval(&b_poly, x) / a_resp[idx]
            })
            .collect();
        let frf = TargetFrf { lines: lines.clone(), n: grid_n, g, var: vec![1.0; lines.len()] };
        let sub = parfit::init_theta(&frf, o)?;
        theta.extend(sub);
    }
    // Noise model starts at H = 1.
    theta.extend(std::iter::repeat(0.0).take(layout.nc + layout.nd));
    Ok(stabilize(layout, theta))
}

/// Pull any unstable filtering denominator back inside the unit circle by
/// radially contracting its roots.
fn stabilize(layout: &Layout, mut theta: Vec<f64>) -> Vec<f64> {
    let mut pos = 0;
    for o in &layout.orders {
        pos += o.numerator_order + 1 - o.delay;
        contract(&mut theta[pos..pos + o.denominator_order]);
        pos += o.denominator_order;
    }
    contract(&mut theta[pos..pos + layout.nc]);
    theta
}

fn contract(a_tail: &mut [f64]) {
    let mut full = vec![1.0];
    full.extend_from_slice(a_tail.iter().as_slice());
    let rho = poly_root_radius(&full);
    if rho >= 0.999 {
        let shrink = 0.95 / rho;
        for (s, c) in a_tail.iter_mut().enumerate() {
            *c *= shrink.powi(s as i32 + 1);
        }
    }
}

/// Minimize the prediction-error cost for the MISO structure. `theta0 =
/// None` uses the ARX projection plus perturbed restarts.
pub fn pem_fit(
    ds: &TimeSeriesDataset,
    structure: &MisoStructure,
    theta0: Option<&[f64]>,
    opts: &PemOptions,
) -> Result<PemResult> {
    let layout = Layout::new(structure);
    let n_params = layout.n_params();
    if structure.predictors.contains_key(&structure.output) {
        return Err(Error::InvariantViolation {
            path: "structure".into(),
            message: "output node cannot be its own predictor".into(),
        });
    }
    if ds.n < 10 * n_params {
        return Err(Error::InsufficientLines { needed: 10 * n_params, got: ds.n });
    }
    let inputs: Vec<&[f64]> =
        layout.nodes.iter().map(|&k| ds.w_meas[k - 1].as_slice()).collect();
    // A direct reference at the output is known and subtracted.
    let output: Vec<f64> = ds.w_meas[structure.output - 1]
        .iter()
        .zip(&ds.r[structure.output - 1])
        .map(|(w, r)| w - r)
        .collect();
    let skip = structure.max_order();

    let starts: Vec<Vec<f64>> = match theta0 {
        Some(t) => {
            assert_eq!(t.len(), n_params);
            vec![t.to_vec()]
        }
        None => {
            let base = arx_init(&layout, &inputs, &output, 15.min(ds.n / 10))?;
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x7e95_a11d);
            let mut starts = vec![base.clone()];
            for _ in 1..opts.restarts.max(1) {
                let perturbed: Vec<f64> = base
                    .iter()
                    .map(|t| t * (1.0 + 0.2 * (rng.gen::<f64>() - 0.5)) + 0.01 * (rng.gen::<f64>() - 0.5))
                    .collect();
                starts.push(stabilize(&layout, perturbed));
            }
            starts
        }
    };

    let mut best: Option<(Vec<f64>, f64, bool, usize, f64)> = None;
    let mut restarts_used = 0;
    for start in &starts {
        match gauss_newton(&layout, start, &inputs, &output, skip, opts.max_iter) {
            Ok(run) => {
                restarts_used += 1;
                if best.as_ref().map_or(true, |b| run.1 < b.1) {
                    best = Some(run);
                }
            }
            Err(Error::UnstableNoiseInverse) | Err(Error::NonFiniteCost) => continue,
            Err(e) => return Err(e),
        }
    }
    let (theta, cost, converged, iterations, gradient_norm) =
        best.ok_or(Error::UnstableNoiseInverse)?;

    let mut module_theta = BTreeMap::new();
    let mut pos = 0;
    for (&node, o) in &structure.predictors {
        let len = o.n_params();
        module_theta.insert(node, theta[pos..pos + len].to_vec());
        pos += len;
    }
    let noise_c = theta[pos..pos + layout.nc].to_vec();
    let noise_d = theta[pos + layout.nc..].to_vec();

    Ok(PemResult {
        module_theta,
        noise_c,
        noise_d,
        cost,
        converged,
        iterations,
        gradient_norm,
        restarts_used,
    })
}

/// Prediction errors of a fitted (or candidate) model, for residual
/// diagnostics.
pub fn prediction_errors(
    ds: &TimeSeriesDataset,
    structure: &MisoStructure,
    theta: &[f64],
) -> Vec<f64> {
    let layout = Layout::new(structure);
    let inputs: Vec<&[f64]> =
        layout.nodes.iter().map(|&k| ds.w_meas[k - 1].as_slice()).collect();
    let output: Vec<f64> = ds.w_meas[structure.output - 1]
        .iter()
        .zip(&ds.r[structure.output - 1])
        .map(|(w, r)| w - r)
        .collect();
    prediction_error(&layout, theta, &inputs, &output)
}

/// Flat truth vector for the benchmark MISO structure, for tests and
/// sanity baselines.
pub fn pack_theta(structure: &MisoStructure, modules: &BTreeMap<usize, Vec<f64>>, c: &[f64], d: &[f64]) -> Vec<f64> {
    let mut theta = Vec::new();
    for node in structure.predictors.keys() {
        theta.extend_from_slice(&modules[node]);
    }
    theta.extend_from_slice(c);
    theta.extend_from_slice(d);
    theta
}

/// Benchmark MISO setup for output node 3 with true model orders.
pub fn benchmark_structure() -> MisoStructure {
    let mut predictors = BTreeMap::new();
    predictors.insert(1, ModelOrders { numerator_order: 2, denominator_order: 2, delay: 1 });
    predictors.insert(2, ModelOrders { numerator_order: 1, denominator_order: 1, delay: 1 });
    predictors.insert(4, ModelOrders { numerator_order: 4, denominator_order: 4, delay: 1 });
    MisoStructure { output: 3, predictors, noise_num_order: 3, noise_den_order: 3 }
}

/// True parameters of the benchmark MISO structure.
pub fn benchmark_truth() -> Vec<f64> {
    let structure = benchmark_structure();
    let mut modules = BTreeMap::new();
    modules.insert(1, vec![1.0, 0.05, 1.0, 0.6]);
    modules.insert(2, vec![0.09, 0.5]);
    modules.insert(4, vec![1.184, -0.647, 0.151, -0.082, -0.8, 0.279, -0.048, 0.01]);
    pack_theta(
        &structure,
        &modules,
        &[-0.505, 0.155, -0.01],
        &[-0.729, 0.236, -0.019],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::benchmark_network;
    use crate::simulator::{simulate, ExcitationSpec};

    fn white_refs(var: f64) -> BTreeMap<usize, ExcitationSpec> {
        [1, 2, 4]
            .into_iter()
            .map(|n| (n, ExcitationSpec::White { variance: var }))
            .collect()
    }

    #[test]
    fn prediction_error_is_zero_at_truth_on_noise_free_data() {
        let mut model = benchmark_network();
        model.noise_cov *= 0.0;
        let ds = simulate(&model, &white_refs(0.1), 600, 3).unwrap();
        let eps = prediction_errors(&ds, &benchmark_structure(), &benchmark_truth());
        assert!(eps.iter().all(|e| e.abs() < 1e-10), "max {}", eps.iter().fold(0.0f64, |m, e| m.max(e.abs())));
    }

    #[test]
    fn noise_free_fit_from_truth_recovers_coefficients() {
        let mut model = benchmark_network();
        model.noise_cov *= 0.0;
        let ds = simulate(&model, &white_refs(0.1), 600, 5).unwrap();
        let structure = benchmark_structure();
        let result =
            pem_fit(&ds, &structure, Some(&benchmark_truth()), &PemOptions::default()).unwrap();
        assert!(result.cost < 1e-18, "cost {}", result.cost);
        let g31 = &result.module_theta[&1];
        for (got, want) in g31.iter().zip([1.0, 0.05, 1.0, 0.6]) {
            assert!((got - want).abs() < 1e-6, "{g31:?}");
        }
    }

    #[test]
    fn fir_output_error_case_is_recovered_exactly() {
        // Single predictor, H = 1, FIR module: the problem is linear in
        // the parameters and solved to machine precision.
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 400;
        let u: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
        let fir = RationalTf::new(vec![0.0, 0.7, -0.3, 0.1], vec![1.0]).unwrap();
        let y = fir.filter(&u);
        let ds = TimeSeriesDataset {
            n,
            w: vec![u.clone(), y.clone()],
            w_meas: vec![u, y],
            r: vec![vec![0.0; n]; 2],
            v: vec![vec![0.0; n]; 2],
            seed: 8,
        };
        let mut predictors = BTreeMap::new();
        predictors
            .insert(1, ModelOrders { numerator_order: 3, denominator_order: 0, delay: 1 });
        let structure =
            MisoStructure { output: 2, predictors, noise_num_order: 0, noise_den_order: 0 };
        let result = pem_fit(&ds, &structure, None, &PemOptions::default()).unwrap();
        let b = &result.module_theta[&1];
        for (got, want) in b.iter().zip([0.7, -0.3, 0.1]) {
            assert!((got - want).abs() < 1e-8, "{b:?}");
        }
    }

    #[test]
    fn stochastic_benchmark_fit_is_finite_and_converges() {
        let model = benchmark_network();
        let ds = simulate(&model, &white_refs(0.1), 500, 11).unwrap();
        let structure = benchmark_structure();
        let opts = PemOptions { restarts: 3, ..Default::default() };
        let result = pem_fit(&ds, &structure, None, &opts).unwrap();
        assert!(result.cost > 0.0 && result.cost.is_finite());
        assert!(result.module_theta[&1].iter().all(|t| t.is_finite()));
        // The automatic start must land at least as low as polishing from
        // the true parameters does.
        let from_truth =
            pem_fit(&ds, &structure, Some(&benchmark_truth()), &opts).unwrap();
        assert!(
            result.cost <= 1.05 * from_truth.cost,
            "auto {} vs truth-start {}",
            result.cost,
            from_truth.cost
        );
    }

    #[test]
    fn record_too_short_is_rejected() {
        let model = benchmark_network();
        let ds = simulate(&model, &white_refs(0.1), 120, 2).unwrap();
        assert!(matches!(
            pem_fit(&ds, &benchmark_structure(), None, &PemOptions::default()),
            Err(Error::InsufficientLines { .. })
        ));
    }

    #[test]
    fn unstable_start_is_rejected() {
        let model = benchmark_network();
        let ds = simulate(&model, &white_refs(0.1), 500, 2).unwrap();
        let mut theta = benchmark_truth();
        // Make the noise numerator C wildly unstable.
        let pos = 4 + 2 + 8;
        theta[pos] = -2.5;
        assert!(matches!(
            pem_fit(&ds, &benchmark_structure(), Some(&theta), &PemOptions::default()),
            Err(Error::UnstableNoiseInverse)
        ));
    }
}
