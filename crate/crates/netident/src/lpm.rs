//! Local polynomial FRF estimation with per-frequency covariance.
//!
//! Around every center bin a sliding window of `2 n_w + 1` lines is
//! fitted with degree-`d` polynomials in the line offset, one set per
//! input plus one for the additive transient term. The zero-order
//! coefficient of each input polynomial is the FRF estimate at the
//! center; the residual variance over the window, scaled by the diagonal
//! of the regressor Gram inverse, gives its variance. Windows near the
//! band edges are shifted inward rather than truncated, so the degrees of
//! freedom stay constant across the band.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Forward DFT `X(k) = sum_t x(t) e^{-j 2 pi k t / N}` at bins `0..=N/2`.
pub fn dft(samples: &[f64], n: usize) -> Vec<Complex64> {
    assert_eq!(samples.len(), n);
    let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf.truncate(n / 2 + 1);
    buf
}

/// Column-aligned input/output DFT values on a common line grid.
#[derive(Debug, Clone)]
pub struct SpectrumRecord {
    /// `n_i` rows of input spectra.
    pub u: Vec<Vec<Complex64>>,
    /// `n_y` rows of output spectra.
    pub y: Vec<Vec<Complex64>>,
    pub line_indices: Vec<usize>,
    /// Original record length.
    pub n: usize,
}

impl SpectrumRecord {
    /// Transform time records onto the full half-spectrum grid `0..=N/2`.
    pub fn from_time(inputs: &[&[f64]], outputs: &[&[f64]], n: usize) -> Self {
        let u = inputs.iter().map(|x| dft(x, n)).collect();
        let y = outputs.iter().map(|x| dft(x, n)).collect();
        let line_indices = (0..=n / 2).collect();
        Self { u, y, line_indices, n }
    }

    pub fn n_inputs(&self) -> usize {
        self.u.len()
    }

    pub fn n_outputs(&self) -> usize {
        self.y.len()
    }
}

/// Polynomial degree and window half-width of the local fit.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct LpmConfig {
    pub degree: usize,
    pub half_width: usize,
}

impl Default for LpmConfig {
    fn default() -> Self {
        // 25-point window: the benchmark bandwidth rounded up to odd.
        Self { degree: 2, half_width: 12 }
    }
}

impl LpmConfig {
    pub fn window(&self) -> usize {
        2 * self.half_width + 1
    }

    fn params_per_output(&self, n_inputs: usize) -> usize {
        (self.degree + 1) * (n_inputs + 1)
    }
}

/// Per-line FRM estimate with variances and transient term.
#[derive(Debug, Clone)]
pub struct FrfEstimate {
    /// `n_y x n_i` complex FRM per line.
    pub g: Vec<DMatrix<Complex64>>,
    /// Per-entry variance of `g`.
    pub var_g: Vec<DMatrix<f64>>,
    /// Transient estimate per output, per line.
    pub t: Vec<Vec<Complex64>>,
    /// Residual variance per output, per line.
    pub residual_var: Vec<Vec<f64>>,
    pub line_indices: Vec<usize>,
    /// True where the window had to be shifted off-center (band edges).
    pub edge_shifted: Vec<bool>,
    pub n: usize,
}

impl FrfEstimate {
    /// Positions whose windows are symmetric around the center line.
    pub fn mid_band_positions(&self) -> Vec<usize> {
        self.edge_shifted
            .iter()
            .enumerate()
            .filter(|(_, &shifted)| !shifted)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Estimate the FRM, transient, and per-entry variance at every line of
/// the record.
pub fn lpm_estimate(spec: &SpectrumRecord, cfg: &LpmConfig) -> Result<FrfEstimate> {
    let n_i = spec.n_inputs();
    let n_y = spec.n_outputs();
    let n_f = spec.line_indices.len();
    let window = cfg.window();
    let n_params = cfg.params_per_output(n_i);
    if window < n_params {
        return Err(Error::RankDeficient(format!(
            "window of {window} lines cannot identify {n_params} parameters"
        )));
    }
    if n_f < window {
        return Err(Error::InsufficientLines { needed: window, got: n_f });
    }

    let solved: Result<Vec<CenterSolution>> = (0..n_f)
        .into_par_iter()
        .map(|c| solve_center(spec, cfg, c))
        .collect();
    let solved = solved?;

    let mut est = FrfEstimate {
        g: Vec::with_capacity(n_f),
        var_g: Vec::with_capacity(n_f),
        t: Vec::with_capacity(n_f),
        residual_var: Vec::with_capacity(n_f),
        line_indices: spec.line_indices.clone(),
        edge_shifted: Vec::with_capacity(n_f),
        n: spec.n,
    };
    for sol in solved {
        let mut g = DMatrix::zeros(n_y, n_i);
        let mut var_g = DMatrix::zeros(n_y, n_i);
        let mut t_row = Vec::with_capacity(n_y);
        let mut rv_row = Vec::with_capacity(n_y);
        for (out, x) in sol.per_output.iter().enumerate() {
            for i in 0..n_i {
                g[(out, i)] = x.coeffs[i * (cfg.degree + 1)];
                var_g[(out, i)] = x.residual_var * sol.gram_inv_diag[i * (cfg.degree + 1)];
            }
            t_row.push(x.coeffs[n_i * (cfg.degree + 1)]);
            rv_row.push(x.residual_var);
        }
        est.g.push(g);
        est.var_g.push(var_g);
        est.t.push(t_row);
        est.residual_var.push(rv_row);
        est.edge_shifted.push(sol.edge_shifted);
    }
    Ok(est)
}

struct OutputSolution {
    coeffs: Vec<Complex64>,
    residual_var: f64,
}

struct CenterSolution {
    per_output: Vec<OutputSolution>,
    gram_inv_diag: Vec<f64>,
    edge_shifted: bool,
}

/// Build the regression matrix for one window: one polynomial block per
/// input, evaluated against that input's spectrum, plus a transient block.
fn window_regressors(
    spec: &SpectrumRecord,
    cfg: &LpmConfig,
    start: usize,
    center: usize,
) -> DMatrix<Complex64> {
    let n_i = spec.n_inputs();
    let window = cfg.window();
    let deg = cfg.degree;
    let center_line = spec.line_indices[center] as f64;
    DMatrix::from_fn(window, cfg.params_per_output(n_i), |p, col| {
        let offset = spec.line_indices[start + p] as f64 - center_line;
        let block = col / (deg + 1);
        let power = (col % (deg + 1)) as i32;
        let poly = Complex64::new(offset.powi(power), 0.0);
        if block < n_i {
            spec.u[block][start + p] * poly
        } else {
            poly
        }
    })
}

fn solve_center(spec: &SpectrumRecord, cfg: &LpmConfig, center: usize) -> Result<CenterSolution> {
    let n_f = spec.line_indices.len();
    let window = cfg.window();
    let n_params = cfg.params_per_output(spec.n_inputs());
    let start = center
        .saturating_sub(cfg.half_width)
        .min(n_f - window);
    let edge_shifted = start != center.wrapping_sub(cfg.half_width);

    let a = window_regressors(spec, cfg, start, center);

    // Real embedding [[Re, -Im], [Im, Re]] keeps the solve on a plain real
    // orthogonal factorization.
    let mut a_re = DMatrix::<f64>::zeros(2 * window, 2 * n_params);
    for p in 0..window {
        for c in 0..n_params {
            let z = a[(p, c)];
            a_re[(p, c)] = z.re;
            a_re[(p, n_params + c)] = -z.im;
            a_re[(window + p, c)] = z.im;
            a_re[(window + p, n_params + c)] = z.re;
        }
    }
    let svd = a_re.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= 0.0 || smax / smin > 1e12 {
        return Err(Error::RankDeficientWindow { line: spec.line_indices[center] });
    }

    // Gram inverse diagonal for the variance of each complex coefficient.
    let gram = a.adjoint() * &a;
    let gram_inv = gram
        .try_inverse()
        .ok_or(Error::RankDeficientWindow { line: spec.line_indices[center] })?;
    let gram_inv_diag: Vec<f64> = (0..n_params).map(|i| gram_inv[(i, i)].re).collect();

    let dof = window - n_params;
    let mut per_output = Vec::with_capacity(spec.n_outputs());
    for y in &spec.y {
        let mut b = DVector::<f64>::zeros(2 * window);
        for p in 0..window {
            b[p] = y[start + p].re;
            b[window + p] = y[start + p].im;
        }
        let x_re = svd.solve(&b, 0.0).expect("SVD solve after rank check");
        let coeffs: Vec<Complex64> =
            (0..n_params).map(|c| Complex64::new(x_re[c], x_re[n_params + c])).collect();
        let mut rss = 0.0;
        for p in 0..window {
            let mut fit = Complex64::new(0.0, 0.0);
            for c in 0..n_params {
                fit += a[(p, c)] * coeffs[c];
            }
            rss += (y[start + p] - fit).norm_sqr();
        }
        let residual_var = if dof > 0 { rss / dof as f64 } else { 0.0 };
        per_output.push(OutputSolution { coeffs, residual_var });
    }
    Ok(CenterSolution { per_output, gram_inv_diag, edge_shifted })
}

/// Export an estimate as CSV: one row per line, FRM entries in row-major
/// order with their variances, then the transient and residual variance
/// per output.
pub fn write_frf_csv(est: &FrfEstimate, path: &Path) -> Result<()> {
    let n_y = est.t.first().map_or(0, Vec::len);
    let n_i = est.g.first().map_or(0, DMatrix::ncols);
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut header = vec!["line".to_string(), "freq_norm".to_string()];
    for j in 0..n_y {
        for i in 0..n_i {
            header.push(format!("re_g_{}_{}", j + 1, i + 1));
            header.push(format!("im_g_{}_{}", j + 1, i + 1));
        }
    }
    for j in 0..n_y {
        for i in 0..n_i {
            header.push(format!("var_g_{}_{}", j + 1, i + 1));
        }
    }
    for j in 0..n_y {
        header.push(format!("re_t_{}", j + 1));
        header.push(format!("im_t_{}", j + 1));
        header.push(format!("residual_var_{}", j + 1));
    }
    header.push("edge_shifted".to_string());
    writeln!(out, "{}", header.join(","))?;
    for (pos, &line) in est.line_indices.iter().enumerate() {
        let mut row = vec![line.to_string(), format!("{:.10}", line as f64 / est.n as f64)];
        for j in 0..n_y {
            for i in 0..n_i {
                row.push(format!("{:.12e}", est.g[pos][(j, i)].re));
                row.push(format!("{:.12e}", est.g[pos][(j, i)].im));
            }
        }
        for j in 0..n_y {
            for i in 0..n_i {
                row.push(format!("{:.12e}", est.var_g[pos][(j, i)]));
            }
        }
        for j in 0..n_y {
            row.push(format!("{:.12e}", est.t[pos][j].re));
            row.push(format!("{:.12e}", est.t[pos][j].im));
            row.push(format!("{:.12e}", est.residual_var[pos][j]));
        }
        row.push((est.edge_shifted[pos] as u8).to_string());
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::TAU;

    fn random_complex(rng: &mut ChaCha8Rng) -> Complex64 {
        Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
    }

    #[test]
    fn dft_of_constant_is_dc_only() {
        let x = vec![3.5; 32];
        let spec = dft(&x, 32);
        assert!((spec[0] - Complex64::new(3.5 * 32.0, 0.0)).norm() < 1e-10);
        for bin in &spec[1..] {
            assert!(bin.norm() < 1e-10);
        }
    }

    #[test]
    fn dft_of_cosine_hits_single_bin() {
        let n = 64;
        let k0 = 5;
        let x: Vec<f64> = (0..n).map(|t| (TAU * (k0 * t) as f64 / n as f64).cos()).collect();
        let spec = dft(&x, n);
        assert!((spec[k0].norm() - n as f64 / 2.0).abs() < 1e-9);
        for (k, bin) in spec.iter().enumerate() {
            if k != k0 {
                assert!(bin.norm() < 1e-9, "bin {k}");
            }
        }
    }

    #[test]
    fn dft_matches_quadratic_time_oracle_and_parseval() {
        let n = 48;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
        let spec = dft(&x, n);
        let mut full = vec![Complex64::new(0.0, 0.0); n];
        for (k, f) in full.iter_mut().enumerate() {
            for (t, &xt) in x.iter().enumerate() {
                *f += xt * Complex64::from_polar(1.0, -TAU * (k * t % n) as f64 / n as f64);
            }
        }
        for k in 0..=n / 2 {
            assert!((spec[k] - full[k]).norm() < 1e-10);
        }
        let time_energy: f64 = x.iter().map(|v| v * v).sum();
        let freq_energy: f64 = full.iter().map(|f| f.norm_sqr()).sum::<f64>() / n as f64;
        assert!((time_energy - freq_energy).abs() < 1e-10 * time_energy);
    }

    #[test]
    fn static_gain_recovered_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n_f = 64;
        let u: Vec<Complex64> = (0..n_f).map(|_| random_complex(&mut rng)).collect();
        let y: Vec<Complex64> = u.iter().map(|&z| 2.0 * z).collect();
        let spec = SpectrumRecord { u: vec![u], y: vec![y], line_indices: (0..n_f).collect(), n: 128 };
        let cfg = LpmConfig { degree: 2, half_width: 4 };
        let est = lpm_estimate(&spec, &cfg).unwrap();
        for pos in 0..n_f {
            assert!((est.g[pos][(0, 0)] - Complex64::new(2.0, 0.0)).norm() < 1e-9);
            assert!(est.var_g[pos][(0, 0)] < 1e-18);
        }
    }

    /// True FRF and transient that are globally quadratic in the line
    /// index are inside the model class, so the fit is exact.
    #[test]
    fn polynomial_frf_recovered_without_model_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n_f = 80;
        let c = [
            Complex64::new(0.5, 0.2),
            Complex64::new(0.01, -0.004),
            Complex64::new(-2e-4, 1e-4),
        ];
        let tcoef = [Complex64::new(0.1, -0.3), Complex64::new(5e-3, 0.0), Complex64::new(0.0, -1e-4)];
        let u: Vec<Complex64> = (0..n_f).map(|_| random_complex(&mut rng)).collect();
        let mut y = Vec::with_capacity(n_f);
        for (k, &uk) in u.iter().enumerate() {
            let kf = k as f64;
            let g = c[0] + c[1] * kf + c[2] * kf * kf;
            let t = tcoef[0] + tcoef[1] * kf + tcoef[2] * kf * kf;
            y.push(g * uk + t);
        }
        let g_true: Vec<Complex64> = (0..n_f)
            .map(|k| {
                let kf = k as f64;
                c[0] + c[1] * kf + c[2] * kf * kf
            })
            .collect();
        let spec = SpectrumRecord { u: vec![u], y: vec![y], line_indices: (0..n_f).collect(), n: 160 };
        let est = lpm_estimate(&spec, &LpmConfig { degree: 2, half_width: 5 }).unwrap();
        for pos in 0..n_f {
            assert!(
                (est.g[pos][(0, 0)] - g_true[pos]).norm() < 1e-9,
                "pos {pos}: {} vs {}",
                est.g[pos][(0, 0)],
                g_true[pos]
            );
        }
    }

    /// Independent check: complex normal equations solved by LU.
    fn normal_equation_oracle(
        spec: &SpectrumRecord,
        cfg: &LpmConfig,
        center: usize,
        output: usize,
    ) -> Vec<Complex64> {
        let n_f = spec.line_indices.len();
        let window = cfg.window();
        let start = center.saturating_sub(cfg.half_width).min(n_f - window);
        let a = window_regressors(spec, cfg, start, center);
        let mut b = DVector::<Complex64>::zeros(window);
        for p in 0..window {
            b[p] = spec.y[output][start + p];
        }
        let gram = a.adjoint() * &a;
        let rhs = a.adjoint() * b;
        let sol = gram.lu().solve(&rhs).unwrap();
        sol.iter().copied().collect()
    }

    #[test]
    fn matches_normal_equation_oracle_on_random_instance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n_f = 40;
        let u: Vec<Complex64> = (0..n_f).map(|_| random_complex(&mut rng)).collect();
        let y: Vec<Complex64> = (0..n_f).map(|_| random_complex(&mut rng)).collect();
        let spec = SpectrumRecord { u: vec![u], y: vec![y], line_indices: (0..n_f).collect(), n: 80 };
        let cfg = LpmConfig { degree: 2, half_width: 3 };
        let est = lpm_estimate(&spec, &cfg).unwrap();
        for center in [0, 7, 20, 39] {
            let oracle = normal_equation_oracle(&spec, &cfg, center, 0);
            assert!((est.g[center][(0, 0)] - oracle[0]).norm() < 1e-10);
            assert!((est.t[center][0] - oracle[3]).norm() < 1e-10);
        }
    }

    #[test]
    fn residuals_are_orthogonal_to_regressors() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n_f = 30;
        let u: Vec<Complex64> = (0..n_f).map(|_| random_complex(&mut rng)).collect();
        let y: Vec<Complex64> = (0..n_f).map(|_| random_complex(&mut rng)).collect();
        let spec = SpectrumRecord {
            u: vec![u.clone()],
            y: vec![y.clone()],
            line_indices: (0..n_f).collect(),
            n: 60,
        };
        let cfg = LpmConfig { degree: 2, half_width: 4 };
        let center = 15;
        let sol = solve_center(&spec, &cfg, center).unwrap();
        let start = center - cfg.half_width;
        let a = window_regressors(&spec, &cfg, start, center);
        let window = cfg.window();
        let mut res = DVector::<Complex64>::zeros(window);
        for p in 0..window {
            let mut fit = Complex64::new(0.0, 0.0);
            for (c, &coef) in sol.per_output[0].coeffs.iter().enumerate() {
                fit += a[(p, c)] * coef;
            }
            res[p] = y[start + p] - fit;
        }
        let proj = a.adjoint() * res;
        assert!(proj.iter().all(|z| z.norm() < 1e-9), "{proj}");
    }

    #[test]
    fn g0_invariant_under_common_complex_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n_f = 36;
        let u: Vec<Complex64> = (0..n_f).map(|_| random_complex(&mut rng)).collect();
        let y: Vec<Complex64> = (0..n_f).map(|_| random_complex(&mut rng)).collect();
        let scale = Complex64::new(1.7, -0.9);
        let spec = SpectrumRecord {
            u: vec![u.clone()],
            y: vec![y.clone()],
            line_indices: (0..n_f).collect(),
            n: 72,
        };
        let scaled = SpectrumRecord {
            u: vec![u.iter().map(|z| scale * z).collect()],
            y: vec![y.iter().map(|z| scale * z).collect()],
            line_indices: (0..n_f).collect(),
            n: 72,
        };
        let cfg = LpmConfig { degree: 2, half_width: 4 };
        let a = lpm_estimate(&spec, &cfg).unwrap();
        let b = lpm_estimate(&scaled, &cfg).unwrap();
        for pos in 0..n_f {
            assert!((a.g[pos][(0, 0)] - b.g[pos][(0, 0)]).norm() < 1e-10);
        }
    }

    #[test]
    fn too_few_lines_is_rejected() {
        let spec = SpectrumRecord {
            u: vec![vec![Complex64::new(1.0, 0.0); 5]],
            y: vec![vec![Complex64::new(1.0, 0.0); 5]],
            line_indices: (0..5).collect(),
            n: 10,
        };
        assert!(matches!(
            lpm_estimate(&spec, &LpmConfig { degree: 2, half_width: 4 }),
            Err(Error::InsufficientLines { .. })
        ));
    }

    #[test]
    fn duplicate_inputs_are_rank_deficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n_f = 40;
        let u: Vec<Complex64> = (0..n_f).map(|_| random_complex(&mut rng)).collect();
        let y: Vec<Complex64> = (0..n_f).map(|_| random_complex(&mut rng)).collect();
        let spec = SpectrumRecord {
            u: vec![u.clone(), u],
            y: vec![y],
            line_indices: (0..n_f).collect(),
            n: 80,
        };
        assert!(matches!(
            lpm_estimate(&spec, &LpmConfig { degree: 2, half_width: 5 }),
            Err(Error::RankDeficientWindow { .. })
        ));
    }

    #[test]
    fn window_too_small_for_parameters_is_rejected() {
        let spec = SpectrumRecord {
            u: vec![vec![Complex64::new(1.0, 0.0); 20]; 3],
            y: vec![vec![Complex64::new(1.0, 0.0); 20]],
            line_indices: (0..20).collect(),
            n: 40,
        };
        // (d+1)(n_i+1) = 12 > 2*3+1.
        assert!(matches!(
            lpm_estimate(&spec, &LpmConfig { degree: 2, half_width: 3 }),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn edge_windows_are_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n_f = 32;
        let u: Vec<Complex64> = (0..n_f).map(|_| random_complex(&mut rng)).collect();
        let y: Vec<Complex64> = (0..n_f).map(|_| random_complex(&mut rng)).collect();
        let spec = SpectrumRecord { u: vec![u], y: vec![y], line_indices: (0..n_f).collect(), n: 64 };
        let cfg = LpmConfig { degree: 2, half_width: 4 };
        let est = lpm_estimate(&spec, &cfg).unwrap();
        assert!(est.edge_shifted[0]);
        assert!(est.edge_shifted[3]);
        assert!(!est.edge_shifted[4]);
        assert!(!est.edge_shifted[n_f - 5]);
        assert!(est.edge_shifted[n_f - 1]);
        assert_eq!(est.mid_band_positions().len(), n_f - 8);
    }

    /// Doubling the half-width reduces the reported variance at mid-band
    /// lines for a noisy static system.
    #[test]
    fn wider_window_reduces_reported_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n_f = 200;
        let u: Vec<Complex64> = (0..n_f).map(|_| random_complex(&mut rng)).collect();
        let y: Vec<Complex64> = u
            .iter()
            .map(|&z| 1.5 * z + 0.1 * random_complex(&mut rng))
            .collect();
        let spec = SpectrumRecord { u: vec![u], y: vec![y], line_indices: (0..n_f).collect(), n: 400 };
        let narrow = lpm_estimate(&spec, &LpmConfig { degree: 2, half_width: 6 }).unwrap();
        let wide = lpm_estimate(&spec, &LpmConfig { degree: 2, half_width: 12 }).unwrap();
        let mid = 60..140;
        let mean = |est: &FrfEstimate| {
            mid.clone().map(|p| est.var_g[p][(0, 0)]).sum::<f64>() / mid.len() as f64
        };
        assert!(mean(&wide) < mean(&narrow));
    }
}
