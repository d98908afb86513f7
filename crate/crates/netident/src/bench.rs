//! Monte Carlo comparison harness for the two identification methods on
//! the built-in benchmark network.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indirect::run_indirect_staged;
use crate::lpm::LpmConfig;
use crate::network::PredictorSet;
use crate::parfit::{self, ModelOrders, TargetFrf};
use crate::pem::{self, PemOptions};
use crate::presets::{benchmark_network, benchmark_target_truth};
use crate::simulator::{simulate, ExcitationSpec};

/// Normalized impulse-response fit: `1 - ||g0 - g_est|| / ||g0 - mean(g0)||`.
/// 1 is a perfect match, 0 matches as well as the constant mean, negative
/// is worse than that.
pub fn fit_metric(g_true: &[f64], g_est: &[f64]) -> Result<f64> {
    assert_eq!(g_true.len(), g_est.len());
    let mean = g_true.iter().sum::<f64>() / g_true.len() as f64;
    let denom = g_true.iter().map(|g| (g - mean).powi(2)).sum::<f64>().sqrt();
    if denom < 1e-14 {
        return Err(Error::DegenerateTruth);
    }
    let num = g_true
        .iter()
        .zip(g_est)
        .map(|(t, e)| (t - e).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(1.0 - num / denom)
}

fn default_replicates() -> usize {
    100
}
fn default_n() -> usize {
    500
}
fn default_reference_variance() -> f64 {
    1.0
}
fn default_impulse_horizon() -> usize {
    100
}
fn default_true() -> bool {
    true
}
fn default_pem_restarts() -> usize {
    5
}
fn default_var_smooth() -> usize {
    8
}
fn default_pem_max_iter() -> usize {
    100
}

/// Reference excitation used for every replicate: white Gaussian noise or
/// a full-grid random-phase multisine of the same per-sample variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    White,
    Multisine,
}

impl Default for ReferenceKind {
    fn default() -> Self {
        ReferenceKind::White
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McConfig {
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub lpm: LpmConfig,
    /// Stage-1 local fit override; defaults to `lpm`.
    #[serde(default)]
    pub lpm_stage1: Option<LpmConfig>,
    /// Moving-average half-width applied to the variance weights before
    /// the parametric fit (0 disables).
    #[serde(default = "default_var_smooth")]
    pub var_smooth_half_width: usize,
    #[serde(default = "default_reference_variance")]
    pub reference_variance: f64,
    #[serde(default)]
    pub reference_kind: ReferenceKind,
    #[serde(default = "default_impulse_horizon")]
    pub impulse_horizon: usize,
    #[serde(default = "default_true")]
    pub run_two_stage: bool,
    #[serde(default = "default_true")]
    pub run_direct: bool,
    #[serde(default = "default_pem_restarts")]
    pub pem_restarts: usize,
    /// Iteration budget per start for the direct method.
    #[serde(default = "default_pem_max_iter")]
    pub pem_max_iter: usize,
    /// Per-node sensor-noise variance override for the benchmark network
    /// (errors-in-variables setting); `None` keeps the network's own values.
    #[serde(default)]
    pub sensor_noise_var: Option<Vec<f64>>,
}

impl Default for McConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields defaulted")
    }
}

pub const METHOD_TWO_STAGE: &str = "two_stage";
pub const METHOD_DIRECT: &str = "direct_pe";

/// One replicate's outcome for one method.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicateOutcome {
    pub replicate: usize,
    pub theta: Vec<f64>,
    pub fit: f64,
}

/// Summary statistics over successful replicates of one method.
#[derive(Debug, Clone, Serialize)]
pub struct MethodSummary {
    pub method: String,
    pub successes: usize,
    pub failures: usize,
    pub median_fit: f64,
    pub mean_fit: f64,
    pub param_mean: Vec<f64>,
    pub param_std: Vec<f64>,
    pub param_bias: Vec<f64>,
}

/// Per-frequency-line statistics of the FRF error across replicates
/// (mid-band lines only). For the two-stage method the error is that of
/// the nonparametric FRF; for the direct method, of the fitted parametric
/// model evaluated on the same grid.
#[derive(Debug, Clone, Serialize)]
pub struct FrfLineStat {
    pub method: String,
    pub line: usize,
    /// Modulus of the across-replicate mean of the complex error.
    pub mean_err: f64,
    /// Standard deviation of that mean (real/imag combined).
    pub std_of_mean: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct McReport {
    pub config: McConfig,
    pub truth: Vec<f64>,
    pub summaries: Vec<MethodSummary>,
    pub outcomes: BTreeMap<String, Vec<ReplicateOutcome>>,
    pub frf_stats: Vec<FrfLineStat>,
    pub failures: Vec<String>,
}

struct ReplicateResult {
    replicate: usize,
    two_stage: std::result::Result<(Vec<f64>, f64), String>,
    direct: std::result::Result<(Vec<f64>, f64), String>,
    /// Per-method FRF errors at each mid-band line: `(method, line, err)`.
    frf_err: Vec<(&'static str, usize, Complex64)>,
}

fn target_orders() -> ModelOrders {
    ModelOrders { numerator_order: 2, denominator_order: 2, delay: 1 }
}

fn run_replicate(cfg: &McConfig, m: usize, g_true_impulse: &[f64]) -> ReplicateResult {
    let mut model = benchmark_network();
    if let Some(sv) = &cfg.sensor_noise_var {
        model.sensor_noise_var = sv.clone();
    }
    let seed = cfg.base_seed + m as u64;
    let spec = match cfg.reference_kind {
        ReferenceKind::White => ExcitationSpec::White { variance: cfg.reference_variance },
        ReferenceKind::Multisine => {
            // Flat grid, amplitudes chosen so the per-sample variance
            // matches the white case: sum(A^2/2) = var.
            let lines: Vec<usize> = (1..cfg.n / 2).collect();
            let amp = (2.0 * cfg.reference_variance / lines.len() as f64).sqrt();
            ExcitationSpec::Multisine {
                amplitudes: vec![amp; lines.len()],
                excited_lines: lines,
                period: cfg.n,
            }
        }
    };
    let excitations: BTreeMap<usize, ExcitationSpec> = model
        .references
        .iter()
        .map(|&node| (node, spec.clone()))
        .collect();
    let ps = PredictorSet::new(3, 1, [1, 2, 4]);
    let orders = target_orders();

    let ds = match simulate(&model, &excitations, cfg.n, seed) {
        Ok(ds) => ds,
        Err(e) => {
            let msg = format!("simulate: {e}");
            return ReplicateResult {
                replicate: m,
                two_stage: Err(msg.clone()),
                direct: Err(msg),
                frf_err: Vec::new(),
            };
        }
    };

    let truth_tf = benchmark_target_truth();
    let mid_lines: Vec<usize> = {
        let nw = cfg.lpm.half_width;
        (nw..=cfg.n / 2 - nw).collect()
    };
    let g0_mid = truth_tf.freq_response(&mid_lines, cfg.n).expect("truth FRF");

    let mut frf_err = Vec::new();
    let two_stage = if cfg.run_two_stage {
        (|| -> Result<(Vec<f64>, f64)> {
            let stage1_cfg = cfg.lpm_stage1.unwrap_or(cfg.lpm);
            let ind = run_indirect_staged(&ds, &ps, &model.references, &stage1_cfg, &cfg.lpm)?;
            let g0 = truth_tf.freq_response(&ind.line_indices, ind.n)?;
            for pos in ind.mid_band_positions() {
                frf_err.push((
                    METHOD_TWO_STAGE,
                    ind.line_indices[pos],
                    ind.target_frf[pos] - g0[pos],
                ));
            }
            let mut frf = TargetFrf::from_indirect(&ind);
            frf.smooth_variance(cfg.var_smooth_half_width);
            let est = parfit::fit(&frf, &orders)?;
            let g_est = est.to_tf()?.impulse_response(g_true_impulse.len());
            let fit = fit_metric(g_true_impulse, &g_est)?;
            Ok((est.theta, fit))
        })()
        .map_err(|e| format!("two_stage: {e}"))
    } else {
        Err("disabled".into())
    };

    let direct = if cfg.run_direct {
        (|| -> Result<(Vec<f64>, f64)> {
            let structure = pem::benchmark_structure();
            let opts =
                PemOptions { restarts: cfg.pem_restarts, max_iter: cfg.pem_max_iter, seed };
            let result = pem::pem_fit(&ds, &structure, None, &opts)?;
            let theta = result.module_theta[&1].clone();
            let tf = result.module_tf(&structure, 1)?;
            let g_hat = tf.freq_response(&mid_lines, cfg.n)?;
            for (pos, &line) in mid_lines.iter().enumerate() {
                frf_err.push((METHOD_DIRECT, line, g_hat[pos] - g0_mid[pos]));
            }
            let g_est = tf.impulse_response(g_true_impulse.len());
            let fit = fit_metric(g_true_impulse, &g_est)?;
            Ok((theta, fit))
        })()
        .map_err(|e| format!("direct_pe: {e}"))
    } else {
        Err("disabled".into())
    };

    ReplicateResult { replicate: m, two_stage, direct, frf_err }
}

fn summarize(method: &str, outcomes: &[ReplicateOutcome], truth: &[f64], failures: usize) -> MethodSummary {
    let n = outcomes.len();
    let n_params = truth.len();
    let mut fits: Vec<f64> = outcomes.iter().map(|o| o.fit).collect();
    fits.sort_by(|a, b| a.total_cmp(b));
    let median_fit = if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        fits[n / 2]
    } else {
        0.5 * (fits[n / 2 - 1] + fits[n / 2])
    };
    let mean_fit = if n == 0 { f64::NAN } else { fits.iter().sum::<f64>() / n as f64 };
    let mut param_mean = vec![f64::NAN; n_params];
    let mut param_std = vec![f64::NAN; n_params];
    if n > 0 {
        for p in 0..n_params {
            let vals: Vec<f64> = outcomes.iter().map(|o| o.theta[p]).collect();
            let mean = vals.iter().sum::<f64>() / n as f64;
            param_mean[p] = mean;
            if n > 1 {
                param_std[p] = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                    / (n - 1) as f64)
                    .sqrt();
            }
        }
    }
    let param_bias = param_mean.iter().zip(truth).map(|(m, t)| m - t).collect();
    MethodSummary {
        method: method.into(),
        successes: n,
        failures,
        median_fit,
        mean_fit,
        param_mean,
        param_std,
        param_bias,
    }
}

/// Run the Monte Carlo study: independent replicates (fresh references and
/// noise per replicate, seeded `base_seed + m`), both methods on the same
/// records, summarized per method. Individual replicate failures are
/// recorded, not fatal.
pub fn run_monte_carlo(cfg: &McConfig) -> Result<McReport> {
    let truth: Vec<f64> = crate::presets::BENCHMARK_TARGET_THETA.to_vec();
    let g_true_impulse = benchmark_target_truth().impulse_response(cfg.impulse_horizon);

    let results: Vec<ReplicateResult> = (0..cfg.replicates)
        .into_par_iter()
        .map(|m| run_replicate(cfg, m, &g_true_impulse))
        .collect();

    let mut outcomes: BTreeMap<String, Vec<ReplicateOutcome>> = BTreeMap::new();
    let mut failures = Vec::new();
    let mut frf_errors: BTreeMap<(&str, usize), Vec<Complex64>> = BTreeMap::new();
    let mut fail_counts: BTreeMap<&str, usize> = BTreeMap::new();

    for res in &results {
        for (method, enabled, outcome) in [
            (METHOD_TWO_STAGE, cfg.run_two_stage, &res.two_stage),
            (METHOD_DIRECT, cfg.run_direct, &res.direct),
        ] {
            if !enabled {
                continue;
            }
            match outcome {
                Ok((theta, fit)) => outcomes.entry(method.into()).or_default().push(
                    ReplicateOutcome { replicate: res.replicate, theta: theta.clone(), fit: *fit },
                ),
                Err(msg) => {
                    *fail_counts.entry(method).or_default() += 1;
                    failures.push(format!("replicate {}: {msg}", res.replicate));
                }
            }
        }
        for &(method, line, err) in &res.frf_err {
            frf_errors.entry((method, line)).or_default().push(err);
        }
    }

    let mut summaries = Vec::new();
    for (method, enabled) in [(METHOD_TWO_STAGE, cfg.run_two_stage), (METHOD_DIRECT, cfg.run_direct)] {
        if !enabled {
            continue;
        }
        let empty = Vec::new();
        let outs = outcomes.get(method).unwrap_or(&empty);
        summaries.push(summarize(method, outs, &truth, fail_counts.get(method).copied().unwrap_or(0)));
    }

    let frf_stats = frf_errors
        .into_iter()
        .filter(|(_, errs)| errs.len() > 1)
        .map(|((method, line), errs)| {
            let m = errs.len() as f64;
            let mean = errs.iter().sum::<Complex64>() / m;
            let var = errs
                .iter()
                .map(|e| {
                    let d = e - mean;
                    d.re * d.re + d.im * d.im
                })
                .sum::<f64>()
                / (m - 1.0);
            FrfLineStat {
                method: method.into(),
                line,
                mean_err: mean.norm(),
                std_of_mean: (var / m).sqrt(),
            }
        })
        .collect();

    Ok(McReport {
        config: cfg.clone(),
        truth,
        summaries,
        outcomes,
        frf_stats,
        failures,
    })
}

impl McReport {
    pub fn summary(&self, method: &str) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let out = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    /// `method,replicate,fit` for every successful replicate.
    pub fn write_fits_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "method,replicate,fit")?;
        for (method, outs) in &self.outcomes {
            for o in outs {
                writeln!(out, "{method},{},{:.12e}", o.replicate, o.fit)?;
            }
        }
        Ok(())
    }

    /// `method,replicate,theta_0..` for every successful replicate.
    pub fn write_params_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let n_params = self.truth.len();
        let header: Vec<String> = (0..n_params).map(|p| format!("theta{p}")).collect();
        writeln!(out, "method,replicate,{}", header.join(","))?;
        for (method, outs) in &self.outcomes {
            for o in outs {
                let row: Vec<String> = o.theta.iter().map(|t| format!("{t:.12e}")).collect();
                writeln!(out, "{method},{},{}", o.replicate, row.join(","))?;
            }
        }
        Ok(())
    }

    /// Per-line FRF error statistics, in dB for plotting.
    pub fn write_frf_stats_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "method,line,mean_err_db,std_of_mean_db")?;
        for s in &self.frf_stats {
            writeln!(
                out,
                "{},{},{:.6},{:.6}",
                s.method,
                s.line,
                20.0 * s.mean_err.max(1e-300).log10(),
                20.0 * s.std_of_mean.max(1e-300).log10()
            )?;
        }
        Ok(())
    }
}
