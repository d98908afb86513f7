//! Network topology container, config ingestion, diagnostics, and the
//! closed-loop frequency-domain oracle.
//!
//! Node indices are 1-based throughout the public API, matching the
//! config schema; internal arrays subtract one.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::TAU;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tf::RationalTf;

/// L-node network: sparse module matrix `G`, noise filter matrix `H`,
/// driving-noise covariance, reference set, and per-node sensor-noise
/// variances.
#[derive(Debug, Clone)]
pub struct NetworkModel {
    pub nodes: usize,
    /// `(j, l) -> G_jl`, the module from node `l` into node `j`.
    pub modules: BTreeMap<(usize, usize), RationalTf>,
    /// `(j, l) -> H_jl`; diagonal by default, off-diagonal entries allowed
    /// for correlated noise.
    pub noise_filters: BTreeMap<(usize, usize), RationalTf>,
    pub noise_cov: DMatrix<f64>,
    pub references: BTreeSet<usize>,
    pub sensor_noise_var: Vec<f64>,
}

/// Target module `j <- i` with predictor node set `D`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictorSet {
    pub output: usize,
    pub input: usize,
    pub predictors: BTreeSet<usize>,
}

impl PredictorSet {
    pub fn new(output: usize, input: usize, predictors: impl IntoIterator<Item = usize>) -> Self {
        Self { output, input, predictors: predictors.into_iter().collect() }
    }
}

/// Per-condition outcome of the predictor-set validity check.
#[derive(Debug, Clone, Serialize)]
pub struct PredictorReport {
    /// `i` in `D` and `j` not in `D`.
    pub membership: bool,
    /// Every indirect path from `w_i` to `w_j` passes through `D`.
    pub parallel_path: bool,
    /// Every loop through `w_j` passes through `D`.
    pub loop_condition: bool,
}

impl PredictorReport {
    pub fn valid(&self) -> bool {
        self.membership && self.parallel_path && self.loop_condition
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub stable: bool,
    /// Worst tail-to-total impulse energy ratio over all channels.
    pub decay_metric: f64,
}

// --- config schema ---------------------------------------------------------

#[derive(Debug, Deserialize)]
struct ModuleEntry {
    from: usize,
    to: usize,
    num: Vec<f64>,
    den: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct NoiseFilterEntry {
    #[serde(default)]
    node: Option<usize>,
    #[serde(default)]
    from: Option<usize>,
    #[serde(default)]
    to: Option<usize>,
    num: Vec<f64>,
    den: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum CovSpec {
    Diag { diag: Vec<f64> },
    Full(Vec<Vec<f64>>),
}

#[derive(Debug, Deserialize)]
struct NetworkConfig {
    #[serde(default = "default_schema_version")]
    schema_version: u32,
    nodes: usize,
    #[serde(default)]
    modules: Vec<ModuleEntry>,
    #[serde(default)]
    noise_filters: Vec<NoiseFilterEntry>,
    noise_cov: CovSpec,
    #[serde(default)]
    references: Vec<usize>,
    #[serde(default)]
    sensor_noise_var: Option<Vec<f64>>,
}

fn default_schema_version() -> u32 {
    1
}

/// Parse and validate a network config (JSON, see the shipped
/// `configs/benchmark_4node.json` for the schema).
pub fn load_network(config_text: &str) -> Result<NetworkModel> {
    let cfg: NetworkConfig =
        serde_json::from_str(config_text).map_err(|e| Error::Parse(e.to_string()))?;
    if cfg.schema_version != 1 {
        return Err(Error::Parse(format!("unsupported schema_version {}", cfg.schema_version)));
    }
    let l = cfg.nodes;
    if l == 0 {
        return Err(Error::Parse("nodes must be >= 1".into()));
    }

    let mut modules = BTreeMap::new();
    for (idx, m) in cfg.modules.iter().enumerate() {
        let path = format!("modules[{idx}]");
        check_node(m.from, l, &path)?;
        check_node(m.to, l, &path)?;
        if m.from == m.to {
            return Err(Error::InvariantViolation {
                path,
                message: format!("self-loop at node {}", m.from),
            });
        }
        let tf = RationalTf::new(m.num.clone(), m.den.clone())
            .map_err(|e| Error::InvariantViolation { path: path.clone(), message: e.to_string() })?;
        if !tf.is_strictly_proper() {
            return Err(Error::InvariantViolation {
                path,
                message: "module is not strictly proper (nonzero feedthrough)".into(),
            });
        }
        if modules.insert((m.to, m.from), tf).is_some() {
            return Err(Error::InvariantViolation {
                path,
                message: format!("duplicate module ({}, {})", m.to, m.from),
            });
        }
    }

    // Noise filters default to identity on the diagonal.
    let mut noise_filters: BTreeMap<(usize, usize), RationalTf> =
        (1..=l).map(|j| ((j, j), RationalTf::identity())).collect();
    for (idx, f) in cfg.noise_filters.iter().enumerate() {
        let path = format!("noise_filters[{idx}]");
        let (to, from) = match (f.node, f.from, f.to) {
            (Some(n), None, None) => (n, n),
            (None, Some(from), Some(to)) => (to, from),
            _ => {
                return Err(Error::Parse(format!(
                    "{path}: give either `node` or both `from` and `to`"
                )))
            }
        };
        check_node(to, l, &path)?;
        check_node(from, l, &path)?;
        let tf = RationalTf::new(f.num.clone(), f.den.clone())
            .map_err(|e| Error::InvariantViolation { path: path.clone(), message: e.to_string() })?;
        // H(inf) = I: unit feedthrough on the diagonal, none off it.
        if to == from && !tf.is_monic() {
            return Err(Error::InvariantViolation {
                path,
                message: "diagonal noise filter must be monic with unit feedthrough".into(),
            });
        }
        if to != from && !tf.is_strictly_proper() {
            return Err(Error::InvariantViolation {
                path,
                message: "off-diagonal noise filter must have zero feedthrough".into(),
            });
        }
        noise_filters.insert((to, from), tf);
    }

    let noise_cov = match cfg.noise_cov {
        CovSpec::Diag { diag } => {
            if diag.len() != l {
                return Err(Error::Parse("noise_cov diag length != nodes".into()));
            }
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag))
        }
        CovSpec::Full(rows) => {
            if rows.len() != l || rows.iter().any(|r| r.len() != l) {
                return Err(Error::Parse("noise_cov must be nodes x nodes".into()));
            }
            DMatrix::from_fn(l, l, |i, j| rows[i][j])
        }
    };
    check_psd(&noise_cov)?;

    let mut references = BTreeSet::new();
    for &r in &cfg.references {
        check_node(r, l, "references")?;
        references.insert(r);
    }

    let sensor_noise_var = cfg.sensor_noise_var.unwrap_or_else(|| vec![0.0; l]);
    if sensor_noise_var.len() != l {
        return Err(Error::Parse("sensor_noise_var length != nodes".into()));
    }
    if sensor_noise_var.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::InvariantViolation {
            path: "sensor_noise_var".into(),
            message: "variances must be finite and nonnegative".into(),
        });
    }

    Ok(NetworkModel { nodes: l, modules, noise_filters, noise_cov, references, sensor_noise_var })
}

fn check_node(n: usize, l: usize, path: &str) -> Result<()> {
    if n == 0 || n > l {
        return Err(Error::InvariantViolation {
            path: path.to_string(),
            message: format!("node index {n} outside 1..={l}"),
        });
    }
    Ok(())
}

fn check_psd(m: &DMatrix<f64>) -> Result<()> {
    let asym = (m - m.transpose()).amax();
    if asym > 1e-12 * (1.0 + m.amax()) {
        return Err(Error::InvariantViolation {
            path: "noise_cov".into(),
            message: "matrix is not symmetric".into(),
        });
    }
    let eig = m.clone().symmetric_eigenvalues();
    let min = eig.min();
    if min < -1e-12 * (1.0 + m.amax()) {
        return Err(Error::NotPsd(min));
    }
    Ok(())
}

// --- operations ------------------------------------------------------------

impl NetworkModel {
    /// Directed edge list of the module graph: `l -> j` when `G_jl` is
    /// present and nonzero.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.modules
            .iter()
            .filter(|(_, tf)| tf.num().iter().any(|b| *b != 0.0))
            .map(|(&(j, l), _)| (l, j))
            .collect()
    }

    /// `(I - G(z_k))^{-1}` at each requested DFT line; entry `(j, m)` is
    /// the closed-loop transfer from the external input at node `m` to
    /// node `j`.
    pub fn closed_loop_frm(
        &self,
        line_indices: &[usize],
        n: usize,
    ) -> Result<Vec<DMatrix<Complex64>>> {
        let l = self.nodes;
        let mut out = Vec::with_capacity(line_indices.len());
        for &k in line_indices {
            let x = Complex64::from_polar(1.0, -TAU * k as f64 / n as f64);
            let mut m = DMatrix::<Complex64>::identity(l, l);
            for (&(j, src), tf) in &self.modules {
                m[(j - 1, src - 1)] -= tf.eval_at(x);
            }
            let svd = m.clone().svd(false, false);
            let smax = svd.singular_values.max();
            let smin = svd.singular_values.min();
            if smin <= 0.0 || smax / smin > 1e12 {
                return Err(Error::SingularAtLine { line: k });
            }
            let inv = m.try_inverse().ok_or(Error::SingularAtLine { line: k })?;
            out.push(inv);
        }
        Ok(out)
    }

    /// Check Property-1 style predictor-set validity by reachability on
    /// the module graph with the predictor nodes removed.
    pub fn check_predictor_set(&self, ps: &PredictorSet) -> Result<PredictorReport> {
        let l = self.nodes;
        for &n in ps.predictors.iter().chain([&ps.output, &ps.input]) {
            if n == 0 || n > l {
                return Err(Error::UnknownNode(n));
            }
        }
        let edges = self.edges();
        let membership = ps.predictors.contains(&ps.input) && !ps.predictors.contains(&ps.output);

        // Parallel-path condition: no path i -> j whose intermediate nodes
        // all avoid D, other than the direct edge i -> j.
        let parallel_path = !path_avoiding(
            &edges,
            l,
            ps.input,
            ps.output,
            &ps.predictors,
            Some((ps.input, ps.output)),
        );

        // Loop condition: no cycle j -> ... -> j with intermediates off D.
        let loop_condition = !path_avoiding(&edges, l, ps.output, ps.output, &ps.predictors, None);

        Ok(PredictorReport { membership, parallel_path, loop_condition })
    }

    /// Empirical stability diagnostic: energy decay of every closed-loop
    /// impulse-response channel over `horizon` samples.
    pub fn check_stability(&self, horizon: usize) -> StabilityReport {
        let l = self.nodes;
        let tail_start = horizon - horizon / 10;
        let mut decay_metric: f64 = 0.0;
        for m in 1..=l {
            let mut r = vec![vec![0.0; horizon]; l];
            r[m - 1][0] = 1.0;
            let v = vec![vec![0.0; horizon]; l];
            let w = match crate::simulator::propagate(self, &r, &v) {
                Ok(w) => w,
                Err(_) => return StabilityReport { stable: false, decay_metric: f64::INFINITY },
            };
            for wj in &w {
                let total: f64 = wj.iter().map(|x| x * x).sum();
                if total == 0.0 {
                    continue;
                }
                let tail: f64 = wj[tail_start..].iter().map(|x| x * x).sum();
                decay_metric = decay_metric.max(tail / total);
            }
        }
        StabilityReport { stable: decay_metric < 1e-10, decay_metric }
    }
}

/// Is there a directed path `from -> .. -> to` whose intermediate nodes all
/// avoid `blocked`? `skip_edge` excludes one specific direct edge. Start and
/// end nodes themselves are not treated as blockers.
fn path_avoiding(
    edges: &[(usize, usize)],
    l: usize,
    from: usize,
    to: usize,
    blocked: &BTreeSet<usize>,
    skip_edge: Option<(usize, usize)>,
) -> bool {
    let mut adj = vec![Vec::new(); l + 1];
    for &(a, b) in edges {
        if skip_edge == Some((a, b)) {
            continue;
        }
        adj[a].push(b);
    }
    let mut visited = vec![false; l + 1];
    let mut stack = vec![from];
    while let Some(node) = stack.pop() {
        for &next in &adj[node] {
            if next == to {
                return true;
            }
            if !visited[next] && !blocked.contains(&next) {
                visited[next] = true;
                stack.push(next);
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::{benchmark_network, benchmark_network_json};
    use approx::assert_relative_eq;

    #[test]
    fn loads_benchmark_network() {
        let model = benchmark_network();
        assert_eq!(model.nodes, 4);
        assert_eq!(model.modules.len(), 7);
        assert_eq!(model.references, BTreeSet::from([1, 2, 4]));
        assert_relative_eq!(model.noise_cov[(2, 2)], 1.0);
        assert_relative_eq!(model.noise_cov[(0, 0)], 0.05);
    }

    #[test]
    fn rejects_self_loop() {
        let bad = benchmark_network_json().replace(
            r#"{"from": 1, "to": 3,"#,
            r#"{"from": 2, "to": 2,"#,
        );
        match load_network(&bad) {
            Err(Error::InvariantViolation { message, .. }) => {
                assert!(message.contains("self-loop"), "{message}")
            }
            other => panic!("expected self-loop violation, got {other:?}"),
        }
    }

    #[test]
    fn rejects_nonzero_feedthrough_module() {
        let bad = benchmark_network_json().replace("[0, 1, 0.05]", "[0.2, 1, 0.05]");
        match load_network(&bad) {
            Err(Error::InvariantViolation { message, .. }) => {
                assert!(message.contains("strictly proper"), "{message}")
            }
            other => panic!("expected properness violation, got {other:?}"),
        }
    }

    #[test]
    fn rejects_non_monic_noise_filter() {
        let bad = benchmark_network_json().replace(
            r#"{"node": 4, "num": [1], "den": [1]}"#,
            r#"{"node": 4, "num": [2], "den": [1]}"#,
        );
        assert!(matches!(load_network(&bad), Err(Error::InvariantViolation { .. })));
    }

    #[test]
    fn rejects_indefinite_noise_cov() {
        let bad = benchmark_network_json()
            .replace(r#"{"diag": [0.05, 0.08, 1.0, 0.1]}"#, r#"{"diag": [0.05, -0.08, 1.0, 0.1]}"#);
        assert!(matches!(load_network(&bad), Err(Error::NotPsd(_))));
    }

    #[test]
    fn closed_loop_identity_for_empty_graph() {
        let cfg = r#"{"nodes": 3, "noise_cov": {"diag": [1, 1, 1]}}"#;
        let model = load_network(cfg).unwrap();
        for frm in model.closed_loop_frm(&[0, 5, 16], 64).unwrap() {
            assert!((frm - DMatrix::<Complex64>::identity(3, 3)).map(|c| c.norm()).max() < 1e-14);
        }
    }

    #[test]
    fn closed_loop_two_node_loop_matches_geometric_series() {
        let cfg = r#"{
            "nodes": 2,
            "modules": [
                {"from": 2, "to": 1, "num": [0, 0.5], "den": [1]},
                {"from": 1, "to": 2, "num": [0, 0.5], "den": [1]}
            ],
            "noise_cov": {"diag": [1, 1]},
            "references": [1]
        }"#;
        let model = load_network(cfg).unwrap();
        let frm = &model.closed_loop_frm(&[0], 32).unwrap()[0];
        assert_relative_eq!(frm[(0, 0)].re, 1.0 / (1.0 - 0.25), epsilon = 1e-12);
        assert_relative_eq!(frm[(0, 0)].im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn closed_loop_times_i_minus_g_is_identity() {
        let model = benchmark_network();
        let lines = [1usize, 7, 100, 200];
        let n = 512;
        let frms = model.closed_loop_frm(&lines, n).unwrap();
        for (&k, inv) in lines.iter().zip(&frms) {
            let x = Complex64::from_polar(1.0, -TAU * k as f64 / n as f64);
            let mut m = DMatrix::<Complex64>::identity(4, 4);
            for (&(j, l), tf) in &model.modules {
                m[(j - 1, l - 1)] -= tf.eval_at(x);
            }
            let prod = inv * m;
            let err = (prod - DMatrix::<Complex64>::identity(4, 4)).map(|c| c.norm()).max();
            assert!(err < 1e-10, "line {k}: identity error {err}");
        }
    }

    #[test]
    fn predictor_set_benchmark_case_passes() {
        let model = benchmark_network();
        let report =
            model.check_predictor_set(&PredictorSet::new(3, 1, [1, 2, 4])).unwrap();
        assert!(report.valid(), "{report:?}");
    }

    #[test]
    fn predictor_set_singleton_fails_loop_condition() {
        let model = benchmark_network();
        let report = model.check_predictor_set(&PredictorSet::new(3, 1, [1])).unwrap();
        assert!(report.membership);
        // Loop w3 -> w2 -> w3 through G_23, G_32 avoids D = {1}.
        assert!(!report.loop_condition);
        assert!(!report.valid());
    }

    #[test]
    fn predictor_set_containing_output_fails_membership() {
        let model = benchmark_network();
        let report =
            model.check_predictor_set(&PredictorSet::new(3, 1, [1, 2, 3, 4])).unwrap();
        assert!(!report.membership);
    }

    #[test]
    fn predictor_set_unknown_node() {
        let model = benchmark_network();
        assert!(matches!(
            model.check_predictor_set(&PredictorSet::new(3, 1, [9])),
            Err(Error::UnknownNode(9))
        ));
    }

    #[test]
    fn predictor_set_monotone_in_d() {
        // Enlarging D (keeping j out) never turns a pass into a fail.
        let model = benchmark_network();
        for base in [vec![1], vec![1, 2], vec![1, 4], vec![1, 2, 4]] {
            let before = model
                .check_predictor_set(&PredictorSet::new(3, 1, base.clone()))
                .unwrap();
            for extra in 1..=4usize {
                if extra == 3 || base.contains(&extra) {
                    continue;
                }
                let mut bigger = base.clone();
                bigger.push(extra);
                let after =
                    model.check_predictor_set(&PredictorSet::new(3, 1, bigger)).unwrap();
                assert!(!before.valid() || after.valid());
            }
        }
    }

    #[test]
    fn stability_benchmark_network() {
        let report = benchmark_network().check_stability(2000);
        assert!(report.stable, "decay metric {}", report.decay_metric);
    }

    #[test]
    fn stability_empty_network_is_trivially_stable() {
        let cfg = r#"{"nodes": 2, "noise_cov": {"diag": [1, 1]}}"#;
        let model = load_network(cfg).unwrap();
        let report = model.check_stability(2000);
        assert!(report.stable);
        assert_eq!(report.decay_metric, 0.0);
    }

    #[test]
    fn stability_detects_unstable_loop() {
        // Loop gain 2 q^{-1} around two nodes: closed-loop pole outside
        // the unit circle.
        let cfg = r#"{
            "nodes": 2,
            "modules": [
                {"from": 2, "to": 1, "num": [0, 2], "den": [1]},
                {"from": 1, "to": 2, "num": [0, 1], "den": [1]}
            ],
            "noise_cov": {"diag": [1, 1]},
            "references": [1]
        }"#;
        let model = load_network(cfg).unwrap();
        assert!(!model.check_stability(2000).stable);
    }

    use std::f64::consts::TAU;
}
