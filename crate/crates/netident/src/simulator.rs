//! Time-domain network simulation with deterministic seeding.
//!
//! The reference simulation path is a per-sample recursion of the node
//! equations; every module is strictly proper, so each sample depends only
//! on strictly earlier ones and the network can be swept node by node in a
//! single pass. Transients are deliberately kept in the records; the FRF
//! estimator absorbs them through its transient term.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::network::NetworkModel;

/// Per-reference excitation description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExcitationSpec {
    White {
        variance: f64,
    },
    /// Sum of cosines at the given DFT lines of one period, with random
    /// phases drawn from the run seed.
    Multisine {
        excited_lines: Vec<usize>,
        amplitudes: Vec<f64>,
        period: usize,
    },
}

impl ExcitationSpec {
    fn validate(&self) -> Result<()> {
        match self {
            ExcitationSpec::White { variance } => {
                if *variance < 0.0 || !variance.is_finite() {
                    return Err(Error::Parse("white excitation variance must be >= 0".into()));
                }
            }
            ExcitationSpec::Multisine { excited_lines, amplitudes, period } => {
                if excited_lines.len() != amplitudes.len() {
                    return Err(Error::Parse("excited_lines/amplitudes length mismatch".into()));
                }
                if excited_lines.iter().any(|&k| k == 0 || k >= period / 2) {
                    return Err(Error::Parse("excited lines must lie in (0, period/2)".into()));
                }
                if amplitudes.iter().any(|a| *a < 0.0) {
                    return Err(Error::Parse("amplitudes must be >= 0".into()));
                }
            }
        }
        Ok(())
    }
}

/// One simulated experiment: noise-free nodes `w`, measured nodes
/// `w_meas`, references `r`, and the realized process noise `v`, each an
/// `L x N` row-per-node record.
#[derive(Debug, Clone)]
pub struct TimeSeriesDataset {
    pub n: usize,
    pub w: Vec<Vec<f64>>,
    pub w_meas: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub seed: u64,
}

/// Driving white noise `e` and the filtered process noise `v = H e`.
#[derive(Debug, Clone)]
pub struct NoiseRealization {
    pub e: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

/// Draw `e ~ N(0, noise_cov)` through the symmetric matrix square root and
/// filter through the noise filter matrix. Deterministic for a fixed seed.
pub fn generate_noise(model: &NetworkModel, n: usize, seed: u64) -> Result<NoiseRealization> {
    let l = model.nodes;
    let eig = nalgebra::SymmetricEigen::new(model.noise_cov.clone());
    let min = eig.eigenvalues.min();
    if min < -1e-12 * (1.0 + model.noise_cov.amax()) {
        return Err(Error::NotPsd(min));
    }
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let root: DMatrix<f64> =
        &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose();

    let mut rng = noise_rng(seed);
    let mut e = vec![vec![0.0; n]; l];
    for t in 0..n {
        let z: Vec<f64> = (0..l).map(|_| rng.sample(StandardNormal)).collect();
        for j in 0..l {
            let mut acc = 0.0;
            for (k, &zk) in z.iter().enumerate() {
                acc += root[(j, k)] * zk;
            }
            e[j][t] = acc;
        }
    }

    let mut v = vec![vec![0.0; n]; l];
    for (&(j, src), h) in &model.noise_filters {
        let filtered = h.filter(&e[src - 1]);
        for t in 0..n {
            v[j - 1][t] += filtered[t];
        }
    }
    Ok(NoiseRealization { e, v })
}

/// Generate the reference records for the configured excitations; nodes
/// without a spec (or outside the reference set) stay identically zero.
pub fn generate_references(
    model: &NetworkModel,
    excitations: &BTreeMap<usize, ExcitationSpec>,
    n: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let l = model.nodes;
    let mut r = vec![vec![0.0; n]; l];
    for (&node, spec) in excitations {
        if node == 0 || node > l {
            return Err(Error::UnknownNode(node));
        }
        if !model.references.contains(&node) {
            return Err(Error::Parse(format!("node {node} is not in the reference set")));
        }
        spec.validate()?;
        let mut rng = reference_rng(seed, node);
        match spec {
            ExcitationSpec::White { variance } => {
                let sd = variance.sqrt();
                for t in 0..n {
                    r[node - 1][t] = sd * rng.sample::<f64, _>(StandardNormal);
                }
            }
            ExcitationSpec::Multisine { excited_lines, amplitudes, period } => {
                let phases: Vec<f64> =
                    excited_lines.iter().map(|_| rng.gen::<f64>() * TAU).collect();
                for t in 0..n {
                    let mut acc = 0.0;
                    for ((&k, &a), &phi) in excited_lines.iter().zip(amplitudes).zip(&phases) {
                        acc += a * (TAU * (k * t % period) as f64 / *period as f64 + phi).cos();
                    }
                    r[node - 1][t] = acc;
                }
            }
        }
    }
    Ok(r)
}

/// Sweep the node equations over the whole record given explicit external
/// inputs: `w_j(t) = sum_l G_jl w_l (t) + r_j(t) + v_j(t)`.
pub fn propagate(
    model: &NetworkModel,
    r: &[Vec<f64>],
    v: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let l = model.nodes;
    let n = r.first().map_or(0, Vec::len);
    assert_eq!(r.len(), l);
    assert_eq!(v.len(), l);
    let mut w = vec![vec![0.0; n]; l];
    // Per-module output history for the difference equation.
    let entries: Vec<(usize, usize, &[f64], &[f64])> = model
        .modules
        .iter()
        .map(|(&(j, src), tf)| (j - 1, src - 1, tf.num(), tf.den()))
        .collect();
    let mut y = vec![vec![0.0; n]; entries.len()];
    for t in 0..n {
        for (idx, &(j, src, num, den)) in entries.iter().enumerate() {
            let mut acc = 0.0;
            // num[0] == 0 for every module, so only past w samples enter.
            for (s, &b) in num.iter().enumerate().skip(1) {
                if s <= t {
                    acc += b * w[src][t - s];
                }
            }
            for (s, &a) in den.iter().enumerate().skip(1) {
                if s <= t {
                    acc -= a * y[idx][t - s];
                }
            }
            y[idx][t] = acc;
            w[j][t] += acc;
        }
        for j in 0..l {
            w[j][t] += r[j][t] + v[j][t];
            if w[j][t].abs() > 1e12 {
                return Err(Error::DivergedSimulation { node: j + 1, t });
            }
        }
    }
    Ok(w)
}

/// Full stochastic experiment: noise, references, network sweep, and
/// sensor noise, all derived from one seed.
pub fn simulate(
    model: &NetworkModel,
    excitations: &BTreeMap<usize, ExcitationSpec>,
    n: usize,
    seed: u64,
) -> Result<TimeSeriesDataset> {
    let r = generate_references(model, excitations, n, seed)?;
    let noise = generate_noise(model, n, seed)?;
    let w = propagate(model, &r, &noise.v)?;

    let mut w_meas = w.clone();
    let mut rng = sensor_rng(seed);
    for (j, var) in model.sensor_noise_var.iter().enumerate() {
        if *var > 0.0 {
            let sd = var.sqrt();
            for t in 0..n {
                w_meas[j][t] += sd * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    Ok(TimeSeriesDataset { n, w, w_meas, r, v: noise.v, seed })
}

fn noise_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

fn reference_rng(seed: u64, node: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1000 + node as u64);
    rng
}

fn sensor_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    rng
}

// --- dataset persistence ----------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub seed: u64,
    pub n: usize,
    pub nodes: usize,
    pub excitations: BTreeMap<usize, ExcitationSpec>,
}

/// Write the record as CSV (`t,w1..,wmeas1..,r1..`) plus a JSON sidecar
/// with the seed and excitation spec.
pub fn write_dataset(
    ds: &TimeSeriesDataset,
    excitations: &BTreeMap<usize, ExcitationSpec>,
    csv_path: &Path,
    meta_path: &Path,
) -> Result<()> {
    let l = ds.w.len();
    let mut out = std::io::BufWriter::new(std::fs::File::create(csv_path)?);
    let mut header = vec!["t".to_string()];
    header.extend((1..=l).map(|j| format!("w{j}")));
    header.extend((1..=l).map(|j| format!("wmeas{j}")));
    header.extend((1..=l).map(|j| format!("r{j}")));
    writeln!(out, "{}", header.join(","))?;
    for t in 0..ds.n {
        let mut row = vec![t.to_string()];
        for j in 0..l {
            row.push(format!("{:.17e}", ds.w[j][t]));
        }
        for j in 0..l {
            row.push(format!("{:.17e}", ds.w_meas[j][t]));
        }
        for j in 0..l {
            row.push(format!("{:.17e}", ds.r[j][t]));
        }
        writeln!(out, "{}", row.join(","))?;
    }
    let meta =
        DatasetMeta { seed: ds.seed, n: ds.n, nodes: l, excitations: excitations.clone() };
    std::fs::write(meta_path, serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

/// Read a dataset CSV written by [`write_dataset`]. The process-noise
/// record is not part of the file format and comes back zeroed.
pub fn read_dataset(csv_path: &Path, meta_path: &Path) -> Result<(TimeSeriesDataset, DatasetMeta)> {
    let meta: DatasetMeta = serde_json::from_str(&std::fs::read_to_string(meta_path)?)?;
    let l = meta.nodes;
    let mut reader = csv::Reader::from_path(csv_path)?;
    let mut w = vec![Vec::new(); l];
    let mut w_meas = vec![Vec::new(); l];
    let mut r = vec![Vec::new(); l];
    for record in reader.records() {
        let record = record?;
        if record.len() != 1 + 3 * l {
            return Err(Error::Parse(format!(
                "dataset row has {} fields, expected {}",
                record.len(),
                1 + 3 * l
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Parse(format!("bad float {s:?}")))
        };
        for j in 0..l {
            w[j].push(parse(&record[1 + j])?);
            w_meas[j].push(parse(&record[1 + l + j])?);
            r[j].push(parse(&record[1 + 2 * l + j])?);
        }
    }
    let n = w[0].len();
    if n != meta.n {
        return Err(Error::Parse(format!("CSV has {n} rows, sidecar says {}", meta.n)));
    }
    let ds = TimeSeriesDataset { n, v: vec![vec![0.0; n]; l], w, w_meas, r, seed: meta.seed };
    Ok((ds, meta))
}
