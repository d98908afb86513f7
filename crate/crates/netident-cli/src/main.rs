//! Command-line front-end: simulation, identification, Monte Carlo runs
//! and analytic FRF dumps, all seeded and reproducible.
//!
//! Exit codes: 0 success, 2 config/usage error, 3 simulation failure,
//! 4 estimation failure.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::json;

use netident::bench::{run_monte_carlo, McConfig};
use netident::indirect::{run_indirect, write_target_frf_csv};
use netident::lpm::LpmConfig;
use netident::network::{load_network, NetworkModel};
use netident::parfit::{self, ModelOrders, TargetFrf};
use netident::pem::{self, MisoStructure, PemOptions};
use netident::simulator::{read_dataset, simulate, write_dataset, ExcitationSpec};
use netident::{Error, PredictorSet};

#[derive(Parser)]
#[command(name = "netident", version, about = "Dynamic-network simulation and module identification")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a network and write the record as CSV plus a JSON sidecar.
    Simulate(SimulateArgs),
    /// Estimate one module from a recorded dataset.
    Identify(IdentifyArgs),
    /// Run the Monte Carlo benchmark study.
    Montecarlo(MontecarloArgs),
    /// Dump analytic module and closed-loop frequency responses.
    Frf(FrfArgs),
    /// Validate a predictor set for a target module.
    CheckPredictors(CheckPredictorsArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Network config JSON.
    #[arg(long)]
    network: PathBuf,
    /// Excitation config JSON: `{"excitations": {"1": {"kind": "white", ...}}}`.
    #[arg(long)]
    excitation: PathBuf,
    /// Record length (samples).
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Copy, Clone, ValueEnum)]
enum Method {
    /// Two-stage nonparametric FRF plus variance-weighted parametric fit.
    TwoStage,
    /// Time-domain prediction-error minimization.
    Direct,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::TwoStage => "two_stage",
            Method::Direct => "direct_pe",
        }
    }
}

#[derive(Args)]
struct IdentifyArgs {
    /// Dataset CSV (as written by `simulate`).
    #[arg(long)]
    dataset: PathBuf,
    /// Dataset sidecar JSON; defaults to the CSV path with `.meta.json`.
    #[arg(long)]
    meta: Option<PathBuf>,
    /// Network config JSON (topology, references).
    #[arg(long)]
    network: PathBuf,
    /// Target output node j.
    #[arg(long)]
    output: usize,
    /// Target input node i.
    #[arg(long)]
    input: usize,
    /// Predictor nodes, comma separated (e.g. `1,2,4`).
    #[arg(long, value_delimiter = ',')]
    predictors: Vec<usize>,
    #[arg(long, value_enum, default_value = "two-stage")]
    method: Method,
    /// Target-module numerator order.
    #[arg(long, default_value_t = 2)]
    num_order: usize,
    /// Target-module denominator order.
    #[arg(long, default_value_t = 2)]
    den_order: usize,
    #[arg(long, default_value_t = 1)]
    delay: usize,
    /// Local-fit polynomial degree.
    #[arg(long, default_value_t = 2)]
    lpm_degree: usize,
    /// Local-fit window half-width.
    #[arg(long, default_value_t = 12)]
    lpm_half_width: usize,
    /// Per-predictor orders JSON for the direct method (see README).
    #[arg(long)]
    orders_file: Option<PathBuf>,
    /// Multi-start count for the direct method.
    #[arg(long, default_value_t = 5)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct MontecarloArgs {
    /// Monte Carlo config JSON.
    #[arg(long)]
    config: PathBuf,
    /// Override the config's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Bound on parallel replicates (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct FrfArgs {
    #[arg(long)]
    network: PathBuf,
    /// DFT grid length; responses are evaluated at lines `0..=n/2`.
    #[arg(long, default_value_t = 1024)]
    n: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct CheckPredictorsArgs {
    #[arg(long)]
    network: PathBuf,
    #[arg(long)]
    output: usize,
    #[arg(long)]
    input: usize,
    #[arg(long, value_delimiter = ',')]
    predictors: Vec<usize>,
}

/// Error carrying the process exit code.
struct CliError {
    code: i32,
    message: String,
}

type CliResult<T = ()> = Result<T, CliError>;

fn usage_err(message: impl Into<String>) -> CliError {
    CliError { code: 2, message: message.into() }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::DivergedSimulation { .. } => 3,
            Error::RankDeficientWindow { .. }
            | Error::RankDeficient(_)
            | Error::NonFiniteCost
            | Error::UnstableNoiseInverse
            | Error::SingularAtLine { .. }
            | Error::InsufficientLines { .. }
            | Error::DegenerateTruth
            | Error::GridMismatch(_) => 4,
            _ => 2,
        };
        CliError { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        usage_err(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        usage_err(format!("config parse error: {e}"))
    }
}

fn main() {
    let cli = Cli::parse();
    let started = Instant::now();
    let result = match cli.cmd {
        Cmd::Simulate(a) => cmd_simulate(a, started),
        Cmd::Identify(a) => cmd_identify(a, started),
        Cmd::Montecarlo(a) => cmd_montecarlo(a, started),
        Cmd::Frf(a) => cmd_frf(a, started),
        Cmd::CheckPredictors(a) => cmd_check_predictors(a),
    };
    if let Err(e) = result {
        eprintln!("error: {}", e.message);
        std::process::exit(e.code);
    }
}

fn read_to_string(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path)
        .map_err(|e| usage_err(format!("{}: {e}", path.display())))
}

fn load_network_file(path: &Path) -> CliResult<NetworkModel> {
    Ok(load_network(&read_to_string(path)?)?)
}

fn write_manifest(
    out_dir: &Path,
    command: &str,
    config_paths: &[&Path],
    seed: Option<u64>,
    started: Instant,
) -> CliResult {
    let manifest = json!({
        "command": command,
        "config_paths": config_paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "seed": seed,
        "version": env!("CARGO_PKG_VERSION"),
        "out_dir": out_dir.display().to_string(),
        "wall_clock_secs": started.elapsed().as_secs_f64(),
    });
    let mut out = std::io::BufWriter::new(std::fs::File::create(out_dir.join("run_manifest.json"))?);
    writeln!(out, "{}", serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

#[derive(Deserialize)]
struct ExcitationFile {
    #[serde(default)]
    #[allow(dead_code)]
    schema_version: Option<u64>,
    excitations: BTreeMap<usize, ExcitationSpec>,
}

fn cmd_simulate(a: SimulateArgs, started: Instant) -> CliResult {
    if a.n == 0 {
        return Err(usage_err("record length --n must be positive"));
    }
    let model = load_network_file(&a.network)?;
    let excitation: ExcitationFile = serde_json::from_str(&read_to_string(&a.excitation)?)?;
    for node in excitation.excitations.keys() {
        if !model.references.contains(node) {
            return Err(usage_err(format!(
                "excited node {node} is not in the network's reference set"
            )));
        }
    }
    let ds = simulate(&model, &excitation.excitations, a.n, a.seed)?;
    std::fs::create_dir_all(&a.out_dir)?;
    write_dataset(
        &ds,
        &excitation.excitations,
        &a.out_dir.join("data.csv"),
        &a.out_dir.join("data.meta.json"),
    )?;
    write_manifest(&a.out_dir, "simulate", &[&a.network, &a.excitation], Some(a.seed), started)
}

#[derive(Deserialize)]
struct OrdersFile {
    modules: BTreeMap<usize, ModelOrders>,
    #[serde(default)]
    noise_num_order: usize,
    #[serde(default)]
    noise_den_order: usize,
}

fn cmd_identify(a: IdentifyArgs, started: Instant) -> CliResult {
    let model = load_network_file(&a.network)?;
    let ps = PredictorSet::new(a.output, a.input, a.predictors.iter().copied());
    let report = model.check_predictor_set(&ps)?;
    if !report.valid() {
        return Err(usage_err(format!(
            "predictor set fails the validity conditions: {}",
            serde_json::to_string(&report)?
        )));
    }

    let meta_path = a
        .meta
        .clone()
        .unwrap_or_else(|| a.dataset.with_extension("meta.json"));
    let (ds, _meta) = read_dataset(&a.dataset, &meta_path)?;
    if ds.w.len() != model.nodes {
        return Err(usage_err(format!(
            "dataset has {} nodes, network has {}",
            ds.w.len(),
            model.nodes
        )));
    }

    let target_orders = ModelOrders {
        numerator_order: a.num_order,
        denominator_order: a.den_order,
        delay: a.delay,
    };
    std::fs::create_dir_all(&a.out_dir)?;

    let estimate = match a.method {
        Method::TwoStage => {
            let cfg = LpmConfig { degree: a.lpm_degree, half_width: a.lpm_half_width };
            let ind = run_indirect(&ds, &ps, &model.references, &cfg)?;
            write_target_frf_csv(&ind, &a.out_dir.join("target_frf.csv"))?;
            let est = parfit::fit(&TargetFrf::from_indirect(&ind), &target_orders)?;
            json!({
                "method": a.method.name(),
                "output": a.output,
                "input": a.input,
                "predictors": a.predictors,
                "validity": report,
                "theta": est.theta,
                "orders": est.orders,
                "cost": est.cost,
                "converged": est.converged,
                "iterations": est.iterations,
                "theta_cov": est.theta_cov,
                "stable": est.stable,
            })
        }
        Method::Direct => {
            let (mut predictors, noise_num_order, noise_den_order) = match &a.orders_file {
                Some(path) => {
                    let f: OrdersFile = serde_json::from_str(&read_to_string(path)?)?;
                    (f.modules, f.noise_num_order, f.noise_den_order)
                }
                None => (BTreeMap::new(), 0, 0),
            };
            for &k in &ps.predictors {
                predictors.entry(k).or_insert(target_orders);
            }
            let structure = MisoStructure {
                output: a.output,
                predictors,
                noise_num_order,
                noise_den_order,
            };
            let opts = PemOptions { restarts: a.restarts, max_iter: 100, seed: a.seed };
            let res = pem::pem_fit(&ds, &structure, None, &opts)?;
            let orders = structure.predictors[&a.input];
            let tf = res.module_tf(&structure, a.input)?;
            json!({
                "method": a.method.name(),
                "output": a.output,
                "input": a.input,
                "predictors": a.predictors,
                "validity": report,
                "theta": res.module_theta[&a.input],
                "orders": orders,
                "cost": res.cost,
                "converged": res.converged,
                "iterations": res.iterations,
                "stable": tf.pole_radius() < 1.0,
                "noise_c": res.noise_c,
                "noise_d": res.noise_d,
            })
        }
    };

    let mut out = std::io::BufWriter::new(std::fs::File::create(a.out_dir.join("estimate.json"))?);
    writeln!(out, "{}", serde_json::to_string_pretty(&estimate)?)?;
    let mut configs: Vec<&Path> = vec![&a.network, &a.dataset];
    if let Some(f) = &a.orders_file {
        configs.push(f);
    }
    write_manifest(&a.out_dir, "identify", &configs, Some(a.seed), started)
}

fn cmd_montecarlo(a: MontecarloArgs, started: Instant) -> CliResult {
    let mut cfg: McConfig = serde_json::from_str(&read_to_string(&a.config)?)?;
    if let Some(seed) = a.seed {
        cfg.base_seed = seed;
    }
    if let Some(jobs) = a.jobs {
        if jobs == 0 {
            return Err(usage_err("--jobs must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| usage_err(e.to_string()))?;
    }
    let report = run_monte_carlo(&cfg)?;
    std::fs::create_dir_all(&a.out_dir)?;
    report.write_json(&a.out_dir.join("mc_report.json"))?;
    report.write_fits_csv(&a.out_dir.join("fits.csv"))?;
    report.write_params_csv(&a.out_dir.join("params.csv"))?;
    report.write_frf_stats_csv(&a.out_dir.join("frf_stats.csv"))?;
    for summary in &report.summaries {
        println!(
            "{}: {} ok / {} failed, median fit {:.4}",
            summary.method, summary.successes, summary.failures, summary.median_fit
        );
    }
    write_manifest(&a.out_dir, "montecarlo", &[&a.config], Some(cfg.base_seed), started)
}

fn cmd_frf(a: FrfArgs, started: Instant) -> CliResult {
    if a.n == 0 {
        return Err(usage_err("grid length --n must be positive"));
    }
    let model = load_network_file(&a.network)?;
    let lines: Vec<usize> = (0..=a.n / 2).collect();
    std::fs::create_dir_all(&a.out_dir)?;

    let mut out = std::io::BufWriter::new(std::fs::File::create(a.out_dir.join("modules_frf.csv"))?);
    writeln!(out, "from,to,line,re,im")?;
    for (&(to, from), tf) in &model.modules {
        let resp = tf.freq_response(&lines, a.n)?;
        for (pos, &line) in lines.iter().enumerate() {
            writeln!(out, "{from},{to},{line},{:.12e},{:.12e}", resp[pos].re, resp[pos].im)?;
        }
    }
    drop(out);

    let frm = model.closed_loop_frm(&lines, a.n)?;
    let mut out =
        std::io::BufWriter::new(std::fs::File::create(a.out_dir.join("closed_loop_frm.csv"))?);
    writeln!(out, "line,row,col,re,im")?;
    for (pos, &line) in lines.iter().enumerate() {
        for row in 0..model.nodes {
            for col in 0..model.nodes {
                let v = frm[pos][(row, col)];
                writeln!(out, "{line},{},{},{:.12e},{:.12e}", row + 1, col + 1, v.re, v.im)?;
            }
        }
    }
    drop(out);
    write_manifest(&a.out_dir, "frf", &[&a.network], None, started)
}

fn cmd_check_predictors(a: CheckPredictorsArgs) -> CliResult {
    let model = load_network_file(&a.network)?;
    let ps = PredictorSet::new(a.output, a.input, a.predictors.iter().copied());
    let report = model.check_predictor_set(&ps)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    if report.valid() {
        Ok(())
    } else {
        Err(usage_err("predictor set fails the validity conditions"))
    }
}
