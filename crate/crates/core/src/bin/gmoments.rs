use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use gaussian_moments::effective_dim::{r_max, DEFAULT_MC_SAMPLES};
use gaussian_moments::experiments::{default_fits, emit, evaluate_check, run_experiment, ExperimentConfig, Summary};
use gaussian_moments::gaussian::{read_batch_csv, read_matrix_csv, sample};
use gaussian_moments::norms::{max_norm, operator_norm_grid, operator_norm_hopm};
use gaussian_moments::perturbation::{check_corollary, check_proposition};
use gaussian_moments::{
    estimators, BlockCovariance, CovarianceFamily, CovarianceModel, DenseTensor, EstimatorKind, HopmOptions,
    NormKind,
};

#[derive(Parser)]
#[command(name = "gmoments", version, about = "Gaussian moment tensor estimation and verification")]
struct Cli {
    /// Worker threads (speed only; outputs do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Estimate the order-p moment tensor from data or a simulated batch.
    Estimate(EstimateArgs),
    /// Print r2 and a Monte Carlo r_max as JSON.
    EffectiveDim(EffectiveDimArgs),
    /// Compare two covariances against the perturbation bound; prints JSON.
    CheckBounds(CheckBoundsArgs),
    /// Norm of a tensor file; prints JSON.
    Norm(NormArgs),
    /// Run a configured Monte Carlo experiment.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// Covariance family: identity, scaled_identity, spiked, toeplitz, low_rank_plus_identity.
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    /// Family parameters as `key=value` pairs, comma separated.
    #[arg(long, default_value = "")]
    params: String,
}

#[derive(Args)]
struct EstimateArgs {
    /// CSV sample batch (one row per sample, header row).
    #[arg(long, conflicts_with = "family")]
    input: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    order: usize,
    #[arg(long, default_value = "isserlis")]
    estimator: EstimatorKind,
    /// Block sizes `d1,...,dp` for the asymmetric estimators.
    #[arg(long, value_delimiter = ',')]
    blocks: Option<Vec<usize>>,
    /// Tensor text file to write; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EffectiveDimArgs {
    /// CSV covariance matrix.
    #[arg(long, conflicts_with = "family")]
    input: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = DEFAULT_MC_SAMPLES)]
    mc_samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct HopmArgs {
    #[arg(long, default_value_t = 20)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    hopm_seed: u64,
}

impl HopmArgs {
    fn options(&self) -> HopmOptions {
        HopmOptions {
            restarts: self.restarts,
            seed: self.hopm_seed,
            ..HopmOptions::default()
        }
    }
}

#[derive(Args)]
struct CheckBoundsArgs {
    #[arg(long)]
    covx: PathBuf,
    #[arg(long)]
    covy: PathBuf,
    #[arg(long)]
    order: usize,
    #[arg(long, default_value = "max")]
    norm: NormKind,
    /// Block sizes `d1,...,dp` partitioning the joint covariances.
    #[arg(long, value_delimiter = ',')]
    blocks: Option<Vec<usize>>,
    /// Report the relative form `‖T_X − T_Y‖ / ‖T_Y‖` (symmetric case only).
    #[arg(long, conflicts_with = "blocks")]
    relative: bool,
    #[command(flatten)]
    hopm: HopmArgs,
}

#[derive(Args)]
struct NormArgs {
    /// Tensor text file.
    input: PathBuf,
    #[arg(long, default_value = "max")]
    norm: NormKind,
    /// Use the angular grid oracle (all modes of size at most 2).
    #[arg(long)]
    grid_steps: Option<usize>,
    #[command(flatten)]
    hopm: HopmArgs,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; falls back to `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_family(name: &str, params: &str) -> Result<CovarianceFamily> {
    let mut obj = serde_json::Map::new();
    obj.insert("family".into(), name.into());
    for kv in params.split(',').filter(|s| !s.trim().is_empty()) {
        let (k, v) = kv
            .split_once('=')
            .with_context(|| format!("parameter `{kv}` is not key=value"))?;
        let v = v.trim();
        let value: serde_json::Value = if let Ok(i) = v.parse::<u64>() {
            i.into()
        } else {
            v.parse::<f64>()
                .with_context(|| format!("parameter `{k}` is not a number"))?
                .into()
        };
        obj.insert(k.trim().into(), value);
    }
    serde_json::from_value(obj.into()).with_context(|| format!("bad family `{name}` with params `{params}`"))
}

impl ModelArgs {
    fn build(&self) -> Result<CovarianceModel> {
        let (Some(family), Some(dim)) = (&self.family, self.dim) else {
            bail!("give --input or both --family and --dim");
        };
        Ok(CovarianceModel::new(parse_family(family, &self.params)?, dim)?)
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn cmd_estimate(a: &EstimateArgs) -> Result<()> {
    let batch = match &a.input {
        Some(path) => read_batch_csv(path)?,
        None => {
            let n = a.n.context("--n is required when simulating")?;
            sample(&a.model.build()?, n, a.seed)?
        }
    };
    let out = estimators::estimate(&batch, a.estimator, a.order, a.blocks.as_deref())?;
    match &a.out {
        Some(path) => out.tensor.write_text(path)?,
        None => print!("{}", out.tensor.to_text()),
    }
    Ok(())
}

fn cmd_effective_dim(a: &EffectiveDimArgs) -> Result<()> {
    let model = match &a.input {
        Some(path) => CovarianceModel::explicit(read_matrix_csv(path)?)?,
        None => a.model.build()?,
    };
    print_json(&r_max(&model, a.mc_samples, a.seed)?)
}

fn cmd_check_bounds(a: &CheckBoundsArgs) -> Result<()> {
    let sx = read_matrix_csv(&a.covx)?;
    let sy = read_matrix_csv(&a.covy)?;
    let hopm = a.hopm.options();
    let report = if a.relative {
        check_corollary(&sx, &sy, a.order, a.norm, &hopm)?
    } else {
        let (x, y) = match &a.blocks {
            Some(b) => (BlockCovariance::from_joint(&sx, b)?, BlockCovariance::from_joint(&sy, b)?),
            None => (
                BlockCovariance::replicated(&sx, a.order)?,
                BlockCovariance::replicated(&sy, a.order)?,
            ),
        };
        check_proposition(&x, &y, a.norm, &hopm)?
    };
    print_json(&report)
}

fn cmd_norm(a: &NormArgs) -> Result<()> {
    let t = DenseTensor::read_text(&a.input)?;
    let result = match (a.norm, a.grid_steps) {
        (NormKind::Max, _) => max_norm(&t),
        (NormKind::Operator, Some(steps)) => operator_norm_grid(&t, steps)?,
        (NormKind::Operator, None) => operator_norm_hopm(&t, &a.hopm.options())?,
    };
    print_json(&result)
}

fn cmd_experiment(a: &ExperimentArgs) -> Result<ExitCode> {
    let cfg = ExperimentConfig::load(&a.config)?;
    let out: PathBuf = match (&a.out, &cfg.output) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => Path::new(p).to_path_buf(),
        (None, None) => bail!("give --out or set `output` in the config"),
    };
    let run = run_experiment(&cfg)?;
    let fits = default_fits(&cfg, &run.records);
    let checks: Vec<_> = cfg.checks.iter().map(|c| evaluate_check(c, &run.records)).collect();
    let summary = Summary {
        version: env!("CARGO_PKG_VERSION"),
        config: &cfg,
        rate_context: &run.rate_context,
        records: &run.records,
        fits: &fits,
        checks: &checks,
    };
    let (csv, json) = emit(&summary, &out)?;
    eprintln!("wrote {} and {}", csv.display(), json.display());
    let mut failed = false;
    for c in &checks {
        eprintln!("[{}] {}", if c.passed { "PASS" } else { "FAIL" }, c.detail);
        failed |= !c.passed;
    }
    Ok(if failed { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

fn run(cli: Cli) -> Result<ExitCode> {
    let threads = match &cli.cmd {
        Cmd::Experiment(a) if cli.threads.is_none() => ExperimentConfig::load(&a.config).ok().and_then(|c| c.threads),
        _ => cli.threads,
    };
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("failed to configure the thread pool")?;
    }
    match &cli.cmd {
        Cmd::Estimate(a) => cmd_estimate(a)?,
        Cmd::EffectiveDim(a) => cmd_effective_dim(a)?,
        Cmd::CheckBounds(a) => cmd_check_bounds(a)?,
        Cmd::Norm(a) => cmd_norm(a)?,
        Cmd::Experiment(a) => return cmd_experiment(a),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
