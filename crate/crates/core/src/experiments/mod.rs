//! Monte Carlo harness measuring `E‖T̂ − T‖` over a grid of sample sizes.

mod config;
mod fit;
mod output;
mod rates;

pub use config::{BlockMode, CheckSpec, CovarianceSpec, ExperimentConfig};
pub use fit::{fit_slopes, ols, SlopeFit, MIN_FIT_POINTS};
pub use output::{emit, write_csv, Summary, CSV_HEADER};
pub use rates::{theory_rate, BlockStats, RateContext};

use rayon::prelude::*;
use serde::Serialize;

use crate::effective_dim::r_max;
use crate::error::Result;
use crate::estimators::{estimate, isserlis_tensor, EstimatorKind};
use crate::gaussian::{sample, CovarianceModel};
use crate::linalg::{max_abs, spectral_norm};
use crate::norms::{tensor_distance, HopmOptions, NormKind, NormMethod};
use crate::rng::derive_seed;

/// Seed path for the effective-dimension Monte Carlo of block `k`.
const DIMS_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRecord {
    pub estimator: EstimatorKind,
    pub norm: NormKind,
    #[serde(rename = "N")]
    pub n: usize,
    pub trials: usize,
    pub mean_error: f64,
    pub stderr: f64,
    /// Largest `r₂` over the blocks.
    pub r2: f64,
    /// Largest `r_max` over the blocks, with its Monte Carlo error.
    pub r_max: f64,
    pub r_max_stderr: f64,
    pub theory_rate: Option<f64>,
    pub ratio: Option<f64>,
    /// How the error norm was computed; HOPM values are lower bounds.
    pub method: NormMethod,
    /// False when the rate's sample-size condition does not hold.
    pub in_regime: bool,
}

impl ExperimentRecord {
    #[cfg(test)]
    pub(crate) fn synthetic(estimator: EstimatorKind, norm: NormKind, n: usize, mean_error: f64) -> Self {
        Self {
            estimator,
            norm,
            n,
            trials: 1,
            mean_error,
            stderr: 0.0,
            r2: 1.0,
            r_max: 1.0,
            r_max_stderr: 0.0,
            theory_rate: None,
            ratio: None,
            method: NormMethod::Exact,
            in_regime: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub check: CheckSpec,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRun {
    pub records: Vec<ExperimentRecord>,
    pub rate_context: RateContext,
}

fn block_stats(model: &CovarianceModel, mc_samples: usize, seed: u64) -> Result<BlockStats> {
    let dims = r_max(model, mc_samples, seed)?;
    Ok(BlockStats {
        dim: model.dim(),
        op_norm: spectral_norm(model.matrix()),
        max_norm: max_abs(model.matrix()),
        r2: dims.r2,
        r_max: dims.r_max,
        r_max_stderr: dims.r_max_stderr,
    })
}

fn mean_and_stderr(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, 0.0);
    }
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs every (N, trial) pair, then aggregates per (estimator, norm, N).
///
/// Trial `t` at grid index `i` draws its batch from
/// `derive_seed(seed, [i, t])`, so any grid point can be reproduced alone.
/// Results are gathered in index order, which makes the output independent
/// of the thread count.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentRun> {
    cfg.validate()?;
    let p = cfg.order;
    let setup = cfg.covariance.setup(p)?;
    let truth = isserlis_tensor(&setup.truth_cov)?;

    let stats = match setup.replicate {
        Some(copies) => {
            let one = block_stats(&setup.model, cfg.mc_samples, derive_seed(cfg.seed, &[DIMS_STREAM, 0]))?;
            vec![one; copies]
        }
        None => setup
            .marginals
            .iter()
            .enumerate()
            .map(|(k, m)| {
                let model = CovarianceModel::explicit(m.clone())?;
                block_stats(&model, cfg.mc_samples, derive_seed(cfg.seed, &[DIMS_STREAM, k as u64]))
            })
            .collect::<Result<Vec<_>>>()?,
    };
    let ctx = RateContext {
        symmetric: setup.blocks.is_none(),
        order: p,
        blocks: stats,
    };

    let jobs: Vec<(usize, usize)> = (0..cfg.n_grid.len())
        .flat_map(|i| (0..cfg.trials).map(move |t| (i, t)))
        .collect();
    let errors: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(i, t)| -> Result<Vec<f64>> {
            let seed = derive_seed(cfg.seed, &[i as u64, t as u64]);
            let mut batch = sample(&setup.model, cfg.n_grid[i], seed)?;
            if let Some(copies) = setup.replicate {
                batch = batch.replicated(copies)?;
            }
            let mut out = Vec::with_capacity(cfg.estimators.len() * cfg.norms.len());
            for (e, &est) in cfg.estimators.iter().enumerate() {
                let t_hat = estimate(&batch, est, p, setup.blocks.as_deref())?.tensor;
                for &norm in &cfg.norms {
                    let hopm = HopmOptions {
                        seed: derive_seed(seed, &[e as u64]),
                        ..cfg.hopm
                    };
                    out.push(tensor_distance(&t_hat, &truth, norm, &hopm)?);
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let (r2, r_max, r_max_stderr) = ctx
        .blocks
        .iter()
        .fold((0.0f64, 0.0f64, 0.0), |(a, b, s), x| {
            let (rm, rs) = if x.r_max > b { (x.r_max, x.r_max_stderr) } else { (b, s) };
            (a.max(x.r2), rm, rs)
        });

    let mut records = Vec::new();
    for (e, &estimator) in cfg.estimators.iter().enumerate() {
        for (k, &norm) in cfg.norms.iter().enumerate() {
            let col = e * cfg.norms.len() + k;
            for (i, &n) in cfg.n_grid.iter().enumerate() {
                let rows = &errors[i * cfg.trials..(i + 1) * cfg.trials];
                let (mean_error, stderr) = mean_and_stderr(rows.iter().map(|r| r[col]));
                let rate = theory_rate(estimator, norm, &ctx, n)?;
                records.push(ExperimentRecord {
                    estimator,
                    norm,
                    n,
                    trials: cfg.trials,
                    mean_error,
                    stderr,
                    r2,
                    r_max,
                    r_max_stderr,
                    theory_rate: rate,
                    ratio: rate.map(|r| mean_error / r),
                    method: match norm {
                        NormKind::Max => NormMethod::Exact,
                        NormKind::Operator => NormMethod::PowerIteration,
                    },
                    in_regime: estimator == EstimatorKind::Sample || ctx.in_regime(n, norm),
                });
            }
        }
    }
    Ok(ExperimentRun { records, rate_context: ctx })
}

fn select(records: &[ExperimentRecord], estimator: EstimatorKind, norm: NormKind) -> Vec<&ExperimentRecord> {
    records
        .iter()
        .filter(|r| r.estimator == estimator && r.norm == norm)
        .collect()
}

/// Evaluates one configured check against the aggregated records.
pub fn evaluate_check(check: &CheckSpec, records: &[ExperimentRecord]) -> CheckOutcome {
    let (passed, detail) = match *check {
        CheckSpec::Ordering { norm, better, worse } => {
            let b = select(records, better, norm);
            let w = select(records, worse, norm);
            let bad: Vec<usize> = b
                .iter()
                .zip(&w)
                .filter(|(x, y)| x.n != y.n || x.mean_error >= y.mean_error)
                .map(|(x, _)| x.n)
                .collect();
            if b.is_empty() || b.len() != w.len() {
                (false, format!("missing records for {better} or {worse} under {norm}"))
            } else if bad.is_empty() {
                (true, format!("{better} below {worse} at all {} grid points", b.len()))
            } else {
                (false, format!("{better} not below {worse} at N = {bad:?}"))
            }
        }
        CheckSpec::Slope { estimator, norm, n_min, n_max, lo, hi } => {
            let subset: Vec<ExperimentRecord> = select(records, estimator, norm).into_iter().cloned().collect();
            match fit_slopes(&subset, n_min, n_max) {
                Ok(fits) => {
                    let s = fits[0].slope;
                    ((lo..=hi).contains(&s), format!("slope {s:.4} on [{n_min}, {n_max}], want [{lo}, {hi}]"))
                }
                Err(e) => (false, e.to_string()),
            }
        }
        CheckSpec::RatioBand { estimator, norm, max_factor } => {
            let ratios: Vec<f64> = select(records, estimator, norm).iter().filter_map(|r| r.ratio).collect();
            if ratios.is_empty() {
                (false, format!("no ratios for {estimator} under {norm}"))
            } else {
                let hi = ratios.iter().cloned().fold(f64::MIN, f64::max);
                let lo = ratios.iter().cloned().fold(f64::MAX, f64::min);
                let spread = hi / lo;
                (spread < max_factor, format!("ratio spread {spread:.4}, want < {max_factor}"))
            }
        }
    };
    CheckOutcome { check: check.clone(), passed, detail }
}

/// Slope fits for the full grid and each configured range; ranges with too
/// few points are skipped.
pub fn default_fits(cfg: &ExperimentConfig, records: &[ExperimentRecord]) -> Vec<SlopeFit> {
    let full = [cfg.n_grid[0], *cfg.n_grid.last().unwrap()];
    std::iter::once(full)
        .chain(cfg.fit_ranges.iter().copied())
        .filter_map(|[lo, hi]| fit_slopes(records, lo, hi).ok())
        .flatten()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::CovarianceFamily;

    fn config(family: CovarianceFamily, dim: usize, p: usize, grid: Vec<usize>, trials: usize) -> ExperimentConfig {
        ExperimentConfig {
            covariance: CovarianceSpec {
                family,
                dim: Some(dim),
                blocks: None,
                block_mode: BlockMode::Independent,
                matrix: None,
            },
            order: p,
            estimators: vec![EstimatorKind::Sample, EstimatorKind::Isserlis],
            norms: vec![NormKind::Max],
            n_grid: grid,
            trials,
            seed: 11,
            mc_samples: 10_000,
            hopm: HopmOptions::default(),
            threads: None,
            output: None,
            fit_ranges: vec![],
            checks: vec![],
        }
    }

    #[test]
    fn univariate_p2_matches_chi_square() {
        let cfg = config(CovarianceFamily::Identity, 1, 2, vec![50, 200], 400);
        let run = run_experiment(&cfg).unwrap();
        for r in &run.records {
            assert!(r.mean_error.is_finite() && r.mean_error > 0.0);
            let want = (2.0 / r.n as f64).sqrt() * (2.0 / std::f64::consts::PI).sqrt();
            assert!((r.mean_error - want).abs() < 5.0 * r.stderr + 0.02 * want, "{r:?}");
        }
    }

    #[test]
    fn univariate_error_is_sample_variance_deviation() {
        let cfg = config(CovarianceFamily::Identity, 1, 2, vec![30], 1);
        let run = run_experiment(&cfg).unwrap();
        let batch = sample(
            &crate::gaussian::make_covariance(CovarianceFamily::Identity, 1).unwrap(),
            30,
            derive_seed(11, &[0, 0]),
        )
        .unwrap();
        let s = batch.data().iter().map(|x| x * x).sum::<f64>() / 30.0;
        assert!((run.records[0].mean_error - (s - 1.0).abs()).abs() < 1e-14);
        // Both estimators coincide at p = 2.
        assert!((run.records[1].mean_error - run.records[0].mean_error).abs() < 1e-14);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let mut cfg = config(CovarianceFamily::Toeplitz { rho: 0.3 }, 3, 4, vec![8, 16, 32], 6);
        cfg.norms = vec![NormKind::Max, NormKind::Operator];
        cfg.hopm.restarts = 3;
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| run_experiment(&cfg)).unwrap();
        let b = four.install(|| run_experiment(&cfg)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.records.len(), 12);
        assert!(a.records.iter().filter(|r| r.norm == NormKind::Operator).all(|r| r.method == NormMethod::PowerIteration));
    }

    #[test]
    fn asymmetric_regime_flags() {
        let mut cfg = config(CovarianceFamily::Identity, 0, 2, vec![2, 3, 8], 2);
        cfg.norms = vec![NormKind::Operator];
        cfg.covariance.dim = None;
        cfg.covariance.blocks = Some(vec![4, 3]);
        let run = run_experiment(&cfg).unwrap();
        let iss: Vec<_> = run.records.iter().filter(|r| r.estimator == EstimatorKind::Isserlis).collect();
        assert!(!iss[0].in_regime && iss[0].theory_rate.is_none() && iss[0].ratio.is_none());
        assert!(iss[2].in_regime && iss[2].theory_rate.is_some());
        assert!(run.records.iter().filter(|r| r.estimator == EstimatorKind::Sample).all(|r| r.theory_rate.is_some()));
        assert_eq!(run.records[0].r2, 4.0);
    }

    #[test]
    fn checks_evaluate() {
        let recs: Vec<ExperimentRecord> = [16usize, 32, 64]
            .iter()
            .flat_map(|&n| {
                let x = 1.0 / (n as f64).sqrt();
                let mut s = ExperimentRecord::synthetic(EstimatorKind::Sample, NormKind::Max, n, 2.0 * x);
                s.ratio = Some(2.0);
                [s, ExperimentRecord::synthetic(EstimatorKind::Isserlis, NormKind::Max, n, x)]
            })
            .collect();
        let ord = CheckSpec::Ordering { norm: NormKind::Max, better: EstimatorKind::Isserlis, worse: EstimatorKind::Sample };
        assert!(evaluate_check(&ord, &recs).passed);
        let rev = CheckSpec::Ordering { norm: NormKind::Max, better: EstimatorKind::Sample, worse: EstimatorKind::Isserlis };
        assert!(!evaluate_check(&rev, &recs).passed);
        let slope = CheckSpec::Slope { estimator: EstimatorKind::Isserlis, norm: NormKind::Max, n_min: 16, n_max: 64, lo: -0.6, hi: -0.4 };
        assert!(evaluate_check(&slope, &recs).passed);
        let band = CheckSpec::RatioBand { estimator: EstimatorKind::Sample, norm: NormKind::Max, max_factor: 3.0 };
        assert!(evaluate_check(&band, &recs).passed);
        let none = CheckSpec::RatioBand { estimator: EstimatorKind::Isserlis, norm: NormKind::Max, max_factor: 3.0 };
        assert!(!evaluate_check(&none, &recs).passed);
    }
}
