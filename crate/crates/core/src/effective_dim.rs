//! Effective dimensions `r₂(Σ) = Tr Σ / ‖Σ‖` and
//! `r_max(Σ) = (E‖X‖_∞)² / ‖Σ‖_max`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gaussian::{draw_row, CovarianceModel};
use crate::linalg::{max_abs, spectral_norm, Matrix};

pub const DEFAULT_MC_SAMPLES: usize = 100_000;
pub const MIN_MC_SAMPLES: usize = 10_000;

const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectiveDims {
    pub r2: f64,
    pub r_max: f64,
    /// Standard error of `r_max` propagated from the MC mean (delta method).
    pub r_max_stderr: f64,
    /// Monte Carlo estimate of `E max_i |X_i|`.
    pub e_max_abs: f64,
    pub e_max_abs_stderr: f64,
    pub mc_samples: usize,
    pub seed: u64,
}

pub fn r2_matrix(sigma: &Matrix) -> Result<f64> {
    let norm = spectral_norm(sigma);
    if norm == 0.0 {
        return Err(Error::invalid("r2 of a zero matrix is undefined"));
    }
    Ok(sigma.trace() / norm)
}

pub fn r2(model: &CovarianceModel) -> Result<f64> {
    r2_matrix(model.matrix())
}

/// Monte Carlo mean and standard error of `max_i |X_i|` for `X ~ N(0, Σ)`.
///
/// Draw `i` uses the same counter-based stream as row `i` of
/// [`crate::gaussian::sample`]. Chunks are summed independently and reduced
/// in chunk order, so the result does not depend on the thread count.
pub fn expected_max_abs(model: &CovarianceModel, mc_samples: usize, seed: u64) -> (f64, f64) {
    let d = model.dim();
    let lower = &model.factor().lower;
    let chunks = mc_samples.div_ceil(CHUNK);
    let partial: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut g = vec![0.0; d];
            let mut x = vec![0.0; d];
            let (mut s, mut s2) = (0.0, 0.0);
            for i in c * CHUNK..((c + 1) * CHUNK).min(mc_samples) {
                draw_row(lower, seed, i as u64, &mut g, &mut x);
                let m = x.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
                s += m;
                s2 += m * m;
            }
            (s, s2)
        })
        .collect();
    let (s, s2) = partial
        .iter()
        .fold((0.0, 0.0), |(a, b), &(x, y)| (a + x, b + y));
    let n = mc_samples as f64;
    let mean = s / n;
    let var = if mc_samples > 1 {
        ((s2 - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    (mean, (var / n).sqrt())
}

/// Both effective dimensions; `r_max` by Monte Carlo.
pub fn r_max(model: &CovarianceModel, mc_samples: usize, seed: u64) -> Result<EffectiveDims> {
    if mc_samples < MIN_MC_SAMPLES {
        return Err(Error::invalid(format!(
            "r_max needs at least {MIN_MC_SAMPLES} Monte Carlo samples, got {mc_samples}"
        )));
    }
    let denom = max_abs(model.matrix());
    if denom == 0.0 {
        return Err(Error::invalid("r_max of a zero matrix is undefined"));
    }
    let r2 = r2(model)?;
    let (mean, se) = expected_max_abs(model, mc_samples, seed);
    Ok(EffectiveDims {
        r2,
        r_max: mean * mean / denom,
        r_max_stderr: 2.0 * mean * se / denom,
        e_max_abs: mean,
        e_max_abs_stderr: se,
        mc_samples,
        seed,
    })
}
