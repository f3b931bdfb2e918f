use serde::Serialize;

use super::ExperimentRecord;
use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::norms::NormKind;

pub const MIN_FIT_POINTS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeFit {
    pub estimator: EstimatorKind,
    pub norm: NormKind,
    pub n_min: usize,
    pub n_max: usize,
    pub points: usize,
    pub slope: f64,
    pub intercept: f64,
    /// Root mean square residual in log space.
    pub residual: f64,
}

/// Least-squares line through `(x, y)`: `(slope, intercept, rms residual)`.
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    (slope, intercept, (rss / n).sqrt())
}

/// Fits `log mean_error` against `log N` for every (estimator, norm) pair
/// over `n_min ≤ N ≤ n_max`, in order of first appearance.
pub fn fit_slopes(records: &[ExperimentRecord], n_min: usize, n_max: usize) -> Result<Vec<SlopeFit>> {
    let mut keys: Vec<(EstimatorKind, NormKind)> = Vec::new();
    for r in records {
        if !keys.contains(&(r.estimator, r.norm)) {
            keys.push((r.estimator, r.norm));
        }
    }
    keys.into_iter()
        .map(|(estimator, norm)| {
            let pts: Vec<&ExperimentRecord> = records
                .iter()
                .filter(|r| r.estimator == estimator && r.norm == norm && (n_min..=n_max).contains(&r.n))
                .collect();
            if pts.len() < MIN_FIT_POINTS {
                return Err(Error::invalid(format!(
                    "{estimator}/{norm}: {} points in [{n_min}, {n_max}], need {MIN_FIT_POINTS}",
                    pts.len()
                )));
            }
            if pts.iter().any(|r| r.mean_error <= 0.0) {
                return Err(Error::invalid(format!(
                    "{estimator}/{norm}: zero mean error has no logarithm"
                )));
            }
            let x: Vec<f64> = pts.iter().map(|r| (r.n as f64).ln()).collect();
            let y: Vec<f64> = pts.iter().map(|r| r.mean_error.ln()).collect();
            let (slope, intercept, residual) = ols(&x, &y);
            Ok(SlopeFit {
                estimator,
                norm,
                n_min,
                n_max,
                points: pts.len(),
                slope,
                intercept,
                residual,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(f: impl Fn(f64) -> f64) -> Vec<ExperimentRecord> {
        [16usize, 32, 64, 128, 256]
            .iter()
            .map(|&n| ExperimentRecord::synthetic(EstimatorKind::Isserlis, NormKind::Max, n, f(n as f64)))
            .collect()
    }

    #[test]
    fn exact_power_laws() {
        let fits = fit_slopes(&synthetic(|n| 3.0 / n.sqrt()), 0, usize::MAX).unwrap();
        assert_eq!(fits.len(), 1);
        assert!((fits[0].slope + 0.5).abs() < 1e-12);
        assert!((fits[0].intercept - 3f64.ln()).abs() < 1e-12);
        assert!(fits[0].residual < 1e-12);
        let fits = fit_slopes(&synthetic(|n| 7.0 / n), 0, usize::MAX).unwrap();
        assert!((fits[0].slope + 1.0).abs() < 1e-12);
    }

    #[test]
    fn subrange_and_groups() {
        let mut recs = synthetic(|n| 1.0 / n);
        recs.extend(
            [16usize, 32, 64, 128, 256]
                .iter()
                .map(|&n| ExperimentRecord::synthetic(EstimatorKind::Sample, NormKind::Max, n, (n as f64).powf(-0.25))),
        );
        let fits = fit_slopes(&recs, 32, 128).unwrap();
        assert_eq!(fits.len(), 2);
        assert_eq!(fits[0].points, 3);
        assert_eq!(fits[1].estimator, EstimatorKind::Sample);
        assert!((fits[1].slope + 0.25).abs() < 1e-12);
    }

    #[test]
    fn too_few_points() {
        let recs = synthetic(|n| 1.0 / n);
        assert!(matches!(fit_slopes(&recs, 128, 512), Err(Error::InvalidArgument(_))));
        let zero = synthetic(|_| 0.0);
        assert!(fit_slopes(&zero, 0, usize::MAX).is_err());
    }
}
