use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::norms::NormKind;

/// Norms and effective dimensions of one marginal covariance `Σ⁽ᵏ⁾`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockStats {
    pub dim: usize,
    pub op_norm: f64,
    pub max_norm: f64,
    pub r2: f64,
    pub r_max: f64,
    pub r_max_stderr: f64,
}

impl BlockStats {
    fn scale(&self, norm: NormKind) -> f64 {
        match norm {
            NormKind::Operator => self.op_norm,
            NormKind::Max => self.max_norm,
        }
    }

    fn r(&self, norm: NormKind) -> f64 {
        match norm {
            NormKind::Operator => self.r2,
            NormKind::Max => self.r_max,
        }
    }
}

/// Which rate expression applies.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateContext {
    /// One shared `Σ` (`blocks` then has one entry) or one block per mode.
    pub symmetric: bool,
    pub order: usize,
    pub blocks: Vec<BlockStats>,
}

impl RateContext {
    fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() {
            return Err(Error::invalid("rate needs effective dimensions"));
        }
        if !self.symmetric && self.blocks.len() != self.order {
            return Err(Error::invalid(format!(
                "asymmetric rate needs {} blocks, got {}",
                self.order,
                self.blocks.len()
            )));
        }
        if self.blocks.iter().any(|b| !(b.r2.is_finite() && b.r_max.is_finite())) {
            return Err(Error::invalid("effective dimensions must be finite"));
        }
        Ok(())
    }

    /// Whether `N ≥ max_k r(Σ⁽ᵏ⁾)`, the regime of the asymmetric Isserlis
    /// rate, with `r = r₂` for the operator norm and `r_max` for the max norm.
    pub fn in_regime(&self, n: usize, norm: NormKind) -> bool {
        self.symmetric || n as f64 >= self.blocks.iter().fold(0.0, |m: f64, b| m.max(b.r(norm)))
    }
}

/// Rate expression for `E‖T̂ − T‖` without its unknown constant.
///
/// Returns `None` for the asymmetric Isserlis estimator outside its regime.
pub fn theory_rate(
    estimator: EstimatorKind,
    norm: NormKind,
    ctx: &RateContext,
    n: usize,
) -> Result<Option<f64>> {
    ctx.validate()?;
    if n == 0 {
        return Err(Error::invalid("N must be positive"));
    }
    let nf = n as f64;
    let half = (ctx.order / 2) as i32;
    if ctx.symmetric {
        let b = &ctx.blocks[0];
        let (scale, r) = (b.scale(norm), b.r(norm));
        let prefactor = scale.powi(half);
        let second = match estimator {
            EstimatorKind::Sample => r.powi(half) / nf,
            EstimatorKind::Isserlis => (r / nf).powi(half),
        };
        return Ok(Some(prefactor * ((r / nf).sqrt() + second)));
    }
    let prefactor: f64 = ctx.blocks.iter().map(|b| b.scale(norm).sqrt()).product();
    match estimator {
        EstimatorKind::Sample => {
            let sum: f64 = ctx.blocks.iter().map(|b| b.r(norm)).sum();
            let prod: f64 = ctx.blocks.iter().map(|b| (b.r(norm) + nf.ln()).sqrt()).product();
            Ok(Some(prefactor * ((sum / nf).sqrt() + prod / nf)))
        }
        EstimatorKind::Isserlis => {
            if !ctx.in_regime(n, norm) {
                return Ok(None);
            }
            let max = ctx.blocks.iter().fold(0.0, |m: f64, b| m.max(b.r(norm)));
            Ok(Some(prefactor * (max / nf).sqrt()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity(d: usize, r_max: f64) -> BlockStats {
        BlockStats {
            dim: d,
            op_norm: 1.0,
            max_norm: 1.0,
            r2: d as f64,
            r_max,
            r_max_stderr: 0.0,
        }
    }

    #[test]
    fn symmetric_examples() {
        let ctx = RateContext { symmetric: true, order: 4, blocks: vec![identity(16, 6.0)] };
        let got = theory_rate(EstimatorKind::Sample, NormKind::Max, &ctx, 100).unwrap().unwrap();
        assert!((got - ((6.0f64 / 100.0).sqrt() + 36.0 / 100.0)).abs() < 1e-15);
        let got = theory_rate(EstimatorKind::Isserlis, NormKind::Operator, &ctx, 64).unwrap().unwrap();
        assert!((got - ((16.0f64 / 64.0).sqrt() + (16.0f64 / 64.0).powi(2))).abs() < 1e-15);
    }

    #[test]
    fn prefactor_scales_with_sigma() {
        let mut b = identity(3, 2.0);
        b.op_norm = 4.0;
        let ctx = RateContext { symmetric: true, order: 4, blocks: vec![b] };
        let base = RateContext { symmetric: true, order: 4, blocks: vec![identity(3, 2.0)] };
        let a = theory_rate(EstimatorKind::Sample, NormKind::Operator, &ctx, 10).unwrap().unwrap();
        let c = theory_rate(EstimatorKind::Sample, NormKind::Operator, &base, 10).unwrap().unwrap();
        assert!((a / c - 16.0).abs() < 1e-12);
    }

    #[test]
    fn decreasing_in_n() {
        let sym = RateContext { symmetric: true, order: 6, blocks: vec![identity(5, 3.0)] };
        let asym = RateContext { symmetric: false, order: 2, blocks: vec![identity(2, 1.5), identity(3, 2.0)] };
        for ctx in [&sym, &asym] {
            for est in [EstimatorKind::Sample, EstimatorKind::Isserlis] {
                for norm in [NormKind::Max, NormKind::Operator] {
                    let mut prev = f64::INFINITY;
                    for n in (5..2000).step_by(7) {
                        let r = theory_rate(est, norm, ctx, n).unwrap().unwrap();
                        assert!(r < prev);
                        prev = r;
                    }
                }
            }
        }
    }

    #[test]
    fn asymmetric_regime() {
        let ctx = RateContext { symmetric: false, order: 2, blocks: vec![identity(4, 2.0), identity(8, 3.0)] };
        assert_eq!(theory_rate(EstimatorKind::Isserlis, NormKind::Operator, &ctx, 7).unwrap(), None);
        assert!(theory_rate(EstimatorKind::Isserlis, NormKind::Operator, &ctx, 8).unwrap().is_some());
        assert_eq!(theory_rate(EstimatorKind::Isserlis, NormKind::Max, &ctx, 2).unwrap(), None);
        let r = theory_rate(EstimatorKind::Isserlis, NormKind::Max, &ctx, 3).unwrap().unwrap();
        assert!((r - 1.0).abs() < 1e-15);
        let r = theory_rate(EstimatorKind::Isserlis, NormKind::Max, &ctx, 8).unwrap().unwrap();
        assert!((r - (3.0f64 / 8.0).sqrt()).abs() < 1e-15);
        let s = theory_rate(EstimatorKind::Sample, NormKind::Max, &ctx, 8).unwrap().unwrap();
        let want = (5.0f64 / 8.0).sqrt() + ((2.0 + 8f64.ln()) * (3.0 + 8f64.ln())).sqrt() / 8.0;
        assert!((s - want).abs() < 1e-15);
    }

    #[test]
    fn missing_dims() {
        let ctx = RateContext { symmetric: true, order: 4, blocks: vec![] };
        assert!(theory_rate(EstimatorKind::Sample, NormKind::Max, &ctx, 10).is_err());
        let ctx = RateContext { symmetric: false, order: 4, blocks: vec![identity(2, 1.0)] };
        assert!(theory_rate(EstimatorKind::Sample, NormKind::Max, &ctx, 10).is_err());
    }
}
