//! Deterministic perturbation bounds between Gaussian moment tensors.
//!
//! For block-partitioned `X` and `Y` with moment tensors `T_X`, `T_Y`:
//!
//! ```text
//! ‖T_X − T_Y‖ ≤ (∏ₖ ‖Σ_Y⁽ᵏ'ᵏ⁾‖^{1/2}) (p−1)!! (p/2) ε (1+ε)^{p/2−1}
//! ε = max_{j≠k} ‖Σ_X⁽ʲ'ᵏ⁾ − Σ_Y⁽ʲ'ᵏ⁾‖ / (‖Σ_Y⁽ʲ'ʲ⁾‖ ‖Σ_Y⁽ᵏ'ᵏ⁾‖)^{1/2}
//! ```
//!
//! in the operator norm, and the same with every norm replaced by the
//! entrywise maximum. Operator-norm left-hand sides come from HOPM and are
//! lower bounds, so a satisfied operator-norm check is a necessary
//! condition only.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{isserlis_symmetric, isserlis_tensor};
use crate::gaussian::BlockCovariance;
use crate::linalg::{matrix_norm, spectral_norm, Matrix};
use crate::norms::{max_norm, operator_norm_hopm, HopmOptions, NormKind, NormMethod};
use crate::pairings::{double_factorial, enumerate_pairings};
use crate::tensor::DenseTensor;

/// Relative slack allowed on `lhs ≤ rhs`.
pub const BOUND_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub lhs: f64,
    pub rhs: f64,
    pub epsilon_star: f64,
    pub norm: NormKind,
    pub satisfied: bool,
    pub slack: f64,
    /// How `lhs` was computed; `power_iteration` means it is a lower bound.
    pub lhs_method: NormMethod,
    /// The sharper per-pairing bound `(∏ₖ‖Σ_Y⁽ᵏ'ᵏ⁾‖^{1/2}) Σ_π (∏_{(j,k)∈π}(1+ε⁽ʲ'ᵏ⁾) − 1)`
    /// that sits between `lhs` and `rhs` (block checks only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pairing_bound: Option<f64>,
}

fn report(
    lhs: f64,
    rhs: f64,
    epsilon_star: f64,
    norm: NormKind,
    lhs_method: NormMethod,
    pairing_bound: Option<f64>,
) -> BoundReport {
    BoundReport {
        lhs,
        rhs,
        epsilon_star,
        norm,
        satisfied: lhs <= rhs + BOUND_RTOL * rhs,
        slack: rhs - lhs,
        lhs_method,
        pairing_bound,
    }
}

fn check_pair(x: &BlockCovariance, y: &BlockCovariance) -> Result<()> {
    if x.sizes() != y.sizes() {
        return Err(Error::invalid(format!(
            "block structures differ: {:?} vs {:?}",
            x.sizes(),
            y.sizes()
        )));
    }
    Ok(())
}

fn diagonal_norms(y: &BlockCovariance, norm: NormKind) -> Result<Vec<f64>> {
    (0..y.num_blocks())
        .map(|k| {
            let v = matrix_norm(y.block(k, k), norm);
            if v == 0.0 {
                Err(Error::invalid(format!("diagonal block {k} of Y is zero")))
            } else {
                Ok(v)
            }
        })
        .collect()
}

/// Normalized deviations `ε⁽ʲ'ᵏ⁾` for every ordered pair (zero on the diagonal).
fn deviations(x: &BlockCovariance, y: &BlockCovariance, norm: NormKind) -> Result<Vec<Vec<f64>>> {
    check_pair(x, y)?;
    let diag = diagonal_norms(y, norm)?;
    let p = y.num_blocks();
    Ok((0..p)
        .map(|j| {
            (0..p)
                .map(|k| {
                    if j == k {
                        0.0
                    } else {
                        matrix_norm(&(x.block(j, k) - y.block(j, k)), norm) / (diag[j] * diag[k]).sqrt()
                    }
                })
                .collect()
        })
        .collect())
}

/// `ε_*` (operator norm) or `ε̄_*` (max norm): the largest normalized
/// cross-block deviation over ordered pairs `j ≠ k`.
pub fn epsilon_star(x: &BlockCovariance, y: &BlockCovariance, norm: NormKind) -> Result<f64> {
    Ok(deviations(x, y, norm)?
        .iter()
        .flatten()
        .fold(0.0, |m: f64, &e| m.max(e)))
}

/// Right-hand side `(∏ₖ‖Σ_Y⁽ᵏ'ᵏ⁾‖^{1/2}) (p−1)!! (p/2) ε (1+ε)^{p/2−1}`.
pub fn proposition_bound(y: &BlockCovariance, eps: f64, norm: NormKind) -> Result<f64> {
    if !(eps >= 0.0) {
        return Err(Error::invalid("epsilon must be nonnegative"));
    }
    let p = y.num_blocks();
    let prefactor: f64 = diagonal_norms(y, norm)?.iter().map(|v| v.sqrt()).product();
    let half = (p / 2) as f64;
    Ok(prefactor * double_factorial(p)? as f64 * half * eps * (1.0 + eps).powi(p as i32 / 2 - 1))
}

/// The intermediate bound `(∏ₖ‖Σ_Y⁽ᵏ'ᵏ⁾‖^{1/2}) Σ_π (∏_{(j,k)∈π}(1+ε⁽ʲ'ᵏ⁾) − 1)`.
pub fn pairing_bound(x: &BlockCovariance, y: &BlockCovariance, norm: NormKind) -> Result<f64> {
    let eps = deviations(x, y, norm)?;
    let prefactor: f64 = diagonal_norms(y, norm)?.iter().map(|v| v.sqrt()).product();
    let sum: f64 = enumerate_pairings(y.num_blocks())?
        .iter()
        .map(|q| q.pairs().iter().map(|&(j, k)| 1.0 + eps[j][k]).product::<f64>() - 1.0)
        .sum();
    Ok(prefactor * sum)
}

fn distance(a: &DenseTensor, b: &DenseTensor, norm: NormKind, hopm: &HopmOptions) -> Result<(f64, NormMethod)> {
    let diff = a.sub(b)?;
    let r = match norm {
        NormKind::Max => max_norm(&diff),
        NormKind::Operator => operator_norm_hopm(&diff, hopm)?,
    };
    Ok((r.value, r.method))
}

/// Computes both sides of the block perturbation bound.
pub fn check_proposition(
    x: &BlockCovariance,
    y: &BlockCovariance,
    norm: NormKind,
    hopm: &HopmOptions,
) -> Result<BoundReport> {
    check_pair(x, y)?;
    let eps = epsilon_star(x, y, norm)?;
    let rhs = proposition_bound(y, eps, norm)?;
    let (lhs, method) = distance(&isserlis_tensor(x)?, &isserlis_tensor(y)?, norm, hopm)?;
    let mid = pairing_bound(x, y, norm)?;
    Ok(report(lhs, rhs, eps, norm, method, Some(mid)))
}

/// `‖E Y^{⊗p}‖ = (p−1)!! ‖Σ‖^{p/2}` for `Y ~ N(0, Σ)`.
pub fn norm_of_true_tensor(sigma: &Matrix, p: usize) -> Result<f64> {
    Ok(double_factorial(p)? as f64 * spectral_norm(sigma).powf(p as f64 / 2.0))
}

/// Relative form of the symmetric bound:
/// `‖T_X − T_Y‖/‖T_Y‖ ≤ (p/2) e (1+e)^{p/2−1}` with `e = ‖Σ_X − Σ_Y‖/‖Σ_Y‖`.
///
/// For the operator norm `‖T_Y‖` uses the closed form; for the max norm it
/// is computed from the tensor.
pub fn check_corollary(
    sigma_x: &Matrix,
    sigma_y: &Matrix,
    p: usize,
    norm: NormKind,
    hopm: &HopmOptions,
) -> Result<BoundReport> {
    if sigma_x.shape() != sigma_y.shape() || !sigma_y.is_square() {
        return Err(Error::invalid("covariances must be square with equal shapes"));
    }
    let y_norm = matrix_norm(sigma_y, norm);
    if y_norm == 0.0 {
        return Err(Error::invalid("Σ_Y is zero"));
    }
    let e = matrix_norm(&(sigma_x - sigma_y), norm) / y_norm;
    let half = (p / 2) as f64;
    let rhs = half * e * (1.0 + e).powi(p as i32 / 2 - 1);
    let tx = isserlis_symmetric(sigma_x, p)?;
    let ty = isserlis_symmetric(sigma_y, p)?;
    let (dist, method) = distance(&tx, &ty, norm, hopm)?;
    let reference = match norm {
        NormKind::Operator => norm_of_true_tensor(sigma_y, p)?,
        NormKind::Max => max_norm(&ty).value,
    };
    Ok(report(dist / reference, rhs, e, norm, method, None))
}

/// `a₁⋯a_m − b₁⋯b_m` expanded as `Σ_ℓ a₁⋯a_{ℓ−1} (a_ℓ − b_ℓ) b_{ℓ+1}⋯b_m`.
pub fn telescoping_difference(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    (0..a.len())
        .map(|l| {
            a[..l].iter().product::<f64>() * (a[l] - b[l]) * b[l + 1..].iter().product::<f64>()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};

    use super::*;
    use crate::gaussian::random_psd;

    fn scalar_blocks(x: f64, p: usize) -> BlockCovariance {
        BlockCovariance::replicated(&Matrix::from_element(1, 1, x), p).unwrap()
    }

    #[test]
    fn epsilon_examples() {
        let y = scalar_blocks(1.0, 4);
        assert_eq!(epsilon_star(&y, &y, NormKind::Max).unwrap(), 0.0);
        let x = scalar_blocks(2.0, 4);
        assert_eq!(epsilon_star(&x, &y, NormKind::Max).unwrap(), 1.0);
        assert_eq!(epsilon_star(&x, &y, NormKind::Operator).unwrap(), 1.0);

        let s = random_psd(6, 3);
        let t = random_psd(6, 4);
        let y = BlockCovariance::from_joint(&s, &[3, 3]).unwrap();
        let x = BlockCovariance::from_joint(&t, &[3, 3]).unwrap();
        let base = epsilon_star(&x, &y, NormKind::Operator).unwrap();
        for scale in [0.0, 0.5, 2.0] {
            let xs = BlockCovariance::from_joint(&(&s + (&t - &s) * scale), &[3, 3]).unwrap();
            let e = epsilon_star(&xs, &y, NormKind::Operator).unwrap();
            assert!((e - scale * base).abs() <= 1e-12 * base.max(1.0));
        }
    }

    #[test]
    fn epsilon_rejects_zero_diagonal_block() {
        let y = BlockCovariance::from_joint(&Matrix::from_diagonal(&nalgebra::dvector![1.0, 0.0]), &[1, 1]).unwrap();
        assert!(epsilon_star(&y, &y, NormKind::Max).is_err());
    }

    #[test]
    fn bound_examples() {
        let y = scalar_blocks(1.0, 4);
        assert_eq!(proposition_bound(&y, 0.0, NormKind::Max).unwrap(), 0.0);
        assert_eq!(proposition_bound(&y, 1.0, NormKind::Max).unwrap(), 12.0);
        let y2 = BlockCovariance::from_joint(&Matrix::from_diagonal(&nalgebra::dvector![4.0, 9.0]), &[1, 1]).unwrap();
        assert_eq!(proposition_bound(&y2, 0.25, NormKind::Operator).unwrap(), 6.0 * 0.25);
        assert!(proposition_bound(&y, -1.0, NormKind::Max).is_err());
    }

    #[test]
    fn scalar_proposition_check() {
        let x = scalar_blocks(2.0, 4);
        let y = scalar_blocks(1.0, 4);
        let r = check_proposition(&x, &y, NormKind::Max, &HopmOptions::default()).unwrap();
        assert_eq!((r.lhs, r.rhs, r.epsilon_star), (9.0, 12.0, 1.0));
        assert!(r.satisfied);
        assert_eq!(r.slack, 3.0);
        // Σ_π (2·2 − 1) = 9: the intermediate bound is tight here.
        assert_eq!(r.pairing_bound, Some(9.0));

        let r = check_proposition(&y, &y, NormKind::Max, &HopmOptions::default()).unwrap();
        assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
        assert!(r.satisfied);
    }

    #[test]
    fn corollary_examples() {
        let h = HopmOptions::default();
        let sy = Matrix::from_element(1, 1, 1.0);
        let sx = Matrix::from_element(1, 1, 2.0);
        for norm in [NormKind::Max, NormKind::Operator] {
            let r = check_corollary(&sx, &sy, 4, norm, &h).unwrap();
            assert!((r.lhs - 3.0).abs() < 1e-12);
            assert_eq!(r.rhs, 4.0);
            assert!(r.satisfied);
            let r = check_corollary(&sy, &sy, 4, norm, &h).unwrap();
            assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
        }
        let a = random_psd(3, 1);
        let b = random_psd(3, 2);
        let r = check_corollary(&a, &b, 2, NormKind::Max, &h).unwrap();
        assert!((r.lhs - r.rhs).abs() <= 1e-15 * r.rhs);
        assert!(r.satisfied);
        assert!(check_corollary(&a, &Matrix::zeros(3, 3), 4, NormKind::Max, &h).is_err());
    }

    #[test]
    fn closed_form_true_norm() {
        assert_eq!(norm_of_true_tensor(&Matrix::identity(3, 3), 4).unwrap(), 3.0);
        assert_eq!(norm_of_true_tensor(&Matrix::from_element(1, 1, 2.0), 2).unwrap(), 2.0);
        let d = Matrix::from_diagonal(&nalgebra::dvector![2.0, 1.0]);
        assert!((norm_of_true_tensor(&d, 6).unwrap() - 120.0).abs() < 1e-12);
    }

    #[test]
    fn telescoping_identity() {
        let mut g = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for m in 1..=6 {
            for _ in 0..200 {
                let a: Vec<f64> = (0..m).map(|_| g.random_range(-2.0..2.0)).collect();
                let b: Vec<f64> = (0..m).map(|_| g.random_range(-2.0..2.0)).collect();
                let direct = a.iter().product::<f64>() - b.iter().product::<f64>();
                assert!((telescoping_difference(&a, &b) - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn product_expansion_identity() {
        // Σ_ℓ a_ℓ ∏_{s<ℓ}(1+a_s) = ∏_ℓ(1+a_ℓ) − 1
        let a = [0.3, 1.7, 0.05, 2.2];
        let lhs: f64 = (0..a.len())
            .map(|l| a[l] * a[..l].iter().map(|x| 1.0 + x).product::<f64>())
            .sum();
        let rhs = a.iter().map(|x| 1.0 + x).product::<f64>() - 1.0;
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn chain_of_bounds_on_random_blocks() {
        let h = HopmOptions::default();
        for seed in 0..30u64 {
            let sizes = [2, 1, 3, 2];
            let y = random_psd(8, seed);
            let x = &y + (random_psd(8, seed + 1000) - &y) * 0.1;
            let bx = BlockCovariance::from_joint(&x, &sizes).unwrap();
            let by = BlockCovariance::from_joint(&y, &sizes).unwrap();
            for norm in [NormKind::Max, NormKind::Operator] {
                let r = check_proposition(&bx, &by, norm, &h).unwrap();
                let mid = r.pairing_bound.unwrap();
                assert!(r.lhs <= mid * (1.0 + BOUND_RTOL), "{norm} seed {seed}: {r:?}");
                assert!(mid <= r.rhs * (1.0 + BOUND_RTOL), "{norm} seed {seed}: {r:?}");
                assert!(r.satisfied);
            }
        }
    }
}
