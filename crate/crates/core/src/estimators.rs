//! Sample-moment and Isserlis plug-in estimators of Gaussian moment tensors.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{offsets, sample_block_covariance, sample_covariance, BlockCovariance, SampleBatch};
use crate::linalg::Matrix;
use crate::pairings::{enumerate_pairings, MAX_PAIRING_ORDER};
use crate::tensor::{advance, checked_len, DenseTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Sample,
    Isserlis,
}

impl EstimatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::Sample => "sample",
            EstimatorKind::Isserlis => "isserlis",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sample" => Ok(EstimatorKind::Sample),
            "isserlis" => Ok(EstimatorKind::Isserlis),
            other => Err(Error::invalid(format!(
                "unknown estimator {other:?} (expected sample|isserlis)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorOutput {
    pub tensor: DenseTensor,
    pub estimator: EstimatorKind,
    pub symmetric: bool,
    pub n: usize,
    pub p: usize,
    /// Seed of the batch when it was simulated.
    pub seed: Option<u64>,
}

fn check_order(p: usize) -> Result<()> {
    if p < 2 || p % 2 != 0 || p > MAX_PAIRING_ORDER {
        return Err(Error::invalid(format!(
            "order must be even with 2 <= p <= {MAX_PAIRING_ORDER}, got {p}"
        )));
    }
    Ok(())
}

/// Evaluates Isserlis's pairing sum
///
/// `T[ℓ₁,…,ℓ_p] = Σ_π ∏_{(j,k)∈π} Σ⁽ʲ'ᵏ⁾[ℓ_j, ℓ_k]`
///
/// entry by entry, with one block per tensor mode. Fed the true covariance
/// it gives the moment tensor itself; fed sample covariances it gives the
/// plug-in estimator.
pub fn isserlis_tensor(cov: &BlockCovariance) -> Result<DenseTensor> {
    let p = cov.num_blocks();
    check_order(p)?;
    let shape = cov.sizes().to_vec();
    let len = checked_len(&shape)?;
    let pairings = enumerate_pairings(p)?;
    let factors: Vec<Vec<(&Matrix, usize, usize)>> = pairings
        .iter()
        .map(|q| q.pairs().iter().map(|&(j, k)| (cov.block(j, k), j, k)).collect())
        .collect();

    let mut data = Vec::with_capacity(len);
    let mut idx = vec![0usize; p];
    for _ in 0..len {
        let entry: f64 = factors
            .iter()
            .map(|pairs| {
                pairs
                    .iter()
                    .map(|&(m, j, k)| m[(idx[j], idx[k])])
                    .product::<f64>()
            })
            .sum();
        data.push(entry);
        advance(&mut idx, &shape);
    }
    Ok(DenseTensor::from_raw(shape, data))
}

/// Symmetric moment tensor `E X^{⊗p}` of `N(0, Σ)`.
pub fn isserlis_symmetric(sigma: &Matrix, p: usize) -> Result<DenseTensor> {
    check_order(p)?;
    isserlis_tensor(&BlockCovariance::replicated(sigma, p)?)
}

/// `(1/N) Σᵢ Xᵢ⁽¹⁾ ⊗ ⋯ ⊗ Xᵢ⁽ᵖ⁾` where the parts are column ranges of each row.
///
/// Samples are the outer loop; each row's outer product is built by
/// successive expansion and added in row-major order, and the sum is divided
/// by `N` once at the end.
fn sample_moment(batch: &SampleBatch, parts: &[(usize, usize)]) -> Result<DenseTensor> {
    let shape: Vec<usize> = parts.iter().map(|&(_, len)| len).collect();
    let mut acc = DenseTensor::zeros(&shape)?;
    let (head, last) = parts.split_at(parts.len() - 1);
    let (lo, ll) = last[0];
    let mut cur = Vec::with_capacity(acc.len());
    let mut next = Vec::with_capacity(acc.len());
    for row in batch.rows() {
        cur.clear();
        cur.push(1.0);
        for &(o, len) in head {
            let x = &row[o..o + len];
            next.clear();
            next.extend(cur.iter().flat_map(|&a| x.iter().map(move |&b| a * b)));
            std::mem::swap(&mut cur, &mut next);
        }
        let x = &row[lo..lo + ll];
        for (&c, out) in cur.iter().zip(acc.data_mut().chunks_exact_mut(ll)) {
            for (o, &b) in out.iter_mut().zip(x) {
                *o += c * b;
            }
        }
    }
    let n = batch.n() as f64;
    acc.data_mut().iter_mut().for_each(|x| *x /= n);
    Ok(acc)
}

fn output(tensor: DenseTensor, estimator: EstimatorKind, symmetric: bool, batch: &SampleBatch, p: usize) -> EstimatorOutput {
    EstimatorOutput {
        tensor,
        estimator,
        symmetric,
        n: batch.n(),
        p,
        seed: batch.seed(),
    }
}

/// `T̂_S = (1/N) Σᵢ Xᵢ^{⊗p}` over all columns of the batch.
pub fn sample_moment_symmetric(batch: &SampleBatch, p: usize) -> Result<EstimatorOutput> {
    check_order(p)?;
    let parts = vec![(0, batch.dim()); p];
    let t = sample_moment(batch, &parts)?;
    Ok(output(t, EstimatorKind::Sample, true, batch, p))
}

/// Isserlis's pairing sum at the sample covariance `Σ̂`.
pub fn isserlis_estimator_symmetric(batch: &SampleBatch, p: usize) -> Result<EstimatorOutput> {
    check_order(p)?;
    checked_len(&vec![batch.dim(); p])?;
    let t = isserlis_symmetric(&sample_covariance(batch), p)?;
    Ok(output(t, EstimatorKind::Isserlis, true, batch, p))
}

fn block_parts(batch: &SampleBatch, blocks: &[usize]) -> Result<Vec<(usize, usize)>> {
    let total: usize = blocks.iter().sum();
    if blocks.contains(&0) || total != batch.dim() {
        return Err(Error::invalid(format!(
            "blocks {blocks:?} do not partition {} columns",
            batch.dim()
        )));
    }
    check_order(blocks.len())?;
    Ok(offsets(blocks).into_iter().zip(blocks.iter().copied()).collect())
}

/// `T̂_S = (1/N) Σᵢ Xᵢ⁽¹⁾ ⊗ ⋯ ⊗ Xᵢ⁽ᵖ⁾` with the columns split by `blocks`.
pub fn sample_moment_asymmetric(batch: &SampleBatch, blocks: &[usize]) -> Result<EstimatorOutput> {
    let parts = block_parts(batch, blocks)?;
    let t = sample_moment(batch, &parts)?;
    Ok(output(t, EstimatorKind::Sample, false, batch, blocks.len()))
}

/// Isserlis's pairing sum at the sample cross-covariances `Σ̂⁽ʲ'ᵏ⁾`.
pub fn isserlis_estimator_asymmetric(batch: &SampleBatch, blocks: &[usize]) -> Result<EstimatorOutput> {
    block_parts(batch, blocks)?;
    checked_len(blocks)?;
    let cov = sample_block_covariance(&batch.clone().with_blocks(blocks)?);
    let t = isserlis_tensor(&cov)?;
    Ok(output(t, EstimatorKind::Isserlis, false, batch, blocks.len()))
}

/// Dispatches on estimator kind and symmetry.
pub fn estimate(
    batch: &SampleBatch,
    kind: EstimatorKind,
    p: usize,
    blocks: Option<&[usize]>,
) -> Result<EstimatorOutput> {
    match (kind, blocks) {
        (EstimatorKind::Sample, None) => sample_moment_symmetric(batch, p),
        (EstimatorKind::Isserlis, None) => isserlis_estimator_symmetric(batch, p),
        (kind, Some(b)) => {
            if b.len() != p {
                return Err(Error::invalid(format!(
                    "{} blocks given for order {p}",
                    b.len()
                )));
            }
            match kind {
                EstimatorKind::Sample => sample_moment_asymmetric(batch, b),
                EstimatorKind::Isserlis => isserlis_estimator_asymmetric(batch, b),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{cross_covariance, make_covariance, random_psd, sample, CovarianceFamily, CovarianceModel};
    use crate::tensor::outer_product;

    fn one_by_one(x: f64) -> Matrix {
        Matrix::from_element(1, 1, x)
    }

    #[test]
    fn isserlis_examples() {
        let s = random_psd(3, 5);
        let t = isserlis_symmetric(&s, 2).unwrap();
        assert_eq!(t.data(), s.transpose().as_slice());

        let t = isserlis_symmetric(&one_by_one(4.0), 4).unwrap();
        assert_eq!(t.data(), &[48.0]);

        let rho = 0.3;
        let s = Matrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
        let t = isserlis_symmetric(&s, 4).unwrap();
        assert!((t.get(&[0, 0, 1, 1]).unwrap() - (1.0 + 2.0 * rho * rho)).abs() < 1e-15);
    }

    #[test]
    fn isserlis_guards() {
        let s = Matrix::identity(2, 2);
        assert!(isserlis_symmetric(&s, 3).is_err());
        assert!(isserlis_symmetric(&s, 14).is_err());
        let big = Matrix::identity(100, 100);
        assert!(matches!(isserlis_symmetric(&big, 6), Err(Error::ResourceLimit(_))));
    }

    #[test]
    fn hand_computed_scalar_estimators() {
        let b = SampleBatch::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        assert_eq!(sample_moment_symmetric(&b, 4).unwrap().tensor.data(), &[8.5]);
        assert_eq!(isserlis_estimator_symmetric(&b, 4).unwrap().tensor.data(), &[18.75]);
    }

    #[test]
    fn single_row_is_outer_power() {
        let x = vec![0.5, -1.25, 2.0];
        let b = SampleBatch::from_rows(&[x.clone()]).unwrap();
        let t = sample_moment_symmetric(&b, 4).unwrap().tensor;
        assert_eq!(t, outer_product(&vec![x; 4]).unwrap());

        let b = SampleBatch::from_rows(&[vec![1.0, 2.0, 3.0, 4.0]]).unwrap();
        let t = sample_moment_asymmetric(&b, &[1, 1, 1, 1]).unwrap().tensor;
        assert_eq!(t.data(), &[24.0]);
    }

    #[test]
    fn order_two_collapses_to_covariances() {
        let m = CovarianceModel::explicit(random_psd(5, 3)).unwrap();
        let b = sample(&m, 300, 8).unwrap();
        let s = sample_covariance(&b);
        for kind in [EstimatorKind::Sample, EstimatorKind::Isserlis] {
            let t = estimate(&b, kind, 2, None).unwrap().tensor;
            for i in 0..5 {
                for j in 0..5 {
                    assert!((t.get(&[i, j]).unwrap() - s[(i, j)]).abs() <= 1e-12);
                }
            }
            let t = estimate(&b, kind, 2, Some(&[2, 3])).unwrap().tensor;
            let c = cross_covariance(&b.clone().with_blocks(&[2, 3]).unwrap(), 0, 1).unwrap();
            for i in 0..2 {
                for j in 0..3 {
                    assert!((t.get(&[i, j]).unwrap() - c[(i, j)]).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn replicated_blocks_match_symmetric() {
        let m = make_covariance(CovarianceFamily::Toeplitz { rho: 0.6 }, 3).unwrap();
        let b = sample(&m, 500, 21).unwrap();
        let rep = b.replicated(4).unwrap();
        for kind in [EstimatorKind::Sample, EstimatorKind::Isserlis] {
            let sym = estimate(&b, kind, 4, None).unwrap().tensor;
            let asym = estimate(&rep, kind, 4, Some(&[3, 3, 3, 3])).unwrap().tensor;
            assert!(sym.max_abs_diff(&asym).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn symmetric_estimators_are_permutation_invariant() {
        let m = CovarianceModel::explicit(random_psd(3, 1)).unwrap();
        let b = sample(&m, 200, 3).unwrap();
        for kind in [EstimatorKind::Sample, EstimatorKind::Isserlis] {
            let t = estimate(&b, kind, 4, None).unwrap().tensor;
            for off in 0..t.len() {
                let idx = t.multi_index(off);
                let v = t.data()[off];
                for perm in [[1, 0, 2, 3], [0, 2, 1, 3], [3, 1, 2, 0], [2, 3, 0, 1]] {
                    let pi: Vec<usize> = perm.iter().map(|&k| idx[k]).collect();
                    let w = t.get(&pi).unwrap();
                    assert!((v - w).abs() <= 1e-12 * v.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn block_errors() {
        let b = SampleBatch::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        assert!(sample_moment_asymmetric(&b, &[1, 1]).is_err());
        assert!(isserlis_estimator_asymmetric(&b, &[1, 1, 1]).is_err());
        assert!(estimate(&b, EstimatorKind::Sample, 4, Some(&[1, 2])).is_err());
    }

    #[test]
    fn isserlis_plugin_consistency() {
        let m = make_covariance(CovarianceFamily::Identity, 2).unwrap();
        let b = sample(&m, 1_000_000, 99).unwrap();
        let est = isserlis_estimator_symmetric(&b, 4).unwrap().tensor;
        let truth = isserlis_symmetric(&Matrix::identity(2, 2), 4).unwrap();
        assert!(est.max_abs_diff(&truth).unwrap() < 5e-2);
    }

    #[test]
    fn parse_kind() {
        assert_eq!("isserlis".parse::<EstimatorKind>().unwrap(), EstimatorKind::Isserlis);
        assert!("mle".parse::<EstimatorKind>().is_err());
    }
}
