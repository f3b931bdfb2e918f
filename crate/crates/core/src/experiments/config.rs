use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::effective_dim::DEFAULT_MC_SAMPLES;
use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::gaussian::{make_covariance, BlockCovariance, CovarianceFamily, CovarianceModel};
use crate::linalg::Matrix;
use crate::norms::{HopmOptions, NormKind};

/// How the `p` blocks of an asymmetric experiment relate to each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockMode {
    /// Mutually independent blocks; the family is applied to each block and
    /// the joint covariance is block-diagonal. With `explicit`, the matrix is
    /// the joint covariance and cross blocks are kept.
    #[default]
    Independent,
    /// One vector copied into every block, `X⁽¹⁾ = ⋯ = X⁽ᵖ⁾`.
    Identical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSpec {
    #[serde(flatten)]
    pub family: CovarianceFamily,
    /// Dimension of the symmetric case; ignored when `blocks` is set.
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub blocks: Option<Vec<usize>>,
    #[serde(default)]
    pub block_mode: BlockMode,
    /// Rows of the matrix for `family = "explicit"`.
    #[serde(default)]
    pub matrix: Option<Vec<Vec<f64>>>,
}

/// A property the harness evaluates after a run; failures map to exit code 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CheckSpec {
    /// `better` has strictly smaller mean error than `worse` at every N.
    Ordering {
        norm: NormKind,
        better: EstimatorKind,
        worse: EstimatorKind,
    },
    /// Log-log slope over `n_min ≤ N ≤ n_max` lies in `[lo, hi]`.
    Slope {
        estimator: EstimatorKind,
        norm: NormKind,
        n_min: usize,
        n_max: usize,
        lo: f64,
        hi: f64,
    },
    /// `max ratio / min ratio < max_factor` across the grid, where ratio is
    /// mean error over theory rate.
    RatioBand {
        estimator: EstimatorKind,
        norm: NormKind,
        max_factor: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub covariance: CovarianceSpec,
    pub order: usize,
    pub estimators: Vec<EstimatorKind>,
    #[serde(default = "default_norms")]
    pub norms: Vec<NormKind>,
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
    #[serde(default)]
    pub hopm: HopmOptions,
    /// Worker threads; affects speed only.
    #[serde(default)]
    pub threads: Option<usize>,
    /// Output directory used when none is given on the command line.
    #[serde(default)]
    pub output: Option<String>,
    /// Extra `[n_min, n_max]` ranges to fit slopes on.
    #[serde(default)]
    pub fit_ranges: Vec<[usize; 2]>,
    #[serde(default)]
    pub checks: Vec<CheckSpec>,
}

fn default_norms() -> Vec<NormKind> {
    vec![NormKind::Max]
}

fn default_mc_samples() -> usize {
    DEFAULT_MC_SAMPLES
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.order;
        if p < 2 || p % 2 != 0 {
            return Err(Error::invalid(format!("order must be even and >= 2, got {p}")));
        }
        if self.trials == 0 {
            return Err(Error::invalid("trials must be >= 1"));
        }
        if self.n_grid.is_empty() || self.n_grid[0] == 0 || self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("n_grid must be nonempty, positive and strictly increasing"));
        }
        if self.estimators.is_empty() || self.norms.is_empty() {
            return Err(Error::invalid("need at least one estimator and one norm"));
        }
        if let Some(b) = &self.covariance.blocks {
            if b.len() != p {
                return Err(Error::invalid(format!("{} blocks given for order {p}", b.len())));
            }
            if self.covariance.block_mode == BlockMode::Identical && b.iter().any(|&k| k != b[0]) {
                return Err(Error::invalid("identical blocks must all have the same size"));
            }
        } else if self.covariance.dim.is_none() && self.covariance.matrix.is_none() {
            return Err(Error::invalid("covariance needs `dim`, `blocks` or `matrix`"));
        }
        Ok(())
    }
}

fn explicit_matrix(rows: &[Vec<f64>]) -> Result<Matrix> {
    let d = rows.len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(Error::invalid("explicit matrix must be square and nonempty"));
    }
    Ok(Matrix::from_row_iterator(d, d, rows.iter().flatten().copied()))
}

/// The sampling model and ground truth an experiment is built from.
#[derive(Debug, Clone)]
pub(crate) struct Setup {
    /// Model actually sampled (for identical blocks, a single copy).
    pub model: CovarianceModel,
    /// Block sizes for asymmetric estimators; `None` in the symmetric case.
    pub blocks: Option<Vec<usize>>,
    /// Copies to replicate each sampled row into (identical blocks only).
    pub replicate: Option<usize>,
    /// Marginal covariances `Σ⁽ᵏ⁾`; one entry in the symmetric case.
    pub marginals: Vec<Matrix>,
    pub truth_cov: BlockCovariance,
}

impl CovarianceSpec {
    fn single(&self, d: Option<usize>) -> Result<CovarianceModel> {
        match (&self.family, &self.matrix) {
            (CovarianceFamily::Explicit, Some(rows)) => CovarianceModel::explicit(explicit_matrix(rows)?),
            (CovarianceFamily::Explicit, None) => Err(Error::invalid("explicit family needs `matrix`")),
            (fam, _) => make_covariance(
                fam.clone(),
                d.ok_or_else(|| Error::invalid("covariance needs `dim`"))?,
            ),
        }
    }

    pub(crate) fn setup(&self, p: usize) -> Result<Setup> {
        match &self.blocks {
            None => {
                let model = self.single(self.dim)?;
                let truth_cov = BlockCovariance::replicated(model.matrix(), p)?;
                Ok(Setup {
                    marginals: vec![model.matrix().clone()],
                    model,
                    blocks: None,
                    replicate: None,
                    truth_cov,
                })
            }
            Some(sizes) => match self.block_mode {
                BlockMode::Identical => {
                    let model = self.single(Some(sizes[0]))?;
                    let truth_cov = BlockCovariance::replicated(model.matrix(), p)?;
                    Ok(Setup {
                        marginals: vec![model.matrix().clone(); p],
                        model,
                        blocks: Some(sizes.clone()),
                        replicate: Some(p),
                        truth_cov,
                    })
                }
                BlockMode::Independent => {
                    let model = if self.family == CovarianceFamily::Explicit {
                        self.single(None)?.with_blocks(sizes)?
                    } else {
                        let parts = sizes
                            .iter()
                            .map(|&k| self.single(Some(k)))
                            .collect::<Result<Vec<_>>>()?;
                        CovarianceModel::block_diagonal(&parts)?
                    };
                    Ok(Setup {
                        marginals: model.marginals(),
                        truth_cov: model.block_covariance(),
                        model,
                        blocks: Some(sizes.clone()),
                        replicate: None,
                    })
                }
            },
        }
    }
}
