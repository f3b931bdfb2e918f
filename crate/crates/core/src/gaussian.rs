//! Covariance models, factorization and seeded sampling of zero-mean
//! Gaussian vectors, optionally partitioned into blocks.

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{is_symmetric, max_abs, Matrix};
use crate::rng;

/// Parametric covariance families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CovarianceFamily {
    Identity,
    ScaledIdentity { scale: f64 },
    /// `diag(lambda, epsilon, …, epsilon)`.
    Spiked { lambda: f64, epsilon: f64 },
    /// `Σ_ij = rho^|i-j|`.
    Toeplitz { rho: f64 },
    /// `lambda · U Uᵀ + I` with `U` a seeded random `d × rank` orthonormal frame.
    LowRankPlusIdentity { rank: usize, lambda: f64, seed: u64 },
    /// A user-supplied matrix.
    Explicit,
}

/// A lower-triangular factor `L` with `L Lᵀ ≈ Σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub lower: Matrix,
    /// Multiple of the identity added before factorizing (zero if none).
    pub jitter: f64,
}

const JITTER_START: f64 = 1e-12;
const JITTER_STOP: f64 = 1e-6;

/// Cholesky factorization with a jitter ladder for singular PSD input.
///
/// Tries `Σ` as is, then `Σ + c·‖Σ‖_max·I` for `c = 1e-12, 1e-11, …, 1e-6`.
/// A factor is accepted only if `‖L Lᵀ − Σ‖_max ≤ 1e-8·max(‖Σ‖_max, 1)`.
pub fn factorize(sigma: &Matrix) -> Result<Factor> {
    if !sigma.is_square() {
        return Err(Error::InvalidCovariance(format!(
            "covariance must be square, got {}x{}",
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    if sigma.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidCovariance("non-finite entries".into()));
    }
    let scale = max_abs(sigma);
    let d = sigma.nrows();
    if scale == 0.0 {
        return Ok(Factor {
            lower: Matrix::zeros(d, d),
            jitter: 0.0,
        });
    }
    let tol = 1e-8 * scale.max(1.0);
    let mut c = 0.0;
    loop {
        let jitter = c * scale;
        let shifted = sigma + Matrix::identity(d, d) * jitter;
        if let Some(ch) = shifted.cholesky() {
            let lower = ch.unpack();
            let recon = &lower * lower.transpose();
            if lower.iter().all(|x| x.is_finite()) && max_abs(&(recon - sigma)) <= tol {
                return Ok(Factor { lower, jitter });
            }
        }
        c = if c == 0.0 { JITTER_START } else { c * 10.0 };
        if c > JITTER_STOP * 1.0001 {
            return Err(Error::InvalidCovariance(
                "matrix is not positive semidefinite (factorization failed after jitter)".into(),
            ));
        }
    }
}

/// A `d × d` covariance with its block partition and factor.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceModel {
    matrix: Matrix,
    blocks: Vec<usize>,
    family: CovarianceFamily,
    factor: Factor,
}

impl CovarianceModel {
    pub fn new(family: CovarianceFamily, d: usize) -> Result<Self> {
        make_covariance(family, d)
    }

    /// Validates and wraps a user matrix (`family = explicit`).
    pub fn explicit(matrix: Matrix) -> Result<Self> {
        if matrix.is_empty() {
            return Err(Error::invalid("covariance must be at least 1x1"));
        }
        if !is_symmetric(&matrix, 1e-12) {
            return Err(Error::InvalidCovariance("matrix is not symmetric".into()));
        }
        let factor = factorize(&matrix)?;
        let d = matrix.nrows();
        Ok(Self {
            matrix,
            blocks: vec![d],
            family: CovarianceFamily::Explicit,
            factor,
        })
    }

    /// Joint model of mutually independent blocks (block-diagonal covariance).
    pub fn block_diagonal(parts: &[CovarianceModel]) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::invalid("need at least one block"));
        }
        let sizes: Vec<usize> = parts.iter().map(|m| m.dim()).collect();
        let d: usize = sizes.iter().sum();
        let mut matrix = Matrix::zeros(d, d);
        let mut lower = Matrix::zeros(d, d);
        let mut off = 0;
        for m in parts {
            let k = m.dim();
            matrix.view_mut((off, off), (k, k)).copy_from(&m.matrix);
            lower.view_mut((off, off), (k, k)).copy_from(&m.factor.lower);
            off += k;
        }
        let family = match parts.iter().all(|m| m.family == parts[0].family) {
            true => parts[0].family.clone(),
            false => CovarianceFamily::Explicit,
        };
        Ok(Self {
            matrix,
            blocks: sizes,
            family,
            factor: Factor { lower, jitter: 0.0 },
        })
    }

    pub fn with_blocks(mut self, blocks: &[usize]) -> Result<Self> {
        check_blocks(blocks, self.dim())?;
        self.blocks = blocks.to_vec();
        Ok(self)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn blocks(&self) -> &[usize] {
        &self.blocks
    }

    pub fn family(&self) -> &CovarianceFamily {
        &self.family
    }

    pub fn factor(&self) -> &Factor {
        &self.factor
    }

    /// Scales the covariance by `c > 0`, keeping the family tag.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::invalid("scale must be positive"));
        }
        Ok(Self {
            matrix: &self.matrix * c,
            blocks: self.blocks.clone(),
            family: self.family.clone(),
            factor: Factor {
                lower: &self.factor.lower * c.sqrt(),
                jitter: self.factor.jitter * c,
            },
        })
    }

    pub fn block_covariance(&self) -> BlockCovariance {
        BlockCovariance::from_joint(&self.matrix, &self.blocks)
            .expect("model blocks are validated at construction")
    }

    /// The diagonal blocks `Σ⁽ᵏ⁾` as standalone matrices.
    pub fn marginals(&self) -> Vec<Matrix> {
        let offs = offsets(&self.blocks);
        self.blocks
            .iter()
            .zip(&offs)
            .map(|(&k, &o)| self.matrix.view((o, o), (k, k)).into_owned())
            .collect()
    }
}

pub(crate) fn offsets(blocks: &[usize]) -> Vec<usize> {
    blocks
        .iter()
        .scan(0, |acc, &k| {
            let o = *acc;
            *acc += k;
            Some(o)
        })
        .collect()
}

fn check_blocks(blocks: &[usize], d: usize) -> Result<()> {
    if blocks.is_empty() || blocks.contains(&0) {
        return Err(Error::invalid(format!("invalid block sizes {blocks:?}")));
    }
    let total: usize = blocks.iter().sum();
    if total != d {
        return Err(Error::invalid(format!(
            "block sizes {blocks:?} sum to {total}, expected {d}"
        )));
    }
    Ok(())
}

/// Builds a covariance from a parametric family.
pub fn make_covariance(family: CovarianceFamily, d: usize) -> Result<CovarianceModel> {
    if d == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    let matrix = match &family {
        CovarianceFamily::Identity => Matrix::identity(d, d),
        CovarianceFamily::ScaledIdentity { scale } => {
            if !(*scale > 0.0) {
                return Err(Error::invalid("scaled_identity needs scale > 0"));
            }
            Matrix::identity(d, d) * *scale
        }
        CovarianceFamily::Spiked { lambda, epsilon } => {
            if !(*epsilon > 0.0 && lambda >= epsilon) {
                return Err(Error::invalid("spiked needs lambda >= epsilon > 0"));
            }
            Matrix::from_fn(d, d, |i, j| match (i == j, i) {
                (true, 0) => *lambda,
                (true, _) => *epsilon,
                _ => 0.0,
            })
        }
        CovarianceFamily::Toeplitz { rho } => {
            if !(rho.abs() < 1.0) {
                return Err(Error::invalid("toeplitz needs |rho| < 1"));
            }
            Matrix::from_fn(d, d, |i, j| rho.powi(i.abs_diff(j) as i32))
        }
        CovarianceFamily::LowRankPlusIdentity { rank, lambda, seed } => {
            if *rank == 0 || *rank > d || !(*lambda >= 0.0) {
                return Err(Error::invalid("low_rank_plus_identity needs 1 <= rank <= d, lambda >= 0"));
            }
            let mut g = rng::stream(*seed, 0);
            let raw = Matrix::from_fn(d, *rank, |_, _| g.sample(rand_distr::StandardNormal));
            let q = raw.qr().q();
            &q * q.transpose() * *lambda + Matrix::identity(d, d)
        }
        CovarianceFamily::Explicit => {
            return Err(Error::invalid(
                "explicit covariances are built with CovarianceModel::explicit",
            ))
        }
    };
    let mut model = CovarianceModel::explicit(symmetrize(matrix))?;
    model.family = family;
    Ok(model)
}

fn symmetrize(m: Matrix) -> Matrix {
    (&m + m.transpose()) * 0.5
}

/// A random well-conditioned PSD matrix `A Aᵀ / m` with `A` a seeded
/// `d × (d + 2)` standard normal matrix.
pub fn random_psd(d: usize, seed: u64) -> Matrix {
    let m = d + 2;
    let mut g = rng::stream(seed, 0);
    let a = Matrix::from_fn(d, m, |_, _| g.sample(rand_distr::StandardNormal));
    symmetrize(&a * a.transpose() / m as f64)
}

/// All cross-covariance blocks `Σ⁽ʲ'ᵏ⁾` of a block-partitioned vector.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCovariance {
    sizes: Vec<usize>,
    /// Row-major `p × p` grid of blocks.
    blocks: Vec<Matrix>,
}

impl BlockCovariance {
    pub fn from_joint(sigma: &Matrix, sizes: &[usize]) -> Result<Self> {
        if !sigma.is_square() {
            return Err(Error::invalid("joint covariance must be square"));
        }
        check_blocks(sizes, sigma.nrows())?;
        let offs = offsets(sizes);
        let mut blocks = Vec::with_capacity(sizes.len() * sizes.len());
        for (&dj, &oj) in sizes.iter().zip(&offs) {
            for (&dk, &ok) in sizes.iter().zip(&offs) {
                blocks.push(sigma.view((oj, ok), (dj, dk)).into_owned());
            }
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            blocks,
        })
    }

    /// `p` identical copies of one vector: every block equals `sigma`.
    pub fn replicated(sigma: &Matrix, p: usize) -> Result<Self> {
        if !sigma.is_square() || sigma.is_empty() || p == 0 {
            return Err(Error::invalid("replicated blocks need a nonempty square matrix"));
        }
        Ok(Self {
            sizes: vec![sigma.nrows(); p],
            blocks: vec![sigma.clone(); p * p],
        })
    }

    /// Builds from an explicit `p × p` grid of blocks in row-major order.
    pub fn from_blocks(sizes: &[usize], blocks: Vec<Matrix>) -> Result<Self> {
        let p = sizes.len();
        if blocks.len() != p * p {
            return Err(Error::invalid(format!("expected {} blocks, got {}", p * p, blocks.len())));
        }
        for (n, b) in blocks.iter().enumerate() {
            if b.shape() != (sizes[n / p], sizes[n % p]) {
                return Err(Error::invalid(format!("block ({}, {}) has wrong shape", n / p, n % p)));
            }
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            blocks,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn num_blocks(&self) -> usize {
        self.sizes.len()
    }

    pub fn block(&self, j: usize, k: usize) -> &Matrix {
        &self.blocks[j * self.sizes.len() + k]
    }

    /// The same structure with every block scaled by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            sizes: self.sizes.clone(),
            blocks: self.blocks.iter().map(|b| b * c).collect(),
        }
    }
}

/// `N` draws of a (block-partitioned) Gaussian vector, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    data: Vec<f64>,
    n: usize,
    d: usize,
    blocks: Vec<usize>,
    seed: Option<u64>,
}

impl SampleBatch {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map(Vec::len).unwrap_or(0);
        if rows.is_empty() || d == 0 {
            return Err(Error::invalid("a batch needs at least one nonempty row"));
        }
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("rows have different lengths"));
        }
        Self::from_flat(rows.concat(), rows.len(), d)
    }

    pub fn from_flat(data: Vec<f64>, n: usize, d: usize) -> Result<Self> {
        if n == 0 || d == 0 || data.len() != n * d {
            return Err(Error::invalid(format!(
                "batch of {n} rows x {d} columns needs {} values, got {}",
                n * d,
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("batch has non-finite values"));
        }
        Ok(Self {
            data,
            n,
            d,
            blocks: vec![d],
            seed: None,
        })
    }

    pub fn with_blocks(mut self, blocks: &[usize]) -> Result<Self> {
        check_blocks(blocks, self.d)?;
        self.blocks = blocks.to_vec();
        Ok(self)
    }

    /// Concatenates `p` copies of every row, one block per copy.
    pub fn replicated(&self, p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::invalid("need at least one copy"));
        }
        let data = self.rows().flat_map(|r| r.repeat(p)).collect();
        Ok(Self {
            data,
            n: self.n,
            d: self.d * p,
            blocks: vec![self.d; p],
            seed: self.seed,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn blocks(&self) -> &[usize] {
        &self.blocks
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    /// The first `n` rows.
    pub fn head(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.n {
            return Err(Error::invalid(format!("cannot take {n} of {} rows", self.n)));
        }
        Ok(Self {
            data: self.data[..n * self.d].to_vec(),
            n,
            ..self.clone()
        })
    }
}

/// Fills `out` with row `i` of a sample: `L g` where `g` comes from the
/// normal stream keyed by `(seed, i)`.
pub(crate) fn draw_row(lower: &Matrix, seed: u64, i: u64, g: &mut [f64], out: &mut [f64]) {
    let mut stream = rng::stream(seed, i);
    rng::fill_standard_normal(&mut stream, g);
    for (r, x) in out.iter_mut().enumerate() {
        *x = (0..=r).map(|c| lower[(r, c)] * g[c]).sum();
    }
}

/// Draws `n` rows from `N(0, Σ)`.
///
/// Row `i` depends only on `(model, seed, i)`: the standard normals come
/// from the ChaCha8 stream `i` under key `seed`, converted by the ziggurat
/// sampler of `rand_distr::StandardNormal`. Rows are filled in parallel.
pub fn sample(model: &CovarianceModel, n: usize, seed: u64) -> Result<SampleBatch> {
    if n == 0 {
        return Err(Error::invalid("sample size must be positive"));
    }
    let d = model.dim();
    let lower = &model.factor.lower;
    let mut data = vec![0.0; n * d];
    data.par_chunks_mut(d)
        .enumerate()
        .for_each_init(
            || vec![0.0; d],
            |g, (i, row)| draw_row(lower, seed, i as u64, g, row),
        );
    Ok(SampleBatch {
        data,
        n,
        d,
        blocks: model.blocks.clone(),
        seed: Some(seed),
    })
}

/// `Σ̂ = (1/N) Σᵢ Xᵢ Xᵢᵀ`, no mean subtraction.
pub fn sample_covariance(batch: &SampleBatch) -> Matrix {
    cross_block(batch, 0, batch.d, 0, batch.d)
}

/// `Σ̂⁽ʲ'ᵏ⁾ = (1/N) Σᵢ Xᵢ⁽ʲ⁾ (Xᵢ⁽ᵏ⁾)ᵀ` over the block columns (zero-based).
pub fn cross_covariance(batch: &SampleBatch, j: usize, k: usize) -> Result<Matrix> {
    let p = batch.blocks.len();
    if j >= p || k >= p {
        return Err(Error::invalid(format!("block index out of range for {p} blocks")));
    }
    let offs = offsets(&batch.blocks);
    Ok(cross_block(batch, offs[j], batch.blocks[j], offs[k], batch.blocks[k]))
}

fn cross_block(batch: &SampleBatch, oj: usize, dj: usize, ok: usize, dk: usize) -> Matrix {
    let mut acc = vec![0.0; dj * dk];
    for row in batch.rows() {
        let (xj, xk) = (&row[oj..oj + dj], &row[ok..ok + dk]);
        for (a, &u) in xj.iter().enumerate() {
            for (slot, &v) in acc[a * dk..(a + 1) * dk].iter_mut().zip(xk) {
                *slot += u * v;
            }
        }
    }
    let n = batch.n as f64;
    Matrix::from_row_iterator(dj, dk, acc.into_iter().map(|s| s / n))
}

/// The full block grid of sample cross-covariances.
pub fn sample_block_covariance(batch: &SampleBatch) -> BlockCovariance {
    let sizes = batch.blocks.clone();
    let p = sizes.len();
    let blocks = (0..p * p)
        .map(|n| cross_covariance(batch, n / p, n % p).expect("indices in range"))
        .collect();
    BlockCovariance { sizes, blocks }
}

fn read_numeric_csv(path: &Path) -> Result<(usize, Vec<f64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let cols = reader
        .headers()
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
        .len();
    let mut values = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        if rec.len() != cols {
            return Err(Error::Parse(format!(
                "{}: row {} has {} fields, header has {cols}",
                path.display(),
                line + 1,
                rec.len()
            )));
        }
        for field in rec.iter() {
            values.push(field.parse::<f64>().map_err(|e| {
                Error::Parse(format!("{}: row {}: {field:?}: {e}", path.display(), line + 1))
            })?);
        }
    }
    Ok((cols, values))
}

/// Reads a square matrix from a CSV file with a header row.
pub fn read_matrix_csv(path: &Path) -> Result<Matrix> {
    let (cols, values) = read_numeric_csv(path)?;
    let rows = values.len() / cols.max(1);
    if rows != cols {
        return Err(Error::Parse(format!(
            "{}: expected a square matrix, got {rows}x{cols}",
            path.display()
        )));
    }
    Ok(Matrix::from_row_slice(rows, cols, &values))
}

/// Reads a sample batch (one draw per row) from a CSV file with a header row.
pub fn read_batch_csv(path: &Path) -> Result<SampleBatch> {
    let (cols, values) = read_numeric_csv(path)?;
    let rows = values.len() / cols.max(1);
    SampleBatch::from_flat(values, rows, cols)
}

pub fn write_matrix_csv(path: &Path, m: &Matrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = (0..m.ncols()).map(|j| format!("c{j}")).collect();
    let mut write = |rec: Vec<String>| {
        w.write_record(rec)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    };
    write(header)?;
    for i in 0..m.nrows() {
        write((0..m.ncols()).map(|j| crate::format_f64(m[(i, j)])).collect())?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
