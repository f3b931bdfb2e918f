//! Tensor norms: entrywise maximum, operator norm by the higher-order power
//! method (HOPM), and a grid-search oracle for tiny shapes.
//!
//! Both norm routines maximize `|⟨T, v₁ ⊗ ⋯ ⊗ v_p⟩|`. Certificates are
//! returned with the sign folded into the first vector, so evaluating the
//! multilinear form on a certificate gives `+value`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{dot, DenseTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    #[serde(alias = "op")]
    Operator,
    Max,
}

impl NormKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NormKind::Operator => "operator",
            NormKind::Max => "max",
        }
    }
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(NormKind::Max),
            "op" | "operator" => Ok(NormKind::Operator),
            other => Err(Error::invalid(format!("unknown norm {other:?} (expected max|op)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMethod {
    Exact,
    PowerIteration,
    GridOracle,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormResult {
    pub value: f64,
    pub method: NormMethod,
    /// Unit vectors `v₁, …, v_p` with `⟨T, v₁ ⊗ ⋯ ⊗ v_p⟩ = value`.
    pub certificate: Option<Vec<Vec<f64>>>,
    /// Sweeps used by the winning HOPM run; zero for other methods.
    pub iterations: usize,
    pub restarts: usize,
}

impl NormResult {
    /// Re-evaluates the multilinear form on the certificate.
    pub fn certificate_value(&self, t: &DenseTensor) -> Option<f64> {
        self.certificate.as_ref().map(|vs| t.multilinear_form(vs))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HopmOptions {
    pub restarts: usize,
    pub tol: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for HopmOptions {
    fn default() -> Self {
        Self {
            restarts: 20,
            tol: 1e-10,
            max_iters: 1000,
            seed: 0,
        }
    }
}

fn basis(d: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; d];
    e[i] = 1.0;
    e
}

/// Largest absolute entry. Ties go to the lexicographically smallest
/// multi-index.
pub fn max_norm(t: &DenseTensor) -> NormResult {
    let (best, value) = t
        .data()
        .iter()
        .enumerate()
        .fold((0, 0.0), |(bi, bv), (i, x)| if x.abs() > bv { (i, x.abs()) } else { (bi, bv) });
    let idx = t.multi_index(best);
    let mut certificate: Vec<Vec<f64>> = idx
        .iter()
        .zip(t.shape())
        .map(|(&i, &d)| basis(d, i))
        .collect();
    if t.data()[best] < 0.0 {
        certificate[0].iter_mut().for_each(|x| *x = -*x);
    }
    NormResult {
        value,
        method: NormMethod::Exact,
        certificate: Some(certificate),
        iterations: 0,
        restarts: 0,
    }
}

/// Entrywise maximum norm of `a - b`, i.e. `‖a − b‖_max`.
pub fn max_norm_distance(a: &DenseTensor, b: &DenseTensor) -> Result<f64> {
    a.max_abs_diff(b)
}

/// One HOPM trajectory.
#[derive(Debug, Clone)]
pub struct HopmRun {
    pub value: f64,
    pub vectors: Vec<Vec<f64>>,
    /// Objective after initialization and after every sweep.
    pub history: Vec<f64>,
}

impl HopmRun {
    pub fn sweeps(&self) -> usize {
        self.history.len() - 1
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn random_unit<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let mut v = vec![0.0; d];
        rng::fill_standard_normal(rng, &mut v);
        if normalize(&mut v) > 1e-300 {
            return v;
        }
    }
}

/// Runs alternating rank-1 maximization from `start`.
///
/// Each sweep replaces `v_k` by the normalized contraction of `t` against
/// all other factors, for `k = 1, …, p`. The signed objective is
/// nondecreasing; a start with negative objective is reflected first. A
/// contraction with norm below `1e-300` reinitializes that factor from the
/// stream keyed by `reinit_seed`.
pub fn hopm_run(
    t: &DenseTensor,
    start: Vec<Vec<f64>>,
    tol: f64,
    max_iters: usize,
    reinit_seed: u64,
) -> HopmRun {
    let p = t.order();
    let mut reinit = rng::stream(reinit_seed, 0);
    let mut vs = start;
    for (k, v) in vs.iter_mut().enumerate() {
        if normalize(v) <= 1e-300 {
            *v = random_unit(&mut reinit, t.shape()[k]);
        }
    }
    let mut obj = t.multilinear_form(&vs);
    if obj < 0.0 {
        vs[0].iter_mut().for_each(|x| *x = -*x);
        obj = -obj;
    }
    let mut history = vec![obj];
    for _ in 0..max_iters {
        for k in 0..p {
            let mut w = t.contract_all_but(k, &vs);
            if normalize(&mut w) < 1e-300 {
                w = random_unit(&mut reinit, t.shape()[k]);
            }
            vs[k] = w;
        }
        let mut next = t.multilinear_form(&vs);
        if next < 0.0 {
            vs[0].iter_mut().for_each(|x| *x = -*x);
            next = -next;
        }
        history.push(next);
        let done = (next - obj).abs() < tol * obj.max(1.0);
        obj = next;
        if done {
            break;
        }
    }
    HopmRun {
        value: obj,
        vectors: vs,
        history,
    }
}

/// Lower bound on `‖T‖` by the higher-order power method.
///
/// Start 0 is the basis certificate of the largest-magnitude entry; starts
/// `1..=restarts` are random unit vectors from streams derived from
/// `opts.seed`. The best run wins, ties going to the lowest start index, so
/// the result does not depend on how the runs are scheduled.
pub fn operator_norm_hopm(t: &DenseTensor, opts: &HopmOptions) -> Result<NormResult> {
    if !t.is_finite() {
        return Err(Error::invalid("tensor has non-finite entries"));
    }
    if opts.tol <= 0.0 || opts.max_iters == 0 {
        return Err(Error::invalid("HOPM needs tol > 0 and max_iters > 0"));
    }
    let runs: Vec<HopmRun> = (0..=opts.restarts)
        .into_par_iter()
        .map(|r| {
            let seed = rng::derive_seed(opts.seed, &[r as u64]);
            let start = if r == 0 {
                max_norm(t).certificate.expect("max_norm always certifies")
            } else {
                let mut g = rng::stream(seed, 1);
                t.shape().iter().map(|&d| random_unit(&mut g, d)).collect()
            };
            hopm_run(t, start, opts.tol, opts.max_iters, seed)
        })
        .collect();
    let best = runs
        .into_iter()
        .reduce(|best, run| if run.value > best.value { run } else { best })
        .expect("at least one start");
    Ok(NormResult {
        value: best.value,
        method: NormMethod::PowerIteration,
        iterations: best.sweeps(),
        certificate: Some(best.vectors),
        restarts: opts.restarts,
    })
}

/// Largest singular value of an `m × n` matrix with `m, n ≤ 2`, with its
/// singular vectors.
fn top_singular_2x2(m: &[f64], rows: usize, cols: usize) -> (f64, Vec<f64>, Vec<f64>) {
    let at = |i: usize, j: usize| if i < rows && j < cols { m[i * cols + j] } else { 0.0 };
    let (a, b, c, d) = (at(0, 0), at(0, 1), at(1, 0), at(1, 1));
    // MᵀM = [[p, q], [q, r]]
    let p = a * a + c * c;
    let q = a * b + c * d;
    let r = b * b + d * d;
    let lambda = 0.5 * (p + r + ((p - r) * (p - r) + 4.0 * q * q).sqrt());
    let v = {
        let v1 = [q, lambda - p];
        let v2 = [lambda - r, q];
        let n1 = (v1[0] * v1[0] + v1[1] * v1[1]).sqrt();
        let n2 = (v2[0] * v2[0] + v2[1] * v2[1]).sqrt();
        if n1.max(n2) <= 1e-300 {
            if p >= r {
                [1.0, 0.0]
            } else {
                [0.0, 1.0]
            }
        } else if n1 >= n2 {
            [v1[0] / n1, v1[1] / n1]
        } else {
            [v2[0] / n2, v2[1] / n2]
        }
    };
    let mut u = [a * v[0] + b * v[1], c * v[0] + d * v[1]];
    let sigma = (u[0] * u[0] + u[1] * u[1]).sqrt();
    if sigma > 1e-300 {
        u = [u[0] / sigma, u[1] / sigma];
    } else {
        u = [1.0, 0.0];
    }
    let mut left = u[..rows].to_vec();
    let mut right = v[..cols].to_vec();
    normalize(&mut left);
    normalize(&mut right);
    (sigma, left, right)
}

/// Brute-force oracle for tensors whose every mode has length at most 2.
///
/// Each of the first `p − 2` factors ranges over `angular_steps` equispaced
/// angles on the half circle `[0, π)` (the other half only flips the sign);
/// the last two factors are solved exactly as the top singular pair of the
/// remaining `2 × 2` matrix. The result is a lower bound on `‖T‖` that
/// converges as `angular_steps` grows.
pub fn operator_norm_grid(t: &DenseTensor, angular_steps: usize) -> Result<NormResult> {
    if let Some(d) = t.shape().iter().find(|&&d| d > 2) {
        return Err(Error::UnsupportedShape(format!(
            "grid oracle needs every mode of length <= 2, got {d}"
        )));
    }
    if angular_steps == 0 {
        return Err(Error::invalid("angular_steps must be positive"));
    }
    let p = t.order();
    if p == 1 {
        let mut v = t.data().to_vec();
        let value = normalize(&mut v);
        if value == 0.0 {
            v = basis(v.len(), 0);
        }
        return Ok(grid_result(value, vec![v]));
    }
    let gridded = &t.shape()[..p - 2];
    let (rows, cols) = (t.shape()[p - 2], t.shape()[p - 1]);
    let choices: Vec<Vec<Vec<f64>>> = gridded
        .iter()
        .map(|&d| {
            if d == 1 {
                vec![vec![1.0]]
            } else {
                (0..angular_steps)
                    .map(|s| {
                        let th = std::f64::consts::PI * s as f64 / angular_steps as f64;
                        vec![th.cos(), th.sin()]
                    })
                    .collect()
            }
        })
        .collect();
    let sizes: Vec<usize> = choices.iter().map(Vec::len).collect();
    let total: usize = sizes.iter().product();

    let mut best = (-1.0, Vec::new());
    let mut pick = vec![0usize; gridded.len()];
    for _ in 0..total {
        let mut buf = t.data().to_vec();
        for (k, &c) in pick.iter().enumerate() {
            let v = &choices[k][c];
            let rest = buf.len() / v.len();
            let mut next = vec![0.0; rest];
            for (&w, chunk) in v.iter().zip(buf.chunks_exact(rest)) {
                for (n, x) in next.iter_mut().zip(chunk) {
                    *n += w * x;
                }
            }
            buf = next;
        }
        let (sigma, u, v) = top_singular_2x2(&buf, rows, cols);
        if sigma > best.0 {
            let mut vs: Vec<Vec<f64>> =
                pick.iter().enumerate().map(|(k, &c)| choices[k][c].clone()).collect();
            vs.push(u);
            vs.push(v);
            best = (sigma, vs);
        }
        crate::tensor::advance(&mut pick, &sizes);
    }
    let (_, mut vs) = best;
    let value = t.multilinear_form(&vs);
    if value < 0.0 {
        vs[0].iter_mut().for_each(|x| *x = -*x);
    }
    Ok(grid_result(value.abs(), vs))
}

fn grid_result(value: f64, certificate: Vec<Vec<f64>>) -> NormResult {
    NormResult {
        value,
        method: NormMethod::GridOracle,
        certificate: Some(certificate),
        iterations: 0,
        restarts: 0,
    }
}

/// `‖a − b‖` in the requested norm; the operator norm is the HOPM lower bound.
pub fn tensor_distance(
    a: &DenseTensor,
    b: &DenseTensor,
    kind: NormKind,
    hopm: &HopmOptions,
) -> Result<f64> {
    match kind {
        NormKind::Max => max_norm_distance(a, b),
        NormKind::Operator => Ok(operator_norm_hopm(&a.sub(b)?, hopm)?.value),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::outer_product;

    fn mat(rows: usize, cols: usize, data: &[f64]) -> DenseTensor {
        DenseTensor::from_vec(&[rows, cols], data.to_vec()).unwrap()
    }

    /// Isserlis tensor of [[1, rho], [rho, 1]] at p = 4, written out by hand
    /// from the three pairings.
    fn isserlis_2x2(rho: f64) -> DenseTensor {
        let s = [[1.0, rho], [rho, 1.0]];
        DenseTensor::from_fn(&[2, 2, 2, 2], |i| {
            s[i[0]][i[1]] * s[i[2]][i[3]]
                + s[i[0]][i[2]] * s[i[1]][i[3]]
                + s[i[0]][i[3]] * s[i[1]][i[2]]
        })
        .unwrap()
    }

    #[test]
    fn max_norm_examples() {
        let r = max_norm(&mat(2, 2, &[1.0, -5.0, 3.0, 4.0]));
        assert_eq!(r.value, 5.0);
        assert_eq!(r.method, NormMethod::Exact);
        let t = mat(2, 2, &[1.0, -5.0, 3.0, 4.0]);
        assert_eq!(r.certificate_value(&t), Some(5.0));

        let z = DenseTensor::zeros(&[2, 3]).unwrap();
        let r = max_norm(&z);
        assert_eq!(r.value, 0.0);
        assert_eq!(r.certificate.unwrap(), vec![vec![1.0, 0.0], vec![1.0, 0.0, 0.0]]);

        let r = max_norm(&isserlis_2x2(0.0));
        assert_eq!(r.value, 3.0);
        assert_eq!(r.certificate.unwrap(), vec![vec![1.0, 0.0]; 4]);
    }

    #[test]
    fn max_norm_tie_break_is_lexicographic() {
        let t = mat(2, 2, &[0.0, 2.0, -2.0, 2.0]);
        let r = max_norm(&t);
        assert_eq!(r.certificate.unwrap(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn hopm_examples() {
        let opts = HopmOptions::default();
        let eye = DenseTensor::from_fn(&[3, 3], |i| (i[0] == i[1]) as u8 as f64).unwrap();
        let r = operator_norm_hopm(&eye, &opts).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);

        let r = operator_norm_hopm(&isserlis_2x2(0.0), &opts).unwrap();
        assert!((r.value - 3.0).abs() < 3e-6);

        let v = vec![2.0, 0.0, 0.0];
        let w = vec![0.0, 3.0 * 0.6, 3.0 * 0.8];
        let r = operator_norm_hopm(&outer_product(&[v, w]).unwrap(), &opts).unwrap();
        assert!((r.value - 6.0).abs() < 1e-12);
        assert_eq!(r.method, NormMethod::PowerIteration);
    }

    #[test]
    fn hopm_rejects_non_finite() {
        let mut t = DenseTensor::zeros(&[2, 2]).unwrap();
        t.data_mut()[1] = f64::INFINITY;
        assert!(operator_norm_hopm(&t, &HopmOptions::default()).is_err());
    }

    #[test]
    fn hopm_diagonal_matrices_exact() {
        let t = mat(3, 3, &[0.5, 0.0, 0.0, 0.0, -2.5, 0.0, 0.0, 0.0, 1.0]);
        let r = operator_norm_hopm(&t, &HopmOptions::default()).unwrap();
        assert!((r.value - 2.5).abs() < 1e-10);
    }

    #[test]
    fn hopm_zero_tensor() {
        let t = DenseTensor::zeros(&[2, 3, 2]).unwrap();
        let r = operator_norm_hopm(&t, &HopmOptions::default()).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn grid_examples() {
        let eye = mat(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert!((operator_norm_grid(&eye, 360).unwrap().value - 1.0).abs() < 1e-3);
        let d = mat(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        assert!((operator_norm_grid(&d, 3600).unwrap().value - 2.0).abs() < 1e-5);

        let t = isserlis_2x2(0.5);
        let grid = operator_norm_grid(&t, 720).unwrap();
        let hopm = operator_norm_hopm(&t, &HopmOptions::default()).unwrap();
        assert!((grid.value - 6.75).abs() < 6.75e-3);
        assert!((grid.value - hopm.value).abs() < 1e-3 * hopm.value);
        let cert = grid.certificate_value(&t).unwrap();
        assert!((cert - grid.value).abs() <= 1e-10 * grid.value);
    }

    #[test]
    fn grid_rejects_large_modes() {
        let t = DenseTensor::zeros(&[3, 2]).unwrap();
        assert!(matches!(operator_norm_grid(&t, 10), Err(Error::UnsupportedShape(_))));
    }

    #[test]
    fn grid_handles_unit_modes() {
        let t = DenseTensor::from_vec(&[1, 2, 1, 2], vec![3.0, 0.0, 0.0, -4.0]).unwrap();
        let g = operator_norm_grid(&t, 90).unwrap();
        assert!((g.value - 4.0).abs() < 1e-12);
        let v = DenseTensor::from_vec(&[2], vec![3.0, -4.0]).unwrap();
        assert!((operator_norm_grid(&v, 1).unwrap().value - 5.0).abs() < 1e-12);
    }

    #[test]
    fn norm_kind_parsing() {
        assert_eq!("op".parse::<NormKind>().unwrap(), NormKind::Operator);
        assert_eq!("max".parse::<NormKind>().unwrap(), NormKind::Max);
        assert!("fro".parse::<NormKind>().is_err());
    }
}
