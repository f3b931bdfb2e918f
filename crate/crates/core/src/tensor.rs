//! Dense order-`p` tensors stored row-major (last index fastest).

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::{format_f64, MAX_TENSOR_ENTRIES};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Number of entries of a tensor with the given shape, guarded against
/// overflow and the global allocation ceiling.
pub fn checked_len(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::invalid("tensor order must be at least 1"));
    }
    if let Some(k) = shape.iter().position(|&d| d == 0) {
        return Err(Error::invalid(format!("shape entry {k} is zero")));
    }
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .filter(|&n| n <= MAX_TENSOR_ENTRIES)
        .ok_or_else(|| {
            Error::ResourceLimit(format!(
                "shape {shape:?} exceeds {MAX_TENSOR_ENTRIES} entries"
            ))
        })
}

impl DenseTensor {
    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let len = checked_len(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        })
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let len = checked_len(shape)?;
        if data.len() != len {
            return Err(Error::invalid(format!(
                "shape {shape:?} needs {len} entries, got {}",
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("tensor entries must be finite"));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Builds a tensor entry by entry from its multi-index.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let mut t = Self::zeros(shape)?;
        let mut idx = vec![0usize; shape.len()];
        for slot in t.data.iter_mut() {
            *slot = f(&idx);
            advance(&mut idx, shape);
        }
        Ok(t)
    }

    pub(crate) fn from_raw(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn offset(&self, index: &[usize]) -> Option<usize> {
        if index.len() != self.shape.len() {
            return None;
        }
        let mut off = 0;
        for (&i, &d) in index.iter().zip(&self.shape) {
            if i >= d {
                return None;
            }
            off = off * d + i;
        }
        Some(off)
    }

    pub fn multi_index(&self, mut offset: usize) -> Vec<usize> {
        let mut idx = vec![0; self.shape.len()];
        for (slot, &d) in idx.iter_mut().zip(&self.shape).rev() {
            *slot = offset % d;
            offset /= d;
        }
        idx
    }

    pub fn get(&self, index: &[usize]) -> Option<f64> {
        self.offset(index).map(|o| self.data[o])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::from_raw(self.shape.clone(), self.data.iter().map(|x| c * x).collect())
    }

    /// `self - other`, entrywise.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Self::from_raw(self.shape.clone(), data))
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m: f64, (a, b)| m.max((a - b).abs())))
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::invalid(format!(
                "shape mismatch: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    /// Contracts every mode except `mode` against the matching vector in
    /// `vectors`, returning a vector of length `shape[mode]`.
    ///
    /// Trailing modes are folded away first, then leading ones, so the cost
    /// is dominated by a single pass over the data.
    pub fn contract_all_but(&self, mode: usize, vectors: &[Vec<f64>]) -> Vec<f64> {
        let p = self.order();
        assert!(mode < p && vectors.len() == p);
        let mut cur: Vec<f64> = Vec::new();
        let mut folded = false;
        for j in (mode + 1..p).rev() {
            let src: &[f64] = if folded { &cur } else { &self.data };
            let v = &vectors[j];
            let next = src.chunks_exact(self.shape[j]).map(|row| dot(row, v)).collect();
            cur = next;
            folded = true;
        }
        for v in vectors.iter().take(mode) {
            let src: &[f64] = if folded { &cur } else { &self.data };
            let rest = src.len() / v.len();
            let mut next = vec![0.0; rest];
            for (&w, chunk) in v.iter().zip(src.chunks_exact(rest)) {
                for (n, c) in next.iter_mut().zip(chunk) {
                    *n += w * c;
                }
            }
            cur = next;
            folded = true;
        }
        if folded {
            cur
        } else {
            self.data.clone()
        }
    }

    /// `⟨T, v₁ ⊗ ⋯ ⊗ v_p⟩`.
    pub fn multilinear_form(&self, vectors: &[Vec<f64>]) -> f64 {
        let last = self.order() - 1;
        dot(&self.contract_all_but(last, vectors), &vectors[last])
    }

    /// Serializes to the text format: a `shape:` header followed by one
    /// entry per line in row-major order.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(16 + 24 * self.data.len());
        out.push_str("shape:");
        for d in &self.shape {
            write!(out, " {d}").unwrap();
        }
        out.push('\n');
        for x in &self.data {
            out.push_str(&format_f64(*x));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty tensor file".into()))?;
        let dims = header
            .strip_prefix("shape:")
            .ok_or_else(|| Error::Parse(format!("expected `shape:` header, got {header:?}")))?;
        let shape = dims
            .split_whitespace()
            .map(|s| {
                s.parse::<usize>()
                    .map_err(|e| Error::Parse(format!("bad shape entry {s:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let data = lines
            .map(|l| {
                l.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("bad entry {l:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_vec(&shape, data)
    }

    pub fn write_text(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read_text(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

/// Steps a row-major multi-index odometer; returns false after the last index.
pub(crate) fn advance(idx: &mut [usize], shape: &[usize]) -> bool {
    for k in (0..idx.len()).rev() {
        idx[k] += 1;
        if idx[k] < shape[k] {
            return true;
        }
        idx[k] = 0;
    }
    false
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `v₁ ⊗ ⋯ ⊗ v_p`, entry `(ℓ₁,…,ℓ_p)` equal to `∏ v_k[ℓ_k]`.
pub fn outer_product(vectors: &[Vec<f64>]) -> Result<DenseTensor> {
    if vectors.is_empty() {
        return Err(Error::invalid("outer product of an empty vector list"));
    }
    let shape: Vec<usize> = vectors.iter().map(Vec::len).collect();
    checked_len(&shape)?;
    let mut data = vec![1.0];
    for v in vectors {
        data = data
            .iter()
            .flat_map(|&a| v.iter().map(move |&b| a * b))
            .collect();
    }
    DenseTensor::from_vec(&shape, data)
}

pub fn frobenius_inner(a: &DenseTensor, b: &DenseTensor) -> Result<f64> {
    a.check_same_shape(b)?;
    Ok(dot(&a.data, &b.data))
}
