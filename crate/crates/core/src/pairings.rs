//! Pairwise partitions (perfect matchings) of `{0, …, p-1}`.
//!
//! Indices are zero-based throughout; [`Pairing::one_based`] gives the
//! conventional `{1, …, p}` labelling.

use std::fmt;

use crate::error::{Error, Result};

/// Largest order accepted by [`enumerate_pairings`]; `11!! = 10395` pairings.
pub const MAX_PAIRING_ORDER: usize = 12;

/// A perfect matching: `p/2` pairs `(j, k)` with `j < k`, sorted by `j`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Pairing {
    pairs: Vec<(usize, usize)>,
}

impl Pairing {
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn one_based(&self) -> Vec<(usize, usize)> {
        self.pairs.iter().map(|&(j, k)| (j + 1, k + 1)).collect()
    }
}

impl fmt::Display for Pairing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (j, k)) in self.one_based().into_iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "({j},{k})")?;
        }
        f.write_str("}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairingSet {
    order: usize,
    pairings: Vec<Pairing>,
}

impl PairingSet {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn pairings(&self) -> &[Pairing] {
        &self.pairings
    }

    pub fn len(&self) -> usize {
        self.pairings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairings.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Pairing> {
        self.pairings.iter()
    }
}

impl<'a> IntoIterator for &'a PairingSet {
    type Item = &'a Pairing;
    type IntoIter = std::slice::Iter<'a, Pairing>;

    fn into_iter(self) -> Self::IntoIter {
        self.pairings.iter()
    }
}

fn check_even(p: usize) -> Result<()> {
    if p < 2 || p % 2 != 0 {
        return Err(Error::invalid(format!("order must be even and >= 2, got {p}")));
    }
    Ok(())
}

/// Enumerates all pairings of `{0, …, p-1}` in canonical order: the smallest
/// free index is paired with each remaining index in ascending order, then
/// the rest is enumerated recursively.
pub fn enumerate_pairings(p: usize) -> Result<PairingSet> {
    check_even(p)?;
    if p > MAX_PAIRING_ORDER {
        return Err(Error::invalid(format!(
            "order {p} exceeds the pairing ceiling {MAX_PAIRING_ORDER}"
        )));
    }
    let mut out = Vec::with_capacity(double_factorial(p)? as usize);
    let free: Vec<usize> = (0..p).collect();
    let mut current = Vec::with_capacity(p / 2);
    recurse(&free, &mut current, &mut out);
    Ok(PairingSet {
        order: p,
        pairings: out,
    })
}

fn recurse(free: &[usize], current: &mut Vec<(usize, usize)>, out: &mut Vec<Pairing>) {
    let Some((&first, rest)) = free.split_first() else {
        out.push(Pairing {
            pairs: current.clone(),
        });
        return;
    };
    for (i, &partner) in rest.iter().enumerate() {
        let remaining: Vec<usize> = rest
            .iter()
            .enumerate()
            .filter(|&(m, _)| m != i)
            .map(|(_, &x)| x)
            .collect();
        current.push((first, partner));
        recurse(&remaining, current, out);
        current.pop();
    }
}

/// `(p - 1)!! = 1·3·5⋯(p-1)`, the number of pairings of `p` items.
pub fn double_factorial(p: usize) -> Result<u64> {
    check_even(p)?;
    (1..p as u64)
        .step_by(2)
        .try_fold(1u64, |acc, k| acc.checked_mul(k))
        .ok_or_else(|| Error::invalid(format!("(p-1)!! overflows u64 for p = {p}")))
}
