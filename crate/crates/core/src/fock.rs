//! Fock basis of `n` photons in `m` modes.
//!
//! States are ordered lexicographically *descending* on the occupation
//! vector with mode 0 most significant, so `(n,0,..,0)` has rank 0 and
//! `(0,..,0,n)` has rank `size - 1`. Ranking is purely combinatorial and
//! costs `O(m)` table lookups.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Occupation vector of a set of optical modes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FockState(Vec<u8>);

impl FockState {
    pub fn new(occupations: Vec<u8>) -> Self {
        FockState(occupations)
    }

    /// Builds a state from wide counts, rejecting any mode with more than 255 photons.
    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        counts
            .iter()
            .map(|&c| {
                u8::try_from(c).map_err(|_| Error::Overflow(format!("{c} photons in one mode")))
            })
            .collect::<Result<Vec<_>>>()
            .map(FockState)
    }

    pub fn vacuum(modes: usize) -> Self {
        FockState(vec![0; modes])
    }

    pub fn modes(&self) -> usize {
        self.0.len()
    }

    pub fn photon_count(&self) -> usize {
        self.0.iter().map(|&o| o as usize).sum()
    }

    pub fn occupations(&self) -> &[u8] {
        &self.0
    }

    pub fn get(&self, mode: usize) -> usize {
        self.0[mode] as usize
    }

    /// True when no mode holds more than one photon.
    pub fn is_unbunched(&self) -> bool {
        self.0.iter().all(|&o| o <= 1)
    }

    /// Modes of every photon, one entry per photon, nondecreasing.
    pub fn photon_modes(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .flat_map(|(mode, &o)| std::iter::repeat_n(mode, o as usize))
            .collect()
    }

    /// Returns a copy with one more photon in `mode`.
    pub fn with_added(&self, mode: usize) -> Result<Self> {
        let mut occ = self.0.clone();
        occ[mode] = occ[mode]
            .checked_add(1)
            .ok_or_else(|| Error::Overflow("more than 255 photons in one mode".into()))?;
        Ok(FockState(occ))
    }
}

impl From<Vec<u8>> for FockState {
    fn from(v: Vec<u8>) -> Self {
        FockState(v)
    }
}

impl fmt::Display for FockState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, o) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{o}")?;
        }
        f.write_str("]")
    }
}

impl FromStr for FockState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let inner = s
            .trim()
            .strip_prefix('[')
            .and_then(|r| r.strip_suffix(']'))
            .ok_or_else(|| Error::Parse(format!("expected `[a,b,...]`, got `{s}`")))?;
        if inner.trim().is_empty() {
            return Ok(FockState(Vec::new()));
        }
        inner
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<u8>()
                    .map_err(|e| Error::Parse(format!("bad occupation `{}`: {e}", tok.trim())))
            })
            .collect::<Result<Vec<_>>>()
            .map(FockState)
    }
}

/// Number of `n`-photon states in `m` modes, `C(m+n-1, n)`.
pub fn basis_size(m: usize, n: usize) -> Result<u64> {
    if m == 0 {
        return Err(Error::DimensionMismatch(
            "a basis needs at least one mode".into(),
        ));
    }
    // C(m-1+n, n) = prod_{i=1..n} (m-1+i)/i, exact at every step.
    let k = n.min(m - 1) as u128;
    let top = (m - 1 + n) as u128;
    let mut acc: u128 = 1;
    for i in 1..=k {
        acc = acc
            .checked_mul(top - k + i)
            .ok_or_else(|| Error::Overflow(format!("C({top}, {n})")))?
            / i;
        if acc > u64::MAX as u128 {
            return Err(Error::Overflow(format!("C({top}, {n})")));
        }
    }
    Ok(acc as u64)
}

/// The canonical basis of `n` photons in `m` modes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FockBasis {
    m: usize,
    n: usize,
    size: usize,
    // compositions[k * (n + 1) + j]: ways to place j photons in k modes.
    compositions: Vec<u64>,
}

impl FockBasis {
    pub fn new(m: usize, n: usize) -> Result<Self> {
        if n > u8::MAX as usize {
            return Err(Error::Overflow(format!("{n} photons exceeds 255 per mode")));
        }
        let size = basis_size(m, n)?;
        let size = usize::try_from(size).map_err(|_| Error::Overflow(format!("{size} states")))?;
        let w = n + 1;
        let mut compositions = vec![0u64; (m + 1) * w];
        compositions[0] = 1;
        for k in 1..=m {
            for j in 0..=n {
                let prev = if j > 0 {
                    compositions[k * w + j - 1]
                } else {
                    0
                };
                compositions[k * w + j] = prev + compositions[(k - 1) * w + j];
            }
        }
        Ok(FockBasis {
            m,
            n,
            size,
            compositions,
        })
    }

    pub fn modes(&self) -> usize {
        self.m
    }

    pub fn photons(&self) -> usize {
        self.n
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    fn comp(&self, k: usize, j: usize) -> u64 {
        self.compositions[k * (self.n + 1) + j]
    }

    fn check(&self, s: &[u8]) -> Result<()> {
        if s.len() != self.m {
            return Err(Error::DimensionMismatch(format!(
                "state has {} modes, basis has {}",
                s.len(),
                self.m
            )));
        }
        let count: usize = s.iter().map(|&o| o as usize).sum();
        if count != self.n {
            return Err(Error::DimensionMismatch(format!(
                "state has {count} photons, basis has {}",
                self.n
            )));
        }
        Ok(())
    }

    pub fn rank(&self, s: &FockState) -> Result<usize> {
        self.rank_occupations(s.occupations())
    }

    pub fn rank_occupations(&self, s: &[u8]) -> Result<usize> {
        self.check(s)?;
        Ok(self.rank_unchecked(s))
    }

    /// Rank without validating mode or photon counts.
    #[inline]
    pub(crate) fn rank_unchecked(&self, s: &[u8]) -> usize {
        let mut remaining = self.n;
        let mut rank = 0u64;
        for (i, &occ) in s.iter().enumerate().take(self.m.saturating_sub(1)) {
            let occ = occ as usize;
            if occ < remaining {
                // States sharing the prefix but holding more photons in mode i.
                rank += self.comp(self.m - i, remaining - occ - 1);
            }
            remaining -= occ;
        }
        rank as usize
    }

    pub fn unrank(&self, index: usize) -> Result<FockState> {
        if index >= self.size {
            return Err(Error::IndexOutOfRange {
                index: index as u64,
                size: self.size as u64,
            });
        }
        let mut idx = index as u64;
        let mut remaining = self.n;
        let mut occ = vec![0u8; self.m];
        for (i, slot) in occ.iter_mut().enumerate().take(self.m - 1) {
            let rest = self.m - i - 1;
            let mut v = remaining;
            loop {
                let count = self.comp(rest, remaining - v);
                if idx < count {
                    break;
                }
                idx -= count;
                v -= 1;
            }
            *slot = v as u8;
            remaining -= v;
        }
        occ[self.m - 1] = remaining as u8;
        Ok(FockState(occ))
    }

    /// All states in canonical order.
    pub fn iter(&self) -> FockIter {
        let mut first = vec![0u8; self.m];
        first[0] = self.n as u8;
        FockIter { next: Some(first) }
    }

    pub fn states(&self) -> Vec<FockState> {
        self.iter().collect()
    }
}

/// Iterator over a [`FockBasis`] in increasing rank.
pub struct FockIter {
    next: Option<Vec<u8>>,
}

impl Iterator for FockIter {
    type Item = FockState;

    fn next(&mut self) -> Option<FockState> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let m = succ.len();
        let last = succ[m - 1];
        succ[m - 1] = 0;
        if let Some(i) = (0..m - 1).rev().find(|&i| succ[i] > 0) {
            succ[i] -= 1;
            succ[i + 1] = last + 1;
            self.next = Some(succ);
        }
        Some(FockState(current))
    }
}
