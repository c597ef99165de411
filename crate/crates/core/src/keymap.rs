//! Surrogate-key lookup tables used on aggregation hot paths.

use std::collections::HashMap;

/// Maps non-negative surrogate keys to a payload. Dense when the key range
/// is compact, hashed otherwise.
#[derive(Clone, Debug)]
pub(crate) enum KeyMap<T> {
    Dense(Vec<Option<T>>),
    Sparse(HashMap<i64, T>),
}

impl<T: Copy> KeyMap<T> {
    pub fn build(entries: impl IntoIterator<Item = (i64, T)>) -> Self {
        let entries: Vec<(i64, T)> = entries.into_iter().collect();
        let max = entries.iter().map(|(k, _)| *k).max().unwrap_or(-1);
        let min = entries.iter().map(|(k, _)| *k).min().unwrap_or(0);
        let n = entries.len() as i64;
        if min >= 0 && max < 4 * n + 1024 {
            let mut v = vec![None; (max + 1) as usize];
            for (k, t) in entries {
                v[k as usize] = Some(t);
            }
            KeyMap::Dense(v)
        } else {
            KeyMap::Sparse(entries.into_iter().collect())
        }
    }

    #[inline]
    pub fn get(&self, key: i64) -> Option<T> {
        match self {
            KeyMap::Dense(v) => usize::try_from(key).ok().and_then(|k| v.get(k).copied().flatten()),
            KeyMap::Sparse(m) => m.get(&key).copied(),
        }
    }
}

/// Mixed-radix packing of code tuples into one integer. The first column is
/// the most significant digit, so integer order equals lexicographic tuple
/// order. `None` when the radix product overflows `u128`.
#[derive(Clone, Debug)]
pub(crate) struct Packer {
    radices: Vec<u128>,
}

impl Packer {
    pub fn new(sizes: &[usize]) -> Option<Self> {
        let mut total: u128 = 1;
        for s in sizes {
            total = total.checked_mul((*s).max(1) as u128)?;
        }
        Some(Self {
            radices: sizes.iter().map(|s| (*s).max(1) as u128).collect(),
        })
    }

    /// Number of distinct packed values.
    pub fn space(&self) -> u128 {
        self.radices.iter().product()
    }

    #[inline]
    pub fn pack(&self, codes: impl Iterator<Item = u32>) -> u128 {
        let mut acc = 0u128;
        for (c, r) in codes.zip(&self.radices) {
            acc = acc * r + c as u128;
        }
        acc
    }

    pub fn unpack(&self, mut packed: u128) -> Vec<u32> {
        let mut out = vec![0u32; self.radices.len()];
        for (slot, r) in out.iter_mut().zip(&self.radices).rev() {
            *slot = (packed % r) as u32;
            packed /= r;
        }
        out
    }
}
