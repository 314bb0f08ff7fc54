use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard limit on the number of experts a mask can address.
pub const MAX_EXPERTS: usize = 64;

/// A set of experts, stored as a bitmask (bit `k` set means expert `k` is a member).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubsetMask(u64);

impl SubsetMask {
    pub const EMPTY: SubsetMask = SubsetMask(0);

    pub fn from_bits(bits: u64) -> Self {
        SubsetMask(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn singleton(k: usize) -> Self {
        assert!(k < MAX_EXPERTS, "expert index {k} out of range");
        SubsetMask(1 << k)
    }

    /// All of the first `k` experts.
    pub fn full(k: usize) -> Self {
        assert!(k <= MAX_EXPERTS, "too many experts: {k}");
        if k == MAX_EXPERTS {
            SubsetMask(u64::MAX)
        } else {
            SubsetMask((1u64 << k) - 1)
        }
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Self {
        indices.into_iter().fold(Self::EMPTY, |acc, k| acc.with(k))
    }

    /// Parses `all` or a comma-separated list of expert indices.
    pub fn parse(text: &str, num_experts: usize) -> Result<Self> {
        let text = text.trim();
        if text.eq_ignore_ascii_case("all") {
            return Ok(Self::full(num_experts));
        }
        let mut mask = Self::EMPTY;
        for part in text.split(',') {
            let k: usize = part
                .trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad expert index `{part}` in subset `{text}`")))?;
            if k >= num_experts {
                return Err(Error::InvalidConfig(format!(
                    "expert index {k} out of range for {num_experts} experts"
                )));
            }
            mask = mask.with(k);
        }
        if mask.is_empty() {
            return Err(Error::InvalidConfig("empty expert subset".into()));
        }
        Ok(mask)
    }

    pub fn contains(self, k: usize) -> bool {
        k < MAX_EXPERTS && self.0 & (1 << k) != 0
    }

    #[must_use]
    pub fn with(self, k: usize) -> Self {
        assert!(k < MAX_EXPERTS, "expert index {k} out of range");
        SubsetMask(self.0 | (1 << k))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset_of(self, other: SubsetMask) -> bool {
        self.0 & !other.0 == 0
    }

    /// Member indices in ascending order.
    pub fn indices(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let k = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(k)
            }
        })
    }

    /// Highest member index plus one (0 for the empty set).
    pub fn span(self) -> usize {
        MAX_EXPERTS - self.0.leading_zeros() as usize
    }
}

impl fmt::Display for SubsetMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, k) in self.indices().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{k}")?;
        }
        write!(f, "}}")
    }
}

/// Every nonempty subset of `k` experts, in ascending bitmask order.
pub fn nonempty_subsets(k: usize) -> impl Iterator<Item = SubsetMask> {
    assert!(k < MAX_EXPERTS);
    (1u64..(1u64 << k)).map(SubsetMask)
}
