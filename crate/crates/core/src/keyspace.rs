//! Binary key spaces, probability distributions over them and entropy metrics.
//!
//! A key is modelled as a random variable over `M = 2^n` values. From an
//! adversary's point of view a leaked key is a point mass: its Shannon and
//! min-entropy both drop to zero.

use crate::error::{Error, Result};

/// Largest key size for which value-level operations are supported.
pub const MAX_VALUE_BITS: u32 = 63;

/// Largest key size for which a full probability vector is materialized
/// (2^20 doubles, 8 MiB).
pub const MAX_EXACT_BITS: u32 = 20;

/// Absolute tolerance on `sum(probs) == 1`.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// The set of `n`-bit key values `[0, 2^n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct KeySpace {
    bits: u32,
}

impl KeySpace {
    pub fn new(bits: u32) -> Result<Self> {
        if bits == 0 || bits > MAX_VALUE_BITS {
            return Err(Error::InvalidArgument(format!(
                "key size must be in 1..={MAX_VALUE_BITS} bits, got {bits}"
            )));
        }
        Ok(Self { bits })
    }

    /// Infers the space from a table length, which must be a power of two.
    pub fn from_size(size: usize) -> Result<Self> {
        if size < 2 || !size.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "key space size must be a power of two >= 2, got {size}"
            )));
        }
        Self::new(size.trailing_zeros())
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Number of key values, `2^n`.
    pub fn size(&self) -> u64 {
        1u64 << self.bits
    }

    pub(crate) fn mask(&self) -> u64 {
        self.size() - 1
    }

    pub fn contains(&self, value: u64) -> bool {
        value < self.size()
    }

    pub fn check(&self, value: u64) -> Result<u64> {
        if self.contains(value) {
            Ok(value)
        } else {
            Err(Error::OutOfRange {
                value,
                bits: self.bits,
            })
        }
    }

    pub(crate) fn same_as(&self, other: &KeySpace) -> Result<()> {
        if self.bits == other.bits {
            Ok(())
        } else {
            Err(Error::SpaceMismatch {
                left: self.bits,
                right: other.bits,
            })
        }
    }

    /// Size as a vector length; fails above [`MAX_EXACT_BITS`].
    pub(crate) fn exact_len(&self, op: &'static str) -> Result<usize> {
        if self.bits > MAX_EXACT_BITS {
            return Err(Error::Capacity {
                op,
                max: MAX_EXACT_BITS,
                bits: self.bits,
            });
        }
        Ok(self.size() as usize)
    }
}

/// A probability vector over a key space.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyDistribution {
    space: KeySpace,
    probs: Vec<f64>,
}

impl KeyDistribution {
    /// Validates and wraps `probs`. Entries must be finite, non-negative and
    /// sum to one within [`SUM_TOLERANCE`]; no renormalization is applied.
    pub fn new(space: KeySpace, probs: Vec<f64>) -> Result<Self> {
        let len = space.exact_len("distribution")?;
        if probs.len() != len {
            return Err(Error::InvalidDistribution(format!(
                "expected {len} probabilities for a {}-bit space, got {}",
                space.bits(),
                probs.len()
            )));
        }
        if let Some((i, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            return Err(Error::InvalidDistribution(format!(
                "entry {i} is {p}, expected a finite non-negative value"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        Ok(Self { space, probs })
    }

    /// Like [`KeyDistribution::new`], inferring the space from the length.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        let space = KeySpace::from_size(probs.len())
            .map_err(|e| Error::InvalidDistribution(e.to_string()))?;
        Self::new(space, probs)
    }

    /// Skips validation; callers guarantee the invariants.
    pub(crate) fn from_parts(space: KeySpace, probs: Vec<f64>) -> Self {
        debug_assert_eq!(probs.len() as u64, space.size());
        debug_assert!((probs.iter().sum::<f64>() - 1.0).abs() <= SUM_TOLERANCE);
        Self { space, probs }
    }

    pub fn uniform(space: KeySpace) -> Result<Self> {
        let len = space.exact_len("distribution")?;
        Ok(Self::from_parts(space, vec![1.0 / len as f64; len]))
    }

    /// The distribution of a key whose value is known to be `value`.
    pub fn point_mass(space: KeySpace, value: u64) -> Result<Self> {
        let len = space.exact_len("distribution")?;
        let value = space.check(value)?;
        let mut probs = vec![0.0; len];
        probs[value as usize] = 1.0;
        Ok(Self::from_parts(space, probs))
    }

    pub fn space(&self) -> KeySpace {
        self.space
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, value: u64) -> Result<f64> {
        self.space.check(value)?;
        Ok(self.probs[value as usize])
    }

    /// `-log2(max_v P[v])`, in bits. Always within `[0, n]`.
    pub fn min_entropy(&self) -> f64 {
        let max = self.probs.iter().copied().fold(0.0_f64, f64::max);
        // + 0.0 turns -0.0 into 0.0
        (-max.log2() + 0.0).clamp(0.0, self.space.bits() as f64)
    }

    /// `-sum p log2 p` in bits, with zero-probability entries contributing 0.
    pub fn shannon_entropy(&self) -> f64 {
        let h: f64 = self
            .probs
            .iter()
            .map(|&p| if p > 0.0 { -p * p.log2() } else { 0.0 })
            .sum();
        h.max(0.0)
    }

    /// Relabels key values: the returned distribution assigns `P[v]` to
    /// `perm[v]`.
    pub fn relabel(&self, perm: &crate::kft::Permutation) -> Result<Self> {
        self.space.same_as(&perm.space())?;
        let mut out = vec![0.0; self.probs.len()];
        for (v, &p) in self.probs.iter().enumerate() {
            out[perm.map(v as u64) as usize] = p;
        }
        Ok(Self::from_parts(self.space, out))
    }
}

/// An `(n; l)` key source: a key is leaked iff its min-entropy is below `l`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NlSource {
    space: KeySpace,
    threshold: f64,
}

impl NlSource {
    pub fn new(space: KeySpace, threshold: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold <= space.bits() as f64) {
            return Err(Error::InvalidArgument(format!(
                "threshold l must satisfy 0 < l <= {}, got {threshold}",
                space.bits()
            )));
        }
        Ok(Self { space, threshold })
    }

    pub fn space(&self) -> KeySpace {
        self.space
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn is_leaked(&self, dist: &KeyDistribution) -> Result<bool> {
        self.space.same_as(&dist.space())?;
        Ok(dist.min_entropy() < self.threshold)
    }
}
