//! Key-fusing transformations (KFTs).
//!
//! A KFT is a binary operation on a key space whose table is a Latin square:
//! fixing either argument gives a bijection of the key space. For independent
//! inputs `A` and `B`, every output probability is a convex combination of
//! the probabilities of `A` (and likewise of `B`), so
//! `H_min(f(A, B)) >= max(H_min(A), H_min(B))`.
//!
//! Multi-key fusion is a strict left fold: `f(f(f(k1, k2), k3), ...)`. The
//! order matters for non-associative instances and is part of the contract
//! shared by both endpoints.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::keyspace::{KeyDistribution, KeySpace};

/// Largest key size for the exhaustive Latin-square scan (`M^2` cells).
pub const MAX_LATIN_BITS: u32 = 12;

/// Largest key size for the exhaustive law check (`M^3` triples).
pub const MAX_LAWS_BITS: u32 = 8;

/// The arithmetic core of a KFT.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseOp {
    Xor,
    AddMod,
    SubMod,
}

impl BaseOp {
    #[inline]
    fn eval(self, a: u64, b: u64, mask: u64) -> u64 {
        match self {
            BaseOp::Xor => a ^ b,
            BaseOp::AddMod => a.wrapping_add(b) & mask,
            BaseOp::SubMod => a.wrapping_sub(b) & mask,
        }
    }
}

/// Label of a KFT instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KftKind {
    Xor,
    AddMod,
    SubMod,
    Permuted,
}

/// A bijection on `[0, 2^n)`, stored as a lookup table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    space: KeySpace,
    table: Vec<u64>,
}

impl Permutation {
    pub fn new(space: KeySpace, table: Vec<u64>) -> Result<Self> {
        let len = space.exact_len("permutation")?;
        if table.len() != len {
            return Err(Error::InvalidArgument(format!(
                "permutation needs {len} entries, got {}",
                table.len()
            )));
        }
        let mut seen = vec![false; len];
        for &v in &table {
            space.check(v)?;
            if std::mem::replace(&mut seen[v as usize], true) {
                return Err(Error::InvalidArgument(format!(
                    "permutation repeats value {v}"
                )));
            }
        }
        Ok(Self { space, table })
    }

    pub fn identity(space: KeySpace) -> Result<Self> {
        let len = space.exact_len("permutation")? as u64;
        Ok(Self {
            space,
            table: (0..len).collect(),
        })
    }

    /// `v -> v + 1 mod M`.
    pub fn rotation(space: KeySpace) -> Result<Self> {
        let len = space.exact_len("permutation")? as u64;
        Ok(Self {
            space,
            table: (0..len).map(|v| (v + 1) % len).collect(),
        })
    }

    pub fn space(&self) -> KeySpace {
        self.space
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.table
    }

    #[inline]
    pub fn map(&self, v: u64) -> u64 {
        self.table[v as usize]
    }
}

/// Result of the exhaustive algebraic-law check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Laws {
    pub commutative: bool,
    pub associative: bool,
}

/// A key-fusing transformation: `base(a, b)`, optionally followed by a fixed
/// relabeling of the key space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KftSpec {
    space: KeySpace,
    base: BaseOp,
    permutation: Option<Permutation>,
}

impl KftSpec {
    pub fn new(space: KeySpace, base: BaseOp) -> Self {
        Self {
            space,
            base,
            permutation: None,
        }
    }

    pub fn xor(space: KeySpace) -> Self {
        Self::new(space, BaseOp::Xor)
    }

    pub fn add_mod(space: KeySpace) -> Self {
        Self::new(space, BaseOp::AddMod)
    }

    pub fn sub_mod(space: KeySpace) -> Self {
        Self::new(space, BaseOp::SubMod)
    }

    /// `op(a, b) = perm(base(a, b))`.
    pub fn permuted(base: BaseOp, permutation: Permutation) -> Self {
        Self {
            space: permutation.space(),
            base,
            permutation: Some(permutation),
        }
    }

    pub fn kind(&self) -> KftKind {
        match (self.permutation.is_some(), self.base) {
            (true, _) => KftKind::Permuted,
            (false, BaseOp::Xor) => KftKind::Xor,
            (false, BaseOp::AddMod) => KftKind::AddMod,
            (false, BaseOp::SubMod) => KftKind::SubMod,
        }
    }

    pub fn space(&self) -> KeySpace {
        self.space
    }

    pub fn base(&self) -> BaseOp {
        self.base
    }

    pub fn permutation(&self) -> Option<&Permutation> {
        self.permutation.as_ref()
    }

    #[inline]
    fn eval(&self, a: u64, b: u64) -> u64 {
        let r = self.base.eval(a, b, self.space.mask());
        match &self.permutation {
            Some(p) => p.map(r),
            None => r,
        }
    }

    /// Fuses two concrete key values.
    pub fn apply(&self, a: u64, b: u64) -> Result<u64> {
        self.space.check(a)?;
        self.space.check(b)?;
        Ok(self.eval(a, b))
    }

    /// Left fold of [`KftSpec::apply`] over `values`.
    pub fn fuse_keys(&self, values: &[u64]) -> Result<u64> {
        let (&first, rest) = values
            .split_first()
            .ok_or_else(|| Error::InvalidArgument("cannot fuse an empty key list".into()))?;
        let mut acc = self.space.check(first)?;
        for &v in rest {
            acc = self.eval(acc, self.space.check(v)?);
        }
        Ok(acc)
    }

    /// Exact distribution of `op(A, B)` for independent `A ~ a`, `B ~ b`:
    /// `out[o] = sum over op(u, v) = o of a[u] * b[v]`.
    ///
    /// Dense `O(M^2)` convolution.
    pub fn fuse_dist(&self, a: &KeyDistribution, b: &KeyDistribution) -> Result<KeyDistribution> {
        self.space.same_as(&a.space())?;
        self.space.same_as(&b.space())?;
        let len = self.space.exact_len("fuse_dist")?;
        let mut out = vec![0.0; len];
        let b_support: Vec<(u64, f64)> = b
            .probs()
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(v, &p)| (v as u64, p))
            .collect();
        for (u, &pa) in a.probs().iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            for &(v, pb) in &b_support {
                out[self.eval(u as u64, v) as usize] += pa * pb;
            }
        }
        Ok(KeyDistribution::from_parts(self.space, out))
    }

    /// Left fold of [`KftSpec::fuse_dist`]; a single input is returned as is.
    pub fn fuse_many(&self, dists: &[KeyDistribution]) -> Result<KeyDistribution> {
        let (first, rest) = dists.split_first().ok_or_else(|| {
            Error::InvalidArgument("cannot fuse an empty distribution list".into())
        })?;
        self.space.same_as(&first.space())?;
        rest.iter()
            .try_fold(first.clone(), |acc, d| self.fuse_dist(&acc, d))
    }

    /// Exhaustive row and column bijectivity scan of the operation table.
    pub fn verify_latin_square(&self) -> Result<bool> {
        if self.space.bits() > MAX_LATIN_BITS {
            return Err(Error::Capacity {
                op: "verify_latin_square",
                max: MAX_LATIN_BITS,
                bits: self.space.bits(),
            });
        }
        Ok(is_latin_square(self.space.size(), |a, b| self.eval(a, b)))
    }

    /// Exhaustive commutativity (over all pairs) and associativity (over all
    /// triples) check.
    pub fn check_laws(&self) -> Result<Laws> {
        if self.space.bits() > MAX_LAWS_BITS {
            return Err(Error::Capacity {
                op: "check_laws",
                max: MAX_LAWS_BITS,
                bits: self.space.bits(),
            });
        }
        Ok(laws_of(self.space.size(), |a, b| self.eval(a, b)))
    }
}

/// True iff every row and every column of the `size x size` table of `op`
/// is a permutation of `[0, size)`.
pub fn is_latin_square(size: u64, op: impl Fn(u64, u64) -> u64) -> bool {
    let m = size as usize;
    let mut row_seen = vec![0u64; m];
    let mut col_seen = vec![0u64; m];
    // Stamps avoid clearing the scratch vectors between lines.
    for fixed in 0..size {
        let stamp = fixed + 1;
        for other in 0..size {
            let r = op(fixed, other);
            if r >= size || row_seen[r as usize] == stamp {
                return false;
            }
            row_seen[r as usize] = stamp;
            let c = op(other, fixed);
            if c >= size || col_seen[c as usize] == stamp {
                return false;
            }
            col_seen[c as usize] = stamp;
        }
    }
    true
}

/// Exhaustively determines commutativity and associativity of `op`.
pub fn laws_of(size: u64, op: impl Fn(u64, u64) -> u64) -> Laws {
    let commutative = (0..size).all(|a| (a + 1..size).all(|b| op(a, b) == op(b, a)));
    let associative = (0..size).all(|a| {
        (0..size).all(|b| {
            let ab = op(a, b);
            (0..size).all(|c| op(ab, c) == op(a, op(b, c)))
        })
    });
    Laws {
        commutative,
        associative,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn space(bits: u32) -> KeySpace {
        KeySpace::new(bits).unwrap()
    }

    fn dist(probs: &[f64]) -> KeyDistribution {
        KeyDistribution::from_probs(probs.to_vec()).unwrap()
    }

    fn ka() -> KeyDistribution {
        dist(&[1.0 / 3.0, 0.25, 1.0 / 6.0, 0.25])
    }

    fn kc() -> KeyDistribution {
        dist(&[0.5, 0.2, 1.0 / 6.0, 2.0 / 15.0])
    }

    fn kb() -> KeyDistribution {
        KeyDistribution::point_mass(space(2), 3).unwrap()
    }

    fn all_kinds(bits: u32) -> Vec<KftSpec> {
        let s = space(bits);
        vec![
            KftSpec::xor(s),
            KftSpec::add_mod(s),
            KftSpec::sub_mod(s),
            KftSpec::permuted(BaseOp::Xor, Permutation::rotation(s).unwrap()),
        ]
    }

    #[test]
    fn apply_examples() {
        let xor = KftSpec::xor(space(2));
        assert_eq!(xor.apply(1, 3).unwrap(), 2);
        for a in 0..4 {
            assert_eq!(xor.apply(a, 0).unwrap(), a);
        }
        assert_eq!(KftSpec::add_mod(space(2)).apply(3, 2).unwrap(), 1);
        assert_eq!(KftSpec::sub_mod(space(2)).apply(1, 3).unwrap(), 2);
        assert!(matches!(
            xor.apply(4, 0),
            Err(Error::OutOfRange { value: 4, .. })
        ));
        // wide keys stay in range
        let wide = KftSpec::add_mod(space(63));
        assert_eq!(wide.apply((1 << 63) - 1, 2).unwrap(), 1);
    }

    #[test]
    fn fuse_keys_examples() {
        let xor = KftSpec::xor(space(2));
        assert_eq!(xor.fuse_keys(&[1, 2, 3]).unwrap(), 0);
        assert_eq!(xor.fuse_keys(&[2]).unwrap(), 2);
        assert!(xor.fuse_keys(&[]).is_err());
        let add = KftSpec::add_mod(space(4));
        assert_eq!(add.fuse_keys(&[5, 6]).unwrap(), 11);
        assert_eq!(add.fuse_keys(&[7, 8]).unwrap(), 15);
        assert_eq!(add.fuse_keys(&[5, 6, 7, 8]).unwrap(), 10);
    }

    #[test]
    fn leaked_key_only_relabels() {
        let kab = KftSpec::xor(space(2)).fuse_dist(&ka(), &kb()).unwrap();
        let expected = [0.25, 1.0 / 6.0, 0.25, 1.0 / 3.0];
        for (got, want) in kab.probs().iter().zip(expected) {
            assert!((got - want).abs() < 1e-15);
        }
        assert!((kab.min_entropy() - 3f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn three_key_fusion_matches_rational_oracle() {
        // 4x4 convolution done by hand in exact fractions.
        let xor = KftSpec::xor(space(2));
        let kabc = xor.fuse_many(&[ka(), kb(), kc()]).unwrap();
        let expected = [11.0 / 45.0, 2.0 / 9.0, 23.0 / 90.0, 5.0 / 18.0];
        for (got, want) in kabc.probs().iter().zip(expected) {
            assert!((got - want).abs() < 1e-15);
        }
        assert!((kabc.min_entropy() - (18.0f64 / 5.0).log2()).abs() < 1e-12);
        assert!((kabc.min_entropy() - 1.848_00).abs() < 1e-5);
    }

    #[test]
    fn fuse_many_edge_cases() {
        let xor = KftSpec::xor(space(2));
        assert_eq!(xor.fuse_many(&[ka()]).unwrap(), ka());
        assert!(xor.fuse_many(&[]).is_err());
        let u = KeyDistribution::uniform(space(2)).unwrap();
        let p0 = KeyDistribution::point_mass(space(2), 1).unwrap();
        let p1 = KeyDistribution::point_mass(space(2), 2).unwrap();
        assert_eq!(xor.fuse_many(&[u.clone(), p0, p1]).unwrap(), u);
        let wrong = KeyDistribution::uniform(space(3)).unwrap();
        assert!(matches!(
            xor.fuse_dist(&ka(), &wrong),
            Err(Error::SpaceMismatch { .. })
        ));
    }

    #[test]
    fn latin_square_checks() {
        for bits in 2..=4 {
            for k in all_kinds(bits) {
                assert!(k.verify_latin_square().unwrap(), "{:?}", k.kind());
            }
        }
        assert!(!is_latin_square(4, |a, b| a & b));
        assert!(!is_latin_square(4, |a, b| a | b));
        assert!(KftSpec::xor(space(12)).verify_latin_square().unwrap());
        assert!(matches!(
            KftSpec::xor(space(13)).verify_latin_square(),
            Err(Error::Capacity { max: 12, .. })
        ));
    }

    #[test]
    fn law_checks() {
        let s = space(2);
        let both = Laws {
            commutative: true,
            associative: true,
        };
        assert_eq!(KftSpec::xor(s).check_laws().unwrap(), both);
        assert_eq!(KftSpec::add_mod(space(3)).check_laws().unwrap(), both);
        assert_eq!(
            KftSpec::sub_mod(s).check_laws().unwrap(),
            Laws {
                commutative: false,
                associative: false
            }
        );
        assert!(matches!(
            KftSpec::xor(space(9)).check_laws(),
            Err(Error::Capacity { max: 8, .. })
        ));
    }

    #[test]
    fn permuted_xor_has_non_associative_witness() {
        // Exhaustive search over all 24 relabelings of the 2-bit space.
        let s = space(2);
        let mut found = None;
        let mut table = [0u64, 1, 2, 3];
        permutations(&mut table, 0, &mut |t| {
            let pi = |v: u64| t[v as usize];
            let witness = (0..4)
                .any(|a| (0..4).any(|b| (0..4).any(|c| pi(pi(a ^ b) ^ c) != pi(a ^ pi(b ^ c)))));
            if witness && found.is_none() {
                found = Some(t.to_vec());
            }
        });
        let table = found.expect("some relabeling breaks associativity");
        let k = KftSpec::permuted(BaseOp::Xor, Permutation::new(s, table).unwrap());
        assert_eq!(
            k.check_laws().unwrap(),
            Laws {
                commutative: true,
                associative: false
            }
        );
        // the default rotation is one such witness
        let rot = KftSpec::permuted(BaseOp::Xor, Permutation::rotation(s).unwrap());
        assert!(!rot.check_laws().unwrap().associative);
        let id = KftSpec::permuted(BaseOp::Xor, Permutation::identity(s).unwrap());
        assert!(id.check_laws().unwrap().associative);
    }

    fn permutations(t: &mut [u64; 4], k: usize, f: &mut impl FnMut(&[u64; 4])) {
        if k == t.len() {
            f(t);
            return;
        }
        for i in k..t.len() {
            t.swap(k, i);
            permutations(t, k + 1, f);
            t.swap(k, i);
        }
    }

    #[test]
    fn permutation_validation() {
        let s = space(2);
        assert!(Permutation::new(s, vec![0, 1, 1, 3]).is_err());
        assert!(Permutation::new(s, vec![0, 1, 2]).is_err());
        assert!(Permutation::new(s, vec![0, 1, 2, 4]).is_err());
        assert!(Permutation::new(s, vec![3, 2, 1, 0]).is_ok());
    }

    fn arb_case() -> impl Strategy<Value = (KftSpec, KeyDistribution, KeyDistribution)> {
        (2u32..=3, 0usize..4, any::<u64>()).prop_flat_map(|(bits, kind, seed)| {
            let m = 1usize << bits;
            let weights = prop::collection::vec(prop_oneof![1 => Just(0.0), 4 => 0.0..1.0f64], m);
            (weights.clone(), weights).prop_filter_map("degenerate weights", move |(wa, wb)| {
                let s = KeySpace::new(bits).unwrap();
                let norm = |w: Vec<f64>| {
                    let t: f64 = w.iter().sum();
                    (t > 0.0).then(|| {
                        KeyDistribution::new(s, w.iter().map(|x| x / t).collect()).unwrap()
                    })
                };
                let k = match kind {
                    0 => KftSpec::xor(s),
                    1 => KftSpec::add_mod(s),
                    2 => KftSpec::sub_mod(s),
                    _ => {
                        let mut table: Vec<u64> = (0..m as u64).collect();
                        table.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
                        KftSpec::permuted(BaseOp::AddMod, Permutation::new(s, table).unwrap())
                    }
                };
                Some((k, norm(wa)?, norm(wb)?))
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn min_entropy_never_decreases((k, a, b) in arb_case()) {
            let out = k.fuse_dist(&a, &b).unwrap();
            prop_assert!(
                out.min_entropy() >= a.min_entropy().max(b.min_entropy()) - 1e-12
            );
        }
    }

    proptest! {
        #[test]
        fn point_mass_fusion_permutes_probabilities((k, a, _b) in arb_case(), v in 0u64..4) {
            let p = KeyDistribution::point_mass(k.space(), v).unwrap();
            for out in [k.fuse_dist(&a, &p).unwrap(), k.fuse_dist(&p, &a).unwrap()] {
                let mut got = out.probs().to_vec();
                let mut want = a.probs().to_vec();
                got.sort_by(f64::total_cmp);
                want.sort_by(f64::total_cmp);
                prop_assert_eq!(got, want);
                prop_assert_eq!(out.min_entropy(), a.min_entropy());
                prop_assert!((out.shannon_entropy() - a.shannon_entropy()).abs() < 1e-12);
            }
        }

        #[test]
        fn uniform_input_absorbs((k, a, _b) in arb_case()) {
            let u = KeyDistribution::uniform(k.space()).unwrap();
            let m = k.space().size() as f64;
            for out in [k.fuse_dist(&a, &u).unwrap(), k.fuse_dist(&u, &a).unwrap()] {
                for &p in out.probs() {
                    prop_assert!((p - 1.0 / m).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn commutative_instances_fuse_symmetrically((k, a, b) in arb_case()) {
            if k.check_laws().unwrap().commutative {
                let ab = k.fuse_dist(&a, &b).unwrap();
                let ba = k.fuse_dist(&b, &a).unwrap();
                for (x, y) in ab.probs().iter().zip(ba.probs()) {
                    prop_assert!((x - y).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn one_unleaked_key_protects_the_window(
            (k, a, _b) in arb_case(),
            leaked in prop::collection::vec(0u64..4, 1..5),
            pos in 0usize..5,
        ) {
            let threshold = a.min_entropy();
            let mut window: Vec<KeyDistribution> = leaked
                .iter()
                .map(|&v| KeyDistribution::point_mass(k.space(), v).unwrap())
                .collect();
            let pos = pos.min(window.len());
            window.insert(pos, a);
            let out = k.fuse_many(&window).unwrap();
            prop_assert!(out.min_entropy() >= threshold - 1e-12);
        }
    }

    #[test]
    fn uniform_output_independent_of_other_input() {
        // Source privacy: with a uniform key in the pair, the joint law of
        // (other input, output) factorizes for every KFT.
        for bits in 2..=3 {
            for k in all_kinds(bits) {
                let m = k.space().size();
                let pu = 1.0 / m as f64;
                for other in 0..m {
                    let mut counts = vec![0u64; m as usize];
                    for u in 0..m {
                        counts[k.apply(other, u).unwrap() as usize] += 1;
                    }
                    assert!(counts.iter().all(|&c| c == 1));
                    let cond: Vec<f64> = counts.iter().map(|&c| c as f64 * pu).collect();
                    assert!(cond.iter().all(|&p| p == pu));
                }
            }
        }
    }
}
