//! Test-only oracles, written without touching the library's fusion code.

#![allow(dead_code)]

use num::{BigInt, BigRational, One, ToPrimitive, Zero};
use rand::seq::SliceRandom;
use rand::Rng;

/// Operation tables rebuilt from first principles.
#[derive(Debug, Clone)]
pub enum OracleOp {
    Xor,
    Add,
    Sub,
    /// `perm[base(a, b)]`
    Permuted(Box<OracleOp>, Vec<u64>),
}

impl OracleOp {
    pub fn eval(&self, m: u64, a: u64, b: u64) -> u64 {
        match self {
            OracleOp::Xor => a ^ b,
            OracleOp::Add => (a + b) % m,
            OracleOp::Sub => (a + m - b) % m,
            OracleOp::Permuted(base, perm) => perm[base.eval(m, a, b) as usize],
        }
    }
}

pub fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Exhaustive pushforward of two independent laws in exact arithmetic.
pub fn rational_fuse(op: &OracleOp, a: &[BigRational], b: &[BigRational]) -> Vec<BigRational> {
    let m = a.len() as u64;
    let mut out = vec![BigRational::zero(); a.len()];
    for u in 0..m {
        for v in 0..m {
            out[op.eval(m, u, v) as usize] += &a[u as usize] * &b[v as usize];
        }
    }
    out
}

pub fn rational_min_entropy(d: &[BigRational]) -> f64 {
    let max = d.iter().max().expect("non-empty");
    -max.to_f64().unwrap().log2()
}

pub fn to_f64(d: &[BigRational]) -> Vec<f64> {
    d.iter().map(|x| x.to_f64().unwrap()).collect()
}

/// Random law on `m` points with small integer weights, some of them zero.
pub fn random_rational_dist(rng: &mut impl Rng, m: usize) -> Vec<BigRational> {
    loop {
        let weights: Vec<i64> = (0..m)
            .map(|_| {
                if rng.gen_bool(0.2) {
                    0
                } else {
                    rng.gen_range(1..=30)
                }
            })
            .collect();
        let total: i64 = weights.iter().sum();
        if total > 0 {
            let d: Vec<BigRational> = weights.iter().map(|&w| ratio(w, total)).collect();
            debug_assert_eq!(d.iter().sum::<BigRational>(), BigRational::one());
            return d;
        }
    }
}

/// Random floating law drawn from a few shapes: dense, sparse, point mass,
/// near uniform.
pub fn random_float_dist(rng: &mut impl Rng, m: usize) -> Vec<f64> {
    let mut w: Vec<f64> = match rng.gen_range(0..4) {
        0 => (0..m).map(|_| rng.gen::<f64>()).collect(),
        1 => (0..m)
            .map(|_| {
                if rng.gen_bool(0.5) {
                    0.0
                } else {
                    rng.gen::<f64>()
                }
            })
            .collect(),
        2 => {
            let mut v = vec![0.0; m];
            v[rng.gen_range(0..m)] = 1.0;
            v
        }
        _ => (0..m).map(|_| 1.0 + 1e-3 * rng.gen::<f64>()).collect(),
    };
    if w.iter().all(|&x| x == 0.0) {
        w[0] = 1.0;
    }
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

pub fn random_perm(rng: &mut impl Rng, m: usize) -> Vec<u64> {
    let mut t: Vec<u64> = (0..m as u64).collect();
    t.shuffle(rng);
    t
}

/// Commutativity and associativity by brute force.
pub fn oracle_laws(op: &OracleOp, m: u64) -> (bool, bool) {
    let mut commutative = true;
    let mut associative = true;
    for a in 0..m {
        for b in 0..m {
            if op.eval(m, a, b) != op.eval(m, b, a) {
                commutative = false;
            }
            for c in 0..m {
                let left = op.eval(m, op.eval(m, a, b), c);
                let right = op.eval(m, a, op.eval(m, b, c));
                if left != right {
                    associative = false;
                }
            }
        }
    }
    (commutative, associative)
}

/// All permutations of `[0, m)`.
pub fn all_perms(m: usize) -> Vec<Vec<u64>> {
    fn rec(prefix: &mut Vec<u64>, used: &mut [bool], out: &mut Vec<Vec<u64>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for v in 0..used.len() {
            if !used[v] {
                used[v] = true;
                prefix.push(v as u64);
                rec(prefix, used, out);
                prefix.pop();
                used[v] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; m], &mut out);
    out
}
