//! Exact counting over F_q: Gaussian binomials, invertible and rank-k matrix
//! counts, and subspace intersection profiles.
//!
//! `q` is treated as a formal integer `>= 2`; the identities hold whether or
//! not it is a prime power.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

/// Exact non-negative count.
pub type BigCount = BigUint;

type Triangle = Vec<Vec<BigUint>>;

fn cache() -> &'static Mutex<HashMap<u64, Triangle>> {
    static CACHE: OnceLock<Mutex<HashMap<u64, Triangle>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Number of `b`-dimensional subspaces of F_q^a (zero when `b > a`).
///
/// Built row by row from the q-Pascal rule
/// `[a, b] = [a-1, b-1] + q^b [a-1, b]`, memoized per `q`.
pub fn gaussian_binomial(a: usize, b: usize, q: u64) -> BigCount {
    assert!(q >= 2, "q must be at least 2");
    if b > a {
        return BigUint::zero();
    }
    let mut guard = cache().lock().expect("cache poisoned");
    let tri = guard.entry(q).or_insert_with(|| vec![vec![BigUint::one()]]);
    while tri.len() <= a {
        let prev = tri.last().expect("non-empty");
        let len = prev.len() + 1;
        let mut row = Vec::with_capacity(len);
        let mut q_pow = BigUint::one();
        for j in 0..len {
            let left = if j > 0 {
                prev[j - 1].clone()
            } else {
                BigUint::zero()
            };
            let right = prev.get(j).map_or_else(BigUint::zero, |v| &q_pow * v);
            row.push(left + right);
            q_pow *= q;
        }
        tri.push(row);
    }
    tri[a][b].clone()
}

/// `prod_{i<k} (q^n - q^i)`: ordered `k`-tuples of independent vectors in
/// F_q^n, equivalently `n x m` matrices with a prescribed `k`-dimensional row
/// space.
pub fn count_independent_tuples(n: usize, k: usize, q: u64) -> BigCount {
    if k > n {
        return BigUint::zero();
    }
    let qn = BigUint::from(q).pow(n as u32);
    (0..k).fold(BigUint::one(), |acc, i| {
        acc * (&qn - BigUint::from(q).pow(i as u32))
    })
}

/// |GL_n(F_q)|.
pub fn count_invertible(n: usize, q: u64) -> BigCount {
    count_independent_tuples(n, n, q)
}

/// Number of `n x m` matrices of rank `k` (zero when `k > min(n, m)`).
pub fn count_rank_matrices(n: usize, m: usize, k: usize, q: u64) -> BigCount {
    if k > n.min(m) {
        return BigUint::zero();
    }
    gaussian_binomial(m, k, q) * count_independent_tuples(n, k, q)
}

/// Number of `k`-dimensional subspaces of F_q^m meeting a fixed
/// `t`-dimensional subspace in dimension exactly `z`.
pub fn count_subspaces_with_intersection(
    m: usize,
    t: usize,
    k: usize,
    z: usize,
    q: u64,
) -> BigCount {
    if t > m || z > k.min(t) || k - z > m - t {
        return BigUint::zero();
    }
    gaussian_binomial(t, z, q)
        * gaussian_binomial(m - t, k - z, q)
        * BigUint::from(q).pow(((k - z) * (t - z)) as u32)
}

/// Number of `k`-dimensional row spaces `U` with `dim(U ∩ R) = s` for a fixed
/// `r`-dimensional `R` in F_q^m.
pub fn count_compatible_inputs(m: usize, r: usize, k: usize, s: usize, q: u64) -> BigCount {
    count_subspaces_with_intersection(m, r, k, s, q)
}

/// Base-q logarithm of an exact count; `-inf` for zero.
///
/// Uses the exact bit length and the top 64 bits, so the relative error is
/// at the level of f64 rounding.
pub fn log_q(count: &BigUint, q: u64) -> f64 {
    log2_big(count) / (q as f64).log2()
}

pub fn log2_big(count: &BigUint) -> f64 {
    if count.is_zero() {
        return f64::NEG_INFINITY;
    }
    let bits = count.bits();
    if bits <= 64 {
        return count
            .to_u64()
            .expect("fits")
            .to_f64()
            .expect("finite")
            .log2();
    }
    let shift = bits - 64;
    let top = (count >> shift).to_u64().expect("64 bits");
    (top as f64).log2() + shift as f64
}
