//! Arithmetic in F_q for any prime power q.
//!
//! Elements are canonical integers in `[0, q)`: the base-p digits of the
//! integer are the coefficients of a polynomial in `x` (least significant
//! digit first), reduced modulo the field's irreducible polynomial. Prime
//! fields use plain modular arithmetic. Extension fields use log/antilog
//! tables built from a primitive element, so they are limited to
//! `q <= MAX_TABLE_ORDER`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::rng::RngCore;

/// Canonical integer encoding of a field element, always `< q`.
pub type FieldElement = u32;

/// Largest extension-field order for which tables are built.
pub const MAX_TABLE_ORDER: u64 = 1 << 16;

/// Largest supported prime field order.
pub const MAX_PRIME: u64 = (1 << 31) - 1;

/// A finite field F_q, cheap to clone and shareable across threads.
#[derive(Clone)]
pub struct Field(Arc<Inner>);

struct Inner {
    p: u32,
    d: u32,
    q: u32,
    /// Monic modulus, coefficients low to high (length d+1); empty for d = 1.
    modulus: Vec<u32>,
    tables: Option<Tables>,
}

struct Tables {
    /// exp[i] = g^i for i in 0..2(q-1).
    exp: Vec<u32>,
    /// log[a] for a != 0.
    log: Vec<u32>,
}

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
            || (self.0.q == other.0.q && self.0.modulus == other.0.modulus)
    }
}

impl Eq for Field {}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.d == 1 {
            write!(f, "F_{}", self.0.q)
        } else {
            write!(f, "F_{}^{} mod {:?}", self.0.p, self.0.d, self.0.modulus)
        }
    }
}

pub(crate) fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut i = 2u64;
    while i * i <= n {
        if n.is_multiple_of(i) {
            return false;
        }
        i += 1;
    }
    true
}

fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut i = 2u64;
    while i * i <= n {
        if n.is_multiple_of(i) {
            out.push(i);
            while n.is_multiple_of(i) {
                n /= i;
            }
        }
        i += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

/// Splits `q` into `(p, d)` with `q = p^d`, or fails if `q` is not a prime power.
pub fn prime_power(q: u64) -> Result<(u64, u32)> {
    if q < 2 {
        return Err(Error::NotPrimePower(q));
    }
    let p = prime_factors(q)[0];
    let (mut rest, mut d) = (q, 0u32);
    while rest % p == 0 {
        rest /= p;
        d += 1;
    }
    if rest != 1 {
        return Err(Error::NotPrimePower(q));
    }
    Ok((p, d))
}

// Polynomials over F_p as coefficient vectors, low degree first.

fn poly_trim(a: &mut Vec<u32>) {
    while a.last() == Some(&0) {
        a.pop();
    }
}

fn poly_rem(a: &[u32], b: &[u32], p: u32) -> Vec<u32> {
    let mut r = a.to_vec();
    poly_trim(&mut r);
    let db = b.len() - 1;
    let lead_inv = mod_inv(b[db], p);
    while r.len() > db {
        let shift = r.len() - 1 - db;
        let c = (r[r.len() - 1] as u64 * lead_inv as u64 % p as u64) as u32;
        for (i, &bi) in b.iter().enumerate() {
            let sub = (c as u64 * bi as u64 % p as u64) as u32;
            r[shift + i] = (r[shift + i] + p - sub) % p;
        }
        poly_trim(&mut r);
    }
    r
}

fn mod_inv(a: u32, p: u32) -> u32 {
    mod_pow(a as u64, p as u64 - 2, p as u64) as u32
}

fn mod_pow(mut b: u64, mut e: u64, p: u64) -> u64 {
    let mut r = 1 % p;
    b %= p;
    while e > 0 {
        if e & 1 == 1 {
            r = r * b % p;
        }
        b = b * b % p;
        e >>= 1;
    }
    r
}

/// Monic polynomial of degree `deg` whose lower coefficients are the base-p
/// digits of `index`.
fn monic_from_index(index: u64, deg: usize, p: u32) -> Vec<u32> {
    let mut c = Vec::with_capacity(deg + 1);
    let mut v = index;
    for _ in 0..deg {
        c.push((v % p as u64) as u32);
        v /= p as u64;
    }
    c.push(1);
    c
}

/// Trial division by every monic polynomial of degree 1..=deg/2.
fn is_irreducible(f: &[u32], p: u32) -> bool {
    let deg = f.len() - 1;
    for e in 1..=deg / 2 {
        let count = (p as u64).pow(e as u32);
        for idx in 0..count {
            let g = monic_from_index(idx, e, p);
            if poly_rem(f, &g, p).is_empty() {
                return false;
            }
        }
    }
    true
}

impl Field {
    /// Builds F_{p^d}. When `d > 1` and no modulus is given, the monic
    /// irreducible polynomial with the smallest encoded lower coefficients is used.
    pub fn new(p: u64, d: u32, modulus: Option<&[u32]>) -> Result<Self> {
        if !is_prime(p) {
            return Err(Error::NotPrime(p));
        }
        if d == 0 {
            return Err(Error::InvalidParameters(
                "field degree must be at least 1".into(),
            ));
        }
        if d == 1 {
            if p > MAX_PRIME {
                return Err(Error::FieldTooLarge {
                    order: p,
                    max: MAX_PRIME,
                });
            }
            if let Some(m) = modulus {
                if !m.is_empty() {
                    return Err(Error::InvalidModulus("prime fields take no modulus".into()));
                }
            }
            return Ok(Field(Arc::new(Inner {
                p: p as u32,
                d: 1,
                q: p as u32,
                modulus: Vec::new(),
                tables: None,
            })));
        }
        let order =
            p.checked_pow(d)
                .filter(|&q| q <= MAX_TABLE_ORDER)
                .ok_or(Error::FieldTooLarge {
                    order: p.saturating_pow(d),
                    max: MAX_TABLE_ORDER,
                })?;
        let p32 = p as u32;
        let modulus = match modulus {
            Some(m) => {
                let mut m = m.to_vec();
                poly_trim(&mut m);
                if m.len() != d as usize + 1 {
                    return Err(Error::InvalidModulus(format!(
                        "expected degree {d}, got {} coefficients",
                        m.len()
                    )));
                }
                if let Some(&bad) = m.iter().find(|&&c| c >= p32) {
                    return Err(Error::InvalidModulus(format!("coefficient {bad} >= {p}")));
                }
                let lead = mod_inv(m[d as usize], p32);
                for c in m.iter_mut() {
                    *c = (*c as u64 * lead as u64 % p) as u32;
                }
                if !is_irreducible(&m, p32) {
                    return Err(Error::ReducibleModulus(p32));
                }
                m
            }
            None => (0..p.pow(d))
                .map(|idx| monic_from_index(idx, d as usize, p32))
                .find(|m| is_irreducible(m, p32))
                .expect("an irreducible polynomial exists in every degree"),
        };
        let mut inner = Inner {
            p: p32,
            d,
            q: order as u32,
            modulus,
            tables: None,
        };
        inner.tables = Some(build_tables(&inner));
        Ok(Field(Arc::new(inner)))
    }

    pub fn prime(p: u64) -> Result<Self> {
        Self::new(p, 1, None)
    }

    /// F_q with the default modulus.
    pub fn with_order(q: u64) -> Result<Self> {
        let (p, d) = prime_power(q)?;
        Self::new(p, d, None)
    }

    pub fn characteristic(&self) -> u32 {
        self.0.p
    }

    pub fn degree(&self) -> u32 {
        self.0.d
    }

    pub fn order(&self) -> u32 {
        self.0.q
    }

    pub fn modulus(&self) -> &[u32] {
        &self.0.modulus
    }

    pub fn contains(&self, a: u64) -> bool {
        a < self.0.q as u64
    }

    pub fn check(&self, a: u64) -> Result<FieldElement> {
        if self.contains(a) {
            Ok(a as FieldElement)
        } else {
            Err(Error::ElementOutOfRange {
                value: a,
                order: self.0.q,
            })
        }
    }

    #[inline]
    pub fn add(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        let s = &self.0;
        if s.d == 1 {
            let r = a as u64 + b as u64;
            return if r >= s.q as u64 {
                (r - s.q as u64) as u32
            } else {
                r as u32
            };
        }
        if s.p == 2 {
            return a ^ b;
        }
        digitwise(a, b, s.p, s.d, |x, y| (x + y) % s.p)
    }

    #[inline]
    pub fn neg(&self, a: FieldElement) -> FieldElement {
        let s = &self.0;
        if s.d == 1 {
            return if a == 0 { 0 } else { s.q - a };
        }
        if s.p == 2 {
            return a;
        }
        digitwise(a, 0, s.p, s.d, |x, _| (s.p - x) % s.p)
    }

    #[inline]
    pub fn sub(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        let s = &self.0;
        if s.d == 1 {
            return if a >= b { a - b } else { a + s.q - b };
        }
        if s.p == 2 {
            return a ^ b;
        }
        digitwise(a, b, s.p, s.d, |x, y| (x + s.p - y) % s.p)
    }

    #[inline]
    pub fn mul(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        let s = &self.0;
        match &s.tables {
            None => (a as u64 * b as u64 % s.q as u64) as u32,
            Some(t) => {
                if a == 0 || b == 0 {
                    0
                } else {
                    t.exp[(t.log[a as usize] + t.log[b as usize]) as usize]
                }
            }
        }
    }

    pub fn inv(&self, a: FieldElement) -> Result<FieldElement> {
        if a == 0 {
            return Err(Error::ZeroInverse);
        }
        let s = &self.0;
        Ok(match &s.tables {
            None => mod_pow(a as u64, s.q as u64 - 2, s.q as u64) as u32,
            Some(t) => {
                let l = t.log[a as usize];
                if l == 0 {
                    1
                } else {
                    t.exp[(s.q - 1 - l) as usize]
                }
            }
        })
    }

    pub fn div(&self, a: FieldElement, b: FieldElement) -> Result<FieldElement> {
        Ok(self.mul(a, self.inv(b)?))
    }

    pub fn pow(&self, a: FieldElement, mut e: u64) -> FieldElement {
        let mut base = a;
        let mut r = 1;
        while e > 0 {
            if e & 1 == 1 {
                r = self.mul(r, base);
            }
            base = self.mul(base, base);
            e >>= 1;
        }
        r
    }

    /// Uniform element from exactly one 64-bit draw (multiply-shift; the
    /// bias is below q / 2^64).
    #[inline]
    pub fn random_element<R: RngCore + ?Sized>(&self, rng: &mut R) -> FieldElement {
        ((rng.next_u64() as u128 * self.0.q as u128) >> 64) as u32
    }
}

#[inline]
fn digitwise(a: u32, b: u32, p: u32, d: u32, op: impl Fn(u32, u32) -> u32) -> u32 {
    let (mut a, mut b) = (a, b);
    let mut out = 0u32;
    let mut place = 1u32;
    for _ in 0..d {
        out += op(a % p, b % p) * place;
        a /= p;
        b /= p;
        place = place.wrapping_mul(p);
    }
    out
}

/// Multiplication by polynomial arithmetic; used only while building tables.
fn slow_mul(f: &Inner, a: u32, b: u32) -> u32 {
    let (p, d) = (f.p as u64, f.d as usize);
    let digits = |mut v: u32| {
        let mut c = vec![0u64; d];
        for x in c.iter_mut() {
            *x = (v % f.p) as u64;
            v /= f.p;
        }
        c
    };
    let (da, db) = (digits(a), digits(b));
    let mut prod = vec![0u64; 2 * d - 1];
    for (i, &x) in da.iter().enumerate() {
        for (j, &y) in db.iter().enumerate() {
            prod[i + j] = (prod[i + j] + x * y) % p;
        }
    }
    for k in (d..prod.len()).rev() {
        let c = prod[k];
        if c != 0 {
            for (i, &mi) in f.modulus.iter().enumerate().take(d) {
                prod[k - d + i] = (prod[k - d + i] + (p - c) * mi as u64) % p;
            }
            prod[k] = 0;
        }
    }
    prod.iter().take(d).rev().fold(0u64, |acc, &c| acc * p + c) as u32
}

fn build_tables(f: &Inner) -> Tables {
    let q = f.q as u64;
    let group = q - 1;
    let factors = prime_factors(group);
    let slow_pow = |g: u32, mut e: u64| {
        let (mut base, mut r) = (g, 1u32);
        while e > 0 {
            if e & 1 == 1 {
                r = slow_mul(f, r, base);
            }
            base = slow_mul(f, base, base);
            e >>= 1;
        }
        r
    };
    let g = (2..f.q)
        .find(|&g| factors.iter().all(|&l| slow_pow(g, group / l) != 1))
        .expect("the multiplicative group is cyclic");
    let mut exp = vec![0u32; 2 * group as usize];
    let mut log = vec![0u32; q as usize];
    let mut cur = 1u32;
    for i in 0..group as usize {
        exp[i] = cur;
        exp[i + group as usize] = cur;
        log[cur as usize] = i as u32;
        cur = slow_mul(f, cur, g);
    }
    Tables { exp, log }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;
    use rand::Rng as _;

    fn grid() -> Vec<Field> {
        [2u64, 3, 4, 5, 7, 8, 9, 16]
            .iter()
            .map(|&q| Field::with_order(q).unwrap())
            .collect()
    }

    #[test]
    fn construction_examples() {
        let f2 = Field::new(2, 1, None).unwrap();
        assert_eq!(f2.order(), 2);
        let f4 = Field::new(2, 2, Some(&[1, 1, 1])).unwrap();
        assert_eq!(f4.order(), 4);
        // (x+1)^2 = x^2 + 1 in characteristic 2
        assert_eq!(
            Field::new(2, 2, Some(&[1, 0, 1])),
            Err(Error::ReducibleModulus(2))
        );
        assert_eq!(Field::new(6, 1, None), Err(Error::NotPrime(6)));
        assert!(matches!(
            Field::new(2, 17, None),
            Err(Error::FieldTooLarge { .. })
        ));
        assert_eq!(Field::with_order(12).unwrap_err(), Error::NotPrimePower(12));
    }

    #[test]
    fn default_moduli_are_the_usual_ones() {
        assert_eq!(Field::with_order(4).unwrap().modulus(), &[1, 1, 1]);
        assert_eq!(Field::with_order(8).unwrap().modulus(), &[1, 1, 0, 1]);
        assert_eq!(Field::with_order(16).unwrap().modulus(), &[1, 1, 0, 0, 1]);
        assert_eq!(Field::with_order(9).unwrap().modulus(), &[1, 0, 1]);
        assert_eq!(
            Field::with_order(4).unwrap(),
            Field::new(2, 2, Some(&[1, 1, 1])).unwrap()
        );
    }

    #[test]
    fn operation_examples() {
        let f2 = Field::prime(2).unwrap();
        assert_eq!(f2.add(1, 1), 0);
        let f5 = Field::prime(5).unwrap();
        assert_eq!(f5.inv(2).unwrap(), 3);
        assert_eq!(f5.inv(0), Err(Error::ZeroInverse));
        let f4 = Field::with_order(4).unwrap();
        // x * x = x + 1 (encoded 2 * 2 = 3)
        assert_eq!(f4.mul(2, 2), 3);
        assert_eq!(f4.inv(0), Err(Error::ZeroInverse));
    }

    #[test]
    fn field_axioms_on_grid() {
        for f in grid() {
            let q = f.order();
            let triples: Vec<(u32, u32, u32)> = if q <= 9 {
                (0..q)
                    .flat_map(|a| (0..q).flat_map(move |b| (0..q).map(move |c| (a, b, c))))
                    .collect()
            } else {
                let mut rng = SeedStream::new(1).substream(q as u64);
                (0..100_000)
                    .map(|_| {
                        (
                            rng.gen_range(0..q),
                            rng.gen_range(0..q),
                            rng.gen_range(0..q),
                        )
                    })
                    .collect()
            };
            for (a, b, c) in triples {
                assert_eq!(f.add(f.add(a, b), c), f.add(a, f.add(b, c)), "{f:?}");
                assert_eq!(f.mul(f.mul(a, b), c), f.mul(a, f.mul(b, c)), "{f:?}");
                assert_eq!(f.add(a, b), f.add(b, a));
                assert_eq!(f.mul(a, b), f.mul(b, a));
                assert_eq!(
                    f.mul(a, f.add(b, c)),
                    f.add(f.mul(a, b), f.mul(a, c)),
                    "{f:?}"
                );
                assert_eq!(f.sub(f.add(a, b), b), a);
                assert_eq!(f.add(a, f.neg(a)), 0);
            }
        }
    }

    #[test]
    fn inverses_and_frobenius() {
        for f in grid() {
            let p = f.characteristic() as u64;
            for a in 1..f.order() {
                let ia = f.inv(a).unwrap();
                assert_eq!(f.mul(a, ia), 1, "{f:?} a={a}");
                assert_eq!(f.inv(ia).unwrap(), a);
            }
            for a in 0..f.order() {
                for b in 0..f.order() {
                    assert_eq!(f.pow(f.add(a, b), p), f.add(f.pow(a, p), f.pow(b, p)));
                }
            }
        }
    }

    #[test]
    fn large_tables_and_primes() {
        let f = Field::with_order(1 << 16).unwrap();
        let mut rng = SeedStream::new(3).substream(0);
        for _ in 0..1000 {
            let a = f.random_element(&mut rng);
            if a != 0 {
                assert_eq!(f.mul(a, f.inv(a).unwrap()), 1);
            }
        }
        let p = Field::prime(2_147_483_647).unwrap();
        assert_eq!(p.mul(p.inv(12345).unwrap(), 12345), 1);
    }

    #[test]
    fn random_element_is_reproducible_and_in_range() {
        let f2 = Field::prime(2).unwrap();
        let draw = || {
            let mut rng = SeedStream::new(11).substream(0);
            (0..64)
                .map(|_| f2.random_element(&mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(), draw());
        for f in grid() {
            let mut rng = SeedStream::new(5).substream(f.order() as u64);
            assert!((0..1000).all(|_| f.random_element(&mut rng) < f.order()));
        }
    }

    #[test]
    fn random_element_frequencies_f3() {
        let f3 = Field::prime(3).unwrap();
        let mut rng = SeedStream::new(2024).substream(0);
        let mut counts = [0u32; 3];
        for _ in 0..30_000 {
            counts[f3.random_element(&mut rng) as usize] += 1;
        }
        // binomial(30000, 1/3): sigma = sqrt(30000 * 1/3 * 2/3)
        let sigma = (30_000.0f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        for c in counts {
            assert!((c as f64 - 10_000.0).abs() <= 4.0 * sigma, "{counts:?}");
        }
    }
}
