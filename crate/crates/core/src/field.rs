//! Finite-field machinery: prime enumeration, prime and extension field
//! arithmetic, and certified large-multiplicative-order elements.
//!
//! Extension fields are represented as `F_p[X]/<f>` with dense coefficient
//! vectors in canonical form. Degrees stay small (the large-order
//! construction uses degree `p-1` with `p <= 61`), so multiplication is
//! schoolbook with delayed reduction.

use crate::error::{Error, Result};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Trial-division bound used when factoring group orders.
const TRIAL_DIVISION_BOUND: u64 = 3_000_000;
/// Bound for the brute-force `omega^k != 1` fallback in `verify_order`.
const DIRECT_CHECK_LIMIT: u128 = 1 << 16;

// ---------------------------------------------------------------------------
// Primes
// ---------------------------------------------------------------------------

/// A positive integer checked prime by trial division.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Prime(u64);

impl Prime {
    pub fn new(value: u64) -> Result<Prime> {
        if is_prime_u64(value) {
            Ok(Prime(value))
        } else {
            Err(Error::NotPrime(value))
        }
    }

    pub fn get(self) -> u64 {
        self.0
    }
}

pub fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for q in [2u64, 3, 5] {
        if n == q {
            return true;
        }
        if n % q == 0 {
            return false;
        }
    }
    // wheel over 6k +/- 1
    let mut q = 7u64;
    while (q as u128) * (q as u128) <= n as u128 {
        if n % q == 0 || n % (q + 4) == 0 {
            return false;
        }
        q += 6;
    }
    true
}

/// The `count` smallest primes strictly greater than `lo`, ascending.
pub fn sieve_primes_above(lo: u64, count: usize) -> Vec<Prime> {
    assert!(count >= 1, "count must be positive");
    let mut hi = (lo + 16).max(lo.saturating_add(count as u64 * 16)).max(64);
    loop {
        let sieve = sieve_upto(hi);
        let found: Vec<Prime> = sieve
            .into_iter()
            .filter(|&q| q > lo)
            .take(count)
            .map(Prime)
            .collect();
        if found.len() == count {
            return found;
        }
        hi = hi.saturating_mul(2);
    }
}

/// All primes `<= hi` by the sieve of Eratosthenes.
pub fn sieve_upto(hi: u64) -> Vec<u64> {
    let n = hi as usize;
    let mut composite = vec![false; n + 1];
    let mut primes = Vec::new();
    for q in 2..=n {
        if !composite[q] {
            primes.push(q as u64);
            let mut m = q * q;
            while m <= n {
                composite[m] = true;
                m += q;
            }
        }
    }
    primes
}

fn trial_primes() -> &'static [u64] {
    static TABLE: OnceLock<Vec<u64>> = OnceLock::new();
    TABLE.get_or_init(|| sieve_upto(TRIAL_DIVISION_BOUND))
}

// ---------------------------------------------------------------------------
// Field context
// ---------------------------------------------------------------------------

/// A field element: dense coefficient vector of length `degree()`,
/// canonical residues in `[0, p)`.
pub type Elem = Vec<u64>;

/// A finite field: `Z/pZ` when `degree == 1`, otherwise `F_p[X]/<f>`.
///
/// Immutable after construction; all arithmetic is pure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldCtx {
    p: u64,
    /// Monic modulus of length `d + 1`; `[0, 1]` for the prime field.
    f: Vec<u64>,
    d: usize,
    /// `Some(a)` when `f = X^d - a`, enabling fast reduction.
    binomial_a: Option<u64>,
    /// Schoolbook products can accumulate in u64 without overflow.
    small_mul: bool,
}

impl FieldCtx {
    pub fn prime_field(p: Prime) -> FieldCtx {
        FieldCtx {
            p: p.get(),
            f: vec![0, 1],
            d: 1,
            binomial_a: None,
            small_mul: true,
        }
    }

    /// Extension field `F_p[X]/<f>` with `f` monic of degree `>= 2`,
    /// checked irreducible.
    pub fn extension(p: Prime, f: Vec<u64>) -> Result<FieldCtx> {
        let d = f.len().checked_sub(1).filter(|&d| d >= 2).ok_or_else(|| {
            Error::Precondition("extension modulus must have degree >= 2".into())
        })?;
        if f[d] != 1 {
            return Err(Error::Precondition("extension modulus must be monic".into()));
        }
        if f.iter().any(|&c| c >= p.get()) {
            return Err(Error::Precondition("modulus coefficients must be reduced".into()));
        }
        if !is_irreducible(p, &f)? {
            return Err(Error::NotIrreducible { p: p.get() });
        }
        Ok(Self::extension_unchecked(p, f))
    }

    fn extension_unchecked(p: Prime, f: Vec<u64>) -> FieldCtx {
        let d = f.len() - 1;
        let binomial_a = if f[1..d].iter().all(|&c| c == 0) {
            Some((p.get() - f[0]) % p.get())
        } else {
            None
        };
        let pm1 = (p.get() - 1) as u128;
        let small_mul = (d as u128)
            .checked_mul(pm1 * pm1)
            .map(|m| m < u64::MAX as u128 / 2)
            .unwrap_or(false);
        FieldCtx { p: p.get(), f, d, binomial_a, small_mul }
    }

    pub fn characteristic(&self) -> u64 {
        self.p
    }

    pub fn degree(&self) -> usize {
        self.d
    }

    pub fn modulus(&self) -> &[u64] {
        &self.f
    }

    /// Field size `p^d` as u128, saturating.
    pub fn size(&self) -> u128 {
        let mut acc: u128 = 1;
        for _ in 0..self.d {
            acc = acc.saturating_mul(self.p as u128);
        }
        acc
    }

    pub fn zero(&self) -> Elem {
        vec![0; self.d]
    }

    pub fn one(&self) -> Elem {
        let mut e = vec![0; self.d];
        e[0] = 1;
        e
    }

    pub fn from_residue(&self, r: u64) -> Elem {
        let mut e = vec![0; self.d];
        e[0] = r % self.p;
        e
    }

    pub fn from_i64(&self, v: i64) -> Elem {
        let p = self.p as i64;
        self.from_residue(v.rem_euclid(p) as u64)
    }

    /// The class of `X` (only meaningful for extensions).
    pub fn gen_x(&self) -> Elem {
        assert!(self.d >= 2);
        let mut e = vec![0; self.d];
        e[1] = 1;
        e
    }

    pub fn is_zero(&self, a: &[u64]) -> bool {
        a.iter().all(|&c| c == 0)
    }

    pub fn is_one(&self, a: &[u64]) -> bool {
        a[0] == 1 && a[1..].iter().all(|&c| c == 0)
    }

    pub fn add(&self, a: &[u64], b: &[u64]) -> Elem {
        let mut out = vec![0; self.d];
        self.add_slice(&mut out, a, b);
        out
    }

    pub fn sub(&self, a: &[u64], b: &[u64]) -> Elem {
        let mut out = vec![0; self.d];
        self.sub_slice(&mut out, a, b);
        out
    }

    pub fn neg(&self, a: &[u64]) -> Elem {
        a.iter().map(|&c| if c == 0 { 0 } else { self.p - c }).collect()
    }

    pub fn mul(&self, a: &[u64], b: &[u64]) -> Elem {
        let mut out = vec![0; self.d];
        let mut scratch = vec![0u64; 2 * self.d];
        self.mul_slice(&mut out, a, b, &mut scratch);
        out
    }

    pub fn div(&self, a: &[u64], b: &[u64]) -> Result<Elem> {
        Ok(self.mul(a, &self.inv(b)?))
    }

    #[inline]
    pub fn add_slice(&self, out: &mut [u64], a: &[u64], b: &[u64]) {
        let p = self.p;
        for i in 0..self.d {
            let s = a[i] + b[i];
            out[i] = if s >= p { s - p } else { s };
        }
    }

    #[inline]
    pub fn sub_slice(&self, out: &mut [u64], a: &[u64], b: &[u64]) {
        let p = self.p;
        for i in 0..self.d {
            out[i] = if a[i] >= b[i] { a[i] - b[i] } else { a[i] + p - b[i] };
        }
    }

    /// `out = a * b`; `scratch` must have length `2 * d`.
    pub fn mul_slice(&self, out: &mut [u64], a: &[u64], b: &[u64], scratch: &mut [u64]) {
        let d = self.d;
        let p = self.p;
        if d == 1 {
            out[0] = ((a[0] as u128 * b[0] as u128) % p as u128) as u64;
            return;
        }
        let prod = &mut scratch[..2 * d - 1];
        prod.fill(0);
        if self.small_mul {
            for (i, &ai) in a.iter().enumerate() {
                if ai == 0 {
                    continue;
                }
                for (j, &bj) in b.iter().enumerate() {
                    prod[i + j] += ai * bj;
                }
            }
            for c in prod.iter_mut() {
                *c %= p;
            }
        } else {
            for k in 0..2 * d - 1 {
                let mut acc: u128 = 0;
                let lo = k.saturating_sub(d - 1);
                let hi = k.min(d - 1);
                for i in lo..=hi {
                    acc += a[i] as u128 * b[k - i] as u128;
                    if acc >= u128::MAX / 2 {
                        acc %= p as u128;
                    }
                }
                prod[k] = (acc % p as u128) as u64;
            }
        }
        self.reduce_slice(prod);
        out[..d].copy_from_slice(&prod[..d]);
    }

    /// Reduce a product (length `2d - 1`, coefficients already `< p`) mod `f`.
    fn reduce_slice(&self, c: &mut [u64]) {
        let d = self.d;
        let p = self.p;
        match self.binomial_a {
            Some(a) => {
                for j in (d..c.len()).rev() {
                    if c[j] == 0 {
                        continue;
                    }
                    let add = (a as u128 * c[j] as u128) % p as u128;
                    c[j - d] = ((c[j - d] as u128 + add) % p as u128) as u64;
                    c[j] = 0;
                }
            }
            None => {
                for j in (d..c.len()).rev() {
                    let t = c[j];
                    if t == 0 {
                        continue;
                    }
                    c[j] = 0;
                    for i in 0..d {
                        if self.f[i] == 0 {
                            continue;
                        }
                        let sub = (self.f[i] as u128 * t as u128) % p as u128;
                        let cur = c[j - d + i] as u128;
                        c[j - d + i] = ((cur + p as u128 - sub) % p as u128) as u64;
                    }
                }
            }
        }
    }

    pub fn pow(&self, a: &[u64], mut e: u128) -> Elem {
        let mut base = a.to_vec();
        let mut acc = self.one();
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(&acc, &base);
            }
            base = self.mul(&base, &base);
            e >>= 1;
        }
        acc
    }

    /// Multiplicative inverse via extended Euclid on polynomials.
    pub fn inv(&self, a: &[u64]) -> Result<Elem> {
        if self.is_zero(a) {
            return Err(Error::DivisionByZero);
        }
        if self.d == 1 {
            return Ok(vec![mod_inverse(a[0], self.p)?]);
        }
        // Extended Euclid over F_p[X] for gcd(a, f) = 1.
        let p = self.p;
        let mut r0: Vec<u64> = self.f.clone();
        let mut r1: Vec<u64> = poly_trim(a.to_vec());
        let mut t0: Vec<u64> = vec![];
        let mut t1: Vec<u64> = vec![1];
        while !r1.is_empty() {
            let (q, rem) = poly_divrem(&r0, &r1, p);
            let t2 = poly_sub(&t0, &poly_mul_mod(&q, &t1, p), p);
            r0 = r1;
            r1 = rem;
            t0 = t1;
            t1 = t2;
        }
        // r0 is a nonzero constant gcd (f irreducible, a nonzero mod f).
        debug_assert_eq!(r0.len(), 1);
        let scale = mod_inverse(r0[0], p)?;
        let mut out = vec![0; self.d];
        for (i, &c) in t0.iter().enumerate() {
            out[i] = (c as u128 * scale as u128 % p as u128) as u64;
        }
        Ok(out)
    }

    pub fn rand_elem<R: rand::Rng>(&self, rng: &mut R) -> Elem {
        (0..self.d).map(|_| rng.gen_range(0..self.p)).collect()
    }
}

fn mod_inverse(a: u64, p: u64) -> Result<u64> {
    if a == 0 {
        return Err(Error::DivisionByZero);
    }
    let (mut t, mut new_t): (i128, i128) = (0, 1);
    let (mut r, mut new_r): (i128, i128) = (p as i128, a as i128);
    while new_r != 0 {
        let q = r / new_r;
        (t, new_t) = (new_t, t - q * new_t);
        (r, new_r) = (new_r, r - q * new_r);
    }
    debug_assert_eq!(r, 1);
    Ok(t.rem_euclid(p as i128) as u64)
}

// ---------------------------------------------------------------------------
// Polynomials over the prime field (dense u64 coefficients, trimmed)
// ---------------------------------------------------------------------------

pub(crate) fn poly_trim(mut v: Vec<u64>) -> Vec<u64> {
    while v.last() == Some(&0) {
        v.pop();
    }
    v
}

pub(crate) fn poly_sub(a: &[u64], b: &[u64], p: u64) -> Vec<u64> {
    let n = a.len().max(b.len());
    let mut out = vec![0; n];
    for i in 0..n {
        let x = a.get(i).copied().unwrap_or(0);
        let y = b.get(i).copied().unwrap_or(0);
        out[i] = if x >= y { x - y } else { x + p - y };
    }
    poly_trim(out)
}

pub(crate) fn poly_mul_mod(a: &[u64], b: &[u64], p: u64) -> Vec<u64> {
    if a.is_empty() || b.is_empty() {
        return vec![];
    }
    let mut out = vec![0u64; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0 {
            continue;
        }
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] = ((out[i + j] as u128 + ai as u128 * bj as u128) % p as u128) as u64;
        }
    }
    poly_trim(out)
}

/// Division with remainder by a nonzero divisor (not necessarily monic).
pub(crate) fn poly_divrem(a: &[u64], b: &[u64], p: u64) -> (Vec<u64>, Vec<u64>) {
    let b = poly_trim(b.to_vec());
    assert!(!b.is_empty(), "division by zero polynomial");
    let mut rem = poly_trim(a.to_vec());
    if rem.len() < b.len() {
        return (vec![], rem);
    }
    let lead_inv = mod_inverse(*b.last().unwrap(), p).expect("nonzero lead");
    let mut quot = vec![0u64; rem.len() - b.len() + 1];
    while rem.len() >= b.len() {
        let shift = rem.len() - b.len();
        let coef = (*rem.last().unwrap() as u128 * lead_inv as u128 % p as u128) as u64;
        quot[shift] = coef;
        for (i, &bi) in b.iter().enumerate() {
            let sub = (bi as u128 * coef as u128 % p as u128) as u64;
            let cur = rem[shift + i];
            rem[shift + i] = if cur >= sub { cur - sub } else { cur + p - sub };
        }
        rem = poly_trim(rem);
        if rem.is_empty() {
            break;
        }
    }
    (poly_trim(quot), rem)
}

pub(crate) fn poly_gcd(a: &[u64], b: &[u64], p: u64) -> Vec<u64> {
    let mut r0 = poly_trim(a.to_vec());
    let mut r1 = poly_trim(b.to_vec());
    while !r1.is_empty() {
        let (_, rem) = poly_divrem(&r0, &r1, p);
        r0 = r1;
        r1 = rem;
    }
    // normalize monic
    if let Some(&lead) = r0.last() {
        if lead != 1 {
            let inv = mod_inverse(lead, p).unwrap();
            for c in r0.iter_mut() {
                *c = (*c as u128 * inv as u128 % p as u128) as u64;
            }
        }
    }
    r0
}

fn poly_mulrem(a: &[u64], b: &[u64], f: &[u64], p: u64) -> Vec<u64> {
    let prod = poly_mul_mod(a, b, p);
    poly_divrem(&prod, f, p).1
}

/// `X^(p^k) mod f` by iterating the Frobenius map.
fn frobenius_power(f: &[u64], p: u64, k: usize) -> Vec<u64> {
    // x_1 = X^p mod f by square-and-multiply, then x_{i+1} = x_i^p mod f
    // computed by substituting... directly: x_{i+1} = x_i evaluated under the
    // p-power map, which equals modpow(x_i, p) since coefficients are in F_p.
    let xp = poly_modpow_x(f, p, p);
    let mut cur = xp.clone();
    for _ in 1..k {
        cur = poly_modpow(&cur, p, f, p);
    }
    cur
}

/// `base^e mod f` over F_p[X].
fn poly_modpow(base: &[u64], e: u64, f: &[u64], p: u64) -> Vec<u64> {
    let mut acc = vec![1u64];
    let mut b = poly_divrem(base, f, p).1;
    let mut e = e;
    while e > 0 {
        if e & 1 == 1 {
            acc = poly_mulrem(&acc, &b, f, p);
        }
        b = poly_mulrem(&b, &b, f, p);
        e >>= 1;
    }
    acc
}

/// `X^e mod f`.
fn poly_modpow_x(f: &[u64], p: u64, e: u64) -> Vec<u64> {
    poly_modpow(&[0, 1], e, f, p)
}

/// Deterministic irreducibility test (Rabin): `f` monic of degree `d >= 1`
/// is irreducible over `F_p` iff `X^(p^d) = X mod f` and
/// `gcd(X^(p^(d/q)) - X, f) = 1` for every prime `q | d`.
pub fn is_irreducible(p: Prime, f: &[u64]) -> Result<bool> {
    let pv = p.get();
    let f = poly_trim(f.to_vec());
    let d = f.len().checked_sub(1).ok_or_else(|| {
        Error::Precondition("irreducibility test needs a nonzero polynomial".into())
    })?;
    if d == 0 {
        return Err(Error::Precondition("irreducibility test needs degree >= 1".into()));
    }
    if *f.last().unwrap() != 1 {
        return Err(Error::Precondition("irreducibility test needs a monic polynomial".into()));
    }
    if d == 1 {
        return Ok(true);
    }
    for (q, _) in factor_u64(d as u64) {
        let k = d / q as usize;
        let xpk = frobenius_power(&f, pv, k);
        let diff = poly_sub(&xpk, &[0, 1], pv);
        let g = poly_gcd(&diff, &f, pv);
        if g.len() != 1 {
            return Ok(false);
        }
    }
    let xpd = frobenius_power(&f, pv, d);
    Ok(poly_sub(&xpd, &[0, 1], pv).is_empty())
}

/// Factor a u64 completely by trial division (used for small quantities
/// such as `d` and `p - 1` with desk-scale `p`).
pub(crate) fn factor_u64(mut n: u64) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    let mut q = 2u64;
    while q as u128 * q as u128 <= n as u128 {
        if n % q == 0 {
            let mut e = 0;
            while n % q == 0 {
                n /= q;
                e += 1;
            }
            out.push((q, e));
        }
        q += if q == 2 { 1 } else { 2 };
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}

// ---------------------------------------------------------------------------
// Factoring group orders p^d - 1
// ---------------------------------------------------------------------------

/// Partial factorization: fully factored prime powers plus residual
/// cofactors that exceeded the trial-division effort budget.
#[derive(Debug, Clone, Default)]
pub struct OrderFactors {
    pub factored: Vec<(u128, u32)>,
    pub residual: Vec<u128>,
}

impl OrderFactors {
    pub fn is_complete(&self) -> bool {
        self.residual.is_empty()
    }
}

/// Integer coefficients of the cyclotomic polynomial `Phi_e` for `e <= 64`,
/// by the recurrence `Phi_e = (X^e - 1) / prod_{d | e, d < e} Phi_d`.
fn cyclotomic_coeffs(e: u64) -> Vec<i128> {
    assert!(e >= 1 && e <= 64);
    let mut memo: HashMap<u64, Vec<i128>> = HashMap::new();
    fn compute(e: u64, memo: &mut HashMap<u64, Vec<i128>>) -> Vec<i128> {
        if let Some(v) = memo.get(&e) {
            return v.clone();
        }
        // X^e - 1
        let mut num = vec![0i128; e as usize + 1];
        num[0] = -1;
        num[e as usize] = 1;
        for d in 1..e {
            if e % d == 0 {
                let phi_d = compute(d, memo);
                num = int_poly_div_exact(&num, &phi_d);
            }
        }
        memo.insert(e, num.clone());
        num
    }
    compute(e, &mut memo)
}

/// Exact division of integer polynomials (remainder known to be zero).
fn int_poly_div_exact(a: &[i128], b: &[i128]) -> Vec<i128> {
    let mut rem = a.to_vec();
    let db = b.len() - 1;
    assert_eq!(b[db], 1, "divisor must be monic");
    let mut quot = vec![0i128; rem.len() - db];
    for shift in (0..quot.len()).rev() {
        let c = rem[shift + db];
        quot[shift] = c;
        if c != 0 {
            for i in 0..=db {
                rem[shift + i] -= c * b[i];
            }
        }
    }
    debug_assert!(rem.iter().all(|&c| c == 0));
    quot
}

/// `Phi_e(x)` as u128 (positive for x >= 2).
fn cyclotomic_value(e: u64, x: u64) -> u128 {
    let coeffs = cyclotomic_coeffs(e);
    let mut acc: i128 = 0;
    for &c in coeffs.iter().rev() {
        acc = acc * x as i128 + c;
    }
    debug_assert!(acc > 0);
    acc as u128
}

/// Trial-divide `n`, returning found prime powers and the residual cofactor.
fn trial_factor_u128(mut n: u128, out: &mut Vec<(u128, u32)>) -> u128 {
    for &q in trial_primes() {
        let q = q as u128;
        if q * q > n {
            break;
        }
        if n % q == 0 {
            let mut e = 0;
            while n % q == 0 {
                n /= q;
                e += 1;
            }
            out.push((q, e));
        }
    }
    if n > 1 {
        let bound = TRIAL_DIVISION_BOUND as u128;
        if n < bound * bound {
            // no factor below the bound, so n is prime
            out.push((n, 1));
            n = 1;
        }
    }
    n
}

/// Factor `p^d - 1` through its cyclotomic pieces `Phi_e(p)` for `e | d`.
pub fn factor_order(p: u64, d: usize) -> OrderFactors {
    let mut factored: Vec<(u128, u32)> = Vec::new();
    let mut residual = Vec::new();
    for e in 1..=d as u64 {
        if d as u64 % e == 0 {
            let v = cyclotomic_value(e, p);
            let rest = trial_factor_u128(v, &mut factored);
            if rest > 1 {
                residual.push(rest);
            }
        }
    }
    // merge duplicate primes
    factored.sort();
    let mut merged: Vec<(u128, u32)> = Vec::new();
    for (q, e) in factored {
        if let Some(last) = merged.last_mut() {
            if last.0 == q {
                last.1 += e;
                continue;
            }
        }
        merged.push((q, e));
    }
    OrderFactors { factored: merged, residual }
}

/// Raise to the full group order `M = p^d - 1` expressed by `factors`.
fn pow_by_all_factors(ctx: &FieldCtx, a: &Elem, factors: &OrderFactors) -> Elem {
    let mut acc = a.clone();
    for &(q, e) in &factors.factored {
        for _ in 0..e {
            acc = ctx.pow(&acc, q);
        }
    }
    for &r in &factors.residual {
        acc = ctx.pow(&acc, r);
    }
    acc
}

/// Certified lower bound on the multiplicative order of `a`: the product of
/// exact q-adic valuations of ord(a) over the fully factored primes of the
/// group order. Exact when the factorization is complete.
pub fn certified_order_bound(ctx: &FieldCtx, a: &Elem, factors: &OrderFactors) -> u128 {
    debug_assert!(ctx.is_one(&pow_by_all_factors(ctx, a, factors)));
    let mut bound: u128 = 1;
    for (idx, &(q, e)) in factors.factored.iter().enumerate() {
        // x = a^(M / q^e)
        let mut x = a.clone();
        for (jdx, &(qj, ej)) in factors.factored.iter().enumerate() {
            if jdx == idx {
                continue;
            }
            for _ in 0..ej {
                x = ctx.pow(&x, qj);
            }
        }
        for &r in &factors.residual {
            x = ctx.pow(&x, r);
        }
        let mut v = 0u32;
        while !ctx.is_one(&x) {
            x = ctx.pow(&x, q);
            v += 1;
            assert!(v <= e, "order valuation exceeded group-order valuation");
        }
        for _ in 0..v {
            bound = bound.saturating_mul(q);
        }
    }
    bound
}

// ---------------------------------------------------------------------------
// Large-order elements
// ---------------------------------------------------------------------------

/// A field together with an element of certified large multiplicative order.
#[derive(Debug, Clone)]
pub struct LargeOrderCert {
    pub field: Arc<FieldCtx>,
    pub omega: Elem,
    pub order_lower_bound: u128,
}

/// Least primitive root modulo `p` (deterministic; requires factoring `p - 1`).
pub fn least_primitive_root(p: u64) -> u64 {
    let facs = factor_u64(p - 1);
    'cand: for g in 2..p {
        for &(q, _) in &facs {
            let e = ((p - 1) / q) as u128;
            let ctx = FieldCtx { p, f: vec![0, 1], d: 1, binomial_a: None, small_mul: true };
            if ctx.is_one(&ctx.pow(&[g % p], e)) {
                continue 'cand;
            }
        }
        return g;
    }
    unreachable!("every prime field has a primitive root")
}

fn order_cache() -> &'static Mutex<HashMap<u64, Arc<LargeOrderCert>>> {
    static CACHE: OnceLock<Mutex<HashMap<u64, Arc<LargeOrderCert>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Construct `F_p[X]/<f>` of degree `p - 1` together with an element of
/// verified multiplicative order at least `max(need, 2^p)`.
///
/// The modulus is `X^(p-1) - a` with `a` the least primitive root mod `p`
/// (irreducible for every odd prime). Candidates `X + c` are tried in order
/// and certified via `certified_order_bound`; nothing is returned unverified.
pub fn find_large_order(p: Prime, need: u128) -> Result<Arc<LargeOrderCert>> {
    let pv = p.get();
    if pv < 7 {
        return Err(Error::Precondition(format!("need p >= 7, got {pv}")));
    }
    let cap = if pv >= 127 { u128::MAX } else { 1u128 << pv };
    if need > cap {
        return Err(Error::Precondition(format!(
            "need {need} exceeds 2^{pv}; choose a larger prime"
        )));
    }
    if let Some(cert) = order_cache().lock().unwrap().get(&pv) {
        if cert.order_lower_bound >= need {
            return Ok(cert.clone());
        }
    }

    let d = (pv - 1) as usize;
    let a = least_primitive_root(pv);
    let mut f = vec![0u64; d + 1];
    f[0] = pv - a;
    f[d] = 1;
    debug_assert!(is_irreducible(p, &f)?);
    let ctx = Arc::new(FieldCtx::extension_unchecked(p, f));
    let factors = factor_order(pv, d);
    let target = cap; // certify the full Lemma-style bound 2^p
    for c in 0..pv {
        let mut omega = ctx.gen_x();
        omega[0] = c;
        if ctx.is_zero(&omega) {
            continue;
        }
        let bound = certified_order_bound(&ctx, &omega, &factors);
        if bound >= target.max(need) {
            let cert = Arc::new(LargeOrderCert {
                field: ctx.clone(),
                omega,
                order_lower_bound: bound,
            });
            debug_assert!(verify_order(&cert)?);
            order_cache().lock().unwrap().insert(pv, cert.clone());
            return Ok(cert);
        }
    }
    Err(Error::ConstructionFailed(format!(
        "no candidate of order >= 2^{pv} found in F_{pv}^{d}"
    )))
}

/// Re-verify a certificate: true iff the certified multiplicative order of
/// `omega` is at least `order_lower_bound`.
///
/// Factors `p^d - 1` with a bounded trial-division effort. If the
/// factorization is incomplete and the factored part cannot certify the
/// bound, falls back to directly checking `omega^k != 1` for all
/// `k < bound` when the bound is small, and otherwise reports
/// `Unverifiable`.
pub fn verify_order(cert: &LargeOrderCert) -> Result<bool> {
    let ctx = &cert.field;
    let factors = factor_order(ctx.characteristic(), ctx.degree());
    if ctx.is_zero(&cert.omega) {
        return Ok(false);
    }
    let bound = certified_order_bound(ctx, &cert.omega, &factors);
    if bound >= cert.order_lower_bound {
        return Ok(true);
    }
    if factors.is_complete() {
        // bound is the exact order
        return Ok(false);
    }
    if cert.order_lower_bound <= DIRECT_CHECK_LIMIT {
        let mut x = cert.omega.clone();
        let mut k: u128 = 1;
        while k < cert.order_lower_bound {
            if ctx.is_one(&x) {
                return Ok(false);
            }
            x = ctx.mul(&x, &cert.omega);
            k += 1;
        }
        return Ok(true);
    }
    Err(Error::Unverifiable(format!(
        "incomplete factorization of {}^{} - 1 and bound {} exceeds direct-check limit",
        ctx.characteristic(),
        ctx.degree(),
        cert.order_lower_bound
    )))
}

/// Wrap a user-supplied `(p, g)` pair as a certificate over the prime field,
/// verifying that `g` has order at least `need`.
pub fn prime_oracle_cert(p: u64, g: u64, need: u128) -> Result<Arc<LargeOrderCert>> {
    let prime = Prime::new(p)?;
    let ctx = Arc::new(FieldCtx::prime_field(prime));
    let g = g % p;
    if g == 0 {
        return Err(Error::Precondition("oracle generator must be nonzero".into()));
    }
    let mut factors = OrderFactors::default();
    let rest = trial_factor_u128((p - 1) as u128, &mut factors.factored);
    if rest > 1 {
        factors.residual.push(rest);
    }
    let bound = certified_order_bound(&ctx, &vec![g], &factors);
    if bound < need {
        return Err(Error::OrderTooWeak { have: bound, need });
    }
    Ok(Arc::new(LargeOrderCert { field: ctx, omega: vec![g], order_lower_bound: bound }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sieve_matches_spec_examples() {
        let ps: Vec<u64> = sieve_primes_above(1, 4).iter().map(|p| p.get()).collect();
        assert_eq!(ps, vec![2, 3, 5, 7]);
        let ps: Vec<u64> = sieve_primes_above(20, 3).iter().map(|p| p.get()).collect();
        assert_eq!(ps, vec![23, 29, 31]);
    }

    #[test]
    fn sieve_first_prime_above_10000() {
        // oracle: trial division upward
        let mut n = 10_001u64;
        while !is_prime_u64(n) {
            n += 1;
        }
        assert_eq!(sieve_primes_above(10_000, 1)[0].get(), n);
    }

    #[test]
    fn sieve_omits_no_primes() {
        let got: Vec<u64> = sieve_primes_above(100, 20).iter().map(|p| p.get()).collect();
        let mut expect = Vec::new();
        let mut n = 101u64;
        while expect.len() < 20 {
            if is_prime_u64(n) {
                expect.push(n);
            }
            n += 1;
        }
        assert_eq!(got, expect);
        assert!(got.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn irreducibility_spec_examples() {
        // X^2 + X + 1 over F_2: the only irreducible quadratic
        let p2 = Prime::new(2).unwrap();
        assert!(is_irreducible(p2, &[1, 1, 1]).unwrap());
        // X^2 - 1 = (X-1)(X+1) over F_5
        let p5 = Prime::new(5).unwrap();
        assert!(!is_irreducible(p5, &[4, 0, 1]).unwrap());
    }

    #[test]
    fn irreducibility_matches_root_search_for_cubics() {
        // Degree <= 3: reducible iff it has a root.
        let p = Prime::new(7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let f = vec![
                rng.gen_range(0..7),
                rng.gen_range(0..7),
                rng.gen_range(0..7),
                1u64,
            ];
            let has_root = (0..7u64).any(|x| {
                let mut acc = 0u64;
                for &c in f.iter().rev() {
                    acc = (acc * x + c) % 7;
                }
                acc == 0
            });
            assert_eq!(is_irreducible(p, &f).unwrap(), !has_root, "f = {f:?}");
        }
    }

    #[test]
    fn field_axioms_hold_exactly() {
        let fields = [
            FieldCtx::prime_field(Prime::new(101).unwrap()),
            FieldCtx::extension(Prime::new(7).unwrap(), {
                let a = least_primitive_root(7);
                let mut f = vec![0u64; 7];
                f[0] = 7 - a;
                f[6] = 1;
                f
            })
            .unwrap(),
            FieldCtx::extension(Prime::new(13).unwrap(), vec![2, 0, 1]).unwrap(),
        ];
        for ctx in &fields {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            for _ in 0..10_000 {
                let a = ctx.rand_elem(&mut rng);
                let b = ctx.rand_elem(&mut rng);
                let c = ctx.rand_elem(&mut rng);
                assert_eq!(ctx.mul(&ctx.mul(&a, &b), &c), ctx.mul(&a, &ctx.mul(&b, &c)));
                assert_eq!(ctx.add(&ctx.add(&a, &b), &c), ctx.add(&a, &ctx.add(&b, &c)));
                assert_eq!(
                    ctx.mul(&a, &ctx.add(&b, &c)),
                    ctx.add(&ctx.mul(&a, &b), &ctx.mul(&a, &c))
                );
                assert_eq!(ctx.sub(&ctx.add(&a, &b), &b), a);
                if !ctx.is_zero(&a) {
                    assert!(ctx.is_one(&ctx.mul(&a, &ctx.inv(&a).unwrap())));
                }
            }
        }
    }

    #[test]
    fn pow_laws() {
        let ctx = FieldCtx::extension(Prime::new(7).unwrap(), {
            let mut f = vec![0u64; 7];
            f[0] = 7 - least_primitive_root(7);
            f[6] = 1;
            f
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = ctx.rand_elem(&mut rng);
        assert!(ctx.is_one(&ctx.pow(&x, 0)));
        // Lagrange: x^(p^d - 1) = 1 for nonzero x
        let m = 7u128.pow(6) - 1;
        let y = ctx.gen_x();
        assert!(ctx.is_one(&ctx.pow(&y, m)));
    }

    #[test]
    fn inversion_of_zero_fails() {
        let ctx = FieldCtx::prime_field(Prime::new(11).unwrap());
        assert_eq!(ctx.inv(&ctx.zero()), Err(Error::DivisionByZero));
    }

    #[test]
    fn large_order_construction_and_verification() {
        // (p=7, need=100): order at least 2^7 = 128
        let cert = find_large_order(Prime::new(7).unwrap(), 100).unwrap();
        assert!(cert.order_lower_bound >= 128);
        assert!(verify_order(&cert).unwrap());

        // (p=7, need=1): qualifies after verification
        let cert1 = find_large_order(Prime::new(7).unwrap(), 1).unwrap();
        assert!(verify_order(&cert1).unwrap());

        // (p=11, need=2048)
        let cert11 = find_large_order(Prime::new(11).unwrap(), 2048).unwrap();
        assert!(cert11.order_lower_bound >= 2048);
        assert!(verify_order(&cert11).unwrap());
    }

    #[test]
    fn exhaustive_divisor_check_p7() {
        // independent oracle: exact order of omega via all divisors of 7^6 - 1
        let cert = find_large_order(Prime::new(7).unwrap(), 100).unwrap();
        let m: u128 = 7u128.pow(6) - 1;
        let mut divisors = Vec::new();
        let mut k = 1u128;
        while k * k <= m {
            if m % k == 0 {
                divisors.push(k);
                divisors.push(m / k);
            }
            k += 1;
        }
        divisors.sort();
        let ord = divisors
            .iter()
            .copied()
            .find(|&e| cert.field.is_one(&cert.field.pow(&cert.omega, e)))
            .unwrap();
        assert!(ord >= cert.order_lower_bound);
    }

    #[test]
    fn identity_fails_verification() {
        let cert = find_large_order(Prime::new(7).unwrap(), 100).unwrap();
        let fake = LargeOrderCert {
            field: cert.field.clone(),
            omega: cert.field.one(),
            order_lower_bound: 2,
        };
        assert!(!verify_order(&fake).unwrap());
    }

    #[test]
    fn embedded_prime_field_generator() {
        // generator of F_5^* has order 4
        let cert = prime_oracle_cert(5, 2, 4).unwrap();
        assert!(cert.order_lower_bound >= 4);
        assert!(verify_order(&cert).unwrap());
        assert!(prime_oracle_cert(5, 1, 4).is_err());
    }

    #[test]
    fn prime_oracle_mersenne() {
        // 2^31 - 1 is prime; 7 is a primitive root
        let cert = prime_oracle_cert(2_147_483_647, 7, 1 << 30).unwrap();
        assert!(cert.order_lower_bound >= 1 << 30);
    }

    #[test]
    fn every_produced_extension_is_irreducible() {
        for p in [7u64, 11, 13] {
            let cert = find_large_order(Prime::new(p).unwrap(), 100).unwrap();
            assert!(is_irreducible(Prime::new(p).unwrap(), cert.field.modulus()).unwrap());
        }
    }
}
