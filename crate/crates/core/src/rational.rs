//! Exact rational scalars.
//!
//! `Rat` is an arbitrary-precision rational kept in lowest terms with a
//! positive denominator (the backing type maintains both invariants on
//! every operation). All serialization uses decimal-free `"p/q"` strings.

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};

pub type Rat = num_rational::BigRational;

/// Integer as a rational.
pub fn rat(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

/// `n/d` as an exact rational. Panics on `d == 0`.
pub fn ratio(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

pub fn is_zero(r: &Rat) -> bool {
    r.is_zero()
}

/// Exact factorial.
pub fn factorial(n: usize) -> Rat {
    let mut acc = BigInt::one();
    for k in 2..=n {
        acc *= BigInt::from(k);
    }
    Rat::from_integer(acc)
}

/// Exact binomial coefficient `C(n, k)`.
pub fn binomial(n: usize, k: usize) -> Rat {
    if k > n {
        return Rat::zero();
    }
    let k = k.min(n - k);
    let mut num = BigInt::one();
    let mut den = BigInt::one();
    for i in 0..k {
        num *= BigInt::from(n - i);
        den *= BigInt::from(i + 1);
    }
    Rat::new(num, den)
}

/// Double factorial `(2k-1)!! = 1·3·5···(2k-1)`, the count of pairings of `2k` points.
pub fn odd_double_factorial(k: usize) -> Rat {
    let mut acc = BigInt::one();
    for j in 1..=k {
        acc *= BigInt::from(2 * j - 1);
    }
    Rat::from_integer(acc)
}

/// Render as `"p"` or `"p/q"`, never a decimal.
pub fn format_rat(r: &Rat) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Parse `"p"` or `"p/q"` with optional sign; rejects decimals and empty input.
pub fn parse_rat(s: &str) -> Result<Rat> {
    let s = s.trim();
    let (num_s, den_s) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s, "1"),
    };
    let num: BigInt = num_s
        .parse()
        .map_err(|_| Error::Parse(format!("bad rational numerator {num_s:?}")))?;
    let den: BigInt = den_s
        .parse()
        .map_err(|_| Error::Parse(format!("bad rational denominator {den_s:?}")))?;
    if den.is_zero() {
        return Err(Error::Parse(format!("zero denominator in {s:?}")));
    }
    Ok(Rat::new(num, den))
}

/// `r^k` for integer `k` (negative exponents invert; panics on `0^-k`).
pub fn pow_i(r: &Rat, k: i64) -> Rat {
    if k >= 0 {
        num_traits::pow::Pow::pow(r.clone(), k as u64)
    } else {
        num_traits::pow::Pow::pow(r.clone().recip(), (-k) as u64)
    }
}

/// Sign-stable absolute value used by pivot selection.
pub fn abs(r: &Rat) -> Rat {
    r.abs()
}
