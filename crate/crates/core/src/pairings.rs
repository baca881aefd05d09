//! Pairings (fixed-point-free involutions) and exact Gaussian moments.
//!
//! A pairing on `[1..2k]` indexes one term of Wick's theorem. All moments
//! are reported relative to the Gaussian normalization `Z₀`, which keeps
//! every value rational; positive-definiteness of the quadratic form is an
//! analytic hypothesis that plays no role in the combinatorial identities
//! and is therefore deliberately not checked.

use num_traits::Zero;

use crate::error::{Error, Result};
use crate::matrix::RatMat;
use crate::rational::Rat;

/// Default bound on the number of points a pairing enumeration may cover.
pub const DEFAULT_PAIRING_BOUND: usize = 16;

/// A pairing stored as a sorted list of disjoint `(i, j)` pairs, `i < j`,
/// covering `0..2k` exactly once.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Pairing(pub Vec<(usize, usize)>);

/// Enumerate all pairings of `0..n`. Odd `n` yields the empty list (the
/// corresponding Gaussian moment is zero); `n` beyond `bound` is an error.
pub fn enumerate_pairings(n: usize, bound: usize) -> Result<Vec<Pairing>> {
    if n > bound {
        return Err(Error::Capacity {
            what: "pairing enumeration",
            requested: n,
            limit: bound,
        });
    }
    if n % 2 != 0 {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    let mut unused: Vec<usize> = (0..n).collect();
    let mut current = Vec::new();
    recurse(&mut unused, &mut current, &mut out);
    Ok(out)
}

fn recurse(unused: &mut Vec<usize>, current: &mut Vec<(usize, usize)>, out: &mut Vec<Pairing>) {
    if unused.is_empty() {
        out.push(Pairing(current.clone()));
        return;
    }
    let first = unused[0];
    for idx in 1..unused.len() {
        let partner = unused[idx];
        let mut rest = unused.clone();
        rest.remove(idx);
        rest.remove(0);
        current.push((first, partner));
        recurse(&mut rest, current, out);
        current.pop();
    }
}

/// Normalized Gaussian moment
/// `Z₀⁻¹ ∫ l₁(x)⋯l_N(x) e^{-B(x,x)/2} dx = Σ_pairings Π B⁻¹(l_i, l_j)`,
/// computed over all pairings of the `N` covectors. Zero for odd `N`,
/// one for `N = 0`.
pub fn wick_moment(binv: &RatMat, forms: &[Vec<Rat>]) -> Result<Rat> {
    let d = binv.rows();
    if !binv.is_square() || !binv.is_symmetric() {
        return Err(Error::Precondition(
            "B⁻¹ must be a square symmetric matrix".into(),
        ));
    }
    for (i, l) in forms.iter().enumerate() {
        if l.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "covector {i} has length {}, expected {d}",
                l.len()
            )));
        }
    }
    if forms.len() % 2 != 0 {
        return Ok(Rat::zero());
    }
    // pair covector 0 with each partner, recursing on the remainder
    fn go(binv: &RatMat, forms: &[&Vec<Rat>]) -> Rat {
        if forms.is_empty() {
            return Rat::from_integer(1.into());
        }
        let mut acc = Rat::zero();
        for j in 1..forms.len() {
            let w = pair_value(binv, forms[0], forms[j]);
            if w.is_zero() {
                continue;
            }
            let rest: Vec<&Vec<Rat>> = forms[1..]
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != j - 1)
                .map(|(_, f)| *f)
                .collect();
            acc += w * go(binv, &rest);
        }
        acc
    }
    let refs: Vec<&Vec<Rat>> = forms.iter().collect();
    Ok(go(binv, &refs))
}

/// `B⁻¹(l, m) = lᵀ B⁻¹ m`.
pub fn pair_value(binv: &RatMat, l: &[Rat], m: &[Rat]) -> Rat {
    let mut acc = Rat::zero();
    for i in 0..binv.rows() {
        if l[i].is_zero() {
            continue;
        }
        for j in 0..binv.cols() {
            if !m[j].is_zero() {
                acc += &l[i] * binv.get(i, j) * &m[j];
            }
        }
    }
    acc
}

/// Gaussian moments of coordinate-exponent profiles: `E[Π x_i^{c_i}]` under
/// the normalized measure, by the Isserlis recursion with memoization. This
/// is the workhorse of the multinomial partition-function oracle.
pub struct MomentTable<'a> {
    binv: &'a RatMat,
    memo: std::collections::HashMap<Vec<u32>, Rat>,
}

impl<'a> MomentTable<'a> {
    pub fn new(binv: &'a RatMat) -> Self {
        MomentTable {
            binv,
            memo: std::collections::HashMap::new(),
        }
    }

    pub fn moment(&mut self, profile: &[u32]) -> Rat {
        let total: u32 = profile.iter().sum();
        if total == 0 {
            return Rat::from_integer(1.into());
        }
        if total % 2 != 0 {
            return Rat::zero();
        }
        if let Some(v) = self.memo.get(profile) {
            return v.clone();
        }
        let i = profile.iter().position(|&c| c > 0).unwrap();
        let mut rest = profile.to_vec();
        rest[i] -= 1;
        // pair one x_i factor against each remaining factor
        let mut acc = Rat::zero();
        for j in 0..rest.len() {
            if rest[j] == 0 {
                continue;
            }
            let w = self.binv.get(i, j);
            if w.is_zero() {
                continue;
            }
            let mult = Rat::from_integer((rest[j] as i64).into());
            let mut sub = rest.clone();
            sub[j] -= 1;
            acc += w * mult * self.moment(&sub);
        }
        self.memo.insert(profile.to_vec(), acc.clone());
        acc
    }
}
