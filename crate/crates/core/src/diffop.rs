//! Normal-ordered differential operators on polynomial Fock elements.
//!
//! Every term is stored as `coeff · ħ^h · q^Q · ∂^D` with all position
//! factors preceding all derivative factors; composition re-establishes
//! this order through the Leibniz rule, so the normal-ordered invariant
//! holds by construction. Derivative factors are plain `∂/∂q`; the
//! quantized momentum `p̂ = ħ ∂/∂q` carries its `ħ` in the explicit
//! exponent.

use std::collections::BTreeMap;

use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::qseries::{Caps, Monomial, QSeries, VarIndex};
use crate::rational::{binomial, rat, Rat};

/// Key of one normal-ordered term: (position monomial, derivative
/// multi-index, `ħ` exponent).
type OpKey = (Monomial, Monomial, i32);

#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct DiffOperator {
    terms: BTreeMap<OpKey, Rat>,
}

impl DiffOperator {
    pub fn zero() -> Self {
        DiffOperator::default()
    }

    /// The identity operator (multiplication by 1).
    pub fn identity() -> Self {
        let mut d = DiffOperator::zero();
        d.add_op_term(Monomial::one(), Monomial::one(), 0, Rat::one());
        d
    }

    /// Multiplication by the variable `v`.
    pub fn position(v: VarIndex) -> Self {
        let mut d = DiffOperator::zero();
        d.add_op_term(Monomial::var(v), Monomial::one(), 0, Rat::one());
        d
    }

    /// The quantized momentum `p̂ = ħ ∂/∂q^v`.
    pub fn momentum(v: VarIndex) -> Self {
        let mut d = DiffOperator::zero();
        d.add_op_term(Monomial::one(), Monomial::var(v), 1, Rat::one());
        d
    }

    pub fn add_op_term(&mut self, q: Monomial, d: Monomial, hbar: i32, c: Rat) {
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry((q, d, hbar)).or_insert_with(Rat::zero);
        *entry += c;
        if entry.is_zero() {
            self.terms.retain(|_, v| !v.is_zero());
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Monomial, i32, &Rat)> {
        self.terms.iter().map(|((q, d, h), c)| (q, d, *h, c))
    }

    pub fn add(&self, other: &DiffOperator) -> DiffOperator {
        let mut out = self.clone();
        for ((q, d, h), c) in &other.terms {
            out.add_op_term(q.clone(), d.clone(), *h, c.clone());
        }
        out
    }

    pub fn sub(&self, other: &DiffOperator) -> DiffOperator {
        self.add(&other.scale(&-Rat::one()))
    }

    pub fn scale(&self, s: &Rat) -> DiffOperator {
        let mut out = DiffOperator::zero();
        if s.is_zero() {
            return out;
        }
        for ((q, d, h), c) in &self.terms {
            out.terms.insert((q.clone(), d.clone(), *h), c * s);
        }
        out
    }

    /// Shift every term's `ħ` exponent (multiplication by `ħ^k`).
    pub fn hbar_shift(&self, k: i32) -> DiffOperator {
        let mut out = DiffOperator::zero();
        for ((q, d, h), c) in &self.terms {
            out.terms.insert((q.clone(), d.clone(), h + k), c.clone());
        }
        out
    }

    /// Apply to a series. Produced terms that fall outside the caps of `f`
    /// are dropped and the result is flagged as truncated.
    pub fn apply(&self, f: &QSeries) -> QSeries {
        let caps = f.caps();
        let mut out = QSeries::zero(f.vars(), caps);
        out.set_truncated(f.is_truncated());
        for ((opq, opd, oph), opc) in &self.terms {
            for (m, h, c) in f.terms() {
                // ∂^D m: falling factorials, zero if any exponent is short
                let mut coeff = opc * c;
                let mut factors: Vec<(VarIndex, u32)> = Vec::new();
                let mut vanished = false;
                for &(v, de) in opd.factors() {
                    let e = m.exponent_of(v);
                    if e < de {
                        vanished = true;
                        break;
                    }
                    for i in 0..de {
                        coeff *= rat((e - i) as i64);
                    }
                }
                if vanished || coeff.is_zero() {
                    continue;
                }
                for &(v, e) in m.factors() {
                    let de = opd.exponent_of(v);
                    if e > de {
                        factors.push((v, e - de));
                    }
                }
                let mono = Monomial::from_factors(factors).mul(opq);
                let nh = h + oph;
                if !caps.admits(&mono, nh) {
                    out.set_truncated(true);
                    continue;
                }
                out.add_term(mono, nh, coeff);
            }
        }
        out
    }

    /// Operator product `self ∘ other`, re-normal-ordered via Leibniz:
    /// `∂^a (q^c · g) = Σ_j C(a,j) (c)_j q^(c-j) ∂^(a-j) g`.
    pub fn compose(&self, other: &DiffOperator) -> DiffOperator {
        let mut out = DiffOperator::zero();
        for ((q1, d1, h1), c1) in &self.terms {
            for ((q2, d2, h2), c2) in &other.terms {
                // variables where d1 and q2 interact
                let overlap: Vec<(VarIndex, u32, u32)> = d1
                    .factors()
                    .iter()
                    .filter_map(|&(v, a)| {
                        let c = q2.exponent_of(v);
                        (c > 0).then_some((v, a, c))
                    })
                    .collect();
                // iterate over transfer multi-indices j ≤ min(a, c)
                let mut j = vec![0u32; overlap.len()];
                loop {
                    let mut coeff = c1 * c2;
                    for (idx, &(_, a, c)) in overlap.iter().enumerate() {
                        let jv = j[idx];
                        coeff = coeff * binomial(a as usize, jv as usize);
                        for i in 0..jv {
                            coeff *= rat((c - i) as i64);
                        }
                    }
                    if !coeff.is_zero() {
                        let mut qf = q1.factors().to_vec();
                        for &(v, e) in q2.factors() {
                            let used = overlap
                                .iter()
                                .position(|&(w, _, _)| w == v)
                                .map_or(0, |i| j[i]);
                            if e > used {
                                qf.push((v, e - used));
                            }
                        }
                        let mut df = d2.factors().to_vec();
                        for (idx, &(v, a, _)) in overlap.iter().enumerate() {
                            if a > j[idx] {
                                df.push((v, a - j[idx]));
                            }
                        }
                        for &(v, a) in d1.factors() {
                            if !overlap.iter().any(|&(w, _, _)| w == v) {
                                df.push((v, a));
                            }
                        }
                        out.add_op_term(
                            Monomial::from_factors(qf),
                            Monomial::from_factors(df),
                            h1 + h2,
                            coeff,
                        );
                    }
                    // advance the mixed-radix counter
                    let mut k = 0;
                    loop {
                        if k == overlap.len() {
                            break;
                        }
                        let cap = overlap[k].1.min(overlap[k].2);
                        if j[k] < cap {
                            j[k] += 1;
                            break;
                        }
                        j[k] = 0;
                        k += 1;
                    }
                    if k == overlap.len() {
                        break;
                    }
                }
            }
        }
        out
    }

    pub fn commutator(&self, other: &DiffOperator) -> DiffOperator {
        self.compose(other).sub(&other.compose(self))
    }

    /// If the operator is `c · ħ^h · Id`, return `(h, c)` pairs; `None` if
    /// any non-identity term is present.
    pub fn as_scalar(&self) -> Option<Vec<(i32, Rat)>> {
        let mut out = Vec::new();
        for ((q, d, h), c) in &self.terms {
            if !q.is_one() || !d.is_one() {
                return None;
            }
            out.push((*h, c.clone()));
        }
        Some(out)
    }

    /// Truncated Taylor exponential `exp(self)` applied to `f`. Terminates
    /// when an iterate truncates to zero under the caps of `f`; errors out
    /// with `IterationLimit` if the grading of the operator does not force
    /// termination within the guard.
    pub fn exp_apply(&self, f: &QSeries, iteration_guard: usize) -> Result<QSeries> {
        let mut acc = f.clone();
        let mut term = f.clone();
        for k in 1..=iteration_guard {
            term = self.apply(&term).scale(&rat(k as i64).recip());
            if term.is_zero() {
                return Ok(acc);
            }
            acc = acc.add(&term)?;
        }
        Err(Error::IterationLimit {
            limit: iteration_guard,
        })
    }

    /// A default exponential iteration guard for the given caps: generous
    /// enough for every graded-terminating operator at desk scale.
    pub fn default_guard(caps: Caps) -> usize {
        let span = (caps.hbar_max - caps.hbar_min).unsigned_abs() as usize;
        let deg = caps.degree as usize;
        (deg + 2) * (span + 2) + deg * deg + 16
    }
}

impl std::fmt::Display for DiffOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for ((q, d, h), c) in &self.terms {
            if first {
                first = false;
            } else {
                write!(f, " + ")?;
            }
            write!(f, "{}", crate::rational::format_rat(c))?;
            for &(v, e) in q.factors() {
                write!(f, "*q[{},{}]", v.mode, v.basis)?;
                if e > 1 {
                    write!(f, "^{e}")?;
                }
            }
            for &(v, e) in d.factors() {
                write!(f, "*d[{},{}]", v.mode, v.basis)?;
                if e > 1 {
                    write!(f, "^{e}")?;
                }
            }
            if *h != 0 {
                write!(f, "*h^{h}")?;
            }
        }
        Ok(())
    }
}
