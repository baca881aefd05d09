//! Sparse multivariate polynomials over exact rationals, with finite Laurent
//! coefficients in the formal parameter `ħ`.
//!
//! A [`QSeries`] is the universal carrier for potentials, operator symbols,
//! and expansion results. Terms are keyed by a canonically ordered monomial
//! (mode-major, then basis index) plus an `ħ` exponent, so iteration order
//! and hence all printed output is deterministic.
//!
//! Truncation is explicit metadata: every value carries its caps, binary
//! operations intersect the caps of their operands, and operations never
//! silently extend caps. The `truncated` flag records that some computed
//! term fell outside the caps of a value during an operation that the
//! caller may need to audit (operator application, mode overflow, `ħ`
//! shifts); plain ring arithmetic only propagates the flag.

use std::collections::BTreeMap;

use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::matrix::RatMat;
use crate::rational::{rat, Rat};

/// One formal variable `q^basis_mode`. Finite-dimensional contexts use
/// `mode = 0` throughout; loop contexts run modes up to a configured cap.
/// The derived ordering is mode-major, then basis.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct VarIndex {
    pub mode: u16,
    /// 1-based basis index.
    pub basis: u16,
}

impl VarIndex {
    pub fn new(mode: u16, basis: u16) -> Self {
        VarIndex { mode, basis }
    }

    /// Finite-dimensional variable `q^basis`.
    pub fn flat(basis: u16) -> Self {
        VarIndex { mode: 0, basis }
    }
}

/// Reserved mode for formal Novikov variables `Q_i`; these never occur
/// inside a [`QSeries`], only in operator symbols.
pub const NOVIKOV_MODE: u16 = u16::MAX;

/// A monomial: sorted variable/exponent pairs, no zero exponents.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
pub struct Monomial(Vec<(VarIndex, u32)>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn var(v: VarIndex) -> Self {
        Monomial(vec![(v, 1)])
    }

    /// Normalize an arbitrary factor list into a monomial.
    pub fn from_factors(mut factors: Vec<(VarIndex, u32)>) -> Self {
        factors.retain(|&(_, e)| e > 0);
        factors.sort_by_key(|&(v, _)| v);
        let mut out: Vec<(VarIndex, u32)> = Vec::with_capacity(factors.len());
        for (v, e) in factors {
            match out.last_mut() {
                Some((lv, le)) if *lv == v => *le += e,
                _ => out.push((v, e)),
            }
        }
        Monomial(out)
    }

    pub fn factors(&self) -> &[(VarIndex, u32)] {
        &self.0
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|&(_, e)| e).sum()
    }

    pub fn exponent_of(&self, v: VarIndex) -> u32 {
        self.0
            .iter()
            .find(|&&(w, _)| w == v)
            .map_or(0, |&(_, e)| e)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut f = self.0.clone();
        f.extend_from_slice(&other.0);
        Monomial::from_factors(f)
    }

    /// Divide by `v^1`; `None` if `v` does not occur.
    fn div_var(&self, v: VarIndex) -> Option<Monomial> {
        let pos = self.0.iter().position(|&(w, _)| w == v)?;
        let mut f = self.0.clone();
        if f[pos].1 == 1 {
            f.remove(pos);
        } else {
            f[pos].1 -= 1;
        }
        Some(Monomial(f))
    }
}

/// Variable universe: basis indices `1..=n`, modes `0..=k_max`.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash)]
pub struct VarSpace {
    pub n: u16,
    pub k_max: u16,
}

impl VarSpace {
    pub fn flat(n: u16) -> Self {
        VarSpace { n, k_max: 0 }
    }

    pub fn looped(n: u16, k_max: u16) -> Self {
        VarSpace { n, k_max }
    }

    pub fn contains(&self, v: VarIndex) -> bool {
        v.basis >= 1 && v.basis <= self.n && v.mode <= self.k_max
    }

    /// All variables of the universe in canonical order.
    pub fn all_vars(&self) -> Vec<VarIndex> {
        let mut out = Vec::new();
        for mode in 0..=self.k_max {
            for basis in 1..=self.n {
                out.push(VarIndex { mode, basis });
            }
        }
        out
    }
}

/// Truncation caps: maximal total `q`-degree and the retained `ħ` window.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Caps {
    pub degree: u32,
    pub hbar_min: i32,
    pub hbar_max: i32,
}

impl Caps {
    pub fn new(degree: u32, hbar_min: i32, hbar_max: i32) -> Self {
        assert!(hbar_min <= hbar_max, "empty hbar window");
        Caps {
            degree,
            hbar_min,
            hbar_max,
        }
    }

    /// Degree-only caps for computations that never touch `ħ`.
    pub fn poly(degree: u32) -> Self {
        Caps::new(degree, 0, 0)
    }

    pub fn admits(&self, mono: &Monomial, hbar: i32) -> bool {
        mono.degree() <= self.degree && hbar >= self.hbar_min && hbar <= self.hbar_max
    }

    /// Componentwise intersection.
    pub fn meet(&self, other: &Caps) -> Caps {
        Caps {
            degree: self.degree.min(other.degree),
            hbar_min: self.hbar_min.max(other.hbar_min),
            hbar_max: self.hbar_max.min(other.hbar_max),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct QSeries {
    vars: VarSpace,
    caps: Caps,
    terms: BTreeMap<(Monomial, i32), Rat>,
    truncated: bool,
}

impl QSeries {
    pub fn zero(vars: VarSpace, caps: Caps) -> Self {
        QSeries {
            vars,
            caps,
            terms: BTreeMap::new(),
            truncated: false,
        }
    }

    pub fn one(vars: VarSpace, caps: Caps) -> Self {
        QSeries::constant(Rat::one(), vars, caps)
    }

    pub fn constant(c: Rat, vars: VarSpace, caps: Caps) -> Self {
        let mut s = QSeries::zero(vars, caps);
        s.add_term(Monomial::one(), 0, c);
        s
    }

    /// The variable `v` as a series.
    pub fn var(v: VarIndex, vars: VarSpace, caps: Caps) -> Self {
        assert!(vars.contains(v), "variable outside universe");
        let mut s = QSeries::zero(vars, caps);
        s.add_term(Monomial::var(v), 0, Rat::one());
        s
    }

    pub fn vars(&self) -> VarSpace {
        self.vars
    }

    pub fn caps(&self) -> Caps {
        self.caps
    }

    pub fn is_truncated(&self) -> bool {
        self.truncated
    }

    pub fn set_truncated(&mut self, flag: bool) {
        self.truncated = flag;
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, i32, &Rat)> {
        self.terms.iter().map(|((m, h), c)| (m, *h, c))
    }

    pub fn coeff(&self, mono: &Monomial, hbar: i32) -> Rat {
        self.terms
            .get(&(mono.clone(), hbar))
            .cloned()
            .unwrap_or_else(Rat::zero)
    }

    /// Add `c * mono * ħ^hbar`, pruning zeros and honoring caps.
    pub fn add_term(&mut self, mono: Monomial, hbar: i32, c: Rat) {
        if c.is_zero() {
            return;
        }
        if !self.caps.admits(&mono, hbar) {
            return;
        }
        debug_assert!(
            mono.factors().iter().all(|&(v, _)| self.vars.contains(v)),
            "monomial outside variable universe"
        );
        let entry = self.terms.entry((mono, hbar)).or_insert_with(Rat::zero);
        *entry += c;
        if entry.is_zero() {
            // remove the now-zero slot to keep the no-zero-coefficient invariant
            let key = self
                .terms
                .iter()
                .find(|(_, v)| v.is_zero())
                .map(|(k, _)| k.clone());
            if let Some(k) = key {
                self.terms.remove(&k);
            }
        }
    }

    fn check_compatible(&self, other: &QSeries) -> Result<()> {
        if self.vars != other.vars {
            return Err(Error::DimensionMismatch(format!(
                "variable universes differ: {:?} vs {:?}",
                self.vars, other.vars
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &QSeries) -> Result<QSeries> {
        self.check_compatible(other)?;
        let caps = self.caps.meet(&other.caps);
        let mut out = QSeries::zero(self.vars, caps);
        out.truncated = self.truncated || other.truncated;
        for ((m, h), c) in &self.terms {
            out.add_term(m.clone(), *h, c.clone());
        }
        for ((m, h), c) in &other.terms {
            out.add_term(m.clone(), *h, c.clone());
        }
        Ok(out)
    }

    pub fn sub(&self, other: &QSeries) -> Result<QSeries> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> QSeries {
        self.scale(&-Rat::one())
    }

    pub fn scale(&self, s: &Rat) -> QSeries {
        let mut out = QSeries::zero(self.vars, self.caps);
        out.truncated = self.truncated;
        if s.is_zero() {
            return out;
        }
        for ((m, h), c) in &self.terms {
            out.terms.insert((m.clone(), *h), c * s);
        }
        out
    }

    pub fn mul(&self, other: &QSeries) -> Result<QSeries> {
        self.check_compatible(other)?;
        let caps = self.caps.meet(&other.caps);
        let mut out = QSeries::zero(self.vars, caps);
        out.truncated = self.truncated || other.truncated;
        for ((m1, h1), c1) in &self.terms {
            let d1 = m1.degree();
            if d1 > caps.degree {
                continue;
            }
            for ((m2, h2), c2) in &other.terms {
                let h = h1 + h2;
                if h < caps.hbar_min || h > caps.hbar_max || d1 + m2.degree() > caps.degree {
                    continue;
                }
                out.add_term(m1.mul(m2), h, c1 * c2);
            }
        }
        Ok(out)
    }

    /// Multiply by `ħ^k`. Terms pushed outside the `ħ` window are dropped
    /// and flagged.
    pub fn hbar_shift(&self, k: i32) -> QSeries {
        let mut out = QSeries::zero(self.vars, self.caps);
        out.truncated = self.truncated;
        for ((m, h), c) in &self.terms {
            let nh = h + k;
            if nh < self.caps.hbar_min || nh > self.caps.hbar_max {
                out.truncated = true;
                continue;
            }
            out.terms.insert((m.clone(), nh), c.clone());
        }
        out
    }

    /// Exact partial derivative with respect to `v`.
    pub fn differentiate(&self, v: VarIndex) -> QSeries {
        let mut out = QSeries::zero(self.vars, self.caps);
        out.truncated = self.truncated;
        for ((m, h), c) in &self.terms {
            let e = m.exponent_of(v);
            if e == 0 {
                continue;
            }
            let dm = m.div_var(v).expect("exponent > 0");
            out.add_term(dm, *h, c * rat(e as i64));
        }
        out
    }

    /// Re-truncate to tighter caps.
    pub fn truncate_to(&self, caps: Caps) -> QSeries {
        let mut out = QSeries::zero(self.vars, caps);
        out.truncated = self.truncated;
        for ((m, h), c) in &self.terms {
            out.add_term(m.clone(), *h, c.clone());
        }
        out
    }

    /// Reinterpret in a different (usually wider) universe and caps without
    /// touching terms that fit; terms that no longer fit are dropped.
    pub fn with_context(&self, vars: VarSpace, caps: Caps) -> QSeries {
        let mut out = QSeries::zero(vars, caps);
        out.truncated = self.truncated;
        for ((m, h), c) in &self.terms {
            if m.factors().iter().all(|&(v, _)| vars.contains(v)) {
                out.add_term(m.clone(), *h, c.clone());
            }
        }
        out
    }

    /// Keep only terms satisfying the predicate. Used for mid-pipeline
    /// pruning of slots that provably cannot reach the output window.
    pub fn retain<F: Fn(&Monomial, i32) -> bool>(&self, pred: F) -> QSeries {
        let mut out = QSeries::zero(self.vars, self.caps);
        out.truncated = self.truncated;
        for ((m, h), c) in &self.terms {
            if pred(m, *h) {
                out.terms.insert((m.clone(), *h), c.clone());
            }
        }
        out
    }

    /// The sub-series at a fixed `ħ` exponent, with the `ħ` factor removed.
    pub fn hbar_slice(&self, hbar: i32) -> QSeries {
        let mut out = QSeries::zero(self.vars, self.caps);
        for ((m, h), c) in &self.terms {
            if *h == hbar {
                out.terms.insert((m.clone(), 0), c.clone());
            }
        }
        out
    }

    /// Occupied `ħ` exponents in increasing order.
    pub fn hbar_support(&self) -> Vec<i32> {
        let mut hs: Vec<i32> = self.terms.keys().map(|&(_, h)| h).collect();
        hs.sort_unstable();
        hs.dedup();
        hs
    }

    /// Drop `q`-independent terms (any `ħ` power). Potentials are defined
    /// only up to such constants.
    pub fn strip_q_constants(&self) -> QSeries {
        let mut out = self.clone();
        out.terms.retain(|(m, _), _| !m.is_one());
        out
    }

    /// Minimal total `q`-degree over all terms (`None` when zero).
    pub fn min_degree(&self) -> Option<u32> {
        self.terms.keys().map(|(m, _)| m.degree()).min()
    }

    /// Exact evaluation at a rational point; variables absent from `point`
    /// evaluate to zero. `ħ` must not occur (use `hbar_slice` first).
    pub fn eval(&self, point: &BTreeMap<VarIndex, Rat>) -> Result<Rat> {
        let mut acc = Rat::zero();
        for ((m, h), c) in &self.terms {
            if *h != 0 {
                return Err(Error::Precondition(
                    "eval on a series with nonzero ħ exponents".into(),
                ));
            }
            let mut t = c.clone();
            for &(v, e) in m.factors() {
                let x = point.get(&v).cloned().unwrap_or_else(Rat::zero);
                t *= crate::rational::pow_i(&x, e as i64);
            }
            acc += t;
        }
        Ok(acc)
    }

    /// Equality of all `q`-dependent terms; `q`-independent constants are
    /// allowed to differ in every `ħ` degree.
    pub fn eq_modulo_constants(&self, other: &QSeries) -> bool {
        self.strip_q_constants().terms == other.strip_q_constants().terms
    }

    /// Every term must either carry positive `q`-degree or strictly positive
    /// `ħ` order; this makes the Taylor sums of `exp`/`log` finite under the
    /// caps (each power escapes through the degree cap or the `ħ` window).
    fn check_graded_valuation(&self, what: &str) -> Result<()> {
        for ((m, h), _) in &self.terms {
            if m.degree() == 0 && *h <= 0 {
                return Err(Error::Valuation(format!(
                    "{what}: term with q-degree 0 and ħ^{h} makes the Taylor sum \
                     nonterminating under truncation"
                )));
            }
        }
        Ok(())
    }

    /// Truncated Taylor exponential. Requires the graded-valuation
    /// precondition (see [`QSeries::check_graded_valuation`]).
    pub fn series_exp(&self) -> Result<QSeries> {
        self.check_graded_valuation("exp")?;
        let mut acc = QSeries::one(self.vars, self.caps);
        acc.truncated = self.truncated;
        let mut term = QSeries::one(self.vars, self.caps);
        let guard = self.iteration_guard();
        for k in 1..=guard {
            term = term.mul(self)?.scale(&rat(k as i64).recip());
            if term.is_zero() {
                return Ok(acc);
            }
            acc = acc.add(&term)?;
        }
        Err(Error::IterationLimit { limit: guard })
    }

    /// Truncated Mercator logarithm; the constant term must be exactly 1.
    pub fn series_log(&self) -> Result<QSeries> {
        let c0 = self.coeff(&Monomial::one(), 0);
        if !c0.is_one() {
            return Err(Error::Valuation(format!(
                "log requires constant term 1, found {}",
                crate::rational::format_rat(&c0)
            )));
        }
        let mut u = self.clone();
        u.terms.remove(&(Monomial::one(), 0));
        u.check_graded_valuation("log")?;
        // log(1+u) = u - u^2/2 + u^3/3 - ...
        let mut acc = QSeries::zero(self.vars, self.caps);
        acc.truncated = self.truncated;
        let mut pow = QSeries::one(self.vars, self.caps);
        let guard = self.iteration_guard();
        for k in 1..=guard {
            pow = pow.mul(&u)?;
            if pow.is_zero() {
                return Ok(acc);
            }
            let sign = if k % 2 == 1 { 1 } else { -1 };
            acc = acc.add(&pow.scale(&crate::rational::ratio(sign, k as i64)))?;
        }
        Err(Error::IterationLimit { limit: guard })
    }

    fn iteration_guard(&self) -> usize {
        let span = (self.caps.hbar_max - self.caps.hbar_min).unsigned_abs() as usize;
        (self.caps.degree as usize + 1) * (span + 2) + 8
    }

    /// Replace each mapped variable by an affine expression; unmapped
    /// variables must exist in `out_vars` and pass through unchanged.
    pub fn substitute(&self, sub: &Substitution, out_vars: VarSpace) -> Result<QSeries> {
        let mut out = QSeries::zero(out_vars, self.caps);
        out.truncated = self.truncated;
        for ((m, h), c) in &self.terms {
            let mut piece = QSeries::constant(c.clone(), out_vars, self.caps).hbar_shift(*h);
            for &(v, e) in m.factors() {
                let factor = match sub.map.get(&v) {
                    Some(expr) => expr.to_series(out_vars, self.caps)?,
                    None => {
                        if !out_vars.contains(v) {
                            return Err(Error::DimensionMismatch(format!(
                                "unmapped variable {v:?} outside target universe"
                            )));
                        }
                        QSeries::var(v, out_vars, self.caps)
                    }
                };
                for _ in 0..e {
                    piece = piece.mul(&factor)?;
                }
            }
            out = out.add(&piece)?;
        }
        Ok(out)
    }

    /// Apply the linear change of variables `q^α ↦ Σ_β M[α][β] q^β` on the
    /// mode-0 block; `M` must be square of size `n`.
    pub fn substitute_linear(&self, m: &RatMat) -> Result<QSeries> {
        let n = self.vars.n as usize;
        if m.rows() != n || m.cols() != n {
            return Err(Error::DimensionMismatch(format!(
                "substitution matrix is {}x{}, variable block has size {n}",
                m.rows(),
                m.cols()
            )));
        }
        let sub = Substitution::from_matrix_mode(m, 0);
        self.substitute(&sub, self.vars)
    }
}

/// Affine expression `constant + Σ coeff · var` used as a substitution target.
#[derive(Clone, Debug, Default)]
pub struct AffineExpr {
    pub constant: Rat,
    pub linear: Vec<(VarIndex, Rat)>,
}

impl AffineExpr {
    pub fn var(v: VarIndex) -> Self {
        AffineExpr {
            constant: Rat::zero(),
            linear: vec![(v, Rat::one())],
        }
    }

    pub fn zero() -> Self {
        AffineExpr::default()
    }

    fn to_series(&self, vars: VarSpace, caps: Caps) -> Result<QSeries> {
        let mut s = QSeries::constant(self.constant.clone(), vars, caps);
        for (v, c) in &self.linear {
            if !vars.contains(*v) {
                return Err(Error::DimensionMismatch(format!(
                    "substitution target {v:?} outside universe"
                )));
            }
            s.add_term(Monomial::var(*v), 0, c.clone());
        }
        Ok(s)
    }
}

/// A (partial) variable substitution.
#[derive(Clone, Debug, Default)]
pub struct Substitution {
    map: BTreeMap<VarIndex, AffineExpr>,
}

impl Substitution {
    pub fn new() -> Self {
        Substitution::default()
    }

    pub fn set(&mut self, v: VarIndex, expr: AffineExpr) {
        self.map.insert(v, expr);
    }

    /// Linear substitution `q^α_mode ↦ Σ_β M[α][β] q^β_mode`.
    pub fn from_matrix_mode(m: &RatMat, mode: u16) -> Substitution {
        let mut sub = Substitution::new();
        for alpha in 0..m.rows() {
            let mut expr = AffineExpr::zero();
            for beta in 0..m.cols() {
                let c = m.get(alpha, beta);
                if !c.is_zero() {
                    expr.linear
                        .push((VarIndex::new(mode, beta as u16 + 1), c.clone()));
                }
            }
            sub.set(VarIndex::new(mode, alpha as u16 + 1), expr);
        }
        sub
    }
}

impl std::fmt::Display for QSeries {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for ((m, h), c) in &self.terms {
            if first {
                first = false;
            } else {
                write!(f, " + ")?;
            }
            write!(f, "{}", crate::rational::format_rat(c))?;
            for &(v, e) in m.factors() {
                write!(f, "*q[{},{}]", v.mode, v.basis)?;
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
