//! Quantization of quadratic observables and finite-dimensional
//! symplectomorphisms, with two independent computational routes for the
//! quantized action and the semi-classical transport check.
//!
//! Conventions (locked by tests): coordinates `(p, q)` with `p̂ = ħ∂/∂q`,
//! `q̂ = q·`; quadratic monomials quantize with positions to the left.
//! Quantized transformations are defined up to a multiplicative constant,
//! so all potential-level equalities are modulo `q`-independent constants
//! in each `ħ` degree, and the undetermined additive constant of the
//! infinitesimal generator is fixed to zero.
//!
//! Truncation bookkeeping: the pipeline grade `w(term) = 2·ħ-order +
//! q-degree` is additive under multiplication and preserved both by the
//! second-order exponential factor (`ħ` up one, degree down two) and by the
//! `ħ⁻¹`-quadratic factor (`ħ` down one, degree up two). Log-potential
//! terms all have `w ≥ 1` once `F₀` starts in degree 3 and constants are
//! stripped, so every output slot receives contributions from finitely
//! many factor combinations and the computation below is exact within its
//! grade window. This is also why degree-≤2 terms in `F₀` are rejected:
//! they sit at grade ≤ 0 and would feed single slots infinitely often.

use std::collections::BTreeMap;

use num_traits::Zero;

use crate::diffop::DiffOperator;
use crate::error::{CheckStatus, Error, Result};
use crate::feynman::{contract_graph, BANK_MODE_BASE};
use crate::graphs::{enumerate_from_vertex_types, GraphLimits};
use crate::matrix::RatMat;
use crate::qseries::{AffineExpr, Caps, Monomial, QSeries, Substitution, VarIndex, VarSpace};
use crate::rational::{rat, ratio, Rat};
use crate::symplectic::{InfinitesimalSym, SymplecticMatrix};

/// A quadratic observable `½ pᵀ(PP)p + qᵀ(QP)p + ½ qᵀ(QQ)q` with `PP`, `QQ`
/// symmetric; entry `QP[α][β]` multiplies `q^α p_β`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct QuadraticObservable {
    n: usize,
    pp: RatMat,
    qp: RatMat,
    qq: RatMat,
}

impl QuadraticObservable {
    pub fn new(pp: RatMat, qp: RatMat, qq: RatMat) -> Result<Self> {
        let n = pp.rows();
        if !pp.is_symmetric() || !qq.is_symmetric() {
            return Err(Error::Precondition(
                "PP and QQ parts of a quadratic observable must be symmetric".into(),
            ));
        }
        if qp.rows() != n || qp.cols() != n || qq.rows() != n {
            return Err(Error::DimensionMismatch(
                "quadratic observable blocks must share one size".into(),
            ));
        }
        Ok(QuadraticObservable { n, pp, qp, qq })
    }

    pub fn zero(n: usize) -> Self {
        QuadraticObservable {
            n,
            pp: RatMat::zeros(n, n),
            qp: RatMat::zeros(n, n),
            qq: RatMat::zeros(n, n),
        }
    }

    /// The monomial `p_α p_β` (1-based indices).
    pub fn monomial_pp(n: usize, alpha: usize, beta: usize) -> Self {
        let mut pp = RatMat::zeros(n, n);
        let one = rat(1);
        pp.set(alpha - 1, beta - 1, pp.get(alpha - 1, beta - 1) + &one);
        pp.set(beta - 1, alpha - 1, pp.get(beta - 1, alpha - 1) + &one);
        QuadraticObservable {
            n,
            pp,
            qp: RatMat::zeros(n, n),
            qq: RatMat::zeros(n, n),
        }
    }

    /// The monomial `q^α q^β`.
    pub fn monomial_qq(n: usize, alpha: usize, beta: usize) -> Self {
        let mut qq = RatMat::zeros(n, n);
        let one = rat(1);
        qq.set(alpha - 1, beta - 1, qq.get(alpha - 1, beta - 1) + &one);
        qq.set(beta - 1, alpha - 1, qq.get(beta - 1, alpha - 1) + &one);
        QuadraticObservable {
            n,
            pp: RatMat::zeros(n, n),
            qp: RatMat::zeros(n, n),
            qq,
        }
    }

    /// The monomial `q^α p_β`.
    pub fn monomial_qp(n: usize, alpha: usize, beta: usize) -> Self {
        let mut qp = RatMat::zeros(n, n);
        qp.set(alpha - 1, beta - 1, rat(1));
        QuadraticObservable {
            n,
            pp: RatMat::zeros(n, n),
            qp,
            qq: RatMat::zeros(n, n),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Gram matrix `S` with `f(x) = ½ xᵀ S x`, blocks ordered `(p, q)`.
    fn gram(&self) -> RatMat {
        RatMat::from_blocks(&self.pp, &self.qp.transpose(), &self.qp, &self.qq)
    }

    fn from_gram(g: &RatMat) -> Result<Self> {
        let (pp, qp_t, qp, qq) = g.split_blocks()?;
        debug_assert_eq!(qp_t, qp.transpose());
        QuadraticObservable::new(pp, qp, qq)
    }

    /// Evaluate at a phase-space point `(p, q)`.
    pub fn eval(&self, point: &[Rat]) -> Rat {
        let gx = self.gram().mul_vec(point);
        let mut acc = Rat::zero();
        for (a, b) in point.iter().zip(&gx) {
            acc += a * b;
        }
        acc * ratio(1, 2)
    }

    /// Poisson bracket `{f, g}`. On Gram matrices, `{f, g}(x) = xᵀ S_f J
    /// S_g x`, so the bracket's Gram (with the `½xᵀGx` normalization) is
    /// `S_f J S_g − S_g J S_f`.
    pub fn poisson_bracket(&self, other: &QuadraticObservable) -> Result<QuadraticObservable> {
        let j = crate::symplectic::standard_form(self.n);
        let fg = self.gram().mul(&j).mul(&other.gram());
        let gf = other.gram().mul(&j).mul(&self.gram());
        QuadraticObservable::from_gram(&fg.sub(&gf))
    }

    pub fn is_zero(&self) -> bool {
        self.pp.is_zero() && self.qp.is_zero() && self.qq.is_zero()
    }
}

/// Quantize with positions ordered to the left:
/// `Q(q^α q^β) = q^α q^β`, `Q(q^α p_β) = ħ q^α ∂_β`,
/// `Q(p_α p_β) = ħ² ∂_α ∂_β`.
pub fn quantize_quadratic(f: &QuadraticObservable) -> DiffOperator {
    let n = f.n;
    let mut op = DiffOperator::zero();
    for a in 0..n {
        for b in 0..n {
            let va = VarIndex::flat(a as u16 + 1);
            let vb = VarIndex::flat(b as u16 + 1);
            let cpp = f.pp.get(a, b);
            if !cpp.is_zero() {
                op.add_op_term(
                    Monomial::one(),
                    Monomial::from_factors(vec![(va, 1), (vb, 1)]),
                    2,
                    cpp * ratio(1, 2),
                );
            }
            let cqp = f.qp.get(a, b);
            if !cqp.is_zero() {
                op.add_op_term(Monomial::var(va), Monomial::var(vb), 1, cqp.clone());
            }
            let cqq = f.qq.get(a, b);
            if !cqq.is_zero() {
                op.add_op_term(
                    Monomial::from_factors(vec![(va, 1), (vb, 1)]),
                    Monomial::one(),
                    0,
                    cqq * ratio(1, 2),
                );
            }
        }
    }
    op
}

/// `[Q(f), Q(g)] = ħ Q({f, g}) + ħ² 𝒞(f, g)`: returns the Poisson bracket
/// and the scalar cocycle defect. A residual that is not a multiple of
/// `ħ²·Id` would indicate a quantization bug and trips an internal error.
pub fn commutator_with_cocycle(
    f: &QuadraticObservable,
    g: &QuadraticObservable,
) -> Result<(QuadraticObservable, Rat)> {
    let comm = quantize_quadratic(f).commutator(&quantize_quadratic(g));
    let bracket = f.poisson_bracket(g)?;
    let residual = comm.sub(&quantize_quadratic(&bracket).hbar_shift(1));
    let scalar = residual.as_scalar().ok_or_else(|| {
        Error::Internal("commutator residual is not a scalar operator".into())
    })?;
    let mut cocycle = Rat::zero();
    for (h, c) in scalar {
        if h != 2 {
            return Err(Error::Internal(format!(
                "commutator residual carries ħ^{h}, expected ħ²"
            )));
        }
        cocycle = c;
    }
    Ok((bracket, cocycle))
}

/// The quadratic Hamiltonian `h_F(v) = ½⟨Fv, v⟩` of an infinitesimal
/// symplectic transformation as an observable: `PP = −c`, `QP = a`,
/// `QQ = b`.
pub fn hamiltonian_observable(f: &InfinitesimalSym) -> QuadraticObservable {
    QuadraticObservable {
        n: f.n(),
        pp: f.c().neg(),
        qp: f.a().clone(),
        qq: f.b().clone(),
    }
}

/// The infinitesimal generator of the quantized flow,
/// `u = (1/ħ) Q(h_F) = −(ħ/2) c^{αβ} ∂_α∂_β + a^β_α q^α ∂_β
///     + (1/2ħ) b_{αβ} q^α q^β`
/// (the undetermined additive constant is set to zero).
pub fn infinitesimal_quantization(f: &InfinitesimalSym) -> DiffOperator {
    quantize_quadratic(&hamiltonian_observable(f)).hbar_shift(-1)
}

/// A log-potential: one polynomial `F_g` per genus, representing
/// `exp(Σ_g ħ^{g−1} F_g)`. All genus slices share one variable universe and
/// caps; `ħ` never occurs inside a slice.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Potential {
    vars: VarSpace,
    caps: Caps,
    genus: BTreeMap<u32, QSeries>,
}

impl Potential {
    /// `caps.degree` bounds each `F_g`; `caps.hbar_max + 1` is the genus
    /// ceiling carried along (`F_g` is kept for `g − 1 ≤ hbar_max`).
    pub fn new(vars: VarSpace, caps: Caps) -> Self {
        Potential {
            vars,
            caps,
            genus: BTreeMap::new(),
        }
    }

    /// Convenience: caps for potentials with genus ≤ `g_max`, degree ≤ `d`.
    pub fn standard_caps(d: u32, g_max: u32) -> Caps {
        Caps::new(d, -1, g_max as i32 - 1)
    }

    pub fn vars(&self) -> VarSpace {
        self.vars
    }

    pub fn caps(&self) -> Caps {
        self.caps
    }

    pub fn g_max(&self) -> u32 {
        (self.caps.hbar_max + 1) as u32
    }

    pub fn set_genus(&mut self, g: u32, f: QSeries) -> Result<()> {
        if f.vars() != self.vars {
            return Err(Error::DimensionMismatch(
                "potential slice in a different variable universe".into(),
            ));
        }
        if !f.hbar_support().iter().all(|&h| h == 0) {
            return Err(Error::Precondition(
                "potential slices must be ħ-free polynomials".into(),
            ));
        }
        let f = f.truncate_to(Caps::new(self.caps.degree, 0, 0));
        if f.is_zero() {
            self.genus.remove(&g);
        } else {
            self.genus.insert(g, f);
        }
        Ok(())
    }

    pub fn genus(&self, g: u32) -> Option<&QSeries> {
        self.genus.get(&g)
    }

    pub fn genus_or_zero(&self, g: u32) -> QSeries {
        self.genus
            .get(&g)
            .cloned()
            .unwrap_or_else(|| QSeries::zero(self.vars, Caps::new(self.caps.degree, 0, 0)))
    }

    pub fn genus_slices(&self) -> impl Iterator<Item = (u32, &QSeries)> {
        self.genus.iter().map(|(&g, f)| (g, f))
    }

    /// Drop `q`-independent constants from every slice.
    pub fn strip_constants(&self) -> Potential {
        let mut out = Potential::new(self.vars, self.caps);
        for (&g, f) in &self.genus {
            out.set_genus(g, f.strip_q_constants()).expect("same universe");
        }
        out
    }

    /// `Σ_g ħ^{g−1} F_g` in the given working context, constants stripped.
    pub fn log_series(&self, vars: VarSpace, caps: Caps) -> QSeries {
        let mut acc = QSeries::zero(vars, caps);
        for (&g, f) in &self.genus {
            let shifted = f
                .strip_q_constants()
                .with_context(vars, caps)
                .hbar_shift(g as i32 - 1);
            acc = acc.add(&shifted).expect("same universe");
        }
        acc
    }

    /// Materialize `exp(Σ ħ^{g−1} F_g)` in a working context.
    pub fn materialize_exp(&self, vars: VarSpace, caps: Caps) -> Result<QSeries> {
        self.log_series(vars, caps).series_exp()
    }

    /// Recover genus slices from a log-series, truncating to `caps`.
    pub fn from_log_series(s: &QSeries, vars: VarSpace, caps: Caps) -> Result<Potential> {
        let mut out = Potential::new(vars, caps);
        for h in s.hbar_support() {
            let g = h + 1;
            if g < 0 || g as u32 > out.g_max() {
                continue;
            }
            let slice = s
                .hbar_slice(h)
                .strip_q_constants()
                .with_context(vars, Caps::new(caps.degree, 0, 0));
            if !slice.is_zero() {
                out.set_genus(g as u32, slice)?;
            }
        }
        Ok(out)
    }

    /// Equality modulo `q`-independent constants per genus.
    pub fn eq_modulo_constants(&self, other: &Potential) -> bool {
        let gs: std::collections::BTreeSet<u32> = self
            .genus
            .keys()
            .chain(other.genus.keys())
            .copied()
            .collect();
        gs.into_iter().all(|g| {
            self.genus_or_zero(g)
                .eq_modulo_constants(&other.genus_or_zero(g))
        })
    }

    /// Minimal `q`-degree of `F₀` (`None` when `F₀` vanishes).
    pub fn f0_min_degree(&self) -> Option<u32> {
        self.genus.get(&0).and_then(|f| f.strip_q_constants().min_degree())
    }
}

/// The quadratic form `scale · ½ (Mq)·q` as a series at `ħ^hbar`.
pub fn quadratic_form_series(
    m: &RatMat,
    scale: &Rat,
    hbar: i32,
    vars: VarSpace,
    caps: Caps,
) -> QSeries {
    let mut out = QSeries::zero(vars, caps);
    for a in 0..m.rows() {
        for b in 0..m.cols() {
            let c = m.get(a, b);
            if c.is_zero() {
                continue;
            }
            let mono = Monomial::from_factors(vec![
                (VarIndex::flat(a as u16 + 1), 1),
                (VarIndex::flat(b as u16 + 1), 1),
            ]);
            out.add_term(mono, hbar, c * scale * ratio(1, 2));
        }
    }
    out
}

/// Working context for the quantized-action pipelines: grade window
/// `W = 2·hbar_max + degree`, rectangular caps wide enough to hold every
/// slot of grade ≤ `W` that satisfies the cubic bound `ħ ≥ −deg/3`.
fn working_context(vars: VarSpace, out_caps: Caps) -> (Caps, i64) {
    let w = 2 * out_caps.hbar_max.max(0) as i64 + out_caps.degree as i64;
    let degree = (3 * w).max(out_caps.degree as i64) as u32;
    let hbar_min = -(w as i32) - 1;
    let hbar_max = (w as i32) / 2 + 1 + out_caps.hbar_max.max(0);
    let _ = vars;
    (Caps::new(degree, hbar_min, hbar_max), w)
}

fn prune_grade(s: &QSeries, w: i64) -> QSeries {
    s.retain(|m, h| 2 * h as i64 + m.degree() as i64 <= w)
}

/// The second-order phase (edge contractions) collects infinitely many
/// contributions per `ħ`-slot when `F₀` has terms of degree ≤ 2, so that
/// phase requires a cubic bound. Transformations with `C = 0` have no such
/// phase and act exactly on any admissible potential.
fn require_cubic_f0(psi: &Potential) -> Result<()> {
    if let Some(d) = psi.f0_min_degree() {
        if d < 3 {
            return Err(Error::Precondition(format!(
                "F₀ must have no terms of q-degree < 3 (found degree {d}); \
                 such terms make single ħ-slots collect infinitely many \
                 contributions under the quantized action of a map with C ≠ 0"
            )));
        }
    }
    Ok(())
}

/// Quantized action of `T` on a log-potential via the closed operator
/// formula: substitute `q ↦ D⁻¹q`, apply
/// `exp(−(ħ/2)(DCᵀ∂)·∂)`, multiply by `exp((1/2ħ)(BD⁻¹q)·q)`.
/// The result is defined up to an additive constant per genus; constants
/// are stripped.
pub fn apply_ut_ccr(t: &SymplecticMatrix, psi: &Potential) -> Result<Potential> {
    if !t.c().is_zero() {
        require_cubic_f0(psi)?;
    }
    let d_inv = t
        .d()
        .inverse()
        .map_err(|_| Error::Singular("block D of the transformation".into()))?;
    let vars = psi.vars();
    let out_caps = psi.caps();
    let (wcaps, w) = working_context(vars, out_caps);

    // ψ(D⁻¹q) on the log level, then materialize
    let log = psi.log_series(vars, wcaps);
    let log_sub = log.substitute_linear(&d_inv)?;
    let mut state = prune_grade(&log_sub.series_exp()?, w);

    // middle factor: exp(−(ħ/2) (DCᵀ ∂)·∂)
    let dct = t.d().mul(&t.c().transpose());
    if !dct.is_zero() {
        let mut e = DiffOperator::zero();
        for a in 0..dct.rows() {
            for b in 0..dct.cols() {
                let c = dct.get(a, b);
                if c.is_zero() {
                    continue;
                }
                e.add_op_term(
                    Monomial::one(),
                    Monomial::from_factors(vec![
                        (VarIndex::flat(a as u16 + 1), 1),
                        (VarIndex::flat(b as u16 + 1), 1),
                    ]),
                    1,
                    c * ratio(-1, 2),
                );
            }
        }
        state = prune_grade(
            &e.exp_apply(&state, DiffOperator::default_guard(wcaps))?,
            w,
        );
    }

    // only slots that can still flow into the output window through the
    // remaining phases matter. Every state slot obeys h ≥ −d/2 (exp factors
    // carry h ≥ −d/3, quadratic factors sit exactly at h = −d/2, and the
    // second-order phase preserves the bound), so grades 2h + d are ≥ 0 and
    // additive; a slot is a useful log factor only if d ≤ D and its grade
    // does not exceed the full output budget 2·hbar_max + 2D (quadratic
    // powers can still lower ħ by up to D/2).
    let (hmin_f, hmax_f) = (out_caps.hbar_min, out_caps.hbar_max);
    let d_cap = out_caps.degree;
    state = state.retain(|m, h| {
        let d = m.degree();
        d <= d_cap && 2 * h + d as i32 <= 2 * hmax_f + 2 * d_cap as i32
    });

    // outer factor: exp((1/2ħ)(BD⁻¹q)·q)
    let bd_inv = t.b().mul(&d_inv);
    if !bd_inv.is_zero() {
        let quad = quadratic_form_series(&bd_inv, &rat(1), -1, vars, wcaps);
        state = state.mul(&quad.series_exp()?)?;
    }
    // shrink the caps themselves so the logarithm's powers cannot regrow
    // into the wide working window: the floor covers the structural
    // h ≥ −d/2, the ceiling covers factors whose positive ħ is absorbed by
    // ħ-lowering partners in the same product
    let log_floor = hmin_f.min(-(d_cap as i32)) - 1;
    let log_ceiling = hmax_f + d_cap as i32 / 2 + 1;
    state = state.truncate_to(Caps::new(d_cap, log_floor, log_ceiling));

    Potential::from_log_series(&state.series_log()?, vars, out_caps)
}

/// Quantized action of `T` via the connected-graph expansion: vertex
/// tensors are the Taylor blocks of `F_g` at `D⁻¹q`, edges contract with
/// `−D⁻¹C`, each connected genus-`g` class contributes `F_Γ(q)/|Aut Γ|` to
/// the new `F_g`, and `½(BD⁻¹q)·q` shifts the genus-0 part.
pub fn apply_ut_graphs(
    t: &SymplecticMatrix,
    psi: &Potential,
    limits: &GraphLimits,
) -> Result<Potential> {
    let d_inv = t
        .d()
        .inverse()
        .map_err(|_| Error::Singular("block D of the transformation".into()))?;
    let vars = psi.vars();
    let out_caps = psi.caps();
    let n = vars.n;
    if t.c().is_zero() {
        // zero edge form: only edgeless graphs contribute, i.e. plain
        // substitution plus the genus-0 quadratic shift
        let mut out = Potential::new(vars, out_caps);
        for (g, f) in psi.genus_slices() {
            out.set_genus(g, f.substitute_linear(&d_inv)?.strip_q_constants())?;
        }
        let bd_inv = t.b().mul(&d_inv);
        if !bd_inv.is_zero() {
            let quad =
                quadratic_form_series(&bd_inv, &rat(1), 0, vars, Caps::new(out_caps.degree, 0, 0));
            let f0 = out.genus_or_zero(0).add(&quad)?;
            out.set_genus(0, f0)?;
        }
        return Ok(out);
    }
    require_cubic_f0(psi)?;
    let w = 2 * out_caps.hbar_max.max(0) as i64 + out_caps.degree as i64;
    let edge_form = d_inv.mul(t.c()).neg();

    // Taylor blocks of each genus slice at D⁻¹q + x, per candidate valence.
    // taylor[g][m] is homogeneous of degree m in a template x-bank and
    // carries the q-dependence through D⁻¹q.
    let g_ceiling = psi.g_max();
    let mut vertex_types: Vec<(u32, u32)> = Vec::new();
    let mut taylor: BTreeMap<(u32, u32), QSeries> = BTreeMap::new();
    let template_bank = BANK_MODE_BASE;
    let max_m = (w + 2) as u32; // vertex weight ≥ m − 2 bounds usable valence
    let tvars = VarSpace { n, k_max: template_bank + 1 };
    let tcaps = Caps::new(out_caps.degree + max_m, 0, 0);
    for (g, f) in psi.genus_slices() {
        let f = f.strip_q_constants().with_context(tvars, tcaps);
        // substitute q^α ↦ (D⁻¹q)^α + x^α
        let mut sub = Substitution::new();
        for alpha in 0..n as usize {
            let mut expr = AffineExpr::zero();
            for beta in 0..n as usize {
                let c = d_inv.get(alpha, beta);
                if !c.is_zero() {
                    expr.linear.push((VarIndex::flat(beta as u16 + 1), c.clone()));
                }
            }
            expr.linear
                .push((VarIndex::new(template_bank, alpha as u16 + 1), rat(1)));
            sub.set(VarIndex::flat(alpha as u16 + 1), expr);
        }
        let shifted = f.substitute(&sub, tvars)?;
        for m in 0..=max_m {
            let block = shifted.retain(|mono, _| {
                mono.factors()
                    .iter()
                    .filter(|&&(v, _)| v.mode == template_bank)
                    .map(|&(_, e)| e)
                    .sum::<u32>()
                    == m
            });
            if block.is_zero() {
                continue;
            }
            // weight 2g − 2 + m + (minimal q-degree) must be ≥ 1 and
            // bounds the enumeration budget
            let q_min = block
                .terms()
                .map(|(mono, _, _)| {
                    mono.factors()
                        .iter()
                        .filter(|&&(v, _)| v.mode == 0)
                        .map(|&(_, e)| e)
                        .sum::<u32>()
                })
                .min()
                .unwrap_or(0);
            let weight = 2 * g as i64 - 2 + m as i64 + q_min as i64;
            debug_assert!(weight >= 1, "vertex type (g={g}, m={m}) under-graded");
            if weight <= w {
                vertex_types.push((g, m));
                taylor.insert((g, m), block);
            }
        }
    }

    let mut out = Potential::new(vars, out_caps);
    let mut accum: BTreeMap<u32, QSeries> = BTreeMap::new();
    // weights for the multiset budget: include the minimal q-degree so the
    // recursion cannot run away on low-valence vertex types
    let q_mins: BTreeMap<(u32, u32), i64> = vertex_types
        .iter()
        .map(|&(g, m)| {
            let q_min = taylor[&(g, m)]
                .terms()
                .map(|(mono, _, _)| {
                    mono.factors()
                        .iter()
                        .filter(|&&(v, _)| v.mode == 0)
                        .map(|&(_, e)| e)
                        .sum::<u32>()
                })
                .min()
                .unwrap_or(0);
            ((g, m), q_min as i64)
        })
        .collect();
    let weighted: Vec<((u32, u32), i64)> = vertex_types
        .iter()
        .map(|&(g, m)| ((g, m), 2 * g as i64 - 2 + m as i64 + q_mins[&(g, m)]))
        .collect();
    // retargeted vertex polynomials are shared across classes
    let mut retarget_cache: std::collections::HashMap<(u32, u32, usize), QSeries> =
        std::collections::HashMap::new();
    for types in weighted_type_multisets(&weighted, w) {
        if types.is_empty() {
            continue;
        }
        let halfedges: u32 = types.iter().map(|&(_, m)| m).sum();
        if halfedges % 2 != 0 || halfedges as usize > limits.halfedge_bound {
            continue;
        }
        // connected classes need |E| ≥ |V| − 1 and the multiset pins the
        // genus exactly: g = Σg_v + |E| − |V| + 1
        let nv = types.len() as i64;
        let ne = halfedges as i64 / 2;
        if ne < nv - 1 {
            continue;
        }
        let genus = types.iter().map(|&(g, _)| g as i64).sum::<i64>() + ne - nv + 1;
        if genus < 0 || genus > g_ceiling as i64 {
            continue;
        }
        let q_floor: i64 = types.iter().map(|t| q_mins[t]).sum();
        if q_floor > out_caps.degree as i64 {
            continue;
        }
        for class in enumerate_from_vertex_types(&types, limits)? {
            if !class.graph.is_connected() {
                continue;
            }
            let genus = class.graph.connected_genus();
            if genus < 0 || genus as u32 > g_ceiling {
                continue;
            }
            let nv = class.graph.num_vertices();
            let max_nv = types.len();
            let cvars = VarSpace {
                n,
                k_max: BANK_MODE_BASE + max_nv as u16 + 1,
            };
            let ccaps = Caps::new(out_caps.degree + halfedges, 0, 0);
            let degrees = class.graph.degrees();
            let mut polys = Vec::with_capacity(nv);
            for v in 0..nv {
                let key = (class.graph.genera()[v], degrees[v]);
                let cache_key = (key.0, key.1, v);
                if let Some(poly) = retarget_cache.get(&cache_key) {
                    polys.push(poly.with_context(cvars, ccaps));
                    continue;
                }
                let template = taylor.get(&key).ok_or(Error::MissingTensor {
                    genus: key.0,
                    valence: key.1 as usize,
                })?;
                // retarget the template bank to this vertex's bank
                let mut sub = Substitution::new();
                for basis in 1..=n {
                    sub.set(
                        VarIndex::new(template_bank, basis),
                        AffineExpr::var(VarIndex::new(BANK_MODE_BASE + v as u16, basis)),
                    );
                }
                let poly = template.with_context(cvars, ccaps).substitute(&sub, cvars)?;
                retarget_cache.insert(cache_key, poly.clone());
                polys.push(poly);
            }
            let amp =
                contract_graph(&class.graph, &polys, &edge_form, out_caps.degree, cvars, ccaps)?;
            let amp = amp
                .scale(&rat(class.aut_order as i64).recip())
                .with_context(vars, Caps::new(out_caps.degree, 0, 0));
            let slot = accum
                .entry(genus as u32)
                .or_insert_with(|| QSeries::zero(vars, Caps::new(out_caps.degree, 0, 0)));
            *slot = slot.add(&amp)?;
        }
    }
    // genus-0 quadratic shift
    let bd_inv = t.b().mul(&d_inv);
    if !bd_inv.is_zero() {
        let quad = quadratic_form_series(&bd_inv, &rat(1), 0, vars, Caps::new(out_caps.degree, 0, 0));
        let slot = accum
            .entry(0)
            .or_insert_with(|| QSeries::zero(vars, Caps::new(out_caps.degree, 0, 0)));
        *slot = slot.add(&quad)?;
    }
    for (g, f) in accum {
        if g <= g_ceiling {
            out.set_genus(g, f.strip_q_constants())?;
        }
    }
    Ok(out)
}

/// Multisets over weighted types with total weight ≤ `budget` (flattened,
/// including the empty multiset).
fn weighted_type_multisets(types: &[((u32, u32), i64)], budget: i64) -> Vec<Vec<(u32, u32)>> {
    // reuse the stable-multiset recursion by scaling: weights here already
    // include q-degree floors, so just recurse directly
    fn rec(
        types: &[((u32, u32), i64)],
        i: usize,
        budget: i64,
        current: &mut Vec<(u32, u32)>,
        out: &mut Vec<Vec<(u32, u32)>>,
    ) {
        if i == types.len() {
            out.push(current.clone());
            return;
        }
        let (t, w) = types[i];
        debug_assert!(w >= 1);
        let mut used = 0;
        let mut pushed = 0usize;
        loop {
            if used > budget {
                break;
            }
            rec(types, i + 1, budget - used, current, out);
            used += w;
            if used > budget {
                break;
            }
            current.push(t);
            pushed += 1;
        }
        for _ in 0..pushed {
            current.pop();
        }
    }
    let mut out = Vec::new();
    rec(types, 0, budget, &mut Vec::new(), &mut out);
    out
}

/// Semi-classical transport check: for each sample direction `q̄`, the
/// point `(d_{εq̄}F⁰_X, εq̄)` on the Lagrangian graph of `X` is transported
/// by `T` and required to satisfy the graph equation of `Y`, order by
/// order in the formal scale `ε` through the decidable window.
pub fn semiclassical_check(
    t: &SymplecticMatrix,
    x: &Potential,
    y: &Potential,
    samples: &[Vec<Rat>],
) -> Result<CheckStatus> {
    let n = x.vars().n as usize;
    let degree = x.caps().degree;
    if degree < 2 {
        return Ok(CheckStatus::Indeterminate);
    }
    // gradients are exact through degree − 1
    let compare_through = degree - 1;
    let evars = VarSpace::flat(1);
    let ecaps = Caps::new(compare_through, 0, 0);
    let eps = VarIndex::flat(1);
    let f0x = x.genus_or_zero(0);
    let f0y = y.genus_or_zero(0);

    for sample in samples {
        if sample.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "sample point has length {}, expected {n}",
                sample.len()
            )));
        }
        // q(ε) = ε q̄ and p(ε) = ∇F⁰_X(ε q̄)
        let mut to_eps = Substitution::new();
        for alpha in 0..n {
            let mut expr = AffineExpr::zero();
            expr.linear.push((eps, sample[alpha].clone()));
            to_eps.set(VarIndex::flat(alpha as u16 + 1), expr);
        }
        let mut p_eps: Vec<QSeries> = Vec::with_capacity(n);
        for alpha in 0..n {
            p_eps.push(
                f0x.differentiate(VarIndex::flat(alpha as u16 + 1))
                    .substitute(&to_eps, evars)?
                    .truncate_to(ecaps),
            );
        }
        let mut q_eps: Vec<QSeries> = Vec::with_capacity(n);
        for (alpha, qbar) in sample.iter().enumerate().take(n) {
            let mut s = QSeries::zero(evars, ecaps);
            s.add_term(Monomial::var(eps), 0, qbar.clone());
            let _ = alpha;
            q_eps.push(s);
        }
        // transported point, blocks (p, q)
        let full = t.to_matrix();
        let mut transported: Vec<QSeries> = Vec::with_capacity(2 * n);
        for row in 0..2 * n {
            let mut acc = QSeries::zero(evars, ecaps);
            for col in 0..2 * n {
                let c = full.get(row, col);
                if c.is_zero() {
                    continue;
                }
                let source = if col < n { &p_eps[col] } else { &q_eps[col - n] };
                acc = acc.add(&source.scale(c))?;
            }
            transported.push(acc);
        }
        let (p_new, q_new) = transported.split_at(n);
        // the composition ∇F⁰_Y(q_new(ε)) is exact through ε^compare only
        // when the image has positive ε-valuation
        for comp in q_new {
            if let Some(0) = comp.min_degree() {
                return Ok(CheckStatus::Indeterminate);
            }
        }
        let image: BTreeMap<VarIndex, QSeries> = (0..n)
            .map(|alpha| (VarIndex::flat(alpha as u16 + 1), q_new[alpha].clone()))
            .collect();
        for alpha in 0..n {
            let lhs = p_new[alpha].truncate_to(ecaps);
            let rhs = compose_series(
                &f0y.differentiate(VarIndex::flat(alpha as u16 + 1)),
                &image,
                evars,
                ecaps,
            )?;
            if lhs != rhs {
                return Ok(CheckStatus::Fail);
            }
        }
    }
    Ok(CheckStatus::Pass)
}

/// Substitute whole series for variables: `f(q) ↦ f(images)`. Variables
/// without an image are set to zero.
pub fn compose_series(
    f: &QSeries,
    images: &BTreeMap<VarIndex, QSeries>,
    out_vars: VarSpace,
    out_caps: Caps,
) -> Result<QSeries> {
    let mut acc = QSeries::zero(out_vars, out_caps);
    for (mono, h, c) in f.terms() {
        let mut piece = QSeries::constant(c.clone(), out_vars, out_caps).hbar_shift(h);
        let mut dead = false;
        for &(v, e) in mono.factors() {
            match images.get(&v) {
                None => {
                    dead = true;
                    break;
                }
                Some(img) => {
                    for _ in 0..e {
                        piece = piece.mul(img)?;
                    }
                }
            }
        }
        if !dead {
            acc = acc.add(&piece)?;
        }
    }
    Ok(acc)
}
