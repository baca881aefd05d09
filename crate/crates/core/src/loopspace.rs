//! Truncated symplectic loop maps and their quantization.
//!
//! The underlying space is `H((z⁻¹))` for a finite-dimensional `H` with a
//! symmetric nondegenerate pairing, polarized by polynomial part (Fock
//! coordinates `q^α_k`) versus principal part. Loop maps are `End(H)`-valued
//! Laurent polynomials `T = Σ_m B_m z^m` with finitely supported, explicitly
//! truncated coefficient lists; upper-triangular maps carry only `m ≤ 0`,
//! lower-triangular only `m ≥ 0`. Compositions of upper- with
//! lower-triangular maps are never formed as loop maps — only their
//! quantized actions compose, one application at a time, each re-truncated.
//!
//! Sign conventions: `Ω(f, g) = Res_z (f(−z), g(z))` with the symplectic
//! adjoint `T†(z) = T*(−z)`; all derived operator signs are locked by the
//! string-operator regression test in `gw`.

use std::collections::BTreeMap;

use num_traits::Zero;

use crate::diffop::DiffOperator;
use crate::error::{CheckStatus, Error, Result};
use crate::matrix::RatMat;
use crate::qseries::{AffineExpr, Caps, Monomial, QSeries, Substitution, VarIndex, VarSpace};
use crate::quantize::Potential;
use crate::rational::{rat, ratio, Rat};

/// A finitely truncated `End(H)`-valued Laurent polynomial in `z`.
///
/// `reliable_order`: `None` when the support is exact (the map IS this
/// Laurent polynomial); `Some(r)` when coefficients with `|m| > r` were
/// truncated away (e.g. by a series exponential) and are unknown.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct LoopMap {
    n: usize,
    pairing: RatMat,
    coeffs: BTreeMap<i32, RatMat>,
    reliable_order: Option<u32>,
}

impl LoopMap {
    pub fn new(pairing: RatMat, coeffs: BTreeMap<i32, RatMat>) -> Result<Self> {
        let n = pairing.rows();
        if !pairing.is_symmetric() {
            return Err(Error::Precondition("pairing must be symmetric".into()));
        }
        pairing
            .inverse()
            .map_err(|_| Error::Precondition("pairing must be invertible".into()))?;
        for (m, c) in &coeffs {
            if c.rows() != n || c.cols() != n {
                return Err(Error::DimensionMismatch(format!(
                    "coefficient at z^{m} is {}x{}, expected {n}x{n}",
                    c.rows(),
                    c.cols()
                )));
            }
        }
        let mut map = LoopMap {
            n,
            pairing,
            coeffs,
            reliable_order: None,
        };
        map.coeffs.retain(|_, c| !c.is_zero());
        Ok(map)
    }

    pub fn identity(n: usize, pairing: RatMat) -> Result<Self> {
        let mut coeffs = BTreeMap::new();
        coeffs.insert(0, RatMat::identity(n));
        LoopMap::new(pairing, coeffs)
    }

    /// A single term `A_m z^m`.
    pub fn single(pairing: RatMat, m: i32, a_m: RatMat) -> Result<Self> {
        let mut coeffs = BTreeMap::new();
        coeffs.insert(m, a_m);
        LoopMap::new(pairing, coeffs)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pairing(&self) -> &RatMat {
        &self.pairing
    }

    pub fn coeff(&self, m: i32) -> RatMat {
        self.coeffs
            .get(&m)
            .cloned()
            .unwrap_or_else(|| RatMat::zeros(self.n, self.n))
    }

    pub fn coeffs(&self) -> impl Iterator<Item = (i32, &RatMat)> {
        self.coeffs.iter().map(|(&m, c)| (m, c))
    }

    pub fn reliable_order(&self) -> Option<u32> {
        self.reliable_order
    }

    pub fn is_upper_triangular(&self) -> bool {
        self.coeffs.keys().all(|&m| m <= 0)
    }

    pub fn is_lower_triangular(&self) -> bool {
        self.coeffs.keys().all(|&m| m >= 0)
    }

    /// Adjoint of an `End(H)` matrix with respect to the pairing:
    /// `(A*x, y) = (x, Ay)`, i.e. `A* = G⁻¹AᵀG`.
    pub fn adjoint_matrix(&self, a: &RatMat) -> RatMat {
        let g_inv = self.pairing.inverse().expect("validated invertible");
        g_inv.mul(&a.transpose()).mul(&self.pairing)
    }

    /// Symplectic adjoint `T†(z) = T*(−z)`: coefficient `m` becomes
    /// `(−1)^m (B_m)*`.
    pub fn loop_adjoint(&self) -> LoopMap {
        let coeffs = self
            .coeffs
            .iter()
            .map(|(&m, c)| {
                let sign = if m.rem_euclid(2) == 0 { rat(1) } else { rat(-1) };
                (m, self.adjoint_matrix(c).scale(&sign))
            })
            .collect();
        LoopMap {
            n: self.n,
            pairing: self.pairing.clone(),
            coeffs,
            reliable_order: self.reliable_order,
        }
    }

    /// Coefficient of `z^k` in the product `self · other`.
    fn product_coefficient(&self, other: &LoopMap, k: i32) -> RatMat {
        let mut acc = RatMat::zeros(self.n, self.n);
        for (&i, ci) in &self.coeffs {
            if let Some(cj) = other.coeffs.get(&(k - i)) {
                acc = acc.add(&ci.mul(cj));
            }
        }
        acc
    }

    /// `T*(−z) T(z) = Id` through the given order. `Indeterminate` when the
    /// map's coefficients are only reliable below the requested order.
    pub fn is_symplectic(&self, order: u32) -> CheckStatus {
        if let Some(r) = self.reliable_order {
            if order > r {
                return CheckStatus::Indeterminate;
            }
        }
        let dag = self.loop_adjoint();
        for k in -(order as i32)..=(order as i32) {
            let mut c = dag.product_coefficient(self, k);
            if k == 0 {
                c = c.sub(&RatMat::identity(self.n));
            }
            if !c.is_zero() {
                return CheckStatus::Fail;
            }
        }
        CheckStatus::Pass
    }

    /// Infinitesimal condition `A*(−z) + A(z) = 0`, i.e.
    /// `A*_m = (−1)^{m+1} A_m` for every coefficient.
    pub fn is_infinitesimal(&self) -> bool {
        self.coeffs.iter().all(|(&m, c)| {
            let sign = if m.rem_euclid(2) == 0 { rat(-1) } else { rat(1) };
            self.adjoint_matrix(c) == c.scale(&sign)
        })
    }

    /// Exponential of a strictly triangular map (support entirely in
    /// `m ≥ 1` or entirely in `m ≤ −1`), exact through `order`.
    pub fn exp_triangular(&self, order: u32) -> Result<LoopMap> {
        let strictly_lower = self.coeffs.keys().all(|&m| m >= 1);
        let strictly_upper = self.coeffs.keys().all(|&m| m <= -1);
        if !(strictly_lower || strictly_upper) {
            return Err(Error::Precondition(
                "loop exponential requires strictly triangular support".into(),
            ));
        }
        let mut acc = LoopMap::identity(self.n, self.pairing.clone())?;
        let mut power = LoopMap::identity(self.n, self.pairing.clone())?;
        let mut factorial = rat(1);
        for j in 1..=order {
            power = power.truncated_product(self, order)?;
            if power.coeffs.is_empty() {
                break;
            }
            factorial *= rat(j as i64);
            for (&m, c) in &power.coeffs {
                let add = c.scale(&factorial.clone().recip());
                let entry = acc
                    .coeffs
                    .entry(m)
                    .or_insert_with(|| RatMat::zeros(self.n, self.n));
                *entry = entry.add(&add);
            }
        }
        acc.coeffs.retain(|_, c| !c.is_zero());
        acc.reliable_order = Some(order);
        Ok(acc)
    }

    /// Logarithm of a unipotent triangular map `I + N`, exact through
    /// `order`.
    pub fn log_triangular(&self, order: u32) -> Result<LoopMap> {
        let mut nilp = self.clone();
        let id = RatMat::identity(self.n);
        match nilp.coeffs.get(&0) {
            Some(c) if *c == id => {
                nilp.coeffs.remove(&0);
            }
            _ => {
                return Err(Error::Precondition(
                    "loop logarithm requires the identity at z^0".into(),
                ))
            }
        }
        let strictly = nilp.coeffs.keys().all(|&m| m >= 1) || nilp.coeffs.keys().all(|&m| m <= -1);
        if !strictly {
            return Err(Error::Precondition(
                "loop logarithm requires strictly triangular support".into(),
            ));
        }
        let mut acc = LoopMap::new(self.pairing.clone(), BTreeMap::new())?;
        let mut power = LoopMap::identity(self.n, self.pairing.clone())?;
        for j in 1..=order {
            power = power.truncated_product(&nilp, order)?;
            if power.coeffs.is_empty() {
                break;
            }
            let sign = if j % 2 == 1 { 1 } else { -1 };
            let scale = ratio(sign, j as i64);
            for (&m, c) in &power.coeffs {
                let add = c.scale(&scale);
                let entry = acc
                    .coeffs
                    .entry(m)
                    .or_insert_with(|| RatMat::zeros(self.n, self.n));
                *entry = entry.add(&add);
            }
        }
        acc.coeffs.retain(|_, c| !c.is_zero());
        acc.reliable_order = Some(order);
        Ok(acc)
    }

    /// Product with coefficients kept through `|m| ≤ order`.
    pub fn truncated_product(&self, other: &LoopMap, order: u32) -> Result<LoopMap> {
        if self.pairing != other.pairing {
            return Err(Error::DimensionMismatch(
                "loop maps over different pairings".into(),
            ));
        }
        let mut coeffs = BTreeMap::new();
        for k in -(order as i32)..=(order as i32) {
            let c = self.product_coefficient(other, k);
            if !c.is_zero() {
                coeffs.insert(k, c);
            }
        }
        let mut out = LoopMap::new(self.pairing.clone(), coeffs)?;
        out.reliable_order = match (self.reliable_order, other.reliable_order) {
            (None, None) => None,
            (a, b) => Some(a.unwrap_or(order).min(b.unwrap_or(order)).min(order)),
        };
        Ok(out)
    }
}

/// An element of the polynomial part `ℍ₊ = H[z]`, `modes[k]` holding the
/// coordinate column of `z^k`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct HPlus {
    pub n: usize,
    pub modes: Vec<Vec<Rat>>,
}

impl HPlus {
    pub fn zero(n: usize, k_max: u16) -> Self {
        HPlus {
            n,
            modes: vec![vec![Rat::zero(); n]; k_max as usize + 1],
        }
    }

    pub fn coeff(&self, k: usize, basis: usize) -> Rat {
        self.modes
            .get(k)
            .map(|m| m[basis - 1].clone())
            .unwrap_or_else(Rat::zero)
    }
}

/// `∂_A q = [A q]₊`: multiply the polynomial part by `A(z)` and truncate to
/// nonnegative powers. Output modes beyond `k_max` are dropped and flagged.
pub fn da_action(a: &LoopMap, q: &HPlus, k_max: u16) -> (HPlus, bool) {
    let mut out = HPlus::zero(q.n, k_max);
    let mut truncated = false;
    for (&m, mat) in &a.coeffs {
        for (j, col) in q.modes.iter().enumerate() {
            let ell = m + j as i32;
            if ell < 0 {
                continue; // principal part truncated away
            }
            let image = mat.mul_vec(col);
            if ell as usize > k_max as usize {
                if image.iter().any(|x| !x.is_zero()) {
                    truncated = true;
                }
                continue;
            }
            for (b, v) in image.into_iter().enumerate() {
                out.modes[ell as usize][b] += v;
            }
        }
    }
    (out, truncated)
}

/// Quantization of the single term `A = A_m z^m`, assembled on Fock
/// variables with modes `0..=k_max`:
/// `Â = (ħ/2) Σ_{k=0}^{m−1} (−1)^k (A_m)^{αβ} ∂_{q^α_k} ∂_{q^β_{m−k−1}}`
/// `  + (1/2ħ) Σ_{k=0}^{−m−1} (−1)^{k+1} (A_m)_{αβ} q^α_{−m−k−1} q^β_k`
/// `  − Σ_k (A_m)_{αβ} q^β_k ∂_{q^α_{k+m}}`
/// with index conventions `(A)^{αβ} = (Aφ^α, φ^β)`, `(A)_{αβ} = (Aφ_α, φ_β)`
/// and the first-order part written through the plain coordinate matrix
/// (equal to `(−1)^m (Aφ^α, φ_β)` under the infinitesimal condition, which
/// is required and checked).
pub fn quantize_azm(a_m: &RatMat, m: i32, pairing: &RatMat, k_max: u16) -> Result<DiffOperator> {
    let single = LoopMap::single(pairing.clone(), m, a_m.clone())?;
    if !single.is_infinitesimal() {
        return Err(Error::NotInfinitesimal(format!(
            "A_m z^m at m = {m} must satisfy A*_m = (−1)^{{m+1}} A_m"
        )));
    }
    let n = pairing.rows();
    let g_inv = pairing.inverse().expect("validated");
    let mut op = DiffOperator::zero();

    if m > 0 {
        // (ħ/2) Σ (−1)^k (A)^{αβ} ∂_{k,α} ∂_{m−1−k,β}
        let upper = g_inv.mul(&a_m.transpose());
        for k in 0..m {
            let ell = m - 1 - k;
            if k as u32 > k_max as u32 || ell as u32 > k_max as u32 {
                continue;
            }
            let sign = if k % 2 == 0 { rat(1) } else { rat(-1) };
            for alpha in 0..n {
                for beta in 0..n {
                    let c = upper.get(alpha, beta);
                    if c.is_zero() {
                        continue;
                    }
                    let d = Monomial::from_factors(vec![
                        (VarIndex::new(k as u16, alpha as u16 + 1), 1),
                        (VarIndex::new(ell as u16, beta as u16 + 1), 1),
                    ]);
                    op.add_op_term(Monomial::one(), d, 1, c * &sign * ratio(1, 2));
                }
            }
        }
    }
    if m < 0 {
        // (1/2ħ) Σ (−1)^{k+1} (A)_{αβ} q_{−m−k−1}^α q_k^β
        let lower = a_m.transpose().mul(pairing);
        for k in 0..(-m) {
            let ell = -m - 1 - k;
            if k as u32 > k_max as u32 || ell as u32 > k_max as u32 {
                continue;
            }
            let sign = if k % 2 == 0 { rat(-1) } else { rat(1) };
            for alpha in 0..n {
                for beta in 0..n {
                    let c = lower.get(alpha, beta);
                    if c.is_zero() {
                        continue;
                    }
                    let q = Monomial::from_factors(vec![
                        (VarIndex::new(ell as u16, alpha as u16 + 1), 1),
                        (VarIndex::new(k as u16, beta as u16 + 1), 1),
                    ]);
                    op.add_op_term(q, Monomial::one(), -1, c * &sign * ratio(1, 2));
                }
            }
        }
    }
    // first-order part: −Σ (A)_{coordinate matrix} q^β_k ∂_{k+m, α}
    let k_lo = 0.max(-m);
    for k in k_lo..=(k_max as i32) {
        let target = k + m;
        if target < 0 || target > k_max as i32 {
            continue;
        }
        for alpha in 0..n {
            for beta in 0..n {
                let c = a_m.get(alpha, beta);
                if c.is_zero() {
                    continue;
                }
                op.add_op_term(
                    Monomial::var(VarIndex::new(k as u16, beta as u16 + 1)),
                    Monomial::var(VarIndex::new(target as u16, alpha as u16 + 1)),
                    0,
                    -c.clone(),
                );
            }
        }
    }
    Ok(op)
}

/// Quantize a whole triangular infinitesimal loop map: the sum of
/// [`quantize_azm`] over its support.
pub fn quantize_loop(a: &LoopMap, k_max: u16) -> Result<DiffOperator> {
    let mut op = DiffOperator::zero();
    for (m, c) in a.coeffs() {
        op = op.add(&quantize_azm(c, m, a.pairing(), k_max)?);
    }
    Ok(op)
}

/// Verify coefficientwise that the second-order part of the quantization
/// equals `[(A(z₊) + A*(z₋)) / (z₊ + z₋)]₊` through the mode window.
pub fn plusminus_check(a: &LoopMap, k_max: u16) -> Result<CheckStatus> {
    if !a.is_infinitesimal() {
        return Err(Error::NotInfinitesimal(
            "plus/minus identity applies to infinitesimal loop maps".into(),
        ));
    }
    let n = a.n();
    let g_inv = a.pairing().inverse().expect("validated");
    // route 1: the ħ-order-1, pure-second-derivative part of Â
    let mut route1 = DiffOperator::zero();
    for (m, c) in a.coeffs() {
        let full = quantize_azm(c, m, a.pairing(), k_max)?;
        for (q, d, h, coeff) in full.terms() {
            if h == 1 && q.is_one() && d.degree() == 2 {
                route1.add_op_term(q.clone(), d.clone(), 1, coeff.clone());
            }
        }
    }
    // route 2: numerator N(z₊, z₋) = Σ_m rep(A_m) z₊^m + rep(A*_m) z₋^m
    // restricted to positive powers (negative powers vanish under [·]₊),
    // divided exactly by (z₊ + z₋); rep(X) is the (Xφ^α, φ^β) matrix.
    let mut numerator: BTreeMap<(u32, u32), RatMat> = BTreeMap::new();
    for (m, c) in a.coeffs() {
        if m < 1 {
            continue;
        }
        let rep_a = g_inv.mul(&c.transpose());
        let rep_a_star = c.mul(&g_inv);
        add_matrix_coeff(&mut numerator, (m as u32, 0), &rep_a);
        add_matrix_coeff(&mut numerator, (0, m as u32), &rep_a_star);
    }
    let (quotient, remainder) = divide_by_sum(&numerator);
    if !remainder.is_empty() {
        return Err(Error::Internal(
            "plus/minus numerator not divisible by z₊ + z₋".into(),
        ));
    }
    let mut route2 = DiffOperator::zero();
    for ((k, ell), mat) in quotient {
        if k > k_max as u32 || ell > k_max as u32 {
            continue;
        }
        for alpha in 0..n {
            for beta in 0..n {
                let c = mat.get(alpha, beta);
                if c.is_zero() {
                    continue;
                }
                let d = Monomial::from_factors(vec![
                    (VarIndex::new(k as u16, alpha as u16 + 1), 1),
                    (VarIndex::new(ell as u16, beta as u16 + 1), 1),
                ]);
                route2.add_op_term(Monomial::one(), d, 1, c * ratio(1, 2));
            }
        }
    }
    Ok(if route1 == route2 {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    })
}

fn add_matrix_coeff(map: &mut BTreeMap<(u32, u32), RatMat>, key: (u32, u32), mat: &RatMat) {
    let entry = map
        .entry(key)
        .or_insert_with(|| RatMat::zeros(mat.rows(), mat.cols()));
    *entry = entry.add(mat);
}

/// Exact division of a bivariate matrix polynomial by `(u + v)`:
/// returns `(quotient, remainder)`, the remainder collected on the `u = 0`
/// axis after elimination.
fn divide_by_sum(
    poly: &BTreeMap<(u32, u32), RatMat>,
) -> (BTreeMap<(u32, u32), RatMat>, BTreeMap<(u32, u32), RatMat>) {
    let mut rem: BTreeMap<(u32, u32), RatMat> = poly
        .iter()
        .filter(|(_, m)| !m.is_zero())
        .map(|(&k, m)| (k, m.clone()))
        .collect();
    let mut quotient: BTreeMap<(u32, u32), RatMat> = BTreeMap::new();
    loop {
        // take the term with the largest u-power still ≥ 1
        let Some((&(i, j), _)) = rem.iter().rev().find(|(&(i, _), _)| i >= 1) else {
            break;
        };
        let c = rem.remove(&(i, j)).unwrap();
        add_matrix_coeff(&mut quotient, (i - 1, j), &c);
        // subtract c·(u+v)·u^{i-1}v^j: kills u^i v^j, adds −c u^{i-1} v^{j+1}
        add_matrix_coeff(&mut rem, (i - 1, j + 1), &c.neg());
        rem.retain(|_, m| !m.is_zero());
    }
    (quotient, rem)
}

/// `W_{kℓ}` of an upper-triangular symplectomorphism `S(z) = I + S₁/z + …`:
/// `Σ W_{kℓ} z^{−k} w^{−ℓ} = (S*(w)S(z) − I)/(w⁻¹ + z⁻¹)`, extracted by
/// exact polynomial division in `u = z⁻¹`, `v = w⁻¹`. A nonzero remainder
/// means the input is not symplectic through the working order.
pub fn compute_w(s: &LoopMap) -> Result<BTreeMap<(u32, u32), RatMat>> {
    if !s.is_upper_triangular() {
        return Err(Error::Precondition(
            "W-coefficients are defined for upper-triangular maps".into(),
        ));
    }
    if s.coeff(0) != RatMat::identity(s.n()) {
        return Err(Error::Precondition(
            "S must be unipotent: S(z) = I + S₁/z + …".into(),
        ));
    }
    // numerator in (u, v): Σ_{a,b} (S_b)* (S_a) v^b u^a − I. Division by
    // (u + v) is graded by total degree, so when S is a truncation the
    // quotient is still exact in every total degree the coefficients cover;
    // degrees beyond the reliable order are dropped before dividing.
    let cutoff = s.reliable_order();
    let mut numerator: BTreeMap<(u32, u32), RatMat> = BTreeMap::new();
    for (mb, cb) in s.coeffs() {
        let star = s.adjoint_matrix(cb);
        for (ma, ca) in s.coeffs() {
            let key = ((-ma) as u32, (-mb) as u32);
            if let Some(r) = cutoff {
                if key.0 + key.1 > r {
                    continue;
                }
            }
            add_matrix_coeff(&mut numerator, key, &star.mul(ca));
        }
    }
    add_matrix_coeff(&mut numerator, (0, 0), &RatMat::identity(s.n()).neg());
    numerator.retain(|_, m| !m.is_zero());
    let (quotient, remainder) = divide_by_sum(&numerator);
    if !remainder.is_empty() {
        return Err(Error::NotSymplectic(
            "S*(w)S(z) − I is not divisible by w⁻¹ + z⁻¹".into(),
        ));
    }
    Ok(quotient)
}

/// `V_{kℓ}` of a lower-triangular symplectomorphism `R(z) = I + R₁z + …`:
/// `Σ (−1)^{k+ℓ} V_{kℓ} w^k z^ℓ = (R*(w)R(z) − I)/(z + w)`, by exact
/// division; a remainder signals a non-symplectic input.
pub fn compute_v(r: &LoopMap) -> Result<BTreeMap<(u32, u32), RatMat>> {
    if !r.is_lower_triangular() {
        return Err(Error::Precondition(
            "V-coefficients are defined for lower-triangular maps".into(),
        ));
    }
    if r.coeff(0) != RatMat::identity(r.n()) {
        return Err(Error::Precondition(
            "R must be unipotent: R(z) = I + R₁z + …".into(),
        ));
    }
    // numerator in (w, z): Σ (R_b)*(R_a) w^b z^a − I, truncation-graded
    // exactly as in compute_w
    let cutoff = r.reliable_order();
    let mut numerator: BTreeMap<(u32, u32), RatMat> = BTreeMap::new();
    for (mb, cb) in r.coeffs() {
        let star = r.adjoint_matrix(cb);
        for (ma, ca) in r.coeffs() {
            let key = (mb as u32, ma as u32);
            if let Some(rel) = cutoff {
                if key.0 + key.1 > rel {
                    continue;
                }
            }
            add_matrix_coeff(&mut numerator, key, &star.mul(ca));
        }
    }
    add_matrix_coeff(&mut numerator, (0, 0), &RatMat::identity(r.n()).neg());
    numerator.retain(|_, m| !m.is_zero());
    let (quotient, remainder) = divide_by_sum(&numerator);
    if !remainder.is_empty() {
        return Err(Error::NotSymplectic(
            "R*(w)R(z) − I is not divisible by z + w".into(),
        ));
    }
    let mut out = BTreeMap::new();
    for ((k, ell), mat) in quotient {
        let sign = if (k + ell) % 2 == 0 { rat(1) } else { rat(-1) };
        out.insert((k, ell), mat.scale(&sign));
    }
    Ok(out)
}

/// The quadratic form `Σ (W_{kℓ} q_k, q_ℓ)` as a polynomial at `ħ^hbar`,
/// scaled.
fn quadratic_form_w(
    w: &BTreeMap<(u32, u32), RatMat>,
    pairing: &RatMat,
    scale: &Rat,
    hbar: i32,
    vars: VarSpace,
    caps: Caps,
) -> QSeries {
    let n = pairing.rows();
    let mut out = QSeries::zero(vars, caps);
    for ((k, ell), mat) in w {
        if *k > vars.k_max as u32 || *ell > vars.k_max as u32 {
            continue;
        }
        // (W q_k, q_ℓ) = (Wᵀ G)_{αβ} q^α_k q^β_ℓ
        let form = mat.transpose().mul(pairing);
        for alpha in 0..n {
            for beta in 0..n {
                let c = form.get(alpha, beta);
                if c.is_zero() {
                    continue;
                }
                let mono = Monomial::from_factors(vec![
                    (VarIndex::new(*k as u16, alpha as u16 + 1), 1),
                    (VarIndex::new(*ell as u16, beta as u16 + 1), 1),
                ]);
                out.add_term(mono, hbar, c * scale);
            }
        }
    }
    out
}

/// Closed-form quantized action of `S⁻¹` for upper-triangular symplectic
/// `S`: `(U_{S⁻¹}Ψ)(q) = exp(W_S(q)/2ħ) Ψ([Sq]₊)`, computed on the log
/// level: `F̄₀ = F₀∘[Sq]₊ + ½W_S`, `F̄_g = F_g∘[Sq]₊`.
pub fn apply_us_inverse(s: &LoopMap, psi: &Potential) -> Result<Potential> {
    let w = compute_w(s)?;
    let vars = psi.vars();
    let caps = psi.caps();
    let n = s.n();
    if n != vars.n as usize {
        return Err(Error::DimensionMismatch(
            "loop map dimension differs from Fock variable block".into(),
        ));
    }
    // substitution q^β_ℓ ↦ Σ_{a ≥ 0} (S_{-a})_{βγ} q^γ_{ℓ+a}
    let mut sub = Substitution::new();
    for ell in 0..=vars.k_max {
        for beta in 0..n {
            let mut expr = AffineExpr::zero();
            for (m, mat) in s.coeffs() {
                let a = -m;
                let src = ell as i32 + a;
                if src < 0 || src > vars.k_max as i32 {
                    continue;
                }
                for gamma in 0..n {
                    let c = mat.get(beta, gamma);
                    if !c.is_zero() {
                        expr.linear
                            .push((VarIndex::new(src as u16, gamma as u16 + 1), c.clone()));
                    }
                }
            }
            sub.set(VarIndex::new(ell, beta as u16 + 1), expr);
        }
    }
    let mut out = Potential::new(vars, caps);
    for (g, f) in psi.genus_slices() {
        out.set_genus(g, f.substitute(&sub, vars)?)?;
    }
    let wq = quadratic_form_w(
        &w,
        s.pairing(),
        &ratio(1, 2),
        0,
        vars,
        Caps::new(caps.degree, 0, 0),
    );
    let f0 = out.genus_or_zero(0).add(&wq)?;
    out.set_genus(0, f0)?;
    Ok(out.strip_constants())
}

/// Closed-form quantized action of a lower-triangular symplectic `R`:
/// `(U_R Ψ)(q) = [exp(ħ V_R(∂_q)/2) Ψ](R⁻¹ q)`.
pub fn apply_ur(r: &LoopMap, psi: &Potential) -> Result<Potential> {
    let v = compute_v(r)?;
    let vars = psi.vars();
    let out_caps = psi.caps();
    let n = r.n();
    if n != vars.n as usize {
        return Err(Error::DimensionMismatch(
            "loop map dimension differs from Fock variable block".into(),
        ));
    }
    let (wide, w_grade) = loop_working_context(out_caps);
    // the second-order factor only raises ħ, so nothing above the output
    // ceiling can ever come back into the window
    let wcaps = Caps::new(wide.degree, wide.hbar_min, out_caps.hbar_max);
    let mut state = psi.log_series(vars, wcaps).series_exp()?;
    state = state.retain(|m, h| 2 * h as i64 + m.degree() as i64 <= w_grade);

    // operator exp((ħ/2) Σ (V_{kℓ} G⁻¹)_{αβ} ∂_{k,α} ∂_{ℓ,β})
    let g_inv = r.pairing().inverse().expect("validated");
    let mut op = DiffOperator::zero();
    for ((k, ell), mat) in &v {
        if *k > vars.k_max as u32 || *ell > vars.k_max as u32 {
            continue;
        }
        let form = mat.mul(&g_inv);
        for alpha in 0..n {
            for beta in 0..n {
                let c = form.get(alpha, beta);
                if c.is_zero() {
                    continue;
                }
                let d = Monomial::from_factors(vec![
                    (VarIndex::new(*k as u16, alpha as u16 + 1), 1),
                    (VarIndex::new(*ell as u16, beta as u16 + 1), 1),
                ]);
                op.add_op_term(Monomial::one(), d, 1, c * ratio(1, 2));
            }
        }
    }
    if !op.is_zero() {
        state = op.exp_apply(&state, loop_guard(vars, wcaps))?;
        state = state.retain(|m, h| 2 * h as i64 + m.degree() as i64 <= w_grade);
    }

    // substitute q ↦ R⁻¹q with R⁻¹(z) = R*(−z)
    let r_inv = r.loop_adjoint();
    let mut sub = Substitution::new();
    for ell in 0..=vars.k_max {
        for beta in 0..n {
            let mut expr = AffineExpr::zero();
            for (m, mat) in r_inv.coeffs() {
                let src = ell as i32 - m;
                if src < 0 || src > vars.k_max as i32 {
                    continue;
                }
                for gamma in 0..n {
                    let c = mat.get(beta, gamma);
                    if !c.is_zero() {
                        expr.linear
                            .push((VarIndex::new(src as u16, gamma as u16 + 1), c.clone()));
                    }
                }
            }
            sub.set(VarIndex::new(ell, beta as u16 + 1), expr);
        }
    }
    state = state.substitute(&sub, vars)?;
    state = prelog_window(&state, out_caps);
    Potential::from_log_series(&state.series_log()?, vars, out_caps)
}

/// Truncated-exponential oracle: materialize `Ψ`, apply `exp(op)` term by
/// term, return the resulting log-potential. Independent of the closed
/// forms above; fails explicitly if the grading does not force termination.
///
/// Working caps adapt to the operator: an appearance of `ħ^{>0}` terms
/// (second-derivative blocks) forces degree headroom below the window,
/// while `ħ^{<0}` terms (quadratic blocks) force depth; a side on which
/// the operator cannot move is clamped to the output window, since slots
/// beyond it can never flow back in.
pub fn exp_operator_oracle(op: &DiffOperator, psi: &Potential) -> Result<Potential> {
    let vars = psi.vars();
    let out_caps = psi.caps();
    let raises = op.terms().any(|(_, _, h, _)| h > 0);
    let lowers = op.terms().any(|(_, _, h, _)| h < 0);
    let (wide, w_grade) = loop_working_context(out_caps);
    let wcaps = match (raises, lowers) {
        (true, true) => wide,
        // ħ only climbs: depth and degree headroom below the window,
        // nothing above the output ceiling ever returns
        (true, false) => Caps::new(wide.degree, wide.hbar_min, out_caps.hbar_max),
        // ħ only descends: headroom above the ceiling (quadratic blocks
        // also add degree, so the degree cap needs no slack)
        (false, true) => Caps::new(
            out_caps.degree,
            out_caps.hbar_min,
            out_caps.hbar_max + out_caps.degree as i32 / 2 + 1,
        ),
        (false, false) => Caps::new(out_caps.degree, out_caps.hbar_min, out_caps.hbar_max),
    };
    let mut state = psi.log_series(vars, wcaps).series_exp()?;
    state = state.retain(|m, h| 2 * h as i64 + m.degree() as i64 <= w_grade);
    state = op.exp_apply(&state, loop_guard(vars, wcaps))?;
    state = prelog_window(&state, out_caps);
    Potential::from_log_series(&state.series_log()?, vars, out_caps)
}

/// Keep only slots that can contribute to the reported genus window under
/// the final logarithm: degrees add slotwise, and below-window `ħ` orders
/// cannot occur on admissible factors.
fn prelog_window(state: &QSeries, out_caps: Caps) -> QSeries {
    let floor = out_caps.hbar_min.min(-(out_caps.degree as i32)) - 1;
    let ceiling = out_caps.hbar_max + out_caps.degree as i32 / 2 + 1;
    state.truncate_to(Caps::new(out_caps.degree, floor, ceiling))
}

/// Working caps for loop-space pipelines, by the same grade argument as the
/// finite-dimensional case (`w = 2·ħ + degree` is preserved by quadratic
/// multiplication and second-order application and is ≥ 1 on log-potential
/// terms).
fn loop_working_context(out_caps: Caps) -> (Caps, i64) {
    let w = 2 * out_caps.hbar_max.max(0) as i64 + out_caps.degree as i64;
    let degree = (3 * w).max(out_caps.degree as i64) as u32;
    let hbar_min = -(w as i32) - 1;
    let hbar_max = (w as i32) / 2 + 1 + out_caps.hbar_max.max(0);
    (Caps::new(degree, hbar_min, hbar_max), w)
}

/// Exponential iteration guard: first-order mode-shifting terms can wander
/// across the mode window before dying, so scale the budget with it.
fn loop_guard(vars: VarSpace, caps: Caps) -> usize {
    (vars.k_max as usize + 2) * crate::diffop::DiffOperator::default_guard(caps)
}
