//! Feynman amplitudes and the graph-sum partition function, with an
//! independent Wick-expansion oracle for cross-checking.
//!
//! Everything is normalized by the Gaussian factor `Z₀` (the constant
//! `(2π)^{d/2}/√det B` is dropped throughout), which keeps all values
//! rational. Positive-definiteness of `B` is an analytic hypothesis with no
//! bearing on these identities and is not checked; `B` only needs to be
//! symmetric and invertible.
//!
//! Amplitudes are evaluated by the edge-differentiation rule: place the
//! degree-`m` polynomial `−B_{g,m}(x_v, …, x_v)/m!` at each vertex in its
//! own variable bank, apply `Σ_{ij} (B⁻¹)_{ij} ∂x_u^i ∂x_v^j` once per
//! edge, and read off the fully contracted part. This reproduces the
//! tensor-contraction definition and extends verbatim to vertex tensors
//! with polynomial coefficients.

use std::collections::BTreeMap;

use num_traits::Zero;

use crate::error::{Error, Result};
use crate::diffop::DiffOperator;
use crate::graphs::{enumerate_from_vertex_types, GraphLimits, LabeledGraph};
use crate::matrix::RatMat;
use crate::pairings::MomentTable;
use crate::qseries::{Caps, Monomial, QSeries, VarIndex, VarSpace};
use crate::rational::{factorial, rat, Rat};

/// Mode offset for per-vertex contraction variable banks; keeps them
/// disjoint from every loop-space mode in use.
pub const BANK_MODE_BASE: u16 = 0x4000;

/// A fully symmetric `m`-tensor on a `dim`-dimensional space, stored by
/// sorted index tuples (1-based indices).
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SymTensor {
    arity: usize,
    dim: usize,
    coeffs: BTreeMap<Vec<u16>, Rat>,
}

impl SymTensor {
    pub fn new(arity: usize, dim: usize) -> Self {
        SymTensor {
            arity,
            dim,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.values().all(Rat::is_zero)
    }

    /// Set the symmetric entry at `indices` (any order, 1-based).
    pub fn set(&mut self, indices: &[u16], value: Rat) {
        assert_eq!(indices.len(), self.arity);
        assert!(indices.iter().all(|&i| i >= 1 && i as usize <= self.dim));
        let mut key = indices.to_vec();
        key.sort_unstable();
        if value.is_zero() {
            self.coeffs.remove(&key);
        } else {
            self.coeffs.insert(key, value);
        }
    }

    pub fn get(&self, indices: &[u16]) -> Rat {
        let mut key = indices.to_vec();
        key.sort_unstable();
        self.coeffs.get(&key).cloned().unwrap_or_else(Rat::zero)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Vec<u16>, &Rat)> {
        self.coeffs.iter()
    }

    /// Full contraction against vectors: `B(v_1, …, v_m)` summed over all
    /// ordered index tuples.
    pub fn contract(&self, vectors: &[Vec<Rat>]) -> Rat {
        assert_eq!(vectors.len(), self.arity);
        let mut acc = Rat::zero();
        for (key, c) in &self.coeffs {
            // sum T_{sorted} v_{σ(1)}⋯ over distinct orderings σ of the key
            let mut perms = vec![key.clone()];
            let mut sorted = key.clone();
            while next_permutation(&mut sorted) {
                perms.push(sorted.clone());
            }
            for p in perms {
                let mut t = c.clone();
                for (slot, &idx) in p.iter().enumerate() {
                    t *= &vectors[slot][idx as usize - 1];
                }
                acc += t;
            }
        }
        acc
    }

    /// The polynomial `B(x, …, x)` in the variable bank at `mode`:
    /// each sorted entry contributes with its multinomial multiplicity.
    pub fn polynomial(&self, mode: u16, vars: VarSpace, caps: Caps) -> QSeries {
        let mut out = QSeries::zero(vars, caps);
        for (key, c) in &self.coeffs {
            let mut mult = factorial(self.arity);
            let mut run = 1usize;
            for i in 1..key.len() {
                if key[i] == key[i - 1] {
                    run += 1;
                } else {
                    mult /= factorial(run);
                    run = 1;
                }
            }
            mult /= factorial(run);
            let mono = Monomial::from_factors(
                key.iter().map(|&i| (VarIndex::new(mode, i), 1)).collect(),
            );
            out.add_term(mono, 0, c * mult);
        }
        out
    }

    /// `B(x, …, x)/m!`, the normalization placed at graph vertices.
    pub fn polynomial_over_factorial(&self, mode: u16, vars: VarSpace, caps: Caps) -> QSeries {
        self.polynomial(mode, vars, caps)
            .scale(&factorial(self.arity).recip())
    }
}

fn next_permutation(v: &mut [u16]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Vertex tensors keyed by `(genus, valence)`.
#[derive(Clone, Debug, Default)]
pub struct TensorSet {
    map: BTreeMap<(u32, u32), SymTensor>,
}

impl TensorSet {
    pub fn new() -> Self {
        TensorSet::default()
    }

    pub fn insert(&mut self, genus: u32, valence: u32, tensor: SymTensor) {
        assert_eq!(tensor.arity(), valence as usize);
        self.map.insert((genus, valence), tensor);
    }

    pub fn get(&self, genus: u32, valence: u32) -> Option<&SymTensor> {
        self.map.get(&(genus, valence))
    }

    pub fn keys(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.map.keys().copied()
    }

    /// Nonzero vertex types, in canonical order.
    pub fn active_types(&self) -> Vec<(u32, u32)> {
        self.map
            .iter()
            .filter(|(_, t)| !t.is_zero())
            .map(|(&k, _)| k)
            .collect()
    }

    /// All active types must be stable: `2g − 2 + m > 0`. Vertex types
    /// outside this range (constants, tadpoles, and genus-0 propagator
    /// corrections, plus the flat genus-1 point) make the graph expansion
    /// collect infinitely many terms at a fixed `ħ` order.
    pub fn require_stable(&self) -> Result<()> {
        for (g, m) in self.active_types() {
            if 2 * (g as i64) - 2 + (m as i64) <= 0 {
                return Err(Error::Precondition(format!(
                    "unstable vertex coupling (genus {g}, valence {m}): \
                     types with 2g−2+m ≤ 0 must vanish"
                )));
            }
        }
        Ok(())
    }
}

/// Apply the edge operator `Σ_{ij} form_{ij} ∂x_u^i ∂x_v^j` for an edge
/// between banks `u` and `v` (possibly equal, for loops).
fn edge_operator(form: &RatMat, bank_u: u16, bank_v: u16) -> DiffOperator {
    let mut op = DiffOperator::zero();
    for i in 0..form.rows() {
        for j in 0..form.cols() {
            let c = form.get(i, j);
            if c.is_zero() {
                continue;
            }
            let d = Monomial::from_factors(vec![
                (VarIndex::new(bank_u, i as u16 + 1), 1),
                (VarIndex::new(bank_v, j as u16 + 1), 1),
            ]);
            op.add_op_term(Monomial::one(), d, 0, c.clone());
        }
    }
    op
}

/// Contract vertex polynomials along the edges of `graph` using the given
/// edge bilinear form. `vertex_polys[v]` must be homogeneous of degree
/// `deg(v)` in the bank-`BANK_MODE_BASE + v` variables (arbitrary in any
/// other variables). Returns the fully contracted series with all bank
/// variables eliminated; multiplicative over connected components.
pub fn contract_graph(
    graph: &LabeledGraph,
    vertex_polys: &[QSeries],
    edge_form: &RatMat,
    base_degree_cap: u32,
    vars: VarSpace,
    caps: Caps,
) -> Result<QSeries> {
    assert_eq!(vertex_polys.len(), graph.num_vertices());
    // edge operators never lower the degree in non-bank variables, so any
    // intermediate term already over the base cap is dead weight
    let prune_base = |s: &QSeries| {
        s.retain(|m, _| {
            m.factors()
                .iter()
                .filter(|&&(v, _)| v.mode < BANK_MODE_BASE)
                .map(|&(_, e)| e)
                .sum::<u32>()
                <= base_degree_cap
        })
    };
    let mut result = QSeries::one(vars, caps);
    for component in graph.components() {
        // component vertices keep their order; recover original indices
        // by tracking which vertices belong to it
        let members = component_members(graph, &component);
        let mut acc = QSeries::one(vars, caps);
        let mut present = vec![false; graph.num_vertices()];
        // count pending edge applications keyed by original (a, b)
        let mut pending: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for &(a, b) in graph.edges() {
            if members.contains(&a) {
                *pending.entry((a, b)).or_insert(0) += 1;
            }
        }
        for &v in &members {
            acc = prune_base(&acc.mul(&vertex_polys[v])?);
            present[v] = true;
            let ready: Vec<(usize, usize)> = pending
                .keys()
                .copied()
                .filter(|&(a, b)| present[a] && present[b])
                .collect();
            for e in ready {
                let count = pending.remove(&e).unwrap();
                let op = edge_operator(
                    edge_form,
                    BANK_MODE_BASE + e.0 as u16,
                    BANK_MODE_BASE + e.1 as u16,
                );
                for _ in 0..count {
                    acc = op.apply(&acc);
                }
            }
        }
        result = result.mul(&acc)?;
    }
    // anything still carrying a bank variable is an incomplete contraction
    // and vanishes at x = 0
    Ok(result.retain(|m, _| {
        m.factors()
            .iter()
            .all(|&(v, _)| v.mode < BANK_MODE_BASE || v.mode == crate::qseries::NOVIKOV_MODE)
    }))
}

fn component_members(graph: &LabeledGraph, component: &LabeledGraph) -> Vec<usize> {
    // components() preserves vertex order, so match by walking the
    // component decomposition again
    let v = graph.num_vertices();
    let mut comp_id = vec![usize::MAX; v];
    let mut count = 0;
    for start in 0..v {
        if comp_id[start] != usize::MAX {
            continue;
        }
        let id = count;
        count += 1;
        let mut stack = vec![start];
        comp_id[start] = id;
        while let Some(u) = stack.pop() {
            for &(a, b) in graph.edges() {
                for (x, y) in [(a, b), (b, a)] {
                    if x == u && comp_id[y] == usize::MAX {
                        comp_id[y] = id;
                        stack.push(y);
                    }
                }
            }
        }
    }
    for id in 0..count {
        let members: Vec<usize> = (0..v).filter(|&u| comp_id[u] == id).collect();
        let genera: Vec<u32> = members.iter().map(|&u| graph.genera()[u]).collect();
        if genera == component.genera() && members.len() == component.num_vertices() {
            // compare edge multisets under the relabeling
            let relabel: BTreeMap<usize, usize> =
                members.iter().enumerate().map(|(i, &u)| (u, i)).collect();
            let mut edges: Vec<(usize, usize)> = graph
                .edges()
                .iter()
                .filter(|&&(a, _)| comp_id[a] == id)
                .map(|&(a, b)| {
                    let (x, y) = (relabel[&a], relabel[&b]);
                    (x.min(y), x.max(y))
                })
                .collect();
            edges.sort_unstable();
            if edges == component.edges() {
                return members;
            }
        }
    }
    unreachable!("component not found in its own graph");
}

/// The genus-modified Feynman amplitude of a single graph with constant
/// vertex tensors: place `−B_{g,m}` at each `m`-valent genus-`g` vertex and
/// contract along edges with `binv`. Multiplicative over components; the
/// empty graph has amplitude 1.
pub fn feynman_amplitude(
    graph: &LabeledGraph,
    tensors: &TensorSet,
    binv: &RatMat,
) -> Result<Rat> {
    let dim = binv.rows() as u16;
    let degrees = graph.degrees();
    let nv = graph.num_vertices();
    let vars = VarSpace::looped(dim, BANK_MODE_BASE + nv as u16);
    let total_degree: u32 = degrees.iter().sum();
    let caps = Caps::new(total_degree, 0, 0);
    let mut polys = Vec::with_capacity(nv);
    for v in 0..nv {
        let (g, m) = (graph.genera()[v], degrees[v]);
        let tensor = tensors.get(g, m).ok_or(Error::MissingTensor {
            genus: g,
            valence: m as usize,
        })?;
        polys.push(
            tensor
                .polynomial_over_factorial(BANK_MODE_BASE + v as u16, vars, caps)
                .neg(),
        );
    }
    let contracted = contract_graph(graph, &polys, binv, 0, vars, caps)?;
    Ok(contracted.coeff(&Monomial::one(), 0))
}

/// All multisets of vertex types (with repetition, flattened) whose total
/// doubled weight `Σ (2g − 2 + m)` does not exceed `budget2`. Includes the
/// empty multiset. Types must all be stable, so the recursion terminates.
pub fn stable_type_multisets(types: &[(u32, u32)], budget2: i64) -> Vec<Vec<(u32, u32)>> {
    fn rec(
        types: &[(u32, u32)],
        i: usize,
        budget2: i64,
        current: &mut Vec<(u32, u32)>,
        out: &mut Vec<Vec<(u32, u32)>>,
    ) {
        if i == types.len() {
            out.push(current.clone());
            return;
        }
        let (g, m) = types[i];
        let w = 2 * (g as i64) - 2 + (m as i64);
        debug_assert!(w > 0);
        let mut used = 0;
        loop {
            if used > budget2 {
                break;
            }
            rec(types, i + 1, budget2 - used, current, out);
            used += w;
            if used > budget2 {
                break;
            }
            current.push((g, m));
        }
        // unwind the copies we pushed
        while current.last() == Some(&(g, m)) {
            current.pop();
        }
    }
    let mut out = Vec::new();
    rec(types, 0, budget2, &mut Vec::new(), &mut out);
    out
}

fn hbar_series_space() -> (VarSpace, u16) {
    (VarSpace::flat(0), 0)
}

/// The normalized partition function `Z/Z₀` as a series in `ħ`: the sum
/// over all genus-labeled graphs (disconnected included) with
/// `−χ_Γ ≤ hbar_cap` of `ħ^{−χ_Γ} F_Γ / |Aut Γ|`.
///
/// Preconditions: `b` symmetric invertible; all active couplings stable
/// (`2g − 2 + m > 0`, which subsumes the vanishing of `B_{0,0}`, `B_{0,1}`,
/// `B_{0,2}`).
pub fn graph_sum_z(
    b: &RatMat,
    tensors: &TensorSet,
    hbar_cap: i32,
    limits: &GraphLimits,
) -> Result<QSeries> {
    if !b.is_symmetric() {
        return Err(Error::Precondition("B must be symmetric".into()));
    }
    let binv = b
        .inverse()
        .map_err(|_| Error::Precondition("B must be invertible".into()))?;
    tensors.require_stable()?;
    let (vars, _) = hbar_series_space();
    let caps = Caps::new(0, 0, hbar_cap);
    let mut z = QSeries::zero(vars, caps);
    for types in stable_type_multisets(&tensors.active_types(), 2 * hbar_cap as i64) {
        for class in enumerate_from_vertex_types(&types, limits)? {
            let neg_chi = class.graph.neg_euler();
            if neg_chi > hbar_cap as i64 {
                continue;
            }
            let amp = feynman_amplitude(&class.graph, tensors, &binv)?;
            let weight = amp / rat(class.aut_order as i64);
            z.add_term(Monomial::one(), neg_chi as i32, weight);
        }
    }
    Ok(z)
}

/// Independent evaluation of `Z/Z₀` straight from Wick's theorem: expand
/// `exp(−Σ ħ^{g+m/2−1} B_{g,m}(y,…,y)/m!)` as a multinomial series and
/// integrate each term against the normalized Gaussian measure. No graphs,
/// no automorphisms; exact agreement with [`graph_sum_z`] is the
/// acceptance contract.
pub fn wick_oracle_z(
    b: &RatMat,
    tensors: &TensorSet,
    hbar_cap: i32,
    limits: &GraphLimits,
) -> Result<QSeries> {
    if !b.is_symmetric() {
        return Err(Error::Precondition("B must be symmetric".into()));
    }
    let binv = b
        .inverse()
        .map_err(|_| Error::Precondition("B must be invertible".into()))?;
    tensors.require_stable()?;
    let d = b.rows() as u16;
    let (hvars, _) = hbar_series_space();
    let caps = Caps::new(0, 0, hbar_cap);
    let mut z = QSeries::zero(hvars, caps);
    let mut moments = MomentTable::new(&binv);
    for types in stable_type_multisets(&tensors.active_types(), 2 * hbar_cap as i64) {
        let total_halfedges: u32 = types.iter().map(|&(_, m)| m).sum();
        if total_halfedges as usize > limits.halfedge_bound {
            return Err(Error::Capacity {
                what: "wick oracle monomial degree",
                requested: total_halfedges as usize,
                limit: limits.halfedge_bound,
            });
        }
        if total_halfedges % 2 != 0 {
            continue; // odd moments vanish
        }
        // doubled ħ power: Σ (2g + m − 2); even when the half-edge total is
        let power2: i64 = types
            .iter()
            .map(|&(g, m)| 2 * (g as i64) + (m as i64) - 2)
            .sum();
        debug_assert_eq!(power2 % 2, 0);
        let power = (power2 / 2) as i32;
        if power > hbar_cap {
            continue;
        }
        // 1 / Π (m!)^{n_gm} n_gm!
        let mut norm = Rat::from_integer(1.into());
        let mut counts: BTreeMap<(u32, u32), u64> = BTreeMap::new();
        for &t in &types {
            *counts.entry(t).or_insert(0) += 1;
        }
        for (&(_, m), &n) in &counts {
            norm /= crate::rational::pow_i(&factorial(m as usize), n as i64)
                * factorial(n as usize);
        }
        // polynomial Π (−B_{g,m}(y,…,y))^{n_gm} in the y variables
        let yvars = VarSpace::flat(d);
        let ycaps = Caps::new(total_halfedges, 0, 0);
        let mut poly = QSeries::one(yvars, ycaps);
        for &(g, m) in &types {
            let tensor = tensors.get(g, m).expect("active type");
            poly = poly.mul(&tensor.polynomial(0, yvars, ycaps).neg())?;
        }
        // integrate monomial by monomial
        let mut expectation = Rat::zero();
        for (mono, h, c) in poly.terms() {
            debug_assert_eq!(h, 0);
            let mut profile = vec![0u32; d as usize];
            for &(v, e) in mono.factors() {
                profile[v.basis as usize - 1] = e;
            }
            let m = moments.moment(&profile);
            if !m.is_zero() {
                expectation += c * m;
            }
        }
        z.add_term(Monomial::one(), power, norm * expectation);
    }
    Ok(z)
}

/// The connected-graphs-only sum `Σ_{Γ connected} ħ^{−χ_Γ} F_Γ / |Aut Γ|`,
/// the right-hand side of the connected-graph theorem.
pub fn connected_graph_sum(
    b: &RatMat,
    tensors: &TensorSet,
    hbar_cap: i32,
    limits: &GraphLimits,
) -> Result<QSeries> {
    if !b.is_symmetric() {
        return Err(Error::Precondition("B must be symmetric".into()));
    }
    let binv = b
        .inverse()
        .map_err(|_| Error::Precondition("B must be invertible".into()))?;
    tensors.require_stable()?;
    let (vars, _) = hbar_series_space();
    let caps = Caps::new(0, 0, hbar_cap);
    let mut acc = QSeries::zero(vars, caps);
    for types in stable_type_multisets(&tensors.active_types(), 2 * hbar_cap as i64) {
        if types.is_empty() {
            continue;
        }
        for class in enumerate_from_vertex_types(&types, limits)? {
            if !class.graph.is_connected() {
                continue;
            }
            let neg_chi = class.graph.neg_euler();
            if neg_chi > hbar_cap as i64 {
                continue;
            }
            let amp = feynman_amplitude(&class.graph, tensors, &binv)?;
            acc.add_term(
                Monomial::one(),
                neg_chi as i32,
                amp / rat(class.aut_order as i64),
            );
        }
    }
    Ok(acc)
}

/// `log(Z/Z₀)` of a normalized partition series (constant term must be 1).
pub fn connected_log(z: &QSeries) -> Result<QSeries> {
    z.series_log()
}
