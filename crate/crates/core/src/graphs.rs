//! Genus-labeled multigraphs: enumeration up to isomorphism, canonical
//! forms, and automorphism-group orders.
//!
//! Graphs here are desk scale (at most a dozen vertices), so canonical
//! labeling is an exhaustive minimal-encoding search within blocks of
//! vertices sharing the invariant signature (genus, degree, loop count).
//! Correctness beats asymptotic cleverness at these sizes.
//!
//! The automorphism convention is the one under which `1/|Aut Γ|` weights
//! reproduce the Wick expansion: vertex permutations preserving genera and
//! the edge multiset, times `m!` for every parallel-edge bundle, times
//! `2^ℓ ℓ!` for the loops at each vertex. It is locked by the
//! orbit-stabilizer identity test in `feynman`.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Enumeration bounds; the defaults match desk scale.
#[derive(Clone, Copy, Debug)]
pub struct GraphLimits {
    /// Maximal number of half-edges an enumeration may cover.
    pub halfedge_bound: usize,
    /// Maximal vertex count for brute-force canonicalization/automorphisms.
    pub vertex_bound: usize,
}

impl Default for GraphLimits {
    fn default() -> Self {
        GraphLimits {
            halfedge_bound: 20,
            vertex_bound: 10,
        }
    }
}

/// A multigraph with a genus label per vertex. Loops and parallel edges are
/// allowed; edges are stored as sorted `(a, b)` pairs with `a ≤ b`, the list
/// itself sorted, so equal values mean equal labeled graphs.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct LabeledGraph {
    genera: Vec<u32>,
    edges: Vec<(usize, usize)>,
}

impl LabeledGraph {
    pub fn new(genera: Vec<u32>, mut edges: Vec<(usize, usize)>) -> Result<Self> {
        let v = genera.len();
        for e in edges.iter_mut() {
            if e.0 > e.1 {
                *e = (e.1, e.0);
            }
            if e.1 >= v {
                return Err(Error::DimensionMismatch(format!(
                    "edge {e:?} references a vertex ≥ {v}"
                )));
            }
        }
        edges.sort_unstable();
        Ok(LabeledGraph { genera, edges })
    }

    pub fn empty() -> Self {
        LabeledGraph {
            genera: Vec::new(),
            edges: Vec::new(),
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.genera.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn genera(&self) -> &[u32] {
        &self.genera
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn genus_sum(&self) -> u32 {
        self.genera.iter().sum()
    }

    /// `b(Γ) = |E| − |V|`.
    pub fn betti(&self) -> i64 {
        self.edges.len() as i64 - self.genera.len() as i64
    }

    /// `−χ_Γ = Σ_v g(v) − |V| + |E|`, the `ħ` exponent of the graph.
    pub fn neg_euler(&self) -> i64 {
        self.genus_sum() as i64 + self.betti()
    }

    /// Genus of a connected graph: `Σ g(v) + |E| − |V| + 1`, so that
    /// `−χ_Γ = genus − 1`.
    pub fn connected_genus(&self) -> i64 {
        self.neg_euler() + 1
    }

    /// Vertex degrees, loops counting twice.
    pub fn degrees(&self) -> Vec<u32> {
        let mut deg = vec![0u32; self.genera.len()];
        for &(a, b) in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }

    pub fn loops_at(&self, v: usize) -> usize {
        self.edges.iter().filter(|&&(a, b)| a == v && b == v).count()
    }

    pub fn is_connected(&self) -> bool {
        let v = self.genera.len();
        if v == 0 {
            return false;
        }
        let mut seen = vec![false; v];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &(a, b) in &self.edges {
                for (x, y) in [(a, b), (b, a)] {
                    if x == u && !seen[y] {
                        seen[y] = true;
                        stack.push(y);
                    }
                }
            }
        }
        seen.iter().all(|&s| s)
    }

    /// Connected components as separate graphs (vertex order preserved).
    pub fn components(&self) -> Vec<LabeledGraph> {
        let v = self.genera.len();
        let mut comp = vec![usize::MAX; v];
        let mut count = 0;
        for start in 0..v {
            if comp[start] != usize::MAX {
                continue;
            }
            let id = count;
            count += 1;
            let mut stack = vec![start];
            comp[start] = id;
            while let Some(u) = stack.pop() {
                for &(a, b) in &self.edges {
                    for (x, y) in [(a, b), (b, a)] {
                        if x == u && comp[y] == usize::MAX {
                            comp[y] = id;
                            stack.push(y);
                        }
                    }
                }
            }
        }
        let mut out = Vec::new();
        for id in 0..count {
            let verts: Vec<usize> = (0..v).filter(|&u| comp[u] == id).collect();
            let relabel: HashMap<usize, usize> =
                verts.iter().enumerate().map(|(i, &u)| (u, i)).collect();
            let genera = verts.iter().map(|&u| self.genera[u]).collect();
            let edges = self
                .edges
                .iter()
                .filter(|&&(a, _)| comp[a] == id)
                .map(|&(a, b)| (relabel[&a], relabel[&b]))
                .collect();
            out.push(LabeledGraph::new(genera, edges).expect("valid component"));
        }
        out
    }

    /// Invariant vertex signature used to cut the canonicalization search:
    /// `(genus, degree, loop count)` is preserved by every isomorphism.
    fn signatures(&self) -> Vec<(u32, u32, u32)> {
        let deg = self.degrees();
        (0..self.genera.len())
            .map(|v| (self.genera[v], deg[v], self.loops_at(v) as u32))
            .collect()
    }

    /// Canonical form: the minimal `(genera, edges)` encoding over all
    /// vertex relabelings. Graphs are isomorphic iff their canonical forms
    /// are equal.
    pub fn canonical_form(&self) -> (Vec<u32>, Vec<(usize, usize)>) {
        let v = self.genera.len();
        if v == 0 {
            return (Vec::new(), Vec::new());
        }
        let sigs = self.signatures();
        // order vertices by signature; only block-preserving relabelings
        // can attain the minimum, because the signature vector itself is
        // part of the encoding and is minimized by sorting
        let mut order: Vec<usize> = (0..v).collect();
        order.sort_by_key(|&u| sigs[u]);
        let blocks = blocks_of(&order, |&u| sigs[u]);
        let genera_sorted: Vec<u32> = order.iter().map(|&u| self.genera[u]).collect();

        let mut best: Option<Vec<(usize, usize)>> = None;
        for_each_block_perm(&order, &blocks, &mut |perm| {
            // perm[i] = original vertex placed at position i
            let mut position = vec![0usize; v];
            for (pos, &orig) in perm.iter().enumerate() {
                position[orig] = pos;
            }
            let mut enc: Vec<(usize, usize)> = self
                .edges
                .iter()
                .map(|&(a, b)| {
                    let (x, y) = (position[a], position[b]);
                    (x.min(y), x.max(y))
                })
                .collect();
            enc.sort_unstable();
            if best.as_ref().is_none_or(|b| enc < *b) {
                best = Some(enc);
            }
        });
        (genera_sorted, best.unwrap_or_default())
    }

    /// Order of the automorphism group under the half-edge convention:
    /// (vertex permutations preserving genera and the edge multiset)
    /// × `Π m_{uv}!` over parallel bundles × `Π 2^ℓ ℓ!` over loop sets.
    pub fn automorphism_order(&self, limits: &GraphLimits) -> Result<u64> {
        let v = self.genera.len();
        if v > limits.vertex_bound {
            return Err(Error::Capacity {
                what: "brute-force automorphism count",
                requested: v,
                limit: limits.vertex_bound,
            });
        }
        if v == 0 {
            return Ok(1);
        }
        let sigs = self.signatures();
        let mut order: Vec<usize> = (0..v).collect();
        order.sort_by_key(|&u| sigs[u]);
        let blocks = blocks_of(&order, |&u| sigs[u]);

        let mut vertex_auts = 0u64;
        for_each_block_perm(&order, &blocks, &mut |perm| {
            // candidate automorphism: order[i] ↦ perm[i]
            let mut image = vec![0usize; v];
            for (i, &orig) in order.iter().enumerate() {
                image[orig] = perm[i];
            }
            let preserves_genera = (0..v).all(|u| self.genera[image[u]] == self.genera[u]);
            if preserves_genera {
                let mut enc: Vec<(usize, usize)> = self
                    .edges
                    .iter()
                    .map(|&(a, b)| {
                        let (x, y) = (image[a], image[b]);
                        (x.min(y), x.max(y))
                    })
                    .collect();
                enc.sort_unstable();
                if enc == self.edges {
                    vertex_auts += 1;
                }
            }
        });

        let mut factor = 1u64;
        let mut mult: HashMap<(usize, usize), u64> = HashMap::new();
        for &e in &self.edges {
            *mult.entry(e).or_insert(0) += 1;
        }
        for ((a, b), m) in mult {
            if a == b {
                factor *= (1..=m).product::<u64>() * 2u64.pow(m as u32);
            } else {
                factor *= (1..=m).product::<u64>();
            }
        }
        Ok(vertex_auts * factor)
    }

    /// Number of half-edge perfect matchings yielding this labeled graph:
    /// `Π_v deg(v)! / (Π m_{uv}! · Π 2^ℓ ℓ!)`. Used by the orbit-stabilizer
    /// cross-check against the brute-force automorphism count.
    pub fn matching_multiplicity(&self) -> u64 {
        let mut num = 1u64;
        for d in self.degrees() {
            num *= (1..=d as u64).product::<u64>();
        }
        let mut den = 1u64;
        let mut mult: HashMap<(usize, usize), u64> = HashMap::new();
        for &e in &self.edges {
            *mult.entry(e).or_insert(0) += 1;
        }
        for ((a, b), m) in mult {
            if a == b {
                den *= (1..=m).product::<u64>() * 2u64.pow(m as u32);
            } else {
                den *= (1..=m).product::<u64>();
            }
        }
        num / den
    }
}

/// Group a sorted slice into maximal runs of equal keys; returns
/// `(start, len)` pairs.
fn blocks_of<T, K: PartialEq, F: Fn(&T) -> K>(sorted: &[T], key: F) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < sorted.len() {
        let mut end = start + 1;
        while end < sorted.len() && key(&sorted[end]) == key(&sorted[start]) {
            end += 1;
        }
        out.push((start, end - start));
        start = end;
    }
    out
}

/// Visit every permutation of `base` that permutes only within the given
/// blocks. `visit` receives the permuted copy.
fn for_each_block_perm(base: &[usize], blocks: &[(usize, usize)], visit: &mut dyn FnMut(&[usize])) {
    fn rec(
        current: &mut Vec<usize>,
        base: &[usize],
        blocks: &[(usize, usize)],
        bi: usize,
        visit: &mut dyn FnMut(&[usize]),
    ) {
        if bi == blocks.len() {
            visit(current);
            return;
        }
        let (start, len) = blocks[bi];
        let mut choices: Vec<usize> = base[start..start + len].to_vec();
        permute_rec(&mut choices, 0, &mut |perm| {
            let mut next = current.clone();
            next[start..start + len].copy_from_slice(perm);
            rec(&mut next, base, blocks, bi + 1, visit);
        });
    }
    fn permute_rec(items: &mut Vec<usize>, k: usize, visit: &mut dyn FnMut(&[usize])) {
        if k == items.len() {
            visit(items);
            return;
        }
        for i in k..items.len() {
            items.swap(k, i);
            permute_rec(items, k + 1, visit);
            items.swap(k, i);
        }
    }
    let mut current = base.to_vec();
    rec(&mut current, base, blocks, 0, visit);
}

/// One isomorphism class together with its automorphism order.
#[derive(Clone, Debug)]
pub struct GraphClass {
    pub graph: LabeledGraph,
    pub aut_order: u64,
}

/// Enumerate all distinct labeled edge multisets with the given degree
/// sequence (loops and parallel edges allowed).
fn edge_multisets(degrees: &[u32]) -> Vec<Vec<(usize, usize)>> {
    let mut out = Vec::new();
    let mut remaining = degrees.to_vec();
    let mut edges = Vec::new();
    fill_vertex(0, &mut remaining, &mut edges, &mut out);
    out
}

/// Decide all edges at vertex `u` whose partner is ≥ `u`, then move on.
fn fill_vertex(
    u: usize,
    remaining: &mut Vec<u32>,
    edges: &mut Vec<(usize, usize)>,
    out: &mut Vec<Vec<(usize, usize)>>,
) {
    if u == remaining.len() {
        if remaining.iter().all(|&r| r == 0) {
            out.push(edges.clone());
        }
        return;
    }
    let r = remaining[u];
    for loops in 0..=(r / 2) {
        let rest = r - 2 * loops;
        remaining[u] = 0;
        for _ in 0..loops {
            edges.push((u, u));
        }
        distribute(u, u + 1, rest, remaining, edges, out);
        for _ in 0..loops {
            edges.pop();
        }
        remaining[u] = r;
    }
}

/// Distribute `rest` half-edges of `u` among partners `v, v+1, ...`.
fn distribute(
    u: usize,
    v: usize,
    rest: u32,
    remaining: &mut Vec<u32>,
    edges: &mut Vec<(usize, usize)>,
    out: &mut Vec<Vec<(usize, usize)>>,
) {
    if rest == 0 {
        fill_vertex(u + 1, remaining, edges, out);
        return;
    }
    if v >= remaining.len() {
        return;
    }
    let cap = remaining[v].min(rest);
    for take in 0..=cap {
        remaining[v] -= take;
        for _ in 0..take {
            edges.push((u, v));
        }
        distribute(u, v + 1, rest - take, remaining, edges, out);
        for _ in 0..take {
            edges.pop();
        }
        remaining[v] += take;
    }
}

/// Enumerate isomorphism classes of genus-labeled multigraphs whose
/// vertices carry exactly the given `(genus, valence)` types.
pub fn enumerate_from_vertex_types(
    types: &[(u32, u32)],
    limits: &GraphLimits,
) -> Result<Vec<GraphClass>> {
    let halfedges: u32 = types.iter().map(|&(_, m)| m).sum();
    if halfedges as usize > limits.halfedge_bound {
        return Err(Error::Capacity {
            what: "half-edge enumeration",
            requested: halfedges as usize,
            limit: limits.halfedge_bound,
        });
    }
    if halfedges % 2 != 0 {
        return Ok(Vec::new());
    }
    let mut sorted: Vec<(u32, u32)> = types.to_vec();
    sorted.sort_unstable();
    let genera: Vec<u32> = sorted.iter().map(|&(g, _)| g).collect();
    let degrees: Vec<u32> = sorted.iter().map(|&(_, m)| m).collect();

    let mut classes: HashMap<(Vec<u32>, Vec<(usize, usize)>), LabeledGraph> = HashMap::new();
    for edges in edge_multisets(&degrees) {
        let g = LabeledGraph::new(genera.clone(), edges).expect("valid enumeration output");
        classes.entry(g.canonical_form()).or_insert(g);
    }
    let mut reps: Vec<LabeledGraph> = classes.into_values().collect();
    // deterministic output order
    reps.sort_by_key(|g| g.canonical_form());
    reps.into_iter()
        .map(|graph| {
            let aut_order = graph.automorphism_order(limits)?;
            Ok(GraphClass { graph, aut_order })
        })
        .collect()
}

/// Enumerate isomorphism classes for a valence profile
/// (`valence → vertex count`). With `genus_labels`, every assignment of
/// genera in `0..=genus_cap` is enumerated, up to isomorphism; otherwise
/// all genera are zero. Odd half-edge totals yield the empty list.
pub fn enumerate_graphs(
    profile: &std::collections::BTreeMap<u32, u32>,
    genus_labels: bool,
    genus_cap: u32,
    limits: &GraphLimits,
) -> Result<Vec<GraphClass>> {
    let halfedges: u32 = profile.iter().map(|(&val, &cnt)| val * cnt).sum();
    if halfedges as usize > limits.halfedge_bound {
        return Err(Error::Capacity {
            what: "half-edge enumeration",
            requested: halfedges as usize,
            limit: limits.halfedge_bound,
        });
    }
    if halfedges % 2 != 0 {
        return Ok(Vec::new());
    }
    // per valence, choose a multiset of genera for its vertices
    let valences: Vec<(u32, u32)> = profile.iter().map(|(&v, &c)| (v, c)).collect();
    let per_valence: Vec<Vec<Vec<u32>>> = valences
        .iter()
        .map(|&(_, count)| {
            if genus_labels {
                genus_multisets(count, genus_cap)
            } else {
                vec![vec![0; count as usize]]
            }
        })
        .collect();
    let mut out = Vec::new();
    let mut pick = vec![0usize; valences.len()];
    loop {
        let mut types = Vec::new();
        for (vi, &(valence, _)) in valences.iter().enumerate() {
            for &g in &per_valence[vi][pick[vi]] {
                types.push((g, valence));
            }
        }
        out.extend(enumerate_from_vertex_types(&types, limits)?);
        // advance the mixed-radix picker
        let mut i = 0;
        loop {
            if i == pick.len() {
                return Ok(out);
            }
            pick[i] += 1;
            if pick[i] < per_valence[i].len() {
                break;
            }
            pick[i] = 0;
            i += 1;
        }
    }
}

/// Order of the half-edge "flower" group for a vertex-type multiset:
/// `Π_{(g,m)} (m!)^{n_{g,m}} · n_{g,m}!`. The number of half-edge pairings
/// yielding a class `Γ` is this order divided by `|Aut Γ|`.
pub fn flower_group_order(types: &[(u32, u32)]) -> u64 {
    let mut counts: HashMap<(u32, u32), u64> = HashMap::new();
    for &t in types {
        *counts.entry(t).or_insert(0) += 1;
    }
    let mut acc = 1u64;
    for ((_, m), n) in counts {
        let mfact: u64 = (1..=m as u64).product();
        acc *= mfact.pow(n as u32) * (1..=n).product::<u64>();
    }
    acc
}

/// Multisets of `count` genera drawn from `0..=cap`, nondecreasing.
fn genus_multisets(count: u32, cap: u32) -> Vec<Vec<u32>> {
    fn rec(count: u32, cap: u32, min: u32, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if count == 0 {
            out.push(current.clone());
            return;
        }
        for g in min..=cap {
            current.push(g);
            rec(count - 1, cap, g, current, out);
            current.pop();
        }
    }
    let mut out = Vec::new();
    rec(count, cap, 0, &mut Vec::new(), &mut out);
    out
}
