//! JSON exchange formats. All rationals travel as decimal-free `"p/q"`
//! strings; all maps are ordered, so serialization is byte-deterministic.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feynman::{SymTensor, TensorSet};
use crate::graphs::LabeledGraph;
use crate::loopspace::LoopMap;
use crate::matrix::RatMat;
use crate::qseries::{Caps, Monomial, QSeries, VarIndex, VarSpace};
use crate::quantize::Potential;
use crate::rational::{format_rat, parse_rat};
use crate::symplectic::SymplecticMatrix;

/// One series term: monomial as `[mode, basis, exponent]` triples, the `ħ`
/// exponent, and the coefficient.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TermJson {
    pub monomial: Vec<(u16, u16, u32)>,
    pub hbar: i32,
    pub coeff: String,
}

pub fn qseries_to_json(s: &QSeries) -> Vec<TermJson> {
    s.terms()
        .map(|(m, h, c)| TermJson {
            monomial: m.factors().iter().map(|&(v, e)| (v.mode, v.basis, e)).collect(),
            hbar: h,
            coeff: format_rat(c),
        })
        .collect()
}

pub fn qseries_from_json(terms: &[TermJson], vars: VarSpace, caps: Caps) -> Result<QSeries> {
    let mut out = QSeries::zero(vars, caps);
    for t in terms {
        let mono = Monomial::from_factors(
            t.monomial
                .iter()
                .map(|&(mode, basis, e)| (VarIndex::new(mode, basis), e))
                .collect(),
        );
        for &(v, _) in mono.factors() {
            if !vars.contains(v) {
                return Err(Error::Parse(format!(
                    "variable (mode {}, basis {}) outside the declared universe",
                    v.mode, v.basis
                )));
            }
        }
        out.add_term(mono, t.hbar, parse_rat(&t.coeff)?);
    }
    Ok(out)
}

pub type MatrixJson = Vec<Vec<String>>;

pub fn matrix_to_json(m: &RatMat) -> MatrixJson {
    (0..m.rows())
        .map(|i| (0..m.cols()).map(|j| format_rat(m.get(i, j))).collect())
        .collect()
}

pub fn matrix_from_json(rows: &MatrixJson) -> Result<RatMat> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::Parse("ragged matrix rows".into()));
    }
    let mut out = RatMat::zeros(r, c);
    for (i, row) in rows.iter().enumerate() {
        for (j, s) in row.iter().enumerate() {
            out.set(i, j, parse_rat(s)?);
        }
    }
    Ok(out)
}

/// Symplectic block matrix: `{"n": n, "A": [[..]], "B": …, "C": …, "D": …}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SymplecticJson {
    pub n: usize,
    #[serde(rename = "A")]
    pub a: MatrixJson,
    #[serde(rename = "B")]
    pub b: MatrixJson,
    #[serde(rename = "C")]
    pub c: MatrixJson,
    #[serde(rename = "D")]
    pub d: MatrixJson,
}

pub fn symplectic_to_json(t: &SymplecticMatrix) -> SymplecticJson {
    SymplecticJson {
        n: t.n(),
        a: matrix_to_json(t.a()),
        b: matrix_to_json(t.b()),
        c: matrix_to_json(t.c()),
        d: matrix_to_json(t.d()),
    }
}

pub fn symplectic_from_json(j: &SymplecticJson) -> Result<SymplecticMatrix> {
    let t = SymplecticMatrix::new(
        matrix_from_json(&j.a)?,
        matrix_from_json(&j.b)?,
        matrix_from_json(&j.c)?,
        matrix_from_json(&j.d)?,
    )?;
    if t.n() != j.n {
        return Err(Error::Parse(format!(
            "declared n = {} does not match {}x{} blocks",
            j.n,
            t.n(),
            t.n()
        )));
    }
    Ok(t)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VertexJson {
    pub id: usize,
    pub genus: u32,
}

/// Graph: `{"vertices": [{"id": 0, "genus": 0}, …], "edges": [[0, 1], …]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GraphJson {
    pub vertices: Vec<VertexJson>,
    pub edges: Vec<(usize, usize)>,
}

pub fn graph_to_json(g: &LabeledGraph) -> GraphJson {
    GraphJson {
        vertices: g
            .genera()
            .iter()
            .enumerate()
            .map(|(id, &genus)| VertexJson { id, genus })
            .collect(),
        edges: g.edges().to_vec(),
    }
}

pub fn graph_from_json(j: &GraphJson) -> Result<LabeledGraph> {
    let mut genera = vec![0u32; j.vertices.len()];
    for v in &j.vertices {
        if v.id >= genera.len() {
            return Err(Error::Parse(format!(
                "vertex id {} out of range (have {})",
                v.id,
                genera.len()
            )));
        }
        genera[v.id] = v.genus;
    }
    LabeledGraph::new(genera, j.edges.clone())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TensorEntryJson {
    pub indices: Vec<u16>,
    pub coeff: String,
}

/// Coupling tensors: `{"dim": d, "tensors": {"(g,m)": [entries…]}}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TensorSetJson {
    pub dim: usize,
    pub tensors: BTreeMap<String, Vec<TensorEntryJson>>,
}

pub fn tensor_set_to_json(set: &TensorSet, dim: usize) -> TensorSetJson {
    let mut tensors = BTreeMap::new();
    for (g, m) in set.keys() {
        let tensor = set.get(g, m).expect("listed key");
        let entries = tensor
            .entries()
            .map(|(idx, c)| TensorEntryJson {
                indices: idx.clone(),
                coeff: format_rat(c),
            })
            .collect();
        tensors.insert(format!("({g},{m})"), entries);
    }
    TensorSetJson { dim, tensors }
}

fn parse_gm_key(key: &str) -> Result<(u32, u32)> {
    let inner = key
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| Error::Parse(format!("tensor key {key:?} is not \"(g,m)\"")))?;
    let (g, m) = inner
        .split_once(',')
        .ok_or_else(|| Error::Parse(format!("tensor key {key:?} is not \"(g,m)\"")))?;
    Ok((
        g.trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad genus in tensor key {key:?}")))?,
        m.trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad valence in tensor key {key:?}")))?,
    ))
}

pub fn tensor_set_from_json(j: &TensorSetJson) -> Result<TensorSet> {
    let mut out = TensorSet::new();
    for (key, entries) in &j.tensors {
        let (g, m) = parse_gm_key(key)?;
        let mut tensor = SymTensor::new(m as usize, j.dim);
        for e in entries {
            if e.indices.len() != m as usize {
                return Err(Error::Parse(format!(
                    "tensor {key} entry has {} indices, expected {m}",
                    e.indices.len()
                )));
            }
            if e.indices.iter().any(|&i| i < 1 || i as usize > j.dim) {
                return Err(Error::Parse(format!(
                    "tensor {key} index outside 1..={}",
                    j.dim
                )));
            }
            tensor.set(&e.indices, parse_rat(&e.coeff)?);
        }
        out.insert(g, m, tensor);
    }
    Ok(out)
}

/// Loop map: `{"n": …, "pairing": [[..]], "coeffs": {"-2": [[..]], …},
/// "triangular": "upper"|"lower"}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LoopMapJson {
    pub n: usize,
    pub pairing: MatrixJson,
    pub coeffs: BTreeMap<String, MatrixJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub triangular: Option<String>,
}

pub fn loop_map_to_json(map: &LoopMap) -> LoopMapJson {
    let triangular = if map.is_upper_triangular() {
        Some("upper".to_string())
    } else if map.is_lower_triangular() {
        Some("lower".to_string())
    } else {
        None
    };
    LoopMapJson {
        n: map.n(),
        pairing: matrix_to_json(map.pairing()),
        coeffs: map
            .coeffs()
            .map(|(m, c)| (m.to_string(), matrix_to_json(c)))
            .collect(),
        triangular,
    }
}

pub fn loop_map_from_json(j: &LoopMapJson) -> Result<LoopMap> {
    let pairing = matrix_from_json(&j.pairing)?;
    let mut coeffs = BTreeMap::new();
    for (key, mat) in &j.coeffs {
        let m: i32 = key
            .parse()
            .map_err(|_| Error::Parse(format!("bad z-power key {key:?}")))?;
        coeffs.insert(m, matrix_from_json(mat)?);
    }
    let map = LoopMap::new(pairing, coeffs)?;
    if map.n() != j.n {
        return Err(Error::Parse(format!(
            "declared n = {} does not match pairing size {}",
            j.n,
            map.n()
        )));
    }
    match j.triangular.as_deref() {
        Some("upper") if !map.is_upper_triangular() => Err(Error::Parse(
            "declared upper-triangular but support has positive powers".into(),
        )),
        Some("lower") if !map.is_lower_triangular() => Err(Error::Parse(
            "declared lower-triangular but support has negative powers".into(),
        )),
        Some(other) if other != "upper" && other != "lower" => Err(Error::Parse(format!(
            "triangular must be \"upper\" or \"lower\", got {other:?}"
        ))),
        _ => Ok(map),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CapsJson {
    pub n: u16,
    pub k_max: u16,
    pub degree: u32,
    pub g_max: u32,
}

/// Potential: `{"genus": {"0": [terms…], …}, "caps": {…}}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PotentialJson {
    pub genus: BTreeMap<String, Vec<TermJson>>,
    pub caps: CapsJson,
}

pub fn potential_to_json(p: &Potential) -> PotentialJson {
    PotentialJson {
        genus: p
            .genus_slices()
            .map(|(g, f)| (g.to_string(), qseries_to_json(f)))
            .collect(),
        caps: CapsJson {
            n: p.vars().n,
            k_max: p.vars().k_max,
            degree: p.caps().degree,
            g_max: p.g_max(),
        },
    }
}

pub fn potential_from_json(j: &PotentialJson) -> Result<Potential> {
    let vars = VarSpace::looped(j.caps.n, j.caps.k_max);
    let caps = Potential::standard_caps(j.caps.degree, j.caps.g_max);
    let mut out = Potential::new(vars, caps);
    for (key, terms) in &j.genus {
        let g: u32 = key
            .parse()
            .map_err(|_| Error::Parse(format!("bad genus key {key:?}")))?;
        let f = qseries_from_json(terms, vars, Caps::new(j.caps.degree, 0, 0))?;
        out.set_genus(g, f)?;
    }
    Ok(out)
}
