//! Finite-dimensional symplectic matrices and quadratic Hamiltonians.
//!
//! Coordinate convention, fixed once and used everywhere: coordinates are
//! ordered `(p_1..p_n, q^1..q^n)` — momenta first — and the symplectic form
//! on coordinate columns is `ω(v, w) = vᵀ J w` with `J = [[0, I], [-I, 0]]`,
//! i.e. `⟨e^α, e_β⟩ = δ^α_β` on the basis. All derived signs (Hamiltonians,
//! the cocycle, quantized operators) follow from this choice and are locked
//! by unit tests rather than re-derived per call site.

use crate::error::{Error, Result};
use crate::matrix::RatMat;
use crate::rational::{ratio, Rat};

/// `J = [[0, I], [-I, 0]]` in the `(p, q)` block ordering.
pub fn standard_form(n: usize) -> RatMat {
    let z = RatMat::zeros(n, n);
    let i = RatMat::identity(n);
    RatMat::from_blocks(&z, &i, &i.neg(), &z)
}

/// `ω(v, w) = vᵀ J w` for coordinate columns of length `2n`.
pub fn omega(v: &[Rat], w: &[Rat]) -> Rat {
    assert_eq!(v.len(), w.len());
    assert_eq!(v.len() % 2, 0);
    let n = v.len() / 2;
    let mut acc = Rat::from_integer(0.into());
    for a in 0..n {
        acc += &v[a] * &w[n + a] - &v[n + a] * &w[a];
    }
    acc
}

/// A `2n x 2n` symplectic matrix in block form `[[A, B], [C, D]]`, with the
/// block identities `AᵀB = BᵀA`, `CᵀD = DᵀC`, `AᵀD − BᵀC = I` verified at
/// construction.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SymplecticMatrix {
    n: usize,
    a: RatMat,
    b: RatMat,
    c: RatMat,
    d: RatMat,
}

impl SymplecticMatrix {
    pub fn new(a: RatMat, b: RatMat, c: RatMat, d: RatMat) -> Result<Self> {
        let n = a.rows();
        for (m, name) in [(&a, "A"), (&b, "B"), (&c, "C"), (&d, "D")] {
            if m.rows() != n || m.cols() != n {
                return Err(Error::DimensionMismatch(format!(
                    "block {name} is {}x{}, expected {n}x{n}",
                    m.rows(),
                    m.cols()
                )));
            }
        }
        let full = RatMat::from_blocks(&a, &b, &c, &d);
        if !is_symplectic(&full)? {
            return Err(Error::NotSymplectic(
                "block identities AᵀB=BᵀA, CᵀD=DᵀC, AᵀD−BᵀC=I fail".into(),
            ));
        }
        Ok(SymplecticMatrix { n, a, b, c, d })
    }

    pub fn identity(n: usize) -> Self {
        SymplecticMatrix {
            n,
            a: RatMat::identity(n),
            b: RatMat::zeros(n, n),
            c: RatMat::zeros(n, n),
            d: RatMat::identity(n),
        }
    }

    /// Upper-triangular type `[[I, B], [0, I]]`; `B` must be symmetric.
    pub fn upper(b: RatMat) -> Result<Self> {
        let n = b.rows();
        if !b.is_symmetric() {
            return Err(Error::NotSymplectic("upper block B must be symmetric".into()));
        }
        Ok(SymplecticMatrix {
            n,
            a: RatMat::identity(n),
            b,
            c: RatMat::zeros(n, n),
            d: RatMat::identity(n),
        })
    }

    /// Lower-triangular type `[[I, 0], [C, I]]`; `C` must be symmetric.
    pub fn lower(c: RatMat) -> Result<Self> {
        let n = c.rows();
        if !c.is_symmetric() {
            return Err(Error::NotSymplectic("lower block C must be symmetric".into()));
        }
        Ok(SymplecticMatrix {
            n,
            a: RatMat::identity(n),
            b: RatMat::zeros(n, n),
            c,
            d: RatMat::identity(n),
        })
    }

    /// Block-diagonal type `[[D⁻ᵀ, 0], [0, D]]` for invertible `D`.
    pub fn block_diagonal(d: RatMat) -> Result<Self> {
        let n = d.rows();
        let a = d.transpose().inverse()?;
        Ok(SymplecticMatrix {
            n,
            a,
            b: RatMat::zeros(n, n),
            c: RatMat::zeros(n, n),
            d,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn a(&self) -> &RatMat {
        &self.a
    }

    pub fn b(&self) -> &RatMat {
        &self.b
    }

    pub fn c(&self) -> &RatMat {
        &self.c
    }

    pub fn d(&self) -> &RatMat {
        &self.d
    }

    pub fn to_matrix(&self) -> RatMat {
        RatMat::from_blocks(&self.a, &self.b, &self.c, &self.d)
    }

    pub fn from_matrix(m: &RatMat) -> Result<Self> {
        if !is_symplectic(m)? {
            return Err(Error::NotSymplectic("σᵀJσ ≠ J".into()));
        }
        let (a, b, c, d) = m.split_blocks()?;
        Ok(SymplecticMatrix {
            n: a.rows(),
            a,
            b,
            c,
            d,
        })
    }

    pub fn compose(&self, other: &SymplecticMatrix) -> Result<SymplecticMatrix> {
        SymplecticMatrix::from_matrix(&self.to_matrix().mul(&other.to_matrix()))
    }

    /// The closed-form inverse `[[Dᵀ, −Bᵀ], [−Cᵀ, Aᵀ]]`; the product with
    /// `self` is re-verified to be the identity exactly.
    pub fn inverse(&self) -> SymplecticMatrix {
        let inv = SymplecticMatrix {
            n: self.n,
            a: self.d.transpose(),
            b: self.b.transpose().neg(),
            c: self.c.transpose().neg(),
            d: self.a.transpose(),
        };
        debug_assert_eq!(
            inv.to_matrix().mul(&self.to_matrix()),
            RatMat::identity(2 * self.n)
        );
        inv
    }

    /// Transport a phase-space point `(p, q)` (column of length `2n`).
    pub fn transport(&self, point: &[Rat]) -> Vec<Rat> {
        assert_eq!(point.len(), 2 * self.n);
        self.to_matrix().mul_vec(point)
    }

    /// Factor `T = [[I, BD⁻¹], [0, I]] · [[I, 0], [DCᵀ, I]] · [[D⁻ᵀ, 0], [0, D]]`.
    /// Each factor is individually symplectic and the product is re-verified
    /// exactly. Requires `D` invertible.
    pub fn factorize(&self) -> Result<(SymplecticMatrix, SymplecticMatrix, SymplecticMatrix)> {
        let d_inv = self
            .d
            .inverse()
            .map_err(|_| Error::Singular("block D of the symplectic matrix".into()))?;
        let upper = SymplecticMatrix::upper(self.b.mul(&d_inv))?;
        let lower = SymplecticMatrix::lower(self.d.mul(&self.c.transpose()))?;
        let diag = SymplecticMatrix::block_diagonal(self.d.clone())?;
        let product = upper
            .to_matrix()
            .mul(&lower.to_matrix())
            .mul(&diag.to_matrix());
        if product != self.to_matrix() {
            return Err(Error::Internal(
                "factorization product does not reproduce T".into(),
            ));
        }
        Ok((upper, lower, diag))
    }
}

/// `σᵀJσ = J`, equivalent to the three block identities.
pub fn is_symplectic(m: &RatMat) -> Result<bool> {
    if !m.is_square() || m.rows() % 2 != 0 {
        return Err(Error::DimensionMismatch(format!(
            "symplectic test needs an even square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let j = standard_form(m.rows() / 2);
    Ok(m.transpose().mul(&j).mul(m) == j)
}

/// `FᵀJ + JF = 0`, equivalent to `bᵀ=b`, `cᵀ=c`, `aᵀ=−d` on the blocks.
pub fn is_infinitesimal_symplectic(m: &RatMat) -> Result<bool> {
    if !m.is_square() || m.rows() % 2 != 0 {
        return Err(Error::DimensionMismatch(format!(
            "infinitesimal test needs an even square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let j = standard_form(m.rows() / 2);
    Ok(m.transpose().mul(&j).add(&j.mul(m)).is_zero())
}

/// An infinitesimal symplectic transformation in block form, satisfying
/// `bᵀ = b`, `cᵀ = c`, `aᵀ = −d`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct InfinitesimalSym {
    n: usize,
    a: RatMat,
    b: RatMat,
    c: RatMat,
    d: RatMat,
}

impl InfinitesimalSym {
    pub fn new(a: RatMat, b: RatMat, c: RatMat, d: RatMat) -> Result<Self> {
        let n = a.rows();
        let full = RatMat::from_blocks(&a, &b, &c, &d);
        if !is_infinitesimal_symplectic(&full)? {
            return Err(Error::NotInfinitesimal(
                "blocks must satisfy bᵀ=b, cᵀ=c, aᵀ=−d".into(),
            ));
        }
        Ok(InfinitesimalSym { n, a, b, c, d })
    }

    pub fn from_matrix(m: &RatMat) -> Result<Self> {
        if !is_infinitesimal_symplectic(m)? {
            return Err(Error::NotInfinitesimal("FᵀJ + JF ≠ 0".into()));
        }
        let (a, b, c, d) = m.split_blocks()?;
        Ok(InfinitesimalSym {
            n: a.rows(),
            a,
            b,
            c,
            d,
        })
    }

    pub fn zero(n: usize) -> Self {
        InfinitesimalSym {
            n,
            a: RatMat::zeros(n, n),
            b: RatMat::zeros(n, n),
            c: RatMat::zeros(n, n),
            d: RatMat::zeros(n, n),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn a(&self) -> &RatMat {
        &self.a
    }

    pub fn b(&self) -> &RatMat {
        &self.b
    }

    pub fn c(&self) -> &RatMat {
        &self.c
    }

    pub fn d(&self) -> &RatMat {
        &self.d
    }

    pub fn to_matrix(&self) -> RatMat {
        RatMat::from_blocks(&self.a, &self.b, &self.c, &self.d)
    }

    pub fn commutator(&self, other: &InfinitesimalSym) -> Result<InfinitesimalSym> {
        let s = self.to_matrix();
        let o = other.to_matrix();
        InfinitesimalSym::from_matrix(&s.mul(&o).sub(&o.mul(&s)))
    }
}

/// The quadratic Hamiltonian `h_F(v) = ½ ω(Fv, v)` of an infinitesimal
/// symplectic transformation, evaluated at a phase-space point.
pub fn hamiltonian(f: &InfinitesimalSym, v: &[Rat]) -> Rat {
    assert_eq!(v.len(), 2 * f.n());
    let fv = f.to_matrix().mul_vec(v);
    omega(&fv, v) * ratio(1, 2)
}

/// Poisson bracket of two quadratic Hamiltonians evaluated at a point:
/// `{h_A, h_B}(v) = ∇h_A(v)ᵀ J ∇h_B(v)` with `∇h_F(v) = −JF v` (the
/// symmetrized Gram matrix of `h_F`).
pub fn poisson_bracket_at(a: &InfinitesimalSym, b: &InfinitesimalSym, v: &[Rat]) -> Rat {
    let n = a.n();
    let j = standard_form(n);
    let grad_a = j.mul(&a.to_matrix()).neg().mul_vec(v);
    let grad_b = j.mul(&b.to_matrix()).neg().mul_vec(v);
    omega(&grad_a, &grad_b)
}
