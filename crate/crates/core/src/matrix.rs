//! Dense matrices over exact rationals.
//!
//! Sizes here are desk scale (a handful of rows), so the implementation
//! favors exactness and clarity: Gauss-Jordan with full pivoting is plenty.

use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::rational::Rat;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct RatMat {
    rows: usize,
    cols: usize,
    data: Vec<Rat>,
}

impl std::fmt::Debug for RatMat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "RatMat {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols)
                .map(|j| crate::rational::format_rat(self.get(i, j)))
                .collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        write!(f, "]")
    }
}

impl RatMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RatMat {
            rows,
            cols,
            data: vec![Rat::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = RatMat::zeros(n, n);
        for i in 0..n {
            m.set(i, i, Rat::one());
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<Rat>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        RatMat {
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        }
    }

    /// Build from integer entries, row major.
    pub fn from_i64(rows: &[&[i64]]) -> Self {
        Self::from_rows(
            rows.iter()
                .map(|r| r.iter().map(|&x| crate::rational::rat(x)).collect())
                .collect(),
        )
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &Rat {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Rat) {
        self.data[i * self.cols + j] = v;
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(Rat::is_zero)
    }

    pub fn is_symmetric(&self) -> bool {
        if !self.is_square() {
            return false;
        }
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                if self.get(i, j) != self.get(j, i) {
                    return false;
                }
            }
        }
        true
    }

    pub fn transpose(&self) -> RatMat {
        let mut t = RatMat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j).clone());
            }
        }
        t
    }

    pub fn add(&self, other: &RatMat) -> RatMat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        RatMat {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn sub(&self, other: &RatMat) -> RatMat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        RatMat {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn neg(&self) -> RatMat {
        self.scale(&-Rat::one())
    }

    pub fn scale(&self, s: &Rat) -> RatMat {
        RatMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    pub fn mul(&self, other: &RatMat) -> RatMat {
        assert_eq!(self.cols, other.rows, "inner dimensions must agree");
        let mut out = RatMat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let b = other.get(k, j);
                    if !b.is_zero() {
                        let v = out.get(i, j) + a * b;
                        out.set(i, j, v);
                    }
                }
            }
        }
        out
    }

    /// Matrix-vector product.
    pub fn mul_vec(&self, v: &[Rat]) -> Vec<Rat> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| {
                (0..self.cols)
                    .map(|j| self.get(i, j) * &v[j])
                    .fold(Rat::zero(), |a, b| a + b)
            })
            .collect()
    }

    /// Exact inverse via Gauss-Jordan; `Err(Singular)` when rank-deficient.
    pub fn inverse(&self) -> Result<RatMat> {
        if !self.is_square() {
            return Err(Error::DimensionMismatch(
                "inverse of a non-square matrix".into(),
            ));
        }
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = RatMat::identity(n);
        for col in 0..n {
            let pivot = (col..n)
                .find(|&r| !a.get(r, col).is_zero())
                .ok_or_else(|| Error::Singular(format!("no pivot in column {col}")))?;
            if pivot != col {
                a.swap_rows(pivot, col);
                inv.swap_rows(pivot, col);
            }
            let p = a.get(col, col).clone();
            for j in 0..n {
                a.set(col, j, a.get(col, j) / &p);
                inv.set(col, j, inv.get(col, j) / &p);
            }
            for r in 0..n {
                if r == col || a.get(r, col).is_zero() {
                    continue;
                }
                let factor = a.get(r, col).clone();
                for j in 0..n {
                    let av = a.get(r, j) - &factor * a.get(col, j);
                    a.set(r, j, av);
                    let iv = inv.get(r, j) - &factor * inv.get(col, j);
                    inv.set(r, j, iv);
                }
            }
        }
        Ok(inv)
    }

    /// Exact determinant by fraction-free-ish Gaussian elimination.
    pub fn det(&self) -> Rat {
        assert!(self.is_square());
        let n = self.rows;
        let mut a = self.clone();
        let mut det = Rat::one();
        for col in 0..n {
            let Some(pivot) = (col..n).find(|&r| !a.get(r, col).is_zero()) else {
                return Rat::zero();
            };
            if pivot != col {
                a.swap_rows(pivot, col);
                det = -det;
            }
            let p = a.get(col, col).clone();
            det *= &p;
            for r in (col + 1)..n {
                if a.get(r, col).is_zero() {
                    continue;
                }
                let factor = a.get(r, col) / &p;
                for j in col..n {
                    let v = a.get(r, j) - &factor * a.get(col, j);
                    a.set(r, j, v);
                }
            }
        }
        det
    }

    fn swap_rows(&mut self, r1: usize, r2: usize) {
        if r1 == r2 {
            return;
        }
        for j in 0..self.cols {
            self.data.swap(r1 * self.cols + j, r2 * self.cols + j);
        }
    }

    /// Exponential of a nilpotent matrix: the Taylor sum terminates once a
    /// power vanishes. Errors if the matrix is not nilpotent.
    pub fn exp_nilpotent(&self) -> Result<RatMat> {
        assert!(self.is_square());
        let n = self.rows;
        let mut acc = RatMat::identity(n);
        let mut pow = RatMat::identity(n);
        let mut fact = Rat::one();
        for k in 1..=n {
            pow = pow.mul(self);
            if pow.is_zero() {
                return Ok(acc);
            }
            fact *= crate::rational::rat(k as i64);
            acc = acc.add(&pow.scale(&fact.clone().recip()));
        }
        if pow.is_zero() {
            Ok(acc)
        } else {
            Err(Error::Precondition("matrix is not nilpotent".into()))
        }
    }

    /// Assemble a square matrix from four equal-size square blocks.
    pub fn from_blocks(a: &RatMat, b: &RatMat, c: &RatMat, d: &RatMat) -> RatMat {
        let n = a.rows;
        assert!(
            [a, b, c, d]
                .iter()
                .all(|m| m.rows == n && m.cols == n && m.is_square()),
            "all blocks must be n x n"
        );
        let mut out = RatMat::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                out.set(i, j, a.get(i, j).clone());
                out.set(i, j + n, b.get(i, j).clone());
                out.set(i + n, j, c.get(i, j).clone());
                out.set(i + n, j + n, d.get(i, j).clone());
            }
        }
        out
    }

    /// Split a `2n x 2n` matrix into its four `n x n` blocks `(A, B, C, D)`.
    pub fn split_blocks(&self) -> Result<(RatMat, RatMat, RatMat, RatMat)> {
        if !self.is_square() || self.rows % 2 != 0 {
            return Err(Error::DimensionMismatch(format!(
                "block split needs an even square matrix, got {}x{}",
                self.rows, self.cols
            )));
        }
        let n = self.rows / 2;
        let mut blocks = [
            RatMat::zeros(n, n),
            RatMat::zeros(n, n),
            RatMat::zeros(n, n),
            RatMat::zeros(n, n),
        ];
        for i in 0..n {
            for j in 0..n {
                blocks[0].set(i, j, self.get(i, j).clone());
                blocks[1].set(i, j, self.get(i, j + n).clone());
                blocks[2].set(i, j, self.get(i + n, j).clone());
                blocks[3].set(i, j, self.get(i + n, j + n).clone());
            }
        }
        let [a, b, c, d] = blocks;
        Ok((a, b, c, d))
    }
}
