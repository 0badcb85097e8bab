//! Affine matrix-valued expressions over svec-ed symmetric variable blocks.
//!
//! A symmetric `d x d` block occupies `d (d + 1) / 2` coordinates, ordered
//! column-wise over the upper triangle, with off-diagonal coordinates scaled
//! by `sqrt 2` so `svec(X) . svec(Y) = Tr(X Y)`.

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DVector;

use crate::linalg::Mat;

#[derive(Debug, Clone, PartialEq)]
pub struct VariableBlock {
    pub name: String,
    pub dim: usize,
    /// Index of the block's first coordinate in the stacked variable vector.
    pub offset: usize,
}

impl VariableBlock {
    pub fn len(&self) -> usize {
        self.dim * (self.dim + 1) / 2
    }

    pub fn is_empty(&self) -> bool {
        self.dim == 0
    }

    /// The `(row, col)` entry, `row <= col`, addressed by local coordinate `k`.
    fn entry(&self, k: usize) -> (usize, usize) {
        let mut col = 0;
        let mut start = 0;
        while start + col < k {
            start += col + 1;
            col += 1;
        }
        (k - start, col)
    }

    /// Symmetric basis matrix of local coordinate `k`.
    pub fn basis(&self, k: usize) -> Mat {
        let (i, j) = self.entry(k);
        let mut e = Mat::zeros(self.dim, self.dim);
        if i == j {
            e[(i, i)] = 1.0;
        } else {
            e[(i, j)] = std::f64::consts::FRAC_1_SQRT_2;
            e[(j, i)] = std::f64::consts::FRAC_1_SQRT_2;
        }
        e
    }

    /// Read the block's matrix out of a stacked variable vector.
    pub fn unpack(&self, x: &DVector<f64>) -> Mat {
        smat(&x.rows(self.offset, self.len()).into_owned(), self.dim)
    }

    /// Write `m` into the block's coordinates of `x`.
    pub fn pack(&self, m: &Mat, x: &mut DVector<f64>) {
        x.rows_mut(self.offset, self.len()).copy_from(&svec(m));
    }
}

pub fn svec(m: &Mat) -> DVector<f64> {
    let d = m.nrows();
    let mut v = Vec::with_capacity(d * (d + 1) / 2);
    for j in 0..d {
        for i in 0..=j {
            if i == j {
                v.push(m[(i, i)]);
            } else {
                v.push(std::f64::consts::SQRT_2 * 0.5 * (m[(i, j)] + m[(j, i)]));
            }
        }
    }
    DVector::from_vec(v)
}

pub fn smat(v: &DVector<f64>, d: usize) -> Mat {
    let mut m = Mat::zeros(d, d);
    let mut k = 0;
    for j in 0..d {
        for i in 0..=j {
            if i == j {
                m[(i, i)] = v[k];
            } else {
                let x = v[k] * std::f64::consts::FRAC_1_SQRT_2;
                m[(i, j)] = x;
                m[(j, i)] = x;
            }
            k += 1;
        }
    }
    m
}

/// `E(x) = E_0 + sum_i x_i E_i` with only nonzero `E_i` stored.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineExpr {
    pub constant: Mat,
    pub terms: BTreeMap<usize, Mat>,
}

impl AffineExpr {
    pub fn constant(m: Mat) -> Self {
        AffineExpr {
            constant: m,
            terms: BTreeMap::new(),
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::constant(Mat::zeros(rows, cols))
    }

    pub fn scalar(c: f64) -> Self {
        Self::constant(Mat::from_element(1, 1, c))
    }

    pub fn nrows(&self) -> usize {
        self.constant.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.constant.ncols()
    }

    /// The block variable `X` itself.
    pub fn var(block: &VariableBlock) -> Self {
        let id = Mat::identity(block.dim, block.dim);
        Self::congruence(&id, block, &id)
    }

    /// `L X R` for a block variable `X`.
    pub fn congruence(left: &Mat, block: &VariableBlock, right: &Mat) -> Self {
        let mut expr = Self::zeros(left.nrows(), right.ncols());
        for k in 0..block.len() {
            let coeff = left * block.basis(k) * right;
            if coeff.iter().any(|&c| c != 0.0) {
                expr.terms.insert(block.offset + k, coeff);
            }
        }
        expr
    }

    pub fn transpose(&self) -> Self {
        AffineExpr {
            constant: self.constant.transpose(),
            terms: self
                .terms
                .iter()
                .map(|(&i, m)| (i, m.transpose()))
                .collect(),
        }
    }

    /// `Tr(weight * E(x))` as a `1 x 1` expression.
    pub fn trace_with(&self, weight: &Mat) -> Self {
        let tr = |m: &Mat| (weight * m).trace();
        let mut expr = Self::scalar(tr(&self.constant));
        for (&i, m) in &self.terms {
            let c = tr(m);
            if c != 0.0 {
                expr.terms.insert(i, Mat::from_element(1, 1, c));
            }
        }
        expr
    }

    /// Assemble `[[a, b], [c, d]]`.
    pub fn block2(a: &Self, b: &Self, c: &Self, d: &Self) -> Self {
        let (r0, c0) = (a.nrows(), a.ncols());
        let rows = r0 + c.nrows();
        let cols = c0 + b.ncols();
        let place = |m: &mut Mat, part: &Mat, r: usize, c: usize| {
            m.view_mut((r, c), (part.nrows(), part.ncols()))
                .copy_from(part);
        };
        let mut constant = Mat::zeros(rows, cols);
        let mut terms: BTreeMap<usize, Mat> = BTreeMap::new();
        for (part, r, c) in [(a, 0, 0), (b, 0, c0), (c, r0, 0), (d, r0, c0)] {
            place(&mut constant, &part.constant, r, c);
            for (&i, m) in &part.terms {
                let entry = terms.entry(i).or_insert_with(|| Mat::zeros(rows, cols));
                place(entry, m, r, c);
            }
        }
        AffineExpr { constant, terms }
    }

    pub fn eval(&self, x: &DVector<f64>) -> Mat {
        let mut m = self.constant.clone();
        for (&i, coeff) in &self.terms {
            if x[i] != 0.0 {
                m += coeff * x[i];
            }
        }
        m
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.terms.keys().next_back().copied()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let sym = |m: &Mat| {
            m.nrows() == m.ncols() && (m - m.transpose()).norm() <= tol * (1.0 + m.norm())
        };
        sym(&self.constant) && self.terms.values().all(sym)
    }

    fn combine(mut self, other: &Self, sign: f64) -> Self {
        assert_eq!(
            (self.nrows(), self.ncols()),
            (other.nrows(), other.ncols()),
            "affine expression shape mismatch"
        );
        self.constant += &other.constant * sign;
        for (&i, m) in &other.terms {
            match self.terms.get_mut(&i) {
                Some(existing) => *existing += m * sign,
                None => {
                    self.terms.insert(i, m * sign);
                }
            }
        }
        self.terms.retain(|_, m| m.iter().any(|&c| c != 0.0));
        self
    }
}

impl Add<&AffineExpr> for AffineExpr {
    type Output = AffineExpr;
    fn add(self, rhs: &AffineExpr) -> AffineExpr {
        self.combine(rhs, 1.0)
    }
}

impl Add for AffineExpr {
    type Output = AffineExpr;
    fn add(self, rhs: AffineExpr) -> AffineExpr {
        self.combine(&rhs, 1.0)
    }
}

impl Sub<&AffineExpr> for AffineExpr {
    type Output = AffineExpr;
    fn sub(self, rhs: &AffineExpr) -> AffineExpr {
        self.combine(rhs, -1.0)
    }
}

impl Sub for AffineExpr {
    type Output = AffineExpr;
    fn sub(self, rhs: AffineExpr) -> AffineExpr {
        self.combine(&rhs, -1.0)
    }
}

impl Mul<f64> for AffineExpr {
    type Output = AffineExpr;
    fn mul(mut self, c: f64) -> AffineExpr {
        self.constant *= c;
        for m in self.terms.values_mut() {
            *m *= c;
        }
        self
    }
}

impl Neg for AffineExpr {
    type Output = AffineExpr;
    fn neg(self) -> AffineExpr {
        self * -1.0
    }
}
