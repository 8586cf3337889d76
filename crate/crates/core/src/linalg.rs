//! Dense matrices and subspaces over F_q.
//!
//! A [`Subspace`] is stored as its reduced row echelon basis, so two
//! subspaces are equal exactly when their bases are equal entry by entry.
//! Shapes with zero rows or columns are legal everywhere.

use std::fmt;
use std::hash::{Hash, Hasher};

use crate::error::{Error, Result};
use crate::gf::{Field, FieldElement};
use crate::rng::RngCore;

#[derive(Clone)]
pub struct Matrix {
    field: Field,
    rows: usize,
    cols: usize,
    data: Vec<FieldElement>,
}

impl PartialEq for Matrix {
    fn eq(&self, other: &Self) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self.data == other.data
            && self.field == other.field
    }
}

impl Eq for Matrix {}

impl Hash for Matrix {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.rows.hash(state);
        self.cols.hash(state);
        self.data.hash(state);
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "Matrix {}x{} over {:?}",
            self.rows, self.cols, self.field
        )?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        Ok(())
    }
}

/// Result of row reduction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rref {
    pub matrix: Matrix,
    pub rank: usize,
    pub pivots: Vec<usize>,
}

impl Matrix {
    pub fn zeros(field: &Field, rows: usize, cols: usize) -> Self {
        Self {
            field: field.clone(),
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn identity(field: &Field, n: usize) -> Self {
        let mut m = Self::zeros(field, n, n);
        for i in 0..n {
            m.data[i * n + i] = 1;
        }
        m
    }

    /// Builds a matrix from row-major entries, checking every entry is `< q`.
    pub fn from_vec(field: &Field, rows: usize, cols: usize, data: Vec<u64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        let data = data
            .into_iter()
            .map(|v| field.check(v))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            field: field.clone(),
            rows,
            cols,
            data,
        })
    }

    pub fn from_rows(field: &Field, rows: &[Vec<u64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::ShapeMismatch("ragged rows".into()));
        }
        Self::from_vec(field, rows.len(), cols, rows.concat())
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn n_cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[FieldElement] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> FieldElement {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: FieldElement) {
        debug_assert!(v < self.field.order());
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[FieldElement] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    fn same_field(&self, other: &Matrix) -> Result<()> {
        if self.field == other.field {
            Ok(())
        } else {
            Err(Error::FieldMismatch)
        }
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.same_field(other)?;
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} + {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let f = &self.field;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f.add(a, b))
            .collect();
        Ok(Matrix {
            field: f.clone(),
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn mul(&self, other: &Matrix) -> Result<Matrix> {
        self.same_field(other)?;
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let f = &self.field;
        let mut out = Matrix::zeros(f, self.rows, other.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self.get(i, l);
                if a == 0 {
                    continue;
                }
                let src = other.row(l);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(src) {
                    *d = f.add(*d, f.mul(a, b));
                }
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(&self.field, self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.get(i, j);
            }
        }
        out
    }

    /// Stacks `other` below `self`.
    pub fn vstack(&self, other: &Matrix) -> Result<Matrix> {
        self.same_field(other)?;
        if self.cols != other.cols {
            return Err(Error::ShapeMismatch(format!(
                "stacking {} and {} columns",
                self.cols, other.cols
            )));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Matrix {
            field: self.field.clone(),
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        })
    }

    /// Copy of the block with rows `r0..r0+h` and columns `c0..c0+w`.
    pub fn block(&self, r0: usize, c0: usize, h: usize, w: usize) -> Matrix {
        let mut out = Matrix::zeros(&self.field, h, w);
        for i in 0..h {
            out.data[i * w..(i + 1) * w].copy_from_slice(
                &self.data[(r0 + i) * self.cols + c0..(r0 + i) * self.cols + c0 + w],
            );
        }
        out
    }

    /// Writes `src` into this matrix with its top-left corner at `(r0, c0)`.
    pub fn set_block(&mut self, r0: usize, c0: usize, src: &Matrix) {
        for i in 0..src.rows {
            let w = src.cols;
            self.data[(r0 + i) * self.cols + c0..(r0 + i) * self.cols + c0 + w]
                .copy_from_slice(src.row(i));
        }
    }

    /// Reduced row echelon form.
    pub fn rref(&self) -> Rref {
        let mut m = self.clone();
        let pivots = m.rref_in_place();
        Rref {
            rank: pivots.len(),
            matrix: m,
            pivots,
        }
    }

    #[allow(clippy::needless_range_loop)]
    fn rref_in_place(&mut self) -> Vec<usize> {
        let f = self.field.clone();
        let (rows, cols) = (self.rows, self.cols);
        let mut pivots = Vec::new();
        let mut pivot_row = vec![0; cols];
        let mut r = 0;
        for c in 0..cols {
            if r == rows {
                break;
            }
            let Some(i) = (r..rows).find(|&i| self.data[i * cols + c] != 0) else {
                continue;
            };
            if i != r {
                for j in c..cols {
                    self.data.swap(i * cols + j, r * cols + j);
                }
            }
            let inv = f.inv(self.data[r * cols + c]).expect("pivot is nonzero");
            for j in c..cols {
                let v = f.mul(self.data[r * cols + j], inv);
                self.data[r * cols + j] = v;
                pivot_row[j] = v;
            }
            for i in (0..rows).filter(|&i| i != r) {
                let factor = self.data[i * cols + c];
                if factor == 0 {
                    continue;
                }
                for j in c..cols {
                    let cur = self.data[i * cols + j];
                    self.data[i * cols + j] = f.sub(cur, f.mul(factor, pivot_row[j]));
                }
            }
            pivots.push(c);
            r += 1;
        }
        pivots
    }

    pub fn rank(&self) -> usize {
        self.clone().rref_in_place().len()
    }

    pub fn row_space(&self) -> Subspace {
        let Rref { matrix, rank, .. } = self.rref();
        Subspace {
            basis: matrix.block(0, 0, rank, self.cols),
        }
    }

    /// Parses the text format: a header line `q n m`, then `n` lines of `m`
    /// whitespace-separated canonical integers. Extension fields use the
    /// default modulus.
    pub fn parse(text: &str) -> Result<Matrix> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty input".into()))?;
        let nums = parse_numbers(header)?;
        let [q, n, m] = nums[..] else {
            return Err(Error::Parse(format!(
                "header must be `q n m`, got `{header}`"
            )));
        };
        let field = Field::with_order(q)?;
        let (n, m) = (n as usize, m as usize);
        let mut data = Vec::with_capacity(n * m);
        for i in 0..n {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("expected {n} rows, found {i}")))?;
            let row = parse_numbers(line)?;
            if row.len() != m {
                return Err(Error::Parse(format!(
                    "row {i} has {} entries, expected {m}",
                    row.len()
                )));
            }
            data.extend(row);
        }
        if let Some(extra) = lines.next() {
            return Err(Error::Parse(format!("trailing content `{extra}`")));
        }
        Matrix::from_vec(&field, n, m, data)
    }

    /// Serializes to the text format read by [`Matrix::parse`].
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {} {}\n", self.field.order(), self.rows, self.cols);
        for i in 0..self.rows {
            let row: Vec<String> = self.row(i).iter().map(u32::to_string).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }
}

fn parse_numbers(line: &str) -> Result<Vec<u64>> {
    line.split_whitespace()
        .map(|t| {
            t.parse::<u64>()
                .map_err(|e| Error::Parse(format!("`{t}`: {e}")))
        })
        .collect()
}

/// A subspace of F_q^m, held as its RREF basis (no zero rows).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Subspace {
    basis: Matrix,
}

impl fmt::Debug for Subspace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Subspace(dim {} in {}) ", self.dim(), self.ambient_dim())?;
        f.debug_list()
            .entries((0..self.dim()).map(|i| self.basis.row(i)))
            .finish()
    }
}

impl Subspace {
    pub fn zero(field: &Field, m: usize) -> Self {
        Subspace {
            basis: Matrix::zeros(field, 0, m),
        }
    }

    pub fn full(field: &Field, m: usize) -> Self {
        Subspace {
            basis: Matrix::identity(field, m),
        }
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.cols
    }

    pub fn dim(&self) -> usize {
        self.basis.rows
    }

    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn field(&self) -> &Field {
        &self.basis.field
    }

    fn check_ambient(&self, other: &Subspace) -> Result<()> {
        if self.ambient_dim() != other.ambient_dim() {
            return Err(Error::AmbientMismatch(
                self.ambient_dim(),
                other.ambient_dim(),
            ));
        }
        self.basis.same_field(&other.basis)
    }

    pub fn sum(&self, other: &Subspace) -> Result<Subspace> {
        self.check_ambient(other)?;
        Ok(self.basis.vstack(&other.basis)?.row_space())
    }

    pub fn intersection_dim(&self, other: &Subspace) -> Result<usize> {
        let sum = self.sum(other)?;
        Ok(self.dim() + other.dim() - sum.dim())
    }

    /// `dim U + dim V - 2 dim(U ∩ V)`.
    pub fn distance(&self, other: &Subspace) -> Result<usize> {
        let inter = self.intersection_dim(other)?;
        Ok(self.dim() + other.dim() - 2 * inter)
    }

    pub fn contains(&self, other: &Subspace) -> Result<bool> {
        Ok(self.intersection_dim(other)? == other.dim())
    }
}

// ---------------------------------------------------------------------------
// Samplers
// ---------------------------------------------------------------------------

pub fn sample_uniform_matrix<R: RngCore + ?Sized>(
    field: &Field,
    n: usize,
    m: usize,
    rng: &mut R,
) -> Matrix {
    let data = (0..n * m).map(|_| field.random_element(rng)).collect();
    Matrix {
        field: field.clone(),
        rows: n,
        cols: m,
        data,
    }
}

/// Uniform over GL_n(F_q), by rejection. Each attempt succeeds with
/// probability above 1/4.
pub fn sample_invertible<R: RngCore + ?Sized>(field: &Field, n: usize, rng: &mut R) -> Matrix {
    sample_full_rank(field, n, n, rng)
}

/// Uniform over `n x m` matrices of rank `min(n, m)`, by rejection.
pub fn sample_full_rank<R: RngCore + ?Sized>(
    field: &Field,
    n: usize,
    m: usize,
    rng: &mut R,
) -> Matrix {
    let target = n.min(m);
    loop {
        let a = sample_uniform_matrix(field, n, m, rng);
        if a.rank() == target {
            return a;
        }
    }
}

/// Uniform over `n x m` matrices of rank exactly `k`, drawn as `C * R` with
/// `C` uniform full-column-rank `n x k` and `R` uniform full-row-rank `k x m`.
/// Every rank-k matrix has exactly |GL_k| such factorizations.
pub fn sample_rank_k<R: RngCore + ?Sized>(
    field: &Field,
    n: usize,
    m: usize,
    k: usize,
    rng: &mut R,
) -> Result<Matrix> {
    if k > n.min(m) {
        return Err(Error::RankOutOfRange { k, max: n.min(m) });
    }
    let c = sample_full_rank(field, n, k, rng);
    let r = sample_full_rank(field, k, m, rng);
    c.mul(&r)
}

pub fn sample_uniform_subspace<R: RngCore + ?Sized>(
    field: &Field,
    m: usize,
    k: usize,
    rng: &mut R,
) -> Result<Subspace> {
    if k > m {
        return Err(Error::RankOutOfRange { k, max: m });
    }
    Ok(sample_full_rank(field, k, m, rng).row_space())
}

/// Uniform over `n x m` matrices whose row space is exactly `space`.
pub fn sample_matrix_with_rowspace<R: RngCore + ?Sized>(
    space: &Subspace,
    n: usize,
    rng: &mut R,
) -> Result<Matrix> {
    let d = space.dim();
    if d > n {
        return Err(Error::RankOutOfRange { k: d, max: n });
    }
    let coeffs = sample_full_rank(space.field(), n, d, rng);
    coeffs.mul(space.basis())
}

// ---------------------------------------------------------------------------
// Exhaustive enumeration (toy scale)
// ---------------------------------------------------------------------------

/// Every `n x m` matrix over `field`, in odometer order.
pub fn all_matrices(field: &Field, n: usize, m: usize) -> impl Iterator<Item = Matrix> + '_ {
    let q = field.order();
    let len = n * m;
    let mut cur: Option<Vec<u32>> = Some(vec![0; len]);
    std::iter::from_fn(move || {
        let out = cur.clone()?;
        let next = {
            let mut v = out.clone();
            let mut i = 0;
            loop {
                if i == len {
                    break None;
                }
                v[i] += 1;
                if v[i] < q {
                    break Some(v);
                }
                v[i] = 0;
                i += 1;
            }
        };
        cur = next;
        Some(Matrix {
            field: field.clone(),
            rows: n,
            cols: m,
            data: out,
        })
    })
}

/// Every `n x m` matrix of rank exactly `k`.
pub fn all_rank_k_matrices(field: &Field, n: usize, m: usize, k: usize) -> Vec<Matrix> {
    if k > n.min(m) {
        return Vec::new();
    }
    let coeffs: Vec<Matrix> = all_matrices(field, n, k)
        .filter(|c| c.rank() == k)
        .collect();
    let mut out = Vec::new();
    for space in all_subspaces(field, m, k) {
        for c in &coeffs {
            out.push(c.mul(space.basis()).expect("shapes agree"));
        }
    }
    out
}

pub fn all_invertible(field: &Field, n: usize) -> Vec<Matrix> {
    all_matrices(field, n, n)
        .filter(|a| a.rank() == n)
        .collect()
}

/// Every `k`-dimensional subspace of F_q^m, built from RREF shapes.
pub fn all_subspaces(field: &Field, m: usize, k: usize) -> Vec<Subspace> {
    let mut out = Vec::new();
    if k > m {
        return out;
    }
    let mut pivots: Vec<usize> = (0..k).collect();
    loop {
        // free positions: (row, col) with col > pivot[row] and col not a pivot
        let free: Vec<(usize, usize)> = (0..k)
            .flat_map(|i| {
                let piv = pivots.clone();
                ((pivots[i] + 1)..m)
                    .filter(move |c| !piv.contains(c))
                    .map(move |c| (i, c))
            })
            .collect();
        for values in all_matrices(field, 1, free.len()) {
            let mut b = Matrix::zeros(field, k, m);
            for (i, &p) in pivots.iter().enumerate() {
                b.set(i, p, 1);
            }
            for (&(i, c), &v) in free.iter().zip(values.entries()) {
                b.set(i, c, v);
            }
            out.push(Subspace { basis: b });
        }
        // next combination of pivot columns
        let Some(i) = (0..k).rev().find(|&i| pivots[i] < m - k + i) else {
            break;
        };
        pivots[i] += 1;
        for j in i + 1..k {
            pivots[j] = pivots[j - 1] + 1;
        }
    }
    out
}
