//! Exact integer linear algebra: matrices, Smith normal form, solving and homology.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Matrices with both dimensions below this bound are stored densely.
pub const DENSE_LIMIT: usize = 64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("no integer solution")]
    NoSolution,
    #[error("not a complex: d_out * d_in is nonzero")]
    NotAComplex,
}

#[derive(Clone, Debug)]
enum Store {
    Dense(Vec<BigInt>),
    Sparse(Vec<Vec<(usize, BigInt)>>),
}

/// Integer matrix acting on column vectors: `rows` is the target dimension.
#[derive(Clone, Debug)]
pub struct IntMatrix {
    rows: usize,
    cols: usize,
    store: Store,
}

fn use_dense(rows: usize, cols: usize) -> bool {
    rows < DENSE_LIMIT && cols < DENSE_LIMIT
}

impl IntMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let store = if use_dense(rows, cols) {
            Store::Dense(vec![BigInt::zero(); rows * cols])
        } else {
            Store::Sparse(vec![Vec::new(); rows])
        };
        IntMatrix { rows, cols, store }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, BigInt::one())))
    }

    /// Builds a matrix from sparse rows; duplicate columns are summed.
    pub fn from_row_maps(rows: usize, cols: usize, data: Vec<BTreeMap<usize, BigInt>>) -> Self {
        assert_eq!(data.len(), rows, "row count");
        if use_dense(rows, cols) {
            let mut v = vec![BigInt::zero(); rows * cols];
            for (r, row) in data.into_iter().enumerate() {
                for (c, x) in row {
                    assert!(c < cols, "column out of range");
                    v[r * cols + c] = x;
                }
            }
            IntMatrix { rows, cols, store: Store::Dense(v) }
        } else {
            let sp = data
                .into_iter()
                .map(|row| {
                    row.into_iter()
                        .filter(|(c, x)| {
                            assert!(*c < cols, "column out of range");
                            !x.is_zero()
                        })
                        .collect()
                })
                .collect();
            IntMatrix { rows, cols, store: Store::Sparse(sp) }
        }
    }

    pub fn from_triplets<I>(rows: usize, cols: usize, it: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize, BigInt)>,
    {
        let mut data: Vec<BTreeMap<usize, BigInt>> = vec![BTreeMap::new(); rows];
        for (r, c, x) in it {
            assert!(r < rows && c < cols, "triplet ({r},{c}) outside {rows}x{cols}");
            let e = data[r].entry(c).or_insert_with(BigInt::zero);
            *e += x;
        }
        for row in data.iter_mut() {
            row.retain(|_, x| !x.is_zero());
        }
        Self::from_row_maps(rows, cols, data)
    }

    pub fn from_rows(rows: &[Vec<i64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        Self::from_triplets(
            r,
            c,
            rows.iter().enumerate().flat_map(|(i, row)| {
                assert_eq!(row.len(), c, "ragged rows");
                row.iter().enumerate().map(move |(j, &x)| (i, j, BigInt::from(x)))
            }),
        )
    }

    pub fn from_dense(rows: usize, cols: usize, d: &[Vec<BigInt>]) -> Self {
        Self::from_triplets(
            rows,
            cols,
            d.iter().enumerate().flat_map(|(i, row)| row.iter().enumerate().map(move |(j, x)| (i, j, x.clone()))),
        )
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.store, Store::Dense(_))
    }

    pub fn get(&self, r: usize, c: usize) -> BigInt {
        assert!(r < self.rows && c < self.cols);
        match &self.store {
            Store::Dense(v) => v[r * self.cols + c].clone(),
            Store::Sparse(s) => s[r].iter().find(|(j, _)| *j == c).map(|(_, x)| x.clone()).unwrap_or_else(BigInt::zero),
        }
    }

    /// Nonzero entries of row `r` in increasing column order.
    pub fn row(&self, r: usize) -> Vec<(usize, BigInt)> {
        match &self.store {
            Store::Dense(v) => (0..self.cols)
                .filter_map(|c| {
                    let x = &v[r * self.cols + c];
                    (!x.is_zero()).then(|| (c, x.clone()))
                })
                .collect(),
            Store::Sparse(s) => {
                let mut row = s[r].clone();
                row.sort_by_key(|(c, _)| *c);
                row
            }
        }
    }

    pub fn row_maps(&self) -> Vec<BTreeMap<usize, BigInt>> {
        (0..self.rows).map(|r| self.row(r).into_iter().collect()).collect()
    }

    pub fn triplets(&self) -> Vec<(usize, usize, BigInt)> {
        (0..self.rows).flat_map(|r| self.row(r).into_iter().map(move |(c, x)| (r, c, x))).collect()
    }

    pub fn nnz(&self) -> usize {
        (0..self.rows).map(|r| self.row(r).len()).sum()
    }

    pub fn is_zero(&self) -> bool {
        match &self.store {
            Store::Dense(v) => v.iter().all(|x| x.is_zero()),
            Store::Sparse(s) => s.iter().all(|r| r.iter().all(|(_, x)| x.is_zero())),
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<BigInt>> {
        let mut d = vec![vec![BigInt::zero(); self.cols]; self.rows];
        for (r, c, x) in self.triplets() {
            d[r][c] = x;
        }
        d
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(self.cols, self.rows, self.triplets().into_iter().map(|(r, c, x)| (c, r, x)))
    }

    pub fn mul(&self, other: &IntMatrix) -> Result<IntMatrix, LinalgError> {
        if self.cols != other.rows {
            return Err(LinalgError::DimensionMismatch(format!(
                "{}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let brows: Vec<Vec<(usize, BigInt)>> = (0..other.rows).map(|k| other.row(k)).collect();
        let data = (0..self.rows)
            .map(|i| {
                let mut acc: BTreeMap<usize, BigInt> = BTreeMap::new();
                for (k, a) in self.row(i) {
                    for (j, b) in &brows[k] {
                        *acc.entry(*j).or_insert_with(BigInt::zero) += &a * b;
                    }
                }
                acc.retain(|_, x| !x.is_zero());
                acc
            })
            .collect();
        Ok(Self::from_row_maps(self.rows, other.cols, data))
    }

    /// Product that panics on a dimension mismatch; for internal use where shapes are known.
    pub fn dot(&self, other: &IntMatrix) -> IntMatrix {
        self.mul(other).expect("matrix shapes")
    }

    fn combine(&self, other: &IntMatrix, sign: i64) -> Result<IntMatrix, LinalgError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut data = self.row_maps();
        for (r, c, x) in other.triplets() {
            let e = data[r].entry(c).or_insert_with(BigInt::zero);
            *e += x * sign;
        }
        for row in data.iter_mut() {
            row.retain(|_, x| !x.is_zero());
        }
        Ok(Self::from_row_maps(self.rows, self.cols, data))
    }

    pub fn add(&self, other: &IntMatrix) -> Result<IntMatrix, LinalgError> {
        self.combine(other, 1)
    }

    pub fn sub(&self, other: &IntMatrix) -> Result<IntMatrix, LinalgError> {
        self.combine(other, -1)
    }

    pub fn plus(&self, other: &IntMatrix) -> IntMatrix {
        self.add(other).expect("matrix shapes")
    }

    pub fn minus(&self, other: &IntMatrix) -> IntMatrix {
        self.sub(other).expect("matrix shapes")
    }

    pub fn scale(&self, k: &BigInt) -> IntMatrix {
        Self::from_triplets(self.rows, self.cols, self.triplets().into_iter().map(|(r, c, x)| (r, c, x * k)))
    }

    pub fn neg(&self) -> IntMatrix {
        self.scale(&BigInt::from(-1))
    }

    pub fn mul_vec(&self, v: &[BigInt]) -> Result<Vec<BigInt>, LinalgError> {
        if v.len() != self.cols {
            return Err(LinalgError::DimensionMismatch(format!("{} columns vs vector of {}", self.cols, v.len())));
        }
        Ok((0..self.rows)
            .map(|r| self.row(r).into_iter().fold(BigInt::zero(), |acc, (c, x)| acc + x * &v[c]))
            .collect())
    }

    pub fn column(&self, c: usize) -> Vec<BigInt> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    /// Rows `r0..r1` and columns `c0..c1`.
    pub fn submatrix(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> IntMatrix {
        Self::from_triplets(
            r1 - r0,
            c1 - c0,
            (r0..r1).flat_map(|r| {
                self.row(r).into_iter().filter(move |(c, _)| *c >= c0 && *c < c1).map(move |(c, x)| (r - r0, c - c0, x))
            }),
        )
    }

    pub fn hstack(parts: &[&IntMatrix]) -> IntMatrix {
        let rows = parts.first().map_or(0, |m| m.rows);
        let mut off = 0;
        let mut trip = Vec::new();
        for m in parts {
            assert_eq!(m.rows, rows, "hstack rows");
            trip.extend(m.triplets().into_iter().map(|(r, c, x)| (r, c + off, x)));
            off += m.cols;
        }
        Self::from_triplets(rows, off, trip)
    }

    pub fn vstack(parts: &[&IntMatrix]) -> IntMatrix {
        let cols = parts.first().map_or(0, |m| m.cols);
        let mut off = 0;
        let mut trip = Vec::new();
        for m in parts {
            assert_eq!(m.cols, cols, "vstack cols");
            trip.extend(m.triplets().into_iter().map(|(r, c, x)| (r + off, c, x)));
            off += m.rows;
        }
        Self::from_triplets(off, cols, trip)
    }

    /// Rank over the rationals.
    pub fn rank(&self) -> usize {
        invariant_factors(self).iter().filter(|d| !d.is_zero()).count()
    }

    /// Determinant of a square matrix by fraction-free elimination.
    pub fn determinant(&self) -> BigInt {
        assert_eq!(self.rows, self.cols, "determinant of a non-square matrix");
        let n = self.rows;
        let mut a = self.to_dense();
        let mut sign = BigInt::one();
        let mut prev = BigInt::one();
        for k in 0..n {
            let Some(p) = (k..n).find(|&i| !a[i][k].is_zero()) else {
                return BigInt::zero();
            };
            if p != k {
                a.swap(p, k);
                sign = -sign;
            }
            for i in k + 1..n {
                for j in k + 1..n {
                    let v = (&a[i][j] * &a[k][k] - &a[i][k] * &a[k][j]) / &prev;
                    a[i][j] = v;
                }
                a[i][k] = BigInt::zero();
            }
            prev = a[k][k].clone();
        }
        if n == 0 {
            BigInt::one()
        } else {
            sign * &a[n - 1][n - 1]
        }
    }
}

impl PartialEq for IntMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.rows == other.rows && self.cols == other.cols && self.triplets() == other.triplets()
    }
}

impl Eq for IntMatrix {}

impl fmt::Display for IntMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in self.to_dense() {
            let s: Vec<String> = row.iter().map(|x| x.to_string()).collect();
            writeln!(f, "[{}]", s.join(" "))?;
        }
        Ok(())
    }
}

/// Serde helpers writing integers as decimal strings; plain JSON integers are accepted on input.
pub mod decimal {
    use num_bigint::BigInt;
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Num {
        Text(String),
        Int(i64),
    }

    fn parse<E: Error>(n: Num) -> Result<BigInt, E> {
        match n {
            Num::Int(x) => Ok(BigInt::from(x)),
            Num::Text(t) => t.parse().map_err(|_| E::custom(format!("not an integer: {t:?}"))),
        }
    }

    pub fn serialize_vec<S: Serializer>(v: &[BigInt], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|x| x.to_string()).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize_vec<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<BigInt>, D::Error> {
        Vec::<Num>::deserialize(d)?.into_iter().map(parse).collect()
    }

    pub fn serialize_triplets<S: Serializer>(v: &[(usize, usize, BigInt)], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|(r, c, x)| (r, c, x.to_string())).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize_triplets<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<(usize, usize, BigInt)>, D::Error> {
        Vec::<(usize, usize, Num)>::deserialize(d)?.into_iter().map(|(r, c, x)| Ok((r, c, parse(x)?))).collect()
    }
}

/// Serialized form: dimensions and (row, col, value) triplets.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    #[serde(serialize_with = "decimal::serialize_triplets", deserialize_with = "decimal::deserialize_triplets")]
    pub entries: Vec<(usize, usize, BigInt)>,
}

impl From<&IntMatrix> for MatrixJson {
    fn from(m: &IntMatrix) -> Self {
        MatrixJson { rows: m.rows, cols: m.cols, entries: m.triplets() }
    }
}

impl From<MatrixJson> for IntMatrix {
    fn from(j: MatrixJson) -> Self {
        IntMatrix::from_triplets(j.rows, j.cols, j.entries)
    }
}

impl Serialize for IntMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        MatrixJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for IntMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let j = MatrixJson::deserialize(d)?;
        for (r, c, _) in &j.entries {
            if *r >= j.rows || *c >= j.cols {
                return Err(serde::de::Error::custom(format!("entry ({r},{c}) out of range")));
            }
        }
        Ok(j.into())
    }
}

#[derive(Clone, Debug)]
pub struct SnfResult {
    pub u: IntMatrix,
    pub d: IntMatrix,
    pub v: IntMatrix,
    pub divisors: Vec<BigInt>,
}

fn find_pivot(a: &[Vec<BigInt>], t: usize) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    for (i, row) in a.iter().enumerate().skip(t) {
        for (j, x) in row.iter().enumerate().skip(t) {
            if x.is_zero() {
                continue;
            }
            match best {
                None => best = Some((i, j)),
                Some((bi, bj)) => {
                    if x.abs() < a[bi][bj].abs() {
                        best = Some((i, j));
                    }
                }
            }
        }
    }
    best
}

fn row_axpy(a: &mut [Vec<BigInt>], dst: usize, src: usize, k: &BigInt) {
    if k.is_zero() {
        return;
    }
    let (s, d) = if src < dst {
        let (lo, hi) = a.split_at_mut(dst);
        (&lo[src], &mut hi[0])
    } else {
        let (lo, hi) = a.split_at_mut(src);
        (&hi[0], &mut lo[dst])
    };
    for (x, y) in d.iter_mut().zip(s.iter()) {
        if !y.is_zero() {
            *x -= k * y;
        }
    }
}

fn col_axpy(a: &mut [Vec<BigInt>], dst: usize, src: usize, k: &BigInt) {
    if k.is_zero() {
        return;
    }
    for row in a.iter_mut() {
        if !row[src].is_zero() {
            let t = k * &row[src];
            row[dst] -= t;
        }
    }
}

fn negate_row(a: &mut [Vec<BigInt>], r: usize) {
    for x in a[r].iter_mut() {
        *x = -x.clone();
    }
}

/// Smith normal form `U * A * V = D` with unimodular `U`, `V`.
///
/// Pivots are chosen by smallest absolute value, ties broken by lowest row then lowest column.
pub fn smith_normal_form(a: &IntMatrix) -> SnfResult {
    let m = a.rows;
    let n = a.cols;
    let mut w = a.to_dense();
    let mut u = IntMatrix::identity(m).to_dense();
    // V is accumulated transposed so that column operations become row operations.
    let mut vt = IntMatrix::identity(n).to_dense();
    let mut t = 0;
    while t < m.min(n) {
        let Some((pi, pj)) = find_pivot(&w, t) else { break };
        w.swap(t, pi);
        u.swap(t, pi);
        if pj != t {
            for row in w.iter_mut() {
                row.swap(t, pj);
            }
            vt.swap(t, pj);
        }
        loop {
            let mut dirty = false;
            for i in t + 1..m {
                if w[i][t].is_zero() {
                    continue;
                }
                let q = w[i][t].div_floor(&w[t][t]);
                row_axpy(&mut w, i, t, &q);
                row_axpy(&mut u, i, t, &q);
                if !w[i][t].is_zero() {
                    dirty = true;
                }
            }
            for j in t + 1..n {
                if w[t][j].is_zero() {
                    continue;
                }
                let q = w[t][j].div_floor(&w[t][t]);
                col_axpy(&mut w, j, t, &q);
                row_axpy(&mut vt, j, t, &q);
                if !w[t][j].is_zero() {
                    dirty = true;
                }
            }
            if !dirty {
                let mut bad = None;
                'scan: for (i, row) in w.iter().enumerate().skip(t + 1) {
                    for x in row.iter().skip(t + 1) {
                        if !x.is_zero() && !x.is_multiple_of(&w[t][t]) {
                            bad = Some(i);
                            break 'scan;
                        }
                    }
                }
                match bad {
                    None => break,
                    Some(i) => {
                        let k = BigInt::from(-1);
                        row_axpy(&mut w, t, i, &k);
                        row_axpy(&mut u, t, i, &k);
                    }
                }
            }
            // Move the smallest entry of row t / column t to the pivot.
            let mut best = (t, t);
            for i in t..m {
                if !w[i][t].is_zero() && w[i][t].abs() < w[best.0][best.1].abs() {
                    best = (i, t);
                }
            }
            for j in t..n {
                if !w[t][j].is_zero() && w[t][j].abs() < w[best.0][best.1].abs() {
                    best = (t, j);
                }
            }
            if best.0 != t {
                w.swap(t, best.0);
                u.swap(t, best.0);
            }
            if best.1 != t {
                for row in w.iter_mut() {
                    row.swap(t, best.1);
                }
                vt.swap(t, best.1);
            }
        }
        if w[t][t].is_negative() {
            negate_row(&mut w, t);
            negate_row(&mut u, t);
        }
        t += 1;
    }
    let divisors = (0..m.min(n)).map(|i| w[i][i].clone()).collect();
    let v = IntMatrix::from_dense(n, n, &vt).transpose();
    SnfResult { u: IntMatrix::from_dense(m, m, &u), d: IntMatrix::from_dense(m, n, &w), v, divisors }
}

/// Sparse row-reduction state shared by the divisor and solver routines.
struct SparseRows {
    rows: Vec<BTreeMap<usize, BigInt>>,
    col_rows: BTreeMap<usize, BTreeSet<usize>>,
    alive: BTreeSet<usize>,
    /// Rows holding a unit entry, keyed by length.
    ready: BTreeSet<(usize, usize)>,
}

fn has_unit(row: &BTreeMap<usize, BigInt>) -> bool {
    row.values().any(|x| x.abs().is_one())
}

impl SparseRows {
    fn new(rows: Vec<BTreeMap<usize, BigInt>>) -> Self {
        let mut col_rows: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for (r, row) in rows.iter().enumerate() {
            for c in row.keys() {
                col_rows.entry(*c).or_default().insert(r);
            }
        }
        let alive = (0..rows.len()).filter(|&r| !rows[r].is_empty()).collect();
        let ready = (0..rows.len()).filter(|&r| has_unit(&rows[r])).map(|r| (rows[r].len(), r)).collect();
        SparseRows { rows, col_rows, alive, ready }
    }

    /// A unit pivot in a shortest row, in the sparsest column of that row; deterministic tie-breaks.
    fn unit_pivot(&self) -> Option<(usize, usize)> {
        let &(_, r) = self.ready.first()?;
        let c = self.rows[r]
            .iter()
            .filter(|(_, x)| x.abs().is_one())
            .min_by_key(|(c, _)| self.col_rows[c].len())
            .map(|(c, _)| *c)?;
        Some((r, c))
    }

    /// Eliminates column `c` from every other row using the unit pivot at `(r, c)`.
    /// Returns the rows touched and the multipliers used.
    fn eliminate(&mut self, r: usize, c: usize) -> Vec<(usize, BigInt)> {
        let piv = self.rows[r][&c].clone();
        let prow = self.rows[r].clone();
        let others: Vec<usize> = self.col_rows[&c].iter().copied().filter(|&x| x != r).collect();
        let mut mults = Vec::new();
        for o in others {
            self.ready.remove(&(self.rows[o].len(), o));
            let k = &self.rows[o][&c] * &piv;
            for (cc, x) in &prow {
                let e = self.rows[o].entry(*cc).or_insert_with(BigInt::zero);
                *e -= &k * x;
                if e.is_zero() {
                    self.rows[o].remove(cc);
                    self.col_rows.get_mut(cc).unwrap().remove(&o);
                } else {
                    self.col_rows.entry(*cc).or_default().insert(o);
                }
            }
            if self.rows[o].is_empty() {
                self.alive.remove(&o);
            } else if has_unit(&self.rows[o]) {
                self.ready.insert((self.rows[o].len(), o));
            }
            mults.push((o, k));
        }
        self.remove_row(r);
        mults
    }

    fn remove_row(&mut self, r: usize) {
        for c in self.rows[r].keys() {
            if let Some(s) = self.col_rows.get_mut(c) {
                s.remove(&r);
            }
        }
        self.ready.remove(&(self.rows[r].len(), r));
        self.alive.remove(&r);
    }
}

/// Invariant factors of `a` (nonzero ones first, in divisibility order, then zeros up to min(rows, cols)).
pub fn invariant_factors(a: &IntMatrix) -> Vec<BigInt> {
    let k = a.rows.min(a.cols);
    let mut sr = SparseRows::new(a.row_maps());
    let mut ones = 0usize;
    while let Some((r, c)) = sr.unit_pivot() {
        sr.eliminate(r, c);
        ones += 1;
    }
    let rest_rows: Vec<usize> = sr.alive.iter().copied().collect();
    let rest_cols: Vec<usize> = sr.col_rows.iter().filter(|(_, s)| !s.is_empty()).map(|(c, _)| *c).collect();
    let cidx: BTreeMap<usize, usize> = rest_cols.iter().enumerate().map(|(i, c)| (*c, i)).collect();
    let small = IntMatrix::from_triplets(
        rest_rows.len(),
        rest_cols.len(),
        rest_rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| sr.rows[*r].iter().map(|(c, x)| (i, cidx[c], x.clone())).collect::<Vec<_>>()),
    );
    let mut out = vec![BigInt::one(); ones];
    out.extend(smith_normal_form(&small).divisors.into_iter().filter(|d| !d.is_zero()));
    out.resize(k, BigInt::zero());
    out
}

/// Some integer `x` with `a * x = b`, or `NoSolution` when none exists.
pub fn solve_integer(a: &IntMatrix, b: &[BigInt]) -> Result<Vec<BigInt>, LinalgError> {
    if b.len() != a.rows {
        return Err(LinalgError::DimensionMismatch(format!(
            "matrix has {} rows but right-hand side has {} entries",
            a.rows,
            b.len()
        )));
    }
    let n = a.cols;
    let mut rhs: Vec<BigInt> = b.to_vec();
    let mut sr = SparseRows::new(a.row_maps());
    for (r, x) in rhs.iter().enumerate() {
        if sr.rows[r].is_empty() && !x.is_zero() {
            return Err(LinalgError::NoSolution);
        }
    }
    // Eliminated pivots: (column, pivot row snapshot, rhs value).
    let mut piv: Vec<(usize, BTreeMap<usize, BigInt>, BigInt)> = Vec::new();
    while let Some((r, c)) = sr.unit_pivot() {
        let prow = sr.rows[r].clone();
        let pb = rhs[r].clone();
        for (o, k) in sr.eliminate(r, c) {
            rhs[o] -= &k * &pb;
            if sr.rows[o].is_empty() && !rhs[o].is_zero() {
                return Err(LinalgError::NoSolution);
            }
        }
        piv.push((c, prow, pb));
    }
    let mut x = vec![BigInt::zero(); n];
    let rest_rows: Vec<usize> = sr.alive.iter().copied().collect();
    let rest_cols: Vec<usize> = sr.col_rows.iter().filter(|(_, s)| !s.is_empty()).map(|(c, _)| *c).collect();
    if !rest_rows.is_empty() {
        let cidx: BTreeMap<usize, usize> = rest_cols.iter().enumerate().map(|(i, c)| (*c, i)).collect();
        let small = IntMatrix::from_triplets(
            rest_rows.len(),
            rest_cols.len(),
            rest_rows
                .iter()
                .enumerate()
                .flat_map(|(i, r)| sr.rows[*r].iter().map(|(c, x)| (i, cidx[c], x.clone())).collect::<Vec<_>>()),
        );
        let sb: Vec<BigInt> = rest_rows.iter().map(|r| rhs[*r].clone()).collect();
        let y = solve_dense(&small, &sb)?;
        for (i, c) in rest_cols.iter().enumerate() {
            x[*c] = y[i].clone();
        }
    }
    for (c, prow, pb) in piv.into_iter().rev() {
        let pv = prow[&c].clone();
        let mut acc = pb;
        for (j, v) in &prow {
            if *j != c {
                acc -= v * &x[*j];
            }
        }
        x[c] = acc * pv;
    }
    debug_assert_eq!(a.mul_vec(&x).unwrap(), b.to_vec());
    Ok(x)
}

fn solve_dense(a: &IntMatrix, b: &[BigInt]) -> Result<Vec<BigInt>, LinalgError> {
    let snf = smith_normal_form(a);
    let c = snf.u.mul_vec(b)?;
    let mut y = vec![BigInt::zero(); a.cols];
    for (i, ci) in c.iter().enumerate() {
        let d = snf.divisors.get(i).cloned().unwrap_or_else(BigInt::zero);
        if d.is_zero() {
            if !ci.is_zero() {
                return Err(LinalgError::NoSolution);
            }
        } else {
            let (q, r) = ci.div_rem(&d);
            if !r.is_zero() {
                return Err(LinalgError::NoSolution);
            }
            y[i] = q;
        }
    }
    snf.v.mul_vec(&y)
}

/// Homology `ker(d_out) / im(d_in)` at the middle term: free rank and torsion coefficients.
pub fn homology_pair(d_in: &IntMatrix, d_out: &IntMatrix) -> Result<(usize, Vec<BigInt>), LinalgError> {
    if d_in.rows != d_out.cols {
        return Err(LinalgError::DimensionMismatch(format!(
            "d_in targets dimension {} but d_out starts at {}",
            d_in.rows, d_out.cols
        )));
    }
    if !d_out.mul(d_in)?.is_zero() {
        return Err(LinalgError::NotAComplex);
    }
    let fin = invariant_factors(d_in);
    let r_in = fin.iter().filter(|d| !d.is_zero()).count();
    let r_out = d_out.rank();
    let torsion = fin.into_iter().filter(|d| !d.is_zero() && !d.is_one()).collect();
    Ok((d_in.rows - r_in - r_out, torsion))
}

/// Canonical representative of `x` modulo the column lattice of `basis`.
///
/// The lattice is brought to column echelon form; `x` is reduced so each pivot coordinate lies in `[0, |pivot|)`.
pub fn reduce_mod_lattice(x: &[BigInt], basis: &IntMatrix) -> Vec<BigInt> {
    let n = basis.rows;
    assert_eq!(x.len(), n);
    let mut cols: Vec<Vec<BigInt>> = (0..basis.cols).map(|c| basis.column(c)).collect();
    let mut echelon: Vec<(usize, Vec<BigInt>)> = Vec::new();
    for row in 0..n {
        loop {
            let nz: Vec<usize> = (0..cols.len()).filter(|&k| !cols[k][row].is_zero()).collect();
            if nz.is_empty() {
                break;
            }
            let best =
                *nz.iter().min_by(|&&a, &&b| cols[a][row].abs().cmp(&cols[b][row].abs()).then(a.cmp(&b))).unwrap();
            let mut again = false;
            for &k in &nz {
                if k == best {
                    continue;
                }
                let q = cols[k][row].div_floor(&cols[best][row]);
                let src = cols[best].clone();
                for (y, s) in cols[k].iter_mut().zip(src.iter()) {
                    *y -= &q * s;
                }
                if !cols[k][row].is_zero() {
                    again = true;
                }
            }
            if !again {
                let mut p = cols.remove(best);
                if p[row].is_negative() {
                    for y in p.iter_mut() {
                        *y = -y.clone();
                    }
                }
                echelon.push((row, p));
                break;
            }
        }
    }
    let mut out = x.to_vec();
    for (row, col) in &echelon {
        let q = out[*row].div_floor(&col[*row]);
        if !q.is_zero() {
            for (y, s) in out.iter_mut().zip(col.iter()) {
                *y -= &q * s;
            }
        }
    }
    out
}

/// Column basis of the integer kernel of `a`.
pub fn kernel_basis(a: &IntMatrix) -> IntMatrix {
    let snf = smith_normal_form(a);
    let r = snf.divisors.iter().filter(|d| !d.is_zero()).count();
    snf.v.submatrix(0, a.cols, r, a.cols)
}

pub fn big(x: i64) -> BigInt {
    BigInt::from(x)
}
