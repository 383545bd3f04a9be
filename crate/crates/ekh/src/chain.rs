//! Bigraded cochain complexes of free abelian groups, chain maps, tensor products and homology.
//!
//! Differentials raise the homological degree `i` by one and preserve the quantum degree `q`.
//! Complexes whose differential naturally lowers degree are stored with negated degrees.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::sync::Arc;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par;
use crate::zlinalg::{
    decimal, invariant_factors, kernel_basis, smith_normal_form, solve_integer, IntMatrix, LinalgError,
};

pub type Bideg = (i64, i64);

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChainError {
    #[error("not a complex at bidegree {0:?}")]
    NotAComplex(Bideg),
    #[error("no homotopy exists at quantum degree {0}")]
    NoHomotopy(i64),
    #[error("shift mismatch: {0:?} vs {1:?}")]
    ShiftMismatch(Bideg, Bideg),
    #[error("maps have different source or target complexes")]
    ComplexMismatch,
    #[error("malformed complex: {0}")]
    Malformed(String),
    #[error("not a chain map at bidegree {0:?}")]
    NotAChainMap(Bideg),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub fn koszul(deg: i64) -> i64 {
    if deg.rem_euclid(2) == 0 {
        1
    } else {
        -1
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct BigradedComplex {
    basis: BTreeMap<Bideg, Vec<String>>,
    diff: BTreeMap<Bideg, IntMatrix>,
}

impl BigradedComplex {
    /// Builds a complex; empty groups are dropped and `d∘d = 0` is checked.
    pub fn new(basis: BTreeMap<Bideg, Vec<String>>, diff: BTreeMap<Bideg, IntMatrix>) -> Result<Self, ChainError> {
        let c = Self::new_unchecked(basis, diff)?;
        c.check_d_squared()?;
        Ok(c)
    }

    /// Builds a complex checking shapes but not `d∘d = 0`.
    pub fn new_unchecked(
        basis: BTreeMap<Bideg, Vec<String>>,
        diff: BTreeMap<Bideg, IntMatrix>,
    ) -> Result<Self, ChainError> {
        let basis: BTreeMap<Bideg, Vec<String>> = basis.into_iter().filter(|(_, v)| !v.is_empty()).collect();
        let mut d2 = BTreeMap::new();
        for ((i, q), m) in diff {
            let src = basis.get(&(i, q)).map_or(0, |v| v.len());
            let tgt = basis.get(&(i + 1, q)).map_or(0, |v| v.len());
            if m.cols() != src || m.rows() != tgt {
                return Err(ChainError::Malformed(format!(
                    "differential at ({i},{q}) is {}x{} but groups have ranks {tgt} <- {src}",
                    m.rows(),
                    m.cols()
                )));
            }
            if src > 0 && tgt > 0 && !m.is_zero() {
                d2.insert((i, q), m);
            }
        }
        Ok(BigradedComplex { basis, diff: d2 })
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// The complex `Z` concentrated at one bidegree.
    pub fn point(bd: Bideg, label: &str) -> Self {
        let mut b = BTreeMap::new();
        b.insert(bd, vec![label.to_string()]);
        BigradedComplex { basis: b, diff: BTreeMap::new() }
    }

    pub fn check_d_squared(&self) -> Result<(), ChainError> {
        for (&(i, q), m) in &self.diff {
            if let Some(n) = self.diff.get(&(i + 1, q)) {
                if !n.dot(m).is_zero() {
                    return Err(ChainError::NotAComplex((i, q)));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self, bd: Bideg) -> usize {
        self.basis.get(&bd).map_or(0, |v| v.len())
    }

    pub fn labels(&self, bd: Bideg) -> &[String] {
        self.basis.get(&bd).map_or(&[], |v| v.as_slice())
    }

    pub fn bidegrees(&self) -> Vec<Bideg> {
        self.basis.keys().copied().collect()
    }

    pub fn basis(&self) -> &BTreeMap<Bideg, Vec<String>> {
        &self.basis
    }

    pub fn qs(&self) -> Vec<i64> {
        let mut v: Vec<i64> = self.basis.keys().map(|b| b.1).collect();
        v.sort();
        v.dedup();
        v
    }

    pub fn total_rank(&self) -> usize {
        self.basis.values().map(|v| v.len()).sum()
    }

    /// Differential from `(i, q)` to `(i + 1, q)`, zero when absent.
    pub fn d(&self, bd: Bideg) -> IntMatrix {
        self.diff.get(&bd).cloned().unwrap_or_else(|| IntMatrix::zeros(self.dim((bd.0 + 1, bd.1)), self.dim(bd)))
    }

    pub fn d_ref(&self, bd: Bideg) -> Option<&IntMatrix> {
        self.diff.get(&bd)
    }

    pub fn index_of(&self, bd: Bideg, label: &str) -> Option<usize> {
        self.labels(bd).iter().position(|l| l == label)
    }

    /// Graded Euler characteristic as a map from `q` to `Σ (-1)^i rank`.
    pub fn euler_characteristic(&self) -> BTreeMap<i64, i64> {
        let mut out = BTreeMap::new();
        for (&(i, q), v) in &self.basis {
            *out.entry(q).or_insert(0) += koszul(i) * v.len() as i64;
        }
        out.retain(|_, x| *x != 0);
        out
    }

    pub fn to_json(&self) -> ComplexJson {
        ComplexJson {
            version: SCHEMA_VERSION,
            groups: self.basis.iter().map(|(&(i, q), b)| GroupJson { i, q, basis: b.clone() }).collect(),
            differentials: self
                .diff
                .iter()
                .map(|(&(i, q), m)| DiffJson { i, q, rows: m.rows(), cols: m.cols(), entries: m.triplets() })
                .collect(),
        }
    }

    pub fn from_json(j: &ComplexJson) -> Result<Self, ChainError> {
        if j.version != SCHEMA_VERSION {
            return Err(ChainError::Malformed(format!("unsupported schema version {}", j.version)));
        }
        let basis = j.groups.iter().map(|g| ((g.i, g.q), g.basis.clone())).collect();
        let mut diff = BTreeMap::new();
        for d in &j.differentials {
            for (r, c, _) in &d.entries {
                if *r >= d.rows || *c >= d.cols {
                    return Err(ChainError::Malformed(format!("entry ({r},{c}) out of range")));
                }
            }
            diff.insert((d.i, d.q), IntMatrix::from_triplets(d.rows, d.cols, d.entries.clone()));
        }
        Self::new(basis, diff)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct GroupJson {
    pub i: i64,
    pub q: i64,
    pub basis: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct DiffJson {
    pub i: i64,
    pub q: i64,
    pub rows: usize,
    pub cols: usize,
    #[serde(serialize_with = "decimal::serialize_triplets", deserialize_with = "decimal::deserialize_triplets")]
    pub entries: Vec<(usize, usize, BigInt)>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct ComplexJson {
    pub version: u32,
    pub groups: Vec<GroupJson>,
    pub differentials: Vec<DiffJson>,
}

/// Incremental construction of a complex from labelled generators and differential coefficients.
#[derive(Default)]
pub struct ComplexBuilder {
    basis: BTreeMap<Bideg, Vec<String>>,
    index: HashMap<String, (Bideg, usize)>,
    entries: BTreeMap<Bideg, Vec<(usize, usize, BigInt)>>,
}

impl ComplexBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_generator(&mut self, bd: Bideg, label: String) -> usize {
        let v = self.basis.entry(bd).or_default();
        let k = v.len();
        assert!(self.index.insert(label.clone(), (bd, k)).is_none(), "duplicate label {label}");
        v.push(label);
        k
    }

    pub fn lookup(&self, label: &str) -> Option<(Bideg, usize)> {
        self.index.get(label).copied()
    }

    /// Adds `coef * target` to the differential of `source`.
    pub fn add_term(&mut self, source: &str, target: &str, coef: BigInt) {
        let (sb, si) = self.index[source];
        let (tb, ti) = self.index[target];
        assert_eq!((sb.0 + 1, sb.1), tb, "differential must go from (i,q) to (i+1,q)");
        self.entries.entry(sb).or_default().push((ti, si, coef));
    }

    pub fn add_term_idx(&mut self, sb: Bideg, si: usize, ti: usize, coef: BigInt) {
        self.entries.entry(sb).or_default().push((ti, si, coef));
    }

    pub fn build(self) -> Result<BigradedComplex, ChainError> {
        let mut diff = BTreeMap::new();
        for (bd, e) in self.entries {
            let src = self.basis.get(&bd).map_or(0, |v| v.len());
            let tgt = self.basis.get(&(bd.0 + 1, bd.1)).map_or(0, |v| v.len());
            diff.insert(bd, IntMatrix::from_triplets(tgt, src, e));
        }
        BigradedComplex::new(self.basis, diff)
    }
}

/// A chain map of bidegree `shift`; `blocks[(i,q)]` maps `C^{i,q}` to `D^{(i,q)+shift}`.
#[derive(Clone, Debug)]
pub struct ChainMap {
    pub source: Arc<BigradedComplex>,
    pub target: Arc<BigradedComplex>,
    pub shift: Bideg,
    pub blocks: BTreeMap<Bideg, IntMatrix>,
}

fn add_bd(a: Bideg, b: Bideg) -> Bideg {
    (a.0 + b.0, a.1 + b.1)
}

impl ChainMap {
    /// Builds a map, dropping zero blocks and checking shapes (but not commutation).
    pub fn new(
        source: Arc<BigradedComplex>,
        target: Arc<BigradedComplex>,
        shift: Bideg,
        blocks: BTreeMap<Bideg, IntMatrix>,
    ) -> Result<Self, ChainError> {
        let mut b2 = BTreeMap::new();
        for (bd, m) in blocks {
            let t = add_bd(bd, shift);
            if m.cols() != source.dim(bd) || m.rows() != target.dim(t) {
                return Err(ChainError::Malformed(format!(
                    "block at {bd:?} is {}x{}, expected {}x{}",
                    m.rows(),
                    m.cols(),
                    target.dim(t),
                    source.dim(bd)
                )));
            }
            if !m.is_zero() {
                b2.insert(bd, m);
            }
        }
        Ok(ChainMap { source, target, shift, blocks: b2 })
    }

    pub fn identity(c: Arc<BigradedComplex>) -> Self {
        let blocks = c.bidegrees().into_iter().map(|bd| (bd, IntMatrix::identity(c.dim(bd)))).collect();
        ChainMap { source: c.clone(), target: c, shift: (0, 0), blocks }
    }

    pub fn zero(source: Arc<BigradedComplex>, target: Arc<BigradedComplex>, shift: Bideg) -> Self {
        ChainMap { source, target, shift, blocks: BTreeMap::new() }
    }

    pub fn block(&self, bd: Bideg) -> IntMatrix {
        self.blocks
            .get(&bd)
            .cloned()
            .unwrap_or_else(|| IntMatrix::zeros(self.target.dim(add_bd(bd, self.shift)), self.source.dim(bd)))
    }

    pub fn is_zero(&self) -> bool {
        self.blocks.values().all(|m| m.is_zero())
    }

    /// Checks `d_target ∘ f = f ∘ d_source` at every bidegree.
    pub fn check_chain_map(&self) -> Result<(), ChainError> {
        let mut bds: Vec<Bideg> = self.source.bidegrees();
        bds.extend(self.source.bidegrees().into_iter().map(|(i, q)| (i - 1, q)));
        bds.sort();
        bds.dedup();
        for bd in bds {
            let lhs = self.target.d(add_bd(bd, self.shift)).dot(&self.block(bd));
            let rhs = self.block((bd.0 + 1, bd.1)).dot(&self.source.d(bd));
            if lhs != rhs {
                return Err(ChainError::NotAChainMap(bd));
            }
        }
        Ok(())
    }

    fn same_shape(&self, other: &ChainMap) -> Result<(), ChainError> {
        if self.shift != other.shift {
            return Err(ChainError::ShiftMismatch(self.shift, other.shift));
        }
        if self.source != other.source || self.target != other.target {
            return Err(ChainError::ComplexMismatch);
        }
        Ok(())
    }

    fn combine(&self, other: &ChainMap, sign: i64) -> Result<ChainMap, ChainError> {
        self.same_shape(other)?;
        let mut keys: Vec<Bideg> = self.blocks.keys().chain(other.blocks.keys()).copied().collect();
        keys.sort();
        keys.dedup();
        let blocks = keys
            .into_iter()
            .map(|bd| {
                let m = if sign > 0 {
                    self.block(bd).plus(&other.block(bd))
                } else {
                    self.block(bd).minus(&other.block(bd))
                };
                (bd, m)
            })
            .collect();
        ChainMap::new(self.source.clone(), self.target.clone(), self.shift, blocks)
    }

    pub fn add(&self, other: &ChainMap) -> Result<ChainMap, ChainError> {
        self.combine(other, 1)
    }

    pub fn sub(&self, other: &ChainMap) -> Result<ChainMap, ChainError> {
        self.combine(other, -1)
    }

    pub fn scale(&self, k: i64) -> ChainMap {
        let k = BigInt::from(k);
        let blocks = self.blocks.iter().map(|(bd, m)| (*bd, m.scale(&k))).collect();
        ChainMap::new(self.source.clone(), self.target.clone(), self.shift, blocks).expect("same shapes")
    }

    pub fn neg(&self) -> ChainMap {
        self.scale(-1)
    }

    /// `next ∘ self`.
    pub fn then(&self, next: &ChainMap) -> Result<ChainMap, ChainError> {
        if *self.target != *next.source {
            return Err(ChainError::ComplexMismatch);
        }
        let shift = add_bd(self.shift, next.shift);
        let blocks = self.blocks.iter().map(|(bd, m)| (*bd, next.block(add_bd(*bd, self.shift)).dot(m))).collect();
        ChainMap::new(self.source.clone(), next.target.clone(), shift, blocks)
    }

    pub fn power(&self, n: usize) -> Result<ChainMap, ChainError> {
        let mut acc = ChainMap::identity(self.source.clone());
        for _ in 0..n {
            acc = acc.then(self)?;
        }
        Ok(acc)
    }

    /// Same blocks viewed between equal copies of the source and target.
    pub fn rebase(&self, source: Arc<BigradedComplex>, target: Arc<BigradedComplex>) -> Result<ChainMap, ChainError> {
        if *source != *self.source || *target != *self.target {
            return Err(ChainError::ComplexMismatch);
        }
        Ok(ChainMap { source, target, shift: self.shift, blocks: self.blocks.clone() })
    }

    pub fn equals(&self, other: &ChainMap) -> bool {
        self.sub(other).map(|m| m.is_zero()).unwrap_or(false)
    }

    pub fn to_json(&self) -> ChainMapJson {
        ChainMapJson {
            version: SCHEMA_VERSION,
            shift: self.shift,
            blocks: self
                .blocks
                .iter()
                .map(|(&(i, q), m)| DiffJson { i, q, rows: m.rows(), cols: m.cols(), entries: m.triplets() })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct ChainMapJson {
    pub version: u32,
    pub shift: Bideg,
    pub blocks: Vec<DiffJson>,
}

/// A degree `(shift.0 - 1, shift.1)` map witnessing `d∘h + h∘d = f - g`.
#[derive(Clone, Debug)]
pub struct Homotopy {
    pub shift: Bideg,
    pub blocks: BTreeMap<Bideg, IntMatrix>,
}

impl Homotopy {
    pub fn block(&self, c: &BigradedComplex, d: &BigradedComplex, bd: Bideg) -> IntMatrix {
        self.blocks.get(&bd).cloned().unwrap_or_else(|| IntMatrix::zeros(d.dim(add_bd(bd, self.shift)), c.dim(bd)))
    }

    pub fn nonzero_entries(&self) -> usize {
        self.blocks.values().map(|m| m.nnz()).sum()
    }

    /// Checks `d∘h + h∘d = f - g` blockwise.
    pub fn verify(&self, f: &ChainMap, g: &ChainMap) -> bool {
        let Ok(diff) = f.sub(g) else { return false };
        let c = &f.source;
        let d = &f.target;
        let mut bds = c.bidegrees();
        bds.extend(diff.blocks.keys().copied());
        bds.sort();
        bds.dedup();
        bds.into_iter().all(|bd| {
            let tb = add_bd(bd, self.shift);
            let lhs = d.d(tb).dot(&self.block(c, d, bd)).plus(&self.block(c, d, (bd.0 + 1, bd.1)).dot(&c.d(bd)));
            lhs == diff.block(bd)
        })
    }
}

/// Generators of `H^{i,q}` as explicit cycles, with their orders (zero for free summands).
#[derive(Clone, Debug)]
pub struct HomologyBasis {
    pub bideg: Bideg,
    pub cycles: Vec<Vec<BigInt>>,
    pub orders: Vec<BigInt>,
    kernel: IntMatrix,
    coords: Vec<Vec<BigInt>>,
}

pub fn homology_basis(c: &BigradedComplex, bd: Bideg) -> Result<HomologyBasis, ChainError> {
    let m = c.dim(bd);
    let kernel = kernel_basis(&c.d(bd));
    let r = kernel.cols();
    let incoming = c.d((bd.0 - 1, bd.1));
    let mut rel = Vec::with_capacity(incoming.cols());
    for j in 0..incoming.cols() {
        rel.push(solve_integer(&kernel, &incoming.column(j))?);
    }
    let rel = IntMatrix::from_dense(rel.len(), r, &rel).transpose();
    let (u, divisors) = if r == 0 || rel.cols() == 0 {
        (IntMatrix::identity(r), vec![])
    } else {
        let snf = smith_normal_form(&rel);
        (snf.u, snf.divisors)
    };
    let u_dense = u.to_dense();
    let mut cycles = vec![];
    let mut orders = vec![];
    let mut coords = vec![];
    for t in 0..r {
        let ord = divisors.get(t).map(|d| d.abs()).unwrap_or_else(BigInt::zero);
        if ord.is_one() {
            continue;
        }
        let mut e = vec![BigInt::zero(); r];
        e[t] = BigInt::one();
        let col = solve_integer(&u, &e)?;
        cycles.push(if m == 0 { vec![] } else { kernel.mul_vec(&col)? });
        orders.push(ord);
        coords.push(u_dense[t].clone());
    }
    Ok(HomologyBasis { bideg: bd, cycles, orders, kernel, coords })
}

impl HomologyBasis {
    pub fn rank(&self) -> usize {
        self.cycles.len()
    }

    /// Coordinates of the class of cycle `z`, torsion entries reduced to `0..order`.
    pub fn coordinates(&self, z: &[BigInt]) -> Result<Vec<BigInt>, ChainError> {
        if self.cycles.is_empty() {
            return Ok(vec![]);
        }
        let y = solve_integer(&self.kernel, z).map_err(|_| ChainError::Malformed("not a cycle".into()))?;
        Ok(self
            .coords
            .iter()
            .zip(&self.orders)
            .map(|(row, ord)| {
                let v: BigInt = row.iter().zip(&y).map(|(a, b)| a * b).sum();
                if ord.is_zero() {
                    v
                } else {
                    v.mod_floor(ord)
                }
            })
            .collect())
    }

    /// Whether two coordinate vectors name the same class.
    pub fn same_class(&self, a: &[BigInt], b: &[BigInt]) -> bool {
        a.len() == b.len()
            && a.iter().zip(b).zip(&self.orders).all(|((x, y), o)| {
                let d = x - y;
                if o.is_zero() {
                    d.is_zero()
                } else {
                    d.mod_floor(o).is_zero()
                }
            })
    }
}

/// Matrix of the map induced by `f` from the classes of `src` to those of `tgt`.
pub fn induced_on_homology(f: &ChainMap, src: &HomologyBasis, tgt: &HomologyBasis) -> Result<IntMatrix, ChainError> {
    if add_bd(src.bideg, f.shift) != tgt.bideg {
        return Err(ChainError::Malformed("bidegrees do not match the map".into()));
    }
    let block = f.block(src.bideg);
    let mut cols = vec![];
    for g in &src.cycles {
        cols.push(tgt.coordinates(&block.mul_vec(g)?)?);
    }
    Ok(IntMatrix::from_dense(cols.len(), tgt.rank(), &cols).transpose())
}

/// Solves for `h` with `d∘h + h∘d = f - g`, one stacked integer system per quantum degree.
pub fn find_homotopy(f: &ChainMap, g: &ChainMap) -> Result<Homotopy, ChainError> {
    f.same_shape(g)?;
    let diff = f.sub(g)?;
    let c = f.source.clone();
    let d = f.target.clone();
    let (di, dq) = f.shift;
    let hshift = (di - 1, dq);
    let qs = c.qs();
    let results: Vec<Result<BTreeMap<Bideg, IntMatrix>, ChainError>> = par::map(&qs, |&q| {
        let is: Vec<i64> = c.bidegrees().into_iter().filter(|b| b.1 == q).map(|b| b.0).collect();
        // Unknown blocks h_i : C^{i,q} -> D^{i+di-1,q+dq}.
        let mut var_off: BTreeMap<i64, (usize, usize, usize)> = BTreeMap::new();
        let mut nvar = 0usize;
        for &i in &is {
            let rows = d.dim((i + di - 1, q + dq));
            let cols = c.dim((i, q));
            if rows > 0 && cols > 0 {
                var_off.insert(i, (nvar, rows, cols));
                nvar += rows * cols;
            }
        }
        let mut eq_rows: Vec<BTreeMap<usize, BigInt>> = Vec::new();
        let mut rhs: Vec<BigInt> = Vec::new();
        for &i in &is {
            let rows = d.dim((i + di, q + dq));
            let cols = c.dim((i, q));
            if rows == 0 || cols == 0 {
                continue;
            }
            let target = diff.block((i, q)).to_dense();
            let dd = d.d((i + di - 1, q + dq));
            let dc = c.d((i, q));
            let mut block_rows: Vec<BTreeMap<usize, BigInt>> = vec![BTreeMap::new(); rows * cols];
            if let Some(&(off, hr, hc)) = var_off.get(&i) {
                // (dD h_i)[r, col] = Σ_k dD[r,k] h_i[k,col]
                for (r, k, x) in dd.triplets() {
                    for col in 0..cols {
                        debug_assert!(k < hr && col < hc);
                        let v = off + k * hc + col;
                        *block_rows[r * cols + col].entry(v).or_insert_with(BigInt::zero) += &x;
                    }
                }
            }
            if let Some(&(off, _hr, hc)) = var_off.get(&(i + 1)) {
                // (h_{i+1} dC)[r, col] = Σ_k h_{i+1}[r,k] dC[k,col]
                for (k, col, x) in dc.triplets() {
                    for r in 0..rows {
                        let v = off + r * hc + k;
                        *block_rows[r * cols + col].entry(v).or_insert_with(BigInt::zero) += &x;
                    }
                }
            }
            for r in 0..rows {
                for col in 0..cols {
                    let mut row = std::mem::take(&mut block_rows[r * cols + col]);
                    row.retain(|_, x| !x.is_zero());
                    let t = target[r][col].clone();
                    if row.is_empty() && t.is_zero() {
                        continue;
                    }
                    eq_rows.push(row);
                    rhs.push(t);
                }
            }
        }
        let mut out = BTreeMap::new();
        if eq_rows.is_empty() {
            return Ok(out);
        }
        let a = IntMatrix::from_row_maps(eq_rows.len(), nvar, eq_rows);
        let x = match solve_integer(&a, &rhs) {
            Ok(x) => x,
            Err(LinalgError::NoSolution) => return Err(ChainError::NoHomotopy(q)),
            Err(e) => return Err(e.into()),
        };
        for (&i, &(off, hr, hc)) in &var_off {
            let m = IntMatrix::from_triplets(
                hr,
                hc,
                (0..hr).flat_map(|r| (0..hc).map(move |cc| (r, cc))).filter_map(|(r, cc)| {
                    let v = &x[off + r * hc + cc];
                    (!v.is_zero()).then(|| (r, cc, v.clone()))
                }),
            );
            if !m.is_zero() {
                out.insert((i, q), m);
            }
        }
        Ok(out)
    });
    let mut blocks = BTreeMap::new();
    for r in results {
        blocks.extend(r?);
    }
    Ok(Homotopy { shift: hshift, blocks })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HomologyGroup {
    pub free_rank: usize,
    #[serde(serialize_with = "decimal::serialize_vec", deserialize_with = "decimal::deserialize_vec")]
    pub torsion: Vec<BigInt>,
}

impl HomologyGroup {
    pub fn is_zero(&self) -> bool {
        self.free_rank == 0 && self.torsion.is_empty()
    }
}

impl std::fmt::Display for HomologyGroup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut parts = Vec::new();
        if self.free_rank == 1 {
            parts.push("Z".to_string());
        } else if self.free_rank > 1 {
            parts.push(format!("Z^{}", self.free_rank));
        }
        let mut t = self.torsion.clone();
        t.sort();
        let mut k = 0;
        while k < t.len() {
            let mut j = k;
            while j < t.len() && t[j] == t[k] {
                j += 1;
            }
            if j - k == 1 {
                parts.push(format!("Z/{}", t[k]));
            } else {
                parts.push(format!("(Z/{})^{}", t[k], j - k));
            }
            k = j;
        }
        if parts.is_empty() {
            write!(f, "0")
        } else {
            write!(f, "{}", parts.join("+"))
        }
    }
}

/// Nonzero homology groups by bidegree.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct HomologyTable {
    pub entries: BTreeMap<Bideg, HomologyGroup>,
}

impl HomologyTable {
    pub fn get(&self, bd: Bideg) -> HomologyGroup {
        self.entries.get(&bd).cloned().unwrap_or(HomologyGroup { free_rank: 0, torsion: vec![] })
    }

    pub fn total_free_rank(&self) -> usize {
        self.entries.values().map(|g| g.free_rank).sum()
    }

    pub fn torsion_count(&self, n: i64) -> usize {
        let n = BigInt::from(n);
        self.entries.values().map(|g| g.torsion.iter().filter(|t| **t == n).count()).sum()
    }

    pub fn all_torsion(&self) -> Vec<BigInt> {
        let mut v: Vec<BigInt> = self.entries.values().flat_map(|g| g.torsion.iter().cloned()).collect();
        v.sort();
        v
    }

    /// Table with `q ↦ -q`.
    pub fn mirrored(&self) -> HomologyTable {
        HomologyTable { entries: self.entries.iter().map(|(&(i, q), g)| ((i, -q), g.clone())).collect() }
    }

    pub fn restrict_i(&self, keep: impl Fn(i64) -> bool) -> HomologyTable {
        HomologyTable {
            entries: self.entries.iter().filter(|(bd, _)| keep(bd.0)).map(|(k, v)| (*k, v.clone())).collect(),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<serde_json::Value> = self
            .entries
            .iter()
            .map(|(&(i, q), g)| {
                serde_json::json!({
                    "i": i,
                    "q": q,
                    "free_rank": g.free_rank,
                    "torsion": g.torsion.iter().map(|t| t.to_string()).collect::<Vec<_>>(),
                })
            })
            .collect();
        serde_json::json!({ "version": SCHEMA_VERSION, "homology": rows })
    }

    /// Aligned text table with homological degree across and quantum degree down.
    pub fn to_text(&self) -> String {
        if self.entries.is_empty() {
            return "(zero)\n".to_string();
        }
        let imin = self.entries.keys().map(|b| b.0).min().unwrap();
        let imax = self.entries.keys().map(|b| b.0).max().unwrap();
        let mut qs: Vec<i64> = self.entries.keys().map(|b| b.1).collect();
        qs.sort();
        qs.dedup();
        qs.reverse();
        let cell = |i: i64, q: i64| -> String {
            let g = self.get((i, q));
            if g.is_zero() {
                ".".to_string()
            } else {
                g.to_string()
            }
        };
        let mut width = 3;
        for i in imin..=imax {
            width = width.max(format!("{i}").len());
            for &q in &qs {
                width = width.max(cell(i, q).len());
            }
        }
        let mut s = String::new();
        let _ = write!(s, "{:>5} |", "q\\i");
        for i in imin..=imax {
            let _ = write!(s, " {:>w$}", i, w = width);
        }
        s.push('\n');
        let _ = writeln!(s, "{}", "-".repeat(7 + (width + 1) * (imax - imin + 1) as usize));
        for &q in &qs {
            let _ = write!(s, "{:>5} |", q);
            for i in imin..=imax {
                let _ = write!(s, " {:>w$}", cell(i, q), w = width);
            }
            s.push('\n');
        }
        s
    }
}

/// Homology at every bidegree, computed in parallel.
pub fn homology(c: &BigradedComplex) -> Result<HomologyTable, ChainError> {
    c.check_d_squared()?;
    let maps: Vec<Bideg> = c.diff.keys().copied().collect();
    let factors: BTreeMap<Bideg, Vec<BigInt>> =
        maps.iter().copied().zip(par::map(&maps, |&bd| invariant_factors(&c.diff[&bd]))).collect();
    let mut entries = BTreeMap::new();
    for (i, q) in c.bidegrees() {
        let fin = factors.get(&(i - 1, q)).map_or(&[][..], |v| &v[..]);
        let r_in = fin.iter().filter(|d| !d.is_zero()).count();
        let r_out = factors.get(&(i, q)).map_or(0, |v| v.iter().filter(|d| !d.is_zero()).count());
        let torsion = fin.iter().filter(|d| !d.is_zero() && !d.is_one()).cloned().collect();
        let g = HomologyGroup { free_rank: c.dim((i, q)) - r_in - r_out, torsion };
        if !g.is_zero() {
            entries.insert((i, q), g);
        }
    }
    Ok(HomologyTable { entries })
}

/// Shift: the group at `(i, q)` of the result is the group at `(i - n, q - m)` of `c`.
pub fn shift(c: &BigradedComplex, n: i64, m: i64) -> BigradedComplex {
    BigradedComplex {
        basis: c.basis.iter().map(|(&(i, q), v)| ((i + n, q + m), v.clone())).collect(),
        diff: c.diff.iter().map(|(&(i, q), d)| ((i + n, q + m), d.clone())).collect(),
    }
}

/// Index of a basis element of a tensor product: one `(bidegree, position)` per factor.
pub type MultiIndex = Vec<(Bideg, usize)>;

/// A tensor product of several complexes with its factor bookkeeping.
#[derive(Clone, Debug)]
pub struct TensorProduct {
    pub complex: Arc<BigradedComplex>,
    pub factors: Vec<Arc<BigradedComplex>>,
    /// For each bidegree of the product, the multi-index of each basis element.
    pub index: BTreeMap<Bideg, Vec<MultiIndex>>,
    lookup: HashMap<MultiIndex, (Bideg, usize)>,
}

impl TensorProduct {
    pub fn locate(&self, mi: &MultiIndex) -> Option<(Bideg, usize)> {
        self.lookup.get(mi).copied()
    }

    pub fn element(&self, bd: Bideg, k: usize) -> &MultiIndex {
        &self.index[&bd][k]
    }
}

/// Tensor product of the given complexes with the Koszul sign rule, basis in lexicographic factor order.
pub fn tensor_many(factors: &[Arc<BigradedComplex>]) -> TensorProduct {
    let mut tuples: Vec<MultiIndex> = vec![Vec::new()];
    for f in factors {
        let gens: Vec<(Bideg, usize)> =
            f.bidegrees().into_iter().flat_map(|bd| (0..f.dim(bd)).map(move |k| (bd, k))).collect();
        let mut next = Vec::with_capacity(tuples.len() * gens.len());
        for t in &tuples {
            for g in &gens {
                let mut t2 = t.clone();
                t2.push(*g);
                next.push(t2);
            }
        }
        tuples = next;
    }
    let mut index: BTreeMap<Bideg, Vec<MultiIndex>> = BTreeMap::new();
    for t in tuples {
        let bd = t.iter().fold((0, 0), |acc, (b, _)| add_bd(acc, *b));
        index.entry(bd).or_default().push(t);
    }
    let mut lookup = HashMap::new();
    for (bd, v) in &index {
        for (k, t) in v.iter().enumerate() {
            lookup.insert(t.clone(), (*bd, k));
        }
    }
    let label = |t: &MultiIndex| -> String {
        t.iter().enumerate().map(|(j, (b, k))| factors[j].labels(*b)[*k].clone()).collect::<Vec<_>>().join("⊗")
    };
    let basis: BTreeMap<Bideg, Vec<String>> =
        index.iter().map(|(bd, v)| (*bd, v.iter().map(label).collect())).collect();
    // Column lists of each factor differential, cached.
    let dcols: Vec<BTreeMap<Bideg, Vec<Vec<(usize, BigInt)>>>> = factors
        .iter()
        .map(|f| {
            f.bidegrees()
                .into_iter()
                .map(|bd| {
                    let d = f.d(bd);
                    let mut cols = vec![Vec::new(); f.dim(bd)];
                    for (r, c, x) in d.triplets() {
                        cols[c].push((r, x));
                    }
                    (bd, cols)
                })
                .collect()
        })
        .collect();
    let mut diff = BTreeMap::new();
    for (bd, elems) in &index {
        let tb = (bd.0 + 1, bd.1);
        let Some(tgt) = index.get(&tb) else { continue };
        let mut trip = Vec::new();
        for (col, t) in elems.iter().enumerate() {
            let mut sign_deg = 0i64;
            for (j, (b, k)) in t.iter().enumerate() {
                let s = koszul(sign_deg);
                for (r, x) in &dcols[j][b][*k] {
                    let mut t2 = t.clone();
                    t2[j] = ((b.0 + 1, b.1), *r);
                    let (tbd, row) = lookup[&t2];
                    debug_assert_eq!(tbd, tb);
                    trip.push((row, col, x * s));
                }
                sign_deg += b.0;
            }
        }
        diff.insert(*bd, IntMatrix::from_triplets(tgt.len(), elems.len(), trip));
    }
    let complex = Arc::new(BigradedComplex::new(basis, diff).expect("tensor of complexes is a complex"));
    TensorProduct { complex, factors: factors.to_vec(), index, lookup }
}

pub fn tensor(c: &BigradedComplex, d: &BigradedComplex) -> BigradedComplex {
    (*tensor_many(&[Arc::new(c.clone()), Arc::new(d.clone())]).complex).clone()
}

pub fn tensor_power(c: &Arc<BigradedComplex>, p: usize) -> TensorProduct {
    tensor_many(&vec![c.clone(); p])
}

/// Tensor product of chain maps `f_1 ⊗ ... ⊗ f_k` between tensor products, with Koszul signs.
pub fn tensor_maps(maps: &[&ChainMap], src: &TensorProduct, tgt: &TensorProduct) -> Result<ChainMap, ChainError> {
    let shift = maps.iter().fold((0, 0), |acc, m| add_bd(acc, m.shift));
    let dense: Vec<BTreeMap<Bideg, Vec<Vec<(usize, BigInt)>>>> = maps
        .iter()
        .map(|m| {
            m.blocks
                .iter()
                .map(|(bd, b)| {
                    let mut cols = vec![Vec::new(); b.cols()];
                    for (r, c, x) in b.triplets() {
                        cols[c].push((r, x));
                    }
                    (*bd, cols)
                })
                .collect()
        })
        .collect();
    let mut blocks = BTreeMap::new();
    for (bd, elems) in &src.index {
        let tbd = add_bd(*bd, shift);
        let mut trip = Vec::new();
        for (col, t) in elems.iter().enumerate() {
            // Expand the product of factor images.
            let mut partial: Vec<(MultiIndex, BigInt)> = vec![(Vec::new(), BigInt::one())];
            let mut passed_shift = 0i64;
            for (j, (b, k)) in t.iter().enumerate() {
                let imgs = dense[j].get(b).map(|cols| cols[*k].clone()).unwrap_or_default();
                let s = koszul(passed_shift * b.0);
                let tb = add_bd(*b, maps[j].shift);
                let mut next = Vec::new();
                for (mi, c) in &partial {
                    for (r, x) in &imgs {
                        let mut mi2 = mi.clone();
                        mi2.push((tb, *r));
                        next.push((mi2, c * x * s));
                    }
                }
                partial = next;
                passed_shift += maps[j].shift.0;
            }
            for (mi, c) in partial {
                let (tb2, row) = tgt.locate(&mi).ok_or(ChainError::ComplexMismatch)?;
                debug_assert_eq!(tb2, tbd);
                trip.push((row, col, c));
            }
        }
        blocks.insert(*bd, IntMatrix::from_triplets(tgt.complex.dim(tbd), elems.len(), trip));
    }
    ChainMap::new(src.complex.clone(), tgt.complex.clone(), shift, blocks)
}

/// The cyclic permutation `x_1⊗…⊗x_p ↦ (-1)^{|x_p|(|x_1|+…+|x_{p-1}|)} x_p⊗x_1⊗…⊗x_{p-1}`.
pub fn cyclic_action_on(tp: &TensorProduct) -> ChainMap {
    let mut blocks = BTreeMap::new();
    for (bd, elems) in &tp.index {
        let trip = elems
            .iter()
            .enumerate()
            .map(|(col, t)| {
                let p = t.len();
                let last = t[p - 1].0 .0;
                let rest: i64 = t[..p - 1].iter().map(|(b, _)| b.0).sum();
                let mut t2 = Vec::with_capacity(p);
                t2.push(t[p - 1]);
                t2.extend_from_slice(&t[..p - 1]);
                let (_, row) = tp.lookup[&t2];
                (row, col, BigInt::from(koszul(last * rest)))
            })
            .collect::<Vec<_>>();
        blocks.insert(*bd, IntMatrix::from_triplets(elems.len(), elems.len(), trip));
    }
    ChainMap::new(tp.complex.clone(), tp.complex.clone(), (0, 0), blocks).expect("shape")
}

pub fn cyclic_action(c: &Arc<BigradedComplex>, p: usize) -> ChainMap {
    cyclic_action_on(&tensor_power(c, p))
}

/// The interval complex: `s` in degree -1, `s0, s1` in degree 0, `d s = s1 - s0`.
pub fn interval_complex() -> BigradedComplex {
    let mut basis = BTreeMap::new();
    basis.insert((-1, 0), vec!["s".to_string()]);
    basis.insert((0, 0), vec!["s0".to_string(), "s1".to_string()]);
    let mut diff = BTreeMap::new();
    diff.insert((-1, 0), IntMatrix::from_rows(&[vec![-1], vec![1]]));
    BigradedComplex::new(basis, diff).expect("interval complex")
}

/// Direct sum of complexes with labels prefixed by the summand index.
pub fn direct_sum(parts: &[&BigradedComplex]) -> BigradedComplex {
    let mut basis: BTreeMap<Bideg, Vec<String>> = BTreeMap::new();
    let mut offsets: Vec<BTreeMap<Bideg, usize>> = Vec::new();
    for (k, c) in parts.iter().enumerate() {
        let mut off = BTreeMap::new();
        for (bd, v) in c.basis() {
            let e = basis.entry(*bd).or_default();
            off.insert(*bd, e.len());
            e.extend(v.iter().map(|l| format!("{k}:{l}")));
        }
        offsets.push(off);
    }
    let mut trip: BTreeMap<Bideg, Vec<(usize, usize, BigInt)>> = BTreeMap::new();
    for (k, c) in parts.iter().enumerate() {
        for (bd, m) in &c.diff {
            let so = offsets[k][bd];
            let to = offsets[k][&(bd.0 + 1, bd.1)];
            trip.entry(*bd).or_default().extend(m.triplets().into_iter().map(|(r, cc, x)| (r + to, cc + so, x)));
        }
    }
    let diff = trip
        .into_iter()
        .map(|(bd, t)| {
            let rows = basis.get(&(bd.0 + 1, bd.1)).map_or(0, |v| v.len());
            let cols = basis[&bd].len();
            (bd, IntMatrix::from_triplets(rows, cols, t))
        })
        .collect();
    BigradedComplex::new(basis, diff).expect("direct sum")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zlinalg::big;

    fn two_term(k: i64) -> BigradedComplex {
        let mut b = BTreeMap::new();
        b.insert((0, 0), vec!["a".into()]);
        b.insert((1, 0), vec!["b".into()]);
        let mut d = BTreeMap::new();
        d.insert((0, 0), IntMatrix::from_rows(&[vec![k]]));
        BigradedComplex::new(b, d).unwrap()
    }

    #[test]
    fn interval_homology() {
        let h = homology(&interval_complex()).unwrap();
        assert_eq!(h.get((0, 0)), HomologyGroup { free_rank: 1, torsion: vec![] });
        assert!(h.get((-1, 0)).is_zero());
    }

    #[test]
    fn two_term_torsion() {
        let h = homology(&two_term(2)).unwrap();
        assert_eq!(h.get((1, 0)).torsion, vec![big(2)]);
        assert!(h.get((0, 0)).is_zero());
    }

    #[test]
    fn tensor_interval_square() {
        let i = interval_complex();
        let t = tensor(&i, &i);
        assert_eq!(t.labels((-2, 0)), &["s⊗s".to_string()]);
        // d(s⊗s) = (s1 - s0)⊗s - s⊗(s1 - s0)
        let d = t.d((-2, 0));
        let val = |l: &str| d.get(t.index_of((-1, 0), l).unwrap(), 0);
        assert_eq!(val("s1⊗s"), big(1));
        assert_eq!(val("s0⊗s"), big(-1));
        assert_eq!(val("s⊗s1"), big(-1));
        assert_eq!(val("s⊗s0"), big(1));
        let h = homology(&t).unwrap();
        assert_eq!(h.total_free_rank(), 1);
    }

    #[test]
    fn tensor_unit() {
        let c = two_term(3);
        let t = tensor(&c, &BigradedComplex::point((0, 0), "1"));
        assert_eq!(homology(&t).unwrap(), homology(&c).unwrap());
    }

    #[test]
    fn shift_roundtrip() {
        let c = two_term(2);
        assert_eq!(shift(&shift(&c, 2, -3), -2, 3), c);
        assert_eq!(shift(&c, 0, 0), c);
        let h = homology(&shift(&c, 1, 0)).unwrap();
        assert_eq!(h.get((2, 0)).torsion, vec![big(2)]);
    }

    #[test]
    fn homotopy_examples() {
        let c = Arc::new(two_term(1));
        let id = ChainMap::identity(c.clone());
        let h = find_homotopy(&id, &id).unwrap();
        assert_eq!(h.nonzero_entries(), 0);
        let h = find_homotopy(&id, &id.neg()).unwrap();
        assert!(h.verify(&id, &id.neg()));
        let pt = Arc::new(BigradedComplex::point((0, 0), "x"));
        let idp = ChainMap::identity(pt.clone());
        let zero = ChainMap::zero(pt.clone(), pt.clone(), (0, 0));
        assert_eq!(find_homotopy(&idp, &zero).unwrap_err(), ChainError::NoHomotopy(0));
        let shifted = ChainMap::zero(pt.clone(), pt, (1, 0));
        assert!(matches!(find_homotopy(&idp, &shifted), Err(ChainError::ShiftMismatch(_, _))));
    }

    #[test]
    fn cyclic_signs() {
        let i = Arc::new(interval_complex());
        let tp = tensor_power(&i, 2);
        let th = cyclic_action_on(&tp);
        let ss = tp.complex.index_of((-2, 0), "s⊗s").unwrap();
        assert_eq!(th.block((-2, 0)).get(ss, ss), big(-1));
        let a = tp.complex.index_of((-1, 0), "s0⊗s").unwrap();
        let b = tp.complex.index_of((-1, 0), "s⊗s0").unwrap();
        assert_eq!(th.block((-1, 0)).get(b, a), big(1));
        for p in 2..=3 {
            let tp = tensor_power(&i, p);
            let th = cyclic_action_on(&tp);
            th.check_chain_map().unwrap();
            assert!(th.power(p).unwrap().equals(&ChainMap::identity(tp.complex.clone())));
        }
    }

    #[test]
    fn homology_basis_and_induced_maps() {
        let c = Arc::new(two_term(2));
        let b = homology_basis(&c, (1, 0)).unwrap();
        assert_eq!(b.orders, vec![big(2)]);
        assert_eq!(b.coordinates(&[big(3)]).unwrap(), vec![big(1)]);
        assert!(b.same_class(&[big(1)], &[big(-1)]));
        let triple = ChainMap::identity(c.clone()).scale(3);
        assert_eq!(induced_on_homology(&triple, &b, &b).unwrap(), IntMatrix::from_rows(&[vec![1]]));
        assert_eq!(homology_basis(&c, (0, 0)).unwrap().rank(), 0);
        // Ranks agree with the homology table on a tensor square.
        let t = tensor(&two_term(6), &interval_complex());
        let table = homology(&t).unwrap();
        for bd in t.bidegrees() {
            let hb = homology_basis(&t, bd).unwrap();
            let g = table.get(bd);
            assert_eq!(hb.rank(), g.free_rank + g.torsion.len());
            assert_eq!(hb.orders.iter().filter(|o| o.is_zero()).count(), g.free_rank);
            for z in &hb.cycles {
                assert!(t.d(bd).mul_vec(z).unwrap().iter().all(|x| x.is_zero()));
            }
        }
    }

    #[test]
    fn json_roundtrip() {
        let c = tensor(&interval_complex(), &two_term(2));
        let j = serde_json::to_string(&c.to_json()).unwrap();
        let back = BigradedComplex::from_json(&serde_json::from_str(&j).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
