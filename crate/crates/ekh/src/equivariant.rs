//! Equivariant Khovanov homology: the periodic resolution over `Z[Z/p]`, the total complex of an
//! action, skew group rings, and the equivariant homotopy machinery.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::chain::{
    homology, interval_complex, tensor_many, Bideg, BigradedComplex, ChainError, ChainMap, HomologyTable, Homotopy,
    TensorProduct, SCHEMA_VERSION,
};
use crate::diagram::PeriodicDiagram;
use crate::khovanov::{periodic_action, Convention, KhovanovComplex, KhovanovError};
use crate::zlinalg::{homology_pair, solve_integer, IntMatrix};

pub const DEFAULT_TRUNCATION: usize = 8;

#[derive(Debug, Error)]
pub enum EquivariantError {
    #[error("{0} is not prime")]
    NotPrime(usize),
    #[error("truncation must be at least 1")]
    BadTruncation,
    #[error("not a Z/p action: {0}")]
    NotAnAction(String),
    #[error("map does not commute with the actions")]
    NotEquivariant,
    #[error("lifting failed in degree {0}")]
    LiftFailure(usize),
    #[error("not a homotopy: {0}")]
    NotAHomotopy(String),
    #[error("ring mismatch: {0}")]
    RingMismatch(String),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Khovanov(#[from] KhovanovError),
}

pub fn is_prime(p: usize) -> bool {
    p >= 2 && (2..).take_while(|d| d * d <= p).all(|d| !p.is_multiple_of(d))
}

fn check_prime(p: usize) -> Result<(), EquivariantError> {
    if is_prime(p) {
        Ok(())
    } else {
        Err(EquivariantError::NotPrime(p))
    }
}

/// An element `Σ c_l θ^l` of `Z[θ]/(θ^p - 1)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupRingElement {
    pub p: usize,
    pub coeffs: Vec<BigInt>,
}

impl GroupRingElement {
    pub fn new(p: usize, coeffs: Vec<BigInt>) -> Self {
        let mut c = vec![BigInt::zero(); p];
        for (l, x) in coeffs.into_iter().enumerate() {
            c[l % p] += x;
        }
        GroupRingElement { p, coeffs: c }
    }

    pub fn from_ints(p: usize, coeffs: &[i64]) -> Self {
        Self::new(p, coeffs.iter().map(|&x| BigInt::from(x)).collect())
    }

    pub fn zero(p: usize) -> Self {
        Self::new(p, vec![])
    }

    pub fn theta_pow(p: usize, l: usize) -> Self {
        let mut c = vec![BigInt::zero(); p];
        c[l % p] = BigInt::one();
        GroupRingElement { p, coeffs: c }
    }

    pub fn one(p: usize) -> Self {
        Self::theta_pow(p, 0)
    }

    /// `1 - θ`.
    pub fn one_minus_theta(p: usize) -> Self {
        Self::one(p).sub(&Self::theta_pow(p, 1))
    }

    /// `1 + θ + ... + θ^{p-1}`.
    pub fn norm(p: usize) -> Self {
        GroupRingElement { p, coeffs: vec![BigInt::one(); p] }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_zero())
    }

    pub fn add(&self, o: &Self) -> Self {
        assert_eq!(self.p, o.p);
        GroupRingElement { p: self.p, coeffs: self.coeffs.iter().zip(&o.coeffs).map(|(a, b)| a + b).collect() }
    }

    pub fn sub(&self, o: &Self) -> Self {
        assert_eq!(self.p, o.p);
        GroupRingElement { p: self.p, coeffs: self.coeffs.iter().zip(&o.coeffs).map(|(a, b)| a - b).collect() }
    }

    pub fn mul(&self, o: &Self) -> Self {
        assert_eq!(self.p, o.p);
        let p = self.p;
        let mut c = vec![BigInt::zero(); p];
        for (a, x) in self.coeffs.iter().enumerate() {
            if x.is_zero() {
                continue;
            }
            for (b, y) in o.coeffs.iter().enumerate() {
                c[(a + b) % p] += x * y;
            }
        }
        GroupRingElement { p, coeffs: c }
    }

    /// The operator `Σ c_l θ^l` given the matrices of `θ^0, …, θ^{p-1}`.
    pub fn matrix_on(&self, powers: &[IntMatrix]) -> IntMatrix {
        let n = powers[0].rows();
        let mut acc = IntMatrix::zeros(n, powers[0].cols());
        for (l, c) in self.coeffs.iter().enumerate() {
            if !c.is_zero() {
                acc = acc.plus(&powers[l].scale(c));
            }
        }
        acc
    }

    /// Matrix of left multiplication in the basis `θ^0, …, θ^{p-1}`.
    pub fn regular_matrix(&self) -> IntMatrix {
        let p = self.p;
        let trip = (0..p).flat_map(|l| {
            self.coeffs.iter().enumerate().filter(|(_, c)| !c.is_zero()).map(move |(t, c)| ((l + t) % p, l, c.clone()))
        });
        IntMatrix::from_triplets(p, p, trip)
    }
}

impl std::fmt::Display for GroupRingElement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut s = String::new();
        for (l, c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let mono = theta_label(l);
            let sign = if c.is_negative() {
                "-"
            } else if s.is_empty() {
                ""
            } else {
                "+"
            };
            let mag = c.abs();
            if mono.is_empty() {
                let _ = write!(s, "{sign}{mag}");
            } else if mag.is_one() {
                let _ = write!(s, "{sign}{mono}");
            } else {
                let _ = write!(s, "{sign}{mag}{mono}");
            }
        }
        if s.is_empty() {
            s.push('0');
        }
        write!(f, "{s}")
    }
}

fn theta_label(l: usize) -> String {
    match l {
        0 => String::new(),
        1 => "θ".into(),
        _ => format!("θ^{l}"),
    }
}

/// The periodic free resolution `P_N → … → P_0 → Z` over `Z[Z/p]`.
#[derive(Clone, Debug)]
pub struct PeriodicResolution {
    pub p: usize,
    pub n: usize,
}

impl PeriodicResolution {
    /// `δ_i : P_i → P_{i-1}` for `1 ≤ i ≤ N`.
    pub fn delta(&self, i: usize) -> GroupRingElement {
        assert!(i >= 1);
        if i % 2 == 1 {
            GroupRingElement::one_minus_theta(self.p)
        } else {
            GroupRingElement::norm(self.p)
        }
    }

    /// Homology of the underlying complex of abelian groups, `H_0, …, H_{N-1}`.
    pub fn homology(&self) -> Vec<(usize, Vec<BigInt>)> {
        let p = self.p;
        (0..self.n)
            .map(|i| {
                let d_in = self.delta(i + 1).regular_matrix();
                let d_out = if i == 0 { IntMatrix::zeros(0, p) } else { self.delta(i).regular_matrix() };
                homology_pair(&d_in, &d_out).expect("resolution is a complex")
            })
            .collect()
    }

    /// `δ∘δ = 0`, `H_0 = Z` and `H_i = 0` for `0 < i < N`.
    pub fn is_exact(&self) -> bool {
        let squares = (2..=self.n).all(|i| self.delta(i - 1).mul(&self.delta(i)).is_zero());
        let h = self.homology();
        squares && h.iter().enumerate().all(|(i, (free, tors))| tors.is_empty() && *free == usize::from(i == 0))
    }

    pub fn label(l: usize, m: usize) -> String {
        format!("{}e{m}", theta_label(l))
    }

    /// `EZ_p` as a cochain complex: `θ^l e_m` in degree `-m`, `d(θ^l e_m) = θ^l δ_m e_{m-1}`.
    pub fn complex(&self) -> BigradedComplex {
        let p = self.p;
        let mut basis = BTreeMap::new();
        let mut diff = BTreeMap::new();
        for m in 0..=self.n {
            basis.insert((-(m as i64), 0), (0..p).map(|l| Self::label(l, m)).collect());
            if m >= 1 {
                diff.insert((-(m as i64), 0), self.delta(m).regular_matrix());
            }
        }
        BigradedComplex::new(basis, diff).expect("resolution is a complex")
    }

    /// Left multiplication by `θ` on [`Self::complex`].
    pub fn theta(&self, ez: Arc<BigradedComplex>) -> ChainMap {
        let t = GroupRingElement::theta_pow(self.p, 1).regular_matrix();
        let blocks = (0..=self.n).map(|m| ((-(m as i64), 0), t.clone())).collect();
        ChainMap::new(ez.clone(), ez, (0, 0), blocks).expect("shape")
    }
}

pub fn build_resolution(p: usize, n: usize) -> Result<PeriodicResolution, EquivariantError> {
    check_prime(p)?;
    if n == 0 {
        return Err(EquivariantError::BadTruncation);
    }
    Ok(PeriodicResolution { p, n })
}

/// Powers `θ^0, …, θ^{p-1}` of a chain automorphism, after checking it is a `Z/p` action.
fn action_powers(c: &Arc<BigradedComplex>, theta: &ChainMap, p: usize) -> Result<Vec<ChainMap>, EquivariantError> {
    if theta.shift != (0, 0) || theta.source.basis() != c.basis() || theta.target.basis() != c.basis() {
        return Err(EquivariantError::NotAnAction("action is not a degree-zero self map".into()));
    }
    if theta.check_chain_map().is_err() {
        return Err(EquivariantError::NotAnAction("action does not commute with d".into()));
    }
    let mut powers = vec![ChainMap::identity(c.clone())];
    for _ in 1..p {
        powers.push(powers.last().unwrap().then(theta)?);
    }
    if !powers[p - 1].then(theta)?.equals(&ChainMap::identity(c.clone())) {
        return Err(EquivariantError::NotAnAction(format!("θ^{p} is not the identity")));
    }
    Ok(powers)
}

/// The total complex `T^k = ⊕_{0≤i≤N} Hom(P_i, C^{k-i})`, each summand stored as a copy of `C`.
#[derive(Clone, Debug)]
pub struct EquivariantComplex {
    pub p: usize,
    pub n: usize,
    pub base: Arc<BigradedComplex>,
    pub action: ChainMap,
    pub complex: Arc<BigradedComplex>,
    /// For each total bidegree, the slots present as `(i, offset)` in increasing `i`.
    pub slots: BTreeMap<Bideg, Vec<(usize, usize)>>,
}

impl EquivariantComplex {
    pub fn offset(&self, bd: Bideg, i: usize) -> Option<usize> {
        self.slots.get(&bd)?.iter().find(|(s, _)| *s == i).map(|(_, o)| *o)
    }

    /// Lowest homological degree of the base complex in quantum degree `q`.
    pub fn base_min(&self, q: i64) -> Option<i64> {
        self.base.bidegrees().into_iter().filter(|bd| bd.1 == q).map(|bd| bd.0).min()
    }
}

pub fn equivariant_complex(
    c: Arc<BigradedComplex>,
    theta: &ChainMap,
    p: usize,
    n: usize,
) -> Result<EquivariantComplex, EquivariantError> {
    check_prime(p)?;
    if n == 0 {
        return Err(EquivariantError::BadTruncation);
    }
    let powers = action_powers(&c, theta, p)?;
    let res = PeriodicResolution { p, n };
    let mut basis: BTreeMap<Bideg, Vec<String>> = BTreeMap::new();
    let mut slots: BTreeMap<Bideg, Vec<(usize, usize)>> = BTreeMap::new();
    for i in 0..=n {
        for bd in c.bidegrees() {
            let t = (bd.0 + i as i64, bd.1);
            let v = basis.entry(t).or_default();
            slots.entry(t).or_default().push((i, v.len()));
            v.extend(c.labels(bd).iter().map(|l| format!("P{i}|{l}")));
        }
    }
    let bds: Vec<Bideg> = basis.keys().copied().collect();
    let blocks = crate::par::map(&bds, |&(k, q)| {
        let tb = (k + 1, q);
        let rows = basis.get(&tb).map_or(0, |v| v.len());
        let mut trip = vec![];
        for &(i, off) in &slots[&(k, q)] {
            let j = (k - i as i64, q);
            if let Some(toff) = slots.get(&tb).and_then(|v| v.iter().find(|(s, _)| *s == i)).map(|(_, o)| *o) {
                let sign = if i % 2 == 0 { BigInt::one() } else { -BigInt::one() };
                trip.extend(c.d(j).triplets().into_iter().map(|(r, cc, x)| (r + toff, cc + off, &x * &sign)));
            }
            if i < n {
                let toff = slots[&tb].iter().find(|(s, _)| *s == i + 1).map(|(_, o)| *o).expect("slot above");
                let pw: Vec<IntMatrix> = powers.iter().map(|m| m.block(j)).collect();
                let m = res.delta(i + 1).matrix_on(&pw);
                trip.extend(m.triplets().into_iter().map(|(r, cc, x)| (r + toff, cc + off, x)));
            }
        }
        ((k, q), IntMatrix::from_triplets(rows, basis[&(k, q)].len(), trip))
    });
    let diff: BTreeMap<Bideg, IntMatrix> = blocks.into_iter().filter(|(_, m)| m.rows() > 0).collect();
    let complex = Arc::new(BigradedComplex::new(basis, diff)?);
    Ok(EquivariantComplex { p, n, base: c, action: theta.clone(), complex, slots })
}

/// The map of total complexes induced slotwise by an equivariant chain map of the bases.
pub fn equivariant_map(
    src: &EquivariantComplex,
    tgt: &EquivariantComplex,
    f: &ChainMap,
) -> Result<ChainMap, EquivariantError> {
    if src.p != tgt.p || src.n != tgt.n {
        return Err(EquivariantError::RingMismatch("different p or truncation".into()));
    }
    if !f.then(&tgt.action)?.equals(&src.action.then(f)?) {
        return Err(EquivariantError::NotEquivariant);
    }
    let mut blocks = BTreeMap::new();
    for (bd, sl) in &src.slots {
        let tb = (bd.0 + f.shift.0, bd.1 + f.shift.1);
        let mut trip = vec![];
        for &(i, off) in sl {
            let j = (bd.0 - i as i64, bd.1);
            let Some(toff) = tgt.offset(tb, i) else { continue };
            trip.extend(f.block(j).triplets().into_iter().map(|(r, c, x)| (r + toff, c + off, x)));
        }
        blocks.insert(*bd, IntMatrix::from_triplets(tgt.complex.dim(tb), src.complex.dim(*bd), trip));
    }
    Ok(ChainMap::new(src.complex.clone(), tgt.complex.clone(), f.shift, blocks)?)
}

/// Equivariant homology with the trusted window: an entry `(k, q)` is exact when
/// `k - min_j C^{j,q}` is at most `N - 1`.
#[derive(Clone, Debug)]
pub struct EkhTable {
    pub p: usize,
    pub n: usize,
    pub table: HomologyTable,
    pub base_min: BTreeMap<i64, i64>,
}

#[derive(Serialize)]
struct EkhRowJson {
    k: i64,
    q: i64,
    free_rank: usize,
    torsion: Vec<String>,
    trusted: bool,
}

impl EkhTable {
    pub fn from_complex(eq: &EquivariantComplex) -> Result<Self, EquivariantError> {
        let table = homology(&eq.complex)?;
        let base_min = eq.base.qs().into_iter().filter_map(|q| eq.base_min(q).map(|j| (q, j))).collect();
        Ok(EkhTable { p: eq.p, n: eq.n, table, base_min })
    }

    pub fn trusted(&self, bd: Bideg) -> bool {
        self.base_min.get(&bd.1).is_some_and(|j| bd.0 - j < self.n as i64)
    }

    /// Ext degrees covered by the trusted window; empty when it holds no periodic information.
    pub fn trusted_ext_degrees(&self) -> std::ops::Range<usize> {
        1..self.n
    }

    pub fn window_is_empty(&self) -> bool {
        self.trusted_ext_degrees().is_empty()
    }

    /// The trusted part of the table.
    pub fn trusted_table(&self) -> HomologyTable {
        HomologyTable {
            entries: self
                .table
                .entries
                .iter()
                .filter(|(bd, _)| self.trusted(**bd))
                .map(|(k, v)| (*k, v.clone()))
                .collect(),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<EkhRowJson> = self
            .table
            .entries
            .iter()
            .map(|(&(k, q), g)| EkhRowJson {
                k,
                q,
                free_rank: g.free_rank,
                torsion: g.torsion.iter().map(|t| t.to_string()).collect(),
                trusted: self.trusted((k, q)),
            })
            .collect();
        serde_json::json!({
            "version": SCHEMA_VERSION,
            "p": self.p,
            "truncation": self.n,
            "trusted_ext_max": self.n - 1,
            "periodic_window_empty": self.window_is_empty(),
            "ekh": rows,
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("EKh, p = {}, truncation N = {}\n", self.p, self.n);
        s.push_str(&self.trusted_table().to_text());
        let untrusted = self.table.entries.len() - self.trusted_table().entries.len();
        let _ = writeln!(s, "trusted: k - min_i <= {} ({} untrusted entries omitted)", self.n - 1, untrusted);
        if self.window_is_empty() {
            s.push_str("warning: trusted window is empty beyond Ext degree 0\n");
        }
        s
    }
}

/// Equivariant Khovanov homology of a periodic diagram with truncation `n`.
pub fn ekh(d: &PeriodicDiagram, n: usize, convention: Convention) -> Result<EkhTable, EquivariantError> {
    let kc = KhovanovComplex::new(&d.lifted, convention)?;
    let theta = periodic_action(d, &kc)?;
    let eq = equivariant_complex(kc.complex.clone(), &theta, d.p, n)?;
    EkhTable::from_complex(&eq)
}

/// A skew group ring `R_θ[Z/p]` over a ring `R` with a finite `Z`-basis.
#[derive(Clone, Debug)]
pub struct SkewGroupRing {
    pub rank: usize,
    /// `structure[i][j]` is the product `b_i b_j` in the basis.
    pub structure: Vec<Vec<Vec<BigInt>>>,
    pub unit: Vec<BigInt>,
    pub p: usize,
    /// Matrices of `θ^0, …, θ^{p-1}` acting on `R`.
    pub theta_powers: Vec<IntMatrix>,
}

/// An element `Σ_g r_g g` with `parts[g] ∈ R`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SkewElement {
    pub parts: Vec<Vec<BigInt>>,
}

fn vec_add(a: &mut [BigInt], b: &[BigInt]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

impl SkewGroupRing {
    /// Checks that `θ` is a ring automorphism of order dividing `p` fixing the unit.
    pub fn new(
        structure: Vec<Vec<Vec<BigInt>>>,
        unit: Vec<BigInt>,
        p: usize,
        theta: IntMatrix,
    ) -> Result<Self, EquivariantError> {
        let rank = unit.len();
        if structure.len() != rank || structure.iter().any(|r| r.len() != rank || r.iter().any(|v| v.len() != rank)) {
            return Err(EquivariantError::RingMismatch("structure constants have the wrong shape".into()));
        }
        if theta.rows() != rank || theta.cols() != rank {
            return Err(EquivariantError::RingMismatch("automorphism has the wrong shape".into()));
        }
        let mut theta_powers = vec![IntMatrix::identity(rank)];
        for _ in 1..p {
            theta_powers.push(theta.dot(theta_powers.last().unwrap()));
        }
        if theta.dot(&theta_powers[p - 1]) != IntMatrix::identity(rank) {
            return Err(EquivariantError::NotAnAction(format!("θ^{p} is not the identity on R")));
        }
        let ring = SkewGroupRing { rank, structure, unit, p, theta_powers };
        let th = |v: &[BigInt]| theta.mul_vec(v).expect("shape");
        if th(&ring.unit) != ring.unit {
            return Err(EquivariantError::NotAnAction("θ does not fix the unit".into()));
        }
        for i in 0..rank {
            for j in 0..rank {
                let bi = th(&ring.basis_vec(i));
                let bj = th(&ring.basis_vec(j));
                if th(&ring.structure[i][j]) != ring.r_mul(&bi, &bj) {
                    return Err(EquivariantError::NotAnAction("θ is not multiplicative".into()));
                }
            }
        }
        Ok(ring)
    }

    fn basis_vec(&self, i: usize) -> Vec<BigInt> {
        let mut v = vec![BigInt::zero(); self.rank];
        v[i] = BigInt::one();
        v
    }

    /// Product in `R`.
    pub fn r_mul(&self, a: &[BigInt], b: &[BigInt]) -> Vec<BigInt> {
        let mut out = vec![BigInt::zero(); self.rank];
        for (i, x) in a.iter().enumerate() {
            if x.is_zero() {
                continue;
            }
            for (j, y) in b.iter().enumerate() {
                if y.is_zero() {
                    continue;
                }
                let c = x * y;
                for (k, s) in self.structure[i][j].iter().enumerate() {
                    if !s.is_zero() {
                        out[k] += &c * s;
                    }
                }
            }
        }
        out
    }

    /// `θ_g(r)`.
    pub fn act(&self, g: usize, r: &[BigInt]) -> Vec<BigInt> {
        self.theta_powers[g % self.p].mul_vec(r).expect("shape")
    }

    pub fn element(&self, r: Vec<BigInt>, g: usize) -> SkewElement {
        let mut parts = vec![vec![BigInt::zero(); self.rank]; self.p];
        parts[g % self.p] = r;
        SkewElement { parts }
    }

    pub fn one(&self) -> SkewElement {
        self.element(self.unit.clone(), 0)
    }

    fn check(&self, x: &SkewElement) -> Result<(), EquivariantError> {
        if x.parts.len() != self.p || x.parts.iter().any(|r| r.len() != self.rank) {
            return Err(EquivariantError::RingMismatch("element does not belong to this ring".into()));
        }
        Ok(())
    }

    /// The skew group ring of `R^{⊗p}` with `θ` permuting the factors cyclically.
    pub fn wreath(
        base_structure: &[Vec<Vec<BigInt>>],
        base_unit: &[BigInt],
        p: usize,
    ) -> Result<Self, EquivariantError> {
        let r = base_unit.len();
        let rank = r.pow(p as u32);
        let digits = |mut x: usize| -> Vec<usize> {
            let mut d = vec![0; p];
            for k in (0..p).rev() {
                d[k] = x % r;
                x /= r;
            }
            d
        };
        let undigits = |d: &[usize]| d.iter().fold(0, |acc, &x| acc * r + x);
        let mut structure = vec![vec![vec![BigInt::zero(); rank]; rank]; rank];
        for (i, row) in structure.iter_mut().enumerate() {
            let di = digits(i);
            for (j, out) in row.iter_mut().enumerate() {
                let dj = digits(j);
                let mut terms: Vec<(Vec<usize>, BigInt)> = vec![(vec![], BigInt::one())];
                for k in 0..p {
                    let prod = &base_structure[di[k]][dj[k]];
                    let mut next = vec![];
                    for (t, c) in &terms {
                        for (m, x) in prod.iter().enumerate() {
                            if !x.is_zero() {
                                let mut t2 = t.clone();
                                t2.push(m);
                                next.push((t2, c * x));
                            }
                        }
                    }
                    terms = next;
                }
                for (t, c) in terms {
                    out[undigits(&t)] += c;
                }
            }
        }
        let mut unit_terms: Vec<(Vec<usize>, BigInt)> = vec![(vec![], BigInt::one())];
        for _ in 0..p {
            let mut next = vec![];
            for (t, c) in &unit_terms {
                for (m, x) in base_unit.iter().enumerate() {
                    if !x.is_zero() {
                        let mut t2 = t.clone();
                        t2.push(m);
                        next.push((t2, c * x));
                    }
                }
            }
            unit_terms = next;
        }
        let mut unit = vec![BigInt::zero(); rank];
        for (t, c) in unit_terms {
            unit[undigits(&t)] += c;
        }
        let theta = IntMatrix::from_triplets(
            rank,
            rank,
            (0..rank).map(|i| {
                let d = digits(i);
                let mut e = vec![d[p - 1]];
                e.extend_from_slice(&d[..p - 1]);
                (undigits(&e), i, BigInt::one())
            }),
        );
        Self::new(structure, unit, p, theta)
    }
}

/// `(Σ r_g g)(Σ s_h h) = Σ r_g θ_g(s_h) gh`.
pub fn skew_mul(ring: &SkewGroupRing, x: &SkewElement, y: &SkewElement) -> Result<SkewElement, EquivariantError> {
    ring.check(x)?;
    ring.check(y)?;
    let p = ring.p;
    let mut parts = vec![vec![BigInt::zero(); ring.rank]; p];
    for (g, r) in x.parts.iter().enumerate() {
        if r.iter().all(|c| c.is_zero()) {
            continue;
        }
        for (h, s) in y.parts.iter().enumerate() {
            if s.iter().all(|c| c.is_zero()) {
                continue;
            }
            let prod = ring.r_mul(r, &ring.act(g, s));
            vec_add(&mut parts[(g + h) % p], &prod);
        }
    }
    Ok(SkewElement { parts })
}

/// A left `R_θ[Z/p]`-module: matrices for each basis element of `R` and for `θ`.
#[derive(Clone, Debug)]
pub struct SkewModule {
    pub rank: usize,
    pub r_action: Vec<IntMatrix>,
    pub theta: IntMatrix,
}

impl SkewModule {
    /// `R` acting on itself, with `θ` acting through the automorphism.
    pub fn regular(ring: &SkewGroupRing) -> Self {
        let r_action = (0..ring.rank)
            .map(|i| {
                let trip = (0..ring.rank).flat_map(|j| {
                    ring.structure[i][j]
                        .iter()
                        .enumerate()
                        .filter(|(_, c)| !c.is_zero())
                        .map(move |(k, c)| (k, j, c.clone()))
                });
                IntMatrix::from_triplets(ring.rank, ring.rank, trip)
            })
            .collect();
        let theta = if ring.p > 1 { ring.theta_powers[1].clone() } else { IntMatrix::identity(ring.rank) };
        SkewModule { rank: ring.rank, r_action, theta }
    }

    fn apply(&self, r: &[BigInt], g: usize, m: &[BigInt]) -> Vec<BigInt> {
        let mut gm = m.to_vec();
        for _ in 0..g {
            gm = self.theta.mul_vec(&gm).expect("shape");
        }
        let mut out = vec![BigInt::zero(); self.rank];
        for (i, c) in r.iter().enumerate() {
            if !c.is_zero() {
                let v = self.r_action[i].mul_vec(&gm).expect("shape");
                for (o, x) in out.iter_mut().zip(v) {
                    *o += c * x;
                }
            }
        }
        out
    }
}

/// `rg·(v⊗m) = gv ⊗ r·g(m)` on `V⊗M`, with `w[a·rank(M) + b]` the coefficient of `v_a⊗m_b`.
pub fn semidiagonal_action(
    v_theta: &IntMatrix,
    module: &SkewModule,
    r: &[BigInt],
    g: usize,
    w: &[BigInt],
) -> Vec<BigInt> {
    let vr = v_theta.rows();
    let mr = module.rank;
    let mut gv = IntMatrix::identity(vr);
    for _ in 0..g {
        gv = v_theta.dot(&gv);
    }
    let mut out = vec![BigInt::zero(); vr * mr];
    for a in 0..vr {
        let m = &w[a * mr..(a + 1) * mr];
        if m.iter().all(|x| x.is_zero()) {
            continue;
        }
        let rm = module.apply(r, g, m);
        for (a2, x) in gv.column(a).into_iter().enumerate() {
            if x.is_zero() {
                continue;
            }
            for (b, y) in rm.iter().enumerate() {
                out[a2 * mr + b] += &x * y;
            }
        }
    }
    out
}

/// Action of a whole skew element on `V⊗M`.
pub fn skew_act(
    ring: &SkewGroupRing,
    v_theta: &IntMatrix,
    module: &SkewModule,
    x: &SkewElement,
    w: &[BigInt],
) -> Vec<BigInt> {
    let mut out = vec![BigInt::zero(); w.len()];
    for (g, r) in x.parts.iter().enumerate() {
        if r.iter().any(|c| !c.is_zero()) {
            vec_add(&mut out, &semidiagonal_action(v_theta, module, r, g % ring.p, w));
        }
    }
    out
}

type Sparse = BTreeMap<usize, BigInt>;

fn sparse_add(acc: &mut Sparse, c: &BigInt, v: &Sparse) {
    for (k, x) in v {
        let e = acc.entry(*k).or_insert_with(BigInt::zero);
        *e += c * x;
        if e.is_zero() {
            acc.remove(k);
        }
    }
}

fn columns(m: &IntMatrix) -> Vec<Sparse> {
    let mut cols = vec![Sparse::new(); m.cols()];
    for (r, c, x) in m.triplets() {
        cols[c].insert(r, x);
    }
    cols
}

fn apply_cols(cols: &[Sparse], v: &Sparse) -> Sparse {
    let mut out = Sparse::new();
    for (k, x) in v {
        sparse_add(&mut out, x, &cols[*k]);
    }
    out
}

fn to_dense(v: &Sparse, n: usize) -> Vec<BigInt> {
    let mut d = vec![BigInt::zero(); n];
    for (k, x) in v {
        d[*k] = x.clone();
    }
    d
}

fn from_dense(v: &[BigInt]) -> Sparse {
    v.iter().enumerate().filter(|(_, x)| !x.is_zero()).map(|(k, x)| (k, x.clone())).collect()
}

/// Powers of a chain map restricted to one bidegree, as column lists.
fn power_cols(theta: &ChainMap, p: usize, bd: Bideg) -> Vec<Vec<Sparse>> {
    let t = theta.block(bd);
    let mut out = vec![columns(&IntMatrix::identity(t.cols()))];
    let mut cur = IntMatrix::identity(t.cols());
    for _ in 1..p {
        cur = t.dot(&cur);
        out.push(columns(&cur));
    }
    out
}

fn group_act(powers: &[Vec<Sparse>], a: &GroupRingElement, v: &Sparse) -> Sparse {
    let mut out = Sparse::new();
    for (l, c) in a.coeffs.iter().enumerate() {
        if !c.is_zero() {
            sparse_add(&mut out, c, &apply_cols(&powers[l], v));
        }
    }
    out
}

/// The chain map `Ĥ : EZ_p ⊗ I → I^{⊗p}`, equivariant for `θ` acting on `EZ_p` and cyclically on `I^{⊗p}`.
#[derive(Clone, Debug)]
pub struct Hhat {
    pub p: usize,
    pub n: usize,
    pub source: TensorProduct,
    pub target: TensorProduct,
    pub map: ChainMap,
}

const S: (Bideg, usize) = ((-1, 0), 0);
const S0: (Bideg, usize) = ((0, 0), 0);
const S1: (Bideg, usize) = ((0, 0), 1);

/// Contraction of `I^{⊗p}` onto `s0^{⊗p}`: `Σ_i ε^{⊗i} ⊗ h ⊗ id`, with `h(s1) = s` and `ε(s1) = s0`.
fn contract(tgt: &TensorProduct, v: &Sparse, bd: Bideg) -> Sparse {
    let mut out = Sparse::new();
    for (k, c) in v {
        let t = tgt.element(bd, *k);
        for i in 0..t.len() {
            if t[..i].contains(&S) {
                break;
            }
            if t[i] != S1 {
                continue;
            }
            let mut t2 = t.clone();
            for x in t2.iter_mut().take(i) {
                *x = S0;
            }
            t2[i] = S;
            let (_, row) = tgt.locate(&t2).expect("basis element");
            sparse_add(&mut out, c, &Sparse::from([(row, BigInt::one())]));
        }
    }
    out
}

pub fn hhat(p: usize, n: usize) -> Result<Hhat, EquivariantError> {
    check_prime(p)?;
    if n == 0 {
        return Err(EquivariantError::BadTruncation);
    }
    let res = PeriodicResolution { p, n };
    let ez = Arc::new(res.complex());
    let iv = Arc::new(interval_complex());
    let source = tensor_many(&[ez.clone(), iv.clone()]);
    let target = tensor_many(&vec![iv; p]);
    let theta_t = crate::chain::cyclic_action_on(&target);
    let mut images: HashMap<(Bideg, usize), Sparse> = HashMap::new();
    let unit = |t: Vec<(Bideg, usize)>| -> ((Bideg, usize), Sparse) {
        let (bd, row) = target.locate(&t).expect("basis element");
        ((bd, 0), Sparse::from([(row, BigInt::one())]))
    };
    let src_d: BTreeMap<Bideg, Vec<Sparse>> =
        source.complex.bidegrees().into_iter().map(|bd| (bd, columns(&source.complex.d(bd)))).collect();
    for m in 0..=n {
        let eb = (-(m as i64), 0);
        for w in [S0, S1, S] {
            let (sbd, scol) = source.locate(&vec![(eb, 0), w]).expect("basis element");
            let tbd = sbd;
            let img: Sparse = if m == 0 && w != S {
                unit(vec![w; p]).1
            } else if m == 0 {
                let mut acc = Sparse::new();
                for i in 0..p {
                    let mut t = vec![S1; p - i - 1];
                    t.push(S);
                    t.extend(vec![S0; i]);
                    sparse_add(&mut acc, &BigInt::one(), &unit(t).1);
                }
                acc
            } else {
                let mut rhs = Sparse::new();
                for (k, c) in &src_d[&sbd][scol] {
                    sparse_add(&mut rhs, c, &images[&((sbd.0 + 1, sbd.1), *k)]);
                }
                let dt = target.complex.d(tbd);
                let dcols = columns(&dt);
                let y = contract(&target, &rhs, (tbd.0 + 1, tbd.1));
                if apply_cols(&dcols, &y) == rhs {
                    y
                } else {
                    let sol = solve_integer(&dt, &to_dense(&rhs, dt.rows()))
                        .map_err(|_| EquivariantError::LiftFailure(m + usize::from(w == S)))?;
                    from_dense(&sol)
                }
            };
            let pw = power_cols(&theta_t, p, tbd);
            for l in 0..p {
                let (_, col) = source.locate(&vec![(eb, l), w]).expect("basis element");
                images.insert((sbd, col), apply_cols(&pw[l], &img));
            }
        }
    }
    let mut blocks = BTreeMap::new();
    for bd in source.complex.bidegrees() {
        let rows = target.complex.dim(bd);
        let trip = (0..source.complex.dim(bd)).flat_map(|c| {
            images.get(&(bd, c)).into_iter().flat_map(move |v| v.iter().map(move |(r, x)| (*r, c, x.clone())))
        });
        blocks.insert(bd, IntMatrix::from_triplets(rows, source.complex.dim(bd), trip));
    }
    let map = ChainMap::new(source.complex.clone(), target.complex.clone(), (0, 0), blocks)?;
    if map.check_chain_map().is_err() {
        return Err(EquivariantError::LiftFailure(n));
    }
    Ok(Hhat { p, n, source, target, map })
}

impl Hhat {
    /// `Ĥ(θ^l e_m ⊗ w)` as `(coefficient, factor labels)` in basis order.
    pub fn image(&self, m: usize, l: usize, w: &str) -> Vec<(BigInt, Vec<String>)> {
        let wi = match w {
            "s0" => S0,
            "s1" => S1,
            "s" => S,
            _ => return vec![],
        };
        let Some((bd, col)) = self.source.locate(&vec![((-(m as i64), 0), l), wi]) else { return vec![] };
        let iv = interval_complex();
        let mut out: Vec<(BigInt, Vec<String>)> = self
            .map
            .block(bd)
            .column(col)
            .into_iter()
            .enumerate()
            .filter(|(_, x)| !x.is_zero())
            .map(|(r, x)| (x, self.target.element(bd, r).iter().map(|(b, k)| iv.labels(*b)[*k].clone()).collect()))
            .collect();
        out.sort_by(|a, b| a.1.cmp(&b.1));
        out
    }

    /// `Ĥ` commutes with `θ`.
    pub fn is_equivariant(&self) -> bool {
        let res = PeriodicResolution { p: self.p, n: self.n };
        let ez = self.source.factors[0].clone();
        let iv = self.source.factors[1].clone();
        let th = res.theta(ez);
        let Ok(src_theta) = crate::chain::tensor_maps(&[&th, &ChainMap::identity(iv)], &self.source, &self.source)
        else {
            return false;
        };
        let tgt_theta = crate::chain::cyclic_action_on(&self.target);
        match (src_theta.then(&self.map), self.map.then(&tgt_theta)) {
            (Ok(a), Ok(b)) => a.equals(&b),
            _ => false,
        }
    }

    /// Coefficient table in the form `Ĥ_k(θ^l⊗w) = …`, one line per generator.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for k in 0..=self.n + 1 {
            for (w, wd) in [("s0", 0usize), ("s1", 0), ("s", 1)] {
                if k < wd || k - wd > self.n {
                    continue;
                }
                let m = k - wd;
                for l in 0..self.p {
                    let img = self.image(m, l, w);
                    let terms: Vec<String> = img
                        .iter()
                        .map(|(c, f)| {
                            let body = f.join("⊗");
                            if c.is_one() {
                                body
                            } else if (-c).is_one() {
                                format!("-{body}")
                            } else {
                                format!("{c}{body}")
                            }
                        })
                        .collect();
                    let rhs = if terms.is_empty() { "0".to_string() } else { terms.join(" + ").replace("+ -", "- ") };
                    let a = if l == 0 { "1".to_string() } else { theta_label(l) };
                    let _ = writeln!(s, "H{k}({a}⊗{w}) = {rhs}");
                }
            }
        }
        s
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut rows = vec![];
        for m in 0..=self.n {
            for w in ["s0", "s1", "s"] {
                for l in 0..self.p {
                    let img: Vec<serde_json::Value> = self
                        .image(m, l, w)
                        .into_iter()
                        .map(|(c, f)| serde_json::json!({ "coef": c.to_string(), "factors": f }))
                        .collect();
                    rows.push(serde_json::json!({ "e": m, "theta": l, "w": w, "image": img }));
                }
            }
        }
        serde_json::json!({ "version": SCHEMA_VERSION, "p": self.p, "truncation": self.n, "hhat": rows })
    }
}

/// A diagonal `Δ : EZ_p → EZ_p ⊗ EZ_p`, equivariant for the diagonal action, with `(ε⊗1)Δ = id`.
#[derive(Clone, Debug)]
pub struct Diagonal {
    pub tensor: TensorProduct,
    /// `Δ(e_m)` in the block of degree `-m`.
    pub images: Vec<Sparse>,
}

pub fn diagonal(res: &PeriodicResolution) -> Result<Diagonal, EquivariantError> {
    let p = res.p;
    let ez = Arc::new(res.complex());
    let tensor = tensor_many(&[ez.clone(), ez.clone()]);
    let th = res.theta(ez);
    let diag_theta = crate::chain::tensor_maps(&[&th, &th], &tensor, &tensor)?;
    let e0 = tensor.locate(&vec![((0, 0), 0), ((0, 0), 0)]).expect("basis").1;
    let mut images = vec![Sparse::from([(e0, BigInt::one())])];
    for m in 1..=res.n {
        let bd = (-(m as i64), 0);
        let pw = power_cols(&diag_theta, p, (bd.0 + 1, 0));
        let rhs = group_act(&pw, &res.delta(m), &images[m - 1]);
        let d = tensor.complex.d(bd);
        // Counit rows: the coefficients of θ^a e_0 ⊗ θ^b e_m summed over a, indexed by b.
        let cols = tensor.complex.dim(bd);
        let counit = IntMatrix::from_triplets(
            p,
            cols,
            (0..cols).filter_map(|k| {
                let t = tensor.element(bd, k);
                (t[0].0 == (0, 0)).then(|| (t[1].1, k, BigInt::one()))
            }),
        );
        let a = IntMatrix::vstack(&[&d, &counit]);
        let mut b = to_dense(&rhs, d.rows());
        b.push(BigInt::one());
        b.extend(vec![BigInt::zero(); p - 1]);
        let sol = solve_integer(&a, &b).map_err(|_| EquivariantError::LiftFailure(m))?;
        images.push(from_dense(&sol));
    }
    Ok(Diagonal { tensor, images })
}

/// `σ(i, j) = (-1)^{ij + i(i+1)/2}` relating slot `(i, j)` of the total complex to the Hom form.
fn hom_sign(i: usize, j: i64) -> BigInt {
    let e = (i as i64) * j + (i * (i + 1) / 2) as i64;
    if e.rem_euclid(2) == 0 {
        BigInt::one()
    } else {
        -BigInt::one()
    }
}

/// An equivariant homotopy between `(f0^{⊗p})_eq` and `(f1^{⊗p})_eq` on total complexes.
#[derive(Clone, Debug)]
pub struct EquivariantHomotopy {
    pub source: EquivariantComplex,
    pub target: EquivariantComplex,
    pub f0: ChainMap,
    pub f1: ChainMap,
    /// `d∘H + H∘d = f1 - f0`.
    pub homotopy: Homotopy,
}

/// Builds `K̂ = K∘(Ĥ⊗id)` from `(f0, f1, h)` and transports it to the total complexes through a diagonal.
pub fn equivariant_homotopy(
    f0: &ChainMap,
    f1: &ChainMap,
    h: &Homotopy,
    p: usize,
    n: usize,
) -> Result<EquivariantHomotopy, EquivariantError> {
    check_prime(p)?;
    if f0.shift != f1.shift || h.shift != (f0.shift.0 - 1, f0.shift.1) {
        return Err(EquivariantError::NotAHomotopy("degrees do not match".into()));
    }
    if !h.verify(f1, f0) {
        return Err(EquivariantError::NotAHomotopy("d∘h + h∘d differs from f1 - f0".into()));
    }
    let c = f0.source.clone();
    let d = f0.target.clone();
    let shift = f0.shift;
    let iv = Arc::new(interval_complex());
    // H : I ⊗ C → D.
    let ic = tensor_many(&[iv.clone(), c.clone()]);
    let mut blocks = BTreeMap::new();
    for (bd, elems) in &ic.index {
        let tb = (bd.0 + shift.0, bd.1 + shift.1);
        let mut trip = vec![];
        for (col, t) in elems.iter().enumerate() {
            let (xb, xi) = t[1];
            let m = match t[0] {
                S0 => f0.block(xb),
                S1 => f1.block(xb),
                _ => h.block(&c, &d, xb),
            };
            trip.extend(m.column(xi).into_iter().enumerate().filter(|(_, x)| !x.is_zero()).map(|(r, x)| (r, col, x)));
        }
        blocks.insert(*bd, IntMatrix::from_triplets(d.dim(tb), elems.len(), trip));
    }
    let hmap = ChainMap::new(ic.complex.clone(), d.clone(), shift, blocks)?;
    if hmap.check_chain_map().is_err() {
        return Err(EquivariantError::NotAHomotopy("I⊗C → D is not a chain map".into()));
    }
    let hh = hhat(p, n)?;
    let cp = tensor_many(&vec![c.clone(); p]);
    let dp = tensor_many(&vec![d.clone(); p]);
    let icp = tensor_many(&vec![ic.complex.clone(); p]);
    let theta_c = crate::chain::cyclic_action_on(&cp);
    let theta_d = crate::chain::cyclic_action_on(&dp);
    // K(Ĥ(e⊗t) ⊗ x) for a basis element x of C^{⊗p}, via (I⊗C)^{⊗p}.
    let hp = crate::chain::tensor_maps(&vec![&hmap; p], &icp, &dp)?;
    let hp_cols: BTreeMap<Bideg, Vec<Sparse>> = hp.blocks.iter().map(|(bd, m)| (*bd, columns(m))).collect();
    let kay = |a: &[(Bideg, usize)], x: &[(Bideg, usize)]| -> (Bideg, Sparse) {
        let mut deg_x = 0i64;
        let mut sign = 0i64;
        let mut mi = Vec::with_capacity(p);
        for k in 0..p {
            sign += a[k].0 .0 * deg_x;
            deg_x += x[k].0 .0;
            mi.push(ic.locate(&vec![a[k], x[k]]).expect("basis"));
        }
        let (bd, col) = icp.locate(&mi).expect("basis");
        let tb = (bd.0 + shift.0 * p as i64, bd.1 + shift.1 * p as i64);
        let mut v = hp_cols.get(&bd).map(|cols| cols[col].clone()).unwrap_or_default();
        if sign.rem_euclid(2) == 1 {
            v = v.into_iter().map(|(k, x)| (k, -x)).collect();
        }
        (tb, v)
    };
    // Φ(θ^a e_r ⊗ y) = (-1)^r K̂(θ^a e_r ⊗ s ⊗ y) for a vector y in C^{⊗p}.
    let phi = |r: usize, a: usize, ybd: Bideg, y: &Sparse| -> (Bideg, Sparse) {
        let (ebd, ecol) = hh.source.locate(&vec![((-(r as i64), 0), a), S]).expect("basis");
        let himg = columns(&hh.map.block(ebd)).swap_remove(ecol);
        let mut out = Sparse::new();
        let mut tb = (ebd.0 + ybd.0 + shift.0 * p as i64, ybd.1 + shift.1 * p as i64);
        for (ai, ac) in &himg {
            let at = hh.target.element(ebd, *ai);
            for (xi, xc) in y {
                let xt = cp.element(ybd, *xi);
                let (b, v) = kay(at, xt);
                tb = b;
                sparse_add(&mut out, &(ac * xc), &v);
            }
        }
        if r % 2 == 1 {
            out = out.into_iter().map(|(k, x)| (k, -x)).collect();
        }
        (tb, out)
    };
    let fp0 = crate::chain::tensor_maps(&vec![f0; p], &cp, &dp)?;
    let fp1 = crate::chain::tensor_maps(&vec![f1; p], &cp, &dp)?;
    let tx = equivariant_complex(cp.complex.clone(), &theta_c, p, n)?;
    let ty = equivariant_complex(dp.complex.clone(), &theta_d, p, n)?;
    let f0_eq = equivariant_map(&tx, &ty, &fp0)?;
    let f1_eq = equivariant_map(&tx, &ty, &fp1)?;
    let res = PeriodicResolution { p, n };
    let diag = diagonal(&res)?;
    let hshift = (shift.0 * p as i64 - 1, shift.1 * p as i64);
    let bds: Vec<Bideg> = tx.complex.bidegrees();
    let blocks: Vec<Result<(Bideg, IntMatrix), EquivariantError>> = crate::par::map(&bds, |&bd| {
        let tb = (bd.0 + hshift.0, bd.1 + hshift.1);
        let mut trip = vec![];
        for &(i, off) in &tx.slots[&bd] {
            let jb = (bd.0 - i as i64, bd.1);
            let pw = power_cols(&theta_c, p, jb);
            for u in 0..cp.complex.dim(jb) {
                let su = hom_sign(i, jb.0);
                for nn in i..=n {
                    let r = nn - i;
                    let mut val = Sparse::new();
                    let mut vbd = None;
                    for (k, c) in &diag.images[nn] {
                        let t = diag.tensor.element((-(nn as i64), 0), *k);
                        if t[0].0 != (-(r as i64), 0) || t[1].0 != (-(i as i64), 0) {
                            continue;
                        }
                        let (a, b) = (t[0].1, t[1].1);
                        let y = apply_cols(&pw[b], &Sparse::from([(u, BigInt::one())]));
                        let (ybd, v) = phi(r, a, jb, &y);
                        vbd = Some(ybd);
                        let kr = if (bd.0 * r as i64).rem_euclid(2) == 0 { c.clone() } else { -c.clone() };
                        sparse_add(&mut val, &kr, &v);
                    }
                    let Some(vbd) = vbd else { continue };
                    if val.is_empty() {
                        continue;
                    }
                    debug_assert_eq!((vbd.0 + nn as i64, vbd.1), tb);
                    let toff =
                        ty.offset(tb, nn).ok_or_else(|| EquivariantError::NotAHomotopy("missing slot".into()))?;
                    let sv = hom_sign(nn, vbd.0);
                    for (row, x) in val {
                        trip.push((row + toff, u + off, x * &su * &sv));
                    }
                }
            }
        }
        Ok((bd, IntMatrix::from_triplets(ty.complex.dim(tb), tx.complex.dim(bd), trip)))
    });
    let blocks: BTreeMap<Bideg, IntMatrix> = blocks.into_iter().collect::<Result<_, _>>()?;
    let homotopy = Homotopy { shift: hshift, blocks };
    if !homotopy.verify(&f1_eq, &f0_eq) {
        return Err(EquivariantError::NotAHomotopy("equivariant identity fails".into()));
    }
    Ok(EquivariantHomotopy { source: tx, target: ty, f0: f0_eq, f1: f1_eq, homotopy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arcalg::arc_algebra;
    use crate::chain::{find_homotopy, tensor_power, HomologyGroup};
    use crate::diagram::{Diagram, Kink, Labels, Move, QuotientTangle};
    use crate::khovanov::elementary_map;
    use crate::zlinalg::big;

    fn g(free_rank: usize, torsion: &[i64]) -> HomologyGroup {
        HomologyGroup { free_rank, torsion: torsion.iter().map(|&t| big(t)).collect() }
    }

    fn point() -> Arc<BigradedComplex> {
        Arc::new(BigradedComplex::point((0, 0), "x"))
    }

    #[test]
    fn group_ring_arithmetic() {
        for p in [2, 3, 5] {
            let n = GroupRingElement::norm(p);
            let a = GroupRingElement::one_minus_theta(p);
            assert!(a.mul(&n).is_zero());
            assert_eq!(a.regular_matrix().dot(&n.regular_matrix()), IntMatrix::zeros(p, p));
            let t = GroupRingElement::theta_pow(p, 1);
            let mut x = GroupRingElement::one(p);
            for _ in 0..p {
                x = x.mul(&t);
            }
            assert_eq!(x, GroupRingElement::one(p));
            assert_eq!(n.mul(&n), GroupRingElement::new(p, vec![big(p as i64); p]));
        }
        assert_eq!(GroupRingElement::from_ints(3, &[1, -1]).to_string(), "1-θ");
        assert_eq!(GroupRingElement::norm(3).to_string(), "1+θ+θ^2");
    }

    #[test]
    fn resolution_is_exact() {
        let r = build_resolution(3, 4).unwrap();
        assert_eq!(r.delta(1), GroupRingElement::from_ints(3, &[1, -1]));
        assert_eq!(r.delta(2), GroupRingElement::from_ints(3, &[1, 1, 1]));
        assert_eq!(r.delta(3), GroupRingElement::from_ints(3, &[1, -1]));
        let r2 = build_resolution(2, 4).unwrap();
        assert_eq!(r2.delta(1), GroupRingElement::from_ints(2, &[1, -1]));
        assert_eq!(r2.delta(2), GroupRingElement::from_ints(2, &[1, 1]));
        for p in [2, 3, 5] {
            let r = build_resolution(p, 6).unwrap();
            assert!(r.is_exact());
            let h = r.homology();
            assert_eq!(h[0], (1, vec![]));
            assert!(h[1..].iter().all(|x| *x == (0, vec![])));
            assert!(r.complex().check_d_squared().is_ok());
        }
        assert!(matches!(build_resolution(4, 3), Err(EquivariantError::NotPrime(4))));
    }

    /// Cohomology of `Z/p` with trivial coefficients from the cochain complex `Z --0--> Z --p--> Z --0--> …`.
    fn group_cohomology_oracle(p: usize, degrees: usize) -> Vec<HomologyGroup> {
        let map = |i: usize| IntMatrix::from_rows(&[vec![if i % 2 == 1 { 0 } else { p as i64 }]]);
        (0..degrees)
            .map(|k| {
                let d_in = if k == 0 { IntMatrix::zeros(1, 0) } else { map(k) };
                let d_out = map(k + 1);
                let (free_rank, torsion) = homology_pair(&d_in, &d_out).unwrap();
                HomologyGroup { free_rank, torsion }
            })
            .collect()
    }

    #[test]
    fn trivial_action_gives_group_cohomology() {
        for p in [2, 3, 5] {
            let c = point();
            let eq = equivariant_complex(c.clone(), &ChainMap::identity(c.clone()), p, 6).unwrap();
            assert!(eq.complex.check_d_squared().is_ok());
            let t = EkhTable::from_complex(&eq).unwrap();
            let oracle = group_cohomology_oracle(p, 6);
            for (k, o) in oracle.iter().enumerate() {
                assert_eq!(&t.table.get((k as i64, 0)), o, "p={p} k={k}");
                assert!(t.trusted((k as i64, 0)));
            }
            assert_eq!(t.table.get((2, 0)), g(0, &[p as i64]));
            assert_eq!(t.table.get((4, 0)), g(0, &[p as i64]));
            assert!(!t.trusted((6, 0)));
            assert!(t.table.entries.keys().all(|bd| bd.0 <= 6));
            for k in 0..=6 {
                assert_eq!(eq.complex.dim((k, 0)), 1);
            }
        }
    }

    #[test]
    fn total_ranks_and_actions() {
        let kc = KhovanovComplex::new(&QuotientTangle::braid_generator().lift(2).unwrap().lifted, Convention::Paper)
            .unwrap();
        let pd = QuotientTangle::braid_generator().lift(2).unwrap();
        let theta = periodic_action(&pd, &kc).unwrap();
        let eq = equivariant_complex(kc.complex.clone(), &theta, 2, 3).unwrap();
        assert!(eq.complex.check_d_squared().is_ok());
        for bd in eq.complex.bidegrees() {
            let expect: usize = (0..=3).map(|i| kc.complex.dim((bd.0 - i, bd.1))).sum();
            assert_eq!(eq.complex.dim(bd), expect);
        }
        let c = point();
        let neg = ChainMap::identity(c.clone()).neg();
        assert!(matches!(equivariant_complex(c.clone(), &neg, 3, 2), Err(EquivariantError::NotAnAction(_))));
        assert!(equivariant_complex(c.clone(), &neg, 2, 2).is_ok());
        assert!(matches!(equivariant_complex(c, &neg, 2, 0), Err(EquivariantError::BadTruncation)));
    }

    #[test]
    fn axis_unknot() {
        let d = QuotientTangle::parallel(1).lift(2).unwrap();
        let t = ekh(&d, 6, Convention::Paper).unwrap();
        for q in [-1, 1] {
            assert_eq!(t.table.get((0, q)), g(1, &[]));
            assert_eq!(t.table.get((1, q)), g(0, &[]));
            assert_eq!(t.table.get((2, q)), g(0, &[2]));
            assert_eq!(t.table.get((3, q)), g(0, &[]));
            assert_eq!(t.table.get((4, q)), g(0, &[2]));
        }
        assert!(t.trusted((5, 1)) && !t.trusted((6, 1)));
        let one = ekh(&d, 1, Convention::Paper).unwrap();
        assert!(one.window_is_empty());
        assert!(!t.window_is_empty());
    }

    #[test]
    fn swapped_pair() {
        // A⊗A with the swap splits as Z{1⊗1} ⊕ Z{X⊗X} ⊕ Z[Z/2]{1⊗X}: trivial summands give
        // group cohomology, the free summand gives Z in degree 0 only.
        let d = QuotientTangle::closed(Diagram::unknot()).unwrap().lift(2).unwrap();
        let t = ekh(&d, 6, Convention::Paper).unwrap();
        let coh = group_cohomology_oracle(2, 6);
        for k in 0..6 {
            assert_eq!(t.table.get((k, -2)), coh[k as usize]);
            assert_eq!(t.table.get((k, 2)), coh[k as usize]);
            assert_eq!(t.table.get((k, 0)), if k == 0 { g(1, &[]) } else { g(0, &[]) });
        }
    }

    #[test]
    fn equivariant_first_move_invariance() {
        for p in [2, 3] {
            let d = QuotientTangle::parallel(1).lift(p).unwrap();
            let a = ekh(&d, 4, Convention::Paper).unwrap();
            for left in [true, false] {
                for positive in [true, false] {
                    let k = Move::R1Add { edge: 0, kink: Kink { left, positive } };
                    let b = ekh(&d.apply_equivariant_rmove(&k).unwrap(), 4, Convention::Paper).unwrap();
                    assert_eq!(a.trusted_table(), b.trusted_table(), "p={p} left={left} positive={positive}");
                }
            }
        }
    }

    #[test]
    fn switch_tensor() {
        // A split union of p copies of the Hopf link: rotating the lift versus permuting tensor factors.
        let hopf = QuotientTangle::braid_closure(2, &[1, 1]).unwrap();
        for p in [2, 3] {
            let d = QuotientTangle::closed(hopf.clone()).unwrap().lift(p).unwrap();
            let via_lift = ekh(&d, 3, Convention::Paper).unwrap();
            let kc = KhovanovComplex::new(&hopf, Convention::Paper).unwrap();
            let tp = tensor_power(&kc.complex, p);
            let theta = crate::chain::cyclic_action_on(&tp);
            let eq = equivariant_complex(tp.complex.clone(), &theta, p, 3).unwrap();
            let via_tensor = EkhTable::from_complex(&eq).unwrap();
            assert_eq!(via_lift.table, via_tensor.table, "p={p}");
            if p == 3 {
                break;
            }
        }
    }

    fn swap_ring() -> SkewGroupRing {
        let mut st = vec![vec![vec![big(0); 2]; 2]; 2];
        st[0][0][0] = big(1);
        st[1][1][1] = big(1);
        SkewGroupRing::new(st, vec![big(1), big(1)], 2, IntMatrix::from_rows(&[vec![0, 1], vec![1, 0]])).unwrap()
    }

    fn elem(ring: &SkewGroupRing, seed: &mut u64) -> SkewElement {
        let mut next = || {
            *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((*seed >> 33) % 7) as i64 - 3
        };
        SkewElement { parts: (0..ring.p).map(|_| (0..ring.rank).map(|_| big(next())).collect()).collect() }
    }

    #[test]
    fn skew_group_rings() {
        let r = swap_ring();
        let (a, b, c, d) = (big(2), big(3), big(5), big(7));
        let x = r.element(vec![a.clone(), b.clone()], 1);
        let y = r.element(vec![c.clone(), d.clone()], 0);
        assert_eq!(skew_mul(&r, &x, &y).unwrap(), r.element(vec![&a * &d, &b * &c], 1));
        let trivial = SkewGroupRing::new(vec![vec![vec![big(1)]]], vec![big(1)], 3, IntMatrix::identity(1)).unwrap();
        let u = SkewElement { parts: vec![vec![big(1)], vec![big(2)], vec![big(0)]] };
        let v = SkewElement { parts: vec![vec![big(0)], vec![big(1)], vec![big(-1)]] };
        let uv = GroupRingElement::from_ints(3, &[1, 2]).mul(&GroupRingElement::from_ints(3, &[0, 1, -1]));
        assert_eq!(skew_mul(&trivial, &u, &v).unwrap().parts.concat(), uv.coeffs);
        assert!(matches!(skew_mul(&r, &x, &u), Err(EquivariantError::RingMismatch(_))));
        let h2 = arc_algebra(2).unwrap();
        let rank = h2.rank();
        let mut st = vec![vec![vec![big(0); rank]; rank]; rank];
        for i in 0..rank {
            for j in 0..rank {
                for (k, x) in h2.mul(i, j) {
                    st[i][j][k] += big(x);
                }
            }
        }
        let mut unit = vec![big(0); rank];
        for (k, x) in h2.unit() {
            unit[k] += big(x);
        }
        let mut seed = 7;
        for (ring, p) in [
            (swap_ring(), 2),
            (SkewGroupRing::wreath(&st, &unit, 2).unwrap(), 2),
            (SkewGroupRing::wreath(&st, &unit, 3).unwrap(), 3),
        ] {
            assert_eq!(ring.p, p);
            for _ in 0..4 {
                let (x, y, z) = (elem(&ring, &mut seed), elem(&ring, &mut seed), elem(&ring, &mut seed));
                let l = skew_mul(&ring, &skew_mul(&ring, &x, &y).unwrap(), &z).unwrap();
                let rr = skew_mul(&ring, &x, &skew_mul(&ring, &y, &z).unwrap()).unwrap();
                assert_eq!(l, rr);
                assert_eq!(skew_mul(&ring, &ring.one(), &x).unwrap(), x);
                assert_eq!(skew_mul(&ring, &x, &ring.one()).unwrap(), x);
            }
        }
    }

    #[test]
    fn semidiagonal_module_axiom() {
        let r = swap_ring();
        let m = SkewModule::regular(&r);
        let swap = IntMatrix::from_rows(&[vec![0, 1], vec![1, 0]]);
        let w: Vec<BigInt> = [1, -2, 3, 5].iter().map(|&x| big(x)).collect();
        // g = identity: r acts on the M factor only.
        let rv = vec![big(2), big(-1)];
        let out = semidiagonal_action(&swap, &m, &rv, 0, &w);
        assert_eq!(out, [2, 2, 6, -5].iter().map(|&x| big(x)).collect::<Vec<_>>());
        // r = 1: the diagonal action.
        let out = semidiagonal_action(&swap, &m, &r.unit, 1, &w);
        assert_eq!(out, [5, 3, -2, 1].iter().map(|&x| big(x)).collect::<Vec<_>>());
        let mut seed = 11;
        for _ in 0..10 {
            let (x, y) = (elem(&r, &mut seed), elem(&r, &mut seed));
            let w: Vec<BigInt> = elem(&r, &mut seed).parts.concat();
            let lhs = skew_act(&r, &swap, &m, &skew_mul(&r, &x, &y).unwrap(), &w);
            let rhs = skew_act(&r, &swap, &m, &x, &skew_act(&r, &swap, &m, &y, &w));
            assert_eq!(lhs, rhs);
        }
    }

    fn expect_image(h: &Hhat, m: usize, l: usize, w: &str, terms: &[(i64, &str)]) {
        let got: BTreeMap<String, BigInt> = h.image(m, l, w).into_iter().map(|(c, f)| (f.join("⊗"), c)).collect();
        let want: BTreeMap<String, BigInt> = terms.iter().map(|(c, f)| (f.to_string(), big(*c))).collect();
        assert_eq!(got, want, "p={} e{m} θ^{l} {w}", h.p);
    }

    #[test]
    fn hhat_tables_for_two_and_three() {
        let h = hhat(2, 4).unwrap();
        for l in 0..2 {
            expect_image(&h, 0, l, "s0", &[(1, "s0⊗s0")]);
            expect_image(&h, 0, l, "s1", &[(1, "s1⊗s1")]);
            for m in 1..=4 {
                expect_image(&h, m, l, "s0", &[]);
                expect_image(&h, m, l, "s1", &[]);
            }
            for m in 2..=4 {
                expect_image(&h, m, l, "s", &[]);
            }
        }
        expect_image(&h, 0, 0, "s", &[(1, "s1⊗s"), (1, "s⊗s0")]);
        expect_image(&h, 0, 1, "s", &[(1, "s⊗s1"), (1, "s0⊗s")]);
        expect_image(&h, 1, 0, "s", &[(1, "s⊗s")]);
        expect_image(&h, 1, 1, "s", &[(-1, "s⊗s")]);
        let h = hhat(3, 5).unwrap();
        for l in 0..3 {
            expect_image(&h, 0, l, "s0", &[(1, "s0⊗s0⊗s0")]);
            for m in 1..=5 {
                expect_image(&h, m, l, "s1", &[]);
            }
            expect_image(&h, 2, l, "s", &[(-1, "s⊗s⊗s")]);
            for m in 3..=5 {
                expect_image(&h, m, l, "s", &[]);
            }
        }
        expect_image(&h, 0, 0, "s", &[(1, "s1⊗s1⊗s"), (1, "s1⊗s⊗s0"), (1, "s⊗s0⊗s0")]);
        expect_image(&h, 0, 1, "s", &[(1, "s0⊗s1⊗s"), (1, "s0⊗s⊗s0"), (1, "s⊗s1⊗s1")]);
        expect_image(&h, 0, 2, "s", &[(1, "s0⊗s0⊗s"), (1, "s1⊗s⊗s1"), (1, "s⊗s0⊗s1")]);
        expect_image(&h, 1, 0, "s", &[(1, "s⊗s1⊗s"), (1, "s⊗s⊗s0")]);
        expect_image(&h, 1, 1, "s", &[(1, "s0⊗s⊗s"), (-1, "s⊗s⊗s1")]);
        expect_image(&h, 1, 2, "s", &[(-1, "s1⊗s⊗s"), (-1, "s⊗s0⊗s")]);
        assert!(h.to_text().contains("H3(θ^2⊗s) = -s⊗s⊗s"));
    }

    #[test]
    fn hhat_is_an_equivariant_chain_map() {
        for (p, n) in [(2, 6), (3, 6), (5, 5)] {
            let h = hhat(p, n).unwrap();
            assert!(h.map.check_chain_map().is_ok());
            assert!(h.is_equivariant(), "p={p}");
            let mut s1 = vec!["s1"; p].join("⊗");
            expect_image(&h, 0, 0, "s1", &[(1, &s1)]);
            // d Ĥ(1⊗s) = s1^p - s0^p.
            let (bd, col) = h.source.locate(&vec![((0, 0), 0), S]).unwrap();
            let img = h.map.block(bd).column(col);
            let dimg = h.target.complex.d(bd).mul_vec(&img).unwrap();
            let s0 = h.target.locate(&vec![S0; p]).unwrap().1;
            let s1i = h.target.locate(&vec![S1; p]).unwrap().1;
            for (k, x) in dimg.iter().enumerate() {
                let want = if k == s1i {
                    1
                } else if k == s0 {
                    -1
                } else {
                    0
                };
                assert_eq!(*x, big(want));
            }
            s1.clear();
        }
    }

    #[test]
    fn diagonal_approximation() {
        for p in [2, 3] {
            let res = build_resolution(p, 5).unwrap();
            let diag = diagonal(&res).unwrap();
            // Δ extended equivariantly is a chain map: check d Δ(e_m) = Δ(δ_m e_{m-1}).
            let th = res.theta(diag.tensor.factors[0].clone());
            let dt = crate::chain::tensor_maps(&[&th, &th], &diag.tensor, &diag.tensor).unwrap();
            for m in 1..=5 {
                let bd = (-(m as i64), 0);
                let d = columns(&diag.tensor.complex.d(bd));
                let lhs = apply_cols(&d, &diag.images[m]);
                let pw = power_cols(&dt, p, (bd.0 + 1, 0));
                assert_eq!(lhs, group_act(&pw, &res.delta(m), &diag.images[m - 1]));
            }
        }
    }

    fn two_term() -> Arc<BigradedComplex> {
        let mut b = BTreeMap::new();
        b.insert((0, 0), vec!["a".into()]);
        b.insert((1, 0), vec!["b".into()]);
        let mut d = BTreeMap::new();
        d.insert((0, 0), IntMatrix::from_rows(&[vec![2]]));
        Arc::new(BigradedComplex::new(b, d).unwrap())
    }

    #[test]
    fn equivariant_homotopy_of_equal_maps_is_zero() {
        let c = two_term();
        let id = ChainMap::identity(c.clone());
        let h = Homotopy { shift: (-1, 0), blocks: BTreeMap::new() };
        let eh = equivariant_homotopy(&id, &id, &h, 2, 3).unwrap();
        assert_eq!(eh.homotopy.nonzero_entries(), 0);
        let bad = Homotopy { shift: (-1, 0), blocks: BTreeMap::from([((1, 0), IntMatrix::from_rows(&[vec![1]]))]) };
        assert!(matches!(equivariant_homotopy(&id, &id, &bad, 2, 3), Err(EquivariantError::NotAHomotopy(_))));
    }

    #[test]
    fn equivariant_homotopy_of_first_move_roundtrip() {
        let u = Diagram::unknot();
        let kink = Move::R1Add { edge: 0, kink: Kink { left: true, positive: true } };
        let kc0 = KhovanovComplex::new(&u, Convention::Paper).unwrap();
        let kc = elementary_map(&kc0, &kink, &mut Labels::fresh(&u)).unwrap().after;
        let rem = elementary_map(&kc, &Move::R1Remove { crossing: 0 }, &mut Labels::fresh(&kc.diagram)).unwrap();
        let add = elementary_map(&rem.after, &kink, &mut Labels::fresh(&rem.after.diagram)).unwrap();
        let f1 = rem.map.then(&add.map).unwrap().rebase(kc.complex.clone(), kc.complex.clone()).unwrap();
        let f0 = ChainMap::identity(kc.complex.clone());
        assert!(!f1.equals(&f0));
        let h = find_homotopy(&f1, &f0).unwrap();
        let eh = equivariant_homotopy(&f0, &f1, &h, 2, 3).unwrap();
        assert!(eh.homotopy.verify(&eh.f1, &eh.f0));
        assert!(eh.homotopy.nonzero_entries() > 0);
    }
}
