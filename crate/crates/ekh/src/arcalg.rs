//! Khovanov arc algebras, modules of flat and crossed tangles over them, and the tensor
//! product over the arc algebra computed as a coequalizer.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::chain::{
    homology, tensor_many, Bideg, BigradedComplex, ChainError, ComplexBuilder, HomologyTable, SCHEMA_VERSION,
};
use crate::diagram::{Diagram, DiagramError, DiskularTangle};
use crate::khovanov::{Convention, KhovanovComplex, KhovanovError};
use crate::par;
use crate::zlinalg::{smith_normal_form, solve_integer, IntMatrix};

pub const MAX_MATCHING_POINTS: usize = 8;
pub const MAX_TANGLE_POINTS: usize = 6;
pub const MAX_TANGLE_CROSSINGS: usize = 6;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ArcError {
    #[error("out of scope: {0}")]
    OutOfScope(String),
    #[error("boundary mismatch: {0}")]
    BoundaryMismatch(String),
    #[error("quotient has torsion: {0}")]
    TorsionQuotient(String),
    #[error(transparent)]
    Khovanov(#[from] KhovanovError),
    #[error(transparent)]
    Diagram(#[from] DiagramError),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

/// A perfect matching of `n` points on a line by pairwise non-crossing arcs.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CrossinglessMatching {
    pub n: usize,
    pub pairs: Vec<(usize, usize)>,
}

impl CrossinglessMatching {
    pub fn partner(&self, i: usize) -> usize {
        self.pairs
            .iter()
            .find_map(|&(a, b)| {
                if a == i {
                    Some(b)
                } else if b == i {
                    Some(a)
                } else {
                    None
                }
            })
            .unwrap()
    }
}

fn matchings_of(points: &[usize]) -> Vec<Vec<(usize, usize)>> {
    if points.is_empty() {
        return vec![vec![]];
    }
    let mut out = vec![];
    for k in (1..points.len()).step_by(2) {
        for inner in matchings_of(&points[1..k]) {
            for outer in matchings_of(&points[k + 1..]) {
                let mut v = vec![(points[0], points[k])];
                v.extend(inner.iter().copied());
                v.extend(outer.iter().copied());
                v.sort();
                out.push(v);
            }
        }
    }
    out
}

/// All crossingless matchings of `n` points, in lexicographic order of their sorted pairs.
pub fn enumerate_matchings(n: usize) -> Result<Vec<CrossinglessMatching>, ArcError> {
    if !n.is_multiple_of(2) || n > MAX_MATCHING_POINTS {
        return Err(ArcError::OutOfScope(format!("matchings of {n} points")));
    }
    let pts: Vec<usize> = (0..n).collect();
    let mut v: Vec<CrossinglessMatching> =
        matchings_of(&pts).into_iter().map(|pairs| CrossinglessMatching { n, pairs }).collect();
    v.sort();
    Ok(v)
}

/// A closed 1-manifold given by arcs between nodes; each node lies on exactly two arcs.
#[derive(Clone, Debug)]
struct Flat {
    nodes: usize,
    arcs: Vec<(usize, usize)>,
}

/// Vector in the tensor power of the Frobenius algebra over the circles of a flat picture.
type Vect = BTreeMap<u64, i64>;

impl Flat {
    /// Circle of each node, numbered by first node.
    fn circles(&self) -> (Vec<usize>, usize) {
        let mut adj = vec![vec![]; self.nodes];
        for &(a, b) in &self.arcs {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut comp = vec![usize::MAX; self.nodes];
        let mut k = 0;
        for s in 0..self.nodes {
            if comp[s] != usize::MAX {
                continue;
            }
            let mut stack = vec![s];
            comp[s] = k;
            while let Some(x) = stack.pop() {
                for &y in &adj[x] {
                    if comp[y] == usize::MAX {
                        comp[y] = k;
                        stack.push(y);
                    }
                }
            }
            k += 1;
        }
        (comp, k)
    }

    /// Replaces arcs `(x1, y1)`, `(x2, y2)` at indices `i`, `j` by `(x1, x2)`, `(y1, y2)` and
    /// applies the corresponding merge or split.
    fn saddle(&self, v: &Vect, i: usize, j: usize) -> (Flat, Vect) {
        let (before, _) = self.circles();
        let (x1, y1) = self.arcs[i];
        let (x2, y2) = self.arcs[j];
        let mut next = self.clone();
        next.arcs[i] = (x1, x2);
        next.arcs[j] = (y1, y2);
        let (after, _) = next.circles();
        let (a, b) = (before[x1], before[x2]);
        let mut transfer: BTreeMap<usize, usize> = BTreeMap::new();
        for node in 0..self.nodes {
            if before[node] != a && before[node] != b {
                transfer.insert(before[node], after[node]);
            }
        }
        let mut out = Vect::new();
        for (&mask, &c) in v {
            let mut base = 0u64;
            for (&from, &to) in &transfer {
                if mask >> from & 1 == 1 {
                    base |= 1 << to;
                }
            }
            let bit = |k: usize| mask >> k & 1 == 1;
            let terms: Vec<u64> = if a != b {
                match crate::khovanov::Frobenius::m(bit(a), bit(b)) {
                    None => vec![],
                    Some(x) => vec![base | (x as u64) << after[x1]],
                }
            } else {
                let (a1, b1) = (after[x1], after[y1]);
                assert_ne!(a1, b1, "saddle on a flat picture must merge or split");
                crate::khovanov::Frobenius::delta(bit(a))
                    .into_iter()
                    .map(|(p, q)| base | (p as u64) << a1 | (q as u64) << b1)
                    .collect()
            };
            for t in terms {
                *out.entry(t).or_insert(0) += c;
            }
        }
        out.retain(|_, c| *c != 0);
        (next, out)
    }
}

/// Re-expresses a mask over circles numbered by `from` as one over circles numbered by `to`,
/// using `nodes` to pair them.
fn remap(mask: u64, from: &[usize], to: &[usize], nodes: impl Iterator<Item = (usize, usize)>) -> u64 {
    let mut out = 0;
    for (a, b) in nodes {
        if mask >> from[a] & 1 == 1 {
            out |= 1 << to[b];
        }
    }
    out
}

/// The arc algebra on `n` points; basis elements are `(a, b, labels)` for matchings `a`, `b`.
pub struct ArcAlgebra {
    pub n: usize,
    pub matchings: Vec<CrossinglessMatching>,
    pub basis: Vec<(usize, usize, u64)>,
    pub circles: BTreeMap<(usize, usize), usize>,
    index: HashMap<(usize, usize, u64), usize>,
}

impl ArcAlgebra {
    fn flat(&self, a: usize, b: usize, offset: usize, total: usize) -> Flat {
        let mut arcs = vec![];
        for m in [a, b] {
            arcs.extend(self.matchings[m].pairs.iter().map(|&(x, y)| (x + offset, y + offset)));
        }
        Flat { nodes: total, arcs }
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    /// Quantum degree, including the shift by half the number of points.
    pub fn degree(&self, x: usize) -> i64 {
        let (a, b, mask) = self.basis[x];
        2 * mask.count_ones() as i64 - self.circles[&(a, b)] as i64 + self.n as i64 / 2
    }

    pub fn element(&self, a: usize, b: usize, mask: u64) -> usize {
        self.index[&(a, b, mask)]
    }

    pub fn unit(&self) -> Vec<(usize, i64)> {
        (0..self.matchings.len()).map(|a| (self.element(a, a, 0), 1)).collect()
    }

    /// Product of two basis elements.
    pub fn mul(&self, x: usize, y: usize) -> Vec<(usize, i64)> {
        let (a, b, mx) = self.basis[x];
        let (b2, c, my) = self.basis[y];
        if b != b2 {
            return vec![];
        }
        let n = self.n;
        let mut flat = self.flat(a, b, 0, 2 * n);
        let second = self.flat(b, c, n, 2 * n);
        flat.arcs.extend(second.arcs.iter().copied());
        let (comp, _) = flat.circles();
        let (c1, _) = self.flat(a, b, 0, n).circles();
        let (c2, _) = self.flat(b, c, 0, n).circles();
        let m = remap(mx, &c1, &comp, (0..n).map(|j| (j, j))) | remap(my, &c2, &comp, (0..n).map(|j| (j, n + j)));
        let mut v = Vect::from([(m, 1)]);
        let k = self.matchings[a].pairs.len();
        for (t, _) in self.matchings[b].pairs.iter().enumerate() {
            let (f, w) = flat.saddle(&v, k + t, 2 * k + t);
            flat = f;
            v = w;
        }
        let (fin, _) = flat.circles();
        let (target, _) = self.flat(a, c, 0, n).circles();
        v.into_iter()
            .map(|(mask, coef)| (self.element(a, c, remap(mask, &fin, &target, (0..n).map(|j| (j, j)))), coef))
            .collect()
    }
}

pub fn arc_algebra(n: usize) -> Result<ArcAlgebra, ArcError> {
    if !n.is_multiple_of(2) || n > MAX_TANGLE_POINTS {
        return Err(ArcError::OutOfScope(format!("arc algebra on {n} points")));
    }
    let matchings = enumerate_matchings(n)?;
    let mut alg = ArcAlgebra { n, matchings, basis: vec![], circles: BTreeMap::new(), index: HashMap::new() };
    for a in 0..alg.matchings.len() {
        for b in 0..alg.matchings.len() {
            let (_, k) = alg.flat(a, b, 0, n).circles();
            alg.circles.insert((a, b), k);
            for mask in 0..1u64 << k {
                alg.index.insert((a, b, mask), alg.basis.len());
                alg.basis.push((a, b, mask));
            }
        }
    }
    Ok(alg)
}

/// Which side the arc algebra acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// A complex of modules over an arc algebra: each generator lies in the summand of one matching.
pub struct ModuleComplex {
    pub algebra: Arc<ArcAlgebra>,
    pub side: Side,
    pub complex: Arc<BigradedComplex>,
    /// `(summand, bidegree, position)` of each generator.
    pub gens: Vec<(usize, Bideg, usize)>,
    /// Action of each algebra basis element on each generator, where nonzero.
    pub action: HashMap<(usize, usize), Vec<(usize, i64)>>,
}

impl ModuleComplex {
    pub fn act(&self, g: usize, h: usize) -> &[(usize, i64)] {
        self.action.get(&(g, h)).map_or(&[], |v| v.as_slice())
    }

    /// The algebra as a right module over itself.
    pub fn regular(algebra: Arc<ArcAlgebra>) -> Result<Self, ArcError> {
        let mut b = ComplexBuilder::new();
        let mut gens = vec![];
        for (x, &(a, c, mask)) in algebra.basis.iter().enumerate() {
            let bd = (0, algebra.degree(x));
            let pos = b.add_generator(bd, format!("{a},{c},{mask}"));
            gens.push((c, bd, pos));
        }
        let mut action = HashMap::new();
        for x in 0..algebra.rank() {
            for h in 0..algebra.rank() {
                let v = algebra.mul(x, h);
                if !v.is_empty() {
                    action.insert((x, h), v);
                }
            }
        }
        Ok(ModuleComplex { algebra, side: Side::Right, complex: Arc::new(b.build()?), gens, action })
    }
}

/// Flat picture of a resolution closed up by a matching, followed by the picture of an algebra
/// element on `n` extra nodes; returns it with the arc indices of the two copies of the shared matching.
fn module_flat(
    kc: &KhovanovComplex,
    state: u64,
    alg: &ArcAlgebra,
    shared: usize,
    other: usize,
) -> (Flat, Vec<(usize, usize)>) {
    let d = &kc.diagram;
    let topo = &kc.topo;
    let e = topo.n_edges();
    let mut arcs: Vec<(usize, usize)> = (0..e).map(|k| (2 * k, 2 * k + 1)).collect();
    for &(i, o) in &d.joints {
        arcs.push((topo.head_node(i), topo.tail_node(o)));
    }
    for c in 0..d.n_crossings() {
        let nd = |s| topo.slot_node(d, c, s);
        if state >> c & 1 == 0 {
            arcs.push((nd(0), nd(1)));
            arcs.push((nd(2), nd(3)));
        } else {
            arcs.push((nd(0), nd(3)));
            arcs.push((nd(1), nd(2)));
        }
    }
    let q0 = 2 * e;
    let mut pairs = vec![];
    for &(x, y) in &alg.matchings[shared].pairs {
        pairs.push((arcs.len(), 0));
        arcs.push((topo.boundary_node(d, x), topo.boundary_node(d, y)));
    }
    for (t, &(x, y)) in alg.matchings[shared].pairs.iter().enumerate() {
        pairs[t].1 = arcs.len();
        arcs.push((q0 + x, q0 + y));
    }
    for &(x, y) in &alg.matchings[other].pairs {
        arcs.push((q0 + x, q0 + y));
    }
    (Flat { nodes: q0 + alg.n, arcs }, pairs)
}

/// Complex of modules of a tangle with `n` endpoints and no other boundary circle: a left module
/// when the endpoints lie on the outer boundary, a right module when they lie on an inner one.
pub fn tangle_complex(t: &DiskularTangle, algebra: Arc<ArcAlgebra>) -> Result<ModuleComplex, ArcError> {
    let (inner, outer) = t.signature();
    let (side, n) = match (inner.as_slice(), outer) {
        ([], n) => (Side::Left, n),
        ([m], 0) => (Side::Right, *m),
        _ => return Err(ArcError::OutOfScope(format!("signature ({inner:?};{outer})"))),
    };
    if n != algebra.n {
        return Err(ArcError::BoundaryMismatch(format!("tangle has {n} endpoints, algebra acts on {}", algebra.n)));
    }
    if n > MAX_TANGLE_POINTS || t.diagram.n_crossings() > MAX_TANGLE_CROSSINGS {
        return Err(ArcError::OutOfScope("tangle exceeds the size limits".into()));
    }
    let nm = algebra.matchings.len();
    let kcs: Vec<KhovanovComplex> = (0..nm)
        .map(|m| KhovanovComplex::with_closure(&t.diagram, &algebra.matchings[m].pairs, 0, Convention::Paper))
        .collect::<Result<_, _>>()?;
    let half = n as i64 / 2;
    let mut b = ComplexBuilder::new();
    let mut gens = vec![];
    let mut id: HashMap<(usize, usize), usize> = HashMap::new();
    for (m, kc) in kcs.iter().enumerate() {
        for g in 0..kc.n_gens() {
            let (i, q) = kc.gen_bideg[g];
            let bd = (i, q + half);
            let (s, mask) = kc.gens[g];
            let pos = b.add_generator(bd, format!("{m}:{s}:{mask}"));
            id.insert((m, g), gens.len());
            gens.push((m, bd, pos));
        }
    }
    for (m, kc) in kcs.iter().enumerate() {
        for g in 0..kc.n_gens() {
            let (_, sb, si) = gens[id[&(m, g)]];
            for (t, c) in kc.d_gen(g) {
                b.add_term_idx(sb, si, gens[id[&(m, t)]].2, BigInt::from(c));
            }
        }
    }
    let complex = Arc::new(b.build()?);
    let all: Vec<(usize, usize)> =
        kcs.iter().enumerate().flat_map(|(m, kc)| (0..kc.n_gens()).map(move |g| (m, g))).collect();
    let alg = algebra.clone();
    let tables: Vec<Vec<((usize, usize), Vec<(usize, i64)>)>> = par::map(&all, |&(m, g)| {
        let kc = &kcs[m];
        let (state, mask) = kc.gens[g];
        let mut out = vec![];
        for h in 0..alg.rank() {
            let (a, c, hm) = alg.basis[h];
            let (shared, other) = match side {
                Side::Right => (a, c),
                Side::Left => (c, a),
            };
            if shared != m {
                continue;
            }
            let (mut flat, pairs) = module_flat(kc, state, &alg, shared, other);
            let (comp, _) = flat.circles();
            let sm = &kc.smoothings[state as usize];
            let e = kc.topo.n_edges();
            let (hc, _) = alg.flat(a, c, 0, alg.n).circles();
            let mut init = 0u64;
            for k in 0..e {
                if mask >> sm.edge_comp[k] & 1 == 1 {
                    init |= 1 << comp[2 * k];
                }
            }
            init |= remap(hm, &hc, &comp, (0..alg.n).map(|j| (j, 2 * e + j)));
            let mut v = Vect::from([(init, 1)]);
            for &(i, j) in &pairs {
                let (f, w) = flat.saddle(&v, i, j);
                flat = f;
                v = w;
            }
            let (fin, _) = flat.circles();
            let target = &kcs[other];
            let tsm = &target.smoothings[state as usize];
            let mut img = vec![];
            for (mk, coef) in v {
                let mut tm = 0u64;
                for k in 0..e {
                    if mk >> fin[2 * k] & 1 == 1 {
                        tm |= 1 << tsm.edge_comp[k];
                    }
                }
                img.push((id[&(other, target.lookup[&(state, tm)])], coef));
            }
            if !img.is_empty() {
                out.push(((id[&(m, g)], h), img));
            }
        }
        out
    });
    let action = tables.into_iter().flatten().collect();
    Ok(ModuleComplex { algebra, side, complex, gens, action })
}

/// Tensor product over the arc algebra of a complex of right modules with one of left modules,
/// as the degreewise quotient of the tensor product over the integers by the action relations.
pub fn glue_tensor(right: &ModuleComplex, left: &ModuleComplex) -> Result<BigradedComplex, ArcError> {
    if right.side != Side::Right || left.side != Side::Left {
        return Err(ArcError::BoundaryMismatch("need a right module and a left module".into()));
    }
    if right.algebra.n != left.algebra.n {
        return Err(ArcError::BoundaryMismatch(format!(
            "modules over arc algebras on {} and {} points",
            right.algebra.n, left.algebra.n
        )));
    }
    let alg = &right.algebra;
    let tp = tensor_many(&[right.complex.clone(), left.complex.clone()]);
    let loc = |x: usize, y: usize| -> (Bideg, usize) {
        let (_, bx, px) = right.gens[x];
        let (_, by, py) = left.gens[y];
        tp.locate(&vec![(bx, px), (by, py)]).expect("tensor generator")
    };
    let mut rels: BTreeMap<Bideg, Vec<BTreeMap<usize, BigInt>>> = BTreeMap::new();
    for x in 0..right.gens.len() {
        for h in 0..alg.rank() {
            for y in 0..left.gens.len() {
                let mut col: BTreeMap<usize, BigInt> = BTreeMap::new();
                let mut bd = None;
                for &(xh, c) in right.act(x, h) {
                    let (b, k) = loc(xh, y);
                    assert!(bd.is_none() || bd == Some(b), "inhomogeneous action");
                    bd = Some(b);
                    *col.entry(k).or_insert_with(BigInt::zero) += c;
                }
                for &(hy, c) in left.act(y, h) {
                    let (b, k) = loc(x, hy);
                    assert!(bd.is_none() || bd == Some(b), "inhomogeneous action {:?} {:?}", bd, b);
                    bd = Some(b);
                    *col.entry(k).or_insert_with(BigInt::zero) -= c;
                }
                col.retain(|_, v| !v.is_zero());
                if let (Some(b), false) = (bd, col.is_empty()) {
                    rels.entry(b).or_default().push(col);
                }
            }
        }
    }
    let c = &tp.complex;
    let bds = c.bidegrees();
    let quots: Vec<Result<Quot, ArcError>> = par::map(&bds, |&bd| {
        let m = c.dim(bd);
        quotient(m, rels.get(&bd).map_or(&[][..], |v| v.as_slice())).map_err(|e| match e {
            ArcError::TorsionQuotient(_) => ArcError::TorsionQuotient(format!("at bidegree {bd:?}")),
            e => e,
        })
    });
    let mut q: BTreeMap<Bideg, Quot> = BTreeMap::new();
    for (bd, r) in bds.iter().zip(quots) {
        q.insert(*bd, r?);
    }
    let half = alg.n as i64 / 2;
    let mut b = ComplexBuilder::new();
    for (bd, qt) in &q {
        for t in 0..qt.pi.rows() {
            b.add_generator((bd.0, bd.1 - half), format!("[{},{}]#{t}", bd.0, bd.1));
        }
    }
    for (bd, qt) in &q {
        let Some(next) = q.get(&(bd.0 + 1, bd.1)) else { continue };
        let dm = next.pi.dot(&c.d(*bd)).dot(&qt.sigma);
        for (r, col, v) in dm.triplets() {
            b.add_term_idx((bd.0, bd.1 - half), col, r, v);
        }
    }
    Ok(b.build()?)
}

struct Quot {
    pi: IntMatrix,
    sigma: IntMatrix,
}

type SparseVec = BTreeMap<usize, BigInt>;

fn add_scaled(acc: &mut SparseVec, c: &BigInt, v: &SparseVec) {
    for (k, x) in v {
        let e = acc.entry(*k).or_insert_with(BigInt::zero);
        *e += c * x;
        if e.is_zero() {
            acc.remove(k);
        }
    }
}

/// Projection onto `Z^m` modulo the span of `rels`, with a section. Relations with a unit entry
/// eliminate a generator directly; any remainder goes through Smith normal form.
fn quotient(m: usize, rels: &[SparseVec]) -> Result<Quot, ArcError> {
    let mut subst: BTreeMap<usize, SparseVec> = BTreeMap::new();
    let mut hard: Vec<SparseVec> = vec![];
    let reduce = |subst: &BTreeMap<usize, SparseVec>, r: &SparseVec| -> SparseVec {
        let mut out = SparseVec::new();
        for (k, x) in r {
            match subst.get(k) {
                Some(e) => add_scaled(&mut out, x, e),
                None => add_scaled(&mut out, &BigInt::one(), &SparseVec::from([(*k, x.clone())])),
            }
        }
        out
    };
    for r in rels {
        let r = reduce(&subst, r);
        if r.is_empty() {
            continue;
        }
        let Some((&g, u)) = r.iter().find(|(_, x)| x.abs().is_one()) else {
            hard.push(r);
            continue;
        };
        let u = u.clone();
        let mut e = r.clone();
        e.remove(&g);
        let e: SparseVec = e.into_iter().map(|(k, x)| (k, -(&u * x))).collect();
        for v in subst.values_mut() {
            if let Some(x) = v.remove(&g) {
                add_scaled(v, &x, &e);
            }
        }
        subst.insert(g, e);
    }
    let survivors: Vec<usize> = (0..m).filter(|g| !subst.contains_key(g)).collect();
    let spos: HashMap<usize, usize> = survivors.iter().enumerate().map(|(i, &g)| (g, i)).collect();
    let k = survivors.len();
    // Projection and section for the first stage.
    let mut pi1 = vec![];
    for g in 0..m {
        match subst.get(&g) {
            Some(e) => pi1.extend(e.iter().map(|(s, x)| (spos[s], g, x.clone()))),
            None => pi1.push((spos[&g], g, BigInt::one())),
        }
    }
    let pi1 = IntMatrix::from_triplets(k, m, pi1);
    let sigma1 = IntMatrix::from_triplets(m, k, survivors.iter().enumerate().map(|(i, &g)| (g, i, BigInt::one())));
    let hard: Vec<SparseVec> = hard.iter().map(|r| reduce(&subst, r)).filter(|r| !r.is_empty()).collect();
    if hard.is_empty() {
        return Ok(Quot { pi: pi1, sigma: sigma1 });
    }
    let spos = &spos;
    let a = IntMatrix::from_triplets(
        k,
        hard.len(),
        hard.iter().enumerate().flat_map(|(j, col)| col.iter().map(move |(s, v)| (spos[s], j, v.clone()))),
    );
    let snf = smith_normal_form(&a);
    let r = snf.divisors.iter().filter(|d| !d.is_zero()).count();
    if snf.divisors.iter().take(r).any(|d| !d.abs().is_one()) {
        return Err(ArcError::TorsionQuotient(String::new()));
    }
    let pi2 = snf.u.submatrix(r, k, 0, k);
    let mut trip = vec![];
    for t in r..k {
        let mut e = vec![BigInt::zero(); k];
        e[t] = BigInt::one();
        let col = solve_integer(&snf.u, &e).map_err(ChainError::from)?;
        trip.extend(col.into_iter().enumerate().filter(|(_, v)| !v.is_zero()).map(|(i, v)| (i, t - r, v)));
    }
    let sigma2 = IntMatrix::from_triplets(k, k - r, trip);
    Ok(Quot { pi: pi2.dot(&pi1), sigma: sigma1.dot(&sigma2) })
}

/// A braid on `m` strands as a tangle with `2m` endpoints on the outer boundary, listed
/// counterclockwise: bottom ends left to right, then top ends right to left.
pub fn braid_tangle(m: usize, word: &[i32]) -> Result<DiskularTangle, ArcError> {
    let q = crate::diagram::QuotientTangle::braid(m, word)?;
    let b = &q.diagram.boundary;
    let order: Vec<usize> = (0..m).chain((m..2 * m).rev()).collect();
    let d = Diagram::new(q.diagram.crossings.clone(), q.diagram.joints.clone(), order.iter().map(|&i| b[i]).collect())?;
    Ok(DiskularTangle::new(d, 2 * m, vec![])?)
}

/// A crossingless tangle on an inner boundary circle with `n` points joined by `matching`,
/// oriented to glue onto a tangle whose outer endpoints are edge heads where `heads` holds.
pub fn cap_tangle(matching: &CrossinglessMatching, heads: &[bool]) -> Result<DiskularTangle, ArcError> {
    use crate::diagram::End;
    if heads.len() != matching.n {
        return Err(ArcError::BoundaryMismatch(format!("{} orientations for {} points", heads.len(), matching.n)));
    }
    let mut boundary = vec![End { edge: 0, head: false }; matching.n];
    for (k, &(x, y)) in matching.pairs.iter().enumerate() {
        if heads[x] == heads[y] {
            return Err(ArcError::BoundaryMismatch(format!("points {x} and {y} cannot be joined coherently")));
        }
        boundary[x] = End { edge: k, head: !heads[x] };
        boundary[y] = End { edge: k, head: !heads[y] };
    }
    Ok(DiskularTangle::new(Diagram::new(vec![], vec![], boundary)?, 0, vec![matching.n])?)
}

/// Homology of a tangle closed by the caps of a matching, computed by gluing and directly.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GlueReport {
    pub n: usize,
    pub crossings: usize,
    pub matching: Vec<(usize, usize)>,
    pub glued: HomologyTable,
    pub closed: HomologyTable,
}

impl GlueReport {
    pub fn agrees(&self) -> bool {
        self.glued == self.closed
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "version": SCHEMA_VERSION,
            "n": self.n,
            "crossings": self.crossings,
            "matching": self.matching,
            "agree": self.agrees(),
            "glued": self.glued.to_json()["homology"],
            "closed": self.closed.to_json()["homology"],
        })
    }
}

/// Glues `s` to the cap tangle of matching `m` on its outer points.
pub fn glue_check(s: &DiskularTangle, m: usize) -> Result<GlueReport, ArcError> {
    let n = s.outer;
    let alg = Arc::new(arc_algebra(n)?);
    let matching =
        alg.matchings.get(m).ok_or_else(|| ArcError::OutOfScope(format!("no matching {m} on {n} points")))?.clone();
    let heads: Vec<bool> = s.diagram.boundary[..n].iter().map(|e| e.head).collect();
    let t = cap_tangle(&matching, &heads)?;
    let closed = t.compose(0, s)?;
    let direct = homology(&KhovanovComplex::new(&closed.diagram, Convention::Paper)?.complex)?;
    let glued = homology(&glue_tensor(&tangle_complex(&t, alg.clone())?, &tangle_complex(s, alg)?)?)?;
    Ok(GlueReport { n, crossings: s.diagram.n_crossings(), matching: matching.pairs, glued, closed: direct })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::homology;
    use crate::diagram::{End, Kink, Labels, Move};

    fn catalan(k: usize) -> usize {
        (0..k).fold(1, |c, i| c * 2 * (2 * i + 1) / (i + 2))
    }

    #[test]
    fn matching_counts() {
        for n in [0, 2, 4, 6, 8] {
            let v = enumerate_matchings(n).unwrap();
            assert_eq!(v.len(), catalan(n / 2));
            let mut w = v.clone();
            w.dedup();
            assert_eq!(w.len(), v.len());
            for m in &v {
                for &(a, b) in &m.pairs {
                    for &(c, d) in &m.pairs {
                        assert!(!(a < c && c < b && b < d), "crossing arcs in {m:?}");
                    }
                }
            }
        }
        assert!(matches!(enumerate_matchings(10), Err(ArcError::OutOfScope(_))));
        assert!(matches!(enumerate_matchings(3), Err(ArcError::OutOfScope(_))));
    }

    #[test]
    fn algebra_ranks_and_laws() {
        assert_eq!(arc_algebra(2).unwrap().rank(), 2);
        let h4 = arc_algebra(4).unwrap();
        assert_eq!(h4.rank(), 12);
        let counts: Vec<usize> = h4.circles.values().copied().collect();
        assert_eq!(counts, vec![2, 1, 1, 2]);
        assert!(arc_algebra(8).is_err());
        for n in [2, 4, 6] {
            let h = arc_algebra(n).unwrap();
            let r = h.rank();
            let apply = |v: &[(usize, i64)], y: usize, left: bool| -> BTreeMap<usize, i64> {
                let mut out = BTreeMap::new();
                for &(x, c) in v {
                    let prod = if left { h.mul(x, y) } else { h.mul(y, x) };
                    for (z, d) in prod {
                        *out.entry(z).or_insert(0) += c * d;
                    }
                }
                out.retain(|_, c| *c != 0);
                out
            };
            for x in 0..r {
                let one = BTreeMap::from([(x, 1)]);
                assert_eq!(apply(&h.unit(), x, true), one);
                assert_eq!(apply(&h.unit(), x, false), one);
            }
            let step = if n == 6 { 7 } else { 1 };
            for x in (0..r).step_by(step) {
                for y in 0..r {
                    let xy = h.mul(x, y);
                    for (z, c) in &xy {
                        assert_eq!(h.degree(*z), h.degree(x) + h.degree(y), "grading");
                        assert!(*c != 0);
                    }
                    for z in (0..r).step_by(step) {
                        let left = apply(&xy, z, true);
                        let yz = h.mul(y, z);
                        let mut other = BTreeMap::new();
                        for (w, c) in yz {
                            for (u, d) in h.mul(x, w) {
                                *other.entry(u).or_insert(0) += c * d;
                            }
                        }
                        other.retain(|_, c| *c != 0);
                        assert_eq!(left, other, "associativity");
                    }
                }
            }
        }
        // Distinct idempotents are orthogonal.
        let e0 = h4.element(0, 0, 0);
        let e1 = h4.element(1, 1, 0);
        assert!(h4.mul(e0, e1).is_empty());
        assert_eq!(h4.mul(e0, e0), vec![(e0, 1)]);
    }

    fn heads(t: &DiskularTangle) -> Vec<bool> {
        t.diagram.boundary[..t.outer].iter().map(|e| e.head).collect()
    }

    fn check_glue(s: &DiskularTangle, m: usize) -> usize {
        let n = s.outer;
        let alg = Arc::new(arc_algebra(n).unwrap());
        let t = cap_tangle(&alg.matchings[m], &heads(s)).unwrap();
        let closed = t.compose(0, s).unwrap();
        assert!(closed.diagram.is_planar(&[]).unwrap());
        let kh = homology(&KhovanovComplex::new(&closed.diagram, Convention::Paper).unwrap().complex).unwrap();
        let right = tangle_complex(&t, alg.clone()).unwrap();
        let left = tangle_complex(s, alg.clone()).unwrap();
        let glued = glue_tensor(&right, &left).unwrap();
        assert_eq!(homology(&glued).unwrap(), kh);
        s.diagram.n_crossings()
    }

    fn cup() -> DiskularTangle {
        DiskularTangle::new(
            Diagram::new(vec![], vec![], vec![End { edge: 0, head: true }, End { edge: 0, head: false }]).unwrap(),
            2,
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn gluing_small_tangles() {
        check_glue(&cup(), 0);
        let d = &cup().diagram;
        let kinked = d
            .apply_move(
                &Move::R1Add { edge: 0, kink: Kink { left: true, positive: false } },
                &[],
                &mut Labels::fresh(d),
            )
            .unwrap()
            .0;
        assert_eq!(check_glue(&DiskularTangle::new(kinked, 2, vec![]).unwrap(), 0), 1);
        // Braid tangles closed by caps pairing each bottom end with the top end above it.
        assert_eq!(check_glue(&braid_tangle(2, &[1]).unwrap(), 1), 1);
        assert_eq!(check_glue(&braid_tangle(2, &[1, 1]).unwrap(), 1), 2);
        assert_eq!(check_glue(&braid_tangle(2, &[1, 1, 1]).unwrap(), 1), 3);
        let m6 = enumerate_matchings(6).unwrap().iter().position(|m| m.pairs == vec![(0, 5), (1, 4), (2, 3)]).unwrap();
        assert_eq!(check_glue(&braid_tangle(3, &[1, -2]).unwrap(), m6), 2);
        let r = glue_check(&braid_tangle(2, &[1, 1, 1]).unwrap(), 1).unwrap();
        assert!(r.agrees());
        assert_eq!((r.n, r.crossings, r.closed.torsion_count(2)), (4, 3, 1));
    }

    #[test]
    fn gluing_with_the_algebra_is_trivial() {
        let s = braid_tangle(2, &[1, -1]).unwrap();
        let alg = Arc::new(arc_algebra(4).unwrap());
        let reg = ModuleComplex::regular(alg.clone()).unwrap();
        let left = tangle_complex(&s, alg).unwrap();
        let glued = glue_tensor(&reg, &left).unwrap();
        assert_eq!(glued.total_rank(), left.complex.total_rank());
    }

    #[test]
    fn module_actions_commute_with_differential() {
        let s = braid_tangle(2, &[1, 1]).unwrap();
        let alg = Arc::new(arc_algebra(4).unwrap());
        let m = tangle_complex(&s, alg.clone()).unwrap();
        let c = &m.complex;
        let by_pos: HashMap<(Bideg, usize), usize> =
            m.gens.iter().enumerate().map(|(g, &(_, bd, p))| ((bd, p), g)).collect();
        let d = |g: usize| -> Vec<(usize, BigInt)> {
            let (_, bd, p) = m.gens[g];
            c.d(bd)
                .column(p)
                .into_iter()
                .enumerate()
                .filter(|(_, v)| !v.is_zero())
                .map(|(r, v)| (by_pos[&((bd.0 + 1, bd.1), r)], v))
                .collect()
        };
        for g in 0..m.gens.len() {
            for h in 0..alg.rank() {
                let mut lhs: BTreeMap<usize, BigInt> = BTreeMap::new();
                for (x, c1) in d(g) {
                    for &(y, c2) in m.act(x, h) {
                        *lhs.entry(y).or_insert_with(BigInt::zero) += &c1 * c2;
                    }
                }
                let mut rhs: BTreeMap<usize, BigInt> = BTreeMap::new();
                for &(x, c1) in m.act(g, h) {
                    for (y, c2) in d(x) {
                        *rhs.entry(y).or_insert_with(BigInt::zero) += c2 * c1;
                    }
                }
                lhs.retain(|_, v| !v.is_zero());
                rhs.retain(|_, v| !v.is_zero());
                assert_eq!(lhs, rhs);
            }
        }
    }
}
