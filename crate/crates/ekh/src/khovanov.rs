//! Khovanov cube of resolutions over the integers, the rotation action on complexes of periodic
//! diagrams, and chain maps of elementary cobordisms.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::sync::Arc;

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{Bideg, BigradedComplex, ChainError, ChainMap};
use crate::diagram::{Diagram, DiagramError, Labels, Move, MoveRecord, PeriodicDiagram, Smoothing, Topology};
use crate::par;
use crate::zlinalg::IntMatrix;

pub const MAX_CROSSINGS: usize = 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KhovanovError {
    #[error(transparent)]
    Diagram(#[from] DiagramError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error("move not applicable: {0}")]
    MoveNotApplicable(String),
    #[error("sign correction failed: {0}")]
    SignCorrectionFailure(String),
    #[error("out of scope: {0}")]
    OutOfScope(String),
}

fn not_applicable(m: impl Into<String>) -> KhovanovError {
    KhovanovError::MoveNotApplicable(m.into())
}

/// Quantum grading convention: `Paper` uses `gr(1) = -1`, `gr(X) = +1`; `Mirrored` negates `q`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    #[default]
    Paper,
    Mirrored,
}

impl Convention {
    pub fn sign(self) -> i64 {
        match self {
            Convention::Paper => 1,
            Convention::Mirrored => -1,
        }
    }
}

/// The Frobenius algebra `Z[X]/(X^2)`; `false` is `1` and `true` is `X`.
pub struct Frobenius;

impl Frobenius {
    pub fn gr(x: bool) -> i64 {
        if x {
            1
        } else {
            -1
        }
    }

    pub fn m(a: bool, b: bool) -> Option<bool> {
        match (a, b) {
            (true, true) => None,
            _ => Some(a || b),
        }
    }

    pub fn delta(a: bool) -> Vec<(bool, bool)> {
        if a {
            vec![(true, true)]
        } else {
            vec![(false, true), (true, false)]
        }
    }

    pub fn unit() -> bool {
        false
    }

    pub fn counit(a: bool) -> i64 {
        a as i64
    }
}

/// A generator: cube state (bit `c` = smoothing of crossing `c`) and circle labels (bit `j` = circle `j` carries `X`).
pub type Gen = (u64, u64);

pub struct KhovanovComplex {
    pub diagram: Diagram,
    pub topo: Topology,
    pub convention: Convention,
    pub extra: Vec<(usize, usize)>,
    pub smoothings: Vec<Smoothing>,
    pub gens: Vec<Gen>,
    pub gen_bideg: Vec<Bideg>,
    pub gen_pos: Vec<usize>,
    pub lookup: HashMap<Gen, usize>,
    pub complex: Arc<BigradedComplex>,
}

fn label_string(n: usize, state: u64, circles: usize, mask: u64) -> String {
    let s: String = (0..n).map(|c| if state >> c & 1 == 1 { '1' } else { '0' }).collect();
    let l: String = (0..circles).map(|j| if mask >> j & 1 == 1 { 'X' } else { '1' }).collect();
    format!("{s}|{l}")
}

impl KhovanovComplex {
    pub fn new(d: &Diagram, convention: Convention) -> Result<Self, KhovanovError> {
        if !d.is_closed() {
            return Err(KhovanovError::OutOfScope("diagram has boundary points".into()));
        }
        Self::with_closure(d, &[], 0, convention)
    }

    /// Cube complex of a diagram whose boundary points are closed up by `extra` arcs, with an
    /// additional quantum shift `q_offset`.
    pub fn with_closure(
        d: &Diagram,
        extra: &[(usize, usize)],
        q_offset: i64,
        convention: Convention,
    ) -> Result<Self, KhovanovError> {
        let n = d.n_crossings();
        if n > MAX_CROSSINGS {
            return Err(KhovanovError::OutOfScope(format!("{n} crossings exceed the limit of {MAX_CROSSINGS}")));
        }
        let topo = d.topology()?;
        let smoothings: Vec<Smoothing> = par::map_range(1usize << n, |s| d.smoothing(&topo, s as u64, extra));
        if smoothings.iter().any(|s| s.is_arc.iter().any(|a| *a)) {
            return Err(KhovanovError::OutOfScope("boundary points are not closed up".into()));
        }
        let (np, nm) = (d.n_plus() as i64, d.n_minus() as i64);
        let cs = convention.sign();
        let mut gens = vec![];
        let mut gen_bideg = vec![];
        let mut basis: BTreeMap<Bideg, Vec<String>> = BTreeMap::new();
        let mut gen_pos = vec![];
        for (s, sm) in smoothings.iter().enumerate() {
            let k = sm.n_comps;
            let r = (s as u64).count_ones() as i64;
            for mask in 0..(1u64 << k) {
                let x = mask.count_ones() as i64;
                let sgr = 2 * x - k as i64;
                let q = cs * (sgr - r - np + 2 * nm + q_offset);
                let bd = (r - nm, q);
                let v = basis.entry(bd).or_default();
                gen_pos.push(v.len());
                v.push(label_string(n, s as u64, k, mask));
                gens.push((s as u64, mask));
                gen_bideg.push(bd);
            }
        }
        let lookup: HashMap<Gen, usize> = gens.iter().enumerate().map(|(i, g)| (*g, i)).collect();
        let mut kc = KhovanovComplex {
            diagram: d.clone(),
            topo,
            convention,
            extra: extra.to_vec(),
            smoothings,
            gens,
            gen_bideg,
            gen_pos,
            lookup,
            complex: Arc::new(BigradedComplex::zero()),
        };
        let ids: Vec<usize> = (0..kc.gens.len()).collect();
        let cols: Vec<Vec<(usize, i64)>> = par::map(&ids, |&g| kc.d_gen(g));
        let mut trip: BTreeMap<Bideg, Vec<(usize, usize, BigInt)>> = BTreeMap::new();
        for (g, col) in cols.into_iter().enumerate() {
            for (t, c) in col {
                trip.entry(kc.gen_bideg[g]).or_default().push((kc.gen_pos[t], kc.gen_pos[g], BigInt::from(c)));
            }
        }
        let diff = trip
            .into_iter()
            .map(|(bd, t)| {
                let rows = basis.get(&(bd.0 + 1, bd.1)).map_or(0, |v| v.len());
                (bd, IntMatrix::from_triplets(rows, basis[&bd].len(), t))
            })
            .collect();
        kc.complex = Arc::new(BigradedComplex::new(basis, diff)?);
        Ok(kc)
    }

    pub fn n_crossings(&self) -> usize {
        self.diagram.n_crossings()
    }

    pub fn n_gens(&self) -> usize {
        self.gens.len()
    }

    pub fn circle_of(&self, state: u64, label: usize) -> usize {
        self.smoothings[state as usize].edge_comp[self.topo.idx(label)]
    }

    /// Component of the saddle at crossing `c` from `state` (bit clear) to `state | 1 << c`, without cube sign.
    pub fn edge_image(&self, state: u64, c: usize, mask: u64) -> Vec<(u64, i64)> {
        let d = &self.diagram;
        let t = state | 1 << c;
        let (s0, s1) = (&self.smoothings[state as usize], &self.smoothings[t as usize]);
        let x = d.crossings[c];
        let (a, b) = (s0.edge_comp[self.topo.idx(x.pd[0])], s0.edge_comp[self.topo.idx(x.pd[2])]);
        let (a1, b1) = (s1.edge_comp[self.topo.idx(x.pd[0])], s1.edge_comp[self.topo.idx(x.pd[1])]);
        // Every other circle keeps its edges.
        let mut transfer = vec![usize::MAX; s0.n_comps];
        for k in 0..self.topo.n_edges() {
            let j = s0.edge_comp[k];
            if j != a && j != b {
                transfer[j] = s1.edge_comp[k];
            }
        }
        let base = |mask: u64| -> u64 {
            let mut m = 0;
            for j in 0..s0.n_comps {
                if j != a && j != b && mask >> j & 1 == 1 {
                    m |= 1 << transfer[j];
                }
            }
            m
        };
        let bit = |j: usize| mask >> j & 1 == 1;
        let m0 = base(mask);
        if a != b {
            debug_assert_eq!(a1, b1);
            match Frobenius::m(bit(a), bit(b)) {
                None => vec![],
                Some(v) => vec![(m0 | (v as u64) << a1, 1)],
            }
        } else {
            assert_ne!(a1, b1, "saddle at crossing {c} neither merges nor splits");
            Frobenius::delta(bit(a)).into_iter().map(|(u, v)| (m0 | (u as u64) << a1 | (v as u64) << b1, 1)).collect()
        }
    }

    pub fn cube_sign(state: u64, c: usize) -> i64 {
        if (state & ((1u64 << c) - 1)).count_ones().is_multiple_of(2) {
            1
        } else {
            -1
        }
    }

    /// Differential of a generator as `(generator id, coefficient)` pairs.
    pub fn d_gen(&self, g: usize) -> Vec<(usize, i64)> {
        let (s, mask) = self.gens[g];
        let mut out = vec![];
        for c in 0..self.n_crossings() {
            if s >> c & 1 == 1 {
                continue;
            }
            let sign = Self::cube_sign(s, c);
            for (m, coef) in self.edge_image(s, c, mask) {
                out.push((self.lookup[&(s | 1 << c, m)], sign * coef));
            }
        }
        out
    }

    /// Builds a chain map to `target` from images of each generator.
    pub fn map_from_images(
        &self,
        target: &KhovanovComplex,
        images: &[Vec<(usize, i64)>],
    ) -> Result<ChainMap, KhovanovError> {
        let mut shift = None;
        let mut trip: BTreeMap<Bideg, Vec<(usize, usize, BigInt)>> = BTreeMap::new();
        for (g, img) in images.iter().enumerate() {
            let bd = self.gen_bideg[g];
            for &(t, c) in img {
                if c == 0 {
                    continue;
                }
                let tb = target.gen_bideg[t];
                let sh = (tb.0 - bd.0, tb.1 - bd.1);
                if *shift.get_or_insert(sh) != sh {
                    return Err(KhovanovError::SignCorrectionFailure("map is not homogeneous".into()));
                }
                trip.entry(bd).or_default().push((target.gen_pos[t], self.gen_pos[g], BigInt::from(c)));
            }
        }
        let shift = shift.unwrap_or((0, 0));
        let blocks = trip
            .into_iter()
            .map(|(bd, t)| {
                let rows = target.complex.dim((bd.0 + shift.0, bd.1 + shift.1));
                (bd, IntMatrix::from_triplets(rows, self.complex.dim(bd), t))
            })
            .collect();
        Ok(ChainMap::new(self.complex.clone(), target.complex.clone(), shift, blocks)?)
    }
}

/// For each circle of `src` at `ss`, the circle of `dst` at `ds` sharing an edge label outside
/// `skip`, if any. Returns `None` if some circle meets two targets or two circles share a target.
fn circle_map(
    src: &KhovanovComplex,
    ss: u64,
    dst: &KhovanovComplex,
    ds: u64,
    skip: &BTreeSet<usize>,
) -> Option<Vec<Option<usize>>> {
    let s = &src.smoothings[ss as usize];
    let d = &dst.smoothings[ds as usize];
    let mut out = vec![None; s.n_comps];
    for (k, &l) in src.topo.labels.iter().enumerate() {
        if skip.contains(&l) {
            continue;
        }
        let Some(&dk) = dst.topo.index.get(&l) else { continue };
        let j = s.edge_comp[k];
        let t = d.edge_comp[dk];
        match out[j] {
            None => out[j] = Some(t),
            Some(u) if u != t => return None,
            _ => {}
        }
    }
    let set: BTreeSet<usize> = out.iter().flatten().copied().collect();
    (set.len() == out.iter().flatten().count()).then_some(out)
}

fn full_circle_map(
    src: &KhovanovComplex,
    ss: u64,
    dst: &KhovanovComplex,
    ds: u64,
    skip: &BTreeSet<usize>,
) -> Option<Vec<usize>> {
    circle_map(src, ss, dst, ds, skip)?.into_iter().collect()
}

fn push_mask(mask: u64, map: &[usize]) -> u64 {
    let mut m = 0;
    for (j, &t) in map.iter().enumerate() {
        if mask >> j & 1 == 1 {
            m |= 1 << t;
        }
    }
    m
}

/// Signs `ε` with `ε(y) a = ε(x) b` whenever `d(x)` has coefficient `a` at `y` and the target
/// differential has coefficient `b` at `π(y)` in `d(π(x))`. Also returns connected components.
/// Sign of the permutation sorting `seq`.
pub fn order_sign(seq: &[usize]) -> i64 {
    let inv =
        (0..seq.len()).flat_map(|i| (i + 1..seq.len()).map(move |j| (i, j))).filter(|&(i, j)| seq[i] > seq[j]).count();
    if inv % 2 == 0 {
        1
    } else {
        -1
    }
}

fn bits(s: u64) -> impl Iterator<Item = usize> {
    (0..64).filter(move |c| s >> c & 1 == 1)
}

/// Exterior sign of relabelling the 1-bits of `s` by `map`.
fn relabel_sign(s: u64, map: impl Fn(usize) -> usize) -> i64 {
    order_sign(&bits(s).map(map).collect::<Vec<_>>())
}

/// Signs `ε` with `x ↦ ε(x) π(x)` a chain map. Each connected component takes the sign
/// `natural` of its first generator.
fn solve_signs(
    src: &[Vec<(usize, i64)>],
    dst: &[HashMap<usize, i64>],
    pi: &[usize],
    natural: &dyn Fn(usize) -> i64,
) -> Result<(Vec<i64>, Vec<usize>), KhovanovError> {
    let n = src.len();
    let nnz_src: usize = src.iter().map(|c| c.iter().filter(|e| e.1 != 0).count()).sum();
    let nnz_dst: usize = dst.iter().map(|c| c.values().filter(|v| **v != 0).count()).sum();
    if nnz_src != nnz_dst {
        return Err(KhovanovError::SignCorrectionFailure("differentials have different supports".into()));
    }
    let mut adj: Vec<Vec<(usize, i64)>> = vec![vec![]; n];
    for x in 0..n {
        for &(y, a) in &src[x] {
            if a == 0 {
                continue;
            }
            let b = *dst[pi[x]].get(&pi[y]).unwrap_or(&0);
            if b == 0 || a.abs() != b.abs() {
                return Err(KhovanovError::SignCorrectionFailure(format!(
                    "entry mismatch between generators {x} and {y}"
                )));
            }
            let s = a.signum() * b.signum();
            adj[x].push((y, s));
            adj[y].push((x, s));
        }
    }
    let mut eps = vec![0i64; n];
    let mut comp = vec![usize::MAX; n];
    let mut ncomp = 0;
    for r in 0..n {
        if eps[r] != 0 {
            continue;
        }
        eps[r] = natural(r);
        comp[r] = ncomp;
        let mut q = VecDeque::from([r]);
        while let Some(x) = q.pop_front() {
            for &(y, s) in &adj[x] {
                let want = eps[x] * s;
                if eps[y] == 0 {
                    eps[y] = want;
                    comp[y] = ncomp;
                    q.push_back(y);
                } else if eps[y] != want {
                    return Err(KhovanovError::SignCorrectionFailure("inconsistent sign potential".into()));
                }
            }
        }
        ncomp += 1;
    }
    Ok((eps, comp))
}

/// Finds signs `ε` making `x ↦ ε(x) π(x)` a chain map, where `pi[g]` is the image generator.
pub fn signed_iso(
    src: &KhovanovComplex,
    dst: &KhovanovComplex,
    pi: &[usize],
    natural: &dyn Fn(usize) -> i64,
) -> Result<(ChainMap, Vec<i64>, Vec<usize>), KhovanovError> {
    let n = src.n_gens();
    if pi.len() != n || dst.n_gens() != n {
        return Err(KhovanovError::SignCorrectionFailure("generator counts differ".into()));
    }
    for g in 0..n {
        if src.gen_bideg[g] != dst.gen_bideg[pi[g]] {
            return Err(KhovanovError::SignCorrectionFailure("bijection does not preserve bidegree".into()));
        }
    }
    let scols: Vec<Vec<(usize, i64)>> = par::map_range(n, |g| src.d_gen(g));
    let dcols: Vec<HashMap<usize, i64>> = par::map_range(n, |g| dst.d_gen(g).into_iter().collect());
    let (eps, comp) = solve_signs(&scols, &dcols, pi, natural)?;
    let images: Vec<Vec<(usize, i64)>> = (0..n).map(|g| vec![(pi[g], eps[g])]).collect();
    let f = src.map_from_images(dst, &images)?;
    f.check_chain_map()?;
    Ok((f, eps, comp))
}

/// The rotation action on the Khovanov complex of the lifted diagram, normalized so that `θ^p = id`.
pub fn periodic_action(pd: &PeriodicDiagram, kc: &KhovanovComplex) -> Result<ChainMap, KhovanovError> {
    let p = pd.p;
    let n = kc.n_crossings();
    let rot = pd.crossing_rotation();
    let rot_state = |s: u64| -> u64 {
        let mut t = 0;
        for (c, &rc) in rot.iter().enumerate() {
            if s >> c & 1 == 1 {
                t |= 1 << rc;
            }
        }
        t
    };
    let ng = kc.n_gens();
    let mut pi = vec![0; ng];
    for (g, &(s, mask)) in kc.gens.iter().enumerate() {
        let t = rot_state(s);
        let (ss, ts) = (&kc.smoothings[s as usize], &kc.smoothings[t as usize]);
        let mut m = 0u64;
        for j in 0..ss.n_comps {
            if mask >> j & 1 == 1 {
                let k = ss.edge_comp.iter().position(|&c| c == j).expect("circle has an edge");
                let l = pd.rotate_label(kc.topo.labels[k]);
                m |= 1 << ts.edge_comp[kc.topo.idx(l)];
            }
        }
        pi[g] = kc.lookup[&(t, m)];
    }
    // The rotation also acts on the orientation line of the negative crossings.
    let negative: Vec<usize> = (0..n).filter(|&c| kc.diagram.crossings[c].sign < 0).map(|c| rot[c]).collect();
    let line = order_sign(&negative);
    let natural = |g: usize| line * relabel_sign(kc.gens[g].0, |c| rot[c]);
    let (mut theta, mut eps, comp) = signed_iso(kc, kc, &pi, &natural)?;
    let ncomp = comp.iter().copied().max().map_or(0, |m| m + 1);
    // Sign of θ^p on each component.
    let mut flipped = vec![false; ncomp];
    for _round in 0..2 {
        let mut bad = vec![];
        for r in 0..ncomp {
            let Some(g) = (0..ng).find(|&g| comp[g] == r) else { continue };
            let mut x = g;
            let mut s = 1;
            for _ in 0..p {
                s *= eps[x];
                x = pi[x];
            }
            debug_assert_eq!(x, g);
            if s < 0 {
                bad.push(r);
            }
        }
        if bad.is_empty() {
            return Ok(theta);
        }
        for r in bad {
            if flipped[r] {
                continue;
            }
            let g = (0..ng).find(|&g| comp[g] == r).unwrap();
            let orbit_len = {
                let mut k = 1;
                let mut c = comp[pi[g]];
                while c != r {
                    c = comp[pi[(0..ng).find(|&h| comp[h] == c).unwrap()]];
                    k += 1;
                }
                k
            };
            if (p / orbit_len).is_multiple_of(2) {
                return Err(KhovanovError::SignCorrectionFailure(format!(
                    "θ^p = -1 on a θ-stable component with even period {p}"
                )));
            }
            flipped[r] = true;
            for h in 0..ng {
                if comp[h] == r {
                    eps[h] = -eps[h];
                }
            }
        }
        let images: Vec<Vec<(usize, i64)>> = (0..ng).map(|g| vec![(pi[g], eps[g])]).collect();
        theta = kc.map_from_images(kc, &images)?;
        theta.check_chain_map()?;
    }
    Err(KhovanovError::SignCorrectionFailure("could not normalize θ^p".into()))
}

/// Circles of one resolution, each listed by its edge labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CubeState {
    pub state: u64,
    pub circles: Vec<Vec<usize>>,
}

pub fn resolve(d: &Diagram, state: u64) -> Result<CubeState, KhovanovError> {
    let topo = d.topology()?;
    let sm = d.smoothing(&topo, state, &[]);
    let mut circles = vec![vec![]; sm.n_comps];
    for (k, &j) in sm.edge_comp.iter().enumerate() {
        circles[j].push(topo.labels[k]);
    }
    Ok(CubeState { state, circles })
}

pub fn khovanov_complex(d: &Diagram, convention: Convention) -> Result<KhovanovComplex, KhovanovError> {
    KhovanovComplex::new(d, convention)
}

/// Result of applying an elementary cobordism to a diagram.
pub struct ElementaryMap {
    pub after: KhovanovComplex,
    pub map: ChainMap,
    pub record: MoveRecord,
}

/// Chain map of an elementary cobordism: Morse moves act by the Frobenius structure maps,
/// Reidemeister moves by strong deformation equivalences.
pub fn elementary_map(
    before: &KhovanovComplex,
    mv: &Move,
    labels: &mut Labels,
) -> Result<ElementaryMap, KhovanovError> {
    let (d, record) = before.diagram.apply_move(mv, &[], labels)?;
    let after = KhovanovComplex::with_closure(&d, &before.extra, 0, before.convention)?;
    let map = elementary_map_between(before, &after, mv, &record)?;
    Ok(ElementaryMap { after, map, record })
}

/// Chain map for `mv` between complexes already built for its source and target diagrams.
pub fn elementary_map_between(
    before: &KhovanovComplex,
    after: &KhovanovComplex,
    mv: &Move,
    record: &MoveRecord,
) -> Result<ChainMap, KhovanovError> {
    let none = BTreeSet::new();
    let n = before.n_gens();
    let map = |f: &dyn Fn(u64, u64) -> Result<Vec<(u64, i64)>, KhovanovError>| -> Result<ChainMap, KhovanovError> {
        let mut images = Vec::with_capacity(n);
        for &(s, mask) in &before.gens {
            let mut img = vec![];
            for (m, c) in f(s, mask)? {
                let t = *after.lookup.get(&(s, m)).ok_or_else(|| not_applicable("image generator missing"))?;
                img.push((t, c));
            }
            images.push(img);
        }
        let f = before.map_from_images(after, &images)?;
        f.check_chain_map()?;
        Ok(f)
    };
    let strict = |s: u64, skip: &BTreeSet<usize>| -> Result<Vec<Option<usize>>, KhovanovError> {
        circle_map(before, s, after, s, skip).ok_or_else(|| not_applicable("circles do not correspond"))
    };
    match mv {
        Move::Birth => {
            let l = *record.new_labels.first().ok_or_else(|| not_applicable("birth without a label"))?;
            map(&|s, mask| {
                let cm: Option<Vec<usize>> = strict(s, &none)?.into_iter().collect();
                let cm = cm.ok_or_else(|| not_applicable("circle lost"))?;
                let _new = after.circle_of(s, l);
                Ok(vec![(push_mask(mask, &cm), 1)])
            })
        }
        Move::Death { edge } => {
            let comp: BTreeSet<usize> = before
                .diagram
                .strands()?
                .into_iter()
                .find(|c| c.contains(edge))
                .ok_or_else(|| not_applicable("no such edge"))?
                .into_iter()
                .collect();
            map(&|s, mask| {
                let cm = strict(s, &comp)?;
                let dead = before.circle_of(s, *edge);
                if mask >> dead & 1 == 0 {
                    return Ok(vec![]);
                }
                let mut m = 0;
                for (j, t) in cm.iter().enumerate() {
                    if j != dead && mask >> j & 1 == 1 {
                        m |= 1 << t.ok_or_else(|| not_applicable("circle lost"))?;
                    }
                }
                Ok(vec![(m, Frobenius::counit(true))])
            })
        }
        Move::Saddle { edges: [e, f] } => map(&|s, mask| {
            let (a, b) = (before.circle_of(s, *e), before.circle_of(s, *f));
            let (a1, b1) = (after.circle_of(s, *e), after.circle_of(s, *f));
            let sm = &before.smoothings[s as usize];
            let skip: BTreeSet<usize> = (0..before.topo.n_edges())
                .filter(|&k| sm.edge_comp[k] == a || sm.edge_comp[k] == b)
                .map(|k| before.topo.labels[k])
                .collect();
            let cm = strict(s, &skip)?;
            let mut m0 = 0;
            for (j, t) in cm.iter().enumerate() {
                if j != a && j != b && mask >> j & 1 == 1 {
                    m0 |= 1 << t.ok_or_else(|| not_applicable("circle lost"))?;
                }
            }
            let bit = |j: usize| mask >> j & 1 == 1;
            Ok(if a != b {
                if a1 != b1 {
                    return Err(not_applicable("saddle neither merges nor splits"));
                }
                Frobenius::m(bit(a), bit(b)).map(|v| vec![(m0 | (v as u64) << a1, 1)]).unwrap_or_default()
            } else {
                if a1 == b1 {
                    return Err(not_applicable("saddle neither merges nor splits"));
                }
                Frobenius::delta(bit(a))
                    .into_iter()
                    .map(|(u, v)| (m0 | (u as u64) << a1 | (v as u64) << b1, 1))
                    .collect()
            })
        }),
        Move::Dot { edge } => map(&|s, mask| {
            let j = before.circle_of(s, *edge);
            Ok(if mask >> j & 1 == 1 { vec![] } else { vec![(mask | 1 << j, 1)] })
        }),
        Move::Permute { order } => {
            let mut pi = vec![0; n];
            for (g, &(s, mask)) in before.gens.iter().enumerate() {
                let mut t = 0u64;
                for (i, &o) in order.iter().enumerate() {
                    if s >> o & 1 == 1 {
                        t |= 1 << i;
                    }
                }
                let cm = full_circle_map(before, s, after, t, &none)
                    .ok_or_else(|| not_applicable("circles do not correspond"))?;
                pi[g] = after.lookup[&(t, push_mask(mask, &cm))];
            }
            let mut inv = vec![0; order.len()];
            for (i, &o) in order.iter().enumerate() {
                inv[o] = i;
            }
            let natural = |g: usize| relabel_sign(before.gens[g].0, |c| inv[c]);
            Ok(signed_iso(before, after, &pi, &natural)?.0)
        }
        Move::R1Add { .. } | Move::R2Add { .. } => {
            let red = Reduction::reidemeister(after, &record.new_crossings)?;
            let embed: Vec<usize> = (0..before.n_crossings()).collect();
            red.insertion(before, after, &embed)
        }
        Move::R1Remove { .. } | Move::R2Remove { .. } => {
            let new: Vec<usize> = record.removed_crossings.clone();
            let red = Reduction::reidemeister(before, &new)?;
            let embed: Vec<usize> = (0..before.n_crossings()).filter(|c| !new.contains(c)).collect();
            red.removal(after, before, &embed)
        }
        Move::R3 { crossings } => r3_map(before, after, *crossings),
    }
}

/// Gaussian elimination of unit differential entries, tracking the deformation retraction.
struct Reducer {
    col: BTreeMap<usize, BTreeMap<usize, i64>>,
    row: BTreeMap<usize, BTreeSet<usize>>,
    f: BTreeMap<usize, BTreeMap<usize, i64>>,
    g: Vec<BTreeMap<usize, i64>>,
    grow: BTreeMap<usize, BTreeSet<usize>>,
}

fn axpy(acc: &mut BTreeMap<usize, i64>, c: i64, v: &BTreeMap<usize, i64>) {
    for (&k, &x) in v {
        let e = acc.entry(k).or_insert(0);
        *e = e.checked_add(c.checked_mul(x).expect("coefficient overflow")).expect("coefficient overflow");
        if *e == 0 {
            acc.remove(&k);
        }
    }
}

impl Reducer {
    fn new(kc: &KhovanovComplex) -> Self {
        let n = kc.n_gens();
        let cols: Vec<Vec<(usize, i64)>> = par::map_range(n, |g| kc.d_gen(g));
        let mut col = BTreeMap::new();
        let mut row: BTreeMap<usize, BTreeSet<usize>> = (0..n).map(|g| (g, BTreeSet::new())).collect();
        for (x, c) in cols.into_iter().enumerate() {
            let m: BTreeMap<usize, i64> = c.into_iter().collect();
            for &y in m.keys() {
                row.get_mut(&y).unwrap().insert(x);
            }
            col.insert(x, m);
        }
        Reducer {
            col,
            row,
            f: (0..n).map(|g| (g, BTreeMap::from([(g, 1)]))).collect(),
            g: (0..n).map(|g| BTreeMap::from([(g, 1)])).collect(),
            grow: (0..n).map(|g| (g, BTreeSet::from([g]))).collect(),
        }
    }

    fn eliminate(&mut self, b: usize, e: usize) -> Result<(), KhovanovError> {
        let db = self.col.get(&b).ok_or_else(|| not_applicable("pivot source already eliminated"))?.clone();
        let u = *db.get(&e).unwrap_or(&0);
        if u.abs() != 1 {
            return Err(not_applicable(format!("pivot entry {u} is not a unit")));
        }
        let mut v = db.clone();
        v.remove(&e);
        let fb = self.f[&b].clone();
        let preds: Vec<usize> = self.row[&e].iter().copied().filter(|&a| a != b).collect();
        for a in preds {
            let c = self.col[&a][&e];
            let old: BTreeSet<usize> = self.col[&a].keys().copied().collect();
            let da = self.col.get_mut(&a).unwrap();
            axpy(da, -c * u, &db);
            let new: BTreeSet<usize> = da.keys().copied().collect();
            for y in old.difference(&new) {
                self.row.get_mut(y).unwrap().remove(&a);
            }
            for y in new.difference(&old) {
                self.row.get_mut(y).unwrap().insert(a);
            }
            axpy(self.f.get_mut(&a).unwrap(), -c * u, &fb);
        }
        for z in self.row.remove(&b).unwrap_or_default() {
            if let Some(c) = self.col.get_mut(&z) {
                c.remove(&b);
            }
        }
        for x in [b, e] {
            if let Some(c) = self.col.remove(&x) {
                for y in c.keys() {
                    if let Some(r) = self.row.get_mut(y) {
                        r.remove(&x);
                    }
                }
            }
        }
        self.row.remove(&e);
        self.f.remove(&b);
        self.f.remove(&e);
        for x in self.grow.remove(&b).unwrap_or_default() {
            self.g[x].remove(&b);
        }
        for x in self.grow.remove(&e).unwrap_or_default() {
            let z = self.g[x].remove(&e).unwrap_or(0);
            if z == 0 {
                continue;
            }
            let old: BTreeSet<usize> = self.g[x].keys().copied().collect();
            axpy(&mut self.g[x], -z * u, &v);
            let new: BTreeSet<usize> = self.g[x].keys().copied().collect();
            for y in old.difference(&new) {
                self.grow.get_mut(y).unwrap().remove(&x);
            }
            for y in new.difference(&old) {
                self.grow.get_mut(y).unwrap().insert(x);
            }
        }
        Ok(())
    }

    fn survivors(&self) -> Vec<usize> {
        self.col.keys().copied().collect()
    }
}

/// A complex reduced to the generators `keep` of `kc`, with inclusion `f` and retraction `g`.
struct Reduction {
    keep: Vec<usize>,
    pos: HashMap<usize, usize>,
    d: Vec<Vec<(usize, i64)>>,
    f: Vec<BTreeMap<usize, i64>>,
    g: Vec<BTreeMap<usize, i64>>,
}

/// Circle of `kc` at `state` all of whose edges lie in `mids`.
fn local_circle(kc: &KhovanovComplex, state: u64, mids: &BTreeSet<usize>) -> Option<usize> {
    let sm = &kc.smoothings[state as usize];
    (0..sm.n_comps)
        .find(|&j| (0..kc.topo.n_edges()).filter(|&k| sm.edge_comp[k] == j).all(|k| mids.contains(&kc.topo.labels[k])))
}

/// Edges running between two of the given crossings.
fn mid_edges(kc: &KhovanovComplex, cs: &[usize]) -> BTreeSet<usize> {
    use crate::diagram::Loc;
    let at = |l: Loc| matches!(l, Loc::Cross(c, _) if cs.contains(&c));
    (0..kc.topo.n_edges()).filter(|&k| at(kc.topo.tail[k]) && at(kc.topo.head[k])).map(|k| kc.topo.labels[k]).collect()
}

/// Image of a generator at `s` in state `t`: the unique image, or the one whose circle `j` has label `x`.
fn pick_image(kc: &KhovanovComplex, g: usize, c: usize, want: Option<(usize, bool)>) -> Option<usize> {
    let (s, mask) = kc.gens[g];
    let t = s | 1 << c;
    let imgs = kc.edge_image(s, c, mask);
    let hits: Vec<u64> = match want {
        None => imgs.into_iter().map(|x| x.0).collect(),
        Some((j, x)) => imgs.into_iter().map(|x| x.0).filter(|m| (m >> j & 1 == 1) == x).collect(),
    };
    (hits.len() == 1).then(|| kc.lookup[&(t, hits[0])])
}

impl Reduction {
    fn run(kc: &KhovanovComplex, pivots: &[(usize, usize)]) -> Result<Self, KhovanovError> {
        let mut r = Reducer::new(kc);
        for &(b, e) in pivots {
            r.eliminate(b, e)?;
        }
        let keep = r.survivors();
        let pos: HashMap<usize, usize> = keep.iter().enumerate().map(|(i, &g)| (g, i)).collect();
        let d = keep.iter().map(|g| r.col[g].iter().map(|(y, &c)| (pos[y], c)).collect()).collect();
        let f = keep.iter().map(|g| r.f[g].clone()).collect();
        let g = r.g.iter().map(|m| m.iter().map(|(y, &c)| (pos[y], c)).collect()).collect();
        Ok(Reduction { keep, pos, d, f, g })
    }

    /// Cancels the acyclic part created by a first or second move adding crossings `new` to `kc`.
    fn reidemeister(kc: &KhovanovComplex, new: &[usize]) -> Result<Self, KhovanovError> {
        let mids = mid_edges(kc, new);
        let mut pivots = vec![];
        match *new {
            [k] => {
                let bit = 1u64 << k;
                let s0 = if local_circle(kc, 0, &mids).is_some() { 0 } else { bit };
                if local_circle(kc, s0, &mids).is_none() {
                    return Err(not_applicable("no kink loop"));
                }
                for (g, &(s, mask)) in kc.gens.iter().enumerate() {
                    if s & bit != 0 {
                        continue;
                    }
                    let e = if s0 == 0 {
                        let j = local_circle(kc, s, &mids).unwrap();
                        if mask >> j & 1 == 1 {
                            continue;
                        }
                        pick_image(kc, g, k, None)
                    } else {
                        let j = local_circle(kc, s | bit, &mids).unwrap();
                        pick_image(kc, g, k, Some((j, true)))
                    };
                    pivots.push((g, e.ok_or_else(|| not_applicable("no pivot for kink"))?));
                }
            }
            [x, y] => pivots = bigon_pivots(kc, &mids, 0, 0, x, y)?,
            _ => return Err(not_applicable("unexpected crossing count")),
        }
        Self::run(kc, &pivots)
    }

    /// Signs identifying `small` with this reduction of `big` through the survivor bijection `pi`.
    fn identify(
        &self,
        small_cols: &[Vec<(usize, i64)>],
        pi: &[usize],
        natural: &dyn Fn(usize) -> i64,
    ) -> Result<Vec<i64>, KhovanovError> {
        let dst: Vec<HashMap<usize, i64>> = self.d.iter().map(|c| c.iter().copied().collect()).collect();
        Ok(solve_signs(small_cols, &dst, pi, natural)?.0)
    }

    /// Exterior sign comparing a state of `small` with its survivor in `big`, where the crossings
    /// of `small` sit at `embed` and the others are listed last.
    fn embed_sign(&self, small: &KhovanovComplex, big: &KhovanovComplex, embed: &[usize], g: usize, h: usize) -> i64 {
        let t = big.gens[self.keep[h]].0;
        let mut seq: Vec<usize> = bits(small.gens[g].0).map(|i| embed[i]).collect();
        let embedded: BTreeSet<usize> = embed.iter().copied().collect();
        seq.extend(bits(t).filter(|c| !embedded.contains(c)));
        order_sign(&seq)
    }

    /// Survivor index for each generator of `small`, matching circles through shared labels.
    fn survivor_bijection(
        &self,
        small: &KhovanovComplex,
        big: &KhovanovComplex,
        embed: &[usize],
    ) -> Result<Vec<usize>, KhovanovError> {
        let mut by_state: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
        for &g in &self.keep {
            let (s, _) = big.gens[g];
            by_state.entry(s).or_default().push(g as u64);
        }
        let lift_state = |s: u64| -> u64 {
            let mut t = 0;
            for (i, &e) in embed.iter().enumerate() {
                if s >> i & 1 == 1 {
                    t |= 1 << e;
                }
            }
            t
        };
        let embedded: BTreeSet<usize> = embed.iter().copied().collect();
        let local: Vec<usize> = (0..big.n_crossings()).filter(|c| !embedded.contains(c)).collect();
        let none = BTreeSet::new();
        let mut pi = vec![0; small.n_gens()];
        let mut used = BTreeSet::new();
        for (g, &(s, mask)) in small.gens.iter().enumerate() {
            let base = lift_state(s);
            let mut found = None;
            for sub in 0..1u64 << local.len() {
                let t =
                    local.iter().enumerate().fold(base, |a, (i, &c)| if sub >> i & 1 == 1 { a | 1 << c } else { a });
                let Some(cands) = by_state.get(&t) else { continue };
                let Some(cm) = full_circle_map(small, s, big, t, &none) else { continue };
                let m = push_mask(mask, &cm);
                let mapped: u64 = cm.iter().fold(0, |a, &j| a | 1 << j);
                let hit: Vec<usize> =
                    cands.iter().map(|&c| c as usize).filter(|&c| big.gens[c].1 & mapped == m).collect();
                if hit.len() == 1 {
                    if found.is_some() {
                        return Err(not_applicable("ambiguous survivor"));
                    }
                    found = Some(hit[0]);
                }
            }
            let h = found.ok_or_else(|| not_applicable("no survivor matches"))?;
            if !used.insert(h) {
                return Err(not_applicable("survivor matched twice"));
            }
            pi[g] = self.pos[&h];
        }
        if used.len() != self.keep.len() {
            return Err(not_applicable("unmatched survivors"));
        }
        Ok(pi)
    }

    fn insertion(
        &self,
        small: &KhovanovComplex,
        big: &KhovanovComplex,
        embed: &[usize],
    ) -> Result<ChainMap, KhovanovError> {
        let pi = self.survivor_bijection(small, big, embed)?;
        let cols: Vec<Vec<(usize, i64)>> = par::map_range(small.n_gens(), |g| small.d_gen(g));
        let eps = self.identify(&cols, &pi, &|g| self.embed_sign(small, big, embed, g, pi[g]))?;
        let images: Vec<Vec<(usize, i64)>> =
            (0..small.n_gens()).map(|g| self.f[pi[g]].iter().map(|(&x, &c)| (x, c * eps[g])).collect()).collect();
        let f = small.map_from_images(big, &images)?;
        f.check_chain_map()?;
        Ok(f)
    }

    fn removal(
        &self,
        small: &KhovanovComplex,
        big: &KhovanovComplex,
        embed: &[usize],
    ) -> Result<ChainMap, KhovanovError> {
        let pi = self.survivor_bijection(small, big, embed)?;
        let cols: Vec<Vec<(usize, i64)>> = par::map_range(small.n_gens(), |g| small.d_gen(g));
        let eps = self.identify(&cols, &pi, &|g| self.embed_sign(small, big, embed, g, pi[g]))?;
        let mut inv = vec![0; pi.len()];
        for (g, &s) in pi.iter().enumerate() {
            inv[s] = g;
        }
        let images: Vec<Vec<(usize, i64)>> =
            self.g.iter().map(|m| m.iter().map(|(&s, &c)| (inv[s], c * eps[inv[s]])).collect()).collect();
        let f = big.map_from_images(small, &images)?;
        f.check_chain_map()?;
        Ok(f)
    }
}

/// Pivots cancelling the bigon between crossings `x` and `y` within the face of the cube where
/// the bits in `fixed` equal `val`.
fn bigon_pivots(
    kc: &KhovanovComplex,
    mids: &BTreeSet<usize>,
    fixed: u64,
    val: u64,
    x: usize,
    y: usize,
) -> Result<Vec<(usize, usize)>, KhovanovError> {
    let (bx, by) = (1u64 << x, 1u64 << y);
    let with = |s: u64| local_circle(kc, val | s, mids).is_some();
    let (c1, c2) = match (with(bx), with(by)) {
        (true, false) => (x, y),
        (false, true) => (y, x),
        _ => return Err(not_applicable("crossings do not bound a bigon")),
    };
    if with(0) || with(bx | by) {
        return Err(not_applicable("crossings do not bound a bigon"));
    }
    let (b1, b2) = (1u64 << c1, 1u64 << c2);
    let (mut first, mut second) = (vec![], vec![]);
    for (g, &(s, mask)) in kc.gens.iter().enumerate() {
        if s & fixed != val {
            continue;
        }
        if s & (b1 | b2) == 0 {
            let j = local_circle(kc, s | b1, mids).ok_or_else(|| not_applicable("no bigon circle"))?;
            first.push((g, pick_image(kc, g, c1, Some((j, true))).ok_or_else(|| not_applicable("no pivot"))?));
        } else if s & (b1 | b2) == b1 {
            let j = local_circle(kc, s, mids).ok_or_else(|| not_applicable("no bigon circle"))?;
            if mask >> j & 1 == 0 {
                second.push((g, pick_image(kc, g, c2, None).ok_or_else(|| not_applicable("no pivot"))?));
            }
        }
    }
    first.extend(second);
    Ok(first)
}

/// Pairing of the external strand ends at the given crossings in a resolution.
fn local_picture(kc: &KhovanovComplex, state: u64, cs: &[usize], mids: &BTreeSet<usize>) -> Vec<Vec<(usize, bool)>> {
    use crate::diagram::UnionFind;
    let d = &kc.diagram;
    let mut uf = UnionFind::new(2 * kc.topo.n_edges());
    for &l in mids {
        uf.union(kc.topo.tail_node(l), kc.topo.head_node(l));
    }
    let mut terminals = vec![];
    for &c in cs {
        let nd = |s| kc.topo.slot_node(d, c, s);
        if state >> c & 1 == 0 {
            uf.union(nd(0), nd(1));
            uf.union(nd(2), nd(3));
        } else {
            uf.union(nd(0), nd(3));
            uf.union(nd(1), nd(2));
        }
        for s in 0..4 {
            let l = d.crossings[c].pd[s];
            if !mids.contains(&l) {
                terminals.push((nd(s), (l, crate::diagram::slot_is_head(d.crossings[c].sign, s))));
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<(usize, bool)>> = BTreeMap::new();
    for (node, t) in terminals {
        groups.entry(uf.find(node)).or_default().push(t);
    }
    let mut v: Vec<Vec<(usize, bool)>> = groups
        .into_values()
        .map(|mut g| {
            g.sort();
            g
        })
        .collect();
    v.sort();
    v
}

/// Cancels the bigon obtained by resolving one triangle crossing of a third move.
fn r3_reduction(kc: &KhovanovComplex, cs: [usize; 3]) -> Result<Reduction, KhovanovError> {
    let mids = mid_edges(kc, &cs);
    for t in 0..3 {
        for r in 0..2u64 {
            let (x, y) = (cs[(t + 1) % 3], cs[(t + 2) % 3]);
            if let Ok(p) = bigon_pivots(kc, &mids, 1 << cs[t], r << cs[t], x, y) {
                return Reduction::run(kc, &p);
            }
        }
    }
    Err(not_applicable("no bigon in any resolution of the triangle"))
}

fn r3_map(before: &KhovanovComplex, after: &KhovanovComplex, cs: [usize; 3]) -> Result<ChainMap, KhovanovError> {
    let mids = mid_edges(before, &cs);
    if mids != mid_edges(after, &cs) {
        return Err(not_applicable("triangle edges differ"));
    }
    let (ra, rb) = (r3_reduction(before, cs)?, r3_reduction(after, cs)?);
    if ra.keep.len() != rb.keep.len() {
        return Err(not_applicable("reduced complexes differ in size"));
    }
    let tri: u64 = cs.iter().fold(0, |a, &c| a | 1 << c);
    let key = |kc: &KhovanovComplex, g: usize| {
        let s = kc.gens[g].0;
        (s & !tri, (s & tri).count_ones(), local_picture(kc, s, &cs, &mids))
    };
    let mut index: HashMap<_, Vec<usize>> = HashMap::new();
    for (i, &g) in rb.keep.iter().enumerate() {
        index.entry(key(after, g)).or_default().push(i);
    }
    let mut pi = vec![0; ra.keep.len()];
    let mut used = BTreeSet::new();
    for (i, &g) in ra.keep.iter().enumerate() {
        let (s, mask) = before.gens[g];
        let cands = index.get(&key(before, g)).ok_or_else(|| not_applicable("no matching resolution"))?;
        let mut found = None;
        for &j in cands {
            let (t, m) = after.gens[rb.keep[j]];
            let Some(cm) = full_circle_map(before, s, after, t, &mids) else { continue };
            if push_mask(mask, &cm) == m {
                found = Some(j);
                break;
            }
        }
        let j = found.ok_or_else(|| not_applicable("no matching generator"))?;
        if !used.insert(j) {
            return Err(not_applicable("generator matched twice"));
        }
        pi[i] = j;
    }
    // Sign of moving the triangle bits of a state behind the others.
    let last = |s: u64| -> i64 {
        let others: Vec<usize> = bits(s & !tri).collect();
        let n: usize = bits(s & tri).map(|c| others.iter().filter(|&&o| o > c).count()).sum();
        if n.is_multiple_of(2) {
            1
        } else {
            -1
        }
    };
    let natural = |i: usize| last(before.gens[ra.keep[i]].0) * last(after.gens[rb.keep[pi[i]]].0);
    let eps = rb.identify(&ra.d, &pi, &natural)?;
    let images: Vec<Vec<(usize, i64)>> =
        ra.g.iter()
            .map(|m| {
                let mut acc = BTreeMap::new();
                for (&s, &c) in m {
                    axpy(&mut acc, c * eps[s], &rb.f[pi[s]]);
                }
                acc.into_iter().collect()
            })
            .collect();
    let f = before.map_from_images(after, &images)?;
    f.check_chain_map()?;
    Ok(f)
}
