//! Oriented link and tangle diagrams in planar-diagram form, Reidemeister and Morse moves,
//! annular quotient tangles with their periodic lifts, and diskular tangles.
//!
//! A crossing is `[a, b, c, d]` listed counterclockwise, `a` the incoming under strand and
//! `c` the outgoing under strand. For a positive crossing the over strand runs `d -> b`,
//! for a negative one `b -> d`. A joint `(i, o)` is a 2-valent vertex where the head of
//! edge `i` meets the tail of edge `o`; a free circle is an edge `e` with joint `(e, e)`.
//! Boundary points record a dangling edge end.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DiagramError {
    #[error("malformed diagram{}: {message}", crossing.map(|c| format!(" at crossing {c}")).unwrap_or_default())]
    Malformed { crossing: Option<usize>, message: String },
    #[error("malformed tangle: {0}")]
    MalformedTangle(String),
    #[error("move not applicable: {0}")]
    MoveNotApplicable(String),
    #[error("boundary mismatch: {0}")]
    BoundaryMismatch(String),
    #[error("diagram is not planar")]
    NotPlanar,
}

fn malformed(crossing: Option<usize>, message: impl Into<String>) -> DiagramError {
    DiagramError::Malformed { crossing, message: message.into() }
}

fn not_applicable(message: impl Into<String>) -> DiagramError {
    DiagramError::MoveNotApplicable(message.into())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Crossing {
    pub pd: [usize; 4],
    pub sign: i8,
}

/// Whether slot `s` of a crossing with the given sign holds the head of its edge.
pub fn slot_is_head(sign: i8, s: usize) -> bool {
    match s {
        0 => true,
        2 => false,
        1 => sign < 0,
        _ => sign > 0,
    }
}

pub fn slot_is_over(s: usize) -> bool {
    s % 2 == 1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct End {
    pub edge: usize,
    pub head: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Loc {
    Cross(usize, usize),
    JointIn(usize),
    JointOut(usize),
    Boundary(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct Diagram {
    pub crossings: Vec<Crossing>,
    pub joints: Vec<(usize, usize)>,
    pub boundary: Vec<End>,
}

/// Edge incidence data of a diagram. Edge ends are numbered `2k` (tail) and `2k + 1` (head).
#[derive(Clone, Debug)]
pub struct Topology {
    pub labels: Vec<usize>,
    pub index: HashMap<usize, usize>,
    pub tail: Vec<Loc>,
    pub head: Vec<Loc>,
}

impl Topology {
    pub fn n_edges(&self) -> usize {
        self.labels.len()
    }

    pub fn idx(&self, label: usize) -> usize {
        self.index[&label]
    }

    pub fn tail_node(&self, label: usize) -> usize {
        2 * self.idx(label)
    }

    pub fn head_node(&self, label: usize) -> usize {
        2 * self.idx(label) + 1
    }

    pub fn slot_node(&self, d: &Diagram, c: usize, s: usize) -> usize {
        let x = d.crossings[c];
        2 * self.idx(x.pd[s]) + slot_is_head(x.sign, s) as usize
    }

    pub fn boundary_node(&self, d: &Diagram, b: usize) -> usize {
        let e = d.boundary[b];
        2 * self.idx(e.edge) + e.head as usize
    }
}

/// A dart is an edge traversed forwards (tail to head) or backwards.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Dart {
    pub edge: usize,
    pub fwd: bool,
}

pub struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    pub fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        let mut y = x;
        while self.parent[y] != r {
            let n = self.parent[y];
            self.parent[y] = r;
            y = n;
        }
        r
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Components of a smoothing: circles and arcs, numbered by their smallest edge index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Smoothing {
    pub edge_comp: Vec<usize>,
    pub n_comps: usize,
    pub is_arc: Vec<bool>,
}

impl Smoothing {
    pub fn n_circles(&self) -> usize {
        self.is_arc.iter().filter(|a| !**a).count()
    }
}

impl Diagram {
    pub fn new(
        crossings: Vec<Crossing>,
        joints: Vec<(usize, usize)>,
        boundary: Vec<End>,
    ) -> Result<Self, DiagramError> {
        let mut d = Diagram { crossings, joints, boundary };
        d.joints.sort();
        d.topology()?;
        Ok(d)
    }

    pub fn from_pd(pd: &[[usize; 4]], signs: &[i8]) -> Result<Self, DiagramError> {
        if pd.len() != signs.len() {
            return Err(malformed(None, format!("{} crossings but {} signs", pd.len(), signs.len())));
        }
        let crossings = pd.iter().zip(signs).map(|(p, s)| Crossing { pd: *p, sign: *s }).collect();
        Self::new(crossings, vec![], vec![])
    }

    pub fn empty() -> Self {
        Diagram::default()
    }

    pub fn unknot() -> Self {
        Self::unlink(1)
    }

    pub fn unlink(k: usize) -> Self {
        Diagram { crossings: vec![], joints: (0..k).map(|e| (e, e)).collect(), boundary: vec![] }
    }

    pub fn is_closed(&self) -> bool {
        self.boundary.is_empty()
    }

    pub fn n_crossings(&self) -> usize {
        self.crossings.len()
    }

    pub fn n_plus(&self) -> usize {
        self.crossings.iter().filter(|c| c.sign > 0).count()
    }

    pub fn n_minus(&self) -> usize {
        self.crossings.iter().filter(|c| c.sign < 0).count()
    }

    pub fn writhe(&self) -> i64 {
        self.n_plus() as i64 - self.n_minus() as i64
    }

    pub fn labels(&self) -> BTreeSet<usize> {
        let mut s: BTreeSet<usize> = self.crossings.iter().flat_map(|c| c.pd).collect();
        s.extend(self.joints.iter().flat_map(|&(i, o)| [i, o]));
        s.extend(self.boundary.iter().map(|e| e.edge));
        s
    }

    pub fn fresh_label(&self) -> usize {
        self.labels().iter().next_back().map_or(0, |m| m + 1)
    }

    pub fn topology(&self) -> Result<Topology, DiagramError> {
        let mut tail: BTreeMap<usize, Loc> = BTreeMap::new();
        let mut head: BTreeMap<usize, Loc> = BTreeMap::new();
        let mut set = |l: usize, is_head: bool, loc: Loc, c: Option<usize>| -> Result<(), DiagramError> {
            let m = if is_head { &mut head } else { &mut tail };
            if m.insert(l, loc).is_some() {
                let which = if is_head { "head" } else { "tail" };
                return Err(malformed(c, format!("edge {l} has two {which} ends")));
            }
            Ok(())
        };
        for (c, x) in self.crossings.iter().enumerate() {
            if x.sign != 1 && x.sign != -1 {
                return Err(malformed(Some(c), format!("sign must be +1 or -1, got {}", x.sign)));
            }
            for s in 0..4 {
                set(x.pd[s], slot_is_head(x.sign, s), Loc::Cross(c, s), Some(c))?;
            }
        }
        for (j, &(i, o)) in self.joints.iter().enumerate() {
            set(i, true, Loc::JointIn(j), None)?;
            set(o, false, Loc::JointOut(j), None)?;
        }
        for (b, e) in self.boundary.iter().enumerate() {
            set(e.edge, e.head, Loc::Boundary(b), None)?;
        }
        let labels: Vec<usize> = self.labels().into_iter().collect();
        for &l in &labels {
            if !tail.contains_key(&l) || !head.contains_key(&l) {
                let c = tail.get(&l).or(head.get(&l)).and_then(|loc| match loc {
                    Loc::Cross(c, _) => Some(*c),
                    _ => None,
                });
                let which = if tail.contains_key(&l) { "head" } else { "tail" };
                return Err(malformed(c, format!("edge {l} has no {which} end")));
            }
        }
        let index = labels.iter().enumerate().map(|(k, &l)| (l, k)).collect();
        Ok(Topology {
            index,
            tail: labels.iter().map(|l| tail[l]).collect(),
            head: labels.iter().map(|l| head[l]).collect(),
            labels,
        })
    }

    /// Label found at a location.
    pub fn label_at(&self, loc: Loc) -> usize {
        match loc {
            Loc::Cross(c, s) => self.crossings[c].pd[s],
            Loc::JointIn(j) => self.joints[j].0,
            Loc::JointOut(j) => self.joints[j].1,
            Loc::Boundary(b) => self.boundary[b].edge,
        }
    }

    fn set_label(&mut self, loc: Loc, l: usize) {
        match loc {
            Loc::Cross(c, s) => self.crossings[c].pd[s] = l,
            Loc::JointIn(j) => self.joints[j].0 = l,
            Loc::JointOut(j) => self.joints[j].1 = l,
            Loc::Boundary(b) => self.boundary[b].edge = l,
        }
    }

    /// Next edge along the oriented strand after edge `l`, if the strand continues.
    pub fn successor(&self, topo: &Topology, l: usize) -> Option<usize> {
        match topo.head[topo.idx(l)] {
            Loc::Cross(c, s) => Some(self.crossings[c].pd[(s + 2) % 4]),
            Loc::JointIn(j) => Some(self.joints[j].1),
            _ => None,
        }
    }

    /// Strand components as ordered edge lists: arcs first (from their boundary tail), then circles.
    pub fn strands(&self) -> Result<Vec<Vec<usize>>, DiagramError> {
        let topo = self.topology()?;
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        let mut starts: Vec<usize> =
            topo.labels.iter().copied().filter(|&l| matches!(topo.tail[topo.idx(l)], Loc::Boundary(_))).collect();
        starts.extend(topo.labels.iter().copied());
        for s in starts {
            if seen.contains(&s) {
                continue;
            }
            let mut comp = vec![];
            let mut l = s;
            loop {
                seen.insert(l);
                comp.push(l);
                match self.successor(&topo, l) {
                    Some(n) if !seen.contains(&n) => l = n,
                    _ => break,
                }
            }
            out.push(comp);
        }
        Ok(out)
    }

    pub fn components(&self) -> usize {
        self.strands().map(|s| s.len()).unwrap_or(0)
    }

    /// Circles and arcs of the smoothing at `state` (bit `c` = smoothing of crossing `c`),
    /// with extra arcs joining pairs of boundary points.
    pub fn smoothing(&self, topo: &Topology, state: u64, extra: &[(usize, usize)]) -> Smoothing {
        let n = topo.n_edges();
        let mut uf = UnionFind::new(2 * n);
        for k in 0..n {
            uf.union(2 * k, 2 * k + 1);
        }
        for &(i, o) in &self.joints {
            uf.union(topo.head_node(i), topo.tail_node(o));
        }
        for c in 0..self.crossings.len() {
            let nd = |s| topo.slot_node(self, c, s);
            if state >> c & 1 == 0 {
                uf.union(nd(0), nd(1));
                uf.union(nd(2), nd(3));
            } else {
                uf.union(nd(0), nd(3));
                uf.union(nd(1), nd(2));
            }
        }
        for &(a, b) in extra {
            uf.union(topo.boundary_node(self, a), topo.boundary_node(self, b));
        }
        let mut comp_of_root = HashMap::new();
        let mut edge_comp = Vec::with_capacity(n);
        for k in 0..n {
            let r = uf.find(2 * k);
            let next = comp_of_root.len();
            edge_comp.push(*comp_of_root.entry(r).or_insert(next));
        }
        let n_comps = comp_of_root.len();
        let mut is_arc = vec![false; n_comps];
        let paired: BTreeSet<usize> = extra.iter().flat_map(|&(a, b)| [a, b]).collect();
        for (b, e) in self.boundary.iter().enumerate() {
            if !paired.contains(&b) {
                is_arc[edge_comp[topo.idx(e.edge)]] = true;
            }
        }
        Smoothing { edge_comp, n_comps, is_arc }
    }

    /// Oriented pairs `(a, b)` of boundary points closing a quotient tangle: head at `a`, tail at `b`.
    fn orient_glue(&self, glue: &[(usize, usize)]) -> Result<Vec<(usize, usize)>, DiagramError> {
        glue.iter()
            .map(|&(a, b)| {
                let (ea, eb) = (self.boundary[a], self.boundary[b]);
                match (ea.head, eb.head) {
                    (true, false) => Ok((a, b)),
                    (false, true) => Ok((b, a)),
                    _ => Err(DiagramError::MalformedTangle(format!(
                        "boundary points {a} and {b} have incompatible orientations"
                    ))),
                }
            })
            .collect()
    }

    /// Faces of the closed-up diagram as cycles of darts; each face lies to the left of its darts.
    pub fn faces(&self, glue: &[(usize, usize)]) -> Result<Vec<Vec<Dart>>, DiagramError> {
        let topo = self.topology()?;
        let glue = self.orient_glue(glue)?;
        let mut partner: HashMap<usize, usize> = HashMap::new();
        for &(a, b) in &glue {
            partner.insert(a, b);
            partner.insert(b, a);
        }
        let next = |d: Dart| -> Result<Dart, DiagramError> {
            let k = topo.idx(d.edge);
            let loc = if d.fwd { topo.head[k] } else { topo.tail[k] };
            Ok(match loc {
                Loc::Cross(c, s) => {
                    let s2 = (s + 3) % 4;
                    let x = self.crossings[c];
                    Dart { edge: x.pd[s2], fwd: !slot_is_head(x.sign, s2) }
                }
                Loc::JointIn(j) => Dart { edge: self.joints[j].1, fwd: true },
                Loc::JointOut(j) => Dart { edge: self.joints[j].0, fwd: false },
                Loc::Boundary(b) => {
                    let q = *partner
                        .get(&b)
                        .ok_or_else(|| DiagramError::MalformedTangle(format!("boundary point {b} is not closed up")))?;
                    Dart { edge: self.boundary[q].edge, fwd: d.fwd }
                }
            })
        };
        let mut seen = BTreeSet::new();
        let mut faces = Vec::new();
        for &l in &topo.labels {
            for fwd in [true, false] {
                let start = Dart { edge: l, fwd };
                if seen.contains(&start) {
                    continue;
                }
                let mut face = vec![];
                let mut d = start;
                while seen.insert(d) {
                    face.push(d);
                    d = next(d)?;
                }
                faces.push(face);
            }
        }
        Ok(faces)
    }

    /// Connected piece of the underlying graph containing each edge label.
    pub fn pieces(&self, glue: &[(usize, usize)]) -> Result<HashMap<usize, usize>, DiagramError> {
        let topo = self.topology()?;
        let glue = self.orient_glue(glue)?;
        let n = topo.n_edges();
        let mut uf = UnionFind::new(n);
        for k in 0..n {
            let nxt = match topo.head[k] {
                Loc::Cross(c, _) => self.crossings[c].pd.to_vec(),
                Loc::JointIn(j) => vec![self.joints[j].1],
                Loc::JointOut(_) => vec![],
                Loc::Boundary(b) => glue.iter().filter(|g| g.0 == b).map(|g| self.boundary[g.1].edge).collect(),
            };
            for l in nxt {
                uf.union(k, topo.idx(l));
            }
        }
        Ok(topo.labels.iter().enumerate().map(|(k, &l)| (l, uf.find(k))).collect())
    }

    /// Euler-characteristic check `V - E + F = 2C` of the closed-up diagram.
    pub fn is_planar(&self, glue: &[(usize, usize)]) -> Result<bool, DiagramError> {
        let topo = self.topology()?;
        let faces = self.faces(glue)?;
        let glue = self.orient_glue(glue)?;
        let nc = self.crossings.len();
        let nj = self.joints.len();
        let v = nc + nj + glue.len();
        let mut gl_of = HashMap::new();
        for (g, &(a, b)) in glue.iter().enumerate() {
            gl_of.insert(a, g);
            gl_of.insert(b, g);
        }
        let vert = |loc: Loc| match loc {
            Loc::Cross(c, _) => c,
            Loc::JointIn(j) | Loc::JointOut(j) => nc + j,
            Loc::Boundary(b) => nc + nj + gl_of[&b],
        };
        let mut uf = UnionFind::new(v);
        for k in 0..topo.n_edges() {
            uf.union(vert(topo.tail[k]), vert(topo.head[k]));
        }
        let comps = (0..v).filter(|&x| uf.find(x) == x).count();
        Ok(v as i64 - topo.n_edges() as i64 + faces.len() as i64 == 2 * comps as i64)
    }

    /// Contracts every joint `(i, o)` with `i != o` and renumbers edges by first appearance.
    pub fn canonical(&self) -> Diagram {
        let mut d = self.clone();
        let all: Vec<(usize, usize)> = d.joints.clone();
        d.contract(all);
        let mut map = HashMap::new();
        let visit = |l: usize, map: &mut HashMap<usize, usize>| {
            let n = map.len();
            *map.entry(l).or_insert(n)
        };
        for c in &mut d.crossings {
            for s in 0..4 {
                c.pd[s] = visit(c.pd[s], &mut map);
            }
        }
        for e in &mut d.boundary {
            e.edge = visit(e.edge, &mut map);
        }
        for j in &mut d.joints {
            *j = (visit(j.0, &mut map), visit(j.1, &mut map));
        }
        d.joints.sort();
        d
    }

    /// Contracts the listed joints, keeping the label of the incoming edge.
    fn contract(&mut self, mut pending: Vec<(usize, usize)>) {
        while let Some((i, o)) = pending.pop() {
            if i == o {
                continue;
            }
            let Some(pos) = self.joints.iter().position(|&j| j == (i, o)) else { continue };
            let topo = self.topology().expect("valid during contraction");
            self.set_label(topo.head[topo.idx(o)], i);
            self.joints.remove(pos);
            for p in pending.iter_mut() {
                if p.0 == o {
                    p.0 = i;
                }
                if p.1 == o {
                    p.1 = i;
                }
            }
        }
        self.joints.sort();
    }

    /// Applies a permutation of labels and of crossing indices (`new index = cperm[old]`).
    pub fn relabel(&self, lmap: impl Fn(usize) -> usize, cperm: &[usize]) -> Diagram {
        let mut crossings = vec![Crossing { pd: [0; 4], sign: 1 }; self.crossings.len()];
        for (c, x) in self.crossings.iter().enumerate() {
            crossings[cperm[c]] = Crossing { pd: x.pd.map(&lmap), sign: x.sign };
        }
        let mut joints: Vec<(usize, usize)> = self.joints.iter().map(|&(i, o)| (lmap(i), lmap(o))).collect();
        joints.sort();
        let boundary = self.boundary.iter().map(|e| End { edge: lmap(e.edge), head: e.head }).collect();
        Diagram { crossings, joints, boundary }
    }

    pub fn to_json(&self) -> DiagramJson {
        DiagramJson {
            version: crate::chain::SCHEMA_VERSION,
            pd: self.crossings.iter().map(|c| c.pd).collect(),
            signs: self.crossings.iter().map(|c| c.sign).collect(),
            joints: self.joints.clone(),
            boundary: self.boundary.clone(),
        }
    }

    pub fn from_json(j: &DiagramJson) -> Result<Self, DiagramError> {
        if j.pd.len() != j.signs.len() {
            return Err(malformed(None, format!("{} crossings but {} signs", j.pd.len(), j.signs.len())));
        }
        let crossings = j.pd.iter().zip(&j.signs).map(|(p, s)| Crossing { pd: *p, sign: *s }).collect();
        Diagram::new(crossings, j.joints.clone(), j.boundary.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagramJson {
    #[serde(default = "default_version")]
    pub version: u32,
    pub pd: Vec<[usize; 4]>,
    pub signs: Vec<i8>,
    #[serde(default)]
    pub joints: Vec<(usize, usize)>,
    #[serde(default)]
    pub boundary: Vec<End>,
}

fn default_version() -> u32 {
    crate::chain::SCHEMA_VERSION
}

/// Kink shape for a type I move: the side of the strand the loop sits on, and the crossing sign.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Kink {
    pub left: bool,
    pub positive: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Move {
    /// Adds a kink on `edge`.
    R1Add {
        edge: usize,
        kink: Kink,
    },
    /// Removes the kink at `crossing`.
    R1Remove {
        crossing: usize,
    },
    /// Pushes a finger of `edge` across the face on its `left` (or right) side, over or under `other`.
    R2Add {
        edge: usize,
        other: usize,
        over: bool,
        left: bool,
    },
    /// Removes the bigon between two crossings.
    R2Remove {
        crossings: [usize; 2],
    },
    /// Slides a strand across the crossing of the other two strands of a triangle face.
    R3 {
        crossings: [usize; 3],
    },
    Birth,
    Death {
        edge: usize,
    },
    /// Band between `edges[0]` and `edges[1]`; their heads are exchanged.
    Saddle {
        edges: [usize; 2],
    },
    Dot {
        edge: usize,
    },
    /// Reorders crossings: new crossing `i` is old crossing `order[i]`.
    Permute {
        order: Vec<usize>,
    },
}

impl Move {
    pub fn is_reidemeister(&self) -> bool {
        matches!(
            self,
            Move::R1Add { .. } | Move::R1Remove { .. } | Move::R2Add { .. } | Move::R2Remove { .. } | Move::R3 { .. }
        )
    }

    /// Euler characteristic of the elementary cobordism.
    pub fn euler(&self) -> i64 {
        match self {
            Move::Birth | Move::Death { .. } => 1,
            Move::Saddle { .. } => -1,
            _ => 0,
        }
    }
}

/// What a move did: fresh labels in order of allocation, crossings added (indices in the result)
/// and crossings removed (indices in the source).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MoveRecord {
    pub new_labels: Vec<usize>,
    pub new_crossings: Vec<usize>,
    pub removed_crossings: Vec<usize>,
}

/// Supplies labels for new edges, either fresh or from a preset list.
pub struct Labels {
    preset: Option<Vec<usize>>,
    next: usize,
    pub used: Vec<usize>,
}

impl Labels {
    pub fn fresh(d: &Diagram) -> Self {
        Labels { preset: None, next: d.fresh_label(), used: vec![] }
    }

    pub fn preset(v: Vec<usize>) -> Self {
        Labels { preset: Some(v), next: 0, used: vec![] }
    }

    fn remaining(&self) -> usize {
        self.preset.as_ref().map_or(0, |v| v.len().saturating_sub(self.used.len()))
    }

    fn take(&mut self) -> Result<usize, DiagramError> {
        let l = match &self.preset {
            Some(v) => *v.get(self.used.len()).ok_or_else(|| not_applicable("not enough preset labels"))?,
            None => {
                self.next += 1;
                self.next - 1
            }
        };
        self.used.push(l);
        Ok(l)
    }
}

/// Builds a crossing from its four strand ends listed counterclockwise as `(label, incoming, on e)`.
fn make_crossing(compass: [(usize, bool, bool); 4], e_under: bool) -> Crossing {
    let k = (0..4).find(|&i| compass[i].2 == e_under && compass[i].1).expect("incoming under end");
    let pd = [0, 1, 2, 3].map(|i| compass[(k + i) % 4].0);
    let sign = if compass[(k + 1) % 4].1 { -1 } else { 1 };
    Crossing { pd, sign }
}

impl Diagram {
    fn face_of(&self, glue: &[(usize, usize)], d: Dart) -> Result<Vec<Dart>, DiagramError> {
        Ok(self.faces(glue)?.into_iter().find(|f| f.contains(&d)).expect("every dart lies on a face"))
    }

    /// Applies a move; `glue` closes up boundary points for face computations.
    pub fn apply_move(
        &self,
        mv: &Move,
        glue: &[(usize, usize)],
        labels: &mut Labels,
    ) -> Result<(Diagram, MoveRecord), DiagramError> {
        let topo = self.topology()?;
        let has = |l: usize| topo.index.contains_key(&l);
        let mut d = self.clone();
        let mut rec = MoveRecord::default();
        match mv {
            Move::R1Add { edge, kink } => {
                if !has(*edge) {
                    return Err(not_applicable(format!("no edge {edge}")));
                }
                let (e, l, g) = (*edge, labels.take()?, labels.take()?);
                d.set_label(topo.head[topo.idx(e)], g);
                let (pd, sign) = match (kink.left, kink.positive) {
                    (true, true) => ([e, g, l, l], 1),
                    (false, false) => ([e, l, l, g], -1),
                    (false, true) => ([l, l, g, e], 1),
                    (true, false) => ([l, e, g, l], -1),
                };
                d.crossings.push(Crossing { pd, sign });
                rec.new_crossings.push(d.crossings.len() - 1);
            }
            Move::R1Remove { crossing } => {
                let c = *crossing;
                let x = *self.crossings.get(c).ok_or_else(|| not_applicable(format!("no crossing {c}")))?;
                let s = (0..4)
                    .find(|&s| x.pd[s] == x.pd[(s + 1) % 4])
                    .ok_or_else(|| not_applicable(format!("crossing {c} has no kink loop")))?;
                let l = x.pd[s];
                let mono = [true, false]
                    .iter()
                    .any(|&fwd| self.face_of(glue, Dart { edge: l, fwd }).map(|f| f.len() == 1).unwrap_or(false));
                if !mono {
                    return Err(not_applicable(format!("loop at crossing {c} does not bound a monogon")));
                }
                let (s2, s3) = ((s + 2) % 4, (s + 3) % 4);
                let (inc, out) = if slot_is_head(x.sign, s2) { (x.pd[s2], x.pd[s3]) } else { (x.pd[s3], x.pd[s2]) };
                d.crossings.remove(c);
                d.joints.push((inc, out));
                d.contract(vec![(inc, out)]);
                rec.removed_crossings.push(c);
            }
            Move::R2Add { edge, other, over, left } => {
                let (e, f) = (*edge, *other);
                if e == f || !has(e) || !has(f) {
                    return Err(not_applicable(format!("need two distinct edges, got {e} and {f}")));
                }
                let face = self.face_of(glue, Dart { edge: e, fwd: *left })?;
                let fd: Vec<&Dart> = face.iter().filter(|x| x.edge == f).collect();
                if fd.len() != 1 {
                    return Err(not_applicable(format!("edges {e} and {f} do not share the chosen face once")));
                }
                let (de, df) = (*left, fd[0].fwd);
                let n1 = labels.take()?;
                let n2 = labels.take()?;
                let n3 = labels.take()?;
                let n4 = labels.take()?;
                let (p1, p2, p3) = if de { (e, n1, n2) } else { (n2, n1, e) };
                let (q1, q2, q3) = if df { (f, n3, n4) } else { (n4, n3, f) };
                d.set_label(topo.head[topo.idx(e)], n2);
                d.set_label(topo.head[topo.idx(f)], n4);
                let x = make_crossing([(p1, de, true), (q2, df, false), (p2, !de, true), (q3, !df, false)], !*over);
                let y = make_crossing([(p3, !de, true), (q1, df, false), (p2, de, true), (q2, !df, false)], !*over);
                d.crossings.push(x);
                d.crossings.push(y);
                let n = d.crossings.len();
                rec.new_crossings = vec![n - 2, n - 1];
            }
            Move::R2Remove { crossings } => {
                let [cx, cy] = *crossings;
                if cx == cy || cx >= self.crossings.len() || cy >= self.crossings.len() {
                    return Err(not_applicable("invalid crossing pair"));
                }
                let at = |loc: Loc, c: usize| matches!(loc, Loc::Cross(cc, _) if cc == c);
                let slot = |loc: Loc| match loc {
                    Loc::Cross(_, s) => s,
                    _ => unreachable!(),
                };
                let between: Vec<usize> = (0..topo.n_edges())
                    .filter(|&k| {
                        (at(topo.tail[k], cx) && at(topo.head[k], cy)) || (at(topo.tail[k], cy) && at(topo.head[k], cx))
                    })
                    .collect();
                let faces = self.faces(glue)?;
                let mut found = None;
                for &u in &between {
                    for &v in &between {
                        let uo = slot_is_over(slot(topo.tail[u])) && slot_is_over(slot(topo.head[u]));
                        let vu = !slot_is_over(slot(topo.tail[v])) && !slot_is_over(slot(topo.head[v]));
                        if u == v || !uo || !vu {
                            continue;
                        }
                        let (lu, lv) = (topo.labels[u], topo.labels[v]);
                        if faces
                            .iter()
                            .any(|f| f.len() == 2 && f.iter().any(|x| x.edge == lu) && f.iter().any(|x| x.edge == lv))
                        {
                            found = Some((u, v));
                        }
                    }
                }
                let (u, v) =
                    found.ok_or_else(|| not_applicable(format!("crossings {cx}, {cy} do not bound a bigon")))?;
                let mut new_joints = vec![];
                for k in [u, v] {
                    let (Loc::Cross(ct, st), Loc::Cross(ch, sh)) = (topo.tail[k], topo.head[k]) else { unreachable!() };
                    let pin = self.crossings[ct].pd[(st + 2) % 4];
                    let pout = self.crossings[ch].pd[(sh + 2) % 4];
                    let l = topo.labels[k];
                    new_joints.push((pin, l));
                    new_joints.push((l, pout));
                }
                let (hi, lo) = (cx.max(cy), cx.min(cy));
                d.crossings.remove(hi);
                d.crossings.remove(lo);
                d.joints.extend(new_joints.iter().copied());
                d.contract(new_joints.into_iter().rev().collect());
                rec.removed_crossings = vec![lo, hi];
            }
            Move::R3 { crossings } => {
                d = self.r3(&topo, *crossings, glue)?;
            }
            Move::Birth => {
                let mut ls = vec![labels.take()?];
                while labels.remaining() > 0 {
                    ls.push(labels.take()?);
                }
                for (k, &l) in ls.iter().enumerate() {
                    d.joints.push((l, ls[(k + 1) % ls.len()]));
                }
                d.joints.sort();
            }
            Move::Death { edge } => {
                if !has(*edge) {
                    return Err(not_applicable(format!("no edge {edge}")));
                }
                let comp = self.strands()?.into_iter().find(|s| s.contains(edge)).expect("edge lies on a strand");
                for &l in &comp {
                    let k = topo.idx(l);
                    if !matches!(topo.head[k], Loc::JointIn(_)) {
                        return Err(not_applicable(format!("component of edge {edge} is not a crossingless circle")));
                    }
                }
                d.joints.retain(|(i, _)| !comp.contains(i));
            }
            Move::Saddle { edges } => {
                let [e, f] = *edges;
                if e == f || !has(e) || !has(f) {
                    return Err(not_applicable(format!("need two distinct edges, got {e} and {f}")));
                }
                let faces = self.faces(glue)?;
                let piece = self.pieces(glue)?;
                let ok = piece[&e] != piece[&f]
                    || faces.iter().any(|fc| {
                        [true, false]
                            .iter()
                            .any(|&w| fc.contains(&Dart { edge: e, fwd: w }) && fc.contains(&Dart { edge: f, fwd: w }))
                    });
                if !ok {
                    return Err(not_applicable(format!("edges {e} and {f} do not bound a common face compatibly")));
                }
                d.set_label(topo.head[topo.idx(e)], f);
                d.set_label(topo.head[topo.idx(f)], e);
                d.joints.sort();
            }
            Move::Dot { edge } => {
                if !has(*edge) {
                    return Err(not_applicable(format!("no edge {edge}")));
                }
            }
            Move::Permute { order } => {
                let n = self.crossings.len();
                let mut seen = order.clone();
                seen.sort();
                if seen != (0..n).collect::<Vec<_>>() {
                    return Err(not_applicable("permutation has wrong entries"));
                }
                d.crossings = order.iter().map(|&o| self.crossings[o]).collect();
            }
        }
        rec.new_labels = labels.used.clone();
        d.topology()?;
        Ok((d, rec))
    }

    fn r3(&self, topo: &Topology, cs: [usize; 3], glue: &[(usize, usize)]) -> Result<Diagram, DiagramError> {
        let n = self.crossings.len();
        if cs.iter().any(|&c| c >= n) || cs[0] == cs[1] || cs[1] == cs[2] || cs[0] == cs[2] {
            return Err(not_applicable("invalid crossing triple"));
        }
        let inside = |loc: Loc| match loc {
            Loc::Cross(c, s) if cs.contains(&c) => Some((c, s)),
            _ => None,
        };
        // Triangle edges with their (tail crossing, slot) and (head crossing, slot).
        let mids: Vec<(usize, (usize, usize), (usize, usize))> = (0..topo.n_edges())
            .filter_map(|k| match (inside(topo.tail[k]), inside(topo.head[k])) {
                (Some(t), Some(h)) if t.0 != h.0 => Some((topo.labels[k], t, h)),
                _ => None,
            })
            .collect();
        if mids.len() != 3 {
            return Err(not_applicable("crossings do not form a triangle"));
        }
        let mut pairs: Vec<(usize, usize)> = mids.iter().map(|m| (m.1 .0.min(m.2 .0), m.1 .0.max(m.2 .0))).collect();
        pairs.sort();
        pairs.dedup();
        if pairs.len() != 3 {
            return Err(not_applicable("crossings do not form a triangle"));
        }
        let faces = self.faces(glue)?;
        let labels: BTreeSet<usize> = mids.iter().map(|m| m.0).collect();
        if !faces.iter().any(|f| f.len() == 3 && f.iter().all(|x| labels.contains(&x.edge))) {
            return Err(not_applicable("triangle does not bound a face"));
        }
        // Height order: strand i is above strand j at their common crossing.
        let mut above = vec![];
        for (i, a) in mids.iter().enumerate() {
            for (j, b) in mids.iter().enumerate() {
                for &(ca, sa) in &[a.1, a.2] {
                    for &(cb, sb) in &[b.1, b.2] {
                        if i != j && ca == cb && slot_is_over(sa) && !slot_is_over(sb) {
                            above.push((i, j));
                        }
                    }
                }
            }
        }
        above.sort();
        above.dedup();
        let cyclic = above.len() == 3 && {
            let mut out = [0; 3];
            for &(i, _) in &above {
                out[i] += 1;
            }
            out.iter().all(|&x| x == 1)
        };
        if above.len() != 3 || cyclic {
            return Err(not_applicable("triangle is not a valid third-move configuration"));
        }
        let mut d = self.clone();
        for &(mid, (p, sp), (q, sq)) in &mids {
            let pin = (sp + 2) % 4;
            let qout = (sq + 2) % 4;
            let lin = self.crossings[p].pd[pin];
            let lout = self.crossings[q].pd[qout];
            d.crossings[q].pd[sq] = lin;
            d.crossings[q].pd[qout] = mid;
            d.crossings[p].pd[pin] = mid;
            d.crossings[p].pd[sp] = lout;
        }
        Ok(d)
    }
}

/// A tangle in a square whose boundary points `0..m` lie on the left edge and `m..2m` on the
/// right edge; right point `j` is glued to left point `j` when closing up around the axis.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuotientTangle {
    pub diagram: Diagram,
    pub strands: usize,
}

impl QuotientTangle {
    pub fn new(diagram: Diagram, strands: usize) -> Result<Self, DiagramError> {
        if diagram.boundary.len() != 2 * strands {
            return Err(DiagramError::MalformedTangle(format!(
                "{} boundary points for {strands} strands",
                diagram.boundary.len()
            )));
        }
        let q = QuotientTangle { diagram, strands };
        q.diagram.orient_glue(&q.glue())?;
        if !q.diagram.is_planar(&q.glue())? {
            return Err(DiagramError::NotPlanar);
        }
        Ok(q)
    }

    /// A crossingless closed diagram away from the axis.
    pub fn closed(diagram: Diagram) -> Result<Self, DiagramError> {
        Self::new(diagram, 0)
    }

    /// `m` parallel strands running from left to right.
    pub fn parallel(m: usize) -> Self {
        let boundary =
            (0..m).map(|e| End { edge: e, head: false }).chain((0..m).map(|e| End { edge: e, head: true })).collect();
        QuotientTangle { diagram: Diagram { crossings: vec![], joints: vec![], boundary }, strands: m }
    }

    /// The braid generator on two strands: closes to the Hopf link for p = 2 and the trefoil for p = 3.
    pub fn braid_generator() -> Self {
        let boundary = vec![
            End { edge: 1, head: false },
            End { edge: 2, head: false },
            End { edge: 3, head: true },
            End { edge: 4, head: true },
        ];
        let d = Diagram::new(vec![Crossing { pd: [1, 3, 4, 2], sign: 1 }], vec![], boundary).expect("valid");
        QuotientTangle::new(d, 2).expect("valid")
    }

    /// Braid on `m` strands read left to right; generator `i > 0` crosses strands `i - 1` and `i`
    /// positively, `-i` negatively. Strands are numbered upward.
    pub fn braid(m: usize, word: &[i32]) -> Result<Self, DiagramError> {
        let mut cur: Vec<usize> = (0..m).collect();
        let mut next = m;
        let mut crossings = vec![];
        for &g in word {
            let j = g.unsigned_abs() as usize;
            if j == 0 || j >= m {
                return Err(DiagramError::MalformedTangle(format!("generator {g} out of range")));
            }
            let (in_lo, in_hi) = (cur[j - 1], cur[j]);
            let (out_lo, out_hi) = (next, next + 1);
            next += 2;
            crossings.push(if g > 0 {
                Crossing { pd: [in_lo, out_lo, out_hi, in_hi], sign: 1 }
            } else {
                Crossing { pd: [in_hi, in_lo, out_lo, out_hi], sign: -1 }
            });
            cur[j - 1] = out_lo;
            cur[j] = out_hi;
        }
        let boundary = (0..m)
            .map(|e| End { edge: e, head: false })
            .chain(cur.iter().map(|&e| End { edge: e, head: true }))
            .collect();
        QuotientTangle::new(Diagram::new(crossings, vec![], boundary)?, m)
    }

    /// Closure of a braid word as a plain diagram.
    pub fn braid_closure(m: usize, word: &[i32]) -> Result<Diagram, DiagramError> {
        Ok(Self::braid(m, word)?.lift(1)?.lifted)
    }

    pub fn glue(&self) -> Vec<(usize, usize)> {
        (0..self.strands).map(|j| (self.strands + j, j)).collect()
    }

    pub fn apply(&self, mv: &Move, labels: &mut Labels) -> Result<(QuotientTangle, MoveRecord), DiagramError> {
        let (d, rec) = self.diagram.apply_move(mv, &self.glue(), labels)?;
        Ok((QuotientTangle { diagram: d, strands: self.strands }, rec))
    }

    /// Cyclic closure of `p` copies. Edge `e` of copy `k` becomes `e * p + k`; crossing `c` of copy
    /// `k` becomes `k * n + c`.
    pub fn lift(&self, p: usize) -> Result<PeriodicDiagram, DiagramError> {
        if p == 0 {
            return Err(DiagramError::MalformedTangle("period must be positive".into()));
        }
        let q = &self.diagram;
        let n = q.crossings.len();
        let m = self.strands;
        let lab = |e: usize, k: usize| e * p + k;
        let mut crossings = Vec::with_capacity(n * p);
        let mut joints = vec![];
        let mut orbit = vec![];
        for k in 0..p {
            for (c, x) in q.crossings.iter().enumerate() {
                crossings.push(Crossing { pd: x.pd.map(|e| lab(e, k)), sign: x.sign });
                orbit.push((c, k));
            }
            joints.extend(q.joints.iter().map(|&(i, o)| (lab(i, k), lab(o, k))));
            for j in 0..m {
                let (l, r) = (q.boundary[j], q.boundary[m + j]);
                match (r.head, l.head) {
                    (true, false) => joints.push((lab(r.edge, k), lab(l.edge, (k + 1) % p))),
                    (false, true) => joints.push((lab(l.edge, (k + 1) % p), lab(r.edge, k))),
                    _ => {
                        return Err(DiagramError::MalformedTangle(format!(
                            "strand {j} has incompatible orientations at the seam"
                        )))
                    }
                }
            }
        }
        let lifted = Diagram::new(crossings, joints, vec![])?;
        if !lifted.is_planar(&[])? {
            return Err(DiagramError::NotPlanar);
        }
        Ok(PeriodicDiagram { quotient: self.clone(), p, lifted, crossing_orbit: orbit })
    }

    pub fn to_json(&self) -> QuotientJson {
        QuotientJson { diagram: self.diagram.to_json(), strands: self.strands }
    }

    pub fn from_json(j: &QuotientJson) -> Result<Self, DiagramError> {
        Self::new(Diagram::from_json(&j.diagram)?, j.strands)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuotientJson {
    #[serde(flatten)]
    pub diagram: DiagramJson,
    pub strands: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodicJson {
    pub quotient: QuotientJson,
    pub p: usize,
}

/// A diagram with an exact rotational symmetry of order `p`, stored with its quotient.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PeriodicDiagram {
    pub quotient: QuotientTangle,
    pub p: usize,
    pub lifted: Diagram,
    /// For each lifted crossing, its quotient crossing and copy index.
    pub crossing_orbit: Vec<(usize, usize)>,
}

impl PeriodicDiagram {
    pub fn rotate_label(&self, l: usize) -> usize {
        let p = self.p;
        (l / p) * p + (l % p + 1) % p
    }

    pub fn rotate_crossing(&self, c: usize) -> usize {
        let n = self.quotient.diagram.crossings.len();
        (c + n) % (n * self.p).max(1)
    }

    /// Crossing permutation of the rotation, `perm[c]` the image of crossing `c`.
    pub fn crossing_rotation(&self) -> Vec<usize> {
        (0..self.lifted.crossings.len()).map(|c| self.rotate_crossing(c)).collect()
    }

    /// The rotated lifted diagram.
    pub fn rotated(&self) -> Diagram {
        self.lifted.relabel(|l| self.rotate_label(l), &self.crossing_rotation())
    }

    pub fn is_symmetric(&self) -> bool {
        self.rotated() == self.lifted
    }

    /// Applies a move in the quotient and lifts the result.
    pub fn apply_equivariant_rmove(&self, mv: &Move) -> Result<PeriodicDiagram, DiagramError> {
        if !mv.is_reidemeister() {
            return Err(not_applicable("only Reidemeister moves are applied here"));
        }
        let (q, _) = self.quotient.apply(mv, &mut Labels::fresh(&self.quotient.diagram))?;
        q.lift(self.p)
    }

    pub fn to_json(&self) -> PeriodicJson {
        PeriodicJson { quotient: self.quotient.to_json(), p: self.p }
    }

    pub fn from_json(j: &PeriodicJson) -> Result<Self, DiagramError> {
        QuotientTangle::from_json(&j.quotient)?.lift(j.p)
    }
}

/// A tangle in a disk with `inner.len()` punctures. Boundary points of the diagram are listed
/// as the outer points (counterclockwise from the base point) followed by each inner circle's points.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiskularTangle {
    pub diagram: Diagram,
    pub outer: usize,
    pub inner: Vec<usize>,
}

impl DiskularTangle {
    pub fn new(diagram: Diagram, outer: usize, inner: Vec<usize>) -> Result<Self, DiagramError> {
        let total = outer + inner.iter().sum::<usize>();
        if diagram.boundary.len() != total {
            return Err(DiagramError::MalformedTangle(format!(
                "{} boundary points, signature needs {total}",
                diagram.boundary.len()
            )));
        }
        if !total.is_multiple_of(2) {
            return Err(DiagramError::MalformedTangle("odd number of marked points".into()));
        }
        let k = inner.len();
        if k > 1 && (2..k).any(|f| k.is_multiple_of(f)) {
            return Err(DiagramError::MalformedTangle(format!("{k} inner boundaries are out of scope")));
        }
        Ok(DiskularTangle { diagram, outer, inner })
    }

    /// `(m_1, ..., m_k; n)`.
    pub fn signature(&self) -> (Vec<usize>, usize) {
        (self.inner.clone(), self.outer)
    }

    fn inner_range(&self, i: usize) -> std::ops::Range<usize> {
        let start = self.outer + self.inner[..i].iter().sum::<usize>();
        start..start + self.inner[i]
    }

    /// The radial identity `(n; n)`: strand `j` joins inner point `j` to outer point `j`,
    /// oriented inward where `inward[j]` holds.
    pub fn radial(inward: &[bool]) -> Self {
        let n = inward.len();
        let outer: Vec<End> = (0..n).map(|j| End { edge: j, head: !inward[j] }).collect();
        let inner: Vec<End> = (0..n).map(|j| End { edge: j, head: inward[j] }).collect();
        let d = Diagram { crossings: vec![], joints: vec![], boundary: [outer, inner].concat() };
        DiskularTangle { diagram: d, outer: n, inner: vec![n] }
    }

    /// Glues the outer boundary of `s` to inner boundary `i` of `self`.
    pub fn compose(&self, i: usize, s: &DiskularTangle) -> Result<DiskularTangle, DiagramError> {
        if i >= self.inner.len() || self.inner[i] != s.outer {
            return Err(DiagramError::BoundaryMismatch(format!("inner boundary {i} does not have {} points", s.outer)));
        }
        let off = self.diagram.fresh_label();
        let sd = s.diagram.relabel(|l| l + off, &(0..s.diagram.crossings.len()).collect::<Vec<_>>());
        let r = &self.diagram;
        let mut joints = r.joints.clone();
        joints.extend(sd.joints.iter().copied());
        for (j, b) in self.inner_range(i).enumerate() {
            let (re, se) = (r.boundary[b], sd.boundary[j]);
            match (re.head, se.head) {
                (true, false) => joints.push((re.edge, se.edge)),
                (false, true) => joints.push((se.edge, re.edge)),
                _ => {
                    return Err(DiagramError::BoundaryMismatch(format!(
                        "orientations disagree at point {j} of inner boundary {i}"
                    )))
                }
            }
        }
        let mut boundary: Vec<End> = r.boundary[..self.outer].to_vec();
        let mut inner = vec![];
        for q in 0..self.inner.len() {
            if q == i {
                boundary.extend_from_slice(&sd.boundary[s.outer..]);
                inner.extend_from_slice(&s.inner);
            } else {
                boundary.extend(self.inner_range(q).map(|b| r.boundary[b]));
                inner.push(self.inner[q]);
            }
        }
        let crossings = [r.crossings.clone(), sd.crossings].concat();
        let d = Diagram::new(crossings, joints, boundary)?;
        Ok(DiskularTangle { diagram: d, outer: self.outer, inner })
    }
}
