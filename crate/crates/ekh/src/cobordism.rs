//! Movies of link cobordisms, their chain maps, neck cutting and the ribbon obstruction.

use std::collections::BTreeSet;
use std::ops::Range;
use std::sync::Arc;

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{
    find_homotopy, homology_basis, induced_on_homology, BigradedComplex, ChainError, ChainMap, Homotopy, SCHEMA_VERSION,
};
use crate::diagram::{
    Diagram, DiagramError, DiagramJson, Kink, Labels, Move, MoveRecord, PeriodicDiagram, QuotientJson, QuotientTangle,
};
use crate::equivariant::{equivariant_complex, equivariant_map, EkhTable, EquivariantError};
use crate::khovanov::{elementary_map, periodic_action, Convention, KhovanovComplex, KhovanovError};
use crate::par;

#[derive(Debug, Error)]
pub enum CobordismError {
    #[error("invalid movie at frame {frame}: {reason}")]
    InvalidMovie { frame: usize, reason: String },
    #[error("not a standard neck: {0}")]
    NotAStandardNeck(String),
    #[error(transparent)]
    Diagram(#[from] DiagramError),
    #[error(transparent)]
    Khovanov(#[from] KhovanovError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Equivariant(#[from] EquivariantError),
}

/// An elementary move with optional preset labels for the edges it creates.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    #[serde(flatten)]
    pub mv: Move,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<usize>>,
}

impl Event {
    pub fn new(mv: Move) -> Self {
        Event { mv, labels: None }
    }

    pub fn with_labels(mv: Move, labels: Vec<usize>) -> Self {
        Event { mv, labels: Some(labels) }
    }

    fn labels_for(&self, d: &Diagram) -> Labels {
        match &self.labels {
            Some(v) => Labels::preset(v.clone()),
            None => Labels::fresh(d),
        }
    }

    fn apply(&self, d: &Diagram) -> Result<(Diagram, MoveRecord), DiagramError> {
        d.apply_move(&self.mv, &[], &mut self.labels_for(d))
    }
}

/// A sequence of elementary moves on closed diagrams, with every intermediate frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Movie {
    pub frames: Vec<Diagram>,
    pub events: Vec<Event>,
    pub records: Vec<MoveRecord>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MovieJson {
    pub version: u32,
    pub start: DiagramJson,
    pub events: Vec<Event>,
}

pub(crate) fn same_diagram(a: &Diagram, b: &Diagram) -> bool {
    let sorted = |d: &Diagram| {
        let mut j = d.joints.clone();
        j.sort();
        j
    };
    a.crossings == b.crossings && a.boundary == b.boundary && sorted(a) == sorted(b)
}

impl Movie {
    pub fn new(start: Diagram) -> Self {
        Movie { frames: vec![start], events: vec![], records: vec![] }
    }

    pub fn from_events(start: Diagram, events: impl IntoIterator<Item = Event>) -> Result<Self, CobordismError> {
        let mut m = Movie::new(start);
        for e in events {
            m.push(e)?;
        }
        Ok(m)
    }

    pub fn from_moves(start: Diagram, moves: impl IntoIterator<Item = Move>) -> Result<Self, CobordismError> {
        Self::from_events(start, moves.into_iter().map(Event::new))
    }

    pub fn start(&self) -> &Diagram {
        &self.frames[0]
    }

    pub fn end(&self) -> &Diagram {
        self.frames.last().expect("a movie has a first frame")
    }

    pub fn push(&mut self, e: Event) -> Result<(), CobordismError> {
        let frame = self.events.len();
        let (d, rec) =
            e.apply(self.end()).map_err(|err| CobordismError::InvalidMovie { frame, reason: err.to_string() })?;
        self.frames.push(d);
        self.events.push(e);
        self.records.push(rec);
        Ok(())
    }

    pub fn euler(&self) -> i64 {
        self.events.iter().map(|e| e.mv.euler()).sum()
    }

    pub fn has_death(&self) -> bool {
        self.events.iter().any(|e| matches!(e.mv, Move::Death { .. }))
    }

    /// Concatenation; the end of `self` must be the start of `next`.
    pub fn compose(&self, next: &Movie) -> Result<Movie, CobordismError> {
        if !same_diagram(self.end(), next.start()) {
            return Err(CobordismError::InvalidMovie {
                frame: self.events.len(),
                reason: "end and start frames differ".into(),
            });
        }
        let mut m = self.clone();
        for e in &next.events {
            m.push(e.clone())?;
        }
        Ok(m)
    }

    pub fn to_json(&self) -> MovieJson {
        MovieJson { version: SCHEMA_VERSION, start: self.start().to_json(), events: self.events.clone() }
    }

    pub fn from_json(j: &MovieJson) -> Result<Self, CobordismError> {
        Self::from_events(Diagram::from_json(&j.start)?, j.events.iter().cloned())
    }
}

/// Chain map of a movie between the complexes of its first and last frames.
pub fn movie_map(m: &Movie, convention: Convention) -> Result<ChainMap, CobordismError> {
    let mut kc = KhovanovComplex::new(m.start(), convention)?;
    let mut acc = ChainMap::identity(kc.complex.clone());
    for (frame, e) in m.events.iter().enumerate() {
        let em = elementary_map(&kc, &e.mv, &mut e.labels_for(&kc.diagram))?;
        if !same_diagram(&em.after.diagram, &m.frames[frame + 1]) {
            return Err(CobordismError::InvalidMovie { frame, reason: "frame does not match its move".into() });
        }
        acc = acc.then(&em.map)?;
        kc = em.after;
    }
    Ok(acc)
}

/// Appends a crossing reordering when `d` equals `target` up to the order of its crossings.
fn permute_to(d: &Diagram, target: &Diagram) -> Option<Option<Move>> {
    if same_diagram(d, target) {
        return Some(None);
    }
    if d.crossings.len() != target.crossings.len() {
        return None;
    }
    let mut used = vec![false; d.crossings.len()];
    let mut order = vec![];
    for x in &target.crossings {
        let j = (0..d.crossings.len()).find(|&j| !used[j] && d.crossings[j] == *x)?;
        used[j] = true;
        order.push(j);
    }
    let (pd, _) = d.apply_move(&Move::Permute { order: order.clone() }, &[], &mut Labels::fresh(d)).ok()?;
    same_diagram(&pd, target).then_some(Some(Move::Permute { order }))
}

/// Tries a candidate inverse: returns its events, with a reordering if needed, when it lands on `target`.
fn fits(from: &Diagram, cand: Vec<Event>, target: &Diagram) -> Option<Vec<Event>> {
    let mut d = from.clone();
    for e in &cand {
        d = e.apply(&d).ok()?.0;
    }
    let mut out = cand;
    out.extend(permute_to(&d, target)?.map(Event::new));
    Some(out)
}

fn permutations(v: &[usize]) -> Vec<Vec<usize>> {
    if v.len() <= 1 {
        return vec![v.to_vec()];
    }
    let mut out = vec![];
    for i in 0..v.len() {
        let mut rest = v.to_vec();
        let x = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, x);
            out.push(p);
        }
    }
    out
}

/// Searches for a Reidemeister addition undoing a removal.
fn undo_removal(after: &Diagram, before: &Diagram) -> Option<Vec<Event>> {
    let gone: Vec<usize> = before.labels().difference(&after.labels()).copied().collect();
    let edges: Vec<usize> = after.labels().into_iter().collect();
    let mut cands = vec![];
    if gone.len() == 2 {
        for &edge in &edges {
            for left in [false, true] {
                for positive in [false, true] {
                    cands.push(Move::R1Add { edge, kink: Kink { left, positive } });
                }
            }
        }
    } else if gone.len() == 4 {
        for &edge in &edges {
            for &other in &edges {
                for over in [false, true] {
                    for left in [false, true] {
                        cands.push(Move::R2Add { edge, other, over, left });
                    }
                }
            }
        }
    }
    let perms = permutations(&gone);
    cands.into_iter().find_map(|mv| {
        after.apply_move(&mv, &[], &mut Labels::fresh(after)).ok()?;
        perms.iter().find_map(|p| fits(after, vec![Event::with_labels(mv.clone(), p.clone())], before))
    })
}

fn inverse_events(before: &Diagram, after: &Diagram, e: &Event, rec: &MoveRecord) -> Option<Vec<Event>> {
    let single = |mv: Move| fits(after, vec![Event::new(mv)], before);
    match &e.mv {
        Move::Birth => single(Move::Death { edge: *rec.new_labels.first()? }),
        Move::Death { edge } => {
            let circle = before.strands().ok()?.into_iter().find(|s| s.contains(edge))?;
            fits(after, vec![Event::with_labels(Move::Birth, circle)], before)
        }
        Move::Saddle { .. } | Move::Dot { .. } => single(e.mv.clone()),
        Move::Permute { order } => {
            let mut inv = vec![0; order.len()];
            for (i, &o) in order.iter().enumerate() {
                inv[o] = i;
            }
            single(Move::Permute { order: inv })
        }
        Move::R1Add { .. } => single(Move::R1Remove { crossing: *rec.new_crossings.first()? }),
        Move::R2Add { .. } => {
            let [a, b] = [*rec.new_crossings.first()?, *rec.new_crossings.get(1)?];
            single(Move::R2Remove { crossings: [a, b] }).or_else(|| single(Move::R2Remove { crossings: [b, a] }))
        }
        Move::R3 { crossings } => {
            permutations(crossings).into_iter().find_map(|p| single(Move::R3 { crossings: [p[0], p[1], p[2]] }))
        }
        Move::R1Remove { .. } | Move::R2Remove { .. } => undo_removal(after, before),
    }
}

/// The movie played backwards, which represents the reflected cobordism.
pub fn reverse(m: &Movie) -> Result<Movie, CobordismError> {
    let mut out = Movie::new(m.end().clone());
    for i in (0..m.events.len()).rev() {
        let inv = inverse_events(&m.frames[i], &m.frames[i + 1], &m.events[i], &m.records[i]).ok_or_else(|| {
            CobordismError::InvalidMovie { frame: i, reason: format!("cannot invert {:?}", m.events[i].mv) }
        })?;
        for e in inv {
            out.push(e)?;
        }
        if !same_diagram(out.end(), &m.frames[i]) {
            return Err(CobordismError::InvalidMovie { frame: i, reason: "inverse misses the earlier frame".into() });
        }
    }
    Ok(out)
}

/// Whether `f ≃ sign·g`, trying `+` first.
pub fn homotopic_up_to_sign(f: &ChainMap, g: &ChainMap) -> Option<(i64, Homotopy)> {
    [1, -1].into_iter().find_map(|s| find_homotopy(f, &g.scale(s)).ok().map(|h| (s, h)))
}

fn check_ends(a: &Movie, b: &Movie) -> Result<(), CobordismError> {
    if same_diagram(a.start(), b.start()) && same_diagram(a.end(), b.end()) {
        Ok(())
    } else {
        Err(CobordismError::InvalidMovie { frame: 0, reason: "movies have different ends".into() })
    }
}

/// Sign `s` with `C(a) ≃ s·C(b)`, or `None` when neither sign works.
pub fn compare_movies(a: &Movie, b: &Movie, convention: Convention) -> Result<Option<i64>, CobordismError> {
    check_ends(a, b)?;
    let f = movie_map(a, convention)?;
    let g = movie_map(b, convention)?.rebase(f.source.clone(), f.target.clone())?;
    Ok(homotopic_up_to_sign(&f, &g).map(|x| x.0))
}

/// As [`compare_movies`] for the maps of two equivariant movies on truncated equivariant complexes.
pub fn compare_equivariant_movies(
    a: &EquivariantMovie,
    b: &EquivariantMovie,
    n: usize,
    convention: Convention,
) -> Result<Option<i64>, CobordismError> {
    if a.p != b.p {
        return Err(CobordismError::InvalidMovie { frame: 0, reason: "different periods".into() });
    }
    let (la, lb) = (lift_movie(a)?, lift_movie(b)?);
    check_ends(&la.movie, &lb.movie)?;
    let f = movie_map(&la.movie, convention)?;
    let g = movie_map(&lb.movie, convention)?.rebase(f.source.clone(), f.target.clone())?;
    let (ts, te) = end_actions(&la, &f, convention)?;
    let src = equivariant_complex(f.source.clone(), &ts, a.p, n)?;
    let tgt = equivariant_complex(f.target.clone(), &te, a.p, n)?;
    let (phi, gamma) = (equivariant_map(&src, &tgt, &f)?, equivariant_map(&src, &tgt, &g)?);
    Ok(homotopic_up_to_sign(&phi, &gamma).map(|x| x.0))
}

/// A formal integer combination of movies with common ends.
#[derive(Clone, Debug)]
pub struct DottedSum {
    pub terms: Vec<(i64, Movie)>,
}

impl DottedSum {
    pub fn map(&self, convention: Convention) -> Result<ChainMap, CobordismError> {
        let maps = par::map(&self.terms, |(c, m)| movie_map(m, convention).map(|f| f.scale(*c)));
        let mut it = maps.into_iter();
        let mut acc =
            it.next().ok_or_else(|| CobordismError::InvalidMovie { frame: 0, reason: "empty sum".into() })??;
        for f in it {
            let f = f?.rebase(acc.source.clone(), acc.target.clone())?;
            acc = acc.add(&f)?;
        }
        Ok(acc)
    }
}

/// Position of a neck: a crossingless circle through `edge` in frame `frame`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeckSpec {
    pub frame: usize,
    pub edge: usize,
}

/// Edges of the crossingless circle through `edge`, in order along the circle.
fn neck_circle(d: &Diagram, edge: usize) -> Result<Vec<usize>, CobordismError> {
    let circle = d
        .strands()?
        .into_iter()
        .find(|s| s.contains(&edge))
        .ok_or_else(|| CobordismError::NotAStandardNeck(format!("no edge {edge}")))?;
    d.apply_move(&Move::Death { edge }, &[], &mut Labels::fresh(d))
        .map_err(|_| CobordismError::NotAStandardNeck(format!("edge {edge} is not on a crossingless circle")))?;
    Ok(circle)
}

/// Events compressing the neck on `circle` to a disk pair, dotted above (`plus`) or below.
fn cut_events(circle: &[usize], plus: bool) -> Vec<Event> {
    let e = circle[0];
    let (dot, death, birth) = (
        Event::new(Move::Dot { edge: e }),
        Event::new(Move::Death { edge: e }),
        Event::with_labels(Move::Birth, circle.to_vec()),
    );
    if plus {
        vec![dot, death, birth]
    } else {
        vec![death, birth, dot]
    }
}

fn splice(m: &Movie, at: usize, inserted: Vec<Event>) -> Result<Movie, CobordismError> {
    let mut ev = m.events[..at].to_vec();
    ev.extend(inserted);
    ev.extend(m.events[at..].iter().cloned());
    Movie::from_events(m.start().clone(), ev)
}

/// The two dotted compressions of a neck; their sum is the original cobordism.
pub fn neck_cut(m: &Movie, neck: NeckSpec) -> Result<DottedSum, CobordismError> {
    let frame = m.frames.get(neck.frame).ok_or_else(|| CobordismError::NotAStandardNeck("no such frame".into()))?;
    let circle = neck_circle(frame, neck.edge)?;
    Ok(DottedSum {
        terms: vec![
            (1, splice(m, neck.frame, cut_events(&circle, true))?),
            (1, splice(m, neck.frame, cut_events(&circle, false))?),
        ],
    })
}

/// Outcome of comparing a movie with its neck cut.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeckCertificate {
    pub terms: usize,
    pub exact: bool,
    pub sign: Option<i64>,
}

pub fn certify_neck_cut(m: &Movie, cut: &DottedSum, convention: Convention) -> Result<NeckCertificate, CobordismError> {
    let f = movie_map(m, convention)?;
    let g = cut.map(convention)?.rebase(f.source.clone(), f.target.clone())?;
    Ok(NeckCertificate { terms: cut.terms.len(), exact: f.equals(&g), sign: homotopic_up_to_sign(&f, &g).map(|x| x.0) })
}

/// Value of a closed sphere carrying `dots` dots.
pub fn sphere_eval(dots: usize) -> i64 {
    (dots == 1) as i64
}

/// A movie of `p`-periodic links described by moves in the quotient tangle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EquivariantMovie {
    pub start: QuotientTangle,
    pub p: usize,
    pub events: Vec<Event>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivariantMovieJson {
    pub version: u32,
    pub quotient: QuotientJson,
    pub p: usize,
    pub events: Vec<Event>,
}

impl EquivariantMovie {
    pub fn new(start: QuotientTangle, p: usize, events: Vec<Event>) -> Self {
        EquivariantMovie { start, p, events }
    }

    pub fn has_death(&self) -> bool {
        self.events.iter().any(|e| matches!(e.mv, Move::Death { .. }))
    }

    pub fn to_json(&self) -> EquivariantMovieJson {
        EquivariantMovieJson {
            version: SCHEMA_VERSION,
            quotient: self.start.to_json(),
            p: self.p,
            events: self.events.clone(),
        }
    }

    pub fn from_json(j: &EquivariantMovieJson) -> Result<Self, CobordismError> {
        let m = EquivariantMovie::new(QuotientTangle::from_json(&j.quotient)?, j.p, j.events.clone());
        lift_movie(&m)?;
        Ok(m)
    }
}

/// The lifted movie, with the lifted events of quotient event `j` at `groups[j]`.
#[derive(Clone, Debug)]
pub struct LiftedMovie {
    pub movie: Movie,
    pub groups: Vec<Range<usize>>,
    pub periodic: Vec<PeriodicDiagram>,
}

impl LiftedMovie {
    /// Lifted frame index of quotient frame `j`.
    pub fn frame(&self, j: usize) -> usize {
        self.groups.get(j).map_or(self.movie.events.len(), |g| g.start)
    }
}

fn lifted_crossing(d: &Diagram, q: &Diagram, c: usize, p: usize, k: usize) -> Option<usize> {
    let x = q.crossings.get(c)?;
    let pd = x.pd.map(|e| e * p + k);
    d.crossings.iter().position(|y| y.pd == pd && y.sign == x.sign)
}

fn lift_event(d: &Diagram, q: &Diagram, e: &Event, rec: &MoveRecord, p: usize, k: usize) -> Option<Event> {
    let l = |x: usize| x * p + k;
    let c = |x: usize| lifted_crossing(d, q, x, p, k);
    let mv = match &e.mv {
        Move::R1Add { edge, kink } => Move::R1Add { edge: l(*edge), kink: *kink },
        Move::R1Remove { crossing } => Move::R1Remove { crossing: c(*crossing)? },
        Move::R2Add { edge, other, over, left } => {
            Move::R2Add { edge: l(*edge), other: l(*other), over: *over, left: *left }
        }
        Move::R2Remove { crossings } => Move::R2Remove { crossings: [c(crossings[0])?, c(crossings[1])?] },
        Move::R3 { crossings } => Move::R3 { crossings: [c(crossings[0])?, c(crossings[1])?, c(crossings[2])?] },
        Move::Birth => Move::Birth,
        Move::Death { edge } => Move::Death { edge: l(*edge) },
        Move::Saddle { edges } => Move::Saddle { edges: edges.map(l) },
        Move::Dot { edge } => Move::Dot { edge: l(*edge) },
        Move::Permute { .. } => return None,
    };
    Some(Event::with_labels(mv, rec.new_labels.iter().map(|&x| l(x)).collect()))
}

/// Lifts a quotient movie to `p` copies of every move, reordering crossings to match the lift.
pub fn lift_movie(m: &EquivariantMovie) -> Result<LiftedMovie, CobordismError> {
    let p = m.p;
    let mut q = m.start.clone();
    let first = q.lift(p)?;
    let mut movie = Movie::new(first.lifted.clone());
    let mut periodic = vec![first];
    let mut groups = vec![];
    for (frame, e) in m.events.iter().enumerate() {
        let invalid = |reason: &str| CobordismError::InvalidMovie { frame, reason: reason.into() };
        let (q2, rec) = q.apply(&e.mv, &mut e.labels_for(&q.diagram)).map_err(|err| invalid(&err.to_string()))?;
        let begin = movie.events.len();
        if let Move::Permute { order } = &e.mv {
            let n = order.len();
            let lifted = (0..p).flat_map(|k| order.iter().map(move |&o| k * n + o)).collect();
            movie.push(Event::new(Move::Permute { order: lifted }))?;
        } else {
            for k in 0..p {
                let le = lift_event(movie.end(), &q.diagram, e, &rec, p, k).ok_or_else(|| invalid("cannot lift"))?;
                movie.push(le)?;
            }
        }
        let pd = q2.lift(p)?;
        if let Some(fix) = permute_to(movie.end(), &pd.lifted).ok_or_else(|| invalid("lift does not match"))? {
            movie.push(Event::new(fix))?;
        }
        groups.push(begin..movie.events.len());
        periodic.push(pd);
        q = q2;
    }
    Ok(LiftedMovie { movie, groups, periodic })
}

/// A neck in the quotient movie; it lifts to `p` disjoint necks.
pub type EquivariantNeck = NeckSpec;

/// Terms of the equivariant neck cut, grouped into orbits of dot patterns under rotation.
#[derive(Clone, Debug)]
pub struct EquivariantNeckCut {
    pub lifted: LiftedMovie,
    /// Each class lists its patterns (`true` = dot above the cut on that copy) and their sum.
    pub classes: Vec<(Vec<Vec<bool>>, DottedSum)>,
}

fn rotate(pattern: &[bool]) -> Vec<bool> {
    let p = pattern.len();
    (0..p).map(|k| pattern[(k + p - 1) % p]).collect()
}

pub fn equivariant_neck_cut(m: &EquivariantMovie, neck: EquivariantNeck) -> Result<EquivariantNeckCut, CobordismError> {
    let p = m.p;
    let lifted = lift_movie(m)?;
    if neck.frame > m.events.len() {
        return Err(CobordismError::NotAStandardNeck("no such frame".into()));
    }
    let at = lifted.frame(neck.frame);
    let d = &lifted.movie.frames[at];
    let circles: Vec<Vec<usize>> = (0..p).map(|k| neck_circle(d, neck.edge * p + k)).collect::<Result<_, _>>()?;
    for (k, c) in circles.iter().enumerate() {
        if c.iter().any(|l| l % p != k) {
            return Err(CobordismError::NotAStandardNeck("the neck meets the axis".into()));
        }
    }
    let patterns: Vec<Vec<bool>> = (0..1usize << p).map(|b| (0..p).map(|k| b >> k & 1 == 0).collect()).collect();
    let mut seen = BTreeSet::new();
    let mut classes = vec![];
    for pat in &patterns {
        if seen.contains(pat) {
            continue;
        }
        let mut orbit = vec![pat.clone()];
        let mut r = rotate(pat);
        while r != *pat {
            orbit.push(r.clone());
            r = rotate(&r);
        }
        let mut terms = vec![];
        for o in &orbit {
            seen.insert(o.clone());
            let ev: Vec<Event> = (0..p).flat_map(|k| cut_events(&circles[k], o[k])).collect();
            terms.push((1, splice(&lifted.movie, at, ev)?));
        }
        classes.push((orbit, DottedSum { terms }));
    }
    Ok(EquivariantNeckCut { lifted, classes })
}

/// Rotation actions on the complexes of the first and last frames of a lifted movie, on the
/// source and target of `f`.
fn end_actions(l: &LiftedMovie, f: &ChainMap, convention: Convention) -> Result<(ChainMap, ChainMap), CobordismError> {
    let act = |pd: &PeriodicDiagram, c: &Arc<BigradedComplex>| -> Result<ChainMap, CobordismError> {
        let kc = KhovanovComplex::new(&pd.lifted, convention)?;
        Ok(periodic_action(pd, &kc)?.rebase(c.clone(), c.clone())?)
    };
    let last = l.periodic.last().expect("at least one frame");
    Ok((act(&l.periodic[0], &f.source)?, act(last, &f.target)?))
}

fn commutes(f: &ChainMap, ts: &ChainMap, te: &ChainMap) -> Result<bool, CobordismError> {
    Ok(f.then(te)?.equals(&ts.then(f)?))
}

/// Outcome of the equivariant neck cut check.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivariantNeckCertificate {
    pub p: usize,
    pub terms: usize,
    pub classes: Vec<NeckClassReport>,
    pub sum_matches: bool,
    pub sign: Option<i64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeckClassReport {
    pub patterns: Vec<String>,
    pub equivariant: bool,
}

fn pattern_string(p: &[bool]) -> String {
    p.iter().map(|&b| if b { '+' } else { '-' }).collect()
}

pub fn certify_equivariant_neck_cut(
    m: &EquivariantMovie,
    cut: &EquivariantNeckCut,
    convention: Convention,
) -> Result<EquivariantNeckCertificate, CobordismError> {
    let f = movie_map(&cut.lifted.movie, convention)?;
    let (ts, te) = end_actions(&cut.lifted, &f, convention)?;
    let mut total = ChainMap::zero(f.source.clone(), f.target.clone(), f.shift);
    let mut classes = vec![];
    for (pats, sum) in &cut.classes {
        let g = sum.map(convention)?.rebase(f.source.clone(), f.target.clone())?;
        classes.push(NeckClassReport {
            patterns: pats.iter().map(|p| pattern_string(p)).collect(),
            equivariant: commutes(&g, &ts, &te)?,
        });
        total = total.add(&g)?;
    }
    Ok(EquivariantNeckCertificate {
        p: m.p,
        terms: cut.classes.iter().map(|c| c.1.terms.len()).sum(),
        classes,
        sum_matches: total.equals(&f),
        sign: homotopic_up_to_sign(&f, &total).map(|x| x.0),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING-KEBAB-CASE")]
pub enum RibbonVerdict {
    SplitInjective,
    Obstructed,
    NotRibbon,
}

impl std::fmt::Display for RibbonVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RibbonVerdict::SplitInjective => "SPLIT-INJECTIVE",
            RibbonVerdict::Obstructed => "OBSTRUCTED",
            RibbonVerdict::NotRibbon => "NOT-RIBBON",
        })
    }
}

/// Left inverse check on one bidegree of equivariant homology.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BidegreeCertificate {
    pub k: i64,
    pub q: i64,
    pub rank: usize,
    pub trusted: bool,
    pub left_inverse: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RibbonReport {
    pub verdict: RibbonVerdict,
    pub p: usize,
    pub truncation: usize,
    /// Sign `s` with the reversed movie after the movie homotopic to `s·id`, equivariantly.
    pub sign: Option<i64>,
    pub plain_sign: Option<i64>,
    /// Nonzero entries of the certifying homotopy.
    pub witness_entries: Option<usize>,
    pub bidegrees: Vec<BidegreeCertificate>,
    /// Set when the ends are not both knots, so the verdict extends the knot case.
    pub extrapolated: bool,
}

/// Decides whether the equivariant map of a movie is split injective, with certificates.
pub fn ribbon_check(m: &EquivariantMovie, n: usize, convention: Convention) -> Result<RibbonReport, CobordismError> {
    let mut report = RibbonReport {
        verdict: RibbonVerdict::NotRibbon,
        p: m.p,
        truncation: n,
        sign: None,
        plain_sign: None,
        witness_entries: None,
        bidegrees: vec![],
        extrapolated: false,
    };
    if m.has_death() {
        return Ok(report);
    }
    let lifted = lift_movie(m)?;
    report.extrapolated = lifted.movie.start().components() != 1 || lifted.movie.end().components() != 1;
    let f = movie_map(&lifted.movie, convention)?;
    let g = movie_map(&reverse(&lifted.movie)?, convention)?.rebase(f.target.clone(), f.source.clone())?;
    let (ts, te) = end_actions(&lifted, &f, convention)?;
    report.plain_sign = homotopic_up_to_sign(&f.then(&g)?, &ChainMap::identity(f.source.clone())).map(|x| x.0);
    let src = equivariant_complex(f.source.clone(), &ts, m.p, n)?;
    let tgt = equivariant_complex(f.target.clone(), &te, m.p, n)?;
    let phi = equivariant_map(&src, &tgt, &f)?;
    let psi = equivariant_map(&tgt, &src, &g)?;
    let id = ChainMap::identity(src.complex.clone());
    if let Some((s, h)) = homotopic_up_to_sign(&phi.then(&psi)?, &id) {
        report.sign = Some(s);
        report.witness_entries = Some(h.nonzero_entries());
    }
    let table = EkhTable::from_complex(&src)?;
    let sign = report.sign.unwrap_or(1);
    let certs: Vec<Result<BidegreeCertificate, CobordismError>> = par::map(&src.complex.bidegrees(), |&bd| {
        let b = homology_basis(&src.complex, bd)?;
        let mid = (bd.0 + phi.shift.0, bd.1 + phi.shift.1);
        let b2 = homology_basis(&tgt.complex, mid)?;
        let end = (mid.0 + psi.shift.0, mid.1 + psi.shift.1);
        let m1 = induced_on_homology(&phi, &b, &b2)?;
        let left_inverse = if end == bd && b.rank() > 0 {
            let m2 = induced_on_homology(&psi, &b2, &b)?;
            let prod = m2.dot(&m1);
            (0..b.rank()).all(|t| {
                let e: Vec<BigInt> = (0..b.rank()).map(|r| BigInt::from(sign * (r == t) as i64)).collect();
                b.same_class(&prod.column(t), &e)
            })
        } else {
            b.rank() == 0
        };
        Ok(BidegreeCertificate { k: bd.0, q: bd.1, rank: b.rank(), trusted: table.trusted(bd), left_inverse })
    });
    report.bidegrees = certs.into_iter().filter(|c| !matches!(c, Ok(c) if c.rank == 0)).collect::<Result<_, _>>()?;
    let ok = report.sign.is_some() && report.bidegrees.iter().all(|c| c.left_inverse);
    report.verdict = if ok { RibbonVerdict::SplitInjective } else { RibbonVerdict::Obstructed };
    Ok(report)
}
