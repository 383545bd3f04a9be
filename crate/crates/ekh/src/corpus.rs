//! Named test diagrams, mostly braid closures, with at most eight crossings.

use crate::cobordism::{EquivariantMovie, Event, Movie};
use crate::diagram::{Diagram, Move, PeriodicDiagram, QuotientTangle};

fn closure(m: usize, word: &[i32]) -> Diagram {
    QuotientTangle::braid_closure(m, word).expect("valid braid")
}

/// Plain diagrams by name.
pub fn diagrams() -> Vec<(&'static str, Diagram)> {
    vec![
        ("unknot", Diagram::unknot()),
        ("unlink2", Diagram::unlink(2)),
        ("kinked_unknot", closure(2, &[1])),
        ("hopf", closure(2, &[1, 1])),
        ("negative_hopf", closure(2, &[-1, -1])),
        ("trefoil", closure(2, &[1, 1, 1])),
        ("left_trefoil", closure(2, &[-1, -1, -1])),
        ("torus_2_4", closure(2, &[1, 1, 1, 1])),
        ("figure_eight", closure(3, &[1, -2, 1, -2])),
        ("cinquefoil", closure(2, &[1, 1, 1, 1, 1])),
        ("three_twist", closure(3, &[1, 1, 1, 2, -1, 2])),
        ("borromean", closure(3, &[1, -2, 1, -2, 1, -2])),
        ("torus_3_3", closure(3, &[1, 2, 1, 2, 1, 2])),
        ("torus_2_7", closure(2, &[1; 7])),
        ("torus_3_4", closure(3, &[1, 2, 1, 2, 1, 2, 1, 2])),
    ]
}

/// Periodic diagrams by name, given by a quotient tangle and a prime period.
pub fn periodic() -> Vec<(&'static str, PeriodicDiagram)> {
    let lift = |q: QuotientTangle, p: usize| q.lift(p).expect("valid lift");
    let braid = |m: usize, w: &[i32]| QuotientTangle::braid(m, w).expect("valid braid");
    vec![
        ("axis_unknot_2", lift(QuotientTangle::parallel(1), 2)),
        ("axis_unknot_3", lift(QuotientTangle::parallel(1), 3)),
        ("swapped_pair", lift(QuotientTangle::closed(Diagram::unknot()).expect("closed"), 2)),
        ("hopf_2", lift(QuotientTangle::braid_generator(), 2)),
        ("trefoil_3", lift(QuotientTangle::braid_generator(), 3)),
        ("torus_2_4_2", lift(braid(2, &[1, 1]), 2)),
        ("torus_2_6_3", lift(braid(2, &[1, 1]), 3)),
        ("figure_eight_2", lift(braid(3, &[1, -2]), 2)),
        ("borromean_3", lift(braid(3, &[1, -2]), 3)),
        ("torus_3_3_3", lift(braid(3, &[1, 2]), 3)),
        ("torus_3_4_2", lift(braid(3, &[1, 2, 1, 2]), 2)),
    ]
}

pub fn diagram(name: &str) -> Option<Diagram> {
    diagrams().into_iter().find(|(n, _)| *n == name).map(|x| x.1)
}

pub fn periodic_diagram(name: &str) -> Option<PeriodicDiagram> {
    periodic().into_iter().find(|(n, _)| *n == name).map(|x| x.1)
}

/// Plain movies by name.
pub fn movies() -> Vec<(&'static str, Movie)> {
    let saddle = Move::Saddle { edges: [0, 1] };
    vec![
        ("tube", Movie::new(Diagram::unknot())),
        ("merge_split", Movie::from_moves(Diagram::unlink(2), [saddle.clone(), saddle]).expect("valid movie")),
    ]
}

/// The ribbon movie of the axis unknot: an equivariant birth followed by saddles
/// joining each new circle to the axis strand.
pub fn swallow_follow(p: usize) -> EquivariantMovie {
    EquivariantMovie::new(
        QuotientTangle::parallel(1),
        p,
        vec![Event::new(Move::Birth), Event::new(Move::Saddle { edges: [0, 1] })],
    )
}

/// Equivariant movies by name.
pub fn equivariant_movies() -> Vec<(&'static str, EquivariantMovie)> {
    let mut dead = swallow_follow(2);
    dead.events.extend([Event::new(Move::Birth), Event::new(Move::Death { edge: 2 })]);
    let capped = EquivariantMovie::new(
        QuotientTangle::parallel(1),
        2,
        [Move::Birth, Move::Birth, Move::Saddle { edges: [1, 2] }].map(Event::new).to_vec(),
    );
    vec![
        ("cylinder_hopf_2", EquivariantMovie::new(QuotientTangle::braid_generator(), 2, vec![])),
        ("swallow_follow_2", swallow_follow(2)),
        ("swallow_follow_3", swallow_follow(3)),
        ("capped_2", capped),
        ("with_death_2", dead),
        ("tubes_2", EquivariantMovie::new(QuotientTangle::closed(Diagram::unknot()).expect("closed"), 2, vec![])),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes() {
        for (name, d) in diagrams() {
            assert!(d.n_crossings() <= 8, "{name}");
            assert!(d.is_planar(&[]).unwrap(), "{name}");
        }
        let comps = |n: &str| diagram(n).unwrap().components();
        assert_eq!((comps("trefoil"), comps("hopf"), comps("borromean"), comps("torus_3_3")), (1, 2, 3, 3));
        for (name, pd) in periodic() {
            assert!(pd.is_symmetric(), "{name}");
            assert!(pd.lifted.n_crossings() <= 8, "{name}");
        }
        let lifted = |n: &str| periodic_diagram(n).unwrap().lifted.canonical();
        assert_eq!(lifted("figure_eight_2"), diagram("figure_eight").unwrap().canonical());
        assert_eq!(lifted("trefoil_3"), diagram("trefoil").unwrap().canonical());
        for (name, m) in equivariant_movies() {
            assert!(crate::cobordism::lift_movie(&m).is_ok(), "{name}");
        }
        assert_eq!(movies().len(), 2);
    }
}
