use std::collections::BTreeMap;
use std::sync::Arc;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use proptest::prelude::*;

use ekh::arcalg::enumerate_matchings;
use ekh::chain::{cyclic_action, find_homotopy, homology, tensor, BigradedComplex, ChainMap};
use ekh::cobordism::{movie_map, reverse, Event, Movie};
use ekh::diagram::{Diagram, Kink, Labels, Move, QuotientTangle};
use ekh::equivariant::ekh;
use ekh::khovanov::{periodic_action, Convention, KhovanovComplex};
use ekh::zlinalg::{homology_pair, invariant_factors, kernel_basis, smith_normal_form, solve_integer, IntMatrix};

const PAPER: Convention = Convention::Paper;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = IntMatrix> {
    prop::collection::vec(prop::collection::vec(-5i64..=5, cols), rows).prop_map(move |r| {
        if rows == 0 {
            IntMatrix::zeros(0, cols)
        } else {
            IntMatrix::from_rows(&r)
        }
    })
}

fn any_matrix() -> impl Strategy<Value = IntMatrix> {
    (1usize..=8, 1usize..=8).prop_flat_map(|(r, c)| matrix(r, c))
}

/// A three-term complex `C^0 -> C^1 -> C^2` in q-degree `q` with `d_in = ker(d_out) * R`.
fn three_term() -> impl Strategy<Value = (IntMatrix, IntMatrix)> {
    (1usize..=4, 1usize..=4, 1usize..=4)
        .prop_flat_map(|(r0, r1, r2)| (matrix(r2, r1), matrix(r1, r0), Just(r0)))
        .prop_map(|(b, seed, r0)| {
            let k = kernel_basis(&b);
            let a =
                if k.cols() == 0 { IntMatrix::zeros(b.cols(), r0) } else { k.dot(&seed.submatrix(0, k.cols(), 0, r0)) };
            (a, b)
        })
}

fn complex_of(a: &IntMatrix, b: &IntMatrix, q: i64) -> BigradedComplex {
    let labels = |i: i64, n: usize| (0..n).map(|k| format!("x{i}_{k}")).collect::<Vec<_>>();
    let basis =
        BTreeMap::from([((0, q), labels(0, a.cols())), ((1, q), labels(1, a.rows())), ((2, q), labels(2, b.rows()))]);
    BigradedComplex::new(basis, BTreeMap::from([((0, q), a.clone()), ((1, q), b.clone())])).unwrap()
}

fn small_complex() -> impl Strategy<Value = BigradedComplex> {
    (three_term(), -1i64..=1).prop_map(|((a, b), q)| complex_of(&a, &b, q))
}

fn free_ranks(c: &BigradedComplex) -> BTreeMap<i64, usize> {
    let mut out = BTreeMap::new();
    for (&(i, _), g) in &homology(c).unwrap().entries {
        *out.entry(i).or_insert(0) += g.free_rank;
    }
    out.retain(|_, r| *r > 0);
    out
}

fn braid_word(m: usize, len: usize) -> impl Strategy<Value = Vec<i32>> {
    prop::collection::vec((1..m as i32, any::<bool>()), 1..=len)
        .prop_map(|w| w.into_iter().map(|(g, s)| if s { g } else { -g }).collect())
}

fn closure() -> impl Strategy<Value = Diagram> {
    (2usize..=3)
        .prop_flat_map(|m| (Just(m), braid_word(m, 5)))
        .prop_map(|(m, w)| QuotientTangle::braid_closure(m, &w).unwrap())
}

fn apply(d: &Diagram, mv: &Move) -> Option<Diagram> {
    d.apply_move(mv, &[], &mut Labels::fresh(d)).ok().map(|x| x.0)
}

fn kh(d: &Diagram) -> ekh::chain::HomologyTable {
    homology(&KhovanovComplex::new(d, PAPER).unwrap().complex).unwrap()
}

fn nth_label(d: &Diagram, k: usize) -> usize {
    let l: Vec<usize> = d.labels().into_iter().collect();
    l[k % l.len()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn smith_form_is_a_certified_diagonalisation(a in any_matrix()) {
        let s = smith_normal_form(&a);
        prop_assert_eq!(s.u.dot(&a).dot(&s.v), s.d.clone());
        prop_assert!(s.u.determinant().abs().is_one());
        prop_assert!(s.v.determinant().abs().is_one());
        for r in 0..a.rows() {
            for c in 0..a.cols() {
                let want = if r == c { s.divisors[r].clone() } else { BigInt::zero() };
                prop_assert_eq!(s.d.get(r, c), want);
            }
        }
        prop_assert!(s.divisors.iter().all(|d| !d.is_negative()));
        for w in s.divisors.windows(2) {
            if w[0].is_zero() {
                prop_assert!(w[1].is_zero());
            } else {
                prop_assert!(w[1].is_multiple_of(&w[0]));
            }
        }
        let nonzero: Vec<BigInt> = s.divisors.iter().filter(|d| !d.is_zero()).cloned().collect();
        prop_assert_eq!(nonzero.len(), a.rank());
        let factors: Vec<BigInt> = invariant_factors(&a).into_iter().filter(|d| !d.is_zero()).collect();
        prop_assert_eq!(factors, nonzero);
    }

    #[test]
    fn integer_solutions_are_exact(a in any_matrix(), y in prop::collection::vec(-3i64..=3, 8), noise in prop::collection::vec(-2i64..=2, 8)) {
        let y: Vec<BigInt> = y[..a.cols()].iter().map(|&v| BigInt::from(v)).collect();
        let b = a.mul_vec(&y).unwrap();
        let x = solve_integer(&a, &b).expect("a consistent system");
        prop_assert_eq!(a.mul_vec(&x).unwrap(), b.clone());
        let b2: Vec<BigInt> = b.iter().zip(&noise).map(|(v, &e)| v + e).collect();
        match solve_integer(&a, &b2) {
            Ok(x) => prop_assert_eq!(a.mul_vec(&x).unwrap(), b2),
            Err(_) => {
                let s = smith_normal_form(&a);
                let c = s.u.mul_vec(&b2).unwrap();
                let obstructed = c.iter().enumerate().any(|(i, ci)| {
                    let d = s.divisors.get(i).cloned().unwrap_or_default();
                    if d.is_zero() { !ci.is_zero() } else { !ci.is_multiple_of(&d) }
                });
                prop_assert!(obstructed);
            }
        }
    }

    #[test]
    fn homology_pair_counts_ranks((a, b) in three_term()) {
        prop_assert!(b.dot(&a).is_zero());
        let (free, torsion) = homology_pair(&a, &b).unwrap();
        prop_assert_eq!(free, a.rows() - b.rank() - a.rank());
        let expect: Vec<BigInt> = invariant_factors(&a).into_iter().filter(|d| !d.is_zero() && !d.is_one()).collect();
        prop_assert_eq!(torsion, expect);
    }

    #[test]
    fn kuenneth_free_ranks(c in small_complex(), d in small_complex()) {
        let (hc, hd) = (free_ranks(&c), free_ranks(&d));
        let mut want = BTreeMap::new();
        for (i, x) in &hc {
            for (j, y) in &hd {
                *want.entry(i + j).or_insert(0) += x * y;
            }
        }
        prop_assert_eq!(free_ranks(&tensor(&c, &d)), want);
    }

    #[test]
    fn cyclic_action_has_order_p(c in small_complex(), p in prop::sample::select(vec![2usize, 3])) {
        let c = Arc::new(c);
        let th = cyclic_action(&c, p);
        prop_assert!(th.check_chain_map().is_ok());
        prop_assert!(th.power(p).unwrap().equals(&ChainMap::identity(th.source.clone())));
    }

    #[test]
    fn homotopies_are_recovered((a, b) in three_term(), h1 in matrix(4, 4), h2 in matrix(4, 4)) {
        let c = Arc::new(complex_of(&a, &b, 0));
        let (n0, n1, n2) = (a.cols(), a.rows(), b.rows());
        let h1 = h1.submatrix(0, n0, 0, n1);
        let h2 = h2.submatrix(0, n1, 0, n2);
        let blocks = BTreeMap::from([
            ((0, 0), IntMatrix::identity(n0).plus(&h1.dot(&a))),
            ((1, 0), IntMatrix::identity(n1).plus(&a.dot(&h1)).plus(&h2.dot(&b))),
            ((2, 0), IntMatrix::identity(n2).plus(&b.dot(&h2))),
        ]);
        let f = ChainMap::identity(c.clone());
        let g = ChainMap::new(c.clone(), c, (0, 0), blocks).unwrap();
        prop_assert!(g.check_chain_map().is_ok());
        let h = find_homotopy(&g, &f).unwrap();
        prop_assert!(h.verify(&g, &f));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn first_move_keeps_components_and_homology(d in closure(), k in 0usize..64, left: bool, positive: bool) {
        let e = nth_label(&d, k);
        let (d2, rec) = d.apply_move(&Move::R1Add { edge: e, kink: Kink { left, positive } }, &[], &mut Labels::fresh(&d)).unwrap();
        prop_assert_eq!(d2.n_crossings(), d.n_crossings() + 1);
        prop_assert_eq!(d2.components(), d.components());
        prop_assert_eq!(d2.writhe(), d.writhe() + if positive { 1 } else { -1 });
        prop_assert_eq!(kh(&d2), kh(&d));
        let back = apply(&d2, &Move::R1Remove { crossing: rec.new_crossings[0] }).unwrap();
        prop_assert_eq!(back.canonical(), d.canonical());
    }

    #[test]
    fn second_move_keeps_components_and_homology(d in closure(), k in 0usize..64, j in 0usize..64, over: bool, left: bool) {
        let mv = Move::R2Add { edge: nth_label(&d, k), other: nth_label(&d, j), over, left };
        if let Some(d2) = apply(&d, &mv) {
            prop_assert_eq!(d2.n_crossings(), d.n_crossings() + 2);
            prop_assert_eq!(d2.components(), d.components());
            prop_assert_eq!(d2.writhe(), d.writhe());
            prop_assert_eq!(kh(&d2), kh(&d));
        }
    }

    #[test]
    fn euler_characteristic_at_q_one(d in closure()) {
        let c = KhovanovComplex::new(&d, PAPER).unwrap();
        prop_assert!(c.complex.check_d_squared().is_ok());
        let chi: i64 = c.complex.euler_characteristic().values().sum();
        prop_assert_eq!(chi.abs(), 1 << d.components());
        prop_assert_eq!(c.n_gens(), c.complex.total_rank());
    }

    #[test]
    fn lifts_have_rotation_of_order_p(m in 1usize..=3, w in braid_word(3, 3), p in prop::sample::select(vec![2usize, 3])) {
        let w: Vec<i32> = w.into_iter().filter(|g| g.unsigned_abs() < m as u32).collect();
        let q = QuotientTangle::braid(m, &w).unwrap();
        let pd = q.lift(p).unwrap();
        prop_assert!(pd.is_symmetric());
        prop_assert_eq!(pd.lifted.n_crossings(), p * q.diagram.n_crossings());
        for l in pd.lifted.labels() {
            let orbit: Vec<usize> = std::iter::successors(Some(l), |&x| Some(pd.rotate_label(x))).take(p + 1).collect();
            prop_assert_eq!(orbit[p], l);
            prop_assert!(orbit[1..p].iter().all(|&x| x != l));
        }
        let kc = KhovanovComplex::new(&pd.lifted, PAPER).unwrap();
        let th = periodic_action(&pd, &kc).unwrap();
        prop_assert!(th.check_chain_map().is_ok());
        prop_assert!(th.power(p).unwrap().equals(&ChainMap::identity(kc.complex.clone())));
    }

    #[test]
    fn equivariant_tables_stabilise(w in braid_word(2, 2), p in prop::sample::select(vec![2usize, 3])) {
        let pd = QuotientTangle::braid(2, &w).unwrap().lift(p).unwrap();
        prop_assume!(pd.lifted.n_crossings() <= 6);
        let a = ekh(&pd, 3, PAPER).unwrap();
        let b = ekh(&pd, 4, PAPER).unwrap();
        for (&bd, g) in &a.table.entries {
            if a.trusted(bd) && b.trusted(bd) {
                prop_assert_eq!(g, &b.table.get(bd));
            }
        }
    }

    #[test]
    fn movie_maps_compose(moves in prop::collection::vec((0u8..3, 0usize..64, 0usize..64), 1..=4), split in 0usize..4) {
        let mut m = Movie::new(Diagram::unlink(2));
        for (kind, x, y) in moves {
            let d = m.end().clone();
            let mv = match kind {
                0 => Move::Birth,
                1 => Move::Saddle { edges: [nth_label(&d, x), nth_label(&d, y)] },
                _ => Move::R1Add { edge: nth_label(&d, x), kink: Kink { left: y % 2 == 0, positive: y % 3 == 0 } },
            };
            let _ = m.push(Event::new(mv));
        }
        let cut = split.min(m.events.len());
        let first = Movie::from_events(m.start().clone(), m.events[..cut].iter().cloned()).unwrap();
        let second = Movie::from_events(first.end().clone(), m.events[cut..].iter().cloned()).unwrap();
        let whole = movie_map(&first.compose(&second).unwrap(), PAPER).unwrap();
        let parts = movie_map(&first, PAPER).unwrap().then(&movie_map(&second, PAPER).unwrap()).unwrap();
        prop_assert!(whole.equals(&parts));
        prop_assert!(whole.check_chain_map().is_ok());
        let back = reverse(&reverse(&m).unwrap()).unwrap();
        prop_assert_eq!(back.start().canonical(), m.start().canonical());
        prop_assert_eq!(back.end().canonical(), m.end().canonical());
        prop_assert_eq!(back.euler(), m.euler());
    }
}

#[test]
fn matchings_are_counted_by_catalan_numbers() {
    let catalan = [1, 1, 2, 5, 14];
    for (k, &c) in catalan.iter().enumerate() {
        assert_eq!(enumerate_matchings(2 * k).unwrap().len(), c, "n = {}", 2 * k);
    }
    assert!(enumerate_matchings(3).is_err());
    assert!(enumerate_matchings(10).is_err());
}
