use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use slrkit::decomposition::{check_reduced, exact_treewidth, reduce, validate};
use slrkit::random::{random_sid, SidShape, GOAL};
use slrkit::slr::{check_slr, is_normalized, normalize_sid, Sid, SlrFormula};
use slrkit::so::{eval_so, parse_so, SoFormula};
use slrkit::structures::{glue, is_isomorphic, pad, Elem, Signature, Store, Structure};
use slrkit::unfolding::oracle_check;

const CASES: u32 = 1000;

fn pe() -> Signature {
    Signature::with_relations(&[("P", 1), ("E", 2)])
}

fn er() -> Signature {
    Signature::with_relations(&[("E", 2), ("R", 3)])
}

fn build(sig: &Signature, tuples: &[(usize, Vec<Elem>)]) -> Structure {
    let mut s = Structure::new(sig.clone());
    for (r, t) in tuples {
        let (name, arity) = &sig.relations()[r % sig.relations().len()];
        s.insert(name, t[..*arity].to_vec()).unwrap();
    }
    s
}

/// Up to `max` tuples over ids `1..=max_id`, arities up to 3.
fn tuples(max: usize, max_id: Elem) -> impl Strategy<Value = Vec<(usize, Vec<Elem>)>> {
    prop::collection::vec((0usize..4, prop::collection::vec(1..=max_id, 3)), 0..=max)
}

/// A bijection of `1..=4` onto `10..=13`.
fn renaming() -> impl Strategy<Value = Vec<Elem>> {
    Just((10..14).collect::<Vec<Elem>>()).prop_shuffle()
}

fn sid(seed: u64) -> Sid {
    random_sid(&mut ChaCha8Rng::seed_from_u64(seed), &SidShape::default())
}

fn goal() -> SlrFormula {
    SlrFormula::Pred(GOAL.into(), vec![])
}

fn pointed(tuples: &[(usize, Vec<Elem>)], c: Option<Elem>, d: Option<Elem>) -> Structure {
    let mut sig = Signature::with_relations(&[("E", 2)]);
    for (name, v) in [("c", c), ("d", d)] {
        if v.is_some() {
            sig.add_constant(name).unwrap();
        }
    }
    let mut s = build(&sig, tuples);
    for (name, v) in [("c", c), ("d", d)] {
        if let Some(v) = v {
            s.set_constant(name, v).unwrap();
        }
    }
    s
}

fn sentences() -> Vec<SoFormula> {
    [
        "exists x. P(x) & !E(x, x)",
        "forall x. exists y. E(x, y)",
        "exists x y. x != y & P(x) & P(y)",
        "exists2 X/1. forall x y. E(x, y) -> ((X(x) & !X(y)) | (!X(x) & X(y)))",
        "forall2 X/1. (exists x. X(x)) -> exists x y. X(x) & E(x, y) & !X(y)",
    ]
    .map(|f| parse_so(f).unwrap())
    .to_vec()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(CASES))]

    #[test]
    fn slr_verdicts_are_isomorphism_invariant(ts in tuples(3, 4), image in renaming(), seed in any::<u64>()) {
        let s = build(&pe(), &ts);
        let t = s.relabel(|e| image[(e - 1) as usize]);
        let sid = sid(seed);
        prop_assert_eq!(check_slr(&s, &Store::new(), &goal(), &sid).unwrap(), check_slr(&t, &Store::new(), &goal(), &sid).unwrap());
    }

    #[test]
    fn so_verdicts_are_isomorphism_invariant(ts in tuples(3, 4), image in renaming(), pick in 0usize..5) {
        let s = build(&pe(), &ts);
        let t = s.relabel(|e| image[(e - 1) as usize]);
        let f = &sentences()[pick];
        prop_assert_eq!(eval_so(&s, &pad(&s, 2).domain, &Store::new(), f).unwrap(), eval_so(&t, &pad(&t, 2).domain, &Store::new(), f).unwrap());
    }

    #[test]
    fn checker_agrees_with_derivation_oracle(ts in tuples(2, 3), seed in any::<u64>()) {
        let s = build(&pe(), &ts);
        let sid = sid(seed);
        prop_assert_eq!(check_slr(&s, &Store::new(), &goal(), &sid).unwrap(), oracle_check(&s, &Store::new(), GOAL, &[], &sid).unwrap());
    }

    #[test]
    fn normalization_preserves_sentences(ts in tuples(3, 3), seed in any::<u64>()) {
        let s = build(&pe(), &ts);
        let sid = sid(seed);
        let norm = normalize_sid(&sid).sid;
        prop_assert!(is_normalized(&norm));
        let after = norm.predicates().contains(GOAL) && check_slr(&s, &Store::new(), &goal(), &norm).unwrap();
        prop_assert_eq!(check_slr(&s, &Store::new(), &goal(), &sid).unwrap(), after);
    }

    #[test]
    fn glue_commutes(a in tuples(3, 4), b in tuples(3, 4), c in prop::option::of(1..=4 as Elem), d in prop::option::of(1..=4 as Elem), c2 in prop::option::of(1..=4 as Elem)) {
        let x = pointed(&a, c, d);
        let y = pointed(&b, c2, None);
        prop_assert!(is_isomorphic(&glue(&x, &y).unwrap(), &glue(&y, &x).unwrap()).unwrap());
    }

    #[test]
    fn optimal_decompositions_are_valid(ts in tuples(5, 6)) {
        let s = build(&er(), &ts);
        let (w, td) = exact_treewidth(&s).unwrap();
        prop_assert!(validate(&td, &s).is_ok());
        prop_assert_eq!(td.width(), w);
    }

    #[test]
    fn reduction_keeps_width(ts in tuples(5, 6)) {
        let s = build(&er(), &ts);
        prop_assume!(s.num_tuples() > 0);
        let (w, td) = exact_treewidth(&s).unwrap();
        let r = reduce(&td, &s).unwrap();
        prop_assert_eq!(r.width, w);
        prop_assert!(check_reduced(&r, &s).is_ok());
    }
}
