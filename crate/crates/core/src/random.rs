//! Seeded generators and exhaustive enumerators for differential testing.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::slr::{Rule, Sid, SlrFormula, Term};
use crate::so::SoFormula;
use crate::structures::{Elem, Signature, Structure};

/// Shape of the SIDs drawn by [`random_sid`].
#[derive(Clone, Debug)]
pub struct SidShape {
    pub relations: Vec<(String, usize)>,
    pub max_rules: usize,
    /// Bound on parameters plus existentials of a rule.
    pub max_vars: usize,
    /// Predicates besides the nullary goal `A`.
    pub helpers: usize,
    pub max_arity: usize,
    /// Predicate atoms only call later predicates.
    pub acyclic: bool,
}

impl Default for SidShape {
    fn default() -> Self {
        SidShape { relations: vec![("P".into(), 1), ("E".into(), 2)], max_rules: 3, max_vars: 3, helpers: 2, max_arity: 2, acyclic: false }
    }
}

/// Name of the goal predicate of every generated SID.
pub const GOAL: &str = "A";

/// A random SID whose first rule defines the nullary goal [`GOAL`].
pub fn random_sid(rng: &mut impl Rng, shape: &SidShape) -> Sid {
    let mut preds: Vec<(String, usize)> = vec![(GOAL.to_string(), 0)];
    for i in 0..shape.helpers {
        let name = ((b'B' + i as u8) as char).to_string();
        preds.push((name, rng.gen_range(0..=shape.max_arity.min(shape.max_vars))));
    }
    let count = rng.gen_range(1..=shape.max_rules);
    // Heads are drawn first so that only defined predicates are called.
    let heads: Vec<usize> = (0..count).map(|r| if r == 0 { 0 } else { rng.gen_range(0..preds.len()) }).collect();
    let mut rules = Vec::with_capacity(count);
    for &head in &heads {
        let (name, arity) = preds[head].clone();
        let params: Vec<String> = (1..=arity).map(|i| format!("x{i}")).collect();
        let exists: Vec<String> = (1..=rng.gen_range(0..=shape.max_vars - arity)).map(|i| format!("y{i}")).collect();
        let pool: Vec<String> = params.iter().chain(&exists).cloned().collect();
        let pick = |rng: &mut dyn rand::RngCore| Term::Var(pool.choose(rng).expect("nonempty pool").clone());
        let mut parts = Vec::new();
        if !pool.is_empty() {
            for _ in 0..rng.gen_range(0..=2) {
                let (rel, a) = shape.relations.choose(rng).expect("relations").clone();
                parts.push(SlrFormula::Rel(rel, (0..a).map(|_| pick(rng)).collect()));
            }
            if rng.gen_bool(0.4) {
                let (a, b) = (pick(rng), pick(rng));
                parts.push(if rng.gen_bool(0.5) { SlrFormula::Eq(a, b) } else { SlrFormula::Neq(a, b) });
            }
        }
        let callees: Vec<usize> = (0..preds.len()).filter(|&p| heads.contains(&p) && (!shape.acyclic || p > head)).collect();
        for _ in 0..rng.gen_range(0..=2) {
            let Some(&p) = callees.choose(rng) else { break };
            let (callee, a) = &preds[p];
            if *a > 0 && pool.is_empty() {
                continue;
            }
            parts.push(SlrFormula::Pred(callee.clone(), (0..*a).map(|_| pick(rng)).collect()));
        }
        let body = SlrFormula::exists_all(&exists, SlrFormula::star_all(parts));
        rules.push(Rule { head: name, params, body });
    }
    Sid::new(rules)
}

/// Every tuple over ids `1..=max_id` for the relations of `sig`.
pub fn all_tuples(sig: &Signature, max_id: Elem) -> Vec<(String, Vec<Elem>)> {
    let mut out = Vec::new();
    for (r, a) in sig.relations() {
        let mut tuples: Vec<Vec<Elem>> = vec![vec![]];
        for _ in 0..*a {
            tuples = tuples.into_iter().flat_map(|t| (1..=max_id).map(move |e| [t.clone(), vec![e]].concat())).collect();
        }
        out.extend(tuples.into_iter().map(|t| (r.clone(), t)));
    }
    out
}

/// All structures over `sig` (no constants) with at most `max_tuples`
/// tuples over ids `1..=max_id`, smallest first.
pub fn all_structures(sig: &Signature, max_tuples: usize, max_id: Elem) -> Vec<Structure> {
    let tuples = all_tuples(sig, max_id);
    let mut out = Vec::new();
    let mut chosen = Vec::new();
    fn go(tuples: &[(String, Vec<Elem>)], from: usize, left: usize, chosen: &mut Vec<usize>, sig: &Signature, out: &mut Vec<Structure>) {
        let mut s = Structure::new(sig.clone());
        for &i in chosen.iter() {
            s.insert(&tuples[i].0, tuples[i].1.clone()).expect("declared relation");
        }
        out.push(s);
        if left == 0 {
            return;
        }
        for i in from..tuples.len() {
            chosen.push(i);
            go(tuples, i + 1, left - 1, chosen, sig, out);
            chosen.pop();
        }
    }
    go(&tuples, 0, max_tuples, &mut chosen, sig, &mut out);
    out.sort_by_key(|s| s.num_tuples());
    out
}

/// A random structure with at most `max_tuples` tuples over ids `1..=max_id`.
pub fn random_structure(rng: &mut impl Rng, sig: &Signature, max_tuples: usize, max_id: Elem) -> Structure {
    let tuples = all_tuples(sig, max_id);
    let mut s = Structure::new(sig.clone());
    for _ in 0..rng.gen_range(0..=max_tuples) {
        let (r, t) = tuples.choose(rng).expect("nonempty signature");
        s.insert(r, t.clone()).expect("declared relation");
    }
    s
}

/// Rank-1 sentences `Qx. β(x)` for every boolean combination β of the
/// atoms over `x` alone, plus the rank-0 sentences true and false.
pub fn rank_one_sentences(sig: &Signature) -> Vec<SoFormula> {
    let atoms: Vec<SoFormula> =
        sig.relations().iter().map(|(r, a)| SoFormula::Rel(r.clone(), vec![Term::var("x"); *a])).chain([SoFormula::Eq(Term::var("x"), Term::var("x"))]).collect();
    let atoms = &atoms[..atoms.len().min(4)];
    let rows = 1usize << atoms.len();
    let mut out = vec![SoFormula::True, SoFormula::False];
    for table in 0u64..(1u64 << rows) {
        let minterm = |row: usize| {
            SoFormula::and_all(atoms.iter().enumerate().map(|(i, a)| if row >> i & 1 == 1 { a.clone() } else { SoFormula::not(a.clone()) }))
        };
        let beta = SoFormula::or_all((0..rows).filter(|&row| table >> row & 1 == 1).map(minterm));
        out.push(SoFormula::exists_fo(&["x"], beta.clone()));
        out.push(SoFormula::forall_fo(&["x"], beta));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn structure_counts_are_binomial_sums() {
        let sig = Signature::with_relations(&[("P", 1), ("E", 2)]);
        // 3 + 9 tuples: 1 + 12 + 66
        assert_eq!(all_structures(&sig, 2, 3).len(), 79);
        // 4 + 16 tuples: 1 + 20 + 190 + 1140
        assert_eq!(all_structures(&sig, 3, 4).len(), 1351);
        let e = Signature::with_relations(&[("E", 2)]);
        assert_eq!(all_structures(&e, 3, 4).len(), 697);
    }

    #[test]
    fn sids_respect_their_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let shape = SidShape { acyclic: true, ..Default::default() };
        for _ in 0..200 {
            let sid = random_sid(&mut rng, &shape);
            assert!(sid.rules.len() <= 3 && sid.rules[0].head == GOAL && sid.rules[0].params.is_empty());
            assert!(sid.rules.iter().all(|r| r.variable_count() <= 3));
            for r in &sid.rules {
                for (p, _) in r.body.predicate_atoms() {
                    assert!(p > r.head.as_str(), "{sid}");
                }
            }
        }
    }

    #[test]
    fn rank_one_family() {
        let sig = Signature::with_relations(&[("V", 1)]);
        let phis = rank_one_sentences(&sig);
        // atoms V(x), x = x: 16 tables, two quantifiers, plus two constants
        assert_eq!(phis.len(), 34);
        assert!(phis.iter().all(|f| f.is_sentence() && crate::so::quantifier_rank(f) <= 1));
    }
}
