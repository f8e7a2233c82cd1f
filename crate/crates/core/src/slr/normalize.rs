//! Elimination of equalities between variables.
//!
//! For every rule and every equivalence on its terms that is coarser than
//! the one forced by its equalities, the rule is specialised to a predicate
//! `A_I` indexed by the induced partition of the head positions. Each `A`
//! gets the rules `A(x̄) <- A_I(reps)`.

use std::collections::{BTreeMap, BTreeSet};

use super::flat::flatten_rule;
use super::{FlatRule, Rule, Sid, SlrFormula, Term};

/// Output of [`normalize_sid`]: the new SID and, for every original
/// predicate, the name chosen for each partition of its positions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NormalizedSid {
    pub sid: Sid,
    /// `names[A][code]` where `code[i]` is the block index of position `i`.
    pub names: BTreeMap<String, BTreeMap<Vec<usize>, String>>,
}

/// Number of equality atoms between two variables.
pub fn equality_count(sid: &Sid) -> usize {
    sid.rules
        .iter()
        .map(|r| flatten_rule(r).eqs.iter().filter(|(a, b)| a.is_var() && b.is_var()).count())
        .sum()
}

pub fn is_normalized(sid: &Sid) -> bool {
    equality_count(sid) == 0
}

fn code_name(pred: &str, code: &[usize]) -> String {
    let letters: String = code.iter().map(|&b| char::from(b'a' + (b % 26) as u8)).collect();
    format!("{pred}_{letters}")
}

/// Restricted-growth code of the partition of `items` induced by `class`.
fn rg_code<T: Ord + Clone>(items: &[T]) -> Vec<usize> {
    let mut seen: Vec<T> = Vec::new();
    items
        .iter()
        .map(|x| {
            seen.iter().position(|y| y == x).unwrap_or_else(|| {
                seen.push(x.clone());
                seen.len() - 1
            })
        })
        .collect()
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, x: usize) -> usize {
        if self.0[x] != x {
            let r = self.find(self.0[x]);
            self.0[x] = r;
        }
        self.0[x]
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// All set partitions of `0..n`, as block-index assignments.
fn partitions(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(n);
    fn go(n: usize, cur: &mut Vec<usize>, blocks: usize, out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for b in 0..=blocks {
            cur.push(b);
            go(n, cur, blocks.max(b + 1), out);
            cur.pop();
        }
    }
    go(n, &mut cur, 0, &mut out);
    out
}

pub fn normalize_sid(sid: &Sid) -> NormalizedSid {
    let original = sid.predicates();
    let mut names: BTreeMap<String, BTreeMap<Vec<usize>, String>> = BTreeMap::new();
    let mut taken: BTreeSet<String> = original.clone();
    let mut name_for = |pred: &str, code: &[usize], names: &mut BTreeMap<String, BTreeMap<Vec<usize>, String>>| -> String {
        let entry = names.entry(pred.to_string()).or_default();
        if let Some(n) = entry.get(code) {
            return n.clone();
        }
        let mut n = code_name(pred, code);
        while taken.contains(&n) {
            n.push('\'');
        }
        taken.insert(n.clone());
        entry.insert(code.to_vec(), n.clone());
        n
    };

    let mut specialised: Vec<Rule> = Vec::new();
    for rule in &sid.rules {
        for (code, fr) in specialise(&flatten_rule(rule)) {
            let mut fr = fr;
            fr.head = name_for(&rule.head, &code, &mut names);
            for (p, ts) in fr.preds.iter_mut() {
                let c = rg_code(ts);
                let mut reps: Vec<Term> = Vec::new();
                for t in ts.iter() {
                    if !reps.contains(t) {
                        reps.push(t.clone());
                    }
                }
                *p = name_for(p, &c, &mut names);
                *ts = reps;
            }
            specialised.push(fr.to_rule());
        }
    }

    // Drop rules that mention a specialised predicate without rules.
    loop {
        let defined: BTreeSet<&str> = specialised.iter().map(|r| r.head.as_str()).collect();
        let keep: Vec<bool> =
            specialised.iter().map(|r| r.body.predicate_atoms().iter().all(|(p, _)| defined.contains(p))).collect();
        if keep.iter().all(|&k| k) {
            break;
        }
        let mut it = keep.into_iter();
        specialised.retain(|_| it.next().unwrap());
    }

    let defined: BTreeSet<String> = specialised.iter().map(|r| r.head.clone()).collect();
    let arities = sid.arities();
    let mut rules = Vec::new();
    for pred in original.iter().filter(|p| sid.rules_for(p).next().is_some()) {
        let params: Vec<String> = (1..=arities[pred]).map(|i| format!("x{i}")).collect();
        for (code, name) in names.get(pred).into_iter().flatten() {
            if !defined.contains(name) {
                continue;
            }
            let mut reps: Vec<Term> = Vec::new();
            for (i, &b) in code.iter().enumerate() {
                if b == reps.len() {
                    reps.push(Term::Var(params[i].clone()));
                }
            }
            rules.push(Rule { head: pred.clone(), params: params.clone(), body: SlrFormula::Pred(name.clone(), reps) });
        }
    }
    rules.extend(specialised);
    for m in names.values_mut() {
        m.retain(|_, n| defined.contains(n));
    }
    NormalizedSid { sid: Sid::new(rules), names }
}

/// Specialisations of one rule: the head code and the rewritten rule whose
/// predicate atoms still carry the original names and arguments.
fn specialise(fr: &FlatRule) -> Vec<(Vec<usize>, FlatRule)> {
    let vars = fr.variables();
    let mut consts: Vec<String> = Vec::new();
    let mut note_const = |t: &Term| {
        if let Term::Const(c) = t {
            if !consts.contains(c) {
                consts.push(c.clone());
            }
        }
    };
    for (_, ts) in fr.rels.iter().chain(&fr.preds) {
        ts.iter().for_each(&mut note_const);
    }
    for (a, b) in fr.eqs.iter().chain(&fr.neqs) {
        note_const(a);
        note_const(b);
    }
    let nv = vars.len();
    let index = |t: &Term| -> usize {
        match t {
            Term::Var(v) => vars.iter().position(|x| x == v).expect("rule variable"),
            Term::Const(c) => nv + consts.iter().position(|x| x == c).expect("rule constant"),
        }
    };
    let universe: Vec<Term> = vars.iter().map(|v| Term::Var(v.clone())).chain(consts.iter().map(|c| Term::Const(c.clone()))).collect();
    let mut uf = UnionFind((0..universe.len()).collect());
    for (a, b) in &fr.eqs {
        uf.union(index(a), index(b));
    }
    let forced: Vec<usize> = (0..universe.len()).map(|i| uf.find(i)).collect();

    // Classes whose merging can change head or child-atom patterns.
    let mut relevant: Vec<usize> = Vec::new();
    let mut mark = |i: usize| {
        if !relevant.contains(&forced[i]) {
            relevant.push(forced[i]);
        }
    };
    (0..fr.params.len()).for_each(&mut mark);
    for (_, ts) in &fr.preds {
        ts.iter().for_each(|t| mark(index(t)));
    }
    relevant.sort_unstable();

    let mut out = Vec::new();
    for part in partitions(relevant.len()) {
        // Final class of each universe element.
        let class: Vec<usize> = (0..universe.len())
            .map(|i| match relevant.iter().position(|&r| r == forced[i]) {
                Some(p) => part[p],
                None => relevant.len() + forced[i],
            })
            .collect();
        let rep_of = |i: usize| -> usize { (0..universe.len()).find(|&j| class[j] == class[i]).expect("own class") };
        let sub = |t: &Term| universe[rep_of(index(t))].clone();
        if fr.neqs.iter().any(|(a, b)| sub(a) == sub(b)) {
            continue;
        }
        let head_code = rg_code(&(0..fr.params.len()).map(|i| class[i]).collect::<Vec<_>>());
        let mut params = Vec::new();
        for i in 0..fr.params.len() {
            if rep_of(i) == i {
                params.push(fr.params[i].clone());
            }
        }
        let mut eqs = Vec::new();
        for j in 0..universe.len() {
            let r = rep_of(j);
            if r != j && !universe[j].is_var() {
                eqs.push((universe[r].clone(), universe[j].clone()));
            }
        }
        let rels: Vec<(String, Vec<Term>)> = fr.rels.iter().map(|(r, ts)| (r.clone(), ts.iter().map(sub).collect())).collect();
        let neqs: Vec<(Term, Term)> = fr.neqs.iter().map(|(a, b)| (sub(a), sub(b))).collect();
        let preds: Vec<(String, Vec<Term>)> = fr.preds.iter().map(|(p, ts)| (p.clone(), ts.iter().map(sub).collect())).collect();
        let mut used: BTreeSet<String> = BTreeSet::new();
        for t in rels.iter().flat_map(|(_, ts)| ts).chain(preds.iter().flat_map(|(_, ts)| ts)) {
            if let Term::Var(v) = t {
                used.insert(v.clone());
            }
        }
        for (a, b) in eqs.iter().chain(&neqs) {
            for t in [a, b] {
                if let Term::Var(v) = t {
                    used.insert(v.clone());
                }
            }
        }
        let exists: Vec<String> =
            (fr.params.len()..nv).filter(|&i| rep_of(i) == i && used.contains(&vars[i])).map(|i| vars[i].clone()).collect();
        out.push((head_code, FlatRule { head: fr.head.clone(), params, exists, rels, eqs, neqs, preds }));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slr::{check_slr, parse_sid};
    use crate::structures::{Store, Structure};

    #[test]
    fn partition_counts_are_bell_numbers() {
        let bell = [1, 1, 2, 5, 15, 52, 203];
        for (n, &b) in bell.iter().enumerate() {
            assert_eq!(partitions(n).len(), b);
        }
    }

    #[test]
    fn normalized_sid_is_fixpoint_shaped() {
        let sid = parse_sid("A(x) <- exists y . R(x, y) * B(y) ; B(x) <- S(x) ;").unwrap();
        assert!(is_normalized(&sid));
        let n = normalize_sid(&sid);
        assert_eq!(equality_count(&n.sid), 0);
        let s = Structure::parse("rel R 2\nrel S 1\ntuple R 1 2\ntuple S 2").unwrap();
        let phi = crate::slr::parse_slr_with("exists x . A(x)", &crate::slr::ParseContext::new().with_sid(&sid)).unwrap();
        assert!(check_slr(&s, &Store::new(), &phi, &n.sid).unwrap());
    }

    #[test]
    fn equality_between_parameters() {
        let sid = parse_sid("A(x1, x2) <- x1 = x2 * emp ;").unwrap();
        assert_eq!(equality_count(&sid), 1);
        let n = normalize_sid(&sid);
        assert_eq!(equality_count(&n.sid), 0);
        assert_eq!(n.names["A"][&vec![0, 0]], "A_aa");
        assert!(!n.names["A"].contains_key(&vec![0, 1]));
        assert!(n.sid.to_string().contains("A_aa(x1) <- emp ;"));
    }

    #[test]
    fn equality_with_existential() {
        let sid = parse_sid("A(x1, x2) <- exists y . R(x1, y) * y = x2 ;").unwrap();
        let n = normalize_sid(&sid);
        assert_eq!(equality_count(&n.sid), 0);
        assert!(n.sid.to_string().contains("A_ab(x1, x2) <- R(x1, x2) ;"));
    }

    #[test]
    fn unsatisfiable_disequality_dropped() {
        let sid = parse_sid("A(x, y) <- x = y * x != y ;").unwrap();
        assert!(normalize_sid(&sid).sid.rules.is_empty());
    }
}
