//! Unfolding trees of SID predicates, their characteristic formulae and a
//! derivation-enumeration oracle for the satisfaction relation.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

mod reduced;

use reduced::Analysis;

use crate::slr::{flatten_rule, FlatRule, Sid, SlrError, SlrFormula, Term};
use crate::structures::{Elem, Store, Structure};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum UnfoldingError {
    #[error("invalid unfolding tree: {0}")]
    InvalidTree(String),
    #[error(transparent)]
    Slr(#[from] SlrError),
}

/// Nodes are numbered in preorder; node 0 is the root.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct UnfoldingTree {
    /// Rule index labelling each node.
    pub labels: Vec<usize>,
    /// Ordered children, one per predicate atom of the node's rule.
    pub children: Vec<Vec<usize>>,
}

impl UnfoldingTree {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Rebuilds the tree from its preorder label sequence.
    fn from_preorder(labels: Vec<usize>, flat: &[FlatRule]) -> UnfoldingTree {
        let mut children = vec![Vec::new(); labels.len()];
        let mut open: Vec<(usize, usize)> = Vec::new();
        for (n, &r) in labels.iter().enumerate() {
            if let Some((parent, remaining)) = open.last_mut() {
                children[*parent].push(n);
                *remaining -= 1;
                if *remaining == 0 {
                    open.pop();
                }
            }
            let k = flat[r].preds.len();
            if k > 0 {
                open.push((n, k));
            }
        }
        UnfoldingTree { labels, children }
    }

    /// Checks that the root defines `pred` and that every node's children
    /// match the predicate atoms of its rule, in order.
    pub fn validate(&self, pred: &str, sid: &Sid) -> Result<(), UnfoldingError> {
        let bad = |m: String| Err(UnfoldingError::InvalidTree(m));
        if self.labels.is_empty() || self.children.len() != self.labels.len() {
            return bad("no nodes".into());
        }
        let mut expected: Vec<Option<&str>> = vec![None; self.len()];
        expected[0] = Some(pred);
        let mut seen = vec![false; self.len()];
        for n in 0..self.len() {
            let Some(rule) = sid.rules.get(self.labels[n]) else { return bad(format!("node {n} has no rule {}", self.labels[n])) };
            if expected[n] != Some(rule.head.as_str()) {
                return bad(format!("node {n} is labelled by a rule for {}", rule.head));
            }
            let atoms = rule.body.predicate_atoms();
            if atoms.len() != self.children[n].len() {
                return bad(format!("node {n} has {} children, its rule {} predicate atoms", self.children[n].len(), atoms.len()));
            }
            for (&c, (p, _)) in self.children[n].iter().zip(atoms) {
                if c <= n || c >= self.len() || seen[c] {
                    return bad(format!("node {c} is not a fresh descendant of {n}"));
                }
                seen[c] = true;
                expected[c] = Some(p);
            }
        }
        Ok(())
    }
}

impl fmt::Display for UnfoldingTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for n in 0..self.len() {
            writeln!(f, "node {n}")?;
        }
        for (n, cs) in self.children.iter().enumerate() {
            for c in cs {
                writeln!(f, "edge {n} {c}")?;
            }
        }
        writeln!(f, "root 0")?;
        for (n, r) in self.labels.iter().enumerate() {
            writeln!(f, "label {n} {r}")?;
        }
        Ok(())
    }
}

/// Depth-first stream of unfolding trees, lexicographic in the preorder
/// sequence of rule indices.
pub struct UnfoldingTrees {
    flat: Vec<FlatRule>,
    by_head: BTreeMap<String, Vec<usize>>,
    max_nodes: usize,
    max_relations: usize,
    stack: Vec<(Vec<usize>, Vec<String>, usize)>,
}

impl UnfoldingTrees {
    /// Additionally skips trees with more than `n` relation atoms.
    pub fn with_relation_budget(mut self, n: usize) -> Self {
        self.max_relations = n;
        self
    }
}

impl Iterator for UnfoldingTrees {
    type Item = UnfoldingTree;

    fn next(&mut self) -> Option<UnfoldingTree> {
        while let Some((labels, mut pending, rels)) = self.stack.pop() {
            let Some(p) = pending.pop() else {
                return Some(UnfoldingTree::from_preorder(labels, &self.flat));
            };
            for &r in self.by_head.get(&p).into_iter().flatten().rev() {
                let rule = &self.flat[r];
                let used = rels + rule.rels.len();
                let mut next = pending.clone();
                next.extend(rule.preds.iter().rev().map(|(q, _)| q.clone()));
                if labels.len() + 1 + next.len() > self.max_nodes || used > self.max_relations {
                    continue;
                }
                let mut l = labels.clone();
                l.push(r);
                self.stack.push((l, next, used));
            }
        }
        None
    }
}

pub fn enumerate_unfolding_trees(pred: &str, sid: &Sid, max_nodes: usize) -> Result<UnfoldingTrees, UnfoldingError> {
    if !sid.predicates().contains(pred) {
        return Err(SlrError::UnknownPredicate(pred.to_string()).into());
    }
    let flat: Vec<FlatRule> = sid.rules.iter().map(flatten_rule).collect();
    let mut by_head: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, r) in flat.iter().enumerate() {
        by_head.entry(r.head.clone()).or_default().push(i);
    }
    let stack = if max_nodes >= 1 { vec![(Vec::new(), vec![pred.to_string()], 0)] } else { Vec::new() };
    Ok(UnfoldingTrees { flat, by_head, max_nodes, max_relations: usize::MAX, stack })
}

/// Predicate-free formula of an unfolding tree; `annotations[i]` is the
/// node contributing the i-th relation atom of `formula`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Characteristic {
    pub formula: SlrFormula,
    pub annotations: Vec<usize>,
}

/// Bound variable `index` of node `node`.
pub fn fresh_name(node: usize, index: usize) -> String {
    format!("y_{node}_{index}")
}

pub fn characteristic_formula(tree: &UnfoldingTree, pred: &str, args: &[Term], sid: &Sid) -> Result<Characteristic, UnfoldingError> {
    tree.validate(pred, sid)?;
    let flat: Vec<FlatRule> = tree.labels.iter().map(|&r| flatten_rule(&sid.rules[r])).collect();
    if flat[0].params.len() != args.len() {
        return Err(SlrError::Arity { name: pred.to_string(), expected: flat[0].params.len(), got: args.len() }.into());
    }
    let mut annotations = Vec::new();
    let formula = theta(tree, &flat, 0, args, &mut annotations);
    Ok(Characteristic { formula, annotations })
}

fn theta(tree: &UnfoldingTree, flat: &[FlatRule], node: usize, args: &[Term], notes: &mut Vec<usize>) -> SlrFormula {
    let rule = &flat[node];
    let mut map: BTreeMap<&str, Term> = rule.params.iter().map(String::as_str).zip(args.iter().cloned()).collect();
    let ys: Vec<String> = (0..rule.exists.len()).map(|j| fresh_name(node, j)).collect();
    for (x, y) in rule.exists.iter().zip(&ys) {
        map.insert(x, Term::Var(y.clone()));
    }
    let sub = |t: &Term| match t {
        Term::Var(v) => map.get(v.as_str()).cloned().unwrap_or_else(|| t.clone()),
        Term::Const(_) => t.clone(),
    };
    let mut parts = Vec::new();
    for (r, ts) in &rule.rels {
        parts.push(SlrFormula::Rel(r.clone(), ts.iter().map(sub).collect()));
        notes.push(node);
    }
    parts.extend(rule.eqs.iter().map(|(a, b)| SlrFormula::Eq(sub(a), sub(b))));
    parts.extend(rule.neqs.iter().map(|(a, b)| SlrFormula::Neq(sub(a), sub(b))));
    for (&c, (_, ts)) in tree.children[node].iter().zip(&rule.preds) {
        let child_args: Vec<Term> = ts.iter().map(sub).collect();
        parts.push(theta(tree, flat, c, &child_args, notes));
    }
    SlrFormula::exists_all(&ys, SlrFormula::star_all(parts))
}

/// Derivation-size bound N(s): every satisfied predicate atom of `sid` on
/// `s` has a derivation with at most this many nodes. It counts the
/// tuple-consuming part of a reduced derivation, the runs of non-consuming
/// nodes above it and the smallest relation-free subtrees hanging off it,
/// and is capped by the largest unfolding tree when `sid` is not recursive.
pub fn derivation_size_bound(s: &Structure, sid: &Sid) -> usize {
    Analysis::new(sid, s).size_bound(s.num_tuples())
}

/// Whether some reduced unfolding tree of `pred(args)`, which has at most
/// N(s) nodes, has a characteristic formula satisfied by `(s, store)`.
pub fn oracle_check(s: &Structure, store: &Store, pred: &str, args: &[Term], sid: &Sid) -> Result<bool, UnfoldingError> {
    if !sid.predicates().contains(pred) {
        return Err(SlrError::UnknownPredicate(pred.to_string()).into());
    }
    let analysis = Analysis::new(sid, s);
    for tree in analysis.trees(pred, s.num_tuples()) {
        let theta = characteristic_formula(&tree, pred, args, sid)?;
        if satisfies_predicate_free(s, store, &theta.formula)? {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Exhaustive variant of [`oracle_check`] over all unfolding trees with at
/// most `max_nodes` nodes.
pub fn oracle_check_bounded(s: &Structure, store: &Store, pred: &str, args: &[Term], sid: &Sid, max_nodes: usize) -> Result<bool, UnfoldingError> {
    let trees = enumerate_unfolding_trees(pred, sid, max_nodes)?.with_relation_budget(s.num_tuples());
    for tree in trees {
        let theta = characteristic_formula(&tree, pred, args, sid)?;
        if satisfies_predicate_free(s, store, &theta.formula)? {
            return Ok(true);
        }
    }
    Ok(false)
}

#[derive(Default)]
struct Flat {
    rels: Vec<(String, Vec<Term>)>,
    eqs: Vec<(Term, Term)>,
    neqs: Vec<(Term, Term)>,
}

fn collect(f: &SlrFormula, out: &mut Flat) -> Result<(), UnfoldingError> {
    match f {
        SlrFormula::Emp => {}
        SlrFormula::Eq(a, b) => out.eqs.push((a.clone(), b.clone())),
        SlrFormula::Neq(a, b) => out.neqs.push((a.clone(), b.clone())),
        SlrFormula::Rel(r, ts) => out.rels.push((r.clone(), ts.clone())),
        SlrFormula::Pred(p, _) => return Err(UnfoldingError::InvalidTree(format!("predicate atom {p} in a characteristic formula"))),
        SlrFormula::Star(a, b) => {
            collect(a, out)?;
            collect(b, out)?;
        }
        SlrFormula::Exists(_, a) => collect(a, out)?,
    }
    Ok(())
}

/// Satisfaction of a predicate-free formula whose bound variables are
/// pairwise distinct and distinct from its free variables.
pub fn satisfies_predicate_free(s: &Structure, store: &Store, f: &SlrFormula) -> Result<bool, UnfoldingError> {
    let mut flat = Flat::default();
    collect(f, &mut flat)?;
    let bound: Vec<String> = bound_vars(f);
    let mut env: BTreeMap<String, Elem> = BTreeMap::new();
    for t in flat.rels.iter().flat_map(|(_, ts)| ts).chain(flat.eqs.iter().chain(&flat.neqs).flat_map(|(a, b)| [a, b])) {
        match t {
            Term::Const(c) => {
                s.constant(c).ok_or_else(|| SlrError::UnknownConstant(c.clone()))?;
            }
            Term::Var(v) if !bound.contains(v) => {
                env.insert(v.clone(), store.get(v).ok_or_else(|| SlrError::UnboundVariable(v.clone()))?);
            }
            Term::Var(_) => {}
        }
    }
    let tuples = s.all_tuples();
    if tuples.len() != flat.rels.len() {
        return Ok(false);
    }
    let mut used = vec![false; tuples.len()];
    Ok(match_rels(s, &flat, &tuples, 0, &mut used, &mut env))
}

fn bound_vars(f: &SlrFormula) -> Vec<String> {
    match f {
        SlrFormula::Exists(x, a) => {
            let mut v = bound_vars(a);
            v.push(x.clone());
            v
        }
        SlrFormula::Star(a, b) => {
            let mut v = bound_vars(a);
            v.extend(bound_vars(b));
            v
        }
        _ => Vec::new(),
    }
}

fn value(s: &Structure, env: &BTreeMap<String, Elem>, t: &Term) -> Option<Elem> {
    match t {
        Term::Var(v) => env.get(v).copied(),
        Term::Const(c) => s.constant(c),
    }
}

fn match_rels(s: &Structure, flat: &Flat, tuples: &[(String, Vec<Elem>)], i: usize, used: &mut [bool], env: &mut BTreeMap<String, Elem>) -> bool {
    if i == flat.rels.len() {
        return pure_holds(s, flat, env);
    }
    let (r, ts) = &flat.rels[i];
    for (j, (name, tuple)) in tuples.iter().enumerate() {
        if used[j] || name != r || tuple.len() != ts.len() {
            continue;
        }
        let mut added = Vec::new();
        let mut ok = true;
        for (t, &e) in ts.iter().zip(tuple) {
            match value(s, env, t) {
                Some(v) if v != e => {
                    ok = false;
                    break;
                }
                Some(_) => {}
                None => {
                    let v = t.name().to_string();
                    env.insert(v.clone(), e);
                    added.push(v);
                }
            }
        }
        if ok {
            used[j] = true;
            if match_rels(s, flat, tuples, i + 1, used, env) {
                return true;
            }
            used[j] = false;
        }
        for v in added {
            env.remove(&v);
        }
    }
    false
}

/// Equalities and disequalities once relation atoms are matched; unbound
/// variables range over an infinite universe.
fn pure_holds(s: &Structure, flat: &Flat, env: &BTreeMap<String, Elem>) -> bool {
    // Classes of unbound variables, each optionally pinned to a value.
    let mut parent: BTreeMap<String, String> = BTreeMap::new();
    fn find(parent: &mut BTreeMap<String, String>, x: &str) -> String {
        let p = parent.get(x).cloned().unwrap_or_else(|| x.to_string());
        if p == x {
            return p;
        }
        let r = find(parent, &p);
        parent.insert(x.to_string(), r.clone());
        r
    }
    let mut pinned: BTreeMap<String, Elem> = BTreeMap::new();
    for (a, b) in &flat.eqs {
        match (value(s, env, a), value(s, env, b)) {
            (Some(x), Some(y)) if x != y => return false,
            (Some(_), Some(_)) => {}
            (Some(x), None) | (None, Some(x)) => {
                let v = if value(s, env, a).is_none() { a } else { b };
                let r = find(&mut parent, v.name());
                if pinned.get(&r).is_some_and(|&y| y != x) {
                    return false;
                }
                pinned.insert(r, x);
            }
            (None, None) => {
                let (ra, rb) = (find(&mut parent, a.name()), find(&mut parent, b.name()));
                if ra != rb {
                    match (pinned.get(&ra).copied(), pinned.get(&rb).copied()) {
                        (Some(x), Some(y)) if x != y => return false,
                        (Some(x), _) | (_, Some(x)) => {
                            pinned.insert(rb.clone(), x);
                        }
                        _ => {}
                    }
                    parent.insert(ra, rb);
                }
            }
        }
    }
    let mut resolve = |t: &Term| -> Result<Elem, String> {
        match value(s, env, t) {
            Some(v) => Ok(v),
            None => {
                let r = find(&mut parent, t.name());
                pinned.get(&r).copied().ok_or(r)
            }
        }
    };
    flat.neqs.iter().all(|(a, b)| resolve(a) != resolve(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slr::{check_slr, parse_sid, parse_sid_with, parse_slr_with, ParseContext};

    const CHAIN: &str = "Chain(x, y) <- exists z . C(x) * I(x, z) * Chain(z, y) ;
        Chain(x, y) <- emp * x = y ;";
    const RING: &str = "Ring() <- exists x y . I(x, y) * Chain(y, x) ;
        Chain(x, y) <- exists z . C(x) * I(x, z) * Chain(z, y) ;
        Chain(x, y) <- emp * x = y ;";

    fn st(text: &str) -> Structure {
        Structure::parse(text).unwrap()
    }

    #[test]
    fn chain_spine_trees() {
        let sid = parse_sid(CHAIN).unwrap();
        let trees: Vec<_> = enumerate_unfolding_trees("Chain", &sid, 3).unwrap().collect();
        let sizes: Vec<usize> = trees.iter().map(|t| t.len()).collect();
        assert_eq!(sizes, vec![3, 2, 1]);
        for t in &trees {
            t.validate("Chain", &sid).unwrap();
        }
        assert_eq!(trees[2].labels, vec![1]);
    }

    #[test]
    fn single_rule_and_missing_rules() {
        let mut sid = parse_sid_with("A() <- R(c1) ;", &ParseContext::new().with_constants(["c1"])).unwrap();
        sid.rules.push(crate::slr::Rule::new("B", &[], SlrFormula::Pred("Q".into(), vec![])));
        assert_eq!(enumerate_unfolding_trees("A", &sid, 5).unwrap().count(), 1);
        assert_eq!(enumerate_unfolding_trees("B", &sid, 5).unwrap().count(), 0);
        assert_eq!(enumerate_unfolding_trees("Q", &sid, 5).unwrap().count(), 0);
        assert!(matches!(enumerate_unfolding_trees("Z", &sid, 5), Err(UnfoldingError::Slr(SlrError::UnknownPredicate(_)))));
    }

    #[test]
    fn branching_trees_are_distinct() {
        let sid = parse_sid("A(x) <- A(x) * A(x) ; A(x) <- R(x) ;").unwrap();
        // Full binary trees with at most 5 nodes: 1 + 1 + 2.
        let trees: Vec<_> = enumerate_unfolding_trees("A", &sid, 5).unwrap().collect();
        assert_eq!(trees.len(), 4);
        let unique: std::collections::BTreeSet<String> = trees.iter().map(|t| t.to_string()).collect();
        assert_eq!(unique.len(), 4);
    }

    #[test]
    fn theta_of_one_node() {
        let sid = parse_sid_with("A() <- R(c1) ;", &ParseContext::new().with_constants(["c1"])).unwrap();
        let tree = enumerate_unfolding_trees("A", &sid, 1).unwrap().next().unwrap();
        let th = characteristic_formula(&tree, "A", &[], &sid).unwrap();
        assert_eq!(th.formula.to_string(), "R(c1)");
        assert_eq!(th.annotations, vec![0]);
    }

    #[test]
    fn theta_of_ring_unfolding() {
        let sid = parse_sid(RING).unwrap();
        let tree = UnfoldingTree { labels: vec![0, 1, 2], children: vec![vec![1], vec![2], vec![]] };
        let th = characteristic_formula(&tree, "Ring", &[], &sid).unwrap();
        assert!(th.formula.is_predicate_free());
        assert_eq!(
            th.formula.to_string(),
            "exists y_0_0 y_0_1 . I(y_0_0, y_0_1) * (exists y_1_0 . C(y_0_1) * I(y_0_1, y_1_0) * y_1_0 = y_0_0)"
        );
        assert_eq!(th.annotations, vec![0, 1, 1]);
        let bad = UnfoldingTree { labels: vec![0, 2], children: vec![vec![], vec![]] };
        assert!(matches!(characteristic_formula(&bad, "Ring", &[], &sid), Err(UnfoldingError::InvalidTree(_))));
    }

    #[test]
    fn oracle_agrees_with_checker_on_rings() {
        let sid = parse_sid(RING).unwrap();
        let cases = [
            ("rel C 1\nrel I 2\ntuple C 2\ntuple I 1 2\ntuple I 2 1", true),
            ("rel C 1\nrel I 2\ntuple C 2\ntuple C 3\ntuple I 1 2\ntuple I 2 3\ntuple I 3 1", true),
            ("rel C 1\nrel I 2\ntuple I 1 2\ntuple I 2 1", false),
            ("rel C 1\nrel I 2\ntuple C 1\ntuple I 1 1", false),
        ];
        for (text, expected) in cases {
            let s = st(text);
            let goal = parse_slr_with("Ring()", &ParseContext::new().with_sid(&sid)).unwrap();
            assert_eq!(check_slr(&s, &Store::new(), &goal, &sid).unwrap(), expected, "{text}");
            assert_eq!(oracle_check(&s, &Store::new(), "Ring", &[], &sid).unwrap(), expected, "{text}");
        }
    }

    #[test]
    fn pure_constraints() {
        let s = st("rel R 1\ntuple R 1");
        let ctx = ParseContext::new().with_signature(s.signature());
        let f = |t: &str| parse_slr_with(t, &ctx).unwrap();
        let store = Store::from_pairs(&[("x", 1)]);
        assert!(satisfies_predicate_free(&s, &store, &f("exists y . R(x) * y != x")).unwrap());
        assert!(!satisfies_predicate_free(&s, &store, &f("exists y . R(x) * y != y")).unwrap());
        assert!(!satisfies_predicate_free(&s, &store, &f("exists y z . R(x) * y = x * z = y * z != x")).unwrap());
        assert!(!satisfies_predicate_free(&s, &store, &f("R(x) * R(x)")).unwrap());
        assert!(!satisfies_predicate_free(&s, &store, &f("emp")).unwrap());
    }
}
