//! Reduced unfolding trees. Every satisfied predicate atom has a
//! derivation of the following shape, obtained from a smallest one:
//!
//! * a subtree deriving the empty structure is a smallest relation-free
//!   derivation for the equality pattern of its arguments, so it comes from
//!   a finite catalog;
//! * a run of nodes that consume no tuple and have exactly one
//!   tuple-consuming subtree below them never repeats a predicate with the
//!   same arguments up to renaming values outside the domain, so its length
//!   is bounded by the number of such argument tuples.
//!
//! The derivation-size bound and the oracle's tree stream both follow.

use std::collections::{BTreeMap, BTreeSet};

use crate::slr::{flatten_rule, FlatRule, Sid, Term};
use crate::structures::{Elem, Structure};

use super::UnfoldingTree;

/// Value class of a term: the value of a constant, an uninterpreted
/// constant, or a value outside the constants numbered by first occurrence.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Cell {
    Const(Elem),
    Unknown(String),
    Fresh(usize),
}

type Pattern = Vec<Cell>;

fn canon(cells: impl IntoIterator<Item = Cell>) -> Pattern {
    let mut seen: Vec<usize> = Vec::new();
    cells
        .into_iter()
        .map(|c| match c {
            Cell::Fresh(i) => Cell::Fresh(seen.iter().position(|&j| j == i).unwrap_or_else(|| {
                seen.push(i);
                seen.len() - 1
            })),
            c => c,
        })
        .collect()
}

fn bell(n: usize) -> usize {
    // Bell triangle.
    let mut row = vec![1usize];
    for _ in 0..n {
        let mut next = vec![*row.last().expect("nonempty row")];
        for &x in &row {
            next.push(next.last().expect("nonempty row").saturating_add(x));
        }
        row = next;
    }
    row[0]
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1usize, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Argument tuples of length `k` over `d` domain values, up to renaming
/// the values outside the domain.
fn canonical_tuples(k: usize, d: usize) -> usize {
    (0..=k).fold(0usize, |acc, j| acc.saturating_add(binomial(k, j).saturating_mul(d.saturating_pow((k - j) as u32)).saturating_mul(bell(j))))
}

/// Relation-free rules of `flat` with, per value-class assignment of their
/// variables, the head pattern and the child keys.
type Expansions = Vec<(usize, Pattern, Vec<(String, Pattern)>)>;

pub(crate) struct Analysis {
    pub(crate) flat: Vec<FlatRule>,
    by_head: BTreeMap<String, Vec<usize>>,
    /// Catalog of smallest relation-free derivations per predicate, as
    /// preorder rule labels.
    catalog: BTreeMap<String, Vec<Vec<usize>>>,
    e_max: usize,
    chain_limit: usize,
    max_children: usize,
    branching: bool,
    /// Largest derivation when no predicate is recursive.
    acyclic_size: Option<usize>,
}

impl Analysis {
    pub(crate) fn new(sid: &Sid, s: &Structure) -> Analysis {
        let flat: Vec<FlatRule> = sid.rules.iter().map(flatten_rule).collect();
        let mut by_head: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, r) in flat.iter().enumerate() {
            by_head.entry(r.head.clone()).or_default().push(i);
        }
        let class = |c: &str| s.constant(c).map(Cell::Const).unwrap_or_else(|| Cell::Unknown(c.to_string()));
        let classes: Vec<Cell> = sid.constants().iter().map(|c| class(c)).collect::<BTreeSet<_>>().into_iter().collect();

        let expansions = relation_free_expansions(&flat, &classes, &class);
        let mut best: BTreeMap<(String, Pattern), (usize, Vec<usize>)> = BTreeMap::new();
        loop {
            let mut changed = false;
            for (r, head, children) in &expansions {
                let mut labels = vec![*r];
                let mut size = 1usize;
                let mut ok = true;
                for key in children {
                    match best.get(key) {
                        Some((n, l)) => {
                            size += n;
                            labels.extend(l);
                        }
                        None => {
                            ok = false;
                            break;
                        }
                    }
                }
                let key = (flat[*r].head.clone(), head.clone());
                if ok && best.get(&key).is_none_or(|(n, _)| size < *n) {
                    best.insert(key, (size, labels));
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let mut catalog: BTreeMap<String, Vec<Vec<usize>>> = BTreeMap::new();
        for ((p, _), (_, labels)) in &best {
            let list = catalog.entry(p.clone()).or_default();
            if !list.contains(labels) {
                list.push(labels.clone());
            }
        }
        let e_max = best.values().map(|(n, _)| *n).max().unwrap_or(0);

        // Runs of non-consuming nodes follow relation-free rules with
        // predicate atoms.
        let chain_rules: Vec<&FlatRule> = flat.iter().filter(|r| r.rels.is_empty() && !r.preds.is_empty()).collect();
        let chain_heads: BTreeSet<&str> = chain_rules.iter().map(|r| r.head.as_str()).collect();
        let mut graph: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for r in &chain_rules {
            graph.entry(r.head.as_str()).or_default().extend(r.preds.iter().map(|(q, _)| q.as_str()).filter(|q| chain_heads.contains(q)));
        }
        let d = s.domain().len();
        let arities = sid.arities();
        let chain_limit = match longest_path(&graph, &chain_heads) {
            Some(n) => n,
            None => chain_heads.iter().map(|p| canonical_tuples(arities[*p], d)).fold(0usize, usize::saturating_add),
        };
        let mut calls: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for r in &flat {
            calls.entry(r.head.as_str()).or_default().extend(r.preds.iter().map(|(q, _)| q.as_str()));
        }
        let heads: BTreeSet<&str> = flat.iter().map(|r| r.head.as_str()).collect();
        let acyclic_size = longest_path(&calls, &heads).map(|_| acyclic_tree_size(&flat, &by_head));
        Analysis {
            max_children: flat.iter().map(|r| r.preds.len()).max().unwrap_or(0),
            branching: chain_rules.iter().any(|r| r.preds.len() >= 2),
            flat,
            by_head,
            catalog,
            e_max,
            chain_limit,
            acyclic_size,
        }
    }

    /// Upper bound on the size of a smallest derivation consuming `t` tuples.
    pub(crate) fn size_bound(&self, t: usize) -> usize {
        let reduced = if t == 0 {
            self.e_max.max(1)
        } else {
            let branching = if self.branching { t - 1 } else { 0 };
            let anchors = t + branching;
            let productive = anchors.saturating_add(anchors.saturating_mul(self.chain_limit));
            let empty = (self.max_children.saturating_mul(productive) + 1).saturating_sub(productive);
            productive.saturating_add(empty.saturating_mul(self.e_max))
        };
        self.acyclic_size.map_or(reduced, |a| a.min(reduced))
    }

    /// Reduced unfolding trees of `pred` consuming exactly `t` relation atoms.
    pub(crate) fn trees(&self, pred: &str, t: usize) -> ReducedTrees<'_> {
        let root = if t == 0 { Pending::Empty(pred.to_string()) } else { Pending::Productive(pred.to_string(), 0) };
        ReducedTrees { a: self, t, stack: vec![(Vec::new(), vec![root], 0)] }
    }
}

/// Number of nodes on a longest path, `None` on a cycle.
fn longest_path(graph: &BTreeMap<&str, BTreeSet<&str>>, nodes: &BTreeSet<&str>) -> Option<usize> {
    fn visit<'a>(v: &'a str, g: &BTreeMap<&'a str, BTreeSet<&'a str>>, memo: &mut BTreeMap<&'a str, Option<usize>>) -> Option<usize> {
        match memo.get(v) {
            Some(Some(n)) => return Some(*n),
            Some(None) => return None,
            None => {}
        }
        memo.insert(v, None);
        let mut best = 0;
        for &w in g.get(v).into_iter().flatten() {
            best = best.max(visit(w, g, memo)?);
        }
        memo.insert(v, Some(best + 1));
        Some(best + 1)
    }
    let mut memo = BTreeMap::new();
    let mut best = 0;
    for &v in nodes {
        best = best.max(visit(v, graph, &mut memo)?);
    }
    Some(best)
}

/// Largest unfolding tree of a non-recursive SID.
fn acyclic_tree_size(flat: &[FlatRule], by_head: &BTreeMap<String, Vec<usize>>) -> usize {
    fn size(p: &str, flat: &[FlatRule], by_head: &BTreeMap<String, Vec<usize>>, memo: &mut BTreeMap<String, usize>) -> usize {
        if let Some(&n) = memo.get(p) {
            return n;
        }
        let n = by_head
            .get(p)
            .into_iter()
            .flatten()
            .map(|&r| flat[r].preds.iter().fold(1usize, |acc, (q, _)| acc.saturating_add(size(q, flat, by_head, memo))))
            .max()
            .unwrap_or(0);
        memo.insert(p.to_string(), n);
        n
    }
    let mut memo = BTreeMap::new();
    by_head.keys().map(|p| size(p, flat, by_head, &mut memo)).max().unwrap_or(0)
}

/// Every value-class assignment of each relation-free rule that satisfies
/// its equalities and disequalities.
fn relation_free_expansions(flat: &[FlatRule], classes: &[Cell], class: &dyn Fn(&str) -> Cell) -> Expansions {
    let mut out = Vec::new();
    for (r, rule) in flat.iter().enumerate().filter(|(_, r)| r.rels.is_empty()) {
        let mut vars: Vec<&str> = rule.params.iter().map(String::as_str).collect();
        let mentioned = rule.eqs.iter().chain(&rule.neqs).flat_map(|(a, b)| [a, b]).chain(rule.preds.iter().flat_map(|(_, ts)| ts));
        for t in mentioned {
            if let Term::Var(v) = t {
                if !vars.contains(&v.as_str()) {
                    vars.push(v);
                }
            }
        }
        let mut assign: Vec<Cell> = Vec::with_capacity(vars.len());
        assignments(&vars, classes, &mut assign, 0, &mut |assign| {
            let cell = |t: &Term| match t {
                Term::Var(v) => assign[vars.iter().position(|w| w == v).expect("collected variable")].clone(),
                Term::Const(c) => class(c),
            };
            if rule.eqs.iter().any(|(a, b)| cell(a) != cell(b)) || rule.neqs.iter().any(|(a, b)| cell(a) == cell(b)) {
                return;
            }
            let head = canon(assign[..rule.params.len()].iter().cloned());
            let children = rule.preds.iter().map(|(q, ts)| (q.clone(), canon(ts.iter().map(cell)))).collect();
            out.push((r, head, children));
        });
    }
    out
}

fn assignments(vars: &[&str], classes: &[Cell], assign: &mut Vec<Cell>, fresh: usize, f: &mut dyn FnMut(&[Cell])) {
    if assign.len() == vars.len() {
        f(assign);
        return;
    }
    for c in classes {
        assign.push(c.clone());
        assignments(vars, classes, assign, fresh, f);
        assign.pop();
    }
    for i in 0..=fresh {
        assign.push(Cell::Fresh(i));
        assignments(vars, classes, assign, fresh.max(i + 1), f);
        assign.pop();
    }
}

#[derive(Clone, Debug)]
enum Pending {
    /// A subtree deriving the empty structure.
    Empty(String),
    /// A subtree consuming a tuple, below a run of the given length.
    Productive(String, usize),
}

/// Depth-first stream of reduced unfolding trees.
pub(crate) struct ReducedTrees<'a> {
    a: &'a Analysis,
    t: usize,
    stack: Vec<(Vec<usize>, Vec<Pending>, usize)>,
}

impl Iterator for ReducedTrees<'_> {
    type Item = UnfoldingTree;

    fn next(&mut self) -> Option<UnfoldingTree> {
        let a = self.a;
        while let Some((labels, mut pending, used)) = self.stack.pop() {
            let Some(item) = pending.pop() else {
                if used == self.t {
                    return Some(UnfoldingTree::from_preorder(labels, &a.flat));
                }
                continue;
            };
            match item {
                Pending::Empty(p) => {
                    for tree in a.catalog.get(&p).into_iter().flatten().rev() {
                        let mut l = labels.clone();
                        l.extend(tree);
                        self.stack.push((l, pending.clone(), used));
                    }
                }
                Pending::Productive(p, run) => {
                    let waiting = pending.iter().filter(|x| matches!(x, Pending::Productive(..))).count();
                    for &r in a.by_head.get(&p).into_iter().flatten().rev() {
                        let rule = &a.flat[r];
                        let consuming = !rule.rels.is_empty();
                        let now = used + rule.rels.len();
                        let k = rule.preds.len();
                        for mask in (0u32..1 << k).rev() {
                            let productive = mask.count_ones() as usize;
                            if !consuming && productive == 0 {
                                continue;
                            }
                            // Each productive subtree consumes at least one tuple.
                            if now + waiting + productive > self.t {
                                continue;
                            }
                            let in_run = !consuming && productive == 1;
                            if in_run && run + 1 > a.chain_limit {
                                continue;
                            }
                            let below = if in_run { run + 1 } else { 0 };
                            let mut next = pending.clone();
                            for (i, (q, _)) in rule.preds.iter().enumerate().rev() {
                                next.push(if mask >> i & 1 == 1 { Pending::Productive(q.clone(), below) } else { Pending::Empty(q.clone()) });
                            }
                            let mut l = labels.clone();
                            l.push(r);
                            self.stack.push((l, next, now));
                        }
                    }
                }
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slr::parse_sid;

    fn empty() -> Structure {
        Structure::parse("rel P 1\nrel E 2").unwrap()
    }

    #[test]
    fn counting_helpers() {
        assert_eq!((0..6).map(bell).collect::<Vec<_>>(), vec![1, 1, 2, 5, 15, 52]);
        assert_eq!(canonical_tuples(0, 4), 1);
        assert_eq!(canonical_tuples(1, 4), 5);
        assert_eq!(canonical_tuples(2, 4), 26);
        assert_eq!(canon([Cell::Fresh(7), Cell::Const(1), Cell::Fresh(3), Cell::Fresh(7)]), vec![Cell::Fresh(0), Cell::Const(1), Cell::Fresh(1), Cell::Fresh(0)]);
    }

    #[test]
    fn smallest_empty_derivations_depend_on_the_pattern() {
        let sid = parse_sid("B(x, y) <- emp * x = y ; B(x, y) <- exists z . B(x, z) * B(z, y) ;").unwrap();
        let a = Analysis::new(&sid, &empty());
        // B(u, u) in one node; B(u, v) has no relation-free derivation.
        assert_eq!(a.catalog["B"], vec![vec![0]]);
        assert_eq!(a.e_max, 1);
    }

    #[test]
    fn branching_needs_more_than_the_tuple_count() {
        let sid = parse_sid("A() <- exists y . P(y) * A() * A() ; A() <- emp ;").unwrap();
        let s = Structure::parse("rel P 1\ntuple P 1\ntuple P 2").unwrap();
        let a = Analysis::new(&sid, &s);
        assert!(a.size_bound(2) >= 5);
        let sizes: Vec<usize> = a.trees("A", 2).map(|t| t.len()).collect();
        assert!(sizes.contains(&5), "{sizes:?}");
        for t in a.trees("A", 2) {
            t.validate("A", &sid).unwrap();
        }
    }

    #[test]
    fn acyclic_sids_use_the_largest_tree() {
        let sid = parse_sid("A() <- B() * B() ; B() <- emp ; B() <- exists x . P(x) ;").unwrap();
        let a = Analysis::new(&sid, &empty());
        assert_eq!(a.acyclic_size, Some(3));
        assert_eq!(a.size_bound(50), 3);
    }

    #[test]
    fn runs_of_relation_free_nodes() {
        let sid = parse_sid("A(x) <- B(x) ; B(x) <- A(x) ; A(x) <- P(x) ;").unwrap();
        let s = Structure::parse("rel P 1\ntuple P 1").unwrap();
        let a = Analysis::new(&sid, &s);
        // Cycle through unary predicates over one domain value: 2 tuples each.
        assert_eq!(a.chain_limit, 4);
        assert!(a.trees("A", 1).any(|t| t.len() == 1));
        assert!(a.trees("A", 1).all(|t| t.len() <= 5));
    }
}
