//! Tree decompositions: validation, exact treewidth and reduced form.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::structures::{fresh_ids_avoiding, Elem, Structure};

pub type NodeId = usize;

/// Default cap on |Dom| for [`exact_treewidth`].
pub const DEFAULT_TREEWIDTH_CAP: usize = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecompositionError {
    #[error("domain of size {size} exceeds the cap {cap}")]
    TooLarge { size: usize, cap: usize },
    #[error("invalid input decomposition: {0}")]
    InvalidInput(Violation),
    #[error("a reduced decomposition needs at least one tuple")]
    NoTuples,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Why a candidate decomposition is rejected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NotATree(String),
    /// Clause 1: some tuple is not covered by any bag.
    Uncovered { rel: String, tuple: Vec<Elem> },
    /// Clause 2: the nodes containing an element are empty or disconnected.
    Disconnected { elem: Elem },
}

impl Violation {
    pub fn clause(&self) -> usize {
        match self {
            Violation::NotATree(_) => 0,
            Violation::Uncovered { .. } => 1,
            Violation::Disconnected { .. } => 2,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NotATree(m) => write!(f, "not a rooted tree: {m}"),
            Violation::Uncovered { rel, tuple } => write!(f, "clause 1: {rel}{tuple:?} not covered"),
            Violation::Disconnected { elem } => write!(f, "clause 2: element {elem} has empty or disconnected bags"),
        }
    }
}

/// Rooted tree with a bag per node. Children are kept in insertion order.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct TreeDecomposition {
    pub root: NodeId,
    pub bags: BTreeMap<NodeId, BTreeSet<Elem>>,
    pub children: BTreeMap<NodeId, Vec<NodeId>>,
}

impl TreeDecomposition {
    pub fn single(root: NodeId, bag: BTreeSet<Elem>) -> Self {
        TreeDecomposition { root, bags: BTreeMap::from([(root, bag)]), children: BTreeMap::new() }
    }

    pub fn add_child(&mut self, parent: NodeId, child: NodeId, bag: BTreeSet<Elem>) {
        self.bags.insert(child, bag);
        self.children.entry(parent).or_default().push(child);
    }

    pub fn children_of(&self, n: NodeId) -> &[NodeId] {
        self.children.get(&n).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.bags.keys().copied()
    }

    pub fn bag(&self, n: NodeId) -> &BTreeSet<Elem> {
        &self.bags[&n]
    }

    pub fn width(&self) -> usize {
        self.bags.values().map(BTreeSet::len).max().unwrap_or(0).saturating_sub(1)
    }

    pub fn is_leaf(&self, n: NodeId) -> bool {
        self.children_of(n).is_empty()
    }

    pub fn parents(&self) -> BTreeMap<NodeId, NodeId> {
        let mut p = BTreeMap::new();
        for (&n, cs) in &self.children {
            for &c in cs {
                p.insert(c, n);
            }
        }
        p
    }

    /// Checks the rooted-tree shape: unique parents, no cycles, all reachable.
    pub fn check_tree(&self) -> Result<(), Violation> {
        if !self.bags.contains_key(&self.root) {
            return Err(Violation::NotATree(format!("root {} has no bag", self.root)));
        }
        let mut seen = BTreeSet::new();
        let mut stack = vec![self.root];
        seen.insert(self.root);
        while let Some(n) = stack.pop() {
            for &c in self.children_of(n) {
                if !self.bags.contains_key(&c) {
                    return Err(Violation::NotATree(format!("node {c} has no bag")));
                }
                if !seen.insert(c) {
                    return Err(Violation::NotATree(format!("node {c} reached twice")));
                }
                stack.push(c);
            }
        }
        if seen.len() != self.bags.len() {
            return Err(Violation::NotATree("unreachable nodes".into()));
        }
        if self.children.keys().any(|n| !self.bags.contains_key(n)) {
            return Err(Violation::NotATree("edge from unknown node".into()));
        }
        Ok(())
    }

    /// Pre-order node list.
    pub fn preorder(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![self.root];
        while let Some(n) = stack.pop() {
            out.push(n);
            for &c in self.children_of(n).iter().rev() {
                stack.push(c);
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<TreeDecomposition, DecompositionError> {
        let mut td = TreeDecomposition::default();
        let mut root = None;
        let err = |line: usize, msg: &str| DecompositionError::Parse { line, msg: msg.to_string() };
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let words: Vec<&str> = content.split_whitespace().collect();
            let nums: Result<Vec<u64>, _> = words[1..].iter().map(|w| w.parse::<u64>()).collect();
            let nums = nums.map_err(|_| err(line, "expected numbers"))?;
            match (words[0], nums.len()) {
                ("node", 1) => {
                    if td.bags.insert(nums[0] as NodeId, BTreeSet::new()).is_some() {
                        return Err(err(line, "duplicate node"));
                    }
                }
                ("edge", 2) => {
                    let (p, c) = (nums[0] as NodeId, nums[1] as NodeId);
                    if !td.bags.contains_key(&p) || !td.bags.contains_key(&c) {
                        return Err(err(line, "edge between undeclared nodes"));
                    }
                    td.children.entry(p).or_default().push(c);
                }
                ("root", 1) => {
                    if root.replace(nums[0] as NodeId).is_some() {
                        return Err(err(line, "duplicate root"));
                    }
                }
                ("bag", n) if n >= 1 => {
                    let bag = td.bags.get_mut(&(nums[0] as NodeId)).ok_or_else(|| err(line, "bag of undeclared node"))?;
                    for &e in &nums[1..] {
                        let e = Elem::try_from(e).map_err(|_| err(line, "element out of range"))?;
                        bag.insert(e);
                    }
                }
                _ => return Err(err(line, "expected node/edge/root/bag")),
            }
        }
        td.root = root.ok_or_else(|| err(0, "missing root"))?;
        td.check_tree().map_err(|v| err(0, &v.to_string()))?;
        Ok(td)
    }
}

impl fmt::Display for TreeDecomposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for n in self.bags.keys() {
            writeln!(f, "node {n}")?;
        }
        for n in self.preorder() {
            for c in self.children_of(n) {
                writeln!(f, "edge {n} {c}")?;
            }
        }
        writeln!(f, "root {}", self.root)?;
        for (n, bag) in &self.bags {
            write!(f, "bag {n}")?;
            for e in bag {
                write!(f, " {e}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Checks both clauses of a tree decomposition; returns the first violation.
pub fn validate(td: &TreeDecomposition, s: &Structure) -> Result<(), Violation> {
    td.check_tree()?;
    for (rel, tuple) in s.all_tuples() {
        if !td.bags.values().any(|b| tuple.iter().all(|e| b.contains(e))) {
            return Err(Violation::Uncovered { rel, tuple });
        }
    }
    let parents = td.parents();
    for u in s.domain() {
        let holders: Vec<NodeId> = td.bags.iter().filter(|(_, b)| b.contains(&u)).map(|(&n, _)| n).collect();
        // Connected iff exactly one holder has its parent outside the set.
        let tops = holders
            .iter()
            .filter(|n| parents.get(n).is_none_or(|p| !td.bags[p].contains(&u)))
            .count();
        if tops != 1 {
            return Err(Violation::Disconnected { elem: u });
        }
    }
    Ok(())
}

/// Gaifman graph adjacency over Dom(s), indexed by position in the domain.
fn gaifman(s: &Structure) -> (Vec<Elem>, Vec<u32>) {
    let dom: Vec<Elem> = s.domain().into_iter().collect();
    let idx: BTreeMap<Elem, usize> = dom.iter().enumerate().map(|(i, &e)| (e, i)).collect();
    let mut adj = vec![0u32; dom.len()];
    for (_, t) in s.all_tuples() {
        for &a in &t {
            for &b in &t {
                if a != b {
                    adj[idx[&a]] |= 1 << idx[&b];
                }
            }
        }
    }
    (dom, adj)
}

/// Vertices outside `eliminated ∪ {v}` reachable from `v` through `eliminated`.
fn elimination_degree(adj: &[u32], eliminated: u32, v: usize) -> u32 {
    let mut visited = 1u32 << v;
    let mut frontier = 1u32 << v;
    let mut outside = 0u32;
    while frontier != 0 {
        let w = frontier.trailing_zeros() as usize;
        frontier &= frontier - 1;
        let nb = adj[w] & !visited;
        visited |= nb;
        outside |= nb & !eliminated;
        frontier |= nb & eliminated;
    }
    outside
}

/// Exact treewidth with a witness decomposition, for |Dom| up to `cap`.
pub fn exact_treewidth_with_cap(s: &Structure, cap: usize) -> Result<(usize, TreeDecomposition), DecompositionError> {
    let (dom, adj) = gaifman(s);
    let n = dom.len();
    if n > cap || n > 30 {
        return Err(DecompositionError::TooLarge { size: n, cap: cap.min(30) });
    }
    if n == 0 {
        return Ok((0, TreeDecomposition::single(0, BTreeSet::new())));
    }
    for w in 0..n {
        let mut memo = vec![None; 1usize << n];
        if let Some(order) = elimination_order(&adj, n, w as u32, (1u32 << n) - 1, &mut memo) {
            let td = decomposition_from_order(&dom, &adj, &order);
            debug_assert_eq!(td.width(), w);
            return Ok((w, td));
        }
    }
    unreachable!("width n-1 always admits an elimination order")
}

pub fn exact_treewidth(s: &Structure) -> Result<(usize, TreeDecomposition), DecompositionError> {
    exact_treewidth_with_cap(s, DEFAULT_TREEWIDTH_CAP)
}

/// Searches for an order eliminating `remaining` (last vertex eliminated first
/// in the returned list is the first one eliminated) with degrees ≤ w.
fn elimination_order(adj: &[u32], n: usize, w: u32, remaining: u32, memo: &mut [Option<bool>]) -> Option<Vec<usize>> {
    let eliminated = ((1u32 << n) - 1) & !remaining;
    if remaining == 0 {
        return Some(Vec::new());
    }
    if memo[eliminated as usize] == Some(false) {
        return None;
    }
    let mut rest = remaining;
    while rest != 0 {
        let v = rest.trailing_zeros() as usize;
        rest &= rest - 1;
        if elimination_degree(adj, eliminated, v).count_ones() <= w {
            if let Some(mut order) = elimination_order(adj, n, w, remaining & !(1 << v), memo) {
                order.insert(0, v);
                return Some(order);
            }
        }
    }
    memo[eliminated as usize] = Some(false);
    None
}

fn decomposition_from_order(dom: &[Elem], adj: &[u32], order: &[usize]) -> TreeDecomposition {
    let n = order.len();
    let mut position = vec![0; n];
    for (i, &v) in order.iter().enumerate() {
        position[v] = i;
    }
    let mut bags_idx = Vec::with_capacity(n);
    let mut eliminated = 0u32;
    for &v in order {
        let later = elimination_degree(adj, eliminated, v);
        bags_idx.push((v, later));
        eliminated |= 1 << v;
    }
    let root = n - 1;
    let mut td = TreeDecomposition::single(root, bag_elems(dom, bags_idx[root].0, bags_idx[root].1));
    let mut parent = vec![root; n];
    for (i, &(_, later)) in bags_idx.iter().enumerate().take(n - 1) {
        if later != 0 {
            let mut bits = later;
            let mut first = n;
            while bits != 0 {
                let u = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                first = first.min(position[u]);
            }
            parent[i] = first;
        }
    }
    // Insert nodes in reverse elimination order so parents exist first.
    for i in (0..n - 1).rev() {
        let (v, later) = bags_idx[i];
        td.add_child(parent[i], i, bag_elems(dom, v, later));
    }
    td
}

fn bag_elems(dom: &[Elem], v: usize, later: u32) -> BTreeSet<Elem> {
    let mut bag = BTreeSet::from([dom[v]]);
    let mut bits = later;
    while bits != 0 {
        let u = bits.trailing_zeros() as usize;
        bits &= bits - 1;
        bag.insert(dom[u]);
    }
    bag
}

/// A reduced decomposition with its leaf-to-tuple witness bijection.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReducedDecomposition {
    pub td: TreeDecomposition,
    pub witness: BTreeMap<NodeId, (String, Vec<Elem>)>,
    /// Fresh ids introduced to fill bags up to k+1.
    pub padding: BTreeSet<Elem>,
    pub width: usize,
}

/// Rewrites a valid decomposition into reduced form of the same width.
pub fn reduce(td: &TreeDecomposition, s: &Structure) -> Result<ReducedDecomposition, DecompositionError> {
    validate(td, s).map_err(DecompositionError::InvalidInput)?;
    if s.num_tuples() == 0 {
        return Err(DecompositionError::NoTuples);
    }
    let k = td.width();
    let full = k + 1;

    // Fill every bag to k+1: the root with fresh ids, the rest from parents.
    let mut used: BTreeSet<Elem> = s.domain();
    used.extend(td.bags.values().flatten().copied());
    let mut bags = td.bags.clone();
    let root_bag = bags.get_mut(&td.root).expect("root bag");
    let need = full - root_bag.len();
    let padding: BTreeSet<Elem> = fresh_ids_avoiding(&used, need).into_iter().collect();
    root_bag.extend(padding.iter().copied());
    for n in td.preorder() {
        let parent_bag = bags[&n].clone();
        for &c in td.children_of(n) {
            let bag = bags.get_mut(&c).expect("child bag");
            for &e in &parent_bag {
                if bag.len() == full {
                    break;
                }
                bag.insert(e);
            }
        }
    }

    // Each tuple goes to the first covering node in pre-order.
    let order = td.preorder();
    let mut assigned: BTreeMap<NodeId, Vec<(String, Vec<Elem>)>> = BTreeMap::new();
    for (rel, tuple) in s.all_tuples() {
        let n = *order
            .iter()
            .find(|n| tuple.iter().all(|e| bags[n].contains(e)))
            .expect("validated decomposition covers every tuple");
        assigned.entry(n).or_default().push((rel, tuple));
    }

    let mut b = Builder { out: TreeDecomposition::default(), witness: BTreeMap::new(), next: 0 };
    let root = b.build(td, &bags, &assigned, td.root).expect("at least one tuple");
    b.out.root = root;

    // Elements not placed yet (constants outside every tuple) enter through
    // new roots, each swapping one element of the previous root.
    let present: BTreeSet<Elem> = b.out.bags.values().flatten().copied().collect();
    for u in s.domain() {
        if present.contains(&u) {
            continue;
        }
        let mut bag = b.out.bags[&b.out.root].clone();
        let drop = *bag.iter().next().expect("non-empty bag");
        bag.remove(&drop);
        bag.insert(u);
        let id = b.fresh();
        let old = b.out.root;
        b.out.bags.insert(id, bag);
        b.out.children.insert(id, vec![old]);
        b.out.root = id;
    }
    Ok(ReducedDecomposition { td: b.out, witness: b.witness, padding, width: k })
}

struct Builder {
    out: TreeDecomposition,
    witness: BTreeMap<NodeId, (String, Vec<Elem>)>,
    next: NodeId,
}

impl Builder {
    fn fresh(&mut self) -> NodeId {
        self.next += 1;
        self.next - 1
    }

    fn node(&mut self, bag: BTreeSet<Elem>, children: Vec<NodeId>) -> NodeId {
        let id = self.fresh();
        self.out.bags.insert(id, bag);
        if !children.is_empty() {
            self.out.children.insert(id, children);
        }
        id
    }

    /// Builds the reduced subtree for `n`; its root carries bag(n).
    fn build(
        &mut self,
        td: &TreeDecomposition,
        bags: &BTreeMap<NodeId, BTreeSet<Elem>>,
        assigned: &BTreeMap<NodeId, Vec<(String, Vec<Elem>)>>,
        n: NodeId,
    ) -> Option<NodeId> {
        let bag = &bags[&n];
        let mut parts = Vec::new();
        for t in assigned.get(&n).into_iter().flatten() {
            let leaf = self.node(bag.clone(), Vec::new());
            self.witness.insert(leaf, t.clone());
            parts.push(leaf);
        }
        for &c in td.children_of(n) {
            if let Some(sub) = self.build(td, bags, assigned, c) {
                parts.push(self.swap_chain(bag, &bags[&c], sub));
            }
        }
        let mut iter = parts.into_iter();
        let first = iter.next()?;
        Some(iter.fold(first, |acc, p| self.node(bag.clone(), vec![acc, p])))
    }

    /// Chain from `top` down to `sub` (whose bag is `bottom`), one swap per edge.
    fn swap_chain(&mut self, top: &BTreeSet<Elem>, bottom: &BTreeSet<Elem>, sub: NodeId) -> NodeId {
        let outs: Vec<Elem> = top.difference(bottom).copied().collect();
        let ins: Vec<Elem> = bottom.difference(top).copied().collect();
        let mut chain = vec![top.clone()];
        let mut cur = top.clone();
        for (o, i) in outs.iter().zip(&ins).take(outs.len().saturating_sub(1)) {
            cur.remove(o);
            cur.insert(*i);
            chain.push(cur.clone());
        }
        if outs.is_empty() {
            return sub;
        }
        let mut below = sub;
        for bag in chain.into_iter().rev() {
            below = self.node(bag, vec![below]);
        }
        below
    }
}

/// A violated clause of the reduced form, numbered 1 to 6 (0 for validity).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReducedViolation {
    pub clause: usize,
    pub node: Option<NodeId>,
}

/// Checks validity plus the six clauses of the reduced form.
pub fn check_reduced(r: &ReducedDecomposition, s: &Structure) -> Result<(), ReducedViolation> {
    let td = &r.td;
    let fail = |clause, node| Err(ReducedViolation { clause, node });
    if validate(td, s).is_err() {
        return fail(0, None);
    }
    let leaves: BTreeSet<NodeId> = td.nodes().filter(|&n| td.is_leaf(n)).collect();
    let tuples: BTreeSet<(String, Vec<Elem>)> = s.all_tuples().into_iter().collect();
    let witnessed: BTreeSet<(String, Vec<Elem>)> = r.witness.values().cloned().collect();
    if witnessed != tuples {
        return fail(1, None);
    }
    for (n, (_, t)) in &r.witness {
        if !leaves.contains(n) || !t.iter().all(|e| td.bag(*n).contains(e)) {
            return fail(1, Some(*n));
        }
    }
    if r.witness.len() != tuples.len() || leaves.iter().any(|l| !r.witness.contains_key(l)) {
        return fail(2, None);
    }
    for n in td.nodes() {
        let cs = td.children_of(n);
        if cs.len() > 2 {
            return fail(3, Some(n));
        }
        if cs.len() == 2 && cs.iter().any(|c| td.bag(*c) != td.bag(n)) {
            return fail(4, Some(n));
        }
        if cs.len() == 1 {
            let (b, m) = (td.bag(n), cs[0]);
            let bm = td.bag(m);
            let same = b == bm && r.witness.contains_key(&m);
            let swap = b.difference(bm).count() == 1 && bm.difference(b).count() == 1;
            if !same && !swap {
                return fail(5, Some(n));
            }
        }
        if td.bag(n).len() != r.width + 1 {
            return fail(6, Some(n));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::clique_structure;

    fn st(text: &str) -> Structure {
        Structure::parse(text).unwrap()
    }

    fn set(xs: &[Elem]) -> BTreeSet<Elem> {
        xs.iter().copied().collect()
    }

    #[test]
    fn validate_examples() {
        let path = st("rel E 2\ntuple E 1 2\ntuple E 2 3");
        let mut td = TreeDecomposition::single(0, set(&[1, 2]));
        td.add_child(0, 1, set(&[2, 3]));
        assert_eq!(validate(&td, &path), Ok(()));
        assert_eq!(td.width(), 1);

        let e = st("rel E 2\ntuple E 1 2");
        let mut bad = TreeDecomposition::single(0, set(&[1]));
        bad.add_child(0, 1, set(&[2]));
        assert_eq!(validate(&bad, &e).unwrap_err().clause(), 1);

        let mut gap = TreeDecomposition::single(0, set(&[1, 2]));
        gap.add_child(0, 1, set(&[2, 3]));
        gap.add_child(1, 2, set(&[1, 3]));
        assert_eq!(validate(&gap, &path).unwrap_err().clause(), 2);
    }

    #[test]
    fn treewidth_examples() {
        assert_eq!(exact_treewidth(&clique_structure(3)).unwrap().0, 2);
        assert_eq!(exact_treewidth(&st("rel R 1\ntuple R 5")).unwrap().0, 0);
        let empty = Structure::new(Default::default());
        assert_eq!(exact_treewidth(&empty).unwrap().0, 0);
        let big = clique_structure(9);
        assert!(matches!(exact_treewidth(&big), Err(DecompositionError::TooLarge { .. })));
    }

    #[test]
    fn witness_validates() {
        let s = st("rel E 2\ntuple E 1 2\ntuple E 2 3\ntuple E 3 1\ntuple E 3 4");
        let (w, td) = exact_treewidth(&s).unwrap();
        assert_eq!(w, 2);
        assert_eq!(validate(&td, &s), Ok(()));
        assert_eq!(td.width(), 2);
    }

    #[test]
    fn reduce_path() {
        let s = st("rel E 2\ntuple E 1 2\ntuple E 2 3");
        let (_, td) = exact_treewidth(&s).unwrap();
        let r = reduce(&td, &s).unwrap();
        assert_eq!(check_reduced(&r, &s), Ok(()));
        assert!(r.td.bags.values().all(|b| b.len() == 2));
    }

    #[test]
    fn reduce_splits_double_witness() {
        let s = st("rel E 2\ntuple E 1 2\ntuple E 2 1");
        let td = TreeDecomposition::single(0, set(&[1, 2]));
        let r = reduce(&td, &s).unwrap();
        assert_eq!(check_reduced(&r, &s), Ok(()));
        let root = r.td.root;
        assert_eq!(r.td.children_of(root).len(), 2);
        assert!(r.td.children_of(root).iter().all(|c| r.td.bag(*c) == r.td.bag(root)));
    }

    #[test]
    fn reduce_pads_and_places_constants() {
        let s = st("rel R 1\nconst c 7\ntuple R 1\ntuple R 2");
        let mut td = TreeDecomposition::single(0, set(&[1, 7]));
        td.add_child(0, 1, set(&[2]));
        let r = reduce(&td, &s).unwrap();
        assert_eq!(check_reduced(&r, &s), Ok(()));
        assert!(r.padding.is_empty());
        let no_tuples = st("const c 1");
        assert_eq!(reduce(&TreeDecomposition::single(0, set(&[1])), &no_tuples), Err(DecompositionError::NoTuples));
    }

    #[test]
    fn text_round_trip() {
        let s = clique_structure(3);
        let (_, td) = exact_treewidth(&s).unwrap();
        assert_eq!(TreeDecomposition::parse(&td.to_string()).unwrap(), td);
        assert!(TreeDecomposition::parse("node 0\nnode 1\nroot 0").is_err());
    }
}
