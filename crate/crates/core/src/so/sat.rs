//! Evaluation by grounding to a propositional circuit.
//!
//! First-order quantifiers are expanded over the domain. Second-order
//! quantifiers that are existential in effect (∃ under an even number of
//! negations, ∀ under an odd number) become fresh propositional variables;
//! the others are expanded over every relation. The circuit is hash-consed
//! and handed to a SAT solver through the Tseitin encoding.

use std::collections::BTreeSet;

use rustc_hash::{FxHashMap, FxHashSet};
use varisat::{ExtendFormula, Lit, Solver};

use super::eval::all_tuples;
use super::{SoError, SoFormula, Term};
use crate::structures::{Elem, Store, Structure};

#[derive(Clone, Copy, Debug)]
enum T {
    Slot(usize),
    Val(Elem),
}

#[derive(Clone, Debug)]
enum Node {
    Const(bool),
    Eq(T, T),
    Rel(usize, Vec<T>),
    SoAtom(usize, Vec<T>),
    Not(usize),
    And(usize, usize),
    Or(usize, usize),
    Fo { exists: bool, slot: usize, body: usize },
    So { exists: bool, slot: usize, arity: usize, body: usize, fresh: bool },
}

struct Ir {
    nodes: Vec<Node>,
    free_fo: Vec<Vec<usize>>,
    free_so: Vec<Vec<usize>>,
    fo_slots: usize,
    so_arity: Vec<usize>,
    /// Concrete relations bound by the store, by SO slot.
    so_store: Vec<Option<FxHashSet<Vec<Elem>>>>,
    rels: Vec<FxHashSet<Vec<Elem>>>,
}

struct Compiler<'a> {
    s: &'a Structure,
    store: &'a Store,
    ir: Ir,
    rel_ids: FxHashMap<String, usize>,
    fo_scope: Vec<(String, usize)>,
    so_scope: Vec<(String, usize)>,
    store_so: FxHashMap<String, usize>,
}

impl Compiler<'_> {
    fn push(&mut self, n: Node, fo: Vec<usize>, so: Vec<usize>) -> usize {
        self.ir.nodes.push(n);
        self.ir.free_fo.push(fo);
        self.ir.free_so.push(so);
        self.ir.nodes.len() - 1
    }

    fn term(&self, t: &Term, fo: &mut Vec<usize>) -> Result<T, SoError> {
        match t {
            Term::Var(v) => {
                if let Some((_, slot)) = self.fo_scope.iter().rev().find(|(x, _)| x == v) {
                    if !fo.contains(slot) {
                        fo.push(*slot);
                    }
                    return Ok(T::Slot(*slot));
                }
                self.store.get(v).map(T::Val).ok_or_else(|| SoError::UnboundVariable(v.clone()))
            }
            Term::Const(c) => self.s.constant(c).map(T::Val).ok_or_else(|| SoError::UnknownConstant(c.clone())),
        }
    }

    fn so_slot(&mut self, x: &str) -> Result<usize, SoError> {
        if let Some((_, slot)) = self.so_scope.iter().rev().find(|(y, _)| y == x) {
            return Ok(*slot);
        }
        if let Some(&slot) = self.store_so.get(x) {
            return Ok(slot);
        }
        let (a, rel) = self.store.second_order.get(x).ok_or_else(|| SoError::UnboundVariable(x.to_string()))?;
        let slot = self.ir.so_arity.len();
        self.ir.so_arity.push(*a);
        self.ir.so_store.push(Some(rel.iter().cloned().collect()));
        self.store_so.insert(x.to_string(), slot);
        Ok(slot)
    }

    fn compile(&mut self, f: &SoFormula, positive: bool) -> Result<usize, SoError> {
        let union = |a: &[usize], b: &[usize]| {
            let mut out = a.to_vec();
            out.extend(b.iter().filter(|x| !a.contains(x)));
            out.sort_unstable();
            out
        };
        match f {
            SoFormula::True | SoFormula::False => Ok(self.push(Node::Const(matches!(f, SoFormula::True)), vec![], vec![])),
            SoFormula::Eq(a, b) => {
                let mut fo = Vec::new();
                let (x, y) = (self.term(a, &mut fo)?, self.term(b, &mut fo)?);
                fo.sort_unstable();
                Ok(self.push(Node::Eq(x, y), fo, vec![]))
            }
            SoFormula::Rel(r, ts) if self.s.signature().has_relation(r) => {
                let arity = self.s.signature().arity(r).expect("declared");
                if arity != ts.len() {
                    return Err(SoError::Arity { name: r.clone(), expected: arity, got: ts.len() });
                }
                let mut fo = Vec::new();
                let args = ts.iter().map(|t| self.term(t, &mut fo)).collect::<Result<Vec<_>, _>>()?;
                fo.sort_unstable();
                let id = self.rel_ids[r];
                Ok(self.push(Node::Rel(id, args), fo, vec![]))
            }
            SoFormula::Rel(x, ts) | SoFormula::Var(x, ts) => {
                let slot = self.so_slot(x)?;
                if self.ir.so_arity[slot] != ts.len() {
                    return Err(SoError::Arity { name: x.clone(), expected: self.ir.so_arity[slot], got: ts.len() });
                }
                let mut fo = Vec::new();
                let args = ts.iter().map(|t| self.term(t, &mut fo)).collect::<Result<Vec<_>, _>>()?;
                fo.sort_unstable();
                let so = if self.ir.so_store[slot].is_some() { vec![] } else { vec![slot] };
                Ok(self.push(Node::SoAtom(slot, args), fo, so))
            }
            SoFormula::Not(a) => {
                let c = self.compile(a, !positive)?;
                let (fo, so) = (self.ir.free_fo[c].clone(), self.ir.free_so[c].clone());
                Ok(self.push(Node::Not(c), fo, so))
            }
            SoFormula::And(a, b) | SoFormula::Or(a, b) | SoFormula::Implies(a, b) => {
                let left_positive = if matches!(f, SoFormula::Implies(..)) { !positive } else { positive };
                let mut l = self.compile(a, left_positive)?;
                let r = self.compile(b, positive)?;
                let fo = union(&self.ir.free_fo[l], &self.ir.free_fo[r]);
                let so = union(&self.ir.free_so[l], &self.ir.free_so[r]);
                let node = match f {
                    SoFormula::And(..) => Node::And(l, r),
                    SoFormula::Or(..) => Node::Or(l, r),
                    _ => {
                        let (lf, ls) = (self.ir.free_fo[l].clone(), self.ir.free_so[l].clone());
                        l = self.push(Node::Not(l), lf, ls);
                        Node::Or(l, r)
                    }
                };
                Ok(self.push(node, fo, so))
            }
            SoFormula::ExistsFo(x, a) | SoFormula::ForallFo(x, a) => {
                let slot = self.ir.fo_slots;
                self.ir.fo_slots += 1;
                self.fo_scope.push((x.clone(), slot));
                let body = self.compile(a, positive)?;
                self.fo_scope.pop();
                let fo: Vec<usize> = self.ir.free_fo[body].iter().copied().filter(|&v| v != slot).collect();
                let so = self.ir.free_so[body].clone();
                Ok(self.push(Node::Fo { exists: matches!(f, SoFormula::ExistsFo(..)), slot, body }, fo, so))
            }
            SoFormula::ExistsSo(x, arity, a) | SoFormula::ForallSo(x, arity, a) => {
                let exists = matches!(f, SoFormula::ExistsSo(..));
                let slot = self.ir.so_arity.len();
                self.ir.so_arity.push(*arity);
                self.ir.so_store.push(None);
                self.so_scope.push((x.clone(), slot));
                let body = self.compile(a, positive)?;
                self.so_scope.pop();
                let fo = self.ir.free_fo[body].clone();
                let so: Vec<usize> = self.ir.free_so[body].iter().copied().filter(|&v| v != slot).collect();
                let fresh = exists == positive;
                Ok(self.push(Node::So { exists, slot, arity: *arity, body, fresh }, fo, so))
            }
        }
    }
}

/// And-inverter graph literal: node index times two plus a negation bit.
type PLit = u32;
const FALSE: PLit = 0;
const TRUE: PLit = 1;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum PNode {
    False,
    Var,
    And(Vec<PLit>),
}

struct Circuit {
    nodes: Vec<PNode>,
    index: FxHashMap<Vec<PLit>, PLit>,
}

impl Circuit {
    fn new() -> Self {
        Circuit { nodes: vec![PNode::False], index: FxHashMap::default() }
    }

    fn var(&mut self) -> PLit {
        self.nodes.push(PNode::Var);
        ((self.nodes.len() - 1) as u32) << 1
    }

    fn and(&mut self, mut kids: Vec<PLit>) -> PLit {
        kids.retain(|&k| k != TRUE);
        if kids.contains(&FALSE) {
            return FALSE;
        }
        kids.sort_unstable();
        kids.dedup();
        if kids.windows(2).any(|w| w[0] ^ 1 == w[1]) {
            return FALSE;
        }
        match kids.len() {
            0 => TRUE,
            1 => kids[0],
            _ => {
                if let Some(&l) = self.index.get(&kids) {
                    return l;
                }
                self.nodes.push(PNode::And(kids.clone()));
                let l = ((self.nodes.len() - 1) as u32) << 1;
                self.index.insert(kids, l);
                l
            }
        }
    }

    fn or(&mut self, kids: Vec<PLit>) -> PLit {
        let neg = kids.into_iter().map(|k| k ^ 1).collect();
        self.and(neg) ^ 1
    }
}

#[derive(Clone, Debug)]
enum SoBinding {
    Fresh { id: u32, base: PLit },
    Concrete(u32),
}

struct Grounder<'a> {
    ir: &'a Ir,
    dom: Vec<Elem>,
    dom_index: FxHashMap<Elem, usize>,
    circuit: Circuit,
    fo_env: Vec<Elem>,
    so_env: Vec<Option<SoBinding>>,
    concrete: Vec<FxHashSet<Vec<Elem>>>,
    next_fresh_id: u32,
    memo: FxHashMap<(usize, Vec<u32>), PLit>,
    expansion_limit: u64,
    budget: u64,
}

impl Grounder<'_> {
    fn val(&self, t: T) -> Elem {
        match t {
            T::Slot(i) => self.fo_env[i],
            T::Val(v) => v,
        }
    }

    fn key(&self, n: usize) -> (usize, Vec<u32>) {
        let mut k: Vec<u32> = self.ir.free_fo[n].iter().map(|&s| self.fo_env[s]).collect();
        for &s in &self.ir.free_so[n] {
            k.push(match self.so_env[s].as_ref().expect("bound") {
                SoBinding::Fresh { id, .. } => id << 1,
                SoBinding::Concrete(c) => (c << 1) | 1,
            });
        }
        (n, k)
    }

    fn ground(&mut self, n: usize) -> Result<PLit, SoError> {
        let key = self.key(n);
        if let Some(&l) = self.memo.get(&key) {
            return Ok(l);
        }
        self.budget = self.budget.checked_sub(1).ok_or_else(|| SoError::TooLarge("grounding exceeded its node budget".into()))?;
        let l = match &self.ir.nodes[n] {
            Node::Const(b) => {
                if *b {
                    TRUE
                } else {
                    FALSE
                }
            }
            Node::Eq(a, b) => (self.val(*a) == self.val(*b)) as PLit,
            Node::Rel(r, ts) => {
                let t: Vec<Elem> = ts.iter().map(|&t| self.val(t)).collect();
                self.ir.rels[*r].contains(&t) as PLit
            }
            Node::SoAtom(slot, ts) => {
                let t: Vec<Elem> = ts.iter().map(|&t| self.val(t)).collect();
                if let Some(rel) = &self.ir.so_store[*slot] {
                    rel.contains(&t) as PLit
                } else {
                    match self.so_env[*slot].as_ref().expect("bound") {
                        SoBinding::Concrete(c) => self.concrete[*c as usize].contains(&t) as PLit,
                        SoBinding::Fresh { base, .. } => {
                            let mut idx = 0usize;
                            let mut ok = true;
                            for e in &t {
                                match self.dom_index.get(e) {
                                    Some(&i) => idx = idx * self.dom.len() + i,
                                    None => ok = false,
                                }
                            }
                            if ok {
                                base + ((idx as u32) << 1)
                            } else {
                                FALSE
                            }
                        }
                    }
                }
            }
            Node::Not(a) => self.ground(*a)? ^ 1,
            Node::And(a, b) | Node::Or(a, b) => {
                let is_and = matches!(self.ir.nodes[n], Node::And(..));
                let (a, b) = (*a, *b);
                let x = self.ground(a)?;
                // Short-circuit on a decided left operand.
                if (is_and && x == FALSE) || (!is_and && x == TRUE) {
                    x
                } else {
                    let y = self.ground(b)?;
                    if is_and {
                        self.circuit.and(vec![x, y])
                    } else {
                        self.circuit.or(vec![x, y])
                    }
                }
            }
            Node::Fo { exists, slot, body } => {
                let (exists, slot, body) = (*exists, *slot, *body);
                let saved = self.fo_env[slot];
                let mut kids = Vec::with_capacity(self.dom.len());
                for i in 0..self.dom.len() {
                    self.fo_env[slot] = self.dom[i];
                    let k = self.ground(body)?;
                    if (exists && k == TRUE) || (!exists && k == FALSE) {
                        kids = vec![k];
                        break;
                    }
                    kids.push(k);
                }
                self.fo_env[slot] = saved;
                if exists {
                    self.circuit.or(kids)
                } else {
                    self.circuit.and(kids)
                }
            }
            Node::So { exists, slot, arity, body, fresh } => {
                let (exists, slot, arity, body, fresh) = (*exists, *slot, *arity, *body, *fresh);
                let saved = self.so_env[slot].take();
                let out = if fresh {
                    let count = self.dom.len().pow(arity as u32);
                    let mut base = None;
                    for _ in 0..count {
                        let v = self.circuit.var();
                        base.get_or_insert(v);
                    }
                    let id = self.next_fresh_id;
                    self.next_fresh_id += 1;
                    // Nullary relations over an empty tuple set still get one variable.
                    let base = base.unwrap_or_else(|| self.circuit.var());
                    self.so_env[slot] = Some(SoBinding::Fresh { id, base });
                    self.ground(body)?
                } else {
                    let tuples = all_tuples(&self.dom, arity);
                    if tuples.len() >= 63 || (1u64 << tuples.len()) > self.expansion_limit {
                        return Err(SoError::TooLarge(format!("universal second-order quantifier over {} tuples", tuples.len())));
                    }
                    let mut kids = Vec::new();
                    for mask in 0u64..(1u64 << tuples.len()) {
                        let rel: FxHashSet<Vec<Elem>> =
                            tuples.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, t)| t.clone()).collect();
                        self.concrete.push(rel);
                        self.so_env[slot] = Some(SoBinding::Concrete((self.concrete.len() - 1) as u32));
                        let k = self.ground(body)?;
                        if (exists && k == TRUE) || (!exists && k == FALSE) {
                            kids = vec![k];
                            break;
                        }
                        kids.push(k);
                    }
                    if exists {
                        self.circuit.or(kids)
                    } else {
                        self.circuit.and(kids)
                    }
                };
                self.so_env[slot] = saved;
                out
            }
        };
        self.memo.insert(key, l);
        Ok(l)
    }
}

pub(super) fn eval_sat(s: &Structure, domain: &BTreeSet<Elem>, store: &Store, psi: &SoFormula, expansion_limit: u64) -> Result<bool, SoError> {
    let rel_ids: FxHashMap<String, usize> = s.signature().relations().iter().enumerate().map(|(i, (r, _))| (r.clone(), i)).collect();
    let rels: Vec<FxHashSet<Vec<Elem>>> = s.signature().relations().iter().map(|(r, _)| s.tuples(r).cloned().collect()).collect();
    let ir = Ir { nodes: Vec::new(), free_fo: Vec::new(), free_so: Vec::new(), fo_slots: 0, so_arity: Vec::new(), so_store: Vec::new(), rels };
    let mut c = Compiler { s, store, ir, rel_ids, fo_scope: Vec::new(), so_scope: Vec::new(), store_so: FxHashMap::default() };
    let root = c.compile(psi, true)?;
    let ir = c.ir;
    let dom: Vec<Elem> = domain.iter().copied().collect();
    let dom_index = dom.iter().enumerate().map(|(i, &d)| (d, i)).collect();
    let mut g = Grounder {
        ir: &ir,
        dom,
        dom_index,
        circuit: Circuit::new(),
        fo_env: vec![0; ir.fo_slots],
        so_env: vec![None; ir.so_arity.len()],
        concrete: Vec::new(),
        next_fresh_id: 0,
        memo: FxHashMap::default(),
        expansion_limit,
        budget: 200_000_000,
    };
    let out = g.ground(root)?;
    if out == TRUE || out == FALSE {
        return Ok(out == TRUE);
    }
    solve(&g.circuit, out)
}

fn solve(c: &Circuit, root: PLit) -> Result<bool, SoError> {
    let mut solver = Solver::new();
    let lit = |l: PLit| Lit::from_index((l >> 1) as usize, l & 1 == 0);
    // Tseitin over the nodes reachable from the root.
    let mut seen = vec![false; c.nodes.len()];
    let mut stack = vec![(root >> 1) as usize];
    while let Some(n) = stack.pop() {
        if seen[n] {
            continue;
        }
        seen[n] = true;
        match &c.nodes[n] {
            PNode::False => solver.add_clause(&[Lit::from_index(0, false)]),
            PNode::Var => {}
            PNode::And(kids) => {
                let v = Lit::from_index(n, true);
                let mut big = vec![v];
                for &k in kids {
                    solver.add_clause(&[!v, lit(k)]);
                    big.push(!lit(k));
                    stack.push((k >> 1) as usize);
                }
                solver.add_clause(&big);
            }
        }
    }
    solver.add_clause(&[lit(root)]);
    solver.solve().map_err(|e| SoError::TooLarge(format!("SAT solver failure: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::clique_structure;
    use crate::so::{eval_so_naive, parse_so};
    use crate::structures::pad;

    fn both(s: &Structure, dom: &BTreeSet<Elem>, text: &str) -> (bool, bool) {
        let f = parse_so(text).unwrap();
        (eval_so_naive(s, dom, &Store::new(), &f).unwrap(), eval_sat(s, dom, &Store::new(), &f, 1 << 20).unwrap())
    }

    #[test]
    fn agrees_with_naive() {
        let k3 = clique_structure(3);
        let dom = pad(&k3, 1).domain;
        for text in [
            "exists2 X/1. forall x. X(x) -> V(x)",
            "exists2 X/1. (exists x. X(x)) & (exists x. !X(x) & V(x)) & forall x y. X(x) & E(x, y) -> X(y)",
            "forall2 X/1. (exists x. X(x)) -> exists x. X(x) & V(x)",
            "!exists2 X/1. forall x. X(x)",
            "exists2 Y/2. forall x y. Y(x, y) -> E(x, y)",
            "forall x. exists2 X/1. X(x) & !exists y. X(y) & y != x",
            "!forall2 X/1. exists x. X(x) & !V(x)",
        ] {
            let (a, b) = both(&k3, &dom, text);
            assert_eq!(a, b, "{text}");
        }
    }

    #[test]
    fn binary_existential_beyond_naive_reach() {
        // A strict total order on six elements exists.
        let s = clique_structure(6);
        let f = parse_so(
            "exists2 L/2. (forall x. !L(x, x)) & (forall x y. x != y -> L(x, y) | L(y, x)) & forall x y z. L(x, y) & L(y, z) -> L(x, z)",
        )
        .unwrap();
        assert!(eval_sat(&s, &s.domain(), &Store::new(), &f, 16).unwrap());
        let g = parse_so("exists2 L/2. forall x. exists y. L(x, y) & forall z. L(z, y) -> z = x & x != y").unwrap();
        assert!(eval_sat(&s, &s.domain(), &Store::new(), &g, 16).unwrap());
    }
}
