use std::collections::BTreeSet;

use rustc_hash::FxHashSet;

use super::{SoError, SoFormula, Term};
use crate::structures::{Elem, Store, Structure};

/// How [`eval_so_with`] decides a formula.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalRoute {
    /// Naive enumeration when second-order quantifiers are small, SAT otherwise.
    Auto,
    Naive,
    Sat,
}

#[derive(Clone, Copy, Debug)]
pub struct EvalOptions {
    pub route: EvalRoute,
    /// Naive route: largest total of `|domain|^arity` over nested
    /// second-order quantifiers.
    pub naive_tuple_limit: usize,
    /// SAT route: largest number of relations a universal second-order
    /// quantifier may be expanded into.
    pub expansion_limit: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { route: EvalRoute::Auto, naive_tuple_limit: 16, expansion_limit: 4096 }
    }
}

pub fn eval_so(s: &Structure, domain: &BTreeSet<Elem>, store: &Store, psi: &SoFormula) -> Result<bool, SoError> {
    eval_so_with(s, domain, store, psi, EvalOptions::default())
}

pub fn eval_so_with(s: &Structure, domain: &BTreeSet<Elem>, store: &Store, psi: &SoFormula, opts: EvalOptions) -> Result<bool, SoError> {
    check_inputs(s, domain, store, psi)?;
    let route = match opts.route {
        EvalRoute::Auto if max_so_tuples(psi, domain.len()) <= opts.naive_tuple_limit => EvalRoute::Naive,
        EvalRoute::Auto => EvalRoute::Sat,
        r => r,
    };
    match route {
        EvalRoute::Sat => super::sat::eval_sat(s, domain, store, psi, opts.expansion_limit),
        _ => naive(s, domain, store, psi, opts.naive_tuple_limit.max(24)),
    }
}

/// Direct Tarskian evaluation; second-order quantifiers enumerate every
/// relation over the domain.
pub fn eval_so_naive(s: &Structure, domain: &BTreeSet<Elem>, store: &Store, psi: &SoFormula) -> Result<bool, SoError> {
    check_inputs(s, domain, store, psi)?;
    naive(s, domain, store, psi, 24)
}

fn max_so_tuples(psi: &SoFormula, n: usize) -> usize {
    match psi {
        SoFormula::ExistsSo(_, a, b) | SoFormula::ForallSo(_, a, b) => n.saturating_pow(*a as u32).saturating_add(max_so_tuples(b, n)),
        SoFormula::Not(a) | SoFormula::ExistsFo(_, a) | SoFormula::ForallFo(_, a) => max_so_tuples(a, n),
        SoFormula::And(a, b) | SoFormula::Or(a, b) | SoFormula::Implies(a, b) => max_so_tuples(a, n).max(max_so_tuples(b, n)),
        _ => 0,
    }
}

pub(super) fn check_inputs(s: &Structure, domain: &BTreeSet<Elem>, store: &Store, psi: &SoFormula) -> Result<(), SoError> {
    if !s.domain().is_subset(domain) {
        return Err(SoError::DomainTooSmall);
    }
    if let Some(x) = psi.free_fo().into_iter().find(|x| store.get(x).is_none()) {
        return Err(SoError::UnboundVariable(x));
    }
    if let Some(x) = psi.free_so().into_iter().find(|x| !store.second_order.contains_key(x)) {
        return Err(SoError::UnboundVariable(x));
    }
    Ok(())
}

struct Env<'a> {
    s: &'a Structure,
    dom: Vec<Elem>,
    store: &'a Store,
    fo: Vec<(String, Elem)>,
    so: Vec<(String, usize, FxHashSet<Vec<Elem>>)>,
    limit: usize,
}

impl Env<'_> {
    fn term(&self, t: &Term) -> Result<Elem, SoError> {
        match t {
            Term::Var(v) => self
                .fo
                .iter()
                .rev()
                .find(|(x, _)| x == v)
                .map(|(_, e)| *e)
                .or_else(|| self.store.get(v))
                .ok_or_else(|| SoError::UnboundVariable(v.clone())),
            Term::Const(c) => self.s.constant(c).ok_or_else(|| SoError::UnknownConstant(c.clone())),
        }
    }

    fn args(&self, ts: &[Term]) -> Result<Vec<Elem>, SoError> {
        ts.iter().map(|t| self.term(t)).collect()
    }

    fn so_atom(&self, x: &str, args: &[Elem]) -> Result<bool, SoError> {
        if let Some((_, a, rel)) = self.so.iter().rev().find(|(y, _, _)| y == x) {
            if *a != args.len() {
                return Err(SoError::Arity { name: x.to_string(), expected: *a, got: args.len() });
            }
            return Ok(rel.contains(args));
        }
        if let Some((a, rel)) = self.store.second_order.get(x) {
            if *a != args.len() {
                return Err(SoError::Arity { name: x.to_string(), expected: *a, got: args.len() });
            }
            return Ok(rel.contains(args));
        }
        Err(SoError::UnboundVariable(x.to_string()))
    }

    fn eval(&mut self, f: &SoFormula) -> Result<bool, SoError> {
        Ok(match f {
            SoFormula::True => true,
            SoFormula::False => false,
            SoFormula::Eq(a, b) => self.term(a)? == self.term(b)?,
            SoFormula::Rel(r, ts) => {
                let args = self.args(ts)?;
                match self.s.signature().arity(r) {
                    Some(a) if a != args.len() => return Err(SoError::Arity { name: r.clone(), expected: a, got: args.len() }),
                    Some(_) => self.s.contains(r, &args),
                    None if self.so.iter().any(|(y, _, _)| y == r) || self.store.second_order.contains_key(r) => self.so_atom(r, &args)?,
                    None => return Err(SoError::UnknownRelation(r.clone())),
                }
            }
            SoFormula::Var(x, ts) => {
                let args = self.args(ts)?;
                self.so_atom(x, &args)?
            }
            SoFormula::Not(a) => !self.eval(a)?,
            SoFormula::And(a, b) => self.eval(a)? && self.eval(b)?,
            SoFormula::Or(a, b) => self.eval(a)? || self.eval(b)?,
            SoFormula::Implies(a, b) => !self.eval(a)? || self.eval(b)?,
            SoFormula::ExistsFo(x, a) | SoFormula::ForallFo(x, a) => {
                let want = matches!(f, SoFormula::ExistsFo(..));
                let mut result = !want;
                for i in 0..self.dom.len() {
                    self.fo.push((x.clone(), self.dom[i]));
                    let v = self.eval(a);
                    self.fo.pop();
                    if v? == want {
                        result = want;
                        break;
                    }
                }
                result
            }
            SoFormula::ExistsSo(x, arity, a) | SoFormula::ForallSo(x, arity, a) => {
                let want = matches!(f, SoFormula::ExistsSo(..));
                let tuples = all_tuples(&self.dom, *arity);
                if tuples.len() > self.limit {
                    return Err(SoError::TooLarge(format!("{} tuples for {x}/{arity}", tuples.len())));
                }
                let mut result = !want;
                for mask in 0u64..(1u64 << tuples.len()) {
                    let rel: FxHashSet<Vec<Elem>> = tuples.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, t)| t.clone()).collect();
                    self.so.push((x.clone(), *arity, rel));
                    let v = self.eval(a);
                    self.so.pop();
                    if v? == want {
                        result = want;
                        break;
                    }
                }
                result
            }
        })
    }
}

pub(super) fn all_tuples(dom: &[Elem], arity: usize) -> Vec<Vec<Elem>> {
    let mut out = vec![Vec::new()];
    for _ in 0..arity {
        out = out
            .into_iter()
            .flat_map(|t| {
                dom.iter().map(move |&d| {
                    let mut t = t.clone();
                    t.push(d);
                    t
                })
            })
            .collect();
    }
    out
}

fn naive(s: &Structure, domain: &BTreeSet<Elem>, store: &Store, psi: &SoFormula, limit: usize) -> Result<bool, SoError> {
    let mut env = Env { s, dom: domain.iter().copied().collect(), store, fo: Vec::new(), so: Vec::new(), limit };
    env.eval(psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::clique_structure;
    use crate::so::parse_so;
    use crate::structures::pad;

    const CLIQUE: &str = "forall x y. V(x) & V(y) & x != y -> E(x, y)";

    #[test]
    fn clique_formula_truth() {
        let f = parse_so(CLIQUE).unwrap();
        let k3 = clique_structure(3);
        assert!(eval_so(&k3, &k3.domain(), &Store::new(), &f).unwrap());
        let mut minus = k3.clone();
        minus.remove("E", &[1, 2]);
        assert!(!eval_so(&minus, &minus.domain(), &Store::new(), &f).unwrap());
    }

    #[test]
    fn set_quantifier() {
        let f = parse_so("exists2 X/1. forall x. X(x)").unwrap();
        let s = clique_structure(2);
        assert!(eval_so(&s, &pad(&s, 3).domain, &Store::new(), &f).unwrap());
        let g = parse_so("forall2 X/1. exists x. X(x)").unwrap();
        assert!(!eval_so(&s, &s.domain(), &Store::new(), &g).unwrap());
    }

    #[test]
    fn input_errors() {
        let s = clique_structure(2);
        let f = crate::so::parse_so_with("V(x)", &["x"]).unwrap();
        assert_eq!(eval_so(&s, &s.domain(), &Store::new(), &f), Err(SoError::UnboundVariable("x".into())));
        assert_eq!(eval_so(&s, &BTreeSet::from([1]), &Store::from_pairs(&[("x", 1)]), &f), Err(SoError::DomainTooSmall));
        let g = parse_so("W(c)").unwrap();
        assert!(matches!(eval_so(&s, &s.domain(), &Store::new(), &g), Err(SoError::UnknownConstant(_) | SoError::UnknownRelation(_))));
    }

    #[test]
    fn store_relations_are_visible() {
        let s = clique_structure(2);
        let mut store = Store::from_pairs(&[("x", 2)]);
        store.set_relation("X", 1, BTreeSet::from([vec![2]])).unwrap();
        let f = crate::so::parse_so_with("X(x)", &["x"]).unwrap();
        assert!(eval_so(&s, &s.domain(), &store, &f).unwrap());
    }
}
