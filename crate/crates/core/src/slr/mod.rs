//! Separation Logic of Relations: syntax, inductive definitions, the
//! satisfaction relation and SID transformations.

mod check;
mod flat;
mod injective;
mod normalize;
mod parser;
mod transform;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::term::Term;
use crate::term::write_args;

pub use check::{check_slr, check_slr_with, find_derivation, CheckOptions, Derivation, DEFAULT_BUDGET};
pub use flat::{flatten_rule, FlatRule};
pub use injective::check_slr_injective;
pub use normalize::{equality_count, is_normalized, normalize_sid, NormalizedSid};
pub use parser::{parse_sid, parse_sid_with, parse_slr, parse_slr_with, ParseContext};
pub use transform::{has_single_relation_occurrences, sid_width_bound, split_relation_atoms};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SlrError {
    #[error("syntax error at {line}:{col}: expected {expected}")]
    Syntax { line: usize, col: usize, expected: String },
    #[error("arity error for {name}: expected {expected}, found {got}")]
    Arity { name: String, expected: usize, got: usize },
    #[error("free variable {var} is not a parameter of {head}")]
    FreeVariable { var: String, head: String },
    #[error("unbound variable {0}")]
    UnboundVariable(String),
    #[error("unknown predicate {0}")]
    UnknownPredicate(String),
    #[error("unknown constant {0}")]
    UnknownConstant(String),
    #[error("derivation search exceeded {0} steps")]
    Budget(u64),
    #[error("structure has {0} tuples; at most 128 are supported")]
    TooManyTuples(usize),
    #[error("the SID contains equalities between variables")]
    NormalizationRequired,
    #[error("the element pool is too small to decide the query")]
    PoolExhausted,
}

/// SLR formula.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SlrFormula {
    Emp,
    Eq(Term, Term),
    Neq(Term, Term),
    Rel(String, Vec<Term>),
    Pred(String, Vec<Term>),
    Star(Box<SlrFormula>, Box<SlrFormula>),
    Exists(String, Box<SlrFormula>),
}

impl SlrFormula {
    pub fn star(a: SlrFormula, b: SlrFormula) -> SlrFormula {
        SlrFormula::Star(Box::new(a), Box::new(b))
    }

    /// Right-nested star of `parts`; `emp` when empty.
    pub fn star_all(parts: impl IntoIterator<Item = SlrFormula>) -> SlrFormula {
        let mut parts: Vec<SlrFormula> = parts.into_iter().collect();
        let Some(mut acc) = parts.pop() else { return SlrFormula::Emp };
        while let Some(p) = parts.pop() {
            acc = SlrFormula::star(p, acc);
        }
        acc
    }

    pub fn exists_all(vars: &[String], body: SlrFormula) -> SlrFormula {
        vars.iter().rev().fold(body, |acc, v| SlrFormula::Exists(v.clone(), Box::new(acc)))
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
        let mut add = |t: &Term, bound: &Vec<String>| {
            if let Term::Var(v) = t {
                if !bound.contains(v) {
                    out.insert(v.clone());
                }
            }
        };
        match self {
            SlrFormula::Emp => {}
            SlrFormula::Eq(a, b) | SlrFormula::Neq(a, b) => {
                add(a, bound);
                add(b, bound);
            }
            SlrFormula::Rel(_, ts) | SlrFormula::Pred(_, ts) => ts.iter().for_each(|t| add(t, bound)),
            SlrFormula::Star(a, b) => {
                a.collect_free(bound, out);
                b.collect_free(bound, out);
            }
            SlrFormula::Exists(x, body) => {
                bound.push(x.clone());
                body.collect_free(bound, out);
                bound.pop();
            }
        }
    }

    /// True when no predicate atom occurs.
    pub fn is_predicate_free(&self) -> bool {
        match self {
            SlrFormula::Pred(..) => false,
            SlrFormula::Star(a, b) => a.is_predicate_free() && b.is_predicate_free(),
            SlrFormula::Exists(_, b) => b.is_predicate_free(),
            _ => true,
        }
    }

    /// Relation atoms in left-to-right order.
    pub fn relation_atoms(&self) -> Vec<(&str, &[Term])> {
        let mut out = Vec::new();
        self.visit_atoms(&mut |f| {
            if let SlrFormula::Rel(r, ts) = f {
                out.push((r.as_str(), ts.as_slice()));
            }
        });
        out
    }

    /// Predicate atoms in left-to-right order.
    pub fn predicate_atoms(&self) -> Vec<(&str, &[Term])> {
        let mut out = Vec::new();
        self.visit_atoms(&mut |f| {
            if let SlrFormula::Pred(p, ts) = f {
                out.push((p.as_str(), ts.as_slice()));
            }
        });
        out
    }

    fn visit_atoms<'a>(&'a self, f: &mut impl FnMut(&'a SlrFormula)) {
        match self {
            SlrFormula::Star(a, b) => {
                a.visit_atoms(f);
                b.visit_atoms(f);
            }
            SlrFormula::Exists(_, b) => b.visit_atoms(f),
            atom => f(atom),
        }
    }

    /// Simultaneous substitution of free variables.
    pub fn substitute(&self, map: &BTreeMap<String, Term>) -> SlrFormula {
        let sub = |t: &Term| match t {
            Term::Var(v) => map.get(v).cloned().unwrap_or_else(|| t.clone()),
            c => c.clone(),
        };
        match self {
            SlrFormula::Emp => SlrFormula::Emp,
            SlrFormula::Eq(a, b) => SlrFormula::Eq(sub(a), sub(b)),
            SlrFormula::Neq(a, b) => SlrFormula::Neq(sub(a), sub(b)),
            SlrFormula::Rel(r, ts) => SlrFormula::Rel(r.clone(), ts.iter().map(sub).collect()),
            SlrFormula::Pred(p, ts) => SlrFormula::Pred(p.clone(), ts.iter().map(sub).collect()),
            SlrFormula::Star(a, b) => SlrFormula::star(a.substitute(map), b.substitute(map)),
            SlrFormula::Exists(x, body) => {
                let mut inner = map.clone();
                inner.remove(x);
                SlrFormula::Exists(x.clone(), Box::new(body.substitute(&inner)))
            }
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, in_star: bool) -> fmt::Result {
        match self {
            SlrFormula::Emp => f.write_str("emp"),
            SlrFormula::Eq(a, b) => write!(f, "{a} = {b}"),
            SlrFormula::Neq(a, b) => write!(f, "{a} != {b}"),
            SlrFormula::Rel(n, ts) | SlrFormula::Pred(n, ts) => write_args(f, n, ts),
            SlrFormula::Star(a, b) => {
                a.fmt_prec(f, true)?;
                f.write_str(" * ")?;
                b.fmt_prec(f, true)
            }
            SlrFormula::Exists(..) => {
                let mut vars = Vec::new();
                let mut body = self;
                while let SlrFormula::Exists(x, b) = body {
                    vars.push(x.as_str());
                    body = b;
                }
                if in_star {
                    f.write_str("(")?;
                }
                write!(f, "exists {} . ", vars.join(" "))?;
                body.fmt_prec(f, false)?;
                if in_star {
                    f.write_str(")")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for SlrFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, false)
    }
}

/// Rule `head(params) <- body`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rule {
    pub head: String,
    pub params: Vec<String>,
    pub body: SlrFormula,
}

impl Rule {
    pub fn new(head: &str, params: &[&str], body: SlrFormula) -> Rule {
        Rule { head: head.to_string(), params: params.iter().map(|p| p.to_string()).collect(), body }
    }

    /// Number of distinct variables, free or bound.
    pub fn variable_count(&self) -> usize {
        let mut vars: BTreeSet<String> = self.params.iter().cloned().collect();
        collect_all_vars(&self.body, &mut vars);
        vars.len()
    }
}

fn collect_all_vars(f: &SlrFormula, out: &mut BTreeSet<String>) {
    match f {
        SlrFormula::Emp => {}
        SlrFormula::Eq(a, b) | SlrFormula::Neq(a, b) => {
            for t in [a, b] {
                if let Term::Var(v) = t {
                    out.insert(v.clone());
                }
            }
        }
        SlrFormula::Rel(_, ts) | SlrFormula::Pred(_, ts) => {
            out.extend(ts.iter().filter_map(|t| t.as_var().map(str::to_string)));
        }
        SlrFormula::Star(a, b) => {
            collect_all_vars(a, out);
            collect_all_vars(b, out);
        }
        SlrFormula::Exists(x, b) => {
            out.insert(x.clone());
            collect_all_vars(b, out);
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({}) <- {} ;", self.head, self.params.join(", "), self.body)
    }
}

/// A set of inductive definitions, kept in rule order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sid {
    pub rules: Vec<Rule>,
}

impl Sid {
    pub fn new(rules: Vec<Rule>) -> Sid {
        Sid { rules }
    }

    /// Rules defining `pred`, with their indices.
    pub fn rules_for<'a>(&'a self, pred: &'a str) -> impl Iterator<Item = (usize, &'a Rule)> + 'a {
        self.rules.iter().enumerate().filter(move |(_, r)| r.head == pred)
    }

    pub fn predicates(&self) -> BTreeSet<String> {
        let mut out: BTreeSet<String> = self.rules.iter().map(|r| r.head.clone()).collect();
        for r in &self.rules {
            out.extend(r.body.predicate_atoms().into_iter().map(|(p, _)| p.to_string()));
        }
        out
    }

    /// Arity of each predicate, from heads or from occurrences.
    pub fn arities(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for r in &self.rules {
            out.insert(r.head.clone(), r.params.len());
            for (p, ts) in r.body.predicate_atoms() {
                out.entry(p.to_string()).or_insert(ts.len());
            }
        }
        out
    }

    /// Relation symbols with arities as used in rule bodies.
    pub fn relations(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for r in &self.rules {
            for (rel, ts) in r.body.relation_atoms() {
                out.insert(rel.to_string(), ts.len());
            }
        }
        out
    }

    /// Constant symbols used anywhere.
    pub fn constants(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for r in &self.rules {
            r.body.visit_atoms(&mut |a| {
                let ts: Vec<&Term> = match a {
                    SlrFormula::Eq(x, y) | SlrFormula::Neq(x, y) => vec![x, y],
                    SlrFormula::Rel(_, ts) | SlrFormula::Pred(_, ts) => ts.iter().collect(),
                    _ => vec![],
                };
                out.extend(ts.into_iter().filter(|t| !t.is_var()).map(|t| t.name().to_string()));
            });
        }
        out
    }

    /// Predicates reachable from `pred` (including itself).
    pub fn reachable(&self, pred: &str) -> BTreeSet<String> {
        let mut seen = BTreeSet::from([pred.to_string()]);
        let mut stack = vec![pred.to_string()];
        while let Some(p) = stack.pop() {
            for (_, r) in self.rules_for(&p) {
                for (q, _) in r.body.predicate_atoms() {
                    if seen.insert(q.to_string()) {
                        stack.push(q.to_string());
                    }
                }
            }
        }
        seen
    }

    /// A predicate name not used by this SID, derived from `base`.
    pub fn fresh_predicate(&self, base: &str) -> String {
        let used = self.predicates();
        let mut name = base.to_string();
        while used.contains(&name) {
            name.push('\'');
        }
        name
    }
}

impl fmt::Display for Sid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.rules {
            writeln!(f, "{r}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_variables_and_printing() {
        let f = SlrFormula::Exists(
            "z".into(),
            Box::new(SlrFormula::star(
                SlrFormula::Rel("R".into(), vec![Term::var("x"), Term::var("z")]),
                SlrFormula::Eq(Term::var("z"), Term::cst("c")),
            )),
        );
        assert_eq!(f.free_vars(), BTreeSet::from(["x".to_string()]));
        assert_eq!(f.to_string(), "exists z . R(x, z) * z = c");
        let nested = SlrFormula::star(SlrFormula::Emp, f.clone());
        assert_eq!(nested.to_string(), "emp * (exists z . R(x, z) * z = c)");
    }

    #[test]
    fn substitution_respects_binders() {
        let f = SlrFormula::star(
            SlrFormula::Pred("A".into(), vec![Term::var("x")]),
            SlrFormula::Exists("x".into(), Box::new(SlrFormula::Rel("R".into(), vec![Term::var("x")]))),
        );
        let g = f.substitute(&BTreeMap::from([("x".to_string(), Term::var("y"))]));
        assert_eq!(g.to_string(), "A(y) * (exists x . R(x))");
    }
}
