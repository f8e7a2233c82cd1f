//! Second-order logic over finite evaluation domains: syntax, evaluation,
//! quantifier rank and monadic back-and-forth types.

mod eval;
mod parser;
mod sat;
mod types;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::term::Term;
use crate::term::write_args;
pub use eval::{eval_so, eval_so_naive, eval_so_with, EvalOptions, EvalRoute};
pub use parser::{parse_so, parse_so_with};
pub use types::{
    abstract_forget, abstract_glue, mso_type, mso_type_with_cap, padded_type, MsoType, Registry, TypeValue, DEFAULT_TYPE_DOMAIN_CAP,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SoError {
    #[error("syntax error at {line}:{col}: expected {expected}")]
    Syntax { line: usize, col: usize, expected: String },
    #[error("unbound variable {0}")]
    UnboundVariable(String),
    #[error("evaluation domain does not contain Dom(s)")]
    DomainTooSmall,
    #[error("unknown relation {0}")]
    UnknownRelation(String),
    #[error("unknown constant {0}")]
    UnknownConstant(String),
    #[error("arity mismatch for {name}: expected {expected}, found {got}")]
    Arity { name: String, expected: usize, got: usize },
    #[error("instance too large: {0}")]
    TooLarge(String),
    #[error("type of rank {got} is not comparable with rank {expected}")]
    RankMismatch { expected: usize, got: usize },
    #[error("type is not registered")]
    UnregisteredType,
    #[error(transparent)]
    Structure(#[from] crate::structures::StructureError),
}

/// Second-order formula. `Rel` atoms refer to the structure's relations,
/// `Var` atoms to second-order variables.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SoFormula {
    True,
    False,
    Eq(Term, Term),
    Rel(String, Vec<Term>),
    Var(String, Vec<Term>),
    Not(Box<SoFormula>),
    And(Box<SoFormula>, Box<SoFormula>),
    Or(Box<SoFormula>, Box<SoFormula>),
    Implies(Box<SoFormula>, Box<SoFormula>),
    ExistsFo(String, Box<SoFormula>),
    ForallFo(String, Box<SoFormula>),
    ExistsSo(String, usize, Box<SoFormula>),
    ForallSo(String, usize, Box<SoFormula>),
}

impl SoFormula {
    #[allow(clippy::should_implement_trait)]
    pub fn not(f: SoFormula) -> SoFormula {
        SoFormula::Not(Box::new(f))
    }

    pub fn and(a: SoFormula, b: SoFormula) -> SoFormula {
        SoFormula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: SoFormula, b: SoFormula) -> SoFormula {
        SoFormula::Or(Box::new(a), Box::new(b))
    }

    pub fn implies(a: SoFormula, b: SoFormula) -> SoFormula {
        SoFormula::Implies(Box::new(a), Box::new(b))
    }

    pub fn neq(a: Term, b: Term) -> SoFormula {
        SoFormula::not(SoFormula::Eq(a, b))
    }

    /// Conjunction of `parts`; `true` when empty.
    pub fn and_all(parts: impl IntoIterator<Item = SoFormula>) -> SoFormula {
        let mut it = parts.into_iter();
        let Some(first) = it.next() else { return SoFormula::True };
        it.fold(first, SoFormula::and)
    }

    /// Disjunction of `parts`; `false` when empty.
    pub fn or_all(parts: impl IntoIterator<Item = SoFormula>) -> SoFormula {
        let mut it = parts.into_iter();
        let Some(first) = it.next() else { return SoFormula::False };
        it.fold(first, SoFormula::or)
    }

    pub fn exists_fo(vars: &[&str], body: SoFormula) -> SoFormula {
        vars.iter().rev().fold(body, |acc, v| SoFormula::ExistsFo(v.to_string(), Box::new(acc)))
    }

    pub fn forall_fo(vars: &[&str], body: SoFormula) -> SoFormula {
        vars.iter().rev().fold(body, |acc, v| SoFormula::ForallFo(v.to_string(), Box::new(acc)))
    }

    pub fn exists_so(x: &str, arity: usize, body: SoFormula) -> SoFormula {
        SoFormula::ExistsSo(x.to_string(), arity, Box::new(body))
    }

    pub fn forall_so(x: &str, arity: usize, body: SoFormula) -> SoFormula {
        SoFormula::ForallSo(x.to_string(), arity, Box::new(body))
    }

    /// Free first-order variables.
    pub fn free_fo(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut Vec::new(), &mut out, &mut BTreeSet::new());
        out
    }

    /// Free second-order variables.
    pub fn free_so(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut Vec::new(), &mut BTreeSet::new(), &mut out);
        out
    }

    pub fn is_sentence(&self) -> bool {
        self.free_fo().is_empty() && self.free_so().is_empty()
    }

    fn collect_free(&self, fo: &mut Vec<String>, so: &mut Vec<String>, out_fo: &mut BTreeSet<String>, out_so: &mut BTreeSet<String>) {
        let mut terms = |ts: &[Term], fo: &Vec<String>| {
            for t in ts {
                if let Term::Var(v) = t {
                    if !fo.contains(v) {
                        out_fo.insert(v.clone());
                    }
                }
            }
        };
        match self {
            SoFormula::True | SoFormula::False => {}
            SoFormula::Eq(a, b) => terms(&[a.clone(), b.clone()], fo),
            SoFormula::Rel(_, ts) => terms(ts, fo),
            SoFormula::Var(x, ts) => {
                terms(ts, fo);
                if !so.contains(x) {
                    out_so.insert(x.clone());
                }
            }
            SoFormula::Not(a) => a.collect_free(fo, so, out_fo, out_so),
            SoFormula::And(a, b) | SoFormula::Or(a, b) | SoFormula::Implies(a, b) => {
                a.collect_free(fo, so, out_fo, out_so);
                b.collect_free(fo, so, out_fo, out_so);
            }
            SoFormula::ExistsFo(x, a) | SoFormula::ForallFo(x, a) => {
                fo.push(x.clone());
                a.collect_free(fo, so, out_fo, out_so);
                fo.pop();
            }
            SoFormula::ExistsSo(x, _, a) | SoFormula::ForallSo(x, _, a) => {
                so.push(x.clone());
                a.collect_free(fo, so, out_fo, out_so);
                so.pop();
            }
        }
    }

    /// True when every second-order quantifier is monadic.
    pub fn is_mso(&self) -> bool {
        match self {
            SoFormula::ExistsSo(_, a, b) | SoFormula::ForallSo(_, a, b) => *a == 1 && b.is_mso(),
            SoFormula::Not(a) | SoFormula::ExistsFo(_, a) | SoFormula::ForallFo(_, a) => a.is_mso(),
            SoFormula::And(a, b) | SoFormula::Or(a, b) | SoFormula::Implies(a, b) => a.is_mso() && b.is_mso(),
            _ => true,
        }
    }

    pub fn has_so_quantifier(&self) -> bool {
        match self {
            SoFormula::ExistsSo(..) | SoFormula::ForallSo(..) => true,
            SoFormula::Not(a) | SoFormula::ExistsFo(_, a) | SoFormula::ForallFo(_, a) => a.has_so_quantifier(),
            SoFormula::And(a, b) | SoFormula::Or(a, b) | SoFormula::Implies(a, b) => a.has_so_quantifier() || b.has_so_quantifier(),
            _ => false,
        }
    }

    /// Number of AST nodes.
    pub fn size(&self) -> usize {
        match self {
            SoFormula::Not(a) | SoFormula::ExistsFo(_, a) | SoFormula::ForallFo(_, a) => 1 + a.size(),
            SoFormula::ExistsSo(_, _, a) | SoFormula::ForallSo(_, _, a) => 1 + a.size(),
            SoFormula::And(a, b) | SoFormula::Or(a, b) | SoFormula::Implies(a, b) => 1 + a.size() + b.size(),
            _ => 1,
        }
    }

    /// Prints quantified subformulas in parentheses; binary connectives
    /// parenthesize themselves.
    fn fmt_operand(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SoFormula::ExistsFo(..) | SoFormula::ForallFo(..) | SoFormula::ExistsSo(..) | SoFormula::ForallSo(..) => write!(f, "({self})"),
            _ => write!(f, "{self}"),
        }
    }

    fn fmt_binary(f: &mut fmt::Formatter<'_>, a: &SoFormula, op: &str, b: &SoFormula) -> fmt::Result {
        f.write_str("(")?;
        a.fmt_operand(f)?;
        write!(f, " {op} ")?;
        b.fmt_operand(f)?;
        f.write_str(")")
    }
}

/// Quantifier rank: atoms 0, negation transparent, binary connectives take
/// the maximum, each quantifier of either order adds one.
pub fn quantifier_rank(psi: &SoFormula) -> usize {
    match psi {
        SoFormula::True | SoFormula::False | SoFormula::Eq(..) | SoFormula::Rel(..) | SoFormula::Var(..) => 0,
        SoFormula::Not(a) => quantifier_rank(a),
        SoFormula::And(a, b) | SoFormula::Or(a, b) | SoFormula::Implies(a, b) => quantifier_rank(a).max(quantifier_rank(b)),
        SoFormula::ExistsFo(_, a) | SoFormula::ForallFo(_, a) | SoFormula::ExistsSo(_, _, a) | SoFormula::ForallSo(_, _, a) => {
            1 + quantifier_rank(a)
        }
    }
}

impl fmt::Display for SoFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SoFormula::True => f.write_str("true"),
            SoFormula::False => f.write_str("false"),
            SoFormula::Eq(a, b) => write!(f, "{a} = {b}"),
            SoFormula::Rel(n, ts) | SoFormula::Var(n, ts) => write_args(f, n, ts),
            SoFormula::Not(a) => match a.as_ref() {
                SoFormula::Eq(x, y) => write!(f, "{x} != {y}"),
                _ => {
                    f.write_str("!")?;
                    a.fmt_operand(f)
                }
            },
            SoFormula::And(a, b) => SoFormula::fmt_binary(f, a, "&", b),
            SoFormula::Or(a, b) => SoFormula::fmt_binary(f, a, "|", b),
            SoFormula::Implies(a, b) => SoFormula::fmt_binary(f, a, "->", b),
            SoFormula::ExistsFo(x, a) => write!(f, "exists {x}. {a}"),
            SoFormula::ForallFo(x, a) => write!(f, "forall {x}. {a}"),
            SoFormula::ExistsSo(x, n, a) => write!(f, "exists2 {x}/{n}. {a}"),
            SoFormula::ForallSo(x, n, a) => write!(f, "forall2 {x}/{n}. {a}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks() {
        assert_eq!(quantifier_rank(&parse_so("R(c1, c2)").unwrap()), 0);
        assert_eq!(quantifier_rank(&parse_so("exists x. exists2 X/1. X(x)").unwrap()), 2);
        assert_eq!(quantifier_rank(&parse_so("(exists x. P(x)) & (exists y. Q(y))").unwrap()), 1);
        assert_eq!(quantifier_rank(&parse_so("!forall x. !forall y. E(x, y)").unwrap()), 2);
    }

    #[test]
    fn free_variables() {
        let f = parse_so_with("exists2 X/1. X(x) & R(y, c)", &["x", "y"]).unwrap();
        assert_eq!(f.free_fo(), BTreeSet::from(["x".to_string(), "y".to_string()]));
        assert!(f.free_so().is_empty());
        assert!(f.is_mso() && !f.is_sentence());
        let g = parse_so("exists2 Y/2. forall x. Y(x, x)").unwrap();
        assert!(!g.is_mso() && g.is_sentence());
    }

    #[test]
    fn printing_round_trips() {
        for text in [
            "forall x. forall y. ((V(x) & V(y) & x != y) -> E(x, y))",
            "exists2 X/1. (forall x. X(x) | !exists y. E(y, y))",
            "forall2 X/2. true -> false",
        ] {
            let f = parse_so(text).unwrap();
            assert_eq!(parse_so(&f.to_string()).unwrap(), f, "{text}");
        }
    }
}
