use crate::slr::{Rule, Sid, SlrFormula, Term};
use crate::structures::{Signature, D_REL};

use super::GeneratorError;

/// Name of the bag predicate of Δ(k).
pub const TWK_PREDICATE: &str = "A";

/// Name of the nullary top predicate `A_k`.
pub fn top_predicate(k: usize) -> String {
    format!("{TWK_PREDICATE}_{k}")
}

pub(crate) fn bag_params(k: usize) -> Vec<String> {
    (1..=k + 1).map(|i| format!("x{i}")).collect()
}

pub(crate) fn vars(names: &[String]) -> Vec<Term> {
    names.iter().map(|n| Term::Var(n.clone())).collect()
}

pub(crate) fn check_reserved(k: usize, sig: &Signature) -> Result<(), GeneratorError> {
    for name in [D_REL.to_string(), TWK_PREDICATE.to_string(), top_predicate(k)] {
        if sig.has_relation(&name) || sig.has_constant(&name) {
            return Err(GeneratorError::ReservedSymbol(name));
        }
    }
    Ok(())
}

/// Every map from `0..arity` into `0..n`, lexicographically.
pub(crate) fn argument_maps(arity: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..arity {
        out = out
            .into_iter()
            .flat_map(|m: Vec<usize>| {
                (0..n).map(move |i| {
                    let mut m = m.clone();
                    m.push(i);
                    m
                })
            })
            .collect();
    }
    out
}

/// Body `exists y . D(y) * P(x1, …, x_{k+1})[x_i/y]`.
pub(crate) fn exists_body(params: &[String], i: usize, pred: &str) -> SlrFormula {
    let mut args = vars(params);
    args[i] = Term::var("y");
    SlrFormula::Exists(
        "y".into(),
        Box::new(SlrFormula::star(SlrFormula::Rel(D_REL.into(), vec![Term::var("y")]), SlrFormula::Pred(pred.into(), args))),
    )
}

pub(crate) fn top_body(params: &[String], pred: &str) -> SlrFormula {
    let mut parts: Vec<SlrFormula> = params.iter().map(|x| SlrFormula::Rel(D_REL.into(), vec![Term::Var(x.clone())])).collect();
    parts.push(SlrFormula::Pred(pred.into(), vars(params)));
    SlrFormula::exists_all(params, SlrFormula::star_all(parts))
}

/// Δ(k): composition, one existential rule per position, one rule per
/// relation and argument map, the top rule for `A_k()`, and `A_k() <- emp`
/// for the empty structure.
pub fn gen_twk_sid(k: usize, sig: &Signature) -> Result<Sid, GeneratorError> {
    check_reserved(k, sig)?;
    let params = bag_params(k);
    let a = || SlrFormula::Pred(TWK_PREDICATE.into(), vars(&params));
    let head = |body| Rule { head: TWK_PREDICATE.into(), params: params.clone(), body };
    let mut rules = vec![head(SlrFormula::star(a(), a()))];
    for i in 0..=k {
        rules.push(head(exists_body(&params, i, TWK_PREDICATE)));
    }
    for (r, arity) in sig.relations() {
        for m in argument_maps(*arity, k + 1) {
            rules.push(head(SlrFormula::Rel(r.clone(), m.iter().map(|&i| Term::Var(params[i].clone())).collect())));
        }
    }
    rules.push(Rule { head: top_predicate(k), params: vec![], body: top_body(&params, TWK_PREDICATE) });
    rules.push(Rule { head: top_predicate(k), params: vec![], body: SlrFormula::Emp });
    Ok(Sid::new(rules))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_counts() {
        let e = Signature::with_relations(&[("E", 2)]);
        assert_eq!(gen_twk_sid(1, &e).unwrap().rules.len(), 9);
        let ev = Signature::with_relations(&[("E", 2), ("V", 1)]);
        assert_eq!(gen_twk_sid(2, &ev).unwrap().rules.len(), 18);
        for k in 1..=3usize {
            for sig in [&e, &ev] {
                let expected: usize = 1 + (k + 1) + sig.relations().iter().map(|(_, a)| (k + 1).pow(*a as u32)).sum::<usize>() + 2;
                assert_eq!(gen_twk_sid(k, sig).unwrap().rules.len(), expected);
            }
        }
    }

    #[test]
    fn rule_shapes() {
        let sid = gen_twk_sid(1, &Signature::with_relations(&[("E", 2)])).unwrap();
        let text = sid.to_string();
        assert!(text.starts_with("A(x1, x2) <- A(x1, x2) * A(x1, x2) ;\nA(x1, x2) <- exists y . D(y) * A(y, x2) ;\n"));
        assert!(text.contains("A(x1, x2) <- E(x2, x1) ;"));
        assert!(text.ends_with("A_1() <- exists x1 x2 . D(x1) * D(x2) * A(x1, x2) ;\nA_1() <- emp ;\n"));
    }

    #[test]
    fn reserved_symbols() {
        let sig = Signature::with_relations(&[("D", 1)]);
        assert_eq!(gen_twk_sid(1, &sig), Err(GeneratorError::ReservedSymbol("D".into())));
    }
}
