use std::collections::BTreeSet;

use super::flat::flatten_rule;
use super::{Rule, Sid, SlrFormula, Term};

/// Largest number of variables, free or bound, in a rule; at least 1.
pub fn sid_width_bound(sid: &Sid) -> usize {
    sid.rules.iter().map(Rule::variable_count).max().unwrap_or(0).max(1)
}

/// Rewrites the SID so that no relation symbol occurs twice in a rule.
///
/// Every repeated occurrence `R(t̄)` becomes an atom of a fresh predicate
/// defined by the single rule `P(vars of t̄) <- R(t̄)`.
pub fn split_relation_atoms(sid: &Sid) -> Sid {
    let mut used: BTreeSet<String> = sid.predicates();
    let mut out = Vec::new();
    let mut extra = Vec::new();
    for rule in &sid.rules {
        let mut fr = flatten_rule(rule);
        let mut seen: BTreeSet<String> = BTreeSet::new();
        let mut kept = Vec::new();
        let mut moved = Vec::new();
        for (r, ts) in fr.rels.drain(..) {
            if seen.insert(r.clone()) {
                kept.push((r, ts));
            } else {
                moved.push((r, ts));
            }
        }
        if moved.is_empty() {
            out.push(rule.clone());
            continue;
        }
        fr.rels = kept;
        for (r, ts) in moved {
            let mut n = 1;
            let name = loop {
                let cand = format!("{}_split{n}", rule.head);
                if !used.contains(&cand) {
                    break cand;
                }
                n += 1;
            };
            used.insert(name.clone());
            let mut vars: Vec<String> = Vec::new();
            for t in &ts {
                if let Term::Var(v) = t {
                    if !vars.contains(v) {
                        vars.push(v.clone());
                    }
                }
            }
            fr.preds.push((name.clone(), vars.iter().map(|v| Term::Var(v.clone())).collect()));
            extra.push(Rule { head: name, params: vars, body: SlrFormula::Rel(r, ts) });
        }
        out.push(fr.to_rule());
    }
    out.extend(extra);
    Sid::new(out)
}

/// True when every rule has at most one atom per relation symbol.
pub fn has_single_relation_occurrences(sid: &Sid) -> bool {
    sid.rules.iter().all(|r| {
        let rels = r.body.relation_atoms();
        let names: BTreeSet<&str> = rels.iter().map(|(n, _)| *n).collect();
        names.len() == rels.len()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slr::{check_slr, parse_sid, parse_slr_with, ParseContext};
    use crate::structures::{Store, Structure};

    const RING: &str = "Ring() <- exists x y . I(x, y) * Chain(y, x) ;
        Chain(x, y) <- exists z . C(x) * I(x, z) * Chain(z, y) ;
        Chain(x, y) <- emp * x = y ;";

    #[test]
    fn width_bound_of_ring() {
        assert_eq!(sid_width_bound(&parse_sid(RING).unwrap()), 3);
        assert_eq!(sid_width_bound(&parse_sid("A(x, y, z) <- R(x, y, z) ;").unwrap()), 3);
    }

    #[test]
    fn split_repeated_relation() {
        let sid = parse_sid("A(x, z) <- exists y . R(x, y) * R(y, z) ;").unwrap();
        let out = split_relation_atoms(&sid);
        assert_eq!(out.rules.len(), 2);
        assert!(has_single_relation_occurrences(&out));
        assert_eq!(out.to_string(), "A(x, z) <- exists y . R(x, y) * A_split1(y, z) ;\nA_split1(y, z) <- R(y, z) ;\n");
        let s = Structure::parse("rel R 2\ntuple R 1 2\ntuple R 2 3").unwrap();
        let ctx = ParseContext::new().with_sid(&sid).with_signature(s.signature());
        let phi = parse_slr_with("A(a, b)", &ctx).unwrap();
        for (a, b) in [(1, 3), (1, 2), (3, 1)] {
            let store = Store::from_pairs(&[("a", a), ("b", b)]);
            assert_eq!(check_slr(&s, &store, &phi, &sid).unwrap(), check_slr(&s, &store, &phi, &out).unwrap());
        }
    }

    #[test]
    fn compliant_sids_unchanged() {
        for text in [RING, "A(x) <- R(x) * S(x) ;"] {
            let sid = parse_sid(text).unwrap();
            assert_eq!(split_relation_atoms(&sid), sid);
        }
    }
}
