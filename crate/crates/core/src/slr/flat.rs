use std::collections::{BTreeMap, BTreeSet};

use super::{Rule, SlrFormula, Term};

/// A rule in prenex form: existentials renamed apart, atoms grouped by kind.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FlatRule {
    pub head: String,
    pub params: Vec<String>,
    pub exists: Vec<String>,
    pub rels: Vec<(String, Vec<Term>)>,
    pub eqs: Vec<(Term, Term)>,
    pub neqs: Vec<(Term, Term)>,
    pub preds: Vec<(String, Vec<Term>)>,
}

impl FlatRule {
    /// Parameters followed by existentials.
    pub fn variables(&self) -> Vec<String> {
        self.params.iter().chain(&self.exists).cloned().collect()
    }

    /// Rebuilds a rule: `exists ys . rels * eqs * neqs * preds`, or `emp`.
    pub fn to_rule(&self) -> Rule {
        let mut parts: Vec<SlrFormula> = Vec::new();
        parts.extend(self.rels.iter().map(|(r, ts)| SlrFormula::Rel(r.clone(), ts.clone())));
        parts.extend(self.eqs.iter().map(|(a, b)| SlrFormula::Eq(a.clone(), b.clone())));
        parts.extend(self.neqs.iter().map(|(a, b)| SlrFormula::Neq(a.clone(), b.clone())));
        parts.extend(self.preds.iter().map(|(p, ts)| SlrFormula::Pred(p.clone(), ts.clone())));
        let body = SlrFormula::exists_all(&self.exists, SlrFormula::star_all(parts));
        Rule { head: self.head.clone(), params: self.params.clone(), body }
    }

    pub fn is_relation_free(&self) -> bool {
        self.rels.is_empty()
    }
}

/// Flattens a rule body into prenex form.
pub fn flatten_rule(rule: &Rule) -> FlatRule {
    let mut out = FlatRule {
        head: rule.head.clone(),
        params: rule.params.clone(),
        exists: Vec::new(),
        rels: Vec::new(),
        eqs: Vec::new(),
        neqs: Vec::new(),
        preds: Vec::new(),
    };
    let mut used: BTreeSet<String> = rule.params.iter().cloned().collect();
    used.extend(bound_and_free(&rule.body));
    let mut taken: BTreeSet<String> = rule.params.iter().cloned().collect();
    walk(&rule.body, &BTreeMap::new(), &mut taken, &mut used, &mut out);
    out
}

fn walk(
    f: &SlrFormula,
    ren: &BTreeMap<String, String>,
    taken: &mut BTreeSet<String>,
    used: &mut BTreeSet<String>,
    out: &mut FlatRule,
) {
    let t = |x: &Term| match x {
        Term::Var(v) => Term::Var(ren.get(v).cloned().unwrap_or_else(|| v.clone())),
        c => c.clone(),
    };
    match f {
        SlrFormula::Emp => {}
        SlrFormula::Eq(a, b) => out.eqs.push((t(a), t(b))),
        SlrFormula::Neq(a, b) => out.neqs.push((t(a), t(b))),
        SlrFormula::Rel(r, ts) => out.rels.push((r.clone(), ts.iter().map(t).collect())),
        SlrFormula::Pred(p, ts) => out.preds.push((p.clone(), ts.iter().map(t).collect())),
        SlrFormula::Star(a, b) => {
            walk(a, ren, taken, used, out);
            walk(b, ren, taken, used, out);
        }
        SlrFormula::Exists(x, body) => {
            let mut name = x.clone();
            if taken.contains(&name) {
                loop {
                    name.push('\'');
                    if !used.contains(&name) {
                        break;
                    }
                }
            }
            taken.insert(name.clone());
            used.insert(name.clone());
            out.exists.push(name.clone());
            let mut inner = ren.clone();
            inner.insert(x.clone(), name);
            walk(body, &inner, taken, used, out);
        }
    }
}

/// All variable names occurring in `f`, bound or free.
pub(crate) fn bound_and_free(f: &SlrFormula) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    fn go(f: &SlrFormula, out: &mut BTreeSet<String>) {
        match f {
            SlrFormula::Emp => {}
            SlrFormula::Eq(a, b) | SlrFormula::Neq(a, b) => {
                out.extend([a, b].into_iter().filter_map(|t| t.as_var().map(str::to_string)));
            }
            SlrFormula::Rel(_, ts) | SlrFormula::Pred(_, ts) => {
                out.extend(ts.iter().filter_map(|t| t.as_var().map(str::to_string)));
            }
            SlrFormula::Star(a, b) => {
                go(a, out);
                go(b, out);
            }
            SlrFormula::Exists(x, b) => {
                out.insert(x.clone());
                go(b, out);
            }
        }
    }
    go(f, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slr::parse_sid;

    #[test]
    fn prenex_renames_apart() {
        let sid = parse_sid("A(x) <- (exists y . R(x, y)) * (exists y . R(y, x)) * B(x) ; B(x) <- emp ;").unwrap();
        let f = flatten_rule(&sid.rules[0]);
        assert_eq!(f.exists.len(), 2);
        assert_ne!(f.exists[0], f.exists[1]);
        assert_eq!(f.rels.len(), 2);
        assert_eq!(f.preds.len(), 1);
        let back = flatten_rule(&f.to_rule());
        assert_eq!(back, f);
    }

    #[test]
    fn shadowed_parameter() {
        let sid = parse_sid("A(x) <- exists x . R(x) ;").unwrap();
        let f = flatten_rule(&sid.rules[0]);
        assert_eq!(f.exists, vec!["x'".to_string()]);
        assert_eq!(f.rels[0].1, vec![Term::var("x'")]);
    }
}
