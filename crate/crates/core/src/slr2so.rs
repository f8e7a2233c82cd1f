//! Translation of SLR predicate atoms into second-order formulae.
//!
//! A model of `A(ξ̄)` is described by an unfolding tree whose vertices are
//! elements of the structure: `x` is the root, `X_i` the vertices labelled
//! by rule `i`, `Y_j` the edges to `j`-th children and `Z_{R,l}` maps a
//! vertex to the `l`-th coordinate of the tuple its `R`-atom introduces.
//! Equalities and disequalities are propagated along the variable flow of
//! the tree: a flow node is a vertex together with a variable of its rule,
//! and two flow nodes are connected when an equality atom or a parameter
//! passing links them.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::slr::{find_derivation, flatten_rule, split_relation_atoms, FlatRule, Rule, Sid, SlrError, SlrFormula, Term};
use crate::so::{eval_so_with, EvalOptions, EvalRoute, SoError, SoFormula};
use crate::structures::{pad, Elem, Signature, Store, Structure};
use crate::unfolding::derivation_size_bound;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TranslationError {
    #[error("unknown predicate {0}")]
    UnknownPredicate(String),
    #[error("unknown index: {0}")]
    UnknownIndex(String),
    #[error("relation {name} is used with arity {got}, declared {expected}")]
    Arity { name: String, expected: usize, got: usize },
    #[error(transparent)]
    Slr(#[from] SlrError),
    #[error(transparent)]
    So(#[from] SoError),
}

/// The prepared SID and the names of the generated variables.
#[derive(Clone, Debug)]
pub struct TranslationContext {
    /// Rules reachable from the goal, with relation atoms split and
    /// constants lifted out of relation and predicate atoms.
    pub sid: Sid,
    pub goal: String,
    pub goal_args: Vec<Term>,
    pub relations: Vec<(String, usize)>,
    /// Largest number of predicate atoms in a rule.
    pub max_children: usize,
    /// Largest number of variables in a rule.
    pub slots: usize,
    pub encoding: LinkEncoding,
    rules: Vec<FlatRule>,
    /// Local variable indices of each rule.
    var_index: Vec<BTreeMap<String, usize>>,
    names: Names,
}

#[derive(Clone, Debug)]
struct Names {
    root: String,
    labels: Vec<String>,
    edges: Vec<String>,
    coords: Vec<Vec<String>>,
    /// `classes[q][0]`: flow node `(y, q)` has value `w`;
    /// `classes[q][p + 1]`: it shares a fresh value with flow node `(w, p)`.
    classes: Vec<Vec<String>>,
    order: String,
    taken: BTreeSet<String>,
}

impl Names {
    fn fresh(&self, base: &str) -> String {
        let mut name = base.to_string();
        while self.taken.contains(&name) {
            name.push('\'');
        }
        name
    }
}

/// How clauses (v)–(vii) follow the variable flow through the tree.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LinkEncoding {
    /// Flow nodes are assigned value classes, checked locally.
    #[default]
    Classes,
    /// Blocks of monadic sets closed under the flow, one per anchored flow node.
    FlowSets,
}

/// Which closure formula [`emit_param_tracking`] produces.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tracking {
    /// Coordinate `m` of relation `k` in rule `i` flows to coordinate `n`
    /// of relation `l` in rule `j`.
    IsEq { i: usize, k: String, m: usize, j: usize, l: String, n: usize },
    /// Variable `var` of rule `i` flows to coordinate `r` of relation `k`
    /// in rule `j`.
    VarEq { i: usize, var: String, j: usize, k: String, r: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TranslationStats {
    pub rules: usize,
    pub max_children: usize,
    pub relations: usize,
    pub so_variables: usize,
    pub size: usize,
}

fn conj(mut parts: Vec<SoFormula>) -> SoFormula {
    parts.retain(|p| *p != SoFormula::True);
    if parts.contains(&SoFormula::False) {
        return SoFormula::False;
    }
    balanced(parts, SoFormula::True, SoFormula::and)
}

fn disj(mut parts: Vec<SoFormula>) -> SoFormula {
    parts.retain(|p| *p != SoFormula::False);
    if parts.contains(&SoFormula::True) {
        return SoFormula::True;
    }
    balanced(parts, SoFormula::False, SoFormula::or)
}

fn balanced(mut parts: Vec<SoFormula>, unit: SoFormula, op: fn(SoFormula, SoFormula) -> SoFormula) -> SoFormula {
    match parts.len() {
        0 => unit,
        1 => parts.pop().expect("one part"),
        n => {
            let right = parts.split_off(n / 2);
            op(balanced(parts, unit.clone(), op), balanced(right, unit, op))
        }
    }
}

fn implies(a: SoFormula, b: SoFormula) -> SoFormula {
    match (&a, &b) {
        (SoFormula::False, _) | (_, SoFormula::True) => SoFormula::True,
        (SoFormula::True, _) => b,
        _ => SoFormula::implies(a, b),
    }
}

fn forall(vars: &[&str], body: SoFormula) -> SoFormula {
    if matches!(body, SoFormula::True | SoFormula::False) {
        return body;
    }
    SoFormula::forall_fo(vars, body)
}

fn v(name: &str) -> Term {
    Term::Var(name.to_string())
}

fn atom(name: &str, args: &[&str]) -> SoFormula {
    SoFormula::Var(name.to_string(), args.iter().map(|a| v(a)).collect())
}

fn eq(a: &str, b: &str) -> SoFormula {
    SoFormula::Eq(v(a), v(b))
}

/// Moves constants out of relation and predicate atoms into equalities
/// with fresh existentials.
fn lift_constants(rule: &Rule) -> Rule {
    let mut fr = flatten_rule(rule);
    let mut taken: BTreeSet<String> = fr.variables().into_iter().collect();
    let mut counter = 0;
    let mut fresh = |c: &str, fr_exists: &mut Vec<String>, eqs: &mut Vec<(Term, Term)>| {
        let name = loop {
            counter += 1;
            let cand = format!("_k{counter}");
            if taken.insert(cand.clone()) {
                break cand;
            }
        };
        fr_exists.push(name.clone());
        eqs.push((Term::Var(name.clone()), Term::Const(c.to_string())));
        Term::Var(name)
    };
    let mut exists = std::mem::take(&mut fr.exists);
    let mut eqs = std::mem::take(&mut fr.eqs);
    for (_, ts) in fr.rels.iter_mut().chain(fr.preds.iter_mut()) {
        for t in ts.iter_mut() {
            if let Term::Const(c) = t {
                *t = fresh(&c.clone(), &mut exists, &mut eqs);
            }
        }
    }
    fr.exists = exists;
    fr.eqs = eqs;
    fr.to_rule()
}

impl TranslationContext {
    /// Prepares `goal` over `sid`; `extra` lists further relation symbols of
    /// the signature, whose tuples no rule can introduce.
    pub fn new(goal: &SlrFormula, sid: &Sid, extra: &[(String, usize)]) -> Result<Self, TranslationError> {
        let mut rules = sid.rules.clone();
        let (goal_pred, goal_args) = match goal {
            SlrFormula::Pred(p, ts) => {
                if !sid.predicates().contains(p) {
                    return Err(TranslationError::UnknownPredicate(p.clone()));
                }
                (p.clone(), ts.clone())
            }
            _ => {
                let fv: Vec<String> = goal.free_vars().into_iter().collect();
                let head = sid.fresh_predicate("A_phi");
                for (p, _) in goal.predicate_atoms() {
                    if !sid.predicates().contains(p) {
                        return Err(TranslationError::UnknownPredicate(p.to_string()));
                    }
                }
                rules.push(Rule { head: head.clone(), params: fv.clone(), body: goal.clone() });
                (head, fv.into_iter().map(Term::Var).collect())
            }
        };
        let full = Sid::new(rules);
        if let Some(&a) = full.arities().get(&goal_pred) {
            if a != goal_args.len() {
                return Err(SlrError::Arity { name: goal_pred, expected: a, got: goal_args.len() }.into());
            }
        }
        let reach = full.reachable(&goal_pred);
        let kept = Sid::new(full.rules.into_iter().filter(|r| reach.contains(&r.head)).collect());
        let prepared = Sid::new(split_relation_atoms(&kept).rules.iter().map(lift_constants).collect());
        debug_assert!(crate::slr::has_single_relation_occurrences(&prepared));
        let flat: Vec<FlatRule> = prepared.rules.iter().map(flatten_rule).collect();

        let mut relations: BTreeMap<String, usize> = BTreeMap::new();
        for r in &flat {
            for (name, ts) in &r.rels {
                if let Some(&a) = relations.get(name) {
                    if a != ts.len() {
                        return Err(TranslationError::Arity { name: name.clone(), expected: a, got: ts.len() });
                    }
                }
                relations.insert(name.clone(), ts.len());
            }
        }
        for (name, a) in extra {
            match relations.get(name) {
                Some(&b) if b != *a => return Err(TranslationError::Arity { name: name.clone(), expected: *a, got: b }),
                _ => {
                    relations.insert(name.clone(), *a);
                }
            }
        }
        let relations: Vec<(String, usize)> = relations.into_iter().collect();
        let max_children = flat.iter().map(|r| r.preds.len()).max().unwrap_or(0);
        let slots = flat.iter().map(|r| r.variables().len()).max().unwrap_or(0);
        let var_index = flat.iter().map(|r| r.variables().into_iter().enumerate().map(|(i, x)| (x, i)).collect()).collect();

        let mut taken: BTreeSet<String> = relations.iter().map(|(r, _)| r.clone()).collect();
        for t in &goal_args {
            taken.insert(t.name().to_string());
        }
        taken.extend(prepared.constants());
        let mut names = Names { root: String::new(), labels: vec![], edges: vec![], coords: vec![], classes: vec![], order: String::new(), taken };
        let claim = |names: &mut Names, base: String| {
            let n = names.fresh(&base);
            names.taken.insert(n.clone());
            n
        };
        names.root = claim(&mut names, "x".into());
        names.labels = (1..=flat.len()).map(|i| claim(&mut names, format!("X{i}"))).collect();
        names.edges = (1..=max_children).map(|j| claim(&mut names, format!("Y{j}"))).collect();
        names.coords = relations.iter().map(|(r, a)| (1..=*a).map(|l| claim(&mut names, format!("Z_{r}_{l}"))).collect()).collect();
        names.classes = (0..slots).map(|q| (0..=slots).map(|p| claim(&mut names, format!("K{q}_{p}"))).collect()).collect();
        names.order = claim(&mut names, "T".into());
        for base in ["y", "y1", "y2", "w", "w1", "u", "z"] {
            let n = names.fresh(base);
            names.taken.insert(n);
        }
        Ok(TranslationContext { sid: prepared, goal: goal_pred, goal_args, relations, max_children, slots, encoding: LinkEncoding::default(), rules: flat, var_index, names })
    }

    pub fn with_encoding(mut self, encoding: LinkEncoding) -> Self {
        self.encoding = encoding;
        self
    }

    fn rel_index(&self, name: &str) -> Option<usize> {
        self.relations.iter().position(|(r, _)| r == name)
    }

    /// Bound variable names that cannot capture goal variables or constants.
    fn bv(&self, base: &str) -> String {
        let mut name = base.to_string();
        while self.goal_args.iter().any(|t| t.name() == name) || self.names.coords.iter().flatten().any(|z| *z == name) || self.sid.constants().contains(&name) {
            name.push('\'');
        }
        name
    }

    fn labelled(&self, y: &str) -> SoFormula {
        disj(self.names.labels.iter().map(|x| atom(x, &[y])).collect())
    }

    fn defining(&self, pred: &str) -> Vec<usize> {
        self.rules.iter().enumerate().filter(|(_, r)| r.head == pred).map(|(i, _)| i).collect()
    }

    /// Rules with an atom over relation `k`, with that atom's terms.
    fn occurrences(&self, k: usize) -> Vec<(usize, &Vec<Term>)> {
        let name = &self.relations[k].0;
        self.rules.iter().enumerate().filter_map(|(i, r)| r.rels.iter().find(|(n, _)| n == name).map(|(_, ts)| (i, ts))).collect()
    }

    fn local(&self, rule: usize, t: &Term) -> Option<usize> {
        t.as_var().and_then(|x| self.var_index[rule].get(x).copied())
    }

    /// Counts of rules, children, relations and generated second-order variables.
    pub fn stats(&self, formula: &SoFormula) -> TranslationStats {
        let n = &self.names;
        let so = n.labels.len() + n.edges.len() + n.coords.iter().map(Vec::len).sum::<usize>() + if self.encoding == LinkEncoding::Classes { n.classes.iter().map(Vec::len).sum::<usize>() } else { 0 };
        TranslationStats { rules: self.rules.len(), max_children: self.max_children, relations: self.relations.len(), so_variables: so, size: formula.size() }
    }

    /// Evaluation domain: `Dom(s)` padded with enough elements for a smallest derivation tree,
    /// together with the values the store gives the goal's variables.
    pub fn domain(&self, s: &Structure, store: &Store) -> BTreeSet<Elem> {
        let mut d = pad(s, derivation_size_bound(s, &self.sid)).domain;
        d.extend(self.goal_args.iter().filter_map(|t| t.as_var().and_then(|x| store.get(x))));
        d
    }
}

/// Items 1–5: `x` is the root of a tree whose vertices are labelled by
/// rules and whose edges match the predicate atoms of the labels.
pub fn build_tree_formula(ctx: &TranslationContext) -> SoFormula {
    let n = &ctx.names;
    let (x, y, w, u) = (n.root.as_str(), ctx.bv("y"), ctx.bv("w"), ctx.bv("u"));
    let (y, w, u) = (y.as_str(), w.as_str(), u.as_str());
    let any_edge = |a: &str, b: &str| disj(n.edges.iter().map(|e| atom(e, &[a, b])).collect());
    let mut parts = Vec::new();
    // 1. the root is labelled by a rule for the goal
    parts.push(disj(ctx.defining(&ctx.goal).iter().map(|&i| atom(&n.labels[i], &[x])).collect()));
    // 2. labels are pairwise disjoint
    let mut disjoint = Vec::new();
    for i in 0..n.labels.len() {
        for j in i + 1..n.labels.len() {
            disjoint.push(SoFormula::not(SoFormula::and(atom(&n.labels[i], &[y]), atom(&n.labels[j], &[y]))));
        }
    }
    parts.push(forall(&[y], conj(disjoint)));
    if !n.edges.is_empty() {
        // 3. reachability from the root: edges embed into a strict order,
        // which together with 4 leaves the root as the only source
        let t = n.order.as_str();
        let z = ctx.bv("z");
        let order = conj(vec![
            forall(&[u, w], implies(any_edge(u, w), atom(t, &[u, w]))),
            forall(&[u, w, &z], implies(SoFormula::and(atom(t, &[u, w]), atom(t, &[w, &z])), atom(t, &[u, &z]))),
            forall(&[u], SoFormula::not(atom(t, &[u, u]))),
        ]);
        parts.push(SoFormula::exists_so(t, 2, order));
        // edges leave labelled vertices only
        parts.push(forall(&[u, w], implies(any_edge(u, w), ctx.labelled(u))));
    }
    // 4. one incoming edge for every labelled vertex but the root, none for the root
    let mut incoming = vec![implies(SoFormula::neq(v(w), v(x)), SoFormula::exists_fo(&[u], any_edge(u, w)))];
    incoming.push(forall(&[u], SoFormula::not(any_edge(u, x))));
    let u2 = ctx.bv("u1");
    for (a, ea) in n.edges.iter().enumerate() {
        for (b, eb) in n.edges.iter().enumerate() {
            if b < a {
                continue;
            }
            let both = SoFormula::and(atom(ea, &[u, w]), atom(eb, &[&u2, w]));
            incoming.push(forall(&[u, &u2], implies(both, if a == b { eq(u, &u2) } else { SoFormula::False })));
        }
    }
    parts.push(forall(&[w], implies(ctx.labelled(w), conj(incoming))));
    // 5. the children of a vertex match the predicate atoms of its rule
    let w1 = ctx.bv("w1");
    let mut shape = Vec::new();
    for (i, r) in ctx.rules.iter().enumerate() {
        let mut here = Vec::new();
        for (l, e) in n.edges.iter().enumerate() {
            if let Some((b, _)) = r.preds.get(l) {
                let targets = disj(ctx.defining(b).iter().map(|&j| atom(&n.labels[j], &[w])).collect());
                here.push(SoFormula::exists_fo(&[w], SoFormula::and(atom(e, &[y, w]), targets)));
                here.push(forall(&[w, &w1], implies(SoFormula::and(atom(e, &[y, w]), atom(e, &[y, &w1])), eq(w, &w1))));
            } else {
                here.push(forall(&[w], SoFormula::not(atom(e, &[y, w]))));
            }
        }
        shape.push(implies(atom(&n.labels[i], &[y]), conj(here)));
    }
    parts.push(forall(&[y], conj(shape)));
    conj(parts)
}

/// Closure of a block of monadic sets, one per variable slot, under the
/// variable flow of the tree.
fn closed(ctx: &TranslationContext, sets: &[String]) -> SoFormula {
    let n = &ctx.names;
    let (y, w) = (ctx.bv("y"), ctx.bv("w"));
    let iff = |a: SoFormula, b: SoFormula| SoFormula::and(implies(a.clone(), b.clone()), implies(b, a));
    let mut local = Vec::new();
    let mut passing = Vec::new();
    for (i, r) in ctx.rules.iter().enumerate() {
        let links: Vec<SoFormula> = r
            .eqs
            .iter()
            .filter_map(|(a, b)| Some((ctx.local(i, a)?, ctx.local(i, b)?)))
            .filter(|(a, b)| a != b)
            .map(|(a, b)| iff(atom(&sets[a], &[&y]), atom(&sets[b], &[&y])))
            .collect();
        if !links.is_empty() {
            local.push(implies(atom(&n.labels[i], &[&y]), conj(links)));
        }
        for (l, (_, ts)) in r.preds.iter().enumerate() {
            let flows: Vec<SoFormula> = ts
                .iter()
                .enumerate()
                .filter_map(|(q, t)| Some((q, ctx.local(i, t)?)))
                .map(|(q, a)| iff(atom(&sets[a], &[&y]), atom(&sets[q], &[&w])))
                .collect();
            if !flows.is_empty() {
                passing.push(implies(SoFormula::and(atom(&n.labels[i], &[&y]), atom(&n.edges[l], &[&y, &w])), conj(flows)));
            }
        }
    }
    conj(vec![forall(&[&y], conj(local)), forall(&[&y, &w], conj(passing))])
}

fn set_names(ctx: &TranslationContext, base: &str) -> Vec<String> {
    (0..ctx.slots).map(|q| ctx.names.fresh(&format!("{base}{q}"))).collect()
}

fn forall_sets(sets: &[String], body: SoFormula) -> SoFormula {
    sets.iter().rev().fold(body, |acc, s| SoFormula::forall_so(s, 1, acc))
}

/// Clauses (i)–(vii) in the chosen encoding of the variable flow.
pub fn build_link_formula(ctx: &TranslationContext) -> SoFormula {
    let mut parts = tuple_clauses(ctx);
    parts.extend(match ctx.encoding {
        LinkEncoding::Classes => class_clauses(ctx),
        LinkEncoding::FlowSets => flow_clauses(ctx),
    });
    conj(parts)
}

/// (i)–(iv): the labelled atoms introduce exactly the tuples of the structure.
fn tuple_clauses(ctx: &TranslationContext) -> Vec<SoFormula> {
    let n = &ctx.names;
    let (y, y1) = (ctx.bv("y"), ctx.bv("y1"));
    let mut parts = Vec::new();
    for (k, (r, arity)) in ctx.relations.iter().enumerate() {
        let zs: Vec<String> = (1..=*arity).map(|l| ctx.bv(&format!("z{l}"))).collect();
        let z: Vec<&str> = zs.iter().map(String::as_str).collect();
        let rel = SoFormula::Rel(r.clone(), z.iter().map(|a| v(a)).collect());
        let occ: Vec<usize> = ctx.occurrences(k).into_iter().map(|(i, _)| i).collect();
        let carries = |at: &str| disj(occ.iter().map(|&i| atom(&n.labels[i], &[at])).collect());
        let hits = |at: &str| conj((0..*arity).map(|l| atom(&n.coords[k][l], &[at, z[l]])).collect());
        // (i) coordinates are functional
        let (za, zb) = (ctx.bv("z"), ctx.bv("z'"));
        for l in 0..*arity {
            let c = &n.coords[k][l];
            parts.push(forall(&[&y, &za, &zb], implies(SoFormula::and(atom(c, &[&y, &za]), atom(c, &[&y, &zb])), eq(&za, &zb))));
        }
        // (ii) every labelled atom introduces a tuple
        for &i in &occ {
            parts.push(forall(&[&y], implies(atom(&n.labels[i], &[&y]), SoFormula::exists_fo(&z, SoFormula::and(rel.clone(), hits(&y))))));
        }
        // (iii) distinct vertices introduce distinct tuples
        if !occ.is_empty() {
            let clash = conj(vec![SoFormula::neq(v(&y), v(&y1)), carries(&y), carries(&y1), hits(&y), hits(&y1)]);
            parts.push(forall(&z, implies(rel.clone(), forall(&[&y, &y1], SoFormula::not(clash)))));
        }
        // (iv) every tuple is introduced
        parts.push(forall(&z, implies(rel.clone(), SoFormula::exists_fo(&[&y], SoFormula::and(carries(&y), hits(&y))))));
    }
    parts
}

/// (v)–(vii) with class identifiers. Every flow node of a labelled vertex
/// lies in one class: `(0, e)` when its value is the element `e`,
/// `(p + 1, w)` when it shares a fresh value with flow node `(w, p)`.
/// Equalities and parameter passing keep the class, disequalities
/// separate classes.
fn class_clauses(ctx: &TranslationContext) -> Vec<SoFormula> {
    let n = &ctx.names;
    let (y, y1) = (ctx.bv("y"), ctx.bv("y1"));
    let (w, w1, e) = (ctx.bv("w"), ctx.bv("w1"), ctx.bv("e"));
    let mut parts = Vec::new();
    let layers = 0..=ctx.slots;
    let class = |q: usize, p: usize, at: &str, id: &str| atom(&n.classes[q][p], &[at, id]);
    let has_value = |at: &str, q: usize, t: Term| SoFormula::Var(n.classes[q][0].clone(), vec![v(at), t]);
    let same = |a: usize, at: &str, b: usize, other: &str, equal: bool| {
        conj(layers.clone().map(|p| forall(&[&w], implies(class(a, p, at, &w), if equal { class(b, p, other, &w) } else { SoFormula::not(class(b, p, other, &w)) }))).collect())
    };
    // a flow node has at most one class; a fresh class contains the flow
    // node it is named after
    let mut functional = Vec::new();
    for q in 0..ctx.slots {
        for p in layers.clone() {
            functional.push(forall(&[&w, &w1], implies(SoFormula::and(class(q, p, &y, &w), class(q, p, &y, &w1)), eq(&w, &w1))));
            for p1 in p + 1..=ctx.slots {
                functional.push(SoFormula::not(SoFormula::and(SoFormula::exists_fo(&[&w], class(q, p, &y, &w)), SoFormula::exists_fo(&[&w], class(q, p1, &y, &w)))));
            }
            if p > 0 {
                functional.push(forall(&[&w], implies(class(q, p, &y, &w), class(p - 1, p, &w, &w))));
            }
        }
    }
    parts.push(forall(&[&y], conj(functional)));
    for (i, r) in ctx.rules.iter().enumerate() {
        let local = |t: &Term| ctx.local(i, t).expect("rule variable");
        let mut here: Vec<SoFormula> = (0..ctx.var_index[i].len()).map(|q| disj(layers.clone().map(|p| SoFormula::exists_fo(&[&w], class(q, p, &y, &w))).collect())).collect();
        for (equal, pairs) in [(true, &r.eqs), (false, &r.neqs)] {
            for (a, b) in pairs.iter() {
                let rel = |f: SoFormula| if equal { f } else { SoFormula::not(f) };
                here.push(match (a, b) {
                    (Term::Var(_), Term::Var(_)) => same(local(a), &y, local(b), &y, equal),
                    (Term::Var(_), Term::Const(_)) => rel(has_value(&y, local(a), b.clone())),
                    (Term::Const(_), Term::Var(_)) => rel(has_value(&y, local(b), a.clone())),
                    _ => rel(SoFormula::Eq(a.clone(), b.clone())),
                });
            }
        }
        for (name, ts) in &r.rels {
            let k = ctx.rel_index(name).expect("relation of the SID");
            for (l, t) in ts.iter().enumerate() {
                here.push(forall(&[&e], implies(atom(&n.coords[k][l], &[&y, &e]), has_value(&y, local(t), v(&e)))));
            }
        }
        parts.push(forall(&[&y], implies(atom(&n.labels[i], &[&y]), conj(here))));
        let mut passing = Vec::new();
        for (l, (_, ts)) in r.preds.iter().enumerate() {
            let flows = conj(ts.iter().enumerate().map(|(q, t)| same(local(t), &y, q, &y1, true)).collect());
            passing.push(implies(atom(&n.edges[l], &[&y, &y1]), flows));
        }
        if !passing.is_empty() {
            parts.push(forall(&[&y], implies(atom(&n.labels[i], &[&y]), forall(&[&y1], conj(passing)))));
        }
    }
    // the root's parameters take the goal's arguments
    let x = n.root.as_str();
    for i in ctx.defining(&ctx.goal) {
        let args = ctx.goal_args.iter().zip(&ctx.rules[i].params).map(|(t, p)| has_value(x, ctx.var_index[i][p], t.clone())).collect();
        parts.push(implies(atom(&n.labels[i], &[x]), conj(args)));
    }
    parts
}

/// Where the value of an anchored flow node comes from.
#[derive(Clone, Debug, PartialEq, Eq)]
enum Source {
    /// Coordinate `l` of the rule's atom over relation `k`.
    Coord(usize, usize),
    Const(String),
    /// Goal argument `j`, at the root.
    Root(usize),
}

#[derive(Clone, Debug)]
struct Anchor {
    rule: usize,
    var: usize,
    source: Source,
}

fn anchors(ctx: &TranslationContext) -> Vec<Anchor> {
    let mut out = Vec::new();
    for k in 0..ctx.relations.len() {
        for (i, ts) in ctx.occurrences(k) {
            for (l, t) in ts.iter().enumerate() {
                if let Some(var) = ctx.local(i, t) {
                    out.push(Anchor { rule: i, var, source: Source::Coord(k, l) });
                }
            }
        }
    }
    for (i, r) in ctx.rules.iter().enumerate() {
        for (a, b) in &r.eqs {
            match (a, b) {
                (Term::Var(_), Term::Const(c)) => out.push(Anchor { rule: i, var: ctx.local(i, a).expect("rule variable"), source: Source::Const(c.clone()) }),
                (Term::Const(c), Term::Var(_)) => out.push(Anchor { rule: i, var: ctx.local(i, b).expect("rule variable"), source: Source::Const(c.clone()) }),
                _ => {}
            }
        }
    }
    for i in ctx.defining(&ctx.goal) {
        for (j, p) in ctx.rules[i].params.iter().enumerate() {
            out.push(Anchor { rule: i, var: ctx.var_index[i][p], source: Source::Root(j) });
        }
    }
    out
}

fn exists_sets(sets: &[String], body: SoFormula) -> SoFormula {
    sets.iter().rev().fold(body, |acc, s| SoFormula::exists_so(s, 1, acc))
}

/// The value of anchor `a` at `vertex` equals (or differs from) that of
/// `b` at `other`. Coordinates are functional and defined wherever the
/// rule has the atom, so a single universal suffices.
fn compare(ctx: &TranslationContext, a: &Anchor, vertex: &str, b: &Anchor, other: &str, equal: bool) -> SoFormula {
    let n = &ctx.names;
    let term = |s: &Source| match s {
        Source::Const(c) => Some(Term::Const(c.clone())),
        Source::Root(j) => Some(ctx.goal_args[*j].clone()),
        Source::Coord(..) => None,
    };
    let coord = |s: &Source, at: &str, t: Term| match s {
        Source::Coord(k, l) => SoFormula::Var(n.coords[*k][*l].clone(), vec![v(at), t]),
        _ => unreachable!("coordinate source"),
    };
    let rel = |f: SoFormula| if equal { f } else { SoFormula::not(f) };
    match (term(&a.source), term(&b.source)) {
        (Some(s), Some(t)) => rel(SoFormula::Eq(s, t)),
        (None, Some(t)) => rel(coord(&a.source, vertex, t)),
        (Some(s), None) => rel(coord(&b.source, other, s)),
        (None, None) => {
            let z = ctx.bv("z");
            forall(&[&z], implies(coord(&a.source, vertex, v(&z)), rel(coord(&b.source, other, v(&z)))))
        }
    }
}

/// Every vertex (or the root, for goal anchors) labelled by `b`'s rule
/// whose flow node for `b` is in `sets`.
fn each_reached(ctx: &TranslationContext, sets: &[String], b: &Anchor, var: &str, body: impl Fn(&str) -> SoFormula) -> SoFormula {
    let n = &ctx.names;
    if matches!(b.source, Source::Root(_)) {
        let x = n.root.as_str();
        return implies(SoFormula::and(atom(&n.labels[b.rule], &[x]), atom(&sets[b.var], &[x])), body(x));
    }
    forall(&[var], implies(SoFormula::and(atom(&n.labels[b.rule], &[var]), atom(&sets[b.var], &[var])), body(var)))
}

fn each_vertex(ctx: &TranslationContext, a: &Anchor, var: &str, body: impl Fn(&str) -> SoFormula) -> SoFormula {
    let n = &ctx.names;
    if matches!(a.source, Source::Root(_)) {
        let x = n.root.as_str();
        return implies(atom(&n.labels[a.rule], &[x]), body(x));
    }
    forall(&[var], implies(atom(&n.labels[a.rule], &[var]), body(var)))
}

/// (v)–(vii) with the flow closure: for every anchored flow node, a block
/// of monadic sets closed under the flow and containing it witnesses that
/// every anchor it reaches carries the same value; a disequality needs
/// blocks for both sides that separate them and whose anchors differ.
fn flow_clauses(ctx: &TranslationContext) -> Vec<SoFormula> {
    let n = &ctx.names;
    let (y, y1, y2) = (ctx.bv("y"), ctx.bv("y1"), ctx.bv("y2"));
    let mut parts = Vec::new();
    for (i, r) in ctx.rules.iter().enumerate() {
        let mut fixed = Vec::new();
        for (a, b) in &r.eqs {
            if let (Term::Const(_), Term::Const(_)) = (a, b) {
                fixed.push(SoFormula::Eq(a.clone(), b.clone()));
            }
        }
        for (a, b) in &r.neqs {
            if let (Term::Const(_), Term::Const(_)) = (a, b) {
                fixed.push(SoFormula::neq(a.clone(), b.clone()));
            }
        }
        if !fixed.is_empty() {
            parts.push(forall(&[&y], implies(atom(&n.labels[i], &[&y]), conj(fixed))));
        }
    }
    let anchors = anchors(ctx);
    let sets = set_names(ctx, "S");
    for (ai, a) in anchors.iter().enumerate() {
        let targets = |at: &str| conj(anchors[ai..].iter().map(|b| each_reached(ctx, &sets, b, &y1, |other| compare(ctx, a, at, b, other, true))).collect());
        parts.push(each_vertex(ctx, a, &y, |at| exists_sets(&sets, conj(vec![closed(ctx, &sets), atom(&sets[a.var], &[at]), targets(at)]))));
    }
    let other = set_names(ctx, "U");
    for (i, r) in ctx.rules.iter().enumerate() {
        for (s, t) in &r.neqs {
            let (ls, lt) = (ctx.local(i, s), ctx.local(i, t));
            let body = |at: &str| match (ls, lt) {
                (Some(a), Some(b)) => {
                    let pairs = conj(
                        anchors
                            .iter()
                            .map(|p| each_reached(ctx, &sets, p, &y1, |at1| conj(anchors.iter().map(|q| each_reached(ctx, &other, q, &y2, |at2| compare(ctx, p, at1, q, at2, false))).collect())))
                            .collect(),
                    );
                    let block = conj(vec![
                        closed(ctx, &sets),
                        closed(ctx, &other),
                        atom(&sets[a], &[at]),
                        atom(&other[b], &[at]),
                        SoFormula::not(atom(&sets[b], &[at])),
                        pairs,
                    ]);
                    exists_sets(&sets, exists_sets(&other, block))
                }
                (Some(a), None) | (None, Some(a)) => {
                    let c = if ls.is_some() { t } else { s };
                    let constant = Anchor { rule: i, var: a, source: Source::Const(c.name().to_string()) };
                    let pairs = conj(anchors.iter().map(|p| each_reached(ctx, &sets, p, &y1, |at1| compare(ctx, p, at1, &constant, at, false))).collect());
                    exists_sets(&sets, conj(vec![closed(ctx, &sets), atom(&sets[a], &[at]), pairs]))
                }
                (None, None) => SoFormula::True,
            };
            parts.push(forall(&[&y], implies(atom(&n.labels[i], &[&y]), body(&y))));
        }
    }
    parts
}

/// The flow closure between two tree vertices `from` and `to` as a
/// standalone formula: every block of monadic sets closed under the flow
/// and containing the source flow node contains the target one.
pub fn emit_param_tracking(ctx: &TranslationContext, kind: &Tracking, from: &str, to: &str) -> Result<SoFormula, TranslationError> {
    let coord_var = |rule: usize, rel: &str, pos: usize| -> Result<usize, TranslationError> {
        let r = ctx.rules.get(rule).ok_or_else(|| TranslationError::UnknownIndex(format!("rule {rule}")))?;
        let (_, ts) = r.rels.iter().find(|(n, _)| n == rel).ok_or_else(|| TranslationError::UnknownIndex(format!("relation {rel} in rule {rule}")))?;
        let t = ts.get(pos).ok_or_else(|| TranslationError::UnknownIndex(format!("coordinate {pos} of {rel}")))?;
        ctx.local(rule, t).ok_or_else(|| TranslationError::UnknownIndex(format!("coordinate {pos} of {rel} is a constant")))
    };
    let (i, a, j, b) = match kind {
        Tracking::IsEq { i, k, m, j, l, n } => (*i, coord_var(*i, k, *m)?, *j, coord_var(*j, l, *n)?),
        Tracking::VarEq { i, var, j, k, r } => {
            let rule = ctx.var_index.get(*i).ok_or_else(|| TranslationError::UnknownIndex(format!("rule {i}")))?;
            let a = *rule.get(var).ok_or_else(|| TranslationError::UnknownIndex(format!("variable {var} of rule {i}")))?;
            (*i, a, *j, coord_var(*j, k, *r)?)
        }
    };
    let n = &ctx.names;
    let sets = set_names(ctx, "S");
    let body = forall_sets(&sets, implies(SoFormula::and(closed(ctx, &sets), atom(&sets[a], &[from])), atom(&sets[b], &[to])));
    Ok(conj(vec![atom(&n.labels[i], &[from]), atom(&n.labels[j], &[to]), body]))
}

/// `𝔗 ∧ 𝔉` with the root, labels, edges and coordinates free.
pub fn open_formula(ctx: &TranslationContext) -> SoFormula {
    SoFormula::and(build_tree_formula(ctx), build_link_formula(ctx))
}

/// Closes [`open_formula`] under the existentials for the tree. The root
/// is bound innermost so that clauses not mentioning it are shared.
pub fn close_formula(ctx: &TranslationContext, body: SoFormula) -> SoFormula {
    let n = &ctx.names;
    let classes = if ctx.encoding == LinkEncoding::Classes { n.classes.as_slice() } else { &[] };
    let binary = n.edges.iter().chain(n.coords.iter().flatten()).chain(classes.iter().flatten());
    let so: Vec<(&String, usize)> = n.labels.iter().map(|x| (x, 1)).chain(binary.map(|r| (r, 2))).collect();
    let f = SoFormula::ExistsFo(n.root.clone(), Box::new(body));
    so.into_iter().rev().fold(f, |acc, (r, a)| SoFormula::exists_so(r, a, acc))
}

/// SO formula equivalent to `goal` over `sid`; the goal's variables are
/// its only free variables.
pub fn translate(goal: &SlrFormula, sid: &Sid) -> Result<SoFormula, TranslationError> {
    translate_with(goal, sid, &[])
}

pub fn translate_with(goal: &SlrFormula, sid: &Sid, extra: &[(String, usize)]) -> Result<SoFormula, TranslationError> {
    let ctx = TranslationContext::new(goal, sid, extra)?;
    Ok(close_formula(&ctx, open_formula(&ctx)))
}

fn sat_route() -> EvalOptions {
    EvalOptions { route: EvalRoute::Sat, ..Default::default() }
}

/// Relations of `sid` missing from `s` are declared empty; relations of
/// `s` are added to the translation's signature.
fn align(s: &Structure, sid: &Sid) -> Result<(Structure, Vec<(String, usize)>), TranslationError> {
    let mut s = s.clone();
    for (r, a) in sid.relations() {
        if !s.signature().has_relation(&r) {
            s.declare_relation(&r, a).map_err(SoError::from)?;
        }
    }
    Ok((s.clone(), s.signature().relations().to_vec()))
}

/// Decides `(s, store) ⊨ goal` by evaluating the translation over the
/// padded domain of [`TranslationContext::domain`].
pub fn check_via_so(s: &Structure, store: &Store, goal: &SlrFormula, sid: &Sid) -> Result<bool, TranslationError> {
    check_via_so_with(s, store, goal, sid, LinkEncoding::default())
}

pub fn check_via_so_with(s: &Structure, store: &Store, goal: &SlrFormula, sid: &Sid, encoding: LinkEncoding) -> Result<bool, TranslationError> {
    SoChecker::new(s.signature(), goal, sid, encoding)?.check(s, store)
}

/// A closed translation built once and evaluated on many structures
/// over one signature.
pub struct SoChecker {
    ctx: TranslationContext,
    formula: SoFormula,
    sid: Sid,
}

impl SoChecker {
    pub fn new(sig: &Signature, goal: &SlrFormula, sid: &Sid, encoding: LinkEncoding) -> Result<Self, TranslationError> {
        let (_, extra) = align(&Structure::new(sig.clone()), sid)?;
        let ctx = TranslationContext::new(goal, sid, &extra)?.with_encoding(encoding);
        let formula = close_formula(&ctx, open_formula(&ctx));
        Ok(SoChecker { ctx, formula, sid: sid.clone() })
    }

    pub fn formula(&self) -> &SoFormula {
        &self.formula
    }

    pub fn context(&self) -> &TranslationContext {
        &self.ctx
    }

    pub fn check(&self, s: &Structure, store: &Store) -> Result<bool, TranslationError> {
        let (s, _) = align(s, &self.sid)?;
        Ok(eval_so_with(&s, &self.ctx.domain(&s, store), store, &self.formula, sat_route())?)
    }
}

/// From an accepting derivation, the store that interprets the root,
/// labels, edges and coordinates, with the domain hosting its vertices.
pub fn derivation_witness(ctx: &TranslationContext, s: &Structure, store: &Store) -> Result<Option<(Store, BTreeSet<Elem>)>, TranslationError> {
    let goal = SlrFormula::Pred(ctx.goal.clone(), ctx.goal_args.clone());
    let Some(top) = find_derivation(s, store, &goal, &ctx.sid)? else { return Ok(None) };
    let root = top.children.into_iter().next().expect("goal derivation");
    let mut order = Vec::new();
    let mut stack = vec![&root];
    while let Some(d) = stack.pop() {
        order.push(d);
        stack.extend(d.children.iter().rev());
    }
    let mut domain = ctx.domain(s, store);
    let vertices: Vec<Elem> = s.fresh_ids(order.len());
    domain.extend(vertices.iter().copied());
    let id: BTreeMap<*const crate::slr::Derivation, Elem> = order.iter().zip(&vertices).map(|(d, &e)| (*d as *const _, e)).collect();
    let n = &ctx.names;
    let mut labels = vec![BTreeSet::new(); n.labels.len()];
    let mut edges = vec![BTreeSet::new(); n.edges.len()];
    let mut coords: Vec<Vec<BTreeSet<Vec<Elem>>>> = ctx.relations.iter().map(|(_, a)| vec![BTreeSet::new(); *a]).collect();
    for d in &order {
        let me = id[&(*d as *const _)];
        labels[d.rule.expect("rule index")].insert(vec![me]);
        for (l, c) in d.children.iter().enumerate() {
            edges[l].insert(vec![me, id[&(c as *const _)]]);
        }
        for (r, t) in &d.tuples {
            let k = ctx.rel_index(r).expect("relation of the SID");
            for (l, e) in t.iter().enumerate() {
                coords[k][l].insert(vec![me, *e]);
            }
        }
    }
    // values in the domain name their class, fresh values the first flow
    // node carrying them
    let mut fresh: BTreeMap<Elem, (usize, Elem)> = BTreeMap::new();
    let mut classes = vec![vec![BTreeSet::new(); ctx.slots + 1]; ctx.slots];
    for d in &order {
        let me = id[&(*d as *const _)];
        for (q, var) in ctx.rules[d.rule.expect("rule index")].variables().iter().enumerate() {
            let val = d.values[var];
            let (p, w) = if domain.contains(&val) { (0, val) } else { *fresh.entry(val).or_insert((q + 1, me)) };
            classes[q][p].insert(vec![me, w]);
        }
    }
    let mut out = store.clone();
    out.set(&n.root, vertices[0]);
    for (q, row) in classes.into_iter().enumerate() {
        for (p, rel) in row.into_iter().enumerate() {
            out.set_relation(&n.classes[q][p], 2, rel).map_err(SoError::from)?;
        }
    }
    let so = |out: &mut Store, name: &str, arity: usize, rel: BTreeSet<Vec<Elem>>| out.set_relation(name, arity, rel).map_err(SoError::from);
    for (x, rel) in n.labels.iter().zip(labels) {
        so(&mut out, x, 1, rel)?;
    }
    for (y, rel) in n.edges.iter().zip(edges) {
        so(&mut out, y, 2, rel)?;
    }
    for (k, zs) in n.coords.iter().enumerate() {
        for (z, rel) in zs.iter().zip(std::mem::take(&mut coords[k])) {
            so(&mut out, z, 2, rel)?;
        }
    }
    Ok(Some((out, domain)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slr::{check_slr, parse_sid, parse_sid_with, parse_slr_with, ParseContext};
    use crate::so::{eval_so_naive, parse_so_with};

    const CHAIN: &str = "Chain(x, y) <- exists z . C(x) * I(x, z) * Chain(z, y) ;
        Chain(x, y) <- emp * x = y ;";

    fn st(text: &str) -> Structure {
        Structure::parse(text).unwrap()
    }

    fn goal(text: &str, sid: &Sid) -> SlrFormula {
        parse_slr_with(text, &ParseContext::new().with_sid(sid)).unwrap()
    }

    #[test]
    fn closed_translation_of_constant_goal() {
        let ctx = ParseContext::new().with_constants(["c1", "c2"]);
        let sid = parse_sid_with("A(x1, x2) <- R(x1, x2) ;", &ctx).unwrap();
        let g = parse_slr_with("A(c1, c2)", &ctx.clone().with_sid(&sid)).unwrap();
        let f = translate(&g, &sid).unwrap();
        assert!(f.free_fo().is_empty() && f.free_so().is_empty());
        let yes = st("rel R 2\nconst c1 1\nconst c2 2\ntuple R 1 2");
        let no = st("rel R 2\nconst c1 2\nconst c2 1\ntuple R 1 2");
        assert!(check_via_so(&yes, &Store::new(), &g, &sid).unwrap());
        assert!(!check_via_so(&no, &Store::new(), &g, &sid).unwrap());
    }

    #[test]
    fn chain_matches_checker() {
        let sid = parse_sid(CHAIN).unwrap();
        let g = goal("Chain(a, b)", &sid);
        let cases = [
            "rel C 1\nrel I 2\ntuple C 1\ntuple I 1 2",
            "rel C 1\nrel I 2\ntuple C 1\ntuple I 1 2\ntuple C 2\ntuple I 2 3",
            "rel C 1\nrel I 2\ntuple C 1\ntuple I 1 3",
            "rel C 1\nrel I 2\ntuple C 2\ntuple I 1 2",
            "rel C 1\nrel I 2",
        ];
        for text in cases {
            let s = st(text);
            for (a, b) in [(1, 2), (1, 3), (1, 1), (2, 3)] {
                let store = Store::from_pairs(&[("a", a), ("b", b)]);
                let expected = check_slr(&s, &store, &g, &sid).unwrap();
                assert_eq!(check_via_so(&s, &store, &g, &sid).unwrap(), expected, "{text} a={a} b={b}");
            }
        }
    }

    #[test]
    fn predicate_without_rules_is_false() {
        let mut sid = parse_sid("A(x) <- R(x) ;").unwrap();
        sid.rules.push(Rule::new("B", &["x"], SlrFormula::Pred("Q".into(), vec![Term::var("x")])));
        let g = SlrFormula::Pred("B".into(), vec![Term::var("a")]);
        let s = st("rel R 1\ntuple R 1");
        assert!(!check_via_so(&s, &Store::from_pairs(&[("a", 1)]), &g, &sid).unwrap());
        let unknown = SlrFormula::Pred("Z".into(), vec![]);
        assert_eq!(translate(&unknown, &sid), Err(TranslationError::UnknownPredicate("Z".into())));
    }

    #[test]
    fn disequalities_and_sentences() {
        let sid = parse_sid("P(x) <- exists y . R(x, y) * x != y ;").unwrap();
        let g = goal("exists u . P(u)", &sid);
        assert!(check_via_so(&st("rel R 2\ntuple R 1 2"), &Store::new(), &g, &sid).unwrap());
        assert!(!check_via_so(&st("rel R 2\ntuple R 1 1"), &Store::new(), &g, &sid).unwrap());
        let loops = parse_sid("P(x) <- exists y . R(x) * x = y * x != y ;").unwrap();
        let h = goal("exists u . P(u)", &loops);
        assert!(!check_via_so(&st("rel R 1\ntuple R 1"), &Store::new(), &h, &loops).unwrap());
    }

    #[test]
    fn witness_store_satisfies_open_formula() {
        let sid = parse_sid(CHAIN).unwrap();
        let g = goal("Chain(a, b)", &sid);
        let s = st("rel C 1\nrel I 2\ntuple C 1\ntuple I 1 2\ntuple C 2\ntuple I 2 3");
        let store = Store::from_pairs(&[("a", 1), ("b", 3)]);
        let ctx = TranslationContext::new(&g, &sid, &[]).unwrap();
        let (wit, domain) = derivation_witness(&ctx, &s, &store).unwrap().unwrap();
        assert!(eval_so_with(&s, &domain, &wit, &open_formula(&ctx), sat_route()).unwrap());
        let mut broken = wit.clone();
        let x2 = ctx.names.labels[1].clone();
        broken.second_order.remove(&x2);
        broken.set_relation(&x2, 1, BTreeSet::new()).unwrap();
        assert!(!eval_so_with(&s, &domain, &broken, &open_formula(&ctx), sat_route()).unwrap());
    }

    #[test]
    fn tracking_formula_follows_parameters() {
        let sid = parse_sid(CHAIN).unwrap();
        let g = goal("Chain(a, b)", &sid);
        let ctx = TranslationContext::new(&g, &sid, &[]).unwrap();
        // Vertex 10 runs the recursive rule, its child 11 runs it again: the
        // parent's z is the child's x.
        let mut store = Store::from_pairs(&[("p", 10), ("q", 11)]);
        store.set_relation(&ctx.names.labels[0], 1, BTreeSet::from([vec![10], vec![11]])).unwrap();
        store.set_relation(&ctx.names.labels[1], 1, BTreeSet::new()).unwrap();
        store.set_relation(&ctx.names.edges[0], 2, BTreeSet::from([vec![10, 11]])).unwrap();
        let s = st("rel C 1\nrel I 2");
        let domain: BTreeSet<Elem> = BTreeSet::from([10, 11]);
        let check = |kind: Tracking| {
            let f = emit_param_tracking(&ctx, &kind, "p", "q").unwrap();
            eval_so_naive(&s, &domain, &store, &f).unwrap()
        };
        assert!(check(Tracking::IsEq { i: 0, k: "I".into(), m: 1, j: 0, l: "C".into(), n: 0 }));
        assert!(check(Tracking::IsEq { i: 0, k: "I".into(), m: 1, j: 0, l: "I".into(), n: 0 }));
        assert!(!check(Tracking::IsEq { i: 0, k: "C".into(), m: 0, j: 0, l: "C".into(), n: 0 }));
        assert!(!check(Tracking::VarEq { i: 0, var: "y".into(), j: 0, k: "C".into(), r: 0 }));
        let same = emit_param_tracking(&ctx, &Tracking::IsEq { i: 0, k: "C".into(), m: 0, j: 0, l: "I".into(), n: 0 }, "p", "p").unwrap();
        assert!(eval_so_naive(&s, &domain, &store, &same).unwrap());
        assert!(matches!(
            emit_param_tracking(&ctx, &Tracking::VarEq { i: 7, var: "x".into(), j: 0, k: "C".into(), r: 0 }, "p", "q"),
            Err(TranslationError::UnknownIndex(_))
        ));
    }

    #[test]
    fn printed_translation_reparses() {
        let sid = parse_sid(CHAIN).unwrap();
        let g = goal("Chain(a, b)", &sid);
        let f = translate(&g, &sid).unwrap();
        let again = parse_so_with(&f.to_string(), &["a", "b"]).unwrap();
        assert_eq!(again.to_string(), f.to_string());
    }

    #[test]
    fn one_node_trees_on_two_elements() {
        let sid = parse_sid("A(x) <- R(x) ;").unwrap();
        let ctx = TranslationContext::new(&goal("A(a)", &sid), &sid, &[]).unwrap();
        let tree = build_tree_formula(&ctx);
        let s = st("rel R 1");
        let domain: BTreeSet<Elem> = BTreeSet::from([1, 2]);
        for root in [1, 2] {
            for mask in 0..4u32 {
                let label: BTreeSet<Vec<Elem>> = [1, 2].into_iter().filter(|e| mask >> (e - 1) & 1 == 1).map(|e| vec![e]).collect();
                let mut store = Store::from_pairs(&[("a", 1), (ctx.names.root.as_str(), root)]);
                let only_root = label == BTreeSet::from([vec![root]]);
                store.set_relation(&ctx.names.labels[0], 1, label).unwrap();
                assert_eq!(eval_so_naive(&s, &domain, &store, &tree).unwrap(), only_root);
            }
        }
    }

    #[test]
    fn stray_tuples_and_two_images_break_the_links() {
        let sid = parse_sid(CHAIN).unwrap();
        let g = goal("Chain(a, b)", &sid);
        let s = st("rel C 1\nrel I 2\ntuple C 1\ntuple I 1 2");
        let store = Store::from_pairs(&[("a", 1), ("b", 2)]);
        let ctx = TranslationContext::new(&g, &sid, &[]).unwrap();
        let (wit, domain) = derivation_witness(&ctx, &s, &store).unwrap().unwrap();
        let links = build_link_formula(&ctx);
        assert!(eval_so_with(&s, &domain, &wit, &links, sat_route()).unwrap());
        let mut stray = s.clone();
        stray.insert("C", vec![2]).unwrap();
        assert!(!eval_so_with(&stray, &domain, &wit, &links, sat_route()).unwrap());
        let mut two = wit.clone();
        let z = ctx.names.coords[0][0].clone();
        let mut images = two.second_order[&z].1.clone();
        let vertex = images.iter().next().unwrap()[0];
        images.insert(vec![vertex, 2]);
        two.set_relation(&z, 2, images).unwrap();
        assert!(!eval_so_with(&s, &domain, &two, &links, sat_route()).unwrap());
    }

    #[test]
    fn encodings_agree() {
        let sids = [
            (CHAIN, "Chain(a, b)"),
            ("P(x) <- exists y . R(x, y) * x != y * Q(y) ; Q(x) <- emp ; Q(x) <- R(x, x) ;", "P(a)"),
            ("P(x, y) <- R(x) * x != y ; P(x, y) <- exists z . R(z) * S(z, y) * x = z ;", "P(a, b)"),
        ];
        let structures = ["rel R 1\nrel S 2\nrel C 1\nrel I 2", "rel R 2\ntuple R 1 2", "rel R 2\ntuple R 1 1", "rel R 2\ntuple R 1 2\ntuple R 2 2",
            "rel R 1\nrel S 2\ntuple R 1\ntuple S 1 2", "rel C 1\nrel I 2\ntuple C 1\ntuple I 1 2", "rel C 1\nrel I 2\ntuple C 1\ntuple I 1 1"];
        for (text, g) in sids {
            let sid = parse_sid(text).unwrap();
            let g = goal(g, &sid);
            for st_text in structures {
                let s = st(st_text);
                if sid.relations().iter().any(|(r, a)| s.signature().relations().iter().any(|(q, b)| q == r && a != b)) {
                    continue;
                }
                for (a, b) in [(1, 2), (1, 1), (2, 1), (1, 7)] {
                    let store = Store::from_pairs(&[("a", a), ("b", b)]);
                    let expected = check_slr(&s, &store, &g, &sid).unwrap();
                    for enc in [LinkEncoding::Classes, LinkEncoding::FlowSets] {
                        assert_eq!(check_via_so_with(&s, &store, &g, &sid, enc).unwrap(), expected, "{text} on {st_text} a={a} b={b} {enc:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn fresh_values_outside_the_domain() {
        let sid = parse_sid("A() <- exists x y z . x != y * y != z * x != z ;").unwrap();
        let g = SlrFormula::Pred("A".into(), vec![]);
        let s = st("rel R 1");
        assert!(check_slr(&s, &Store::new(), &g, &sid).unwrap());
        assert!(check_via_so(&s, &Store::new(), &g, &sid).unwrap());
        let far = Store::from_pairs(&[("a", 40), ("b", 40)]);
        let chain = parse_sid(CHAIN).unwrap();
        assert!(check_via_so(&s, &far, &goal("Chain(a, b)", &chain), &chain).unwrap());
    }
}
