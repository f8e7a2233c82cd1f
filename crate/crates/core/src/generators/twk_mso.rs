use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::slr::{Rule, Sid, SlrFormula, Term};
use crate::so::{eval_so, padded_type, quantifier_rank, MsoType, Registry, SoFormula};
use crate::structures::{pad, port_name, Elem, Signature, Store, Structure, D_REL};

use super::twk::{argument_maps, bag_params, exists_body, top_body, vars};
use super::GeneratorError;

/// Default bound on the number of discovered types.
pub const DEFAULT_TYPE_CAP: usize = 512;

#[derive(Clone, Copy, Debug)]
pub struct MsoSidOptions {
    pub type_cap: usize,
    /// Only discover types realised by at most this many relation tuples.
    /// The resulting SID is complete for structures up to that size.
    pub tuple_bound: Option<usize>,
}

impl Default for MsoSidOptions {
    fn default() -> Self {
        MsoSidOptions { type_cap: DEFAULT_TYPE_CAP, tuple_bound: None }
    }
}

/// Name of the nullary top predicate of Δ(k, φ).
pub fn mso_top_predicate(k: usize) -> String {
    format!("A_{k}_phi")
}

fn type_predicate(idx: usize) -> String {
    format!("A_t{idx}")
}

struct Discovery {
    registry: Registry,
    types: Vec<MsoType>,
    cost: Vec<usize>,
    index: BTreeMap<MsoType, usize>,
    cap: usize,
}

impl Discovery {
    /// Index of `t`, with `cost` lowered if smaller; `true` when new or improved.
    fn add(&mut self, t: MsoType, cost: usize) -> Result<(usize, bool), GeneratorError> {
        if let Some(&i) = self.index.get(&t) {
            if cost < self.cost[i] {
                self.cost[i] = cost;
                return Ok((i, true));
            }
            return Ok((i, false));
        }
        if self.types.len() == self.cap {
            return Err(GeneratorError::TypeCapExceeded(self.cap));
        }
        let i = self.types.len();
        self.index.insert(t.clone(), i);
        self.types.push(t);
        self.cost.push(cost);
        Ok((i, true))
    }
}

/// Σ-constant placements: each constant sits on a port or on a block of
/// other elements, blocks numbered by first occurrence.
fn constant_placements(m: usize, ports: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..m {
        out = out
            .into_iter()
            .flat_map(|p: Vec<usize>| {
                let blocks = p.iter().filter(|&&v| v >= ports).map(|v| v + 1 - ports).max().unwrap_or(0);
                (0..ports + blocks + 1).map(move |v| {
                    let mut p = p.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    out
}

/// Δ(k, φ): the rules of Δ(k) annotated with rank-qr(φ) types of the
/// structures they derive, with top rules for the types satisfying φ.
/// Without constants, `emp` is a top rule when φ holds on the empty structure.
pub fn gen_twk_mso_sid(k: usize, sig: &Signature, phi: &SoFormula, opts: MsoSidOptions) -> Result<Sid, GeneratorError> {
    if let Some(x) = phi.free_fo().into_iter().chain(phi.free_so()).next() {
        return Err(GeneratorError::NotSentence(x));
    }
    if !phi.is_mso() {
        return Err(GeneratorError::NotMonadic);
    }
    let rank = quantifier_rank(phi);
    if rank > 2 {
        return Err(GeneratorError::RankTooLarge(rank));
    }
    let top = mso_top_predicate(k);
    let m = sig.constants().len();
    let ports: Vec<String> = (1..=k + 1).map(|i| port_name(m, i)).collect();
    for name in [D_REL.to_string(), top.clone()].iter().chain(&ports) {
        if sig.has_relation(name) || sig.has_constant(name) {
            return Err(GeneratorError::ReservedSymbol(name.clone()));
        }
    }
    if let Some(name) = sig.relations().iter().map(|(r, _)| r).chain(sig.constants()).find(|n| n.starts_with("A_t")) {
        return Err(GeneratorError::ReservedSymbol(name.clone()));
    }
    let params = bag_params(k);
    let mut full = sig.clone();
    for p in &ports {
        full.add_constant(p)?;
    }
    let mut d = Discovery { registry: Registry::new(), types: Vec::new(), cost: Vec::new(), index: BTreeMap::new(), cap: opts.type_cap };
    let bound = opts.tuple_bound.unwrap_or(usize::MAX);
    let mut rules: Vec<Rule> = Vec::new();
    let mut queue: VecDeque<usize> = VecDeque::new();

    // ref-rel seeds.
    let sigma_consts: Vec<String> = sig.constants().to_vec();
    let placements = constant_placements(m, k + 1);
    let mut rel_rules: Vec<(usize, SlrFormula)> = Vec::new();
    if bound >= 1 {
        for (r, arity) in sig.relations() {
            for map in argument_maps(*arity, k + 1) {
                for place in &placements {
                    let mut s = Structure::new(full.clone());
                    for (i, p) in ports.iter().enumerate() {
                        s.set_constant(p, i as Elem)?;
                    }
                    for (c, &v) in sigma_consts.iter().zip(place) {
                        s.set_constant(c, v as Elem)?;
                    }
                    s.insert(r, map.iter().map(|&i| i as Elem).collect())?;
                    let t = padded_type(&s, rank, &d.registry)?;
                    let (idx, fresh) = d.add(t, 1)?;
                    if fresh {
                        queue.push_back(idx);
                    }
                    let mut parts = vec![SlrFormula::Rel(r.clone(), map.iter().map(|&i| Term::Var(params[i].clone())).collect())];
                    let terms: Vec<(Term, usize)> = params
                        .iter()
                        .enumerate()
                        .map(|(i, x)| (Term::Var(x.clone()), i))
                        .chain(sigma_consts.iter().zip(place).map(|(c, &v)| (Term::Const(c.clone()), v)))
                        .collect();
                    for i in 0..terms.len() {
                        for j in i + 1..terms.len() {
                            let (a, b) = (terms[i].0.clone(), terms[j].0.clone());
                            parts.push(if terms[i].1 == terms[j].1 { SlrFormula::Eq(a, b) } else { SlrFormula::Neq(a, b) });
                        }
                    }
                    rel_rules.push((idx, SlrFormula::star_all(parts)));
                }
            }
        }
    }

    // ρ_i: a single element named by port i.
    let rho: Vec<MsoType> = ports
        .iter()
        .map(|p| {
            let mut s = Structure::new(Signature::new());
            s.set_constant(p, 0)?;
            Ok(padded_type(&s, rank, &d.registry)?)
        })
        .collect::<Result<_, GeneratorError>>()?;

    // Closure under ref-comp and ref-exists; derived costs are monotone so
    // a first-in-first-out pass reaches the least cost of every type.
    let mut comp: BTreeSet<(usize, usize, usize)> = BTreeSet::new();
    let mut exists: BTreeSet<(usize, usize, usize)> = BTreeSet::new();
    let mut processed: Vec<usize> = Vec::new();
    while let Some(t1) = queue.pop_front() {
        for (i, p) in ports.iter().enumerate() {
            let forgotten = crate::so::abstract_forget(&d.types[t1], p, &d.registry)?;
            let t = crate::so::abstract_glue(&forgotten, &rho[i], &d.registry)?;
            let (idx, fresh) = d.add(t, d.cost[t1])?;
            exists.insert((idx, i, t1));
            if fresh {
                queue.push_back(idx);
            }
        }
        if !processed.contains(&t1) {
            processed.push(t1);
        }
        for &t2 in processed.clone().iter() {
            let c = d.cost[t1].saturating_add(d.cost[t2]);
            if c > bound {
                continue;
            }
            let t = crate::so::abstract_glue(&d.types[t1], &d.types[t2], &d.registry)?;
            let (idx, fresh) = d.add(t, c)?;
            comp.insert((idx, t1.min(t2), t1.max(t2)));
            if fresh {
                queue.push_back(idx);
            }
        }
    }

    let head = |idx: usize, body| Rule { head: type_predicate(idx), params: params.clone(), body };
    let pred = |idx: usize| SlrFormula::Pred(type_predicate(idx), vars(&params));
    for &(t, a, b) in &comp {
        if d.cost[a] + d.cost[b] <= bound {
            rules.push(head(t, SlrFormula::star(pred(a), pred(b))));
        }
    }
    for &(t, i, t1) in &exists {
        rules.push(head(t, exists_body(&params, i, &type_predicate(t1))));
    }
    for (t, body) in rel_rules {
        rules.push(head(t, body));
    }
    for (idx, t) in d.types.iter().enumerate() {
        let rep = d.registry.representative(t).expect("discovered types are registered");
        let padded = pad(&rep, 1 << rank);
        if eval_so(&rep, &padded.domain, &Store::new(), phi)? {
            rules.push(Rule { head: top.clone(), params: vec![], body: top_body(&params, &type_predicate(idx)) });
        }
    }
    if m == 0 {
        let empty = Structure::new(sig.clone());
        if eval_so(&empty, &pad(&empty, 1 << rank).domain, &Store::new(), phi)? {
            rules.push(Rule { head: top.clone(), params: vec![], body: SlrFormula::Emp });
        }
    }
    rules.sort_by(|a, b| a.head.cmp(&b.head).then_with(|| a.to_string().cmp(&b.to_string())));
    rules.dedup();
    Ok(Sid::new(rules))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::gen_twk_sid;
    use crate::so::parse_so;

    fn e() -> Signature {
        Signature::with_relations(&[("E", 2)])
    }

    #[test]
    fn placements_are_canonical() {
        assert_eq!(constant_placements(0, 2), vec![Vec::<usize>::new()]);
        assert_eq!(constant_placements(1, 2).len(), 3);
        // two constants over one port: port/port, port/new, new/port, new/same, new/other
        assert_eq!(constant_placements(2, 1).len(), 5);
    }

    #[test]
    fn rule_shapes_mirror_delta_k() {
        let phi = parse_so("!(exists x. E(x, x))").unwrap();
        let sid = gen_twk_mso_sid(1, &e(), &phi, MsoSidOptions { tuple_bound: Some(2), ..Default::default() }).unwrap();
        let plain = gen_twk_sid(1, &e()).unwrap();
        let shapes: BTreeSet<String> = plain.rules.iter().map(|r| r.to_string()).collect();
        for rule in &sid.rules {
            let mut stripped = rule.to_string();
            for i in (0..sid.rules.len()).rev() {
                stripped = stripped.replace(&type_predicate(i), "A");
            }
            stripped = stripped.replace("A_1_phi", "A_1");
            if let Some(cut) = stripped.find(" * x1 != x2") {
                stripped.replace_range(cut..cut + " * x1 != x2".len(), "");
            }
            assert!(shapes.contains(&stripped), "{stripped}");
        }
        assert!(sid.rules.iter().any(|r| r.head == "A_1_phi"));
    }

    #[test]
    fn unsatisfiable_sentence_has_no_top_rules() {
        let sid = gen_twk_mso_sid(1, &e(), &SoFormula::False, MsoSidOptions { tuple_bound: Some(2), ..Default::default() }).unwrap();
        assert!(sid.rules.iter().all(|r| r.head != "A_1_phi"));
    }

    #[test]
    fn errors() {
        let phi = parse_so("exists x. E(x, x)").unwrap();
        let bad = Signature::with_relations(&[("D", 1)]);
        assert_eq!(gen_twk_mso_sid(1, &bad, &phi, Default::default()), Err(GeneratorError::ReservedSymbol("D".into())));
        let deep = parse_so("exists x. exists y. exists z. E(x, y) & E(y, z)").unwrap();
        assert_eq!(gen_twk_mso_sid(1, &e(), &deep, Default::default()), Err(GeneratorError::RankTooLarge(3)));
        let open = crate::so::parse_so_with("E(x, x)", &["x"]).unwrap();
        assert_eq!(gen_twk_mso_sid(1, &e(), &open, Default::default()), Err(GeneratorError::NotSentence("x".into())));
        let tiny = MsoSidOptions { type_cap: 2, tuple_bound: None };
        assert_eq!(gen_twk_mso_sid(1, &e(), &phi, tiny), Err(GeneratorError::TypeCapExceeded(2)));
    }
}
