//! Top-down decision procedure for `(σ, ν) ⊨_Δ φ`.
//!
//! Queries are triples (predicate, arguments, tuple subset). Argument values
//! outside Dom(σ) are canonicalised by first occurrence, which is sound by
//! isomorphism invariance. Re-entering a triple that is still being solved
//! fails that branch; failures that depended on such a triple are not cached.

use std::collections::{BTreeMap, BTreeSet};

use rustc_hash::FxHashMap;

use super::flat::{flatten_rule, FlatRule};
use super::{Rule, Sid, SlrError, SlrFormula, Term};
use crate::structures::{Elem, Store, Structure};

pub const DEFAULT_BUDGET: u64 = 500_000_000;

#[derive(Clone, Copy, Debug)]
pub struct CheckOptions {
    /// Maximal number of search steps before giving up with `Budget`.
    pub budget: u64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions { budget: DEFAULT_BUDGET }
    }
}

/// A concrete derivation: the rule used, variable values, consumed tuples
/// and one sub-derivation per predicate atom.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Derivation {
    /// Index into the SID's rules; `None` for the wrapped top-level formula.
    pub rule: Option<usize>,
    pub head: String,
    pub args: Vec<Elem>,
    pub values: BTreeMap<String, Elem>,
    pub tuples: Vec<(String, Vec<Elem>)>,
    pub children: Vec<Derivation>,
}

impl Derivation {
    /// All tuples consumed by the derivation.
    pub fn all_tuples(&self) -> Vec<(String, Vec<Elem>)> {
        let mut out = self.tuples.clone();
        for c in &self.children {
            out.extend(c.all_tuples());
        }
        out
    }

    pub fn size(&self) -> usize {
        1 + self.children.iter().map(Derivation::size).sum::<usize>()
    }
}

pub fn check_slr(s: &Structure, store: &Store, phi: &SlrFormula, sid: &Sid) -> Result<bool, SlrError> {
    check_slr_with(s, store, phi, sid, CheckOptions::default())
}

pub fn check_slr_with(
    s: &Structure,
    store: &Store,
    phi: &SlrFormula,
    sid: &Sid,
    opts: CheckOptions,
) -> Result<bool, SlrError> {
    let mut solver = Solver::new(s, store, phi, sid, opts)?;
    solver.run()
}

/// Like [`check_slr`], but also reconstructs a derivation of the goal.
///
/// Values of existential variables outside Dom(σ) are drawn fresh, above
/// every id in Dom(σ) and the store.
pub fn find_derivation(s: &Structure, store: &Store, phi: &SlrFormula, sid: &Sid) -> Result<Option<Derivation>, SlrError> {
    let mut solver = Solver::new(s, store, phi, sid, CheckOptions::default())?;
    if !solver.run()? {
        return Ok(None);
    }
    let mut next_fresh = solver
        .dom
        .iter()
        .chain(solver.goal_args.iter())
        .max()
        .map_or(0, |m| m + 1)
        .max(solver.base + solver.goal_args.len() as Elem + 64);
    let key = solver.goal_key();
    let args = solver.goal_args.clone();
    let mut d = solver.rebuild(&key, &args, &mut next_fresh);
    // The wrapper rule is reported with its single body as the root.
    d.rule = None;
    Ok(Some(d))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(super) enum CT {
    Slot(usize),
    Val(Elem),
}

#[derive(Clone, Debug)]
pub(super) struct CRule {
    pub(super) source: Option<usize>,
    pub(super) head: String,
    pub(super) slot_names: Vec<String>,
    pub(super) nparams: usize,
    pub(super) rels: Vec<(usize, Vec<CT>)>,
    pub(super) eqs: Vec<(CT, CT)>,
    pub(super) neqs: Vec<(CT, CT)>,
    pub(super) preds: Vec<(usize, Vec<CT>)>,
    /// Non-parameter slots constrained by eqs, neqs or predicate atoms.
    pub(super) enum_slots: Vec<usize>,
}

type Key = (u32, Vec<Elem>, u128);

#[derive(Clone, Debug)]
struct Step {
    rule: usize,
    slots: Vec<Elem>,
    rel_tuples: Vec<usize>,
    child_masks: Vec<u128>,
}

enum Entry {
    True(Step),
    False,
}

pub(super) struct Solver {
    rules: Vec<CRule>,
    by_pred: Vec<Vec<usize>>,
    min_tuples: Vec<usize>,
    reach: Vec<u64>,
    tuples: Vec<(usize, Vec<Elem>)>,
    rel_names: Vec<String>,
    rel_mask: Vec<u128>,
    dom: BTreeSet<Elem>,
    base: Elem,
    full: u128,
    goal_pred: usize,
    goal_args: Vec<Elem>,
    memo: FxHashMap<Key, Entry>,
    in_progress: FxHashMap<Key, usize>,
    steps: u64,
    budget: u64,
}

struct Binding {
    slots: Vec<Option<Elem>>,
    fresh_next: Elem,
    rel_tuples: Vec<usize>,
}

const GOAL: &str = "#goal";

impl Solver {
    pub(super) fn new(s: &Structure, store: &Store, phi: &SlrFormula, sid: &Sid, opts: CheckOptions) -> Result<Solver, SlrError> {
        let fv: Vec<String> = phi.free_vars().into_iter().collect();
        let mut goal_args = Vec::new();
        for x in &fv {
            goal_args.push(store.get(x).ok_or_else(|| SlrError::UnboundVariable(x.clone()))?);
        }
        let goal = Rule { head: GOAL.to_string(), params: fv, body: phi.clone() };
        let mut flat: Vec<(Option<usize>, FlatRule)> = sid.rules.iter().enumerate().map(|(i, r)| (Some(i), flatten_rule(r))).collect();
        flat.push((None, flatten_rule(&goal)));

        let mut pred_ids: BTreeMap<String, usize> = BTreeMap::new();
        for (_, r) in &flat {
            let n = pred_ids.len();
            pred_ids.entry(r.head.clone()).or_insert(n);
        }
        let arities = sid.arities();
        for (_, r) in &flat {
            for (p, ts) in &r.preds {
                if !pred_ids.contains_key(p) {
                    return Err(SlrError::UnknownPredicate(p.clone()));
                }
                if arities.get(p).is_some_and(|&a| a != ts.len()) {
                    return Err(SlrError::Arity { name: p.clone(), expected: arities[p], got: ts.len() });
                }
            }
        }

        let rel_names: Vec<String> = s.signature().relations().iter().map(|(r, _)| r.clone()).collect();
        let rel_ids: BTreeMap<&str, usize> = rel_names.iter().enumerate().map(|(i, r)| (r.as_str(), i)).collect();
        let tuples: Vec<(usize, Vec<Elem>)> = s.all_tuples().into_iter().map(|(r, t)| (rel_ids[r.as_str()], t)).collect();
        if tuples.len() > 128 {
            return Err(SlrError::TooManyTuples(tuples.len()));
        }
        let mut rel_mask = vec![0u128; rel_names.len()];
        for (i, (r, _)) in tuples.iter().enumerate() {
            rel_mask[*r] |= 1 << i;
        }
        let dom = s.domain();
        let base = dom.iter().max().map_or(0, |m| m + 1);

        let mut rules = Vec::new();
        for (source, r) in &flat {
            if let Some(c) = compile_rule(*source, r, s, &rel_ids, &pred_ids)? {
                rules.push(c);
            }
        }
        let npreds = pred_ids.len();
        let mut by_pred = vec![Vec::new(); npreds];
        for (i, r) in rules.iter().enumerate() {
            by_pred[pred_ids[&r.head]].push(i);
        }
        let (min_tuples, reach) = pruning_tables(&rules, &pred_ids, npreds);
        let full = if tuples.len() == 128 { u128::MAX } else { (1u128 << tuples.len()) - 1 };
        let goal_pred = pred_ids[GOAL];
        Ok(Solver {
            rules,
            by_pred,
            min_tuples,
            reach,
            tuples,
            rel_names,
            rel_mask,
            dom,
            base,
            full,
            goal_pred,
            goal_args,
            memo: FxHashMap::default(),
            in_progress: FxHashMap::default(),
            steps: 0,
            budget: opts.budget,
        })
    }

    fn goal_key(&self) -> Key {
        (self.goal_pred as u32, self.canon(&self.goal_args), self.full)
    }

    pub(super) fn run(&mut self) -> Result<bool, SlrError> {
        let key = self.goal_key();
        Ok(self.solve(key, 0)?.0)
    }

    fn canon(&self, args: &[Elem]) -> Vec<Elem> {
        let mut seen: Vec<Elem> = Vec::new();
        args.iter()
            .map(|&v| {
                if self.dom.contains(&v) {
                    v
                } else {
                    let i = seen.iter().position(|&w| w == v).unwrap_or_else(|| {
                        seen.push(v);
                        seen.len() - 1
                    });
                    self.base + i as Elem
                }
            })
            .collect()
    }

    fn tick(&mut self) -> Result<(), SlrError> {
        self.steps += 1;
        if self.steps > self.budget {
            Err(SlrError::Budget(self.budget))
        } else {
            Ok(())
        }
    }

    fn solve(&mut self, key: Key, depth: usize) -> Result<(bool, usize), SlrError> {
        match self.memo.get(&key) {
            Some(Entry::True(_)) => return Ok((true, usize::MAX)),
            Some(Entry::False) => return Ok((false, usize::MAX)),
            None => {}
        }
        if let Some(&d) = self.in_progress.get(&key) {
            return Ok((false, d));
        }
        self.tick()?;
        let (pred, ref args, mask) = key;
        let pred = pred as usize;
        let ntuples = mask.count_ones() as usize;
        if ntuples < self.min_tuples[pred] || self.relations_of(mask) & !self.reach[pred] != 0 {
            self.memo.insert(key, Entry::False);
            return Ok((false, usize::MAX));
        }
        let args = args.clone();
        self.in_progress.insert(key.clone(), depth);
        let mut low = usize::MAX;
        let mut found = None;
        for ri in self.by_pred[pred].clone() {
            if self.rules[ri].nparams != args.len() {
                continue;
            }
            if let Some(step) = self.try_rule(ri, &args, mask, depth, &mut low)? {
                found = Some(step);
                break;
            }
        }
        self.in_progress.remove(&key);
        match found {
            Some(step) => {
                self.memo.insert(key, Entry::True(step));
                Ok((true, usize::MAX))
            }
            None if low >= depth => {
                self.memo.insert(key, Entry::False);
                Ok((false, usize::MAX))
            }
            None => Ok((false, low)),
        }
    }

    fn relations_of(&self, mask: u128) -> u64 {
        let mut out = 0u64;
        let mut m = mask;
        while m != 0 {
            let i = m.trailing_zeros() as usize;
            m &= m - 1;
            out |= 1 << self.tuples[i].0;
        }
        out
    }

    fn try_rule(&mut self, ri: usize, args: &[Elem], mask: u128, depth: usize, low: &mut usize) -> Result<Option<Step>, SlrError> {
        let rule = &self.rules[ri];
        let mut slots = vec![None; rule.slot_names.len()];
        for (i, &a) in args.iter().enumerate() {
            slots[i] = Some(a);
        }
        let mut b = Binding { slots, fresh_next: self.base + args.len() as Elem, rel_tuples: Vec::new() };
        self.match_rels(ri, 0, mask, &mut b, depth, low)
    }

    fn value(b: &Binding, t: CT) -> Option<Elem> {
        match t {
            CT::Slot(i) => b.slots[i],
            CT::Val(v) => Some(v),
        }
    }

    fn match_rels(&mut self, ri: usize, k: usize, mask: u128, b: &mut Binding, depth: usize, low: &mut usize) -> Result<Option<Step>, SlrError> {
        let nrels = self.rules[ri].rels.len();
        if k == nrels {
            return self.after_rels(ri, mask, b, depth, low);
        }
        let (rel, ref terms) = self.rules[ri].rels[k];
        let terms = terms.clone();
        let mut cands = mask & self.rel_mask[rel];
        while cands != 0 {
            let ti = cands.trailing_zeros() as usize;
            cands &= cands - 1;
            self.tick()?;
            let saved = b.slots.clone();
            let tuple = &self.tuples[ti].1;
            let mut ok = true;
            for (t, &v) in terms.iter().zip(tuple) {
                match *t {
                    CT::Val(w) => ok &= w == v,
                    CT::Slot(i) => match b.slots[i] {
                        Some(w) => ok &= w == v,
                        None => b.slots[i] = Some(v),
                    },
                }
                if !ok {
                    break;
                }
            }
            if ok {
                b.rel_tuples.push(ti);
                if let Some(step) = self.match_rels(ri, k + 1, mask & !(1 << ti), b, depth, low)? {
                    return Ok(Some(step));
                }
                b.rel_tuples.pop();
            }
            b.slots = saved;
        }
        Ok(None)
    }

    fn after_rels(&mut self, ri: usize, rest: u128, b: &mut Binding, depth: usize, low: &mut usize) -> Result<Option<Step>, SlrError> {
        let rule = &self.rules[ri];
        if rule.preds.is_empty() && rest != 0 {
            return Ok(None);
        }
        let need: usize = rule.preds.iter().map(|(p, _)| self.min_tuples[*p]).fold(0, usize::saturating_add);
        if need > rest.count_ones() as usize {
            return Ok(None);
        }
        let support = rule.preds.iter().fold(0u64, |acc, (p, _)| acc | self.reach[*p]);
        if self.relations_of(rest) & !support != 0 {
            return Ok(None);
        }
        self.enumerate(ri, 0, rest, b, depth, low)
    }

    /// Propagates equalities; returns false on a violated (dis)equality.
    fn propagate(&self, ri: usize, b: &mut Binding) -> bool {
        let rule = &self.rules[ri];
        loop {
            let mut changed = false;
            for &(x, y) in &rule.eqs {
                match (Self::value(b, x), Self::value(b, y)) {
                    (Some(u), Some(v)) if u != v => return false,
                    (Some(u), None) => {
                        if let CT::Slot(i) = y {
                            b.slots[i] = Some(u);
                            changed = true;
                        }
                    }
                    (None, Some(v)) => {
                        if let CT::Slot(i) = x {
                            b.slots[i] = Some(v);
                            changed = true;
                        }
                    }
                    _ => {}
                }
            }
            if !changed {
                break;
            }
        }
        for &(x, y) in &rule.neqs {
            if let (Some(u), Some(v)) = (Self::value(b, x), Self::value(b, y)) {
                if u == v {
                    return false;
                }
            }
        }
        true
    }

    fn enumerate(&mut self, ri: usize, k: usize, rest: u128, b: &mut Binding, depth: usize, low: &mut usize) -> Result<Option<Step>, SlrError> {
        let saved = b.slots.clone();
        if !self.propagate(ri, b) {
            b.slots = saved;
            return Ok(None);
        }
        let rule = &self.rules[ri];
        let next = rule.enum_slots[k..].iter().position(|&s| b.slots[s].is_none()).map(|p| k + p);
        let Some(k) = next else {
            let out = self.split(ri, 0, rest, b, &mut Vec::new(), depth, low)?;
            b.slots = saved;
            return Ok(out);
        };
        let slot = rule.enum_slots[k];
        let mut cands: Vec<Elem> = self.dom.iter().copied().collect();
        for v in b.slots.iter().flatten() {
            if !self.dom.contains(v) && !cands.contains(v) {
                cands.push(*v);
            }
        }
        let fresh = b.fresh_next;
        cands.push(fresh);
        for v in cands {
            self.tick()?;
            b.slots[slot] = Some(v);
            if v == fresh {
                b.fresh_next += 1;
            }
            let r = self.enumerate(ri, k + 1, rest, b, depth, low)?;
            if v == fresh {
                b.fresh_next -= 1;
            }
            if let Some(step) = r {
                b.slots = saved;
                return Ok(Some(step));
            }
            b.slots[slot] = None;
        }
        b.slots = saved;
        Ok(None)
    }

    #[allow(clippy::too_many_arguments)]
    fn split(
        &mut self,
        ri: usize,
        j: usize,
        rest: u128,
        b: &Binding,
        masks: &mut Vec<u128>,
        depth: usize,
        low: &mut usize,
    ) -> Result<Option<Step>, SlrError> {
        let npreds = self.rules[ri].preds.len();
        if j == npreds {
            return Ok((rest == 0).then(|| Step {
                rule: ri,
                // Variables occurring in no atom are unconstrained.
                slots: b.slots.iter().map(|v| v.unwrap_or(b.fresh_next)).collect(),
                rel_tuples: b.rel_tuples.clone(),
                child_masks: masks.clone(),
            }));
        }
        let (pred, ref terms) = self.rules[ri].preds[j];
        let args: Vec<Elem> = terms.iter().map(|&t| Self::value(b, t).expect("predicate arguments bound")).collect();
        let key_args = self.canon(&args);
        let later_need: usize = self.rules[ri].preds[j + 1..].iter().map(|(p, _)| self.min_tuples[*p]).fold(0, usize::saturating_add);
        let later_support = self.rules[ri].preds[j + 1..].iter().fold(0u64, |acc, (p, _)| acc | self.reach[*p]);
        let last = j + 1 == npreds;
        // Enumerate submasks of `rest` (the last atom takes everything).
        let mut sub = rest;
        loop {
            let remaining = rest & !sub;
            let feasible = (!last || remaining == 0)
                && sub.count_ones() as usize >= self.min_tuples[pred]
                && remaining.count_ones() as usize >= later_need
                && self.relations_of(sub) & !self.reach[pred] == 0
                && self.relations_of(remaining) & !later_support == 0;
            if feasible {
                let (ok, l) = self.solve((pred as u32, key_args.clone(), sub), depth + 1)?;
                *low = (*low).min(l);
                if ok {
                    masks.push(sub);
                    if let Some(step) = self.split(ri, j + 1, remaining, b, masks, depth, low)? {
                        return Ok(Some(step));
                    }
                    masks.pop();
                }
            }
            if last || sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
        Ok(None)
    }

    /// Rebuilds a derivation for a key known to be true, mapping canonical
    /// values back to `actual` argument values.
    fn rebuild(&self, key: &Key, actual: &[Elem], next_fresh: &mut Elem) -> Derivation {
        let Some(Entry::True(step)) = self.memo.get(key) else {
            panic!("rebuild on a key that is not known to hold");
        };
        let rule = &self.rules[step.rule];
        let mut map: BTreeMap<Elem, Elem> = BTreeMap::new();
        for (c, a) in key.1.iter().zip(actual) {
            map.insert(*c, *a);
        }
        let mut real = |v: Elem, map: &mut BTreeMap<Elem, Elem>| -> Elem {
            if self.dom.contains(&v) {
                return v;
            }
            *map.entry(v).or_insert_with(|| {
                *next_fresh += 1;
                *next_fresh - 1
            })
        };
        let values: Vec<Elem> = step.slots.iter().map(|&v| real(v, &mut map)).collect();
        let mut children = Vec::new();
        for ((pred, terms), &m) in rule.preds.iter().zip(&step.child_masks) {
            let canon_args: Vec<Elem> = terms.iter().map(|&t| resolve(&step.slots, t)).collect();
            let actual_args: Vec<Elem> = terms.iter().map(|&t| resolve(&values, t)).collect();
            let child_key = (*pred as u32, self.canon(&canon_args), m);
            children.push(self.rebuild(&child_key, &actual_args, next_fresh));
        }
        Derivation {
            rule: rule.source,
            head: rule.head.clone(),
            args: actual.to_vec(),
            values: rule.slot_names.iter().cloned().zip(values.iter().copied()).collect(),
            tuples: step.rel_tuples.iter().map(|&ti| (self.rel_names[self.tuples[ti].0].clone(), self.tuples[ti].1.clone())).collect(),
            children,
        }
    }
}

fn resolve(slots: &[Elem], t: CT) -> Elem {
    match t {
        CT::Slot(i) => slots[i],
        CT::Val(v) => v,
    }
}

pub(super) fn compile_rule(
    source: Option<usize>,
    r: &FlatRule,
    s: &Structure,
    rel_ids: &BTreeMap<&str, usize>,
    pred_ids: &BTreeMap<String, usize>,
) -> Result<Option<CRule>, SlrError> {
    let slot_names = r.variables();
    let slot_of: BTreeMap<&str, usize> = slot_names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let term = |t: &Term| -> Result<CT, SlrError> {
        match t {
            Term::Var(v) => slot_of.get(v.as_str()).map(|&i| CT::Slot(i)).ok_or_else(|| SlrError::UnboundVariable(v.clone())),
            Term::Const(c) => s.constant(c).map(CT::Val).ok_or_else(|| SlrError::UnknownConstant(c.clone())),
        }
    };
    let terms = |ts: &[Term]| ts.iter().map(term).collect::<Result<Vec<_>, _>>();
    let mut rels = Vec::new();
    for (rel, ts) in &r.rels {
        let Some(&ri) = rel_ids.get(rel.as_str()) else {
            // A relation absent from the signature has no tuples to consume.
            return Ok(None);
        };
        let arity = s.signature().arity(rel).expect("relation in signature");
        if arity != ts.len() {
            return Err(SlrError::Arity { name: rel.clone(), expected: arity, got: ts.len() });
        }
        rels.push((ri, terms(ts)?));
    }
    let eqs = r.eqs.iter().map(|(a, b)| Ok((term(a)?, term(b)?))).collect::<Result<Vec<_>, SlrError>>()?;
    let neqs = r.neqs.iter().map(|(a, b)| Ok((term(a)?, term(b)?))).collect::<Result<Vec<_>, SlrError>>()?;
    let mut preds = Vec::new();
    for (p, ts) in &r.preds {
        preds.push((pred_ids[p], terms(ts)?));
    }
    let nparams = r.params.len();
    let mut enum_slots = Vec::new();
    let mut note = |t: CT| {
        if let CT::Slot(i) = t {
            if i >= nparams && !enum_slots.contains(&i) {
                enum_slots.push(i);
            }
        }
    };
    for &(a, b) in eqs.iter().chain(&neqs) {
        note(a);
        note(b);
    }
    for (_, ts) in &preds {
        ts.iter().for_each(|&t| note(t));
    }
    Ok(Some(CRule { source, head: r.head.clone(), slot_names, nparams, rels, eqs, neqs, preds, enum_slots }))
}

/// Least number of tuples each predicate consumes, and the relations that
/// may occur in its models.
pub(super) fn pruning_tables(rules: &[CRule], pred_ids: &BTreeMap<String, usize>, n: usize) -> (Vec<usize>, Vec<u64>) {
    let mut min = vec![usize::MAX; n];
    let mut reach = vec![0u64; n];
    loop {
        let mut changed = false;
        for r in rules {
            let p = pred_ids[&r.head];
            let mut total = r.rels.len();
            let mut rs = r.rels.iter().fold(0u64, |acc, (ri, _)| acc | (1 << ri));
            for (q, _) in &r.preds {
                total = total.saturating_add(min[*q]);
                rs |= reach[*q];
            }
            if total < min[p] {
                min[p] = total;
                changed = true;
            }
            if rs & !reach[p] != 0 {
                reach[p] |= rs;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    (min, reach)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slr::{parse_sid, parse_slr_with, ParseContext};

    fn st(text: &str) -> Structure {
        Structure::parse(text).unwrap()
    }

    const RING: &str = "Ring() <- exists x y . I(x, y) * Chain(y, x) ;
        Chain(x, y) <- exists z . C(x) * I(x, z) * Chain(z, y) ;
        Chain(x, y) <- emp * x = y ;";

    fn goal(text: &str, sid: &Sid, s: &Structure) -> SlrFormula {
        parse_slr_with(text, &ParseContext::new().with_sid(sid).with_signature(s.signature())).unwrap()
    }

    #[test]
    fn emp_and_singletons() {
        let empty = Structure::new(Default::default());
        assert!(check_slr(&empty, &Store::new(), &SlrFormula::Emp, &Sid::default()).unwrap());
        let s = st("rel R 1\nconst c1 1\ntuple R 1");
        let sid = Sid::default();
        let phi = goal("R(c1)", &sid, &s);
        assert!(check_slr(&s, &Store::new(), &phi, &sid).unwrap());
        let s2 = st("rel R 1\nconst c1 1\ntuple R 1\ntuple R 2");
        assert!(!check_slr(&s2, &Store::new(), &phi, &sid).unwrap());
    }

    #[test]
    fn ring_models() {
        let sid = parse_sid(RING).unwrap();
        let two_c = st("rel C 1\nrel I 2\ntuple C 2\ntuple C 3\ntuple I 1 2\ntuple I 2 3\ntuple I 3 1");
        let phi = goal("Ring()", &sid, &two_c);
        assert!(check_slr(&two_c, &Store::new(), &phi, &sid).unwrap());
        let all_c = st("rel C 1\nrel I 2\ntuple C 1\ntuple C 2\ntuple C 3\ntuple I 1 2\ntuple I 2 3\ntuple I 3 1");
        assert!(!check_slr(&all_c, &Store::new(), &phi, &sid).unwrap());
        let mut clique = st("rel C 1\nrel I 2");
        for a in 1..=3 {
            for b in 1..=3 {
                if a != b {
                    clique.insert("I", vec![a, b]).unwrap();
                }
            }
        }
        assert!(!check_slr(&clique, &Store::new(), &phi, &sid).unwrap());
    }

    #[test]
    fn chain_with_store() {
        let sid = parse_sid(RING).unwrap();
        let s = st("rel C 1\nrel I 2\ntuple C 1\ntuple I 1 2");
        let phi = goal("Chain(x, y)", &sid, &s);
        assert!(check_slr(&s, &Store::from_pairs(&[("x", 1), ("y", 2)]), &phi, &sid).unwrap());
        assert!(!check_slr(&s, &Store::from_pairs(&[("x", 2), ("y", 1)]), &phi, &sid).unwrap());
        let empty = st("rel C 1\nrel I 2");
        assert!(check_slr(&empty, &Store::from_pairs(&[("x", 9), ("y", 9)]), &phi, &sid).unwrap());
        assert!(matches!(check_slr(&s, &Store::new(), &phi, &sid), Err(SlrError::UnboundVariable(_))));
    }

    #[test]
    fn derivation_consumes_exactly_the_tuples() {
        let sid = parse_sid(RING).unwrap();
        let s = st("rel C 1\nrel I 2\ntuple C 2\ntuple C 3\ntuple I 1 2\ntuple I 2 3\ntuple I 3 1");
        let phi = goal("Ring()", &sid, &s);
        let d = find_derivation(&s, &Store::new(), &phi, &sid).unwrap().unwrap();
        let mut used = d.all_tuples();
        used.sort();
        let mut all = s.all_tuples();
        all.sort();
        assert_eq!(used, all);
    }

    #[test]
    fn left_recursion_terminates() {
        let sid = parse_sid("A(x) <- A(x) ; A(x) <- A(x) * R(x) ; A(x) <- emp ;").unwrap();
        let s = st("rel R 1\ntuple R 1");
        let phi = goal("A(x)", &sid, &s);
        assert!(check_slr(&s, &Store::from_pairs(&[("x", 1)]), &phi, &sid).unwrap());
        assert!(!check_slr(&s, &Store::from_pairs(&[("x", 2)]), &phi, &sid).unwrap());
    }

    #[test]
    fn existential_outside_domain() {
        let sid = parse_sid("A(x) <- exists y z . R(x) * y != x * z != y * y != z ;").unwrap();
        let s = st("rel R 1\ntuple R 1");
        let phi = goal("A(x)", &sid, &s);
        assert!(check_slr(&s, &Store::from_pairs(&[("x", 1)]), &phi, &sid).unwrap());
        let psi = SlrFormula::Pred("B".into(), vec![Term::var("x")]);
        let r = check_slr(&s, &Store::from_pairs(&[("x", 1)]), &psi, &sid);
        assert!(matches!(r, Err(SlrError::UnknownPredicate(_))));
    }

    #[test]
    fn budget_reported() {
        let sid = parse_sid(RING).unwrap();
        let s = st("rel C 1\nrel I 2\ntuple C 2\ntuple C 3\ntuple I 1 2\ntuple I 2 3\ntuple I 3 1");
        let phi = goal("Ring()", &sid, &s);
        let r = check_slr_with(&s, &Store::new(), &phi, &sid, CheckOptions { budget: 3 });
        assert_eq!(r, Err(SlrError::Budget(3)));
    }

    #[test]
    fn unused_existential() {
        let sid = parse_sid("A() <- exists y z . P(y) ; B(x) <- exists y . emp * x = x ;").unwrap();
        let s = st("rel P 1\ntuple P 1");
        let phi = goal("A()", &sid, &s);
        let d = find_derivation(&s, &Store::new(), &phi, &sid).unwrap().unwrap();
        assert_eq!(d.all_tuples(), vec![("P".to_string(), vec![1])]);
        let b = goal("B(x)", &sid, &s);
        assert!(!check_slr(&s, &Store::from_pairs(&[("x", 1)]), &b, &sid).unwrap());
        assert!(check_slr(&st("rel P 1"), &Store::from_pairs(&[("x", 1)]), &b, &sid).unwrap());
    }
}
