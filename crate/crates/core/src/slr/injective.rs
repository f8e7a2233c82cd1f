//! The injective satisfaction relation `⊨^U` over a finite pool.
//!
//! Every existential draws a pool element that no other existential of the
//! derivation uses; separating conjunctions split the remaining pool. Pool
//! elements outside Dom(σ) are interchangeable, so only their number is
//! tracked.

use std::collections::{BTreeMap, BTreeSet};

use rustc_hash::FxHashMap;

use super::check::{compile_rule, pruning_tables, CRule, CT};
use super::flat::flatten_rule;
use super::normalize::is_normalized;
use super::{Sid, SlrError, Term};
use crate::structures::{Elem, Store, Structure};

/// Decides `(σ, ν) ⊨^U A(args)` with `U = pool`.
///
/// Returns `PoolExhausted` when no derivation fits `pool` but one exists
/// once more fresh elements are supplied.
pub fn check_slr_injective(
    s: &Structure,
    store: &Store,
    pred: &str,
    args: &[Term],
    sid: &Sid,
    pool: &BTreeSet<Elem>,
) -> Result<bool, SlrError> {
    if !is_normalized(sid) {
        return Err(SlrError::NormalizationRequired);
    }
    let mut inj = Injective::new(s, store, pred, args, sid, pool)?;
    if inj.run()? {
        return Ok(true);
    }
    if !inj.starved {
        return Ok(false);
    }
    let extra = 8 + 2 * s.num_tuples() as u32;
    let mut wider = Injective::new(s, store, pred, args, sid, pool)?;
    wider.free_pool += extra;
    if wider.run()? {
        Err(SlrError::PoolExhausted)
    } else {
        Ok(false)
    }
}

type Key = (u32, Vec<Elem>, u128, u64, u32);

struct Injective {
    rules: Vec<CRule>,
    by_pred: Vec<Vec<usize>>,
    min_tuples: Vec<usize>,
    tuples: Vec<(usize, Vec<Elem>)>,
    dom: Vec<Elem>,
    base: Elem,
    goal: (usize, Vec<Elem>),
    full: u128,
    /// Pool elements inside Dom(σ), as a mask over `dom`.
    dom_pool: u64,
    /// Number of pool elements outside Dom(σ).
    free_pool: u32,
    memo: FxHashMap<Key, bool>,
    in_progress: FxHashMap<Key, usize>,
    starved: bool,
    steps: u64,
}

impl Injective {
    fn new(s: &Structure, store: &Store, pred: &str, args: &[Term], sid: &Sid, pool: &BTreeSet<Elem>) -> Result<Self, SlrError> {
        let mut pred_ids: BTreeMap<String, usize> = BTreeMap::new();
        for r in &sid.rules {
            let n = pred_ids.len();
            pred_ids.entry(r.head.clone()).or_insert(n);
        }
        for r in &sid.rules {
            for (p, _) in r.body.predicate_atoms() {
                if !pred_ids.contains_key(p) {
                    return Err(SlrError::UnknownPredicate(p.to_string()));
                }
            }
        }
        let Some(&goal_pred) = pred_ids.get(pred) else {
            return Err(SlrError::UnknownPredicate(pred.to_string()));
        };
        let rel_names: Vec<String> = s.signature().relations().iter().map(|(r, _)| r.clone()).collect();
        let rel_ids: BTreeMap<&str, usize> = rel_names.iter().enumerate().map(|(i, r)| (r.as_str(), i)).collect();
        let tuples: Vec<(usize, Vec<Elem>)> = s.all_tuples().into_iter().map(|(r, t)| (rel_ids[r.as_str()], t)).collect();
        if tuples.len() > 128 {
            return Err(SlrError::TooManyTuples(tuples.len()));
        }
        let mut rules = Vec::new();
        for (i, r) in sid.rules.iter().enumerate() {
            if let Some(c) = compile_rule(Some(i), &flatten_rule(r), s, &rel_ids, &pred_ids)? {
                rules.push(c);
            }
        }
        let mut by_pred = vec![Vec::new(); pred_ids.len()];
        for (i, r) in rules.iter().enumerate() {
            by_pred[pred_ids[&r.head]].push(i);
        }
        let (min_tuples, _) = pruning_tables(&rules, &pred_ids, pred_ids.len());
        let dom: Vec<Elem> = s.domain().into_iter().collect();
        if dom.len() > 64 {
            return Err(SlrError::TooManyTuples(tuples.len()));
        }
        let base = dom.iter().max().map_or(0, |m| m + 1);
        let mut goal_args = Vec::new();
        for t in args {
            goal_args.push(match t {
                Term::Var(v) => store.get(v).ok_or_else(|| SlrError::UnboundVariable(v.clone()))?,
                Term::Const(c) => s.constant(c).ok_or_else(|| SlrError::UnknownConstant(c.clone()))?,
            });
        }
        let mut dom_pool = 0u64;
        let mut free_pool = 0u32;
        for &u in pool {
            if goal_args.contains(&u) {
                continue;
            }
            match dom.iter().position(|&d| d == u) {
                Some(i) => dom_pool |= 1 << i,
                None => free_pool += 1,
            }
        }
        let full = if tuples.len() == 128 { u128::MAX } else { (1u128 << tuples.len()) - 1 };
        Ok(Injective {
            rules,
            by_pred,
            min_tuples,
            tuples,
            dom,
            base,
            goal: (goal_pred, goal_args),
            full,
            dom_pool,
            free_pool,
            memo: FxHashMap::default(),
            in_progress: FxHashMap::default(),
            starved: false,
            steps: 0,
        })
    }

    fn run(&mut self) -> Result<bool, SlrError> {
        let (p, args) = self.goal.clone();
        let key = (p as u32, self.canon(&args), self.full, self.dom_pool, self.free_pool);
        Ok(self.solve(key, 0)?.0)
    }

    fn canon(&self, args: &[Elem]) -> Vec<Elem> {
        let mut seen: Vec<Elem> = Vec::new();
        args.iter()
            .map(|&v| {
                if self.dom.binary_search(&v).is_ok() {
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

    fn solve(&mut self, key: Key, depth: usize) -> Result<(bool, usize), SlrError> {
        if let Some(&v) = self.memo.get(&key) {
            return Ok((v, usize::MAX));
        }
        if let Some(&d) = self.in_progress.get(&key) {
            return Ok((false, d));
        }
        self.steps += 1;
        if self.steps > super::DEFAULT_BUDGET {
            return Err(SlrError::Budget(super::DEFAULT_BUDGET));
        }
        let (pred, ref args, mask, dp, fp) = key;
        if (mask.count_ones() as usize) < self.min_tuples[pred as usize] {
            self.memo.insert(key, false);
            return Ok((false, usize::MAX));
        }
        let args = args.clone();
        self.in_progress.insert(key.clone(), depth);
        let mut low = usize::MAX;
        let mut found = false;
        for ri in self.by_pred[pred as usize].clone() {
            let nslots = self.rules[ri].slot_names.len();
            let mut slots: Vec<Option<Elem>> = vec![None; nslots];
            for (i, &a) in args.iter().enumerate() {
                slots[i] = Some(a);
            }
            let nparams = self.rules[ri].nparams;
            if self.assign(ri, nparams, &mut slots, mask, dp, fp, self.base + args.len() as Elem, depth, &mut low)? {
                found = true;
                break;
            }
        }
        self.in_progress.remove(&key);
        if found || low >= depth {
            self.memo.insert(key, found);
            Ok((found, usize::MAX))
        } else {
            Ok((false, low))
        }
    }

    /// Assigns existential slot `k` from the pool, all slots pairwise distinct.
    #[allow(clippy::too_many_arguments)]
    fn assign(
        &mut self,
        ri: usize,
        k: usize,
        slots: &mut Vec<Option<Elem>>,
        mask: u128,
        dp: u64,
        fp: u32,
        next_fresh: Elem,
        depth: usize,
        low: &mut usize,
    ) -> Result<bool, SlrError> {
        if k == slots.len() {
            return self.body(ri, slots, mask, dp, fp, depth, low);
        }
        let mut m = dp;
        while m != 0 {
            let i = m.trailing_zeros() as usize;
            m &= m - 1;
            slots[k] = Some(self.dom[i]);
            if self.assign(ri, k + 1, slots, mask, dp & !(1 << i), fp, next_fresh, depth, low)? {
                return Ok(true);
            }
        }
        if fp > 0 {
            slots[k] = Some(next_fresh);
            if self.assign(ri, k + 1, slots, mask, dp, fp - 1, next_fresh + 1, depth, low)? {
                return Ok(true);
            }
        } else {
            self.starved = true;
        }
        slots[k] = None;
        Ok(false)
    }

    #[allow(clippy::too_many_arguments)]
    fn body(&mut self, ri: usize, slots: &[Option<Elem>], mask: u128, dp: u64, fp: u32, depth: usize, low: &mut usize) -> Result<bool, SlrError> {
        let vals: Vec<Elem> = slots.iter().map(|v| v.expect("bound")).collect();
        let val = |t: CT| match t {
            CT::Slot(i) => vals[i],
            CT::Val(v) => v,
        };
        let rule = &self.rules[ri];
        if rule.eqs.iter().any(|&(a, b)| val(a) != val(b)) || rule.neqs.iter().any(|&(a, b)| val(a) == val(b)) {
            return Ok(false);
        }
        // Relation atoms are fully instantiated, so each names one tuple.
        let mut rest = mask;
        for (rel, ts) in &rule.rels {
            let tuple: Vec<Elem> = ts.iter().map(|&t| val(t)).collect();
            let Some(ti) = (0..self.tuples.len()).find(|&ti| rest >> ti & 1 == 1 && self.tuples[ti].0 == *rel && self.tuples[ti].1 == tuple) else {
                return Ok(false);
            };
            rest &= !(1 << ti);
        }
        let children: Vec<(usize, Vec<Elem>)> = rule.preds.iter().map(|(p, ts)| (*p, ts.iter().map(|&t| val(t)).collect())).collect();
        if children.is_empty() {
            return Ok(rest == 0);
        }
        self.split(&children, 0, rest, dp, fp, depth, low)
    }

    #[allow(clippy::too_many_arguments)]
    fn split(&mut self, children: &[(usize, Vec<Elem>)], j: usize, rest: u128, dp: u64, fp: u32, depth: usize, low: &mut usize) -> Result<bool, SlrError> {
        let (pred, ref args) = children[j];
        let cargs = self.canon(args);
        if j + 1 == children.len() {
            let (ok, l) = self.solve((pred as u32, cargs, rest, dp, fp), depth + 1)?;
            *low = (*low).min(l);
            return Ok(ok);
        }
        let later: usize = children[j + 1..].iter().map(|(p, _)| self.min_tuples[*p]).fold(0, usize::saturating_add);
        let mut sub = rest;
        loop {
            if sub.count_ones() as usize >= self.min_tuples[pred] && (rest & !sub).count_ones() as usize >= later {
                let mut psub = dp;
                loop {
                    for f in 0..=fp {
                        let (ok, l) = self.solve((pred as u32, cargs.clone(), sub, psub, f), depth + 1)?;
                        *low = (*low).min(l);
                        if ok && self.split(children, j + 1, rest & !sub, dp & !psub, fp - f, depth, low)? {
                            return Ok(true);
                        }
                    }
                    if psub == 0 {
                        break;
                    }
                    psub = (psub - 1) & dp;
                }
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
        Ok(false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slr::{check_slr, parse_sid, SlrFormula};

    const CHAIN: &str = "Chain(x, y) <- exists z . C(x) * I(x, z) * Chain(z, y) ;
        Chain(x, y) <- C(x) * I(x, y) ;";

    fn chain_structure(n: u32) -> Structure {
        let mut s = Structure::parse("rel C 1\nrel I 2").unwrap();
        for i in 1..n {
            s.insert("C", vec![i]).unwrap();
            s.insert("I", vec![i, i + 1]).unwrap();
        }
        s
    }

    #[test]
    fn agrees_without_existentials() {
        let sid = parse_sid("A(x, y) <- R(x, y) ; A(x, y) <- R(y, x) * S(x) ;").unwrap();
        let s = Structure::parse("rel R 2\nrel S 1\ntuple R 2 1\ntuple S 1").unwrap();
        for (a, b) in [(1, 2), (2, 1), (1, 1)] {
            let store = Store::from_pairs(&[("x", a), ("y", b)]);
            let args = [Term::var("x"), Term::var("y")];
            let phi = SlrFormula::Pred("A".into(), args.to_vec());
            for pool in [BTreeSet::new(), BTreeSet::from([7, 8])] {
                assert_eq!(
                    check_slr_injective(&s, &store, "A", &args, &sid, &pool).unwrap(),
                    check_slr(&s, &store, &phi, &sid).unwrap()
                );
            }
        }
    }

    #[test]
    fn chain_needs_distinct_inner_nodes() {
        let sid = parse_sid(CHAIN).unwrap();
        let s = chain_structure(4);
        let store = Store::from_pairs(&[("x", 1), ("y", 4)]);
        let args = [Term::var("x"), Term::var("y")];
        assert!(check_slr_injective(&s, &store, "Chain", &args, &sid, &BTreeSet::from([2, 3])).unwrap());
        // One inner node cannot serve both existentials.
        assert!(!check_slr_injective(&s, &store, "Chain", &args, &sid, &BTreeSet::from([2, 9])).unwrap());
        assert_eq!(check_slr_injective(&s, &store, "Chain", &args, &sid, &BTreeSet::from([2])), Ok(false));
    }

    #[test]
    fn exhaustion_is_reported() {
        let sid = parse_sid("A(x) <- exists y . B(y) ; B(y) <- emp ;").unwrap();
        let s = Structure::parse("rel R 1").unwrap();
        let store = Store::from_pairs(&[("x", 1)]);
        let args = [Term::var("x")];
        assert_eq!(check_slr_injective(&s, &store, "A", &args, &sid, &BTreeSet::new()), Err(SlrError::PoolExhausted));
        assert_eq!(check_slr_injective(&s, &store, "A", &args, &sid, &BTreeSet::from([5])), Ok(true));
    }

    #[test]
    fn requires_normalized_input() {
        let sid = parse_sid("A(x, y) <- x = y ;").unwrap();
        let s = Structure::parse("rel R 1").unwrap();
        let r = check_slr_injective(&s, &Store::new(), "A", &[], &sid, &BTreeSet::new());
        assert_eq!(r, Err(SlrError::NormalizationRequired));
    }
}
