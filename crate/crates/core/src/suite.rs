//! Differential acceptance suite. Each criterion runs a fixed, seeded case
//! set and reports agreement between two independent procedures.

use std::collections::BTreeMap;
use std::fmt;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::decomposition::{check_reduced, exact_treewidth, reduce, validate};
use crate::generators::{
    cfg_to_sid, clique_structure, cyk_member, gen_twk_mso_sid, gen_twk_sid, greibach_normalize, mso_top_predicate, top_predicate, word_to_structure, words_up_to, Cfg,
    MsoSidOptions,
};
use crate::random::{all_structures, random_sid, random_structure, rank_one_sentences, SidShape, GOAL};
use crate::slr::{check_slr, normalize_sid, parse_sid, parse_slr_with, ParseContext, Sid, SlrFormula, Term};
use crate::slr2so::{LinkEncoding, SoChecker};
use crate::so::{eval_so, parse_so, quantifier_rank, SoFormula};
use crate::structures::{add_d, glue, is_isomorphic, pad, Elem, Signature, Store, Structure};
use crate::unfolding::oracle_check;

/// Ring and chain definitions over `C/1` and `I/2`.
pub const RING_SID: &str = "Ring() <- exists x y . I(x, y) * Chain(y, x) ;
Chain(x, y) <- exists z . C(x) * I(x, z) * Chain(z, y) ;
Chain(x, y) <- emp * x = y ;";

/// Grammar of `{aⁿbⁿ | n ≥ 1}`.
pub const ANBN_GRAMMAR: &str = "start S\nprod S -> a b\nprod S -> a S b\n";

pub const CRITERIA: std::ops::RangeInclusive<u8> = 1..=10;

const SAMPLE_CAP: usize = 5;
const SEED: u64 = 0x5eed;

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub id: u8,
    pub title: String,
    pub passed: bool,
    pub cases: usize,
    pub failed: usize,
    /// The first few failing cases.
    pub failures: Vec<String>,
    pub elapsed_secs: f64,
    pub limit_secs: Option<f64>,
    /// Set when a procedure raised an error instead of a verdict.
    pub error: Option<String>,
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status} [{:>2}] {}: {}/{} cases agree in {:.2}s", self.id, self.title, self.cases - self.failed, self.cases, self.elapsed_secs)?;
        if let Some(l) = self.limit_secs {
            write!(f, " (limit {l:.0}s)")?;
        }
        if let Some(e) = &self.error {
            write!(f, "; error: {e}")?;
        }
        if let Some(first) = self.failures.first() {
            write!(f, "; first failure: {first}")?;
        }
        Ok(())
    }
}

/// Case counter keeping the first few failures.
#[derive(Default)]
struct Tally {
    cases: usize,
    failed: usize,
    samples: Vec<String>,
}

impl Tally {
    fn record(&mut self, ok: bool, describe: impl FnOnce() -> String) {
        self.cases += 1;
        if !ok {
            self.failed += 1;
            if self.samples.len() < SAMPLE_CAP {
                self.samples.push(describe());
            }
        }
    }

    /// Records agreement of two fallible verdicts.
    fn agree<E: fmt::Display, F: fmt::Display>(&mut self, a: Result<bool, E>, b: Result<bool, F>, describe: impl FnOnce() -> String) {
        match (a, b) {
            (Ok(x), Ok(y)) => self.record(x == y, || format!("{} ({x} vs {y})", describe())),
            (Err(e), _) => self.record(false, || format!("{}: {e}", describe())),
            (_, Err(e)) => self.record(false, || format!("{}: {e}", describe())),
        }
    }
}

type Outcome = Result<Tally, String>;

fn finish(id: u8, title: &str, limit: Option<u64>, start: Instant, outcome: Outcome) -> Report {
    let elapsed = start.elapsed();
    let limit_secs = limit.map(|l| Duration::from_secs(l).as_secs_f64());
    let in_time = limit_secs.is_none_or(|l| elapsed.as_secs_f64() < l);
    let (tally, error) = match outcome {
        Ok(t) => (t, None),
        Err(e) => (Tally::default(), Some(e)),
    };
    Report {
        id,
        title: title.to_string(),
        passed: error.is_none() && tally.failed == 0 && tally.cases > 0 && in_time,
        cases: tally.cases,
        failed: tally.failed,
        failures: tally.samples,
        elapsed_secs: elapsed.as_secs_f64(),
        limit_secs,
        error,
    }
}

/// Runs criterion `id`; `None` if there is no such criterion.
pub fn run_criterion(id: u8) -> Option<Report> {
    let (title, limit, run): (&str, Option<u64>, fn() -> Outcome) = match id {
        1 => ("clique treewidth", Some(60), clique_treewidth),
        2 => ("word encodings have treewidth 1", None, word_treewidth),
        3 => ("grammar membership vs checker", Some(120), cfg_correspondence),
        4 => ("normalization preserves models", None, normalization),
        5 => ("checker vs unfolding oracle", None, checker_vs_oracle),
        6 => ("checker vs second-order translation", Some(600), slr_vs_so),
        7 => ("treewidth-1 SID characterization", None, twk_characterization),
        8 => ("treewidth-1 MSO SID characterization", Some(900), twk_mso_characterization),
        9 => ("padding stability", None, padding_stability),
        10 => ("property suites", None, properties),
        _ => return None,
    };
    let start = Instant::now();
    let outcome = run();
    Some(finish(id, title, limit, start, outcome))
}

pub fn run_all() -> Vec<Report> {
    CRITERIA.filter_map(run_criterion).collect()
}

fn err(e: impl fmt::Display) -> String {
    e.to_string()
}

fn goal(text: &str, sid: &Sid, sig: &Signature) -> Result<SlrFormula, String> {
    parse_slr_with(text, &ParseContext::new().with_sid(sid).with_signature(sig)).map_err(err)
}

fn nullary(pred: &str) -> SlrFormula {
    SlrFormula::Pred(pred.to_string(), vec![])
}

fn clique_treewidth() -> Outcome {
    let mut t = Tally::default();
    for n in 2..=6 {
        let tw = exact_treewidth(&clique_structure(n)).map(|(w, _)| w);
        t.record(tw.as_ref().is_ok_and(|&w| w == n - 1), || format!("K_{n}: {tw:?}"));
    }
    Ok(t)
}

fn word_treewidth() -> Outcome {
    let mut t = Tally::default();
    for w in words_up_to(&['a', 'b'], 6).into_iter().filter(|w| w.len() >= 2) {
        let tw = word_to_structure(&w).map_err(err).and_then(|s| exact_treewidth(&s).map(|(k, _)| k).map_err(err));
        t.record(tw == Ok(1), || format!("{w}: {tw:?}"));
    }
    Ok(t)
}

fn cfg_correspondence() -> Outcome {
    let g = Cfg::parse(ANBN_GRAMMAR).map_err(err)?;
    let sid = cfg_to_sid(&greibach_normalize(&g).map_err(err)?).map_err(err)?;
    let phi = SlrFormula::Pred(crate::generators::nonterminal_predicate(&g.start), vec![Term::cst("b"), Term::cst("e")]);
    let mut t = Tally::default();
    for w in words_up_to(&['a', 'b'], 6) {
        let s = word_to_structure(&w).map_err(err)?;
        t.agree(Ok::<_, String>(cyk_member(&g, &w)), check_slr(&s, &Store::new(), &phi, &sid), || w.clone());
    }
    Ok(t)
}

fn pe() -> Signature {
    Signature::with_relations(&[("P", 1), ("E", 2)])
}

/// The 200 random SIDs of criteria 4 and 5.
pub fn random_sid_suite() -> Vec<Sid> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    (0..200).map(|_| random_sid(&mut rng, &SidShape::default())).collect()
}

fn normalization() -> Outcome {
    let structures = all_structures(&pe(), 2, 3);
    let phi = nullary(GOAL);
    let mut t = Tally::default();
    for (i, sid) in random_sid_suite().iter().enumerate() {
        let norm = normalize_sid(sid).sid;
        // Normalization drops every rule of a predicate without models.
        let defined = norm.predicates().contains(GOAL);
        for s in &structures {
            let after = if defined { check_slr(s, &Store::new(), &phi, &norm) } else { Ok(false) };
            t.agree(check_slr(s, &Store::new(), &phi, sid), after, || format!("SID #{i} on {}", one_line(s)));
        }
    }
    Ok(t)
}

fn checker_vs_oracle() -> Outcome {
    let mut t = Tally::default();
    let structures = all_structures(&pe(), 2, 3);
    let phi = nullary(GOAL);
    for (i, sid) in random_sid_suite().iter().enumerate() {
        for s in &structures {
            t.agree(check_slr(s, &Store::new(), &phi, sid), oracle_check(s, &Store::new(), GOAL, &[], sid), || format!("SID #{i} on {}", one_line(s)));
        }
    }
    let ring = parse_sid(RING_SID).map_err(err)?;
    let ci = Signature::with_relations(&[("C", 1), ("I", 2)]);
    let ring_goal = goal("Ring()", &ring, &ci)?;
    let chain_goal = goal("Chain(x, y)", &ring, &ci)?;
    let chain_args = [Term::var("x"), Term::var("y")];
    for s in all_structures(&ci, 3, 3) {
        t.agree(check_slr(&s, &Store::new(), &ring_goal, &ring), oracle_check(&s, &Store::new(), "Ring", &[], &ring), || format!("Ring() on {}", one_line(&s)));
        for (x, y) in [(1, 1), (1, 2), (2, 1), (1, 3), (3, 4)] {
            let store = Store::from_pairs(&[("x", x), ("y", y)]);
            t.agree(check_slr(&s, &store, &chain_goal, &ring), oracle_check(&s, &store, "Chain", &chain_args, &ring), || {
                format!("Chain({x}, {y}) on {}", one_line(&s))
            });
        }
    }
    Ok(t)
}

/// Three acyclic random SIDs, each true on some and false on some structure of `structures`.
pub fn acyclic_sid_suite(structures: &[Structure]) -> Result<Vec<Sid>, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 6);
    let shape = SidShape { acyclic: true, ..Default::default() };
    let phi = nullary(GOAL);
    let mut out = Vec::new();
    while out.len() < 3 {
        let sid = random_sid(&mut rng, &shape);
        let mut seen = [false; 2];
        for s in structures {
            seen[check_slr(s, &Store::new(), &phi, &sid).map_err(err)? as usize] = true;
            if seen == [true; 2] {
                out.push(sid);
                break;
            }
        }
    }
    Ok(out)
}

fn slr_vs_so() -> Outcome {
    let mut t = Tally::default();
    let ci = Signature::with_relations(&[("C", 1), ("I", 2)]);
    let ring = parse_sid(RING_SID).map_err(err)?;
    let chain = Sid::new(ring.rules.iter().filter(|r| r.head == "Chain").cloned().collect());
    let chain_structures = all_structures(&ci, 3, 4);
    let anchored = Store::from_pairs(&[("a", 1), ("b", 2)]);
    for (text, store) in [("exists a b . Chain(a, b)", Store::new()), ("Chain(a, b)", anchored)] {
        let phi = goal(text, &chain, &ci)?;
        let so = SoChecker::new(&ci, &phi, &chain, LinkEncoding::Classes).map_err(err)?;
        for s in &chain_structures {
            t.agree(check_slr(s, &store, &phi, &chain), so.check(s, &store), || format!("{text} on {}", one_line(s)));
        }
    }
    let structures = all_structures(&pe(), 3, 4);
    let phi = nullary(GOAL);
    for (i, sid) in acyclic_sid_suite(&structures)?.iter().enumerate() {
        let so = SoChecker::new(&pe(), &phi, sid, LinkEncoding::Classes).map_err(err)?;
        for s in &structures {
            t.agree(check_slr(s, &Store::new(), &phi, sid), so.check(s, &Store::new()), || format!("acyclic SID #{i} on {}", one_line(s)));
        }
    }
    Ok(t)
}

/// Whether some D-extension of `s` with `fresh` extra elements satisfies `phi`.
fn d_extension_with(s: &Structure, fresh: usize, phi: &SlrFormula, sid: &Sid) -> Result<bool, String> {
    let elems = s.rel_elements().into_iter().chain(s.fresh_ids(fresh));
    check_slr(&add_d(s, elems).map_err(err)?, &Store::new(), phi, sid).map_err(err)
}

/// D-extension search over `Dom ∪ {2 fresh ids}`. Fresh ids are
/// interchangeable, so only their number matters. A third fresh id must not
/// change the verdict.
fn bounded_d_extension(s: &Structure, phi: &SlrFormula, sid: &Sid) -> Result<bool, String> {
    let mut found = false;
    for fresh in 0..=2 {
        if d_extension_with(s, fresh, phi, sid)? {
            found = true;
            break;
        }
    }
    if !found && d_extension_with(s, 3, phi, sid)? {
        return Err(format!("a third fresh id is needed on {}", one_line(s)));
    }
    Ok(found)
}

/// D-extension search over `Dom ∪ {2 fresh ids}` without the adequacy run.
fn d_extension_search(s: &Structure, phi: &SlrFormula, sid: &Sid) -> Result<bool, String> {
    for fresh in 0..=2 {
        if d_extension_with(s, fresh, phi, sid)? {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Verdicts memoized up to isomorphism.
#[derive(Default)]
struct IsoCache {
    classes: BTreeMap<(usize, usize), Vec<(Structure, bool)>>,
}

impl IsoCache {
    fn get_or_insert(&mut self, s: &Structure, compute: impl FnOnce(&Structure) -> Result<bool, String>) -> Result<bool, String> {
        let bucket = self.classes.entry((s.num_tuples(), s.domain().len())).or_default();
        for (rep, v) in bucket.iter() {
            if is_isomorphic(rep, s).map_err(err)? {
                return Ok(*v);
            }
        }
        let v = compute(s)?;
        bucket.push((s.clone(), v));
        Ok(v)
    }
}

fn tw_at_most(s: &Structure, k: usize) -> Result<bool, String> {
    exact_treewidth(s).map(|(w, _)| w <= k).map_err(err)
}

fn e_sig() -> Signature {
    Signature::with_relations(&[("E", 2)])
}

fn twk_characterization() -> Outcome {
    let sid = gen_twk_sid(1, &e_sig()).map_err(err)?;
    let phi = nullary(&top_predicate(1));
    let mut t = Tally::default();
    for s in all_structures(&e_sig(), 3, 4) {
        t.agree(tw_at_most(&s, 1), bounded_d_extension(&s, &phi, &sid), || one_line(&s));
    }
    Ok(t)
}

/// The two sentences of criterion 8 with the signature each is read over.
pub fn criterion_eight_sentences() -> Vec<(SoFormula, Signature)> {
    vec![
        (parse_so("!(exists x. E(x, x))").expect("valid sentence"), e_sig()),
        (parse_so("exists x. V(x)").expect("valid sentence"), Signature::with_relations(&[("E", 2), ("V", 1)])),
    ]
}

fn twk_mso_characterization() -> Outcome {
    let mut t = Tally::default();
    let top = nullary(&mso_top_predicate(1));
    for (phi, sig) in criterion_eight_sentences() {
        let sid = gen_twk_mso_sid(1, &sig, &phi, MsoSidOptions { tuple_bound: Some(3), ..Default::default() }).map_err(err)?;
        let m = 1 << quantifier_rank(&phi);
        let mut seen = IsoCache::default();
        for s in all_structures(&sig, 3, 4) {
            let lhs = eval_so(&s, &pad(&s, m).domain, &Store::new(), &phi).map_err(err).and_then(|v| Ok(v && tw_at_most(&s, 1)?));
            let rhs = seen.get_or_insert(&s, |s| d_extension_search(s, &top, &sid));
            t.agree(lhs, rhs, || format!("{phi} on {}", one_line(&s)));
        }
    }
    Ok(t)
}

fn padding_stability() -> Outcome {
    let sig = Signature::with_relations(&[("E", 2), ("V", 1)]);
    let sentences = rank_one_sentences(&sig);
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 9);
    let mut t = Tally::default();
    for _ in 0..50 {
        let s = random_structure(&mut rng, &sig, 3, 4);
        for phi in &sentences {
            let base = 1 << quantifier_rank(phi);
            let verdicts: Result<Vec<bool>, _> = (0..4).map(|j| eval_so(&s, &pad(&s, base + j).domain, &Store::new(), phi)).collect();
            t.record(verdicts.as_ref().is_ok_and(|v| v.iter().all(|&b| b == v[0])), || format!("{phi} on {}: {verdicts:?}", one_line(&s)));
        }
    }
    Ok(t)
}

/// Cases per property in criterion 10.
pub const PROPERTY_CASES: usize = 1000;

fn properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 10);
    let mut t = Tally::default();
    let sentences: Vec<SoFormula> = rank_one_sentences(&pe())
        .into_iter()
        .chain(
            [
                "forall x. exists y. E(x, y)",
                "exists x y. x != y & P(x) & P(y)",
                "exists2 X/1. forall x y. E(x, y) -> ((X(x) & !X(y)) | (!X(x) & X(y)))",
                "forall2 X/1. (exists x. X(x)) -> exists x y. X(x) & E(x, y) & !X(y)",
            ]
            .map(|f| parse_so(f).expect("valid sentence")),
        )
        .collect();
    for _ in 0..PROPERTY_CASES {
        let s = random_structure(&mut rng, &pe(), 3, 4);
        let perm = permutation(&mut rng, 4);
        let image = s.relabel(perm);
        let sid = random_sid(&mut rng, &SidShape::default());
        let phi = nullary(GOAL);
        t.agree(check_slr(&s, &Store::new(), &phi, &sid), check_slr(&image, &Store::new(), &phi, &sid), || format!("check_slr iso on {}", one_line(&s)));
        let f = sentences.choose(&mut rng).expect("sentences");
        t.agree(eval_so(&s, &pad(&s, 2).domain, &Store::new(), f), eval_so(&image, &pad(&image, 2).domain, &Store::new(), f), || {
            format!("eval_so iso of {f} on {}", one_line(&s))
        });
    }
    for _ in 0..PROPERTY_CASES {
        let a = random_pointed(&mut rng);
        let b = random_pointed(&mut rng);
        let ok = match (glue(&a, &b), glue(&b, &a)) {
            (Ok(x), Ok(y)) => is_isomorphic(&x, &y).unwrap_or(false),
            _ => false,
        };
        t.record(ok, || format!("glue of {} and {}", one_line(&a), one_line(&b)));
    }
    let er = Signature::with_relations(&[("E", 2), ("R", 3)]);
    for _ in 0..PROPERTY_CASES {
        let s = random_structure(&mut rng, &er, 5, 6);
        let ok = exact_treewidth(&s).is_ok_and(|(w, td)| validate(&td, &s).is_ok() && td.width() == w);
        t.record(ok, || format!("decomposition witness on {}", one_line(&s)));
        let s = random_structure(&mut rng, &er, 5, 6);
        let ok = match exact_treewidth(&s) {
            Ok((w, td)) if s.num_tuples() > 0 => reduce(&td, &s).is_ok_and(|r| r.width == w && check_reduced(&r, &s).is_ok()),
            Ok(_) => true,
            Err(_) => false,
        };
        t.record(ok, || format!("reduced decomposition on {}", one_line(&s)));
    }
    Ok(t)
}

/// A random bijection from `1..=n` onto `10..10 + n`.
fn permutation(rng: &mut impl Rng, n: Elem) -> impl Fn(Elem) -> Elem {
    let mut image: Vec<Elem> = (10..10 + n).collect();
    image.shuffle(rng);
    move |e| if (1..=n).contains(&e) { image[(e - 1) as usize] } else { e + 100 }
}

/// A structure over `E/2` naming some of the constants `c` and `d`.
fn random_pointed(rng: &mut impl Rng) -> Structure {
    let mut sig = e_sig();
    let named: Vec<&str> = ["c", "d"].into_iter().filter(|_| rng.gen_bool(0.5)).collect();
    for c in &named {
        sig.add_constant(c).expect("fresh constant");
    }
    let mut s = random_structure(rng, &sig, 3, 4);
    for c in named {
        s.set_constant(c, rng.gen_range(1..=4)).expect("declared constant");
    }
    s
}

fn one_line(s: &Structure) -> String {
    let mut parts: Vec<String> = s.all_tuples().into_iter().map(|(r, t)| format!("{r}{t:?}")).collect();
    parts.extend(s.constant_values().iter().map(|(c, v)| format!("{c}={v}")));
    format!("{{{}}}", parts.join(" "))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_line() {
        let r = finish(3, "demo", Some(5), Instant::now(), Ok(Tally { cases: 4, failed: 1, samples: vec!["ab".into()] }));
        assert!(!r.passed);
        let line = r.to_string();
        assert!(line.starts_with("FAIL [ 3] demo: 3/4 cases agree") && line.ends_with("first failure: ab"), "{line}");
        let empty = finish(1, "none", None, Instant::now(), Ok(Tally::default()));
        assert!(!empty.passed);
    }

    #[test]
    fn quick_criteria_pass() {
        for id in [1, 2] {
            let r = run_criterion(id).unwrap();
            assert!(r.passed, "{r}");
        }
        assert!(run_criterion(11).is_none());
    }

    #[test]
    fn suites_are_deterministic() {
        assert_eq!(random_sid_suite(), random_sid_suite());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = permutation(&mut rng, 4);
        let mut image: Vec<Elem> = (1..=4).map(&p).collect();
        image.sort();
        assert_eq!(image, vec![10, 11, 12, 13]);
    }
}
