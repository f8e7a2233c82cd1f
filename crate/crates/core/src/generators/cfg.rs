use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::slr::{Rule, Sid, SlrFormula, Term};

use super::GeneratorError;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Symbol {
    T(char),
    N(String),
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::T(c) => write!(f, "{c}"),
            Symbol::N(n) => f.write_str(n),
        }
    }
}

/// Context-free grammar. Nonterminals start with an upper-case letter,
/// terminals are single lower-case letters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cfg {
    pub start: String,
    pub productions: Vec<(String, Vec<Symbol>)>,
}

impl Cfg {
    pub fn nonterminals(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::from([self.start.clone()]);
        for (h, rhs) in &self.productions {
            out.insert(h.clone());
            out.extend(rhs.iter().filter_map(|s| match s {
                Symbol::N(n) => Some(n.clone()),
                Symbol::T(_) => None,
            }));
        }
        out
    }

    /// Parses `start S` and `prod S -> a S B` lines; `eps` or nothing
    /// after the arrow is the empty word.
    pub fn parse(text: &str) -> Result<Cfg, GeneratorError> {
        let mut start = None;
        let mut productions = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let err = |msg: &str| GeneratorError::Grammar { line: i + 1, msg: msg.to_string() };
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut words = line.split_whitespace();
            match words.next() {
                Some("start") => {
                    let s = words.next().ok_or_else(|| err("missing start symbol"))?;
                    start = Some(parse_nonterminal(s).ok_or_else(|| err("start symbol must be a nonterminal"))?);
                }
                Some("prod") => {
                    let head = words.next().and_then(parse_nonterminal).ok_or_else(|| err("missing nonterminal head"))?;
                    if words.next() != Some("->") {
                        return Err(err("expected ->"));
                    }
                    let mut rhs = Vec::new();
                    for w in words {
                        if w == "eps" {
                            continue;
                        }
                        rhs.push(parse_symbol(w).ok_or_else(|| err(&format!("bad symbol {w}")))?);
                    }
                    productions.push((head, rhs));
                }
                _ => return Err(err("expected `start` or `prod`")),
            }
        }
        let start = start.or_else(|| productions.first().map(|(h, _)| h.clone()));
        let start = start.ok_or(GeneratorError::Grammar { line: 0, msg: "empty grammar".into() })?;
        Ok(Cfg { start, productions })
    }

    fn nullable(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        loop {
            let before = out.len();
            for (h, rhs) in &self.productions {
                if rhs.iter().all(|s| matches!(s, Symbol::N(n) if out.contains(n))) {
                    out.insert(h.clone());
                }
            }
            if out.len() == before {
                return out;
            }
        }
    }

    fn fresh(&self, base: &str, taken: &mut BTreeSet<String>) -> String {
        let mut name = base.to_string();
        while taken.contains(&name) {
            name.push('\'');
        }
        taken.insert(name.clone());
        name
    }
}

fn parse_nonterminal(s: &str) -> Option<String> {
    let c = s.chars().next()?;
    (c.is_ascii_uppercase() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '\'')).then(|| s.to_string())
}

fn parse_symbol(s: &str) -> Option<Symbol> {
    let mut cs = s.chars();
    match (cs.next(), cs.next()) {
        (Some(c), None) if c.is_ascii_lowercase() => Some(Symbol::T(c)),
        _ => parse_nonterminal(s).map(Symbol::N),
    }
}

impl fmt::Display for Cfg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "start {}", self.start)?;
        for (h, rhs) in &self.productions {
            write!(f, "prod {h} ->")?;
            if rhs.is_empty() {
                f.write_str(" eps")?;
            }
            for s in rhs {
                write!(f, " {s}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Membership by a chart fixpoint that accepts arbitrary productions.
pub fn cyk_member(g: &Cfg, w: &str) -> bool {
    let w: Vec<char> = w.chars().collect();
    let n = w.len();
    // chart[i][j]: nonterminals deriving w[i..j].
    let mut chart: Vec<Vec<BTreeSet<String>>> = vec![vec![BTreeSet::new(); n + 1]; n + 1];
    for len in 0..=n {
        for i in 0..=n - len {
            let j = i + len;
            loop {
                let mut changed = false;
                for (h, rhs) in &g.productions {
                    if !chart[i][j].contains(h) && matches_span(rhs, &w, i, j, &chart) {
                        chart[i][j].insert(h.clone());
                        changed = true;
                    }
                }
                if !changed {
                    break;
                }
            }
        }
    }
    chart[0][n].contains(&g.start)
}

fn matches_span(rhs: &[Symbol], w: &[char], i: usize, j: usize, chart: &[Vec<BTreeSet<String>>]) -> bool {
    let mut reach: BTreeSet<usize> = BTreeSet::from([i]);
    for s in rhs {
        let mut next = BTreeSet::new();
        for &p in &reach {
            match s {
                Symbol::T(c) => {
                    if p < j && w[p] == *c {
                        next.insert(p + 1);
                    }
                }
                Symbol::N(n) => {
                    for (q, cell) in chart[p].iter().enumerate().take(j + 1).skip(p) {
                        if cell.contains(n) {
                            next.insert(q);
                        }
                    }
                }
            }
        }
        reach = next;
    }
    reach.contains(&j)
}

/// True when every production is `Y -> α Y1 … Yi`.
pub fn is_greibach(g: &Cfg) -> bool {
    g.productions.iter().all(|(_, rhs)| greibach_shape(rhs))
}

fn greibach_shape(rhs: &[Symbol]) -> bool {
    matches!(rhs.first(), Some(Symbol::T(_))) && rhs[1..].iter().all(|s| matches!(s, Symbol::N(_)))
}

type Prods = BTreeMap<String, BTreeSet<Vec<Symbol>>>;

/// Converts a grammar without the empty word to Greibach normal form.
pub fn greibach_normalize(g: &Cfg) -> Result<Cfg, GeneratorError> {
    if g.nullable().contains(&g.start) {
        return Err(GeneratorError::EmptyWordDerivable);
    }
    let mut taken = g.nonterminals();
    let mut prods = remove_epsilon(g);
    remove_units(&mut prods);
    remove_useless(&mut prods, &g.start);

    // Non-leading terminals become nonterminals `T_α -> α`.
    let mut term_nt: BTreeMap<char, String> = BTreeMap::new();
    let mut lifted: Prods = BTreeMap::new();
    for (h, rhss) in &prods {
        for rhs in rhss {
            let mut out = vec![rhs[0].clone()];
            for s in &rhs[1..] {
                out.push(match s {
                    Symbol::T(c) => Symbol::N(term_nt.entry(*c).or_insert_with(|| g.fresh(&format!("T_{c}"), &mut taken)).clone()),
                    n => n.clone(),
                });
            }
            lifted.entry(h.clone()).or_default().insert(out);
        }
    }
    for (c, n) in &term_nt {
        lifted.entry(n.clone()).or_default().insert(vec![Symbol::T(*c)]);
    }
    let mut prods = lifted;

    // Order the nonterminals, start first.
    let mut order: Vec<String> = vec![g.start.clone()];
    order.extend(prods.keys().filter(|k| **k != g.start).cloned());
    let mut tails: Vec<String> = Vec::new();
    for i in 0..order.len() {
        let ai = order[i].clone();
        for aj in order.iter().take(i) {
            let current = prods.get(&ai).cloned().unwrap_or_default();
            let mut next = BTreeSet::new();
            for rhs in current {
                if rhs[0] == Symbol::N(aj.clone()) {
                    for delta in &prods[aj] {
                        let mut r = delta.clone();
                        r.extend_from_slice(&rhs[1..]);
                        next.insert(r);
                    }
                } else {
                    next.insert(rhs);
                }
            }
            prods.insert(ai.clone(), next);
        }
        let current = prods.get(&ai).cloned().unwrap_or_default();
        let (rec, base): (Vec<_>, Vec<_>) = current.into_iter().partition(|rhs| rhs[0] == Symbol::N(ai.clone()));
        if !rec.is_empty() {
            let b = g.fresh(&format!("{ai}_R"), &mut taken);
            let mut anew = BTreeSet::new();
            for beta in &base {
                anew.insert(beta.clone());
                let mut r = beta.clone();
                r.push(Symbol::N(b.clone()));
                anew.insert(r);
            }
            let mut bnew = BTreeSet::new();
            for alpha in &rec {
                let alpha = alpha[1..].to_vec();
                bnew.insert(alpha.clone());
                let mut r = alpha;
                r.push(Symbol::N(b.clone()));
                bnew.insert(r);
            }
            prods.insert(ai.clone(), anew);
            prods.insert(b.clone(), bnew);
            tails.push(b);
        }
    }
    // Back-substitution: every ordered nonterminal starts with a terminal.
    for i in (0..order.len()).rev() {
        substitute_leading(&mut prods, &order[i]);
    }
    for b in &tails {
        substitute_leading(&mut prods, b);
    }
    let mut out = Cfg { start: g.start.clone(), productions: Vec::new() };
    for (h, rhss) in prods {
        for rhs in rhss {
            out.productions.push((h.clone(), rhs));
        }
    }
    let mut cleaned: Prods = BTreeMap::new();
    for (h, rhs) in &out.productions {
        cleaned.entry(h.clone()).or_default().insert(rhs.clone());
    }
    remove_useless(&mut cleaned, &g.start);
    out.productions = cleaned.into_iter().flat_map(|(h, rs)| rs.into_iter().map(move |r| (h.clone(), r))).collect();
    debug_assert!(is_greibach(&out));
    Ok(out)
}

fn substitute_leading(prods: &mut Prods, a: &str) {
    loop {
        let current = prods.get(a).cloned().unwrap_or_default();
        let mut next = BTreeSet::new();
        let mut changed = false;
        for rhs in current {
            match &rhs[0] {
                Symbol::N(b) if b != a => {
                    changed = true;
                    for delta in prods.get(b).cloned().unwrap_or_default() {
                        let mut r = delta;
                        r.extend_from_slice(&rhs[1..]);
                        next.insert(r);
                    }
                }
                _ => {
                    next.insert(rhs);
                }
            }
        }
        prods.insert(a.to_string(), next);
        if !changed {
            return;
        }
    }
}

fn remove_epsilon(g: &Cfg) -> Prods {
    let nullable = g.nullable();
    let mut prods: Prods = BTreeMap::new();
    for (h, rhs) in &g.productions {
        let mut variants: Vec<Vec<Symbol>> = vec![Vec::new()];
        for s in rhs {
            let drop = matches!(s, Symbol::N(n) if nullable.contains(n));
            let mut next = Vec::new();
            for v in variants {
                if drop {
                    next.push(v.clone());
                }
                let mut w = v;
                w.push(s.clone());
                next.push(w);
            }
            variants = next;
        }
        for v in variants.into_iter().filter(|v| !v.is_empty()) {
            prods.entry(h.clone()).or_default().insert(v);
        }
    }
    prods
}

fn remove_units(prods: &mut Prods) {
    let heads: Vec<String> = prods.keys().cloned().collect();
    let mut out: Prods = BTreeMap::new();
    for a in &heads {
        // Nonterminals reachable from `a` through unit productions.
        let mut reach = BTreeSet::from([a.clone()]);
        let mut stack = vec![a.clone()];
        while let Some(b) = stack.pop() {
            for rhs in prods.get(&b).into_iter().flatten() {
                if let [Symbol::N(c)] = rhs.as_slice() {
                    if reach.insert(c.clone()) {
                        stack.push(c.clone());
                    }
                }
            }
        }
        for b in &reach {
            for rhs in prods.get(b).into_iter().flatten() {
                if !matches!(rhs.as_slice(), [Symbol::N(_)]) {
                    out.entry(a.clone()).or_default().insert(rhs.clone());
                }
            }
        }
    }
    *prods = out;
}

fn remove_useless(prods: &mut Prods, start: &str) {
    let mut generating: BTreeSet<String> = BTreeSet::new();
    loop {
        let before = generating.len();
        for (h, rhss) in prods.iter() {
            if rhss.iter().any(|r| r.iter().all(|s| matches!(s, Symbol::T(_)) || matches!(s, Symbol::N(n) if generating.contains(n)))) {
                generating.insert(h.clone());
            }
        }
        if generating.len() == before {
            break;
        }
    }
    for rhss in prods.values_mut() {
        rhss.retain(|r| r.iter().all(|s| matches!(s, Symbol::T(_)) || matches!(s, Symbol::N(n) if generating.contains(n))));
    }
    let mut reach = BTreeSet::from([start.to_string()]);
    let mut stack = vec![start.to_string()];
    while let Some(a) = stack.pop() {
        for r in prods.get(&a).into_iter().flatten() {
            for s in r {
                if let Symbol::N(n) = s {
                    if reach.insert(n.clone()) {
                        stack.push(n.clone());
                    }
                }
            }
        }
    }
    prods.retain(|h, rs| reach.contains(h) && !rs.is_empty());
}

/// Predicate name for nonterminal `y`.
pub fn nonterminal_predicate(y: &str) -> String {
    format!("A_{y}")
}

/// One binary predicate `A_Y` per nonterminal; `Y0 -> α Y1 … Yi` becomes
/// `A_Y0(x1, x2) <- exists y1 … . V(x1) * P_α(x1) * E(x1, y1) * A_Y1(y1, y2) * E(y2, y3) * …`.
pub fn cfg_to_sid(g: &Cfg) -> Result<Sid, GeneratorError> {
    let mut rules = Vec::new();
    for (h, rhs) in &g.productions {
        if !greibach_shape(rhs) {
            let text: Vec<String> = rhs.iter().map(|s| s.to_string()).collect();
            return Err(GeneratorError::NotGreibach(format!("{h} -> {}", text.join(" "))));
        }
        let Symbol::T(alpha) = rhs[0] else { unreachable!() };
        let v = Term::var;
        let mut parts = vec![SlrFormula::Rel("V".into(), vec![v("x1")]), SlrFormula::Rel(format!("P_{alpha}"), vec![v("x1")])];
        let kids = &rhs[1..];
        let mut exists = Vec::new();
        if !kids.is_empty() {
            let i = kids.len();
            exists = (1..=2 * i - 1).map(|j| format!("y{j}")).collect();
            parts.push(SlrFormula::Rel("E".into(), vec![v("x1"), v("y1")]));
            for (j, k) in kids.iter().enumerate() {
                let Symbol::N(name) = k else { unreachable!() };
                let from = format!("y{}", 2 * j + 1);
                let to = if j + 1 == i { "x2".to_string() } else { format!("y{}", 2 * j + 2) };
                parts.push(SlrFormula::Pred(nonterminal_predicate(name), vec![Term::Var(from), Term::Var(to.clone())]));
                if j + 1 < i {
                    parts.push(SlrFormula::Rel("E".into(), vec![Term::Var(to), Term::Var(format!("y{}", 2 * j + 3))]));
                }
            }
        }
        let body = SlrFormula::exists_all(&exists, SlrFormula::star_all(parts));
        rules.push(Rule { head: nonterminal_predicate(h), params: vec!["x1".into(), "x2".into()], body });
    }
    Ok(Sid::new(rules))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{word_to_structure, words_up_to};
    use crate::slr::check_slr;
    use crate::structures::Store;

    const ANBN: &str = "start S\nprod S -> a b\nprod S -> a S b\n";

    fn anbn(w: &str) -> bool {
        let n = w.len() / 2;
        w.len().is_multiple_of(2) && n > 0 && w == format!("{}{}", "a".repeat(n), "b".repeat(n))
    }

    #[test]
    fn chart_membership() {
        let g = Cfg::parse(ANBN).unwrap();
        for w in words_up_to(&['a', 'b'], 6) {
            assert_eq!(cyk_member(&g, &w), anbn(&w), "{w}");
        }
        let eps = Cfg::parse("start S\nprod S -> eps\nprod S -> a S\n").unwrap();
        assert!(cyk_member(&eps, "") && cyk_member(&eps, "aaa") && !cyk_member(&eps, "b"));
    }

    #[test]
    fn greibach_of_anbn() {
        let g = Cfg::parse(ANBN).unwrap();
        let h = greibach_normalize(&g).unwrap();
        assert!(is_greibach(&h));
        for w in words_up_to(&['a', 'b'], 6) {
            assert_eq!(cyk_member(&h, &w), anbn(&w), "{w}");
        }
    }

    #[test]
    fn greibach_with_left_recursion_and_units() {
        let g = Cfg::parse("start S\nprod S -> S a\nprod S -> B\nprod B -> b\nprod B -> C b\nprod C -> eps\nprod C -> a").unwrap();
        let h = greibach_normalize(&g).unwrap();
        assert!(is_greibach(&h));
        for w in words_up_to(&['a', 'b'], 6) {
            assert_eq!(cyk_member(&h, &w), cyk_member(&g, &w), "{w}");
        }
    }

    #[test]
    fn greibach_fixpoint_and_errors() {
        let g = Cfg::parse("start S\nprod S -> a S B\nprod S -> a B\nprod B -> b").unwrap();
        let h = greibach_normalize(&g).unwrap();
        let mut a: Vec<_> = g.productions.clone();
        let mut b: Vec<_> = h.productions.clone();
        a.sort();
        b.sort();
        assert_eq!(a, b);
        let e = Cfg::parse("start S\nprod S -> eps\nprod S -> a").unwrap();
        assert_eq!(greibach_normalize(&e), Err(GeneratorError::EmptyWordDerivable));
    }

    #[test]
    fn sid_rules() {
        let g = Cfg::parse("start S\nprod S -> a S B\nprod S -> a B\nprod B -> b").unwrap();
        let sid = cfg_to_sid(&g).unwrap();
        assert_eq!(sid.rules[2].to_string(), "A_B(x1, x2) <- V(x1) * P_b(x1) ;");
        assert_eq!(
            sid.rules[0].to_string(),
            "A_S(x1, x2) <- exists y1 y2 y3 . V(x1) * P_a(x1) * E(x1, y1) * A_S(y1, y2) * E(y2, y3) * A_B(y3, x2) ;"
        );
        let bad = Cfg::parse("start S\nprod S -> S a").unwrap();
        assert!(matches!(cfg_to_sid(&bad), Err(GeneratorError::NotGreibach(_))));
    }

    #[test]
    fn words_checked_through_sid() {
        let g = Cfg::parse("start S\nprod S -> a S B\nprod S -> a B\nprod B -> b").unwrap();
        let sid = cfg_to_sid(&g).unwrap();
        let phi = SlrFormula::Pred("A_S".into(), vec![Term::cst("b"), Term::cst("e")]);
        for w in ["ab", "aabb", "aab", "ba", "abab"] {
            let s = word_to_structure(w).unwrap();
            assert_eq!(check_slr(&s, &Store::new(), &phi, &sid).unwrap(), anbn(w), "{w}");
        }
    }
}
