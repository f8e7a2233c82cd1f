use std::collections::{BTreeMap, BTreeSet};

use super::{Rule, Sid, SlrError, SlrFormula, Term};

/// Name resolution for parsing: which identifiers are constants, relations
/// or predicates.
///
/// Without an explicit relation list, atom names that head some rule (or are
/// listed as predicates) are predicates and all others are relations.
#[derive(Clone, Debug, Default)]
pub struct ParseContext {
    pub constants: BTreeSet<String>,
    pub relations: Option<BTreeMap<String, usize>>,
    pub predicates: BTreeMap<String, usize>,
}

impl ParseContext {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_constants<I: IntoIterator<Item = S>, S: Into<String>>(mut self, cs: I) -> Self {
        self.constants.extend(cs.into_iter().map(Into::into));
        self
    }

    pub fn with_relations<I: IntoIterator<Item = (S, usize)>, S: Into<String>>(mut self, rs: I) -> Self {
        self.relations.get_or_insert_with(BTreeMap::new).extend(rs.into_iter().map(|(r, a)| (r.into(), a)));
        self
    }

    pub fn with_sid(mut self, sid: &Sid) -> Self {
        self.predicates.extend(sid.arities());
        self.constants.extend(sid.constants());
        self
    }

    pub fn with_signature(self, sig: &crate::structures::Signature) -> Self {
        self.with_constants(sig.constants().iter().cloned())
            .with_relations(sig.relations().iter().map(|(r, a)| (r.clone(), *a)))
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    LParen,
    RParen,
    Comma,
    Star,
    Dot,
    Semi,
    Arrow,
    Eq,
    Neq,
    End,
}

struct Lexer {
    toks: Vec<(Tok, usize, usize)>,
}

fn lex(text: &str) -> Result<Lexer, SlrError> {
    let mut toks = Vec::new();
    for (li, line) in text.lines().enumerate() {
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let (l, col) = (li + 1, i + 1);
            if c == '#' {
                break;
            }
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            if c.is_ascii_alphanumeric() || c == '_' {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '\'') {
                    i += 1;
                }
                toks.push((Tok::Ident(chars[start..i].iter().collect()), l, col));
                continue;
            }
            let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
            let (tok, len) = match (c, two.as_str()) {
                (_, "<-") => (Tok::Arrow, 2),
                (_, "!=") => (Tok::Neq, 2),
                ('(', _) => (Tok::LParen, 1),
                (')', _) => (Tok::RParen, 1),
                (',', _) => (Tok::Comma, 1),
                ('*', _) => (Tok::Star, 1),
                ('.', _) => (Tok::Dot, 1),
                (';', _) => (Tok::Semi, 1),
                ('=', _) => (Tok::Eq, 1),
                _ => return Err(SlrError::Syntax { line: l, col, expected: format!("a token, found `{c}`") }),
            };
            toks.push((tok, l, col));
            i += len;
        }
    }
    let (l, c) = toks.last().map(|(_, l, c)| (*l, *c + 1)).unwrap_or((1, 1));
    toks.push((Tok::End, l, c));
    Ok(Lexer { toks })
}

/// Raw atom before name resolution.
#[derive(Clone, Debug)]
enum Raw {
    Emp,
    Eq(String, String),
    Neq(String, String),
    Atom(String, Vec<String>),
    Star(Box<Raw>, Box<Raw>),
    Exists(Vec<String>, Box<Raw>),
}

struct Parser {
    toks: Vec<(Tok, usize, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn err<T>(&self, expected: &str) -> Result<T, SlrError> {
        let (_, line, col) = &self.toks[self.pos];
        Err(SlrError::Syntax { line: *line, col: *col, expected: expected.to_string() })
    }

    fn eat(&mut self, t: Tok, what: &str) -> Result<(), SlrError> {
        if *self.peek() == t {
            self.pos += 1;
            Ok(())
        } else {
            self.err(what)
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, SlrError> {
        if let Tok::Ident(s) = self.peek().clone() {
            self.pos += 1;
            Ok(s)
        } else {
            self.err(what)
        }
    }

    fn formula(&mut self) -> Result<Raw, SlrError> {
        if *self.peek() == Tok::Ident("exists".into()) {
            self.pos += 1;
            let mut vars = vec![self.ident("a variable")?];
            loop {
                match self.peek() {
                    Tok::Comma => self.pos += 1,
                    Tok::Ident(_) => {}
                    _ => break,
                }
                vars.push(self.ident("a variable")?);
            }
            self.eat(Tok::Dot, "`.`")?;
            let body = self.formula()?;
            return Ok(Raw::Exists(vars, Box::new(body)));
        }
        let mut left = self.atom()?;
        while *self.peek() == Tok::Star {
            self.pos += 1;
            let right = if *self.peek() == Tok::Ident("exists".into()) { self.formula()? } else { self.atom()? };
            left = Raw::Star(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn atom(&mut self) -> Result<Raw, SlrError> {
        match self.peek().clone() {
            Tok::LParen => {
                self.pos += 1;
                let f = self.formula()?;
                self.eat(Tok::RParen, "`)`")?;
                Ok(f)
            }
            Tok::Ident(name) if name == "emp" => {
                self.pos += 1;
                Ok(Raw::Emp)
            }
            Tok::Ident(name) => {
                self.pos += 1;
                match self.peek() {
                    Tok::LParen => {
                        self.pos += 1;
                        let args = self.ident_list(Tok::RParen)?;
                        Ok(Raw::Atom(name, args))
                    }
                    Tok::Eq => {
                        self.pos += 1;
                        Ok(Raw::Eq(name, self.ident("a term")?))
                    }
                    Tok::Neq => {
                        self.pos += 1;
                        Ok(Raw::Neq(name, self.ident("a term")?))
                    }
                    _ => self.err("`(`, `=` or `!=`"),
                }
            }
            _ => self.err("an atom"),
        }
    }

    fn ident_list(&mut self, close: Tok) -> Result<Vec<String>, SlrError> {
        let mut out = Vec::new();
        if *self.peek() == close {
            self.pos += 1;
            return Ok(out);
        }
        loop {
            out.push(self.ident("an identifier")?);
            match self.peek() {
                Tok::Comma => self.pos += 1,
                t if *t == close => {
                    self.pos += 1;
                    return Ok(out);
                }
                _ => return self.err("`,` or `)`"),
            }
        }
    }
}

struct Resolver<'a> {
    ctx: &'a ParseContext,
    heads: BTreeSet<String>,
    arities: BTreeMap<String, usize>,
}

impl Resolver<'_> {
    fn is_pred(&self, name: &str) -> bool {
        self.heads.contains(name)
            || self.ctx.predicates.contains_key(name)
            || self.ctx.relations.as_ref().is_some_and(|r| !r.contains_key(name))
    }

    fn check_arity(&mut self, name: &str, got: usize) -> Result<(), SlrError> {
        let declared = self.ctx.relations.as_ref().and_then(|r| r.get(name)).or(self.ctx.predicates.get(name)).copied();
        let expected = *self.arities.entry(name.to_string()).or_insert(declared.unwrap_or(got));
        if expected != got {
            return Err(SlrError::Arity { name: name.to_string(), expected, got });
        }
        Ok(())
    }

    fn term(&self, name: &str, scope: &[String]) -> Term {
        if scope.iter().any(|v| v == name) || !self.ctx.constants.contains(name) {
            Term::Var(name.to_string())
        } else {
            Term::Const(name.to_string())
        }
    }

    fn resolve(&mut self, raw: &Raw, scope: &mut Vec<String>) -> Result<SlrFormula, SlrError> {
        Ok(match raw {
            Raw::Emp => SlrFormula::Emp,
            Raw::Eq(a, b) => SlrFormula::Eq(self.term(a, scope), self.term(b, scope)),
            Raw::Neq(a, b) => SlrFormula::Neq(self.term(a, scope), self.term(b, scope)),
            Raw::Atom(name, args) => {
                self.check_arity(name, args.len())?;
                let ts = args.iter().map(|a| self.term(a, scope)).collect();
                if self.is_pred(name) {
                    SlrFormula::Pred(name.clone(), ts)
                } else {
                    SlrFormula::Rel(name.clone(), ts)
                }
            }
            Raw::Star(a, b) => SlrFormula::star(self.resolve(a, scope)?, self.resolve(b, scope)?),
            Raw::Exists(vars, body) => {
                let n = scope.len();
                scope.extend(vars.iter().cloned());
                let inner = self.resolve(body, scope)?;
                scope.truncate(n);
                SlrFormula::exists_all(vars, inner)
            }
        })
    }
}

/// Parses a SID. Identifiers not bound by a parameter or quantifier and not
/// listed as constants are free variables, which is an error in a rule.
pub fn parse_sid_with(text: &str, ctx: &ParseContext) -> Result<Sid, SlrError> {
    let lexer = lex(text)?;
    let mut p = Parser { toks: lexer.toks, pos: 0 };
    let mut raw_rules = Vec::new();
    while *p.peek() != Tok::End {
        let head = p.ident("a rule head")?;
        p.eat(Tok::LParen, "`(`")?;
        let params = p.ident_list(Tok::RParen)?;
        p.eat(Tok::Arrow, "`<-`")?;
        let body = p.formula()?;
        p.eat(Tok::Semi, "`;`")?;
        raw_rules.push((head, params, body));
    }
    let heads = raw_rules.iter().map(|(h, _, _)| h.clone()).collect();
    let mut res = Resolver { ctx, heads, arities: BTreeMap::new() };
    let mut rules = Vec::new();
    for (head, params, body) in raw_rules {
        res.check_arity(&head, params.len())?;
        let mut scope = params.clone();
        let body = res.resolve(&body, &mut scope)?;
        let mut rule = Rule { head, params, body };
        distinct_parameters(&mut rule);
        if let Some(v) = rule.body.free_vars().into_iter().find(|v| !rule.params.contains(v)) {
            return Err(SlrError::FreeVariable { var: v, head: rule.head });
        }
        rules.push(rule);
    }
    Ok(Sid { rules })
}

pub fn parse_sid(text: &str) -> Result<Sid, SlrError> {
    parse_sid_with(text, &ParseContext::new())
}

/// Parses a formula; free identifiers that are not constants are variables.
pub fn parse_slr_with(text: &str, ctx: &ParseContext) -> Result<SlrFormula, SlrError> {
    let lexer = lex(text)?;
    let mut p = Parser { toks: lexer.toks, pos: 0 };
    let raw = p.formula()?;
    if *p.peek() != Tok::End {
        return p.err("end of input");
    }
    let mut res = Resolver { ctx, heads: BTreeSet::new(), arities: BTreeMap::new() };
    res.resolve(&raw, &mut Vec::new())
}

pub fn parse_slr(text: &str) -> Result<SlrFormula, SlrError> {
    parse_slr_with(text, &ParseContext::new())
}

/// Renames repeated parameters apart and adds the equalities they imply.
fn distinct_parameters(rule: &mut Rule) {
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut eqs = Vec::new();
    let taken: BTreeSet<String> = {
        let mut t: BTreeSet<String> = rule.params.iter().cloned().collect();
        t.extend(super::flat::bound_and_free(&rule.body));
        t
    };
    let mut used = taken;
    for i in 0..rule.params.len() {
        let p = rule.params[i].clone();
        if seen.insert(p.clone()) {
            continue;
        }
        let mut k = i + 1;
        let mut fresh = format!("{p}{k}");
        while used.contains(&fresh) {
            k += 1;
            fresh = format!("{p}{k}");
        }
        used.insert(fresh.clone());
        rule.params[i] = fresh.clone();
        eqs.push(SlrFormula::Eq(Term::Var(p), Term::Var(fresh)));
    }
    if !eqs.is_empty() {
        let body = std::mem::replace(&mut rule.body, SlrFormula::Emp);
        eqs.push(body);
        rule.body = SlrFormula::star_all(eqs);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_rule() {
        let sid = parse_sid("A(x1,x2) <- emp * x1 = x2 ;").unwrap();
        assert_eq!(sid.rules.len(), 1);
        assert_eq!(
            sid.rules[0].body,
            SlrFormula::star(SlrFormula::Emp, SlrFormula::Eq(Term::var("x1"), Term::var("x2")))
        );
    }

    #[test]
    fn repeated_parameters_are_split() {
        let sid = parse_sid("A(x,x) <- R(x,x) ;").unwrap();
        let r = &sid.rules[0];
        assert_eq!(r.params, vec!["x".to_string(), "x2".to_string()]);
        assert_eq!(r.to_string(), "A(x, x2) <- x = x2 * R(x, x) ;");
    }

    #[test]
    fn free_variable_rejected() {
        assert_eq!(
            parse_sid("A(x) <- R(x,y) ;"),
            Err(SlrError::FreeVariable { var: "y".into(), head: "A".into() })
        );
        let ctx = ParseContext::new().with_constants(["y"]);
        assert!(parse_sid_with("A(x) <- R(x,y) ;", &ctx).is_ok());
    }

    #[test]
    fn syntax_and_arity_errors() {
        match parse_sid("A(x) <- R(x ;") {
            Err(SlrError::Syntax { line: 1, col: 13, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_sid("A(x) <- R(x) * R(x,x) ;"), Err(SlrError::Arity { .. })));
        assert!(matches!(parse_sid("A(x) <- emp ; A(x,y) <- emp ;"), Err(SlrError::Arity { .. })));
    }

    #[test]
    fn ring_round_trip() {
        let text = "Ring() <- exists x y . I(x, y) * Chain(y, x) ;\n\
                    Chain(x, y) <- exists z . C(x) * I(x, z) * Chain(z, y) ;\n\
                    Chain(x, y) <- emp * x = y ;\n";
        let sid = parse_sid(text).unwrap();
        assert_eq!(sid.to_string(), text);
        assert_eq!(parse_sid(&sid.to_string()).unwrap(), sid);
        assert!(matches!(sid.rules[0].body.predicate_atoms()[..], [("Chain", _)]));
    }

    #[test]
    fn goal_with_constants() {
        let sid = parse_sid("Chain(x,y) <- x = y ;").unwrap();
        let ctx = ParseContext::new().with_sid(&sid).with_constants(["b", "e"]);
        let g = parse_slr_with("Chain(b, e)", &ctx).unwrap();
        assert_eq!(g, SlrFormula::Pred("Chain".into(), vec![Term::cst("b"), Term::cst("e")]));
        let h = parse_slr_with("exists x . Chain(x, e) * R(x)", &ctx).unwrap();
        assert_eq!(h.free_vars().len(), 0);
    }
}
