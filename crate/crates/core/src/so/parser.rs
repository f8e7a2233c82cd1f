use super::{SoError, SoFormula, Term};

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Num(usize),
    LParen,
    RParen,
    Comma,
    Dot,
    Slash,
    Amp,
    Bar,
    Bang,
    Arrow,
    Eq,
    Neq,
    End,
}

struct Lexer {
    toks: Vec<(Tok, usize, usize)>,
}

fn lex(text: &str) -> Result<Lexer, SoError> {
    let mut toks = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        let start = (line, col);
        let mut adv = 1;
        let tok = match c {
            '\n' => {
                line += 1;
                col = 1;
                i += 1;
                continue;
            }
            c if c.is_whitespace() => None,
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                continue;
            }
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            '.' => Some(Tok::Dot),
            '/' => Some(Tok::Slash),
            '&' => Some(Tok::Amp),
            '|' => Some(Tok::Bar),
            '=' => Some(Tok::Eq),
            '!' if chars.get(i + 1) == Some(&'=') => {
                adv = 2;
                Some(Tok::Neq)
            }
            '!' => Some(Tok::Bang),
            '-' if chars.get(i + 1) == Some(&'>') => {
                adv = 2;
                Some(Tok::Arrow)
            }
            c if c.is_ascii_digit() => {
                let mut j = i;
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
                adv = j - i;
                let s: String = chars[i..j].iter().collect();
                Some(Tok::Num(s.parse().map_err(|_| SoError::Syntax { line, col, expected: "number".into() })?))
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut j = i;
                while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_' || chars[j] == '\'') {
                    j += 1;
                }
                adv = j - i;
                Some(Tok::Ident(chars[i..j].iter().collect()))
            }
            _ => return Err(SoError::Syntax { line, col, expected: format!("a token, found {c:?}") }),
        };
        if let Some(t) = tok {
            toks.push((t, start.0, start.1));
        }
        i += adv;
        col += adv;
    }
    toks.push((Tok::End, line, col));
    Ok(Lexer { toks })
}

struct Parser<'a> {
    toks: Vec<(Tok, usize, usize)>,
    pos: usize,
    fo: Vec<String>,
    so: Vec<(String, usize)>,
    free: &'a [&'a str],
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn err<T>(&self, expected: &str) -> Result<T, SoError> {
        let (_, line, col) = self.toks[self.pos];
        Err(SoError::Syntax { line, col, expected: expected.to_string() })
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: Tok, what: &str) -> Result<(), SoError> {
        if self.eat(&t) {
            Ok(())
        } else {
            self.err(what)
        }
    }

    fn ident(&mut self) -> Result<String, SoError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.pos += 1;
                Ok(s)
            }
            _ => self.err("identifier"),
        }
    }

    fn formula(&mut self) -> Result<SoFormula, SoError> {
        let lhs = self.disjunction()?;
        if self.eat(&Tok::Arrow) {
            let rhs = self.formula()?;
            return Ok(SoFormula::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn disjunction(&mut self) -> Result<SoFormula, SoError> {
        let mut acc = self.conjunction()?;
        while self.eat(&Tok::Bar) {
            acc = SoFormula::or(acc, self.conjunction()?);
        }
        Ok(acc)
    }

    fn conjunction(&mut self) -> Result<SoFormula, SoError> {
        let mut acc = self.unary()?;
        while self.eat(&Tok::Amp) {
            acc = SoFormula::and(acc, self.unary()?);
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<SoFormula, SoError> {
        if self.eat(&Tok::Bang) {
            return Ok(SoFormula::not(self.unary()?));
        }
        if self.eat(&Tok::LParen) {
            let f = self.formula()?;
            self.expect(Tok::RParen, ")")?;
            return Ok(f);
        }
        let Tok::Ident(word) = self.peek().clone() else { return self.err("formula") };
        match word.as_str() {
            "true" => {
                self.pos += 1;
                Ok(SoFormula::True)
            }
            "false" => {
                self.pos += 1;
                Ok(SoFormula::False)
            }
            "exists" | "forall" => {
                self.pos += 1;
                let mut vars = vec![self.ident()?];
                while let Tok::Ident(v) = self.peek().clone() {
                    self.pos += 1;
                    vars.push(v);
                }
                self.expect(Tok::Dot, ".")?;
                let n = self.fo.len();
                self.fo.extend(vars.iter().cloned());
                let body = self.formula()?;
                self.fo.truncate(n);
                Ok(vars.iter().rev().fold(body, |acc, v| {
                    if word == "exists" {
                        SoFormula::ExistsFo(v.clone(), Box::new(acc))
                    } else {
                        SoFormula::ForallFo(v.clone(), Box::new(acc))
                    }
                }))
            }
            "exists2" | "forall2" => {
                self.pos += 1;
                let mut vars = Vec::new();
                loop {
                    let x = self.ident()?;
                    self.expect(Tok::Slash, "/")?;
                    let Tok::Num(a) = self.peek().clone() else { return self.err("arity") };
                    self.pos += 1;
                    vars.push((x, a));
                    if !matches!(self.peek(), Tok::Ident(_)) {
                        break;
                    }
                }
                self.expect(Tok::Dot, ".")?;
                let n = self.so.len();
                self.so.extend(vars.iter().cloned());
                let body = self.formula()?;
                self.so.truncate(n);
                Ok(vars.iter().rev().fold(body, |acc, (x, a)| {
                    if word == "exists2" {
                        SoFormula::ExistsSo(x.clone(), *a, Box::new(acc))
                    } else {
                        SoFormula::ForallSo(x.clone(), *a, Box::new(acc))
                    }
                }))
            }
            _ => self.atom(),
        }
    }

    fn term(&mut self) -> Result<Term, SoError> {
        let name = self.ident()?;
        if self.fo.contains(&name) || self.free.contains(&name.as_str()) {
            Ok(Term::Var(name))
        } else {
            Ok(Term::Const(name))
        }
    }

    fn atom(&mut self) -> Result<SoFormula, SoError> {
        if matches!(self.toks.get(self.pos + 1), Some((Tok::LParen, _, _))) {
            let name = self.ident()?;
            self.pos += 1;
            let mut args = Vec::new();
            if !self.eat(&Tok::RParen) {
                loop {
                    args.push(self.term()?);
                    if self.eat(&Tok::RParen) {
                        break;
                    }
                    self.expect(Tok::Comma, ", or )")?;
                }
            }
            if let Some((_, a)) = self.so.iter().rev().find(|(x, _)| *x == name) {
                if *a != args.len() {
                    return Err(SoError::Arity { name, expected: *a, got: args.len() });
                }
                return Ok(SoFormula::Var(name, args));
            }
            return Ok(SoFormula::Rel(name, args));
        }
        let a = self.term()?;
        if self.eat(&Tok::Eq) {
            Ok(SoFormula::Eq(a, self.term()?))
        } else if self.eat(&Tok::Neq) {
            Ok(SoFormula::neq(a, self.term()?))
        } else {
            self.err("= or !=")
        }
    }
}

/// Parses a formula; identifiers not bound by a quantifier are constants.
pub fn parse_so(text: &str) -> Result<SoFormula, SoError> {
    parse_so_with(text, &[])
}

/// Parses a formula whose free first-order variables are `free`.
pub fn parse_so_with(text: &str, free: &[&str]) -> Result<SoFormula, SoError> {
    let lexer = lex(text)?;
    let mut p = Parser { toks: lexer.toks, pos: 0, fo: Vec::new(), so: Vec::new(), free };
    let f = p.formula()?;
    if *p.peek() != Tok::End {
        return p.err("end of input");
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clique_formula() {
        let f = parse_so("forall x y. V(x) & V(y) & x != y -> E(x, y)").unwrap();
        let SoFormula::ForallFo(x, body) = &f else { panic!() };
        assert_eq!(x, "x");
        assert!(matches!(body.as_ref(), SoFormula::ForallFo(..)));
        assert_eq!(f.to_string(), "forall x. forall y. (((V(x) & V(y)) & x != y) -> E(x, y))");
    }

    #[test]
    fn so_atoms_resolve_to_variables() {
        let f = parse_so("exists2 X/1 Y/2. X(c) & Y(c, d) & R(c)").unwrap();
        let text = format!("{f:?}");
        assert!(text.contains("Var(\"X\"") && text.contains("Var(\"Y\"") && text.contains("Rel(\"R\""));
        assert!(matches!(parse_so("exists2 X/1. X(a, b)"), Err(SoError::Arity { .. })));
    }

    #[test]
    fn syntax_errors_have_positions() {
        assert_eq!(parse_so("R(x) &"), Err(SoError::Syntax { line: 1, col: 7, expected: "formula".into() }));
        assert!(matches!(parse_so("exists x R(x)"), Err(SoError::Syntax { .. })));
    }
}
