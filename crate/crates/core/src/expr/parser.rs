use super::{BinOp, Expr, Func, ParseError, ParseErrorKind, Var, VarSet};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(src: &'a str) -> Result<Vec<(usize, Tok)>, ParseError> {
        let mut lx = Lexer { src, pos: 0 };
        let mut out = Vec::new();
        while let Some(t) = lx.next_token()? {
            out.push(t);
        }
        Ok(out)
    }

    fn peek_byte(&self) -> Option<u8> {
        self.src.as_bytes().get(self.pos).copied()
    }

    fn next_token(&mut self) -> Result<Option<(usize, Tok)>, ParseError> {
        while self.peek_byte().is_some_and(|b| b.is_ascii_whitespace()) {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(b) = self.peek_byte() else { return Ok(None) };
        if b.is_ascii_digit() || b == b'.' {
            let bytes = self.src.as_bytes();
            while self.pos < bytes.len() && (bytes[self.pos].is_ascii_digit() || bytes[self.pos] == b'.') {
                self.pos += 1;
            }
            if self.pos < bytes.len() && (bytes[self.pos] == b'e' || bytes[self.pos] == b'E') {
                let mut k = self.pos + 1;
                if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                    k += 1;
                }
                if k < bytes.len() && bytes[k].is_ascii_digit() {
                    while k < bytes.len() && bytes[k].is_ascii_digit() {
                        k += 1;
                    }
                    self.pos = k;
                }
            }
            let text = &self.src[start..self.pos];
            return text
                .parse::<f64>()
                .map(|v| Some((start, Tok::Num(v))))
                .map_err(|_| ParseError { offset: start, kind: ParseErrorKind::InvalidNumber(text.into()) });
        }
        if b.is_ascii_alphabetic() || b == b'_' {
            let bytes = self.src.as_bytes();
            while self.pos < bytes.len() && (bytes[self.pos].is_ascii_alphanumeric() || bytes[self.pos] == b'_') {
                self.pos += 1;
            }
            return Ok(Some((start, Tok::Ident(self.src[start..self.pos].to_string()))));
        }
        let c = self.src[start..].chars().next().unwrap();
        if "+-*/^(),".contains(c) {
            self.pos += 1;
            return Ok(Some((start, Tok::Op(c))));
        }
        Err(ParseError { offset: start, kind: ParseErrorKind::Unexpected(format!("character `{c}`")) })
    }
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
    end: usize,
    vars: VarSet,
}

/// Parses `text` against the declared variable set.
pub fn parse(text: &str, vars: VarSet) -> Result<Expr, ParseError> {
    let toks = Lexer::tokens(text)?;
    let mut p = Parser { toks, at: 0, end: text.len(), vars };
    let e = p.expr()?;
    if let Some((off, t)) = p.toks.get(p.at) {
        return Err(ParseError { offset: *off, kind: ParseErrorKind::Unexpected(describe(t)) });
    }
    Ok(e)
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Num(v) => format!("number {v}"),
        Tok::Ident(s) => format!("identifier `{s}`"),
        Tok::Op(c) => format!("`{c}`"),
    }
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|t| &t.1)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.at).map_or(self.end, |t| t.0)
    }

    fn unexpected(&self) -> ParseError {
        match self.toks.get(self.at) {
            Some((off, t)) => ParseError { offset: *off, kind: ParseErrorKind::Unexpected(describe(t)) },
            None => ParseError { offset: self.end, kind: ParseErrorKind::UnexpectedEnd },
        }
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Op(c)) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.unexpected())
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat('+') {
                BinOp::Add
            } else if self.eat('-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat('*') {
                BinOp::Mul
            } else if self.eat('/') {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if !self.eat('^') {
            return Ok(base);
        }
        let start = self.offset();
        let exponent = self.exponent()?;
        if exponent.has_vars() {
            return Err(ParseError { offset: start, kind: ParseErrorKind::VariableExponent });
        }
        let value = exponent
            .eval(&[], None)
            .map_err(|e| ParseError { offset: start, kind: ParseErrorKind::InvalidNumber(e.to_string()) })?;
        Ok(Expr::Pow(Box::new(base), value))
    }

    fn exponent(&mut self) -> Result<Expr, ParseError> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.exponent()?)));
        }
        self.power()
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let off = self.offset();
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.at += 1;
                Ok(Expr::Const(v))
            }
            Some(Tok::Op('(')) => {
                self.at += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                self.at += 1;
                if let Some(func) = Func::lookup(&name) {
                    self.expect('(')?;
                    let mut args = vec![self.expr()?];
                    while self.eat(',') {
                        args.push(self.expr()?);
                    }
                    self.expect(')')?;
                    if args.len() != func.arity() {
                        return Err(ParseError {
                            offset: off,
                            kind: ParseErrorKind::Arity { func: func.name(), expected: func.arity(), got: args.len() },
                        });
                    }
                    return Ok(Expr::Call(func, args));
                }
                self.variable(&name).ok_or(ParseError { offset: off, kind: ParseErrorKind::UnknownIdentifier(name) })
            }
            _ => Err(self.unexpected()),
        }
    }

    fn variable(&self, name: &str) -> Option<Expr> {
        if name == "z" {
            return self.vars.allow_z.then_some(Expr::Var(Var::Z));
        }
        let digits = name.strip_prefix('x')?;
        if digits.starts_with('0') || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let i: usize = digits.parse().ok()?;
        (1..=self.vars.dim).contains(&i).then_some(Expr::Var(Var::X(i - 1)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (0.0f64..1e6).prop_map(Expr::Const),
            (0usize..3).prop_map(|i| Expr::Var(Var::X(i))),
            Just(Expr::Var(Var::Z)),
        ];
        leaf.prop_recursive(5, 48, 3, |inner| {
            prop_oneof![
                inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
                (inner.clone(), inner.clone(), 0..4u8).prop_map(|(a, b, k)| {
                    let op = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div][k as usize];
                    Expr::Binary(op, Box::new(a), Box::new(b))
                }),
                (inner.clone(), -4.0f64..4.0).prop_map(|(a, e)| Expr::Pow(Box::new(a), e)),
                (inner.clone(), 0..6u8).prop_map(|(a, k)| {
                    let f = [Func::Exp, Func::Log, Func::Sin, Func::Cos, Func::Sqrt, Func::Abs][k as usize];
                    Expr::Call(f, vec![a])
                }),
                (inner.clone(), inner, any::<bool>()).prop_map(|(a, b, mx)| {
                    Expr::Call(if mx { Func::Max } else { Func::Min }, vec![a, b])
                }),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(e in arb_expr()) {
            let text = e.to_string();
            let back = parse(&text, VarSet::with_z(3)).unwrap();
            prop_assert_eq!(&back, &e);
            let again = parse(&back.to_string(), VarSet::with_z(3)).unwrap();
            prop_assert_eq!(again, back);
        }
    }
}
