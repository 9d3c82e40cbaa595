//! Lexer, parser, desugarer, and scope resolution for the concrete grammar:
//!
//! ```text
//! program  := term EOF
//! term     := "fun" ident "->" term
//!           | "let" "rec" bind {"and" bind} "in" term
//!           | "let" ident "=" term "in" term
//!           | "match" term "with" ["|"] clause {"|" clause}
//!           | "if" term "then" term "else" term
//!           | app
//! bind     := ident "=" term
//! clause   := UIdent ["(" [ident {"," ident}] ")"] "->" term
//! app      := app atom | atom
//! atom     := ident | UIdent ["(" [term {"," term}] ")"]
//!           | "(" term {"," term} ")" | "(" term ")"
//! ```
//!
//! Comments are `(* ... *)` and nest. Surface sugar is eliminated here:
//! tuples become `Tuple<n>` constructors, `let` becomes a one-binding
//! `let rec` whose bound name is not in scope of its own right-hand side,
//! and `if` becomes a match on nullary `True`/`False`.

use std::collections::HashMap;

use super::{Clause, Span, Term, UidGen, VarId};

/// Parse-time problem: syntax error, unbound variable, duplicate name, or
/// reserved constructor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub message: String,
    pub span: Span,
}

impl Diagnostic {
    fn new(message: impl Into<String>, span: Span) -> Self {
        Diagnostic {
            message: message.into(),
            span,
        }
    }
}

/// Parses a closed program. Free variables are reported as errors.
pub fn parse(source: &str) -> Result<Term, Vec<Diagnostic>> {
    let (term, ambient) = parse_with_ambient(source)?;
    if ambient.is_empty() {
        return Ok(term);
    }
    Err(ambient
        .iter()
        .map(|v| Diagnostic::new(format!("unbound variable `{}`", v.name), v.span))
        .collect())
}

/// Parses a term that may mention free (ambient) variables. Distinct free
/// names each get one uid shared by all their occurrences; the returned list
/// holds one `VarId` per free name, in order of first appearance.
pub fn parse_with_ambient(source: &str) -> Result<(Term, Vec<VarId>), Vec<Diagnostic>> {
    let tokens = lex(source).map_err(|d| vec![d])?;
    let mut parser = Parser { tokens, pos: 0 };
    let surface = parser.program().map_err(|d| vec![d])?;
    let mut lower = Lower {
        gen: UidGen::starting_at(0),
        scope: Vec::new(),
        ambient: Vec::new(),
        diagnostics: Vec::new(),
    };
    let term = lower.term(&surface);
    if lower.diagnostics.is_empty() {
        Ok((term, lower.ambient))
    } else {
        Err(lower.diagnostics)
    }
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    UIdent(String),
    Fun,
    Let,
    Rec,
    And,
    In,
    Match,
    With,
    If,
    Then,
    Else,
    Arrow,
    Equals,
    Bar,
    LParen,
    RParen,
    Comma,
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    span: Span,
}

fn lex(source: &str) -> Result<Vec<Token>, Diagnostic> {
    let bytes = source.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b' ' | b'\t' | b'\r' | b'\n' => i += 1,
            b'(' if bytes.get(i + 1) == Some(&b'*') => {
                let start = i;
                let mut depth = 1;
                i += 2;
                while depth > 0 {
                    if i + 1 < bytes.len() && bytes[i] == b'(' && bytes[i + 1] == b'*' {
                        depth += 1;
                        i += 2;
                    } else if i + 1 < bytes.len() && bytes[i] == b'*' && bytes[i + 1] == b')' {
                        depth -= 1;
                        i += 2;
                    } else if i < bytes.len() {
                        i += 1;
                    } else {
                        return Err(Diagnostic::new(
                            "unterminated comment",
                            Span::new(start, bytes.len()),
                        ));
                    }
                }
            }
            b'(' => {
                tokens.push(Token {
                    tok: Tok::LParen,
                    span: Span::new(i, i + 1),
                });
                i += 1;
            }
            b')' => {
                tokens.push(Token {
                    tok: Tok::RParen,
                    span: Span::new(i, i + 1),
                });
                i += 1;
            }
            b',' => {
                tokens.push(Token {
                    tok: Tok::Comma,
                    span: Span::new(i, i + 1),
                });
                i += 1;
            }
            b'|' => {
                tokens.push(Token {
                    tok: Tok::Bar,
                    span: Span::new(i, i + 1),
                });
                i += 1;
            }
            b'=' => {
                tokens.push(Token {
                    tok: Tok::Equals,
                    span: Span::new(i, i + 1),
                });
                i += 1;
            }
            b'-' if bytes.get(i + 1) == Some(&b'>') => {
                tokens.push(Token {
                    tok: Tok::Arrow,
                    span: Span::new(i, i + 2),
                });
                i += 2;
            }
            b'a'..=b'z' | b'_' => {
                let start = i;
                while i < bytes.len() && is_ident_char(bytes[i]) {
                    i += 1;
                }
                let text = &source[start..i];
                let tok = match text {
                    "fun" => Tok::Fun,
                    "let" => Tok::Let,
                    "rec" => Tok::Rec,
                    "and" => Tok::And,
                    "in" => Tok::In,
                    "match" => Tok::Match,
                    "with" => Tok::With,
                    "if" => Tok::If,
                    "then" => Tok::Then,
                    "else" => Tok::Else,
                    _ => Tok::Ident(text.to_string()),
                };
                tokens.push(Token {
                    tok,
                    span: Span::new(start, i),
                });
            }
            b'A'..=b'Z' => {
                let start = i;
                while i < bytes.len() && is_ident_char(bytes[i]) {
                    i += 1;
                }
                tokens.push(Token {
                    tok: Tok::UIdent(source[start..i].to_string()),
                    span: Span::new(start, i),
                });
            }
            _ => {
                return Err(Diagnostic::new(
                    format!("unexpected character `{}`", &source[i..i + 1]),
                    Span::new(i, i + 1),
                ));
            }
        }
    }
    tokens.push(Token {
        tok: Tok::Eof,
        span: Span::new(bytes.len(), bytes.len()),
    });
    Ok(tokens)
}

fn is_ident_char(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_' || b == b'\''
}

// ---------------------------------------------------------------------------
// Surface syntax
// ---------------------------------------------------------------------------

#[derive(Debug)]
enum Surface {
    Var(String, Span),
    Fun(String, Span, Box<Surface>),
    LetRec(Vec<(String, Span, Surface)>, Box<Surface>),
    Let(String, Span, Box<Surface>, Box<Surface>),
    Match(Box<Surface>, Vec<SClause>),
    If(Box<Surface>, Box<Surface>, Box<Surface>),
    App(Box<Surface>, Box<Surface>),
    Constr(String, Span, Vec<Surface>),
    Tuple(Vec<Surface>),
}

#[derive(Debug)]
struct SClause {
    tag: String,
    tag_span: Span,
    params: Vec<(String, Span)>,
    body: Surface,
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_span(&self) -> Span {
        self.tokens[self.pos].span
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<Token, Diagnostic> {
        if *self.peek() == tok {
            Ok(self.advance())
        } else {
            Err(Diagnostic::new(
                format!("expected {what}"),
                self.peek_span(),
            ))
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, Span), Diagnostic> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                let span = self.peek_span();
                self.advance();
                Ok((name, span))
            }
            _ => Err(Diagnostic::new(
                format!("expected {what}"),
                self.peek_span(),
            )),
        }
    }

    fn program(&mut self) -> Result<Surface, Diagnostic> {
        let t = self.term()?;
        self.expect(Tok::Eof, "end of input")?;
        Ok(t)
    }

    fn term(&mut self) -> Result<Surface, Diagnostic> {
        match self.peek() {
            Tok::Fun => {
                self.advance();
                let (name, span) = self.ident("parameter name after `fun`")?;
                self.expect(Tok::Arrow, "`->` after parameter")?;
                let body = self.term()?;
                Ok(Surface::Fun(name, span, Box::new(body)))
            }
            Tok::Let => {
                self.advance();
                if *self.peek() == Tok::Rec {
                    self.advance();
                    let mut bindings = vec![self.binding()?];
                    while *self.peek() == Tok::And {
                        self.advance();
                        bindings.push(self.binding()?);
                    }
                    self.expect(Tok::In, "`in` after bindings")?;
                    let body = self.term()?;
                    Ok(Surface::LetRec(bindings, Box::new(body)))
                } else {
                    let (name, span) = self.ident("binding name after `let`")?;
                    self.expect(Tok::Equals, "`=` after binding name")?;
                    let rhs = self.term()?;
                    self.expect(Tok::In, "`in` after binding")?;
                    let body = self.term()?;
                    Ok(Surface::Let(name, span, Box::new(rhs), Box::new(body)))
                }
            }
            Tok::Match => {
                self.advance();
                let scrutinee = self.term()?;
                self.expect(Tok::With, "`with` after match scrutinee")?;
                if *self.peek() == Tok::Bar {
                    self.advance();
                }
                let mut clauses = vec![self.clause()?];
                while *self.peek() == Tok::Bar {
                    self.advance();
                    clauses.push(self.clause()?);
                }
                Ok(Surface::Match(Box::new(scrutinee), clauses))
            }
            Tok::If => {
                self.advance();
                let cond = self.term()?;
                self.expect(Tok::Then, "`then`")?;
                let then_branch = self.term()?;
                self.expect(Tok::Else, "`else`")?;
                let else_branch = self.term()?;
                Ok(Surface::If(
                    Box::new(cond),
                    Box::new(then_branch),
                    Box::new(else_branch),
                ))
            }
            _ => self.application(),
        }
    }

    fn binding(&mut self) -> Result<(String, Span, Surface), Diagnostic> {
        let (name, span) = self.ident("binding name")?;
        self.expect(Tok::Equals, "`=` after binding name")?;
        let rhs = self.term()?;
        Ok((name, span, rhs))
    }

    fn clause(&mut self) -> Result<SClause, Diagnostic> {
        let (tag, tag_span) = match self.peek().clone() {
            Tok::UIdent(tag) => {
                let span = self.peek_span();
                self.advance();
                (tag, span)
            }
            _ => {
                return Err(Diagnostic::new(
                    "expected constructor pattern",
                    self.peek_span(),
                ))
            }
        };
        let mut params = Vec::new();
        if *self.peek() == Tok::LParen {
            self.advance();
            if *self.peek() != Tok::RParen {
                params.push(self.ident("pattern variable")?);
                while *self.peek() == Tok::Comma {
                    self.advance();
                    params.push(self.ident("pattern variable")?);
                }
            }
            self.expect(Tok::RParen, "`)` after pattern variables")?;
        }
        self.expect(Tok::Arrow, "`->` after pattern")?;
        let body = self.term()?;
        Ok(SClause {
            tag,
            tag_span,
            params,
            body,
        })
    }

    fn application(&mut self) -> Result<Surface, Diagnostic> {
        let mut acc = self.atom()?;
        while self.starts_atom() {
            let arg = self.atom()?;
            acc = Surface::App(Box::new(acc), Box::new(arg));
        }
        Ok(acc)
    }

    fn starts_atom(&self) -> bool {
        matches!(
            self.peek(),
            Tok::Ident(_) | Tok::UIdent(_) | Tok::LParen
        )
    }

    fn atom(&mut self) -> Result<Surface, Diagnostic> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                let span = self.peek_span();
                self.advance();
                Ok(Surface::Var(name, span))
            }
            Tok::UIdent(tag) => {
                let span = self.peek_span();
                self.advance();
                let mut args = Vec::new();
                if *self.peek() == Tok::LParen {
                    self.advance();
                    if *self.peek() != Tok::RParen {
                        args.push(self.term()?);
                        while *self.peek() == Tok::Comma {
                            self.advance();
                            args.push(self.term()?);
                        }
                    }
                    self.expect(Tok::RParen, "`)` after constructor arguments")?;
                }
                Ok(Surface::Constr(tag, span, args))
            }
            Tok::LParen => {
                self.advance();
                let first = self.term()?;
                if *self.peek() == Tok::Comma {
                    let mut items = vec![first];
                    while *self.peek() == Tok::Comma {
                        self.advance();
                        items.push(self.term()?);
                    }
                    self.expect(Tok::RParen, "`)` after tuple")?;
                    Ok(Surface::Tuple(items))
                } else {
                    self.expect(Tok::RParen, "`)`")?;
                    Ok(first)
                }
            }
            _ => Err(Diagnostic::new("expected a term", self.peek_span())),
        }
    }
}

// ---------------------------------------------------------------------------
// Desugaring and scope resolution
// ---------------------------------------------------------------------------

struct Lower {
    gen: UidGen,
    scope: Vec<(String, VarId)>,
    ambient: Vec<VarId>,
    diagnostics: Vec<Diagnostic>,
}

impl Lower {
    fn bind(&mut self, name: &str, span: Span) -> VarId {
        let v = VarId::with_span(name, self.gen.fresh(), span);
        self.scope.push((name.to_string(), v.clone()));
        v
    }

    fn unbind(&mut self, n: usize) {
        self.scope.truncate(self.scope.len() - n);
    }

    fn resolve(&mut self, name: &str, span: Span) -> VarId {
        if let Some((_, v)) = self.scope.iter().rev().find(|(n, _)| n == name) {
            return VarId {
                span,
                ..v.clone()
            };
        }
        if let Some(v) = self.ambient.iter().find(|v| v.name == name) {
            return VarId {
                span,
                ..v.clone()
            };
        }
        let v = VarId::with_span(name, self.gen.fresh(), span);
        self.ambient.push(v.clone());
        v
    }

    fn check_tag(&mut self, tag: &str, span: Span) {
        if tag.starts_with("Tuple") {
            self.diagnostics.push(Diagnostic::new(
                format!("constructor name `{tag}` is reserved for tuples"),
                span,
            ));
        }
    }

    fn term(&mut self, s: &Surface) -> Term {
        match s {
            Surface::Var(name, span) => Term::Var(self.resolve(name, *span)),
            Surface::Fun(name, span, body) => {
                let param = self.bind(name, *span);
                let body = self.term(body);
                self.unbind(1);
                Term::lam(param, body)
            }
            Surface::Let(name, span, rhs, body) => {
                // The bound name is not in scope of its own right-hand side.
                let rhs = self.term(rhs);
                let name = self.bind(name, *span);
                let body = self.term(body);
                self.unbind(1);
                Term::letrec(vec![(name, rhs)], body)
            }
            Surface::LetRec(bindings, body) => {
                let mut names = Vec::new();
                for (name, span, _) in bindings {
                    if names.iter().any(|v: &VarId| v.name == *name) {
                        self.diagnostics.push(Diagnostic::new(
                            format!("duplicate name `{name}` in recursive binding group"),
                            *span,
                        ));
                    }
                    names.push(self.bind(name, *span));
                }
                let lowered: Vec<(VarId, Term)> = bindings
                    .iter()
                    .zip(names.iter())
                    .map(|((_, _, rhs), name)| (name.clone(), self.term(rhs)))
                    .collect();
                let body = self.term(body);
                self.unbind(bindings.len());
                Term::letrec(lowered, body)
            }
            Surface::Match(scrutinee, clauses) => {
                let scrutinee = self.term(scrutinee);
                let clauses = clauses.iter().map(|c| self.clause(c)).collect();
                Term::Match(Box::new(scrutinee), clauses)
            }
            Surface::If(cond, then_branch, else_branch) => {
                let cond = self.term(cond);
                let then_body = self.term(then_branch);
                let else_body = self.term(else_branch);
                Term::Match(
                    Box::new(cond),
                    vec![
                        Clause {
                            tag: "True".to_string(),
                            params: Vec::new(),
                            body: then_body,
                        },
                        Clause {
                            tag: "False".to_string(),
                            params: Vec::new(),
                            body: else_body,
                        },
                    ],
                )
            }
            Surface::App(f, a) => {
                let f = self.term(f);
                let a = self.term(a);
                Term::app(f, a)
            }
            Surface::Constr(tag, span, args) => {
                self.check_tag(tag, *span);
                let args = args.iter().map(|a| self.term(a)).collect();
                Term::Constr(tag.clone(), args)
            }
            Surface::Tuple(items) => {
                let args: Vec<Term> = items.iter().map(|a| self.term(a)).collect();
                Term::Constr(format!("Tuple{}", args.len()), args)
            }
        }
    }

    fn clause(&mut self, c: &SClause) -> Clause {
        self.check_tag(&c.tag, c.tag_span);
        let mut seen: HashMap<&str, ()> = HashMap::new();
        for (name, span) in &c.params {
            if seen.insert(name.as_str(), ()).is_some() {
                self.diagnostics.push(Diagnostic::new(
                    format!("duplicate pattern variable `{name}`"),
                    *span,
                ));
            }
        }
        let params: Vec<VarId> = c
            .params
            .iter()
            .map(|(name, span)| self.bind(name, *span))
            .collect();
        let body = self.term(&c.body);
        self.unbind(params.len());
        Clause {
            tag: c.tag.clone(),
            params,
            body,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{alpha_eq, binders_unique, free_var_list, Uid};

    fn parse_ok(src: &str) -> Term {
        parse(src).unwrap_or_else(|d| panic!("parse failed for {src:?}: {d:?}"))
    }

    #[test]
    fn identity_function() {
        let t = parse_ok("fun x -> x");
        match &t {
            Term::Lam(p, body) => match body.as_ref() {
                Term::Var(v) => assert_eq!(v.uid, p.uid),
                other => panic!("unexpected body {other:?}"),
            },
            other => panic!("unexpected term {other:?}"),
        }
    }

    #[test]
    fn ones_letrec() {
        let t = parse_ok("let rec ones = Cons(One(), ones) in ones");
        match &t {
            Term::LetRec(bindings, body) => {
                assert_eq!(bindings.len(), 1);
                let (name, rhs) = &bindings[0];
                assert_eq!(name.name, "ones");
                match rhs {
                    Term::Constr(tag, args) => {
                        assert_eq!(tag, "Cons");
                        assert_eq!(args.len(), 2);
                        assert_eq!(args[0], Term::constr("One", vec![]));
                        match &args[1] {
                            Term::Var(v) => assert_eq!(v.uid, name.uid),
                            other => panic!("unexpected arg {other:?}"),
                        }
                    }
                    other => panic!("unexpected rhs {other:?}"),
                }
                match body.as_ref() {
                    Term::Var(v) => assert_eq!(v.uid, name.uid),
                    other => panic!("unexpected body {other:?}"),
                }
            }
            other => panic!("unexpected term {other:?}"),
        }
    }

    #[test]
    fn let_desugars_without_self_scope() {
        let (t, ambient) = parse_with_ambient("let x = y in z").unwrap();
        assert_eq!(ambient.len(), 2);
        match &t {
            Term::LetRec(bindings, body) => {
                assert_eq!(bindings.len(), 1);
                assert!(matches!(&bindings[0].1, Term::Var(v) if v.name == "y"));
                assert!(matches!(body.as_ref(), Term::Var(v) if v.name == "z"));
            }
            other => panic!("unexpected term {other:?}"),
        }
        // `let x = x in x`: the right-hand side refers to the ambient x.
        let (t, ambient) = parse_with_ambient("let x = x in x").unwrap();
        assert_eq!(ambient.len(), 1);
        match &t {
            Term::LetRec(bindings, body) => {
                let bound = bindings[0].0.uid;
                assert!(matches!(&bindings[0].1, Term::Var(v) if v.uid == ambient[0].uid));
                assert!(matches!(body.as_ref(), Term::Var(v) if v.uid == bound));
            }
            other => panic!("unexpected term {other:?}"),
        }
    }

    #[test]
    fn if_desugars_to_match() {
        let t = parse_ok("if C() then A() else B()");
        match &t {
            Term::Match(scrut, clauses) => {
                assert_eq!(**scrut, Term::constr("C", vec![]));
                assert_eq!(clauses.len(), 2);
                assert_eq!(clauses[0].tag, "True");
                assert!(clauses[0].params.is_empty());
                assert_eq!(clauses[1].tag, "False");
            }
            other => panic!("unexpected term {other:?}"),
        }
    }

    #[test]
    fn tuples_become_reserved_constructors() {
        let (t, _) = parse_with_ambient("(a, b, c)").unwrap();
        assert!(matches!(&t, Term::Constr(tag, args) if tag == "Tuple3" && args.len() == 3));
        assert!(parse("Tuple2(K(), K())").is_err());
        assert!(parse("match K() with Tuple2(a, b) -> a").is_err());
    }

    #[test]
    fn application_left_associates() {
        let (t, _) = parse_with_ambient("f a b").unwrap();
        match &t {
            Term::App(fa, b) => {
                assert!(matches!(b.as_ref(), Term::Var(v) if v.name == "b"));
                match fa.as_ref() {
                    Term::App(f, a) => {
                        assert!(matches!(f.as_ref(), Term::Var(v) if v.name == "f"));
                        assert!(matches!(a.as_ref(), Term::Var(v) if v.name == "a"));
                    }
                    other => panic!("unexpected function {other:?}"),
                }
            }
            other => panic!("unexpected term {other:?}"),
        }
    }

    #[test]
    fn shadowing_resolves_to_innermost() {
        let t = parse_ok("fun x -> fun x -> x");
        assert!(binders_unique(&t));
        match &t {
            Term::Lam(outer, body) => match body.as_ref() {
                Term::Lam(inner, occ) => {
                    assert_ne!(outer.uid, inner.uid);
                    assert!(matches!(occ.as_ref(), Term::Var(v) if v.uid == inner.uid));
                }
                other => panic!("unexpected body {other:?}"),
            },
            other => panic!("unexpected term {other:?}"),
        }
    }

    #[test]
    fn errors_have_spans() {
        let err = parse("let rec x = x and x = K() in x").unwrap_err();
        assert!(err[0].message.contains("duplicate name"));
        let err = parse("fun x -> y").unwrap_err();
        assert!(err[0].message.contains("unbound variable"));
        assert_eq!(err[0].span, Span::new(9, 10));
        assert!(parse("fun x ->").is_err());
        assert!(parse("match x with").is_err());
        assert!(parse("match K() with K(a, a) -> a").is_err());
    }

    #[test]
    fn comments_nest() {
        let t = parse_ok("(* outer (* inner *) still out *) fun x -> x (* trailing *)");
        assert!(matches!(t, Term::Lam(_, _)));
        assert!(parse("(* unclosed").is_err());
    }

    #[test]
    fn mutual_group_and_clause_scope() {
        let t = parse_ok("let rec f = fun a -> g a and g = fun b -> f b in f");
        assert!(binders_unique(&t));
        let t2 = parse_ok("match K(J()) with K(y) -> y | J() -> K()");
        match &t2 {
            Term::Match(_, clauses) => {
                assert_eq!(clauses.len(), 2);
                assert_eq!(clauses[0].params.len(), 1);
            }
            other => panic!("unexpected term {other:?}"),
        }
        // pattern variables scope only over their clause body
        assert!(parse("match K(J()) with K(y) -> K() | J() -> y").is_err());
    }

    #[test]
    fn ambient_names_share_uids() {
        let (t, ambient) = parse_with_ambient("K(y, y, z)").unwrap();
        assert_eq!(ambient.len(), 2);
        let frees = free_var_list(&t);
        assert_eq!(frees.len(), 2);
        assert!(alpha_eq(&t, &{
            let y = VarId::new("y", Uid(100));
            let z = VarId::new("z", Uid(200));
            Term::constr(
                "K",
                vec![
                    Term::var(y.clone()),
                    Term::var(y.clone()),
                    Term::var(z.clone()),
                ],
            )
        }));
    }
}
