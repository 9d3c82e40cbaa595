//! Pretty-printer. Inverse of the parser up to alpha-equivalence: parsing the
//! output yields a term alpha-equivalent to the input.
//!
//! Binder names are kept where possible; when a binder would capture an
//! enclosing name (shadowing in the uid structure), primes are appended until
//! the name is unambiguous in its scope. `Tuple<n>` constructors resugar to
//! tuple syntax.

use std::collections::{HashMap, HashSet};

use super::{free_var_list, Term, Uid};

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Prec {
    Term,
    App,
    Atom,
}

pub fn print(t: &Term) -> String {
    let mut printer = Printer {
        reserved: free_var_list(t).into_iter().map(|v| v.name).collect(),
        display: HashMap::new(),
        stack: Vec::new(),
        out: String::new(),
    };
    printer.term(t, Prec::Term);
    printer.out
}

struct Printer {
    /// Free-variable names; binders must never collide with these.
    reserved: HashSet<String>,
    display: HashMap<Uid, String>,
    /// Display names of the binders currently in scope.
    stack: Vec<String>,
    out: String,
}

impl Printer {
    fn enter_binder(&mut self, uid: Uid, name: &str) -> String {
        let mut candidate = name.to_string();
        while self.reserved.contains(&candidate) || self.stack.contains(&candidate) {
            candidate.push('\'');
        }
        self.display.insert(uid, candidate.clone());
        self.stack.push(candidate.clone());
        candidate
    }

    fn exit_binders(&mut self, n: usize) {
        self.stack.truncate(self.stack.len() - n);
    }

    fn var_name(&self, uid: Uid, fallback: &str) -> String {
        self.display
            .get(&uid)
            .cloned()
            .unwrap_or_else(|| fallback.to_string())
    }

    fn term(&mut self, t: &Term, prec: Prec) {
        match t {
            Term::Var(v) => {
                let name = self.var_name(v.uid, &v.name);
                self.out.push_str(&name);
            }
            Term::Lam(param, body) => {
                self.open(prec, Prec::Term);
                let name = self.enter_binder(param.uid, &param.name);
                self.out.push_str("fun ");
                self.out.push_str(&name);
                self.out.push_str(" -> ");
                self.term(body, Prec::Term);
                self.exit_binders(1);
                self.close(prec, Prec::Term);
            }
            Term::App(f, a) => {
                self.open(prec, Prec::App);
                self.term(f, Prec::App);
                self.out.push(' ');
                self.term(a, Prec::Atom);
                self.close(prec, Prec::App);
            }
            Term::Constr(tag, args) => {
                if is_tuple_tag(tag, args.len()) {
                    self.out.push('(');
                    for (i, arg) in args.iter().enumerate() {
                        if i > 0 {
                            self.out.push_str(", ");
                        }
                        self.term(arg, Prec::Term);
                    }
                    self.out.push(')');
                } else {
                    self.out.push_str(tag);
                    self.out.push('(');
                    for (i, arg) in args.iter().enumerate() {
                        if i > 0 {
                            self.out.push_str(", ");
                        }
                        self.term(arg, Prec::Term);
                    }
                    self.out.push(')');
                }
            }
            Term::Match(scrutinee, clauses) => {
                self.open(prec, Prec::Term);
                self.out.push_str("match ");
                self.term(scrutinee, Prec::Term);
                self.out.push_str(" with ");
                let last = clauses.len() - 1;
                for (i, clause) in clauses.iter().enumerate() {
                    if i > 0 {
                        self.out.push_str(" | ");
                    }
                    self.out.push_str(&clause.tag);
                    self.out.push('(');
                    let names: Vec<String> = clause
                        .params
                        .iter()
                        .map(|p| self.enter_binder(p.uid, &p.name))
                        .collect();
                    self.out.push_str(&names.join(", "));
                    self.out.push_str(") -> ");
                    // A non-final clause body that ends in an open match form
                    // would swallow the following `|`; parenthesize it.
                    let guard = i != last && ends_in_match(&clause.body);
                    if guard {
                        self.out.push('(');
                    }
                    self.term(&clause.body, Prec::Term);
                    if guard {
                        self.out.push(')');
                    }
                    self.exit_binders(clause.params.len());
                }
                self.close(prec, Prec::Term);
            }
            Term::LetRec(bindings, body) => {
                self.open(prec, Prec::Term);
                self.out.push_str("let rec ");
                let names: Vec<String> = bindings
                    .iter()
                    .map(|(name, _)| self.enter_binder(name.uid, &name.name))
                    .collect();
                for (i, (name, rhs)) in names.iter().zip(bindings).enumerate() {
                    if i > 0 {
                        self.out.push_str(" and ");
                    }
                    self.out.push_str(name);
                    self.out.push_str(" = ");
                    self.term(&rhs.1, Prec::Term);
                }
                self.out.push_str(" in ");
                self.term(body, Prec::Term);
                self.exit_binders(bindings.len());
                self.close(prec, Prec::Term);
            }
        }
    }

    fn open(&mut self, required: Prec, actual: Prec) {
        if actual < required {
            self.out.push('(');
        }
    }

    fn close(&mut self, required: Prec, actual: Prec) {
        if actual < required {
            self.out.push(')');
        }
    }
}

fn is_tuple_tag(tag: &str, arity: usize) -> bool {
    arity >= 2 && tag == format!("Tuple{arity}")
}

/// Whether the rightmost open spine of `t` ends in a match, in which case a
/// following `|` token would attach to the inner match when reparsed.
fn ends_in_match(t: &Term) -> bool {
    match t {
        Term::Match(_, _) => true,
        Term::Lam(_, body) => ends_in_match(body),
        Term::LetRec(_, body) => ends_in_match(body),
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{alpha_eq, parse_with_ambient, Term, Uid, VarId};

    fn v(name: &str, uid: u32) -> VarId {
        VarId::new(name, Uid(uid))
    }

    fn roundtrips(t: &Term) {
        let text = print(t);
        let (back, _) = parse_with_ambient(&text)
            .unwrap_or_else(|d| panic!("reparse failed for {text:?}: {d:?}"));
        assert!(alpha_eq(t, &back), "round trip failed:\n  {text}\n");
    }

    #[test]
    fn basic_forms() {
        let x = v("x", 1);
        assert_eq!(print(&Term::lam(x.clone(), Term::var(x.clone()))), "fun x -> x");
        let f = v("f", 1);
        let a = v("a", 2);
        let b = v("b", 3);
        assert_eq!(
            print(&Term::app(
                Term::app(Term::var(f.clone()), Term::var(a.clone())),
                Term::var(b.clone())
            )),
            "f a b"
        );
        assert_eq!(
            print(&Term::app(
                Term::var(f),
                Term::app(Term::var(a), Term::var(b))
            )),
            "f (a b)"
        );
    }

    #[test]
    fn tuple_resugaring() {
        let a = v("a", 1);
        let b = v("b", 2);
        assert_eq!(
            print(&Term::constr(
                "Tuple2",
                vec![Term::var(a), Term::var(b)]
            )),
            "(a, b)"
        );
        // wrong arity stays a plain constructor
        assert_eq!(
            print(&Term::constr("Tuple2", vec![Term::var(v("c", 3))])),
            "Tuple2(c)"
        );
    }

    #[test]
    fn shadowed_binders_get_primes() {
        // fun x -> fun x -> outer-x: must not capture when reparsed
        let outer = v("x", 1);
        let inner = v("x", 2);
        let t = Term::lam(
            outer.clone(),
            Term::lam(inner, Term::var(outer.clone())),
        );
        assert_eq!(print(&t), "fun x -> fun x' -> x");
        roundtrips(&t);
    }

    #[test]
    fn binder_avoids_free_names() {
        // fun y -> free-y application
        let p = v("y", 1);
        let free = v("y", 2);
        let t = Term::lam(p, Term::app(Term::var(v("y", 1)), Term::var(free)));
        let text = print(&t);
        assert_eq!(text, "fun y' -> y' y");
        roundtrips(&t);
    }

    #[test]
    fn nested_match_in_clause_body_is_parenthesized() {
        let src = "match x with K() -> (match y with J() -> y | L() -> y) | M() -> x";
        let (t, _) = parse_with_ambient(src).unwrap();
        roundtrips(&t);
        let text = print(&t);
        assert!(text.contains("(match"), "got: {text}");
    }

    #[test]
    fn letrec_prints_and_roundtrips() {
        let src = "let rec ones = Cons(One(), ones) in ones";
        let (t, _) = parse_with_ambient(src).unwrap();
        assert_eq!(print(&t), src);
        roundtrips(&t);
    }
}
