//! Abstract syntax of the core language, plus the structural utilities the
//! rest of the crate builds on: free variables, unique renaming,
//! alpha-equivalence, and paths into terms.
//!
//! The concrete grammar (parser and printer) lives in the submodules.

mod parse;
mod print;

pub use parse::{parse, parse_with_ambient, Diagnostic};
pub use print::print;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

/// Byte-offset range into the original source. Terms built programmatically
/// carry the dummy span `0..0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }
}

/// Identity of a binder or variable occurrence.
///
/// After scope resolution every binder carries a uid that is unique across
/// the whole program (Barendregt convention); occurrences share the uid of
/// the binder they resolve to.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VarId {
    pub name: String,
    pub uid: Uid,
    pub span: Span,
}

impl VarId {
    pub fn new(name: impl Into<String>, uid: Uid) -> Self {
        VarId {
            name: name.into(),
            uid,
            span: Span::default(),
        }
    }

    pub fn with_span(name: impl Into<String>, uid: Uid, span: Span) -> Self {
        VarId {
            name: name.into(),
            uid,
            span,
        }
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Globally unique binder identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Uid(pub u32);

impl fmt::Display for Uid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Core terms. The parser desugars every surface construct into these six
/// forms; nothing else ever appears downstream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Term {
    Var(VarId),
    /// `let rec x1 = t1 and ... in body`; the bound names are in scope of the
    /// body and of every right-hand side. The binding list is non-empty.
    LetRec(Vec<(VarId, Term)>, Box<Term>),
    Lam(VarId, Box<Term>),
    App(Box<Term>, Box<Term>),
    /// Constructor application; the argument list may be empty (nullary).
    Constr(String, Vec<Term>),
    /// Shallow pattern match; the clause list is non-empty.
    Match(Box<Term>, Vec<Clause>),
}

/// One arm of a match: a shallow pattern `K(x1, ..., xn)` and a body. The
/// pattern variables are pairwise distinct and scope over the body only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clause {
    pub tag: String,
    pub params: Vec<VarId>,
    pub body: Term,
}

impl Term {
    pub fn var(v: VarId) -> Term {
        Term::Var(v)
    }

    pub fn lam(param: VarId, body: Term) -> Term {
        Term::Lam(param, Box::new(body))
    }

    pub fn app(f: Term, a: Term) -> Term {
        Term::App(Box::new(f), Box::new(a))
    }

    pub fn constr(tag: impl Into<String>, args: Vec<Term>) -> Term {
        Term::Constr(tag.into(), args)
    }

    pub fn letrec(bindings: Vec<(VarId, Term)>, body: Term) -> Term {
        debug_assert!(!bindings.is_empty(), "letrec bindings must be non-empty");
        Term::LetRec(bindings, Box::new(body))
    }

    pub fn match_(scrutinee: Term, clauses: Vec<Clause>) -> Term {
        debug_assert!(!clauses.is_empty(), "match clauses must be non-empty");
        Term::Match(Box::new(scrutinee), clauses)
    }

    /// Number of term nodes (clauses count through their bodies only).
    pub fn size(&self) -> usize {
        match self {
            Term::Var(_) => 1,
            Term::Lam(_, body) => 1 + body.size(),
            Term::App(f, a) => 1 + f.size() + a.size(),
            Term::Constr(_, args) => 1 + args.iter().map(Term::size).sum::<usize>(),
            Term::Match(scrut, clauses) => {
                1 + scrut.size() + clauses.iter().map(|c| c.body.size()).sum::<usize>()
            }
            Term::LetRec(bindings, body) => {
                1 + bindings.iter().map(|(_, t)| t.size()).sum::<usize>() + body.size()
            }
        }
    }
}

/// One step down into a term. Evaluation contexts use a subset of these
/// (they never descend under a lambda or into a clause body).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathStep {
    LamBody,
    AppFn,
    AppArg,
    ConstrArg(usize),
    MatchScrut,
    ClauseBody(usize),
    LetRecDef(usize),
    LetRecBody,
}

/// Follows `steps` from the root of `t`; `None` if the path does not fit.
pub fn subterm_at<'a>(t: &'a Term, steps: &[PathStep]) -> Option<&'a Term> {
    let mut cur = t;
    for step in steps {
        cur = match (step, cur) {
            (PathStep::LamBody, Term::Lam(_, body)) => body,
            (PathStep::AppFn, Term::App(f, _)) => f,
            (PathStep::AppArg, Term::App(_, a)) => a,
            (PathStep::ConstrArg(i), Term::Constr(_, args)) => args.get(*i)?,
            (PathStep::MatchScrut, Term::Match(scrut, _)) => scrut,
            (PathStep::ClauseBody(i), Term::Match(_, clauses)) => &clauses.get(*i)?.body,
            (PathStep::LetRecDef(i), Term::LetRec(bindings, _)) => &bindings.get(*i)?.1,
            (PathStep::LetRecBody, Term::LetRec(_, body)) => body,
            _ => return None,
        };
    }
    Some(cur)
}

/// Free variables of `t` as a uid set. Letrec-bound names are excluded from
/// both the body and every right-hand side.
pub fn free_vars(t: &Term) -> BTreeSet<Uid> {
    let mut out = BTreeMap::new();
    collect_free(t, &mut out);
    out.into_keys().collect()
}

/// Free variables with their identities, ordered by uid; one representative
/// occurrence per uid.
pub fn free_var_list(t: &Term) -> Vec<VarId> {
    let mut out = BTreeMap::new();
    collect_free(t, &mut out);
    out.into_values().collect()
}

fn collect_free(t: &Term, out: &mut BTreeMap<Uid, VarId>) {
    match t {
        Term::Var(v) => {
            out.entry(v.uid).or_insert_with(|| v.clone());
        }
        Term::Lam(param, body) => {
            let mut inner = BTreeMap::new();
            collect_free(body, &mut inner);
            inner.remove(&param.uid);
            merge_free(out, inner);
        }
        Term::App(f, a) => {
            collect_free(f, out);
            collect_free(a, out);
        }
        Term::Constr(_, args) => {
            for arg in args {
                collect_free(arg, out);
            }
        }
        Term::Match(scrut, clauses) => {
            collect_free(scrut, out);
            for clause in clauses {
                let mut inner = BTreeMap::new();
                collect_free(&clause.body, &mut inner);
                for p in &clause.params {
                    inner.remove(&p.uid);
                }
                merge_free(out, inner);
            }
        }
        Term::LetRec(bindings, body) => {
            let mut inner = BTreeMap::new();
            for (_, rhs) in bindings {
                collect_free(rhs, &mut inner);
            }
            collect_free(body, &mut inner);
            for (name, _) in bindings {
                inner.remove(&name.uid);
            }
            merge_free(out, inner);
        }
    }
}

fn merge_free(out: &mut BTreeMap<Uid, VarId>, inner: BTreeMap<Uid, VarId>) {
    for (uid, v) in inner {
        out.entry(uid).or_insert(v);
    }
}

/// Largest uid mentioned anywhere in the term (binders and occurrences);
/// `None` for a term with no variables at all.
pub fn max_uid(t: &Term) -> Option<Uid> {
    fn note(acc: &mut Option<Uid>, u: Uid) {
        *acc = Some(acc.map_or(u, |m: Uid| m.max(u)));
    }
    fn walk(t: &Term, acc: &mut Option<Uid>) {
        match t {
            Term::Var(v) => note(acc, v.uid),
            Term::Lam(p, body) => {
                note(acc, p.uid);
                walk(body, acc);
            }
            Term::App(f, a) => {
                walk(f, acc);
                walk(a, acc);
            }
            Term::Constr(_, args) => args.iter().for_each(|a| walk(a, acc)),
            Term::Match(scrut, clauses) => {
                walk(scrut, acc);
                for c in clauses {
                    c.params.iter().for_each(|p| note(acc, p.uid));
                    walk(&c.body, acc);
                }
            }
            Term::LetRec(bindings, body) => {
                for (name, rhs) in bindings {
                    note(acc, name.uid);
                    walk(rhs, acc);
                }
                walk(body, acc);
            }
        }
    }
    let mut acc = None;
    walk(t, &mut acc);
    acc
}

/// Counter handed around wherever fresh uids are minted.
#[derive(Debug, Clone)]
pub struct UidGen {
    next: u32,
}

impl UidGen {
    pub fn starting_at(next: u32) -> Self {
        UidGen { next }
    }

    /// Starts above every uid already present in `t`.
    pub fn above(t: &Term) -> Self {
        UidGen {
            next: max_uid(t).map_or(0, |u| u.0 + 1),
        }
    }

    pub fn fresh(&mut self) -> Uid {
        let uid = Uid(self.next);
        self.next += 1;
        uid
    }
}

/// Alpha-equivalent copy of `t` in which every binder gets a fresh uid from
/// `gen`; free variables keep their uids and all names are preserved.
pub fn rename_unique_from(t: &Term, gen: &mut UidGen) -> Term {
    fn walk(t: &Term, map: &mut HashMap<Uid, Uid>, gen: &mut UidGen) -> Term {
        match t {
            Term::Var(v) => {
                let uid = map.get(&v.uid).copied().unwrap_or(v.uid);
                Term::Var(VarId { uid, ..v.clone() })
            }
            Term::Lam(p, body) => {
                let fresh = gen.fresh();
                let shadowed = map.insert(p.uid, fresh);
                let body = walk(body, map, gen);
                restore(map, p.uid, shadowed);
                Term::lam(VarId { uid: fresh, ..p.clone() }, body)
            }
            Term::App(f, a) => Term::app(walk(f, map, gen), walk(a, map, gen)),
            Term::Constr(tag, args) => Term::Constr(
                tag.clone(),
                args.iter().map(|a| walk(a, map, gen)).collect(),
            ),
            Term::Match(scrut, clauses) => {
                let scrut = walk(scrut, map, gen);
                let clauses = clauses
                    .iter()
                    .map(|c| {
                        let fresh: Vec<Uid> = c.params.iter().map(|_| gen.fresh()).collect();
                        let mut shadowed = Vec::new();
                        for (p, &f) in c.params.iter().zip(&fresh) {
                            shadowed.push((p.uid, map.insert(p.uid, f)));
                        }
                        let body = walk(&c.body, map, gen);
                        for (uid, old) in shadowed.into_iter().rev() {
                            restore(map, uid, old);
                        }
                        Clause {
                            tag: c.tag.clone(),
                            params: c
                                .params
                                .iter()
                                .zip(&fresh)
                                .map(|(p, &f)| VarId { uid: f, ..p.clone() })
                                .collect(),
                            body,
                        }
                    })
                    .collect();
                Term::Match(Box::new(scrut), clauses)
            }
            Term::LetRec(bindings, body) => {
                let fresh: Vec<Uid> = bindings.iter().map(|_| gen.fresh()).collect();
                let mut shadowed = Vec::new();
                for ((name, _), &f) in bindings.iter().zip(&fresh) {
                    shadowed.push((name.uid, map.insert(name.uid, f)));
                }
                let bindings = bindings
                    .iter()
                    .zip(&fresh)
                    .map(|((name, rhs), &f)| {
                        (VarId { uid: f, ..name.clone() }, walk(rhs, map, gen))
                    })
                    .collect();
                let body = walk(body, map, gen);
                for (uid, old) in shadowed.into_iter().rev() {
                    restore(map, uid, old);
                }
                Term::LetRec(bindings, Box::new(body))
            }
        }
    }

    fn restore(map: &mut HashMap<Uid, Uid>, uid: Uid, old: Option<Uid>) {
        match old {
            Some(prev) => {
                map.insert(uid, prev);
            }
            None => {
                map.remove(&uid);
            }
        }
    }

    let mut map = HashMap::new();
    walk(t, &mut map, gen)
}

/// As [`rename_unique_from`], minting uids above everything already in `t`.
pub fn rename_unique(t: &Term) -> Term {
    let mut gen = UidGen::above(t);
    rename_unique_from(t, &mut gen)
}

/// True when every binder uid in `t` is distinct from every other binder uid.
pub fn binders_unique(t: &Term) -> bool {
    fn walk(t: &Term, seen: &mut BTreeSet<Uid>) -> bool {
        match t {
            Term::Var(_) => true,
            Term::Lam(p, body) => seen.insert(p.uid) && walk(body, seen),
            Term::App(f, a) => walk(f, seen) && walk(a, seen),
            Term::Constr(_, args) => args.iter().all(|a| walk(a, seen)),
            Term::Match(scrut, clauses) => {
                walk(scrut, seen)
                    && clauses.iter().all(|c| {
                        c.params.iter().all(|p| seen.insert(p.uid)) && walk(&c.body, seen)
                    })
            }
            Term::LetRec(bindings, body) => {
                bindings.iter().all(|(name, _)| seen.insert(name.uid))
                    && bindings.iter().all(|(_, rhs)| walk(rhs, seen))
                    && walk(body, seen)
            }
        }
    }
    walk(t, &mut BTreeSet::new())
}

/// Alpha-equivalence: compares structure and constructor tags, matches bound
/// variables through the binder correspondence, and matches free variables by
/// name. Binder names, uids, and spans are ignored.
pub fn alpha_eq(a: &Term, b: &Term) -> bool {
    fn var_eq(a: &VarId, b: &VarId, fwd: &HashMap<Uid, Uid>, bwd: &HashMap<Uid, Uid>) -> bool {
        match (fwd.get(&a.uid), bwd.get(&b.uid)) {
            (Some(&fa), Some(&fb)) => fa == b.uid && fb == a.uid,
            (None, None) => a.name == b.name,
            _ => false,
        }
    }

    fn walk(
        a: &Term,
        b: &Term,
        fwd: &mut HashMap<Uid, Uid>,
        bwd: &mut HashMap<Uid, Uid>,
    ) -> bool {
        match (a, b) {
            (Term::Var(va), Term::Var(vb)) => var_eq(va, vb, fwd, bwd),
            (Term::Lam(pa, ba), Term::Lam(pb, bb)) => {
                scoped(fwd, bwd, &[(pa.uid, pb.uid)], |fwd, bwd| {
                    walk(ba, bb, fwd, bwd)
                })
            }
            (Term::App(fa, aa), Term::App(fb, ab)) => {
                walk(fa, fb, fwd, bwd) && walk(aa, ab, fwd, bwd)
            }
            (Term::Constr(ta, args_a), Term::Constr(tb, args_b)) => {
                ta == tb
                    && args_a.len() == args_b.len()
                    && args_a
                        .iter()
                        .zip(args_b)
                        .all(|(x, y)| walk(x, y, fwd, bwd))
            }
            (Term::Match(sa, ca), Term::Match(sb, cb)) => {
                walk(sa, sb, fwd, bwd)
                    && ca.len() == cb.len()
                    && ca.iter().zip(cb).all(|(x, y)| {
                        x.tag == y.tag
                            && x.params.len() == y.params.len()
                            && {
                                let pairs: Vec<_> = x
                                    .params
                                    .iter()
                                    .zip(&y.params)
                                    .map(|(p, q)| (p.uid, q.uid))
                                    .collect();
                                scoped(fwd, bwd, &pairs, |fwd, bwd| {
                                    walk(&x.body, &y.body, fwd, bwd)
                                })
                            }
                    })
            }
            (Term::LetRec(ba, bodya), Term::LetRec(bb, bodyb)) => {
                ba.len() == bb.len() && {
                    let pairs: Vec<_> = ba
                        .iter()
                        .zip(bb.iter())
                        .map(|((na, _), (nb, _))| (na.uid, nb.uid))
                        .collect();
                    scoped(fwd, bwd, &pairs, |fwd, bwd| {
                        ba.iter()
                            .zip(bb.iter())
                            .all(|((_, ra), (_, rb))| walk(ra, rb, fwd, bwd))
                            && walk(bodya, bodyb, fwd, bwd)
                    })
                }
            }
            _ => false,
        }
    }

    fn scoped(
        fwd: &mut HashMap<Uid, Uid>,
        bwd: &mut HashMap<Uid, Uid>,
        pairs: &[(Uid, Uid)],
        f: impl FnOnce(&mut HashMap<Uid, Uid>, &mut HashMap<Uid, Uid>) -> bool,
    ) -> bool {
        let mut saved = Vec::new();
        for &(ua, ub) in pairs {
            saved.push((ua, fwd.insert(ua, ub), ub, bwd.insert(ub, ua)));
        }
        let result = f(fwd, bwd);
        for (ua, olda, ub, oldb) in saved.into_iter().rev() {
            match olda {
                Some(v) => {
                    fwd.insert(ua, v);
                }
                None => {
                    fwd.remove(&ua);
                }
            }
            match oldb {
                Some(v) => {
                    bwd.insert(ub, v);
                }
                None => {
                    bwd.remove(&ub);
                }
            }
        }
        result
    }

    walk(a, b, &mut HashMap::new(), &mut HashMap::new())
}

/// Maps byte offsets to 1-based line/column pairs for diagnostics.
#[derive(Debug, Clone)]
pub struct SourceMap {
    line_starts: Vec<usize>,
}

impl SourceMap {
    pub fn new(source: &str) -> Self {
        let mut line_starts = vec![0];
        for (i, b) in source.bytes().enumerate() {
            if b == b'\n' {
                line_starts.push(i + 1);
            }
        }
        SourceMap { line_starts }
    }

    pub fn line_col(&self, offset: usize) -> (usize, usize) {
        let line = self
            .line_starts
            .partition_point(|&start| start <= offset)
            .saturating_sub(1);
        (line + 1, offset - self.line_starts[line] + 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(name: &str, uid: u32) -> VarId {
        VarId::new(name, Uid(uid))
    }

    #[test]
    fn free_vars_basics() {
        let x = v("x", 1);
        assert_eq!(
            free_vars(&Term::var(x.clone())),
            [Uid(1)].into_iter().collect()
        );
        assert!(free_vars(&Term::lam(x.clone(), Term::var(x.clone()))).is_empty());
        // letrec binds in its own right-hand sides
        let t = Term::letrec(
            vec![(x.clone(), Term::var(x.clone()))],
            Term::var(v("y", 2)),
        );
        assert_eq!(free_vars(&t), [Uid(2)].into_iter().collect());
    }

    #[test]
    fn rename_makes_binders_unique_and_preserves_alpha() {
        // fun x -> fun x -> x, both binders sharing uid 1
        let x = v("x", 1);
        let t = Term::lam(x.clone(), Term::lam(x.clone(), Term::var(x.clone())));
        assert!(!binders_unique(&t));
        let r = rename_unique(&t);
        assert!(binders_unique(&r));
        assert!(alpha_eq(&t, &r));
        // the occurrence follows the inner binder
        if let Term::Lam(_, inner) = &r {
            if let Term::Lam(p, body) = inner.as_ref() {
                if let Term::Var(occ) = body.as_ref() {
                    assert_eq!(occ.uid, p.uid);
                    return;
                }
            }
        }
        panic!("unexpected shape after rename");
    }

    #[test]
    fn rename_is_idempotent_up_to_alpha() {
        let x = v("x", 1);
        let y = v("y", 2);
        let t = Term::letrec(
            vec![(x.clone(), Term::constr("K", vec![Term::var(x.clone())]))],
            Term::lam(y.clone(), Term::var(y)),
        );
        let once = rename_unique(&t);
        let twice = rename_unique(&once);
        assert!(alpha_eq(&once, &twice));
        assert!(alpha_eq(&t, &once));
    }

    #[test]
    fn alpha_eq_distinguishes_binding_structure() {
        let x = v("x", 1);
        let y = v("y", 2);
        // fun x -> fun y -> x  vs  fun x -> fun y -> y
        let a = Term::lam(x.clone(), Term::lam(y.clone(), Term::var(x.clone())));
        let b = Term::lam(x.clone(), Term::lam(y.clone(), Term::var(y.clone())));
        assert!(!alpha_eq(&a, &b));
        // free variables match by name, not uid
        let fa = Term::var(v("z", 7));
        let fb = Term::var(v("z", 9));
        assert!(alpha_eq(&fa, &fb));
        assert!(!alpha_eq(&fa, &Term::var(v("w", 7))));
    }

    #[test]
    fn source_map_lines() {
        let sm = SourceMap::new("ab\ncd\n");
        assert_eq!(sm.line_col(0), (1, 1));
        assert_eq!(sm.line_col(1), (1, 2));
        assert_eq!(sm.line_col(3), (2, 1));
        assert_eq!(sm.line_col(4), (2, 2));
    }
}
