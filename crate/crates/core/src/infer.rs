//! Right-to-left mode inference and the recursive-binding safety check.
//!
//! Given a term `t` and the mode `m` at which its context uses it,
//! [`infer_term`] computes the least demanding environment assigning a usage
//! mode to every free variable of `t`. A mutually-recursive binding group is
//! safe when no bound name is used by a sibling right-hand side above
//! `Guard`: such uses (`Return`, `Dereference`) demand a value that may not
//! exist yet.
//!
//! The analysis is total: rejected groups still get environments, the
//! verdict is reported separately.

use crate::modes::{Mode, ModeEnv};
use crate::syntax::{binders_unique, PathStep, Span, Term, Uid, VarId};

/// Per-group analysis: for each bound name, its usage environment over the
/// ambient (outer) variables, and the matrix of mutual usages.
#[derive(Debug, Clone)]
pub struct BindingAnalysis {
    /// The bound names, in binding order.
    pub names: Vec<VarId>,
    /// `outer_envs[i]`: modes the definition of `names[i]` imposes on ambient
    /// variables, with transitive mutual dependencies folded in. Contains no
    /// mutually-bound name.
    pub outer_envs: Vec<ModeEnv>,
    /// `mode_matrix[i][j]`: mode at which the definition of `names[i]` uses
    /// `names[j]`.
    pub mode_matrix: Vec<Vec<Mode>>,
}

/// A use of a mutually-bound name above `Guard` inside a sibling definition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Offender {
    /// The definition in which the offending use occurs.
    pub definition: VarId,
    /// The name being used too strongly.
    pub used: VarId,
    /// The inferred usage mode (always `Return` or `Dereference`).
    pub mode: Mode,
    /// Best-effort span of an offending occurrence.
    pub span: Span,
}

/// Accept/reject outcome for one binding group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    /// The group's bound names, in binding order.
    pub names: Vec<VarId>,
    pub offenders: Vec<Offender>,
}

impl Verdict {
    pub fn accepted(&self) -> bool {
        self.offenders.is_empty()
    }
}

/// Least environment `G` such that `G |- t : m` holds.
///
/// The cases read the inference rules right to left:
/// a variable at `m` is just itself at `m`; a lambda checks its body under
/// `m . Delay` and drops the parameter; application and match scrutinees
/// dereference; constructor arguments are guarded; recursive bindings are
/// analyzed at `Return` by [`infer_bindings`] and folded in at
/// `m . max(m_i, Guard)` where `m_i` is the body's usage of the bound name
/// (`Guard` because a strict language computes bindings even when the body
/// discards them, composed under `m` because an unused context demands
/// nothing at all).
pub fn infer_term(t: &Term, m: Mode) -> ModeEnv {
    debug_assert!(binders_unique(t), "infer_term requires uniquely renamed input");
    infer(t, m)
}

fn infer(t: &Term, m: Mode) -> ModeEnv {
    match t {
        Term::Var(v) => ModeEnv::singleton(v.uid, m),
        Term::Lam(param, body) => {
            let mut env = infer(body, m.compose(Mode::Delay));
            env.remove(param.uid);
            env
        }
        Term::App(f, a) => {
            let under = m.compose(Mode::Dereference);
            infer(f, under).join(&infer(a, under))
        }
        Term::Constr(_, args) => {
            let under = m.compose(Mode::Guard);
            let mut env = ModeEnv::new();
            for arg in args {
                env.join_with(&infer(arg, under));
            }
            env
        }
        Term::Match(scrutinee, clauses) => {
            let scrut_env = infer(scrutinee, m.compose(Mode::Dereference));
            scrut_env.join(&infer_clauses(clauses, m))
        }
        Term::LetRec(bindings, body) => {
            let analysis = infer_bindings_inner(bindings);
            let mut body_env = infer(body, m);
            let mut result = ModeEnv::new();
            for (i, (name, _)) in bindings.iter().enumerate() {
                let body_use = body_env.get(name.uid);
                body_env.remove(name.uid);
                let strength = m.compose(body_use.join(Mode::Guard));
                result.join_with(&analysis.outer_envs[i].compose_under(strength));
            }
            result.join(&body_env)
        }
    }
}

/// Least environment for a clause list at mode `m`: each body is checked at
/// `m` with its pattern variables removed, and the results are joined.
pub fn infer_handler(clauses: &[crate::syntax::Clause], m: Mode) -> ModeEnv {
    infer_clauses(clauses, m)
}

fn infer_clauses(clauses: &[crate::syntax::Clause], m: Mode) -> ModeEnv {
    let mut env = ModeEnv::new();
    for clause in clauses {
        let mut clause_env = infer(&clause.body, m);
        for p in &clause.params {
            clause_env.remove(p.uid);
        }
        env.join_with(&clause_env);
    }
    env
}

/// Analyzes a recursive binding group in isolation.
///
/// Each right-hand side is inferred at `Return` and split into its ambient
/// part and the mutual-usage matrix. The outer environments then solve the
/// recursive equations
///
/// ```text
/// G'_i = G_i  join  (join over j of  m[i][j] . G'_j)
/// ```
///
/// by ascending Kleene iteration from `G'_i = G_i`; the right-hand side is
/// monotone over a finite lattice, so the least fixpoint is reached after
/// finitely many sweeps (bounded and asserted below).
pub fn infer_bindings(bindings: &[(VarId, Term)]) -> BindingAnalysis {
    infer_bindings_inner(bindings)
}

fn infer_bindings_inner(bindings: &[(VarId, Term)]) -> BindingAnalysis {
    let names: Vec<VarId> = bindings.iter().map(|(name, _)| name.clone()).collect();
    let uids: Vec<Uid> = names.iter().map(|n| n.uid).collect();

    let mut ambient = Vec::with_capacity(bindings.len());
    let mut matrix = Vec::with_capacity(bindings.len());
    for (_, rhs) in bindings {
        let mut env = infer(rhs, Mode::Return);
        let row: Vec<Mode> = uids.iter().map(|&u| env.get(u)).collect();
        for &u in &uids {
            env.remove(u);
        }
        matrix.push(row);
        ambient.push(env);
    }

    // Kleene iteration; each sweep can only raise entries, and every entry
    // can rise at most four times over at most (#ambient vars) coordinates.
    let ambient_var_count = {
        let mut dom = std::collections::BTreeSet::new();
        for env in &ambient {
            dom.extend(env.domain());
        }
        dom.len()
    };
    let max_sweeps = ambient_var_count * 4 * bindings.len() + 1;

    let mut outer = ambient.clone();
    let mut converged = false;
    for _ in 0..max_sweeps {
        let mut changed = false;
        for i in 0..outer.len() {
            let mut next = ambient[i].clone();
            for (j, outer_j) in outer.iter().enumerate() {
                next.join_with(&outer_j.compose_under(matrix[i][j]));
            }
            if next != outer[i] {
                outer[i] = next;
                changed = true;
            }
        }
        if !changed {
            converged = true;
            break;
        }
    }
    assert!(converged, "binding fixpoint failed to converge");

    BindingAnalysis {
        names,
        outer_envs: outer,
        mode_matrix: matrix,
    }
}

/// Safety check for one binding group at the standard threshold (`Guard`).
pub fn check_letrec(bindings: &[(VarId, Term)]) -> Verdict {
    check_letrec_at(bindings, Mode::Guard)
}

/// Safety check with an explicit acceptance threshold. `Guard` is the sound
/// threshold; higher thresholds deliberately weaken the check and exist so
/// the fuzzing harness can demonstrate that it catches a broken checker.
pub fn check_letrec_at(bindings: &[(VarId, Term)], threshold: Mode) -> Verdict {
    let analysis = infer_bindings_inner(bindings);
    let mut offenders = Vec::new();
    for (i, row) in analysis.mode_matrix.iter().enumerate() {
        for (j, &mode) in row.iter().enumerate() {
            if !mode.le(threshold) {
                let span = offending_occurrence(&bindings[i].1, analysis.names[j].uid)
                    .unwrap_or(analysis.names[j].span);
                offenders.push(Offender {
                    definition: analysis.names[i].clone(),
                    used: analysis.names[j].clone(),
                    mode,
                    span,
                });
            }
        }
    }
    Verdict {
        names: analysis.names,
        offenders,
    }
}

/// Checks every binding group in `t`, in source (pre-order) position order.
/// Groups desugared from non-recursive `let` pass trivially: the bound name
/// does not occur in its own right-hand side, so its self-mode is `Ignore`.
pub fn check_program(t: &Term) -> Vec<Verdict> {
    check_program_at(t, Mode::Guard)
}

pub fn check_program_at(t: &Term, threshold: Mode) -> Vec<Verdict> {
    let mut verdicts = Vec::new();
    walk_groups(t, threshold, &mut verdicts);
    verdicts
}

fn walk_groups(t: &Term, threshold: Mode, out: &mut Vec<Verdict>) {
    match t {
        Term::Var(_) => {}
        Term::Lam(_, body) => walk_groups(body, threshold, out),
        Term::App(f, a) => {
            walk_groups(f, threshold, out);
            walk_groups(a, threshold, out);
        }
        Term::Constr(_, args) => {
            for arg in args {
                walk_groups(arg, threshold, out);
            }
        }
        Term::Match(scrutinee, clauses) => {
            walk_groups(scrutinee, threshold, out);
            for clause in clauses {
                walk_groups(&clause.body, threshold, out);
            }
        }
        Term::LetRec(bindings, body) => {
            out.push(check_letrec_at(bindings, threshold));
            for (_, rhs) in bindings {
                walk_groups(rhs, threshold, out);
            }
            walk_groups(body, threshold, out);
        }
    }
}

/// Mode imposed on the subterm reached by `steps`, starting from a context
/// that uses the whole term at `base`. Letrec definition steps consult the
/// body's usage of the bound name, so the walk mirrors the inference rules.
pub fn occurrence_mode(t: &Term, steps: &[PathStep], base: Mode) -> Option<Mode> {
    let mut cur = t;
    let mut m = base;
    for step in steps {
        match (step, cur) {
            (PathStep::LamBody, Term::Lam(_, body)) => {
                m = m.compose(Mode::Delay);
                cur = body;
            }
            (PathStep::AppFn, Term::App(f, _)) => {
                m = m.compose(Mode::Dereference);
                cur = f;
            }
            (PathStep::AppArg, Term::App(_, a)) => {
                m = m.compose(Mode::Dereference);
                cur = a;
            }
            (PathStep::ConstrArg(i), Term::Constr(_, args)) => {
                m = m.compose(Mode::Guard);
                cur = args.get(*i)?;
            }
            (PathStep::MatchScrut, Term::Match(scrutinee, _)) => {
                m = m.compose(Mode::Dereference);
                cur = scrutinee;
            }
            (PathStep::ClauseBody(i), Term::Match(_, clauses)) => {
                cur = &clauses.get(*i)?.body;
            }
            (PathStep::LetRecDef(i), Term::LetRec(bindings, body)) => {
                let (name, rhs) = bindings.get(*i)?;
                let body_use = infer(body, m).get(name.uid);
                m = m.compose(body_use.join(Mode::Guard));
                cur = rhs;
            }
            (PathStep::LetRecBody, Term::LetRec(_, body)) => {
                cur = body;
            }
            _ => return None,
        }
    }
    Some(m)
}

/// Span of a free occurrence of `uid` in `t` whose direct context composition
/// is largest. Transitive flows through sibling bindings can make the
/// inferred mode exceed every direct occurrence, so this is best-effort;
/// whenever the inferred mode is above `Ignore` there is at least one
/// occurrence to point at.
fn offending_occurrence(t: &Term, uid: Uid) -> Option<Span> {
    let mut best: Option<(Mode, Span)> = None;
    find_occurrences(t, uid, Mode::Return, &mut best);
    best.map(|(_, span)| span)
}

fn find_occurrences(t: &Term, uid: Uid, m: Mode, best: &mut Option<(Mode, Span)>) {
    match t {
        Term::Var(v) => {
            if v.uid == uid && best.map_or(true, |(bm, _)| m > bm) {
                *best = Some((m, v.span));
            }
        }
        Term::Lam(_, body) => {
            find_occurrences(body, uid, m.compose(Mode::Delay), best);
        }
        Term::App(f, a) => {
            let under = m.compose(Mode::Dereference);
            find_occurrences(f, uid, under, best);
            find_occurrences(a, uid, under, best);
        }
        Term::Constr(_, args) => {
            let under = m.compose(Mode::Guard);
            for arg in args {
                find_occurrences(arg, uid, under, best);
            }
        }
        Term::Match(scrutinee, clauses) => {
            find_occurrences(scrutinee, uid, m.compose(Mode::Dereference), best);
            for clause in clauses {
                find_occurrences(&clause.body, uid, m, best);
            }
        }
        Term::LetRec(bindings, body) => {
            for (name, rhs) in bindings {
                let body_use = infer(body, m).get(name.uid);
                let under = m.compose(body_use.join(Mode::Guard));
                find_occurrences(rhs, uid, under, best);
            }
            find_occurrences(body, uid, m, best);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{parse, parse_with_ambient, Clause, Term, Uid, VarId};

    fn v(name: &str, uid: u32) -> VarId {
        VarId::new(name, Uid(uid))
    }

    fn ambient_env(src: &str, m: Mode) -> Vec<(String, Mode)> {
        let (t, ambient) = parse_with_ambient(src).unwrap();
        let env = infer_term(&t, m);
        ambient
            .iter()
            .filter(|var| env.get(var.uid) != Mode::Ignore)
            .map(|var| (var.name.clone(), env.get(var.uid)))
            .collect()
    }

    #[test]
    fn variable_rule() {
        let x = v("x", 1);
        assert_eq!(
            infer_term(&Term::var(x), Mode::Return),
            ModeEnv::singleton(Uid(1), Mode::Return)
        );
    }

    #[test]
    fn spec_like_examples() {
        // a delayed occurrence under a lambda
        assert_eq!(
            ambient_env("fun z -> y", Mode::Return),
            vec![("y".to_string(), Mode::Delay)]
        );
        // a constructor argument is guarded
        assert_eq!(
            ambient_env("K(x)", Mode::Return),
            vec![("x".to_string(), Mode::Guard)]
        );
        // a discarded non-recursive binding is still computed, hence guarded
        assert_eq!(
            ambient_env("let z = y in K()", Mode::Return),
            vec![("y".to_string(), Mode::Guard)]
        );
        // a match scrutinee is dereferenced
        assert_eq!(
            ambient_env("match x with K() -> K()", Mode::Return),
            vec![("x".to_string(), Mode::Dereference)]
        );
        // composition from the outside
        assert_eq!(
            ambient_env("K(x)", Mode::Dereference),
            vec![("x".to_string(), Mode::Dereference)]
        );
    }

    #[test]
    fn ignore_mode_needs_nothing() {
        for src in [
            "fun z -> y",
            "K(x)",
            "let z = y in K()",
            "match x with K() -> w",
            "let rec a = b and b = K(a) in a c",
        ] {
            assert!(ambient_env(src, Mode::Ignore).is_empty(), "src: {src}");
        }
    }

    #[test]
    fn handler_drops_pattern_variables() {
        let y = v("y", 10);
        let clause = Clause {
            tag: "K".to_string(),
            params: vec![v("x", 11)],
            body: Term::var(v("x", 11)),
        };
        assert!(infer_handler(&[clause], Mode::Return).is_empty());

        let clauses = vec![
            Clause {
                tag: "K".to_string(),
                params: vec![],
                body: Term::var(y.clone()),
            },
            Clause {
                tag: "J".to_string(),
                params: vec![],
                body: Term::var(v("z", 12)),
            },
        ];
        let env = infer_handler(&clauses, Mode::Guard);
        assert_eq!(env.get(Uid(10)), Mode::Guard);
        assert_eq!(env.get(Uid(12)), Mode::Guard);
    }

    #[test]
    fn binding_analysis_self_guard() {
        // x = K(x): self-mode Guard, no ambient usage
        let t = parse("let rec x = K(x) in x").unwrap();
        let Term::LetRec(bindings, _) = &t else { panic!() };
        let analysis = infer_bindings(bindings);
        assert_eq!(analysis.mode_matrix, vec![vec![Mode::Guard]]);
        assert!(analysis.outer_envs[0].is_empty());
    }

    #[test]
    fn binding_analysis_propagates_ambient_modes() {
        // a = K(b), b = K(c) with c ambient: a needs c at Guard transitively
        let (t, ambient) = parse_with_ambient("let rec a = K(b) and b = K(c) in a").unwrap();
        let Term::LetRec(bindings, _) = &t else { panic!() };
        let analysis = infer_bindings(bindings);
        let c = ambient.iter().find(|v| v.name == "c").unwrap();
        assert_eq!(analysis.outer_envs[0].get(c.uid), Mode::Guard);
        assert_eq!(analysis.outer_envs[1].get(c.uid), Mode::Guard);
        assert_eq!(analysis.mode_matrix[0][1], Mode::Guard);
        assert_eq!(analysis.mode_matrix[1][0], Mode::Ignore);
    }

    #[test]
    fn closed_lambda_bindings_have_empty_outer_envs() {
        let t = parse("let rec f = fun a -> f a in f").unwrap();
        let Term::LetRec(bindings, _) = &t else { panic!() };
        let analysis = infer_bindings(bindings);
        assert!(analysis.outer_envs[0].is_empty());
        assert_eq!(analysis.mode_matrix[0][0], Mode::Delay);
    }

    #[test]
    fn verdicts_for_canonical_groups() {
        let accepted = |src: &str| {
            let t = parse(src).unwrap();
            let verdicts = check_program(&t);
            assert!(!verdicts.is_empty(), "no groups in {src}");
            verdicts.iter().all(Verdict::accepted)
        };
        assert!(accepted("let rec ones = Cons(One(), ones) in ones"));
        assert!(accepted("let rec f = fun a -> g a and g = fun b -> f b in f"));
        assert!(!accepted("let rec x = x in x"));
        assert!(!accepted("let rec x = match x with Foo() -> Foo() in x"));

        let t = parse("let rec x = x in x").unwrap();
        let verdict = &check_program(&t)[0];
        assert_eq!(verdict.offenders.len(), 1);
        assert_eq!(verdict.offenders[0].mode, Mode::Return);
        assert_eq!(verdict.offenders[0].used.name, "x");

        let t = parse("let rec x = match x with Foo() -> Foo() in x").unwrap();
        let verdict = &check_program(&t)[0];
        assert_eq!(verdict.offenders[0].mode, Mode::Dereference);
    }

    #[test]
    fn offender_modes_are_return_or_dereference() {
        for src in [
            "let rec x = x in x",
            "let rec x = (let y = x in y) in x",
            "let rec f = f (K()) in f",
            "let rec a = b and b = a in a",
        ] {
            let t = parse(src).unwrap();
            for verdict in check_program(&t) {
                for offender in &verdict.offenders {
                    assert!(
                        offender.mode == Mode::Return || offender.mode == Mode::Dereference,
                        "src: {src}, mode: {}",
                        offender.mode
                    );
                }
            }
        }
    }

    #[test]
    fn nested_groups_each_get_a_verdict() {
        let t = parse("let rec a = K(a) in let rec x = x in x").unwrap();
        let verdicts = check_program(&t);
        assert_eq!(verdicts.len(), 2);
        assert!(verdicts[0].accepted());
        assert!(!verdicts[1].accepted());

        // rejected inner group inside an accepted outer one, nested in a rhs
        let t = parse("let rec a = fun w -> (let rec x = x in x) in a").unwrap();
        let verdicts = check_program(&t);
        assert_eq!(verdicts.len(), 2);
        assert!(verdicts[0].accepted());
        assert!(!verdicts[1].accepted());
    }

    #[test]
    fn desugared_let_passes_trivially() {
        let t = parse("let x = K() in match x with K() -> x").unwrap();
        let verdicts = check_program(&t);
        assert_eq!(verdicts.len(), 1);
        assert!(verdicts[0].accepted());
    }

    #[test]
    fn program_with_no_groups_has_no_verdicts() {
        let t = parse("fun x -> x x").unwrap();
        assert!(check_program(&t).is_empty());
    }

    #[test]
    fn relaxed_thresholds_accept_more() {
        let t = parse("let rec x = x in x").unwrap();
        let Term::LetRec(bindings, _) = &t else { panic!() };
        assert!(!check_letrec(bindings).accepted());
        assert!(check_letrec_at(bindings, Mode::Return).accepted());

        let t = parse("let rec x = match x with K() -> K() in x").unwrap();
        let Term::LetRec(bindings, _) = &t else { panic!() };
        assert!(!check_letrec_at(bindings, Mode::Return).accepted());
        assert!(check_letrec_at(bindings, Mode::Dereference).accepted());
    }

    #[test]
    fn offender_span_points_at_an_occurrence() {
        let src = "let rec x = x in x";
        let t = parse(src).unwrap();
        let verdict = &check_program(&t)[0];
        let span = verdict.offenders[0].span;
        assert_eq!(&src[span.start..span.end], "x");
        assert_eq!(span.start, 12);
    }
}
