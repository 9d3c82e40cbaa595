//! Reference small-step operational semantics with non-deterministic redex
//! selection, and classification of irreducible terms.
//!
//! Reduction happens under evaluation frames: either argument of an
//! application, any constructor argument, a match scrutinee, any
//! right-hand side of a recursive binding group, and the body of a group
//! whose right-hand sides are all values. Head reduction is beta (with a
//! fully evaluated argument) and first-clause pattern matching; variables in
//! evaluation position reduce by looking their value up in an enclosing
//! binding group.
//!
//! The relation is deliberately under-constrained and non-terminating
//! (cyclic values can be unfolded forever); strategies and step budgets are
//! a harness feature layered on top.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::syntax::{rename_unique_from, Clause, PathStep, Term, Uid, UidGen, VarId};

/// How strongly a term is evaluated: a strict value, a weak value (strict
/// value or variable: variables under constructors act as back-references
/// into cyclic structures), or neither.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueClass {
    Value,
    WeakValue,
    Neither,
}

/// Lambdas are values; a constructor is a value when every argument is a
/// weak value; a bare variable is a weak value.
pub fn classify_value(t: &Term) -> ValueClass {
    match t {
        Term::Lam(_, _) => ValueClass::Value,
        Term::Constr(_, args) => {
            if args.iter().all(is_weak_value) {
                ValueClass::Value
            } else {
                ValueClass::Neither
            }
        }
        Term::Var(_) => ValueClass::WeakValue,
        _ => ValueClass::Neither,
    }
}

pub fn is_value(t: &Term) -> bool {
    classify_value(t) == ValueClass::Value
}

pub fn is_weak_value(t: &Term) -> bool {
    classify_value(t) != ValueClass::Neither
}

/// One evaluation frame, hole included in the description.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Frame {
    /// `[] arg`
    AppFun { arg: Term },
    /// `func []`
    AppArg { func: Term },
    /// `K(before..., [], after...)`
    ConstrArg {
        tag: String,
        before: Vec<Term>,
        after: Vec<Term>,
    },
    /// `match [] with clauses`
    MatchScrut { clauses: Vec<Clause> },
    /// `let rec before... and name = [] and after... in body`
    LetRecDef {
        before: Vec<(VarId, Term)>,
        name: VarId,
        after: Vec<(VarId, Term)>,
        body: Term,
    },
    /// `let rec bindings in []`, every right-hand side a value
    LetRecBody { bindings: Vec<(VarId, Term)> },
}

/// What fires at a redex position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RedexKind {
    Beta,
    MatchHead,
    Lookup { var: VarId, value: Term },
}

/// A reducible position: the path from the root to the focus plus the kind
/// of step available there. [`path_frames`] materializes the path as a
/// frame stack.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Redex {
    pub steps: Vec<PathStep>,
    pub kind: RedexKind,
    path_text: String,
}

impl Redex {
    /// Dot-separated path descriptor, e.g. `letrec.def[x].constr[1]`;
    /// `root` for the empty path.
    pub fn path_text(&self) -> &str {
        &self.path_text
    }

    pub fn kind_text(&self) -> String {
        match &self.kind {
            RedexKind::Beta => "beta".to_string(),
            RedexKind::MatchHead => "match".to_string(),
            RedexKind::Lookup { var, .. } => format!("lookup {}", var.name),
        }
    }
}

/// Result of attempting one step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepOutcome {
    Stepped { term: Term, redex: Redex },
    /// The term is a value, possibly inside fully-evaluated binding groups,
    /// and nothing remains to do.
    Normal { value: Term },
    /// A destructor met a value of the wrong shape: applying a non-function,
    /// or matching a value no clause covers.
    Mismatch { path: Vec<PathStep>, frame: Frame },
    /// A variable whose value does not exist yet sits in a forcing position.
    Vicious { path: Vec<PathStep>, var: VarId },
    /// Irreducible for any other reason (e.g. a recursive binding blocked on
    /// itself outside any forcing frame).
    StuckOther { description: String },
}

/// Redex selection policy. The semantics itself is under-constrained; these
/// are harness choices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Uniform over all redexes, seeded.
    Random,
    /// First redex in children-before-node traversal order.
    LeftmostInnermost,
    /// Prefer head steps over lookups, minimizing unfolding of cyclic values.
    LookupLast,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::LeftmostInnermost => "leftmost-innermost",
            Strategy::LookupLast => "lookup-last",
        }
    }

    pub const ALL: [Strategy; 3] = [
        Strategy::Random,
        Strategy::LeftmostInnermost,
        Strategy::LookupLast,
    ];
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(Strategy::Random),
            "leftmost-innermost" | "leftmost" => Ok(Strategy::LeftmostInnermost),
            "lookup-last" => Ok(Strategy::LookupLast),
            other => Err(format!("unknown strategy `{other}`")),
        }
    }
}

// ---------------------------------------------------------------------------
// Head reduction and substitution
// ---------------------------------------------------------------------------

/// Head step at the root of `t`: beta with a fully evaluated argument, or
/// first-clause pattern matching (name and arity both must agree) with weak
/// values substituted for the pattern variables. `None` when neither fires.
pub fn head_step(t: &Term) -> Option<Term> {
    let mut gen = UidGen::above(t);
    head_step_in(t, &mut gen)
}

fn head_step_in(t: &Term, gen: &mut UidGen) -> Option<Term> {
    match t {
        Term::App(f, a) => match f.as_ref() {
            Term::Lam(param, body) if is_value(a) => {
                Some(subst(body, &[(param.uid, a.as_ref())], gen))
            }
            _ => None,
        },
        Term::Match(scrutinee, clauses) => {
            let Term::Constr(tag, args) = scrutinee.as_ref() else {
                return None;
            };
            if !is_value(scrutinee) {
                return None;
            }
            let clause = clauses
                .iter()
                .find(|c| c.tag == *tag && c.params.len() == args.len())?;
            let pairs: Vec<(Uid, &Term)> = clause
                .params
                .iter()
                .map(|p| p.uid)
                .zip(args.iter())
                .collect();
            Some(subst(&clause.body, &pairs, gen))
        }
        _ => None,
    }
}

/// Capture-avoiding substitution. Every inserted copy has its binders
/// freshened so the whole program keeps globally unique binder uids even
/// when a value is duplicated.
fn subst(t: &Term, map: &[(Uid, &Term)], gen: &mut UidGen) -> Term {
    match t {
        Term::Var(v) => match map.iter().find(|(u, _)| *u == v.uid) {
            Some((_, replacement)) => rename_unique_from(replacement, gen),
            None => t.clone(),
        },
        Term::Lam(param, body) => Term::lam(param.clone(), subst(body, map, gen)),
        Term::App(f, a) => Term::app(subst(f, map, gen), subst(a, map, gen)),
        Term::Constr(tag, args) => Term::Constr(
            tag.clone(),
            args.iter().map(|a| subst(a, map, gen)).collect(),
        ),
        Term::Match(scrutinee, clauses) => Term::Match(
            Box::new(subst(scrutinee, map, gen)),
            clauses
                .iter()
                .map(|c| Clause {
                    tag: c.tag.clone(),
                    params: c.params.clone(),
                    body: subst(&c.body, map, gen),
                })
                .collect(),
        ),
        Term::LetRec(bindings, body) => Term::LetRec(
            bindings
                .iter()
                .map(|(name, rhs)| (name.clone(), subst(rhs, map, gen)))
                .collect(),
            Box::new(subst(body, map, gen)),
        ),
    }
}

// ---------------------------------------------------------------------------
// Lookup
// ---------------------------------------------------------------------------

/// Borrowed context used by the internal walkers.
enum Ctx<'a> {
    AppFun { arg: &'a Term },
    AppArg { func: &'a Term },
    ConstrArg,
    MatchScrut,
    LetRecDef {
        bindings: &'a [(VarId, Term)],
        index: usize,
    },
    LetRecBody { bindings: &'a [(VarId, Term)] },
}

fn lookup_ctx<'a>(uid: Uid, ctx: &[Ctx<'a>]) -> Option<&'a Term> {
    for frame in ctx.iter().rev() {
        match frame {
            Ctx::LetRecBody { bindings } => {
                if let Some((_, v)) = bindings.iter().find(|(n, _)| n.uid == uid) {
                    return Some(v);
                }
            }
            Ctx::LetRecDef { bindings, index } => {
                for (i, (n, rhs)) in bindings.iter().enumerate() {
                    if n.uid == uid {
                        // The focused binding is still being evaluated, and a
                        // sibling binding only counts once reduced to a value.
                        if i != *index && is_value(rhs) {
                            return Some(rhs);
                        }
                        return None;
                    }
                }
            }
            _ => {}
        }
    }
    None
}

/// Resolves `x` against a frame stack (root first, focus last): fully
/// evaluated binding groups always serve their names; a group still being
/// evaluated serves a name only when that name's own binding is already a
/// value. The first frame (scanning from the focus outward) that binds the
/// name decides.
pub fn lookup(x: &VarId, path: &[Frame]) -> Option<Term> {
    for frame in path.iter().rev() {
        match frame {
            Frame::LetRecBody { bindings } => {
                if let Some((_, v)) = bindings.iter().find(|(n, _)| n.uid == x.uid) {
                    return Some(v.clone());
                }
            }
            Frame::LetRecDef {
                before,
                name,
                after,
                ..
            } => {
                if name.uid == x.uid {
                    return None;
                }
                for (n, rhs) in before.iter().chain(after.iter()) {
                    if n.uid == x.uid {
                        if is_value(rhs) {
                            return Some(rhs.clone());
                        }
                        return None;
                    }
                }
            }
            _ => {}
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Redex enumeration
// ---------------------------------------------------------------------------

struct Site {
    steps: Vec<PathStep>,
    kind: SiteKind,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum SiteKind {
    Beta,
    MatchHead,
    Lookup,
}

/// All reducible positions, children before node (so the first entry is the
/// leftmost-innermost redex). Evaluation never descends under a lambda or
/// into clause bodies, and enters a letrec body only when every binding is
/// already a value.
fn enumerate_sites(t: &Term) -> Vec<Site> {
    fn walk<'a>(
        t: &'a Term,
        steps: &mut Vec<PathStep>,
        ctx: &mut Vec<Ctx<'a>>,
        out: &mut Vec<Site>,
    ) {
        match t {
            Term::Var(v) => {
                if lookup_ctx(v.uid, ctx).is_some() {
                    out.push(Site {
                        steps: steps.clone(),
                        kind: SiteKind::Lookup,
                    });
                }
            }
            Term::Lam(_, _) => {}
            Term::App(f, a) => {
                steps.push(PathStep::AppFn);
                ctx.push(Ctx::AppFun { arg: a });
                walk(f, steps, ctx, out);
                ctx.pop();
                steps.pop();

                steps.push(PathStep::AppArg);
                ctx.push(Ctx::AppArg { func: f });
                walk(a, steps, ctx, out);
                ctx.pop();
                steps.pop();

                if head_steppable(t) {
                    out.push(Site {
                        steps: steps.clone(),
                        kind: SiteKind::Beta,
                    });
                }
            }
            Term::Constr(_, args) => {
                for (i, arg) in args.iter().enumerate() {
                    steps.push(PathStep::ConstrArg(i));
                    ctx.push(Ctx::ConstrArg);
                    walk(arg, steps, ctx, out);
                    ctx.pop();
                    steps.pop();
                }
            }
            Term::Match(scrutinee, _) => {
                steps.push(PathStep::MatchScrut);
                ctx.push(Ctx::MatchScrut);
                walk(scrutinee, steps, ctx, out);
                ctx.pop();
                steps.pop();

                if head_steppable(t) {
                    out.push(Site {
                        steps: steps.clone(),
                        kind: SiteKind::MatchHead,
                    });
                }
            }
            Term::LetRec(bindings, body) => {
                for (i, (_, rhs)) in bindings.iter().enumerate() {
                    steps.push(PathStep::LetRecDef(i));
                    ctx.push(Ctx::LetRecDef { bindings, index: i });
                    walk(rhs, steps, ctx, out);
                    ctx.pop();
                    steps.pop();
                }
                if bindings.iter().all(|(_, rhs)| is_value(rhs)) {
                    steps.push(PathStep::LetRecBody);
                    ctx.push(Ctx::LetRecBody { bindings });
                    walk(body, steps, ctx, out);
                    ctx.pop();
                    steps.pop();
                }
            }
        }
    }

    let mut out = Vec::new();
    walk(t, &mut Vec::new(), &mut Vec::new(), &mut out);
    out
}

fn head_steppable(t: &Term) -> bool {
    // Cheap shape test mirroring head_step_in without building the result.
    match t {
        Term::App(f, a) => matches!(f.as_ref(), Term::Lam(_, _)) && is_value(a),
        Term::Match(scrutinee, clauses) => match scrutinee.as_ref() {
            Term::Constr(tag, args) if is_value(scrutinee) => clauses
                .iter()
                .any(|c| c.tag == *tag && c.params.len() == args.len()),
            _ => false,
        },
        _ => false,
    }
}

/// All reducible positions of `t` as full redexes (resolved lookup values
/// included), children before node.
pub fn enumerate_redexes(t: &Term) -> Vec<Redex> {
    enumerate_sites(t)
        .into_iter()
        .map(|site| describe_site(t, &site))
        .collect()
}

fn describe_site(t: &Term, site: &Site) -> Redex {
    let kind = match site.kind {
        SiteKind::Beta => RedexKind::Beta,
        SiteKind::MatchHead => RedexKind::MatchHead,
        SiteKind::Lookup => {
            let frames = path_frames(t, &site.steps).expect("site path must be valid");
            let Some(Term::Var(v)) = crate::syntax::subterm_at(t, &site.steps) else {
                panic!("lookup site focus must be a variable");
            };
            let value = lookup(v, &frames).expect("lookup site must resolve");
            RedexKind::Lookup {
                var: v.clone(),
                value,
            }
        }
    };
    Redex {
        path_text: render_path(t, &site.steps),
        steps: site.steps.clone(),
        kind,
    }
}

/// Materializes the frame stack along `steps`; `None` if the path does not
/// fit the term or leaves evaluation position.
pub fn path_frames(t: &Term, steps: &[PathStep]) -> Option<Vec<Frame>> {
    let mut frames = Vec::new();
    let mut cur = t;
    for step in steps {
        match (step, cur) {
            (PathStep::AppFn, Term::App(f, a)) => {
                frames.push(Frame::AppFun {
                    arg: a.as_ref().clone(),
                });
                cur = f;
            }
            (PathStep::AppArg, Term::App(f, a)) => {
                frames.push(Frame::AppArg {
                    func: f.as_ref().clone(),
                });
                cur = a;
            }
            (PathStep::ConstrArg(i), Term::Constr(tag, args)) => {
                if *i >= args.len() {
                    return None;
                }
                frames.push(Frame::ConstrArg {
                    tag: tag.clone(),
                    before: args[..*i].to_vec(),
                    after: args[*i + 1..].to_vec(),
                });
                cur = &args[*i];
            }
            (PathStep::MatchScrut, Term::Match(scrutinee, clauses)) => {
                frames.push(Frame::MatchScrut {
                    clauses: clauses.clone(),
                });
                cur = scrutinee;
            }
            (PathStep::LetRecDef(i), Term::LetRec(bindings, body)) => {
                if *i >= bindings.len() {
                    return None;
                }
                frames.push(Frame::LetRecDef {
                    before: bindings[..*i].to_vec(),
                    name: bindings[*i].0.clone(),
                    after: bindings[*i + 1..].to_vec(),
                    body: body.as_ref().clone(),
                });
                cur = &bindings[*i].1;
            }
            (PathStep::LetRecBody, Term::LetRec(bindings, body)) => {
                frames.push(Frame::LetRecBody {
                    bindings: bindings.clone(),
                });
                cur = body;
            }
            _ => return None,
        }
    }
    Some(frames)
}

fn render_path(t: &Term, steps: &[PathStep]) -> String {
    if steps.is_empty() {
        return "root".to_string();
    }
    let mut parts = Vec::new();
    let mut cur = t;
    for step in steps {
        match (step, cur) {
            (PathStep::AppFn, Term::App(f, _)) => {
                parts.push("app.fn".to_string());
                cur = f;
            }
            (PathStep::AppArg, Term::App(_, a)) => {
                parts.push("app.arg".to_string());
                cur = a;
            }
            (PathStep::ConstrArg(i), Term::Constr(_, args)) => {
                parts.push(format!("constr[{i}]"));
                cur = &args[*i];
            }
            (PathStep::MatchScrut, Term::Match(scrutinee, _)) => {
                parts.push("match.scrut".to_string());
                cur = scrutinee;
            }
            (PathStep::LetRecDef(i), Term::LetRec(bindings, _)) => {
                parts.push(format!("letrec.def[{}]", bindings[*i].0.name));
                cur = &bindings[*i].1;
            }
            (PathStep::LetRecBody, Term::LetRec(_, body)) => {
                parts.push("letrec.body".to_string());
                cur = body;
            }
            _ => {
                parts.push("?".to_string());
                break;
            }
        }
    }
    parts.join(".")
}

// ---------------------------------------------------------------------------
// Stepping
// ---------------------------------------------------------------------------

fn apply_site<'a>(
    t: &'a Term,
    steps: &[PathStep],
    kind: SiteKind,
    ctx: &mut Vec<Ctx<'a>>,
    gen: &mut UidGen,
) -> Term {
    if steps.is_empty() {
        return match kind {
            SiteKind::Beta | SiteKind::MatchHead => {
                head_step_in(t, gen).expect("chosen site is not head-reducible")
            }
            SiteKind::Lookup => {
                let Term::Var(v) = t else {
                    panic!("lookup focus must be a variable");
                };
                let value = lookup_ctx(v.uid, ctx).expect("chosen lookup site failed to resolve");
                rename_unique_from(value, gen)
            }
        };
    }
    match (&steps[0], t) {
        (PathStep::AppFn, Term::App(f, a)) => {
            ctx.push(Ctx::AppFun { arg: a });
            let new_f = apply_site(f, &steps[1..], kind, ctx, gen);
            ctx.pop();
            Term::app(new_f, a.as_ref().clone())
        }
        (PathStep::AppArg, Term::App(f, a)) => {
            ctx.push(Ctx::AppArg { func: f });
            let new_a = apply_site(a, &steps[1..], kind, ctx, gen);
            ctx.pop();
            Term::app(f.as_ref().clone(), new_a)
        }
        (PathStep::ConstrArg(i), Term::Constr(tag, args)) => {
            ctx.push(Ctx::ConstrArg);
            let new_arg = apply_site(&args[*i], &steps[1..], kind, ctx, gen);
            ctx.pop();
            let mut new_args = args.clone();
            new_args[*i] = new_arg;
            Term::Constr(tag.clone(), new_args)
        }
        (PathStep::MatchScrut, Term::Match(scrutinee, clauses)) => {
            ctx.push(Ctx::MatchScrut);
            let new_scrut = apply_site(scrutinee, &steps[1..], kind, ctx, gen);
            ctx.pop();
            Term::Match(Box::new(new_scrut), clauses.clone())
        }
        (PathStep::LetRecDef(i), Term::LetRec(bindings, body)) => {
            ctx.push(Ctx::LetRecDef {
                bindings,
                index: *i,
            });
            let new_rhs = apply_site(&bindings[*i].1, &steps[1..], kind, ctx, gen);
            ctx.pop();
            let mut new_bindings = bindings.clone();
            new_bindings[*i].1 = new_rhs;
            Term::LetRec(new_bindings, body.clone())
        }
        (PathStep::LetRecBody, Term::LetRec(bindings, body)) => {
            ctx.push(Ctx::LetRecBody { bindings });
            let new_body = apply_site(body, &steps[1..], kind, ctx, gen);
            ctx.pop();
            Term::LetRec(bindings.clone(), Box::new(new_body))
        }
        _ => panic!("site path does not match term shape"),
    }
}

fn step_with(t: &Term, strategy: Strategy, rng: &mut ChaCha8Rng, gen: &mut UidGen) -> StepOutcome {
    let sites = enumerate_sites(t);
    if sites.is_empty() {
        return classify_stuck(t);
    }
    let site = match strategy {
        Strategy::LeftmostInnermost => &sites[0],
        Strategy::LookupLast => sites
            .iter()
            .find(|s| s.kind != SiteKind::Lookup)
            .unwrap_or(&sites[0]),
        Strategy::Random => &sites[rng.gen_range(0..sites.len())],
    };
    let redex = describe_site(t, site);
    let mut ctx = Vec::new();
    let term = apply_site(t, &site.steps, site.kind, &mut ctx, gen);
    StepOutcome::Stepped { term, redex }
}

/// One reduction step under the given strategy. With no redex available the
/// term is classified instead. Each call seeds its own generator; use
/// [`run`] for a reproducible multi-step trace.
pub fn step(t: &Term, strategy: Strategy, rng_seed: u64) -> StepOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut gen = UidGen::above(t);
    step_with(t, strategy, &mut rng, &mut gen)
}

/// Classification of a redex-free term: normal form, constructor/destructor
/// mismatch, vicious circle, or merely stuck.
///
/// A mismatch is a value in destructor position that head reduction cannot
/// consume. A vicious term has a variable with no available value in a
/// forcing position: under a stack of fully-evaluated binding groups, either
/// reaching the root or hanging directly below an application with an
/// evaluated partner or a match scrutinee. A recursive binding blocked on
/// itself without such a frame (e.g. `let rec x = x in x`) is merely stuck.
pub fn classify_stuck(t: &Term) -> StepOutcome {
    debug_assert!(
        enumerate_sites(t).is_empty(),
        "classify_stuck requires a redex-free term"
    );
    if normal_shape(t) {
        return StepOutcome::Normal { value: t.clone() };
    }
    if let Some((path, frame)) = find_mismatch(t) {
        return StepOutcome::Mismatch { path, frame };
    }
    if let Some((path, var)) = find_vicious(t) {
        return StepOutcome::Vicious { path, var };
    }
    StepOutcome::StuckOther {
        description: "irreducible term: a recursive binding is blocked outside any forcing frame"
            .to_string(),
    }
}

/// A value, possibly wrapped in fully-evaluated binding groups.
fn normal_shape(t: &Term) -> bool {
    match t {
        Term::LetRec(bindings, body) => {
            bindings.iter().all(|(_, rhs)| is_value(rhs)) && normal_shape(body)
        }
        _ => is_value(t),
    }
}

fn find_mismatch(t: &Term) -> Option<(Vec<PathStep>, Frame)> {
    fn walk(t: &Term, steps: &mut Vec<PathStep>) -> Option<(Vec<PathStep>, Frame)> {
        // Check subpositions first so the reported site is innermost.
        match t {
            Term::App(f, a) => {
                steps.push(PathStep::AppFn);
                let found = walk(f, steps);
                steps.pop();
                if found.is_some() {
                    return found;
                }
                steps.push(PathStep::AppArg);
                let found = walk(a, steps);
                steps.pop();
                if found.is_some() {
                    return found;
                }
                if is_value(f) && is_value(a) && !matches!(f.as_ref(), Term::Lam(_, _)) {
                    return Some((
                        steps.clone(),
                        Frame::AppFun {
                            arg: a.as_ref().clone(),
                        },
                    ));
                }
            }
            Term::Constr(_, args) => {
                for (i, arg) in args.iter().enumerate() {
                    steps.push(PathStep::ConstrArg(i));
                    let found = walk(arg, steps);
                    steps.pop();
                    if found.is_some() {
                        return found;
                    }
                }
            }
            Term::Match(scrutinee, clauses) => {
                steps.push(PathStep::MatchScrut);
                let found = walk(scrutinee, steps);
                steps.pop();
                if found.is_some() {
                    return found;
                }
                if is_value(scrutinee) && !head_steppable(t) {
                    return Some((
                        steps.clone(),
                        Frame::MatchScrut {
                            clauses: clauses.clone(),
                        },
                    ));
                }
            }
            Term::LetRec(bindings, body) => {
                for (i, (_, rhs)) in bindings.iter().enumerate() {
                    steps.push(PathStep::LetRecDef(i));
                    let found = walk(rhs, steps);
                    steps.pop();
                    if found.is_some() {
                        return found;
                    }
                }
                if bindings.iter().all(|(_, rhs)| is_value(rhs)) {
                    steps.push(PathStep::LetRecBody);
                    let found = walk(body, steps);
                    steps.pop();
                    if found.is_some() {
                        return found;
                    }
                }
            }
            Term::Var(_) | Term::Lam(_, _) => {}
        }
        None
    }
    walk(t, &mut Vec::new())
}

fn find_vicious(t: &Term) -> Option<(Vec<PathStep>, VarId)> {
    fn forcing(frame: &Ctx<'_>) -> bool {
        match frame {
            Ctx::AppFun { arg } => is_value(arg),
            Ctx::AppArg { func } => is_value(func),
            Ctx::MatchScrut => true,
            _ => false,
        }
    }

    /// Focus under zero or more fully-evaluated binding frames which either
    /// reach the root or hang below one forcing frame.
    fn forcing_shape(ctx: &[Ctx<'_>]) -> bool {
        let mut i = ctx.len();
        while i > 0 && matches!(ctx[i - 1], Ctx::LetRecBody { .. }) {
            i -= 1;
        }
        i == 0 || forcing(&ctx[i - 1])
    }

    fn walk<'a>(
        t: &'a Term,
        steps: &mut Vec<PathStep>,
        ctx: &mut Vec<Ctx<'a>>,
    ) -> Option<(Vec<PathStep>, VarId)> {
        match t {
            Term::Var(v) => {
                if lookup_ctx(v.uid, ctx).is_none() && forcing_shape(ctx) {
                    return Some((steps.clone(), v.clone()));
                }
            }
            Term::Lam(_, _) => {}
            Term::App(f, a) => {
                steps.push(PathStep::AppFn);
                ctx.push(Ctx::AppFun { arg: a });
                let found = walk(f, steps, ctx);
                ctx.pop();
                steps.pop();
                if found.is_some() {
                    return found;
                }
                steps.push(PathStep::AppArg);
                ctx.push(Ctx::AppArg { func: f });
                let found = walk(a, steps, ctx);
                ctx.pop();
                steps.pop();
                if found.is_some() {
                    return found;
                }
            }
            Term::Constr(_, args) => {
                for (i, arg) in args.iter().enumerate() {
                    steps.push(PathStep::ConstrArg(i));
                    ctx.push(Ctx::ConstrArg);
                    let found = walk(arg, steps, ctx);
                    ctx.pop();
                    steps.pop();
                    if found.is_some() {
                        return found;
                    }
                }
            }
            Term::Match(scrutinee, _) => {
                steps.push(PathStep::MatchScrut);
                ctx.push(Ctx::MatchScrut);
                let found = walk(scrutinee, steps, ctx);
                ctx.pop();
                steps.pop();
                if found.is_some() {
                    return found;
                }
            }
            Term::LetRec(bindings, body) => {
                for (i, (_, rhs)) in bindings.iter().enumerate() {
                    steps.push(PathStep::LetRecDef(i));
                    ctx.push(Ctx::LetRecDef { bindings, index: i });
                    let found = walk(rhs, steps, ctx);
                    ctx.pop();
                    steps.pop();
                    if found.is_some() {
                        return found;
                    }
                }
                if bindings.iter().all(|(_, rhs)| is_value(rhs)) {
                    steps.push(PathStep::LetRecBody);
                    ctx.push(Ctx::LetRecBody { bindings });
                    let found = walk(body, steps, ctx);
                    ctx.pop();
                    steps.pop();
                    if found.is_some() {
                        return found;
                    }
                }
            }
        }
        None
    }

    walk(t, &mut Vec::new(), &mut Vec::new())
}

// ---------------------------------------------------------------------------
// Bounded runs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Normal,
    Mismatch,
    Vicious,
    StuckOther,
    Budget,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Normal => "normal",
            RunStatus::Mismatch => "mismatch",
            RunStatus::Vicious => "vicious",
            RunStatus::StuckOther => "stuck",
            RunStatus::Budget => "budget",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    /// Redexes fired, in order.
    pub trace: Vec<Redex>,
    /// Terms after each step would be large; only the last one is kept.
    pub final_term: Term,
    pub status: RunStatus,
    /// The classification that ended the run; `None` when the budget ran out.
    pub stop: Option<StepOutcome>,
}

/// Iterates [`step`] under one seeded generator for up to `max_steps` steps.
/// Identical `(term, strategy, seed, max_steps)` yield identical traces.
pub fn run(t: &Term, strategy: Strategy, seed: u64, max_steps: usize) -> RunResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gen = UidGen::above(t);
    let mut current = t.clone();
    let mut trace = Vec::new();
    for _ in 0..max_steps {
        match step_with(&current, strategy, &mut rng, &mut gen) {
            StepOutcome::Stepped { term, redex } => {
                trace.push(redex);
                current = term;
            }
            outcome => {
                let status = match &outcome {
                    StepOutcome::Normal { .. } => RunStatus::Normal,
                    StepOutcome::Mismatch { .. } => RunStatus::Mismatch,
                    StepOutcome::Vicious { .. } => RunStatus::Vicious,
                    StepOutcome::StuckOther { .. } => RunStatus::StuckOther,
                    StepOutcome::Stepped { .. } => unreachable!(),
                };
                return RunResult {
                    trace,
                    final_term: current,
                    status,
                    stop: Some(outcome),
                };
            }
        }
    }
    RunResult {
        trace,
        final_term: current,
        status: RunStatus::Budget,
        stop: None,
    }
}

/// Text form of a finished run: one `step <n>: <kind> at <path>` line per
/// step, then `result: <status>`.
pub fn render_trace(result: &RunResult) -> String {
    let mut out = String::new();
    for (i, redex) in result.trace.iter().enumerate() {
        out.push_str(&format!(
            "step {}: {} at {}\n",
            i + 1,
            redex.kind_text(),
            redex.path_text()
        ));
    }
    out.push_str(&format!("result: {}\n", result.status.as_str()));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{alpha_eq, binders_unique, parse, parse_with_ambient};

    fn p(src: &str) -> Term {
        parse(src).unwrap_or_else(|d| panic!("parse failed for {src:?}: {d:?}"))
    }

    fn p_open(src: &str) -> Term {
        parse_with_ambient(src).unwrap().0
    }

    #[test]
    fn value_classification() {
        assert_eq!(classify_value(&p("fun x -> x")), ValueClass::Value);
        // a variable under a constructor is a weak value, so the constructor
        // is a value (a back-reference into a cyclic structure)
        assert_eq!(
            classify_value(&p_open("Cons(One(), x)")),
            ValueClass::Value
        );
        assert_eq!(classify_value(&p_open("x y")), ValueClass::Neither);
        assert_eq!(classify_value(&p_open("x")), ValueClass::WeakValue);
        assert_eq!(
            classify_value(&p_open("Cons(x y, K())")),
            ValueClass::Neither
        );
    }

    #[test]
    fn head_step_beta() {
        let stepped = head_step(&p("(fun x -> x) (K())")).unwrap();
        assert!(alpha_eq(&stepped, &p("K()")));
        // the argument must be a full value
        assert!(head_step(&p_open("(fun x -> x) y")).is_none());
        assert!(head_step(&p_open("(fun x -> x) (K(y z))")).is_none());
    }

    #[test]
    fn head_step_match_first_matching_clause() {
        let stepped = head_step(&p_open("match K(V()) with J() -> a | K(y) -> y")).unwrap();
        assert!(alpha_eq(&stepped, &p_open("V()")));
        // no matching clause
        assert!(head_step(&p_open("match K() with J() -> a")).is_none());
        // name matches but arity does not
        assert!(head_step(&p_open("match K(V()) with K() -> a")).is_none());
        // arity-respecting clause later in the list is selected
        let stepped =
            head_step(&p_open("match K(V()) with K() -> a | K(y) -> K(y)")).unwrap();
        assert!(alpha_eq(&stepped, &p_open("K(V())")));
        // weak values substitute for pattern variables
        let t = p("let rec w = Cons(One(), w) in match Cons(Two(), w) with Cons(h, t) -> t");
        let Term::LetRec(_, body) = &t else { panic!() };
        let stepped = head_step(body).unwrap();
        assert!(matches!(stepped, Term::Var(_)));
    }

    #[test]
    fn substitution_freshens_copies() {
        // (fun f -> Pair(f, f)) (fun y -> y): both copies must carry
        // distinct binder uids
        let t = p("(fun f -> Pair(f, f)) (fun y -> y)");
        let stepped = head_step(&t).unwrap();
        assert!(binders_unique(&stepped));
        assert!(alpha_eq(&stepped, &p("Pair(fun y -> y, fun y -> y)")));
    }

    #[test]
    fn lookup_through_frames() {
        // x under a fully evaluated binding group
        let t = p("let rec x = K() in x");
        let Term::LetRec(bindings, _) = &t else { panic!() };
        let x = &bindings[0].0;
        let frames = vec![Frame::LetRecBody {
            bindings: bindings.clone(),
        }];
        assert_eq!(lookup(x, &frames), Some(p("K()")));

        // x focused inside its own still-evaluating binding
        let frames = vec![Frame::LetRecDef {
            before: vec![],
            name: x.clone(),
            after: vec![],
            body: Term::constr("K", vec![]),
        }];
        assert_eq!(lookup(x, &frames), None);

        // sibling binding already reduced to a (cyclic) value
        let t = p("let rec x = Cons(One(), x) and y = x in y");
        let Term::LetRec(bindings, _) = &t else { panic!() };
        let x = &bindings[0].0;
        let frames = vec![Frame::LetRecDef {
            before: vec![bindings[0].clone()],
            name: bindings[1].0.clone(),
            after: vec![],
            body: Term::var(bindings[1].0.clone()),
        }];
        let looked = lookup(x, &frames).unwrap();
        assert!(alpha_eq(&looked, &bindings[0].1));

        // sibling binding not yet a value
        let t = p("let rec a = (fun q -> q) (fun r -> r) and b = a in b");
        let Term::LetRec(bindings, _) = &t else { panic!() };
        let a = &bindings[0].0;
        let frames = vec![Frame::LetRecDef {
            before: vec![bindings[0].clone()],
            name: bindings[1].0.clone(),
            after: vec![],
            body: Term::var(bindings[1].0.clone()),
        }];
        assert_eq!(lookup(a, &frames), None);
    }

    #[test]
    fn enumerate_beta_at_root() {
        let redexes = enumerate_redexes(&p("(fun x -> x) (K())"));
        assert_eq!(redexes.len(), 1);
        assert_eq!(redexes[0].kind, RedexKind::Beta);
        assert!(redexes[0].steps.is_empty());
        assert_eq!(redexes[0].path_text(), "root");
    }

    #[test]
    fn enumerate_cyclic_binding_is_normal_but_body_lookup_fires() {
        let t = p("let rec x = Cons(One(), x) in x");
        let redexes = enumerate_redexes(&t);
        assert_eq!(redexes.len(), 1);
        assert_eq!(redexes[0].steps, vec![PathStep::LetRecBody]);
        match &redexes[0].kind {
            RedexKind::Lookup { var, value } => {
                assert_eq!(var.name, "x");
                assert!(alpha_eq(value, &p_open("Cons(One(), x)")));
            }
            other => panic!("unexpected kind {other:?}"),
        }
        assert_eq!(redexes[0].path_text(), "letrec.body");
    }

    #[test]
    fn enumerate_no_redexes_in_stuck_application() {
        assert!(enumerate_redexes(&p("K() (J())")).is_empty());
    }

    #[test]
    fn step_leftmost_beta() {
        let outcome = step(&p("(fun x -> x) (K())"), Strategy::LeftmostInnermost, 0);
        match outcome {
            StepOutcome::Stepped { term, redex } => {
                assert!(alpha_eq(&term, &p("K()")));
                assert_eq!(redex.kind, RedexKind::Beta);
            }
            other => panic!("unexpected outcome {other:?}"),
        }
    }

    #[test]
    fn step_unfolds_cyclic_binding_in_body() {
        let t = p("let rec x = Cons(One(), x) in x");
        let outcome = step(&t, Strategy::LookupLast, 0);
        match outcome {
            StepOutcome::Stepped { term, .. } => {
                assert!(alpha_eq(
                    &term,
                    &p("let rec x = Cons(One(), x) in Cons(One(), x)")
                ));
            }
            other => panic!("unexpected outcome {other:?}"),
        }
    }

    #[test]
    fn seeded_steps_are_reproducible() {
        // a term with several redexes so the random choice matters
        let t = p("Pair((fun x -> x) (K()), (fun y -> y) (J()))");
        let a = step(&t, Strategy::Random, 42);
        let b = step(&t, Strategy::Random, 42);
        assert_eq!(a, b);
    }

    #[test]
    fn classify_mismatch_application() {
        let outcome = classify_stuck(&p("K() (J())"));
        match outcome {
            StepOutcome::Mismatch { path, frame } => {
                assert!(path.is_empty());
                assert!(matches!(frame, Frame::AppFun { .. }));
            }
            other => panic!("unexpected outcome {other:?}"),
        }
        // match with a value scrutinee no clause covers
        assert!(matches!(
            classify_stuck(&p("match K() with J() -> J()")),
            StepOutcome::Mismatch { .. }
        ));
        // lambda scrutinee
        assert!(matches!(
            classify_stuck(&p("match (fun x -> x) with K() -> K()")),
            StepOutcome::Mismatch { .. }
        ));
    }

    #[test]
    fn classify_vicious_match_on_own_binding() {
        let t = p("let rec x = match x with K() -> K() in x");
        match classify_stuck(&t) {
            StepOutcome::Vicious { path, var } => {
                assert_eq!(var.name, "x");
                assert_eq!(path, vec![PathStep::LetRecDef(0), PathStep::MatchScrut]);
            }
            other => panic!("unexpected outcome {other:?}"),
        }
    }

    #[test]
    fn classify_self_return_is_stuck_not_vicious() {
        let t = p("let rec x = x in x");
        assert!(matches!(
            classify_stuck(&t),
            StepOutcome::StuckOther { .. }
        ));
        // same through a nested non-forcing frame
        let t = p("let rec x = (let y = x in y) in x");
        assert!(matches!(enumerate_redexes(&t).len(), 0));
        assert!(matches!(
            classify_stuck(&t),
            StepOutcome::StuckOther { .. }
        ));
    }

    #[test]
    fn classify_vicious_forced_argument() {
        // an unresolvable variable in argument position of an evaluated
        // function is forced
        let t = p("let rec f = (fun w -> w) f in f");
        match classify_stuck(&t) {
            StepOutcome::Vicious { var, .. } => assert_eq!(var.name, "f"),
            other => panic!("unexpected outcome {other:?}"),
        }
    }

    #[test]
    fn normal_includes_value_bindings_around_value() {
        let t = p("let rec x = Cons(One(), x) in fun y -> y");
        // the body is a value; the only redex-free question is the shape
        assert!(enumerate_redexes(&t).is_empty());
        assert!(matches!(classify_stuck(&t), StepOutcome::Normal { .. }));
    }

    #[test]
    fn run_beta_chain_to_normal() {
        let t = p("(fun x -> x) ((fun y -> y) ((fun z -> z) (K())))");
        let result = run(&t, Strategy::LeftmostInnermost, 0, 10);
        assert_eq!(result.status, RunStatus::Normal);
        assert_eq!(result.trace.len(), 3);
        assert!(alpha_eq(&result.final_term, &p("K()")));
    }

    #[test]
    fn run_budget_on_unfolding_loop() {
        let t = p("let rec x = Cons(One(), x) in match x with Cons(h, t) -> h");
        // leftmost-innermost prefers the lookup inside the scrutinee, so the
        // cyclic value unfolds forever
        let result = run(&t, Strategy::LeftmostInnermost, 0, 5);
        assert_eq!(result.status, RunStatus::Budget);
        assert_eq!(result.trace.len(), 5);
    }

    #[test]
    fn run_mismatch_under_every_strategy() {
        for strategy in Strategy::ALL {
            let result = run(&p("K() (J())"), strategy, 7, 50);
            assert_eq!(result.status, RunStatus::Mismatch, "{strategy:?}");
        }
    }

    #[test]
    fn run_trace_is_deterministic() {
        let t = p("Pair((fun x -> x) (K()), (fun y -> y) (J()))");
        let a = run(&t, Strategy::Random, 13, 50);
        let b = run(&t, Strategy::Random, 13, 50);
        assert_eq!(render_trace(&a), render_trace(&b));
        assert!(alpha_eq(&a.final_term, &b.final_term));
    }

    #[test]
    fn trace_format() {
        let t = p("let rec x = Cons(One(), x) in match x with Cons(h, t) -> h");
        let result = run(&t, Strategy::LookupLast, 0, 10);
        let text = render_trace(&result);
        let first = text.lines().next().unwrap();
        assert_eq!(first, "step 1: lookup x at letrec.body.match.scrut");
        assert!(text.trim_end().ends_with("result: normal"));
    }
}
