//! Test instrumentation: a brute-force declarative oracle for the inference
//! system, a random well-scoped term generator with a greedy shrinker, a
//! corpus loader, and the checker-vs-interpreter fuzzing harness.
//!
//! The oracle answers derivability questions by following the declarative
//! rules directly (subsumption folded into variable leaves, recursive
//! binding groups handled by searching candidate mode matrices), never by
//! calling the inference algorithm, so the two can be compared.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::infer::check_program_at;
use crate::modes::{Mode, ModeEnv, ALL_MODES};
use crate::semantics::{run, RunResult, RunStatus, Strategy};
use crate::syntax::{
    free_vars, parse_with_ambient, rename_unique, PathStep, Term, Uid, VarId,
};

// ---------------------------------------------------------------------------
// Declarative oracle
// ---------------------------------------------------------------------------

/// Derivability of `g |- t : m` in the declarative system.
///
/// Variables check `m <= g(x)` (subsumption at the leaf). Compound rules
/// recurse with the full `g` at every premise: environment merge is a
/// pointwise maximum and weakening holds, so sharing the environment is
/// sound and complete. Bound variables (lambda parameters, pattern
/// variables) are unconstrained and enter at the top mode.
///
/// Recursive binding groups search candidate usage matrices over all five
/// modes and solve the transitive-dependency fixpoint per candidate;
/// intended for groups of at most two bindings (the search is exponential
/// in the squared group width).
pub fn oracle_check(g: &ModeEnv, t: &Term, m: Mode) -> bool {
    match t {
        Term::Var(v) => m.le(g.get(v.uid)),
        Term::Lam(param, body) => {
            let mut inner = g.clone();
            inner.set(param.uid, Mode::Dereference);
            oracle_check(&inner, body, m.compose(Mode::Delay))
        }
        Term::App(f, a) => {
            let under = m.compose(Mode::Dereference);
            oracle_check(g, f, under) && oracle_check(g, a, under)
        }
        Term::Constr(_, args) => {
            let under = m.compose(Mode::Guard);
            args.iter().all(|arg| oracle_check(g, arg, under))
        }
        Term::Match(scrutinee, clauses) => {
            oracle_check(g, scrutinee, m.compose(Mode::Dereference))
                && clauses.iter().all(|clause| {
                    let mut inner = g.clone();
                    for p in &clause.params {
                        inner.set(p.uid, Mode::Dereference);
                    }
                    oracle_check(&inner, &clause.body, m)
                })
        }
        Term::LetRec(bindings, body) => oracle_check_letrec(g, bindings, body, m),
    }
}

fn oracle_check_letrec(g: &ModeEnv, bindings: &[(VarId, Term)], body: &Term, m: Mode) -> bool {
    let k = bindings.len();
    let mutuals: Vec<Uid> = bindings.iter().map(|(n, _)| n.uid).collect();

    // Body premise: the smallest usage modes for the bound names that keep
    // the body derivable under `g` (other bound names held at top while one
    // coordinate is minimized; valid because the satisfying set is upward
    // closed and closed under pointwise minimum).
    let mut body_modes = Vec::with_capacity(k);
    for &uid in &mutuals {
        let mut found = None;
        for &candidate in &ALL_MODES {
            let mut env = g.clone();
            for &other in &mutuals {
                env.set(other, Mode::Dereference);
            }
            env.set(uid, candidate);
            if oracle_check(&env, body, m) {
                found = Some(candidate);
                break;
            }
        }
        let Some(mode) = found else {
            return false;
        };
        body_modes.push(mode);
    }

    // Per binding, the feasible candidate usage rows together with the
    // minimal ambient environment supporting each row.
    let mut rows_per_binding: Vec<Vec<(Vec<Mode>, ModeEnv)>> = Vec::with_capacity(k);
    for (_, rhs) in bindings {
        let ambient_dom: Vec<Uid> = free_vars(rhs)
            .into_iter()
            .filter(|u| !mutuals.contains(u))
            .collect();
        let mut feasible = Vec::new();
        for row in mode_vectors(k) {
            let with_row = |ambient: &ModeEnv| {
                let mut env = ambient.clone();
                for (&uid, &mode) in mutuals.iter().zip(&row) {
                    env.set(uid, mode);
                }
                env
            };
            let top: ModeEnv = ambient_dom
                .iter()
                .map(|&u| (u, Mode::Dereference))
                .collect();
            if !oracle_check(&with_row(&top), rhs, Mode::Return) {
                continue;
            }
            let mut minimal = ModeEnv::new();
            for &u in &ambient_dom {
                for &candidate in &ALL_MODES {
                    let mut env = top.clone();
                    env.set(u, candidate);
                    if oracle_check(&with_row(&env), rhs, Mode::Return) {
                        minimal.set(u, candidate);
                        break;
                    }
                }
            }
            debug_assert!(oracle_check(&with_row(&minimal), rhs, Mode::Return));
            feasible.push((row, minimal));
        }
        if feasible.is_empty() {
            return false;
        }
        rows_per_binding.push(feasible);
    }

    // Try every feasible matrix: solve the transitive fixpoint and compare
    // the resulting contribution against `g`.
    let mut indices = vec![0usize; k];
    loop {
        let matrix: Vec<&(Vec<Mode>, ModeEnv)> = indices
            .iter()
            .enumerate()
            .map(|(i, &j)| &rows_per_binding[i][j])
            .collect();

        let mut outer: Vec<ModeEnv> = matrix.iter().map(|(_, env)| env.clone()).collect();
        loop {
            let mut changed = false;
            for i in 0..k {
                let mut next = matrix[i].1.clone();
                for (j, outer_j) in outer.iter().enumerate() {
                    next.join_with(&outer_j.compose_under(matrix[i].0[j]));
                }
                if next != outer[i] {
                    outer[i] = next;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }

        let mut contribution = ModeEnv::new();
        for i in 0..k {
            let strength = m.compose(body_modes[i].join(Mode::Guard));
            contribution.join_with(&outer[i].compose_under(strength));
        }
        if contribution.le(g) {
            return true;
        }

        // next matrix candidate
        let mut carry = true;
        for i in 0..k {
            if carry {
                indices[i] += 1;
                if indices[i] == rows_per_binding[i].len() {
                    indices[i] = 0;
                } else {
                    carry = false;
                }
            }
        }
        if carry {
            return false;
        }
    }
}

fn mode_vectors(len: usize) -> Vec<Vec<Mode>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                ALL_MODES.iter().map(move |&m| {
                    let mut next = prefix.clone();
                    next.push(m);
                    next
                })
            })
            .collect();
    }
    out
}

/// Minimal environment for `t : m` found by brute force: enumerates every
/// assignment of modes to the free variables, filters by [`oracle_check`],
/// and takes the pointwise minimum — then checks that the minimum itself
/// passes, witnessing that satisfying environments are closed under
/// pointwise minimum. Intended for terms with at most three free variables.
pub fn oracle_min_env(t: &Term, m: Mode) -> ModeEnv {
    let vars: Vec<Uid> = free_vars(t).into_iter().collect();
    let mut minimum: Option<ModeEnv> = None;
    for assignment in mode_vectors(vars.len()) {
        let env: ModeEnv = vars.iter().copied().zip(assignment).collect();
        if !oracle_check(&env, t, m) {
            continue;
        }
        minimum = Some(match minimum {
            None => env,
            Some(prev) => vars
                .iter()
                .map(|&u| (u, prev.get(u).min(env.get(u))))
                .collect(),
        });
    }
    let minimum = minimum.unwrap_or_else(|| {
        panic!("no satisfying environment for term at mode {m}: {}", crate::syntax::print(t))
    });
    assert!(
        oracle_check(&minimum, t, m),
        "pointwise minimum of satisfying environments does not satisfy"
    );
    minimum
}

// ---------------------------------------------------------------------------
// Random term generation
// ---------------------------------------------------------------------------

/// Knobs for the random generator. All bounds must be at least 1 except
/// `max_vars`, and the constructor pool must contain a nullary entry so
/// closed leaves exist.
#[derive(Debug, Clone)]
pub struct GenConfig {
    /// Node budget per generated term.
    pub max_size: usize,
    /// Number of ambient free variables available (0 for closed terms).
    pub max_vars: usize,
    /// Constructors as (tag, arity) pairs.
    pub constructor_pool: Vec<(String, usize)>,
    /// Maximum width of generated recursive binding groups.
    pub letrec_width: usize,
    /// Probability that a variable occurrence picks a recursively-bound
    /// name when one is in scope (drives self- and cross-references).
    pub recursion_bias: f64,
    pub seed: u64,
}

impl GenConfig {
    pub fn new(seed: u64) -> Self {
        GenConfig {
            max_size: 12,
            max_vars: 2,
            constructor_pool: vec![
                ("K".to_string(), 0),
                ("J".to_string(), 1),
                ("Pair".to_string(), 2),
            ],
            letrec_width: 2,
            recursion_bias: 0.5,
            seed,
        }
    }

    pub fn closed(seed: u64) -> Self {
        GenConfig {
            max_vars: 0,
            ..GenConfig::new(seed)
        }
    }

    fn validate(&self) {
        assert!(self.max_size >= 1);
        assert!(self.letrec_width >= 1);
        assert!(
            self.constructor_pool.iter().any(|(_, arity)| *arity == 0),
            "constructor pool needs a nullary entry"
        );
    }

    fn nullary_tag(&self) -> &str {
        self.constructor_pool
            .iter()
            .find(|(_, arity)| *arity == 0)
            .map(|(tag, _)| tag.as_str())
            .expect("validated pool has a nullary constructor")
    }
}

/// The ambient free variables a generated term may mention: `a`, `b`, ...
/// with uids `0..max_vars`.
pub fn ambient_vars(cfg: &GenConfig) -> Vec<VarId> {
    (0..cfg.max_vars)
        .map(|i| {
            let name = ((b'a' + (i % 26) as u8) as char).to_string();
            VarId::new(name, Uid(i as u32))
        })
        .collect()
}

const BINDER_NAMES: [&str; 8] = ["x", "y", "z", "w", "f", "g", "u", "v"];

/// Seeded random well-scoped term over the configured grammar weights.
pub fn gen_term(cfg: &GenConfig) -> Term {
    cfg.validate();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    gen_term_with(cfg, &mut rng)
}

/// As [`gen_term`] but drawing from a caller-owned generator, so corpora can
/// be produced by advancing one seeded stream.
pub fn gen_term_with(cfg: &GenConfig, rng: &mut ChaCha8Rng) -> Term {
    cfg.validate();
    let mut state = Gen {
        cfg,
        rng,
        next_uid: cfg.max_vars as u32,
        next_name: 0,
        scope: ambient_vars(cfg).into_iter().map(|v| (v, false)).collect(),
    };
    let budget = state.rng.gen_range(1..=cfg.max_size);
    state.term(budget)
}

struct Gen<'a> {
    cfg: &'a GenConfig,
    rng: &'a mut ChaCha8Rng,
    next_uid: u32,
    next_name: usize,
    /// In-scope variables, flagged true when bound by a recursive group.
    scope: Vec<(VarId, bool)>,
}

impl Gen<'_> {
    fn fresh_binder(&mut self) -> VarId {
        let name = BINDER_NAMES[self.next_name % BINDER_NAMES.len()];
        self.next_name += 1;
        let uid = Uid(self.next_uid);
        self.next_uid += 1;
        VarId::new(name, uid)
    }

    fn pick_var(&mut self) -> Option<Term> {
        if self.scope.is_empty() {
            return None;
        }
        let recursive: Vec<usize> = self
            .scope
            .iter()
            .enumerate()
            .filter(|(_, (_, rec))| *rec)
            .map(|(i, _)| i)
            .collect();
        let index = if !recursive.is_empty() && self.rng.gen_bool(self.cfg.recursion_bias) {
            recursive[self.rng.gen_range(0..recursive.len())]
        } else {
            self.rng.gen_range(0..self.scope.len())
        };
        Some(Term::var(self.scope[index].0.clone()))
    }

    fn leaf(&mut self) -> Term {
        if !self.scope.is_empty() && self.rng.gen_bool(0.6) {
            if let Some(v) = self.pick_var() {
                return v;
            }
        }
        Term::constr(self.cfg.nullary_tag(), vec![])
    }

    /// Splits `budget` into `parts` positive portions.
    fn split(&mut self, budget: usize, parts: usize) -> Vec<usize> {
        debug_assert!(budget >= parts && parts >= 1);
        let mut sizes = vec![1usize; parts];
        let mut extra = budget - parts;
        while extra > 0 {
            let i = self.rng.gen_range(0..parts);
            sizes[i] += 1;
            extra -= 1;
        }
        sizes
    }

    fn term(&mut self, budget: usize) -> Term {
        if budget <= 1 {
            return self.leaf();
        }
        // weighted production choice; retries on productions the budget
        // cannot fit keep the distribution simple
        for _ in 0..8 {
            match self.rng.gen_range(0..12) {
                0 => return self.leaf(),
                1 | 2 => {
                    let param = self.fresh_binder();
                    self.scope.push((param.clone(), false));
                    let body = self.term(budget - 1);
                    self.scope.pop();
                    return Term::lam(param, body);
                }
                3 | 4 => {
                    if budget >= 3 {
                        let sizes = self.split(budget - 1, 2);
                        let f = self.term(sizes[0]);
                        let a = self.term(sizes[1]);
                        return Term::app(f, a);
                    }
                }
                5 | 6 | 7 => {
                    let fitting: Vec<_> = self
                        .cfg
                        .constructor_pool
                        .iter()
                        .filter(|(_, arity)| budget >= 1 + *arity.max(&1))
                        .cloned()
                        .collect();
                    if let Some((tag, arity)) =
                        fitting.get(self.rng.gen_range(0..fitting.len().max(1))).cloned()
                    {
                        if arity == 0 {
                            return Term::constr(tag, vec![]);
                        }
                        let sizes = self.split(budget - 1, arity);
                        let args = sizes.iter().map(|&s| self.term(s)).collect();
                        return Term::constr(tag, args);
                    }
                }
                8 | 9 => {
                    if budget >= 3 {
                        return self.gen_match(budget);
                    }
                }
                _ => {
                    if budget >= 3 {
                        return self.gen_letrec(budget);
                    }
                }
            }
        }
        self.leaf()
    }

    fn gen_match(&mut self, budget: usize) -> Term {
        let max_clauses = self.cfg.constructor_pool.len().min(budget - 2).max(1);
        let clause_count = self.rng.gen_range(1..=max_clauses);
        let sizes = self.split(budget - 1, clause_count + 1);
        let scrutinee = self.term(sizes[0]);
        // clauses draw distinct constructors, in pool order after a shuffled
        // pick, mirroring how handwritten matches look
        let mut pool_indices: Vec<usize> = (0..self.cfg.constructor_pool.len()).collect();
        for i in (1..pool_indices.len()).rev() {
            let j = self.rng.gen_range(0..=i);
            pool_indices.swap(i, j);
        }
        let clauses = (0..clause_count)
            .map(|ci| {
                let (tag, arity) = self.cfg.constructor_pool[pool_indices[ci]].clone();
                let params: Vec<VarId> = (0..arity).map(|_| self.fresh_binder()).collect();
                for p in &params {
                    self.scope.push((p.clone(), false));
                }
                let body = self.term(sizes[ci + 1]);
                for _ in &params {
                    self.scope.pop();
                }
                crate::syntax::Clause { tag, params, body }
            })
            .collect();
        Term::match_(scrutinee, clauses)
    }

    fn gen_letrec(&mut self, budget: usize) -> Term {
        let max_width = self.cfg.letrec_width.min(budget / 2).max(1);
        let width = self.rng.gen_range(1..=max_width);
        let sizes = self.split(budget - 1, width + 1);
        let names: Vec<VarId> = (0..width).map(|_| self.fresh_binder()).collect();
        for name in &names {
            self.scope.push((name.clone(), true));
        }
        let bindings: Vec<(VarId, Term)> = names
            .iter()
            .zip(&sizes[..width])
            .map(|(name, &size)| (name.clone(), self.term(size)))
            .collect();
        let body = self.term(sizes[width]);
        for _ in &names {
            self.scope.pop();
        }
        Term::letrec(bindings, body)
    }
}

// ---------------------------------------------------------------------------
// Exhaustive enumeration
// ---------------------------------------------------------------------------

/// Every term of size at most `max_size` over the given free variables and
/// constructor pool, with lambdas, matches (single-clause per constructor
/// plus two-clause combinations), and recursive groups up to
/// `max_letrec_width` bindings. Binder uids are canonicalized per term.
pub fn enumerate_terms(
    max_size: usize,
    free: &[VarId],
    pool: &[(String, usize)],
    max_letrec_width: usize,
) -> Vec<Term> {
    let mut scope: Vec<VarId> = free.to_vec();
    let mut out = Vec::new();
    for size in 1..=max_size {
        enumerate_into(size, &mut scope, pool, max_letrec_width, 0, &mut out);
    }
    out.into_iter().map(|t| rename_unique(&t)).collect()
}

fn binder_slot(depth: usize) -> VarId {
    VarId::new(
        BINDER_NAMES[depth % BINDER_NAMES.len()],
        Uid(1000 + depth as u32),
    )
}

fn enumerate_into(
    size: usize,
    scope: &mut Vec<VarId>,
    pool: &[(String, usize)],
    max_width: usize,
    depth: usize,
    out: &mut Vec<Term>,
) {
    if size == 0 {
        return;
    }
    if size == 1 {
        for v in scope.iter() {
            out.push(Term::var(v.clone()));
        }
        for (tag, arity) in pool {
            if *arity == 0 {
                out.push(Term::constr(tag.clone(), vec![]));
            }
        }
        return;
    }

    // Lam
    {
        let param = binder_slot(depth);
        scope.push(param.clone());
        let mut bodies = Vec::new();
        enumerate_into(size - 1, scope, pool, max_width, depth + 1, &mut bodies);
        scope.pop();
        out.extend(bodies.into_iter().map(|b| Term::lam(param.clone(), b)));
    }

    // App
    for left in 1..size - 1 {
        let right = size - 1 - left;
        let mut fs = Vec::new();
        enumerate_into(left, scope, pool, max_width, depth, &mut fs);
        let mut args = Vec::new();
        enumerate_into(right, scope, pool, max_width, depth, &mut args);
        for f in &fs {
            for a in &args {
                out.push(Term::app(f.clone(), a.clone()));
            }
        }
    }

    // Constr (non-nullary)
    for (tag, arity) in pool {
        if *arity == 0 || size < 1 + *arity {
            continue;
        }
        let mut arg_lists: Vec<Vec<Term>> = vec![Vec::new()];
        let mut remaining_list = vec![size - 1];
        for slot in 0..*arity {
            let slots_left = *arity - slot - 1;
            let mut next_lists = Vec::new();
            let mut next_remaining = Vec::new();
            for (list, remaining) in arg_lists.iter().zip(&remaining_list) {
                for this in 1..=remaining - slots_left {
                    let mut sub = Vec::new();
                    enumerate_into(this, scope, pool, max_width, depth, &mut sub);
                    for term in sub {
                        let mut l = list.clone();
                        l.push(term);
                        next_lists.push(l);
                        next_remaining.push(remaining - this);
                    }
                }
            }
            arg_lists = next_lists;
            remaining_list = next_remaining;
        }
        for (list, remaining) in arg_lists.into_iter().zip(remaining_list) {
            if remaining == 0 {
                out.push(Term::Constr(tag.clone(), list));
            }
        }
    }

    // Match: every clause set is a non-empty subset of the pool (in order),
    // one clause per constructor.
    {
        let subsets = non_empty_subsets(pool.len());
        for subset in subsets {
            let clause_count = subset.len();
            if size < 1 + 1 + clause_count {
                continue;
            }
            for scrut_size in 1..=size - 1 - clause_count {
                let mut scruts = Vec::new();
                enumerate_into(scrut_size, scope, pool, max_width, depth, &mut scruts);
                if scruts.is_empty() {
                    continue;
                }
                let bodies_budget = size - 1 - scrut_size;
                let mut clause_sets: Vec<Vec<crate::syntax::Clause>> = vec![Vec::new()];
                let mut remaining_list = vec![bodies_budget];
                for (slot, &pi) in subset.iter().enumerate() {
                    let (tag, arity) = &pool[pi];
                    let slots_left = clause_count - slot - 1;
                    let params: Vec<VarId> =
                        (0..*arity).map(|pj| binder_slot(depth + pj)).collect();
                    for p in &params {
                        scope.push(p.clone());
                    }
                    let mut next_sets = Vec::new();
                    let mut next_remaining = Vec::new();
                    for (set, remaining) in clause_sets.iter().zip(&remaining_list) {
                        for this in 1..=remaining.saturating_sub(slots_left) {
                            let mut sub = Vec::new();
                            enumerate_into(
                                this,
                                scope,
                                pool,
                                max_width,
                                depth + *arity,
                                &mut sub,
                            );
                            for body in sub {
                                let mut s = set.clone();
                                s.push(crate::syntax::Clause {
                                    tag: tag.clone(),
                                    params: params.clone(),
                                    body,
                                });
                                next_sets.push(s);
                                next_remaining.push(remaining - this);
                            }
                        }
                    }
                    for _ in &params {
                        scope.pop();
                    }
                    clause_sets = next_sets;
                    remaining_list = next_remaining;
                }
                for (set, remaining) in clause_sets.into_iter().zip(remaining_list) {
                    if remaining == 0 {
                        for scrut in &scruts {
                            out.push(Term::match_(scrut.clone(), set.clone()));
                        }
                    }
                }
            }
        }
    }

    // LetRec
    for width in 1..=max_width {
        if size < 1 + width + 1 {
            continue;
        }
        let names: Vec<VarId> = (0..width).map(|i| binder_slot(depth + i)).collect();
        for name in &names {
            scope.push(name.clone());
        }
        let mut groups: Vec<Vec<(VarId, Term)>> = vec![Vec::new()];
        let mut remaining_list = vec![size - 1];
        for (slot, name) in names.iter().enumerate() {
            let slots_left = width - slot - 1 + 1; // remaining rhs + body
            let mut next_groups = Vec::new();
            let mut next_remaining = Vec::new();
            for (group, remaining) in groups.iter().zip(&remaining_list) {
                for this in 1..=remaining.saturating_sub(slots_left) {
                    let mut sub = Vec::new();
                    enumerate_into(this, scope, pool, max_width, depth + width, &mut sub);
                    for rhs in sub {
                        let mut g = group.clone();
                        g.push((name.clone(), rhs));
                        next_groups.push(g);
                        next_remaining.push(remaining - this);
                    }
                }
            }
            groups = next_groups;
            remaining_list = next_remaining;
        }
        for (group, remaining) in groups.into_iter().zip(remaining_list) {
            let mut bodies = Vec::new();
            enumerate_into(remaining, scope, pool, max_width, depth + width, &mut bodies);
            for body in bodies {
                out.push(Term::letrec(group.clone(), body));
            }
        }
        for _ in &names {
            scope.pop();
        }
    }
}

fn non_empty_subsets(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for mask in 1..(1u32 << n) {
        out.push((0..n).filter(|i| mask & (1 << i) != 0).collect());
    }
    out
}

// ---------------------------------------------------------------------------
// Shrinking
// ---------------------------------------------------------------------------

/// All paths to proper subterm positions, outermost first.
fn all_paths(t: &Term) -> Vec<Vec<PathStep>> {
    fn walk(t: &Term, prefix: &mut Vec<PathStep>, out: &mut Vec<Vec<PathStep>>) {
        let descend = |step: PathStep, child: &Term, prefix: &mut Vec<PathStep>,
                           out: &mut Vec<Vec<PathStep>>| {
            prefix.push(step);
            out.push(prefix.clone());
            walk(child, prefix, out);
            prefix.pop();
        };
        match t {
            Term::Var(_) => {}
            Term::Lam(_, body) => descend(PathStep::LamBody, body, prefix, out),
            Term::App(f, a) => {
                descend(PathStep::AppFn, f, prefix, out);
                descend(PathStep::AppArg, a, prefix, out);
            }
            Term::Constr(_, args) => {
                for (i, arg) in args.iter().enumerate() {
                    descend(PathStep::ConstrArg(i), arg, prefix, out);
                }
            }
            Term::Match(scrutinee, clauses) => {
                descend(PathStep::MatchScrut, scrutinee, prefix, out);
                for (i, c) in clauses.iter().enumerate() {
                    descend(PathStep::ClauseBody(i), &c.body, prefix, out);
                }
            }
            Term::LetRec(bindings, body) => {
                for (i, (_, rhs)) in bindings.iter().enumerate() {
                    descend(PathStep::LetRecDef(i), rhs, prefix, out);
                }
                descend(PathStep::LetRecBody, body, prefix, out);
            }
        }
    }
    let mut out = Vec::new();
    walk(t, &mut Vec::new(), &mut out);
    out
}

fn replace_at(t: &Term, steps: &[PathStep], replacement: &Term) -> Term {
    if steps.is_empty() {
        return replacement.clone();
    }
    match (&steps[0], t) {
        (PathStep::LamBody, Term::Lam(p, body)) => {
            Term::lam(p.clone(), replace_at(body, &steps[1..], replacement))
        }
        (PathStep::AppFn, Term::App(f, a)) => Term::app(
            replace_at(f, &steps[1..], replacement),
            a.as_ref().clone(),
        ),
        (PathStep::AppArg, Term::App(f, a)) => Term::app(
            f.as_ref().clone(),
            replace_at(a, &steps[1..], replacement),
        ),
        (PathStep::ConstrArg(i), Term::Constr(tag, args)) => {
            let mut args = args.clone();
            args[*i] = replace_at(&args[*i], &steps[1..], replacement);
            Term::Constr(tag.clone(), args)
        }
        (PathStep::MatchScrut, Term::Match(scrutinee, clauses)) => Term::Match(
            Box::new(replace_at(scrutinee, &steps[1..], replacement)),
            clauses.clone(),
        ),
        (PathStep::ClauseBody(i), Term::Match(scrutinee, clauses)) => {
            let mut clauses = clauses.clone();
            clauses[*i].body = replace_at(&clauses[*i].body, &steps[1..], replacement);
            Term::Match(scrutinee.clone(), clauses)
        }
        (PathStep::LetRecDef(i), Term::LetRec(bindings, body)) => {
            let mut bindings = bindings.clone();
            bindings[*i].1 = replace_at(&bindings[*i].1, &steps[1..], replacement);
            Term::LetRec(bindings, body.clone())
        }
        (PathStep::LetRecBody, Term::LetRec(bindings, body)) => Term::LetRec(
            bindings.clone(),
            Box::new(replace_at(body, &steps[1..], replacement)),
        ),
        _ => panic!("replacement path does not match term shape"),
    }
}

/// Greedy structural shrinking: repeatedly replaces subterms with the given
/// nullary constructor while `still_failing` keeps returning true. The
/// result still fails. Replacing subterms never unbinds anything, so
/// well-scopedness is preserved.
pub fn shrink(
    t: &Term,
    nullary_tag: &str,
    mut still_failing: impl FnMut(&Term) -> bool,
) -> Term {
    let stub = Term::constr(nullary_tag, vec![]);
    let mut current = t.clone();
    loop {
        let mut improved = false;
        for path in all_paths(&current) {
            let target = crate::syntax::subterm_at(&current, &path).unwrap();
            if target == &stub {
                continue;
            }
            let candidate = replace_at(&current, &path, &stub);
            if still_failing(&candidate) {
                current = candidate;
                improved = true;
                break;
            }
        }
        if !improved {
            return current;
        }
    }
}

// ---------------------------------------------------------------------------
// Corpus files
// ---------------------------------------------------------------------------

/// Expected outcome declared on the first line of a corpus file, e.g.
/// `(* expect: rejected x return *)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expectation {
    Accepted,
    Rejected { var: String, mode: Mode },
    Vicious,
    Mismatch,
}

impl fmt::Display for Expectation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expectation::Accepted => write!(f, "accepted"),
            Expectation::Rejected { var, mode } => write!(f, "rejected {var} {mode}"),
            Expectation::Vicious => write!(f, "vicious"),
            Expectation::Mismatch => write!(f, "mismatch"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CorpusEntry {
    pub path: PathBuf,
    pub expect: Expectation,
    pub source: String,
}

/// Loads every file in a corpus directory, parsing the expectation comment.
pub fn load_corpus_dir(dir: &Path) -> std::io::Result<Vec<CorpusEntry>> {
    let mut entries = Vec::new();
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    for path in paths {
        let source = std::fs::read_to_string(&path)?;
        let expect = parse_expectation(&source).unwrap_or_else(|| {
            panic!("missing or malformed expectation line in {}", path.display())
        });
        entries.push(CorpusEntry {
            path,
            expect,
            source,
        });
    }
    Ok(entries)
}

fn parse_expectation(source: &str) -> Option<Expectation> {
    let line = source.lines().next()?;
    let inner = line.trim().strip_prefix("(*")?.strip_suffix("*)")?.trim();
    let rest = inner.strip_prefix("expect:")?.trim();
    let mut words = rest.split_whitespace();
    match words.next()? {
        "accepted" => Some(Expectation::Accepted),
        "vicious" => Some(Expectation::Vicious),
        "mismatch" => Some(Expectation::Mismatch),
        "rejected" => {
            let var = words.next()?.to_string();
            let mode = words.next()?.parse().ok()?;
            Some(Expectation::Rejected { var, mode })
        }
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// Fuzzing harness
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct FuzzConfig {
    /// Number of accepted closed programs to exercise.
    pub programs: usize,
    /// Seeded random traces per program.
    pub traces_per_program: usize,
    pub seed: u64,
    pub max_steps: usize,
    /// Acceptance threshold for the checker under test (`Guard` is the real
    /// checker; higher values deliberately weaken it).
    pub threshold: Mode,
    /// Shape knobs for the generated programs (`seed` field unused; the
    /// harness derives per-program seeds).
    pub gen: GenConfig,
}

impl FuzzConfig {
    pub fn new(programs: usize, traces_per_program: usize, seed: u64) -> Self {
        FuzzConfig {
            programs,
            traces_per_program,
            seed,
            max_steps: 200,
            threshold: Mode::Guard,
            gen: GenConfig {
                max_size: 16,
                letrec_width: 2,
                recursion_bias: 0.6,
                ..GenConfig::closed(0)
            },
        }
    }
}

#[derive(Debug, Clone)]
pub enum FuzzOutcome {
    /// No trace of any accepted program went vicious.
    Clean { programs: usize, traces: usize },
    /// A vicious trace was found; the program is shrunk while still
    /// exhibiting a vicious trace under the same trace seeds.
    ViciousFound {
        program: Term,
        shrunk: Term,
        trace: RunResult,
        program_index: usize,
    },
}

fn mix(a: u64, b: u64) -> u64 {
    // splitmix64 over the combined words
    let mut z = a ^ b.wrapping_mul(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Generates closed programs, keeps those the checker accepts at the
/// configured threshold, runs seeded random traces on each, and hunts for
/// vicious outcomes. With the sound threshold this is the executable face of
/// the soundness statement: it must come back clean.
pub fn fuzz_vicious(cfg: &FuzzConfig) -> FuzzOutcome {
    let mut accepted = 0usize;
    let mut traces = 0usize;
    let mut attempt = 0u64;
    let attempt_cap = (cfg.programs as u64).saturating_mul(200).max(1000);
    while accepted < cfg.programs && attempt < attempt_cap {
        let program_seed = mix(cfg.seed, attempt);
        attempt += 1;
        let gen_cfg = GenConfig {
            seed: program_seed,
            max_vars: 0,
            ..cfg.gen.clone()
        };
        let program = gen_term(&gen_cfg);
        if !accepted_at(&program, cfg.threshold) {
            continue;
        }
        accepted += 1;
        for trace_index in 0..cfg.traces_per_program {
            traces += 1;
            let trace_seed = mix(program_seed, trace_index as u64 + 1);
            let result = run(&program, Strategy::Random, trace_seed, cfg.max_steps);
            if result.status == RunStatus::Vicious {
                let nullary = cfg.gen.nullary_tag().to_string();
                let shrunk = shrink(&program, &nullary, |candidate| {
                    vicious_witness(candidate, cfg, program_seed).is_some()
                });
                let trace = vicious_witness(&shrunk, cfg, program_seed)
                    .expect("shrunk program must still fail");
                return FuzzOutcome::ViciousFound {
                    program,
                    shrunk,
                    trace,
                    program_index: accepted - 1,
                };
            }
        }
    }
    FuzzOutcome::Clean {
        programs: accepted,
        traces,
    }
}

fn accepted_at(t: &Term, threshold: Mode) -> bool {
    check_program_at(t, threshold)
        .iter()
        .all(|verdict| verdict.accepted())
}

fn vicious_witness(t: &Term, cfg: &FuzzConfig, program_seed: u64) -> Option<RunResult> {
    if !accepted_at(t, cfg.threshold) {
        return None;
    }
    for trace_index in 0..cfg.traces_per_program {
        let trace_seed = mix(program_seed, trace_index as u64 + 1);
        let result = run(t, Strategy::Random, trace_seed, cfg.max_steps);
        if result.status == RunStatus::Vicious {
            return Some(result);
        }
    }
    None
}

// ---------------------------------------------------------------------------

/// Parses corpus source and keeps the ambient variable table, panicking on
/// parse errors (corpus files must be well-formed).
pub fn parse_corpus_term(source: &str) -> (Term, Vec<VarId>) {
    parse_with_ambient(source).unwrap_or_else(|d| panic!("corpus term failed to parse: {d:?}"))
}

/// Free-variable uid set; exposed for the property suites.
pub fn free_uid_set(t: &Term) -> BTreeSet<Uid> {
    free_vars(t)
}
