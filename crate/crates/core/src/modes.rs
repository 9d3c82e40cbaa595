//! Usage modes and their composition algebra.
//!
//! A mode describes how strongly an expression context needs the value that
//! fills its hole, from `Ignore` (never touched) up to `Dereference` (fully
//! inspected). The chain order is
//!
//! ```text
//! Ignore < Delay < Guard < Return < Dereference
//! ```
//!
//! Mode environments map variables to the mode at which the surrounding
//! program uses them; absent variables are implicitly `Ignore`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::syntax::Uid;

/// Usage mode of a variable or subterm. Declaration order is the chain order,
/// so the derived `Ord` is the mode order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    /// Not used at all during evaluation.
    Ignore,
    /// Used only under a delaying abstraction (`fun x -> []`).
    Delay,
    /// Returned as a member of a data structure (`K([])`); only the address
    /// is needed, so cyclic definitions through this position are safe.
    Guard,
    /// Returned as-is, without inspection.
    Return,
    /// Inspected or consumed in arbitrary ways (`[] v`, `match [] with ...`).
    Dereference,
}

pub const ALL_MODES: [Mode; 5] = [
    Mode::Ignore,
    Mode::Delay,
    Mode::Guard,
    Mode::Return,
    Mode::Dereference,
];

/// Composition table, indexed `[outer][inner]`. Kept as data so the tests can
/// cross-check it against the equational presentation.
const COMPOSE: [[Mode; 5]; 5] = {
    use Mode::*;
    [
        // outer = Ignore
        [Ignore, Ignore, Ignore, Ignore, Ignore],
        // outer = Delay
        [Ignore, Delay, Delay, Delay, Delay],
        // outer = Guard
        [Ignore, Delay, Guard, Guard, Dereference],
        // outer = Return
        [Ignore, Delay, Guard, Return, Dereference],
        // outer = Dereference
        [Ignore, Dereference, Dereference, Dereference, Dereference],
    ]
};

impl Mode {
    fn rank(self) -> usize {
        self as usize
    }

    /// `self` precedes-or-equals `other` in the chain order.
    pub fn le(self, other: Mode) -> bool {
        self <= other
    }

    /// The more demanding of the two modes.
    pub fn join(self, other: Mode) -> Mode {
        self.max(other)
    }

    /// Mode of a hole used at `inner` inside a context itself used at `self`.
    ///
    /// Associative, not commutative: `Dereference` after `Delay` stays
    /// delayed, while `Delay` after `Dereference` dereferences.
    pub fn compose(self, inner: Mode) -> Mode {
        COMPOSE[self.rank()][inner.rank()]
    }

    /// Lowercase name used in every serialized output.
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Ignore => "ignore",
            Mode::Delay => "delay",
            Mode::Guard => "guard",
            Mode::Return => "return",
            Mode::Dereference => "dereference",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ignore" => Ok(Mode::Ignore),
            "delay" => Ok(Mode::Delay),
            "guard" => Ok(Mode::Guard),
            "return" => Ok(Mode::Return),
            "dereference" => Ok(Mode::Dereference),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

/// Finite map from variable uid to mode. Canonical form: `Ignore` entries are
/// never stored, so structural equality coincides with pointwise equality.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ModeEnv {
    entries: BTreeMap<Uid, Mode>,
}

impl ModeEnv {
    pub fn new() -> Self {
        ModeEnv::default()
    }

    pub fn singleton(uid: Uid, mode: Mode) -> Self {
        let mut env = ModeEnv::new();
        env.set(uid, mode);
        env
    }

    /// Mode of `uid`, defaulting to `Ignore`.
    pub fn get(&self, uid: Uid) -> Mode {
        self.entries.get(&uid).copied().unwrap_or(Mode::Ignore)
    }

    /// Overwrites the entry; `Ignore` erases it.
    pub fn set(&mut self, uid: Uid, mode: Mode) {
        if mode == Mode::Ignore {
            self.entries.remove(&uid);
        } else {
            self.entries.insert(uid, mode);
        }
    }

    pub fn remove(&mut self, uid: Uid) {
        self.entries.remove(&uid);
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Uid, Mode)> + '_ {
        self.entries.iter().map(|(&uid, &mode)| (uid, mode))
    }

    pub fn domain(&self) -> impl Iterator<Item = Uid> + '_ {
        self.entries.keys().copied()
    }

    /// Pointwise maximum of the two environments.
    pub fn join(&self, other: &ModeEnv) -> ModeEnv {
        let mut result = self.clone();
        for (uid, mode) in other.iter() {
            result.set(uid, result.get(uid).join(mode));
        }
        result
    }

    pub fn join_with(&mut self, other: &ModeEnv) {
        for (uid, mode) in other.iter() {
            self.set(uid, self.get(uid).join(mode));
        }
    }

    /// Pointwise lifting of composition: every entry `v: m_v` becomes
    /// `v: outer.compose(m_v)`; entries that collapse to `Ignore` are erased.
    pub fn compose_under(&self, outer: Mode) -> ModeEnv {
        let mut result = ModeEnv::new();
        for (uid, mode) in self.iter() {
            result.set(uid, outer.compose(mode));
        }
        result
    }

    /// Pointwise order on the union of domains (missing entries are `Ignore`).
    pub fn le(&self, other: &ModeEnv) -> bool {
        self.iter().all(|(uid, mode)| mode.le(other.get(uid)))
    }
}

impl FromIterator<(Uid, Mode)> for ModeEnv {
    fn from_iter<T: IntoIterator<Item = (Uid, Mode)>>(iter: T) -> Self {
        let mut env = ModeEnv::new();
        for (uid, mode) in iter {
            env.set(uid, env.get(uid).join(mode));
        }
        env
    }
}

impl fmt::Display for ModeEnv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (uid, mode)) in self.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{uid}: {mode}")?;
        }
        write!(f, "}}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uid(n: u32) -> Uid {
        Uid(n)
    }

    /// Equational presentation of composition, written independently of the
    /// table so the two can be checked against each other.
    fn compose_by_rules(outer: Mode, inner: Mode) -> Mode {
        use Mode::*;
        match (outer, inner) {
            (Ignore, _) | (_, Ignore) => Ignore,
            (Delay, _) => Delay,
            (Guard, Return) => Guard,
            (Guard, m) => m,
            (Return, m) => m,
            (Dereference, _) => Dereference,
        }
    }

    #[test]
    fn table_matches_equational_rules() {
        for &a in &ALL_MODES {
            for &b in &ALL_MODES {
                assert_eq!(a.compose(b), compose_by_rules(a, b), "compose {a} {b}");
            }
        }
    }

    #[test]
    fn order_chain() {
        assert!(Mode::Delay.le(Mode::Guard));
        assert!(Mode::Return.le(Mode::Return));
        assert!(!Mode::Dereference.le(Mode::Ignore));
        for (i, &a) in ALL_MODES.iter().enumerate() {
            for (j, &b) in ALL_MODES.iter().enumerate() {
                assert_eq!(a.le(b), i <= j);
            }
        }
    }

    #[test]
    fn composition_spot_checks() {
        use Mode::*;
        assert_eq!(Guard.compose(Return), Guard);
        assert_eq!(Delay.compose(Dereference), Delay);
        assert_eq!(Return.compose(Guard), Guard);
        assert_eq!(Ignore.compose(Dereference), Ignore);
        // Non-commutativity witness.
        assert_eq!(Dereference.compose(Delay), Dereference);
        assert_eq!(Delay.compose(Dereference), Delay);
    }

    #[test]
    fn env_join_and_compose() {
        let g1 = ModeEnv::singleton(uid(1), Mode::Guard);
        let g2 = ModeEnv::singleton(uid(1), Mode::Dereference);
        assert_eq!(g1.join(&g2), ModeEnv::singleton(uid(1), Mode::Dereference));

        let empty = ModeEnv::new();
        assert_eq!(empty.join(&g1), g1);

        let disjoint = ModeEnv::singleton(uid(2), Mode::Delay).join(&g1);
        assert_eq!(disjoint.get(uid(1)), Mode::Guard);
        assert_eq!(disjoint.get(uid(2)), Mode::Delay);

        let composed = ModeEnv::singleton(uid(3), Mode::Return).compose_under(Mode::Guard);
        assert_eq!(composed, ModeEnv::singleton(uid(3), Mode::Guard));
        assert!(ModeEnv::singleton(uid(3), Mode::Dereference)
            .compose_under(Mode::Ignore)
            .is_empty());
        let g = ModeEnv::singleton(uid(4), Mode::Delay);
        assert_eq!(g.compose_under(Mode::Return), g);
    }

    #[test]
    fn env_le_cases() {
        let empty = ModeEnv::new();
        let g = ModeEnv::singleton(uid(1), Mode::Return);
        assert!(empty.le(&g));
        assert!(ModeEnv::singleton(uid(1), Mode::Guard).le(&g));
        assert!(!ModeEnv::singleton(uid(1), Mode::Return)
            .le(&ModeEnv::singleton(uid(2), Mode::Return)));
    }
}
