//! Static safety analysis for mutually-recursive value definitions in a small
//! ML-like core language, together with a reference small-step interpreter
//! used to validate the analysis by differential and property-based testing.
//!
//! The crate is organized around the pipeline:
//!
//! * [`syntax`] — concrete grammar, parser, printer, scope resolution;
//! * [`modes`] — the five-point usage-mode order and its composition algebra;
//! * [`infer`] — the right-to-left mode inference and the letrec safety check;
//! * [`semantics`] — non-deterministic small-step evaluation and failure
//!   classification (mismatch / vicious / stuck);
//! * [`testkit`] — a brute-force declarative oracle, a random term generator,
//!   a shrinker, and the fuzzing harness that ties checker and interpreter
//!   together.

pub mod infer;
pub mod modes;
pub mod semantics;
pub mod syntax;
pub mod testkit;

pub use infer::{check_letrec, check_program, infer_term, Verdict};
pub use modes::{Mode, ModeEnv};
pub use syntax::{parse, print, Term};
