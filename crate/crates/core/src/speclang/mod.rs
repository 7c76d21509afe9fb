//! The property language: lexer, parser, sort checker and predicate expansion.
//!
//! A module imports models and datasets, defines predicates and states goals:
//!
//! ```text
//! model M from "classifier.json";
//! dataset D from "samples.csv";
//! goal robust: forall a in D. robust_to(M, a, 0.5)
//! ```

pub mod ast;
mod error;
pub mod expand;
mod lexer;
pub mod parser;
pub mod pretty;
pub mod typecheck;

pub use ast::{CmpOp, Formula, FormulaKind, Goal, PredicateDef, QuantDomain, Sort, Span, SpecModule, Term, TermKind};
pub use error::SpecError;
pub use expand::{expand_all, expand_goal};
pub use parser::{parse_formula, parse_spec, parse_term};
pub use pretty::{print_formula, print_module, print_term};
pub use typecheck::{typecheck_spec, typecheck_spec_with_datasets, ModelKind, ModelSignature, TypedSpec};
