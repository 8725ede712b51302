//! Case-study learning games: the case model and its bundle format, the
//! trigger language, the workbook compiler and the game engine.

pub mod bundle;
pub mod case;
pub mod compiler;
pub mod engine;
#[doc(hidden)]
pub mod testing;
pub mod trigger;

pub use bundle::{parse_case_bundle, serialize_case, BundleError};
pub use case::CaseDefinition;
pub use compiler::{compile_workbook, lint_workbook, scaffold_workbook, Diagnostic, DomainSkin};
pub use engine::{Engine, EngineError, EvaluationReport, FeedbackPolicy, GameState, Timestamp};
pub use trigger::{format_trigger, parse_trigger, TriggerProgram};
