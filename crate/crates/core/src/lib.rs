//! Verification engine for generalized (Lie-Backlund) symmetries, ansatz
//! reductions and exact solutions of evolution equations.

pub mod expr;
pub mod numeric;
pub mod jet;
pub mod sampling;
pub mod detcheck;
pub mod reduce;
pub mod invariance;
pub mod catalog;
pub mod run;

pub use catalog::{Case, CaseRecord, CatalogError, Expect, Kind};
pub use detcheck::{Mode, Stage, Status, Tolerances, Verdict};
pub use expr::{parse, parse_in, Context, Expr};
pub use jet::{GeneralizedField, Independents, Manifold};
pub use run::{CaseReport, Outcome, Report, RunConfig};
pub use sampling::{Range, Space};
