//! Discrete differential forms on the periodic 4-torus with an almost
//! complex structure: Hodge theory, J-type splittings, the invariants
//! `h_J^±`, J-modified de Rham complexes and conic construction of tamed
//! and compatible symplectic forms.

pub mod cone;
pub mod error;
pub mod exterior;
pub mod fiber;
pub mod fields;
pub mod grid;
pub mod hodge;
pub mod jfield;
pub mod linalg;
pub mod oracle;

pub use error::{Error, Result};
pub use grid::{FormField, Grid, MetricField};
