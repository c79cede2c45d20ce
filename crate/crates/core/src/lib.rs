//! Chart-local numerical Finsler geometry.
//!
//! A [`FinslerField`] is a black-box evaluator of `F(x, y)`. Everything else
//! is built from finite differences of it: the metric tensor, the canonical
//! spray and its derivatives, Berwald classification, geodesics and parallel
//! transport, and two Riemannian metrics attached to a Berwald connection
//! (the indicatrix average and the Loewner ellipsoid).

pub mod connection;
pub mod diff;
pub mod dsl;
pub mod error;
pub mod field;
pub mod loewner;
pub mod metrization;
pub mod tensor;
pub mod transport;
pub mod validate;

pub use diff::DiffSpec;
pub use error::{Error, Result};
pub use field::{ChartBox, DeclaredClass, FinslerField, MetricField};
pub use tensor::{Christoffel, Curvature, SymmetricBilinearForm};
