//! Constrained dynamics on the d'Alembert–Lagrange principle: closed-form
//! ideal reactions, Lagrange equations of the first and second kind, and
//! numerical checks of their structural properties.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod batch;
pub mod catalog;
pub mod commands;
pub mod constraints;
pub mod dynamics;
pub mod error;
pub mod generalized;
pub mod integrate;
pub mod linalg;
pub mod model;
pub mod reactions;
pub mod report;
pub mod sampling;
pub mod scenario;

pub use error::{Error, Result, Slot};
pub use model::{MassMatrix, MechanicalSystem, SmoothMap, State};
