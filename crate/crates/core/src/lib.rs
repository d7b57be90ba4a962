//! Numerical laboratory for the planar Euler–Lagrange equation
//! `div[Df(∇u)] = 0` with linear and nearly linear growth densities.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod caccioppoli;
pub mod cli;
pub mod conditions;
pub mod density;
pub mod error;
pub mod field;
pub mod mesh;
pub mod nitsche;
pub mod quadrature;
pub mod report;
pub mod solver;
mod spec_string;

pub use error::{ConfigError, Error, FieldIssue, Result};
