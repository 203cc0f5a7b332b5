//! Numerical geometric reduction of dynamical systems.
//!
//! The crate builds classical and relativistic dynamical systems, reduces them
//! by invariant surfaces and quotient maps, and evaluates symplectic,
//! presymplectic and Dirac brackets so that every structural identity can be
//! checked at sample points.

pub mod calc;
pub mod catalog;
pub mod dirac;
pub mod flow;
pub mod frames;
pub mod lagsym;
pub mod qriccati;
pub mod reduce;
