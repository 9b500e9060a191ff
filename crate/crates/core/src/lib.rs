//! Cone-induced seminorms on polynomial rings.
//!
//! A cone `M` in `R[x]` with `1` in its algebraic interior induces the
//! seminorm `‖a‖_M = inf { r > 0 : r ± a ∈ M }`. For quadratic modules and
//! preorderings generated by finitely many polynomials this crate brackets
//! that seminorm numerically, relates it to the sup-norm on the set `K_S`
//! cut out by the generators, and tests membership in the closure of a cone.

pub mod cones;
pub mod duality;
pub mod poly;
pub mod seminorm;
pub mod sos;
pub mod topology;
