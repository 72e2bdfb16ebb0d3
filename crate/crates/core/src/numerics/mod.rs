//! Shared numerical machinery: finite-difference operators that respect each
//! topology's metric and boundary conditions, and the small direct linear
//! solvers used by the implicit steppers and eigensolvers.

pub mod ops;
pub mod solve;

pub use ops::*;
pub use solve::*;
