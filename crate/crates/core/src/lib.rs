pub mod derivatives;
pub mod error;
pub mod family;
pub mod numeric;
pub mod problems;
pub mod solver;
pub mod subproblem;
pub mod delay;
