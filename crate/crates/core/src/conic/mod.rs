//! Convex conic programs over Hermitian matrix variables and the solver
//! contract used by the designers.

mod param;
mod problem;
mod solve;

pub use param::{hermitian_param, real_lift, svec, Coord, HermitianParam};
pub use problem::{
    ConicProblem, Constraint, HermExpr, LabeledConstraint, LinExpr, Objective, VarBlock, VarId, VarKind,
};
pub use solve::{solve, ConicSolution, SolveStatus, SolverSettings};
