//! Small-divisor linear solvers on the whiskered cylinder and the single
//! infinitesimal-conjugacy step built from them.

pub mod cylinder;
pub mod solve;
pub mod step;

pub use cylinder::{CylinderFunction, ModeFn, ModeKey};
pub use solve::{
    apply_operator, minimal_divisor, solve_cylinder, solve_extended, solve_torus_mode,
    ComponentSolution, HomologicalError, OperatorSpec, SolveOptions, Transpose,
};
pub use step::{homological_step, HomologicalSolution, StepInput};
