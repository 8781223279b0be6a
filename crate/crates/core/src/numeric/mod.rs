//! Shared numerical kernels: ODE integration, quadrature, Chebyshev
//! collocation and finite-difference derivatives.

pub mod cheb;
pub mod fd;
pub mod ode;
pub mod quad;
