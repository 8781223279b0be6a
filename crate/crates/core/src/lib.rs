//! Numerics for separatrix splitting near a multiple resonance.
//!
//! The library models a rotator-pendulum chain: `n` rotators with frequency
//! vector `omega` coupled to a chain of `1 + m` pendula with strictly
//! increasing arm lengths.  The leading pendulum carries a separatrix; the
//! remaining ones are hyperbolic transverse degrees of freedom.  Modules:
//!
//! * [`model`] — Hamiltonian, characteristic exponents, resonance checks;
//! * [`separatrix`] — the unperturbed homoclinic orbit and the energy-time chart;
//! * [`variational`] — linearised flow along the separatrix and the Riccati
//!   field of invariant transverse directions;
//! * [`melnikov`] — first-order splitting integrals and Fourier decay fits;
//! * [`homological`] — small-divisor solvers for the conjugacy (homological)
//!   equations on the torus, the cylinder and its hyperbolic extension;
//! * [`dynamics`] — symplectic integration, manifold shooting and direct
//!   measurement of the splitting distance.

pub mod config;
pub mod dynamics;
pub mod fourier;
pub mod homological;
pub mod melnikov;
pub mod model;
pub mod numeric;
pub mod separatrix;
pub mod variational;
