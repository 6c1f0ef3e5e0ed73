//! Switching-law synthesis for singular equilibria of switched affine systems.
//!
//! The pipeline runs: build a plant ([`sysmodel`]), pick simplex weights and
//! an equilibrium in the nullspace of `A_λ` ([`equilibria`]), solve the
//! Lyapunov matrix inequalities and assemble the argmin switching law
//! ([`design`]), simulate it ([`simulate`]) and certify a local exponential
//! rate with sum-of-squares programs ([`rate`]).

pub mod cli;
pub mod conic;
pub mod design;
pub mod equilibria;
pub mod fixtures;
pub mod linalg;
pub mod rate;
pub mod simulate;
pub mod sysmodel;
