//! Performance-boundary identification for a simulated automated-vehicle
//! braking controller.
//!
//! The crate simulates a traffic-jam approach scenario ([`scenario`]), draws
//! Monte Carlo and minimax Latin Hypercube designs over its parameter box
//! ([`sampling`]), trains a Gaussian Process classifier with a Laplace
//! posterior on the simulated outcomes ([`gpc`]), and extracts and compares
//! the predicted collision / no-collision boundary ([`boundary`]).
//! [`campaign`] strings these together into a reproducible experiment.

pub mod boundary;
pub mod campaign;
pub mod gpc;
pub mod io;
pub mod sampling;
pub mod scenario;
