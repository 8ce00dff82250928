//! Heat-kernel parametrix machinery for the incompressible Navier–Stokes
//! equations on the periodic torus, together with the numerical checks of the
//! L² energy estimate, the remainder scaling, and the 3D vorticity L¹ bound.
//!
//! Modules, bottom-up:
//!
//! * [`grid`], [`spectral`], [`field`]: periodic lattices, FFTs, fields, norms,
//!   off-grid trigonometric evaluation.
//! * [`operators`]: heat kernel, semigroup and Green operator, Leray projector,
//!   differential operators, dealiased advection, absorbing constant.
//! * [`solver`]: integrating-factor RK4 pseudo-spectral solver and oracles.
//! * [`flow`]: characteristic flows along a stored trajectory.
//! * [`parametrix`]: perturbed kernel, frozen-point Duhamel reconstruction,
//!   remainder functionals.
//! * [`verify`]: experiment harnesses producing pass/fail reports.
//! * [`io`], [`plot`]: snapshot files, CSV/JSON output, SVG plots.

pub mod error;
pub mod field;
pub mod flow;
pub mod grid;
pub mod io;
pub mod operators;
pub mod parametrix;
pub mod plot;
pub mod solver;
pub mod spectral;
pub mod trajectory;
pub mod verify;

pub use error::{Error, Result};
pub use field::Field;
pub use grid::{Grid, Point, TimePartition};
pub use trajectory::Trajectory;
