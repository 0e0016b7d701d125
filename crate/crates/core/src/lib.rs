#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Quantum measurement dynamics.
//!
//! Von Neumann/Bohm meter models, projective measurements, POVMs, Kraus
//! channels, weak values with pre- and post-selection, master equations
//! (Liouville-von Neumann, Lindblad, continuous measurement) and the Zeno
//! effect. Natural units, hbar = 1.

pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod measurement;
pub mod meter;
pub mod states;
pub mod weak;

pub use error::{Error, Result};
pub use linalg::{ComplexMatrix, ComplexVector, C64};
pub use states::{DensityMatrix, MixtureSpec, PureState};
