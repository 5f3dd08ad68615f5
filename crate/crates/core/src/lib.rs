//! Numerical laboratory for superscar quasi-modes in pseudo-integrable billiards.
//!
//! The crate quantizes the π/8 right triangle and the desymmetrised barrier
//! billiard, builds superscar waves on periodic-orbit pencils, evaluates the
//! closed-form singular-diffraction amplitudes and computes overlap, width and
//! multifractal statistics of the computed eigenstates.

pub mod cli;
pub mod diffraction;
pub mod error;
pub mod geometry;
pub mod slits;
pub mod special;
pub mod spectral;
pub mod stats;
pub mod superscar;

pub use error::{Error, Result};
