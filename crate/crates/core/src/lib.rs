//! Function extrapolation from samples on a data domain `Ω` to a disjoint
//! extrapolation domain `Ξ`.
//!
//! The crate provides basis/frame families ([`bases`]), quadrature-backed
//! domains ([`domains`]), the extrapolation condition number and error
//! functionals ([`analysis`]), synthetic training data ([`datagen`]), a
//! from-scratch feedforward network trained on a `Ξ`-Gram-weighted loss
//! ([`nnet`]), a least-squares baseline ([`lsfit`]) and experiment
//! orchestration ([`runner`]).

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod bases;
pub mod datagen;
pub mod domains;
pub mod error;
pub mod lsfit;
pub mod nnet;
pub mod runner;

pub use error::{Error, Result};
