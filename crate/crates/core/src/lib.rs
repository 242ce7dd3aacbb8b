//! Fixed total-angular-momentum spectra by null-space projection, load
//! balancing of block computations, derivative-free least-squares fitting
//! and computational noise estimation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod app;
pub mod dfo;
pub mod krylov;
pub mod linalg;
pub mod manifest;
pub mod mm;
pub mod noise;
pub mod pipeline;
pub mod scheduler;
pub mod sparse;
pub mod spectral;
pub mod spin;
