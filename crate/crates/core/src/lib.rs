//! Quenched temporal ensembles of chaotic Hamiltonians: how close a few
//! random-time quenches get to a Haar-random unitary, measured by frame
//! potentials.

pub mod combinatorics;
pub mod error;
pub mod frame_potential;
pub mod hamiltonians;
pub mod leakage;
pub mod montecarlo;
pub mod rng;
pub mod runner;
pub mod scalar;
pub mod spectral;
pub mod temporal;
pub mod weingarten;

pub use error::{Error, Result};
pub use scalar::Real;

pub type EigenSystem64 = spectral::EigenSystem<f64>;
pub type EigenSystem32 = spectral::EigenSystem<f32>;
pub type HermitianOperator64 = hamiltonians::HermitianOperator<f64>;
pub type HermitianOperator32 = hamiltonians::HermitianOperator<f32>;
pub type OverlapMatrix64 = spectral::OverlapMatrix<f64>;
pub type TimeWindow64 = temporal::TimeWindow<f64>;
