//! Sub-Nyquist compressed beamforming for phased-array ultrasound, at desk
//! scale: synthesize multi-element channel data from a sparse-reflector
//! model, beamform it classically at the full rate (the reference), recover
//! the same lines from low-rate Fourier-domain samples by greedy sparse
//! approximation, and render sector images with the achieved sample-rate
//! reduction accounted for.

pub mod beamform;
pub mod config;
pub mod containers;
pub mod error;
pub mod geometry;
pub mod imaging;
pub mod phantom;
pub mod pipeline;
pub mod pulse;
pub mod recovery;
pub mod util;
pub mod xampling;

pub use error::{Error, Result};
