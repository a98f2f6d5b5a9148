//! Hierarchical sparse vector coding (HSVC) for multi-user short packets.
//!
//! Common bits select which `U` of `S` sections of a length-`N` sparse
//! vector are active; each user's private bits select the positions of its
//! length-`L_u` blocks inside its section and the modulated values that fill
//! them. The vector is spread by a ±1 codebook, sent over an OFDM/Rayleigh
//! link, and recovered with block OMP (sections) followed by a cyclic-shift
//! multi-path block OMP with successive interference cancellation (blocks).
//!
//! The [`sim`] module runs seeded Monte Carlo BLER sweeps of the codec and of
//! a sequential single-layer SVC baseline.

pub mod baseline;
pub mod channel;
pub mod codec;
pub mod combinadics;
pub mod config;
pub mod error;
pub mod modem;
pub mod rng;
pub mod sim;
pub mod sparse_recovery;
pub mod spreading;

pub use error::{HsvcError, Result};

/// Complex baseband sample.
pub type C64 = nalgebra::Complex<f64>;
