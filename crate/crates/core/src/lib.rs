//! The additive-multiplicative matrix channel `Y = A(X + W)` over finite
//! fields: arithmetic, exact counting, simulation, capacity and a block code.

pub mod capacity;
pub mod channel;
pub mod coding;
pub mod combinatorics;
pub mod error;
pub mod gf;
pub mod linalg;
pub mod rng;

pub use channel::{Channel, ChannelParams};
pub use error::{Error, Result};
pub use gf::Field;
pub use linalg::{Matrix, Subspace};
pub use rng::SeedStream;
