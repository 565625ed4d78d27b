pub mod error;
pub mod expr;
pub mod fraclap;
pub mod grid;
pub mod initial;
pub mod io;
pub mod metrics;
pub mod mild;
pub mod particles;
pub mod semigroup;
pub mod singular;
pub mod special;
pub mod spectral;

pub use error::{Error, Result};
