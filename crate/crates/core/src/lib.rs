pub mod dynamics;
pub mod env;
pub mod error;
pub mod gait;
pub mod math;
pub mod metrics;
pub mod nn;
pub mod rl;

pub use error::{Error, Result};
pub use math::Vec2;
