//! Small dense networks with hand-written gradients.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod mlp;
pub mod policy;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{agent_checkpoint, agent_from_checkpoint, Checkpoint};
pub use mlp::{Activation, Cache, Mlp, DEFAULT_HIDDEN};
pub use policy::{Critic, GaussianPolicy};
