//! Neural-network building blocks: dense networks with exact input
//! derivatives, the model parameter set, and a reverse-mode tape.

pub mod activation;
pub mod network;
pub mod params;
pub mod tape;

pub use activation::Activation;
pub use network::{Cmnn, EffectiveNet, Jet, Layer, Mlp, Network, Scratch};
pub use params::{Architecture, ModelParams, ParamVector, CHECKPOINT_FORMAT};
pub use tape::{Tape, Tensor, Var};
