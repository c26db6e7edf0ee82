//! Dense generator and discriminator networks, reverse-mode gradients,
//! adversarial losses, Adam, and the training loop.

mod loss;
mod net;
mod optim;
mod tape;
mod train;

pub use loss::{cross_entropy_tape, loss_d, loss_d_tape, loss_g, loss_g_tape, PROB_CLAMP};
pub use net::{Activation, Dense, DenseNet, NetVars, LEAKY_SLOPE};
pub use optim::{Adam, AdamConfig};
pub use tape::{Gradients, Tape, Var};
pub use train::{generate, read_model, train, write_model, EpochStats, GanConfig, GanModel};
