//! Policy networks, reverse-mode gradients, optimizer and checkpoints.

pub mod checkpoint;
pub mod model;
pub mod optim;
pub mod tape;

pub use checkpoint::{Checkpoint, RngState};
pub use model::{Architecture, Network, NetworkPolicy, Outputs};
pub use optim::{Adam, LrSchedule};
pub use tape::{Tape, Var};
