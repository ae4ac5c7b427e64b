pub mod decode;
pub mod diffusion;
pub mod energy;
pub mod enumerate;
pub mod error;
pub mod graphs;
pub mod io;
pub mod nets;
pub mod objectives;
pub mod pipeline;
pub mod state;
pub mod unbiased;

pub use error::{Error, Result};
