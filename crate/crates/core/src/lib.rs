pub mod error;
pub mod fem;
pub(crate) mod io;
pub mod loading;
pub mod material;
pub mod pod;
pub mod rnn;
pub mod surrogate;

pub use error::{Error, Result};
