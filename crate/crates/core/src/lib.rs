pub mod control;
pub mod error;
pub mod expm;
pub mod measure;
pub mod quad;
pub mod simulate;
pub mod system;
pub mod tail;

pub use error::{Error, Result};
