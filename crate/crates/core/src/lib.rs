pub mod error;
pub mod expcli;
pub mod neurals;
pub mod optim;
pub mod paramspace;
pub mod taskdist;
pub mod taskworld;
pub mod trainer;
pub mod transfer;

pub use error::{Error, Result};
