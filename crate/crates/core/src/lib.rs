pub mod airlink;
pub mod channel;
pub mod config;
pub mod error;
pub mod networks;
pub mod numerics;
pub mod experiments;
pub mod training;

pub use error::{Error, Result};
