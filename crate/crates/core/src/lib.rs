pub mod error;
pub mod fixedpoint;

pub use error::{Error, Result};
pub mod anomaly;
pub mod dse;
pub mod lstm;
pub mod manifest;
pub mod perf;
pub mod reference;
pub mod sim;
