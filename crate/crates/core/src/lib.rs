//! Simulator and design toolkit for attacking frequency-hopping wireless
//! power transfer with a time-division switched-capacitor receiver.

pub mod design;
pub mod encryptor;
pub mod error;
pub mod harness;
pub mod interceptor;
pub mod plant;
pub mod sim;

#[cfg(test)]
mod oracle;

pub use error::{Error, Result};
