//! Lower-bound constructions and accelerated methods for decentralized
//! optimization over time-varying graphs.

pub mod adversary;
pub mod error;
pub mod gossip;
pub mod graphcore;
pub mod harness;
pub mod topologies;
pub mod tvopt;
pub mod worstcase;

pub use error::{Error, Result};
