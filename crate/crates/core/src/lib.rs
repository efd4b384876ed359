//! Symmetric private information retrieval from two non-colluding servers
//! that share a noiseless binary adder multiple-access channel with the
//! client.

pub mod bits;
pub mod capacity;
pub mod channel;
pub mod error;
pub mod harness;
pub mod model;
pub mod multifile;
pub mod oracle;
pub mod protocol;
pub mod rng;

pub use bits::{BitString, IndexSet};
pub use channel::{ChannelOutput, ChannelRound};
pub use error::{Error, Result};
pub use model::{FileStore, PartitionStrategy, ProtocolParams, Reduction, Selection};
pub use rng::PartyRandomness;
