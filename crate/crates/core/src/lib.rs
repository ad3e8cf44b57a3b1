//! Slot-level simulator of an RIS-aided mobile edge computing uplink in which
//! channel estimation, resource allocation and control signalling have
//! explicit time and energy costs and can fail.

pub mod channel;
pub mod control_plane;
pub mod dynamics;
pub mod energy;
pub mod engine;
pub mod error;
pub mod estimation;
pub mod ra;
pub mod scenario;
pub mod units;

#[cfg(test)]
mod protocol_tests;

pub use channel::{ChannelMatrices, ChannelRealization, Codebooks, RisConfiguration, C64};
pub use error::{Result, SimError};
pub use scenario::{ArrivalModel, CeMode, Geometry, PacketLossProbs, PacketType, ScenarioConfig};
