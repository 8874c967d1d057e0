//! The state-synchronization loop.
//!
//! [`server::ServerEngine`] owns the authoritative game model, emits one
//! STATE_UPDATE datagram per entity at its group's period, runs probe rounds
//! and performs the 5-second maintenance (close round, read loss, reassign
//! groups when the entity of reference moved). [`client::ClientModel`] is a
//! dumb applier: it keeps the freshest state per entity, echoes probes and
//! records staleness. Both are clocked externally with a millisecond `now`,
//! so the same code runs on the deterministic virtual clock and on real
//! sockets.

pub mod client;
pub mod server;

pub use client::{BotPolicy, ClientModel};
pub use server::{ServerEngine, MAINTENANCE_PERIOD_MS};
