//! Adaptive level-of-detail state synchronization for client-server games.
//!
//! A server keeps the authoritative game model and replicates entity state to
//! a thin client over UDP. Entities are organized into communication groups,
//! each with its own update period. At runtime every entity gets a score
//! (`significance weight x measured network congestion`) and is placed in
//! the cheapest group whose score threshold it satisfies, so that when the
//! network degrades, unimportant entities back off first and the important
//! ones keep their update rate.
//!
//! The crate ships the whole testbed needed to observe that behaviour:
//!
//! - [`model`] - roles, groups, the score formula and the assignment policy
//! - [`monitor`] - packet-loss measurement via 100-probe rounds
//! - [`wire`] - the binary datagram codec
//! - [`engine`] - the server game loop and the client-side model applier
//! - [`proxy`] - a capacity-scheduled impairment proxy (the congestion source)
//! - [`duckhunt`] - a headless scripted shooting-game workload with a bot
//! - [`harness`] - scenario orchestration, metric reports and comparisons
//!
//! Runnable walkthroughs for each capability live under `examples/`; the
//! `lodsync` binary exposes the server, client, proxy and scenario harness
//! as subcommands.

pub mod duckhunt;
pub mod engine;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod monitor;
pub mod netloop;
pub mod proxy;
pub mod wire;
