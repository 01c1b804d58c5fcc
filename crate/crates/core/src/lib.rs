//! Room-world simulator and evaluation harness that splits an agent's
//! missing reward into an exploration gap and an exploitation gap.
//!
//! After every interaction the [`oracle`] computes the best return an agent
//! could achieve in one episode using only what its history reveals. The
//! difference to the world's maximum is unexplored value; the difference to
//! what the agent actually earned is value it failed to exploit.

pub mod agents;
pub mod episode;
pub mod harness;
pub mod metrics;
pub mod oracle;
pub mod testing;
pub mod textio;
pub mod worldgen;
