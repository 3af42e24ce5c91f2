//! Desk-scale simulator and optimizer for LLM inference served over a
//! fading wireless link. Requests pass through an on-device prompt
//! compressor, a Rayleigh block-fading channel, and a remote LLM; the agent
//! module trains a Double DQN to pick the joint (compression level,
//! transmit power) action that trades fidelity against energy, latency,
//! and bit errors, and the oracle module brute-forces the same problem for
//! verification.

pub mod agent;
pub mod bridge;
pub mod calibrate;
pub mod channel;
pub mod checkpoint;
pub mod config;
pub mod env;
pub mod error;
pub mod fidelity;
pub mod metrics;
pub mod oracle;
pub mod props;
pub mod service;

pub use config::{AgentConfig, EnvConfig, OracleConfig, RunConfig};
pub use env::Env;
pub use error::{Error, Result};
pub use service::{Action, NUM_ACTIONS};
