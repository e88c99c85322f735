//! Verifier-backed planning harness.

pub mod analysis;
pub mod derail;
pub mod env;
pub mod gateway;
pub mod oracle;
pub mod planbench;
pub mod replay;
pub mod runner;
pub mod seed;
pub mod zoo;
