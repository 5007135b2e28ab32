//! Core library of the MindFuse marketing-intelligence pipeline.

pub mod ads;
pub mod config;
pub mod creative;
pub mod gateway;
pub mod mining;
pub mod narrative;
pub mod pillars;
pub mod telemetry;
pub mod util;
pub mod workspace;
