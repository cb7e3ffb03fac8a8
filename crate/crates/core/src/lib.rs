//! Discrete-event simulator for vehicular ad hoc routing protocols.

pub mod config;
pub mod kernel;
pub mod metrics;
pub mod mobility;
pub mod packet;
pub mod routing;
pub mod runner;
pub mod sim;
pub mod time;
pub mod trace;
pub mod traffic;
pub mod wireless;
