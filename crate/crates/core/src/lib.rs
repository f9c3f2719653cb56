//! Decentralized multi-robot relative navigation.
//!
//! Each robot runs an independent two-layer planner. A low-frequency
//! strategic layer rasterizes range scans, extracts obstacle contours,
//! fuses contours received from teammates over a lossy peer-to-peer
//! channel, and plans long routes over a visibility graph. A high-frequency
//! tactical layer follows that route with grid search, resolves
//! spatio-temporal conflicts with teammates through speed profiles and
//! sampled escape points, and refines the result into a smooth
//! jerk-minimal trajectory executed by a differential-drive model.
//!
//! The [`sim`] module ties the layers together in a deterministic
//! tick-synchronous simulation; [`corpus`] bundles the benchmark scenarios.

pub mod comms;
pub mod corpus;
pub mod geometry;
pub mod local_planner;
pub mod rng;
pub mod sim;
pub mod topology;
pub mod trajopt;
pub mod world;
