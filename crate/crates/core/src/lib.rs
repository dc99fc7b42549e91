//! Setplay parsing, feature extraction and two-stage fuzzy clustering.

pub mod cli;
pub mod cvi;
pub mod datagen;
pub mod fcm;
pub mod metrics;
pub mod model;
pub mod partition;
pub mod pipeline;
pub mod sexpr;
