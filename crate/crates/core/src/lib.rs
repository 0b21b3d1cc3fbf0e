//! Toolchain for a crowdsourced SMS corpus: channel parsers, anonymization,
//! quality checks and moderation, contributor rewards, statistics and
//! versioned releases, with an HTTP service and an operator CLI.

pub mod anonymize;
pub mod ingest;
pub mod keys;
pub mod model;
pub mod pipeline;
pub mod release;
pub mod rewards;
pub mod service;
pub mod stats;
pub mod store;
pub mod validate;
