//! Marketplace mining pipeline: focused crawler, rate-aware harvester,
//! profile-driven extractor, embedded search index with analyst annotations,
//! corpus analytics, and a deterministic marketplace simulator.

mod bgserver;
pub mod clock;
pub mod config;
pub mod dndo;
pub mod frontier;
pub mod extractor;
pub mod harvester;
pub mod index;
pub mod analytics;
pub mod marketsim;
pub mod pipeline;
pub mod api;
