pub mod agents;
pub mod embedding;
pub mod events;
pub mod game;
pub mod llm;
pub mod metrics;
pub mod orchestrator;
pub mod plan;
pub mod scoring;
pub mod stats;
pub mod runner;
pub mod store;
