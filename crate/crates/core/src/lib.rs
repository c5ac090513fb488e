//! Generation of logically diverse simulated environments for testing
//! embodied task planners.

pub mod derivation;
pub mod environment;
pub mod geometry;
pub mod layout;
pub mod physics;
pub mod plan;
pub mod prompts;
pub mod provider;
pub mod trajectory;
pub mod scene;
pub mod task;
pub mod sim;
pub mod metrics;
pub mod report;
pub mod pipeline;
