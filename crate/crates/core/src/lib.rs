//! Hint-driven agent data pipeline.
//!
//! Failures of a base agent are mined for short imperative hints, the hints
//! are retrieved once at the start of later episodes to produce better
//! teacher trajectories, and those trajectories are re-serialized without the
//! hint block and few-shot scaffolding into distillation datasets.
//!
//! Stage map:
//! * A: [`rollout`] with [`rollout::Mode::Base`]
//! * B: [`hints::extract_hints`] into a [`hints::HintBank`]
//! * C: [`rollout`] with [`rollout::Mode::Rag`] and [`retrieval`]
//! * D: [`dataset`] and [`report`]

pub mod agents;
pub mod dataset;
pub mod envcore;
pub mod error;
pub mod hints;
pub mod llmio;
pub mod pipeline;
pub mod report;
pub mod retrieval;
pub mod rollout;
pub mod util;

pub use error::{Error, Result};
