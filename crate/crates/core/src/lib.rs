//! Robustness benchmarking for black-box deepfake detectors.
//!
//! The harness perturbs a labeled frame corpus with benign processing
//! operations, scores every variant with one or more detectors through a
//! subprocess protocol, and reports how accuracy, AUC, EER and F1 move
//! relative to the unprocessed baseline.
//!
//! Modules follow the data flow: [`corpus`] → [`operators`] /
//! [`external`] → [`detector`] → [`metrics`] → [`report`], with
//! [`runner`] and [`config`] tying them together for the `bench` binary.

pub mod buffer;
pub mod config;
pub mod corpus;
pub mod detector;
pub mod external;
pub mod metrics;
pub mod operators;
pub mod process;
pub mod report;
pub mod runner;
pub mod seed;
pub mod synth;

pub use buffer::ImageBuffer;
pub use corpus::{Family, Label, Manifest, ManifestEntry};
pub use operators::{Operator, PipelineSpec};
