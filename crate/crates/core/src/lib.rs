//! Hardware-aware evaluation of mobile CNN building blocks.
//!
//! The crate is organised bottom-up:
//!
//! | Module | Contents |
//! |---|---|
//! | [`blockir`] | layer-level network IR and building-block templates |
//! | [`designspace`] | RegNet width parameterisation, quantisation and seeded sampling |
//! | [`costmodel`] | MAC / parameter / activation counting and roofline latency |
//! | [`stats`] | error EDFs, pareto fronts, curve noise and Kneedle elbows |
//! | [`harness`] | experiment configuration, run store and the CLI commands |
//! | [`par`] | data-parallel execution with a sequential fallback |
//!
//! Parallel evaluation is provided by rayon behind the default `parallel`
//! feature. Without it every [`par::Execution`] runs sequentially and all
//! results are identical.

pub mod blockir;
pub mod costmodel;
pub mod designspace;
pub mod harness;
pub mod par;
pub mod plot;
pub mod stats;

pub use blockir::{BlockTemplate, Bottleneck, ConvKind, LayerKind, LayerSpec, NetworkSpec, TensorShape};
pub use costmodel::{CostReport, HardwareProfile, LayerClass, LayerCost};
pub use designspace::{DesignSpaceParams, SamplingRanges, StagePlan};
pub use par::Execution;
pub use stats::{EdfCurve, ParetoCurve, SampleRecord};
