//! Compile how-to videos into criteria-annotated coach plans, ground them in
//! accessibility resources, and run live assistance sessions over a frame
//! stream.

pub mod compiler;
pub mod config;
pub mod criteria;
pub mod eval;
pub mod frames;
pub mod gateway;
pub mod intent;
pub mod knowledge;
pub mod offline;
pub mod pipeline;
pub mod plan;
pub mod session;
pub mod text;
