#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acoustic;
pub mod cli;
pub mod config;
pub mod harness;
pub mod ingest;
pub mod mllm;
pub mod par;
pub mod pipeline;
pub mod predictor;
pub mod rng;
pub mod sampler;
pub mod topics;
