pub mod classify;
pub mod config;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod ocr;
pub mod passage;
pub mod pipeline;
pub mod plot;
pub mod rng;
pub mod sanity;
pub mod similarity;
pub mod synth;
pub mod temporal;

pub use error::{Error, Result};
