//! Train paired masked language models on a base corpus and on a base plus
//! fiction mixture, then measure what the extra data changed: per-word
//! predictive contrast, GSN text generation and per-passage information gain.

pub mod audit;
pub mod checkpoint;
pub mod corpus;
pub mod count;
pub mod error;
pub mod gsn;
pub mod infogain;
pub mod lm;
pub mod neural;
pub mod numeric;
pub mod pipeline;
pub mod synthetic;

pub use error::{Error, Result};
