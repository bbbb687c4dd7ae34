pub mod corpus;
pub mod dsp;
mod error;
pub mod features;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod preprocess;

pub use error::Error;
