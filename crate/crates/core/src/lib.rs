pub mod adapters;
pub mod archive;
pub mod batch;
pub mod corpus;
pub mod error;
pub mod experiment;
pub mod inference;
pub mod metrics;
pub mod model;
pub mod noising;
pub mod params;
pub mod training;

pub use error::{Error, ErrorKind, Result};
