pub mod analysis;
pub mod attention;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod encoding;
pub mod error;
pub mod models;
pub mod nn;
pub mod phonology;
pub mod pipeline;
pub mod scansion;
pub mod toy;

pub use error::{Error, Result};
