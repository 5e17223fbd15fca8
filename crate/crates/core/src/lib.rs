pub mod autodiff;
pub mod datagen;
pub mod diagnostics;
pub mod drp;
pub mod error;
pub mod experiment;
pub mod exec;
pub mod filter;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod report;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
