pub mod cli;
pub mod error;
pub mod hermite;
pub mod linalg;
pub mod measure;
pub mod polyfield;
pub mod spectral;
pub mod stein;
pub mod sum;
pub mod zolotarev;

pub use error::{Error, Result};
