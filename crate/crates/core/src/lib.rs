//! Kolmogorov–Arnold layers on Jacobi polynomial bases and the PointNet-KAN
//! family of point-cloud networks.

pub mod autodiff;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod hierarchy;
pub mod jacobi;
pub mod layers;
pub mod models;
pub mod train;

pub use error::{Error, Result};
