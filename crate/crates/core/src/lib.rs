//! Fair k-median clustering through `(r,b)`-fairlet decomposition on a
//! randomly shifted quadtree embedding.
//!
//! The pipeline is [`hst::build_hst`] → [`fairlet::fairlet_decomposition`] →
//! [`kmedian::cluster_fairlets`], with [`cost::audit`] checking the result.
//! [`oracle`] holds exhaustive solvers for small instances.

pub mod cost;
pub mod error;
pub mod fairlet;
pub mod heavy;
pub mod hst;
pub mod io;
pub mod kmedian;
pub mod oracle;
pub mod types;

pub use error::{FairError, Result};
pub use types::{Color, ColorCount, ColoredDataset, FairnessParams};
