pub mod cdts;
pub mod error;
pub mod gauss4d;
pub mod geom;
pub mod image;
pub mod metrics;
pub mod ntgm;
pub mod pipeline;
pub mod raster;
pub mod seed;
pub mod worldgen;

pub use error::{Error, Result};
