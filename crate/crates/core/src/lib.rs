pub mod bev_grid;
pub mod config;
pub mod camera_geometry;
pub mod cli;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod linalg;
pub mod model;
pub mod occlusion;
pub mod pipeline;
pub mod scalar;
pub mod synthetic_world;
pub mod warping;

pub use error::{Error, Result};
pub use scalar::Real;

pub type PinholeCamera64 = camera_geometry::PinholeCamera<f64>;
pub type PinholeCamera32 = camera_geometry::PinholeCamera<f32>;
pub type Pose64 = camera_geometry::Pose<f64>;
pub type Pose32 = camera_geometry::Pose<f32>;
pub type Homography64 = camera_geometry::Homography<f64>;
pub type Homography32 = camera_geometry::Homography<f32>;
pub type GridSpec64 = bev_grid::GridSpec<f64>;
pub type GridSpec32 = bev_grid::GridSpec<f32>;
pub type BevGrid64 = bev_grid::BevGrid<f64>;
pub type BevGrid32 = bev_grid::BevGrid<f32>;
pub type ImageRaster64 = warping::ImageRaster<f64>;
pub type ImageRaster32 = warping::ImageRaster<f32>;
pub type LinearHead64 = model::LinearHead<f64>;
pub type LinearHead32 = model::LinearHead<f32>;
