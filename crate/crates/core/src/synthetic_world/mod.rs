//! Procedural road scenes, pinhole rendering and ground-truth labels.
//!
//! World coordinates are metric with `z` up. Every ego frame looks along
//! its `+y` axis with `+x` to the right.

mod geometry;
mod labels;
mod render;
mod scene;
mod sequence;
mod texture;

pub use geometry::{bbox, mix64, convex_overlap, oriented_rect, point_in_polygon, polygon_area, Polygon};
pub use labels::{bev_labels, image_labels};
pub use render::{ground_point_hidden, render_image, scene_prisms, Prism, OBJECT_RENDER_HEIGHT};
pub use scene::{
    generate_scene, DynamicObject, LayerIndex, ObjectState, Occluder, Road, Scene, SceneParams, CARPARK, CROSSING,
    DRIVABLE, OBJECT_CLASSES, STATIC_CLASSES, WALKWAY,
};
pub use sequence::{make_sequence, random_interval, relative_pose, render_frame, sequence_steps, CameraRig, Frame};
pub use texture::{Texture, GRASS, ROAD, SKY};
