//! On-disk formats: scene files, PPM/PNG images, config and camera files.

mod cameras;
mod config;
mod image;
mod scene;

pub use cameras::{format_cameras, parse_cameras, read_cameras, write_cameras};
pub use config::{parse_config, read_config};
pub use image::{decode_ppm, encode_ppm, quantize, read_image_ppm, write_image_png, write_image_ppm};
pub use scene::{decode_scene, encode_scene, read_scene, write_scene, SCENE_MAGIC, SCENE_VERSION};
