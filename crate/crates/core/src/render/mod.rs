//! Software rendering of textured head meshes from configured viewpoints.

mod camera;
pub(crate) mod math;
mod output;
mod raster;

pub use camera::{
    default_cameras, load_cameras, Camera, Projection, ViewBasis, DEFAULT_FOV_DEGREES,
    DEFAULT_RESOLUTION, HEAD_FILL,
};
pub use output::{
    render_sequence, render_variant, texture_dir_name, variant_dir, AtlasSource, ClipMeta,
    ONLY_MESH_DIR,
};
pub use raster::{
    rasterize_attributes, rasterize_frame, AttributeBuffer, Fragment, FrameBuffer, RenderSettings,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("camera {0}")]
    Camera(String),
    #[error(transparent)]
    Texture(#[from] crate::texture::TextureError),
    #[error("writing {path}: {message}")]
    Write { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
