//! Vectorization and 3D reconstruction of raster floor-plan segmentation masks.

pub mod attention;
pub mod augment;
pub mod config;
pub mod geom;
pub mod heatmap;
pub mod mask_io;
pub mod metrics;
pub mod reconstruct;
pub mod svg_annotations;
pub mod synthetic;
pub mod vectorize;

pub use mask_io::{BinaryMask, ClassId, ClassInfo, Palette, SegMask};
