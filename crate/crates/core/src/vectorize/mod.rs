//! Mask to polygon vectorization.
//!
//! The pipeline erases classes into a joint mask, approximates every
//! connected component by minimum-area rectangles, labels each rectangle
//! with the majority class underneath it and finally snaps nearby corners
//! of different polygons together and strips nearly collinear vertices.

mod approximate;
mod io;
mod rect;
mod refine;

use thiserror::Error;

pub use approximate::{approximate_polygons, component_rect, split_component, MIN_SPLIT_PIXELS};
pub use io::{parse_polygons_text, polygons_to_geojson, polygons_to_text};
pub use rect::{convex_hull, fitting_score, min_area_rect, pixel_outline, RotatedRect};
pub use refine::{merge_vertices, refine_polygons, remove_collinear};

use crate::geom::{fill_polygon, signed_area, Point};
use crate::mask_io::{joint_mask, ClassId, MaskError, SegMask};

#[derive(Debug, Error)]
pub enum VectorizeError {
    #[error("point set is empty")]
    EmptyPointSet,
    #[error("rectangle has zero area")]
    ZeroAreaRect,
    #[error("component is empty")]
    EmptyComponent,
    #[error("component cannot be split")]
    DegenerateSplit,
    #[error("threshold {0} out of range: {1}")]
    InvalidThreshold(&'static str, f64),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Mask(#[from] MaskError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    /// Minimum fitting score for a rectangle to be accepted.
    pub eps_u: f64,
    /// Merge distance in pixels.
    pub eps_d: f64,
    /// Collinearity threshold, as a cosine.
    pub eps_a: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            eps_u: 0.5,
            eps_d: 4.0,
            eps_a: 14f64.to_radians().cos(),
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), VectorizeError> {
        if !(self.eps_u > 0.0 && self.eps_u <= 1.0) {
            return Err(VectorizeError::InvalidThreshold("eps_u", self.eps_u));
        }
        if !(self.eps_d >= 0.0) || !self.eps_d.is_finite() {
            return Err(VectorizeError::InvalidThreshold("eps_d", self.eps_d));
        }
        if !(0.0..=1.0).contains(&self.eps_a) {
            return Err(VectorizeError::InvalidThreshold("eps_a", self.eps_a));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub vertices: Vec<Point>,
    pub class: ClassId,
    /// Emitted by the min-size guard rather than by passing the fitting test.
    pub fallback: bool,
}

impl Polygon {
    pub fn new(vertices: Vec<Point>, class: ClassId) -> Self {
        let mut p = Polygon {
            vertices,
            class,
            fallback: false,
        };
        p.normalize();
        p
    }

    /// Drops consecutive duplicates and orients the ring to positive area.
    pub fn normalize(&mut self) {
        self.vertices.dedup();
        while self.vertices.len() > 1 && self.vertices.first() == self.vertices.last() {
            self.vertices.pop();
        }
        if signed_area(&self.vertices) < 0.0 {
            self.vertices.reverse();
        }
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PolygonSet {
    pub polygons: Vec<Polygon>,
}

impl PolygonSet {
    pub fn len(&self) -> usize {
        self.polygons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.polygons.is_empty()
    }

    /// Paints the polygons onto a mask in order; later polygons win.
    pub fn rasterize(&self, width: usize, height: usize) -> SegMask {
        let mut mask = SegMask::new(width, height);
        for p in &self.polygons {
            let class = if p.class == ClassId::BACKGROUND {
                ClassId::WALL
            } else {
                p.class
            };
            fill_polygon(&p.vertices, width, height, |x, y| mask.set(x, y, class));
        }
        mask
    }
}

/// Labels every polygon with the most frequent non-background class under
/// it (ties go to the lower id). Polygons covering no foreground are dropped.
pub fn assign_classes(set: &PolygonSet, mask: &SegMask) -> PolygonSet {
    let polygons = set
        .polygons
        .iter()
        .filter_map(|p| {
            let mut counts = [0usize; ClassId::COUNT];
            fill_polygon(&p.vertices, mask.width(), mask.height(), |x, y| {
                counts[mask.get(x, y).index()] += 1;
            });
            let (best, n) = ClassId::structural()
                .map(|c| (c, counts[c.index()]))
                .fold((ClassId::BACKGROUND, 0), |acc, (c, n)| if n > acc.1 { (c, n) } else { acc });
            (n > 0).then(|| Polygon {
                vertices: p.vertices.clone(),
                class: best,
                fallback: p.fallback,
            })
        })
        .collect();
    PolygonSet { polygons }
}

/// Full mask to refined, class-labelled polygons.
pub fn vectorize_mask(mask: &SegMask, thresholds: &Thresholds) -> Result<PolygonSet, VectorizeError> {
    thresholds.validate()?;
    let classes: Vec<ClassId> = ClassId::structural().collect();
    let joint = joint_mask(mask, &classes)?;
    let approx = approximate_polygons(&joint, thresholds.eps_u)?;
    let labelled = assign_classes(&approx, mask);
    Ok(refine_polygons(&labelled, thresholds))
}
