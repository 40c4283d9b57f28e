//! Opening-endpoint heatmap targets and the heatmap regression loss.
//!
//! Endpoints of every opening component are taken as the two contour points
//! that lie furthest apart. Each endpoint contributes a Gaussian bump
//! `exp(-d^2 / beta^2)`; overlapping bumps are combined with `max`, and the
//! final target is the mean over a set of betas. A small set such as
//! `{2, 10}` gives a sharp drop to about 0.5 within three pixels followed by a
//! long shallow tail.

mod components;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use image::{ImageBuffer, Luma};
use rayon::prelude::*;
use thiserror::Error;

pub use components::{
    components_of_pixels, connected_components, trace_contour, Component, Contour, Pixel,
};

use crate::mask_io::{joint_mask, ClassId, SegMask};

/// Values below this are stored as exact zeros.
pub const HEATMAP_CUTOFF: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum HeatmapError {
    #[error("beta must be positive, got {0}")]
    NonPositiveBeta(f64),
    #[error("beta set is empty")]
    EmptyBetaSet,
    #[error("map for {class} is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    DimensionMismatch {
        class: ClassId,
        want_w: usize,
        want_h: usize,
        got_w: usize,
        got_h: usize,
    },
    #[error("no opening classes to compare")]
    EmptyClassSet,
    #[error("prediction and target class sets differ")]
    ClassSetMismatch,
    #[error("invalid beta list {0:?}")]
    Parse(String),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EndpointPair {
    pub a: Pixel,
    pub b: Pixel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaSet(Vec<f64>);

impl BetaSet {
    pub fn new(betas: Vec<f64>) -> Result<Self, HeatmapError> {
        if betas.is_empty() {
            return Err(HeatmapError::EmptyBetaSet);
        }
        if let Some(b) = betas.iter().find(|b| !(**b > 0.0) || !b.is_finite()) {
            return Err(HeatmapError::NonPositiveBeta(*b));
        }
        Ok(BetaSet(betas))
    }

    /// The `{5, 10, 40}` preset with wider tails.
    pub fn wide() -> Self {
        BetaSet(vec![5.0, 10.0, 40.0])
    }

    pub fn betas(&self) -> &[f64] {
        &self.0
    }
}

impl Default for BetaSet {
    fn default() -> Self {
        BetaSet(vec![2.0, 10.0])
    }
}

impl fmt::Display for BetaSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|b| b.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

impl FromStr for BetaSet {
    type Err = HeatmapError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let betas = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| HeatmapError::Parse(s.to_string()))?;
        BetaSet::new(betas)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl Heatmap {
    pub fn zeros(width: usize, height: usize) -> Self {
        Heatmap {
            width,
            height,
            values: vec![0.0; width * height],
        }
    }

    /// Wraps raw values, e.g. a network prediction map.
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Option<Self> {
        (values.len() == width * height).then_some(Heatmap {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// Pixels whose value is exactly 1.
    pub fn peaks(&self) -> Vec<Pixel> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v == 1.0)
            .map(|(i, _)| ((i % self.width) as i64, (i / self.width) as i64))
            .collect()
    }

    /// Quantizes to 16 bits: `round(65535 * value)`.
    pub fn to_u16(&self) -> Vec<u16> {
        self.values
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatmapOptions {
    /// Drop Gaussian tails below [`HEATMAP_CUTOFF`] and only evaluate pixels
    /// inside the matching radius around each endpoint.
    pub cutoff: bool,
}

impl Default for HeatmapOptions {
    fn default() -> Self {
        HeatmapOptions { cutoff: true }
    }
}

fn cross(o: Pixel, a: Pixel, b: Pixel) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Strict convex hull (no collinear points) of integer points.
fn convex_hull(points: &[Pixel]) -> Vec<Pixel> {
    let mut pts = points.to_vec();
    pts.sort();
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<Pixel> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Pixel> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn yx(p: Pixel) -> (i64, i64) {
    (p.1, p.0)
}

/// The farthest-apart pair of contour points of an opening component.
///
/// Ties are resolved by the smallest pair in `(y, x)` order, with each pair
/// written smaller point first. A single pixel yields `a == b`.
pub fn opening_endpoints(component: &Component) -> EndpointPair {
    let contour = trace_contour(component);
    // diameter endpoints are always strict hull vertices
    let hull = convex_hull(&contour.points);
    let mut best: Option<(i64, (i64, i64), (i64, i64))> = None;
    let mut pair = EndpointPair {
        a: hull[0],
        b: hull[0],
    };
    for i in 0..hull.len() {
        for j in i..hull.len() {
            let (p, q) = if yx(hull[i]) <= yx(hull[j]) {
                (hull[i], hull[j])
            } else {
                (hull[j], hull[i])
            };
            let d2 = (p.0 - q.0).pow(2) + (p.1 - q.1).pow(2);
            let key = (-d2, yx(p), yx(q));
            if best.is_none_or(|b| key < b) {
                best = Some(key);
                pair = EndpointPair { a: p, b: q };
            }
        }
    }
    pair
}

/// Max-combined Gaussian bumps around `endpoints` for one beta.
pub fn heatmap_single(
    endpoints: &[Pixel],
    beta: f64,
    width: usize,
    height: usize,
) -> Result<Heatmap, HeatmapError> {
    heatmap_single_with(endpoints, beta, width, height, HeatmapOptions::default())
}

pub fn heatmap_single_with(
    endpoints: &[Pixel],
    beta: f64,
    width: usize,
    height: usize,
    opts: HeatmapOptions,
) -> Result<Heatmap, HeatmapError> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(HeatmapError::NonPositiveBeta(beta));
    }
    let mut map = Heatmap::zeros(width, height);
    if width == 0 || height == 0 {
        return Ok(map);
    }
    let inv = 1.0 / (beta * beta);
    for &(ex, ey) in endpoints {
        let (x0, y0, x1, y1) = if opts.cutoff {
            let r = (beta * (4.0 * std::f64::consts::LN_10).sqrt()).ceil() as i64;
            (ex - r, ey - r, ex + r, ey + r)
        } else {
            (0, 0, width as i64 - 1, height as i64 - 1)
        };
        let (x0, y0) = (x0.max(0), y0.max(0));
        let (x1, y1) = (x1.min(width as i64 - 1), y1.min(height as i64 - 1));
        for y in y0..=y1 {
            for x in x0..=x1 {
                let d2 = ((x - ex).pow(2) + (y - ey).pow(2)) as f64;
                let v = (-d2 * inv).exp();
                if opts.cutoff && v < HEATMAP_CUTOFF {
                    continue;
                }
                let slot = &mut map.values[y as usize * width + x as usize];
                if v > *slot {
                    *slot = v;
                }
            }
        }
    }
    Ok(map)
}

/// Mean of [`heatmap_single`] over every beta in the set.
pub fn heatmap_average(
    endpoints: &[Pixel],
    betas: &BetaSet,
    width: usize,
    height: usize,
) -> Result<Heatmap, HeatmapError> {
    heatmap_average_with(endpoints, betas, width, height, HeatmapOptions::default())
}

pub fn heatmap_average_with(
    endpoints: &[Pixel],
    betas: &BetaSet,
    width: usize,
    height: usize,
    opts: HeatmapOptions,
) -> Result<Heatmap, HeatmapError> {
    let mut acc = Heatmap::zeros(width, height);
    for &beta in betas.betas() {
        let single = heatmap_single_with(endpoints, beta, width, height, opts)?;
        for (a, v) in acc.values.iter_mut().zip(single.values) {
            *a += v;
        }
    }
    let n = betas.betas().len() as f64;
    for a in &mut acc.values {
        *a /= n;
    }
    Ok(acc)
}

/// Mean over opening classes of the per-pixel mean squared difference.
pub fn mhr_loss(
    predictions: &BTreeMap<ClassId, Heatmap>,
    targets: &BTreeMap<ClassId, Heatmap>,
) -> Result<f64, HeatmapError> {
    if predictions.is_empty() || targets.is_empty() {
        return Err(HeatmapError::EmptyClassSet);
    }
    if !predictions.keys().eq(targets.keys()) {
        return Err(HeatmapError::ClassSetMismatch);
    }
    let mut total = 0.0;
    for (class, pred) in predictions {
        let target = &targets[class];
        if pred.width != target.width || pred.height != target.height {
            return Err(HeatmapError::DimensionMismatch {
                class: *class,
                want_w: target.width,
                want_h: target.height,
                got_w: pred.width,
                got_h: pred.height,
            });
        }
        let n = pred.values.len().max(1) as f64;
        let sq: f64 = pred
            .values
            .iter()
            .zip(&target.values)
            .map(|(p, t)| (p - t) * (p - t))
            .sum();
        total += sq / n;
    }
    Ok(total / predictions.len() as f64)
}

/// Heatmap targets for every opening class of a mask. Classes with no pixels
/// get all-zero maps.
pub fn opening_heatmaps(
    mask: &SegMask,
    betas: &BetaSet,
) -> Result<BTreeMap<ClassId, Heatmap>, HeatmapError> {
    let openings: Vec<ClassId> = ClassId::structural().filter(|c| c.is_opening()).collect();
    openings
        .par_iter()
        .map(|&class| {
            let binary = joint_mask(mask, &[class]).expect("non-empty class set");
            let mut endpoints = Vec::new();
            for comp in connected_components(&binary) {
                let pair = opening_endpoints(&comp);
                endpoints.push(pair.a);
                if pair.b != pair.a {
                    endpoints.push(pair.b);
                }
            }
            let map = heatmap_average(&endpoints, betas, mask.width(), mask.height())?;
            Ok((class, map))
        })
        .collect()
}

/// 16-bit grayscale PNG bytes.
pub fn encode_heatmap_png(map: &Heatmap) -> Result<Vec<u8>, HeatmapError> {
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(map.width as u32, map.height as u32, map.to_u16())
            .expect("buffer size matches dimensions");
    let mut out = std::io::Cursor::new(Vec::new());
    buf.write_to(&mut out, image::ImageFormat::Png)?;
    Ok(out.into_inner())
}

/// Contents of the `.meta` sidecar.
pub fn heatmap_meta(betas: &BetaSet) -> String {
    format!("betas={betas}\nscale=65535\n")
}

/// Writes a 16-bit grayscale PNG and a `.meta` sidecar holding the beta set.
pub fn save_heatmap(path: &Path, map: &Heatmap, betas: &BetaSet) -> Result<(), HeatmapError> {
    std::fs::write(path, encode_heatmap_png(map)?)?;
    std::fs::write(path.with_extension("meta"), heatmap_meta(betas))?;
    Ok(())
}

pub fn load_heatmap(path: &Path) -> Result<Heatmap, HeatmapError> {
    let img = image::open(path)?.to_luma16();
    let (w, h) = img.dimensions();
    let values = img.as_raw().iter().map(|v| *v as f64 / 65535.0).collect();
    Ok(Heatmap {
        width: w as usize,
        height: h as usize,
        values,
    })
}
