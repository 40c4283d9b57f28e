//! Seeded geometric augmentation of image/mask pairs.
//!
//! One transform is sampled per call and applied identically to both
//! rasters: flips, a quarter-turn rotation, a crop, then a rescale.
//! Masks are always resampled nearest-neighbour.

use image::{imageops, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::{parse_entries, ConfigError, Entry};
use crate::mask_io::{ClassId, SegMask};

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("image is {0}x{1} but mask is {2}x{3}")]
    DimensionMismatch(u32, u32, usize, usize),
    #[error("transform would produce an empty {0}x{1} raster")]
    EmptyCrop(usize, usize),
    #[error("invalid augment spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Rotation {
    R0,
    R90,
    R180,
    R270,
}

impl Rotation {
    pub fn degrees(self) -> u16 {
        match self {
            Rotation::R0 => 0,
            Rotation::R90 => 90,
            Rotation::R180 => 180,
            Rotation::R270 => 270,
        }
    }

    pub fn from_degrees(d: u16) -> Option<Rotation> {
        match d {
            0 => Some(Rotation::R0),
            90 => Some(Rotation::R90),
            180 => Some(Rotation::R180),
            270 => Some(Rotation::R270),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentSpec {
    pub horizontal_flip: bool,
    pub vertical_flip: bool,
    /// Quarter turns that may be drawn besides no rotation.
    pub rotations: Vec<Rotation>,
    /// Kept fraction of each dimension.
    pub crop: Option<(f64, f64)>,
    pub scale: Option<(f64, f64)>,
    pub seed: u64,
}

impl Default for AugmentSpec {
    /// The identity spec.
    fn default() -> Self {
        AugmentSpec {
            horizontal_flip: false,
            vertical_flip: false,
            rotations: Vec::new(),
            crop: None,
            scale: None,
            seed: 0,
        }
    }
}

fn parse_range(e: &Entry) -> Result<Option<(f64, f64)>, ConfigError> {
    if e.value == "none" || e.value.is_empty() {
        return Ok(None);
    }
    let parts: Vec<&str> = e.value.split(',').map(str::trim).collect();
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| e.invalid("expected min,max"))?;
    match nums[..] {
        [v] => Ok(Some((v, v))),
        [a, b] => Ok(Some((a, b))),
        _ => Err(e.invalid("expected min,max")),
    }
}

impl AugmentSpec {
    pub fn validate(&self) -> Result<(), AugmentError> {
        if let Some((a, b)) = self.crop {
            if !(a > 0.0 && a <= b && b <= 1.0) {
                return Err(AugmentError::InvalidSpec(format!("crop range {a},{b} outside (0,1]")));
            }
        }
        if let Some((a, b)) = self.scale {
            if !(a > 0.0 && a <= b && b.is_finite()) {
                return Err(AugmentError::InvalidSpec(format!("scale range {a},{b} must be positive")));
            }
        }
        Ok(())
    }

    /// Keys: `flips` (horizontal, vertical, none), `rotations` (90,180,270),
    /// `crop` and `scale` (`min,max` or `none`), `seed`.
    pub fn from_config(text: &str) -> Result<Self, AugmentError> {
        let mut spec = AugmentSpec::default();
        for e in parse_entries(text)? {
            match e.key.as_str() {
                "flips" => {
                    for tok in e.value.split(',').map(str::trim).filter(|t| !t.is_empty()) {
                        match tok {
                            "horizontal" => spec.horizontal_flip = true,
                            "vertical" => spec.vertical_flip = true,
                            "none" => {}
                            _ => return Err(e.invalid("expected horizontal, vertical or none").into()),
                        }
                    }
                }
                "rotations" => {
                    for tok in e.value.split(',').map(str::trim).filter(|t| !t.is_empty() && *t != "none") {
                        let r = tok
                            .parse::<u16>()
                            .ok()
                            .and_then(Rotation::from_degrees)
                            .filter(|r| *r != Rotation::R0)
                            .ok_or_else(|| e.invalid("rotations must be 90, 180 or 270"))?;
                        if !spec.rotations.contains(&r) {
                            spec.rotations.push(r);
                        }
                    }
                    spec.rotations.sort();
                }
                "crop" => spec.crop = parse_range(&e)?,
                "scale" => spec.scale = parse_range(&e)?,
                "seed" => spec.seed = e.parse()?,
                _ => return Err(e.unknown().into()),
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    /// Draws the transform for an input of the given size.
    pub fn sample(&self, width: usize, height: usize) -> Result<Transform, AugmentError> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let horizontal_flip = self.horizontal_flip && rng.random_bool(0.5);
        let vertical_flip = self.vertical_flip && rng.random_bool(0.5);
        let rotation = if self.rotations.is_empty() {
            Rotation::R0
        } else {
            let k = rng.random_range(0..=self.rotations.len());
            if k == 0 {
                Rotation::R0
            } else {
                self.rotations[k - 1]
            }
        };
        let (mut w, mut h) = match rotation {
            Rotation::R90 | Rotation::R270 => (height, width),
            _ => (width, height),
        };
        let crop = match self.crop {
            Some((lo, hi)) => {
                let fx = rng.random_range(lo..=hi);
                let fy = rng.random_range(lo..=hi);
                let (cw, ch) = ((fx * w as f64).round() as usize, (fy * h as f64).round() as usize);
                if cw == 0 || ch == 0 {
                    return Err(AugmentError::EmptyCrop(cw, ch));
                }
                let x = rng.random_range(0..=w - cw);
                let y = rng.random_range(0..=h - ch);
                (w, h) = (cw, ch);
                Some(Crop { x, y, width: cw, height: ch })
            }
            None => None,
        };
        let scale = match self.scale {
            Some((lo, hi)) => {
                let s = rng.random_range(lo..=hi);
                let (sw, sh) = ((s * w as f64).round() as usize, (s * h as f64).round() as usize);
                if sw == 0 || sh == 0 {
                    return Err(AugmentError::EmptyCrop(sw, sh));
                }
                Some((sw, sh))
            }
            None => None,
        };
        Ok(Transform {
            horizontal_flip,
            vertical_flip,
            rotation,
            crop,
            scale,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Crop {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

/// A concrete transform, applied in field order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transform {
    pub horizontal_flip: bool,
    pub vertical_flip: bool,
    /// Clockwise.
    pub rotation: Rotation,
    pub crop: Option<Crop>,
    /// Output size after rescaling.
    pub scale: Option<(usize, usize)>,
}

impl Transform {
    pub const IDENTITY: Transform = Transform {
        horizontal_flip: false,
        vertical_flip: false,
        rotation: Rotation::R0,
        crop: None,
        scale: None,
    };

    /// Applies the geometric part to a row-major grid.
    fn apply_grid<T: Copy>(&self, w: usize, h: usize, data: &[T]) -> (usize, usize, Vec<T>) {
        let mut g = (w, h, data.to_vec());
        if self.horizontal_flip {
            g = remap(g, false, |x, y, w, _| (w - 1 - x, y));
        }
        if self.vertical_flip {
            g = remap(g, false, |x, y, _, h| (x, h - 1 - y));
        }
        g = match self.rotation {
            Rotation::R0 => g,
            // output (x, y) samples input at these coordinates
            Rotation::R90 => remap(g, true, |x, y, _, h| (y, h - 1 - x)),
            Rotation::R180 => remap(g, false, |x, y, w, h| (w - 1 - x, h - 1 - y)),
            Rotation::R270 => remap(g, true, |x, y, w, _| (w - 1 - y, x)),
        };
        if let Some(c) = self.crop {
            let (w, _, d) = g;
            let mut out = Vec::with_capacity(c.width * c.height);
            for y in c.y..c.y + c.height {
                out.extend_from_slice(&d[y * w + c.x..y * w + c.x + c.width]);
            }
            g = (c.width, c.height, out);
        }
        g
    }

    pub fn apply_mask(&self, mask: &SegMask) -> SegMask {
        let (w, h, d) = self.apply_grid(mask.width(), mask.height(), mask.data());
        let (w, h, d) = match self.scale {
            Some((sw, sh)) => (sw, sh, nearest(w, h, &d, sw, sh)),
            None => (w, h, d),
        };
        SegMask::from_data(w, h, d).expect("grid size is consistent")
    }

    pub fn apply_image(&self, image: &RgbImage) -> RgbImage {
        let px: Vec<[u8; 3]> = image.pixels().map(|p| p.0).collect();
        let (w, h, d) = self.apply_grid(image.width() as usize, image.height() as usize, &px);
        let img = RgbImage::from_raw(w as u32, h as u32, d.concat()).expect("grid size is consistent");
        match self.scale {
            Some((sw, sh)) => imageops::resize(&img, sw as u32, sh as u32, imageops::FilterType::Triangle),
            None => img,
        }
    }
}

/// Output pixel `(x, y)` takes input pixel `src(x, y, w, h)`.
fn remap<T: Copy>(
    (w, h, d): (usize, usize, Vec<T>),
    transpose: bool,
    src: impl Fn(usize, usize, usize, usize) -> (usize, usize),
) -> (usize, usize, Vec<T>) {
    let (nw, nh) = if transpose { (h, w) } else { (w, h) };
    let mut out = Vec::with_capacity(d.len());
    for y in 0..nh {
        for x in 0..nw {
            let (sx, sy) = src(x, y, w, h);
            out.push(d[sy * w + sx]);
        }
    }
    (nw, nh, out)
}

fn nearest<T: Copy>(w: usize, h: usize, d: &[T], nw: usize, nh: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(nw * nh);
    for y in 0..nh {
        let sy = (((y as f64 + 0.5) * h as f64 / nh as f64) as usize).min(h - 1);
        for x in 0..nw {
            let sx = (((x as f64 + 0.5) * w as f64 / nw as f64) as usize).min(w - 1);
            out.push(d[sy * w + sx]);
        }
    }
    out
}

/// Samples one transform from `spec` and applies it to both rasters.
pub fn augment_pair(
    image: &RgbImage,
    mask: &SegMask,
    spec: &AugmentSpec,
) -> Result<(RgbImage, SegMask, Transform), AugmentError> {
    if (image.width() as usize, image.height() as usize) != (mask.width(), mask.height()) {
        return Err(AugmentError::DimensionMismatch(
            image.width(),
            image.height(),
            mask.width(),
            mask.height(),
        ));
    }
    let t = spec.sample(mask.width(), mask.height())?;
    Ok((t.apply_image(image), t.apply_mask(mask), t))
}

/// Classes present in `mask`, for checking that resampling adds none.
pub fn classes_present(mask: &SegMask) -> Vec<ClassId> {
    let h = mask.histogram();
    ClassId::all().filter(|c| h[c.index()] > 0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const B: ClassId = ClassId::BACKGROUND;
    const W: ClassId = ClassId::WALL;
    const D: ClassId = ClassId::DOOR;

    fn grid(w: usize, h: usize) -> SegMask {
        let ids: Vec<u8> = (0..w * h).map(|i| (i % 8) as u8).collect();
        SegMask::from_ids(w, h, &ids).unwrap()
    }

    fn image_for(mask: &SegMask) -> RgbImage {
        RgbImage::from_fn(mask.width() as u32, mask.height() as u32, |x, y| {
            image::Rgb([x as u8, y as u8, mask.get(x as usize, y as usize).value()])
        })
    }

    fn only(t: Transform) -> impl Fn(&SegMask) -> SegMask {
        move |m| t.apply_mask(m)
    }

    #[test]
    fn identity_spec() {
        let m = grid(5, 3);
        let img = image_for(&m);
        let (i2, m2, t) = augment_pair(&img, &m, &AugmentSpec { seed: 99, ..Default::default() }).unwrap();
        assert_eq!(t, Transform::IDENTITY);
        assert_eq!(m2, m);
        assert_eq!(i2, img);
    }

    #[test]
    fn horizontal_flip_example() {
        let m = SegMask::from_data(2, 2, vec![W, B, D, B]).unwrap();
        let f = only(Transform { horizontal_flip: true, ..Transform::IDENTITY });
        assert_eq!(f(&m).data(), &[B, W, B, D]);
        assert_eq!(f(&f(&m)), m);
    }

    #[test]
    fn rotations_compose() {
        let m = grid(4, 3);
        let r = |rot| only(Transform { rotation: rot, ..Transform::IDENTITY });
        let r90 = r(Rotation::R90)(&m);
        assert_eq!((r90.width(), r90.height()), (3, 4));
        // clockwise: top-left goes to top-right
        assert_eq!(r90.get(2, 0), m.get(0, 0));
        assert_eq!(r90.get(0, 0), m.get(0, 2));
        assert_eq!(r(Rotation::R90)(&r90), r(Rotation::R180)(&m));
        assert_eq!(r(Rotation::R270)(&r90), m);
        assert_eq!(r90.histogram(), m.histogram());
    }

    #[test]
    fn same_seed_same_output() {
        let spec = AugmentSpec::from_config(
            "flips=horizontal,vertical\nrotations=90,180,270\ncrop=0.5,0.9\nscale=0.5,2\nseed=7",
        )
        .unwrap();
        let m = grid(17, 11);
        let img = image_for(&m);
        let a = augment_pair(&img, &m, &spec).unwrap();
        let b = augment_pair(&img, &m, &spec).unwrap();
        assert_eq!(a.0.as_raw(), b.0.as_raw());
        assert_eq!(a.1, b.1);
        assert_eq!((a.0.width() as usize, a.0.height() as usize), (a.1.width(), a.1.height()));
    }

    #[test]
    fn crop_and_scale() {
        let m = grid(10, 10);
        let t = Transform {
            crop: Some(Crop { x: 2, y: 3, width: 4, height: 5 }),
            ..Transform::IDENTITY
        };
        let c = t.apply_mask(&m);
        assert_eq!((c.width(), c.height()), (4, 5));
        assert_eq!(c.get(0, 0), m.get(2, 3));
        let s = Transform { scale: Some((8, 10)), ..t }.apply_mask(&m);
        assert_eq!((s.width(), s.height()), (8, 10));
        assert_eq!(s.get(1, 1), m.get(2, 3));
        assert_eq!(s.get(7, 9), m.get(5, 7));
    }

    #[test]
    fn errors() {
        let m = grid(3, 3);
        let img = RgbImage::new(4, 3);
        assert!(matches!(
            augment_pair(&img, &m, &AugmentSpec::default()),
            Err(AugmentError::DimensionMismatch(..))
        ));
        let tiny = AugmentSpec { crop: Some((0.1, 0.1)), ..Default::default() };
        assert!(matches!(
            augment_pair(&image_for(&m), &m, &tiny),
            Err(AugmentError::EmptyCrop(..))
        ));
        assert!(AugmentSpec::from_config("crop=0,1").is_err());
        assert!(AugmentSpec::from_config("rotations=45").is_err());
        assert!(AugmentSpec::from_config("scale=-1,2").is_err());
        assert!(AugmentSpec::from_config("brightness=2").is_err());
    }
}
