//! Structural class system and conversion between color rasters and class masks.

use std::fmt;
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageBuffer, Luma, Rgb, RgbImage};
use thiserror::Error;

/// Per-channel Chebyshev tolerance used when decoding color rasters.
pub const COLOR_TOLERANCE: u8 = 8;

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("pixel ({x}, {y}) color {color:?} is within tolerance of more than one class color")]
    AmbiguousColor { x: u32, y: u32, color: [u8; 3] },
    #[error("pixel ({x}, {y}) color {color:?} does not match any class color")]
    UnknownColor { x: u32, y: u32, color: [u8; 3] },
    #[error("invalid class id {0} (expected 0..=7)")]
    InvalidClassId(u8),
    #[error("class set is empty")]
    EmptyClassSet,
    #[error("mask data length {len} does not match {width}x{height}")]
    DataLength { width: usize, height: usize, len: usize },
    #[error("palette colors for {a} and {b} are not separated by more than twice the tolerance")]
    PaletteOverlap { a: ClassId, b: ClassId },
    #[error("unsupported raster layout: {0}")]
    UnsupportedRaster(String),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

/// One of the eight mask labels: background plus seven structural classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ClassId(u8);

impl ClassId {
    pub const BACKGROUND: ClassId = ClassId(0);
    pub const WALL: ClassId = ClassId(1);
    pub const GLASS_WALL: ClassId = ClassId(2);
    pub const RAILING: ClassId = ClassId(3);
    pub const DOOR: ClassId = ClassId(4);
    pub const SLIDING_DOOR: ClassId = ClassId(5);
    pub const WINDOW: ClassId = ClassId(6);
    pub const STAIRS: ClassId = ClassId(7);

    pub const COUNT: usize = 8;

    pub fn new(value: u8) -> Result<Self, MaskError> {
        if (value as usize) < Self::COUNT {
            Ok(ClassId(value))
        } else {
            Err(MaskError::InvalidClassId(value))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// All ids in ascending order, background first.
    pub fn all() -> impl Iterator<Item = ClassId> {
        (0..Self::COUNT as u8).map(ClassId)
    }

    /// The seven structural classes (everything except background).
    pub fn structural() -> impl Iterator<Item = ClassId> {
        (1..Self::COUNT as u8).map(ClassId)
    }

    pub fn info(self) -> &'static ClassInfo {
        &PALETTE[self.index()]
    }

    pub fn name(self) -> &'static str {
        self.info().name
    }

    /// Lowercase identifier used in config keys and file names (`sliding_door`).
    pub fn slug(self) -> &'static str {
        SLUGS[self.index()]
    }

    pub fn from_slug(slug: &str) -> Option<ClassId> {
        SLUGS.iter().position(|s| *s == slug).map(|i| ClassId(i as u8))
    }

    pub fn is_boundary(self) -> bool {
        self.info().is_boundary
    }

    pub fn is_opening(self) -> bool {
        self.info().is_opening
    }
}

impl TryFrom<u8> for ClassId {
    type Error = MaskError;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        ClassId::new(value)
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassInfo {
    pub id: ClassId,
    pub name: &'static str,
    pub color: [u8; 3],
    pub is_boundary: bool,
    pub is_opening: bool,
}

const SLUGS: [&str; ClassId::COUNT] = [
    "background",
    "wall",
    "glass_wall",
    "railing",
    "door",
    "sliding_door",
    "window",
    "stairs",
];

static PALETTE: [ClassInfo; ClassId::COUNT] = [
    ClassInfo {
        id: ClassId(0),
        name: "Background",
        color: [255, 255, 255],
        is_boundary: false,
        is_opening: false,
    },
    ClassInfo {
        id: ClassId(1),
        name: "Wall",
        color: [0, 0, 0],
        is_boundary: true,
        is_opening: false,
    },
    ClassInfo {
        id: ClassId(2),
        name: "Glass wall",
        color: [230, 25, 75],
        is_boundary: true,
        is_opening: false,
    },
    ClassInfo {
        id: ClassId(3),
        name: "Railing",
        color: [60, 180, 75],
        is_boundary: true,
        is_opening: false,
    },
    ClassInfo {
        id: ClassId(4),
        name: "Door",
        color: [255, 225, 25],
        is_boundary: false,
        is_opening: true,
    },
    ClassInfo {
        id: ClassId(5),
        name: "Sliding door",
        color: [0, 130, 200],
        is_boundary: false,
        is_opening: true,
    },
    ClassInfo {
        id: ClassId(6),
        name: "Window",
        color: [245, 130, 48],
        is_boundary: false,
        is_opening: true,
    },
    ClassInfo {
        id: ClassId(7),
        name: "Stairs",
        color: [70, 240, 240],
        is_boundary: false,
        is_opening: false,
    },
];

/// Background plus the seven structural classes, in id order.
pub fn class_palette() -> Vec<ClassInfo> {
    PALETTE.to_vec()
}

fn chebyshev(a: [u8; 3], b: [u8; 3]) -> u8 {
    a.iter().zip(b.iter()).map(|(x, y)| x.abs_diff(*y)).max().unwrap_or(0)
}

/// Class colors used for encoding and decoding. Defaults to the fixed class
/// table; individual colors can be overridden from configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Palette {
    colors: [[u8; 3]; ClassId::COUNT],
    tolerance: u8,
}

impl Default for Palette {
    fn default() -> Self {
        let mut colors = [[0u8; 3]; ClassId::COUNT];
        for (slot, info) in colors.iter_mut().zip(PALETTE.iter()) {
            *slot = info.color;
        }
        Palette {
            colors,
            tolerance: COLOR_TOLERANCE,
        }
    }
}

impl Palette {
    pub fn color(&self, class: ClassId) -> [u8; 3] {
        self.colors[class.index()]
    }

    pub fn tolerance(&self) -> u8 {
        self.tolerance
    }

    /// Replaces one class color. Fails if the new color would make decoding ambiguous.
    pub fn with_color(mut self, class: ClassId, color: [u8; 3]) -> Result<Self, MaskError> {
        self.colors[class.index()] = color;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), MaskError> {
        for a in ClassId::all() {
            for b in ClassId::all().filter(|b| *b > a) {
                if chebyshev(self.color(a), self.color(b)) <= 2 * self.tolerance {
                    return Err(MaskError::PaletteOverlap { a, b });
                }
            }
        }
        Ok(())
    }

    /// Maps a single color to a class, exact matches first.
    pub fn classify(&self, color: [u8; 3]) -> Result<ClassId, ColorMatch> {
        if let Some(i) = self.colors.iter().position(|c| *c == color) {
            return Ok(ClassId(i as u8));
        }
        let mut found = None;
        for (i, c) in self.colors.iter().enumerate() {
            if chebyshev(*c, color) <= self.tolerance {
                if found.is_some() {
                    return Err(ColorMatch::Ambiguous);
                }
                found = Some(ClassId(i as u8));
            }
        }
        found.ok_or(ColorMatch::Unknown)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorMatch {
    Ambiguous,
    Unknown,
}

/// Row-major grid of class ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegMask {
    width: usize,
    height: usize,
    data: Vec<ClassId>,
}

impl SegMask {
    pub fn new(width: usize, height: usize) -> Self {
        SegMask {
            width,
            height,
            data: vec![ClassId::BACKGROUND; width * height],
        }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<ClassId>) -> Result<Self, MaskError> {
        if data.len() != width * height {
            return Err(MaskError::DataLength {
                width,
                height,
                len: data.len(),
            });
        }
        Ok(SegMask {
            width,
            height,
            data,
        })
    }

    /// Builds a mask from raw id values, validating each one.
    pub fn from_ids(width: usize, height: usize, ids: &[u8]) -> Result<Self, MaskError> {
        let data = ids
            .iter()
            .map(|v| ClassId::new(*v))
            .collect::<Result<Vec<_>, _>>()?;
        SegMask::from_data(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[ClassId] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> ClassId {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, class: ClassId) {
        self.data[y * self.width + x] = class;
    }

    /// Number of pixels per class, indexed by id.
    pub fn histogram(&self) -> [usize; ClassId::COUNT] {
        let mut counts = [0usize; ClassId::COUNT];
        for c in &self.data {
            counts[c.index()] += 1;
        }
        counts
    }

    pub fn ids(&self) -> Vec<u8> {
        self.data.iter().map(|c| c.value()).collect()
    }
}

/// Row-major grid of 0/1 values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        BinaryMask {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<u8>) -> Result<Self, MaskError> {
        if data.len() != width * height {
            return Err(MaskError::DataLength {
                width,
                height,
                len: data.len(),
            });
        }
        Ok(BinaryMask {
            width,
            height,
            data: data.into_iter().map(|v| (v != 0) as u8).collect(),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    /// Out-of-range coordinates read as 0.
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.get(x as usize, y as usize)
    }

    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        self.data[y * self.width + x] = on as u8;
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|v| **v != 0).count()
    }
}

pub fn decode_mask(raster: &RgbImage) -> Result<SegMask, MaskError> {
    decode_mask_with(raster, &Palette::default())
}

pub fn decode_mask_with(raster: &RgbImage, palette: &Palette) -> Result<SegMask, MaskError> {
    let (w, h) = raster.dimensions();
    let mut data = Vec::with_capacity((w * h) as usize);
    for (x, y, px) in raster.enumerate_pixels() {
        let color = px.0;
        match palette.classify(color) {
            Ok(c) => data.push(c),
            Err(ColorMatch::Ambiguous) => return Err(MaskError::AmbiguousColor { x, y, color }),
            Err(ColorMatch::Unknown) => return Err(MaskError::UnknownColor { x, y, color }),
        }
    }
    SegMask::from_data(w as usize, h as usize, data)
}

pub fn encode_mask(mask: &SegMask) -> RgbImage {
    encode_mask_with(mask, &Palette::default())
}

pub fn encode_mask_with(mask: &SegMask, palette: &Palette) -> RgbImage {
    ImageBuffer::from_fn(mask.width as u32, mask.height as u32, |x, y| {
        Rgb(palette.color(mask.get(x as usize, y as usize)))
    })
}

/// Single-channel variant storing raw id values.
pub fn encode_id_mask(mask: &SegMask) -> GrayImage {
    ImageBuffer::from_fn(mask.width as u32, mask.height as u32, |x, y| {
        Luma([mask.get(x as usize, y as usize).value()])
    })
}

pub fn decode_id_mask(raster: &GrayImage) -> Result<SegMask, MaskError> {
    let (w, h) = raster.dimensions();
    SegMask::from_ids(w as usize, h as usize, raster.as_raw())
}

/// Union of the given classes as a binary mask.
pub fn joint_mask(mask: &SegMask, classes: &[ClassId]) -> Result<BinaryMask, MaskError> {
    if classes.is_empty() {
        return Err(MaskError::EmptyClassSet);
    }
    let mut member = [false; ClassId::COUNT];
    for c in classes {
        member[c.index()] = true;
    }
    let data = mask.data.iter().map(|c| member[c.index()] as u8).collect();
    Ok(BinaryMask {
        width: mask.width,
        height: mask.height,
        data,
    })
}

/// Reads a mask file. Single-channel 8-bit rasters are read as raw ids,
/// color rasters are decoded through the palette.
pub fn load_mask(path: &Path, palette: &Palette) -> Result<SegMask, MaskError> {
    let img = image::open(path)?;
    match img {
        DynamicImage::ImageLuma8(gray) => decode_id_mask(&gray),
        DynamicImage::ImageRgb8(rgb) => decode_mask_with(&rgb, palette),
        DynamicImage::ImageRgba8(_) | DynamicImage::ImageLumaA8(_) => {
            decode_mask_with(&img.to_rgb8(), palette)
        }
        other => Err(MaskError::UnsupportedRaster(format!(
            "{:?}",
            other.color()
        ))),
    }
}

pub fn save_mask(path: &Path, mask: &SegMask, palette: &Palette) -> Result<(), MaskError> {
    encode_mask_with(mask, palette).save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}
