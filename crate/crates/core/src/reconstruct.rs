//! Extrusion of class-tagged polygons into a triangle mesh, plus OBJ export.
//!
//! Image coordinates (y down, pixels) become world coordinates
//! `(x * s, -y * s, z)` in meters.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::Range;

use rayon::prelude::*;
use thiserror::Error;

use crate::config::{parse_entries, ConfigError, Entry};
use crate::geom::{is_self_intersecting, signed_area, Point};
use crate::mask_io::ClassId;
use crate::vectorize::{Polygon, PolygonSet};

#[derive(Debug, Error)]
pub enum ReconstructError {
    #[error("polygon {0} is self-intersecting")]
    SelfIntersectingPolygon(usize),
    #[error("polygon {0} is degenerate")]
    DegeneratePolygon(usize),
    #[error("invalid height profile: {0}")]
    InvalidProfile(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Level {
    pub base: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeightProfile {
    levels: [Level; ClassId::COUNT],
    /// Meters per pixel.
    pub pixel_scale: f64,
}

impl Default for HeightProfile {
    fn default() -> Self {
        let l = |base, height| Level { base, height };
        HeightProfile {
            levels: [
                l(0.0, 2.5), // background polygons are treated as walls
                l(0.0, 2.5),
                l(0.0, 2.5),
                l(0.0, 1.1),
                l(0.0, 2.1),
                l(0.0, 2.1),
                l(0.9, 1.2),
                l(0.0, 3.0),
            ],
            pixel_scale: 0.01,
        }
    }
}

impl HeightProfile {
    pub fn level(&self, class: ClassId) -> Level {
        self.levels[class.index()]
    }

    pub fn set_level(&mut self, class: ClassId, level: Level) {
        self.levels[class.index()] = level;
    }

    pub fn validate(&self) -> Result<(), ReconstructError> {
        if !(self.pixel_scale > 0.0 && self.pixel_scale.is_finite()) {
            return Err(ReconstructError::InvalidProfile(format!(
                "pixel_scale must be positive, got {}",
                self.pixel_scale
            )));
        }
        for c in ClassId::all() {
            let Level { base, height } = self.level(c);
            if !(height >= 0.0 && height.is_finite() && base.is_finite()) {
                return Err(ReconstructError::InvalidProfile(format!(
                    "{}: base {base}, height {height}",
                    c.slug()
                )));
            }
        }
        Ok(())
    }

    /// Applies one `pixel_scale=`, `<class>.base=` or `<class>.height=`
    /// entry, with classes named by slug (`glass_wall`). Returns false for
    /// keys it does not own.
    pub fn apply(&mut self, e: &Entry) -> Result<bool, ConfigError> {
        if e.key == "pixel_scale" {
            self.pixel_scale = e.parse()?;
            return Ok(true);
        }
        let Some((slug, field)) = e.key.split_once('.') else {
            return Ok(false);
        };
        let Some(class) = ClassId::from_slug(slug) else {
            return Ok(false);
        };
        let v: f64 = e.parse()?;
        let level = &mut self.levels[class.index()];
        match field {
            "base" => level.base = v,
            "height" => level.height = v,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn from_config(text: &str) -> Result<Self, ReconstructError> {
        let mut p = HeightProfile::default();
        for e in parse_entries(text)? {
            if !p.apply(&e)? {
                return Err(e.unknown().into());
            }
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Mesh {
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[usize; 3]>,
    /// Face index ranges per class, in face order.
    pub groups: BTreeMap<ClassId, Vec<Range<usize>>>,
}

impl Mesh {
    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    /// Signed enclosed volume; positive for outward-facing closed surfaces.
    pub fn volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                let [a, b, c] = f.map(|i| self.vertices[i]);
                (a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
                    + a[2] * (b[0] * c[1] - b[1] * c[0]))
                    / 6.0
            })
            .sum()
    }

    fn append(&mut self, class: ClassId, prism: Prism) {
        let offset = self.vertices.len();
        let start = self.faces.len();
        self.vertices.extend(prism.vertices);
        self.faces
            .extend(prism.faces.into_iter().map(|f| f.map(|i| i + offset)));
        let ranges = self.groups.entry(class).or_default();
        match ranges.last_mut() {
            Some(r) if r.end == start => r.end = self.faces.len(),
            _ => ranges.push(start..self.faces.len()),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ExtrudeOptions {
    /// Fail on the first bad polygon instead of skipping it.
    pub strict: bool,
}

#[derive(Debug, Default)]
pub struct Extrusion {
    pub mesh: Mesh,
    /// Polygons that were skipped, with the reason.
    pub skipped: Vec<ReconstructError>,
}

struct Prism {
    vertices: Vec<[f64; 3]>,
    faces: Vec<[usize; 3]>,
}

fn drop_collinear(mut ring: Vec<Point>) -> Vec<Point> {
    loop {
        ring.dedup();
        while ring.len() > 1 && ring.first() == ring.last() {
            ring.pop();
        }
        let n = ring.len();
        if n < 3 {
            return ring;
        }
        let hit = (0..n).find(|&i| {
            let (a, b, c) = (ring[(i + n - 1) % n], ring[i], ring[(i + 1) % n]);
            (b - a).cross(c - b) == 0.0
        });
        match hit {
            Some(i) => {
                ring.remove(i);
            }
            None => return ring,
        }
    }
}

fn in_triangle(p: Point, a: Point, b: Point, c: Point) -> bool {
    (b - a).cross(p - a) >= 0.0 && (c - b).cross(p - b) >= 0.0 && (a - c).cross(p - c) >= 0.0
}

/// Ear clipping of a counter-clockwise simple ring into `n - 2` triangles.
pub fn triangulate(ring: &[Point]) -> Vec<[usize; 3]> {
    let mut idx: Vec<usize> = (0..ring.len()).collect();
    let mut out = Vec::with_capacity(ring.len().saturating_sub(2));
    while idx.len() > 3 {
        let n = idx.len();
        let is_ear = |k: usize| {
            let (ia, ib, ic) = (idx[(k + n - 1) % n], idx[k], idx[(k + 1) % n]);
            let (a, b, c) = (ring[ia], ring[ib], ring[ic]);
            if (b - a).cross(c - b) <= 0.0 {
                return false;
            }
            !idx.iter().any(|&j| {
                let p = ring[j];
                j != ia && j != ib && j != ic && p != a && p != b && p != c && in_triangle(p, a, b, c)
            })
        };
        // numerically stuck rings fall back to the most convex corner
        let k = (0..n).find(|&k| is_ear(k)).unwrap_or_else(|| {
            (0..n)
                .max_by(|&x, &y| {
                    let cr = |k: usize| {
                        let (a, b, c) = (ring[idx[(k + n - 1) % n]], ring[idx[k]], ring[idx[(k + 1) % n]]);
                        (b - a).cross(c - b)
                    };
                    cr(x).total_cmp(&cr(y))
                })
                .unwrap()
        });
        out.push([idx[(k + n - 1) % n], idx[k], idx[(k + 1) % n]]);
        idx.remove(k);
    }
    if idx.len() == 3 {
        out.push([idx[0], idx[1], idx[2]]);
    }
    out
}

fn prism(index: usize, poly: &Polygon, profile: &HeightProfile) -> Result<Option<Prism>, ReconstructError> {
    let Level { base, height } = profile.level(poly.class);
    if height == 0.0 {
        return Ok(None);
    }
    let s = profile.pixel_scale;
    let mut ring: Vec<Point> = poly.vertices.iter().map(|v| Point::new(v.x * s, -v.y * s)).collect();
    ring = drop_collinear(ring);
    if ring.len() >= 3 && is_self_intersecting(&ring) {
        return Err(ReconstructError::SelfIntersectingPolygon(index));
    }
    if ring.len() < 3 || signed_area(&ring) == 0.0 {
        return Err(ReconstructError::DegeneratePolygon(index));
    }
    if signed_area(&ring) < 0.0 {
        ring.reverse();
    }
    let n = ring.len();
    let top = base + height;
    let mut vertices = Vec::with_capacity(2 * n);
    vertices.extend(ring.iter().map(|p| [p.x, p.y, base]));
    vertices.extend(ring.iter().map(|p| [p.x, p.y, top]));
    let cap = triangulate(&ring);
    let mut faces = Vec::with_capacity(2 * cap.len() + 2 * n);
    faces.extend(cap.iter().map(|&[a, b, c]| [a, c, b]));
    faces.extend(cap.iter().map(|&[a, b, c]| [a + n, b + n, c + n]));
    for i in 0..n {
        let j = (i + 1) % n;
        faces.push([i, j, j + n]);
        faces.push([i, j + n, i + n]);
    }
    Ok(Some(Prism { vertices, faces }))
}

/// One prism per polygon, bottom at the class base and top at base + height.
pub fn extrude(
    set: &PolygonSet,
    profile: &HeightProfile,
    options: &ExtrudeOptions,
) -> Result<Extrusion, ReconstructError> {
    profile.validate()?;
    let prisms: Vec<_> = set
        .polygons
        .par_iter()
        .enumerate()
        .map(|(i, p)| prism(i, p, profile))
        .collect();
    let mut out = Extrusion::default();
    for (poly, result) in set.polygons.iter().zip(prisms) {
        match result {
            Ok(Some(p)) => out.mesh.append(poly.class, p),
            Ok(None) => {}
            Err(e) if options.strict => return Err(e),
            Err(e) => out.skipped.push(e),
        }
    }
    Ok(out)
}

fn group_name(class: ClassId) -> String {
    class.name().replace(' ', "_")
}

/// Wavefront OBJ text: vertices at four decimals, one `g` block per class.
pub fn export_obj(mesh: &Mesh) -> Vec<u8> {
    let mut out = String::from("# planvec mesh\n");
    for v in &mesh.vertices {
        writeln!(out, "v {:.4} {:.4} {:.4}", v[0], v[1], v[2]).unwrap();
    }
    for (class, ranges) in &mesh.groups {
        writeln!(out, "g {}", group_name(*class)).unwrap();
        for r in ranges {
            for f in &mesh.faces[r.clone()] {
                writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).unwrap();
            }
        }
    }
    out.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn poly(pts: &[(f64, f64)], class: ClassId) -> Polygon {
        Polygon::new(pts.iter().map(|&(x, y)| Point::new(x, y)).collect(), class)
    }

    fn unit_profile() -> HeightProfile {
        HeightProfile {
            pixel_scale: 1.0,
            ..HeightProfile::default()
        }
    }

    fn edge_counts(mesh: &Mesh) -> HashMap<(usize, usize), i32> {
        // directed edge count: +1 for (a,b), -1 for (b,a); closed oriented surface sums to zero
        let mut m = HashMap::new();
        for f in &mesh.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                *m.entry(key).or_insert(0) += if a < b { 1 } else { -1 };
            }
        }
        m
    }

    fn assert_watertight(mesh: &Mesh) {
        let mut undirected: HashMap<(usize, usize), usize> = HashMap::new();
        for f in &mesh.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *undirected.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        assert!(undirected.values().all(|&c| c == 2));
        assert!(edge_counts(mesh).values().all(|&c| c == 0));
    }

    #[test]
    fn unit_square_prism() {
        let set = PolygonSet {
            polygons: vec![poly(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)], ClassId::WALL)],
        };
        let m = extrude(&set, &unit_profile(), &ExtrudeOptions::default()).unwrap().mesh;
        assert_eq!(m.vertices.len(), 8);
        assert_eq!(m.faces.len(), 12);
        assert_watertight(&m);
        assert!((m.volume() - 2.5).abs() < 1e-12);
        assert_eq!(m.groups[&ClassId::WALL], vec![0..12]);
    }

    #[test]
    fn empty_set_gives_empty_mesh() {
        let m = extrude(&PolygonSet::default(), &HeightProfile::default(), &ExtrudeOptions::default())
            .unwrap()
            .mesh;
        assert!(m.is_empty());
        assert_eq!(String::from_utf8(export_obj(&m)).unwrap(), "# planvec mesh\n");
    }

    #[test]
    fn l_shape_caps() {
        let l = poly(
            &[(0.0, 0.0), (4.0, 0.0), (4.0, 1.0), (1.0, 1.0), (1.0, 3.0), (0.0, 3.0)],
            ClassId::WALL,
        );
        let area = l.area();
        let m = extrude(&PolygonSet { polygons: vec![l] }, &unit_profile(), &ExtrudeOptions::default())
            .unwrap()
            .mesh;
        assert_eq!(m.vertices.len(), 12);
        // 4 per cap, 2 per side quad
        assert_eq!(m.faces.len(), 4 + 4 + 12);
        assert_watertight(&m);
        assert!((m.volume() - area * 2.5).abs() < 1e-9);
    }

    #[test]
    fn triangulation_covers_area() {
        let ring: Vec<Point> = [(0.0, 0.0), (6.0, 0.0), (6.0, 5.0), (3.0, 2.0), (0.0, 5.0)]
            .iter()
            .map(|&(x, y)| Point::new(x, y))
            .collect();
        let tris = triangulate(&ring);
        assert_eq!(tris.len(), 3);
        let total: f64 = tris
            .iter()
            .map(|t| signed_area(&[ring[t[0]], ring[t[1]], ring[t[2]]]))
            .sum();
        assert!((total - signed_area(&ring)).abs() < 1e-12);
        assert!(tris
            .iter()
            .all(|t| signed_area(&[ring[t[0]], ring[t[1]], ring[t[2]]]) > 0.0));
    }

    #[test]
    fn z_range_and_scale() {
        let profile = HeightProfile::default();
        let set = PolygonSet {
            polygons: vec![poly(&[(0.0, 0.0), (100.0, 0.0), (100.0, 50.0), (0.0, 50.0)], ClassId::WINDOW)],
        };
        let m = extrude(&set, &profile, &ExtrudeOptions::default()).unwrap().mesh;
        let zs: Vec<f64> = m.vertices.iter().map(|v| v[2]).collect();
        assert_eq!(zs.iter().cloned().fold(f64::INFINITY, f64::min), 0.9);
        assert!((zs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - 2.1).abs() < 1e-12);
        assert!((m.volume() - 1.0 * 0.5 * 1.2).abs() < 1e-9);
        assert!(m.vertices.iter().all(|v| v[1] <= 0.0));
    }

    #[test]
    fn self_intersecting_skipped_or_fatal() {
        let bow = Polygon {
            vertices: [(0.0, 0.0), (2.0, 2.0), (2.0, 0.0), (0.0, 2.0)]
                .iter()
                .map(|&(x, y)| Point::new(x, y))
                .collect(),
            class: ClassId::WALL,
            fallback: false,
        };
        let good = poly(&[(5.0, 0.0), (6.0, 0.0), (6.0, 1.0)], ClassId::DOOR);
        let set = PolygonSet { polygons: vec![bow, good] };
        let out = extrude(&set, &unit_profile(), &ExtrudeOptions::default()).unwrap();
        assert!(matches!(out.skipped[..], [ReconstructError::SelfIntersectingPolygon(0)]));
        assert_eq!(out.mesh.faces.len(), 8);
        assert!(matches!(
            extrude(&set, &unit_profile(), &ExtrudeOptions { strict: true }),
            Err(ReconstructError::SelfIntersectingPolygon(0))
        ));
    }

    #[test]
    fn stairs_tallest_by_default() {
        let p = HeightProfile::default();
        let stairs = p.level(ClassId::STAIRS);
        for c in ClassId::all().filter(|c| *c != ClassId::STAIRS) {
            let l = p.level(c);
            assert!(stairs.height > l.height, "{c}");
        }
    }

    #[test]
    fn profile_config() {
        let p = HeightProfile::from_config("pixel_scale=0.02\nwall.height = 3\nsliding_door.base=0.1\n").unwrap();
        assert_eq!(p.pixel_scale, 0.02);
        assert_eq!(p.level(ClassId::WALL).height, 3.0);
        assert_eq!(p.level(ClassId::SLIDING_DOOR).base, 0.1);
        assert!(HeightProfile::from_config("roof.height=1").is_err());
        assert!(HeightProfile::from_config("wall.colour=1").is_err());
        assert!(HeightProfile::from_config("wall.height=-1").is_err());
        assert!(HeightProfile::from_config("pixel_scale=0").is_err());
    }

    #[test]
    fn obj_groups_and_determinism() {
        let set = PolygonSet {
            polygons: vec![
                poly(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)], ClassId::GLASS_WALL),
                poly(&[(3.0, 0.0), (4.0, 0.0), (4.0, 1.0)], ClassId::WALL),
                poly(&[(6.0, 0.0), (7.0, 0.0), (7.0, 1.0)], ClassId::GLASS_WALL),
            ],
        };
        let m = extrude(&set, &unit_profile(), &ExtrudeOptions::default()).unwrap().mesh;
        let a = export_obj(&m);
        assert_eq!(a, export_obj(&m.clone()));
        let text = String::from_utf8(a).unwrap();
        let groups: Vec<&str> = text.lines().filter(|l| l.starts_with("g ")).collect();
        assert_eq!(groups, ["g Wall", "g Glass_wall"]);
        assert_eq!(text.lines().filter(|l| l.starts_with("f ")).count(), m.faces.len());
        assert!(!text.contains('\r'));
    }
}
