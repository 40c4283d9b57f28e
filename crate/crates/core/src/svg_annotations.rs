//! Vector floor-plan annotations (SVG) to class masks.
//!
//! Shapes are picked up by the `class` attribute of the shape element or of
//! its nearest enclosing group. Columns become walls, windows are grown by a
//! 3x3 dilation, and overlapping classes are resolved by a fixed drawing
//! order: wall, stairs, railing, door, window (later wins).

use std::fmt;

use thiserror::Error;

use crate::config::{parse_entries, ConfigError};
use crate::geom::{fill_circle, fill_polygon, signed_area, Point};
use crate::mask_io::{ClassId, SegMask};

#[derive(Debug, Error)]
pub enum SvgError {
    #[error("malformed document at {line}:{column}: {msg}")]
    MalformedDocument { line: u32, column: u32, msg: String },
    #[error("unparseable geometry at {line}:{column}: {msg}")]
    UnparseableGeometry { line: u32, column: u32, msg: String },
    #[error("canvas has zero area ({width}x{height})")]
    ZeroAreaCanvas { width: usize, height: usize },
    #[error("non-finite coordinate in shape {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShapeKind {
    Stairs,
    Railing,
    Wall,
    Window,
    Door,
    Column,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 6] = [
        ShapeKind::Stairs,
        ShapeKind::Railing,
        ShapeKind::Wall,
        ShapeKind::Window,
        ShapeKind::Door,
        ShapeKind::Column,
    ];

    /// Compositing priority; higher numbers are painted later.
    pub fn draw_order(self) -> u8 {
        match self {
            ShapeKind::Wall | ShapeKind::Column => 1,
            ShapeKind::Stairs => 2,
            ShapeKind::Railing => 3,
            ShapeKind::Door => 4,
            ShapeKind::Window => 5,
        }
    }

    pub fn class(self) -> ClassId {
        match self {
            ShapeKind::Wall | ShapeKind::Column => ClassId::WALL,
            ShapeKind::Stairs => ClassId::STAIRS,
            ShapeKind::Railing => ClassId::RAILING,
            ShapeKind::Door => ClassId::DOOR,
            ShapeKind::Window => ClassId::WINDOW,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Stairs => "Stairs",
            ShapeKind::Railing => "Railing",
            ShapeKind::Wall => "Wall",
            ShapeKind::Window => "Window",
            ShapeKind::Door => "Door",
            ShapeKind::Column => "Column",
        }
    }

    pub fn from_name(s: &str) -> Option<ShapeKind> {
        ShapeKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    Points(Vec<Point>),
    Circle { center: Point, radius: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedShape {
    pub kind: ShapeKind,
    pub geometry: Geometry,
}

/// Maps `class` attribute tokens to shape kinds.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    entries: Vec<(String, ShapeKind)>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Vocabulary {
            entries: ShapeKind::ALL
                .iter()
                .map(|k| (k.name().to_string(), *k))
                .collect(),
        }
    }
}

impl Vocabulary {
    pub fn empty() -> Self {
        Vocabulary { entries: Vec::new() }
    }

    pub fn insert(&mut self, token: &str, kind: ShapeKind) {
        self.entries.retain(|(t, _)| t != token);
        self.entries.push((token.to_string(), kind));
    }

    /// `token=Kind` lines, added on top of the default vocabulary.
    pub fn from_config(text: &str) -> Result<Self, SvgError> {
        let mut vocab = Vocabulary::default();
        for e in parse_entries(text)? {
            let kind = ShapeKind::from_name(&e.value)
                .ok_or_else(|| e.invalid("expected one of Stairs, Railing, Wall, Window, Door, Column"))?;
            vocab.insert(&e.key, kind);
        }
        Ok(vocab)
    }

    /// First whitespace-separated token of `class` that is in the vocabulary.
    pub fn lookup(&self, class: &str) -> Option<ShapeKind> {
        class.split_whitespace().find_map(|tok| {
            self.entries
                .iter()
                .find(|(t, _)| t == tok)
                .map(|(_, k)| *k)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedAnnotations {
    pub shapes: Vec<AnnotatedShape>,
    /// Shape elements that were not recognized or had unsupported geometry.
    pub skipped: usize,
    /// Root `width`/`height` attributes when present and numeric.
    pub width: Option<f64>,
    pub height: Option<f64>,
}

/// 2x3 affine transform `[a c e; b d f]`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Affine([f64; 6]);

impl Affine {
    const IDENTITY: Affine = Affine([1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);

    fn then(self, inner: Affine) -> Affine {
        // self * inner
        let [a, b, c, d, e, f] = self.0;
        let [a2, b2, c2, d2, e2, f2] = inner.0;
        Affine([
            a * a2 + c * b2,
            b * a2 + d * b2,
            a * c2 + c * d2,
            b * c2 + d * d2,
            a * e2 + c * f2 + e,
            b * e2 + d * f2 + f,
        ])
    }

    fn apply(self, p: Point) -> Point {
        let [a, b, c, d, e, f] = self.0;
        Point::new(a * p.x + c * p.y + e, b * p.x + d * p.y + f)
    }

    fn scale_factor(self) -> f64 {
        let [a, b, c, d, _, _] = self.0;
        (a * d - b * c).abs().sqrt()
    }
}

fn parse_numbers(s: &str) -> Option<Vec<f64>> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().ok())
        .collect()
}

fn parse_transform(s: &str) -> Result<Affine, String> {
    let mut out = Affine::IDENTITY;
    let mut rest = s.trim();
    while !rest.is_empty() {
        let open = rest.find('(').ok_or_else(|| format!("bad transform {s:?}"))?;
        let close = rest.find(')').ok_or_else(|| format!("bad transform {s:?}"))?;
        let name = rest[..open].trim().trim_start_matches(',').trim();
        let args = parse_numbers(&rest[open + 1..close]).ok_or_else(|| format!("bad transform {s:?}"))?;
        let t = match (name, args.as_slice()) {
            ("translate", [tx]) => Affine([1.0, 0.0, 0.0, 1.0, *tx, 0.0]),
            ("translate", [tx, ty]) => Affine([1.0, 0.0, 0.0, 1.0, *tx, *ty]),
            ("scale", [s]) => Affine([*s, 0.0, 0.0, *s, 0.0, 0.0]),
            ("scale", [sx, sy]) => Affine([*sx, 0.0, 0.0, *sy, 0.0, 0.0]),
            ("matrix", [a, b, c, d, e, f]) => Affine([*a, *b, *c, *d, *e, *f]),
            _ => return Err(format!("unsupported transform {name}({:?})", args)),
        };
        out = out.then(t);
        rest = rest[close + 1..].trim();
    }
    Ok(out)
}

const SHAPE_TAGS: [&str; 7] = ["polygon", "polyline", "rect", "circle", "path", "line", "ellipse"];

struct Walker<'a> {
    vocab: &'a Vocabulary,
    doc: &'a roxmltree::Document<'a>,
    out: ParsedAnnotations,
}

impl Walker<'_> {
    fn geometry_error(&self, node: roxmltree::Node, msg: impl Into<String>) -> SvgError {
        let pos = self.doc.text_pos_at(node.range().start);
        SvgError::UnparseableGeometry {
            line: pos.row,
            column: pos.col,
            msg: msg.into(),
        }
    }

    fn attr_f64(&self, node: roxmltree::Node, name: &str) -> Result<f64, SvgError> {
        let raw = node.attribute(name).unwrap_or("0");
        raw.trim()
            .trim_end_matches("px")
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| self.geometry_error(node, format!("bad {name} attribute {raw:?}")))
    }

    fn visit(
        &mut self,
        node: roxmltree::Node,
        transform: Affine,
        inherited: Option<ShapeKind>,
    ) -> Result<(), SvgError> {
        let transform = match node.attribute("transform") {
            Some(t) => transform.then(parse_transform(t).map_err(|m| self.geometry_error(node, m))?),
            None => transform,
        };
        let tag = node.tag_name().name();
        let own = node.attribute("class").and_then(|c| self.vocab.lookup(c));
        if SHAPE_TAGS.contains(&tag) {
            match own.or(inherited) {
                Some(kind) => self.shape(node, tag, kind, transform)?,
                None => self.out.skipped += 1,
            }
            return Ok(());
        }
        let inherited = own.or(inherited);
        for child in node.children().filter(|c| c.is_element()) {
            self.visit(child, transform, inherited)?;
        }
        Ok(())
    }

    fn shape(
        &mut self,
        node: roxmltree::Node,
        tag: &str,
        kind: ShapeKind,
        transform: Affine,
    ) -> Result<(), SvgError> {
        let geometry = match tag {
            "polygon" | "polyline" => {
                let raw = node.attribute("points").unwrap_or("");
                let nums = parse_numbers(raw)
                    .filter(|n| n.len() % 2 == 0 && n.iter().all(|v| v.is_finite()))
                    .ok_or_else(|| self.geometry_error(node, format!("bad points {raw:?}")))?;
                let pts: Vec<Point> = nums.chunks_exact(2).map(|c| Point::new(c[0], c[1])).collect();
                self.closed_ring(node, pts, transform)?
            }
            "rect" => {
                let (x, y) = (self.attr_f64(node, "x")?, self.attr_f64(node, "y")?);
                let (w, h) = (self.attr_f64(node, "width")?, self.attr_f64(node, "height")?);
                let pts = vec![
                    Point::new(x, y),
                    Point::new(x + w, y),
                    Point::new(x + w, y + h),
                    Point::new(x, y + h),
                ];
                self.closed_ring(node, pts, transform)?
            }
            "circle" => {
                if kind != ShapeKind::Column {
                    return Err(self.geometry_error(node, format!("circle geometry on a {kind} shape")));
                }
                let c = Point::new(self.attr_f64(node, "cx")?, self.attr_f64(node, "cy")?);
                let r = self.attr_f64(node, "r")?;
                if !(r > 0.0) {
                    return Err(self.geometry_error(node, "circle radius must be positive"));
                }
                Geometry::Circle {
                    center: transform.apply(c),
                    radius: r * transform.scale_factor(),
                }
            }
            _ => {
                self.out.skipped += 1;
                return Ok(());
            }
        };
        self.out.shapes.push(AnnotatedShape { kind, geometry });
        Ok(())
    }

    fn closed_ring(
        &self,
        node: roxmltree::Node,
        mut pts: Vec<Point>,
        transform: Affine,
    ) -> Result<Geometry, SvgError> {
        if pts.len() > 1 && pts.first() == pts.last() {
            pts.pop();
        }
        if pts.len() < 3 {
            return Err(self.geometry_error(node, "polygon needs at least 3 points"));
        }
        let pts: Vec<Point> = pts.into_iter().map(|p| transform.apply(p)).collect();
        if signed_area(&pts).abs() <= 0.0 {
            return Err(self.geometry_error(node, "polygon has zero area"));
        }
        Ok(Geometry::Points(pts))
    }
}

pub fn parse_annotation(document: &str) -> Result<ParsedAnnotations, SvgError> {
    parse_annotation_with(document, &Vocabulary::default())
}

pub fn parse_annotation_with(
    document: &str,
    vocab: &Vocabulary,
) -> Result<ParsedAnnotations, SvgError> {
    let doc = roxmltree::Document::parse(document).map_err(|e| {
        let pos = e.pos();
        SvgError::MalformedDocument {
            line: pos.row,
            column: pos.col,
            msg: e.to_string(),
        }
    })?;
    let root = doc.root_element();
    let dim = |name: &str| {
        root.attribute(name)
            .and_then(|v| v.trim().trim_end_matches("px").parse::<f64>().ok())
    };
    let (width, height) = (dim("width"), dim("height"));
    let mut walker = Walker {
        vocab,
        doc: &doc,
        out: ParsedAnnotations::default(),
    };
    walker.visit(root, Affine::IDENTITY, None)?;
    let mut out = walker.out;
    out.width = width;
    out.height = height;
    Ok(out)
}

fn dilate3x3(layer: &[bool], width: usize, height: usize) -> Vec<bool> {
    let mut out = vec![false; layer.len()];
    for y in 0..height {
        for x in 0..width {
            if !layer[y * width + x] {
                continue;
            }
            for ny in y.saturating_sub(1)..=(y + 1).min(height - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(width - 1) {
                    out[ny * width + nx] = true;
                }
            }
        }
    }
    out
}

fn paint(shape: &AnnotatedShape, width: usize, height: usize, layer: &mut [bool]) {
    let mut set = |x: usize, y: usize| layer[y * width + x] = true;
    match &shape.geometry {
        Geometry::Points(pts) => fill_polygon(pts, width, height, &mut set),
        Geometry::Circle { center, radius } => fill_circle(*center, *radius, width, height, &mut set),
    }
}

/// Composites the shapes into a `width` x `height` mask.
pub fn rasterize_annotations(
    shapes: &[AnnotatedShape],
    width: usize,
    height: usize,
) -> Result<SegMask, SvgError> {
    if width == 0 || height == 0 {
        return Err(SvgError::ZeroAreaCanvas { width, height });
    }
    for (i, s) in shapes.iter().enumerate() {
        let finite = match &s.geometry {
            Geometry::Points(pts) => pts.iter().all(|p| p.x.is_finite() && p.y.is_finite()),
            Geometry::Circle { center, radius } => {
                center.x.is_finite() && center.y.is_finite() && radius.is_finite()
            }
        };
        if !finite {
            return Err(SvgError::NonFinite(i));
        }
    }
    let mut mask = SegMask::new(width, height);
    for order in 1..=5u8 {
        let mut layer = vec![false; width * height];
        let mut class = None;
        for s in shapes.iter().filter(|s| s.kind.draw_order() == order) {
            paint(s, width, height, &mut layer);
            class = Some(s.kind.class());
        }
        let Some(class) = class else { continue };
        if order == ShapeKind::Window.draw_order() {
            layer = dilate3x3(&layer, width, height);
        }
        for (i, on) in layer.iter().enumerate() {
            if *on {
                mask.set(i % width, i / width, class);
            }
        }
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect_shape(kind: ShapeKind, x0: f64, y0: f64, x1: f64, y1: f64) -> AnnotatedShape {
        AnnotatedShape {
            kind,
            geometry: Geometry::Points(vec![
                Point::new(x0, y0),
                Point::new(x1, y0),
                Point::new(x1, y1),
                Point::new(x0, y1),
            ]),
        }
    }

    fn count(mask: &SegMask, class: ClassId) -> usize {
        mask.data().iter().filter(|c| **c == class).count()
    }

    #[test]
    fn parses_polygon_and_circle() {
        let doc = r#"<svg xmlns="http://www.w3.org/2000/svg" width="40" height="30">
            <polygon class="Wall" points="0,0 10,0 10,4 0,4"/>
            <circle class="Column" cx="10" cy="10" r="3"/>
        </svg>"#;
        let p = parse_annotation(doc).unwrap();
        assert_eq!(p.shapes.len(), 2);
        assert_eq!(p.skipped, 0);
        assert_eq!(p.shapes[0].kind, ShapeKind::Wall);
        assert!(matches!(&p.shapes[0].geometry, Geometry::Points(v) if v.len() == 4));
        assert_eq!(
            p.shapes[1].geometry,
            Geometry::Circle {
                center: Point::new(10.0, 10.0),
                radius: 3.0
            }
        );
        assert_eq!((p.width, p.height), (Some(40.0), Some(30.0)));
    }

    #[test]
    fn unknown_elements_are_counted() {
        let doc = r#"<svg><polygon class="Room" points="0,0 1,0 1,1"/></svg>"#;
        let p = parse_annotation(doc).unwrap();
        assert!(p.shapes.is_empty());
        assert_eq!(p.skipped, 1);
    }

    #[test]
    fn group_class_and_transforms_apply() {
        let doc = r#"<svg>
            <g class="Door" transform="translate(5,1)">
              <polygon points="0,0 2,0 2,2 0,2" transform="scale(2)"/>
            </g>
            <g class="Space"><g class="Window Glass"><rect x="1" y="1" width="2" height="1"/></g></g>
        </svg>"#;
        let p = parse_annotation(doc).unwrap();
        assert_eq!(p.shapes.len(), 2);
        assert_eq!(p.shapes[0].kind, ShapeKind::Door);
        let Geometry::Points(pts) = &p.shapes[0].geometry else { panic!() };
        assert_eq!(pts[2], Point::new(9.0, 5.0));
        assert_eq!(p.shapes[1].kind, ShapeKind::Window);
    }

    #[test]
    fn malformed_xml_reports_position() {
        let e = parse_annotation("<svg>\n  <polygon class=\"Wall\" points=\"0,0\"\n</svg>").unwrap_err();
        assert!(matches!(e, SvgError::MalformedDocument { line, .. } if line >= 2), "{e}");
    }

    #[test]
    fn bad_geometry_is_an_error() {
        let cases = [
            r#"<svg><polygon class="Wall" points="0,0 1,0"/></svg>"#,
            r#"<svg><polygon class="Wall" points="0,0 1,x 2,2"/></svg>"#,
            r#"<svg><polygon class="Wall" points="0,0 1,1 2,2"/></svg>"#,
            r#"<svg><circle class="Wall" cx="1" cy="1" r="1"/></svg>"#,
            r#"<svg><circle class="Column" cx="1" cy="1" r="0"/></svg>"#,
        ];
        for doc in cases {
            assert!(
                matches!(parse_annotation(doc), Err(SvgError::UnparseableGeometry { .. })),
                "{doc}"
            );
        }
    }

    #[test]
    fn closing_point_is_dropped() {
        let p = parse_annotation(r#"<svg><polygon class="Stairs" points="0 0 4 0 4 4 0 4 0 0"/></svg>"#)
            .unwrap();
        assert!(matches!(&p.shapes[0].geometry, Geometry::Points(v) if v.len() == 4));
    }

    #[test]
    fn vocabulary_config() {
        let v = Vocabulary::from_config("Muur=Wall\nRaam = window\n").unwrap();
        assert_eq!(v.lookup("Muur"), Some(ShapeKind::Wall));
        assert_eq!(v.lookup("x Raam"), Some(ShapeKind::Window));
        assert_eq!(v.lookup("Wall"), Some(ShapeKind::Wall));
        assert!(Vocabulary::from_config("a=Sofa").is_err());
        let doc = r#"<svg><polygon class="Muur" points="0,0 1,0 1,1"/></svg>"#;
        assert_eq!(parse_annotation_with(doc, &v).unwrap().shapes.len(), 1);
    }

    #[test]
    fn single_wall_rectangle() {
        let m = rasterize_annotations(&[rect_shape(ShapeKind::Wall, 0.0, 0.0, 5.0, 5.0)], 10, 10)
            .unwrap();
        assert_eq!(count(&m, ClassId::WALL), 25);
        for y in 0..10 {
            for x in 0..10 {
                let want = if x < 5 && y < 5 { ClassId::WALL } else { ClassId::BACKGROUND };
                assert_eq!(m.get(x, y), want);
            }
        }
    }

    #[test]
    fn window_wins_over_wall_regardless_of_document_order() {
        let wall = rect_shape(ShapeKind::Wall, 0.0, 0.0, 10.0, 4.0);
        let window = rect_shape(ShapeKind::Window, 3.0, 1.0, 6.0, 2.0);
        let a = rasterize_annotations(&[wall.clone(), window.clone()], 12, 6).unwrap();
        let b = rasterize_annotations(&[window, wall], 12, 6).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.get(4, 1), ClassId::WINDOW);
        assert_eq!(a.get(0, 0), ClassId::WALL);
    }

    #[test]
    fn window_strip_dilates_to_three_by_five() {
        let strip = rect_shape(ShapeKind::Window, 4.0, 4.0, 7.0, 5.0);
        let m = rasterize_annotations(&[strip], 12, 10).unwrap();
        assert_eq!(count(&m, ClassId::WINDOW), 15);
        for y in 3..6 {
            for x in 3..8 {
                assert_eq!(m.get(x, y), ClassId::WINDOW);
            }
        }
    }

    #[test]
    fn column_equals_wall() {
        let geom = Geometry::Points(vec![
            Point::new(1.0, 1.0),
            Point::new(6.0, 2.0),
            Point::new(3.0, 7.0),
        ]);
        let a = rasterize_annotations(
            &[AnnotatedShape { kind: ShapeKind::Wall, geometry: geom.clone() }],
            9,
            9,
        )
        .unwrap();
        let b = rasterize_annotations(&[AnnotatedShape { kind: ShapeKind::Column, geometry: geom }], 9, 9)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn drawing_order_pairs() {
        for lo in ShapeKind::ALL {
            for hi in ShapeKind::ALL {
                if lo.draw_order() >= hi.draw_order() {
                    continue;
                }
                let m = rasterize_annotations(
                    &[
                        rect_shape(hi, 2.0, 2.0, 6.0, 6.0),
                        rect_shape(lo, 0.0, 0.0, 8.0, 8.0),
                    ],
                    10,
                    10,
                )
                .unwrap();
                assert_eq!(m.get(4, 4), hi.class(), "{lo} under {hi}");
            }
        }
    }

    #[test]
    fn clipping_and_zero_canvas() {
        let m = rasterize_annotations(&[rect_shape(ShapeKind::Wall, -5.0, -5.0, 3.0, 3.0)], 4, 4).unwrap();
        assert_eq!(count(&m, ClassId::WALL), 9);
        assert!(matches!(
            rasterize_annotations(&[], 0, 5),
            Err(SvgError::ZeroAreaCanvas { .. })
        ));
    }
}
