//! Planar primitives shared by the rasterizer, vectorizer and mesh builder.

use std::ops::{Add, Mul, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dist(self, o: Point) -> f64 {
        (self - o).norm()
    }

    pub fn dist2(self, o: Point) -> f64 {
        let d = self - o;
        d.dot(d)
    }

    pub fn midpoint(self, o: Point) -> Point {
        Point::new((self.x + o.x) / 2.0, (self.y + o.y) / 2.0)
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

/// Shoelace signed area; positive when vertices turn from +x towards +y.
pub fn signed_area(pts: &[Point]) -> f64 {
    let n = pts.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let a = pts[i];
        let b = pts[(i + 1) % n];
        acc += a.cross(b);
    }
    acc / 2.0
}

/// Even-odd point-in-polygon test.
pub fn contains_point(pts: &[Point], p: Point) -> bool {
    let n = pts.len();
    let mut inside = false;
    let mut j = n.wrapping_sub(1);
    for i in 0..n {
        let a = pts[i];
        let b = pts[j];
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Calls `f(x, y)` for every pixel of a `width` x `height` grid whose center
/// `(x + 0.5, y + 0.5)` lies inside the polygon under the even-odd rule.
/// Geometry outside the grid is clipped.
pub fn fill_polygon<F: FnMut(usize, usize)>(pts: &[Point], width: usize, height: usize, mut f: F) {
    if pts.len() < 3 || width == 0 || height == 0 {
        return;
    }
    let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in pts {
        ymin = ymin.min(p.y);
        ymax = ymax.max(p.y);
    }
    if !ymin.is_finite() || !ymax.is_finite() {
        return;
    }
    let row_start = ((ymin - 0.5).ceil().max(0.0)) as usize;
    let row_end = ((ymax - 0.5).floor().min(height as f64 - 1.0)).max(-1.0);
    if row_end < 0.0 {
        return;
    }
    let row_end = row_end as usize;
    let n = pts.len();
    let mut xs: Vec<f64> = Vec::with_capacity(8);
    for row in row_start..=row_end {
        let yc = row as f64 + 0.5;
        xs.clear();
        for i in 0..n {
            let a = pts[i];
            let b = pts[(i + 1) % n];
            if (a.y > yc) != (b.y > yc) {
                xs.push(a.x + (yc - a.y) * (b.x - a.x) / (b.y - a.y));
            }
        }
        xs.sort_by(|a, b| a.total_cmp(b));
        for pair in xs.chunks_exact(2) {
            // centers cx with pair[0] <= cx < pair[1]
            let first = (pair[0] - 0.5).ceil().max(0.0);
            let last = (pair[1] - 0.5).ceil() - 1.0;
            let last = last.min(width as f64 - 1.0);
            if last < first {
                continue;
            }
            for col in first as usize..=last as usize {
                f(col, row);
            }
        }
    }
}

/// Calls `f(x, y)` for every pixel whose center lies within `radius` of `center`.
pub fn fill_circle<F: FnMut(usize, usize)>(
    center: Point,
    radius: f64,
    width: usize,
    height: usize,
    mut f: F,
) {
    if radius < 0.0 || width == 0 || height == 0 {
        return;
    }
    let x0 = ((center.x - radius - 0.5).ceil().max(0.0)) as usize;
    let y0 = ((center.y - radius - 0.5).ceil().max(0.0)) as usize;
    let x1 = (center.x + radius - 0.5).floor().min(width as f64 - 1.0);
    let y1 = (center.y + radius - 0.5).floor().min(height as f64 - 1.0);
    if x1 < 0.0 || y1 < 0.0 {
        return;
    }
    let r2 = radius * radius;
    for y in y0..=y1 as usize {
        for x in x0..=x1 as usize {
            let c = Point::new(x as f64 + 0.5, y as f64 + 0.5);
            if c.dist2(center) <= r2 {
                f(x, y);
            }
        }
    }
}

/// Proper intersection test for closed segments `ab` and `cd`.
pub fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    fn orient(p: Point, q: Point, r: Point) -> f64 {
        (q - p).cross(r - p)
    }
    fn on_segment(p: Point, q: Point, r: Point) -> bool {
        r.x >= p.x.min(q.x) && r.x <= p.x.max(q.x) && r.y >= p.y.min(q.y) && r.y <= p.y.max(q.y)
    }
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

/// True when any two non-adjacent edges of the closed polygon touch.
pub fn is_self_intersecting(pts: &[Point]) -> bool {
    let n = pts.len();
    if n < 4 {
        return false;
    }
    for i in 0..n {
        let (a, b) = (pts[i], pts[(i + 1) % n]);
        for j in i + 1..n {
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            let (c, d) = (pts[j], pts[(j + 1) % n]);
            if segments_intersect(a, b, c, d) {
                return true;
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<Point> {
        vec![
            Point::new(x0, y0),
            Point::new(x1, y0),
            Point::new(x1, y1),
            Point::new(x0, y1),
        ]
    }

    #[test]
    fn fill_matches_center_sampling() {
        let poly = vec![
            Point::new(0.2, 0.1),
            Point::new(7.3, 1.4),
            Point::new(5.1, 6.8),
            Point::new(3.0, 3.0),
            Point::new(0.4, 5.5),
        ];
        let mut filled = vec![false; 64];
        fill_polygon(&poly, 8, 8, |x, y| filled[y * 8 + x] = true);
        for y in 0..8 {
            for x in 0..8 {
                let c = Point::new(x as f64 + 0.5, y as f64 + 0.5);
                assert_eq!(filled[y * 8 + x], contains_point(&poly, c), "({x},{y})");
            }
        }
    }

    #[test]
    fn fill_axis_aligned_rect_and_clip() {
        let mut n = 0;
        fill_polygon(&square(0.0, 0.0, 5.0, 5.0), 10, 10, |_, _| n += 1);
        assert_eq!(n, 25);
        let mut n = 0;
        fill_polygon(&square(-3.0, -3.0, 2.0, 20.0), 10, 10, |_, _| n += 1);
        assert_eq!(n, 20);
    }

    #[test]
    fn orientation_sign() {
        assert_eq!(signed_area(&square(0.0, 0.0, 2.0, 3.0)), 6.0);
        let mut r = square(0.0, 0.0, 2.0, 3.0);
        r.reverse();
        assert_eq!(signed_area(&r), -6.0);
    }

    #[test]
    fn circle_fill() {
        let mut n = 0;
        fill_circle(Point::new(5.0, 5.0), 1.0, 10, 10, |_, _| n += 1);
        // centers (4.5|5.5, 4.5|5.5) at distance sqrt(0.5)
        assert_eq!(n, 4);
    }

    #[test]
    fn self_intersection() {
        let bowtie = vec![
            Point::new(0.0, 0.0),
            Point::new(2.0, 2.0),
            Point::new(2.0, 0.0),
            Point::new(0.0, 2.0),
        ];
        assert!(is_self_intersecting(&bowtie));
        assert!(!is_self_intersecting(&square(0.0, 0.0, 1.0, 1.0)));
    }
}
