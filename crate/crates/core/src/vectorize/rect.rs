use std::f64::consts::PI;

use crate::geom::Point;
use crate::heatmap::Pixel;
use crate::mask_io::BinaryMask;

use super::VectorizeError;

const EDGE_EPS: f64 = 1e-9;

/// Oriented rectangle. `angle` is the direction of the long side `size.0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotatedRect {
    pub center: Point,
    pub size: (f64, f64),
    pub angle: f64,
}

impl RotatedRect {
    pub fn area(&self) -> f64 {
        self.size.0 * self.size.1
    }

    /// Unit vectors along the long and the short side.
    pub fn axes(&self) -> (Point, Point) {
        let (s, c) = self.angle.sin_cos();
        (Point::new(c, s), Point::new(-s, c))
    }

    /// Corners with positive signed area in pixel coordinates.
    pub fn corners(&self) -> [Point; 4] {
        let (u, v) = self.axes();
        let (hw, hh) = (self.size.0 / 2.0, self.size.1 / 2.0);
        let c = self.center;
        [
            c - u * hw - v * hh,
            c + u * hw - v * hh,
            c + u * hw + v * hh,
            c - u * hw + v * hh,
        ]
    }

    /// Half-open membership test in the rectangle's own frame: the two
    /// lower edges are inside, the two upper edges are not.
    pub fn contains(&self, p: Point) -> bool {
        let (u, v) = self.axes();
        let d = p - self.center;
        let (du, dv) = (d.dot(u), d.dot(v));
        let (hw, hh) = (self.size.0 / 2.0, self.size.1 / 2.0);
        du >= -hw - EDGE_EPS && du < hw - EDGE_EPS && dv >= -hh - EDGE_EPS && dv < hh - EDGE_EPS
    }

    /// Integer pixels whose centers fall inside the rectangle.
    pub fn covered_pixels(&self) -> Vec<Pixel> {
        let corners = self.corners();
        let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for c in corners {
            x0 = x0.min(c.x);
            y0 = y0.min(c.y);
            x1 = x1.max(c.x);
            y1 = y1.max(c.y);
        }
        let mut out = Vec::new();
        for y in (y0 - 0.5).floor() as i64..=(y1 - 0.5).ceil() as i64 {
            for x in (x0 - 0.5).floor() as i64..=(x1 - 0.5).ceil() as i64 {
                if self.contains(Point::new(x as f64 + 0.5, y as f64 + 0.5)) {
                    out.push((x, y));
                }
            }
        }
        out
    }
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a - o).cross(b - o)
}

/// Andrew's monotone chain; collinear points are dropped.
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<Point> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn normalize_angle(mut a: f64) -> f64 {
    a %= PI;
    if a < 0.0 {
        a += PI;
    }
    if a >= PI - 1e-12 {
        a = 0.0;
    }
    a
}

/// Minimum-area enclosing rectangle.
///
/// By the rotating-calipers argument one side of the optimum is collinear
/// with a hull edge, so every hull edge direction is tried.
pub fn min_area_rect(points: &[Point]) -> Result<RotatedRect, VectorizeError> {
    if points.is_empty() {
        return Err(VectorizeError::EmptyPointSet);
    }
    let hull = convex_hull(points);
    match hull.len() {
        1 => {
            return Ok(RotatedRect {
                center: hull[0],
                size: (0.0, 0.0),
                angle: 0.0,
            })
        }
        2 => {
            let d = hull[1] - hull[0];
            return Ok(RotatedRect {
                center: hull[0].midpoint(hull[1]),
                size: (d.norm(), 0.0),
                angle: normalize_angle(d.y.atan2(d.x)),
            });
        }
        _ => {}
    }
    let n = hull.len();
    let mut best: Option<(f64, RotatedRect)> = None;
    for i in 0..n {
        let e = hull[(i + 1) % n] - hull[i];
        let len = e.norm();
        if len == 0.0 {
            continue;
        }
        let u = e * (1.0 / len);
        let v = Point::new(-u.y, u.x);
        let (mut umin, mut umax, mut vmin, mut vmax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for p in &hull {
            let (pu, pv) = (p.dot(u), p.dot(v));
            umin = umin.min(pu);
            umax = umax.max(pu);
            vmin = vmin.min(pv);
            vmax = vmax.max(pv);
        }
        let area = (umax - umin) * (vmax - vmin);
        if best.as_ref().is_some_and(|(a, _)| *a <= area + 1e-12 * area.abs().max(1.0)) {
            continue;
        }
        let cu = (umin + umax) / 2.0;
        let cv = (vmin + vmax) / 2.0;
        let center = u * cu + v * cv;
        let (w, h) = (umax - umin, vmax - vmin);
        let rect = if w >= h {
            RotatedRect {
                center,
                size: (w, h),
                angle: normalize_angle(u.y.atan2(u.x)),
            }
        } else {
            RotatedRect {
                center,
                size: (h, w),
                angle: normalize_angle(v.y.atan2(v.x)),
            }
        };
        best = Some((area, rect));
    }
    Ok(best.expect("hull with three or more vertices has an edge").1)
}

/// Outline points of a pixel set: the corners of the first and last pixel
/// of every row. Their hull equals the hull of all pixel squares.
pub fn pixel_outline(pixels: &[Pixel]) -> Vec<Point> {
    use std::collections::BTreeMap;
    let mut rows: BTreeMap<i64, (i64, i64)> = BTreeMap::new();
    for &(x, y) in pixels {
        let e = rows.entry(y).or_insert((x, x));
        e.0 = e.0.min(x);
        e.1 = e.1.max(x);
    }
    let mut out = Vec::with_capacity(rows.len() * 4);
    for (y, (x0, x1)) in rows {
        let (y, x0, x1) = (y as f64, x0 as f64, x1 as f64 + 1.0);
        out.push(Point::new(x0, y));
        out.push(Point::new(x0, y + 1.0));
        out.push(Point::new(x1, y));
        out.push(Point::new(x1, y + 1.0));
    }
    out
}

/// Mean mask value over the pixels whose centers lie inside `rect`.
/// Pixels outside the mask count as 0.
pub fn fitting_score(mask: &BinaryMask, rect: &RotatedRect) -> Result<f64, VectorizeError> {
    score_with(rect, |x, y| mask.get_signed(x, y))
}

pub(crate) fn score_with<F: Fn(i64, i64) -> bool>(
    rect: &RotatedRect,
    on: F,
) -> Result<f64, VectorizeError> {
    if !(rect.area() > 0.0) {
        return Err(VectorizeError::ZeroAreaRect);
    }
    let covered = rect.covered_pixels();
    if covered.is_empty() {
        return Err(VectorizeError::ZeroAreaRect);
    }
    let ones = covered.iter().filter(|(x, y)| on(*x, *y)).count();
    Ok(ones as f64 / covered.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64) -> Point {
        Point::new(x, y)
    }

    /// Rotation scan at a fixed angular step: area of the axis-aligned box of
    /// the points rotated by each angle.
    pub(crate) fn scan_min_area(points: &[Point], step_deg: f64) -> f64 {
        let mut best = f64::MAX;
        let steps = (180.0 / step_deg).round() as usize;
        for k in 0..steps {
            let a = (k as f64 * step_deg).to_radians();
            let (s, c) = a.sin_cos();
            let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
            for q in points {
                let (x, y) = (q.x * c - q.y * s, q.x * s + q.y * c);
                x0 = x0.min(x);
                x1 = x1.max(x);
                y0 = y0.min(y);
                y1 = y1.max(y);
            }
            best = best.min((x1 - x0) * (y1 - y0));
        }
        best
    }

    #[test]
    fn unit_square() {
        let r = min_area_rect(&[p(0.0, 0.0), p(1.0, 0.0), p(1.0, 1.0), p(0.0, 1.0)]).unwrap();
        assert!((r.area() - 1.0).abs() < 1e-12);
        assert!((r.center.x - 0.5).abs() < 1e-12 && (r.center.y - 0.5).abs() < 1e-12);
    }

    #[test]
    fn collinear_points_give_flat_rect() {
        let r = min_area_rect(&[p(0.0, 0.0), p(4.0, 0.0)]).unwrap();
        assert_eq!(r.size, (4.0, 0.0));
        let r = min_area_rect(&[p(0.0, 0.0), p(2.0, 0.0), p(4.0, 0.0)]).unwrap();
        assert_eq!(r.size, (4.0, 0.0));
        assert_eq!(r.angle, 0.0);
    }

    #[test]
    fn diamond_is_rotated_square() {
        let pts = [p(0.0, 0.0), p(2.0, 2.0), p(4.0, 0.0), p(2.0, -2.0)];
        let r = min_area_rect(&pts).unwrap();
        assert!((r.area() - 8.0).abs() < 1e-9);
        // brute-force oracle agrees
        assert!((scan_min_area(&pts, 0.5) - 8.0).abs() < 1e-9);
        assert!((r.angle - PI / 4.0).abs() < 1e-9 || (r.angle - 3.0 * PI / 4.0).abs() < 1e-9);
    }

    #[test]
    fn corners_reconstruct_rect() {
        let r = RotatedRect {
            center: p(3.0, 2.0),
            size: (4.0, 2.0),
            angle: 0.3,
        };
        let c = r.corners();
        assert!((c[0].dist(c[1]) - 4.0).abs() < 1e-12);
        assert!((c[1].dist(c[2]) - 2.0).abs() < 1e-12);
        assert!(crate::geom::signed_area(&c) > 0.0);
        let back = min_area_rect(&c).unwrap();
        assert!((back.area() - 8.0).abs() < 1e-9);
        assert!((back.angle - 0.3).abs() < 1e-9);
    }

    #[test]
    fn empty_points_error() {
        assert!(matches!(
            min_area_rect(&[]),
            Err(VectorizeError::EmptyPointSet)
        ));
    }

    #[test]
    fn fitting_score_examples() {
        let mut m = BinaryMask::new(6, 4);
        for y in 0..2 {
            for x in 0..4 {
                m.set(x, y, true);
            }
        }
        let r = min_area_rect(&[p(0.0, 0.0), p(4.0, 0.0), p(4.0, 2.0), p(0.0, 2.0)]).unwrap();
        assert_eq!(fitting_score(&m, &r).unwrap(), 1.0);
        assert_eq!(fitting_score(&BinaryMask::new(6, 4), &r).unwrap(), 0.0);

        // L occupying 6 of the 8 cells of a 4x2 box
        let mut l = BinaryMask::new(6, 4);
        for x in 0..4 {
            l.set(x, 1, true);
        }
        l.set(0, 0, true);
        l.set(1, 0, true);
        assert_eq!(fitting_score(&l, &r).unwrap(), 0.75);

        let flat = RotatedRect {
            center: p(1.0, 1.0),
            size: (3.0, 0.0),
            angle: 0.0,
        };
        assert!(matches!(
            fitting_score(&m, &flat),
            Err(VectorizeError::ZeroAreaRect)
        ));
    }

    #[test]
    fn half_open_membership_does_not_double_count() {
        let r = RotatedRect {
            center: p(2.0, 2.0),
            size: (4.0, 4.0),
            angle: 0.0,
        };
        assert_eq!(r.covered_pixels().len(), 16);
        // a pixel grid tiled by two abutting rects is counted once
        let a = RotatedRect {
            center: p(1.0, 1.0),
            size: (2.0, 2.0),
            angle: 0.0,
        };
        assert!(a.contains(p(0.0, 0.0)));
        assert!(!a.contains(p(2.0, 1.0)));
    }

    #[test]
    fn outline_hull_matches_all_corners() {
        let pixels: Vec<Pixel> = vec![(0, 0), (1, 0), (0, 1), (0, 2), (1, 2), (2, 2)];
        let mut all = Vec::new();
        for &(x, y) in &pixels {
            let (x, y) = (x as f64, y as f64);
            all.extend([p(x, y), p(x + 1.0, y), p(x, y + 1.0), p(x + 1.0, y + 1.0)]);
        }
        assert_eq!(convex_hull(&pixel_outline(&pixels)), convex_hull(&all));
    }
}
