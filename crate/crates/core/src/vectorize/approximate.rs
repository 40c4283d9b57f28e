//! Rectangle-based polygon approximation of a joint mask.
//!
//! Each connected component is enclosed by its minimum-area rectangle. If
//! the rectangle is mostly empty (fitting score below `eps_u`) it is cut in
//! half across its long axis, the pixels are regrouped into connected pieces
//! and every piece goes back on the worklist. Well-fitting rectangles are
//! emitted as 4-vertex polygons.

use std::collections::VecDeque;

use rayon::prelude::*;

use crate::geom::Point;
use crate::heatmap::{components_of_pixels, connected_components, Component, Pixel};
use crate::mask_io::{BinaryMask, ClassId};

use super::rect::{min_area_rect, pixel_outline, score_with, RotatedRect};
use super::{Polygon, PolygonSet, VectorizeError};

/// Components at or below this size are emitted without scoring.
pub const MIN_SPLIT_PIXELS: usize = 4;

fn pixel_center(p: Pixel) -> Point {
    Point::new(p.0 as f64 + 0.5, p.1 as f64 + 0.5)
}

/// Bounding rectangle of a pixel set, fitted to the pixel squares.
pub fn component_rect(component: &Component) -> RotatedRect {
    min_area_rect(&pixel_outline(&component.pixels)).expect("component is non-empty")
}

/// Fitting score of `rect` against the component's own pixels.
fn component_score(component: &Component, rect: &RotatedRect) -> Result<f64, VectorizeError> {
    let (x0, y0, x1, y1) = component.bounds();
    let w = (x1 - x0 + 1) as usize;
    let h = (y1 - y0 + 1) as usize;
    let mut local = BinaryMask::new(w, h);
    for &(x, y) in &component.pixels {
        local.set((x - x0) as usize, (y - y0) as usize, true);
    }
    score_with(rect, |x, y| local.get_signed(x - x0, y - y0))
}

/// Cuts the rectangle in half across its long axis and partitions the
/// component's pixels by the half containing their centers. Centers on the
/// cut go to the first half. If one side would be empty the pixels are split
/// at the median of their projection onto the long axis instead.
pub fn split_component(
    component: &Component,
    rect: &RotatedRect,
) -> Result<(Component, Component), VectorizeError> {
    if component.pixels.is_empty() {
        return Err(VectorizeError::EmptyComponent);
    }
    let (u, _) = rect.axes();
    let proj = |p: Pixel| (pixel_center(p) - rect.center).dot(u);
    let (first, second): (Vec<Pixel>, Vec<Pixel>) =
        component.pixels.iter().partition(|p| proj(**p) <= 0.0);
    if !first.is_empty() && !second.is_empty() {
        return Ok((
            Component {
                label: component.label,
                pixels: first,
            },
            Component {
                label: component.label,
                pixels: second,
            },
        ));
    }
    if component.pixels.len() < 2 {
        return Err(VectorizeError::DegenerateSplit);
    }
    let mut order = component.pixels.clone();
    order.sort_by(|a, b| {
        proj(*a)
            .total_cmp(&proj(*b))
            .then((a.1, a.0).cmp(&(b.1, b.0)))
    });
    let second = order.split_off(order.len() / 2);
    let mut first = order;
    first.sort_by_key(|&(x, y)| (y, x));
    let mut second = second;
    second.sort_by_key(|&(x, y)| (y, x));
    Ok((
        Component {
            label: component.label,
            pixels: first,
        },
        Component {
            label: component.label,
            pixels: second,
        },
    ))
}

fn emit(rect: &RotatedRect, fallback: bool) -> Polygon {
    let mut poly = Polygon::new(rect.corners().to_vec(), ClassId::BACKGROUND);
    poly.fallback = fallback;
    poly
}

fn approximate_component(seed: Component, eps_u: f64) -> Result<Vec<Polygon>, VectorizeError> {
    let mut out = Vec::new();
    let mut work = VecDeque::from([seed]);
    while let Some(comp) = work.pop_front() {
        let rect = component_rect(&comp);
        if comp.len() <= MIN_SPLIT_PIXELS || rect.size.1 < 1.0 {
            out.push(emit(&rect, true));
            continue;
        }
        let score = component_score(&comp, &rect)?;
        if score < eps_u {
            let (a, b) = split_component(&comp, &rect)?;
            for half in [a, b] {
                work.extend(components_of_pixels(&half.pixels));
            }
        } else {
            out.push(emit(&rect, false));
        }
    }
    Ok(out)
}

/// Polygon approximation of a joint mask. Polygons carry no class yet
/// (`ClassId::BACKGROUND`); min-size emissions have `fallback` set.
pub fn approximate_polygons(joint: &BinaryMask, eps_u: f64) -> Result<PolygonSet, VectorizeError> {
    if !(eps_u > 0.0 && eps_u <= 1.0) {
        return Err(VectorizeError::InvalidThreshold("eps_u", eps_u));
    }
    let per_component = connected_components(joint)
        .into_par_iter()
        .map(|c| approximate_component(c, eps_u))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PolygonSet {
        polygons: per_component.into_iter().flatten().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vectorize::rect::fitting_score;

    fn rect_mask(w: usize, h: usize, rects: &[(usize, usize, usize, usize)]) -> BinaryMask {
        let mut m = BinaryMask::new(w, h);
        for &(x0, y0, x1, y1) in rects {
            for y in y0..y1 {
                for x in x0..x1 {
                    m.set(x, y, true);
                }
            }
        }
        m
    }

    fn bbox(p: &Polygon) -> (f64, f64, f64, f64) {
        let mut b = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for v in &p.vertices {
            b.0 = b.0.min(v.x);
            b.1 = b.1.min(v.y);
            b.2 = b.2.max(v.x);
            b.3 = b.3.max(v.y);
        }
        b
    }

    #[test]
    fn solid_bar_is_one_rect() {
        let m = rect_mask(16, 8, &[(2, 1, 12, 5)]);
        let set = approximate_polygons(&m, 0.5).unwrap();
        assert_eq!(set.polygons.len(), 1);
        let (x0, y0, x1, y1) = bbox(&set.polygons[0]);
        for (a, b) in [(x0, 2.0), (y0, 1.0), (x1, 12.0), (y1, 5.0)] {
            assert!((a - b).abs() < 1e-9);
        }
        assert_eq!(set.polygons[0].vertices.len(), 4);
    }

    #[test]
    fn empty_mask() {
        assert!(approximate_polygons(&BinaryMask::new(5, 5), 0.5)
            .unwrap()
            .polygons
            .is_empty());
    }

    #[test]
    fn disjoint_squares() {
        let m = rect_mask(20, 10, &[(1, 1, 5, 5), (10, 2, 16, 8)]);
        assert_eq!(approximate_polygons(&m, 0.5).unwrap().polygons.len(), 2);
    }

    #[test]
    fn l_shape_trace() {
        // two 10x4 bars on a 14x10 grid: vertical x 0..4, horizontal x 4..14
        // along the bottom. 80 pixels inside the 14x10 box -> 80/140 >= 0.5
        let m = rect_mask(14, 10, &[(0, 0, 4, 10), (4, 6, 14, 10)]);
        let comps = connected_components(&m);
        let rect = component_rect(&comps[0]);
        assert!((rect.area() - 140.0).abs() < 1e-9);
        assert!((fitting_score(&m, &rect).unwrap() - 80.0 / 140.0).abs() < 1e-12);

        let set = approximate_polygons(&m, 0.5).unwrap();
        assert_eq!(set.polygons.len(), 1);

        // a stricter threshold forces the split
        let strict = approximate_polygons(&m, 0.9).unwrap();
        assert!(strict.polygons.len() >= 2);
        for p in strict.polygons.iter().filter(|p| !p.fallback) {
            let r = min_area_rect(&p.vertices).unwrap();
            assert!(fitting_score(&m, &r).unwrap() >= 0.9);
        }
    }

    #[test]
    fn long_l_shape_splits() {
        // two 20x4 bars meeting at a corner: 144 px in a 20x20 box -> 0.36
        let m = rect_mask(24, 24, &[(0, 0, 4, 20), (4, 16, 20, 20)]);
        let set = approximate_polygons(&m, 0.5).unwrap();
        assert!(set.polygons.len() >= 2);
        for p in set.polygons.iter().filter(|p| !p.fallback) {
            let r = min_area_rect(&p.vertices).unwrap();
            assert!(fitting_score(&m, &r).unwrap() >= 0.5);
        }
    }

    #[test]
    fn split_bar_in_halves() {
        let comp = connected_components(&rect_mask(12, 4, &[(0, 0, 10, 2)])).remove(0);
        let rect = component_rect(&comp);
        let (a, b) = split_component(&comp, &rect).unwrap();
        assert_eq!(a.len(), 10);
        assert_eq!(b.len(), 10);
        assert!(a.pixels.iter().all(|p| p.0 < 5));
        assert!(b.pixels.iter().all(|p| p.0 >= 5));
    }

    #[test]
    fn split_l_shape_corner_and_leg() {
        // 6x6 box: vertical leg x in 0..2, foot y in 4..6
        let comp = connected_components(&rect_mask(8, 8, &[(0, 0, 2, 6), (2, 4, 6, 6)])).remove(0);
        let rect = component_rect(&comp);
        let (a, b) = split_component(&comp, &rect).unwrap();
        assert_eq!(a.len() + b.len(), comp.len());
        assert!(!a.is_empty() && !b.is_empty());
        // the cut runs through the box center (3, 3) across the long axis
        let (u, _) = rect.axes();
        for p in &a.pixels {
            assert!((pixel_center(*p) - rect.center).dot(u) <= 0.0);
        }
        for p in &b.pixels {
            assert!((pixel_center(*p) - rect.center).dot(u) > 0.0);
        }
    }

    #[test]
    fn median_fallback_when_half_is_empty() {
        let comp = Component {
            label: 0,
            pixels: vec![(0, 0), (1, 0), (2, 0), (3, 0)],
        };
        // a rect whose cut lies right of every pixel
        let rect = RotatedRect {
            center: Point::new(10.0, 0.5),
            size: (30.0, 1.0),
            angle: 0.0,
        };
        let (a, b) = split_component(&comp, &rect).unwrap();
        assert_eq!(a.pixels, vec![(0, 0), (1, 0)]);
        assert_eq!(b.pixels, vec![(2, 0), (3, 0)]);
    }

    #[test]
    fn ring_is_split_into_fitting_pieces() {
        let m = rect_mask(
            40,
            30,
            &[(0, 0, 40, 4), (0, 26, 40, 30), (0, 0, 4, 30), (36, 0, 40, 30)],
        );
        let set = approximate_polygons(&m, 0.5).unwrap();
        assert!(set.polygons.len() >= 4);
        for p in set.polygons.iter().filter(|p| !p.fallback) {
            let r = min_area_rect(&p.vertices).unwrap();
            assert!(fitting_score(&m, &r).unwrap() >= 0.5);
        }
    }
}
