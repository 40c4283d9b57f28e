//! 8-connected component labelling and outer-contour tracing.

use std::collections::VecDeque;

use crate::mask_io::BinaryMask;

pub type Pixel = (i64, i64);

/// Offsets of the 8-neighbourhood in clockwise order (image coordinates,
/// y down), starting east.
const RING: [(i64, i64); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub label: usize,
    /// Pixels sorted in row-major order.
    pub pixels: Vec<Pixel>,
}

impl Component {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Inclusive bounds `(xmin, ymin, xmax, ymax)`.
    pub fn bounds(&self) -> (i64, i64, i64, i64) {
        let mut b = (i64::MAX, i64::MAX, i64::MIN, i64::MIN);
        for &(x, y) in &self.pixels {
            b.0 = b.0.min(x);
            b.1 = b.1.min(y);
            b.2 = b.2.max(x);
            b.3 = b.3.max(y);
        }
        b
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contour {
    pub points: Vec<Pixel>,
}

/// Labels 8-connected foreground regions. Labels follow the row-major order
/// of each component's first pixel.
pub fn connected_components(mask: &BinaryMask) -> Vec<Component> {
    let (w, h) = (mask.width(), mask.height());
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for y in 0..h {
        for x in 0..w {
            let idx = y * w + x;
            if seen[idx] || !mask.get(x, y) {
                continue;
            }
            seen[idx] = true;
            queue.push_back((x as i64, y as i64));
            let mut pixels = Vec::new();
            while let Some((px, py)) = queue.pop_front() {
                pixels.push((px, py));
                for (dx, dy) in RING {
                    let (nx, ny) = (px + dx, py + dy);
                    if mask.get_signed(nx, ny) {
                        let ni = ny as usize * w + nx as usize;
                        if !seen[ni] {
                            seen[ni] = true;
                            queue.push_back((nx, ny));
                        }
                    }
                }
            }
            pixels.sort_by_key(|&(x, y)| (y, x));
            out.push(Component {
                label: out.len(),
                pixels,
            });
        }
    }
    out
}

/// Splits an arbitrary pixel set into its 8-connected components.
pub fn components_of_pixels(pixels: &[Pixel]) -> Vec<Component> {
    if pixels.is_empty() {
        return Vec::new();
    }
    let (mut x0, mut y0, mut x1, mut y1) = (i64::MAX, i64::MAX, i64::MIN, i64::MIN);
    for &(x, y) in pixels {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    let (w, h) = ((x1 - x0 + 1) as usize, (y1 - y0 + 1) as usize);
    let mut local = BinaryMask::new(w, h);
    for &(x, y) in pixels {
        local.set((x - x0) as usize, (y - y0) as usize, true);
    }
    connected_components(&local)
        .into_iter()
        .map(|mut c| {
            for p in &mut c.pixels {
                p.0 += x0;
                p.1 += y0;
            }
            c
        })
        .collect()
}

/// Traces the outer boundary of a component with Moore-neighbour tracing.
///
/// The trace starts at the first pixel in row-major order and walks
/// clockwise. Pixels on one-pixel-wide spurs are visited once per pass, so
/// they may repeat; consecutive points are always 8-neighbours.
pub fn trace_contour(component: &Component) -> Contour {
    let pixels = &component.pixels;
    if pixels.len() <= 1 {
        return Contour {
            points: pixels.clone(),
        };
    }
    let (x0, y0, x1, y1) = component.bounds();
    let w = (x1 - x0 + 3) as usize;
    let h = (y1 - y0 + 3) as usize;
    let mut grid = vec![false; w * h];
    for &(x, y) in pixels {
        grid[(y - y0 + 1) as usize * w + (x - x0 + 1) as usize] = true;
    }
    let inside = |p: Pixel| grid[(p.1 - y0 + 1) as usize * w + (p.0 - x0 + 1) as usize];

    let start = *pixels.iter().min_by_key(|&&(x, y)| (y, x)).unwrap();
    // The west neighbour of the row-major first pixel is background, so begin
    // the clockwise search just after it.
    let mut current = start;
    let mut backtrack_dir = 4usize;
    let mut points = vec![start];
    let mut first_move: Option<(Pixel, usize)> = None;
    loop {
        let mut next = None;
        for k in 1..=8 {
            let d = (backtrack_dir + k) % 8;
            let cand = (current.0 + RING[d].0, current.1 + RING[d].1);
            if inside(cand) {
                next = Some((cand, d));
                break;
            }
        }
        let Some((cand, d)) = next else {
            break;
        };
        // Jacob's stopping criterion: back at start about to repeat the first move.
        if current == start {
            match first_move {
                None => first_move = Some((cand, d)),
                Some(fm) if fm == (cand, d) => break,
                Some(_) => {}
            }
        }
        // direction from cand to the background pixel examined just before it
        backtrack_dir = if d % 2 == 0 { (d + 6) % 8 } else { (d + 5) % 8 };
        current = cand;
        points.push(current);
    }
    // the trace closes on the start pixel; drop the duplicate
    if points.len() > 1 && points.last() == Some(&start) {
        points.pop();
    }
    Contour { points }
}
