//! Polygon refinement: cross-polygon vertex merging, then removal of
//! nearly collinear vertices.

use std::collections::HashMap;

use crate::geom::Point;

use super::{Polygon, PolygonSet, Thresholds};

/// Distinct vertex position together with the polygons that use it.
#[derive(Debug)]
struct Node {
    pos: Point,
    polys: Vec<usize>,
}

fn key(p: Point) -> (u64, u64) {
    // +0.0 and -0.0 must coincide
    ((p.x + 0.0).to_bits(), (p.y + 0.0).to_bits())
}

fn collect_nodes(polygons: &[Polygon]) -> Vec<Node> {
    let mut index: HashMap<(u64, u64), usize> = HashMap::new();
    let mut nodes: Vec<Node> = Vec::new();
    for (pi, poly) in polygons.iter().enumerate() {
        for v in &poly.vertices {
            let slot = *index.entry(key(*v)).or_insert_with(|| {
                nodes.push(Node {
                    pos: *v,
                    polys: Vec::new(),
                });
                nodes.len() - 1
            });
            if nodes[slot].polys.last() != Some(&pi) {
                nodes[slot].polys.push(pi);
            }
        }
    }
    nodes.sort_by(|a, b| a.pos.x.total_cmp(&b.pos.x).then(a.pos.y.total_cmp(&b.pos.y)));
    nodes
}

/// Exact fixed-radius neighbour index over a uniform grid.
struct GridIndex {
    cell: f64,
    buckets: HashMap<(i64, i64), Vec<usize>>,
}

impl GridIndex {
    fn build(points: impl Iterator<Item = Point>, radius: f64) -> Self {
        let cell = radius.max(1e-6);
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.enumerate() {
            buckets
                .entry(((p.x / cell).floor() as i64, (p.y / cell).floor() as i64))
                .or_default()
                .push(i);
        }
        GridIndex { cell, buckets }
    }

    fn for_each_near<F: FnMut(usize)>(&self, p: Point, mut f: F) {
        let (cx, cy) = ((p.x / self.cell).floor() as i64, (p.y / self.cell).floor() as i64);
        for dy in -1..=1 {
            for dx in -1..=1 {
                if let Some(b) = self.buckets.get(&(cx + dx, cy + dy)) {
                    b.iter().for_each(|i| f(*i));
                }
            }
        }
    }
}

/// A polygon using both positions would lose an edge if they merged.
fn share_a_polygon(a: &Node, b: &Node) -> bool {
    a.polys.iter().any(|p| b.polys.contains(p))
}

/// Closest pair of distinct positions within `eps_d` whose polygons are
/// disjoint.
fn closest_pair(nodes: &[Node], eps_d: f64) -> Option<(usize, usize)> {
    let index = GridIndex::build(nodes.iter().map(|n| n.pos), eps_d);
    let mut best: Option<(f64, usize, usize)> = None;
    for (i, a) in nodes.iter().enumerate() {
        index.for_each_near(a.pos, |j| {
            if j <= i {
                return;
            }
            let b = &nodes[j];
            let d = a.pos.dist(b.pos);
            if d == 0.0 || d > eps_d || share_a_polygon(a, b) {
                return;
            }
            if best.is_none_or(|(bd, bi, bj)| (d, i, j) < (bd, bi, bj)) {
                best = Some((d, i, j));
            }
        });
    }
    best.map(|(_, i, j)| (i, j))
}

fn dedup_ring(vertices: &mut Vec<Point>) {
    vertices.dedup_by(|a, b| key(*a) == key(*b));
    while vertices.len() > 1 && key(vertices[0]) == key(*vertices.last().unwrap()) {
        vertices.pop();
    }
}

/// Merges near vertices of different polygons into their midpoint until no
/// such pair within `eps_d` remains. Every vertex sitting on either position
/// moves, so already-merged corners stay shared.
pub fn merge_vertices(polygons: &mut [Polygon], eps_d: f64) {
    loop {
        let nodes = collect_nodes(polygons);
        let Some((i, j)) = closest_pair(&nodes, eps_d) else {
            break;
        };
        let (ka, kb) = (key(nodes[i].pos), key(nodes[j].pos));
        let mid = nodes[i].pos.midpoint(nodes[j].pos);
        let mut touched: Vec<usize> = nodes[i].polys.iter().chain(&nodes[j].polys).copied().collect();
        touched.sort_unstable();
        touched.dedup();
        for pi in touched {
            let poly = &mut polygons[pi];
            for v in &mut poly.vertices {
                let k = key(*v);
                if k == ka || k == kb {
                    *v = mid;
                }
            }
            dedup_ring(&mut poly.vertices);
        }
    }
}

fn abs_cos(a: Point, b: Point, c: Point) -> Option<f64> {
    let (u, v) = (b - a, c - b);
    let n = u.norm() * v.norm();
    if n == 0.0 {
        return None;
    }
    Some((u.dot(v) / n).abs())
}

/// Repeatedly drops the first vertex whose two incident edges satisfy
/// `|cos| >= eps_a`.
pub fn remove_collinear(vertices: &mut Vec<Point>, eps_a: f64) {
    loop {
        let n = vertices.len();
        if n < 3 {
            return;
        }
        let hit = (0..n).find(|&j| {
            let a = vertices[(j + n - 1) % n];
            let c = vertices[(j + 1) % n];
            abs_cos(a, vertices[j], c).is_none_or(|cos| cos >= eps_a)
        });
        match hit {
            Some(j) => {
                vertices.remove(j);
                dedup_ring(vertices);
            }
            None => return,
        }
    }
}

/// Merge and collinear removal, repeated until neither changes anything.
/// Removing a vertex can make two positions eligible for merging, so a
/// single pass is not always a fixed point.
pub fn refine_polygons(set: &PolygonSet, thresholds: &Thresholds) -> PolygonSet {
    let mut polygons = set.polygons.clone();
    for p in &mut polygons {
        dedup_ring(&mut p.vertices);
        p.normalize();
    }
    loop {
        let before = polygons.clone();
        merge_vertices(&mut polygons, thresholds.eps_d);
        for p in &mut polygons {
            remove_collinear(&mut p.vertices, thresholds.eps_a);
            p.normalize();
        }
        polygons.retain(|p| p.vertices.len() >= 3);
        if polygons == before {
            break;
        }
    }
    PolygonSet { polygons }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask_io::ClassId;

    fn poly(pts: &[(f64, f64)]) -> Polygon {
        Polygon::new(
            pts.iter().map(|&(x, y)| Point::new(x, y)).collect(),
            ClassId::WALL,
        )
    }

    fn square(x: f64, y: f64, s: f64) -> Polygon {
        poly(&[(x, y), (x + s, y), (x + s, y + s), (x, y + s)])
    }

    #[test]
    fn near_corners_merge_to_midpoint() {
        // corner (10,10) of A and corner (13,10) of B are 3 apart
        let set = PolygonSet {
            polygons: vec![square(0.0, 0.0, 10.0), square(13.0, 10.0, 10.0)],
        };
        let out = refine_polygons(&set, &Thresholds::default());
        let mid = Point::new(11.5, 10.0);
        assert!(out.polygons[0].vertices.contains(&mid));
        assert!(out.polygons[1].vertices.contains(&mid));
        assert_eq!(out.polygons[0].vertices.len(), 4);
        assert_eq!(out.polygons[1].vertices.len(), 4);
    }

    #[test]
    fn far_corners_do_not_merge() {
        let set = PolygonSet {
            polygons: vec![square(0.0, 0.0, 10.0), square(14.5, 0.0, 10.0)],
        };
        let out = refine_polygons(&set, &Thresholds::default());
        assert_eq!(out, PolygonSet { polygons: set.polygons.clone() });
    }

    #[test]
    fn same_polygon_vertices_do_not_merge() {
        let set = PolygonSet {
            polygons: vec![square(0.0, 0.0, 3.0)],
        };
        let out = refine_polygons(&set, &Thresholds::default());
        assert_eq!(out.polygons[0].vertices.len(), 4);
    }

    #[test]
    fn three_way_cluster_terminates() {
        let set = PolygonSet {
            polygons: vec![
                square(0.0, 0.0, 10.0),
                square(11.0, 0.0, 10.0),
                square(0.0, 11.0, 10.0),
                square(11.0, 11.0, 10.0),
            ],
        };
        let out = refine_polygons(&set, &Thresholds::default());
        // the four inner corners collapse to one shared point
        let inner: Vec<Point> = out.polygons.iter().map(|p| p.vertices.iter().copied().find(|v| (v.x - 10.5).abs() < 1.0 && (v.y - 10.5).abs() < 1.0).unwrap()).collect();
        assert!(inner.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(refine_polygons(&out, &Thresholds::default()), out);
    }

    #[test]
    fn collinear_middle_vertex_removed() {
        let mut v = vec![Point::new(0.0, 0.0), Point::new(5.0, 0.1), Point::new(10.0, 0.0)];
        // 24.99 / 25.01 against cos(14 deg)
        let cos = abs_cos(v[0], v[1], v[2]).unwrap();
        assert!((cos - 24.99 / 25.01).abs() < 1e-12);
        assert!(cos >= Thresholds::default().eps_a);
        let mut square_with_bump = vec![
            Point::new(0.0, 0.0),
            Point::new(5.0, 0.1),
            Point::new(10.0, 0.0),
            Point::new(10.0, 10.0),
            Point::new(0.0, 10.0),
        ];
        remove_collinear(&mut square_with_bump, Thresholds::default().eps_a);
        assert_eq!(square_with_bump.len(), 4);
        assert!(!square_with_bump.contains(&Point::new(5.0, 0.1)));
        remove_collinear(&mut v, Thresholds::default().eps_a);
        assert!(v.len() < 3);
    }

    #[test]
    fn right_angle_kept() {
        let mut v = vec![Point::new(0.0, 0.0), Point::new(5.0, 0.0), Point::new(5.0, 5.0)];
        assert_eq!(abs_cos(v[0], v[1], v[2]), Some(0.0));
        remove_collinear(&mut v, Thresholds::default().eps_a);
        assert_eq!(v.len(), 3);
    }

    #[test]
    fn degenerate_polygons_dropped() {
        let set = PolygonSet {
            polygons: vec![poly(&[(0.0, 0.0), (5.0, 0.0), (10.0, 0.0)]), square(20.0, 0.0, 5.0)],
        };
        let out = refine_polygons(&set, &Thresholds::default());
        assert_eq!(out.polygons.len(), 1);
    }

    #[test]
    fn grid_index_is_exact() {
        let pts: Vec<Point> = (0..200)
            .map(|i| {
                let t = i as f64;
                Point::new((t * 7.31) % 37.0, (t * 3.17) % 29.0)
            })
            .collect();
        let idx = GridIndex::build(pts.iter().copied(), 4.0);
        for (i, p) in pts.iter().enumerate() {
            let mut near = Vec::new();
            idx.for_each_near(*p, |j| {
                if pts[j].dist(*p) <= 4.0 {
                    near.push(j)
                }
            });
            near.sort();
            let brute: Vec<usize> = (0..pts.len()).filter(|j| pts[*j].dist(pts[i]) <= 4.0).collect();
            assert_eq!(near, brute);
        }
    }
}
