use std::fmt::Write as _;

use serde_json::{json, Value};

use crate::geom::Point;
use crate::mask_io::ClassId;

use super::{Polygon, PolygonSet, VectorizeError};

/// One polygon per line: `class_id n x1 y1 ... xn yn`, two decimals.
pub fn polygons_to_text(set: &PolygonSet) -> String {
    let mut out = String::new();
    for p in &set.polygons {
        write!(out, "{} {}", p.class.value(), p.vertices.len()).unwrap();
        for v in &p.vertices {
            write!(out, " {:.2} {:.2}", v.x, v.y).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn parse_polygons_text(text: &str) -> Result<PolygonSet, VectorizeError> {
    let mut polygons = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: &str| VectorizeError::Parse {
            line: line_no,
            msg: msg.to_string(),
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 2 {
            return Err(err("expected class id and vertex count"));
        }
        let class: u8 = fields[0].parse().map_err(|_| err("bad class id"))?;
        let class = ClassId::new(class).map_err(|e| err(&e.to_string()))?;
        let n: usize = fields[1].parse().map_err(|_| err("bad vertex count"))?;
        if fields.len() != 2 + 2 * n {
            return Err(err(&format!(
                "expected {} coordinates, found {}",
                2 * n,
                fields.len() - 2
            )));
        }
        let coords = fields[2..]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| err("bad coordinate"))?;
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(err("non-finite coordinate"));
        }
        let vertices = coords.chunks_exact(2).map(|c| Point::new(c[0], c[1])).collect();
        polygons.push(Polygon {
            vertices,
            class,
            fallback: false,
        });
    }
    Ok(PolygonSet { polygons })
}

/// Feature collection with one closed polygon ring per feature.
pub fn polygons_to_geojson(set: &PolygonSet) -> Value {
    let features: Vec<Value> = set
        .polygons
        .iter()
        .map(|p| {
            let mut ring: Vec<Value> = p
                .vertices
                .iter()
                .map(|v| json!([round2(v.x), round2(v.y)]))
                .collect();
            if let Some(first) = ring.first().cloned() {
                ring.push(first);
            }
            json!({
                "type": "Feature",
                "properties": {
                    "class_id": p.class.value(),
                    "class": p.class.name(),
                },
                "geometry": {
                    "type": "Polygon",
                    "coordinates": [ring],
                },
            })
        })
        .collect();
    json!({ "type": "FeatureCollection", "features": features })
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}
