//! Seeded generator of small rectilinear floor-plan masks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mask_io::{ClassId, SegMask};

fn fill(mask: &mut SegMask, x0: usize, y0: usize, x1: usize, y1: usize, class: ClassId) {
    for y in y0..y1.min(mask.height()) {
        for x in x0..x1.min(mask.width()) {
            mask.set(x, y, class);
        }
    }
}

/// Outer wall ring with windows, one interior partition with a door, an
/// optional second partition and an optional freestanding stair block.
/// Walls are 3 to 6 pixels thick.
pub fn synthetic_plan(seed: u64) -> SegMask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = rng.random_range(256..=384usize);
    let h = rng.random_range(200..=300usize);
    let m = rng.random_range(4..=10usize);
    let t = rng.random_range(3..=6usize);
    let mut mask = SegMask::new(w, h);
    let (x0, y0, x1, y1) = (m, m, w - m, h - m);
    fill(&mut mask, x0, y0, x1, y0 + t, ClassId::WALL);
    fill(&mut mask, x0, y1 - t, x1, y1, ClassId::WALL);
    fill(&mut mask, x0, y0, x0 + t, y1, ClassId::WALL);
    fill(&mut mask, x1 - t, y0, x1, y1, ClassId::WALL);

    // vertical partition with a door
    let px = rng.random_range(x0 + t + 40..=x1 - 2 * t - 40);
    fill(&mut mask, px, y0 + t, px + t, y1 - t, ClassId::WALL);
    let door_len = rng.random_range(10..=16usize);
    let dy = rng.random_range(y0 + t + 4..=y1 - t - 4 - door_len);
    let door = if rng.random_bool(0.25) { ClassId::SLIDING_DOOR } else { ClassId::DOOR };
    fill(&mut mask, px, dy, px + t, dy + door_len, door);

    // windows in the top and bottom walls, left of the partition or right of it
    for (wy, count) in [(y0, rng.random_range(1..=2usize)), (y1 - t, rng.random_range(0..=1usize))] {
        for k in 0..count {
            let (lo, hi) = if k == 0 { (x0 + t + 4, px - 4) } else { (px + t + 4, x1 - t - 4) };
            let len = rng.random_range(8..=20usize).min(hi - lo);
            let wx = rng.random_range(lo..=hi - len);
            fill(&mut mask, wx, wy, wx + len, wy + t, ClassId::WINDOW);
        }
    }

    // optional horizontal partition in the right room
    if rng.random_bool(0.5) && y1 - y0 > 2 * t + 60 {
        let py = rng.random_range(y0 + t + 30..=y1 - 2 * t - 30);
        fill(&mut mask, px + t, py, x1 - t, py + t, ClassId::WALL);
    }

    // freestanding stairs in the left room
    if rng.random_bool(0.6) {
        let room_w = px - (x0 + t);
        let room_h = (y1 - t) - (y0 + t);
        if room_w >= 30 && room_h >= 40 {
            let sw = rng.random_range(10..=14usize);
            let sh = rng.random_range(18..=26usize);
            let sx = rng.random_range(x0 + t + 8..=px - 8 - sw);
            let sy = rng.random_range(y0 + t + 8..=y1 - t - 8 - sh);
            fill(&mut mask, sx, sy, sx + sw, sy + sh, ClassId::STAIRS);
        }
    }
    mask
}

/// `n` plans from consecutive seeds.
pub fn synthetic_corpus(n: usize, seed: u64) -> Vec<SegMask> {
    (0..n as u64).map(|i| synthetic_plan(seed.wrapping_add(i))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_varied() {
        assert_eq!(synthetic_plan(3), synthetic_plan(3));
        let corpus = synthetic_corpus(30, 0);
        let mut seen = [false; ClassId::COUNT];
        for m in &corpus {
            let h = m.histogram();
            assert!(h[ClassId::WALL.index()] > 0);
            for c in ClassId::all() {
                seen[c.index()] |= h[c.index()] > 0;
            }
        }
        for c in [ClassId::DOOR, ClassId::SLIDING_DOOR, ClassId::WINDOW, ClassId::STAIRS] {
            assert!(seen[c.index()], "{c}");
        }
    }
}
