//! Floorplan geometry: the vector representation, canonical form, and the
//! polygon operations (area, angles, rasterization, IoU, instance extraction)
//! shared by the codec, metrics, and data generator.
//!
//! Coordinates are in raster convention: x grows right, y grows down, so a
//! polygon that looks counterclockwise on screen has negative shoelace sum.
//! All geometry runs in f64 regardless of the model's scalar type.

use serde::{Deserialize, Serialize};

/// 2-D point, `[x, y]`.
pub type Point = [f64; 2];

/// What an entity is. Rooms are closed polygons; windows and doors are
/// two-corner wall segments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityKind {
    Room,
    Window,
    Door,
}

/// One labeled polygon (or segment) of a floorplan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub kind: EntityKind,
    /// Semantic class id (rooms use the room classes; windows and doors each
    /// have their own fixed class — see the codec's class layout).
    pub label: usize,
    pub corners: Vec<Point>,
}

/// A vector floorplan on a `width` x `height` raster canvas.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Floorplan {
    pub width: u32,
    pub height: u32,
    pub entities: Vec<Entity>,
}

/// Twice the signed shoelace sum (raw screen coordinates). Negative for
/// screen-counterclockwise traversal.
fn shoelace2(corners: &[Point]) -> f64 {
    let n = corners.len();
    let mut s = 0.0;
    for i in 0..n {
        let [x1, y1] = corners[i];
        let [x2, y2] = corners[(i + 1) % n];
        s += x1 * y2 - x2 * y1;
    }
    s
}

/// Unsigned polygon area.
pub fn polygon_area(corners: &[Point]) -> f64 {
    shoelace2(corners).abs() / 2.0
}

/// True if the polygon is counterclockwise as drawn on screen (y down).
pub fn is_ccw_screen(corners: &[Point]) -> bool {
    shoelace2(corners) < 0.0
}

/// Index of the canonical start corner: minimum y, ties by minimum x.
pub fn canonical_start(corners: &[Point]) -> usize {
    let mut best = 0;
    for (i, c) in corners.iter().enumerate() {
        let b = corners[best];
        if c[1] < b[1] || (c[1] == b[1] && c[0] < b[0]) {
            best = i;
        }
    }
    best
}

impl Entity {
    /// Key used to order entities: the canonical start corner as (y, x).
    pub fn order_key(&self) -> (f64, f64) {
        let c = self.corners[canonical_start(&self.corners)];
        (c[1], c[0])
    }

    /// Canonical corner list: rooms become screen-counterclockwise and start
    /// at the topmost-then-leftmost corner; windows/doors order their two
    /// endpoints top-to-bottom then left-to-right.
    pub fn canonical(&self) -> Entity {
        let mut corners = self.corners.clone();
        match self.kind {
            EntityKind::Room => {
                if !is_ccw_screen(&corners) {
                    corners.reverse();
                }
                let s = canonical_start(&corners);
                corners.rotate_left(s);
            }
            EntityKind::Window | EntityKind::Door => {
                if corners.len() == 2 {
                    let (a, b) = (corners[0], corners[1]);
                    if (b[1], b[0]) < (a[1], a[0]) {
                        corners.swap(0, 1);
                    }
                }
            }
        }
        Entity { kind: self.kind, label: self.label, corners }
    }
}

impl Floorplan {
    /// Fully canonical form: every entity canonicalized, rooms first ordered
    /// top-to-bottom then left-to-right by start corner, then windows and
    /// doors in the same order. Ties keep their original relative order.
    pub fn canonical(&self) -> Floorplan {
        let mut rooms: Vec<Entity> = Vec::new();
        let mut openings: Vec<Entity> = Vec::new();
        for e in &self.entities {
            let c = e.canonical();
            match c.kind {
                EntityKind::Room => rooms.push(c),
                _ => openings.push(c),
            }
        }
        let key = |e: &Entity| e.order_key();
        rooms.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
        openings.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
        rooms.extend(openings);
        Floorplan { width: self.width, height: self.height, entities: rooms }
    }

    /// Entities of a given kind.
    pub fn of_kind(&self, kind: EntityKind) -> impl Iterator<Item = &Entity> {
        self.entities.iter().filter(move |e| e.kind == kind)
    }
}

/// Interior angle in degrees at every corner of a screen-counterclockwise
/// polygon: 90 for a convex axis-aligned corner, 270 for a reflex one.
/// Degenerate (zero-length) edges yield 0 for that corner.
pub fn corner_angles(corners: &[Point]) -> Vec<f64> {
    let n = corners.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let prev = corners[(i + n - 1) % n];
        let cur = corners[i];
        let next = corners[(i + 1) % n];
        let a = [prev[0] - cur[0], prev[1] - cur[1]];
        let b = [next[0] - cur[0], next[1] - cur[1]];
        let la = (a[0] * a[0] + a[1] * a[1]).sqrt();
        let lb = (b[0] * b[0] + b[1] * b[1]).sqrt();
        if la == 0.0 || lb == 0.0 {
            out.push(0.0);
            continue;
        }
        let cross = a[0] * b[1] - a[1] * b[0];
        let dot = a[0] * b[0] + a[1] * b[1];
        let mut deg = cross.atan2(dot).to_degrees();
        if deg <= 0.0 {
            deg += 360.0;
        }
        out.push(deg);
    }
    out
}

/// Even-odd rasterization of a polygon onto a `w` x `h` pixel grid. A pixel
/// is inside when its center `(j + 0.5, i + 0.5)` is inside the polygon.
pub fn rasterize_polygon(corners: &[Point], w: usize, h: usize) -> Vec<bool> {
    let mut mask = vec![false; w * h];
    if corners.len() < 3 {
        return mask;
    }
    let n = corners.len();
    let mut xs: Vec<f64> = Vec::with_capacity(8);
    for row in 0..h {
        let yc = row as f64 + 0.5;
        xs.clear();
        for i in 0..n {
            let [x1, y1] = corners[i];
            let [x2, y2] = corners[(i + 1) % n];
            // Half-open crossing rule: counts each scanline crossing exactly
            // once, including at shared vertices.
            if (y1 > yc) != (y2 > yc) {
                xs.push(x1 + (yc - y1) * (x2 - x1) / (y2 - y1));
            }
        }
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for pair in xs.chunks_exact(2) {
            let (xa, xb) = (pair[0], pair[1]);
            // Pixels whose center lies in [xa, xb).
            let j0 = (xa - 0.5).ceil().max(0.0) as usize;
            let j1 = ((xb - 0.5).ceil() as isize).min(w as isize);
            for j in j0 as isize..j1 {
                mask[row * w + j as usize] = true;
            }
        }
    }
    mask
}

/// Intersection-over-union of two polygons rasterized on the same canvas.
/// Returns 0 when both are empty at this resolution.
pub fn polygon_iou(a: &[Point], b: &[Point], w: usize, h: usize) -> f64 {
    let ma = rasterize_polygon(a, w, h);
    let mb = rasterize_polygon(b, w, h);
    mask_iou(&ma, &mb)
}

/// IoU of two boolean masks of equal length.
pub fn mask_iou(a: &[bool], b: &[bool]) -> f64 {
    assert_eq!(a.len(), b.len(), "mask length mismatch");
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        if x && y {
            inter += 1;
        }
        if x || y {
            union += 1;
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// A connected component of equal-labeled pixels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    pub label: usize,
    /// Flat pixel indices (row * w + col), sorted ascending.
    pub pixels: Vec<usize>,
}

/// 4-connected components of a label mask, skipping `background`. Components
/// are returned in scan order of their first pixel.
pub fn extract_instances(labels: &[usize], w: usize, h: usize, background: usize) -> Vec<Instance> {
    assert_eq!(labels.len(), w * h, "label mask length vs w*h");
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut queue = std::collections::VecDeque::new();
    for start in 0..w * h {
        if seen[start] || labels[start] == background {
            continue;
        }
        let label = labels[start];
        let mut pixels = Vec::new();
        seen[start] = true;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            pixels.push(p);
            let (y, x) = (p / w, p % w);
            let mut visit = |q: usize| {
                if !seen[q] && labels[q] == label {
                    seen[q] = true;
                    queue.push_back(q);
                }
            };
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < w {
                visit(p + 1);
            }
            if y > 0 {
                visit(p - w);
            }
            if y + 1 < h {
                visit(p + w);
            }
        }
        pixels.sort_unstable();
        out.push(Instance { label, pixels });
    }
    out
}
