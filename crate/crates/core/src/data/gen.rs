//! Procedural floorplan generator: recursive axis-aligned splits, optional
//! pairwise merges into rectilinear L-shapes, and door/window placement.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::ClassSpec;
use crate::geometry::{Entity, EntityKind, Floorplan, Point};

/// Knobs for the synthetic floorplan generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    /// Image side in pixels; plans live on the `[0, image_size]²` canvas.
    pub image_size: usize,
    /// Margin between the canvas border and the building footprint.
    pub margin: usize,
    /// Inclusive range for the number of rooms per plan.
    pub rooms_min: usize,
    pub rooms_max: usize,
    /// Minimum room side length in pixels.
    pub min_room_side: usize,
    /// How far a split may wander from the midpoint, as a fraction of the
    /// feasible half-range (0 = always split in the middle).
    pub split_jitter: f64,
    /// Probability that one adjacent room pair is merged into an L-shape.
    pub merge_prob: f64,
    /// Wall stroke thickness in pixels.
    pub wall_px: usize,
    /// Number of room classes.
    pub room_classes: usize,
    /// Probability of a door on each eligible interior wall.
    pub door_rate: f64,
    /// Probability of a window on each eligible exterior wall.
    pub window_rate: f64,
    /// Dataset seed; record seeds are derived from it.
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            image_size: 128,
            margin: 8,
            rooms_min: 2,
            rooms_max: 6,
            min_room_side: 20,
            split_jitter: 0.4,
            merge_prob: 0.3,
            wall_px: 3,
            room_classes: 6,
            door_rate: 0.9,
            window_rate: 0.7,
            seed: 0,
        }
    }
}

/// Opening lengths along the wall, in pixels.
const DOOR_LEN: i64 = 8;
const WINDOW_LEN: i64 = 10;
/// Clearance kept between an opening and the wall segment's ends.
const OPENING_MARGIN: i64 = 3;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GenError {
    #[error("invalid generator config: {0}")]
    BadConfig(String),
    #[error("cannot split the footprint into {want} rooms of side >= {min_side}")]
    Infeasible { want: usize, min_side: usize },
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: &str| Err(GenError::BadConfig(m.to_string()));
        if self.image_size == 0 {
            return bad("image_size must be positive");
        }
        if self.rooms_min == 0 || self.rooms_min > self.rooms_max {
            return bad("room count range must satisfy 1 <= rooms_min <= rooms_max");
        }
        if self.min_room_side == 0 {
            return bad("min_room_side must be positive");
        }
        if self.min_room_side * 2 > self.image_size {
            return bad("min_room_side * 2 must not exceed image_size");
        }
        if self.image_size < 2 * self.margin + self.min_room_side {
            return bad("margins leave no space for a room");
        }
        for (name, p) in [
            ("split_jitter", self.split_jitter),
            ("merge_prob", self.merge_prob),
            ("door_rate", self.door_rate),
            ("window_rate", self.window_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(&format!("{name} must lie in [0, 1]"));
            }
        }
        if self.room_classes == 0 {
            return bad("room_classes must be positive");
        }
        Ok(())
    }
}

/// Axis-aligned rectangle on the integer lattice; interiors are open.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Rect {
    x0: i64,
    y0: i64,
    x1: i64,
    y1: i64,
}

impl Rect {
    fn w(&self) -> i64 {
        self.x1 - self.x0
    }
    fn h(&self) -> i64 {
        self.y1 - self.y0
    }
    fn area(&self) -> i64 {
        self.w() * self.h()
    }
    fn corners(&self) -> Vec<Point> {
        vec![
            [self.x0 as f64, self.y0 as f64],
            [self.x1 as f64, self.y0 as f64],
            [self.x1 as f64, self.y1 as f64],
            [self.x0 as f64, self.y1 as f64],
        ]
    }
    fn contains_cell(&self, cx: i64, cy: i64) -> bool {
        cx >= self.x0 && cx + 1 <= self.x1 && cy >= self.y0 && cy + 1 <= self.y1
    }
}

/// Split `rect` at a jittered position if both halves keep `min` side length.
fn try_split(rect: Rect, min: i64, jitter: f64, rng: &mut ChaCha8Rng) -> Option<(Rect, Rect)> {
    let can_x = rect.w() >= 2 * min;
    let can_y = rect.h() >= 2 * min;
    if !can_x && !can_y {
        return None;
    }
    // Prefer cutting the longer axis; break ties at random.
    let split_x = match (can_x, can_y) {
        (true, false) => true,
        (false, true) => false,
        _ => {
            if rect.w() != rect.h() {
                rect.w() > rect.h()
            } else {
                rng.gen_bool(0.5)
            }
        }
    };
    let (lo, hi) = if split_x { (rect.x0, rect.x1) } else { (rect.y0, rect.y1) };
    let mid = (lo + hi) / 2;
    let half = (hi - lo) / 2 - min;
    let off = if half > 0 {
        let span = (half as f64 * jitter).floor() as i64;
        if span > 0 {
            rng.gen_range(-span..=span)
        } else {
            0
        }
    } else {
        0
    };
    let cut = (mid + off).clamp(lo + min, hi - min);
    Some(if split_x {
        (Rect { x1: cut, ..rect }, Rect { x0: cut, ..rect })
    } else {
        (Rect { y1: cut, ..rect }, Rect { y0: cut, ..rect })
    })
}

/// Recursive splitting until `target` leaves exist or nothing can split.
fn bsp(footprint: Rect, target: usize, min: i64, jitter: f64, rng: &mut ChaCha8Rng) -> Vec<Rect> {
    let mut leaves = vec![footprint];
    while leaves.len() < target {
        // Split the largest splittable leaf for balanced rooms.
        let mut order: Vec<usize> = (0..leaves.len()).collect();
        order.sort_by_key(|&i| -leaves[i].area());
        let mut done = true;
        for &i in &order {
            if let Some((a, b)) = try_split(leaves[i], min, jitter, rng) {
                leaves[i] = a;
                leaves.push(b);
                done = false;
                break;
            }
        }
        if done {
            break;
        }
    }
    leaves
}

/// Positive-length shared boundary between two rects, if any.
fn shared_edge(a: &Rect, b: &Rect) -> Option<Wall> {
    let (o0, o1) = (a.y0.max(b.y0), a.y1.min(b.y1));
    if (a.x1 == b.x0 || b.x1 == a.x0) && o1 > o0 {
        let x = if a.x1 == b.x0 { a.x1 } else { b.x1 };
        return Some(Wall { vertical: true, line: x, lo: o0, hi: o1 });
    }
    let (o0, o1) = (a.x0.max(b.x0), a.x1.min(b.x1));
    if (a.y1 == b.y0 || b.y1 == a.y0) && o1 > o0 {
        let y = if a.y1 == b.y0 { a.y1 } else { b.y1 };
        return Some(Wall { vertical: false, line: y, lo: o0, hi: o1 });
    }
    None
}

/// A maximal straight wall segment shared by two regions (or the exterior).
#[derive(Clone, Copy, Debug, PartialEq)]
struct Wall {
    vertical: bool,
    /// The fixed coordinate (x for vertical walls, y for horizontal).
    line: i64,
    lo: i64,
    hi: i64,
}

impl Wall {
    fn len(&self) -> i64 {
        self.hi - self.lo
    }
    /// Two-corner opening segment of `len` at offset `t` along the wall.
    fn opening(&self, t: i64, len: i64) -> Vec<Point> {
        if self.vertical {
            vec![[self.line as f64, t as f64], [self.line as f64, (t + len) as f64]]
        } else {
            vec![[t as f64, self.line as f64], [(t + len) as f64, self.line as f64]]
        }
    }
}

/// Trace the boundary of the union of `rects` (edge-connected, interiors
/// disjoint) as one rectilinear polygon with collinear runs collapsed.
fn union_outline(rects: &[Rect]) -> Vec<Point> {
    assert!(!rects.is_empty());
    let inside = |cx: i64, cy: i64| rects.iter().any(|r| r.contains_cell(cx, cy));
    let x0 = rects.iter().map(|r| r.x0).min().unwrap();
    let y0 = rects.iter().map(|r| r.y0).min().unwrap();
    let x1 = rects.iter().map(|r| r.x1).max().unwrap();
    let y1 = rects.iter().map(|r| r.y1).max().unwrap();
    // Directed unit edges keeping the interior on the walker's left
    // (screen coordinates, y down).
    let mut next = std::collections::HashMap::new();
    for cy in y0..y1 {
        for cx in x0..x1 {
            if !inside(cx, cy) {
                continue;
            }
            if !inside(cx, cy - 1) {
                next.insert((cx + 1, cy), (cx, cy));
            }
            if !inside(cx, cy + 1) {
                next.insert((cx, cy + 1), (cx + 1, cy + 1));
            }
            if !inside(cx - 1, cy) {
                next.insert((cx, cy), (cx, cy + 1));
            }
            if !inside(cx + 1, cy) {
                next.insert((cx + 1, cy + 1), (cx + 1, cy));
            }
        }
    }
    let start = *next.keys().min().unwrap();
    let mut path = vec![start];
    let mut cur = start;
    loop {
        let nxt = next[&cur];
        if nxt == start {
            break;
        }
        path.push(nxt);
        cur = nxt;
        assert!(path.len() <= next.len(), "boundary walk failed to close");
    }
    // Collapse collinear runs of unit steps into single corners.
    let n = path.len();
    let mut corners = Vec::new();
    for i in 0..n {
        let p = path[(i + n - 1) % n];
        let q = path[i];
        let r = path[(i + 1) % n];
        let colinear = (q.0 - p.0, q.1 - p.1) == (r.0 - q.0, r.1 - q.1);
        if !colinear {
            corners.push([q.0 as f64, q.1 as f64]);
        }
    }
    corners
}

/// Axis-aligned edges of a rectilinear polygon, normalized to `lo < hi`.
fn polygon_walls(corners: &[Point]) -> Vec<Wall> {
    let n = corners.len();
    let mut walls = Vec::with_capacity(n);
    for i in 0..n {
        let a = corners[i];
        let b = corners[(i + 1) % n];
        if a[0] == b[0] {
            let (lo, hi) = if a[1] < b[1] { (a[1], b[1]) } else { (b[1], a[1]) };
            walls.push(Wall { vertical: true, line: a[0] as i64, lo: lo as i64, hi: hi as i64 });
        } else {
            let (lo, hi) = if a[0] < b[0] { (a[0], b[0]) } else { (b[0], a[0]) };
            walls.push(Wall { vertical: false, line: a[1] as i64, lo: lo as i64, hi: hi as i64 });
        }
    }
    walls
}

/// Overlap of two collinear walls, if it has positive length.
fn wall_overlap(a: &Wall, b: &Wall) -> Option<Wall> {
    if a.vertical != b.vertical || a.line != b.line {
        return None;
    }
    let (lo, hi) = (a.lo.max(b.lo), a.hi.min(b.hi));
    (hi > lo).then_some(Wall { lo, hi, ..*a })
}

/// Generate one floorplan. Deterministic for a `(config, seed)` pair.
pub fn generate_floorplan(cfg: &GeneratorConfig, seed: u64) -> Result<Floorplan, GenError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = cfg.image_size as i64;
    let m = cfg.margin as i64;
    let footprint = Rect { x0: m, y0: m, x1: s - m, y1: s - m };
    let rooms = rng.gen_range(cfg.rooms_min..=cfg.rooms_max);
    let want_merge = cfg.merge_prob > 0.0 && rng.gen_bool(cfg.merge_prob);
    let target = rooms + usize::from(want_merge);

    let leaves =
        bsp(footprint, target, cfg.min_room_side as i64, cfg.split_jitter, &mut rng);
    if leaves.len() < cfg.rooms_min {
        return Err(GenError::Infeasible { want: cfg.rooms_min, min_side: cfg.min_room_side });
    }
    debug_assert_eq!(leaves.iter().map(Rect::area).sum::<i64>(), footprint.area());

    // Merge one adjacent pair into an L-shape when the extra leaf exists.
    let mut polys: Vec<Vec<Point>>;
    if want_merge && leaves.len() == target {
        let mut pairs = Vec::new();
        for i in 0..leaves.len() {
            for j in i + 1..leaves.len() {
                if shared_edge(&leaves[i], &leaves[j]).is_some() {
                    pairs.push((i, j));
                }
            }
        }
        let (i, j) = pairs[rng.gen_range(0..pairs.len())];
        polys = leaves
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != i && *k != j)
            .map(|(_, r)| r.corners())
            .collect();
        polys.push(union_outline(&[leaves[i], leaves[j]]));
    } else {
        polys = leaves.iter().map(Rect::corners).collect();
    }

    let spec = ClassSpec { room_classes: cfg.room_classes };
    let mut entities: Vec<Entity> = polys
        .into_iter()
        .map(|corners| Entity {
            kind: EntityKind::Room,
            label: rng.gen_range(0..cfg.room_classes),
            corners,
        })
        .collect();

    // Doors on interior walls shared by two rooms.
    let walls: Vec<Vec<Wall>> = entities.iter().map(|e| polygon_walls(&e.corners)).collect();
    let mut openings = Vec::new();
    for i in 0..walls.len() {
        for j in i + 1..walls.len() {
            let mut best: Option<Wall> = None;
            for wa in &walls[i] {
                for wb in &walls[j] {
                    if let Some(o) = wall_overlap(wa, wb) {
                        if best.map_or(true, |b| o.len() > b.len()) {
                            best = Some(o);
                        }
                    }
                }
            }
            let Some(wall) = best else { continue };
            if wall.len() < DOOR_LEN + 2 * OPENING_MARGIN || !rng.gen_bool(cfg.door_rate) {
                continue;
            }
            let t = rng.gen_range(wall.lo + OPENING_MARGIN..=wall.hi - OPENING_MARGIN - DOOR_LEN);
            openings.push(Entity {
                kind: EntityKind::Door,
                label: spec.door(),
                corners: wall.opening(t, DOOR_LEN),
            });
        }
    }

    // Windows on walls lying on the footprint boundary.
    for ws in &walls {
        for w in ws {
            let exterior = if w.vertical {
                w.line == footprint.x0 || w.line == footprint.x1
            } else {
                w.line == footprint.y0 || w.line == footprint.y1
            };
            if !exterior || w.len() < WINDOW_LEN + 2 * OPENING_MARGIN {
                continue;
            }
            if !rng.gen_bool(cfg.window_rate) {
                continue;
            }
            let t = rng.gen_range(w.lo + OPENING_MARGIN..=w.hi - OPENING_MARGIN - WINDOW_LEN);
            openings.push(Entity {
                kind: EntityKind::Window,
                label: spec.window(),
                corners: w.opening(t, WINDOW_LEN),
            });
        }
    }
    entities.extend(openings);

    let side = cfg.image_size as u32;
    Ok(Floorplan { width: side, height: side, entities }.canonical())
}
