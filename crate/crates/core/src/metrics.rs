//! Evaluation protocol: IoU-based room matching, then precision/recall/F1
//! for rooms, corners, angles, room labels, and window/door segments, plus
//! pixelwise segmentation scores.

use serde::Serialize;

use crate::geometry::{corner_angles, polygon_iou, rasterize_polygon, EntityKind, Floorplan};

/// Corner distance threshold in pixels (inclusive).
pub const CORNER_TOLERANCE_PX: f64 = 10.0;
/// Wedge-angle tolerance in degrees (strict).
pub const ANGLE_TOLERANCE_DEG: f64 = 5.0;
/// A room match counts once its IoU strictly exceeds this.
pub const ROOM_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("resolution mismatch: ground truth {gt:?}, prediction {pred:?}")]
    ResolutionMismatch { gt: (u32, u32), pred: (u32, u32) },
}

/// One-to-one room pairing by descending IoU.
#[derive(Clone, Debug, Default)]
pub struct MatchResult {
    /// (gt room index, pred room index, IoU); every IoU is positive.
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_gt: Vec<usize>,
    pub unmatched_pred: Vec<usize>,
}

/// Precision, recall, and their harmonic mean.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    /// Build from counts with the empty-side conventions: an empty
    /// prediction scores precision 0 against non-empty ground truth and 1
    /// against empty; recall over empty ground truth is vacuously 1.
    pub fn from_counts(tp: usize, n_pred: usize, n_gt: usize) -> Self {
        let precision = if n_pred > 0 {
            tp as f64 / n_pred as f64
        } else if n_gt == 0 {
            1.0
        } else {
            0.0
        };
        let recall = if n_gt > 0 { tp as f64 / n_gt as f64 } else { 1.0 };
        let f1 =
            if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        Self { precision, recall, f1 }
    }
}

/// Pixelwise segmentation scores of the predicted room union.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SegScores {
    pub iou: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Every criterion of one evaluation.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MetricsReport {
    pub room: Prf,
    pub corner: Prf,
    pub angle: Prf,
    pub room_semantic: Prf,
    pub window_door: Prf,
    pub segmentation: SegScores,
}

/// Greedily pair ground-truth and predicted rooms by descending IoU.
///
/// Only positive-IoU pairs are considered; ties break on (gt index, pred
/// index), so the result is deterministic. Windows and doors are ignored.
pub fn match_rooms(gt: &Floorplan, pred: &Floorplan) -> MatchResult {
    let (w, h) = (gt.width as usize, gt.height as usize);
    let gt_rooms: Vec<_> = gt.of_kind(EntityKind::Room).collect();
    let pred_rooms: Vec<_> = pred.of_kind(EntityKind::Room).collect();

    let mut cands: Vec<(usize, usize, f64)> = Vec::new();
    for (i, g) in gt_rooms.iter().enumerate() {
        for (j, p) in pred_rooms.iter().enumerate() {
            let iou = polygon_iou(&g.corners, &p.corners, w, h);
            if iou > 0.0 {
                cands.push((i, j, iou));
            }
        }
    }
    cands.sort_by(|a, b| {
        b.2.partial_cmp(&a.2).unwrap().then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1))
    });

    let mut gt_used = vec![false; gt_rooms.len()];
    let mut pred_used = vec![false; pred_rooms.len()];
    let mut pairs = Vec::new();
    for (i, j, iou) in cands {
        if !gt_used[i] && !pred_used[j] {
            gt_used[i] = true;
            pred_used[j] = true;
            pairs.push((i, j, iou));
        }
    }
    MatchResult {
        pairs,
        unmatched_gt: (0..gt_rooms.len()).filter(|&i| !gt_used[i]).collect(),
        unmatched_pred: (0..pred_rooms.len()).filter(|&j| !pred_used[j]).collect(),
    }
}

/// Corner pairs within one matched room pair, greedy by ascending distance.
/// Returns (gt corner index, pred corner index, L2 distance).
fn match_corners(gt: &[[f64; 2]], pred: &[[f64; 2]]) -> Vec<(usize, usize, f64)> {
    let mut cands: Vec<(usize, usize, f64)> = Vec::new();
    for (a, g) in gt.iter().enumerate() {
        for (b, p) in pred.iter().enumerate() {
            let d = ((g[0] - p[0]).powi(2) + (g[1] - p[1]).powi(2)).sqrt();
            cands.push((a, b, d));
        }
    }
    cands.sort_by(|x, y| x.2.partial_cmp(&y.2).unwrap().then(x.0.cmp(&y.0)).then(x.1.cmp(&y.1)));
    let mut gt_used = vec![false; gt.len()];
    let mut pred_used = vec![false; pred.len()];
    let mut out = Vec::new();
    for (a, b, d) in cands {
        if !gt_used[a] && !pred_used[b] {
            gt_used[a] = true;
            pred_used[b] = true;
            out.push((a, b, d));
        }
    }
    out
}

struct CornerAngleCounts {
    corner_tp: usize,
    angle_tp: usize,
    n_pred: usize,
    n_gt: usize,
}

fn corner_angle_counts(gt: &Floorplan, pred: &Floorplan, m: &MatchResult) -> CornerAngleCounts {
    let gt_rooms: Vec<_> = gt.of_kind(EntityKind::Room).collect();
    let pred_rooms: Vec<_> = pred.of_kind(EntityKind::Room).collect();
    // Every corner of every room counts toward the denominators, matched or not.
    let n_gt: usize = gt_rooms.iter().map(|r| r.corners.len()).sum();
    let n_pred: usize = pred_rooms.iter().map(|r| r.corners.len()).sum();
    let mut corner_tp = 0;
    let mut angle_tp = 0;
    for &(i, j, _) in &m.pairs {
        let g = &gt_rooms[i].corners;
        let p = &pred_rooms[j].corners;
        let ga = corner_angles(g);
        let pa = corner_angles(p);
        for (a, b, d) in match_corners(g, p) {
            if d <= CORNER_TOLERANCE_PX {
                corner_tp += 1;
                if (ga[a] - pa[b]).abs() < ANGLE_TOLERANCE_DEG {
                    angle_tp += 1;
                }
            }
        }
    }
    CornerAngleCounts { corner_tp, angle_tp, n_pred, n_gt }
}

/// Window/door segment pairs of one kind, greedy by ascending cost, where a
/// segment's cost is the larger endpoint distance under its better pairing.
fn segment_counts(gt: &Floorplan, pred: &Floorplan, kind: EntityKind) -> (usize, usize, usize) {
    let gs: Vec<_> = gt.of_kind(kind).collect();
    let ps: Vec<_> = pred.of_kind(kind).collect();
    let cost = |g: &[[f64; 2]], p: &[[f64; 2]]| -> f64 {
        let d = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        let straight = d(g[0], p[0]).max(d(g[1], p[1]));
        let crossed = d(g[0], p[1]).max(d(g[1], p[0]));
        straight.min(crossed)
    };
    let mut cands: Vec<(usize, usize, f64)> = Vec::new();
    for (i, g) in gs.iter().enumerate() {
        for (j, p) in ps.iter().enumerate() {
            cands.push((i, j, cost(&g.corners, &p.corners)));
        }
    }
    cands.sort_by(|x, y| x.2.partial_cmp(&y.2).unwrap().then(x.0.cmp(&y.0)).then(x.1.cmp(&y.1)));
    let mut gt_used = vec![false; gs.len()];
    let mut pred_used = vec![false; ps.len()];
    let mut tp = 0;
    for (i, j, c) in cands {
        if !gt_used[i] && !pred_used[j] && c <= CORNER_TOLERANCE_PX {
            gt_used[i] = true;
            pred_used[j] = true;
            tp += 1;
        }
    }
    (tp, ps.len(), gs.len())
}

/// Union mask of all rooms.
pub fn room_union_mask(fp: &Floorplan) -> Vec<bool> {
    let (w, h) = (fp.width as usize, fp.height as usize);
    let mut mask = vec![false; w * h];
    for room in fp.of_kind(EntityKind::Room) {
        for (m, v) in mask.iter_mut().zip(rasterize_polygon(&room.corners, w, h)) {
            *m |= v;
        }
    }
    mask
}

/// Pixelwise IoU / precision / recall of a predicted mask against a target.
pub fn segmentation_scores(pred_mask: &[bool], gt_mask: &[bool]) -> SegScores {
    assert_eq!(pred_mask.len(), gt_mask.len(), "mask length mismatch");
    let mut inter = 0usize;
    let mut n_pred = 0usize;
    let mut n_gt = 0usize;
    for (&p, &g) in pred_mask.iter().zip(gt_mask) {
        inter += (p && g) as usize;
        n_pred += p as usize;
        n_gt += g as usize;
    }
    let union = n_pred + n_gt - inter;
    let iou = if union > 0 { inter as f64 / union as f64 } else { 1.0 };
    let prf = Prf::from_counts(inter, n_pred, n_gt);
    SegScores { iou, precision: prf.precision, recall: prf.recall }
}

/// Raw true-positive and support tallies behind a [`MetricsReport`]; summing
/// the tallies of many plans micro-pools a dataset-level report.
#[derive(Clone, Copy, Debug, Default)]
pub struct MetricCounts {
    pub room_tp: usize,
    pub sem_tp: usize,
    pub rooms_pred: usize,
    pub rooms_gt: usize,
    pub corner_tp: usize,
    pub angle_tp: usize,
    pub corners_pred: usize,
    pub corners_gt: usize,
    pub wd_tp: usize,
    pub wd_pred: usize,
    pub wd_gt: usize,
    pub seg_inter: usize,
    pub seg_pred: usize,
    pub seg_gt: usize,
}

impl MetricCounts {
    pub fn accumulate(&mut self, o: &MetricCounts) {
        self.room_tp += o.room_tp;
        self.sem_tp += o.sem_tp;
        self.rooms_pred += o.rooms_pred;
        self.rooms_gt += o.rooms_gt;
        self.corner_tp += o.corner_tp;
        self.angle_tp += o.angle_tp;
        self.corners_pred += o.corners_pred;
        self.corners_gt += o.corners_gt;
        self.wd_tp += o.wd_tp;
        self.wd_pred += o.wd_pred;
        self.wd_gt += o.wd_gt;
        self.seg_inter += o.seg_inter;
        self.seg_pred += o.seg_pred;
        self.seg_gt += o.seg_gt;
    }

    pub fn report(&self) -> MetricsReport {
        let union = self.seg_pred + self.seg_gt - self.seg_inter;
        let iou = if union > 0 { self.seg_inter as f64 / union as f64 } else { 1.0 };
        let seg_prf = Prf::from_counts(self.seg_inter, self.seg_pred, self.seg_gt);
        MetricsReport {
            room: Prf::from_counts(self.room_tp, self.rooms_pred, self.rooms_gt),
            corner: Prf::from_counts(self.corner_tp, self.corners_pred, self.corners_gt),
            angle: Prf::from_counts(self.angle_tp, self.corners_pred, self.corners_gt),
            room_semantic: Prf::from_counts(self.sem_tp, self.rooms_pred, self.rooms_gt),
            window_door: Prf::from_counts(self.wd_tp, self.wd_pred, self.wd_gt),
            segmentation: SegScores { iou, precision: seg_prf.precision, recall: seg_prf.recall },
        }
    }
}

/// Run the whole protocol on one pair, returning raw tallies.
///
/// Both floorplans are canonicalized first, so entity order and polygon
/// orientation in the inputs never affect the scores.
pub fn evaluate_counts(gt: &Floorplan, pred: &Floorplan) -> Result<MetricCounts, MetricsError> {
    if (gt.width, gt.height) != (pred.width, pred.height) {
        return Err(MetricsError::ResolutionMismatch {
            gt: (gt.width, gt.height),
            pred: (pred.width, pred.height),
        });
    }
    let gt = gt.canonical();
    let pred = pred.canonical();
    let m = match_rooms(&gt, &pred);

    let gt_rooms: Vec<_> = gt.of_kind(EntityKind::Room).collect();
    let pred_rooms: Vec<_> = pred.of_kind(EntityKind::Room).collect();
    let valid: Vec<&(usize, usize, f64)> =
        m.pairs.iter().filter(|&&(_, _, iou)| iou > ROOM_IOU_THRESHOLD).collect();
    let sem_tp = valid
        .iter()
        .filter(|&&&(i, j, _)| gt_rooms[i].label == pred_rooms[j].label)
        .count();

    let cc = corner_angle_counts(&gt, &pred, &m);

    let (wtp, wp, wg) = segment_counts(&gt, &pred, EntityKind::Window);
    let (dtp, dp, dg) = segment_counts(&gt, &pred, EntityKind::Door);

    let pred_mask = room_union_mask(&pred);
    let gt_mask = room_union_mask(&gt);
    let mut seg_inter = 0;
    let mut seg_pred = 0;
    let mut seg_gt = 0;
    for (&p, &g) in pred_mask.iter().zip(&gt_mask) {
        seg_inter += (p && g) as usize;
        seg_pred += p as usize;
        seg_gt += g as usize;
    }

    Ok(MetricCounts {
        room_tp: valid.len(),
        sem_tp,
        rooms_pred: pred_rooms.len(),
        rooms_gt: gt_rooms.len(),
        corner_tp: cc.corner_tp,
        angle_tp: cc.angle_tp,
        corners_pred: cc.n_pred,
        corners_gt: cc.n_gt,
        wd_tp: wtp + dtp,
        wd_pred: wp + dp,
        wd_gt: wg + dg,
        seg_inter,
        seg_pred,
        seg_gt,
    })
}

/// Run the whole protocol on a ground-truth/prediction pair.
pub fn evaluate(gt: &Floorplan, pred: &Floorplan) -> Result<MetricsReport, MetricsError> {
    Ok(evaluate_counts(gt, pred)?.report())
}

/// Micro-pooled report over many (ground truth, prediction) pairs.
pub fn evaluate_dataset<'a, I>(pairs: I) -> Result<MetricsReport, MetricsError>
where
    I: IntoIterator<Item = (&'a Floorplan, &'a Floorplan)>,
{
    let mut total = MetricCounts::default();
    for (gt, pred) in pairs {
        total.accumulate(&evaluate_counts(gt, pred)?);
    }
    Ok(total.report())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Entity;

    fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<[f64; 2]> {
        vec![[x0, y0], [x0, y1], [x1, y1], [x1, y0]]
    }

    fn room(label: usize, corners: Vec<[f64; 2]>) -> Entity {
        Entity { kind: EntityKind::Room, label, corners }
    }

    fn plan(entities: Vec<Entity>) -> Floorplan {
        Floorplan { width: 64, height: 64, entities }
    }

    #[test]
    fn self_evaluation_scores_one_everywhere() {
        let fp = plan(vec![
            room(1, rect(2.0, 2.0, 20.0, 30.0)),
            room(3, rect(25.0, 2.0, 60.0, 30.0)),
            Entity { kind: EntityKind::Window, label: 6, corners: vec![[2.0, 10.0], [2.0, 16.0]] },
            Entity { kind: EntityKind::Door, label: 7, corners: vec![[25.0, 5.0], [25.0, 12.0]] },
        ]);
        let r = evaluate(&fp, &fp).unwrap();
        for v in [
            r.room.f1,
            r.corner.f1,
            r.angle.f1,
            r.room_semantic.f1,
            r.window_door.f1,
            r.segmentation.iou,
            r.segmentation.precision,
            r.segmentation.recall,
        ] {
            assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn dataset_pooling_sums_counts_across_plans() {
        // Plan A: perfect on 1 room; plan B: 1 of 2 rooms found.
        let a = plan(vec![room(0, rect(4.0, 4.0, 30.0, 30.0))]);
        let b_gt = plan(vec![
            room(0, rect(4.0, 4.0, 30.0, 30.0)),
            room(1, rect(34.0, 4.0, 60.0, 30.0)),
        ]);
        let b_pred = plan(vec![room(0, rect(4.0, 4.0, 30.0, 30.0))]);
        let r = evaluate_dataset([(&a, &a), (&b_gt, &b_pred)]).unwrap();
        // Micro precision 2/2, recall 2/3 — not the mean of per-plan scores.
        assert_eq!(r.room.precision, 1.0);
        assert!((r.room.recall - 2.0 / 3.0).abs() < 1e-12);
        let per_plan_mean = (1.0 + evaluate(&b_gt, &b_pred).unwrap().room.recall) / 2.0;
        assert!((r.room.recall - per_plan_mean).abs() > 0.05);
    }

    #[test]
    fn empty_conventions() {
        let gt = plan(vec![room(1, rect(2.0, 2.0, 20.0, 30.0))]);
        let empty = plan(vec![]);
        let r = evaluate(&gt, &empty).unwrap();
        assert_eq!(r.room.precision, 0.0);
        assert_eq!(r.room.recall, 0.0);
        assert_eq!(r.room.f1, 0.0);
        let r2 = evaluate(&empty, &empty).unwrap();
        assert_eq!(r2.room.precision, 1.0);
        assert_eq!(r2.room.recall, 1.0);
        assert_eq!(r2.segmentation.iou, 1.0);
        let r3 = evaluate(&empty, &gt).unwrap();
        assert_eq!(r3.room.recall, 1.0);
        assert_eq!(r3.room.precision, 0.0);
    }

    #[test]
    fn hallucinated_room_costs_precision_only() {
        let gt = plan(vec![
            room(1, rect(2.0, 2.0, 20.0, 30.0)),
            room(2, rect(25.0, 2.0, 60.0, 30.0)),
            room(3, rect(2.0, 35.0, 20.0, 60.0)),
            room(4, rect(25.0, 35.0, 60.0, 60.0)),
        ]);
        let mut pred = gt.clone();
        pred.entities.push(room(5, rect(40.0, 32.0, 50.0, 34.0)));
        let r = evaluate(&gt, &pred).unwrap();
        assert!((r.room.precision - 0.8).abs() < 1e-12);
        assert_eq!(r.room.recall, 1.0);
        assert!((r.room.f1 - 2.0 * 0.8 / 1.8).abs() < 1e-12);
    }

    #[test]
    fn corner_threshold_is_inclusive_at_ten_pixels() {
        let gt = plan(vec![room(1, rect(10.0, 10.0, 40.0, 40.0))]);
        // Shift every corner by (6, 8): distance exactly 10.
        let shifted: Vec<[f64; 2]> =
            rect(10.0, 10.0, 40.0, 40.0).iter().map(|c| [c[0] + 6.0, c[1] + 8.0]).collect();
        let pred = plan(vec![room(1, shifted)]);
        let r = evaluate(&gt, &pred).unwrap();
        assert_eq!(r.corner.f1, 1.0);
        // Angles unchanged by translation, so angle metric also perfect.
        assert_eq!(r.angle.f1, 1.0);
        // A shift of (7, 8) exceeds the threshold.
        let far: Vec<[f64; 2]> =
            rect(10.0, 10.0, 40.0, 40.0).iter().map(|c| [c[0] + 7.0, c[1] + 8.0]).collect();
        let pred2 = plan(vec![room(1, far)]);
        let r2 = evaluate(&gt, &pred2).unwrap();
        assert_eq!(r2.corner.f1, 0.0);
    }

    #[test]
    fn distorted_wedge_fails_angle_but_not_corner() {
        let gt = plan(vec![room(1, rect(10.0, 10.0, 40.0, 40.0))]);
        // Nudge one corner along an edge direction: position moves a little
        // (distance well under 10), but the wedge angle there tilts > 5 deg.
        let mut corners = rect(10.0, 10.0, 40.0, 40.0);
        corners[0] = [14.0, 10.0];
        let pred = plan(vec![room(1, corners)]);
        let r = evaluate(&gt, &pred).unwrap();
        assert_eq!(r.corner.f1, 1.0);
        assert!(r.angle.f1 < 1.0);
        assert!((r.angle.precision - 0.5).abs() < 1e-12, "two of four wedges tilt");
    }

    #[test]
    fn mislabeled_room_counts_for_geometry_not_semantics() {
        let gt = plan(vec![
            room(1, rect(2.0, 2.0, 20.0, 30.0)),
            room(2, rect(25.0, 2.0, 60.0, 30.0)),
        ]);
        let pred = plan(vec![
            room(1, rect(2.0, 2.0, 20.0, 30.0)),
            room(5, rect(25.0, 2.0, 60.0, 30.0)),
        ]);
        let r = evaluate(&gt, &pred).unwrap();
        assert_eq!(r.room.f1, 1.0);
        assert!((r.room_semantic.precision - 0.5).abs() < 1e-12);
        assert!((r.room_semantic.recall - 0.5).abs() < 1e-12);
    }

    #[test]
    fn window_and_door_kinds_never_cross_match() {
        let gt = plan(vec![Entity {
            kind: EntityKind::Window,
            label: 6,
            corners: vec![[10.0, 10.0], [20.0, 10.0]],
        }]);
        let pred = plan(vec![Entity {
            kind: EntityKind::Door,
            label: 7,
            corners: vec![[10.0, 10.0], [20.0, 10.0]],
        }]);
        let r = evaluate(&gt, &pred).unwrap();
        assert_eq!(r.window_door.f1, 0.0);
    }

    #[test]
    fn segment_matching_uses_better_endpoint_pairing() {
        let gt = plan(vec![Entity {
            kind: EntityKind::Door,
            label: 7,
            corners: vec![[10.0, 10.0], [30.0, 10.0]],
        }]);
        // Same segment, endpoints listed in the opposite order.
        let pred = plan(vec![Entity {
            kind: EntityKind::Door,
            label: 7,
            corners: vec![[30.0, 10.0], [10.0, 10.0]],
        }]);
        let r = evaluate(&gt, &pred).unwrap();
        assert_eq!(r.window_door.f1, 1.0);
    }

    #[test]
    fn match_rooms_is_greedy_best_first() {
        // One predicted room overlaps two ground-truth rooms; it must pair
        // with the higher-IoU one.
        let gt = plan(vec![
            room(1, rect(0.0, 0.0, 30.0, 30.0)),
            room(2, rect(30.0, 0.0, 60.0, 30.0)),
        ]);
        let pred = plan(vec![room(1, rect(10.0, 0.0, 40.0, 30.0))]);
        let m = match_rooms(&gt.canonical(), &pred.canonical());
        assert_eq!(m.pairs.len(), 1);
        let (gi, pj, iou) = m.pairs[0];
        assert_eq!((gi, pj), (0, 0), "overlaps gt room 0 by 20/40 vs room 1 by 10/50");
        assert!(iou > 0.0);
        assert_eq!(m.unmatched_gt, vec![1]);
        assert!(m.unmatched_pred.is_empty());
    }

    #[test]
    fn permutation_of_entities_does_not_change_scores() {
        let gt = plan(vec![
            room(1, rect(2.0, 2.0, 20.0, 30.0)),
            room(2, rect(25.0, 2.0, 60.0, 30.0)),
            room(3, rect(2.0, 35.0, 30.0, 60.0)),
        ]);
        let mut pred = plan(vec![
            room(1, rect(3.0, 2.0, 21.0, 30.0)),
            room(9, rect(25.0, 2.0, 59.0, 30.0)),
        ]);
        let a = evaluate(&gt, &pred).unwrap();
        pred.entities.reverse();
        let b = evaluate(&gt, &pred).unwrap();
        assert_eq!(a.room.f1, b.room.f1);
        assert_eq!(a.corner.f1, b.corner.f1);
        assert_eq!(a.angle.f1, b.angle.f1);
        assert_eq!(a.room_semantic.f1, b.room_semantic.f1);
    }

    #[test]
    fn half_coverage_segmentation() {
        let gt = plan(vec![room(1, rect(0.0, 0.0, 32.0, 32.0))]);
        let pred = plan(vec![room(1, rect(0.0, 0.0, 16.0, 32.0))]);
        let r = evaluate(&gt, &pred).unwrap();
        assert!((r.segmentation.iou - 0.5).abs() < 1e-12);
        assert_eq!(r.segmentation.precision, 1.0);
        assert!((r.segmentation.recall - 0.5).abs() < 1e-12);
    }

    #[test]
    fn f1_identity_holds_on_random_reports() {
        for tp in 0..5usize {
            for np in 0..5usize {
                for ng in 0..5usize {
                    if tp > np || tp > ng {
                        continue;
                    }
                    let p = Prf::from_counts(tp, np, ng);
                    let expect = if p.precision + p.recall > 0.0 {
                        2.0 * p.precision * p.recall / (p.precision + p.recall)
                    } else {
                        0.0
                    };
                    assert_eq!(p.f1, expect);
                }
            }
        }
    }
}
