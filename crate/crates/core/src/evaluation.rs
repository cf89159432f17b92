//! Rotated-box IoU, average precision and ego-visibility categories.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::boxes::OrientedBox;
use crate::geometry::Vec2;
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub iou_thresholds: Vec<f64>,
    /// Targets with at most this many ego points are SP-O.
    pub spo_max_points: usize,
    /// Ego share of a target's points at or above which it is SP-E.
    pub spe_ratio: f64,
    /// IoU threshold for the per-category AP columns.
    pub category_iou: f64,
    /// Leading frames left out of every metric, so that delayed messages
    /// are in flight before scoring starts.
    pub warmup_frames: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_thresholds: vec![0.5, 0.7],
            spo_max_points: 5,
            spe_ratio: 0.8,
            category_iou: 0.7,
            warmup_frames: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroundTruth<T> {
    pub bbox: OrientedBox<T>,
    pub ego_points: usize,
    /// Points on the target summed over all other agents.
    pub other_points: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameEval<T> {
    pub detections: Vec<OrientedBox<T>>,
    pub ground_truth: Vec<GroundTruth<T>>,
}

fn polygon_area<T: Real>(poly: &[Vec2<T>]) -> T {
    let n = poly.len();
    if n < 3 {
        return T::zero();
    }
    let twice: T = (0..n).map(|i| poly[i].cross(poly[(i + 1) % n])).sum();
    (twice * T::lit(0.5)).abs()
}

/// Clips `subject` by the convex, counter-clockwise polygon `clip`.
fn clip_convex<T: Real>(subject: &[Vec2<T>], clip: &[Vec2<T>]) -> Vec<Vec2<T>> {
    let mut out = subject.to_vec();
    for i in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
        let edge = b - a;
        let side = |p: Vec2<T>| edge.cross(p - a);
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let (p, q) = (input[j], input[(j + 1) % input.len()]);
            let (sp, sq) = (side(p), side(q));
            if sp >= T::zero() {
                out.push(p);
            }
            if (sp >= T::zero()) != (sq >= T::zero()) {
                let t = sp / (sp - sq);
                out.push(p + (q - p) * t);
            }
        }
    }
    out
}

/// Footprint intersection area of two boxes.
pub fn bev_intersection<T: Real>(a: &OrientedBox<T>, b: &OrientedBox<T>) -> T {
    polygon_area(&clip_convex(&a.corners_bev(), &b.corners_bev()))
}

/// 3D IoU of two yaw-rotated boxes.
pub fn box_iou<T: Real>(a: &OrientedBox<T>, b: &OrientedBox<T>) -> T {
    let dz = a.z_max().min(b.z_max()) - a.z_min().max(b.z_min());
    if dz <= T::zero() {
        return T::zero();
    }
    let inter = bev_intersection(a, b) * dz;
    let union = a.volume() + b.volume() - inter;
    if union <= T::zero() {
        return T::zero();
    }
    (inter / union).max(T::zero()).min(T::one())
}

/// Area under the all-point precision envelope.
fn pr_area(tp_flags: &[bool], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let mut recall = Vec::with_capacity(tp_flags.len());
    let mut precision = Vec::with_capacity(tp_flags.len());
    let mut tp = 0usize;
    for (k, &hit) in tp_flags.iter().enumerate() {
        tp += usize::from(hit);
        recall.push(tp as f64 / n_gt as f64);
        precision.push(tp as f64 / (k + 1) as f64);
    }
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let mut area = 0.0;
    let mut prev_r = 0.0;
    for (r, p) in recall.into_iter().zip(precision) {
        area += (r - prev_r) * p;
        prev_r = r;
    }
    area
}

/// AP with per-GT ignore flags. A detection takes the best-IoU unmatched
/// counted GT above the threshold; failing that, a detection overlapping an
/// ignored GT above the threshold is dropped; otherwise it is a false
/// positive. Returns `None` when no GT is counted.
pub fn compute_ap_masked<T: Real>(frames: &[FrameEval<T>], ignored: &[Vec<bool>], iou_threshold: f64) -> Option<f64> {
    let thr = T::lit(iou_threshold);
    let n_gt: usize = ignored.iter().map(|m| m.iter().filter(|&&x| !x).count()).sum();
    if n_gt == 0 {
        return None;
    }
    let mut order: Vec<(usize, usize)> = frames
        .iter()
        .enumerate()
        .flat_map(|(f, fr)| (0..fr.detections.len()).map(move |d| (f, d)))
        .collect();
    // stable sort keeps frame/detection order among equal confidences
    order.sort_by(|&(fa, da), &(fb, db)| {
        let (ca, cb) = (frames[fa].detections[da].confidence, frames[fb].detections[db].confidence);
        cb.partial_cmp(&ca).unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut taken: Vec<Vec<bool>> = frames.iter().map(|f| vec![false; f.ground_truth.len()]).collect();
    let mut flags = Vec::with_capacity(order.len());
    for (f, d) in order {
        let det = &frames[f].detections[d];
        let mut best: Option<(usize, T)> = None;
        let mut overlaps_ignored = false;
        for (g, gt) in frames[f].ground_truth.iter().enumerate() {
            let iou = box_iou(det, &gt.bbox);
            if iou < thr {
                continue;
            }
            if ignored[f][g] {
                overlaps_ignored = true;
            } else if !taken[f][g] && best.is_none_or(|(_, b)| iou > b) {
                best = Some((g, iou));
            }
        }
        match best {
            Some((g, _)) => {
                taken[f][g] = true;
                flags.push(true);
            }
            None if overlaps_ignored => {}
            None => flags.push(false),
        }
    }
    Some(pr_area(&flags, n_gt))
}

/// Pooled AP over all frames at one IoU threshold; 0 when there is no GT.
pub fn compute_ap<T: Real>(frames: &[FrameEval<T>], iou_threshold: f64) -> f64 {
    let none: Vec<Vec<bool>> = frames.iter().map(|f| vec![false; f.ground_truth.len()]).collect();
    compute_ap_masked(frames, &none, iou_threshold).unwrap_or(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    /// Scarcely seen by the ego.
    SpO,
    /// Seen jointly.
    Cp,
    /// Mostly seen by the ego.
    SpE,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::SpO => "SP-O",
            Category::Cp => "CP",
            Category::SpE => "SP-E",
        })
    }
}

pub fn categorize(ego_points: usize, other_points: usize, cfg: &EvalConfig) -> Category {
    if ego_points <= cfg.spo_max_points {
        Category::SpO
    } else if ego_points as f64 >= cfg.spe_ratio * (ego_points + other_points) as f64 {
        Category::SpE
    } else {
        Category::Cp
    }
}

pub fn categorize_targets<T: Real>(frame: &FrameEval<T>, cfg: &EvalConfig) -> Vec<Category> {
    frame
        .ground_truth
        .iter()
        .map(|g| categorize(g.ego_points, g.other_points, cfg))
        .collect()
}

/// Per-category AP; `None` for a category with no targets.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CategoryAp {
    pub sp_o: Option<f64>,
    pub cp: Option<f64>,
    pub sp_e: Option<f64>,
}

pub fn compute_category_ap<T: Real>(frames: &[FrameEval<T>], iou_threshold: f64, cfg: &EvalConfig) -> CategoryAp {
    let labels: Vec<Vec<Category>> = frames.iter().map(|f| categorize_targets(f, cfg)).collect();
    let ap_for = |cat: Category| {
        let mask: Vec<Vec<bool>> = labels.iter().map(|l| l.iter().map(|&c| c != cat).collect()).collect();
        compute_ap_masked(frames, &mask, iou_threshold)
    };
    CategoryAp {
        sp_o: ap_for(Category::SpO),
        cp: ap_for(Category::Cp),
        sp_e: ap_for(Category::SpE),
    }
}

/// One line of the metric table.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub parameter: String,
    pub ap50: f64,
    pub ap70: f64,
    pub ap_spo: Option<f64>,
    pub ap_cp: Option<f64>,
    pub ap_spe: Option<f64>,
    pub comm_log2: f64,
}

pub const METRIC_HEADER: &str = "parameter,ap50,ap70,ap_spo,ap_cp,ap_spe,comm_log2";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

impl fmt::Display for MetricRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{:.6},{:.6},{},{},{},{}",
            self.parameter,
            self.ap50,
            self.ap70,
            opt(self.ap_spo),
            opt(self.ap_cp),
            opt(self.ap_spe),
            opt(Some(self.comm_log2).filter(|c| c.is_finite()))
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boxes::BoxSize;
    use crate::geometry::{Pose, Vec3};
    use proptest::prelude::*;
    use rand::{Rng as _, SeedableRng};

    #[allow(clippy::too_many_arguments)]
    fn bx(x: f64, y: f64, z: f64, l: f64, w: f64, h: f64, yaw: f64, conf: f64) -> OrientedBox<f64> {
        OrientedBox::new(Vec3::new(x, y, z), BoxSize::new(h, w, l), yaw, conf).unwrap()
    }

    #[test]
    fn iou_examples() {
        let a = bx(1.0, 2.0, 0.5, 4.0, 1.8, 1.5, 0.3, 0.9);
        assert!((box_iou(&a, &a) - 1.0).abs() < 1e-12);
        assert_eq!(box_iou(&a, &bx(20.0, 2.0, 0.5, 4.0, 1.8, 1.5, 0.3, 0.9)), 0.0);
        assert_eq!(box_iou(&a, &bx(1.0, 2.0, 5.0, 4.0, 1.8, 1.5, 0.3, 0.9)), 0.0);
        let u = bx(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0);
        let v = bx(0.5, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0);
        assert!((box_iou(&u, &v) - 1.0 / 3.0).abs() < 1e-12);
        // unit square vs the same square rotated 45°: octagon area 2(√2 − 1)
        let r = bx(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, std::f64::consts::FRAC_PI_4, 1.0);
        let inter = 2.0 * (2f64.sqrt() - 1.0);
        assert!((box_iou(&u, &r) - inter / (2.0 - inter)).abs() < 1e-12);
        // containment
        let big = bx(0.0, 0.0, 0.0, 2.0, 2.0, 2.0, 0.7, 1.0);
        assert!((box_iou(&u, &big) - 1.0 / 8.0).abs() < 1e-12);
    }

    fn arb_box() -> impl Strategy<Value = OrientedBox<f64>> {
        (-3.0..3.0, -3.0..3.0, -1.0..1.0, 0.5..5.0, 0.5..3.0, 0.5..2.0, -3.1..3.1)
            .prop_map(|(x, y, z, l, w, h, yaw)| bx(x, y, z, l, w, h, yaw, 1.0))
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_rigid_invariant(a in arb_box(), b in arb_box(), t in (-50.0..50.0, -50.0..50.0, -3.1..3.1)) {
            let ab = box_iou(&a, &b);
            prop_assert!((ab - box_iou(&b, &a)).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&ab));
            let g = Pose::new(t.0, t.1, 0.0, t.2);
            prop_assert!((ab - box_iou(&a.transformed(&g), &b.transformed(&g))).abs() < 1e-6);
            prop_assert!((box_iou(&a, &a) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn iou_matches_sampling_estimate() {
        let mut rng = crate::seed::Rng::seed_from_u64(8);
        for _ in 0..10 {
            let mut r = |lo: f64, hi: f64| rng.random_range(lo..hi);
            let a = bx(r(-1.0, 1.0), r(-1.0, 1.0), r(-0.3, 0.3), r(1.0, 4.0), r(1.0, 2.0), r(1.0, 2.0), r(-3.0, 3.0), 1.0);
            let b = bx(r(-1.0, 1.0), r(-1.0, 1.0), r(-0.3, 0.3), r(1.0, 4.0), r(1.0, 2.0), r(1.0, 2.0), r(-3.0, 3.0), 1.0);
            let n = 200_000;
            let mut inside = 0usize;
            // sample inside a, count hits in b: inter = vol(a)·hits/n
            for _ in 0..n {
                let local = Vec3::new(
                    rng.random_range(-0.5..0.5) * a.size.l,
                    rng.random_range(-0.5..0.5) * a.size.w,
                    rng.random_range(-0.5..0.5) * a.size.h,
                );
                if b.contains(a.frame().apply(local), 0.0) {
                    inside += 1;
                }
            }
            let inter = a.volume() * inside as f64 / n as f64;
            let est = inter / (a.volume() + b.volume() - inter);
            assert!((est - box_iou(&a, &b)).abs() < 0.01, "{est} vs {}", box_iou(&a, &b));
        }
    }

    fn gt(b: OrientedBox<f64>, ego: usize, other: usize) -> GroundTruth<f64> {
        GroundTruth {
            bbox: b,
            ego_points: ego,
            other_points: other,
        }
    }

    #[test]
    fn ap_examples() {
        let g = bx(0.0, 0.0, 0.0, 4.0, 2.0, 1.5, 0.0, 1.0);
        // x offset 0.4 on a 4 m box: IoU = 3.6 / 4.4 ≈ 0.82
        let d = bx(0.4, 0.0, 0.0, 4.0, 2.0, 1.5, 0.0, 0.9);
        let frame = |dets: Vec<OrientedBox<f64>>| FrameEval {
            detections: dets,
            ground_truth: vec![gt(g, 50, 0)],
        };
        assert_eq!(compute_ap(&[frame(vec![d])], 0.7), 1.0);
        assert_eq!(compute_ap(&[frame(vec![])], 0.7), 0.0);
        let fp = bx(30.0, 0.0, 0.0, 4.0, 2.0, 1.5, 0.0, 0.8);
        assert_eq!(compute_ap(&[frame(vec![d, fp])], 0.7), 1.0);
        // FP ranked first halves precision at full recall
        let fp_hi = bx(30.0, 0.0, 0.0, 4.0, 2.0, 1.5, 0.0, 0.95);
        assert_eq!(compute_ap(&[frame(vec![d, fp_hi])], 0.7), 0.5);
        // duplicate detection of the same GT is a FP
        let dup = bx(0.2, 0.0, 0.0, 4.0, 2.0, 1.5, 0.0, 0.5);
        assert_eq!(compute_ap(&[frame(vec![d, dup])], 0.7), 1.0);
        assert_eq!(compute_ap(&[frame(vec![d])], 0.9), 0.0);
    }

    #[test]
    fn two_gt_pr_curve_by_hand() {
        let g1 = bx(0.0, 0.0, 0.0, 4.0, 2.0, 1.5, 0.0, 1.0);
        let g2 = bx(10.0, 0.0, 0.0, 4.0, 2.0, 1.5, 0.0, 1.0);
        let dets = vec![
            bx(0.0, 0.0, 0.0, 4.0, 2.0, 1.5, 0.0, 0.9),  // TP
            bx(20.0, 0.0, 0.0, 4.0, 2.0, 1.5, 0.0, 0.8), // FP
            bx(10.0, 0.0, 0.0, 4.0, 2.0, 1.5, 0.0, 0.7), // TP
        ];
        let f = FrameEval {
            detections: dets,
            ground_truth: vec![gt(g1, 10, 0), gt(g2, 10, 0)],
        };
        // (r, p) = (0.5, 1), (0.5, 0.5), (1, 2/3) → 0.5·1 + 0.5·2/3
        assert!((compute_ap(&[f], 0.5) - (0.5 + 1.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn categories() {
        let c = EvalConfig::default();
        assert_eq!(categorize(0, 40, &c), Category::SpO);
        assert_eq!(categorize(5, 0, &c), Category::SpO);
        assert_eq!(categorize(90, 10, &c), Category::SpE);
        assert_eq!(categorize(30, 70, &c), Category::Cp);
        assert_eq!(categorize(80, 20, &c), Category::SpE);
    }

    #[test]
    fn category_ap_ignores_other_categories() {
        let seen = bx(0.0, 0.0, 0.0, 4.0, 2.0, 1.5, 0.0, 1.0);
        let hidden = bx(10.0, 0.0, 0.0, 4.0, 2.0, 1.5, 0.0, 1.0);
        let f = FrameEval {
            detections: vec![bx(0.0, 0.0, 0.0, 4.0, 2.0, 1.5, 0.0, 0.9)],
            ground_truth: vec![gt(seen, 100, 0), gt(hidden, 0, 80)],
        };
        let c = compute_category_ap(std::slice::from_ref(&f), 0.7, &EvalConfig::default());
        assert_eq!(c.sp_e, Some(1.0));
        assert_eq!(c.sp_o, Some(0.0));
        assert_eq!(c.cp, None);
        assert_eq!(compute_ap(&[f], 0.7), 0.5);

        let all_one = FrameEval {
            detections: vec![bx(0.0, 0.0, 0.0, 4.0, 2.0, 1.5, 0.0, 0.9)],
            ground_truth: vec![gt(seen, 100, 0)],
        };
        let c = compute_category_ap(std::slice::from_ref(&all_one), 0.7, &EvalConfig::default());
        assert_eq!(c.sp_e, Some(compute_ap(&[all_one], 0.7)));
    }

    proptest! {
        #[test]
        fn ap_non_increasing_in_threshold(
            gts in proptest::collection::vec((-20.0..20.0, -20.0..20.0, -3.0..3.0), 1..8),
            jitter in proptest::collection::vec((-1.0..1.0, -1.0..1.0, -0.3..0.3, 0.0..1.0), 1..12),
            t1 in 0.05f64..0.95,
            t2 in 0.05f64..0.95,
        ) {
            let g: Vec<_> = gts.iter().map(|&(x, y, yaw)| gt(bx(x, y, 0.0, 4.0, 1.8, 1.5, yaw, 1.0), 10, 0)).collect();
            let dets: Vec<_> = jitter.iter().enumerate().map(|(k, &(dx, dy, dyaw, conf))| {
                let base = &g[k % g.len()].bbox;
                bx(base.center.x + dx, base.center.y + dy, 0.0, 4.0, 1.8, 1.5, base.yaw + dyaw, conf)
            }).collect();
            let f = [FrameEval { detections: dets, ground_truth: g }];
            let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            prop_assert!(compute_ap(&f, hi) <= compute_ap(&f, lo) + 1e-12);
        }
    }

    #[test]
    fn metric_row_format() {
        let r = MetricRow {
            parameter: "zeta=0.25".into(),
            ap50: 1.0,
            ap70: 0.5,
            ap_spo: None,
            ap_cp: Some(0.25),
            ap_spe: Some(1.0),
            comm_log2: 12.5,
        };
        assert_eq!(r.to_string(), "zeta=0.25,1.000000,0.500000,NA,0.250000,1.000000,12.500000");
    }
}
