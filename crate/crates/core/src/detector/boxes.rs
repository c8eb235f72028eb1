//! Box geometry: anchor coding, IoU, anchor matching and NMS.

use serde::{Deserialize, Serialize};

/// Largest log-scale offset accepted before exponentiation.
pub const MAX_LOG_SCALE: f64 = 4.0;

/// Corner-form box in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    pub const fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn is_valid(&self) -> bool {
        self.x_min < self.x_max && self.y_min < self.y_max
    }

    pub fn clamp_to(&self, width: f64, height: f64) -> Self {
        Self::new(
            self.x_min.clamp(0.0, width),
            self.y_min.clamp(0.0, height),
            self.x_max.clamp(0.0, width),
            self.y_max.clamp(0.0, height),
        )
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }
}

/// Center-form anchor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl Anchor {
    pub fn to_box(&self) -> BBox {
        BBox::new(
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )
    }
}

pub fn decode_box(anchor: &Anchor, offsets: [f64; 4]) -> BBox {
    let [tx, ty, tw, th] = offsets;
    let cx = anchor.cx + tx * anchor.w;
    let cy = anchor.cy + ty * anchor.h;
    let w = anchor.w * tw.min(MAX_LOG_SCALE).exp();
    let h = anchor.h * th.min(MAX_LOG_SCALE).exp();
    BBox::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
}

/// Inverse of [`decode_box`] (for boxes within the log-scale clamp).
pub fn encode_box(anchor: &Anchor, target: &BBox) -> [f64; 4] {
    let cx = (target.x_min + target.x_max) / 2.0;
    let cy = (target.y_min + target.y_max) / 2.0;
    [
        (cx - anchor.cx) / anchor.w,
        (cy - anchor.cy) / anchor.h,
        (target.width() / anchor.w).ln(),
        (target.height() / anchor.h).ln(),
    ]
}

/// Intersection over union; 0 for disjoint or zero-area boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let (area_a, area_b) = (a.area(), b.area());
    if area_a <= 0.0 || area_b <= 0.0 {
        return 0.0;
    }
    let iw = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let ih = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    (inter / (area_a + area_b - inter)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub bbox: BBox,
    pub class_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assignment {
    Positive { truth: usize, class_index: usize },
    Negative,
    Ignore,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchThresholds {
    pub positive: f64,
    pub negative: f64,
}

impl Default for MatchThresholds {
    fn default() -> Self {
        Self {
            positive: 0.5,
            negative: 0.4,
        }
    }
}

/// Assigns every anchor to a truth (IoU ≥ positive), background
/// (IoU < negative) or neither. Each truth also claims its single best
/// anchor so that no object goes without a positive.
pub fn match_anchors(
    anchors: &[Anchor],
    truths: &[Truth],
    thresholds: MatchThresholds,
) -> Vec<Assignment> {
    if truths.is_empty() {
        return vec![Assignment::Negative; anchors.len()];
    }
    let truth_boxes: Vec<BBox> = truths.iter().map(|t| t.bbox).collect();
    let mut best_anchor = vec![(usize::MAX, 0.0f64); truths.len()];
    let mut out = Vec::with_capacity(anchors.len());
    for (a, anchor) in anchors.iter().enumerate() {
        let abox = anchor.to_box();
        let mut best = (0usize, f64::NEG_INFINITY);
        for (t, tb) in truth_boxes.iter().enumerate() {
            let v = iou(&abox, tb);
            if v > best.1 {
                best = (t, v);
            }
            if v > best_anchor[t].1 {
                best_anchor[t] = (a, v);
            }
        }
        out.push(if best.1 >= thresholds.positive {
            Assignment::Positive {
                truth: best.0,
                class_index: truths[best.0].class_index,
            }
        } else if best.1 < thresholds.negative {
            Assignment::Negative
        } else {
            Assignment::Ignore
        });
    }
    let mut forced = vec![false; anchors.len()];
    for (t, &(a, v)) in best_anchor.iter().enumerate() {
        if a == usize::MAX || v <= 0.0 || forced[a] {
            continue;
        }
        forced[a] = true;
        out[a] = Assignment::Positive {
            truth: t,
            class_index: truths[t].class_index,
        };
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub class_index: usize,
    pub score: f64,
}

/// Per-class greedy suppression. Candidates below `score_floor` are dropped;
/// the rest are visited by descending score (ties: smaller area, then input
/// order) and kept when their IoU with every kept box of the same class is
/// at most `iou_threshold`.
pub fn nms(detections: &[Detection], iou_threshold: f64, score_floor: f64) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..detections.len())
        .filter(|&i| detections[i].score >= score_floor)
        .collect();
    order.sort_by(|&a, &b| {
        let (da, db) = (&detections[a], &detections[b]);
        db.score
            .total_cmp(&da.score)
            .then(da.bbox.area().total_cmp(&db.bbox.area()))
            .then(a.cmp(&b))
    });
    let mut kept: Vec<Detection> = Vec::new();
    for i in order {
        let d = detections[i];
        let clash = kept
            .iter()
            .any(|k| k.class_index == d.class_index && iou(&k.bbox, &d.bbox) > iou_threshold);
        if !clash {
            kept.push(d);
        }
    }
    kept
}
