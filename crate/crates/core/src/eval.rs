//! COCO-style detection metrics.
//!
//! AP uses 101-point interpolation of the precision envelope. `mAP` is the
//! mean over the IoU sweep (0.50:0.05:0.95 by default). Size strata follow
//! the COCO area bounds on ground-truth boxes.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Area bound between small and medium objects (32²).
pub const SMALL_MAX_AREA: f64 = 1024.0;
/// Area bound between medium and large objects (96²).
pub const MEDIUM_MAX_AREA: f64 = 9216.0;

/// Recall sample count for interpolated AP.
pub const RECALL_POINTS: usize = 101;

/// Axis-aligned box, top-left corner plus extents, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(Error::NonFinite(format!("box [{x}, {y}, {w}, {h}]")));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::invalid(format!(
                "box extents must be positive, got w = {w}, h = {h}"
            )));
        }
        Ok(Self { x, y, w, h })
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = ((a.x + a.w).min(b.x + b.w) - a.x.max(b.x)).max(0.0);
    let ih = ((a.y + a.h).min(b.y + b.h) - a.y.max(b.y)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: BBox,
    pub score: f64,
    pub category: i64,
    pub image: String,
}

impl Detection {
    pub fn new(bbox: BBox, score: f64, category: i64, image: impl Into<String>) -> Result<Self> {
        if !score.is_finite() || !(0.0..=1.0).contains(&score) {
            return Err(Error::invalid(format!(
                "detection score must lie in [0, 1], got {score}"
            )));
        }
        Ok(Self {
            bbox,
            score,
            category,
            image: image.into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub bbox: BBox,
    pub category: i64,
    pub image: String,
}

impl GroundTruth {
    pub fn new(bbox: BBox, category: i64, image: impl Into<String>) -> Self {
        Self {
            bbox,
            category,
            image: image.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    TruePositive,
    FalsePositive,
}

/// One detection's place in the ranking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ranked {
    /// Position in the caller's detection slice.
    pub index: usize,
    pub score: f64,
    pub label: Label,
}

/// Descending score; equal scores keep insertion order.
fn rank_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Size band on box area.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stratum {
    All,
    Small,
    Medium,
    Large,
}

impl Stratum {
    pub const SIZED: [Stratum; 3] = [Stratum::Small, Stratum::Medium, Stratum::Large];

    pub fn contains(self, area: f64) -> bool {
        match self {
            Stratum::All => true,
            Stratum::Small => area < SMALL_MAX_AREA,
            Stratum::Medium => (SMALL_MAX_AREA..=MEDIUM_MAX_AREA).contains(&area),
            Stratum::Large => area > MEDIUM_MAX_AREA,
        }
    }
}

/// Greedy matching of one image and category. Returns, per detection in
/// `order`, `Some(true)` for TP, `Some(false)` for FP and `None` when the
/// detection is ignored by the stratum.
///
/// In-stratum ground truth is preferred; a detection that can only match an
/// out-of-stratum box is ignored, as is an unmatched detection whose own
/// area falls outside the stratum.
fn match_image(
    dets: &[&BBox],
    order: &[usize],
    gts: &[&BBox],
    threshold: f64,
    stratum: Stratum,
) -> Vec<Option<bool>> {
    let in_range: Vec<bool> = gts.iter().map(|g| stratum.contains(g.area())).collect();
    let mut taken = vec![false; gts.len()];
    let mut out = Vec::with_capacity(order.len());
    for &d in order {
        let mut best: [Option<(usize, f64)>; 2] = [None, None];
        for (g, gt) in gts.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let v = iou(dets[d], gt);
            if v < threshold {
                continue;
            }
            let slot = &mut best[usize::from(!in_range[g])];
            if slot.is_none_or(|(_, b)| v > b) {
                *slot = Some((g, v));
            }
        }
        match best[0].or(best[1]) {
            Some((g, _)) => {
                taken[g] = true;
                out.push(in_range[g].then_some(true));
            }
            None => out.push(stratum.contains(dets[d].area()).then_some(false)),
        }
    }
    out
}

/// Labels the detections of one image and category at `iou_threshold`,
/// returned in rank order.
pub fn match_detections(
    dets: &[Detection],
    gts: &[GroundTruth],
    iou_threshold: f64,
) -> Result<Vec<Ranked>> {
    let key = dets
        .first()
        .map(|d| (&d.image, d.category))
        .or_else(|| gts.first().map(|g| (&g.image, g.category)));
    if let Some((image, category)) = key {
        let mixed = dets
            .iter()
            .any(|d| (&d.image, d.category) != (image, category))
            || gts
                .iter()
                .any(|g| (&g.image, g.category) != (image, category));
        if mixed {
            return Err(Error::invalid(
                "match_detections needs one image id and one category",
            ));
        }
    }
    let scores: Vec<f64> = dets.iter().map(|d| d.score).collect();
    let order = rank_order(&scores);
    let boxes: Vec<&BBox> = dets.iter().map(|d| &d.bbox).collect();
    let gt_boxes: Vec<&BBox> = gts.iter().map(|g| &g.bbox).collect();
    let labels = match_image(&boxes, &order, &gt_boxes, iou_threshold, Stratum::All);
    Ok(order
        .iter()
        .zip(labels)
        .map(|(&index, l)| Ranked {
            index,
            score: dets[index].score,
            label: if l == Some(true) {
                Label::TruePositive
            } else {
                Label::FalsePositive
            },
        })
        .collect())
}

/// 101-point interpolated AP of a ranked label list.
///
/// `None` when there is no ground truth but there are detections; such a
/// category has no defined AP. With neither, AP is 0.
pub fn average_precision(labels: &[Label], n_gt: usize) -> Option<f64> {
    if n_gt == 0 {
        return labels.is_empty().then_some(0.0);
    }
    let mut tp = Vec::with_capacity(labels.len());
    let mut precision = Vec::with_capacity(labels.len());
    let mut hits = 0usize;
    for (k, l) in labels.iter().enumerate() {
        hits += usize::from(*l == Label::TruePositive);
        tp.push(hits);
        precision.push(hits as f64 / (k + 1) as f64);
    }
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    // recall >= i/100 compared exactly as 100·tp >= i·n_gt.
    let mut sum = 0.0;
    let mut k = 0;
    for i in 0..RECALL_POINTS {
        while k < tp.len() && 100 * tp[k] < i * n_gt {
            k += 1;
        }
        if k < tp.len() {
            sum += precision[k];
        }
    }
    Some(sum / RECALL_POINTS as f64)
}

/// The IoU sweep averaged into `mAP`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub iou_start: f64,
    pub iou_stop: f64,
    pub iou_step: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_start: 0.5,
            iou_stop: 0.95,
            iou_step: 0.05,
        }
    }
}

impl EvalConfig {
    /// Thresholds rounded to 1e-9 so that decimal steps land on their
    /// literal values.
    pub fn thresholds(&self) -> Result<Vec<f64>> {
        let EvalConfig {
            iou_start: a,
            iou_stop: b,
            iou_step: s,
        } = *self;
        if !(a > 0.0 && a <= b && b <= 1.0 && s > 0.0) {
            return Err(Error::invalid(format!(
                "IoU sweep needs 0 < start <= stop <= 1 and step > 0, got {a}:{s}:{b}"
            )));
        }
        let n = ((b - a) / s + 1e-9).floor() as usize + 1;
        Ok((0..n)
            .map(|i| ((a + i as f64 * s) * 1e9).round() / 1e9)
            .collect())
    }
}

/// AP summary for one category or for all of them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub map: Option<f64>,
    pub map50: Option<f64>,
    pub map75: Option<f64>,
    pub map_s: Option<f64>,
    pub map_m: Option<f64>,
    pub map_l: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct StratumCounts {
    pub gt: usize,
    pub det: usize,
}

/// Object counts by box area; ground truth and detections each binned by
/// their own area.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub all: StratumCounts,
    pub small: StratumCounts,
    pub medium: StratumCounts,
    pub large: StratumCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryReport {
    pub category: i64,
    pub metrics: Metrics,
    pub counts: Counts,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub iou_thresholds: Vec<f64>,
    pub overall: Metrics,
    pub counts: Counts,
    pub categories: Vec<CategoryReport>,
}

fn mean(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values
        .into_iter()
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn count(dets: &[&Detection], gts: &[&GroundTruth]) -> Counts {
    let c = |s: Stratum| StratumCounts {
        gt: gts.iter().filter(|g| s.contains(g.bbox.area())).count(),
        det: dets.iter().filter(|d| s.contains(d.bbox.area())).count(),
    };
    Counts {
        all: c(Stratum::All),
        small: c(Stratum::Small),
        medium: c(Stratum::Medium),
        large: c(Stratum::Large),
    }
}

/// AP of one category at one threshold within one stratum. `None` when the
/// stratum holds no ground truth for this category.
fn category_ap(
    dets: &[&Detection],
    gts: &[&GroundTruth],
    threshold: f64,
    stratum: Stratum,
) -> Option<f64> {
    let n_gt = gts
        .iter()
        .filter(|g| stratum.contains(g.bbox.area()))
        .count();
    if n_gt == 0 {
        return None;
    }
    let images: BTreeSet<&str> = dets.iter().map(|d| d.image.as_str()).collect();
    // (score, position in `dets`, label)
    let mut pooled: Vec<(f64, usize, Label)> = Vec::new();
    for image in images {
        let idx: Vec<usize> = (0..dets.len())
            .filter(|&i| dets[i].image == image)
            .collect();
        let boxes: Vec<&BBox> = idx.iter().map(|&i| &dets[i].bbox).collect();
        let scores: Vec<f64> = idx.iter().map(|&i| dets[i].score).collect();
        let order = rank_order(&scores);
        let gt_boxes: Vec<&BBox> = gts
            .iter()
            .filter(|g| g.image == image)
            .map(|g| &g.bbox)
            .collect();
        for (&o, l) in order
            .iter()
            .zip(match_image(&boxes, &order, &gt_boxes, threshold, stratum))
        {
            if let Some(tp) = l {
                let label = if tp {
                    Label::TruePositive
                } else {
                    Label::FalsePositive
                };
                pooled.push((scores[o], idx[o], label));
            }
        }
    }
    pooled.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(Ordering::Equal)
            .then(a.1.cmp(&b.1))
    });
    let labels: Vec<Label> = pooled.into_iter().map(|p| p.2).collect();
    average_precision(&labels, n_gt)
}

fn category_metrics(dets: &[&Detection], gts: &[&GroundTruth], thresholds: &[f64]) -> Metrics {
    let sweep = |s: Stratum| mean(thresholds.iter().map(|&t| category_ap(dets, gts, t, s)));
    Metrics {
        map: sweep(Stratum::All),
        map50: category_ap(dets, gts, 0.5, Stratum::All),
        map75: category_ap(dets, gts, 0.75, Stratum::All),
        map_s: sweep(Stratum::Small),
        map_m: sweep(Stratum::Medium),
        map_l: sweep(Stratum::Large),
    }
}

/// Metrics over the default 0.50:0.05:0.95 sweep.
pub fn map_suite(dets: &[Detection], gts: &[GroundTruth]) -> MetricsReport {
    map_suite_with(dets, gts, &EvalConfig::default()).expect("default sweep is valid")
}

/// Categories without ground truth are left out of every average; a field
/// is `None` when no category contributes to it.
pub fn map_suite_with(
    dets: &[Detection],
    gts: &[GroundTruth],
    config: &EvalConfig,
) -> Result<MetricsReport> {
    let thresholds = config.thresholds()?;
    let categories: BTreeSet<i64> = dets
        .iter()
        .map(|d| d.category)
        .chain(gts.iter().map(|g| g.category))
        .collect();
    let per_category: Vec<CategoryReport> = categories
        .into_iter()
        .map(|c| {
            let d: Vec<&Detection> = dets.iter().filter(|d| d.category == c).collect();
            let g: Vec<&GroundTruth> = gts.iter().filter(|g| g.category == c).collect();
            CategoryReport {
                category: c,
                metrics: category_metrics(&d, &g, &thresholds),
                counts: count(&d, &g),
            }
        })
        .collect();
    let over = |f: fn(&Metrics) -> Option<f64>| mean(per_category.iter().map(|c| f(&c.metrics)));
    let overall = Metrics {
        map: over(|m| m.map),
        map50: over(|m| m.map50),
        map75: over(|m| m.map75),
        map_s: over(|m| m.map_s),
        map_m: over(|m| m.map_m),
        map_l: over(|m| m.map_l),
    };
    let all_d: Vec<&Detection> = dets.iter().collect();
    let all_g: Vec<&GroundTruth> = gts.iter().collect();
    Ok(MetricsReport {
        iou_thresholds: thresholds,
        overall,
        counts: count(&all_d, &all_g),
        categories: per_category,
    })
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Aligned plain-text table; `-` marks undefined values.
    pub fn to_table(&self) -> String {
        let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<10} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>6} {:>6}",
            "category", "mAP", "mAP50", "mAP75", "mAP_s", "mAP_m", "mAP_L", "gt", "det"
        );
        let rows = std::iter::once(("all".to_string(), &self.overall, &self.counts)).chain(
            self.categories
                .iter()
                .map(|c| (c.category.to_string(), &c.metrics, &c.counts)),
        );
        for (name, m, n) in rows {
            let _ = writeln!(
                out,
                "{:<10} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>6} {:>6}",
                name,
                cell(m.map),
                cell(m.map50),
                cell(m.map75),
                cell(m.map_s),
                cell(m.map_m),
                cell(m.map_l),
                n.all.gt,
                n.all.det
            );
        }
        out
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAnnotations {
    images: Vec<RawImage>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawImage {
    id: String,
    #[serde(default)]
    detections: Vec<RawDetection>,
    #[serde(default)]
    ground_truth: Vec<RawGroundTruth>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDetection {
    bbox: [f64; 4],
    score: f64,
    category: i64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGroundTruth {
    bbox: [f64; 4],
    category: i64,
}

/// Detections and ground truth read from an annotations document.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Annotations {
    pub detections: Vec<Detection>,
    pub ground_truth: Vec<GroundTruth>,
}

fn parse_box(b: [f64; 4], at: impl FnOnce() -> String) -> Result<BBox> {
    BBox::new(b[0], b[1], b[2], b[3]).map_err(|e| Error::invalid(format!("{}: {e}", at())))
}

impl Annotations {
    /// Parses `{"images":[{"id", "detections", "ground_truth"}]}`. Syntax
    /// errors carry line and column; invalid values name their JSON path.
    pub fn from_reader(reader: impl Read) -> Result<Self> {
        let raw: RawAnnotations = serde_json::from_reader(reader)?;
        let mut out = Annotations::default();
        let mut ids = BTreeSet::new();
        for (i, img) in raw.images.into_iter().enumerate() {
            if !ids.insert(img.id.clone()) {
                return Err(Error::invalid(format!(
                    "images[{i}]: duplicate image id {:?}",
                    img.id
                )));
            }
            for (j, d) in img.detections.into_iter().enumerate() {
                let at = || format!("images[{i}].detections[{j}]");
                let bbox = parse_box(d.bbox, at)?;
                let det = Detection::new(bbox, d.score, d.category, img.id.clone())
                    .map_err(|e| Error::invalid(format!("{}: {e}", at())))?;
                out.detections.push(det);
            }
            for (j, g) in img.ground_truth.into_iter().enumerate() {
                let bbox = parse_box(g.bbox, || format!("images[{i}].ground_truth[{j}]"))?;
                out.ground_truth
                    .push(GroundTruth::new(bbox, g.category, img.id.clone()));
            }
        }
        Ok(out)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_reader(text.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x: f64, y: f64, w: f64, h: f64) -> BBox {
        BBox::new(x, y, w, h).unwrap()
    }

    fn det(bx: BBox, score: f64) -> Detection {
        Detection::new(bx, score, 1, "img").unwrap()
    }

    fn gt(bx: BBox) -> GroundTruth {
        GroundTruth::new(bx, 1, "img")
    }

    #[test]
    fn iou_examples() {
        let a = b(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &b(20.0, 20.0, 5.0, 5.0)), 0.0);
        assert!((iou(&a, &b(5.0, 0.0, 10.0, 10.0)) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn box_validation() {
        assert!(BBox::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(BBox::new(0.0, f64::NAN, 1.0, 1.0).is_err());
        assert!(Detection::new(b(0.0, 0.0, 1.0, 1.0), 1.5, 0, "a").is_err());
    }

    #[test]
    fn matching_examples() {
        let g = gt(b(0.0, 0.0, 10.0, 10.0));
        let perfect = match_detections(&[det(g.bbox, 1.0)], std::slice::from_ref(&g), 0.5).unwrap();
        assert_eq!(perfect[0].label, Label::TruePositive);

        let low = match_detections(
            &[det(b(5.0, 0.0, 10.0, 10.0), 0.9)],
            std::slice::from_ref(&g),
            0.5,
        )
        .unwrap();
        assert_eq!(low[0].label, Label::FalsePositive);

        let dets = [
            det(b(0.0, 0.0, 10.0, 9.0), 0.8),
            det(b(0.0, 0.0, 9.0, 10.0), 0.9),
        ];
        let r = match_detections(&dets, std::slice::from_ref(&g), 0.5).unwrap();
        assert_eq!((r[0].index, r[0].label), (1, Label::TruePositive));
        assert_eq!((r[1].index, r[1].label), (0, Label::FalsePositive));

        let other = GroundTruth::new(g.bbox, 2, "img");
        assert!(match_detections(&dets, &[other], 0.5).is_err());
    }

    #[test]
    fn score_ties_keep_insertion_order() {
        let g = gt(b(0.0, 0.0, 10.0, 10.0));
        let dets = [
            det(b(0.0, 0.0, 10.0, 8.0), 0.5),
            det(b(0.0, 0.0, 10.0, 10.0), 0.5),
        ];
        let r = match_detections(&dets, &[g], 0.5).unwrap();
        assert_eq!(r[0].index, 0);
        assert_eq!(r[0].label, Label::TruePositive);
    }

    #[test]
    fn ap_examples() {
        use Label::*;
        assert_eq!(average_precision(&[TruePositive], 1), Some(1.0));
        assert_eq!(
            average_precision(&[TruePositive, FalsePositive], 1),
            Some(1.0)
        );
        assert_eq!(
            average_precision(&[FalsePositive, TruePositive], 1),
            Some(0.5)
        );
        assert_eq!(average_precision(&[], 0), Some(0.0));
        assert_eq!(average_precision(&[FalsePositive], 0), None);
        assert_eq!(average_precision(&[], 3), Some(0.0));
    }

    #[test]
    fn default_sweep() {
        let t = EvalConfig::default().thresholds().unwrap();
        assert_eq!(t.len(), 10);
        assert_eq!(t[2], 0.6);
        assert_eq!(t[9], 0.95);
        let bad = EvalConfig {
            iou_start: 0.9,
            iou_stop: 0.5,
            iou_step: 0.05,
        };
        assert!(bad.thresholds().is_err());
    }

    #[test]
    fn single_box_at_iou_point_six() {
        let r = map_suite(
            &[det(b(0.0, 0.0, 6.0, 10.0), 0.9)],
            &[gt(b(0.0, 0.0, 10.0, 10.0))],
        );
        assert_eq!(r.overall.map50, Some(1.0));
        assert_eq!(r.overall.map75, Some(0.0));
        assert!((r.overall.map.unwrap() - 0.3).abs() < 1e-12);
        assert_eq!(r.overall.map_s, r.overall.map);
        assert_eq!(r.overall.map_m, None);
        assert_eq!(r.overall.map_l, None);
    }

    #[test]
    fn perfect_detector() {
        let gts = [
            gt(b(0.0, 0.0, 10.0, 10.0)),
            gt(b(0.0, 0.0, 50.0, 50.0)),
            gt(b(0.0, 0.0, 200.0, 100.0)),
        ];
        let dets: Vec<Detection> = gts.iter().map(|g| det(g.bbox, 1.0)).collect();
        let m = map_suite(&dets, &gts).overall;
        for v in [m.map, m.map50, m.map75, m.map_s, m.map_m, m.map_l] {
            assert_eq!(v, Some(1.0));
        }
    }

    #[test]
    fn out_of_stratum_match_is_ignored() {
        // Large GT and a small GT overlapping it; only detection hits the large one.
        let gts = [
            gt(b(0.0, 0.0, 100.0, 100.0)),
            gt(b(200.0, 200.0, 10.0, 10.0)),
        ];
        let dets = [det(b(0.0, 0.0, 100.0, 100.0), 0.9)];
        let r = map_suite(&dets, &gts);
        assert_eq!(r.overall.map_l, Some(1.0));
        // The small stratum sees no TP and no FP: AP 0 from missed recall.
        assert_eq!(r.overall.map_s, Some(0.0));
        assert_eq!(r.overall.map_m, None);
    }

    #[test]
    fn parses_annotations() {
        let a = Annotations::from_json(
            r#"{"images":[{"id":"a","detections":[{"bbox":[0,0,6,10],"score":0.9,"category":1}],
                "ground_truth":[{"bbox":[0,0,10,10],"category":1}]}]}"#,
        )
        .unwrap();
        assert_eq!(a.detections.len(), 1);
        assert_eq!(a.ground_truth[0].image, "a");

        let err = Annotations::from_json("{\"images\": [\n  {\"id\": }]}").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let err = Annotations::from_json(
            r#"{"images":[{"id":"a","detections":[{"bbox":[0,0,0,10],"score":0.9,"category":1}]}]}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("images[0].detections[0]"), "{err}");
    }

    #[test]
    fn table_marks_undefined() {
        let r = map_suite(&[], &[gt(b(0.0, 0.0, 10.0, 10.0))]);
        let t = r.to_table();
        assert!(t.lines().nth(1).unwrap().starts_with("all"));
        assert!(t.contains(" -"));
        assert!(r.to_json().unwrap().contains("\"map_m\": null"));
    }
}
