//! COCO-style AP by brute force.
//!
//! Detections are visited in one global ranking (score descending, input
//! order on ties) and AP is read off the precision-recall points directly:
//! for each recall level `r`, the best precision among ranking prefixes
//! reaching recall `r`.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Det {
    pub image: usize,
    pub category: i64,
    /// `[x, y, w, h]`
    pub bbox: [f64; 4],
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gt {
    pub image: usize,
    pub category: i64,
    pub bbox: [f64; 4],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Size {
    Any,
    Small,
    Medium,
    Large,
}

impl Size {
    fn holds(self, b: &[f64; 4]) -> bool {
        let area = b[2] * b[3];
        match self {
            Size::Any => true,
            Size::Small => area < 32.0 * 32.0,
            Size::Medium => (32.0 * 32.0..=96.0 * 96.0).contains(&area),
            Size::Large => area > 96.0 * 96.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub map: Option<f64>,
    pub map50: Option<f64>,
    pub map75: Option<f64>,
    pub map_s: Option<f64>,
    pub map_m: Option<f64>,
    pub map_l: Option<f64>,
}

pub fn iou(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let (ax2, ay2, bx2, by2) = (a[0] + a[2], a[1] + a[3], b[0] + b[2], b[1] + b[3]);
    let w = ax2.min(bx2) - a[0].max(b[0]);
    let h = ay2.min(by2) - a[1].max(b[1]);
    if w <= 0.0 || h <= 0.0 {
        return 0.0;
    }
    let inter = w * h;
    inter / (a[2] * a[3] + b[2] * b[3] - inter)
}

/// AP for one category, threshold and size band; `None` without ground
/// truth in the band.
pub fn ap(dets: &[Det], gts: &[Gt], category: i64, threshold: f64, size: Size) -> Option<f64> {
    let n_gt = gts
        .iter()
        .filter(|g| g.category == category && size.holds(&g.bbox))
        .count();
    if n_gt == 0 {
        return None;
    }
    let mut ranked: Vec<usize> = (0..dets.len())
        .filter(|&i| dets[i].category == category)
        .collect();
    ranked.sort_by(|&a, &b| {
        dets[b]
            .score
            .partial_cmp(&dets[a].score)
            .unwrap()
            .then(a.cmp(&b))
    });

    let mut used = vec![false; gts.len()];
    let mut tp_flags: Vec<bool> = Vec::new();
    for &d in &ranked {
        let det = &dets[d];
        let mut pick: Option<usize> = None;
        for want_in_band in [true, false] {
            let mut best = -1.0;
            for (g, gt) in gts.iter().enumerate() {
                if used[g] || gt.image != det.image || gt.category != category {
                    continue;
                }
                if size.holds(&gt.bbox) != want_in_band {
                    continue;
                }
                let v = iou(&det.bbox, &gt.bbox);
                if v >= threshold && v > best {
                    best = v;
                    pick = Some(g);
                }
            }
            if pick.is_some() {
                break;
            }
        }
        match pick {
            Some(g) => {
                used[g] = true;
                if size.holds(&gts[g].bbox) {
                    tp_flags.push(true);
                }
            }
            None => {
                if size.holds(&det.bbox) {
                    tp_flags.push(false);
                }
            }
        }
    }

    let mut total = 0.0;
    for r in 0..=100usize {
        let mut best = 0.0f64;
        for k in 0..tp_flags.len() {
            let tp = tp_flags[..=k].iter().filter(|&&t| t).count();
            if 100 * tp >= r * n_gt {
                best = best.max(tp as f64 / (k + 1) as f64);
            }
        }
        total += best;
    }
    Some(total / 101.0)
}

fn average(v: &[Option<f64>]) -> Option<f64> {
    let got: Vec<f64> = v.iter().flatten().copied().collect();
    if got.is_empty() {
        None
    } else {
        Some(got.iter().sum::<f64>() / got.len() as f64)
    }
}

/// Means over categories with ground truth; `thresholds` drives `map` and
/// the size bands.
pub fn summary(dets: &[Det], gts: &[Gt], thresholds: &[f64]) -> Summary {
    let mut cats: Vec<i64> = dets
        .iter()
        .map(|d| d.category)
        .chain(gts.iter().map(|g| g.category))
        .collect();
    cats.sort_unstable();
    cats.dedup();
    let sweep = |c: i64, s: Size| {
        average(
            &thresholds
                .iter()
                .map(|&t| ap(dets, gts, c, t, s))
                .collect::<Vec<_>>(),
        )
    };
    let over =
        |f: &dyn Fn(i64) -> Option<f64>| average(&cats.iter().map(|&c| f(c)).collect::<Vec<_>>());
    Summary {
        map: over(&|c| sweep(c, Size::Any)),
        map50: over(&|c| ap(dets, gts, c, 0.5, Size::Any)),
        map75: over(&|c| ap(dets, gts, c, 0.75, Size::Any)),
        map_s: over(&|c| sweep(c, Size::Small)),
        map_m: over(&|c| sweep(c, Size::Medium)),
        map_l: over(&|c| sweep(c, Size::Large)),
    }
}
