mod common;

use common::rng;
use rand::Rng;
use rand_chacha::ChaCha8Rng as StdRng;
use trifuse_core::eval::{
    average_precision, iou, map_suite, map_suite_with, match_detections, Annotations, BBox,
    Detection, EvalConfig, GroundTruth, Label, Metrics,
};
use trifuse_oracle::metrics as oracle;

const IMAGES: [&str; 3] = ["a", "b", "c"];

#[derive(Debug, Clone)]
struct Scene {
    dets: Vec<Detection>,
    gts: Vec<GroundTruth>,
}

/// Side lengths whose squares straddle both stratum boundaries.
const SIDES: [f64; 7] = [6.0, 20.0, 31.0, 32.0, 64.0, 96.0, 130.0];

fn random_box(r: &mut StdRng) -> BBox {
    let w = SIDES[r.random_range(0..SIDES.len())] + r.random_range(0..3) as f64;
    let h = SIDES[r.random_range(0..SIDES.len())];
    BBox::new(
        r.random_range(0..60) as f64,
        r.random_range(0..60) as f64,
        w,
        h,
    )
    .unwrap()
}

fn jitter(r: &mut StdRng, b: &BBox) -> BBox {
    let d = (b.w.min(b.h) * 0.4).max(1.0) as i64;
    let mut s = || r.random_range(-d..=d) as f64;
    let (dx, dy, dw, dh) = (s(), s(), s(), s());
    BBox::new(b.x + dx, b.y + dy, (b.w + dw).max(1.0), (b.h + dh).max(1.0)).unwrap()
}

/// Up to five ground-truth boxes and five detections per image, mostly
/// perturbed copies of the ground truth, with coarse scores so ties occur.
fn random_scene(seed: u64, max_gt_per_cat: usize) -> Scene {
    let mut r = rng(seed);
    let mut scene = Scene {
        dets: Vec::new(),
        gts: Vec::new(),
    };
    for image in &IMAGES[..r.random_range(1..=3)] {
        let mut gts = Vec::new();
        for _ in 0..r.random_range(0..=5) {
            let category = r.random_range(1..=2);
            let n_same = gts
                .iter()
                .filter(|g: &&GroundTruth| g.category == category)
                .count();
            if n_same < max_gt_per_cat {
                gts.push(GroundTruth::new(random_box(&mut r), category, *image));
            }
        }
        for _ in 0..r.random_range(0..=5) {
            let (bbox, category) = match (gts.is_empty(), r.random_range(0..4)) {
                (false, 0..=2) => {
                    let g = &gts[r.random_range(0..gts.len())];
                    (jitter(&mut r, &g.bbox), g.category)
                }
                _ => (random_box(&mut r), r.random_range(1..=2)),
            };
            let score = r.random_range(1..=10) as f64 / 10.0;
            scene
                .dets
                .push(Detection::new(bbox, score, category, *image).unwrap());
        }
        scene.gts.extend(gts);
    }
    scene
}

fn to_oracle(scene: &Scene) -> (Vec<oracle::Det>, Vec<oracle::Gt>) {
    let image = |id: &str| IMAGES.iter().position(|i| *i == id).unwrap();
    let b = |b: &BBox| [b.x, b.y, b.w, b.h];
    let dets = scene
        .dets
        .iter()
        .map(|d| oracle::Det {
            image: image(&d.image),
            category: d.category,
            bbox: b(&d.bbox),
            score: d.score,
        })
        .collect();
    let gts = scene
        .gts
        .iter()
        .map(|g| oracle::Gt {
            image: image(&g.image),
            category: g.category,
            bbox: b(&g.bbox),
        })
        .collect();
    (dets, gts)
}

fn fields(m: &Metrics) -> [Option<f64>; 6] {
    [m.map, m.map50, m.map75, m.map_s, m.map_m, m.map_l]
}

fn same(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => (a - b).abs() <= 1e-12,
        (None, None) => true,
        _ => false,
    }
}

fn sweep() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

/// Per-category AP at a single threshold, in all four strata.
fn ap_at(scene: &Scene, t: f64) -> Vec<[Option<f64>; 4]> {
    let cfg = EvalConfig {
        iou_start: t,
        iou_stop: t,
        iou_step: 0.05,
    };
    map_suite_with(&scene.dets, &scene.gts, &cfg)
        .unwrap()
        .categories
        .iter()
        .map(|c| {
            [
                c.metrics.map,
                c.metrics.map_s,
                c.metrics.map_m,
                c.metrics.map_l,
            ]
        })
        .collect()
}

fn no_greater(after: &[[Option<f64>; 4]], before: &[[Option<f64>; 4]]) -> bool {
    after.iter().zip(before).all(|(a, b)| {
        a.iter().zip(b).all(|(x, y)| match (x, y) {
            (Some(x), Some(y)) => *x <= *y + 1e-12,
            (None, None) => true,
            _ => false,
        })
    })
}

#[test]
fn random_scenes_match_the_brute_force_oracle() {
    let mut nonempty = 0;
    for seed in 0..300 {
        let scene = random_scene(seed, 5);
        let report = map_suite(&scene.dets, &scene.gts);
        assert_eq!(report.iou_thresholds, sweep());
        let (d, g) = to_oracle(&scene);
        let want = oracle::summary(&d, &g, &sweep());
        let got = fields(&report.overall);
        let want = [
            want.map, want.map50, want.map75, want.map_s, want.map_m, want.map_l,
        ];
        for (k, (a, b)) in got.iter().zip(want).enumerate() {
            assert!(
                same(*a, b),
                "seed {seed} field {k}: {a:?} vs {b:?}\n{scene:#?}"
            );
        }
        nonempty += usize::from(got[0].is_some_and(|v| v > 0.0 && v < 1.0));
    }
    // The generator must exercise partial scores, not just 0 and 1.
    assert!(nonempty >= 50, "{nonempty}");
}

#[test]
fn ap_never_increases_with_the_threshold() {
    for seed in 0..300 {
        let scene = random_scene(seed, 5);
        let aps: Vec<_> = sweep().into_iter().map(|t| ap_at(&scene, t)).collect();
        for pair in aps.windows(2) {
            assert!(no_greater(&pair[1], &pair[0]), "seed {seed}: {pair:?}");
        }
    }
}

#[test]
fn metrics_lie_in_the_unit_interval_and_map_is_at_most_map50() {
    for seed in 0..300 {
        let scene = random_scene(seed, 5);
        let report = map_suite(&scene.dets, &scene.gts);
        let all =
            std::iter::once(&report.overall).chain(report.categories.iter().map(|c| &c.metrics));
        for m in all {
            assert!(
                fields(m).iter().flatten().all(|v| (0.0..=1.0).contains(v)),
                "seed {seed}"
            );
            if let (Some(a), Some(b)) = (m.map, m.map50) {
                assert!(a <= b + 1e-12, "seed {seed}: {a} > {b}");
            }
        }
    }
}

#[test]
fn trailing_zero_overlap_detection_never_raises_ap() {
    for seed in 0..300 {
        let mut scene = random_scene(seed, 5);
        let before = sweep()
            .into_iter()
            .map(|t| ap_at(&scene, t))
            .collect::<Vec<_>>();
        let low = scene.dets.iter().map(|d| d.score).fold(1.0, f64::min) / 2.0;
        let far = BBox::new(10_000.0, 10_000.0, 50.0, 50.0).unwrap();
        let mut r = rng(seed ^ 7);
        let image = IMAGES[r.random_range(0..3)];
        scene
            .dets
            .push(Detection::new(far, low, r.random_range(1..=2), image).unwrap());
        for (i, t) in sweep().into_iter().enumerate() {
            let after = ap_at(&scene, t);
            // A new category with no ground truth stays out of the averages.
            let after: Vec<_> = after.into_iter().filter(|a| a[0].is_some()).collect();
            let b: Vec<_> = before[i]
                .iter()
                .filter(|a| a[0].is_some())
                .copied()
                .collect();
            assert!(no_greater(&after, &b), "seed {seed} t {t}");
        }
    }
}

/// With at most one ground-truth box per image and category a duplicate
/// can never find a second box to match, so it is an FP or ignored.
#[test]
fn duplicate_detection_never_raises_ap_with_one_box_per_category() {
    for seed in 0..300 {
        let mut scene = random_scene(seed, 1);
        if scene.dets.is_empty() {
            continue;
        }
        let before = sweep()
            .into_iter()
            .map(|t| ap_at(&scene, t))
            .collect::<Vec<_>>();
        let mut r = rng(seed ^ 11);
        let orig = scene.dets[r.random_range(0..scene.dets.len())].clone();
        let score = orig.score * r.random_range(0.0..1.0);
        scene.dets.push(Detection { score, ..orig });
        for (i, t) in sweep().into_iter().enumerate() {
            assert!(
                no_greater(&ap_at(&scene, t), &before[i]),
                "seed {seed} t {t}"
            );
        }
    }
}

/// Greedy matching lets a lower-scored copy of a box claim a second ground
/// truth it overlaps, so with two nearby boxes duplication can raise AP.
#[test]
fn duplicate_detection_can_claim_a_second_box() {
    let g1 = BBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
    let g2 = BBox::new(3.0, 0.0, 10.0, 10.0).unwrap();
    let d = BBox::new(1.0, 0.0, 10.0, 10.0).unwrap();
    assert!(iou(&d, &g1) > iou(&d, &g2) && iou(&d, &g2) >= 0.5);
    let gts = vec![GroundTruth::new(g1, 1, "a"), GroundTruth::new(g2, 1, "a")];
    let mut dets = vec![Detection::new(d, 0.9, 1, "a").unwrap()];
    let once = map_suite(&dets, &gts).overall.map50.unwrap();
    dets.push(Detection::new(d, 0.5, 1, "a").unwrap());
    let twice = map_suite(&dets, &gts).overall.map50.unwrap();
    assert!((once - 51.0 / 101.0).abs() < 1e-12);
    assert_eq!(twice, 1.0);
}

#[test]
fn hand_computed_examples() {
    let g = BBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
    assert!((iou(&g, &BBox::new(5.0, 0.0, 10.0, 10.0).unwrap()) - 1.0 / 3.0).abs() < 1e-15);

    let tp = Label::TruePositive;
    let fp = Label::FalsePositive;
    assert_eq!(average_precision(&[tp], 1), Some(1.0));
    assert_eq!(average_precision(&[tp, fp], 1), Some(1.0));
    assert!((average_precision(&[fp, tp], 1).unwrap() - 0.5).abs() < 1e-12);
    assert_eq!(average_precision(&[], 0), Some(0.0));
    assert_eq!(average_precision(&[fp], 0), None);

    // Two detections on one box: the higher score wins.
    let gts = [GroundTruth::new(g, 1, "a")];
    let dets = [
        Detection::new(g, 0.8, 1, "a").unwrap(),
        Detection::new(g, 0.9, 1, "a").unwrap(),
    ];
    let ranked = match_detections(&dets, &gts, 0.5).unwrap();
    assert_eq!((ranked[0].index, ranked[0].label), (1, tp));
    assert_eq!((ranked[1].index, ranked[1].label), (0, fp));

    // A single box at IoU 0.6 passes three of the ten thresholds.
    let d = BBox::new(0.0, 0.0, 10.0, 6.0).unwrap();
    assert!((iou(&d, &g) - 0.6).abs() < 1e-15);
    let m = map_suite(&[Detection::new(d, 1.0, 1, "a").unwrap()], &gts).overall;
    assert_eq!(m.map50, Some(1.0));
    assert_eq!(m.map75, Some(0.0));
    assert!((m.map.unwrap() - 0.3).abs() < 1e-12);
}

#[test]
fn perfect_detector_scores_one_everywhere() {
    for seed in 0..50 {
        let scene = random_scene(seed, 5);
        let dets: Vec<Detection> = scene
            .gts
            .iter()
            .map(|g| Detection::new(g.bbox, 1.0, g.category, g.image.clone()).unwrap())
            .collect();
        let m = map_suite(&dets, &scene.gts).overall;
        for v in fields(&m).into_iter().flatten() {
            assert_eq!(v, 1.0, "seed {seed}");
        }
    }
}

#[test]
fn annotations_parse_and_report_bad_values_by_path() {
    let doc = r#"{"images": [
        {"id": "a", "detections": [{"bbox": [0, 0, 10, 10], "score": 0.9, "category": 1}],
         "ground_truth": [{"bbox": [0, 0, 10, 10], "category": 1}]},
        {"id": "b", "detections": [], "ground_truth": []}
    ]}"#;
    let ann = Annotations::from_json(doc).unwrap();
    assert_eq!((ann.detections.len(), ann.ground_truth.len()), (1, 1));
    assert_eq!(
        map_suite(&ann.detections, &ann.ground_truth).overall.map,
        Some(1.0)
    );

    let bad = doc.replace("0.9", "1.5");
    let err = Annotations::from_json(&bad).unwrap_err().to_string();
    assert!(err.contains("images[0].detections[0]"), "{err}");
    let bad = doc.replace(
        "[0, 0, 10, 10], \"category\"",
        "[0, 0, 0, 10], \"category\"",
    );
    let err = Annotations::from_json(&bad).unwrap_err().to_string();
    assert!(err.contains("images[0].ground_truth[0]"), "{err}");
    let err = Annotations::from_json("{\"images\": [\n{]}")
        .unwrap_err()
        .to_string();
    assert!(err.contains("line 2"), "{err}");
}
