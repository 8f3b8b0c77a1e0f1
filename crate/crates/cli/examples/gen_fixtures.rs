//! Regenerates the files under `tests/fixtures`.
//!
//! ```text
//! cargo run -p trifuse-cli --example gen_fixtures
//! ```

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trifuse_core::fusion::{
    default_groups, default_reduced_channels, save_params, FusionParams, ParamSet,
};
use trifuse_core::tensor::write_ten;
use trifuse_core::Tensor;

const SIDE: usize = 8;
const CHANNELS: usize = 4;

fn depth(f: impl Fn(usize, usize) -> f32) -> Tensor {
    let data = (0..SIDE)
        .flat_map(|v| (0..SIDE).map(move |u| (u, v)))
        .map(|(u, v)| f(u, v))
        .collect();
    Tensor::new(vec![SIDE, SIDE], data).unwrap()
}

fn features(rng: &mut ChaCha8Rng) -> Tensor {
    let data = (0..CHANNELS * SIDE * SIDE)
        .map(|_| rng.random_range(-1.0f32..1.0))
        .collect();
    Tensor::new(vec![CHANNELS, SIDE, SIDE], data).unwrap()
}

fn events_csv(rows: &[(u64, u32, u32, u8)]) -> String {
    let mut out = String::from("t_us,x,y,polarity\n");
    for (t, x, y, p) in rows {
        out += &format!("{t},{x},{y},{p}\n");
    }
    out
}

fn image(id: &str, dets: &[([f64; 4], f64)], gts: &[[f64; 4]]) -> String {
    let dets: Vec<String> = dets
        .iter()
        .map(|(b, s)| format!(r#"{{"bbox": {b:?}, "score": {s}, "category": 1}}"#))
        .collect();
    let gts: Vec<String> = gts
        .iter()
        .map(|b| format!(r#"{{"bbox": {b:?}, "category": 1}}"#))
        .collect();
    format!(
        r#"    {{"id": "{id}", "detections": [{}], "ground_truth": [{}]}}"#,
        dets.join(", "),
        gts.join(", ")
    )
}

fn annotations(images: &[String]) -> String {
    format!("{{\"images\": [\n{}\n]}}\n", images.join(",\n"))
}

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    fs::create_dir_all(&dir).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(42);

    write_ten(dir.join("depth_const.ten"), &depth(|_, _| 5.0)).unwrap();
    write_ten(dir.join("depth_ramp.ten"), &depth(|u, _| 2.0 + u as f32)).unwrap();

    // About 145 ms of activity on an 8×8 sensor: three 50 ms windows.
    let mut t = 1_000u64;
    let mut rows = Vec::new();
    for _ in 0..240 {
        t += rng.random_range(0..1_300);
        rows.push((
            t,
            rng.random_range(0..8),
            rng.random_range(0..8),
            rng.random_range(0..2),
        ));
    }
    fs::write(dir.join("events.csv"), events_csv(&rows)).unwrap();
    fs::write(
        dir.join("events_three.csv"),
        events_csv(&[(10, 0, 0, 1), (20, 3, 2, 0), (30, 7, 7, 1)]),
    )
    .unwrap();
    // The last event sits exactly on the first window's end.
    fs::write(
        dir.join("events_boundary.csv"),
        events_csv(&[(0, 1, 1, 1), (49_999, 2, 2, 0), (50_000, 3, 3, 1)]),
    )
    .unwrap();
    fs::write(dir.join("events_empty.csv"), events_csv(&[])).unwrap();

    for name in ["rgb", "normal", "event"] {
        write_ten(
            dir.join(format!("{name}_features.ten")),
            &features(&mut rng),
        )
        .unwrap();
    }

    // Seed-42 parameters with a live residual branch and nonzero biases.
    let mut params = FusionParams::init(
        CHANNELS,
        default_reduced_channels(CHANNELS),
        default_groups(CHANNELS),
        42,
    )
    .unwrap();
    params.adfm.alpha = 0.5;
    let tensors = params
        .named_tensors()
        .into_iter()
        .map(|(name, t)| {
            if name.ends_with(".b") {
                t.map(|v| v + rng.random_range(-0.2f32..0.2))
            } else {
                t
            }
        })
        .collect();
    let params = params.with_tensors(tensors).unwrap();
    let params_dir = dir.join("params_seed42");
    if params_dir.exists() {
        fs::remove_dir_all(&params_dir).unwrap();
    }
    save_params(&params_dir, &params).unwrap();

    let small = [4.0, 4.0, 20.0, 20.0];
    let medium = [30.0, 30.0, 50.0, 50.0];
    let large = [100.0, 10.0, 120.0, 110.0];
    fs::write(
        dir.join("perfect.json"),
        annotations(&[
            image("img0", &[(small, 0.9), (medium, 0.8)], &[small, medium]),
            image("img1", &[(large, 1.0)], &[large]),
        ]),
    )
    .unwrap();
    // 10 × 6 inside 10 × 10: IoU 0.6.
    fs::write(
        dir.join("iou06.json"),
        annotations(&[image(
            "img0",
            &[([0.0, 0.0, 10.0, 6.0], 1.0)],
            &[[0.0, 0.0, 10.0, 10.0]],
        )]),
    )
    .unwrap();
    fs::write(
        dir.join("empty_dets.json"),
        annotations(&[image("img0", &[], &[small, medium, large])]),
    )
    .unwrap();
    fs::write(
        dir.join("scene.json"),
        annotations(&[
            image(
                "img0",
                &[
                    (small, 0.9),
                    ([31.0, 29.0, 48.0, 52.0], 0.75),
                    ([200.0, 200.0, 40.0, 40.0], 0.8),
                ],
                &[small, medium],
            ),
            image("img1", &[([104.0, 12.0, 118.0, 105.0], 0.6)], &[large]),
        ]),
    )
    .unwrap();
    fs::write(
        dir.join("malformed.json"),
        "{\"images\": [\n  {\"id\": \"img0\",\n",
    )
    .unwrap();
}
