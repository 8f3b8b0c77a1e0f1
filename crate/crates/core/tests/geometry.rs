mod common;

use common::rng;
use proptest::prelude::*;
use rand::Rng;
use trifuse_core::geometry::{
    angle_between, angular_loss, decode_normal_png, decode_normal_rgb, depth_to_normals,
    encode_normal_png, encode_normal_rgb, DepthMap, NormalMap,
};

fn plane(w: usize, h: usize, a: f32, bu: f32, bv: f32) -> DepthMap {
    let d = (0..h)
        .flat_map(|v| (0..w).map(move |u| a + bu * u as f32 + bv * v as f32))
        .collect();
    DepthMap::new(w, h, d).unwrap()
}

fn close(n: [f32; 3], want: [f64; 3], tol: f64) -> bool {
    n.iter()
        .zip(want)
        .all(|(a, b)| (*a as f64 - b).abs() <= tol)
}

#[test]
fn constant_depth_faces_the_camera() {
    for (w, h, a) in [(2, 2, 1.0), (2, 3, 0.5), (7, 5, 12.25), (16, 9, 1000.0)] {
        let n = depth_to_normals(&plane(w, h, a, 0.0, 0.0));
        assert_eq!(n.valid_count(), w * h);
        assert!(n.iter().all(|p| close(p.unwrap(), [0.0, 0.0, 1.0], 1e-6)));
    }
}

#[test]
fn unit_ramps_tilt_by_forty_five_degrees() {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let n = depth_to_normals(&plane(6, 4, 3.0, 1.0, 0.0));
    assert!(n.iter().all(|p| close(p.unwrap(), [s, 0.0, s], 1e-6)));
    let n = depth_to_normals(&plane(3, 5, 3.0, 0.0, 1.0));
    assert!(n.iter().all(|p| close(p.unwrap(), [0.0, s, s], 1e-6)));
}

#[test]
fn invalid_depth_yields_invalid_or_one_sided_normals() {
    // A ramp along u with a hole at (1, 1) and a negative depth at (3, 3).
    let mut d: Vec<f32> = (0..16).map(|i| 2.0 + (i % 4) as f32).collect();
    d[5] = f32::NAN;
    d[15] = -1.0;
    let n = depth_to_normals(&DepthMap::new(4, 4, d).unwrap());
    assert_eq!(n.get(1, 1), None);
    assert_eq!(n.get(3, 3), None);
    // (1, 0) has no usable vertical neighbour at all.
    assert_eq!(n.get(1, 0), None);
    // (1, 2) falls back to a forward difference downwards.
    let s = std::f64::consts::FRAC_1_SQRT_2;
    assert!(close(n.get(1, 2).unwrap(), [s, 0.0, s], 1e-6));
    assert!(close(n.get(0, 0).unwrap(), [s, 0.0, s], 1e-6));
}

#[test]
fn single_pixel_has_no_normal() {
    let n = depth_to_normals(&plane(1, 1, 3.0, 0.0, 0.0));
    assert_eq!(n.valid_count(), 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// Dyadic slopes and integer offsets keep every depth exact in f32.
    #[test]
    fn planes_are_recovered_exactly(w in 1usize..10, h in 1usize..10, a in 1i32..100,
                                    bu in -16i32..16, bv in -16i32..16) {
        let (bu, bv) = (bu as f32 / 8.0, bv as f32 / 8.0);
        // Keep the whole plane in front of the camera.
        let a = a as f32 + 2.0 * 10.0 * 2.0;
        let n = depth_to_normals(&plane(w, h, a, bu, bv));
        let du = if w > 1 { bu as f64 } else { 0.0 };
        let dv = if h > 1 { bv as f64 } else { 0.0 };
        if w == 1 || h == 1 {
            // One axis has no neighbours: no derivative, no normal.
            prop_assert_eq!(n.valid_count(), 0);
        } else {
            let k = (du * du + dv * dv + 1.0).sqrt();
            for p in n.iter() {
                prop_assert!(close(p.unwrap(), [du / k, dv / k, 1.0 / k], 1e-6));
            }
        }
    }

    #[test]
    fn valid_normals_are_unit_length(w in 1usize..8, h in 1usize..8, seed in any::<u64>()) {
        let mut r = rng(seed);
        let d: Vec<f32> = (0..w * h)
            .map(|_| if r.random_bool(0.15) { f32::NAN } else { r.random_range(0.1f32..50.0) })
            .collect();
        let n = depth_to_normals(&DepthMap::new(w, h, d).unwrap());
        for p in n.iter().flatten() {
            let len = p.iter().map(|c| (*c as f64).powi(2)).sum::<f64>().sqrt();
            prop_assert!((len - 1.0).abs() <= 1e-6, "length {}", len);
            prop_assert!(p[2] > 0.0);
        }
    }

    #[test]
    fn depth_offset_does_not_change_normals(w in 2usize..8, h in 2usize..8, k in 1u32..64, seed in any::<u64>()) {
        let mut r = rng(seed);
        let d: Vec<f32> = (0..w * h).map(|_| r.random_range(4u32..64) as f32 / 4.0).collect();
        let shifted: Vec<f32> = d.iter().map(|v| v + k as f32).collect();
        let a = depth_to_normals(&DepthMap::new(w, h, d).unwrap());
        let b = depth_to_normals(&DepthMap::new(w, h, shifted).unwrap());
        prop_assert_eq!(a, b);
    }

    #[test]
    fn angular_loss_is_zero_on_self_and_symmetric(w in 1usize..6, h in 1usize..6, seed in any::<u64>()) {
        let mut r = rng(seed);
        let mut unit = || {
            let v = [r.random_range(-1.0f32..1.0), r.random_range(-1.0f32..1.0), r.random_range(0.05f32..1.0)];
            let n = v.iter().map(|c| c * c).sum::<f32>().sqrt();
            Some([v[0] / n, v[1] / n, v[2] / n])
        };
        let a = NormalMap::new(w, h, (0..w * h).map(|_| unit()).collect()).unwrap();
        let b = NormalMap::new(w, h, (0..w * h).map(|_| unit()).collect()).unwrap();
        let self_loss = angular_loss(&a, &a).unwrap();
        prop_assert_eq!(self_loss.sum, 0.0);
        let ab = angular_loss(&a, &b).unwrap();
        let ba = angular_loss(&b, &a).unwrap();
        prop_assert_eq!(ab.sum, ba.sum);
        prop_assert_eq!(&ab.per_pixel, &ba.per_pixel);
        prop_assert!(ab.per_pixel.iter().flatten().all(|&t| (0.0..=std::f64::consts::PI).contains(&t)));
    }

    #[test]
    fn png_round_trip_is_within_a_hundredth_of_a_radian(w in 1usize..12, h in 1usize..12, seed in any::<u64>()) {
        let mut r = rng(seed);
        let normals: Vec<Option<[f32; 3]>> = (0..w * h)
            .map(|_| loop {
                let v = [r.random_range(-1.0f64..1.0), r.random_range(-1.0f64..1.0), r.random_range(0.0f64..1.0)];
                let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
                if n > 1e-3 && v[2] / n >= 0.05 {
                    break Some([(v[0] / n) as f32, (v[1] / n) as f32, (v[2] / n) as f32]);
                }
            })
            .collect();
        let map = NormalMap::new(w, h, normals).unwrap();
        let back = decode_normal_png(&encode_normal_png(&map).unwrap()).unwrap();
        prop_assert_eq!(back.valid_count(), w * h);
        for (a, b) in map.iter().zip(back.iter()) {
            let t = angle_between(a.unwrap(), b.unwrap());
            prop_assert!(t < 0.01, "angle {}", t);
        }
    }
}

#[test]
fn flat_plane_encodes_to_mid_grey_blue() {
    let n = depth_to_normals(&plane(4, 3, 5.0, 0.0, 0.0));
    let img = encode_normal_rgb(&n);
    assert!(img.pixels().all(|p| p.0 == [128, 128, 255]));
    let back = decode_normal_rgb(&img).unwrap();
    assert!(back
        .iter()
        .all(|p| close(p.unwrap(), [0.0, 0.0, 1.0], 1e-2)));
}
