//! Surface normals from dense depth, the angular normal loss, and an 8-bit
//! RGB encoding of normal maps.
//!
//! Normals are taken directly in pixel coordinates: `n ∝ (∂D/∂u, ∂D/∂v, 1)`
//! with `u` along the width and `v` along the height. The `+1` third
//! component fixes the orientation, so every valid normal has `n_z > 0`.

use std::io::Cursor;

use image::{ImageFormat, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    depth: Vec<f32>,
    valid: Vec<bool>,
}

impl DepthMap {
    /// Pixels are valid where depth is finite and positive.
    pub fn new(width: usize, height: usize, depth: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || depth.len() != width * height {
            return Err(Error::invalid(format!(
                "depth map {width}x{height} cannot hold {} values",
                depth.len()
            )));
        }
        let valid = depth.iter().map(|d| d.is_finite() && *d > 0.0).collect();
        Ok(Self {
            width,
            height,
            depth,
            valid,
        })
    }

    /// Reads a rank-2 `(H, W)` tensor; NaN marks invalid pixels.
    pub fn from_tensor(t: &Tensor<f32>) -> Result<Self> {
        let (h, w) = t.dims2()?;
        Self::new(w, h, t.data().to_vec())
    }

    pub fn to_tensor(&self) -> Tensor<f32> {
        let data = self
            .depth
            .iter()
            .zip(&self.valid)
            .map(|(&d, &ok)| if ok { d } else { f32::NAN })
            .collect();
        Tensor::new(vec![self.height, self.width], data).expect("extents checked at construction")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn depth(&self, u: usize, v: usize) -> Option<f32> {
        let i = v * self.width + u;
        self.valid[i].then(|| self.depth[i])
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap {
    width: usize,
    height: usize,
    normal: Vec<[f32; 3]>,
    valid: Vec<bool>,
}

impl NormalMap {
    /// `None` entries are invalid pixels. Valid entries are stored as given.
    pub fn new(width: usize, height: usize, normals: Vec<Option<[f32; 3]>>) -> Result<Self> {
        if width == 0 || height == 0 || normals.len() != width * height {
            return Err(Error::invalid(format!(
                "normal map {width}x{height} cannot hold {} values",
                normals.len()
            )));
        }
        let valid = normals.iter().map(Option::is_some).collect();
        let normal = normals.into_iter().map(|n| n.unwrap_or([0.0; 3])).collect();
        Ok(Self {
            width,
            height,
            normal,
            valid,
        })
    }

    /// Same normal at every pixel.
    pub fn uniform(width: usize, height: usize, n: [f32; 3]) -> Result<Self> {
        Self::new(width, height, vec![Some(n); width * height])
    }

    /// Reads a rank-3 `(3, H, W)` tensor. A pixel is valid when all three
    /// components are finite and not all zero.
    pub fn from_tensor(t: &Tensor<f32>) -> Result<Self> {
        let (c, h, w) = t.dims3()?;
        if c != 3 {
            return Err(Error::invalid(format!(
                "normal map tensor needs 3 channels, got shape {:?}",
                t.shape()
            )));
        }
        let plane = h * w;
        let d = t.data();
        let normals = (0..plane)
            .map(|i| {
                let n = [d[i], d[plane + i], d[2 * plane + i]];
                let ok = n.iter().all(|v| v.is_finite()) && n != [0.0; 3];
                ok.then_some(n)
            })
            .collect();
        Self::new(w, h, normals)
    }

    /// `(3, H, W)` tensor with NaN at invalid pixels.
    pub fn to_tensor(&self) -> Tensor<f32> {
        let plane = self.width * self.height;
        let mut data = vec![f32::NAN; 3 * plane];
        for (i, (n, &ok)) in self.normal.iter().zip(&self.valid).enumerate() {
            if ok {
                for (k, &component) in n.iter().enumerate() {
                    data[k * plane + i] = component;
                }
            }
        }
        Tensor::new(vec![3, self.height, self.width], data)
            .expect("extents checked at construction")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, u: usize, v: usize) -> Option<[f32; 3]> {
        let i = v * self.width + u;
        self.valid[i].then(|| self.normal[i])
    }

    /// Valid normals in row-major pixel order.
    pub fn iter(&self) -> impl Iterator<Item = Option<[f32; 3]>> + '_ {
        self.normal
            .iter()
            .zip(&self.valid)
            .map(|(n, &ok)| ok.then_some(*n))
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Mean `|n_z|` over valid pixels, `None` when nothing is valid.
    pub fn mean_abs_nz(&self) -> Option<f64> {
        let (sum, count) = self
            .iter()
            .flatten()
            .fold((0.0, 0usize), |(s, c), n| (s + (n[2] as f64).abs(), c + 1));
        (count > 0).then(|| sum / count as f64)
    }
}

/// One-dimensional derivative at `i` along a line of `len` samples.
///
/// Central where both neighbours are valid, otherwise one-sided.
fn derivative(i: usize, len: usize, sample: impl Fn(usize) -> Option<f64>) -> Option<f64> {
    let center = sample(i)?;
    let prev = if i > 0 { sample(i - 1) } else { None };
    let next = if i + 1 < len { sample(i + 1) } else { None };
    match (prev, next) {
        (Some(p), Some(n)) => Some((n - p) / 2.0),
        (None, Some(n)) => Some(n - center),
        (Some(p), None) => Some(center - p),
        (None, None) => None,
    }
}

pub fn depth_to_normals(d: &DepthMap) -> NormalMap {
    let (w, h) = (d.width, d.height);
    let at = |u: usize, v: usize| d.depth(u, v).map(f64::from);
    let normals = (0..h)
        .flat_map(|v| (0..w).map(move |u| (u, v)))
        .map(|(u, v)| {
            let du = derivative(u, w, |x| at(x, v))?;
            let dv = derivative(v, h, |y| at(u, y))?;
            let norm = (du * du + dv * dv + 1.0).sqrt();
            Some([(du / norm) as f32, (dv / norm) as f32, (1.0 / norm) as f32])
        })
        .collect();
    NormalMap::new(w, h, normals).expect("same extents as the depth map")
}

#[derive(Debug, Clone, PartialEq)]
pub struct AngularLoss {
    /// Sum of per-pixel angles over jointly valid pixels, radians.
    pub sum: f64,
    pub mean: f64,
    pub count: usize,
    /// Row-major per-pixel angle; `None` where either map is invalid.
    pub per_pixel: Vec<Option<f64>>,
}

/// Angle between two 3-vectors in `[0, π]`, symmetric in its arguments.
pub fn angle_between(a: [f32; 3], b: [f32; 3]) -> f64 {
    let a = a.map(f64::from);
    let b = b.map(f64::from);
    let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let aa = a[0] * a[0] + a[1] * a[1] + a[2] * a[2];
    let bb = b[0] * b[0] + b[1] * b[1] + b[2] * b[2];
    // Dividing by the stored norms makes a == b give exactly cos = 1.
    let cos = dot / (aa * bb).sqrt();
    cos.clamp(-1.0, 1.0).acos()
}

pub fn angular_loss(pred: &NormalMap, gt: &NormalMap) -> Result<AngularLoss> {
    if (pred.width, pred.height) != (gt.width, gt.height) {
        return Err(Error::shape(
            "angular_loss",
            &[pred.height, pred.width],
            &[gt.height, gt.width],
        ));
    }
    let per_pixel: Vec<Option<f64>> = pred
        .iter()
        .zip(gt.iter())
        .map(|(p, g)| Some(angle_between(p?, g?)))
        .collect();
    let (sum, count) = per_pixel
        .iter()
        .flatten()
        .fold((0.0, 0usize), |(s, c), a| (s + a, c + 1));
    if count == 0 {
        return Err(Error::EmptyDomain);
    }
    Ok(AngularLoss {
        sum,
        mean: sum / count as f64,
        count,
        per_pixel,
    })
}

fn quantize(component: f32) -> u8 {
    ((component as f64 + 1.0) / 2.0 * 255.0)
        .round()
        .clamp(0.0, 255.0) as u8
}

/// Maps each component from `[-1, 1]` to `0..=255`; invalid pixels are black.
pub fn encode_normal_rgb(n: &NormalMap) -> RgbImage {
    let mut img = RgbImage::new(n.width as u32, n.height as u32);
    for (i, normal) in n.iter().enumerate() {
        if let Some(v) = normal {
            let (x, y) = ((i % n.width) as u32, (i / n.width) as u32);
            img.put_pixel(x, y, image::Rgb(v.map(quantize)));
        }
    }
    img
}

/// Inverse of [`encode_normal_rgb`]: black pixels are invalid, the rest are
/// renormalized to unit length.
pub fn decode_normal_rgb(img: &RgbImage) -> Result<NormalMap> {
    let (w, h) = img.dimensions();
    if w == 0 || h == 0 {
        return Err(Error::invalid(format!(
            "normal image has degenerate size {w}x{h}"
        )));
    }
    let normals = img
        .pixels()
        .map(|px| {
            if px.0 == [0, 0, 0] {
                return None;
            }
            let v = px.0.map(|c| c as f64 / 255.0 * 2.0 - 1.0);
            let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            (norm > 0.0).then(|| v.map(|c| (c / norm) as f32))
        })
        .collect();
    NormalMap::new(w as usize, h as usize, normals)
}

pub fn encode_normal_png(n: &NormalMap) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    encode_normal_rgb(n).write_to(&mut Cursor::new(&mut bytes), ImageFormat::Png)?;
    Ok(bytes)
}

pub fn decode_normal_png(bytes: &[u8]) -> Result<NormalMap> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?;
    decode_normal_rgb(&img.to_rgb8())
}
