//! Forward kernels. None of them mutate their inputs.

use super::{Element, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Mul,
}

/// Spatial reduction used by the event-fusion gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PoolMode {
    #[default]
    Average,
    Max,
}

pub const GROUP_NORM_EPS: f64 = 1e-5;

/// Output of a kernel built in `f64` and rounded to `T` once per element.
fn build<T: Element>(shape: Vec<usize>, data: impl IntoIterator<Item = f64>) -> Tensor<T> {
    let data: Vec<T> = data.into_iter().map(T::from_f64).collect();
    debug_assert_eq!(shape.iter().product::<usize>(), data.len());
    Tensor { shape, data }
}

/// Finite inputs must give finite outputs.
pub(crate) fn debug_check_finite<T: Element>(op: &str, inputs: &[&Tensor<T>], out: &Tensor<T>) {
    if cfg!(debug_assertions) && inputs.iter().all(|t| t.all_finite()) {
        debug_assert!(
            out.all_finite(),
            "{op} produced a non-finite value from finite inputs"
        );
    }
}

pub fn matmul<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, k) = a
        .dims2()
        .map_err(|_| Error::shape("matmul", a.shape(), b.shape()))?;
    let (k2, n) = b
        .dims2()
        .map_err(|_| Error::shape("matmul", a.shape(), b.shape()))?;
    if k != k2 {
        return Err(Error::shape("matmul", a.shape(), b.shape()));
    }
    let mut out = vec![0.0f64; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a.data[i * k + p].to_f64();
            if av == 0.0 {
                continue;
            }
            for (o, bv) in row.iter_mut().zip(&b.data[p * n..(p + 1) * n]) {
                *o += av * bv.to_f64();
            }
        }
    }
    let out = build(vec![m, n], out);
    debug_check_finite("matmul", &[a, b], &out);
    Ok(out)
}

pub fn transpose<T: Element>(a: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, n) = a.dims2()?;
    let mut data = Vec::with_capacity(m * n);
    for j in 0..n {
        for i in 0..m {
            data.push(a.data[i * n + j]);
        }
    }
    Ok(Tensor {
        shape: vec![n, m],
        data,
    })
}

/// Row-wise softmax with per-row max subtraction.
pub fn softmax_rows<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, n) = x.dims2()?;
    let mut out = Vec::with_capacity(m * n);
    for row in x.data.chunks(n) {
        let max = row
            .iter()
            .map(|v| v.to_f64())
            .fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v.to_f64() - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        out.extend(exps.into_iter().map(|e| e / total));
    }
    let out = build(vec![m, n], out);
    debug_check_finite("softmax_rows", &[x], &out);
    Ok(out)
}

/// Per-pixel linear map `out[o,h,w] = Σ_i W[o,i]·X[i,h,w] + b[o]`.
pub fn conv1x1<T: Element>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (c_in, h, w) = x.dims3()?;
    let (c_out, wc_in) = weight
        .dims2()
        .map_err(|_| Error::shape("conv1x1", x.shape(), weight.shape()))?;
    if wc_in != c_in {
        return Err(Error::shape("conv1x1", x.shape(), weight.shape()));
    }
    if bias.shape() != [c_out] {
        return Err(Error::shape("conv1x1 bias", weight.shape(), bias.shape()));
    }
    let hw = h * w;
    let mut out = vec![0.0f64; c_out * hw];
    for o in 0..c_out {
        let plane = &mut out[o * hw..(o + 1) * hw];
        plane.fill(bias.data[o].to_f64());
        for i in 0..c_in {
            let wv = weight.data[o * c_in + i].to_f64();
            for (acc, xv) in plane.iter_mut().zip(&x.data[i * hw..(i + 1) * hw]) {
                *acc += wv * xv.to_f64();
            }
        }
    }
    let out = build(vec![c_out, h, w], out);
    debug_check_finite("conv1x1", &[x, weight, bias], &out);
    Ok(out)
}

/// 3×3 cross-correlation, stride 1, zero padding 1 (same-size output).
pub fn conv3x3<T: Element>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (c_in, h, w) = x.dims3()?;
    let c_out = match *weight.shape() {
        [o, i, 3, 3] if i == c_in => o,
        _ => return Err(Error::shape("conv3x3", x.shape(), weight.shape())),
    };
    if bias.shape() != [c_out] {
        return Err(Error::shape("conv3x3 bias", weight.shape(), bias.shape()));
    }
    let hw = h * w;
    let mut out = vec![0.0f64; c_out * hw];
    for o in 0..c_out {
        let plane = &mut out[o * hw..(o + 1) * hw];
        plane.fill(bias.data[o].to_f64());
        for i in 0..c_in {
            let src = &x.data[i * hw..(i + 1) * hw];
            let kernel = &weight.data[(o * c_in + i) * 9..(o * c_in + i + 1) * 9];
            for (tap, kv) in kernel.iter().enumerate() {
                let kv = kv.to_f64();
                if kv == 0.0 {
                    continue;
                }
                let (dy, dx) = (tap / 3, tap % 3);
                for_each_tap(h, w, dy, dx, |dst, src_idx| {
                    plane[dst] += kv * src[src_idx].to_f64();
                });
            }
        }
    }
    let out = build(vec![c_out, h, w], out);
    debug_check_finite("conv3x3", &[x, weight, bias], &out);
    Ok(out)
}

/// Visits every output pixel whose kernel tap `(dy, dx)` lands inside the
/// unpadded input, passing `(output index, input index)`.
pub(crate) fn for_each_tap(
    h: usize,
    w: usize,
    dy: usize,
    dx: usize,
    mut f: impl FnMut(usize, usize),
) {
    for oy in 0..h {
        let iy = oy + dy;
        if iy < 1 || iy > h {
            continue;
        }
        let iy = iy - 1;
        for ox in 0..w {
            let ix = ox + dx;
            if ix < 1 || ix > w {
                continue;
            }
            f(oy * w + ox, iy * w + ix - 1);
        }
    }
}

/// Per-group statistics kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct GroupStats {
    pub mean: Vec<f64>,
    pub inv_std: Vec<f64>,
}

pub fn group_norm<T: Element>(
    x: &Tensor<T>,
    groups: usize,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: f64,
) -> Result<Tensor<T>> {
    group_norm_with_stats(x, groups, gamma, beta, eps).map(|(out, _)| out)
}

pub(crate) fn group_norm_with_stats<T: Element>(
    x: &Tensor<T>,
    groups: usize,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: f64,
) -> Result<(Tensor<T>, GroupStats)> {
    let (c, h, w) = x.dims3()?;
    if groups == 0 || c % groups != 0 {
        return Err(Error::invalid(format!(
            "group_norm: {groups} groups do not divide {c} channels"
        )));
    }
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::invalid(format!(
            "group_norm: eps must be positive, got {eps}"
        )));
    }
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(Error::shape(
            "group_norm affine",
            gamma.shape(),
            beta.shape(),
        ));
    }
    let hw = h * w;
    let span = c / groups * hw;
    let mut stats = GroupStats {
        mean: Vec::with_capacity(groups),
        inv_std: Vec::with_capacity(groups),
    };
    let mut out = Vec::with_capacity(c * hw);
    for (g, chunk) in x.data.chunks(span).enumerate() {
        let mean = chunk.iter().map(|v| v.to_f64()).sum::<f64>() / span as f64;
        let var = chunk
            .iter()
            .map(|v| (v.to_f64() - mean).powi(2))
            .sum::<f64>()
            / span as f64;
        let inv_std = 1.0 / (var + eps).sqrt();
        for (k, v) in chunk.iter().enumerate() {
            let ch = g * (c / groups) + k / hw;
            let normalized = (v.to_f64() - mean) * inv_std;
            out.push(gamma.data[ch].to_f64() * normalized + beta.data[ch].to_f64());
        }
        stats.mean.push(mean);
        stats.inv_std.push(inv_std);
    }
    let out = build(vec![c, h, w], out);
    debug_check_finite("group_norm", &[x, gamma, beta], &out);
    Ok((out, stats))
}

pub fn sigmoid<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    let out = build(
        x.shape.clone(),
        x.data.iter().map(|v| {
            let v = v.to_f64();
            // Stable on both tails.
            if v >= 0.0 {
                1.0 / (1.0 + (-v).exp())
            } else {
                let e = v.exp();
                e / (1.0 + e)
            }
        }),
    );
    debug_check_finite("sigmoid", &[x], &out);
    out
}

pub fn global_avg_pool<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, h, w) = x.dims3()?;
    let hw = h * w;
    Ok(build(
        vec![c, 1, 1],
        x.data
            .chunks(hw)
            .map(|plane| plane.iter().map(|v| v.to_f64()).sum::<f64>() / hw as f64),
    ))
}

pub fn global_max_pool<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    global_max_pool_with_argmax(x).map(|(out, _)| out)
}

/// Max pool plus the flat index of the first maximum in each channel.
pub(crate) fn global_max_pool_with_argmax<T: Element>(
    x: &Tensor<T>,
) -> Result<(Tensor<T>, Vec<usize>)> {
    let (c, h, w) = x.dims3()?;
    let hw = h * w;
    let mut values = Vec::with_capacity(c);
    let mut argmax = Vec::with_capacity(c);
    for (ch, plane) in x.data.chunks(hw).enumerate() {
        let (best, v) =
            plane.iter().enumerate().fold(
                (0, plane[0]),
                |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) },
            );
        values.push(v);
        argmax.push(ch * hw + best);
    }
    Ok((
        Tensor {
            shape: vec![c, 1, 1],
            data: values,
        },
        argmax,
    ))
}

/// `(C, H, W)` to `(C, H·W)`; column `n` is pixel `(n / W, n % W)`.
pub fn flatten_spatial<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, h, w) = x.dims3()?;
    x.reshape(vec![c, h * w])
}

pub fn unflatten_spatial<T: Element>(y: &Tensor<T>, h: usize, w: usize) -> Result<Tensor<T>> {
    let (c, n) = y.dims2()?;
    if n != h * w {
        return Err(Error::invalid(format!(
            "unflatten_spatial: {n} columns cannot be viewed as {h}x{w}"
        )));
    }
    y.reshape(vec![c, h, w])
}

/// How `b` lines up against `a` in an elementwise op.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Broadcast {
    Same,
    /// `b` is `C×1×1` against `a`'s `C×H×W`; the value is `H·W`.
    Channel(usize),
}

pub(crate) fn broadcast_kind<T: Element>(
    op: &'static str,
    a: &Tensor<T>,
    b: &Tensor<T>,
) -> Result<Broadcast> {
    if a.shape == b.shape {
        return Ok(Broadcast::Same);
    }
    match (a.shape.as_slice(), b.shape.as_slice()) {
        ([c, h, w], [cb, 1, 1]) if c == cb => Ok(Broadcast::Channel(h * w)),
        _ => Err(Error::shape(op, a.shape(), b.shape())),
    }
}

/// Elementwise add or multiply. `b` may be `C×1×1` against `a`'s `C×H×W`;
/// no other broadcasting is allowed.
pub fn elementwise<T: Element>(
    op: ElementwiseOp,
    a: &Tensor<T>,
    b: &Tensor<T>,
) -> Result<Tensor<T>> {
    let name = match op {
        ElementwiseOp::Add => "add",
        ElementwiseOp::Mul => "mul",
    };
    let kind = broadcast_kind(name, a, b)?;
    let b_at = |i: usize| match kind {
        Broadcast::Same => b.data[i].to_f64(),
        Broadcast::Channel(hw) => b.data[i / hw].to_f64(),
    };
    let out = build(
        a.shape.clone(),
        a.data.iter().enumerate().map(|(i, av)| match op {
            ElementwiseOp::Add => av.to_f64() + b_at(i),
            ElementwiseOp::Mul => av.to_f64() * b_at(i),
        }),
    );
    debug_check_finite(name, &[a, b], &out);
    Ok(out)
}

pub fn add<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    elementwise(ElementwiseOp::Add, a, b)
}

pub fn mul<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    elementwise(ElementwiseOp::Mul, a, b)
}

/// `base + scale·x` with a scalar `scale`. A zero scale returns `base`
/// bit for bit, signed zeros included.
pub fn scale_add<T: Element>(
    base: &Tensor<T>,
    scale: &Tensor<T>,
    x: &Tensor<T>,
) -> Result<Tensor<T>> {
    if base.shape != x.shape {
        return Err(Error::shape("scale_add", base.shape(), x.shape()));
    }
    if scale.shape() != [1] {
        return Err(Error::shape("scale_add scale", base.shape(), scale.shape()));
    }
    let s = scale.data[0].to_f64();
    if s == 0.0 {
        return Ok(base.clone());
    }
    let out = build(
        base.shape.clone(),
        base.data
            .iter()
            .zip(&x.data)
            .map(|(b, v)| b.to_f64() + s * v.to_f64()),
    );
    debug_check_finite("scale_add", &[base, scale, x], &out);
    Ok(out)
}

/// Stacks two feature maps along the channel axis, `a` first.
pub fn concat_channels<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (ca, h, w) = a.dims3()?;
    let (cb, hb, wb) = b.dims3()?;
    if (h, w) != (hb, wb) {
        return Err(Error::shape("concat_channels", a.shape(), b.shape()));
    }
    let mut data = Vec::with_capacity(a.len() + b.len());
    data.extend_from_slice(&a.data);
    data.extend_from_slice(&b.data);
    Ok(Tensor {
        shape: vec![ca + cb, h, w],
        data,
    })
}
