//! The two fusion blocks and their parameters.
//!
//! [`adfm`] fuses RGB and surface-normal features with global cross-attention
//! behind an α-gated residual. [`eafm`] fuses the result with event features
//! through two gated interaction branches. Both are evaluated on a
//! [`Tape`](crate::tensor::Tape) so every parameter has an exact gradient.

pub mod adfm;
pub mod check;
pub mod eafm;
mod store;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use adfm::{adfm_forward, AdfmGradients, AdfmParams, AdfmPass};
pub use check::{
    check_adfm, check_eafm, sample_adfm_case, sample_eafm_case, CheckCase, GradCheckOptions,
};
pub use eafm::{eafm_forward, EafmBranch, EafmGradients, EafmParams, EafmPass};
pub use store::{load_params, save_params, MANIFEST_FILE};

use crate::error::{Error, Result};
use crate::tensor::{Element, Tape, Tensor, Var};

/// Default group count for the normalization inside the event block.
pub const DEFAULT_GROUPS: usize = 8;

/// `C / 2`, at least one.
pub fn default_reduced_channels(c: usize) -> usize {
    (c / 2).max(1)
}

/// 8 when it divides `C`; otherwise the largest divisor of `C` below 8
/// (`C` itself when `C < 8`).
pub fn default_groups(c: usize) -> usize {
    (1..=DEFAULT_GROUPS.min(c))
        .rev()
        .find(|g| c.is_multiple_of(*g))
        .unwrap_or(1)
}

/// Convolution weights and bias. `weight` is `out×in` for 1×1 kernels and
/// `out×in×3×3` for 3×3 kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv<T = f32> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Element> Conv<T> {
    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn cast<U: Element>(&self) -> Conv<U> {
        Conv {
            weight: self.weight.cast(),
            bias: self.bias.cast(),
        }
    }

    pub(crate) fn register(&self, tape: &mut Tape<T>) -> ConvVars {
        ConvVars {
            w: tape.leaf(self.weight.clone()),
            b: tape.leaf(self.bias.clone()),
        }
    }
}

impl Conv<f32> {
    /// Weights uniform in `±sqrt(1 / fan_in)` with `fan_in = in·k²`, zero bias.
    pub(crate) fn init(
        rng: &mut ChaCha8Rng,
        out: usize,
        inp: usize,
        kernel: usize,
    ) -> Result<Self> {
        let fan_in = inp * kernel * kernel;
        let shape = if kernel == 1 {
            vec![out, inp]
        } else {
            vec![out, inp, kernel, kernel]
        };
        Ok(Self {
            weight: uniform(rng, shape, init_bound(fan_in))?,
            bias: Tensor::zeros(vec![out])?,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvVars {
    pub w: Var,
    pub b: Var,
}

/// Largest `f32` not above `sqrt(1 / fan_in)`.
pub fn init_bound(fan_in: usize) -> f32 {
    let exact = (1.0 / fan_in as f64).sqrt();
    let b = exact as f32;
    if b as f64 > exact {
        b.next_down()
    } else {
        b
    }
}

pub(crate) fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform(rng: &mut ChaCha8Rng, shape: Vec<usize>, bound: f32) -> Result<Tensor<f32>> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::new(shape, data)
}

/// A parameter set viewed as an ordered list of named tensors.
pub trait ParamSet<T: Element>: Sized {
    fn named_tensors(&self) -> Vec<(String, Tensor<T>)>;

    /// Rebuilds the set from tensors in [`named_tensors`](Self::named_tensors)
    /// order, checking every shape.
    fn with_tensors(&self, tensors: Vec<Tensor<T>>) -> Result<Self>;
}

/// Pops the next tensor, requiring the same shape as `like`.
pub(crate) fn take_like<T: Element>(
    it: &mut impl Iterator<Item = Tensor<T>>,
    like: &Tensor<T>,
    name: &str,
) -> Result<Tensor<T>> {
    let t = it
        .next()
        .ok_or_else(|| Error::invalid(format!("missing tensor for {name}")))?;
    if t.shape() != like.shape() {
        return Err(Error::invalid(format!(
            "{name}: expected shape {:?}, got {:?}",
            like.shape(),
            t.shape()
        )));
    }
    Ok(t)
}

pub(crate) fn take_conv<T: Element>(
    it: &mut impl Iterator<Item = Tensor<T>>,
    like: &Conv<T>,
    name: &str,
) -> Result<Conv<T>> {
    Ok(Conv {
        weight: take_like(it, &like.weight, &format!("{name}.w"))?,
        bias: take_like(it, &like.bias, &format!("{name}.b"))?,
    })
}

pub(crate) fn push_conv<T: Element>(
    out: &mut Vec<(String, Tensor<T>)>,
    name: &str,
    conv: &Conv<T>,
) {
    out.push((format!("{name}.w"), conv.weight.clone()));
    out.push((format!("{name}.b"), conv.bias.clone()));
}

/// Parameters of the full RGB + normal + event fusion stack.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionParams<T = f32> {
    pub adfm: AdfmParams<T>,
    pub eafm: EafmParams<T>,
}

impl FusionParams<f32> {
    /// Fresh parameters; the event block draws from `seed + 1`.
    pub fn init(c: usize, c_prime: usize, groups: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            adfm: AdfmParams::init(c, c_prime, seed)?,
            eafm: EafmParams::init(c, groups, seed.wrapping_add(1))?,
        })
    }
}

impl<T: Element> ParamSet<T> for FusionParams<T> {
    fn named_tensors(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = self.adfm.named_tensors();
        out.extend(self.eafm.named_tensors());
        out
    }

    fn with_tensors(&self, tensors: Vec<Tensor<T>>) -> Result<Self> {
        let split = self.adfm.named_tensors().len();
        if tensors.len() < split {
            return Err(Error::invalid("too few tensors for the fusion parameters"));
        }
        let mut adfm = tensors;
        let eafm = adfm.split_off(split);
        Ok(Self {
            adfm: self.adfm.with_tensors(adfm)?,
            eafm: self.eafm.with_tensors(eafm)?,
        })
    }
}

/// Output of the composed stack and its intermediate RGB–normal fusion.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedFeatures<T = f32> {
    pub appearance_geometry: Tensor<T>,
    pub output: Tensor<T>,
}

/// `EAFM(ADFM(F_r, F_n), F_e)`.
pub fn fuse<T: Element>(
    f_rgb: &Tensor<T>,
    f_normal: &Tensor<T>,
    f_event: &Tensor<T>,
    params: &FusionParams<T>,
) -> Result<FusedFeatures<T>> {
    if f_rgb.shape() != f_normal.shape() || f_rgb.shape() != f_event.shape() {
        return Err(Error::invalid(format!(
            "feature maps must share one shape: rgb {:?}, normal {:?}, event {:?}",
            f_rgb.shape(),
            f_normal.shape(),
            f_event.shape()
        )));
    }
    let appearance_geometry = adfm_forward(f_rgb, f_normal, &params.adfm)?;
    let output = eafm_forward(&appearance_geometry, f_event, &params.eafm)?;
    Ok(FusedFeatures {
        appearance_geometry,
        output,
    })
}
