//! RGB / surface-normal fusion by global cross-attention.
//!
//! ```text
//! R = T(Conv₁ₓ₁(F_r))            C′×N, N = H·W
//! M = T(Conv₁ₓ₁(F_n))            C′×N
//! A = softmax_rows(Rᵀ M)         N×N
//! out = F_r + α · Conv₁ₓ₁(T⁻¹(M Aᵀ))
//! ```
//!
//! `T` flattens the spatial axes row-major. With `α = 0` the output is `F_r`
//! bit for bit.

use super::{push_conv, seeded_rng, take_conv, take_like, Conv, ConvVars, ParamSet};
use crate::error::{Error, Result};
use crate::tensor::{Element, Gradients, Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct AdfmParams<T = f32> {
    /// `C′×C`, RGB branch.
    pub reduce_r: Conv<T>,
    /// `C′×C`, normal branch.
    pub reduce_n: Conv<T>,
    /// `C×C′`.
    pub project: Conv<T>,
    pub alpha: T,
}

impl AdfmParams<f32> {
    /// Uniform `±sqrt(1/fan_in)` weights, zero biases, `α = 0`.
    pub fn init(c: usize, c_prime: usize, seed: u64) -> Result<Self> {
        if c == 0 || c_prime == 0 || c_prime > c {
            return Err(Error::invalid(format!(
                "reduced width must satisfy 1 <= C' <= C, got C = {c}, C' = {c_prime}"
            )));
        }
        let mut rng = seeded_rng(seed);
        Ok(Self {
            reduce_r: Conv::init(&mut rng, c_prime, c, 1)?,
            reduce_n: Conv::init(&mut rng, c_prime, c, 1)?,
            project: Conv::init(&mut rng, c, c_prime, 1)?,
            alpha: 0.0,
        })
    }
}

impl<T: Element> AdfmParams<T> {
    pub fn channels(&self) -> usize {
        self.reduce_r.in_channels()
    }

    pub fn reduced_channels(&self) -> usize {
        self.reduce_r.out_channels()
    }

    pub fn cast<U: Element>(&self) -> AdfmParams<U> {
        AdfmParams {
            reduce_r: self.reduce_r.cast(),
            reduce_n: self.reduce_n.cast(),
            project: self.project.cast(),
            alpha: U::from_f64(self.alpha.to_f64()),
        }
    }

    /// Shape template for `(C, C′)`; all values zero.
    pub fn zeros(c: usize, c_prime: usize) -> Result<Self> {
        let conv = |o, i| -> Result<Conv<T>> {
            Ok(Conv {
                weight: Tensor::zeros(vec![o, i])?,
                bias: Tensor::zeros(vec![o])?,
            })
        };
        Ok(Self {
            reduce_r: conv(c_prime, c)?,
            reduce_n: conv(c_prime, c)?,
            project: conv(c, c_prime)?,
            alpha: T::ZERO,
        })
    }

    fn validate(&self) -> Result<()> {
        let (c, cp) = (self.channels(), self.reduced_channels());
        let ok = self.reduce_r.weight.shape() == [cp, c]
            && self.reduce_n.weight.shape() == [cp, c]
            && self.project.weight.shape() == [c, cp]
            && cp <= c;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "inconsistent ADFM weights: reduce_r {:?}, reduce_n {:?}, project {:?}",
                self.reduce_r.weight.shape(),
                self.reduce_n.weight.shape(),
                self.project.weight.shape()
            )))
        }
    }

    fn register(&self, tape: &mut Tape<T>) -> AdfmVars {
        AdfmVars {
            reduce_r: self.reduce_r.register(tape),
            reduce_n: self.reduce_n.register(tape),
            project: self.project.register(tape),
            alpha: tape.leaf(Tensor::scalar(self.alpha)),
        }
    }
}

impl<T: Element> ParamSet<T> for AdfmParams<T> {
    fn named_tensors(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::with_capacity(7);
        push_conv(&mut out, "adfm.reduce_r", &self.reduce_r);
        push_conv(&mut out, "adfm.reduce_n", &self.reduce_n);
        push_conv(&mut out, "adfm.project", &self.project);
        out.push(("adfm.alpha".into(), Tensor::scalar(self.alpha)));
        out
    }

    fn with_tensors(&self, tensors: Vec<Tensor<T>>) -> Result<Self> {
        let mut it = tensors.into_iter();
        let reduce_r = take_conv(&mut it, &self.reduce_r, "adfm.reduce_r")?;
        let reduce_n = take_conv(&mut it, &self.reduce_n, "adfm.reduce_n")?;
        let project = take_conv(&mut it, &self.project, "adfm.project")?;
        let alpha = take_like(&mut it, &Tensor::scalar(self.alpha), "adfm.alpha")?.data()[0];
        if it.next().is_some() {
            return Err(Error::invalid("too many tensors for ADFM parameters"));
        }
        Ok(Self {
            reduce_r,
            reduce_n,
            project,
            alpha,
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct AdfmVars {
    reduce_r: ConvVars,
    reduce_n: ConvVars,
    project: ConvVars,
    alpha: Var,
}

fn check_inputs<T: Element>(f_r: &Tensor<T>, f_n: &Tensor<T>, p: &AdfmParams<T>) -> Result<()> {
    p.validate()?;
    if f_r.shape() != f_n.shape() {
        return Err(Error::shape("adfm inputs", f_r.shape(), f_n.shape()));
    }
    let (c, _, _) = f_r.dims3()?;
    if c != p.channels() {
        return Err(Error::invalid(format!(
            "ADFM expects {} channels, input has shape {:?}",
            p.channels(),
            f_r.shape()
        )));
    }
    Ok(())
}

/// Records the module on `tape`; returns `(output, attention)`.
fn build<T: Element>(tape: &mut Tape<T>, f_r: Var, f_n: Var, p: &AdfmVars) -> Result<(Var, Var)> {
    let (_, h, w) = tape.value(f_r).dims3()?;
    let r_red = tape.conv1x1(f_r, p.reduce_r.w, p.reduce_r.b)?;
    let n_red = tape.conv1x1(f_n, p.reduce_n.w, p.reduce_n.b)?;
    let r_flat = tape.flatten_spatial(r_red)?;
    let n_flat = tape.flatten_spatial(n_red)?;
    let r_t = tape.transpose(r_flat)?;
    let logits = tape.matmul(r_t, n_flat)?;
    let attention = tape.softmax_rows(logits)?;
    let attention_t = tape.transpose(attention)?;
    let attended = tape.matmul(n_flat, attention_t)?;
    let attended = tape.unflatten_spatial(attended, h, w)?;
    let projected = tape.conv1x1(attended, p.project.w, p.project.b)?;
    let out = tape.scale_add(f_r, p.alpha, projected)?;
    Ok((out, attention))
}

/// One recorded forward evaluation, kept for inspection and backward.
#[derive(Debug, Clone)]
pub struct AdfmPass<T = f32> {
    tape: Tape<T>,
    f_r: Var,
    f_n: Var,
    params: AdfmVars,
    output: Var,
    attention: Var,
    template: AdfmParams<T>,
}

/// Gradients of a scalar objective w.r.t. every parameter and both inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct AdfmGradients<T = f32> {
    pub params: AdfmParams<T>,
    pub f_r: Tensor<T>,
    pub f_n: Tensor<T>,
}

impl<T: Element> AdfmPass<T> {
    pub fn record(f_r: &Tensor<T>, f_n: &Tensor<T>, params: &AdfmParams<T>) -> Result<Self> {
        check_inputs(f_r, f_n, params)?;
        let mut tape = Tape::new();
        let fr = tape.leaf(f_r.clone());
        let fn_ = tape.leaf(f_n.clone());
        let vars = params.register(&mut tape);
        let (output, attention) = build(&mut tape, fr, fn_, &vars)?;
        Ok(Self {
            tape,
            f_r: fr,
            f_n: fn_,
            params: vars,
            output,
            attention,
            template: params.clone(),
        })
    }

    pub fn output(&self) -> &Tensor<T> {
        self.tape.value(self.output)
    }

    /// The `N×N` attention matrix; every row sums to one.
    pub fn attention(&self) -> &Tensor<T> {
        self.tape.value(self.attention)
    }

    pub fn tape(&self) -> &Tape<T> {
        &self.tape
    }

    /// Backpropagates `seed` (∂objective/∂output).
    pub fn gradients(&self, seed: &Tensor<T>) -> Result<AdfmGradients<T>> {
        let g = self.tape.backward(self.output, seed)?;
        Ok(AdfmGradients {
            params: self.collect(&g)?,
            f_r: g.get(self.f_r),
            f_n: g.get(self.f_n),
        })
    }

    fn collect(&self, g: &Gradients<T>) -> Result<AdfmParams<T>> {
        let p = &self.params;
        let tensors = [
            p.reduce_r.w,
            p.reduce_r.b,
            p.reduce_n.w,
            p.reduce_n.b,
            p.project.w,
            p.project.b,
            p.alpha,
        ]
        .map(|v| g.get(v));
        self.template.with_tensors(tensors.into())
    }
}

/// Fuses `F_r` and `F_n`, both `C×H×W`.
pub fn adfm_forward<T: Element>(
    f_r: &Tensor<T>,
    f_n: &Tensor<T>,
    params: &AdfmParams<T>,
) -> Result<Tensor<T>> {
    let pass = AdfmPass::record(f_r, f_n, params)?;
    Ok(pass.output().clone())
}
