//! Finite-difference verification of the fusion blocks' backward passes.
//!
//! The objective is the sum of the block output. Analytic gradients come
//! from the tape in the caller's precision; the difference quotients
//! evaluate the same forward in `f64`.

use rand::Rng;

use super::{
    adfm_forward, eafm_forward, seeded_rng, AdfmParams, AdfmPass, EafmParams, EafmPass, ParamSet,
};
use crate::error::{Error, Result};
use crate::tensor::{finite_diff_check, Element, GradReport, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Negative control: corrupt one analytic coordinate before comparing,
    /// so a working check must report failure.
    pub perturb: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            perturb: false,
        }
    }
}

/// Parameter tensors followed by the two inputs.
type SplitInputs = (Vec<Tensor<f64>>, Tensor<f64>, Tensor<f64>);

fn split_inputs(mut tensors: Vec<Tensor<f64>>) -> Result<SplitInputs> {
    let b = tensors
        .pop()
        .ok_or_else(|| Error::invalid("missing input tensor"))?;
    let a = tensors
        .pop()
        .ok_or_else(|| Error::invalid("missing input tensor"))?;
    Ok((tensors, a, b))
}

/// Fixed random weights `R` of the scalar objective `Σ out ⊙ R`. A plain
/// sum would hide errors in directions that sum to zero, such as the mean
/// removed by group normalization.
fn objective_weights(shape: &[usize]) -> Result<Tensor<f64>> {
    let mut rng = seeded_rng(OBJECTIVE_SEED);
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
}

const OBJECTIVE_SEED: u64 = 0x000b_1ec7;

fn run<T: Element>(
    mut named: Vec<(String, Tensor<T>)>,
    mut analytic: Vec<Tensor<T>>,
    weights: Tensor<f64>,
    opts: GradCheckOptions,
    eval: impl Fn(Vec<Tensor<f64>>) -> Result<Tensor<f64>>,
) -> Result<GradReport> {
    if opts.perturb {
        if let Some(v) = analytic.first_mut().and_then(|t| t.data_mut().first_mut()) {
            let a = v.to_f64();
            *v = T::from_f64(a + 0.01 * a.abs().max(1.0));
        }
    }
    let params: Vec<(String, Tensor<f64>)> = named.drain(..).map(|(n, t)| (n, t.cast())).collect();
    finite_diff_check(&params, &analytic, opts.eps, |point| {
        let out = eval(point.to_vec())?;
        if out.shape() != weights.shape() {
            return Err(Error::shape(
                "gradient check objective",
                weights.shape(),
                out.shape(),
            ));
        }
        Ok(out
            .data()
            .iter()
            .zip(weights.data())
            .map(|(o, w)| o * w)
            .sum())
    })
}

/// Checks every ADFM parameter and both inputs.
pub fn check_adfm<T: Element>(
    f_r: &Tensor<T>,
    f_n: &Tensor<T>,
    params: &AdfmParams<T>,
    opts: GradCheckOptions,
) -> Result<GradReport> {
    let pass = AdfmPass::record(f_r, f_n, params)?;
    let weights = objective_weights(pass.output().shape())?;
    let grads = pass.gradients(&weights.cast())?;

    let mut named = params.named_tensors();
    named.push(("input.f_r".into(), f_r.clone()));
    named.push(("input.f_n".into(), f_n.clone()));
    let mut analytic: Vec<Tensor<T>> = grads
        .params
        .named_tensors()
        .into_iter()
        .map(|(_, t)| t)
        .collect();
    analytic.push(grads.f_r);
    analytic.push(grads.f_n);

    let template = params.cast::<f64>();
    run(named, analytic, weights, opts, |tensors| {
        let (p, a, b) = split_inputs(tensors)?;
        adfm_forward(&a, &b, &template.with_tensors(p)?)
    })
}

/// Checks every EAFM parameter and both inputs.
pub fn check_eafm<T: Element>(
    f_a: &Tensor<T>,
    f_e: &Tensor<T>,
    params: &EafmParams<T>,
    opts: GradCheckOptions,
) -> Result<GradReport> {
    let pass = EafmPass::record(f_a, f_e, params)?;
    let weights = objective_weights(pass.output().shape())?;
    let grads = pass.gradients(&weights.cast())?;

    let mut named = params.named_tensors();
    named.push(("input.f_a".into(), f_a.clone()));
    named.push(("input.f_e".into(), f_e.clone()));
    let mut analytic: Vec<Tensor<T>> = grads
        .params
        .named_tensors()
        .into_iter()
        .map(|(_, t)| t)
        .collect();
    analytic.push(grads.f_a);
    analytic.push(grads.f_e);

    let template = params.cast::<f64>();
    run(named, analytic, weights, opts, |tensors| {
        let (p, a, b) = split_inputs(tensors)?;
        eafm_forward(&a, &b, &template.with_tensors(p)?)
    })
}

/// Inputs and parameters for one randomized check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckCase<P> {
    pub a: Tensor<f32>,
    pub b: Tensor<f32>,
    pub params: P,
}

/// Moves parameters off their initial values so no gradient is trivially
/// zero: biases in ±0.2, GN scale in [0.5, 1.5], GN shift in ±0.5 and
/// α in [0.5, 1.5]. Weights keep their initialization.
fn randomize<P: ParamSet<f32>>(p: &P, rng: &mut impl Rng) -> Result<P> {
    let tensors = p
        .named_tensors()
        .into_iter()
        .map(|(name, t)| {
            let range = if name.ends_with(".b") {
                Some(-0.2f32..0.2)
            } else if name.ends_with("gn.gamma") || name.ends_with("alpha") {
                Some(0.5..1.5)
            } else if name.ends_with("gn.beta") {
                Some(-0.5..0.5)
            } else {
                None
            };
            match range {
                Some(r) => t.map(|_| rng.random_range(r.clone())),
                None => t,
            }
        })
        .collect();
    p.with_tensors(tensors)
}

fn random_input(rng: &mut impl Rng, c: usize, h: usize, w: usize) -> Result<Tensor<f32>> {
    Tensor::new(
        vec![c, h, w],
        (0..c * h * w)
            .map(|_| rng.random_range(-1.0f32..1.0))
            .collect(),
    )
}

/// Seeded ADFM problem with `C×H×W` inputs uniform in ±1.
pub fn sample_adfm_case(
    c: usize,
    c_prime: usize,
    h: usize,
    w: usize,
    seed: u64,
) -> Result<CheckCase<AdfmParams>> {
    let mut rng = seeded_rng(seed);
    let params = randomize(&AdfmParams::init(c, c_prime, seed)?, &mut rng)?;
    Ok(CheckCase {
        a: random_input(&mut rng, c, h, w)?,
        b: random_input(&mut rng, c, h, w)?,
        params,
    })
}

/// Seeded EAFM problem with `C×H×W` inputs uniform in ±1.
pub fn sample_eafm_case(
    c: usize,
    groups: usize,
    h: usize,
    w: usize,
    seed: u64,
) -> Result<CheckCase<EafmParams>> {
    let mut rng = seeded_rng(seed);
    let params = randomize(&EafmParams::init(c, groups, seed)?, &mut rng)?;
    Ok(CheckCase {
        a: random_input(&mut rng, c, h, w)?,
        b: random_input(&mut rng, c, h, w)?,
        params,
    })
}
