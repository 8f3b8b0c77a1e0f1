//! Event-aware fusion of appearance/geometry features `F_A` with event
//! features `F_E`.
//!
//! Two branches start from `F_A ⊙ F_E + F_A` and `F_A ⊙ F_E + F_E`. Each runs
//! conv3×3 → conv1×1 → group norm, then scales its channels by a gate
//! `σ(Conv₁ₓ₁(Pool(·)))`. The gated maps are concatenated (`A+E` first) and
//! a 1×1 convolution brings `2C` channels back to `C`.

use super::{push_conv, seeded_rng, take_conv, take_like, Conv, ConvVars, ParamSet};
use crate::error::{Error, Result};
use crate::tensor::{Element, Gradients, PoolMode, Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct EafmBranch<T = f32> {
    /// `C×C×3×3`.
    pub conv3: Conv<T>,
    /// `C×C`.
    pub conv1: Conv<T>,
    pub gn_gamma: Tensor<T>,
    pub gn_beta: Tensor<T>,
    /// `C×C`, applied to the pooled `C×1×1` vector.
    pub gate: Conv<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EafmParams<T = f32> {
    /// The `F_A ⊙ F_E + F_A` branch.
    pub appearance: EafmBranch<T>,
    /// The `F_A ⊙ F_E + F_E` branch.
    pub event: EafmBranch<T>,
    /// `C×2C`.
    pub adjust: Conv<T>,
    pub groups: usize,
    pub pool: PoolMode,
}

impl EafmBranch<f32> {
    fn init(rng: &mut rand_chacha::ChaCha8Rng, c: usize) -> Result<Self> {
        Ok(Self {
            conv3: Conv::init(rng, c, c, 3)?,
            conv1: Conv::init(rng, c, c, 1)?,
            gn_gamma: Tensor::ones(vec![c])?,
            gn_beta: Tensor::zeros(vec![c])?,
            gate: Conv::init(rng, c, c, 1)?,
        })
    }
}

impl<T: Element> EafmBranch<T> {
    fn cast<U: Element>(&self) -> EafmBranch<U> {
        EafmBranch {
            conv3: self.conv3.cast(),
            conv1: self.conv1.cast(),
            gn_gamma: self.gn_gamma.cast(),
            gn_beta: self.gn_beta.cast(),
            gate: self.gate.cast(),
        }
    }

    fn zeros(c: usize) -> Result<Self> {
        let conv = |shape: Vec<usize>| -> Result<Conv<T>> {
            Ok(Conv {
                bias: Tensor::zeros(vec![shape[0]])?,
                weight: Tensor::zeros(shape)?,
            })
        };
        Ok(Self {
            conv3: conv(vec![c, c, 3, 3])?,
            conv1: conv(vec![c, c])?,
            gn_gamma: Tensor::zeros(vec![c])?,
            gn_beta: Tensor::zeros(vec![c])?,
            gate: conv(vec![c, c])?,
        })
    }

    fn push_named(&self, out: &mut Vec<(String, Tensor<T>)>, prefix: &str) {
        push_conv(out, &format!("{prefix}.conv3"), &self.conv3);
        push_conv(out, &format!("{prefix}.conv1"), &self.conv1);
        out.push((format!("{prefix}.gn.gamma"), self.gn_gamma.clone()));
        out.push((format!("{prefix}.gn.beta"), self.gn_beta.clone()));
        push_conv(out, &format!("{prefix}.gate"), &self.gate);
    }

    fn take(&self, it: &mut impl Iterator<Item = Tensor<T>>, prefix: &str) -> Result<Self> {
        Ok(Self {
            conv3: take_conv(it, &self.conv3, &format!("{prefix}.conv3"))?,
            conv1: take_conv(it, &self.conv1, &format!("{prefix}.conv1"))?,
            gn_gamma: take_like(it, &self.gn_gamma, &format!("{prefix}.gn.gamma"))?,
            gn_beta: take_like(it, &self.gn_beta, &format!("{prefix}.gn.beta"))?,
            gate: take_conv(it, &self.gate, &format!("{prefix}.gate"))?,
        })
    }

    fn check(&self, c: usize) -> bool {
        self.conv3.weight.shape() == [c, c, 3, 3]
            && self.conv3.bias.shape() == [c]
            && self.conv1.weight.shape() == [c, c]
            && self.conv1.bias.shape() == [c]
            && self.gn_gamma.shape() == [c]
            && self.gn_beta.shape() == [c]
            && self.gate.weight.shape() == [c, c]
            && self.gate.bias.shape() == [c]
    }

    fn register(&self, tape: &mut Tape<T>) -> BranchVars {
        BranchVars {
            conv3: self.conv3.register(tape),
            conv1: self.conv1.register(tape),
            gamma: tape.leaf(self.gn_gamma.clone()),
            beta: tape.leaf(self.gn_beta.clone()),
            gate: self.gate.register(tape),
        }
    }
}

fn check_groups(c: usize, groups: usize) -> Result<()> {
    if groups == 0 || !c.is_multiple_of(groups) {
        return Err(Error::invalid(format!(
            "{groups} groups do not divide {c} channels"
        )));
    }
    Ok(())
}

impl EafmParams<f32> {
    /// Uniform `±sqrt(1/fan_in)` conv weights (`fan_in = C·k²`, `2C` for the
    /// channel adjustment), zero biases, `γ = 1`, `β = 0`.
    pub fn init(c: usize, groups: usize, seed: u64) -> Result<Self> {
        if c == 0 {
            return Err(Error::invalid("EAFM needs at least one channel"));
        }
        check_groups(c, groups)?;
        let mut rng = seeded_rng(seed);
        let appearance = EafmBranch::init(&mut rng, c)?;
        let event = EafmBranch::init(&mut rng, c)?;
        let adjust = Conv::init(&mut rng, c, 2 * c, 1)?;
        Ok(Self {
            appearance,
            event,
            adjust,
            groups,
            pool: PoolMode::Average,
        })
    }
}

impl<T: Element> EafmParams<T> {
    pub fn channels(&self) -> usize {
        self.adjust.out_channels()
    }

    pub fn cast<U: Element>(&self) -> EafmParams<U> {
        EafmParams {
            appearance: self.appearance.cast(),
            event: self.event.cast(),
            adjust: self.adjust.cast(),
            groups: self.groups,
            pool: self.pool,
        }
    }

    /// Shape template for `C` channels; all values zero.
    pub fn zeros(c: usize, groups: usize) -> Result<Self> {
        check_groups(c, groups)?;
        Ok(Self {
            appearance: EafmBranch::zeros(c)?,
            event: EafmBranch::zeros(c)?,
            adjust: Conv {
                weight: Tensor::zeros(vec![c, 2 * c])?,
                bias: Tensor::zeros(vec![c])?,
            },
            groups,
            pool: PoolMode::Average,
        })
    }

    fn validate(&self) -> Result<()> {
        let c = self.channels();
        check_groups(c, self.groups)?;
        let ok = self.adjust.weight.shape() == [c, 2 * c]
            && self.adjust.bias.shape() == [c]
            && self.appearance.check(c)
            && self.event.check(c);
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "inconsistent EAFM weight shapes for C = {c}"
            )))
        }
    }

    fn register(&self, tape: &mut Tape<T>) -> EafmVars {
        EafmVars {
            appearance: self.appearance.register(tape),
            event: self.event.register(tape),
            adjust: self.adjust.register(tape),
        }
    }
}

impl<T: Element> ParamSet<T> for EafmParams<T> {
    fn named_tensors(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::with_capacity(22);
        self.appearance.push_named(&mut out, "eafm.aE");
        self.event.push_named(&mut out, "eafm.eA");
        push_conv(&mut out, "eafm.adjust", &self.adjust);
        out
    }

    fn with_tensors(&self, tensors: Vec<Tensor<T>>) -> Result<Self> {
        let mut it = tensors.into_iter();
        let appearance = self.appearance.take(&mut it, "eafm.aE")?;
        let event = self.event.take(&mut it, "eafm.eA")?;
        let adjust = take_conv(&mut it, &self.adjust, "eafm.adjust")?;
        if it.next().is_some() {
            return Err(Error::invalid("too many tensors for EAFM parameters"));
        }
        Ok(Self {
            appearance,
            event,
            adjust,
            groups: self.groups,
            pool: self.pool,
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct BranchVars {
    conv3: ConvVars,
    conv1: ConvVars,
    gamma: Var,
    beta: Var,
    gate: ConvVars,
}

#[derive(Debug, Clone, Copy)]
struct EafmVars {
    appearance: BranchVars,
    event: BranchVars,
    adjust: ConvVars,
}

/// Refine, gate and reweight one branch; returns `(weighted, gate)`.
fn branch<T: Element>(
    tape: &mut Tape<T>,
    x: Var,
    p: &BranchVars,
    groups: usize,
    pool: PoolMode,
) -> Result<(Var, Var)> {
    let refined = tape.conv3x3(x, p.conv3.w, p.conv3.b)?;
    let refined = tape.conv1x1(refined, p.conv1.w, p.conv1.b)?;
    let normed = tape.group_norm(refined, groups, p.gamma, p.beta)?;
    let pooled = tape.global_pool(normed, pool)?;
    let gate = tape.conv1x1(pooled, p.gate.w, p.gate.b)?;
    let gate = tape.sigmoid(gate)?;
    let weighted = tape.mul(normed, gate)?;
    Ok((weighted, gate))
}

struct Built {
    output: Var,
    gates: [Var; 2],
}

fn build<T: Element>(
    tape: &mut Tape<T>,
    f_a: Var,
    f_e: Var,
    p: &EafmVars,
    groups: usize,
    pool: PoolMode,
) -> Result<Built> {
    let interaction = tape.mul(f_a, f_e)?;
    let x_ae = tape.add(interaction, f_a)?;
    let x_ea = tape.add(interaction, f_e)?;
    let (w_ae, gate_ae) = branch(tape, x_ae, &p.appearance, groups, pool)?;
    let (w_ea, gate_ea) = branch(tape, x_ea, &p.event, groups, pool)?;
    let joined = tape.concat_channels(w_ae, w_ea)?;
    let output = tape.conv1x1(joined, p.adjust.w, p.adjust.b)?;
    Ok(Built {
        output,
        gates: [gate_ae, gate_ea],
    })
}

#[derive(Debug, Clone)]
pub struct EafmPass<T = f32> {
    tape: Tape<T>,
    f_a: Var,
    f_e: Var,
    params: EafmVars,
    output: Var,
    gates: [Var; 2],
    template: EafmParams<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EafmGradients<T = f32> {
    pub params: EafmParams<T>,
    pub f_a: Tensor<T>,
    pub f_e: Tensor<T>,
}

impl<T: Element> EafmPass<T> {
    pub fn record(f_a: &Tensor<T>, f_e: &Tensor<T>, params: &EafmParams<T>) -> Result<Self> {
        params.validate()?;
        if f_a.shape() != f_e.shape() {
            return Err(Error::shape("eafm inputs", f_a.shape(), f_e.shape()));
        }
        let (c, _, _) = f_a.dims3()?;
        if c != params.channels() {
            return Err(Error::invalid(format!(
                "EAFM expects {} channels, input has shape {:?}",
                params.channels(),
                f_a.shape()
            )));
        }
        let mut tape = Tape::new();
        let fa = tape.leaf(f_a.clone());
        let fe = tape.leaf(f_e.clone());
        let vars = params.register(&mut tape);
        let built = build(&mut tape, fa, fe, &vars, params.groups, params.pool)?;
        Ok(Self {
            tape,
            f_a: fa,
            f_e: fe,
            params: vars,
            output: built.output,
            gates: built.gates,
            template: params.clone(),
        })
    }

    pub fn output(&self) -> &Tensor<T> {
        self.tape.value(self.output)
    }

    /// Channel gates `C×1×1` of the `A+E` and `E+A` branches.
    pub fn gates(&self) -> [&Tensor<T>; 2] {
        self.gates.map(|g| self.tape.value(g))
    }

    pub fn tape(&self) -> &Tape<T> {
        &self.tape
    }

    pub fn gradients(&self, seed: &Tensor<T>) -> Result<EafmGradients<T>> {
        let g = self.tape.backward(self.output, seed)?;
        Ok(EafmGradients {
            params: self.collect(&g)?,
            f_a: g.get(self.f_a),
            f_e: g.get(self.f_e),
        })
    }

    fn collect(&self, g: &Gradients<T>) -> Result<EafmParams<T>> {
        let branch = |b: &BranchVars| {
            [
                b.conv3.w, b.conv3.b, b.conv1.w, b.conv1.b, b.gamma, b.beta, b.gate.w, b.gate.b,
            ]
        };
        let p = &self.params;
        let tensors = branch(&p.appearance)
            .into_iter()
            .chain(branch(&p.event))
            .chain([p.adjust.w, p.adjust.b])
            .map(|v| g.get(v))
            .collect();
        self.template.with_tensors(tensors)
    }
}

/// Fuses `F_A` and `F_E`, both `C×H×W`.
pub fn eafm_forward<T: Element>(
    f_a: &Tensor<T>,
    f_e: &Tensor<T>,
    params: &EafmParams<T>,
) -> Result<Tensor<T>> {
    let pass = EafmPass::record(f_a, f_e, params)?;
    Ok(pass.output().clone())
}
