use super::ops::{self, Broadcast, GroupStats};
use super::{Element, ElementwiseOp, PoolMode, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    SoftmaxRows(Var),
    Conv1x1 {
        x: Var,
        w: Var,
        b: Var,
    },
    Conv3x3 {
        x: Var,
        w: Var,
        b: Var,
    },
    GroupNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        groups: usize,
        stats: GroupStats,
    },
    Sigmoid(Var),
    AvgPool(Var),
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    Reshape(Var),
    Elementwise {
        op: ElementwiseOp,
        a: Var,
        b: Var,
        kind: Broadcast,
    },
    ScaleAdd {
        base: Var,
        scale: Var,
        x: Var,
    },
    Concat(Var, Var),
}

#[derive(Clone)]
struct Node<T> {
    value: Tensor<T>,
    op: Op,
}

/// Linear record of one forward evaluation. Values are appended in
/// execution order and `backward` walks them in exact reverse.
#[derive(Clone, Default)]
pub struct Tape<T = f32> {
    nodes: Vec<Node<T>>,
}

impl<T> std::fmt::Debug for Tape<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tape")
            .field("len", &self.nodes.len())
            .finish()
    }
}

impl<T: Element> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, var: Var) -> &Tensor<T> {
        &self.nodes[var.0].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn check(&self, vars: &[Var]) -> Result<()> {
        match vars.iter().find(|v| v.0 >= self.nodes.len()) {
            Some(v) => Err(Error::invalid(format!(
                "variable {} is not on this tape",
                v.0
            ))),
            None => Ok(()),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(&[a, b])?;
        let out = ops::matmul(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.check(&[a])?;
        let out = ops::transpose(self.value(a))?;
        Ok(self.push(out, Op::Transpose(a)))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        self.check(&[x])?;
        let out = ops::softmax_rows(self.value(x))?;
        Ok(self.push(out, Op::SoftmaxRows(x)))
    }

    pub fn conv1x1(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        self.check(&[x, w, b])?;
        let out = ops::conv1x1(self.value(x), self.value(w), self.value(b))?;
        Ok(self.push(out, Op::Conv1x1 { x, w, b }))
    }

    pub fn conv3x3(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        self.check(&[x, w, b])?;
        let out = ops::conv3x3(self.value(x), self.value(w), self.value(b))?;
        Ok(self.push(out, Op::Conv3x3 { x, w, b }))
    }

    pub fn group_norm(&mut self, x: Var, groups: usize, gamma: Var, beta: Var) -> Result<Var> {
        self.check(&[x, gamma, beta])?;
        let (out, stats) = ops::group_norm_with_stats(
            self.value(x),
            groups,
            self.value(gamma),
            self.value(beta),
            ops::GROUP_NORM_EPS,
        )?;
        Ok(self.push(
            out,
            Op::GroupNorm {
                x,
                gamma,
                beta,
                groups,
                stats,
            },
        ))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.check(&[x])?;
        let out = ops::sigmoid(self.value(x));
        Ok(self.push(out, Op::Sigmoid(x)))
    }

    pub fn global_pool(&mut self, x: Var, mode: PoolMode) -> Result<Var> {
        self.check(&[x])?;
        match mode {
            PoolMode::Average => {
                let out = ops::global_avg_pool(self.value(x))?;
                Ok(self.push(out, Op::AvgPool(x)))
            }
            PoolMode::Max => {
                let (out, argmax) = ops::global_max_pool_with_argmax(self.value(x))?;
                Ok(self.push(out, Op::MaxPool { x, argmax }))
            }
        }
    }

    pub fn flatten_spatial(&mut self, x: Var) -> Result<Var> {
        self.check(&[x])?;
        let out = ops::flatten_spatial(self.value(x))?;
        Ok(self.push(out, Op::Reshape(x)))
    }

    pub fn unflatten_spatial(&mut self, y: Var, h: usize, w: usize) -> Result<Var> {
        self.check(&[y])?;
        let out = ops::unflatten_spatial(self.value(y), h, w)?;
        Ok(self.push(out, Op::Reshape(y)))
    }

    pub fn elementwise(&mut self, op: ElementwiseOp, a: Var, b: Var) -> Result<Var> {
        self.check(&[a, b])?;
        let name = match op {
            ElementwiseOp::Add => "add",
            ElementwiseOp::Mul => "mul",
        };
        let kind = ops::broadcast_kind(name, self.value(a), self.value(b))?;
        let out = ops::elementwise(op, self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Elementwise { op, a, b, kind }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(ElementwiseOp::Add, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(ElementwiseOp::Mul, a, b)
    }

    pub fn scale_add(&mut self, base: Var, scale: Var, x: Var) -> Result<Var> {
        self.check(&[base, scale, x])?;
        let out = ops::scale_add(self.value(base), self.value(scale), self.value(x))?;
        Ok(self.push(out, Op::ScaleAdd { base, scale, x }))
    }

    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(&[a, b])?;
        let out = ops::concat_channels(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Concat(a, b)))
    }

    /// Reverse-mode accumulation from `output`, seeded with `seed`
    /// (the gradient of the scalar objective w.r.t. `output`).
    pub fn backward(&self, output: Var, seed: &Tensor<T>) -> Result<Gradients<T>> {
        self.check(&[output])?;
        if seed.shape() != self.value(output).shape() {
            return Err(Error::shape(
                "backward seed",
                self.value(output).shape(),
                seed.shape(),
            ));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(seed.clone());

        for idx in (0..=output.0).rev() {
            let Some(dy) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            for (var, g) in self.node_backward(node, &dy)? {
                accumulate(&mut grads[var.0], g);
            }
            grads[idx] = Some(dy);
        }

        Ok(Gradients {
            grads,
            shapes: self
                .nodes
                .iter()
                .map(|n| n.value.shape().to_vec())
                .collect(),
        })
    }

    fn node_backward(&self, node: &Node<T>, dy: &Tensor<T>) -> Result<Vec<(Var, Tensor<T>)>> {
        let val = |v: Var| self.value(v);
        Ok(match &node.op {
            Op::Leaf => Vec::new(),
            Op::MatMul(a, b) => {
                let da = ops::matmul(dy, &ops::transpose(val(*b))?)?;
                let db = ops::matmul(&ops::transpose(val(*a))?, dy)?;
                vec![(*a, da), (*b, db)]
            }
            Op::Transpose(a) => vec![(*a, ops::transpose(dy)?)],
            Op::SoftmaxRows(x) => vec![(*x, softmax_backward(&node.value, dy)?)],
            Op::Conv1x1 { x, w, b } => {
                let (dx, dw, db) = conv1x1_backward(val(*x), val(*w), dy)?;
                vec![(*x, dx), (*w, dw), (*b, db)]
            }
            Op::Conv3x3 { x, w, b } => {
                let (dx, dw, db) = conv3x3_backward(val(*x), val(*w), dy)?;
                vec![(*x, dx), (*w, dw), (*b, db)]
            }
            Op::GroupNorm {
                x,
                gamma,
                beta,
                groups,
                stats,
            } => {
                let (dx, dgamma, dbeta) =
                    group_norm_backward(val(*x), val(*gamma), *groups, stats, dy)?;
                vec![(*x, dx), (*gamma, dgamma), (*beta, dbeta)]
            }
            Op::Sigmoid(x) => {
                let y = &node.value;
                let dx = zip_map(y, dy, |yv, g| g * yv * (1.0 - yv));
                vec![(*x, dx)]
            }
            Op::AvgPool(x) => {
                let (c, h, w) = val(*x).dims3()?;
                let hw = h * w;
                let data = (0..c * hw)
                    .map(|i| T::from_f64(dy.data()[i / hw].to_f64() / hw as f64))
                    .collect();
                vec![(*x, Tensor::new(vec![c, h, w], data)?)]
            }
            Op::MaxPool { x, argmax } => {
                let mut dx = val(*x).zeros_like();
                for (ch, &i) in argmax.iter().enumerate() {
                    dx.data_mut()[i] = dy.data()[ch];
                }
                vec![(*x, dx)]
            }
            Op::Reshape(x) => vec![(*x, dy.reshape(val(*x).shape().to_vec())?)],
            Op::Elementwise { op, a, b, kind } => {
                let (da, db_full) = match op {
                    ElementwiseOp::Add => (dy.clone(), dy.clone()),
                    ElementwiseOp::Mul => (ops::mul(dy, val(*b))?, ops::mul(dy, val(*a))?),
                };
                let db = match kind {
                    Broadcast::Same => db_full,
                    Broadcast::Channel(_) => sum_spatial(&db_full, val(*b).shape().to_vec())?,
                };
                vec![(*a, da), (*b, db)]
            }
            Op::ScaleAdd { base, scale, x } => {
                let s = val(*scale).data()[0].to_f64();
                let dscale = dy
                    .data()
                    .iter()
                    .zip(val(*x).data())
                    .map(|(g, v)| g.to_f64() * v.to_f64())
                    .sum::<f64>();
                let dx = dy.map(|g| T::from_f64(g.to_f64() * s));
                vec![
                    (*base, dy.clone()),
                    (*scale, Tensor::scalar(T::from_f64(dscale))),
                    (*x, dx),
                ]
            }
            Op::Concat(a, b) => {
                let split = val(*a).len();
                let da = Tensor::new(val(*a).shape().to_vec(), dy.data()[..split].to_vec())?;
                let db = Tensor::new(val(*b).shape().to_vec(), dy.data()[split..].to_vec())?;
                vec![(*a, da), (*b, db)]
            }
        })
    }
}

/// Per-variable gradients from one backward pass.
#[derive(Clone)]
pub struct Gradients<T = f32> {
    grads: Vec<Option<Tensor<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: std::fmt::Debug> std::fmt::Debug for Gradients<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.grads.iter()).finish()
    }
}

impl<T: Element> Gradients<T> {
    /// Gradient for `var`; zeros when `var` did not influence the output.
    pub fn get(&self, var: Var) -> Tensor<T> {
        match &self.grads[var.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(self.shapes[var.0].clone()).expect("recorded shapes are valid"),
        }
    }
}

fn accumulate<T: Element>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) {
    match slot {
        None => *slot = Some(g),
        Some(acc) => {
            for (a, v) in acc.data_mut().iter_mut().zip(g.data()) {
                *a = T::from_f64(a.to_f64() + v.to_f64());
            }
        }
    }
}

fn zip_map<T: Element>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(f64, f64) -> f64) -> Tensor<T> {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| T::from_f64(f(x.to_f64(), y.to_f64())))
        .collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape as input")
}

/// Reduces a `C×H×W` gradient to `C×1×1` by summing each channel.
fn sum_spatial<T: Element>(g: &Tensor<T>, shape: Vec<usize>) -> Result<Tensor<T>> {
    let (_, h, w) = g.dims3()?;
    let data = g
        .data()
        .chunks(h * w)
        .map(|plane| T::from_f64(plane.iter().map(|v| v.to_f64()).sum()))
        .collect();
    Tensor::new(shape, data)
}

fn softmax_backward<T: Element>(y: &Tensor<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, n) = y.dims2()?;
    let mut out = Vec::with_capacity(y.len());
    for (yr, gr) in y.data().chunks(n).zip(dy.data().chunks(n)) {
        let dot: f64 = yr
            .iter()
            .zip(gr)
            .map(|(a, b)| a.to_f64() * b.to_f64())
            .sum();
        out.extend(
            yr.iter()
                .zip(gr)
                .map(|(a, b)| T::from_f64(a.to_f64() * (b.to_f64() - dot))),
        );
    }
    Tensor::new(y.shape().to_vec(), out)
}

fn conv1x1_backward<T: Element>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (c_in, _, _) = x.dims3()?;
    let (c_out, _) = w.dims2()?;
    let dx = ops::conv1x1(dy, &ops::transpose(w)?, &Tensor::zeros(vec![c_in])?)?;
    let dy_flat = ops::flatten_spatial(dy)?;
    let dw = ops::matmul(&dy_flat, &ops::transpose(&ops::flatten_spatial(x)?)?)?;
    let db = sum_spatial(dy, vec![c_out])?;
    Ok((dx, dw, db))
}

fn conv3x3_backward<T: Element>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (c_in, h, wd) = x.dims3()?;
    let c_out = w.shape()[0];
    let hw = h * wd;
    let mut dx = vec![0.0f64; c_in * hw];
    let mut dw = vec![0.0f64; c_out * c_in * 9];
    for o in 0..c_out {
        let g = &dy.data()[o * hw..(o + 1) * hw];
        for i in 0..c_in {
            let src = &x.data()[i * hw..(i + 1) * hw];
            let dsrc = &mut dx[i * hw..(i + 1) * hw];
            for tap in 0..9 {
                let k = (o * c_in + i) * 9 + tap;
                let kv = w.data()[k].to_f64();
                let mut acc = 0.0;
                ops::for_each_tap(h, wd, tap / 3, tap % 3, |dst, s| {
                    let gv = g[dst].to_f64();
                    acc += gv * src[s].to_f64();
                    dsrc[s] += kv * gv;
                });
                dw[k] = acc;
            }
        }
    }
    let to_t = |v: Vec<f64>| v.into_iter().map(T::from_f64).collect::<Vec<_>>();
    Ok((
        Tensor::new(x.shape().to_vec(), to_t(dx))?,
        Tensor::new(w.shape().to_vec(), to_t(dw))?,
        sum_spatial(dy, vec![c_out])?,
    ))
}

fn group_norm_backward<T: Element>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    groups: usize,
    stats: &GroupStats,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (c, h, w) = x.dims3()?;
    let hw = h * w;
    let per_group = c / groups;
    let span = per_group * hw;
    let mut dx = Vec::with_capacity(c * hw);
    let mut dgamma = vec![0.0f64; c];
    let mut dbeta = vec![0.0f64; c];
    for g in 0..groups {
        let (mean, inv_std) = (stats.mean[g], stats.inv_std[g]);
        let range = g * span..(g + 1) * span;
        let xs = &x.data()[range.clone()];
        let gs = &dy.data()[range];
        let mut xhat = Vec::with_capacity(span);
        let mut dxhat = Vec::with_capacity(span);
        for (k, (xv, gv)) in xs.iter().zip(gs).enumerate() {
            let ch = g * per_group + k / hw;
            let xh = (xv.to_f64() - mean) * inv_std;
            let gv = gv.to_f64();
            dgamma[ch] += gv * xh;
            dbeta[ch] += gv;
            xhat.push(xh);
            dxhat.push(gv * gamma.data()[ch].to_f64());
        }
        let mean_d = dxhat.iter().sum::<f64>() / span as f64;
        let mean_dx = dxhat.iter().zip(&xhat).map(|(d, x)| d * x).sum::<f64>() / span as f64;
        dx.extend(
            dxhat
                .iter()
                .zip(&xhat)
                .map(|(d, xh)| T::from_f64(inv_std * (d - mean_d - xh * mean_dx))),
        );
    }
    let to_t = |v: Vec<f64>| v.into_iter().map(T::from_f64).collect::<Vec<_>>();
    Ok((
        Tensor::new(x.shape().to_vec(), dx)?,
        Tensor::new(vec![c], to_t(dgamma))?,
        Tensor::new(vec![c], to_t(dbeta))?,
    ))
}
