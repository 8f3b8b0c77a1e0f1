//! ADFM and EAFM as direct sums.

/// `out×in` weights and `out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1 {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

/// `out×in×3×3` weights and `out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv3 {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adfm {
    pub reduce_r: Conv1,
    pub reduce_n: Conv1,
    pub project: Conv1,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub conv3: Conv3,
    pub conv1: Conv1,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub gate: Conv1,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Eafm {
    pub appearance: Branch,
    pub event: Branch,
    pub adjust: Conv1,
    pub groups: usize,
    pub max_pool: bool,
}

pub const GN_EPS: f64 = 1e-5;

fn conv1(x: &[f64], cin: usize, n: usize, p: &Conv1) -> Vec<f64> {
    let cout = p.b.len();
    let mut y = vec![0.0; cout * n];
    for o in 0..cout {
        for i in 0..n {
            let mut s = p.b[o];
            for c in 0..cin {
                s += p.w[o * cin + c] * x[c * n + i];
            }
            y[o * n + i] = s;
        }
    }
    y
}

fn conv3(x: &[f64], cin: usize, h: usize, w: usize, p: &Conv3) -> Vec<f64> {
    let cout = p.b.len();
    let mut y = vec![0.0; cout * h * w];
    for o in 0..cout {
        for r in 0..h {
            for col in 0..w {
                let mut s = p.b[o];
                for c in 0..cin {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let yy = r as isize + ky as isize - 1;
                            let xx = col as isize + kx as isize - 1;
                            if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
                                continue;
                            }
                            let v = x[(c * h + yy as usize) * w + xx as usize];
                            s += p.w[((o * cin + c) * 3 + ky) * 3 + kx] * v;
                        }
                    }
                }
                y[(o * h + r) * w + col] = s;
            }
        }
    }
    y
}

/// `F_r + α·Conv(T⁻¹(F̃n · softmax_rows(F̃rᵀ F̃n)ᵀ))`.
pub fn adfm(f_r: &[f64], f_n: &[f64], c: usize, h: usize, w: usize, p: &Adfm) -> Vec<f64> {
    let n = h * w;
    let cp = p.reduce_r.b.len();
    let m = conv1(f_n, c, n, &p.reduce_n);
    let a = adfm_attention(f_r, f_n, c, n, p);

    // att[k][i] = Σ_j m[k][j] a[i][j]
    let mut att = vec![0.0; cp * n];
    for k in 0..cp {
        for i in 0..n {
            att[k * n + i] = (0..n).map(|j| m[k * n + j] * a[i * n + j]).sum();
        }
    }
    let proj = conv1(&att, cp, n, &p.project);
    f_r.iter()
        .zip(&proj)
        .map(|(x, q)| x + p.alpha * q)
        .collect()
}

/// `softmax_rows(F̃rᵀ F̃n)`, row-major `N×N`:
/// `a[i][j] = exp(l[i][j]) / Σ_k exp(l[i][k])` with `l[i][j] = Σ_k r[k][i]·m[k][j]`.
pub fn adfm_attention(f_r: &[f64], f_n: &[f64], c: usize, n: usize, p: &Adfm) -> Vec<f64> {
    let cp = p.reduce_r.b.len();
    let r = conv1(f_r, c, n, &p.reduce_r);
    let m = conv1(f_n, c, n, &p.reduce_n);
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        let logits: Vec<f64> = (0..n)
            .map(|j| (0..cp).map(|k| r[k * n + i] * m[k * n + j]).sum())
            .collect();
        let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - top).exp()).sum();
        for j in 0..n {
            a[i * n + j] = (logits[j] - top).exp() / z;
        }
    }
    a
}

fn group_norm(
    x: &[f64],
    c: usize,
    n: usize,
    groups: usize,
    gamma: &[f64],
    beta: &[f64],
) -> Vec<f64> {
    let per = c / groups;
    let mut y = vec![0.0; x.len()];
    for g in 0..groups {
        let slice = &x[g * per * n..(g + 1) * per * n];
        let count = slice.len() as f64;
        let mean = slice.iter().sum::<f64>() / count;
        let var = slice.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count;
        let denom = (var + GN_EPS).sqrt();
        for ch in g * per..(g + 1) * per {
            for i in 0..n {
                y[ch * n + i] = gamma[ch] * (x[ch * n + i] - mean) / denom + beta[ch];
            }
        }
    }
    y
}

fn branch(
    x0: &[f64],
    c: usize,
    h: usize,
    w: usize,
    p: &Branch,
    groups: usize,
    max_pool: bool,
) -> Vec<f64> {
    let n = h * w;
    let x1 = conv3(x0, c, h, w, &p.conv3);
    let x2 = conv1(&x1, c, n, &p.conv1);
    let f1 = group_norm(&x2, c, n, groups, &p.gamma, &p.beta);
    let pooled: Vec<f64> = (0..c)
        .map(|ch| {
            let s = &f1[ch * n..(ch + 1) * n];
            if max_pool {
                s.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            } else {
                s.iter().sum::<f64>() / n as f64
            }
        })
        .collect();
    let logits = conv1(&pooled, c, 1, &p.gate);
    let gate: Vec<f64> = logits.iter().map(|z| 1.0 / (1.0 + (-z).exp())).collect();
    (0..c * n).map(|i| f1[i] * gate[i / n]).collect()
}

/// `Adjust(Concat(branch(A⊙E + A), branch(A⊙E + E)))`.
pub fn eafm(f_a: &[f64], f_e: &[f64], c: usize, h: usize, w: usize, p: &Eafm) -> Vec<f64> {
    let ae: Vec<f64> = f_a.iter().zip(f_e).map(|(a, e)| a * e + a).collect();
    let ea: Vec<f64> = f_a.iter().zip(f_e).map(|(a, e)| a * e + e).collect();
    let mut cat = branch(&ae, c, h, w, &p.appearance, p.groups, p.max_pool);
    cat.extend(branch(&ea, c, h, w, &p.event, p.groups, p.max_pool));
    conv1(&cat, 2 * c, h * w, &p.adjust)
}
