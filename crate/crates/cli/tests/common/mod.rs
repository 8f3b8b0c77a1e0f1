#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trifuse_core::fusion::{AdfmParams, Conv, EafmBranch, EafmParams};
use trifuse_core::tensor::PoolMode;
use trifuse_core::Tensor;
use trifuse_oracle::fusion as oracle;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: Vec<usize>, lo: f32, hi: f32) -> Tensor<f32> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

pub fn f64s(t: &Tensor<f32>) -> Vec<f64> {
    t.data().iter().map(|&v| v as f64).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn conv1(c: &Conv) -> oracle::Conv1 {
    oracle::Conv1 {
        w: f64s(&c.weight),
        b: f64s(&c.bias),
    }
}

fn conv3(c: &Conv) -> oracle::Conv3 {
    oracle::Conv3 {
        w: f64s(&c.weight),
        b: f64s(&c.bias),
    }
}

pub fn oracle_adfm(p: &AdfmParams) -> oracle::Adfm {
    oracle::Adfm {
        reduce_r: conv1(&p.reduce_r),
        reduce_n: conv1(&p.reduce_n),
        project: conv1(&p.project),
        alpha: p.alpha as f64,
    }
}

fn branch(b: &EafmBranch) -> oracle::Branch {
    oracle::Branch {
        conv3: conv3(&b.conv3),
        conv1: conv1(&b.conv1),
        gamma: f64s(&b.gn_gamma),
        beta: f64s(&b.gn_beta),
        gate: conv1(&b.gate),
    }
}

pub fn oracle_eafm(p: &EafmParams) -> oracle::Eafm {
    oracle::Eafm {
        appearance: branch(&p.appearance),
        event: branch(&p.event),
        adjust: conv1(&p.adjust),
        groups: p.groups,
        max_pool: p.pool == PoolMode::Max,
    }
}

pub fn fixture(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn trifuse<I, S>(args: I) -> Run
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_trifuse"))
        .args(args)
        .output()
        .expect("binary runs");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}
