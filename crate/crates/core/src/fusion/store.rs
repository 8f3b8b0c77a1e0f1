//! Parameter directories: one `<name>.ten` per tensor plus a manifest of
//! `<name> <shape>` lines, shape written as extents joined by `x`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{AdfmParams, EafmParams, FusionParams, ParamSet};
use crate::error::{Error, Result};
use crate::tensor::{read_ten, write_ten, Tensor};

pub const MANIFEST_FILE: &str = "manifest.txt";

fn format_shape(shape: &[usize]) -> String {
    shape
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join("x")
}

pub fn save_params(dir: impl AsRef<Path>, params: &FusionParams<f32>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    let mut manifest = String::new();
    for (name, t) in params.named_tensors() {
        write_ten(dir.join(format!("{name}.ten")), &t)?;
        manifest.push_str(&format!("{name} {}\n", format_shape(t.shape())));
    }
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, manifest).map_err(|e| Error::file(path, e))
}

/// Loads a directory written by [`save_params`], validating every shape
/// against `(C, C′, groups)`.
pub fn load_params(
    dir: impl AsRef<Path>,
    c: usize,
    c_prime: usize,
    groups: usize,
) -> Result<FusionParams<f32>> {
    let dir = dir.as_ref();
    if c == 0 || c_prime == 0 || c_prime > c {
        return Err(Error::invalid(format!(
            "reduced width must satisfy 1 <= C' <= C, got C = {c}, C' = {c_prime}"
        )));
    }
    let template = FusionParams {
        adfm: AdfmParams::zeros(c, c_prime)?,
        eafm: EafmParams::zeros(c, groups)?,
    };

    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::file(&manifest_path, e))?;
    let mut listed = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (name, shape) = line.split_once(' ').ok_or_else(|| Error::Parse {
            line: i as u64 + 1,
            message: format!("manifest entry {line:?} is not `<name> <shape>`"),
        })?;
        listed.insert(name.to_string(), shape.trim().to_string());
    }

    let mut tensors: Vec<Tensor<f32>> = Vec::new();
    for (name, like) in template.named_tensors() {
        let expected = format_shape(like.shape());
        match listed.remove(&name) {
            None => return Err(Error::invalid(format!("manifest is missing {name}"))),
            Some(shape) if shape != expected => {
                return Err(Error::invalid(format!(
                    "{name}: manifest shape {shape} does not match {expected} for C = {c}, C' = {c_prime}"
                )))
            }
            Some(_) => {}
        }
        let t = read_ten(dir.join(format!("{name}.ten")))?;
        if t.shape() != like.shape() {
            return Err(Error::invalid(format!(
                "{name}: file shape {} does not match {expected}",
                format_shape(t.shape())
            )));
        }
        tensors.push(t);
    }
    if let Some(extra) = listed.keys().next() {
        return Err(Error::invalid(format!(
            "manifest lists unknown tensor {extra}"
        )));
    }
    template.with_tensors(tensors)
}
