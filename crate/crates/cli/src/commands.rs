use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::Path;

use sha2::{Digest, Sha256};
use trifuse_core::eval::{map_suite_with, Annotations, EvalConfig};
use trifuse_core::events::{parse_events, rasterize, split_windows};
use trifuse_core::fusion::{
    check_adfm, check_eafm, default_groups, default_reduced_channels, fuse as fuse_features,
    load_params, sample_adfm_case, sample_eafm_case, save_params, FusionParams, GradCheckOptions,
};
use trifuse_core::geometry::{depth_to_normals, encode_normal_png, DepthMap};
use trifuse_core::tensor::{
    encode_ten, read_ten, write_ten, GradReport, PoolMode, DEFAULT_GRAD_TOLERANCE,
};

use crate::{
    Depth2NormalArgs, Error, EvalArgs, Events2FrameArgs, FuseArgs, GlobalArgs, GradcheckArgs,
    Module, PoolArg, Result,
};

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Usage(format!(
            "{}: input file not found",
            path.display()
        )))
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn depth2normal(g: &GlobalArgs, a: &Depth2NormalArgs) -> Result<()> {
    require_file(&a.input)?;
    let depth = DepthMap::from_tensor(&read_ten(&a.input)?)?;
    let normals = depth_to_normals(&depth);
    write_ten(&a.output, &normals.to_tensor())?;
    if let Some(png) = &a.png {
        write_file(png, &encode_normal_png(&normals)?)?;
    }
    let total = normals.width() * normals.height();
    println!("valid pixels: {} / {total}", normals.valid_count());
    match normals.mean_abs_nz() {
        Some(m) => println!("mean |n_z|: {m:.6}"),
        None => println!("mean |n_z|: -"),
    }
    if g.verbose {
        eprintln!("depth: {} valid of {total}", depth.valid_count());
    }
    Ok(())
}

pub fn events2frame(g: &GlobalArgs, a: &Events2FrameArgs) -> Result<()> {
    require_file(&a.input)?;
    let file =
        File::open(&a.input).map_err(|e| Error::Usage(format!("{}: {e}", a.input.display())))?;
    let stream = parse_events(BufReader::new(file), a.width, a.height)
        .map_err(|e| Error::Usage(format!("{}: {e}", a.input.display())))?;
    let windows = split_windows(&stream, a.window_us)?;
    fs::create_dir_all(&a.output)
        .map_err(|e| Error::Usage(format!("{}: {e}", a.output.display())))?;
    println!("windows: {}", windows.len());
    for w in &windows {
        let frame = rasterize(w, a.bins, a.kernel)?;
        let path = a.output.join(format!("window_{:06}.ten", w.index));
        write_ten(&path, &frame.tensor)?;
        println!(
            "window {:06} [{}, {}) events: {}",
            w.index,
            w.start,
            w.end,
            w.events.len()
        );
        if g.verbose {
            eprintln!("{}: mass {}", path.display(), frame.tensor.sum());
        }
    }
    Ok(())
}

pub fn fuse(g: &GlobalArgs, a: &FuseArgs) -> Result<()> {
    for p in [&a.rgb, &a.normal, &a.event] {
        require_file(p)?;
    }
    if let Some(dir) = &a.params {
        if !dir.is_dir() {
            return Err(Error::Usage(format!(
                "{}: parameter directory not found",
                dir.display()
            )));
        }
    }
    let rgb = read_ten(&a.rgb)?;
    let normal = read_ten(&a.normal)?;
    let event = read_ten(&a.event)?;
    if rgb.shape() != normal.shape() || rgb.shape() != event.shape() {
        return Err(Error::Usage(format!(
            "feature maps must share one shape: rgb {:?}, normal {:?}, event {:?}",
            rgb.shape(),
            normal.shape(),
            event.shape()
        )));
    }
    let (c, _, _) = rgb.dims3()?;
    if let Some(expected) = a.c {
        if expected != c {
            return Err(Error::Usage(format!(
                "--c {expected} but inputs have {c} channels"
            )));
        }
    }
    let c_prime = a.c_prime.unwrap_or_else(|| default_reduced_channels(c));
    let groups = a.groups.unwrap_or_else(|| default_groups(c));
    let mut params = match &a.params {
        Some(dir) => load_params(dir, c, c_prime, groups)?,
        None => FusionParams::init(c, c_prime, groups, a.init_seed.unwrap_or(g.seed))?,
    };
    params.eafm.pool = match a.pool {
        PoolArg::Avg => PoolMode::Average,
        PoolArg::Max => PoolMode::Max,
    };
    if let Some(dir) = &a.save_params {
        save_params(dir, &params)?;
    }

    let fused = fuse_features(&rgb, &normal, &event, &params)?;
    if g.verbose {
        let alpha = params.adfm.alpha;
        let identical = fused.appearance_geometry == rgb;
        eprintln!("adfm: alpha = {alpha}, stage output equals RGB input: {identical}");
        eprintln!("eafm: groups = {groups}, pool = {:?}", params.eafm.pool);
    }
    let bytes = encode_ten(&fused.output);
    write_file(&a.output, &bytes)?;
    println!(
        "output {:?} sha256 {}",
        fused.output.shape(),
        hex(&Sha256::digest(&bytes))
    );
    Ok(())
}

pub fn eval(g: &GlobalArgs, a: &EvalArgs) -> Result<()> {
    require_file(&a.input)?;
    let file =
        File::open(&a.input).map_err(|e| Error::Usage(format!("{}: {e}", a.input.display())))?;
    let ann = Annotations::from_reader(BufReader::new(file))
        .map_err(|e| Error::Usage(format!("{}: {e}", a.input.display())))?;
    let config = EvalConfig {
        iou_start: a.iou_start,
        iou_stop: a.iou_stop,
        iou_step: a.iou_step,
    };
    let report = map_suite_with(&ann.detections, &ann.ground_truth, &config)?;
    if g.verbose {
        eprintln!(
            "{} detections, {} ground-truth boxes, {} thresholds",
            ann.detections.len(),
            ann.ground_truth.len(),
            report.iou_thresholds.len()
        );
    }
    print!("{}", report.to_table());
    if let Some(out) = &a.output {
        write_file(out, report.to_json()?.as_bytes())?;
    }
    Ok(())
}

pub fn gradcheck(g: &GlobalArgs, a: &GradcheckArgs) -> Result<()> {
    if a.seeds == 0 {
        return Err(Error::Usage("--seeds must be at least 1".into()));
    }
    let opts = GradCheckOptions {
        eps: a.eps,
        perturb: a.perturb_grad,
    };
    let mut worst: BTreeMap<String, f64> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    for seed in g.seed..g.seed + a.seeds {
        let report: GradReport = match a.module {
            Module::Adfm => {
                let cp = a.c_prime.unwrap_or_else(|| default_reduced_channels(a.c));
                let case = sample_adfm_case(a.c, cp, a.height, a.width, seed)?;
                check_adfm(&case.a, &case.b, &case.params, opts)?
            }
            Module::Eafm => {
                let groups = a.groups.unwrap_or_else(|| default_groups(a.c));
                let case = sample_eafm_case(a.c, groups, a.height, a.width, seed)?;
                check_eafm(&case.a, &case.b, &case.params, opts)?
            }
        };
        if g.verbose {
            eprintln!("seed {seed}: worst {:.3e}", report.worst());
        }
        for p in report.params {
            let slot = worst.entry(p.name.clone()).or_insert_with(|| {
                order.push(p.name.clone());
                0.0
            });
            *slot = slot.max(p.max_rel_err);
        }
    }
    let width = order.iter().map(String::len).max().unwrap_or(0);
    for name in &order {
        println!("{name:<width$}  {:.3e}", worst[name]);
    }
    let overall = worst.values().copied().fold(0.0, f64::max);
    println!(
        "worst relative error {overall:.3e} over {} seeds (tolerance {DEFAULT_GRAD_TOLERANCE:e})",
        a.seeds
    );
    if overall < DEFAULT_GRAD_TOLERANCE {
        Ok(())
    } else {
        Err(Error::CheckFailed(format!(
            "gradient check failed: worst relative error {overall:.3e}"
        )))
    }
}
