use super::{Element, Tensor};
use crate::error::{Error, Result};

/// Largest accepted relative error between analytic and numeric gradients.
pub const DEFAULT_GRAD_TOLERANCE: f64 = 1e-3;

/// Smallest denominator in [`relative_error`].
pub const ABS_FLOOR: f64 = 1e-8;

/// Denominator floor as a fraction of the largest gradient magnitude in one
/// check. Coordinates whose true gradient vanishes carry f32 rounding
/// residue of a few ulps of that scale, which no relative measure can
/// resolve; at tolerance 1e-3 this admits residue up to 1e-6 of the scale.
pub const SCALE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamError {
    pub name: String,
    pub max_rel_err: f64,
    /// Flat index of the worst coordinate.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub eps: f64,
    pub tolerance: f64,
    /// Denominator floor used for every coordinate.
    pub floor: f64,
    pub params: Vec<ParamError>,
    pub passed: bool,
}

impl GradReport {
    pub fn worst(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.max_rel_err)
            .fold(0.0, f64::max)
    }
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares `analytic` gradients against central differences of the scalar
/// objective `f` around `params`, one coordinate at a time.
///
/// The denominator floor is `max(ABS_FLOOR, SCALE_FLOOR · g_max)` where
/// `g_max` is the largest analytic or numeric magnitude across all
/// parameters.
///
/// `f` sees the parameters in `f64` so the difference quotient is not
/// dominated by storage rounding; `analytic` may be of any precision.
pub fn finite_diff_check<T, F>(
    params: &[(String, Tensor<f64>)],
    analytic: &[Tensor<T>],
    eps: f64,
    mut f: F,
) -> Result<GradReport>
where
    T: Element,
    F: FnMut(&[Tensor<f64>]) -> Result<f64>,
{
    if !(1e-6..=1e-2).contains(&eps) {
        return Err(Error::invalid(format!(
            "eps must lie in [1e-6, 1e-2], got {eps}"
        )));
    }
    if params.len() != analytic.len() {
        return Err(Error::invalid(format!(
            "{} parameters but {} analytic gradients",
            params.len(),
            analytic.len()
        )));
    }
    for ((name, p), a) in params.iter().zip(analytic) {
        if p.shape() != a.shape() {
            return Err(Error::shape("finite_diff_check", p.shape(), a.shape()));
        }
        if !a.all_finite() {
            return Err(Error::NonFinite(format!("analytic gradient of {name}")));
        }
    }

    let mut point: Vec<Tensor<f64>> = params.iter().map(|(_, t)| t.clone()).collect();
    let mut eval = |point: &[Tensor<f64>]| -> Result<f64> {
        let v = f(point)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite("finite-difference evaluation".into()))
        }
    };

    let mut numeric: Vec<Vec<f64>> = Vec::with_capacity(params.len());
    for pi in 0..params.len() {
        let mut column = Vec::with_capacity(point[pi].len());
        for k in 0..point[pi].len() {
            let orig = point[pi].data()[k];
            point[pi].data_mut()[k] = orig + eps;
            let up = eval(&point)?;
            point[pi].data_mut()[k] = orig - eps;
            let down = eval(&point)?;
            point[pi].data_mut()[k] = orig;
            column.push((up - down) / (2.0 * eps));
        }
        numeric.push(column);
    }
    let scale = analytic
        .iter()
        .flat_map(|t| t.data().iter().map(|v| v.to_f64().abs()))
        .chain(numeric.iter().flatten().map(|v| v.abs()))
        .fold(0.0, f64::max);
    let floor = ABS_FLOOR.max(SCALE_FLOOR * scale);

    let mut report = GradReport {
        eps,
        tolerance: DEFAULT_GRAD_TOLERANCE,
        floor,
        params: Vec::with_capacity(params.len()),
        passed: true,
    };
    for (pi, (name, _)) in params.iter().enumerate() {
        let mut worst = ParamError {
            name: name.clone(),
            max_rel_err: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for (k, &n) in numeric[pi].iter().enumerate() {
            let a = analytic[pi].data()[k].to_f64();
            let err = relative_error(a, n, floor);
            if err > worst.max_rel_err {
                worst = ParamError {
                    max_rel_err: err,
                    worst_index: k,
                    analytic: a,
                    numeric: n,
                    ..worst
                };
            }
        }
        report.passed &= worst.max_rel_err < report.tolerance;
        report.params.push(worst);
    }
    Ok(report)
}
