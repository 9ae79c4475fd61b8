//! Central finite-difference gradient checking.
//!
//! Relative error per coordinate is `|a - n| / max(|a|, |n|, floor)`. The
//! floor keeps coordinates whose true gradient is ~0 from being judged on
//! pure rounding noise; with step `1e-5` in `f64` that noise is around
//! `1e-10` absolute.

/// Default step for the central difference.
pub const DEFAULT_STEP: f64 = 1e-5;
/// Denominator floor used by the relative error.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub worst_rel_error: f64,
    pub worst_index: Option<usize>,
    /// `(index, analytic, numeric, rel_error)` for every coordinate over tolerance.
    pub failures: Vec<(usize, f64, f64, f64)>,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares `analytic` against central differences of `f` at `params`.
///
/// `f` is evaluated at `params` with a single coordinate perturbed by
/// `+-step`; `params` itself is restored before returning.
pub fn finite_diff_check<F>(mut f: F, params: &mut [f64], analytic: &[f64], step: f64, tol: f64) -> GradCheckReport
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len(), "gradient length must match parameters");
    let mut report = GradCheckReport {
        checked: 0,
        worst_rel_error: 0.0,
        worst_index: None,
        failures: Vec::new(),
        tol,
    };
    for i in 0..params.len() {
        let orig = params[i];
        params[i] = orig + step;
        let up = f(params);
        params[i] = orig - step;
        let down = f(params);
        params[i] = orig;
        let numeric = (up - down) / (2.0 * step);
        let err = rel_error(analytic[i], numeric);
        report.checked += 1;
        if err > report.worst_rel_error || report.worst_index.is_none() {
            report.worst_rel_error = err;
            report.worst_index = Some(i);
        }
        if !(err < tol) {
            report.failures.push((i, analytic[i], numeric, err));
        }
    }
    report
}
