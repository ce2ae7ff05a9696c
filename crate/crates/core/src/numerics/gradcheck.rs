//! Central finite differences in `f64`, used to audit analytic gradients.

/// Step used for layer-level finite-difference probes.
pub const FD_STEP: f64 = 1e-3;

/// Step for whole-model probes. Per-scalar gradients there can be as small
/// as 1e-6, where the O(h²) truncation error of a 1e-3 step exceeds the
/// tolerance; in `f64` a 1e-5 step keeps round-off near 1e-11.
pub const MODEL_FD_STEP: f64 = 1e-5;

/// Gradients smaller than this in both the analytic and numeric estimate are
/// compared in absolute terms; below it the `f64` truncation error of a
/// 1e-3 step dominates any relative comparison.
pub const ABS_FLOOR: f64 = 1e-6;

/// `|a − n| / max(|a|, |n|, ABS_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(ABS_FLOOR);
    (analytic - numeric).abs() / denom
}

/// `(f(x+h) − f(x−h)) / 2h` with `h = FD_STEP`, restoring `*x` afterwards.
pub fn central_difference(x: &mut f64, f: impl FnMut(f64) -> f64) -> f64 {
    central_difference_step(x, FD_STEP, f)
}

pub fn central_difference_step(x: &mut f64, step: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let orig = *x;
    *x = orig + step;
    let plus = f(*x);
    *x = orig - step;
    let minus = f(*x);
    *x = orig;
    (plus - minus) / (2.0 * step)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GradCheckSummary {
    pub checked: usize,
    pub max_relative_error: f64,
}

impl GradCheckSummary {
    pub fn record(&mut self, analytic: f64, numeric: f64) {
        self.checked += 1;
        let e = relative_error(analytic, numeric);
        if e > self.max_relative_error || e.is_nan() {
            self.max_relative_error = e;
        }
    }

    pub fn merge(&mut self, other: &GradCheckSummary) {
        self.checked += other.checked;
        if other.max_relative_error > self.max_relative_error || other.max_relative_error.is_nan() {
            self.max_relative_error = other.max_relative_error;
        }
    }
}
