//! Central-difference gradient verification.
//!
//! The loss callback reports whether an evaluation landed near a
//! non-differentiable point (a rectifier about to flip, a vanishing row
//! norm); coordinates whose probes touch such a point are excluded rather
//! than compared against a subgradient.

use crate::matrix::Matrix;

/// One probed loss evaluation.
#[derive(Debug, Clone, Copy)]
pub struct ProbedLoss {
    pub loss: f64,
    /// True when the evaluation sits close enough to a kink that a central
    /// difference across it is meaningless.
    pub near_kink: bool,
}

impl ProbedLoss {
    pub fn smooth(loss: f64) -> Self {
        ProbedLoss {
            loss,
            near_kink: false,
        }
    }
}

/// Outcome of a finite-difference sweep.
#[derive(Debug, Clone, Copy, Default)]
pub struct FdReport {
    pub max_rel_err: f64,
    /// Coordinates compared.
    pub checked: usize,
    /// Coordinates excluded because a probe landed near a kink.
    pub skipped: usize,
}

/// Compares the analytic gradient against `(f(x+h) - f(x-h)) / 2h` at the
/// given `(param_index, flat_index)` coordinates. The relative error per
/// coordinate is `|fd - analytic| / max(|fd|, |analytic|)`; coordinates where
/// both magnitudes fall below `1e-8` count as agreeing.
pub fn finite_diff_check<F>(
    mut eval: F,
    params: &mut [Matrix],
    analytic: &[Matrix],
    coords: &[(usize, usize)],
    step: f64,
) -> FdReport
where
    F: FnMut(&[Matrix]) -> ProbedLoss,
{
    let mut report = FdReport::default();
    for &(pi, flat) in coords {
        let original = params[pi].data()[flat];
        params[pi].data_mut()[flat] = original + step;
        let plus = eval(params);
        params[pi].data_mut()[flat] = original - step;
        let minus = eval(params);
        params[pi].data_mut()[flat] = original;
        if plus.near_kink || minus.near_kink {
            report.skipped += 1;
            continue;
        }
        let fd = (plus.loss - minus.loss) / (2.0 * step);
        let an = analytic[pi].data()[flat];
        report.checked += 1;
        let denom = fd.abs().max(an.abs());
        if denom < 1e-8 {
            continue;
        }
        let rel = (fd - an).abs() / denom;
        if rel > report.max_rel_err {
            report.max_rel_err = rel;
        }
    }
    report
}

/// Every coordinate of every parameter.
pub fn all_coordinates(params: &[Matrix]) -> Vec<(usize, usize)> {
    let mut coords = Vec::new();
    for (pi, p) in params.iter().enumerate() {
        for flat in 0..p.rows() * p.cols() {
            coords.push((pi, flat));
        }
    }
    coords
}
