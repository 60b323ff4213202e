//! Central finite-difference checks of tape gradients.

use crate::error::Result;
use crate::numerics::params::{Gradients, ModelParams};

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Worst relative error per section name.
    pub per_section: Vec<(String, f64)>,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.per_section.iter().map(|(_, e)| *e).fold(0.0, f64::max)
    }
}

/// Relative error with an absolute floor so that entries whose true
/// derivative is ~0 are judged on absolute scale.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(1e-6);
    (analytic - numeric).abs() / scale
}

/// Compares `analytic` against central differences of `loss` with step `h`.
///
/// `max_per_section` bounds how many entries of each section are probed
/// (evenly strided); `None` checks all of them.
pub fn check<F>(
    params: &ModelParams,
    analytic: &Gradients,
    h: f64,
    max_per_section: Option<usize>,
    mut loss: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&ModelParams) -> Result<f64>,
{
    let mut work = params.clone();
    let mut per_section = Vec::new();
    let mut checked = 0;
    for si in 0..params.sections().len() {
        let n = params.sections()[si].values.len();
        let stride = match max_per_section {
            Some(m) if m > 0 && n > m => n.div_ceil(m),
            _ => 1,
        };
        let mut worst: f64 = 0.0;
        for i in (0..n).step_by(stride) {
            let orig = work.sections()[si].values[i];
            work.sections_mut()[si].values[i] = orig + h;
            let up = loss(&work)?;
            work.sections_mut()[si].values[i] = orig - h;
            let down = loss(&work)?;
            work.sections_mut()[si].values[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max(relative_error(analytic.sections[si][i], numeric));
            checked += 1;
        }
        per_section.push((params.sections()[si].name.clone(), worst));
    }
    Ok(GradCheckReport {
        per_section,
        checked,
    })
}
