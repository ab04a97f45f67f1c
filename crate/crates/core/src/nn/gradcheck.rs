//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;

use super::Tensor;
use crate::rng;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub h: f64,
    pub tolerance: f64,
    /// Denominator floor so coordinates with a vanishing gradient are
    /// judged on absolute error.
    pub abs_floor: f64,
    /// Check at most this many coordinates per tensor (sampled).
    pub max_coords: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self { h: 1e-5, tolerance: 1e-4, abs_floor: 1e-6, max_coords: None, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckEntry {
    pub name: String,
    pub checked: usize,
    /// Coordinates left out because `+h` and `-h` fell in different
    /// piecewise-linear regions (a ReLU or max-pool switch).
    pub skipped: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.entries.iter().map(|e| e.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.max_rel_error < self.tolerance)
    }

    pub fn merge(&mut self, other: GradCheckReport) {
        self.entries.extend(other.entries);
    }
}

/// Compare `analytic[i]` with central differences of `f` around `params[i]`.
///
/// `f` receives the full parameter list with one coordinate perturbed.
pub fn finite_difference_check<F>(
    mut f: F,
    names: &[&str],
    params: &[Tensor],
    analytic: &[Tensor],
    opts: GradCheckOptions,
) -> GradCheckReport
where
    F: FnMut(&[Tensor]) -> f64,
{
    finite_difference_check_piecewise(|p| (f(p), 0), names, params, analytic, opts)
}

/// As [`finite_difference_check`], for piecewise-smooth `f` returning
/// `(value, region)`. A coordinate whose two probes report different
/// regions straddles a kink; it is skipped rather than compared.
pub fn finite_difference_check_piecewise<F>(
    mut f: F,
    names: &[&str],
    params: &[Tensor],
    analytic: &[Tensor],
    opts: GradCheckOptions,
) -> GradCheckReport
where
    F: FnMut(&[Tensor]) -> (f64, u64),
{
    assert_eq!(params.len(), analytic.len());
    assert_eq!(params.len(), names.len());
    let mut work: Vec<Tensor> = params.to_vec();
    let mut entries = Vec::with_capacity(params.len());
    for (pi, name) in names.iter().enumerate() {
        assert_eq!(params[pi].shape(), analytic[pi].shape(), "gradient shape for {name}");
        let n = params[pi].len();
        let coords: Vec<usize> = match opts.max_coords {
            Some(m) if m < n => {
                let mut r = rng::stream(opts.seed, pi as u64);
                let mut idx = sample(&mut r, n, m).into_vec();
                idx.sort_unstable();
                idx
            }
            _ => (0..n).collect(),
        };
        let mut max_rel = 0.0_f64;
        let mut max_abs = 0.0_f64;
        let mut skipped = 0;
        for &i in &coords {
            let orig = params[pi].data()[i];
            work[pi].data_mut()[i] = orig + opts.h;
            let (plus, region_plus) = f(&work);
            work[pi].data_mut()[i] = orig - opts.h;
            let (minus, region_minus) = f(&work);
            work[pi].data_mut()[i] = orig;
            if region_plus != region_minus {
                skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * opts.h);
            let a = analytic[pi].data()[i];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(opts.abs_floor);
            max_abs = max_abs.max(abs);
            max_rel = max_rel.max(if rel.is_nan() { f64::INFINITY } else { rel });
        }
        entries.push(GradCheckEntry {
            name: name.to_string(),
            checked: coords.len() - skipped,
            skipped,
            max_rel_error: max_rel,
            max_abs_error: max_abs,
        });
    }
    GradCheckReport { entries, tolerance: opts.tolerance }
}
