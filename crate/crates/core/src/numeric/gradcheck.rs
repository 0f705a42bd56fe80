//! Central-difference gradient checking.

use super::{NodeId, ParamStore, Tape};
use crate::error::{Error, Result};

/// Default perturbation size.
pub const DEFAULT_EPS: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Max over entries of `|analytic - numeric| / max(1, |analytic|, |numeric|)`.
    pub max_rel_error: f64,
    /// Path and flat index of the entry with the largest error.
    pub worst_path: String,
    pub worst_index: usize,
    pub entries_checked: usize,
}

fn eval<F>(f: &F, store: &ParamStore) -> Result<f64>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<NodeId>,
{
    let mut tape = Tape::new();
    let out = f(&mut tape, store)?;
    tape.value(out).item()
}

/// Compares reverse-mode gradients of `f` against central differences,
/// perturbing every entry of every parameter in `store` independently.
///
/// `f` builds the scalar function on a fresh tape, reading parameters from
/// the store it is handed. `store` is restored before returning.
pub fn grad_check<F>(store: &mut ParamStore, eps: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<NodeId>,
{
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::Config(format!("grad_check eps must be > 0, got {eps}")));
    }
    let grads = {
        let mut tape = Tape::new();
        let out = f(&mut tape, store)?;
        tape.backward(out)?
    };
    for (path, g) in &grads {
        if let Some(index) = g.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                path: path.clone(),
                index,
            });
        }
    }

    let paths: Vec<String> = store.paths().map(str::to_string).collect();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_path: String::new(),
        worst_index: 0,
        entries_checked: 0,
    };
    for path in &paths {
        let n = store.get(path)?.len();
        for index in 0..n {
            let orig = store.get(path)?.data()[index];
            store.get_mut(path)?.data_mut()[index] = orig + eps;
            let plus = eval(&f, store);
            store.get_mut(path)?.data_mut()[index] = orig - eps;
            let minus = eval(&f, store);
            store.get_mut(path)?.data_mut()[index] = orig;
            let (plus, minus) = (plus?, minus?);
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite {
                    path: path.clone(),
                    index,
                });
            }
            let numeric = (plus - minus) / (2.0 * eps);
            let analytic = grads.get(path).map_or(0.0, |g| g.data()[index]);
            let denom = 1f64.max(analytic.abs()).max(numeric.abs());
            let rel = (analytic - numeric).abs() / denom;
            report.entries_checked += 1;
            if rel > report.max_rel_error || report.worst_path.is_empty() {
                report.max_rel_error = rel;
                report.worst_path = path.clone();
                report.worst_index = index;
            }
        }
    }
    Ok(report)
}
