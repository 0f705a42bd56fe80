//! Focal loss for binary labels.
//!
//! With `p_t` the predicted probability of the true class (`p` for label 1,
//! `1 - p` for label 0) the loss is `-(1 - p_t)^gamma * ln(p_t)`. Setting
//! `gamma = 0` recovers binary cross-entropy; larger `gamma` shrinks the loss
//! on examples the model already gets right.

use crate::error::{Error, Result};

/// Floor applied to `p_t` inside the logarithm so a saturated prediction
/// yields a large finite loss instead of infinity.
pub const LOG_FLOOR: f64 = 1e-12;

fn check(prob: f64, label: u8, gamma: f64) -> Result<f64> {
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(Error::Config(format!("focal gamma must be >= 0, got {gamma}")));
    }
    // NaN propagates so callers can report divergence where it happened
    if !prob.is_nan() && !(0.0..=1.0).contains(&prob) {
        return Err(Error::Validation(format!(
            "probability must lie in [0, 1], got {prob}"
        )));
    }
    match label {
        1 => Ok(prob),
        0 => Ok(1.0 - prob),
        other => Err(Error::Validation(format!("label must be 0 or 1, got {other}"))),
    }
}

/// Focal loss of predicted positive-class probability `prob` for `label`.
pub fn focal_loss(prob: f64, label: u8, gamma: f64) -> Result<f64> {
    let pt = check(prob, label, gamma)?;
    Ok(-(1.0 - pt).powf(gamma) * pt.max(LOG_FLOOR).ln())
}

/// Derivative of [`focal_loss`] with respect to `prob`.
pub fn focal_loss_grad(prob: f64, label: u8, gamma: f64) -> Result<f64> {
    let pt = check(prob, label, gamma)?;
    let q = 1.0 - pt;
    let log_pt = pt.max(LOG_FLOOR).ln();
    // d/dp_t of -(1-p_t)^gamma; its limit at p_t = 1 is 0 for every gamma > 0
    let focus = if gamma == 0.0 || q == 0.0 {
        0.0
    } else {
        gamma * q.powf(gamma - 1.0) * log_pt
    };
    let ce = if pt > LOG_FLOOR { q.powf(gamma) / pt } else { 0.0 };
    let d_pt = focus - ce;
    Ok(if label == 1 { d_pt } else { -d_pt })
}

/// Binary cross-entropy of the true class, with the same log floor.
pub fn binary_cross_entropy(prob: f64, label: u8) -> Result<f64> {
    let pt = check(prob, label, 0.0)?;
    Ok(-pt.max(LOG_FLOOR).ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_zero_half_is_ln2() {
        let l = focal_loss(0.5, 1, 0.0).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn perfect_prediction_has_zero_loss() {
        assert_eq!(focal_loss(1.0, 1, 2.0).unwrap(), 0.0);
        assert_eq!(focal_loss(0.0, 0, 0.5).unwrap(), 0.0);
        assert!(focal_loss(1.0 - 1e-9, 1, 2.0).unwrap() < 1e-20);
    }

    #[test]
    fn gamma_two_at_point_nine() {
        // -(0.1)^2 ln(0.9) = 0.01 * 0.105360515657826301...
        let l = focal_loss(0.9, 1, 2.0).unwrap();
        assert!((l - 1.053_605_156_578_263e-3).abs() < 1e-15);
    }

    #[test]
    fn negatives_use_complement() {
        assert_eq!(focal_loss(0.3, 0, 2.0).unwrap(), focal_loss(0.7, 1, 2.0).unwrap());
    }

    #[test]
    fn saturated_wrong_prediction_is_finite() {
        let l = focal_loss(0.0, 1, 2.0).unwrap();
        assert!((l + LOG_FLOOR.ln()).abs() < 1e-9);
        assert!(focal_loss_grad(0.0, 1, 2.0).unwrap().is_finite());
        assert!(focal_loss_grad(1.0, 1, 0.5).unwrap().is_finite());
    }

    #[test]
    fn invalid_arguments() {
        assert!(matches!(focal_loss(0.5, 1, -0.1), Err(Error::Config(_))));
        assert!(focal_loss(1.5, 1, 1.0).is_err());
        assert!(focal_loss(0.5, 2, 1.0).is_err());
        assert!(focal_loss(f64::NAN, 1, 1.0).unwrap().is_nan());
    }

    #[test]
    fn grad_matches_central_difference() {
        let h = 1e-6;
        for gamma in [0.0, 0.5, 1.0, 2.0, 3.5] {
            for label in [0u8, 1] {
                for p in [0.05, 0.2, 0.5, 0.8, 0.97] {
                    let fd = (focal_loss(p + h, label, gamma).unwrap()
                        - focal_loss(p - h, label, gamma).unwrap())
                        / (2.0 * h);
                    let an = focal_loss_grad(p, label, gamma).unwrap();
                    assert!((fd - an).abs() < 1e-6 * an.abs().max(1.0), "g={gamma} y={label} p={p}");
                }
            }
        }
    }
}
