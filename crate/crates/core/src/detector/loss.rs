//! Focal loss and smooth-L1, each with its derivative.

use serde::{Deserialize, Serialize};

/// Scores are clamped into `[EPS, 1 − EPS]` before taking logs.
pub const SCORE_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocalParams {
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for FocalParams {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            gamma: 2.0,
        }
    }
}

/// `−α_t (1 − p_t)^γ log p_t` with `p_t = score` for positives and
/// `1 − score` otherwise.
pub fn focal_loss(score: f64, is_positive: bool, params: FocalParams) -> f64 {
    let p = score.clamp(SCORE_EPS, 1.0 - SCORE_EPS);
    let (pt, alpha_t) = if is_positive {
        (p, params.alpha)
    } else {
        (1.0 - p, 1.0 - params.alpha)
    };
    -alpha_t * (1.0 - pt).powf(params.gamma) * pt.ln()
}

/// Derivative of [`focal_loss`] with respect to the raw score. Zero where
/// the clamp is active.
pub fn focal_loss_grad(score: f64, is_positive: bool, params: FocalParams) -> f64 {
    if score <= SCORE_EPS || score >= 1.0 - SCORE_EPS {
        return 0.0;
    }
    let g = params.gamma;
    let (pt, alpha_t, sign) = if is_positive {
        (score, params.alpha, 1.0)
    } else {
        (1.0 - score, 1.0 - params.alpha, -1.0)
    };
    // d/dpt of −α (1−pt)^γ log pt
    let q = 1.0 - pt;
    let d_pt = if g == 0.0 {
        -alpha_t / pt
    } else {
        alpha_t * (g * q.powf(g - 1.0) * pt.ln() - q.powf(g) / pt)
    };
    sign * d_pt
}

pub fn smooth_l1(pred: f64, target: f64, beta: f64) -> f64 {
    let d = (pred - target).abs();
    if d < beta {
        0.5 * d * d / beta
    } else {
        d - 0.5 * beta
    }
}

pub fn smooth_l1_grad(pred: f64, target: f64, beta: f64) -> f64 {
    let d = pred - target;
    if d.abs() < beta {
        d / beta
    } else {
        d.signum()
    }
}
