//! Truncated relative reliability loss, its gradients, and two comparison
//! losses.
//!
//! Each reliability `u` is squashed twice, `u_scale = K_s·atan(u)` and
//! `u_cut = K_s·atan(clamp(u, ±10π))`. Weights take the larger of the two in
//! the numerator and the smaller in the shared denominator:
//!
//! ```text
//! w_i = exp(max(u_scale_i, u_cut_i)) / Σ_j exp(min(u_scale_j, u_cut_j))
//! L   = Σ_i w_i ‖ĉ_i − c_i‖
//! ```
//!
//! Inside the clamp this is a softmax whose max/min weight ratio is bounded
//! by `exp(2·K_s·atan(10π)) < 10`. Outside it the weights sum to more than
//! one, which penalizes runaway reliabilities while still passing a gradient.

use std::f64::consts::{LN_10, PI};

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// `K_s = ln 10 / π`.
pub const K_S: f64 = LN_10 / PI;

/// Reliability clamp bound `10π`.
pub const CLAMP: f64 = 10.0 * PI;

#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub raw: Vec<f64>,
    pub u_scale: Vec<f64>,
    pub u_cut: Vec<f64>,
    pub weights: Vec<f64>,
    pub total: f64,
}

impl LossBreakdown {
    /// Points whose reliability lies outside `[−10π, 10π]`.
    pub fn clamp_exceeding(&self) -> usize {
        self.u_scale
            .iter()
            .zip(&self.u_cut)
            .filter(|(s, c)| s != c)
            .count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGradients {
    pub coords: Vec<Vector3<f64>>,
    pub reliability: Vec<f64>,
}

pub fn raw_loss(pred: &Vector3<f64>, gt: &Vector3<f64>) -> f64 {
    (gt - pred).norm()
}

/// `(u_scale, u_cut)`.
pub fn calibrate(u: f64) -> (f64, f64) {
    (u.atan() * K_S, u.clamp(-CLAMP, CLAMP).atan() * K_S)
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::LengthMismatch { left: a, right: b })
    }
}

/// Numerators and denominator of the weights, both scaled by the same
/// `exp(−shift)` with `shift = max_j min(u_scale_j, u_cut_j)`.
fn weight_terms(u: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, f64) {
    let (scale, cut): (Vec<f64>, Vec<f64>) = u.iter().map(|&v| calibrate(v)).unzip();
    let shift = scale
        .iter()
        .zip(&cut)
        .map(|(s, c)| s.min(*c))
        .fold(f64::NEG_INFINITY, f64::max);
    let shift = if shift.is_finite() { shift } else { 0.0 };
    let num: Vec<f64> = scale.iter().zip(&cut).map(|(s, c)| (s.max(*c) - shift).exp()).collect();
    let den_terms: Vec<f64> = scale.iter().zip(&cut).map(|(s, c)| (s.min(*c) - shift).exp()).collect();
    let den = den_terms.iter().sum();
    (scale, cut, num, den_terms, den)
}

pub fn trr_weights(u: &[f64]) -> Vec<f64> {
    let (_, _, num, _, den) = weight_terms(u);
    num.iter().map(|n| n / den).collect()
}

pub fn trr_loss(pred: &[Vector3<f64>], gt: &[Vector3<f64>], u: &[f64]) -> Result<LossBreakdown> {
    check_lengths(pred.len(), gt.len())?;
    check_lengths(pred.len(), u.len())?;
    if pred.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let raw: Vec<f64> = pred.iter().zip(gt).map(|(p, g)| raw_loss(p, g)).collect();
    let (u_scale, u_cut, num, _, den) = weight_terms(u);
    let weights: Vec<f64> = num.iter().map(|n| n / den).collect();
    let total = weights.iter().zip(&raw).map(|(w, l)| w * l).sum();
    Ok(LossBreakdown {
        raw,
        u_scale,
        u_cut,
        weights,
        total,
    })
}

/// Which branch of max/min moves with `u`: `(numerator, denominator)`.
/// Inside the clamp both move; above it only the numerator; below it only
/// the denominator.
fn branch_slopes(u: f64) -> (f64, f64) {
    let slope = K_S / (1.0 + u * u);
    if u > CLAMP {
        (slope, 0.0)
    } else if u < -CLAMP {
        (0.0, slope)
    } else {
        (slope, slope)
    }
}

/// Analytic gradients of the total with respect to predictions and
/// reliabilities. Points with zero raw loss get a zero coordinate
/// subgradient.
pub fn trr_gradients(pred: &[Vector3<f64>], gt: &[Vector3<f64>], u: &[f64]) -> Result<(LossBreakdown, LossGradients)> {
    let breakdown = trr_loss(pred, gt, u)?;
    let (_, _, num, den_terms, den) = weight_terms(u);
    let coords = pred
        .iter()
        .zip(gt)
        .zip(breakdown.raw.iter().zip(&breakdown.weights))
        .map(|((p, g), (&l, &w))| if l > 0.0 { (p - g) * (w / l) } else { Vector3::zeros() })
        .collect();
    let reliability = u
        .iter()
        .enumerate()
        .map(|(i, &ui)| {
            let (dnum, dden) = branch_slopes(ui);
            (num[i] * breakdown.raw[i] * dnum - breakdown.total * den_terms[i] * dden) / den
        })
        .collect();
    Ok((breakdown, LossGradients { coords, reliability }))
}

pub fn mean_euclidean_loss(pred: &[Vector3<f64>], gt: &[Vector3<f64>]) -> Result<f64> {
    check_lengths(pred.len(), gt.len())?;
    if pred.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(pred.iter().zip(gt).map(|(p, g)| raw_loss(p, g)).sum::<f64>() / pred.len() as f64)
}

pub fn mean_euclidean_gradients(pred: &[Vector3<f64>], gt: &[Vector3<f64>]) -> Result<(f64, Vec<Vector3<f64>>)> {
    let total = mean_euclidean_loss(pred, gt)?;
    let n = pred.len() as f64;
    let grads = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| {
            let l = raw_loss(p, g);
            if l > 0.0 {
                (p - g) / (l * n)
            } else {
                Vector3::zeros()
            }
        })
        .collect();
    Ok((total, grads))
}

/// Uncertainty floor of the matching loss weights.
pub const MATCHING_FLOOR: f64 = 0.01;

fn matching_weights(sigma: &[f64], sigma_max: f64) -> Vec<f64> {
    sigma.iter().map(|s| (sigma_max - s).max(MATCHING_FLOOR)).collect()
}

/// `Σ w̃_i ‖ĉ_i − c_i‖` with `w_i = max(σ_max − σ_i, 0.01)` normalized.
pub fn matching_loss(pred: &[Vector3<f64>], gt: &[Vector3<f64>], sigma: &[f64], sigma_max: f64) -> Result<f64> {
    matching_gradients(pred, gt, sigma, sigma_max).map(|(t, _, _)| t)
}

/// Total plus gradients with respect to predictions and `σ`.
pub fn matching_gradients(
    pred: &[Vector3<f64>],
    gt: &[Vector3<f64>],
    sigma: &[f64],
    sigma_max: f64,
) -> Result<(f64, Vec<Vector3<f64>>, Vec<f64>)> {
    check_lengths(pred.len(), gt.len())?;
    check_lengths(pred.len(), sigma.len())?;
    if pred.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let w = matching_weights(sigma, sigma_max);
    let sum: f64 = w.iter().sum();
    let raw: Vec<f64> = pred.iter().zip(gt).map(|(p, g)| raw_loss(p, g)).collect();
    let total = w.iter().zip(&raw).map(|(w, l)| w * l).sum::<f64>() / sum;
    let coords = pred
        .iter()
        .zip(gt)
        .zip(raw.iter().zip(&w))
        .map(|((p, g), (&l, &wi))| if l > 0.0 { (p - g) * (wi / (sum * l)) } else { Vector3::zeros() })
        .collect();
    let dsigma = sigma
        .iter()
        .zip(&raw)
        .map(|(&s, &l)| if sigma_max - s > MATCHING_FLOOR { -(l - total) / sum } else { 0.0 })
        .collect();
    Ok((total, coords, dsigma))
}
