//! Contour integrals on circles centered at the origin.

use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Trapezoid nodes `r e^{2πij/n}`.
pub fn circle_nodes(r: f64, n: usize) -> Vec<Complex64> {
    (0..n).map(|j| Complex64::from_polar(r, 2.0 * PI * j as f64 / n as f64)).collect()
}

/// Winding number of `f` around 0 along `|ω| = r`, i.e. the zero count of an
/// analytic `f` inside the circle. Errors when the phase is under-resolved or
/// `f` nearly vanishes on the contour.
pub fn winding_number<F>(f: F, r: f64, n: usize) -> Result<i64>
where
    F: Fn(Complex64) -> Complex64 + Sync,
{
    let values: Vec<Complex64> = circle_nodes(r, n).into_par_iter().map(&f).collect();
    let peak = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if !(peak > 0.0) || values.iter().any(|v| !(v.norm() > 1e-13 * peak)) {
        return Err(Error::Inconclusive(format!("function (nearly) vanishes on |ω| = {r:e}")));
    }
    let mut total = 0.0;
    for j in 0..n {
        let step = (values[(j + 1) % n] / values[j]).arg();
        if step.abs() > 0.5 * PI {
            return Err(Error::Inconclusive(format!("phase under-resolved on |ω| = {r:e}")));
        }
        total += step;
    }
    let w = total / (2.0 * PI);
    let m = w.round();
    if (w - m).abs() >= 0.01 {
        return Err(Error::Inconclusive(format!("non-integer winding {w} on |ω| = {r:e}")));
    }
    Ok(m as i64)
}

/// Zero count inside `|ω| = r`, halving `r` from `r0` until two successive
/// radii agree. Returns the count and the larger radius of the agreeing pair.
pub fn stable_zero_count<F>(f: F, r0: f64, n: usize) -> Result<(usize, f64)>
where
    F: Fn(Complex64) -> Complex64 + Sync,
{
    let mut r = r0;
    let mut prev: Option<i64> = winding_number(&f, r, n).ok();
    for _ in 0..24 {
        let next = winding_number(&f, 0.5 * r, n).ok();
        if let (Some(a), Some(b)) = (prev, next) {
            if a == b && a >= 0 {
                return Ok((a as usize, r));
            }
        }
        prev = next;
        r *= 0.5;
    }
    Err(Error::Inconclusive(format!(
        "zero count did not stabilize down to radius {r:e}, refine r"
    )))
}

/// Taylor coefficients `a_0..=a_k` of `f` at 0 from the trapezoid rule on
/// `|ω| = r`.
pub fn taylor_coefficients<F>(f: F, r: f64, n: usize, k: usize) -> Vec<Complex64>
where
    F: Fn(Complex64) -> Complex64 + Sync,
{
    let nodes = circle_nodes(r, n);
    let values: Vec<Complex64> = nodes.par_iter().map(|&z| f(z)).collect();
    (0..=k)
        .map(|m| nodes.iter().zip(&values).map(|(z, v)| v * z.powi(-(m as i32))).sum::<Complex64>() / n as f64)
        .collect()
}
