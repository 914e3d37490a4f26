//! Negative eigenvalues `-ω_k²` (positive real zeros of the cleared
//! determinant), normalized eigenfunctions and the projection off the point
//! spectrum.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::function::{CompositeFunction, ExpProfile};
use crate::graph::MetricTree;
use crate::resolvent::{determinant, Kind, Layout, RowForm};

/// Lower end of the root scan.
pub const OMEGA_MIN: f64 = 1e-6;
/// Scan points on the real axis.
pub const SCAN_POINTS: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectralData {
    pub eigen_omegas: Vec<f64>,
    pub eigenfunctions: Vec<ExpProfile>,
    pub l2_norms: Vec<f64>,
    /// Second-smallest over largest singular value of `D(ω_k)`.
    pub simplicity_gaps: Vec<f64>,
}

impl SpectralData {
    pub fn empty() -> Self {
        Self {
            eigen_omegas: Vec::new(),
            eigenfunctions: Vec::new(),
            l2_norms: Vec::new(),
            simplicity_gaps: Vec::new(),
        }
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.eigen_omegas.iter().map(|w| -w * w).collect()
    }
}

/// Default upper end of the scan: `Σ_v max(0, -α(v)) + 1`.
pub fn default_omega_max(tree: &MetricTree) -> f64 {
    tree.vertices().iter().map(|v| (-v.alpha).max(0.0)).sum::<f64>() + 1.0
}

/// Roots of a real function on `(lo, hi]` by a uniform sign scan followed by
/// bisection to `1e-12`.
pub fn real_roots<F>(f: F, lo: f64, hi: f64, points: usize) -> Vec<f64>
where
    F: Fn(f64) -> f64 + Sync,
{
    let xs: Vec<f64> = (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect();
    let ys: Vec<f64> = xs.par_iter().map(|&x| f(x)).collect();
    let mut roots = Vec::new();
    for i in 0..points - 1 {
        if ys[i] == 0.0 {
            roots.push(xs[i]);
            continue;
        }
        if ys[i].signum() * ys[i + 1].signum() < 0.0 {
            let (mut a, mut b, mut fa) = (xs[i], xs[i + 1], ys[i]);
            while b - a > 1e-12 {
                let m = 0.5 * (a + b);
                let fm = f(m);
                if fm == 0.0 {
                    a = m;
                    b = m;
                    break;
                }
                if fm.signum() == fa.signum() {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
            }
            roots.push(0.5 * (a + b));
        }
    }
    if ys[points - 1] == 0.0 {
        roots.push(xs[points - 1]);
    }
    roots
}

/// Eigenvalues with the default bracket.
pub fn find_eigenvalues(tree: &MetricTree) -> Result<SpectralData> {
    find_eigenvalues_below(tree, default_omega_max(tree))
}

/// All eigen-pairs with `ω_k ∈ (1e-6, omega_max]`.
pub fn find_eigenvalues_below(tree: &MetricTree, omega_max: f64) -> Result<SpectralData> {
    let layout = Layout::full(tree);
    let f = |w: f64| determinant(&layout.matrix(tree, Complex64::new(w, 0.0), RowForm::Cleared).expect("entire")).re;
    let mut out = SpectralData::empty();
    for w in real_roots(f, OMEGA_MIN, omega_max, SCAN_POINTS) {
        let m = layout.matrix(tree, Complex64::new(w, 0.0), RowForm::Cleared)?;
        let (profile, gap) = null_profile(tree, &layout, &m, w)?;
        if gap < 1e-6 {
            return Err(Error::DegenerateRoot(w, gap));
        }
        out.l2_norms.push(profile.norm_sqr(tree).sqrt());
        out.eigen_omegas.push(w);
        out.eigenfunctions.push(profile);
        out.simplicity_gaps.push(gap);
    }
    Ok(out)
}

/// Normalized real profile from the smallest singular direction of `m`.
fn null_profile(tree: &MetricTree, layout: &Layout, m: &DMatrix<Complex64>, w: f64) -> Result<(ExpProfile, f64)> {
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let smallest = order[0];
    let largest = svd.singular_values[order[order.len() - 1]];
    let gap = if order.len() > 1 {
        svd.singular_values[order[1]] / largest
    } else {
        1.0
    };
    let null: Vec<Complex64> = v_t.row(smallest).iter().map(|z| z.conj()).collect();
    let pivot = null
        .iter()
        .copied()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .unwrap_or(Complex64::new(1.0, 0.0));
    let phase = pivot.conj() / pivot.norm();
    let ne = tree.edges().len();
    let mut profile = ExpProfile {
        omega: w,
        grow: vec![Complex64::new(0.0, 0.0); ne],
        decay: vec![Complex64::new(0.0, 0.0); ne],
    };
    for (j, u) in layout.columns().iter().enumerate() {
        let z = Complex64::new((null[j] * phase).re, 0.0);
        match u.kind {
            Kind::Grow => profile.grow[u.edge] = z,
            Kind::Decay => profile.decay[u.edge] = z,
        }
    }
    let norm = profile.norm_sqr(tree).sqrt();
    if !(norm > 0.0) {
        return Err(Error::Singular {
            omega: Complex64::new(w, 0.0),
            condition: f64::INFINITY,
        });
    }
    for z in profile.grow.iter_mut().chain(profile.decay.iter_mut()) {
        *z /= norm;
    }
    Ok((profile, gap))
}

/// `P u = u - Σ_k ⟨u, φ_k⟩ φ_k`.
pub fn project_out(u: &CompositeFunction, spec: &SpectralData, tree: &MetricTree) -> CompositeFunction {
    let mut out = u.clone();
    for phi in &spec.eigenfunctions {
        let c = u.inner_profile(phi, tree);
        out.modes.push((-c, phi.clone()));
    }
    out
}
