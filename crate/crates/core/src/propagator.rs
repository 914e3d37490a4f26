//! Time evolution `e^{-itH}` through the spectral formula
//!
//! `e^{-itH} P u₀(x) = (1/π) ∫_ℝ e^{-itτ²} [ω R_ω u₀(x)]_{ω = iτ} dτ`.
//!
//! On edge `e`, `ω R_ω u₀ = Y_c e^{ωx} + Y_d e^{-ωx} + t_e(x, ω)` where `Y`
//! solves `D(ω) Y = ω T(ω)`. The `t_e` term integrates in closed form to the
//! free Schrödinger evolution of `u₀` restricted to `e`. The `Y` term is
//! smooth and, for packet data, rapidly decaying in `τ`; it is integrated by
//! the trapezoid rule with a step that resolves the `e^{-itτ²}` chirp. Near
//! `τ = 0`, where `D` is singular of order `p - 1`, `Y` is evaluated by the
//! Cauchy integral formula on a circle enclosing no other zero.

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

use crate::contour::circle_nodes;
use crate::determinant::{zero_order_at_origin, ResonanceReport};
use crate::error::{Error, Result};
use crate::function::{CompositeFunction, GraphFunction, Norm};
use crate::graph::MetricTree;
use crate::resolvent::{endpoint_t, solve_dense, Kind, Layout, RowForm};
use crate::spectral::{find_eigenvalues, SpectralData};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
/// Nodes of the Cauchy circle used near `τ = 0`.
const CAUCHY_NODES: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QuadratureSpec {
    /// Half-width of the `τ` interval; default `max(|k| + 8/σ)`.
    pub tau_max: Option<f64>,
    /// Lower bound on the number of `τ` nodes.
    pub min_nodes: usize,
    /// Repeat with half the step and 1.5× the interval and report the change.
    pub check: bool,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            tau_max: None,
            min_nodes: 64,
            check: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EvolutionRequest<'a> {
    pub tree: &'a MetricTree,
    /// Packets plus eigen-components (modes must be eigenfunctions).
    pub u0: CompositeFunction,
    pub times: Vec<f64>,
    pub samples: Vec<(usize, f64)>,
    pub quadrature: QuadratureSpec,
    pub include_bound_part: bool,
}

impl<'a> EvolutionRequest<'a> {
    pub fn new(tree: &'a MetricTree, u0: impl Into<CompositeFunction>, times: Vec<f64>, samples: Vec<(usize, f64)>) -> Self {
        Self {
            tree,
            u0: u0.into(),
            times,
            samples,
            quadrature: QuadratureSpec::default(),
            include_bound_part: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.times.iter().any(|t| !(t.is_finite() && *t != 0.0)) {
            return Err(Error::InvalidArgument("times must be finite and nonzero".into()));
        }
        if self.quadrature.min_nodes < 64 {
            return Err(Error::InvalidArgument("at least 64 τ nodes are required".into()));
        }
        if let Some(t) = self.quadrature.tau_max {
            if !(t > 0.0) {
                return Err(Error::InvalidArgument("τ_max must be positive".into()));
            }
        }
        let edges = self.tree.edges();
        for &(e, x) in &self.samples {
            if e >= edges.len() || !(x >= 0.0 && x <= edges[e].length) {
                return Err(Error::InvalidArgument(format!("sample ({e}, {x}) lies outside its edge")));
            }
        }
        for ps in &self.u0.packets.packets {
            if ps.iter().any(|p| !(p.width > 0.0)) {
                return Err(Error::InvalidArgument("packet widths must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuadratureReport {
    pub tau_max: f64,
    pub step: f64,
    pub nodes: usize,
    /// Largest relative change under refinement (`None` if not checked).
    pub self_consistency: Option<f64>,
    pub converged: bool,
    /// Integration-by-parts bound for the integral beyond `τ_max`.
    pub tail_estimate: f64,
    pub cauchy_radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Evolution {
    pub times: Vec<f64>,
    pub samples: Vec<(usize, f64)>,
    /// `values[i][j]`: time `i`, sample `j`.
    pub values: Vec<Vec<Complex64>>,
    pub quadrature: QuadratureReport,
    pub resonance: ResonanceReport,
}

impl Evolution {
    /// CSV rows `t,edge,x,re,im,abs` with edge ids.
    pub fn to_csv(&self, tree: &MetricTree) -> String {
        let mut out = String::from("t,edge,x,re,im,abs\n");
        for (i, t) in self.times.iter().enumerate() {
            for (j, &(e, x)) in self.samples.iter().enumerate() {
                let z = self.values[i][j];
                out.push_str(&format!("{t},{},{x},{:e},{:e},{:e}\n", tree.edges()[e].id, z.re, z.im, z.norm()));
            }
        }
        out
    }
}

/// Checks the zero-order condition, refusing resonant trees.
pub fn check_resonance(tree: &MetricTree) -> Result<ResonanceReport> {
    let report = zero_order_at_origin(tree)?;
    if !report.condition_holds {
        return Err(Error::ResonanceCondition {
            zero_order: report.zero_order,
            expected: report.p - 1,
        });
    }
    Ok(report)
}

/// `Y(ω)` per edge: `(Y_c, Y_d)` of the cleared system `D Y = ω T`.
fn solve_y(layout: &Layout, tree: &MetricTree, u0: &GraphFunction, omega: Complex64) -> Result<DVector<Complex64>> {
    let m = layout.matrix(tree, omega, RowForm::Cleared)?;
    let g = layout.scaled_rhs(tree, omega, RowForm::Cleared, |p| endpoint_t(tree, u0, omega, p));
    solve_dense(&m, &g, omega)
}

struct TauGrid {
    taus: Vec<f64>,
    weights: Vec<f64>,
    /// Per edge, per node.
    yc: Vec<Vec<Complex64>>,
    yd: Vec<Vec<Complex64>>,
}

fn build_grid(
    tree: &MetricTree,
    u0: &GraphFunction,
    layout: &Layout,
    tau_max: f64,
    step: f64,
    rho: f64,
    circle: &[(Complex64, DVector<Complex64>)],
) -> Result<TauGrid> {
    let n = (2.0 * tau_max / step).ceil() as usize;
    let h = 2.0 * tau_max / n as f64;
    let taus: Vec<f64> = (0..=n).map(|j| -tau_max + h * j as f64).collect();
    let weights: Vec<f64> = (0..=n).map(|j| if j == 0 || j == n { 0.5 * h / PI } else { h / PI }).collect();
    let ys: Vec<DVector<Complex64>> = taus
        .par_iter()
        .map(|&tau| {
            let w = Complex64::new(0.0, tau);
            if tau.abs() < 0.5 * rho {
                let mut acc = DVector::from_element(layout.size(), ZERO);
                for (z, y) in circle {
                    acc += y * (*z / (*z - w));
                }
                Ok(acc.unscale(circle.len() as f64))
            } else {
                solve_y(layout, tree, u0, w)
            }
        })
        .collect::<Result<_>>()?;
    let ne = tree.edges().len();
    let mut yc = vec![vec![ZERO; taus.len()]; ne];
    let mut yd = vec![vec![ZERO; taus.len()]; ne];
    for (k, u) in layout.columns().iter().enumerate() {
        let target = match u.kind {
            Kind::Grow => &mut yc[u.edge],
            Kind::Decay => &mut yd[u.edge],
        };
        for (j, y) in ys.iter().enumerate() {
            target[j] = y[k];
        }
    }
    Ok(TauGrid { taus, weights, yc, yd })
}

/// Scattered part at every (time, sample).
fn scattered(grid: &TauGrid, times: &[f64], samples: &[(usize, f64)]) -> Vec<Vec<Complex64>> {
    let phases: Vec<Vec<Complex64>> = times
        .iter()
        .map(|t| {
            grid.taus
                .iter()
                .zip(&grid.weights)
                .map(|(tau, w)| Complex64::from_polar(*w, -t * tau * tau))
                .collect()
        })
        .collect();
    let h = grid.taus[1] - grid.taus[0];
    let per_sample: Vec<Vec<Complex64>> = samples
        .par_iter()
        .map(|&(e, x)| {
            let (yc, yd) = (&grid.yc[e], &grid.yd[e]);
            let has_c = yc.iter().any(|z| *z != ZERO);
            let mut coef_c = vec![ZERO; grid.taus.len()];
            let mut coef_d = vec![ZERO; grid.taus.len()];
            let mut ex = Complex64::from_polar(1.0, grid.taus[0] * x);
            let rot = Complex64::from_polar(1.0, h * x);
            for j in 0..grid.taus.len() {
                if j % 512 == 0 {
                    ex = Complex64::from_polar(1.0, grid.taus[j] * x);
                }
                coef_d[j] = yd[j] * ex.conj();
                if has_c {
                    coef_c[j] = yc[j] * ex;
                }
                ex *= rot;
            }
            phases
                .iter()
                .map(|ph| ph.iter().zip(coef_c.iter().zip(&coef_d)).map(|(p, (c, d))| p * (c + d)).sum())
                .collect()
        })
        .collect();
    (0..times.len()).map(|i| per_sample.iter().map(|v| v[i]).collect()).collect()
}

fn free_part(tree: &MetricTree, u0: &GraphFunction, t: f64, e: usize, x: f64) -> Complex64 {
    let l = tree.edges()[e].length;
    u0.packets[e].iter().map(|p| p.free_evolution_cut(t, x, l)).sum()
}

/// Default `τ_max = max over packets of |k| + 8/σ`.
pub fn default_tau_max(u0: &GraphFunction) -> f64 {
    u0.packets
        .iter()
        .flatten()
        .map(|p| p.wavenumber.abs() + 8.0 / p.width)
        .fold(1.0, f64::max)
}

/// Step that resolves the phase content of the integrand up to
/// time `t` and positions `x`.
fn default_step(tree: &MetricTree, u0: &GraphFunction, t_abs: f64, x_max: f64, tau_max: f64) -> f64 {
    let reach = u0
        .packets
        .iter()
        .flatten()
        .map(|p| p.center.abs() + 9.0 * p.width)
        .fold(0.0, f64::max);
    let internal: f64 = tree.internal_edges().map(|e| tree.edges()[e].length).sum();
    let span = x_max + 2.0 * t_abs * tau_max + reach + 2.0 * internal;
    2.0 * PI / (1.25 * span + 40.0)
}

fn run(req: &EvolutionRequest, resonance: &ResonanceReport, tau_max: f64, step: f64) -> Result<(Vec<Vec<Complex64>>, TauGrid)> {
    let tree = req.tree;
    let u0 = &req.u0.packets;
    let layout = Layout::full(tree);
    let rho = resonance.radius;
    let circle: Vec<(Complex64, DVector<Complex64>)> = circle_nodes(rho, CAUCHY_NODES)
        .into_par_iter()
        .map(|z| Ok((z, solve_y(&layout, tree, u0, z)?)))
        .collect::<Result<_>>()?;
    let grid = build_grid(tree, u0, &layout, tau_max, step, rho, &circle)?;
    let mut values = scattered(&grid, &req.times, &req.samples);
    for (i, &t) in req.times.iter().enumerate() {
        for (j, &(e, x)) in req.samples.iter().enumerate() {
            values[i][j] += free_part(tree, u0, t, e, x);
        }
    }
    Ok((values, grid))
}

/// `e^{-itH} P u₀` at the requested samples. Refuses trees failing the
/// zero-order condition before any quadrature.
pub fn evolve_dispersive(req: &EvolutionRequest) -> Result<Evolution> {
    req.validate()?;
    let resonance = check_resonance(req.tree)?;
    let tau_max = req.quadrature.tau_max.unwrap_or_else(|| default_tau_max(&req.u0.packets));
    let t_abs = req.times.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    let x_max = req.samples.iter().fold(0.0f64, |m, s| m.max(s.1));
    let step = default_step(req.tree, &req.u0.packets, t_abs, x_max, tau_max).min(2.0 * tau_max / req.quadrature.min_nodes as f64);
    let (values, grid) = run(req, &resonance, tau_max, step)?;

    let tail_estimate = {
        let last = grid.taus.len() - 1;
        let edge_max = |j: usize| {
            (0..req.tree.edges().len())
                .map(|e| grid.yc[e][j].norm() + grid.yd[e][j].norm())
                .fold(0.0, f64::max)
        };
        let t_min = req.times.iter().fold(f64::INFINITY, |m, t| m.min(t.abs()));
        (edge_max(0) + edge_max(last)) / (PI * 2.0 * t_min * tau_max)
    };

    let mut self_consistency = None;
    if req.quadrature.check {
        let (fine, _) = run(req, &resonance, 1.5 * tau_max, 0.5 * step)?;
        let mut worst = 0.0f64;
        for (a, b) in values.iter().zip(&fine) {
            let scale = b.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
            let diff = a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            worst = worst.max(diff / scale);
        }
        self_consistency = Some(worst);
    }
    let converged = self_consistency.is_none_or(|d| d <= 1e-4);
    Ok(Evolution {
        times: req.times.clone(),
        samples: req.samples.clone(),
        values,
        quadrature: QuadratureReport {
            tau_max,
            step,
            nodes: grid.taus.len(),
            self_consistency,
            converged,
            tail_estimate,
            cauchy_radius: resonance.radius,
        },
        resonance,
    })
}

/// `e^{-itH} u₀ = e^{-itH} P u₀ + Σ_k e^{itω_k²} ⟨u₀, φ_k⟩ φ_k`.
pub fn evolve_full(req: &EvolutionRequest, spec: &SpectralData) -> Result<Evolution> {
    for (_, m) in &req.u0.modes {
        if !spec.eigen_omegas.iter().any(|w| (w - m.omega).abs() <= 1e-9 * w.max(1.0)) {
            return Err(Error::InvalidArgument(format!(
                "initial mode with ω = {} is not an eigenfunction",
                m.omega
            )));
        }
    }
    let mut out = evolve_dispersive(req)?;
    let coeffs: Vec<Complex64> = spec.eigenfunctions.iter().map(|phi| req.u0.inner_profile(phi, req.tree)).collect();
    for (i, &t) in req.times.iter().enumerate() {
        for (j, &(e, x)) in req.samples.iter().enumerate() {
            for ((w, phi), c) in spec.eigen_omegas.iter().zip(&spec.eigenfunctions).zip(&coeffs) {
                out.values[i][j] += Complex64::from_polar(1.0, t * w * w) * c * phi.eval(e, x);
            }
        }
    }
    Ok(out)
}

/// Dispatches on `include_bound_part`.
pub fn evolve(req: &EvolutionRequest) -> Result<Evolution> {
    if req.include_bound_part {
        let spec = find_eigenvalues(req.tree)?;
        evolve_full(req, &spec)
    } else {
        evolve_dispersive(req)
    }
}

/// Largest packet speed bound `2(|k| + c/σ)`.
pub fn packet_speed(u0: &GraphFunction, c: f64) -> f64 {
    u0.packets
        .iter()
        .flatten()
        .map(|p| 2.0 * (p.wavenumber.abs() + c / p.width))
        .fold(0.0, f64::max)
}

/// End of the moving sampling window on infinite edges at time `t`.
pub fn window_end(u0: &GraphFunction, t: f64, speed_widths: f64) -> f64 {
    let x0 = u0.packets.iter().flatten().map(|p| p.center.abs()).fold(0.0, f64::max);
    let sigma = u0.packets.iter().flatten().map(|p| p.width).fold(0.0, f64::max);
    x0 + packet_speed(u0, speed_widths) * t.abs() + 10.0 * sigma
}

/// Uniform samples on every edge: `[0, l_e]` on finite edges and
/// `[0, x_end]` on infinite ones, at least `min_points` per edge.
pub fn edge_grid(tree: &MetricTree, x_end: f64, spacing: f64, min_points: usize) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for (e, edge) in tree.edges().iter().enumerate() {
        let l = if edge.is_infinite() { x_end } else { edge.length };
        let n = ((l / spacing).ceil() as usize).max(min_points.max(2) - 1);
        out.extend((0..=n).map(|i| (e, l * i as f64 / n as f64)));
    }
    out
}

/// L² norm from uniform per-edge samples produced by [`edge_grid`]
/// (trapezoid rule per edge).
pub fn grid_l2_norm(samples: &[(usize, f64)], values: &[Complex64]) -> f64 {
    let mut total = 0.0;
    let mut i = 0;
    while i < samples.len() {
        let e = samples[i].0;
        let mut j = i;
        while j + 1 < samples.len() && samples[j + 1].0 == e {
            j += 1;
        }
        for k in i..j {
            let h = samples[k + 1].1 - samples[k].1;
            total += 0.5 * h * (values[k].norm_sqr() + values[k + 1].norm_sqr());
        }
        i = j + 1;
    }
    total.sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayRow {
    pub t: f64,
    pub sup: f64,
    pub sqrt_t_sup: f64,
    /// Free-packet envelope bound beyond the sampling window.
    pub window_tail: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayReport {
    pub rows: Vec<DecayRow>,
    pub beta: f64,
    pub constant: f64,
    pub fit_residual: f64,
    pub l1_norm: f64,
    /// `max_t √t ‖u(t)‖_∞ / ‖u₀‖₁`.
    pub max_normalized: f64,
    pub converged: bool,
}

/// Options for [`decay_scan`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DecayOptions {
    pub points_per_edge: usize,
    pub quadrature: QuadratureSpec,
}

impl Default for DecayOptions {
    fn default() -> Self {
        Self {
            points_per_edge: 600,
            quadrature: QuadratureSpec {
                check: false,
                ..QuadratureSpec::default()
            },
        }
    }
}

/// Sup norms of `e^{-itH} P u₀` on a moving window and the least-squares
/// fit `log ‖u(t)‖_∞ ≈ log C - β log t` over `t ≥ 1`.
pub fn decay_scan(tree: &MetricTree, u0: &GraphFunction, times: &[f64], opts: DecayOptions) -> Result<DecayReport> {
    check_resonance(tree)?;
    let mut rows = Vec::new();
    let mut converged = true;
    for &t in times {
        let x_end = window_end(u0, t, 4.0);
        let samples = edge_grid(tree, x_end, f64::INFINITY, opts.points_per_edge);
        let mut req = EvolutionRequest::new(tree, u0.clone(), vec![t], samples);
        req.quadrature = opts.quadrature;
        let ev = evolve_dispersive(&req)?;
        converged &= ev.quadrature.converged;
        let sup = ev.values[0].iter().map(|z| z.norm()).fold(0.0, f64::max);
        rows.push(DecayRow {
            t,
            sup,
            sqrt_t_sup: t.abs().sqrt() * sup,
            window_tail: window_tail(u0, t, x_end),
        });
    }
    let fit: Vec<(f64, f64)> = rows.iter().filter(|r| r.t >= 1.0).map(|r| (r.t.ln(), r.sup.ln())).collect();
    let (beta, constant, fit_residual) = if fit.len() >= 2 {
        let n = fit.len() as f64;
        let mx = fit.iter().map(|p| p.0).sum::<f64>() / n;
        let my = fit.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = fit.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = fit.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let slope = sxy / sxx;
        let icpt = my - slope * mx;
        let res = (fit.iter().map(|p| (p.1 - icpt - slope * p.0).powi(2)).sum::<f64>() / n).sqrt();
        (-slope, icpt.exp(), res)
    } else {
        (f64::NAN, f64::NAN, f64::NAN)
    };
    let l1_norm = u0.norm(tree, Norm::L1);
    let max_normalized = rows.iter().map(|r| r.sqrt_t_sup).fold(0.0, f64::max) / l1_norm;
    Ok(DecayReport {
        rows,
        beta,
        constant,
        fit_residual,
        l1_norm,
        max_normalized,
        converged,
    })
}

/// Largest free-evolved packet envelope at distance `x_end` from the origin.
fn window_tail(u0: &GraphFunction, t: f64, x_end: f64) -> f64 {
    u0.packets
        .iter()
        .flatten()
        .map(|p| {
            let s4 = p.width.powi(4) + 4.0 * t * t;
            let amp = p.amplitude.norm() * (p.width * p.width / s4.sqrt()).sqrt();
            let d = (x_end - p.center.abs() - 2.0 * p.wavenumber.abs() * t.abs()).max(0.0);
            amp * (-(p.width * p.width) * d * d / (2.0 * s4)).exp()
        })
        .fold(0.0, f64::max)
}
