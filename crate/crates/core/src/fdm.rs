//! Crank–Nicolson reference solver on a discretized, truncated tree.
//!
//! Each edge carries a uniform grid; infinite edges are cut at a finite
//! length with a zero boundary value. The discrete operator is `H_h = M⁻¹K`
//! with the lumped mass `M` (interior nodes `h_e`, vertices `Σ h_e / 2`) and
//! the stiffness `K` of the quadratic form
//! `Σ_e Σ_i |u_{i+1} - u_i|² / h_e + Σ_v α(v) |u(v)|²`. `K` is symmetric, so
//! `H_h` is self-adjoint in the `M` inner product and each step conserves
//! `Σ M |u|²`. At a vertex the scheme is consistent with continuity and
//! `Σ ∂_n u(v) = α(v) u(v)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::function::{CompositeFunction, GraphFunction};
use crate::graph::MetricTree;
use crate::propagator::{evolve_dispersive, evolve_full, grid_l2_norm, packet_speed, EvolutionRequest, QuadratureSpec};
use crate::spectral::find_eigenvalues;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiscreteEdge {
    pub from: usize,
    pub to: Option<usize>,
    /// Grid length (the truncation length for infinite edges).
    pub length: f64,
    pub segments: usize,
    pub h: f64,
    offset: usize,
}

impl DiscreteEdge {
    fn interior(&self) -> usize {
        self.segments - 1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiscreteTree {
    pub edges: Vec<DiscreteEdge>,
    pub alpha: Vec<f64>,
    pub vertex_mass: Vec<f64>,
    pub truncation: f64,
    size: usize,
}

impl DiscreteTree {
    /// Grid with spacing at most `h` on every edge; infinite edges are cut at
    /// `truncation`.
    pub fn new(tree: &MetricTree, h: f64, truncation: f64) -> Result<Self> {
        if !(h > 0.0 && truncation > 0.0) {
            return Err(Error::InvalidArgument("grid spacing and truncation must be positive".into()));
        }
        if let Some(min_l) = tree.internal_edges().map(|e| tree.edges()[e].length).reduce(f64::min) {
            if h > min_l / 16.0 {
                return Err(Error::InvalidArgument(format!(
                    "grid spacing {h} exceeds min edge length / 16 = {}",
                    min_l / 16.0
                )));
            }
        }
        let nv = tree.vertex_count();
        let mut offset = nv;
        let mut edges = Vec::new();
        let mut vertex_mass = vec![0.0; nv];
        for e in tree.edges() {
            let length = if e.is_infinite() { truncation } else { e.length };
            let segments = ((length / h).ceil() as usize).max(2);
            let he = length / segments as f64;
            vertex_mass[e.from] += 0.5 * he;
            if let Some(t) = e.to {
                vertex_mass[t] += 0.5 * he;
            }
            edges.push(DiscreteEdge {
                from: e.from,
                to: e.to,
                length,
                segments,
                h: he,
                offset,
            });
            offset += segments - 1;
        }
        Ok(Self {
            edges,
            alpha: tree.vertices().iter().map(|v| v.alpha).collect(),
            vertex_mass,
            truncation,
            size: offset,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn vertex_count(&self) -> usize {
        self.alpha.len()
    }

    /// Diagonal of the lumped mass matrix.
    pub fn mass_diagonal(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.size];
        m[..self.vertex_count()].copy_from_slice(&self.vertex_mass);
        for e in &self.edges {
            for i in 0..e.interior() {
                m[e.offset + i] = e.h;
            }
        }
        m
    }

    /// Value at grid node `i` (`0..=segments`) of edge `e`.
    fn node(&self, u: &[Complex64], e: usize, i: usize) -> Complex64 {
        let ed = &self.edges[e];
        if i == 0 {
            u[ed.from]
        } else if i == ed.segments {
            ed.to.map_or(ZERO, |t| u[t])
        } else {
            u[ed.offset + i - 1]
        }
    }

    /// Stiffness action `K u`.
    pub fn apply_k(&self, u: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![ZERO; self.size];
        for v in 0..self.vertex_count() {
            out[v] = self.alpha[v] * u[v];
        }
        for (e, ed) in self.edges.iter().enumerate() {
            let inv = 1.0 / ed.h;
            for i in 0..ed.segments {
                let (a, b) = (self.node(u, e, i), self.node(u, e, i + 1));
                let flux = (a - b) * inv;
                self.add_node(&mut out, e, i, flux);
                self.add_node(&mut out, e, i + 1, -flux);
            }
        }
        out
    }

    fn add_node(&self, out: &mut [Complex64], e: usize, i: usize, v: Complex64) {
        let ed = &self.edges[e];
        if i == 0 {
            out[ed.from] += v;
        } else if i == ed.segments {
            if let Some(t) = ed.to {
                out[t] += v;
            }
        } else {
            out[ed.offset + i - 1] += v;
        }
    }

    /// `H_h u = M⁻¹ K u`.
    pub fn apply_h(&self, u: &[Complex64]) -> Vec<Complex64> {
        let m = self.mass_diagonal();
        self.apply_k(u).into_iter().zip(m).map(|(k, m)| k / m).collect()
    }

    /// `Σ M u conj(v)`.
    pub fn inner(&self, u: &[Complex64], v: &[Complex64]) -> Complex64 {
        self.mass_diagonal()
            .iter()
            .zip(u.iter().zip(v))
            .map(|(m, (a, b))| m * a * b.conj())
            .sum()
    }

    pub fn mass(&self, u: &[Complex64]) -> f64 {
        self.inner(u, u).re
    }

    /// Samples `f(edge, x)` at the nodes; vertex values average the incident
    /// edges.
    pub fn sample(&self, f: impl Fn(usize, f64) -> Complex64) -> Vec<Complex64> {
        let mut u = vec![ZERO; self.size];
        let mut count = vec![0usize; self.vertex_count()];
        for (e, ed) in self.edges.iter().enumerate() {
            u[ed.from] += f(e, 0.0);
            count[ed.from] += 1;
            if let Some(t) = ed.to {
                u[t] += f(e, ed.length);
                count[t] += 1;
            }
            for i in 1..ed.segments {
                u[ed.offset + i - 1] = f(e, ed.h * i as f64);
            }
        }
        for v in 0..self.vertex_count() {
            u[v] /= count[v] as f64;
        }
        u
    }

    /// Piecewise linear interpolation on edge `e`.
    pub fn interpolate(&self, u: &[Complex64], e: usize, x: f64) -> Complex64 {
        let ed = &self.edges[e];
        if x >= ed.length {
            return self.node(u, e, ed.segments);
        }
        let s = (x / ed.h).max(0.0);
        let i = (s.floor() as usize).min(ed.segments - 1);
        let f = s - i as f64;
        self.node(u, e, i) * (1.0 - f) + self.node(u, e, i + 1) * f
    }

    /// Node coordinates `(edge, x)` with `x ≤ x_max`, every `stride`-th node.
    pub fn nodes(&self, x_max: f64, stride: usize) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        for (e, ed) in self.edges.iter().enumerate() {
            let mut i = 0;
            while i <= ed.segments {
                let x = ed.h * i as f64;
                if x > x_max {
                    break;
                }
                out.push((e, x));
                i += stride.max(1);
            }
        }
        out
    }
}

/// Precomputed factorization of `M + i(dt/2)K`.
pub struct CnStepper<'a> {
    grid: &'a DiscreteTree,
    theta: f64,
    mass: Vec<f64>,
    /// Thomas factors per edge: modified super-diagonal and pivots.
    thomas: Vec<(Vec<Complex64>, Vec<Complex64>)>,
    /// `T_e⁻¹ B_e` for the initial and terminal vertex couplings.
    psi_from: Vec<Vec<Complex64>>,
    psi_to: Vec<Vec<Complex64>>,
    schur: nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl<'a> CnStepper<'a> {
    pub fn new(grid: &'a DiscreteTree, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument("time step must be positive".into()));
        }
        let theta = 0.5 * dt;
        let i_theta = Complex64::new(0.0, theta);
        let mass = grid.mass_diagonal();
        let nv = grid.vertex_count();
        let mut thomas = Vec::new();
        let mut psi_from = Vec::new();
        let mut psi_to = Vec::new();
        let mut schur = DMatrix::from_element(nv, nv, ZERO);
        for v in 0..nv {
            schur[(v, v)] = mass[v] + i_theta * grid.alpha[v];
        }
        for ed in &grid.edges {
            let n = ed.interior();
            let diag = ed.h + i_theta * (2.0 / ed.h);
            let off = -i_theta / ed.h;
            let mut cp = vec![ZERO; n];
            let mut piv = vec![ZERO; n];
            for i in 0..n {
                piv[i] = if i == 0 { diag } else { diag - off * cp[i - 1] };
                cp[i] = off / piv[i];
            }
            let factors = (cp, piv);
            let mut b_from = vec![ZERO; n];
            b_from[0] = off;
            let pf = thomas_solve(&factors, off, &b_from);
            let pt = if ed.to.is_some() {
                let mut b_to = vec![ZERO; n];
                b_to[n - 1] = off;
                thomas_solve(&factors, off, &b_to)
            } else {
                Vec::new()
            };
            // Vertex rows: diagonal stiffness plus the eliminated interior.
            let k = i_theta / ed.h;
            schur[(ed.from, ed.from)] += k - off * pf[0];
            if let Some(t) = ed.to {
                schur[(t, t)] += k - off * pt[n - 1];
                schur[(ed.from, t)] -= off * pt[0];
                schur[(t, ed.from)] -= off * pf[n - 1];
            }
            thomas.push(factors);
            psi_from.push(pf);
            psi_to.push(pt);
        }
        let schur = schur.lu();
        if !(schur.determinant().norm() > 0.0) {
            return Err(Error::Singular {
                omega: Complex64::new(0.0, 0.0),
                condition: f64::INFINITY,
            });
        }
        Ok(Self {
            grid,
            theta,
            mass,
            thomas,
            psi_from,
            psi_to,
            schur,
        })
    }

    /// One step `(M + iθK) u⁺ = (M - iθK) u`.
    pub fn step(&self, u: &[Complex64]) -> Vec<Complex64> {
        let g = self.grid;
        let ku = g.apply_k(u);
        let i_theta = Complex64::new(0.0, self.theta);
        let r: Vec<Complex64> = u.iter().zip(&ku).zip(&self.mass).map(|((a, k), m)| m * a - i_theta * k).collect();
        let nv = g.vertex_count();
        let mut phis = Vec::with_capacity(g.edges.len());
        let mut rv = DVector::from_iterator(nv, r[..nv].iter().copied());
        for (e, ed) in g.edges.iter().enumerate() {
            let off = -i_theta / ed.h;
            let n = ed.interior();
            let phi = thomas_solve(&self.thomas[e], off, &r[ed.offset..ed.offset + n]);
            rv[ed.from] -= off * phi[0];
            if let Some(t) = ed.to {
                rv[t] -= off * phi[n - 1];
            }
            phis.push(phi);
        }
        let uv = self.schur.solve(&rv).expect("factorized vertex system");
        let mut out = vec![ZERO; g.size()];
        for v in 0..nv {
            out[v] = uv[v];
        }
        for (e, ed) in g.edges.iter().enumerate() {
            let (a, b) = (uv[ed.from], ed.to.map_or(ZERO, |t| uv[t]));
            for i in 0..ed.interior() {
                let mut w = phis[e][i] - self.psi_from[e][i] * a;
                if ed.to.is_some() {
                    w -= self.psi_to[e][i] * b;
                }
                out[ed.offset + i] = w;
            }
        }
        out
    }
}

fn thomas_solve(factors: &(Vec<Complex64>, Vec<Complex64>), off: Complex64, rhs: &[Complex64]) -> Vec<Complex64> {
    let (cp, piv) = factors;
    let n = rhs.len();
    let mut d = vec![ZERO; n];
    for i in 0..n {
        d[i] = if i == 0 {
            rhs[0] / piv[0]
        } else {
            (rhs[i] - off * d[i - 1]) / piv[i]
        };
    }
    for i in (0..n.saturating_sub(1)).rev() {
        d[i] = d[i] - cp[i] * d[i + 1];
    }
    d
}

/// A single Crank–Nicolson step.
pub fn cn_step(grid: &DiscreteTree, state: &[Complex64], dt: f64) -> Result<Vec<Complex64>> {
    Ok(CnStepper::new(grid, dt)?.step(state))
}

/// Iterates `round(t / dt)` steps of size `t / round(t / dt)`.
pub fn evolve_cn(grid: &DiscreteTree, u0: &[Complex64], t: f64, dt: f64) -> Result<Vec<Complex64>> {
    Ok(evolve_cn_times(grid, u0, &[t], dt)?.pop().expect("one time"))
}

/// States at each of the increasing times `ts`, stepping with size close to
/// `dt` between consecutive times.
pub fn evolve_cn_times(grid: &DiscreteTree, u0: &[Complex64], ts: &[f64], dt: f64) -> Result<Vec<Vec<Complex64>>> {
    let mut out = Vec::new();
    let mut u = u0.to_vec();
    let mut now = 0.0;
    for &t in ts {
        if !(t >= now) {
            return Err(Error::InvalidArgument("oracle times must be increasing and nonnegative".into()));
        }
        let span = t - now;
        let steps = (span / dt).round().max(if span > 0.0 { 1.0 } else { 0.0 }) as usize;
        if steps > 0 {
            let stepper = CnStepper::new(grid, span / steps as f64)?;
            for _ in 0..steps {
                u = stepper.step(&u);
            }
        }
        now = t;
        out.push(u.clone());
    }
    Ok(out)
}

/// Truncation length `4 (R + v t_max)`: `R` bounds the data support, `v` the
/// group velocity.
pub fn safe_truncation(u0: &GraphFunction, t_max: f64) -> f64 {
    let support = u0
        .packets
        .iter()
        .flatten()
        .map(|p| p.center.abs() + 8.0 * p.width)
        .fold(1.0, f64::max);
    4.0 * (support + packet_speed(u0, 4.0) * t_max)
}

/// Largest time covered by a truncation length under the same rule.
pub fn safe_horizon(u0: &GraphFunction, truncation: f64) -> f64 {
    let support = u0
        .packets
        .iter()
        .flatten()
        .map(|p| p.center.abs() + 8.0 * p.width)
        .fold(1.0, f64::max);
    ((truncation / 4.0 - support) / packet_speed(u0, 4.0)).max(0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleRow {
    pub t: f64,
    pub relative_l2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleReport {
    pub rows: Vec<OracleRow>,
    pub truncation: f64,
    pub safe_horizon: f64,
    /// Largest relative drift of the discrete mass over the run.
    pub mass_drift: f64,
    pub h: f64,
    pub dt: f64,
}

/// Relative L² discrepancy between the spectral propagator and Crank–Nicolson
/// on the grid nodes within the moving window, at each of the increasing
/// times `ts`.
pub fn compare_with_propagator(
    tree: &MetricTree,
    u0: &GraphFunction,
    ts: &[f64],
    h: f64,
    dt: f64,
    truncation: Option<f64>,
    quadrature: QuadratureSpec,
) -> Result<OracleReport> {
    let t_max = ts.iter().fold(0.0f64, |m, t| m.max(*t));
    let truncation = truncation.unwrap_or_else(|| safe_truncation(u0, t_max));
    let grid = DiscreteTree::new(tree, h, truncation)?;
    let start = grid.sample(|e, x| u0.eval(e, x));
    let states = evolve_cn_times(&grid, &start, ts, dt)?;
    let m0 = grid.mass(&start);
    let mass_drift = states.iter().map(|s| (grid.mass(s) - m0).abs() / m0).fold(0.0, f64::max);
    let spec = find_eigenvalues(tree)?;
    let window = (truncation / 4.0).min(truncation);
    let samples = grid.nodes(window, 1);
    let mut req = EvolutionRequest::new(tree, CompositeFunction::from(u0.clone()), ts.to_vec(), samples.clone());
    req.quadrature = quadrature;
    let ev = if spec.eigen_omegas.is_empty() {
        evolve_dispersive(&req)?
    } else {
        evolve_full(&req, &spec)?
    };
    let rows = ts
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let cn: Vec<Complex64> = samples.iter().map(|&(e, x)| grid.interpolate(&states[i], e, x)).collect();
            let diff: Vec<Complex64> = cn.iter().zip(&ev.values[i]).map(|(a, b)| a - b).collect();
            OracleRow {
                t,
                relative_l2: grid_l2_norm(&samples, &diff) / grid_l2_norm(&samples, &ev.values[i]),
            }
        })
        .collect();
    Ok(OracleReport {
        rows,
        truncation,
        safe_horizon: safe_horizon(u0, truncation),
        mass_drift,
        h,
        dt,
    })
}
