//! Functions on a metric tree: sums of Gaussian wave packets per edge, and
//! exponential profiles `c e^{ωx} + c̃ e^{-ωx}` (eigenfunctions).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::graph::MetricTree;
use crate::quad::{gauss_exp_integral, integrate};

/// Packet envelopes are negligible (below 1e-14 of the peak) beyond this many
/// widths from the center: `sqrt(2 ln 1e14)`.
pub const TAIL_RADIUS: f64 = 8.0302;

/// `A exp(-(x - x0)² / (2σ²) + i k x)` in edge coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Packet {
    pub amplitude: Complex64,
    pub center: f64,
    pub width: f64,
    pub wavenumber: f64,
}

impl Packet {
    pub fn new(amplitude: Complex64, center: f64, width: f64, wavenumber: f64) -> Self {
        Self {
            amplitude,
            center,
            width,
            wavenumber,
        }
    }

    /// Real Gaussian with unit L¹ mass on the whole line.
    pub fn unit_mass(center: f64, width: f64, wavenumber: f64) -> Self {
        let a = 1.0 / (width * (2.0 * PI).sqrt());
        Self::new(Complex64::new(a, 0.0), center, width, wavenumber)
    }

    pub fn eval(&self, x: f64) -> Complex64 {
        let d = x - self.center;
        self.amplitude * Complex64::new(-d * d / (2.0 * self.width * self.width), self.wavenumber * x).exp()
    }

    pub fn support(&self) -> (f64, f64) {
        let r = TAIL_RADIUS * self.width;
        (self.center - r, self.center + r)
    }

    /// Exponent coefficients `(P, Q, R)` with the packet equal to
    /// `A exp(-P x² + Q x + R)`.
    fn quadratic(&self) -> (Complex64, Complex64, Complex64) {
        let s2 = self.width * self.width;
        (
            Complex64::new(0.5 / s2, 0.0),
            Complex64::new(self.center / s2, self.wavenumber),
            Complex64::new(-self.center * self.center / (2.0 * s2), 0.0),
        )
    }

    /// `(½ ∫_0^x packet(y) e^{-ω(x-y)} dy, ½ ∫_x^L packet(y) e^{-ω(y-x)} dy)`.
    pub fn t_halves(&self, omega: Complex64, x: f64, length: f64) -> (Complex64, Complex64) {
        let (p, q, r) = self.quadratic();
        let left = if x > 0.0 {
            gauss_exp_integral(p, q + omega, r - omega * x, 0.0, x)
        } else {
            Complex64::new(0.0, 0.0)
        };
        let right = gauss_exp_integral(p, q - omega, r + omega * x, x, length);
        (0.5 * self.amplitude * left, 0.5 * self.amplitude * right)
    }

    /// `½ ∫_0^L packet(y) e^{-ω|x-y|} dy`.
    pub fn t_integral(&self, omega: Complex64, x: f64, length: f64) -> Complex64 {
        let (l, r) = self.t_halves(omega, x, length);
        l + r
    }

    /// `∫_0^L packet(y) conj(c e^{ωy} + d e^{-ωy}) dy`.
    pub fn inner_exponential(&self, omega: Complex64, c: Complex64, d: Complex64, length: f64) -> Complex64 {
        let (p, q, r) = self.quadratic();
        let w = omega.conj();
        let mut s = d.conj() * gauss_exp_integral(p, q - w, r, 0.0, length);
        if c != Complex64::new(0.0, 0.0) {
            s += c.conj() * gauss_exp_integral(p, q + w, r, 0.0, length);
        }
        self.amplitude * s
    }

    /// Free Schrödinger evolution `e^{it∂²}` on the whole line of the packet
    /// restricted to `[0, L]` (extended by zero), evaluated at `x`.
    pub fn free_evolution_cut(&self, t: f64, x: f64, length: f64) -> Complex64 {
        let (p, q, r) = self.quadratic();
        let pt = p - Complex64::new(0.0, 0.25 / t);
        let qt = q - Complex64::new(0.0, x / (2.0 * t));
        let rt = r + Complex64::new(0.0, x * x / (4.0 * t));
        let kernel = 1.0 / Complex64::new(0.0, 4.0 * PI * t).sqrt();
        self.amplitude * kernel * gauss_exp_integral(pt, qt, rt, 0.0, length)
    }

    /// Free evolution of the packet on the whole line, closed form.
    pub fn free_evolution(&self, t: f64, x: f64) -> Complex64 {
        let s2 = Complex64::new(self.width * self.width, 2.0 * t);
        let ratio = (self.width * self.width / s2).sqrt();
        let k = self.wavenumber;
        let d = Complex64::new(x - self.center, 0.0) - Complex64::new(0.0, k) * self.width * self.width;
        let base = Complex64::new(-k * k * self.width * self.width / 2.0, k * self.center);
        self.amplitude * ratio * (base - d * d / (2.0 * s2)).exp()
    }
}

/// Per-edge sums of packets; indexed by edge index of the owning tree.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphFunction {
    pub packets: Vec<Vec<Packet>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Norm {
    L1,
    L2,
    Inf,
}

impl GraphFunction {
    pub fn zero(tree: &MetricTree) -> Self {
        Self {
            packets: vec![Vec::new(); tree.edges().len()],
        }
    }

    pub fn with_packet(mut self, edge: usize, packet: Packet) -> Self {
        self.packets[edge].push(packet);
        self
    }

    pub fn is_zero(&self) -> bool {
        self.packets.iter().all(|p| p.is_empty())
    }

    pub fn eval(&self, edge: usize, x: f64) -> Complex64 {
        self.packets[edge].iter().map(|p| p.eval(x)).sum()
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            packets: self
                .packets
                .iter()
                .map(|ps| {
                    ps.iter()
                        .map(|p| Packet {
                            amplitude: p.amplitude * s,
                            ..*p
                        })
                        .collect()
                })
                .collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            packets: self
                .packets
                .iter()
                .zip(&other.packets)
                .map(|(a, b)| a.iter().chain(b).copied().collect())
                .collect(),
        }
    }

    /// `t_e(x, ω) = ½ ∫_{I_e} u(y) e^{-ω|x-y|} dy`.
    pub fn t_integral(&self, tree: &MetricTree, edge: usize, omega: Complex64, x: f64) -> Complex64 {
        let l = tree.edges()[edge].length;
        self.packets[edge].iter().map(|p| p.t_integral(omega, x, l)).sum()
    }

    /// `∂_x t_e(x, ω)`.
    pub fn t_derivative(&self, tree: &MetricTree, edge: usize, omega: Complex64, x: f64) -> Complex64 {
        let l = tree.edges()[edge].length;
        self.packets[edge]
            .iter()
            .map(|p| {
                let (a, b) = p.t_halves(omega, x, l);
                omega * (b - a)
            })
            .sum()
    }

    /// Union of packet supports on edge `e`, clipped to the edge.
    pub fn support_intervals(&self, tree: &MetricTree, edge: usize) -> Vec<(f64, f64)> {
        let l = tree.edges()[edge].length;
        let mut iv: Vec<(f64, f64)> = self.packets[edge]
            .iter()
            .map(|p| {
                let (a, b) = p.support();
                (a.max(0.0), b.min(l))
            })
            .filter(|(a, b)| b > a)
            .collect();
        iv.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for (a, b) in iv {
            match merged.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        merged
    }

    /// L^p norm over the tree (sum over edges of per-edge norms).
    pub fn norm(&self, tree: &MetricTree, which: Norm) -> f64 {
        match which {
            Norm::L1 => self.edge_integrals(tree, |z| z.norm()),
            Norm::L2 => self.edge_integrals(tree, |z| z.norm_sqr()).sqrt(),
            Norm::Inf => (0..self.packets.len()).map(|e| self.edge_sup(tree, e)).fold(0.0, f64::max),
        }
    }

    fn edge_integrals(&self, tree: &MetricTree, g: impl Fn(Complex64) -> f64) -> f64 {
        let mut total = 0.0;
        for e in 0..self.packets.len() {
            for (a, b) in self.support_intervals(tree, e) {
                total += integrate(|x| Complex64::new(g(self.eval(e, x)), 0.0), a, b, 1e-12, 0.0).re;
            }
        }
        total
    }

    fn edge_sup(&self, tree: &MetricTree, e: usize) -> f64 {
        let min_w = self.packets[e].iter().map(|p| p.width).fold(f64::INFINITY, f64::min);
        let mut best = 0.0f64;
        for (a, b) in self.support_intervals(tree, e) {
            let step = (min_w / 16.0).min((b - a) / 8.0);
            let n = ((b - a) / step).ceil() as usize;
            let h = (b - a) / n as f64;
            let f = |x: f64| self.eval(e, x).norm();
            let mut arg = a;
            let mut val = f(a);
            for i in 1..=n {
                let x = a + h * i as f64;
                let v = f(x);
                if v > val {
                    val = v;
                    arg = x;
                }
            }
            let (lo, hi) = ((arg - h).max(a), (arg + h).min(b));
            best = best.max(golden_max(f, lo, hi).max(val));
        }
        best
    }
}

/// Golden-section maximization of a unimodal function on `[a, b]`.
pub(crate) fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
        if (b - a).abs() < 1e-12 * (1.0 + a.abs()) {
            break;
        }
    }
    fc.max(fd)
}

/// `c_e e^{ωx} + c̃_e e^{-ωx}` on every edge (`c_e = 0` on infinite edges).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpProfile {
    pub omega: f64,
    pub grow: Vec<Complex64>,
    pub decay: Vec<Complex64>,
}

impl ExpProfile {
    pub fn eval(&self, edge: usize, x: f64) -> Complex64 {
        self.grow[edge] * (self.omega * x).exp() + self.decay[edge] * (-self.omega * x).exp()
    }

    /// Closed-form squared L² norm over the tree.
    pub fn norm_sqr(&self, tree: &MetricTree) -> f64 {
        let w = self.omega;
        tree.edges()
            .iter()
            .enumerate()
            .map(|(e, edge)| {
                let (c, d) = (self.grow[e], self.decay[e]);
                if edge.is_infinite() {
                    d.norm_sqr() / (2.0 * w)
                } else {
                    let l = edge.length;
                    c.norm_sqr() * (2.0 * w * l).exp_m1() / (2.0 * w) - d.norm_sqr() * (-2.0 * w * l).exp_m1() / (2.0 * w)
                        + 2.0 * (c * d.conj()).re * l
                }
            })
            .sum()
    }

    /// `⟨self, other⟩` in L²(Γ), closed form.
    pub fn inner(&self, other: &ExpProfile, tree: &MetricTree) -> Complex64 {
        let rate = |r: f64, l: f64| -> f64 {
            if r.abs() < 1e-300 {
                l
            } else if l.is_infinite() {
                -1.0 / r
            } else {
                (r * l).exp_m1() / r
            }
        };
        let (a, b) = (self.omega, other.omega);
        tree.edges()
            .iter()
            .enumerate()
            .map(|(e, edge)| {
                let l = edge.length;
                let (c1, d1) = (self.grow[e], self.decay[e]);
                let (c2, d2) = (other.grow[e].conj(), other.decay[e].conj());
                let mut s = d1 * d2 * rate(-a - b, l);
                if !edge.is_infinite() {
                    s += c1 * c2 * rate(a + b, l) + c1 * d2 * rate(a - b, l) + d1 * c2 * rate(b - a, l);
                }
                s
            })
            .sum()
    }

    /// `⟨u, self⟩` for a packet function `u`.
    pub fn inner_with(&self, u: &GraphFunction, tree: &MetricTree) -> Complex64 {
        let w = Complex64::new(self.omega, 0.0);
        u.packets
            .iter()
            .enumerate()
            .flat_map(|(e, ps)| {
                let l = tree.edges()[e].length;
                ps.iter().map(move |p| p.inner_exponential(w, self.grow[e], self.decay[e], l))
            })
            .sum()
    }
}

/// Packets plus a finite combination of exponential profiles.
#[derive(Clone, Debug, PartialEq)]
pub struct CompositeFunction {
    pub packets: GraphFunction,
    pub modes: Vec<(Complex64, ExpProfile)>,
}

impl From<GraphFunction> for CompositeFunction {
    fn from(packets: GraphFunction) -> Self {
        Self {
            packets,
            modes: Vec::new(),
        }
    }
}

impl CompositeFunction {
    pub fn eval(&self, edge: usize, x: f64) -> Complex64 {
        self.packets.eval(edge, x) + self.modes.iter().map(|(a, m)| a * m.eval(edge, x)).sum::<Complex64>()
    }

    /// `⟨self, φ⟩ = ∫ self · conj(φ)`.
    pub fn inner_profile(&self, phi: &ExpProfile, tree: &MetricTree) -> Complex64 {
        phi.inner_with(&self.packets, tree) + self.modes.iter().map(|(a, m)| a * m.inner(phi, tree)).sum::<Complex64>()
    }

    /// L² norm, with closed forms for every term involving a profile.
    pub fn l2_norm(&self, tree: &MetricTree) -> f64 {
        let mut s = self.packets.norm(tree, Norm::L2).powi(2);
        for (a, m) in &self.modes {
            s += 2.0 * (a.conj() * m.inner_with(&self.packets, tree)).re;
            for (b, n) in &self.modes {
                s += (a * b.conj() * m.inner(n, tree)).re;
            }
        }
        s.max(0.0).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_edge_tree() -> MetricTree {
        MetricTree::star(0.0, 2).unwrap()
    }

    #[test]
    fn gaussian_l2_norm() {
        let t = one_edge_tree();
        let f = GraphFunction::zero(&t).with_packet(0, Packet::new(Complex64::new(1.0, 0.0), 5.0, 1.0, 0.0));
        let expected = PI.sqrt().sqrt();
        assert!((f.norm(&t, Norm::L2) - expected).abs() < 1e-8 * expected);
        assert!((f.norm(&t, Norm::L2) - 1.33133).abs() < 1e-5);
    }

    #[test]
    fn zero_function_norms() {
        let t = one_edge_tree();
        let f = GraphFunction::zero(&t);
        for n in [Norm::L1, Norm::L2, Norm::Inf] {
            assert_eq!(f.norm(&t, n), 0.0);
        }
    }

    #[test]
    fn two_edges_double_l2_mass() {
        let t = one_edge_tree();
        let p = Packet::new(Complex64::new(0.7, 0.2), 12.0, 1.5, 2.0);
        let one = GraphFunction::zero(&t).with_packet(0, p);
        let two = one.clone().with_packet(1, p);
        let r = two.norm(&t, Norm::L2) / one.norm(&t, Norm::L2);
        assert!((r - 2f64.sqrt()).abs() < 1e-8);
    }

    #[test]
    fn sup_norm_of_modulated_packet() {
        let t = one_edge_tree();
        let f = GraphFunction::zero(&t).with_packet(0, Packet::new(Complex64::new(0.0, 2.5), 9.0, 0.4, 7.0));
        assert!((f.norm(&t, Norm::Inf) - 2.5).abs() < 1e-10);
        // L¹ of a Gaussian: |A| σ √(2π)
        assert!((f.norm(&t, Norm::L1) - 2.5 * 0.4 * (2.0 * PI).sqrt()).abs() < 1e-8);
    }

    #[test]
    fn t_integral_matches_quadrature() {
        let p = Packet::new(Complex64::new(1.0, -0.5), 2.0, 0.8, 1.3);
        for (omega, x, l) in [
            (Complex64::new(1.0, 0.3), 1.1, f64::INFINITY),
            (Complex64::new(0.0, 4.0), 0.0, f64::INFINITY),
            (Complex64::new(0.2, -2.0), 2.5, 3.0),
            (Complex64::new(-0.4, 1.0), 0.7, 2.0),
        ] {
            let exact = p.t_integral(omega, x, l);
            let hi = if l.is_finite() { l } else { p.support().1 };
            let num = 0.5
                * (integrate(|y| p.eval(y) * (-omega * (x - y).abs()).exp(), 0.0, x, 1e-14, 0.0)
                    + integrate(|y| p.eval(y) * (-omega * (x - y).abs()).exp(), x, hi, 1e-14, 0.0));
            assert!((exact - num).norm() < 1e-11, "{exact} {num}");
        }
    }

    #[test]
    fn cut_free_evolution_matches_closed_form_inside() {
        let p = Packet::new(Complex64::new(1.0, 0.0), 30.0, 1.0, -1.0);
        for t in [0.01, 0.5, 3.0] {
            for x in [25.0, 29.0, 31.5] {
                let a = p.free_evolution_cut(t, x, f64::INFINITY);
                let b = p.free_evolution(t, x);
                assert!((a - b).norm() < 1e-12, "t={t} x={x}: {a} {b}");
            }
        }
    }

    #[test]
    fn free_evolution_sup_norm_law() {
        let p = Packet::new(Complex64::new(1.0, 0.0), 0.0, 1.0, 0.0);
        for t in [0.5, 2.0, 10.0] {
            let peak = p.free_evolution(t, 0.0).norm();
            assert!((peak - (1.0 + 4.0 * t * t).powf(-0.25)).abs() < 1e-14);
        }
    }

    #[test]
    fn exp_profile_norm_matches_quadrature() {
        let t = MetricTree::line(&[-1.0, -1.0], &[1.5]).unwrap();
        let prof = ExpProfile {
            omega: 0.8,
            grow: vec![Complex64::new(0.0, 0.0), Complex64::new(0.3, 0.0), Complex64::new(0.0, 0.0)],
            decay: vec![Complex64::new(1.0, 0.0), Complex64::new(0.5, 0.1), Complex64::new(0.9, 0.0)],
        };
        let mut num = 0.0;
        for (e, edge) in t.edges().iter().enumerate() {
            let hi = if edge.is_infinite() { 60.0 } else { edge.length };
            num += integrate(|x| Complex64::new(prof.eval(e, x).norm_sqr(), 0.0), 0.0, hi, 1e-14, 0.0).re;
        }
        assert!((prof.norm_sqr(&t) - num).abs() < 1e-12);
        assert!((prof.inner(&prof, &t).re - num).abs() < 1e-12);
    }
}
