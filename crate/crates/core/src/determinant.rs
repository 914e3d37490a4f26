//! Determinants of the resolvent system: direct evaluation, the attachment
//! recursion, pole clearing, zero counting at the origin and the related
//! diagnostics.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::contour::{stable_zero_count, taylor_coefficients, winding_number};
use crate::error::{Error, Result};
use crate::graph::{Endpoint, MetricTree};
use crate::resolvent::{determinant, hadamard_bound, Kind, Layout, RowForm};

/// Trapezoid nodes used for winding numbers.
pub const CONTOUR_NODES: usize = 2048;
/// Trapezoid nodes used for Taylor coefficients.
const TAYLOR_NODES: usize = 512;

fn one() -> Complex64 {
    Complex64::new(1.0, 0.0)
}

/// `det D(ω)` of the normalized system.
pub fn det_direct(tree: &MetricTree, omega: Complex64) -> Result<Complex64> {
    if omega == Complex64::new(0.0, 0.0) {
        return Err(Error::ZeroOmega);
    }
    Ok(determinant(&Layout::full(tree).matrix(tree, omega, RowForm::Normalized)?))
}

/// Determinant of a stage view, optionally with one external column flipped.
pub fn det_stage(tree: &MetricTree, stage: usize, omega: Complex64, form: RowForm, flip: Option<usize>) -> Result<Complex64> {
    Ok(determinant(&Layout::new(tree, stage).matrix_flipped(tree, omega, form, flip)?))
}

/// `det D(ω) · Π_{α(v) ≠ 0} (ω + α(v))`, entire in `ω`.
pub fn cleared_det(tree: &MetricTree, omega: Complex64) -> Complex64 {
    cleared_det_in(&Layout::full(tree), tree, omega)
}

pub(crate) fn cleared_det_in(layout: &Layout, tree: &MetricTree, omega: Complex64) -> Complex64 {
    determinant(&layout.matrix(tree, omega, RowForm::Cleared).expect("cleared rows have no poles"))
}

/// `det D̃^{(e)} / det D` for an external edge of the given view.
pub fn ratio_by_flip(tree: &MetricTree, layout: &Layout, edge: usize, omega: Complex64) -> Result<Complex64> {
    let d = determinant(&layout.matrix(tree, omega, RowForm::Normalized)?);
    let f = determinant(&layout.matrix_flipped(tree, omega, RowForm::Normalized, Some(edge))?);
    Ok(f / d)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DetState {
    pub omega: Complex64,
    pub det: Complex64,
    /// `det D̃^{(e)}/det D` for every external edge, by edge index.
    pub ratios: BTreeMap<usize, Complex64>,
    /// Determinant after each construction stage.
    pub stage_dets: Vec<Complex64>,
}

/// Determinant by the attachment recursion.
///
/// Each step multiplies by `s_p (n ω + α)/(ω + α) e^{ωa}` and by
/// `1 - ((n-2)ω + α)/(nω + α) e^{-2ωa} ρ`, where `ρ` is the ratio of the
/// attachment edge in the previous stage and `s_p` the sign of the column
/// move. Ratios of the new edges follow from the same Laplace expansion;
/// ratios of older edges are computed by column flips when needed.
pub fn det_recursive(tree: &MetricTree, omega: Complex64) -> Result<DetState> {
    if omega == Complex64::new(0.0, 0.0) {
        return Err(Error::ZeroOmega);
    }
    let full = Layout::full(tree);
    full.check_poles(tree, omega)?;
    let signs = full.step_signs();

    let root = tree.root();
    let (n1, a1) = (tree.degree(root) as f64, tree.alpha(root));
    let mut det = (n1 * omega + a1) / (omega + a1);
    let r1 = ((n1 - 2.0) * omega + a1) / (n1 * omega + a1);
    let mut tracked: BTreeMap<usize, Complex64> = tree.incidence(root).iter().map(|p| (p.edge, r1)).collect();
    let mut stage_dets = vec![det];

    for (i, step) in tree.build().iter().enumerate() {
        let rho = match tracked.get(&step.edge) {
            Some(r) => *r,
            None => ratio_by_flip(tree, &Layout::new(tree, i + 1), step.edge, omega)?,
        };
        let n = tree.degree(step.vertex) as f64;
        let alpha = tree.alpha(step.vertex);
        let a = tree.edges()[step.edge].length;
        let decay = (-2.0 * omega * a).exp() * rho;
        let num_n = n * omega + alpha;
        let num_n2 = (n - 2.0) * omega + alpha;
        let num_n4 = (n - 4.0) * omega + alpha;
        det = signs[i] * num_n / (omega + alpha) * (omega * a).exp() * det * (one() - num_n2 / num_n * decay);
        let new_ratio = (num_n2 - num_n4 * decay) / (num_n - num_n2 * decay);
        tracked = step.new_edges.iter().map(|&e| (e, new_ratio)).collect();
        stage_dets.push(det);
    }

    let mut ratios = BTreeMap::new();
    for e in full.external_edges() {
        let r = match tracked.get(&e) {
            Some(r) => *r,
            None => ratio_by_flip(tree, &full, e, omega)?,
        };
        ratios.insert(e, r);
    }
    Ok(DetState {
        omega,
        det,
        ratios,
        stage_dets,
    })
}

/// Starting radius for zero counting at the origin: inside the pole-free
/// disk, below the star zeros `-α/n` and below the exponential scale.
pub fn origin_radius(tree: &MetricTree) -> f64 {
    let max_deg = (0..tree.vertex_count()).map(|v| tree.degree(v)).max().unwrap_or(2) as f64;
    let mut r: f64 = 0.1;
    for v in tree.vertices() {
        if v.alpha != 0.0 {
            r = r.min(0.5 * v.alpha.abs() / max_deg);
        }
    }
    if let Some(a) = tree.max_finite_length() {
        r = r.min(0.5 / a);
    }
    r
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResonanceReport {
    pub zero_order: usize,
    pub p: usize,
    pub condition_holds: bool,
    /// `∂^{p-1}_ω` of the cleared determinant at 0.
    pub derivative_value: Complex64,
    pub radius: f64,
}

/// Order of the zero of the cleared determinant at `ω = 0`.
pub fn zero_order_at_origin(tree: &MetricTree) -> Result<ResonanceReport> {
    let layout = Layout::full(tree);
    let f = |w: Complex64| cleared_det_in(&layout, tree, w);
    let (m, r) = stable_zero_count(f, origin_radius(tree), CONTOUR_NODES)?;
    let p = tree.vertex_count();
    let coeffs = taylor_coefficients(f, r, CONTOUR_NODES, p - 1);
    let factorial: f64 = (1..p).map(|k| k as f64).product();
    Ok(ResonanceReport {
        zero_order: m,
        p,
        condition_holds: m + 1 == p,
        derivative_value: coeffs[p - 1] * factorial,
        radius: r,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EdgeRatioMax {
    pub edge: String,
    pub max_abs_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanReport {
    pub points: usize,
    pub min_abs_det: f64,
    pub argmin: Complex64,
    pub max_ratios: Vec<EdgeRatioMax>,
    pub violation: bool,
}

/// Scans `|det D|` and the external ratios on
/// `{s + iτ : |s| ≤ ε, δ ≤ |τ| ≤ τ_max}` with `n_tau` values of `|τ|` per
/// sign and `n_s` values of `s`.
pub fn strip_scan(tree: &MetricTree, delta: f64, eps: f64, tau_max: f64, n_tau: usize, n_s: usize) -> Result<ScanReport> {
    if !(delta > 0.0 && tau_max > delta && eps >= 0.0 && n_tau >= 2 && n_s >= 1) {
        return Err(Error::InvalidArgument("strip scan needs 0 < δ < τ_max, ε ≥ 0, n_tau ≥ 2".into()));
    }
    let layout = Layout::full(tree);
    let ext = layout.external_edges();
    let mut grid = Vec::with_capacity(2 * n_tau * n_s);
    for i in 0..n_s {
        let s = if n_s == 1 {
            0.0
        } else {
            -eps + 2.0 * eps * i as f64 / (n_s - 1) as f64
        };
        for j in 0..n_tau {
            let tau = delta + (tau_max - delta) * j as f64 / (n_tau - 1) as f64;
            grid.push(Complex64::new(s, tau));
            grid.push(Complex64::new(s, -tau));
        }
    }
    let rows: Vec<(Complex64, f64, Vec<f64>)> = grid
        .par_iter()
        .map(|&w| {
            let d = determinant(&layout.matrix(tree, w, RowForm::Normalized)?);
            let ratios = ext
                .iter()
                .map(|&e| {
                    let f = determinant(&layout.matrix_flipped(tree, w, RowForm::Normalized, Some(e))?);
                    Ok((f / d).norm())
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok((w, d.norm(), ratios))
        })
        .collect::<Result<_>>()?;
    let (argmin, min_abs_det) =
        rows.iter().map(|(w, d, _)| (*w, *d)).fold(
            (Complex64::new(0.0, 0.0), f64::INFINITY),
            |acc, x| if x.1 < acc.1 { x } else { acc },
        );
    let max_ratios: Vec<EdgeRatioMax> = ext
        .iter()
        .enumerate()
        .map(|(k, &e)| EdgeRatioMax {
            edge: tree.edges()[e].id.clone(),
            max_abs_ratio: rows.iter().map(|r| r.2[k]).fold(0.0, f64::max),
        })
        .collect();
    let violation = !(min_abs_det >= 1e-10) || max_ratios.iter().any(|r| !(r.max_abs_ratio < 1.0));
    Ok(ScanReport {
        points: grid.len(),
        min_abs_det,
        argmin,
        max_ratios,
        violation,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageProperty {
    pub stage: usize,
    pub edge: String,
    pub ratio_at_zero: Complex64,
    pub ratio_derivative_at_zero: Complex64,
    pub zero_order: usize,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropertyReport {
    pub stages: Vec<StageProperty>,
    pub all_hold: bool,
}

/// For positive strengths: at every construction stage `q` and every external
/// edge of that stage, `ratio(0) = 1`, `ratio'(0) < 0` and the zero order of
/// the stage determinant equals `q - 1`. Values at 0 come from the leading
/// Taylor coefficients of the cleared numerator and denominator.
pub fn appendix_a_checks(tree: &MetricTree) -> Result<PropertyReport> {
    if let Some(v) = tree.vertices().iter().find(|v| !(v.alpha > 0.0)) {
        return Err(Error::NonPositiveStrength(v.id.clone()));
    }
    let r0 = origin_radius(tree);
    let mut stages = Vec::new();
    for q in 1..=tree.vertex_count() {
        let layout = Layout::new(tree, q);
        let (m, r) = stable_zero_count(|w| cleared_det_in(&layout, tree, w), r0, CONTOUR_NODES)?;
        let den = taylor_coefficients(|w| cleared_det_in(&layout, tree, w), r, TAYLOR_NODES, q);
        for e in layout.external_edges() {
            let num = taylor_coefficients(
                |w| determinant(&layout.matrix_flipped(tree, w, RowForm::Cleared, Some(e)).unwrap()),
                r,
                TAYLOR_NODES,
                q,
            );
            let (d0, d1) = (den[q - 1], den[q]);
            let (n0, n1) = (num[q - 1], num[q]);
            let ratio0 = n0 / d0;
            let ratio1 = (n1 * d0 - n0 * d1) / (d0 * d0);
            let holds = (ratio0 - 1.0).norm() <= 1e-8 && ratio1.re < 0.0 && m + 1 == q;
            stages.push(StageProperty {
                stage: q,
                edge: tree.edges()[e].id.clone(),
                ratio_at_zero: ratio0,
                ratio_derivative_at_zero: ratio1,
                zero_order: m,
                holds,
            });
        }
    }
    let all_hold = stages.iter().all(|s| s.holds);
    Ok(PropertyReport { stages, all_hold })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NumeratorOrder {
    /// Edge whose free values are singled out.
    pub source: String,
    /// Replaced unknown.
    pub edge: String,
    pub kind: Kind,
    /// `None` when the coefficient function vanishes identically.
    pub zero_order: Option<usize>,
}

/// Zero orders at 0 of the Cramer-numerator coefficient functions: the
/// coefficient of the free values of edge `λ` (both endpoints summed for
/// internal edges) in `ω det M^{u}`, for every unknown `u`, cleared of poles.
pub fn numerator_orders(tree: &MetricTree) -> Result<Vec<NumeratorOrder>> {
    let layout = Layout::full(tree);
    let r0 = origin_radius(tree);
    let mut out = Vec::new();
    for lambda in 0..tree.edges().len() {
        for (j, u) in layout.columns().iter().copied().enumerate() {
            let f = |w: Complex64| {
                let mut m = layout.matrix(tree, w, RowForm::Cleared).unwrap();
                let g = layout.scaled_rhs(tree, w, RowForm::Cleared, |p: Endpoint| {
                    if p.edge == lambda {
                        one()
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                });
                m.set_column(j, &g);
                determinant(&m)
            };
            out.push(NumeratorOrder {
                source: tree.edges()[lambda].id.clone(),
                edge: tree.edges()[u.edge].id.clone(),
                kind: u.kind,
                zero_order: numerator_zero_order(&layout, tree, f, r0)?,
            });
        }
    }
    Ok(out)
}

fn numerator_zero_order<F>(layout: &Layout, tree: &MetricTree, f: F, r0: f64) -> Result<Option<usize>>
where
    F: Fn(Complex64) -> Complex64 + Sync,
{
    // Identically zero coefficient functions have no defined order.
    let probe = Complex64::from_polar(r0, 0.3);
    let scale = hadamard_bound(&layout.matrix(tree, probe, RowForm::Cleared)?).max(1.0);
    let peak = crate::contour::circle_nodes(r0, 64)
        .into_iter()
        .map(|w| f(w).norm())
        .fold(0.0, f64::max);
    if peak <= 1e-13 * scale {
        return Ok(None);
    }
    Ok(Some(stable_zero_count(f, r0, 1024)?.0))
}

/// Zero count of the cleared determinant inside `|ω| = r`.
pub fn zeros_inside(tree: &MetricTree, r: f64) -> Result<i64> {
    let layout = Layout::full(tree);
    winding_number(|w| cleared_det_in(&layout, tree, w), r, CONTOUR_NODES)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn star_closed_form() {
        let t = MetricTree::star(2.0, 3).unwrap();
        assert!((det_direct(&t, c(1.0, 0.0)).unwrap() - c(5.0 / 3.0, 0.0)).norm() < 1e-14);
        let free = MetricTree::star(0.0, 2).unwrap();
        for w in [c(0.3, 0.0), c(0.0, 2.0), c(1.0, -4.0)] {
            assert!((det_direct(&free, w).unwrap() - 2.0).norm() < 1e-14);
        }
    }

    #[test]
    fn star_ratio() {
        let t = MetricTree::star(1.0, 2).unwrap();
        let s = det_recursive(&t, c(1.0, 0.0)).unwrap();
        for r in s.ratios.values() {
            assert!((r - 1.0 / 3.0).norm() < 1e-15);
        }
        let flip = ratio_by_flip(&t, &Layout::full(&t), 1, c(1.0, 0.0)).unwrap();
        assert!((flip - 1.0 / 3.0).norm() < 1e-14);
        let free = MetricTree::star(0.0, 2).unwrap();
        assert!(det_recursive(&free, c(0.4, 1.0)).unwrap().ratios.values().all(|r| r.norm() == 0.0));
    }

    #[test]
    fn recursion_matches_direct_on_two_delta_line() {
        let t = MetricTree::line(&[1.0, 1.0], &[1.0]).unwrap();
        let w = c(1.0, 0.0);
        let a = det_direct(&t, w).unwrap();
        let b = det_recursive(&t, w).unwrap().det;
        assert!((a - b).norm() < 1e-12 * a.norm());
    }

    #[test]
    fn recursion_matches_direct_on_bushy_tree() {
        let t = MetricTree::star(1.0, 3)
            .unwrap()
            .attach_vertex("e2", 0.7, -0.5, 3)
            .unwrap()
            .attach_vertex("e1", 1.2, 2.0, 4)
            .unwrap()
            .attach_vertex("e4", 0.4, 0.3, 2)
            .unwrap();
        for w in [c(2.0, 0.1), c(0.3, -1.5), c(0.05, 4.0)] {
            let a = det_direct(&t, w).unwrap();
            let s = det_recursive(&t, w).unwrap();
            assert!((a - s.det).norm() < 1e-10 * a.norm(), "{a} vs {}", s.det);
            let full = Layout::full(&t);
            for (e, r) in &s.ratios {
                let direct = ratio_by_flip(&t, &full, *e, w).unwrap();
                assert!((direct - r).norm() < 1e-10 * direct.norm().max(1.0));
            }
        }
    }

    #[test]
    fn cleared_star_is_linear() {
        let t = MetricTree::star(2.0, 3).unwrap();
        for w in [c(0.0, 0.0), c(1.0, 2.0), c(-2.0, 0.0)] {
            assert!((cleared_det(&t, w) - (3.0 * w + 2.0)).norm() < 1e-13);
        }
    }

    #[test]
    fn single_vertex_has_no_zero_at_origin() {
        let t = MetricTree::star(-1.5, 3).unwrap();
        let r = zero_order_at_origin(&t).unwrap();
        assert_eq!(r.zero_order, 0);
        assert!(r.condition_holds);
        assert!((r.derivative_value - (-1.5)).norm() < 1e-12);
    }

    #[test]
    fn resonant_line_fails_condition() {
        let t = MetricTree::line(&[2.0, -1.0], &[0.5]).unwrap();
        let r = zero_order_at_origin(&t).unwrap();
        assert!(r.zero_order >= 2);
        assert!(!r.condition_holds);
    }

    #[test]
    fn positive_caterpillar_order() {
        let t = MetricTree::line(&[1.0, 1.0, 1.0], &[1.0, 2.0]).unwrap();
        let r = zero_order_at_origin(&t).unwrap();
        assert_eq!(r.zero_order, 2);
        assert!(r.condition_holds);
    }

    #[test]
    fn appendix_a_single_star() {
        let t = MetricTree::star(3.0, 2).unwrap();
        let rep = appendix_a_checks(&t).unwrap();
        assert!(rep.all_hold);
        let s = &rep.stages[0];
        assert!((s.ratio_at_zero - 1.0).norm() < 1e-12);
        assert!((s.ratio_derivative_at_zero - (-2.0 / 3.0)).norm() < 1e-10);
    }

    #[test]
    fn appendix_a_rejects_negative_strength() {
        let t = MetricTree::star(-1.0, 2).unwrap();
        assert!(matches!(appendix_a_checks(&t), Err(Error::NonPositiveStrength(_))));
    }

    #[test]
    fn strip_scan_on_simple_stars() {
        let t = MetricTree::star(1.0, 2).unwrap();
        let rep = strip_scan(&t, 0.5, 0.05, 20.0, 200, 3).unwrap();
        assert!(!rep.violation);
        assert!(rep.min_abs_det >= 1.0 - 0.05);
        let free = MetricTree::star(0.0, 2).unwrap();
        let rep = strip_scan(&free, 0.5, 0.05, 20.0, 50, 3).unwrap();
        assert!((rep.min_abs_det - 2.0).abs() < 1e-12);
        assert!(rep.max_ratios.iter().all(|r| r.max_abs_ratio == 0.0));
    }

    #[test]
    fn strip_scan_on_random_positive_tree() {
        use crate::random::{random_tree, rng, Shape, TreeParams};
        let t = random_tree(&mut rng(11), &TreeParams::positive(3, Shape::Bushy));
        let rep = strip_scan(&t, 0.2, 0.0, 10.0, 5000, 1).unwrap();
        assert_eq!(rep.points, 10_000);
        assert!(!rep.violation, "{rep:?}");
    }

    #[test]
    fn numerator_orders_on_two_delta_line() {
        let t = MetricTree::line(&[1.0, 2.0], &[0.8]).unwrap();
        for o in numerator_orders(&t).unwrap() {
            if let Some(m) = o.zero_order {
                assert!(m >= 1, "{o:?}");
            }
        }
    }
}
