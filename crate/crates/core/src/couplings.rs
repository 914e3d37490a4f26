//! General self-adjoint vertex couplings `A(v) u(v) + B(v) u'(v) = 0`.
//!
//! `u(v)` and `u'(v)` list the values and outgoing derivatives of the
//! incident edges in incidence order (incoming edge first). The rows are
//! assembled without normalization; on an outgoing edge the `e^{-ωx}` column
//! contributes `A - ωB` and the `e^{ωx}` column `A + ωB`.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::determinant::DetState;
use crate::error::{Error, Result};
use crate::function::GraphFunction;
use crate::graph::{Endpoint, MetricTree};
use crate::resolvent::{determinant, endpoint_t, endpoint_terms, Kind, Layout, ResolventSystem, RowForm};
use crate::spectral::{real_roots, SCAN_POINTS};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const COMMUTATOR_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub enum Coupling {
    Delta(f64),
    General { a: DMatrix<f64>, b: DMatrix<f64> },
}

/// One coupling per vertex, indexed like `tree.vertices()`.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingSpec {
    pub vertices: Vec<Coupling>,
}

impl CouplingSpec {
    /// The δ couplings carried by the tree.
    pub fn delta(tree: &MetricTree) -> Self {
        Self {
            vertices: tree.vertices().iter().map(|v| Coupling::Delta(v.alpha)).collect(),
        }
    }

    /// The δ couplings written as explicit matrices.
    pub fn delta_as_general(tree: &MetricTree) -> Result<Self> {
        let vertices = (0..tree.vertex_count())
            .map(|v| {
                let (a, b) = delta_matrices(tree.degree(v), tree.alpha(v))?;
                Ok(Coupling::General { a, b })
            })
            .collect::<Result<_>>()?;
        Ok(Self { vertices })
    }

    /// `A = I`, `B = 0` at every vertex.
    pub fn dirichlet(tree: &MetricTree) -> Self {
        Self {
            vertices: (0..tree.vertex_count())
                .map(|v| {
                    let d = tree.degree(v);
                    Coupling::General {
                        a: DMatrix::identity(d, d),
                        b: DMatrix::zeros(d, d),
                    }
                })
                .collect(),
        }
    }

    /// Couplings keyed by vertex id; vertices not listed keep their δ strength.
    pub fn from_ids(tree: &MetricTree, by_id: HashMap<String, Coupling>) -> Result<Self> {
        let mut spec = Self::delta(tree);
        for (id, c) in by_id {
            let v = tree.vertex_index(&id)?;
            spec.vertices[v] = c;
        }
        Ok(spec)
    }

    /// `(A(v), B(v))` of vertex `v`.
    pub fn matrices(&self, tree: &MetricTree, v: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let d = tree.degree(v);
        match self.vertices.get(v) {
            None => Err(Error::SizeMismatch(format!(
                "{} couplings for {} vertices",
                self.vertices.len(),
                tree.vertex_count()
            ))),
            Some(Coupling::Delta(alpha)) => delta_matrices(d, *alpha),
            Some(Coupling::General { a, b }) => {
                if a.shape() != (d, d) || b.shape() != (d, d) {
                    return Err(Error::InvalidCoupling {
                        vertex: tree.vertices()[v].id.clone(),
                        reason: format!("matrices must be {d}×{d} for degree {d}"),
                    });
                }
                Ok((a.clone(), b.clone()))
            }
        }
    }

    /// Checks sizes and self-adjointness at every vertex.
    pub fn validate(&self, tree: &MetricTree) -> Result<()> {
        if self.vertices.len() != tree.vertex_count() {
            return Err(Error::SizeMismatch(format!(
                "{} couplings for {} vertices",
                self.vertices.len(),
                tree.vertex_count()
            )));
        }
        for v in 0..tree.vertex_count() {
            let (a, b) = self.matrices(tree, v)?;
            let report = check_self_adjoint(&a, &b)?;
            if !report.self_adjoint {
                return Err(Error::InvalidCoupling {
                    vertex: tree.vertices()[v].id.clone(),
                    reason: report.reason.unwrap_or_default(),
                });
            }
        }
        Ok(())
    }

    fn all_matrices(&self, tree: &MetricTree) -> Result<Vec<(DMatrix<f64>, DMatrix<f64>)>> {
        self.validate(tree)?;
        (0..tree.vertex_count()).map(|v| self.matrices(tree, v)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelfAdjointReport {
    pub self_adjoint: bool,
    pub dimension: usize,
    /// Numerical rank of the joint matrix `(A, B)`.
    pub rank: usize,
    /// `‖ABᵀ - BAᵀ‖_max`.
    pub commutator: f64,
    pub reason: Option<String>,
}

/// Maximal rank of `(A, B)` and symmetry of `ABᵀ`.
pub fn check_self_adjoint(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<SelfAdjointReport> {
    let d = a.nrows();
    if a.shape() != (d, d) || b.shape() != (d, d) {
        return Err(Error::SizeMismatch(format!(
            "A is {}×{}, B is {}×{}; both must be square of equal size",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let mut joint = DMatrix::zeros(d, 2 * d);
    joint.view_mut((0, 0), (d, d)).copy_from(a);
    joint.view_mut((0, d), (d, d)).copy_from(b);
    let sv = joint.singular_values();
    let top = sv.iter().copied().fold(0.0, f64::max);
    let rank = sv.iter().filter(|&&s| s > 1e-10 * top.max(1.0)).count();
    let commutator = (a * b.transpose() - b * a.transpose()).amax();
    let reason = if rank < d {
        Some(format!("joint matrix (A, B) has rank {rank} < {d}"))
    } else if commutator > COMMUTATOR_TOL {
        Some(format!("A Bᵀ is not symmetric (defect {commutator:e})"))
    } else {
        None
    };
    Ok(SelfAdjointReport {
        self_adjoint: reason.is_none(),
        dimension: d,
        rank,
        commutator,
        reason,
    })
}

/// Matrices of the δ coupling of strength `alpha` at a vertex of degree `d`:
/// continuity rows `u_i - u_{i+1}` and the last row `Σ u'_j - α u_d`.
pub fn delta_matrices(d: usize, alpha: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if d < 2 {
        return Err(Error::BadDegree(d));
    }
    let mut a = DMatrix::zeros(d, d);
    let mut b = DMatrix::zeros(d, d);
    for i in 0..d - 1 {
        a[(i, i)] = 1.0;
        a[(i, i + 1)] = -1.0;
    }
    a[(d - 1, d - 1)] = -alpha;
    for j in 0..d {
        b[(d - 1, j)] = 1.0;
    }
    Ok((a, b))
}

fn row_offsets(layout: &Layout) -> HashMap<usize, usize> {
    let mut offsets = HashMap::new();
    let mut r = 0;
    for &v in layout.vertices() {
        offsets.insert(v, r);
        r += layout.incidence(v).len();
    }
    offsets
}

/// General coupling matrix of a view, optionally with the external column of
/// `flip` switched to `e^{ωx}`.
fn general_matrix(
    tree: &MetricTree,
    layout: &Layout,
    mats: &[(DMatrix<f64>, DMatrix<f64>)],
    omega: Complex64,
    flip: Option<usize>,
) -> DMatrix<Complex64> {
    let n = layout.size();
    let mut m = DMatrix::from_element(n, n, ZERO);
    let offsets = row_offsets(layout);
    for (col, u) in layout.columns().iter().enumerate() {
        let kind = if flip == Some(u.edge) { Kind::Grow } else { u.kind };
        for &v in layout.vertices() {
            let (a, b) = &mats[v];
            for (j, p) in layout.incidence(v).iter().enumerate() {
                if p.edge != u.edge {
                    continue;
                }
                let (value, dw) = endpoint_terms(tree, *p, kind, omega);
                for i in 0..a.nrows() {
                    m[(offsets[&v] + i, col)] += a[(i, j)] * value + b[(i, j)] * omega * dw;
                }
            }
        }
    }
    m
}

/// `D(ω) c = T(ω)` with unnormalized coupling rows.
pub fn assemble_general(tree: &MetricTree, couplings: &CouplingSpec, omega: Complex64, u0: &GraphFunction) -> Result<ResolventSystem> {
    if omega == ZERO {
        return Err(Error::ZeroOmega);
    }
    let mats = couplings.all_matrices(tree)?;
    let layout = Layout::full(tree);
    let matrix = general_matrix(tree, &layout, &mats, omega, None);
    let mut rhs = DVector::from_element(layout.size(), ZERO);
    let offsets = row_offsets(&layout);
    for &v in layout.vertices() {
        let (a, b) = &mats[v];
        let t: Vec<Complex64> = layout
            .incidence(v)
            .iter()
            .map(|&p: &Endpoint| endpoint_t(tree, u0, omega, p))
            .collect();
        for i in 0..a.nrows() {
            let s: Complex64 = t.iter().enumerate().map(|(j, tj)| tj * (a[(i, j)] + omega * b[(i, j)])).sum();
            rhs[offsets[&v] + i] = -s / omega;
        }
    }
    Ok(ResolventSystem {
        omega,
        form: RowForm::General,
        layout,
        matrix,
        rhs,
    })
}

/// `det D(ω)` of the general system.
pub fn det_general_direct(tree: &MetricTree, couplings: &CouplingSpec, omega: Complex64) -> Result<Complex64> {
    let mats = couplings.all_matrices(tree)?;
    Ok(determinant(&general_matrix(tree, &Layout::full(tree), &mats, omega, None)))
}

fn flip_ratio(tree: &MetricTree, layout: &Layout, mats: &[(DMatrix<f64>, DMatrix<f64>)], edge: usize, omega: Complex64) -> Complex64 {
    determinant(&general_matrix(tree, layout, mats, omega, Some(edge))) / determinant(&general_matrix(tree, layout, mats, omega, None))
}

/// `P = A - ωB` and `Q = A + ωB`.
fn pq(a: &DMatrix<f64>, b: &DMatrix<f64>, omega: Complex64) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
    let ac = a.map(|x| Complex64::new(x, 0.0));
    let bc = b.map(|x| Complex64::new(x, 0.0)) * omega;
    (&ac - &bc, &ac + &bc)
}

fn with_column(m: &DMatrix<Complex64>, j: usize, col: &DMatrix<Complex64>, k: usize) -> DMatrix<Complex64> {
    let mut out = m.clone();
    out.set_column(j, &col.column(k));
    out
}

/// Determinant by the attachment recursion for general couplings.
///
/// The root star contributes `det P`. Attaching a vertex on edge `N` at
/// distance `a` multiplies by `s_p e^{ωa} det P` and by
/// `1 - e^{-2ωa} ρ_N det(Q₁, P₂, …, P_n) / det P`, with `ρ_N` the ratio of
/// `N` in the previous stage.
pub fn det_recursive_general(tree: &MetricTree, couplings: &CouplingSpec, omega: Complex64) -> Result<DetState> {
    if omega == ZERO {
        return Err(Error::ZeroOmega);
    }
    let mats = couplings.all_matrices(tree)?;
    let full = Layout::full(tree);
    let signs = full.step_signs();
    let root = tree.root();
    let (p, q) = pq(&mats[root].0, &mats[root].1, omega);
    let mut det = determinant(&p);
    let mut tracked: BTreeMap<usize, Complex64> = tree
        .incidence(root)
        .iter()
        .enumerate()
        .map(|(j, e)| (e.edge, determinant(&with_column(&p, j, &q, j)) / det))
        .collect();
    let mut stage_dets = vec![det];

    for (i, step) in tree.build().iter().enumerate() {
        let rho = match tracked.get(&step.edge) {
            Some(r) => *r,
            None => flip_ratio(tree, &Layout::new(tree, i + 1), &mats, step.edge, omega),
        };
        let v = step.vertex;
        let (p, q) = pq(&mats[v].0, &mats[v].1, omega);
        let a = tree.edges()[step.edge].length;
        let decay = (-2.0 * omega * a).exp() * rho;
        let det_p = determinant(&p);
        let pq1 = with_column(&p, 0, &q, 0);
        let denom = det_p - decay * determinant(&pq1);
        det = signs[i] * (omega * a).exp() * det * denom;
        let inc = tree.incidence(v);
        tracked = inc
            .iter()
            .enumerate()
            .skip(1)
            .map(|(j, e)| {
                let num = determinant(&with_column(&p, j, &q, j)) - decay * determinant(&with_column(&pq1, j, &q, j));
                (e.edge, num / denom)
            })
            .collect();
        stage_dets.push(det);
    }

    let mut ratios = BTreeMap::new();
    for e in full.external_edges() {
        let r = match tracked.get(&e) {
            Some(r) => *r,
            None => flip_ratio(tree, &full, &mats, e, omega),
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

/// Eigenvalues `-ω²` with `ω ∈ (1e-6, omega_max]`, from the sign changes of
/// the real determinant on the real axis.
pub fn general_eigenvalues(tree: &MetricTree, couplings: &CouplingSpec, omega_max: f64) -> Result<Vec<f64>> {
    let mats = couplings.all_matrices(tree)?;
    let layout = Layout::full(tree);
    let f = |w: f64| determinant(&general_matrix(tree, &layout, &mats, Complex64::new(w, 0.0), None)).re;
    Ok(real_roots(f, crate::spectral::OMEGA_MIN, omega_max, SCAN_POINTS)
        .into_iter()
        .map(|w| -w * w)
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConddetPoint {
    pub tau: f64,
    pub abs_det: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConddetReport {
    pub points: Vec<ConddetPoint>,
    pub min_abs_det: f64,
    pub argmin_tau: f64,
    /// Power of `|τ|` divided out: `Σ_v (d(v) - rank A(v))`.
    pub cleared_order: usize,
    pub plausibly_holds: bool,
    pub verdict: String,
}

/// Grid scan of `|det D(iτ)| / |τ|^k`, `k = Σ_v (d(v) - rank A(v))`. A grid
/// minimum says nothing about the values between grid points.
pub fn sufficient_condition_scan(tree: &MetricTree, couplings: &CouplingSpec, taus: &[f64]) -> Result<ConddetReport> {
    if taus.is_empty() || taus.iter().any(|t| *t == 0.0 || !t.is_finite()) {
        return Err(Error::InvalidArgument("τ grid must be nonempty, finite and avoid 0".into()));
    }
    let mats = couplings.all_matrices(tree)?;
    let cleared_order: usize = mats.iter().map(|(a, _)| a.nrows() - a.rank(1e-12)).sum();
    let layout = Layout::full(tree);
    let points: Vec<ConddetPoint> = taus
        .par_iter()
        .map(|&tau| {
            let d = determinant(&general_matrix(tree, &layout, &mats, Complex64::new(0.0, tau), None));
            ConddetPoint {
                tau,
                abs_det: d.norm() / tau.abs().powi(cleared_order as i32),
            }
        })
        .collect();
    let (argmin_tau, min_abs_det) = points.iter().fold(
        (f64::NAN, f64::INFINITY),
        |acc, p| if p.abs_det < acc.1 { (p.tau, p.abs_det) } else { acc },
    );
    let plausibly_holds = min_abs_det >= 1e-6;
    let verdict = if plausibly_holds {
        format!("grid scan only: sufficient condition plausibly holds (min {min_abs_det:e} at τ = {argmin_tau})")
    } else {
        format!("grid scan only: condition fails near τ* = {argmin_tau} (min {min_abs_det:e})")
    };
    Ok(ConddetReport {
        points,
        min_abs_det,
        argmin_tau,
        cleared_order,
        plausibly_holds,
        verdict,
    })
}

/// Symmetric grid `±τ` with `n` log-spaced magnitudes in `[tau_min, tau_max]`.
pub fn log_tau_grid(tau_min: f64, tau_max: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    let (l0, l1) = (tau_min.ln(), tau_max.ln());
    let mut out: Vec<f64> = (0..n)
        .map(|i| (l0 + (l1 - l0) * i as f64 / (n - 1) as f64).exp())
        .flat_map(|t| [-t, t])
        .collect();
    out.sort_by(f64::total_cmp);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::determinant::{det_direct, det_recursive};
    use crate::function::Packet;
    use crate::resolvent::{assemble_system, solve_resolvent};
    use crate::spectral::find_eigenvalues;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn bushy() -> MetricTree {
        MetricTree::star(1.5, 3)
            .unwrap()
            .attach_vertex("e2", 0.8, -0.6, 3)
            .unwrap()
            .attach_vertex("e1", 1.3, 2.0, 2)
            .unwrap()
    }

    #[test]
    fn delta_matrices_for_degree_two() {
        let (a, b) = delta_matrices(2, 1.0).unwrap();
        assert_eq!(a, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 0.0, -1.0]));
        assert_eq!(b, DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 1.0]));
        assert!(matches!(delta_matrices(1, 1.0), Err(Error::BadDegree(1))));
    }

    #[test]
    fn self_adjointness_checks() {
        for d in 2..6 {
            for alpha in [-2.0, 0.0, 3.5] {
                let (a, b) = delta_matrices(d, alpha).unwrap();
                assert!(check_self_adjoint(&a, &b).unwrap().self_adjoint);
            }
        }
        let id = DMatrix::<f64>::identity(3, 3);
        assert!(check_self_adjoint(&id, &DMatrix::zeros(3, 3)).unwrap().self_adjoint);
        let b = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let r = check_self_adjoint(&DMatrix::zeros(3, 3), &b).unwrap();
        assert!(!r.self_adjoint && r.rank == 2);
        let asym = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(
            !check_self_adjoint(&asym, &id.view((0, 0), (2, 2)).into_owned())
                .unwrap()
                .self_adjoint
        );
        assert!(matches!(
            check_self_adjoint(&id, &DMatrix::zeros(2, 2)),
            Err(Error::SizeMismatch(_))
        ));
    }

    #[test]
    fn delta_instance_matches_normalized_determinant() {
        let t = bushy();
        let spec = CouplingSpec::delta_as_general(&t).unwrap();
        let p = t.vertex_count() as i32;
        for w in [c(0.7, 0.2), c(2.0, -1.0), c(0.1, 3.0)] {
            let g = det_general_direct(&t, &spec, w).unwrap();
            let scale: Complex64 = t.vertices().iter().map(|v| w + v.alpha).product();
            let expect = det_direct(&t, w).unwrap() * scale * (-1.0f64).powi(p);
            assert!((g - expect).norm() < 1e-10 * expect.norm());
        }
    }

    #[test]
    fn general_recursion_matches_direct() {
        let t = bushy();
        let spec = CouplingSpec::delta_as_general(&t).unwrap();
        for w in [c(0.7, 0.2), c(1.5, -2.0)] {
            let r = det_recursive_general(&t, &spec, w).unwrap();
            let d = det_general_direct(&t, &spec, w).unwrap();
            assert!((r.det - d).norm() < 1e-10 * d.norm());
            let delta = det_recursive(&t, w).unwrap();
            for (e, ratio) in &r.ratios {
                assert!((ratio - delta.ratios[e]).norm() < 1e-10 * ratio.norm().max(1.0));
            }
        }
    }

    #[test]
    fn random_symmetric_couplings_recursion() {
        let t = MetricTree::line(&[0.0, 0.0], &[1.2]).unwrap();
        let mats = [
            ([0.3, -1.1, -1.1, 2.0], [2.0, 1.0, 0.5, 1.0]),
            ([-0.4, 0.7, 0.7, 0.9], [1.0, -0.5, 0.0, 3.0]),
        ];
        let vertices = mats
            .iter()
            .map(|(s, m)| {
                let s = DMatrix::from_row_slice(2, 2, s);
                let m = DMatrix::from_row_slice(2, 2, m);
                Coupling::General { a: &m * s, b: m }
            })
            .collect();
        let spec = CouplingSpec { vertices };
        spec.validate(&t).unwrap();
        for w in [c(0.9, 0.4), c(0.2, -1.7), c(3.0, 0.0)] {
            let r = det_recursive_general(&t, &spec, w).unwrap().det;
            let d = det_general_direct(&t, &spec, w).unwrap();
            assert!((r - d).norm() < 1e-10 * d.norm());
        }
    }

    #[test]
    fn delta_instance_gives_same_solution() {
        let t = bushy();
        let u0 = GraphFunction::zero(&t).with_packet(3, Packet::new(c(1.0, 0.3), 0.6, 0.4, 1.0));
        let w = c(0.8, 0.5);
        let spec = CouplingSpec::delta_as_general(&t).unwrap();
        let g = solve_resolvent(&t, &u0, &assemble_general(&t, &spec, w, &u0).unwrap()).unwrap();
        let d = solve_resolvent(&t, &u0, &assemble_system(&t, w, &u0).unwrap()).unwrap();
        assert!((&g.coefficients - &d.coefficients).norm() < 1e-10 * d.coefficients.norm());
    }

    #[test]
    fn dirichlet_star_reflects_fully() {
        let t = MetricTree::star(0.0, 3).unwrap();
        let spec = CouplingSpec::dirichlet(&t);
        let u0 = GraphFunction::zero(&t).with_packet(1, Packet::new(c(1.0, 0.0), 1.0, 0.5, 0.0));
        let w = c(1.1, 0.3);
        assert!((det_general_direct(&t, &spec, w).unwrap() - 1.0).norm() < 1e-14);
        let sol = solve_resolvent(&t, &u0, &assemble_general(&t, &spec, w, &u0).unwrap()).unwrap();
        for p in t.incidence(0) {
            let tj = u0.t_integral(&t, p.edge, w, 0.0);
            assert!((sol.decay[p.edge] + tj / w).norm() < 1e-12);
            assert!(sol.eval(p.edge, 0.0).norm() < 1e-12);
        }
        let r = det_recursive_general(&t, &spec, w).unwrap();
        assert!(r.ratios.values().all(|x| (x - 1.0).norm() < 1e-14));
    }

    #[test]
    fn eigenvalues_agree_with_delta_path() {
        let t = MetricTree::line(&[-2.0, -1.5], &[2.0]).unwrap();
        let g = general_eigenvalues(&t, &CouplingSpec::delta_as_general(&t).unwrap(), 5.0).unwrap();
        let s = find_eigenvalues(&t).unwrap().eigenvalues();
        assert_eq!(g.len(), s.len());
        for (a, b) in g.iter().zip(&s) {
            assert!((a - b).abs() < 1e-9);
        }
        let k = MetricTree::line(&[0.0, 0.0], &[1.0]).unwrap();
        assert!(general_eigenvalues(&k, &CouplingSpec::delta_as_general(&k).unwrap(), 5.0)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn invariant_under_left_multiplication() {
        let (a, b) = delta_matrices(3, 0.7).unwrap();
        let c = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, -1.0, 0.5, 3.0, 0.0, 1.0, 1.0]);
        let r = check_self_adjoint(&(&c * &a), &(&c * &b)).unwrap();
        assert!(r.self_adjoint);
    }

    #[test]
    fn conddet_scan_cases() {
        let t = MetricTree::line(&[1.0, 2.0], &[1.0]).unwrap();
        let grid = log_tau_grid(1e-8, 10.0, 90);
        let delta = sufficient_condition_scan(&t, &CouplingSpec::delta_as_general(&t).unwrap(), &grid).unwrap();
        assert!(!delta.plausibly_holds);
        assert!(delta.argmin_tau.abs() < 1e-7);
        let k = MetricTree::line(&[0.0, 0.0], &[1.0]).unwrap();
        let kirchhoff = sufficient_condition_scan(&k, &CouplingSpec::delta_as_general(&k).unwrap(), &grid).unwrap();
        assert_eq!(kirchhoff.cleared_order, 2);
        assert!(kirchhoff.plausibly_holds);
        let s = MetricTree::star(1.0, 3).unwrap();
        let dir = sufficient_condition_scan(&s, &CouplingSpec::dirichlet(&s), &grid).unwrap();
        assert!((dir.min_abs_det - 1.0).abs() < 1e-12);
    }
}
