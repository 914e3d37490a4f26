//! Assembly and solution of the resolvent system `(H + ω²) R_ω u₀ = u₀`.
//!
//! On edge `e` the resolvent is `c_e e^{ωx} + c̃_e e^{-ωx} + t_e(x, ω)/ω`
//! with `c_e = 0` on infinite edges. Continuity and flux conditions at the
//! vertices give a square system `D(ω) c = T(ω)`.
//!
//! Columns follow the construction sequence of the tree: the `c̃` unknowns of
//! the root star in incidence order, then for each attachment on edge `N` the
//! column `c̃_N` moves to the end, followed by `c_N` and the `c̃` unknowns of
//! the new edges. Rows follow the vertex build order, each vertex giving
//! `d(v) - 1` continuity rows and one flux row.

use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::function::GraphFunction;
use crate::graph::{Endpoint, MetricTree};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Kind {
    /// `c_e`, multiplying `e^{ωx}`.
    Grow,
    /// `c̃_e`, multiplying `e^{-ωx}`.
    Decay,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Unknown {
    pub edge: usize,
    pub kind: Kind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Row {
    /// `u_a(v) - u_b(v) = 0` for consecutive incident endpoints.
    Continuity {
        vertex: usize,
        a: Endpoint,
        b: Endpoint,
    },
    Flux {
        vertex: usize,
    },
}

impl Row {
    pub fn vertex(&self) -> usize {
        match *self {
            Row::Continuity { vertex, .. } | Row::Flux { vertex } => vertex,
        }
    }
}

/// Row scaling of the flux rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RowForm {
    /// Flux row divided by `ω + α(v)`.
    Normalized,
    /// Entire in `ω`: the raw flux row when `α(v) ≠ 0`, the normalized one
    /// (whose `ω` factor cancels) when `α(v) = 0`.
    Cleared,
    /// Unnormalized coupling rows `A·values + B·derivatives`, assembled by
    /// [`crate::couplings::assemble_general`].
    General,
}

/// Unknown and equation ordering of the tree after `stage` construction
/// stages. Edges whose terminal vertex is not yet built behave as infinite.
#[derive(Clone, Debug)]
pub struct Layout {
    stage: usize,
    vertices: Vec<usize>,
    finite: Vec<bool>,
    present: Vec<bool>,
    columns: Vec<Unknown>,
    column_of: HashMap<Unknown, usize>,
    rows: Vec<Row>,
    incidence: HashMap<usize, Vec<Endpoint>>,
    /// `(k, M)` per attachment: 1-based position of `c̃_N` among the `M`
    /// columns before the step.
    moves: Vec<(usize, usize)>,
}

impl Layout {
    pub fn full(tree: &MetricTree) -> Self {
        Self::new(tree, tree.vertex_count())
    }

    /// View of the tree built by the first `stage` construction stages
    /// (`1 ≤ stage ≤ p`).
    pub fn new(tree: &MetricTree, stage: usize) -> Self {
        let stage = stage.clamp(1, tree.vertex_count());
        let vertices = tree.stage_vertices(stage);
        let mut built = vec![false; tree.vertex_count()];
        for &v in &vertices {
            built[v] = true;
        }
        let edges = tree.edges();
        let present: Vec<bool> = edges.iter().map(|e| built[e.from]).collect();
        let finite: Vec<bool> = edges.iter().map(|e| e.to.is_some_and(|t| built[t])).collect();

        let mut incidence = HashMap::new();
        for &v in &vertices {
            incidence.insert(v, tree.incidence(v));
        }

        let decay = |edge| Unknown { edge, kind: Kind::Decay };
        let mut columns: Vec<Unknown> = incidence[&tree.root()].iter().map(|p| decay(p.edge)).collect();
        let mut moves = Vec::new();
        for step in tree.build().iter().take(stage - 1) {
            let m = columns.len();
            let k = columns
                .iter()
                .position(|u| *u == decay(step.edge))
                .expect("attachment edge present in the previous stage");
            let moved = columns.remove(k);
            columns.push(moved);
            columns.push(Unknown {
                edge: step.edge,
                kind: Kind::Grow,
            });
            columns.extend(step.new_edges.iter().map(|&e| decay(e)));
            moves.push((k + 1, m));
        }
        let column_of = columns.iter().enumerate().map(|(i, u)| (*u, i)).collect();

        let mut rows = Vec::new();
        for &v in &vertices {
            let inc = &incidence[&v];
            for w in inc.windows(2) {
                rows.push(Row::Continuity {
                    vertex: v,
                    a: w[0],
                    b: w[1],
                });
            }
            rows.push(Row::Flux { vertex: v });
        }

        Self {
            stage,
            vertices,
            finite,
            present,
            columns,
            column_of,
            rows,
            incidence,
            moves,
        }
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn size(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Unknown] {
        &self.columns
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    /// Built vertices in construction order.
    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    pub fn column(&self, u: Unknown) -> Option<usize> {
        self.column_of.get(&u).copied()
    }

    pub fn incidence(&self, v: usize) -> &[Endpoint] {
        &self.incidence[&v]
    }

    pub fn is_present(&self, edge: usize) -> bool {
        self.present[edge]
    }

    /// Edge is a ray in this view (infinite, or its terminal vertex unbuilt).
    pub fn is_external(&self, edge: usize) -> bool {
        self.present[edge] && !self.finite[edge]
    }

    pub fn external_edges(&self) -> Vec<usize> {
        (0..self.present.len()).filter(|&e| self.is_external(e)).collect()
    }

    /// Sign `(-1)^{M-k}` of the column move at each attachment step.
    pub fn step_signs(&self) -> Vec<f64> {
        self.moves.iter().map(|&(k, m)| if (m - k) % 2 == 0 { 1.0 } else { -1.0 }).collect()
    }

    /// Columns `c_e`, `c̃_e` of an edge: `(Some(c) if internal, c̃)`.
    pub fn unknown_index(&self, edge: usize) -> (Option<usize>, usize) {
        (
            self.column(Unknown { edge, kind: Kind::Grow }),
            self.column(Unknown { edge, kind: Kind::Decay }).expect("edge present in layout"),
        )
    }

    /// Continuity rows and flux row of a vertex.
    pub fn row_index(&self, v: usize) -> (Vec<usize>, usize) {
        let mine: Vec<usize> = (0..self.rows.len()).filter(|&r| self.rows[r].vertex() == v).collect();
        let (flux, cont) = mine.split_last().expect("vertex built in layout");
        (cont.to_vec(), *flux)
    }

    fn endpoint_of(&self, v: usize, edge: usize) -> Option<Endpoint> {
        self.incidence[&v].iter().copied().find(|p| p.edge == edge)
    }

    /// Checks `ω + α(v) ≠ 0` for every built vertex.
    pub fn check_poles(&self, tree: &MetricTree, omega: Complex64) -> Result<()> {
        for &v in &self.vertices {
            let alpha = tree.alpha(v);
            if (omega + alpha).norm() <= 1e-14 * (1.0 + alpha.abs()) {
                return Err(Error::NormalizationPole {
                    vertex: tree.vertices()[v].id.clone(),
                    omega,
                });
            }
        }
        Ok(())
    }

    /// `D(ω)` in the given row form. The normalized form fails at poles.
    pub fn matrix(&self, tree: &MetricTree, omega: Complex64, form: RowForm) -> Result<DMatrix<Complex64>> {
        self.matrix_flipped(tree, omega, form, None)
    }

    /// `D(ω)` with the `c̃_e` column of the external edge `flip` replaced by
    /// the `c_e` column (`e^{ωx}` in place of `e^{-ωx}`).
    pub fn matrix_flipped(&self, tree: &MetricTree, omega: Complex64, form: RowForm, flip: Option<usize>) -> Result<DMatrix<Complex64>> {
        match form {
            RowForm::Normalized => self.check_poles(tree, omega)?,
            RowForm::General => {
                return Err(Error::InvalidArgument("general rows need a coupling spec".into()));
            }
            RowForm::Cleared => {}
        }
        if let Some(e) = flip {
            if !self.is_external(e) {
                return Err(Error::InvalidArgument(format!(
                    "column flip needs an external edge, `{}` is not",
                    tree.edges()[e].id
                )));
            }
        }
        let n = self.size();
        let mut m = DMatrix::from_element(n, n, ZERO);
        for (j, u) in self.columns.iter().enumerate() {
            let u = match flip {
                Some(e) if u.edge == e => Unknown { edge: e, kind: Kind::Grow },
                _ => *u,
            };
            for (i, row) in self.rows.iter().enumerate() {
                m[(i, j)] = self.coefficient(tree, row, u, omega, form);
            }
        }
        Ok(m)
    }

    fn coefficient(&self, tree: &MetricTree, row: &Row, u: Unknown, omega: Complex64, form: RowForm) -> Complex64 {
        let term = |p: Endpoint| endpoint_terms(tree, p, u.kind, omega);
        match *row {
            Row::Continuity { a, b, .. } => {
                if u.edge == a.edge {
                    term(a).0
                } else if u.edge == b.edge {
                    -term(b).0
                } else {
                    ZERO
                }
            }
            Row::Flux { vertex } => {
                let Some(p) = self.endpoint_of(vertex, u.edge) else {
                    return ZERO;
                };
                let (value, dw) = term(p);
                let alpha = tree.alpha(vertex);
                let first = self.incidence[&vertex][0].edge == u.edge;
                let a_val = if first { alpha * value } else { ZERO };
                // α·value - (outgoing derivative) with derivative = ω·dw
                match form {
                    RowForm::Normalized => (a_val - omega * dw) / (omega + alpha),
                    RowForm::Cleared if alpha != 0.0 => a_val - omega * dw,
                    RowForm::Cleared => -dw,
                    RowForm::General => unreachable!("rejected in matrix_flipped"),
                }
            }
        }
    }

    /// `ω·T(ω)` for endpoint free values `t(endpoint)`; entire in `ω` for the
    /// cleared form.
    pub fn scaled_rhs(&self, tree: &MetricTree, omega: Complex64, form: RowForm, t: impl Fn(Endpoint) -> Complex64) -> DVector<Complex64> {
        DVector::from_iterator(
            self.rows.len(),
            self.rows.iter().map(|row| match *row {
                Row::Continuity { a, b, .. } => t(b) - t(a),
                Row::Flux { vertex } => {
                    let inc = &self.incidence[&vertex];
                    let alpha = tree.alpha(vertex);
                    let sum: Complex64 = inc.iter().map(|&p| t(p)).sum();
                    let raw = omega * sum - alpha * t(inc[0]);
                    match form {
                        RowForm::Normalized => raw / (omega + alpha),
                        RowForm::Cleared if alpha != 0.0 => raw,
                        RowForm::Cleared => sum,
                        RowForm::General => unreachable!("general right-hand sides are assembled in couplings"),
                    }
                }
            }),
        )
    }
}

/// Value coefficient and outgoing-derivative coefficient (divided by `ω`) of
/// an unknown at an edge endpoint.
pub(crate) fn endpoint_terms(tree: &MetricTree, p: Endpoint, kind: Kind, omega: Complex64) -> (Complex64, Complex64) {
    let (x0, s) = if p.at_end {
        (tree.edges()[p.edge].length, -1.0)
    } else {
        (0.0, 1.0)
    };
    match kind {
        Kind::Grow => {
            let v = if x0 == 0.0 { Complex64::new(1.0, 0.0) } else { (omega * x0).exp() };
            (v, s * v)
        }
        Kind::Decay => {
            let v = if x0 == 0.0 { Complex64::new(1.0, 0.0) } else { (-omega * x0).exp() };
            (v, -s * v)
        }
    }
}

/// Free value `t_e(x_p, ω)` at an endpoint.
pub(crate) fn endpoint_t(tree: &MetricTree, u0: &GraphFunction, omega: Complex64, p: Endpoint) -> Complex64 {
    let x = if p.at_end { tree.edges()[p.edge].length } else { 0.0 };
    u0.t_integral(tree, p.edge, omega, x)
}

/// The square system `D(ω) c = T(ω)` on the full tree.
#[derive(Clone, Debug)]
pub struct ResolventSystem {
    pub omega: Complex64,
    pub form: RowForm,
    pub layout: Layout,
    pub matrix: DMatrix<Complex64>,
    pub rhs: DVector<Complex64>,
}

impl ResolventSystem {
    pub fn size(&self) -> usize {
        self.layout.size()
    }

    /// Row-major CSV: each line holds the `re,im` pairs of a row of `D`
    /// followed by the pair of `T`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.size() {
            let cells: Vec<String> = self
                .matrix
                .row(i)
                .iter()
                .chain(std::iter::once(&self.rhs[i]))
                .map(|z| format!("{:e},{:e}", z.re, z.im))
                .collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }
}

/// Assembles the normalized system of the full tree.
pub fn assemble_system(tree: &MetricTree, omega: Complex64, u0: &GraphFunction) -> Result<ResolventSystem> {
    assemble_system_in(tree, omega, u0, RowForm::Normalized)
}

pub fn assemble_system_in(tree: &MetricTree, omega: Complex64, u0: &GraphFunction, form: RowForm) -> Result<ResolventSystem> {
    if omega == ZERO {
        return Err(Error::ZeroOmega);
    }
    let layout = Layout::full(tree);
    let matrix = layout.matrix(tree, omega, form)?;
    let rhs = layout.scaled_rhs(tree, omega, form, |p| endpoint_t(tree, u0, omega, p)) / omega;
    Ok(ResolventSystem {
        omega,
        form,
        layout,
        matrix,
        rhs,
    })
}

/// Determinant of a small dense matrix by LU with partial pivoting.
pub fn determinant(m: &DMatrix<Complex64>) -> Complex64 {
    if m.nrows() == 0 {
        return Complex64::new(1.0, 0.0);
    }
    m.clone().lu().determinant()
}

/// Ratio of the largest to the smallest singular value.
pub fn condition_number(m: &DMatrix<Complex64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    max / min
}

/// Product of column norms, an upper bound for `|det|`.
pub fn hadamard_bound(m: &DMatrix<Complex64>) -> f64 {
    m.column_iter().map(|c| c.norm()).product()
}

/// Solves `D c = rhs`, refusing numerically singular matrices.
pub(crate) fn solve_dense(m: &DMatrix<Complex64>, rhs: &DVector<Complex64>, omega: Complex64) -> Result<DVector<Complex64>> {
    let lu = m.clone().lu();
    let det = lu.determinant();
    if !(det.norm() > 1e-12 * hadamard_bound(m)) {
        return Err(Error::Singular {
            omega,
            condition: condition_number(m),
        });
    }
    lu.solve(rhs).ok_or(Error::Singular {
        omega,
        condition: f64::INFINITY,
    })
}

/// Resolvent coefficients on a tree for fixed `ω` and `u₀`.
#[derive(Clone, Debug)]
pub struct ResolventSolution<'a> {
    pub tree: &'a MetricTree,
    pub u0: &'a GraphFunction,
    pub omega: Complex64,
    pub grow: Vec<Complex64>,
    pub decay: Vec<Complex64>,
    pub coefficients: DVector<Complex64>,
}

pub fn solve_resolvent<'a>(tree: &'a MetricTree, u0: &'a GraphFunction, sys: &ResolventSystem) -> Result<ResolventSolution<'a>> {
    let coefficients = solve_dense(&sys.matrix, &sys.rhs, sys.omega)?;
    let ne = tree.edges().len();
    let mut grow = vec![ZERO; ne];
    let mut decay = vec![ZERO; ne];
    for (j, u) in sys.layout.columns().iter().enumerate() {
        match u.kind {
            Kind::Grow => grow[u.edge] = coefficients[j],
            Kind::Decay => decay[u.edge] = coefficients[j],
        }
    }
    Ok(ResolventSolution {
        tree,
        u0,
        omega: sys.omega,
        grow,
        decay,
        coefficients,
    })
}

/// Assembles and solves in one call.
pub fn resolvent<'a>(tree: &'a MetricTree, u0: &'a GraphFunction, omega: Complex64) -> Result<ResolventSolution<'a>> {
    let sys = assemble_system(tree, omega, u0)?;
    solve_resolvent(tree, u0, &sys)
}

impl ResolventSolution<'_> {
    /// `R_ω u₀` at coordinate `x` of `edge`.
    pub fn eval(&self, edge: usize, x: f64) -> Complex64 {
        let w = self.omega;
        let mut v = self.decay[edge] * (-w * x).exp() + self.u0.t_integral(self.tree, edge, w, x) / w;
        if self.grow[edge] != ZERO {
            v += self.grow[edge] * (w * x).exp();
        }
        v
    }

    /// `∂_x R_ω u₀`, exact.
    pub fn derivative(&self, edge: usize, x: f64) -> Complex64 {
        let w = self.omega;
        let mut v = -w * self.decay[edge] * (-w * x).exp() + self.u0.t_derivative(self.tree, edge, w, x) / w;
        if self.grow[edge] != ZERO {
            v += w * self.grow[edge] * (w * x).exp();
        }
        v
    }

    /// `-(R u)'' + ω² R u - u₀` by a five-point second difference (`h = 1e-3`).
    pub fn residual(&self, edge: usize, x: f64) -> Complex64 {
        let h = 1e-3;
        let f = |s: f64| self.eval(edge, x + s * h);
        let d2 = (-f(2.0) + 16.0 * f(1.0) - 30.0 * f(0.0) + 16.0 * f(-1.0) - f(-2.0)) / (12.0 * h * h);
        -d2 + self.omega * self.omega * f(0.0) - self.u0.eval(edge, x)
    }

    fn at_vertex(&self, p: Endpoint) -> (Complex64, Complex64) {
        let x = if p.at_end { self.tree.edges()[p.edge].length } else { 0.0 };
        let d = self.derivative(p.edge, x);
        (self.eval(p.edge, x), if p.at_end { -d } else { d })
    }

    /// Largest mismatch of the values from the incident edges at `v`,
    /// relative to `1 + |R u(v)|`.
    pub fn continuity_mismatch(&self, v: usize) -> f64 {
        let values: Vec<Complex64> = self.tree.incidence(v).into_iter().map(|p| self.at_vertex(p).0).collect();
        let spread = values
            .iter()
            .flat_map(|a| values.iter().map(move |b| (a - b).norm()))
            .fold(0.0, f64::max);
        spread / (1.0 + values[0].norm())
    }

    /// `|Σ ∂_n R u(v) - α(v) R u(v)|` with exact derivatives.
    pub fn flux_defect(&self, v: usize) -> f64 {
        let inc = self.tree.incidence(v);
        let value = self.at_vertex(inc[0]).0;
        let sum: Complex64 = inc.iter().map(|&p| self.at_vertex(p).1).sum();
        (sum - self.tree.alpha(v) * value).norm()
    }
}

/// Largest relative deviation between `c_j det D` and the determinant of `D`
/// with column `j` replaced by `T`.
pub fn cramer_check(sys: &ResolventSystem, sol: &ResolventSolution) -> f64 {
    let det = determinant(&sys.matrix);
    let mut worst = 0.0f64;
    for j in 0..sys.size() {
        let mut m = sys.matrix.clone();
        m.set_column(j, &sys.rhs);
        let num = determinant(&m);
        let lhs = sol.coefficients[j] * det;
        let scale = num.norm().max(lhs.norm()).max(1e-300);
        worst = worst.max((lhs - num).norm() / scale.max(1e-14 * det.norm() * sys.rhs.norm()));
    }
    worst
}
