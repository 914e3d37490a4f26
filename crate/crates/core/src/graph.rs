//! Rooted metric trees with per-vertex delta strengths.
//!
//! Edges are oriented away from the root. A finite edge `e` is identified with
//! `[0, l_e]`, coordinate 0 sitting on its initial vertex; an infinite edge is a
//! ray `[0, ∞)` attached to its single (initial) vertex.
//!
//! Every tree carries a construction sequence: the root star followed by the
//! attachment steps that grow it one vertex at a time. Determinant recursions
//! and the unknown ordering of the resolvent system replay this sequence.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Vertex {
    pub id: String,
    pub alpha: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub id: String,
    pub from: usize,
    /// Terminal vertex; `None` for an infinite edge.
    pub to: Option<usize>,
    /// `f64::INFINITY` for infinite edges.
    pub length: f64,
}

impl Edge {
    pub fn is_infinite(&self) -> bool {
        self.to.is_none()
    }
}

/// One attachment step: `vertex` was placed at the end of `edge` (which was
/// infinite until then) and `new_edges` emanate from it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BuildStep {
    pub edge: usize,
    pub vertex: usize,
    pub new_edges: Vec<usize>,
}

/// Endpoint of an edge seen from one of its vertices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Endpoint {
    pub edge: usize,
    /// `true` when the vertex sits at `x = l_e` (terminal end).
    pub at_end: bool,
}

#[derive(Clone, Debug)]
pub struct MetricTree {
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    root: usize,
    build: Vec<BuildStep>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            write!(f, "valid")
        } else {
            write!(f, "{}", self.violations.join("; "))
        }
    }
}

impl MetricTree {
    /// Star with one vertex of strength `alpha` and `n` infinite edges.
    pub fn star(alpha: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::BadDegree(n));
        }
        if !alpha.is_finite() {
            return Err(Error::InvalidTree(format!("strength {alpha} is not finite")));
        }
        let vertices = vec![Vertex { id: "v1".into(), alpha }];
        let edges = (0..n)
            .map(|j| Edge {
                id: format!("e{}", j + 1),
                from: 0,
                to: None,
                length: f64::INFINITY,
            })
            .collect();
        Ok(Self {
            vertices,
            edges,
            root: 0,
            build: Vec::new(),
        })
    }

    /// The real line with delta interactions of strengths `alphas` separated
    /// by the gaps `gaps` (`gaps.len() == alphas.len() - 1`).
    ///
    /// Edge `e1` is the left half-line; the right half-line is the last edge.
    pub fn line(alphas: &[f64], gaps: &[f64]) -> Result<Self> {
        if alphas.is_empty() || gaps.len() + 1 != alphas.len() {
            return Err(Error::InvalidArgument(format!(
                "line needs k strengths and k-1 gaps, got {} and {}",
                alphas.len(),
                gaps.len()
            )));
        }
        let mut tree = Self::star(alphas[0], 2)?;
        for (alpha, gap) in alphas[1..].iter().zip(gaps) {
            let last = tree.edges.len() - 1;
            tree = tree.attach_vertex_at(last, *gap, *alpha, 2)?;
        }
        Ok(tree)
    }

    /// Builds a tree from explicit parts and derives a depth-first
    /// construction sequence. Fails with the validation report if invalid.
    pub fn from_parts(vertices: Vec<Vertex>, edges: Vec<Edge>, root: usize) -> Result<Self> {
        let mut tree = Self::from_parts_unchecked(vertices, edges, root);
        let report = tree.validate();
        if !report.is_valid() {
            return Err(Error::InvalidTree(report.to_string()));
        }
        tree.build = tree.derive_build();
        Ok(tree)
    }

    /// Stores the parts as given. Only `validate` is meaningful on the result
    /// until it has been checked.
    pub fn from_parts_unchecked(vertices: Vec<Vertex>, edges: Vec<Edge>, root: usize) -> Self {
        Self {
            vertices,
            edges,
            root,
            build: Vec::new(),
        }
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn build(&self) -> &[BuildStep] {
        &self.build
    }

    pub fn alpha(&self, v: usize) -> f64 {
        self.vertices[v].alpha
    }

    pub fn vertex_index(&self, id: &str) -> Result<usize> {
        self.vertices.iter().position(|v| v.id == id).ok_or_else(|| Error::Unknown {
            kind: "vertex",
            id: id.to_string(),
        })
    }

    pub fn edge_index(&self, id: &str) -> Result<usize> {
        self.edges.iter().position(|e| e.id == id).ok_or_else(|| Error::Unknown {
            kind: "edge",
            id: id.to_string(),
        })
    }

    pub fn degree(&self, v: usize) -> usize {
        self.edges.iter().filter(|e| e.from == v || e.to == Some(v)).count()
    }

    /// Ordered incidence at `v`: the incoming edge first (absent at the root),
    /// then the outgoing edges in creation order.
    pub fn incidence(&self, v: usize) -> Vec<Endpoint> {
        let mut out = Vec::with_capacity(self.degree(v));
        if let Some(e) = self.edges.iter().position(|e| e.to == Some(v)) {
            out.push(Endpoint { edge: e, at_end: true });
        }
        out.extend(
            self.edges
                .iter()
                .enumerate()
                .filter(|(_, e)| e.from == v)
                .map(|(i, _)| Endpoint { edge: i, at_end: false }),
        );
        out
    }

    pub fn internal_edges(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.edges.len()).filter(|&e| !self.edges[e].is_infinite())
    }

    pub fn external_edges(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.edges.len()).filter(|&e| self.edges[e].is_infinite())
    }

    /// Number of resolvent unknowns, `2|I| + |Ext|`.
    pub fn unknown_count(&self) -> usize {
        self.edges.iter().map(|e| if e.is_infinite() { 1 } else { 2 }).sum()
    }

    pub fn max_finite_length(&self) -> Option<f64> {
        self.edges
            .iter()
            .filter(|e| !e.is_infinite())
            .map(|e| e.length)
            .fold(None, |m, l| Some(m.map_or(l, |m: f64| m.max(l))))
    }

    /// Vertices present after `stage` construction stages (`1..=p`), in
    /// build order.
    pub fn stage_vertices(&self, stage: usize) -> Vec<usize> {
        let mut vs = vec![self.root];
        vs.extend(self.build.iter().take(stage.saturating_sub(1)).map(|s| s.vertex));
        vs
    }

    /// Coordinate of vertex `v` on edge `e`: 0 at the initial vertex, `l_e` at
    /// the terminal one.
    pub fn edge_coordinate(&self, v: usize, e: usize) -> Result<f64> {
        let edge = &self.edges[e];
        if edge.from == v {
            Ok(0.0)
        } else if edge.to == Some(v) {
            Ok(edge.length)
        } else {
            Err(Error::NotIncident {
                vertex: self.vertices[v].id.clone(),
                edge: edge.id.clone(),
            })
        }
    }

    /// Id-based wrapper around [`MetricTree::edge_coordinate`].
    pub fn edge_coordinate_by_id(&self, vertex: &str, edge: &str) -> Result<f64> {
        self.edge_coordinate(self.vertex_index(vertex)?, self.edge_index(edge)?)
    }

    /// Places a new vertex of strength `alpha` at distance `a` on the
    /// infinite edge `edge_id`, with `n - 1` new infinite edges.
    pub fn attach_vertex(&self, edge_id: &str, a: f64, alpha: f64, n: usize) -> Result<Self> {
        let e = self.edge_index(edge_id)?;
        self.attach_vertex_at(e, a, alpha, n)
    }

    pub fn attach_vertex_at(&self, e: usize, a: f64, alpha: f64, n: usize) -> Result<Self> {
        let ids = self.fresh_ids(n - 1);
        self.attach_vertex_named(e, a, alpha, n, ids.0, ids.1)
    }

    pub(crate) fn attach_vertex_named(
        &self,
        e: usize,
        a: f64,
        alpha: f64,
        n: usize,
        vertex_id: String,
        edge_ids: Vec<String>,
    ) -> Result<Self> {
        if e >= self.edges.len() {
            return Err(Error::Unknown {
                kind: "edge",
                id: format!("#{e}"),
            });
        }
        if !self.edges[e].is_infinite() {
            return Err(Error::EdgeNotInfinite(self.edges[e].id.clone()));
        }
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::BadLength(a));
        }
        if n < 2 {
            return Err(Error::BadDegree(n));
        }
        if !alpha.is_finite() {
            return Err(Error::InvalidTree(format!("strength {alpha} is not finite")));
        }
        if edge_ids.len() != n - 1 {
            return Err(Error::InvalidArgument(format!(
                "expected {} new edge ids, got {}",
                n - 1,
                edge_ids.len()
            )));
        }
        let taken: HashSet<&str> = self
            .vertices
            .iter()
            .map(|v| v.id.as_str())
            .chain(self.edges.iter().map(|e| e.id.as_str()))
            .collect();
        for id in std::iter::once(&vertex_id).chain(&edge_ids) {
            if taken.contains(id.as_str()) {
                return Err(Error::InvalidArgument(format!("id `{id}` already in use")));
            }
        }
        let mut tree = self.clone();
        let v = tree.vertices.len();
        tree.vertices.push(Vertex { id: vertex_id, alpha });
        tree.edges[e].to = Some(v);
        tree.edges[e].length = a;
        let first_new = tree.edges.len();
        for id in edge_ids {
            tree.edges.push(Edge {
                id,
                from: v,
                to: None,
                length: f64::INFINITY,
            });
        }
        tree.build.push(BuildStep {
            edge: e,
            vertex: v,
            new_edges: (first_new..tree.edges.len()).collect(),
        });
        Ok(tree)
    }

    pub(crate) fn fresh_ids(&self, new_edges: usize) -> (String, Vec<String>) {
        let taken: HashSet<&str> = self
            .vertices
            .iter()
            .map(|v| v.id.as_str())
            .chain(self.edges.iter().map(|e| e.id.as_str()))
            .collect();
        let next = |prefix: &str, start: usize| {
            let mut k = start;
            loop {
                let id = format!("{prefix}{k}");
                if !taken.contains(id.as_str()) {
                    return (id, k + 1);
                }
                k += 1;
            }
        };
        let (vid, _) = next("v", self.vertices.len() + 1);
        let mut ids = Vec::with_capacity(new_edges);
        let mut k = self.edges.len() + 1;
        for _ in 0..new_edges {
            let (id, nk) = next("e", k);
            ids.push(id);
            k = nk;
        }
        (vid, ids)
    }

    /// Checks every structural invariant; an empty report means valid.
    pub fn validate(&self) -> ValidationReport {
        let mut bad = Vec::new();
        let nv = self.vertices.len();
        if nv == 0 {
            bad.push("tree has no vertices".to_string());
            return ValidationReport { violations: bad };
        }
        if self.root >= nv {
            bad.push("root is not a vertex".to_string());
        }
        let mut seen = HashSet::new();
        for v in &self.vertices {
            if !seen.insert(v.id.as_str()) {
                bad.push(format!("duplicate vertex id `{}`", v.id));
            }
            if !v.alpha.is_finite() {
                bad.push(format!("vertex `{}` has non-finite strength", v.id));
            }
        }
        let mut seen_e = HashSet::new();
        for e in &self.edges {
            if !seen_e.insert(e.id.as_str()) {
                bad.push(format!("duplicate edge id `{}`", e.id));
            }
            if e.from >= nv || e.to.is_some_and(|t| t >= nv) {
                bad.push(format!("edge `{}` references a missing vertex", e.id));
                continue;
            }
            match e.to {
                Some(t) => {
                    if t == e.from {
                        bad.push(format!("edge `{}` is a loop", e.id));
                    }
                    if !(e.length.is_finite() && e.length > 0.0) {
                        bad.push(format!("finite edge `{}` must have positive finite length", e.id));
                    }
                }
                None => {
                    if e.length != f64::INFINITY {
                        bad.push(format!("infinite edge `{}` must have infinite length and a single vertex", e.id));
                    }
                }
            }
        }
        if !bad.is_empty() {
            return ValidationReport { violations: bad };
        }
        for v in 0..nv {
            let d = self.degree(v);
            if d < 2 {
                bad.push(format!("external vertex present: `{}` has degree {d}", self.vertices[v].id));
            }
        }
        let finite: Vec<&Edge> = self.edges.iter().filter(|e| !e.is_infinite()).collect();
        if finite.len() + 1 != nv {
            bad.push(format!("not a tree: {} finite edges for {} vertices", finite.len(), nv));
        }
        let mut incoming = vec![0usize; nv];
        for e in &finite {
            incoming[e.to.unwrap()] += 1;
        }
        for (v, &count) in incoming.iter().enumerate() {
            let expected = usize::from(v != self.root);
            if count != expected {
                bad.push(format!(
                    "orientation: vertex `{}` has {count} incoming edges, expected {expected} (edges must point away from the root)",
                    self.vertices[v].id
                ));
            }
        }
        if self.root < nv {
            let mut reached = vec![false; nv];
            let mut stack = vec![self.root];
            reached[self.root] = true;
            while let Some(v) = stack.pop() {
                for e in &finite {
                    let next = if e.from == v {
                        e.to.unwrap()
                    } else if e.to == Some(v) {
                        e.from
                    } else {
                        continue;
                    };
                    if !reached[next] {
                        reached[next] = true;
                        stack.push(next);
                    }
                }
            }
            if reached.iter().any(|r| !r) {
                bad.push("graph is not connected".to_string());
            }
        }
        ValidationReport { violations: bad }
    }

    /// Depth-first construction sequence of a valid tree.
    fn derive_build(&self) -> Vec<BuildStep> {
        let mut steps = Vec::new();
        let mut stack: Vec<usize> = self.outgoing_finite(self.root).into_iter().rev().collect();
        while let Some(e) = stack.pop() {
            let child = self.edges[e].to.unwrap();
            steps.push(BuildStep {
                edge: e,
                vertex: child,
                new_edges: self
                    .edges
                    .iter()
                    .enumerate()
                    .filter(|(_, x)| x.from == child)
                    .map(|(i, _)| i)
                    .collect(),
            });
            stack.extend(self.outgoing_finite(child).into_iter().rev());
        }
        steps
    }

    fn outgoing_finite(&self, v: usize) -> Vec<usize> {
        self.edges
            .iter()
            .enumerate()
            .filter(|(_, e)| e.from == v && !e.is_infinite())
            .map(|(i, _)| i)
            .collect()
    }

    /// Map from edge id to index.
    pub fn edge_ids(&self) -> HashMap<&str, usize> {
        self.edges.iter().enumerate().map(|(i, e)| (e.id.as_str(), i)).collect()
    }
}
