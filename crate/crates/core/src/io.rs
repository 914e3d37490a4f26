//! JSON formats for trees, initial data, couplings and spectral data.
//!
//! Schema violations are reported with JSON-pointer paths.

use std::collections::HashMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde_json::{json, Map, Value};

use crate::couplings::{Coupling, CouplingSpec};
use crate::error::{Error, Result};
use crate::function::{GraphFunction, Packet};
use crate::graph::{Edge, MetricTree, ValidationReport, Vertex};
use crate::spectral::SpectralData;

fn schema(pointer: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema {
        pointer: pointer.into(),
        message: message.into(),
    }
}

fn escape(key: &str) -> String {
    key.replace('~', "~0").replace('/', "~1")
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str, at: &str) -> Result<&'a Value> {
    obj.get(key).ok_or_else(|| schema(at, format!("missing field `{key}`")))
}

fn as_object<'a>(v: &'a Value, at: &str) -> Result<&'a Map<String, Value>> {
    v.as_object().ok_or_else(|| schema(at, "expected an object"))
}

fn as_array<'a>(v: &'a Value, at: &str) -> Result<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| schema(at, "expected an array"))
}

fn as_str<'a>(v: &'a Value, at: &str) -> Result<&'a str> {
    v.as_str().ok_or_else(|| schema(at, "expected a string"))
}

fn as_f64(v: &Value, at: &str) -> Result<f64> {
    v.as_f64().ok_or_else(|| schema(at, "expected a number"))
}

fn as_usize(v: &Value, at: &str) -> Result<usize> {
    v.as_u64()
        .map(|n| n as usize)
        .ok_or_else(|| schema(at, "expected a nonnegative integer"))
}

fn number_field(obj: &Map<String, Value>, key: &str, at: &str) -> Result<f64> {
    as_f64(field(obj, key, at)?, &format!("{at}/{key}"))
}

/// One build step as written in the graph file.
#[derive(Clone, Debug, PartialEq)]
pub struct BuildSpec {
    pub attach_on: String,
    pub a: f64,
    pub alpha: f64,
    pub n: usize,
    pub vertex_id: Option<String>,
    pub edge_ids: Option<Vec<String>>,
}

/// A graph file after schema checks, before structural validation.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphDocument {
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
    pub root: usize,
    pub build: Option<Vec<BuildSpec>>,
}

impl GraphDocument {
    pub fn parse(text: &str) -> Result<Self> {
        let doc: Value = serde_json::from_str(text)?;
        let top = as_object(&doc, "")?;

        let mut vertices = Vec::new();
        let mut index = HashMap::new();
        for (i, v) in as_array(field(top, "vertices", "")?, "/vertices")?.iter().enumerate() {
            let at = format!("/vertices/{i}");
            let o = as_object(v, &at)?;
            let id = as_str(field(o, "id", &at)?, &format!("{at}/id"))?.to_string();
            let alpha = number_field(o, "alpha", &at)?;
            if index.insert(id.clone(), i).is_some() {
                return Err(schema(format!("{at}/id"), format!("duplicate vertex id `{id}`")));
            }
            vertices.push(Vertex { id, alpha });
        }
        let vertex = |id: &Value, at: &str| -> Result<usize> {
            let s = as_str(id, at)?;
            index.get(s).copied().ok_or_else(|| schema(at, format!("unknown vertex `{s}`")))
        };

        let mut edges = Vec::new();
        for (i, e) in as_array(field(top, "edges", "")?, "/edges")?.iter().enumerate() {
            let at = format!("/edges/{i}");
            let o = as_object(e, &at)?;
            let id = as_str(field(o, "id", &at)?, &format!("{at}/id"))?.to_string();
            let from = vertex(field(o, "from", &at)?, &format!("{at}/from"))?;
            let to = match o.get("to") {
                None | Some(Value::Null) => None,
                Some(t) => Some(vertex(t, &format!("{at}/to"))?),
            };
            let length = match field(o, "length", &at)? {
                Value::String(s) if s == "inf" => f64::INFINITY,
                Value::Number(n) => n.as_f64().unwrap_or(f64::NAN),
                _ => return Err(schema(format!("{at}/length"), "expected a number or \"inf\"")),
            };
            edges.push(Edge { id, from, to, length });
        }
        let root = vertex(field(top, "root", "")?, "/root")?;

        let build = match top.get("build") {
            None | Some(Value::Null) => None,
            Some(b) => {
                let mut steps = Vec::new();
                for (i, s) in as_array(b, "/build")?.iter().enumerate() {
                    let at = format!("/build/{i}");
                    let o = as_object(s, &at)?;
                    let edge_ids = match o.get("edge_ids") {
                        None | Some(Value::Null) => None,
                        Some(v) => Some(
                            as_array(v, &format!("{at}/edge_ids"))?
                                .iter()
                                .enumerate()
                                .map(|(k, x)| as_str(x, &format!("{at}/edge_ids/{k}")).map(str::to_string))
                                .collect::<Result<Vec<_>>>()?,
                        ),
                    };
                    steps.push(BuildSpec {
                        attach_on: as_str(field(o, "attach_on", &at)?, &format!("{at}/attach_on"))?.to_string(),
                        a: number_field(o, "a", &at)?,
                        alpha: number_field(o, "alpha", &at)?,
                        n: as_usize(field(o, "n", &at)?, &format!("{at}/n"))?,
                        vertex_id: match o.get("vertex_id") {
                            None | Some(Value::Null) => None,
                            Some(v) => Some(as_str(v, &format!("{at}/vertex_id"))?.to_string()),
                        },
                        edge_ids,
                    });
                }
                Some(steps)
            }
        };
        Ok(Self {
            vertices,
            edges,
            root,
            build,
        })
    }

    /// Structural report of the described tree (the initial star when a build
    /// sequence is present).
    pub fn validation(&self) -> ValidationReport {
        MetricTree::from_parts_unchecked(self.vertices.clone(), self.edges.clone(), self.root).validate()
    }

    /// The tree, replaying the build sequence when present.
    pub fn into_tree(self) -> Result<MetricTree> {
        let mut tree = MetricTree::from_parts(self.vertices, self.edges, self.root)?;
        if let Some(steps) = self.build {
            if !tree.build().is_empty() {
                return Err(schema(
                    "/build",
                    "with a build sequence, vertices and edges must describe the root star only",
                ));
            }
            for (i, s) in steps.into_iter().enumerate() {
                let e = tree
                    .edge_index(&s.attach_on)
                    .map_err(|_| schema(format!("/build/{i}/attach_on"), format!("unknown edge `{}`", s.attach_on)))?;
                let (default_vid, default_eids) = tree.fresh_ids(s.n.saturating_sub(1));
                tree = tree.attach_vertex_named(
                    e,
                    s.a,
                    s.alpha,
                    s.n,
                    s.vertex_id.unwrap_or(default_vid),
                    s.edge_ids.unwrap_or(default_eids),
                )?;
            }
        }
        Ok(tree)
    }
}

/// Parses and builds a tree from graph JSON.
pub fn parse_graph(text: &str) -> Result<MetricTree> {
    GraphDocument::parse(text)?.into_tree()
}

/// Graph JSON of the full tree (the construction sequence is not written).
pub fn graph_to_json(tree: &MetricTree) -> Value {
    let vid = |v: usize| tree.vertices()[v].id.clone();
    json!({
        "vertices": tree.vertices().iter().map(|v| json!({"id": v.id, "alpha": v.alpha})).collect::<Vec<_>>(),
        "edges": tree.edges().iter().map(|e| json!({
            "id": e.id,
            "from": vid(e.from),
            "to": e.to.map(vid),
            "length": if e.is_infinite() { json!("inf") } else { json!(e.length) },
        })).collect::<Vec<_>>(),
        "root": vid(tree.root()),
    })
}

/// Parses `{"edge_id": [{"A_re","A_im","x0","sigma","k"}, ...]}`.
pub fn parse_function(text: &str, tree: &MetricTree) -> Result<GraphFunction> {
    let doc: Value = serde_json::from_str(text)?;
    let top = as_object(&doc, "")?;
    let mut u = GraphFunction::zero(tree);
    for (edge_id, list) in top {
        let at = format!("/{}", escape(edge_id));
        let e = tree
            .edge_index(edge_id)
            .map_err(|_| schema(&at, format!("unknown edge `{edge_id}`")))?;
        for (i, p) in as_array(list, &at)?.iter().enumerate() {
            let pat = format!("{at}/{i}");
            let o = as_object(p, &pat)?;
            let a_re = number_field(o, "A_re", &pat)?;
            let a_im = match o.get("A_im") {
                None => 0.0,
                Some(v) => as_f64(v, &format!("{pat}/A_im"))?,
            };
            let sigma = number_field(o, "sigma", &pat)?;
            if !(sigma > 0.0) {
                return Err(schema(format!("{pat}/sigma"), "width must be positive"));
            }
            let x0 = number_field(o, "x0", &pat)?;
            let len = tree.edges()[e].length;
            if x0 < 0.0 || x0 > len {
                return Err(schema(format!("{pat}/x0"), format!("center must lie in [0, {len}]")));
            }
            let k = number_field(o, "k", &pat)?;
            u = u.with_packet(e, Packet::new(Complex64::new(a_re, a_im), x0, sigma, k));
        }
    }
    Ok(u)
}

/// Initial data as JSON in the same format.
pub fn function_to_json(u: &GraphFunction, tree: &MetricTree) -> Value {
    let mut out = Map::new();
    for (e, packets) in u.packets.iter().enumerate() {
        if packets.is_empty() {
            continue;
        }
        out.insert(
            tree.edges()[e].id.clone(),
            packets
                .iter()
                .map(|p| json!({"A_re": p.amplitude.re, "A_im": p.amplitude.im, "x0": p.center, "sigma": p.width, "k": p.wavenumber}))
                .collect(),
        );
    }
    Value::Object(out)
}

fn matrix(v: &Value, at: &str, d: usize) -> Result<DMatrix<f64>> {
    let rows = as_array(v, at)?;
    if rows.len() != d {
        return Err(schema(at, format!("expected {d} rows for a vertex of degree {d}")));
    }
    let mut m = DMatrix::zeros(d, d);
    for (i, r) in rows.iter().enumerate() {
        let rat = format!("{at}/{i}");
        let cells = as_array(r, &rat)?;
        if cells.len() != d {
            return Err(schema(&rat, format!("expected {d} entries")));
        }
        for (j, c) in cells.iter().enumerate() {
            m[(i, j)] = as_f64(c, &format!("{rat}/{j}"))?;
        }
    }
    Ok(m)
}

/// Parses `{"vertex_id": {"type":"delta","alpha":..} | {"type":"general","A":..,"B":..}}`.
/// Unlisted vertices keep the δ strength of the tree.
pub fn parse_couplings(text: &str, tree: &MetricTree) -> Result<CouplingSpec> {
    let doc: Value = serde_json::from_str(text)?;
    let top = as_object(&doc, "")?;
    let mut by_id = HashMap::new();
    for (vid, c) in top {
        let at = format!("/{}", escape(vid));
        let v = tree.vertex_index(vid).map_err(|_| schema(&at, format!("unknown vertex `{vid}`")))?;
        let o = as_object(c, &at)?;
        let d = tree.degree(v);
        let coupling = match as_str(field(o, "type", &at)?, &format!("{at}/type"))? {
            "delta" => Coupling::Delta(number_field(o, "alpha", &at)?),
            "general" => Coupling::General {
                a: matrix(field(o, "A", &at)?, &format!("{at}/A"), d)?,
                b: matrix(field(o, "B", &at)?, &format!("{at}/B"), d)?,
            },
            other => return Err(schema(format!("{at}/type"), format!("unknown coupling type `{other}`"))),
        };
        by_id.insert(vid.clone(), coupling);
    }
    CouplingSpec::from_ids(tree, by_id)
}

/// `{"omegas", "eigenvalues", "eigenfunctions": [{edge_id: {"c", "c_tilde"}}]}`
/// with complex numbers written as `[re, im]`.
pub fn spectral_to_json(spec: &SpectralData, tree: &MetricTree) -> Value {
    let pair = |z: Complex64| json!([z.re, z.im]);
    let eigenfunctions: Vec<Value> = spec
        .eigenfunctions
        .iter()
        .map(|phi| {
            let mut m = Map::new();
            for (e, edge) in tree.edges().iter().enumerate() {
                m.insert(edge.id.clone(), json!({"c": pair(phi.grow[e]), "c_tilde": pair(phi.decay[e])}));
            }
            Value::Object(m)
        })
        .collect();
    json!({
        "omegas": spec.eigen_omegas,
        "eigenvalues": spec.eigenvalues(),
        "eigenfunctions": eigenfunctions,
        "simplicity_gaps": spec.simplicity_gaps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const STAR_BUILD: &str = r#"{
        "vertices": [{"id": "r", "alpha": 1.5}],
        "edges": [
            {"id": "a", "from": "r", "to": null, "length": "inf"},
            {"id": "b", "from": "r", "length": "inf"},
            {"id": "c", "from": "r", "to": null, "length": "inf"}
        ],
        "root": "r",
        "build": [{"attach_on": "b", "a": 1.0, "alpha": 2.0, "n": 3, "vertex_id": "w", "edge_ids": ["b1", "b2"]}]
    }"#;

    #[test]
    fn build_sequence_is_replayed() {
        let t = parse_graph(STAR_BUILD).unwrap();
        assert_eq!(t.vertex_count(), 2);
        assert_eq!(t.build().len(), 1);
        assert_eq!(t.edge_coordinate_by_id("w", "b").unwrap(), 1.0);
        assert!(t.edge_index("b2").is_ok());
    }

    #[test]
    fn full_tree_round_trips() {
        let t = parse_graph(STAR_BUILD).unwrap();
        let back = parse_graph(&graph_to_json(&t).to_string()).unwrap();
        assert_eq!(back.vertices(), t.vertices());
        assert_eq!(back.edges(), t.edges());
    }

    #[test]
    fn schema_errors_carry_pointers() {
        let bad = r#"{"vertices":[{"id":"r","alpha":"x"}],"edges":[],"root":"r"}"#;
        match parse_graph(bad) {
            Err(Error::Schema { pointer, .. }) => assert_eq!(pointer, "/vertices/0/alpha"),
            other => panic!("{other:?}"),
        }
        let t = MetricTree::star(1.0, 2).unwrap();
        match parse_function(r#"{"e1":[{"A_re":1,"x0":1,"sigma":-1,"k":0}]}"#, &t) {
            Err(Error::Schema { pointer, .. }) => assert_eq!(pointer, "/e1/0/sigma"),
            other => panic!("{other:?}"),
        }
        match parse_couplings(r#"{"v1":{"type":"general","A":[[1,0]],"B":[[0,0],[0,0]]}}"#, &t) {
            Err(Error::Schema { pointer, .. }) => assert_eq!(pointer, "/v1/A"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_structure_is_reported() {
        let doc = GraphDocument::parse(r#"{"vertices":[{"id":"r","alpha":1}],"edges":[{"id":"a","from":"r","length":"inf"}],"root":"r"}"#)
            .unwrap();
        assert!(!doc.validation().is_valid());
        assert!(matches!(doc.into_tree(), Err(Error::InvalidTree(_))));
    }

    #[test]
    fn function_round_trips() {
        let t = MetricTree::star(1.0, 3).unwrap();
        let u = parse_function(r#"{"e2":[{"A_re":1.0,"A_im":-0.5,"x0":3,"sigma":0.7,"k":-1}]}"#, &t).unwrap();
        assert_eq!(u.packets[1].len(), 1);
        let back = parse_function(&function_to_json(&u, &t).to_string(), &t).unwrap();
        assert_eq!(back, u);
    }

    #[test]
    fn couplings_parse() {
        let t = MetricTree::star(1.0, 2).unwrap().attach_vertex("e2", 1.0, 0.5, 2).unwrap();
        let spec = parse_couplings(r#"{"v2":{"type":"general","A":[[1,0],[0,1]],"B":[[0,0],[0,0]]}}"#, &t).unwrap();
        assert_eq!(spec.vertices[0], Coupling::Delta(1.0));
        assert!(matches!(spec.vertices[1], Coupling::General { .. }));
    }
}
