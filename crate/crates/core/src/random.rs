//! Seeded random trees for tests, benchmarks and the command line.

use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::MetricTree;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    /// Every vertex is attached to the previous one.
    Caterpillar,
    /// Vertices are attached on any external edge.
    Bushy,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TreeParams {
    pub vertices: usize,
    pub shape: Shape,
    /// Strengths are drawn uniformly from this range.
    pub alpha: (f64, f64),
    /// Strengths closer to zero than this are redrawn.
    pub min_abs_alpha: f64,
    pub length: (f64, f64),
    /// Inclusive range of vertex degrees.
    pub degree: (usize, usize),
}

impl TreeParams {
    /// Positive strengths in `[0.2, 3]`, lengths in `[0.3, 3]`, degrees 2 to 4.
    pub fn positive(vertices: usize, shape: Shape) -> Self {
        Self {
            vertices,
            shape,
            alpha: (0.2, 3.0),
            min_abs_alpha: 0.0,
            length: (0.3, 3.0),
            degree: (2, 4),
        }
    }

    /// Strengths in `[-3, 3]` away from zero.
    pub fn mixed(vertices: usize, shape: Shape) -> Self {
        Self {
            alpha: (-3.0, 3.0),
            min_abs_alpha: 0.05,
            ..Self::positive(vertices, shape)
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn strength<R: Rng>(rng: &mut R, p: &TreeParams) -> f64 {
    loop {
        let a = rng.random_range(p.alpha.0..=p.alpha.1);
        if a.abs() >= p.min_abs_alpha {
            return a;
        }
    }
}

/// A random tree with `p.vertices` vertices.
pub fn random_tree<R: Rng>(rng: &mut R, p: &TreeParams) -> MetricTree {
    let mut tree = MetricTree::star(strength(rng, p), rng.random_range(p.degree.0..=p.degree.1)).expect("valid star");
    for _ in 1..p.vertices.max(1) {
        let candidates: Vec<usize> = match p.shape {
            Shape::Caterpillar => {
                let last = tree.vertex_count() - 1;
                tree.external_edges().filter(|&e| tree.edges()[e].from == last).collect()
            }
            Shape::Bushy => tree.external_edges().collect(),
        };
        let e = candidates[rng.random_range(0..candidates.len())];
        let a = rng.random_range(p.length.0..=p.length.1);
        let n = rng.random_range(p.degree.0..=p.degree.1);
        tree = tree.attach_vertex_at(e, a, strength(rng, p), n).expect("valid attachment");
    }
    tree
}

/// Alternating caterpillar and bushy trees with 1 to `max_vertices` vertices.
pub fn tree_family(seed: u64, count: usize, max_vertices: usize, positive: bool) -> Vec<MetricTree> {
    let mut r = rng(seed);
    (0..count)
        .map(|i| {
            let shape = if i % 2 == 0 { Shape::Caterpillar } else { Shape::Bushy };
            let vertices = r.random_range(1..=max_vertices);
            let p = if positive {
                TreeParams::positive(vertices, shape)
            } else {
                TreeParams::mixed(vertices, shape)
            };
            random_tree(&mut r, &p)
        })
        .collect()
}
