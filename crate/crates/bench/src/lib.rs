//! Fixtures shared by the benchmarks.

use deltatree::random::{random_tree, rng, Shape, TreeParams};
use deltatree::{GraphFunction, MetricTree, Packet};

pub const SEED: u64 = 7;

/// Seeded positive-strength tree with `p` vertices.
pub fn positive_tree(p: usize) -> MetricTree {
    random_tree(&mut rng(SEED), &TreeParams::positive(p, Shape::Bushy))
}

/// Seeded tree with strengths of both signs.
pub fn mixed_tree(p: usize) -> MetricTree {
    random_tree(&mut rng(SEED), &TreeParams::mixed(p, Shape::Caterpillar))
}

/// Unit-mass Gaussian moving toward the root on the first external edge.
pub fn packet(tree: &MetricTree) -> GraphFunction {
    let e = tree.external_edges().next().expect("trees have external edges");
    GraphFunction::zero(tree).with_packet(e, Packet::unit_mass(6.0, 1.0, -1.0))
}
