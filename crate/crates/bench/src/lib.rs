//! Fixtures shared by the benchmarks.

use reslab::{Distribution, Graph, OperatorModel, TopologySpec};

/// Binary tree with uniform disorder of width 1.
pub fn tree_model(depth: usize, lambda: f64) -> OperatorModel {
    let g = Graph::build(&TopologySpec::tree(2, depth)).expect("tree builds");
    OperatorModel::new(g, Distribution::uniform(-0.5, 0.5), lambda, 1).expect("model builds")
}

/// Square box with uniform disorder of width 1.
pub fn box_model(side: usize, lambda: f64) -> OperatorModel {
    let g = Graph::build(&TopologySpec::boxed(&[side, side])).expect("box builds");
    OperatorModel::new(g, Distribution::uniform(-0.5, 0.5), lambda, 1).expect("model builds")
}
