//! Small hand-checkable instances on the binary tree of depth 1.

use crate::tree::{CubeId, DyadicTree, Instance, Kernel, LeafFunction, Measure};

pub fn depth_one() -> DyadicTree {
    DyadicTree::new(2, 1).expect("valid tree")
}

fn root_kernel() -> Kernel {
    Kernel::from_entries(depth_one(), [(CubeId::ROOT, 1.0)]).expect("valid kernel")
}

fn unit_masses() -> Measure {
    Measure::new(depth_one(), vec![1.0, 1.0]).expect("valid measure")
}

/// Unit masses, kernel 1 on the root only, `p = (2, 2)`.
pub fn fixture_a() -> Instance {
    Instance::new(root_kernel(), vec![unit_masses(), unit_masses()], vec![2.0, 2.0])
        .expect("valid instance")
}

/// Leaf masses `(1, 3)` and the function `(4, 0)`.
pub fn fixture_b() -> (Measure, LeafFunction) {
    (
        Measure::new(depth_one(), vec![1.0, 3.0]).expect("valid measure"),
        LeafFunction::new(vec![4.0, 0.0]).expect("valid function"),
    )
}

/// As [`fixture_a`] but `p = (4, 4)`, so `Σ 1/pᵢ < 1`.
pub fn fixture_c() -> Instance {
    Instance::new(root_kernel(), vec![unit_masses(), unit_masses()], vec![4.0, 4.0])
        .expect("valid instance")
}
