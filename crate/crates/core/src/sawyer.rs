//! Testing constants: for each slot `j` and cube `Q`, the best constant of
//!
//! ```text
//! Σ_{Q' ⊆ Q} K(Q') σ_j(Q') Π_{i≠j} ∫_{Q'} fᵢ dσᵢ ≤ C σ_j(Q)^{1/p_j} Π_{i≠j} ‖fᵢ‖_{L^{pᵢ}(σᵢ)},
//! ```
//!
//! i.e. the embedding tested on `f_j = 1_Q`. `Q' ⊆ Q` includes `Q` itself.
//! Cubes with `σ_j(Q) = 0` have a vanishing left side and are given the
//! value 0.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extremal::{best_constant, AscentOptions};
use crate::form::{dual_function, regime, Regime};
use crate::tree::{dual_exponent, CubeId, Instance, Kernel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotTesting {
    /// 1-based slot.
    pub j: usize,
    pub worst_cube: CubeId,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestingReport {
    pub overall: f64,
    pub per_j: Vec<SlotTesting>,
    /// Values are exact dual norms (n ≤ 2) rather than ascent lower bounds.
    pub exact: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// The (n−1)-linear problem obtained by fixing `f_j = 1_Q`: kernel
/// `K(Q')σ_j(Q')` on `Q' ⊆ Q` and zero elsewhere, slot `j` removed.
pub fn localized_instance(instance: &Instance, j: usize, cube: CubeId) -> Result<Instance> {
    instance.check_slot(j)?;
    let tree = instance.tree();
    tree.check(cube)?;
    let sigma = instance.measure(j);
    let mut kernel = Kernel::zero(tree);
    for inner in tree.subtree(cube) {
        kernel.set(inner, instance.kernel().get(inner) * sigma.of(inner))?;
    }
    let mut measures = instance.measures().to_vec();
    let mut exponents = instance.exponents().to_vec();
    measures.remove(j);
    exponents.remove(j);
    Instance::new(kernel, measures, exponents)
}

pub fn testing_constant_at(
    instance: &Instance,
    j: usize,
    cube: CubeId,
    options: &AscentOptions,
) -> Result<f64> {
    let local = localized_instance(instance, j, cube)?;
    let mass = instance.measure(j).of(cube);
    if mass <= 0.0 {
        return Ok(0.0);
    }
    let numerator = match local.n() {
        0 => local.kernel().values().iter().sum(),
        1 => {
            let g = dual_function(&local, 0, &[])?;
            local
                .measure(0)
                .lp_norm(&g, dual_exponent(local.exponents()[0])?)
        }
        _ => best_constant(&local, options)?.value,
    };
    Ok(numerator / mass.powf(1.0 / instance.exponents()[j]))
}

pub fn sawyer_constant(instance: &Instance, options: &AscentOptions) -> Result<TestingReport> {
    let tree = instance.tree();
    let cubes: Vec<CubeId> = tree.cubes().collect();
    let mut per_j = Vec::with_capacity(instance.n());
    for j in 0..instance.n() {
        let sigma = instance.measure(j);
        let values = cubes
            .par_iter()
            .map(|&cube| {
                if sigma.of(cube) > 0.0 {
                    testing_constant_at(instance, j, cube, options).map(Some)
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let mut worst = SlotTesting {
            j: j + 1,
            worst_cube: tree.root(),
            value: 0.0,
        };
        let mut seen = false;
        for (cube, value) in cubes.iter().zip(values) {
            if let Some(value) = value {
                if !seen || value > worst.value {
                    worst.worst_cube = *cube;
                    worst.value = value;
                    seen = true;
                }
            }
        }
        per_j.push(worst);
    }
    let overall = per_j.iter().map(|s| s.value).fold(0.0, f64::max);
    let warning = (regime(instance.exponents()) == Regime::Wolff).then(|| {
        "Σ1/pᵢ < 1: testing constants are computed but do not characterize c₁ here".to_string()
    });
    Ok(TestingReport {
        overall,
        per_j,
        exact: instance.n() <= 2,
        warning,
    })
}

/// `(∫_Q (Σ_{Q'⊆Q} K(Q')σ_j(Q')1_{Q'})^{p_i′} dσ_i)^{1/p_i′} / σ_j(Q)^{1/p_j}`
/// for `n = 2`, `i ≠ j`, evaluated leaf by leaf.
pub fn bilinear_testing_closed_form(instance: &Instance, j: usize, cube: CubeId) -> Result<f64> {
    if instance.n() != 2 {
        return Err(Error::Arity {
            expected: 2,
            actual: instance.n(),
        });
    }
    instance.check_slot(j)?;
    let tree = instance.tree();
    tree.check(cube)?;
    let i = 1 - j;
    let sigma_j = instance.measure(j);
    let sigma_i = instance.measure(i);
    let mass = sigma_j.of(cube);
    if mass <= 0.0 {
        return Ok(0.0);
    }
    let q = dual_exponent(instance.exponents()[i])?;
    let masses = sigma_i.leaf_masses();
    let mut total = 0.0;
    for x in tree.leaf_range(cube) {
        if masses[x] <= 0.0 {
            continue;
        }
        let h: f64 = (cube.level..=tree.depth())
            .map(|level| tree.ancestor_of_leaf(x, level))
            .map(|inner| instance.kernel().get(inner) * sigma_j.of(inner))
            .sum();
        total += h.powf(q) * masses[x];
    }
    Ok(total.powf(1.0 / q) / mass.powf(1.0 / instance.exponents()[j]))
}
