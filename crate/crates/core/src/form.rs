//! The n-linear form `Σ_Q K(Q) Πᵢ ∫_Q fᵢ dσᵢ` and its dual functions.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::tree::{Instance, LeafFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// `Σ 1/pᵢ ≥ 1`: characterized by testing on indicators.
    Testing,
    /// `Σ 1/pᵢ < 1`: characterized by Wolff-type potentials.
    Wolff,
}

pub fn reciprocal_sum(exponents: &[f64]) -> f64 {
    exponents.iter().map(|p| 1.0 / p).sum()
}

/// Reciprocal sums within this distance below 1 count as the boundary
/// `Σ 1/pᵢ = 1` (e.g. `(2, 3, 6)` sums to `1 − 2⁻⁵³` in floating point).
pub const BOUNDARY_TOLERANCE: f64 = 1e-12;

pub fn regime(exponents: &[f64]) -> Regime {
    if reciprocal_sum(exponents) >= 1.0 - BOUNDARY_TOLERANCE {
        Regime::Testing
    } else {
        Regime::Wolff
    }
}

/// Cube integrals `∫_Q fᵢ dσᵢ` for each slot, flat cube order.
pub(crate) fn slot_integrals(instance: &Instance, functions: &[LeafFunction]) -> Vec<Vec<f64>> {
    instance
        .measures()
        .iter()
        .zip(functions)
        .map(|(m, f)| m.cube_integrals(f))
        .collect()
}

pub(crate) fn form_from_integrals(instance: &Instance, integrals: &[Vec<f64>]) -> f64 {
    instance
        .kernel()
        .values()
        .iter()
        .enumerate()
        .filter(|(_, k)| **k != 0.0)
        .map(|(q, k)| integrals.iter().fold(*k, |acc, ints| acc * ints[q]))
        .sum()
}

pub fn evaluate_form(instance: &Instance, functions: &[LeafFunction]) -> Result<f64> {
    instance.check_functions(functions)?;
    Ok(form_from_integrals(
        instance,
        &slot_integrals(instance, functions),
    ))
}

/// `g_j = Σ_Q K(Q) Π_{i≠j} ∫_Q fᵢ dσᵢ · 1_Q`, so that the form equals
/// `∫ g_j f_j dσ_j`. `others` holds the n−1 functions for slots `i ≠ j`
/// in slot order.
pub fn dual_function(instance: &Instance, j: usize, others: &[LeafFunction]) -> Result<LeafFunction> {
    instance.check_slot(j)?;
    let mut all = others.to_vec();
    if all.len() + 1 != instance.n() {
        return Err(crate::Error::FunctionCount {
            expected: instance.n() - 1,
            actual: others.len(),
        });
    }
    all.insert(j, LeafFunction::constant(instance.tree(), 0.0));
    instance.check_functions(&all)?;
    let integrals = slot_integrals(instance, &all);
    Ok(dual_from_integrals(instance, j, &integrals))
}

pub(crate) fn dual_from_integrals(instance: &Instance, j: usize, integrals: &[Vec<f64>]) -> LeafFunction {
    let weights: Vec<f64> = instance
        .kernel()
        .values()
        .iter()
        .enumerate()
        .map(|(q, k)| {
            integrals
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != j)
                .fold(*k, |acc, (_, ints)| acc * ints[q])
        })
        .collect();
    LeafFunction::from_raw(instance.tree().accumulate_down(&weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{depth_one, fixture_a};
    use crate::tree::{CubeId, Kernel};

    fn ones() -> LeafFunction {
        LeafFunction::constant(depth_one(), 1.0)
    }

    #[test]
    fn form_examples() {
        let a = fixture_a();
        assert_eq!(evaluate_form(&a, &[ones(), ones()]).unwrap(), 4.0);
        let zero = LeafFunction::constant(depth_one(), 0.0);
        assert_eq!(evaluate_form(&a, &[zero, ones()]).unwrap(), 0.0);

        let leaf_kernel = Kernel::from_entries(depth_one(), [(CubeId::new(1, 0), 1.0)]).unwrap();
        let moved = a.with_kernel(leaf_kernel).unwrap();
        assert_eq!(evaluate_form(&moved, &[ones(), ones()]).unwrap(), 1.0);

        assert!(evaluate_form(&a, &[ones()]).is_err());
    }

    #[test]
    fn dual_function_examples() {
        let a = fixture_a();
        let g = dual_function(&a, 1, &[ones()]).unwrap();
        assert_eq!(g.values(), &[2.0, 2.0]);

        let zero = a.with_kernel(Kernel::zero(depth_one())).unwrap();
        let g = dual_function(&zero, 0, &[ones()]).unwrap();
        assert_eq!(g.values(), &[0.0, 0.0]);

        let five = Kernel::from_entries(depth_one(), [(CubeId::new(1, 0), 5.0)]).unwrap();
        let g = dual_function(&a.with_kernel(five).unwrap(), 0, &[ones()]).unwrap();
        assert_eq!(g.values(), &[5.0, 0.0]);

        assert!(dual_function(&a, 2, &[ones()]).is_err());
        assert!(dual_function(&a, 0, &[ones(), ones()]).is_err());
    }

    #[test]
    fn regime_examples() {
        assert_eq!(regime(&[2.0, 2.0]), Regime::Testing);
        assert_eq!(regime(&[4.0, 4.0]), Regime::Wolff);
        assert_eq!(regime(&[2.0, 3.0, 6.0]), Regime::Testing);
    }
}
