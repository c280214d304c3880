//! Discrete Wolff potentials and the permutation-indexed constants that
//! characterize the embedding when `Σ 1/pᵢ < 1`.
//!
//! For a permutation `φ` the exponent ladder is
//! `1/r_j + Σ_{i≤j} 1/p_{φ(i)} = 1` (`j < n`) and `1/r + Σ_i 1/p_{φ(i)} = 1`.
//! The kernels `K_1 … K_{n−1}` absorb one measure per stage:
//!
//! ```text
//! K_j(Q) = K_{j−1}(Q) σ_{φ(j)}(Q) ( σ_{φ(j)}(Q)⁻¹ Σ_{Q'⊆Q} K_{j−1}(Q') Π_{i≥j} σ_{φ(i)}(Q') )^{r_j/r_{j−1} − 1}
//! ```
//!
//! with `K_0 = K` and `r_0 = 1`. The constant for `φ` is
//! `‖(Σ_Q K_{n−1}(Q) 1_Q)^{1/r_{n−1}}‖_{L^r(σ_{φ(n)})}`.

use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::form::{reciprocal_sum, BOUNDARY_TOLERANCE};
use crate::tree::{dual_exponent, lp_norm_slice, DyadicTree, Instance, Kernel, LeafFunction, Measure};

pub const MAX_PERMUTATION_ARITY: usize = 6;

/// Tolerance for the ladder identities checked at construction.
pub const LADDER_TOLERANCE: f64 = 1e-12;

/// `𝒲^p_{K,μ}[ν](x) = Σ_{Q∋x} K(Q)μ(Q) (μ(Q)⁻¹ Σ_{Q'⊆Q} K(Q')μ(Q')ν(Q'))^{p−1}`.
/// Cubes with `μ(Q) = 0` contribute nothing.
pub fn wolff_potential(kernel: &Kernel, mu: &Measure, nu: &Measure, p: f64) -> Result<LeafFunction> {
    dual_exponent(p)?;
    let tree = kernel.tree();
    let k = kernel.values();
    let (mu_q, nu_q) = (mu.cube_masses(), nu.cube_masses());
    let inner: Vec<f64> = (0..tree.cube_count())
        .map(|q| k[q] * mu_q[q] * nu_q[q])
        .collect();
    let inner = tree.subtree_sums(&inner);
    let terms: Vec<f64> = (0..tree.cube_count())
        .map(|q| {
            if mu_q[q] > 0.0 {
                k[q] * mu_q[q] * (inner[q] / mu_q[q]).powf(p - 1.0)
            } else {
                0.0
            }
        })
        .collect();
    Ok(LeafFunction::from_raw(tree.accumulate_down(&terms)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentLadder {
    /// 0-based: `permutation[i] = φ(i+1) − 1`.
    pub permutation: Vec<usize>,
    /// `r_1 … r_{n−1}`.
    pub ladder: Vec<f64>,
    pub r: f64,
}

/// Residuals of the ladder identities: the defining chain, the
/// ratio form `r_{i−1}/r_i + r_{i−1}/p_{φ(i)} = 1` (also with `r` in the
/// last slot) and the step form `1/r_i + 1/p_{φ(i)} = 1/r_{i−1}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LadderResiduals {
    pub defining: f64,
    pub ratio: f64,
    pub step: f64,
}

impl LadderResiduals {
    pub fn max(&self) -> f64 {
        self.defining.max(self.ratio).max(self.step)
    }
}

impl ExponentLadder {
    pub fn n(&self) -> usize {
        self.permutation.len()
    }

    /// `[r_1, …, r_{n−1}, r]`.
    pub fn chain(&self) -> Vec<f64> {
        let mut chain = self.ladder.clone();
        chain.push(self.r);
        chain
    }

    pub fn residuals(&self, exponents: &[f64]) -> LadderResiduals {
        let p = |i: usize| exponents[self.permutation[i]];
        let chain = self.chain();
        let mut out = LadderResiduals::default();
        let mut partial = 0.0;
        for (i, r) in chain.iter().enumerate() {
            partial += 1.0 / p(i);
            out.defining = out.defining.max((1.0 / r + partial - 1.0).abs());
        }
        for i in 1..chain.len() {
            let (prev, next) = (chain[i - 1], chain[i]);
            out.ratio = out.ratio.max((prev / next + prev / p(i) - 1.0).abs());
            out.step = out.step.max((1.0 / next + 1.0 / p(i) - 1.0 / prev).abs());
        }
        out
    }
}

fn check_permutation(n: usize, phi: &[usize]) -> Result<()> {
    let mut seen = vec![false; n];
    if phi.len() != n || phi.iter().any(|&i| i >= n || std::mem::replace(&mut seen[i], true)) {
        return Err(Error::InvalidPermutation(phi.to_vec()));
    }
    Ok(())
}

pub fn exponent_ladder(exponents: &[f64], phi: &[usize]) -> Result<ExponentLadder> {
    for &p in exponents {
        dual_exponent(p)?;
    }
    let n = exponents.len();
    check_permutation(n, phi)?;
    let total = reciprocal_sum(exponents);
    if total >= 1.0 - BOUNDARY_TOLERANCE || n == 0 {
        return Err(Error::LadderUndefined(total));
    }
    let mut partial = 0.0;
    let mut ladder = Vec::with_capacity(n.saturating_sub(1));
    for &slot in &phi[..n - 1] {
        partial += 1.0 / exponents[slot];
        ladder.push(1.0 / (1.0 - partial));
    }
    let r = 1.0 / (1.0 - total);
    let built = ExponentLadder {
        permutation: phi.to_vec(),
        ladder,
        r,
    };
    let chain = built.chain();
    assert!(
        chain.windows(2).all(|w| w[0] < w[1]) && chain.iter().all(|r| *r > 1.0),
        "exponent ladder must increase: {chain:?}"
    );
    let residuals = built.residuals(exponents);
    assert!(
        residuals.max() <= LADDER_TOLERANCE * r.max(1.0),
        "ladder identities violated: {residuals:?}"
    );
    Ok(built)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IteratedKernels {
    pub ladder: ExponentLadder,
    /// `K_1 … K_{n−1}`.
    pub stages: Vec<Kernel>,
}

pub fn iterated_kernels(instance: &Instance, phi: &[usize]) -> Result<IteratedKernels> {
    let n = instance.n();
    if n < 2 {
        return Err(Error::Arity {
            expected: 2,
            actual: n,
        });
    }
    let ladder = exponent_ladder(instance.exponents(), phi)?;
    let tree = instance.tree();
    let masses: Vec<&[f64]> = phi
        .iter()
        .map(|&slot| instance.measure(slot).cube_masses())
        .collect();

    let mut previous = instance.kernel().values().to_vec();
    let mut previous_r = 1.0;
    let mut stages = Vec::with_capacity(n - 1);
    for stage in 0..n - 1 {
        let r = ladder.ladder[stage];
        let power = r / previous_r - 1.0;
        let weighted: Vec<f64> = (0..tree.cube_count())
            .map(|q| masses[stage..].iter().fold(previous[q], |acc, m| acc * m[q]))
            .collect();
        let inner = tree.subtree_sums(&weighted);
        let sigma = masses[stage];
        let next: Vec<f64> = (0..tree.cube_count())
            .map(|q| {
                if sigma[q] > 0.0 && inner[q] > 0.0 {
                    previous[q] * sigma[q] * (inner[q] / sigma[q]).powf(power)
                } else {
                    0.0
                }
            })
            .collect();
        stages.push(Kernel::from_values(tree, next.clone())?);
        previous = next;
        previous_r = r;
    }
    Ok(IteratedKernels { ladder, stages })
}

impl IteratedKernels {
    /// `Σ_Q K_{n−1}(Q) 1_Q` at the leaves.
    pub fn final_potential(&self, tree: DyadicTree) -> LeafFunction {
        let last = self.stages.last().expect("at least one stage");
        LeafFunction::from_raw(tree.accumulate_down(last.values()))
    }
}

pub fn wolff_condition_constant(instance: &Instance, phi: &[usize]) -> Result<f64> {
    let kernels = iterated_kernels(instance, phi)?;
    Ok(condition_from_kernels(instance, &kernels))
}

fn condition_from_kernels(instance: &Instance, kernels: &IteratedKernels) -> f64 {
    let ladder = &kernels.ladder;
    let top = *ladder.ladder.last().expect("n ≥ 2");
    let last = instance.measure(*ladder.permutation.last().expect("n ≥ 2"));
    let root: Vec<f64> = kernels
        .final_potential(instance.tree())
        .values()
        .iter()
        .map(|v| v.powf(1.0 / top))
        .collect();
    lp_norm_slice(&root, last.leaf_masses(), ladder.r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationValue {
    /// 1-based permutation.
    pub phi: Vec<usize>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WolffReport {
    pub per_phi: Vec<PermutationValue>,
    pub max: f64,
    pub ladders: Vec<ExponentLadder>,
}

impl WolffReport {
    /// First permutation attaining the maximum.
    pub fn worst(&self) -> Option<&PermutationValue> {
        self.per_phi.iter().find(|v| v.value == self.max)
    }
}

/// Maximum of [`wolff_condition_constant`] over all of `S_n`, in
/// lexicographic permutation order.
pub fn wolff_constant(instance: &Instance) -> Result<WolffReport> {
    let n = instance.n();
    if n > MAX_PERMUTATION_ARITY {
        return Err(Error::PermutationBudget(n));
    }
    let perms: Vec<Vec<usize>> = (0..n).permutations(n).collect();
    let results = perms
        .par_iter()
        .map(|phi| {
            let kernels = iterated_kernels(instance, phi)?;
            Ok((condition_from_kernels(instance, &kernels), kernels.ladder))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut per_phi = Vec::with_capacity(results.len());
    let mut ladders = Vec::with_capacity(results.len());
    for (phi, (value, ladder)) in perms.iter().zip(results) {
        per_phi.push(PermutationValue {
            phi: phi.iter().map(|i| i + 1).collect(),
            value,
        });
        ladders.push(ladder);
    }
    let max = per_phi.iter().map(|v| v.value).fold(0.0, f64::max);
    Ok(WolffReport {
        per_phi,
        max,
        ladders,
    })
}

/// `(‖𝒲^{p₂′}_{K,σ₂}[σ₁]^{1/p₂′}‖_{L^r(σ₁)}, ‖𝒲^{p₁′}_{K,σ₁}[σ₂]^{1/p₁′}‖_{L^r(σ₂)})`
/// with `1/r + 1/p₁ + 1/p₂ = 1`.
pub fn bilinear_wolff_closed_form(instance: &Instance) -> Result<(f64, f64)> {
    if instance.n() != 2 {
        return Err(Error::Arity {
            expected: 2,
            actual: instance.n(),
        });
    }
    let total = reciprocal_sum(instance.exponents());
    if total >= 1.0 - BOUNDARY_TOLERANCE {
        return Err(Error::LadderUndefined(total));
    }
    let r = 1.0 / (1.0 - total);
    let entry = |outer: usize, inner: usize| -> Result<f64> {
        let q = dual_exponent(instance.exponents()[outer])?;
        let potential = wolff_potential(
            instance.kernel(),
            instance.measure(outer),
            instance.measure(inner),
            q,
        )?;
        let root: Vec<f64> = potential.values().iter().map(|v| v.powf(1.0 / q)).collect();
        Ok(lp_norm_slice(&root, instance.measure(inner).leaf_masses(), r))
    };
    Ok((entry(1, 0)?, entry(0, 1)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{depth_one, fixture_a, fixture_c};
    use crate::tree::CubeId;

    const ID: [usize; 2] = [0, 1];
    const SWAP: [usize; 2] = [1, 0];

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn potential_examples() {
        let a = fixture_a();
        let w = wolff_potential(a.kernel(), a.measure(0), a.measure(1), 2.0).unwrap();
        assert_eq!(w.values(), &[4.0, 4.0]);

        let null = Measure::new(depth_one(), vec![0.0, 0.0]).unwrap();
        let w = wolff_potential(a.kernel(), a.measure(0), &null, 2.0).unwrap();
        assert_eq!(w.values(), &[0.0, 0.0]);

        let k = 1.5;
        let kernel = Kernel::from_entries(depth_one(), [(CubeId::new(1, 1), k)]).unwrap();
        let unit = Measure::new(depth_one(), vec![0.0, 1.0]).unwrap();
        let w = wolff_potential(&kernel, &unit, &unit, 2.0).unwrap();
        assert_eq!(w.values(), &[0.0, k * k]);
    }

    #[test]
    fn ladder_examples() {
        let l = exponent_ladder(&[4.0, 4.0], &ID).unwrap();
        assert!(close(l.ladder[0], 4.0 / 3.0, 1e-15));
        assert!(close(l.r, 2.0, 1e-15));

        let err = exponent_ladder(&[2.0, 2.0], &ID).unwrap_err();
        assert!(err.to_string().contains("ladder undefined"));

        let l = exponent_ladder(&[3.0, 4.0, 5.0], &[0, 1, 2]).unwrap();
        assert!(close(l.ladder[0], 1.5, 1e-15));
        assert!(close(l.ladder[1], 12.0 / 5.0, 1e-15));
        assert!(close(l.r, 60.0 / 13.0, 1e-15));

        assert!(exponent_ladder(&[3.0, 4.0, 5.0], &[0, 0, 2]).is_err());
        assert!(exponent_ladder(&[3.0, 4.0, 5.0], &[0, 1]).is_err());
    }

    #[test]
    fn iterated_kernel_examples() {
        let c = fixture_c();
        let k = iterated_kernels(&c, &ID).unwrap();
        assert_eq!(k.stages.len(), 1);
        assert!(close(k.stages[0].get(CubeId::ROOT), 2.0 * 2f64.powf(1.0 / 3.0), 1e-14));

        let zero = c.with_kernel(Kernel::zero(depth_one())).unwrap();
        assert!(iterated_kernels(&zero, &ID).unwrap().stages.iter().all(Kernel::is_zero));

        let w = wolff_potential(c.kernel(), c.measure(0), c.measure(1), 4.0 / 3.0).unwrap();
        let sum = k.final_potential(c.tree());
        for (a, b) in sum.values().iter().zip(w.values()) {
            assert!(close(*a, *b, 1e-14));
        }
        assert!(iterated_kernels(&fixture_a(), &ID).is_err());
    }

    #[test]
    fn condition_constant_examples() {
        let c = fixture_c();
        let expected = 2f64.powf(1.5);
        assert!(close(wolff_condition_constant(&c, &ID).unwrap(), expected, 1e-14));
        assert!(close(wolff_condition_constant(&c, &SWAP).unwrap(), expected, 1e-14));
        let zero = c.with_kernel(Kernel::zero(depth_one())).unwrap();
        assert_eq!(wolff_condition_constant(&zero, &ID).unwrap(), 0.0);
    }

    #[test]
    fn wolff_constant_examples() {
        let c = fixture_c();
        let report = wolff_constant(&c).unwrap();
        assert!(close(report.max, 2f64.powf(1.5), 1e-14));
        assert_eq!(report.per_phi.len(), 2);
        assert_eq!(report.per_phi[1].phi, vec![2, 1]);

        let zero = c.with_kernel(Kernel::zero(depth_one())).unwrap();
        assert_eq!(wolff_constant(&zero).unwrap().max, 0.0);

        let single = DyadicTree::new(2, 0).unwrap();
        let seven = Instance::new(
            Kernel::zero(single),
            vec![Measure::new(single, vec![1.0]).unwrap(); 7],
            vec![10.0; 7],
        )
        .unwrap();
        let err = wolff_constant(&seven).unwrap_err();
        assert!(err.to_string().contains("permutation budget exceeded"));
    }

    #[test]
    fn closed_form_examples() {
        let c = fixture_c();
        let (x, y) = bilinear_wolff_closed_form(&c).unwrap();
        assert!(close(x, 2f64.powf(1.5), 1e-14) && close(y, 2f64.powf(1.5), 1e-14));

        let zero = c.with_kernel(Kernel::zero(depth_one())).unwrap();
        assert_eq!(bilinear_wolff_closed_form(&zero).unwrap(), (0.0, 0.0));

        let null = c
            .with_measure(0, Measure::new(depth_one(), vec![0.0, 0.0]).unwrap())
            .unwrap();
        assert_eq!(bilinear_wolff_closed_form(&null).unwrap(), (0.0, 0.0));
    }
}
