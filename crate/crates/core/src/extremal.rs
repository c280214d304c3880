//! Lower bounds for the best constant `c₁` of the embedding
//! `Σ_Q K(Q) Πᵢ ∫_Q fᵢ dσᵢ ≤ c₁ Πᵢ ‖fᵢ‖_{L^{pᵢ}(σᵢ)}`.
//!
//! With all slots but `j` frozen the form is the linear functional
//! `f_j ↦ ∫ g_j f_j dσ_j`, whose maximizer on the unit sphere of
//! `L^{p_j}(σ_j)` is `g_j^{p_j′−1}` normalized, attaining `‖g_j‖_{L^{p_j′}}`.
//! Cycling this over the slots is an exact block-coordinate ascent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::form::{dual_from_integrals, form_from_integrals, slot_integrals};
use crate::tree::{dual_exponent, lp_norm_slice, Instance, LeafFunction, Measure};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AscentOptions {
    /// Stop once a full cycle improves the form by less than this, relatively.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Random starts on top of the all-ones start.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for AscentOptions {
    fn default() -> Self {
        AscentOptions {
            tolerance: 1e-10,
            max_iterations: 10_000,
            restarts: 8,
            seed: 0,
        }
    }
}

impl AscentOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) || !self.tolerance.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.restarts == 0 || self.max_iterations == 0 {
            return Err(Error::InvalidArgument(
                "restarts and max_iterations must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub function: LeafFunction,
    /// `g_j` vanished on the support of `σ_j`; the slot was left untouched.
    pub degenerate: bool,
    /// `‖g_j‖_{L^{p_j′}(σ_j)}`, the form value after the step.
    pub dual_norm: f64,
}

#[derive(Debug, Clone)]
pub struct ConstantEstimate {
    /// Lower bound on `c₁`.
    pub value: f64,
    /// Form value at the normalized start, then after every full cycle.
    pub trace: Vec<f64>,
    pub argmax: Vec<LeafFunction>,
    pub converged: bool,
    /// Index of the winning start; 0 is the all-ones start.
    pub best_start: usize,
}

fn extremizer(g: &[f64], measure: &Measure, p: f64) -> (Vec<f64>, f64, f64) {
    let q = p / (p - 1.0);
    let raw: Vec<f64> = g
        .iter()
        .zip(measure.leaf_masses())
        .map(|(g, m)| if *m > 0.0 { g.powf(q - 1.0) } else { 0.0 })
        .collect();
    let norm = lp_norm_slice(&raw, measure.leaf_masses(), p);
    let dual_norm = lp_norm_slice(g, measure.leaf_masses(), q);
    (raw, norm, dual_norm)
}

pub fn ascent_step(instance: &Instance, j: usize, functions: &[LeafFunction]) -> Result<StepOutcome> {
    instance.check_functions(functions)?;
    instance.check_slot(j)?;
    let integrals = slot_integrals(instance, functions);
    let g = dual_from_integrals(instance, j, &integrals);
    let (raw, norm, dual_norm) =
        extremizer(g.values(), instance.measure(j), instance.exponents()[j]);
    if !(norm > 0.0) || !norm.is_finite() {
        return Ok(StepOutcome {
            function: functions[j].clone(),
            degenerate: true,
            dual_norm,
        });
    }
    Ok(StepOutcome {
        function: LeafFunction::from_raw(raw.into_iter().map(|v| v / norm).collect()),
        degenerate: false,
        dual_norm,
    })
}

/// Scale `f` to unit `L^p(σ)` norm, zeroing it off the support of `σ`.
/// `None` if it has no mass to normalize.
pub fn normalize(f: &LeafFunction, measure: &Measure, p: f64) -> Option<LeafFunction> {
    let masked: Vec<f64> = f
        .values()
        .iter()
        .zip(measure.leaf_masses())
        .map(|(v, m)| if *m > 0.0 { *v } else { 0.0 })
        .collect();
    let norm = lp_norm_slice(&masked, measure.leaf_masses(), p);
    (norm > 0.0 && norm.is_finite())
        .then(|| LeafFunction::from_raw(masked.into_iter().map(|v| v / norm).collect()))
}

struct Run {
    value: f64,
    trace: Vec<f64>,
    functions: Vec<LeafFunction>,
    converged: bool,
}

fn run_ascent(instance: &Instance, start: Vec<LeafFunction>, options: &AscentOptions) -> Run {
    let n = instance.n();
    let mut functions = start;
    let mut integrals = slot_integrals(instance, &functions);
    let mut current = form_from_integrals(instance, &integrals);
    let mut trace = vec![current];
    let mut converged = false;

    for _ in 0..options.max_iterations {
        let previous = functions.clone();
        let mut degenerate = false;
        for j in 0..n {
            let measure = instance.measure(j);
            let g = dual_from_integrals(instance, j, &integrals);
            let (raw, norm, _) = extremizer(g.values(), measure, instance.exponents()[j]);
            if !(norm > 0.0) || !norm.is_finite() {
                degenerate = true;
                break;
            }
            functions[j] = LeafFunction::from_raw(raw.into_iter().map(|v| v / norm).collect());
            integrals[j] = measure.cube_integrals(&functions[j]);
        }
        if degenerate {
            functions = previous;
            converged = true;
            break;
        }
        let next = form_from_integrals(instance, &integrals);
        if next < current {
            // roundoff at the fixed point
            functions = previous;
            converged = true;
            break;
        }
        trace.push(next);
        let gain = next - current;
        current = next;
        if gain <= options.tolerance * current {
            converged = true;
            break;
        }
    }
    Run {
        value: current,
        trace,
        functions,
        converged,
    }
}

fn start_functions(instance: &Instance, start: usize, seed: u64) -> Option<Vec<LeafFunction>> {
    let tree = instance.tree();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(start as u64);
    instance
        .measures()
        .iter()
        .zip(instance.exponents())
        .map(|(measure, &p)| {
            let raw = if start == 0 {
                LeafFunction::constant(tree, 1.0)
            } else {
                LeafFunction::from_raw(
                    (0..tree.leaf_count())
                        .map(|_| rng.gen_range(0.1..1.0))
                        .collect(),
                )
            };
            normalize(&raw, measure, p)
        })
        .collect()
}

fn zero_estimate(instance: &Instance) -> ConstantEstimate {
    ConstantEstimate {
        value: 0.0,
        trace: Vec::new(),
        argmax: vec![LeafFunction::constant(instance.tree(), 0.0); instance.n()],
        converged: true,
        best_start: 0,
    }
}

pub fn best_constant(instance: &Instance, options: &AscentOptions) -> Result<ConstantEstimate> {
    options.validate()?;
    if instance.kernel().is_zero() {
        return Ok(zero_estimate(instance));
    }
    if instance.n() == 0 {
        let value: f64 = instance.kernel().values().iter().sum();
        return Ok(ConstantEstimate {
            value,
            trace: vec![value],
            argmax: Vec::new(),
            converged: true,
            best_start: 0,
        });
    }
    let runs: Vec<Option<Run>> = (0..=options.restarts)
        .into_par_iter()
        .map(|start| {
            start_functions(instance, start, options.seed)
                .map(|functions| run_ascent(instance, functions, options))
        })
        .collect();

    let mut best: Option<(usize, Run)> = None;
    for (start, run) in runs.into_iter().enumerate() {
        let Some(run) = run else {
            // some σᵢ vanishes identically
            return Ok(zero_estimate(instance));
        };
        if best.as_ref().is_none_or(|(_, b)| run.value > b.value) {
            best = Some((start, run));
        }
    }
    let (best_start, run) = best.expect("at least one start");
    Ok(ConstantEstimate {
        value: run.value,
        trace: run.trace,
        argmax: run.functions,
        converged: run.converged,
        best_start,
    })
}

/// Largest grid the oracle will enumerate.
pub const ORACLE_MAX_GRID: u64 = 5_000_000;
pub const ORACLE_MAX_SUPPORT: usize = 4;
pub const ORACLE_MIN_RESOLUTION: usize = 16;

/// Dense-grid lower bound for `c₁` on desk-scale instances.
///
/// Every slot but the last ranges over the lattice of nonnegative unit
/// vectors whose `p`-th power shares `f(x)^p σ({x})` are multiples of
/// `1/(resolution − 1)`; the last slot is maximized exactly through its
/// dual norm. The best grid point is then polished by one ascent cycle.
pub fn brute_force_constant(instance: &Instance, resolution: usize) -> Result<f64> {
    if resolution < ORACLE_MIN_RESOLUTION {
        return Err(Error::InvalidArgument(format!(
            "oracle resolution must be at least {ORACLE_MIN_RESOLUTION}, got {resolution}"
        )));
    }
    let n = instance.n();
    let tree = instance.tree();
    let kernel = instance.kernel().values();
    if n == 0 {
        return Ok(kernel.iter().sum());
    }
    let supports: Vec<Vec<usize>> = instance
        .measures()
        .iter()
        .map(|m| m.support().collect())
        .collect();
    if let Some((slot, s)) = supports
        .iter()
        .enumerate()
        .find(|(_, s)| s.len() > ORACLE_MAX_SUPPORT)
    {
        return Err(Error::OracleTooLarge(format!(
            "slot {slot} has {} positive-mass leaves (limit {ORACLE_MAX_SUPPORT})",
            s.len()
        )));
    }
    if supports.iter().any(Vec::is_empty) || instance.kernel().is_zero() {
        return Ok(0.0);
    }

    let last = n - 1;
    let steps = resolution - 1;
    let mut combos: u64 = 1;
    for s in &supports[..last] {
        combos = combos.saturating_mul(lattice_size(steps, s.len()));
    }
    if combos > ORACLE_MAX_GRID {
        return Err(Error::OracleTooLarge(format!(
            "{combos} grid points exceed the budget of {ORACLE_MAX_GRID}"
        )));
    }

    // Candidate leaf functions and their cube integrals, slot by slot.
    let mut grids: Vec<Vec<(Vec<f64>, Vec<f64>)>> = Vec::with_capacity(last);
    for slot in 0..last {
        let measure = instance.measure(slot);
        let masses = measure.leaf_masses();
        let p = instance.exponents()[slot];
        let mut grid = Vec::new();
        for shares in lattice(steps, supports[slot].len()) {
            let mut f = vec![0.0; tree.leaf_count()];
            for (&leaf, &w) in supports[slot].iter().zip(&shares) {
                f[leaf] = (w as f64 / steps as f64 / masses[leaf]).powf(1.0 / p);
            }
            let integrals: Vec<f64> = tree
                .cubes()
                .map(|cube| tree.leaf_range(cube).map(|x| f[x] * masses[x]).sum())
                .collect();
            grid.push((f, integrals));
        }
        grids.push(grid);
    }

    let last_measure = instance.measure(last);
    let last_masses = last_measure.leaf_masses();
    let q_last = dual_exponent(instance.exponents()[last])?;
    let depth = tree.depth();

    let mut weights = vec![0.0; tree.cube_count()];
    let mut choice = vec![0usize; last];
    let mut best_value = -1.0;
    let mut best_choice = choice.clone();
    loop {
        for (q, w) in weights.iter_mut().enumerate() {
            *w = kernel[q];
        }
        for (slot, &c) in choice.iter().enumerate() {
            let integrals = &grids[slot][c].1;
            for (w, i) in weights.iter_mut().zip(integrals) {
                *w *= i;
            }
        }
        let mut total = 0.0;
        for &x in &supports[last] {
            let g: f64 = (0..=depth)
                .map(|level| weights[tree.flat(tree.ancestor_of_leaf(x, level))])
                .sum();
            total += g.powf(q_last) * last_masses[x];
        }
        let value = total.powf(1.0 / q_last);
        if value > best_value {
            best_value = value;
            best_choice.clone_from(&choice);
        }
        if !advance(&mut choice, &grids) {
            break;
        }
    }

    // Assemble the maximizer and polish it.
    let mut functions: Vec<LeafFunction> = best_choice
        .iter()
        .enumerate()
        .map(|(slot, &c)| LeafFunction::from_raw(grids[slot][c].0.clone()))
        .collect();
    functions.push(LeafFunction::constant(tree, 1.0));
    let step = ascent_step(instance, last, &functions)?;
    functions[last] = step.function;
    if step.degenerate {
        return Ok(best_value.max(0.0));
    }
    let mut polished = best_value;
    for j in 0..n {
        let step = ascent_step(instance, j, &functions)?;
        if step.degenerate {
            break;
        }
        functions[j] = step.function;
        polished = polished.max(step.dual_norm);
    }
    Ok(polished.max(0.0))
}

fn advance(choice: &mut [usize], grids: &[Vec<(Vec<f64>, Vec<f64>)>]) -> bool {
    for (slot, c) in choice.iter_mut().enumerate() {
        *c += 1;
        if *c < grids[slot].len() {
            return true;
        }
        *c = 0;
    }
    false
}

/// Number of ways to write `steps` as an ordered sum of `parts` naturals.
fn lattice_size(steps: usize, parts: usize) -> u64 {
    // C(steps + parts − 1, parts − 1)
    let k = parts.saturating_sub(1) as u64;
    let top = (steps + parts - 1) as u64;
    (0..k).fold(1u64, |acc, i| acc.saturating_mul(top - i) / (i + 1))
}

fn lattice(steps: usize, parts: usize) -> Vec<Vec<usize>> {
    fn fill(rest: usize, parts: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            prefix.push(rest);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in 0..=rest {
            prefix.push(k);
            fill(rest - k, parts - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    fill(steps, parts, &mut Vec::with_capacity(parts), &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{depth_one, fixture_a, fixture_c};
    use crate::form::evaluate_form;
    use crate::tree::{CubeId, Kernel};

    fn opts() -> AscentOptions {
        AscentOptions {
            tolerance: 1e-12,
            ..AscentOptions::default()
        }
    }

    #[test]
    fn step_on_fixture_a() {
        let a = fixture_a();
        let f1 = LeafFunction::constant(depth_one(), 1.0 / 2f64.sqrt());
        let start = [f1.clone(), LeafFunction::constant(depth_one(), 1.0)];
        let step = ascent_step(&a, 1, &start).unwrap();
        assert!(!step.degenerate);
        for v in step.function.values() {
            assert!((v - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        }
        let value = evaluate_form(&a, &[f1, step.function]).unwrap();
        assert!((value - 2.0).abs() < 1e-14);
        assert!((step.dual_norm - 2.0).abs() < 1e-14);
    }

    #[test]
    fn step_with_zero_kernel_is_degenerate() {
        let a = fixture_a().with_kernel(Kernel::zero(depth_one())).unwrap();
        let start = vec![LeafFunction::constant(depth_one(), 0.5); 2];
        let step = ascent_step(&a, 0, &start).unwrap();
        assert!(step.degenerate);
        assert_eq!(step.function, start[0]);
    }

    #[test]
    fn step_normalizes_dual() {
        // g₂ = (4, 0) against σ₂ = (1, 3), p₂ = 2.
        let tree = depth_one();
        let kernel = Kernel::from_entries(tree, [(CubeId::new(1, 0), 4.0)]).unwrap();
        let inst = Instance::new(
            kernel,
            vec![
                Measure::new(tree, vec![1.0, 1.0]).unwrap(),
                Measure::new(tree, vec![1.0, 3.0]).unwrap(),
            ],
            vec![2.0, 2.0],
        )
        .unwrap();
        let f1 = LeafFunction::constant(tree, 1.0);
        let step = ascent_step(&inst, 1, &[f1, LeafFunction::constant(tree, 1.0)]).unwrap();
        assert_eq!(step.function.values(), &[1.0, 0.0]);
    }

    #[test]
    fn best_constant_fixtures() {
        let est = best_constant(&fixture_a(), &opts()).unwrap();
        assert!((est.value - 2.0).abs() < 1e-8, "{}", est.value);
        assert!(est.trace.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(est.value, *est.trace.last().unwrap());

        let est = best_constant(&fixture_c(), &opts()).unwrap();
        assert!((est.value - 2f64.powf(1.5)).abs() < 1e-8, "{}", est.value);

        let zero = fixture_a().with_kernel(Kernel::zero(depth_one())).unwrap();
        let est = best_constant(&zero, &opts()).unwrap();
        assert_eq!(est.value, 0.0);
        assert!(est.trace.is_empty());
    }

    #[test]
    fn best_constant_is_deterministic() {
        let a = fixture_c();
        let o = AscentOptions {
            seed: 99,
            ..opts()
        };
        let x = best_constant(&a, &o).unwrap();
        let y = best_constant(&a, &o).unwrap();
        assert_eq!(x.value, y.value);
        assert_eq!(x.trace, y.trace);
        assert_eq!(x.argmax, y.argmax);
    }

    #[test]
    fn invalid_options_rejected() {
        let bad = AscentOptions {
            restarts: 0,
            ..opts()
        };
        assert!(best_constant(&fixture_a(), &bad).is_err());
        let bad = AscentOptions {
            tolerance: 0.0,
            ..opts()
        };
        assert!(best_constant(&fixture_a(), &bad).is_err());
    }

    #[test]
    fn brute_force_fixtures() {
        let v = brute_force_constant(&fixture_a(), 64).unwrap();
        assert!((v - 2.0).abs() < 1e-3, "{v}");

        let tree = depth_one();
        let leaves = Kernel::from_entries(tree, [(CubeId::new(1, 0), 1.0), (CubeId::new(1, 1), 1.0)])
            .unwrap();
        let v = brute_force_constant(&fixture_a().with_kernel(leaves).unwrap(), 64).unwrap();
        assert!((v - 1.0).abs() < 1e-3, "{v}");

        let zero = fixture_a().with_kernel(Kernel::zero(tree)).unwrap();
        assert_eq!(brute_force_constant(&zero, 64).unwrap(), 0.0);
    }

    #[test]
    fn brute_force_rejects_large_instances() {
        let tree = crate::tree::DyadicTree::new(2, 3).unwrap();
        let kernel = Kernel::from_entries(tree, [(CubeId::ROOT, 1.0)]).unwrap();
        let m = Measure::new(tree, vec![1.0; 8]).unwrap();
        let inst = Instance::new(kernel, vec![m.clone(), m], vec![2.0, 2.0]).unwrap();
        let err = brute_force_constant(&inst, 64).unwrap_err();
        assert!(err.to_string().contains("oracle restricted to desk scale"));
        assert!(brute_force_constant(&fixture_a(), 8).is_err());
    }

    #[test]
    fn lattice_counts() {
        for (steps, parts) in [(63, 1), (63, 2), (63, 4), (15, 3)] {
            let points = lattice(steps, parts);
            assert_eq!(points.len() as u64, lattice_size(steps, parts));
            assert!(points.iter().all(|p| p.iter().sum::<usize>() == steps));
        }
    }
}
