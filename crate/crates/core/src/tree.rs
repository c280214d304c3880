//! Finite b-ary dyadic trees and the data living on them.
//!
//! A tree of branching `b` and depth `D` stands in for the dyadic cubes
//! contained in a fixed top cube `Q₀`. Cubes are addressed by
//! `(level, index)` with `index < b^level`; flat storage is level-major,
//! index-minor, which is also the canonical enumeration order everywhere
//! in this crate.
//!
//! Measures are atomic on the leaves and functions are leaf-constant. All
//! functions are taken nonnegative: the kernel is nonnegative, so replacing
//! `f` by `|f|` never decreases any of the sums involved and keeps every
//! `L^p` norm.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Hard cap on the number of cubes, to keep dense per-cube storage sane.
pub const MAX_CUBES: usize = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CubeId {
    pub level: usize,
    pub index: usize,
}

impl CubeId {
    pub const ROOT: CubeId = CubeId { level: 0, index: 0 };

    pub fn new(level: usize, index: usize) -> Self {
        CubeId { level, index }
    }
}

impl fmt::Display for CubeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.level, self.index)
    }
}

impl serde::Serialize for CubeId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for CubeId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

impl FromStr for CubeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::MalformedCubeId(s.to_string());
        let (level, index) = s.split_once(':').ok_or_else(bad)?;
        Ok(CubeId {
            level: level.trim().parse().map_err(|_| bad())?,
            index: index.trim().parse().map_err(|_| bad())?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DyadicTree {
    branching: usize,
    depth: usize,
}

impl DyadicTree {
    pub fn new(branching: usize, depth: usize) -> Result<Self> {
        if branching < 2 {
            return Err(Error::InvalidTree(format!(
                "branching must be at least 2, got {branching}"
            )));
        }
        let mut total: usize = 0;
        let mut width: usize = 1;
        for level in 0..=depth {
            total = total.saturating_add(width);
            if total > MAX_CUBES {
                return Err(Error::InvalidTree(format!(
                    "more than {MAX_CUBES} cubes (branching {branching}, depth {depth})"
                )));
            }
            if level < depth {
                width = width.saturating_mul(branching);
            }
        }
        Ok(DyadicTree { branching, depth })
    }

    pub fn branching(&self) -> usize {
        self.branching
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Number of cubes on `level`, i.e. `b^level`.
    pub fn level_size(&self, level: usize) -> usize {
        self.branching.pow(level as u32)
    }

    /// Flat index of the first cube on `level`.
    pub fn level_offset(&self, level: usize) -> usize {
        (self.level_size(level) - 1) / (self.branching - 1)
    }

    pub fn cube_count(&self) -> usize {
        self.level_offset(self.depth + 1)
    }

    pub fn leaf_count(&self) -> usize {
        self.level_size(self.depth)
    }

    pub fn root(&self) -> CubeId {
        CubeId::ROOT
    }

    pub fn contains(&self, cube: CubeId) -> bool {
        cube.level <= self.depth && cube.index < self.level_size(cube.level)
    }

    pub fn check(&self, cube: CubeId) -> Result<()> {
        if self.contains(cube) {
            Ok(())
        } else {
            Err(Error::InvalidCube {
                cube,
                branching: self.branching,
                depth: self.depth,
            })
        }
    }

    pub fn is_leaf(&self, cube: CubeId) -> bool {
        cube.level == self.depth
    }

    pub fn flat(&self, cube: CubeId) -> usize {
        debug_assert!(self.contains(cube), "cube {cube} outside tree");
        self.level_offset(cube.level) + cube.index
    }

    pub fn cube_at(&self, flat: usize) -> CubeId {
        debug_assert!(flat < self.cube_count());
        let mut level = 0;
        while self.level_offset(level + 1) <= flat {
            level += 1;
        }
        CubeId::new(level, flat - self.level_offset(level))
    }

    pub fn parent(&self, cube: CubeId) -> Option<CubeId> {
        (cube.level > 0).then(|| CubeId::new(cube.level - 1, cube.index / self.branching))
    }

    pub fn children(&self, cube: CubeId) -> Result<Vec<CubeId>> {
        self.check(cube)?;
        if self.is_leaf(cube) {
            return Err(Error::NoChildren(cube));
        }
        let b = self.branching;
        Ok((0..b)
            .map(|t| CubeId::new(cube.level + 1, b * cube.index + t))
            .collect())
    }

    /// Leaves (as leaf indices) lying under `cube`.
    pub fn leaf_range(&self, cube: CubeId) -> Range<usize> {
        let width = self.level_size(self.depth - cube.level);
        cube.index * width..(cube.index + 1) * width
    }

    /// Whether `outer ⊇ inner`.
    pub fn encloses(&self, outer: CubeId, inner: CubeId) -> bool {
        outer.level <= inner.level
            && inner.index / self.level_size(inner.level - outer.level) == outer.index
    }

    /// All cubes in canonical (level-major, index-minor) order.
    pub fn cubes(&self) -> impl Iterator<Item = CubeId> + '_ {
        (0..=self.depth).flat_map(move |level| {
            (0..self.level_size(level)).map(move |index| CubeId::new(level, index))
        })
    }

    /// Cubes contained in `top` (including `top`), level-major.
    pub fn subtree(&self, top: CubeId) -> impl Iterator<Item = CubeId> + '_ {
        (top.level..=self.depth).flat_map(move |level| {
            let width = self.level_size(level - top.level);
            (top.index * width..(top.index + 1) * width).map(move |index| CubeId::new(level, index))
        })
    }

    /// The cube on `level` containing leaf `leaf`.
    pub fn ancestor_of_leaf(&self, leaf: usize, level: usize) -> CubeId {
        CubeId::new(level, leaf / self.level_size(self.depth - level))
    }

    /// Cube-indexed sums `Σ_{Q' ⊆ Q} v(Q')`, computed bottom-up with
    /// children added in index order.
    pub fn subtree_sums(&self, cube_values: &[f64]) -> Vec<f64> {
        assert_eq!(cube_values.len(), self.cube_count());
        let mut sums = cube_values.to_vec();
        self.fold_up(&mut sums, true);
        sums
    }

    /// Cube-indexed sums of leaf values: `Σ_{leaves L ⊆ Q} v(L)`.
    pub fn leaf_sums(&self, leaf_values: &[f64]) -> Vec<f64> {
        assert_eq!(leaf_values.len(), self.leaf_count());
        let mut sums = vec![0.0; self.cube_count()];
        let leaf_offset = self.level_offset(self.depth);
        sums[leaf_offset..].copy_from_slice(leaf_values);
        self.fold_up(&mut sums, false);
        sums
    }

    fn fold_up(&self, sums: &mut [f64], keep_own: bool) {
        let b = self.branching;
        for level in (0..self.depth).rev() {
            let here = self.level_offset(level);
            let below = self.level_offset(level + 1);
            for index in 0..self.level_size(level) {
                let mut acc = if keep_own { sums[here + index] } else { 0.0 };
                for t in 0..b {
                    acc += sums[below + b * index + t];
                }
                sums[here + index] = acc;
            }
        }
    }

    /// Leaf-indexed `Σ_{Q ∋ x} v(Q)`: the function `Σ_Q v(Q) 1_Q`.
    pub fn accumulate_down(&self, cube_values: &[f64]) -> Vec<f64> {
        assert_eq!(cube_values.len(), self.cube_count());
        let b = self.branching;
        let mut prefix = vec![0.0; self.cube_count()];
        prefix[0] = cube_values[0];
        for level in 1..=self.depth {
            let here = self.level_offset(level);
            let above = self.level_offset(level - 1);
            for index in 0..self.level_size(level) {
                prefix[here + index] = prefix[above + index / b] + cube_values[here + index];
            }
        }
        prefix.split_off(self.level_offset(self.depth))
    }
}

fn check_entries(what: &'static str, values: &[f64]) -> Result<()> {
    match values.iter().find(|v| !v.is_finite() || **v < 0.0) {
        Some(&value) => Err(Error::InvalidValue { what, value }),
        None => Ok(()),
    }
}

/// Nonnegative measure, atomic on the leaves.
#[derive(Debug, Clone, PartialEq)]
pub struct Measure {
    tree: DyadicTree,
    leaf_masses: Vec<f64>,
    cube_masses: Vec<f64>,
}

impl Measure {
    pub fn new(tree: DyadicTree, leaf_masses: Vec<f64>) -> Result<Self> {
        if leaf_masses.len() != tree.leaf_count() {
            return Err(Error::LengthMismatch {
                what: "leaf masses",
                expected: tree.leaf_count(),
                actual: leaf_masses.len(),
            });
        }
        for (leaf, &value) in leaf_masses.iter().enumerate() {
            if value < 0.0 {
                return Err(Error::NegativeMass { leaf, value });
            }
            if !value.is_finite() {
                return Err(Error::InvalidValue {
                    what: "leaf masses",
                    value,
                });
            }
        }
        let cube_masses = tree.leaf_sums(&leaf_masses);
        Ok(Measure {
            tree,
            leaf_masses,
            cube_masses,
        })
    }

    pub fn tree(&self) -> DyadicTree {
        self.tree
    }

    pub fn leaf_masses(&self) -> &[f64] {
        &self.leaf_masses
    }

    /// `σ(Q)` for every cube, flat order.
    pub fn cube_masses(&self) -> &[f64] {
        &self.cube_masses
    }

    pub fn of(&self, cube: CubeId) -> f64 {
        self.cube_masses[self.tree.flat(cube)]
    }

    pub fn total(&self) -> f64 {
        self.cube_masses[0]
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Measure::new(
            self.tree,
            self.leaf_masses.iter().map(|m| m * factor).collect(),
        )
    }

    fn check_function(&self, f: &LeafFunction) {
        assert_eq!(
            f.len(),
            self.leaf_masses.len(),
            "function and measure live on different trees"
        );
    }

    /// `∫_Q f dσ` for every cube, flat order.
    pub fn cube_integrals(&self, f: &LeafFunction) -> Vec<f64> {
        self.check_function(f);
        let weighted: Vec<f64> = f
            .values()
            .iter()
            .zip(&self.leaf_masses)
            .map(|(v, m)| v * m)
            .collect();
        self.tree.leaf_sums(&weighted)
    }

    pub fn integrate(&self, f: &LeafFunction, cube: CubeId) -> f64 {
        self.cube_integrals(f)[self.tree.flat(cube)]
    }

    pub fn lp_norm(&self, f: &LeafFunction, p: f64) -> f64 {
        self.check_function(f);
        lp_norm_slice(f.values(), &self.leaf_masses, p)
    }

    /// Leaves with positive mass.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.leaf_masses
            .iter()
            .enumerate()
            .filter(|(_, m)| **m > 0.0)
            .map(|(leaf, _)| leaf)
    }

    /// Dyadic maximal function `M^σ f`. Cubes of zero mass are skipped and
    /// zero-mass leaves get the value 0.
    pub fn maximal_function(&self, f: &LeafFunction) -> LeafFunction {
        let integrals = self.cube_integrals(f);
        let tree = self.tree;
        let values = (0..tree.leaf_count())
            .map(|leaf| {
                if self.leaf_masses[leaf] <= 0.0 {
                    return 0.0;
                }
                (0..=tree.depth())
                    .map(|level| tree.flat(tree.ancestor_of_leaf(leaf, level)))
                    .filter(|&q| self.cube_masses[q] > 0.0)
                    .map(|q| integrals[q] / self.cube_masses[q])
                    .fold(0.0, f64::max)
            })
            .collect();
        LeafFunction { values }
    }
}

/// `(Σ v^p m)^{1/p}` over paired leaf values and masses.
pub(crate) fn lp_norm_slice(values: &[f64], masses: &[f64], p: f64) -> f64 {
    debug_assert!(p > 0.0 && p.is_finite());
    let sum: f64 = values
        .iter()
        .zip(masses)
        .filter(|(_, m)| **m > 0.0)
        .map(|(v, m)| v.powf(p) * m)
        .sum();
    sum.powf(1.0 / p)
}

/// Nonnegative leaf-constant function.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafFunction {
    values: Vec<f64>,
}

impl LeafFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_entries("leaf function", &values)?;
        Ok(LeafFunction { values })
    }

    pub fn constant(tree: DyadicTree, value: f64) -> Self {
        LeafFunction {
            values: vec![value; tree.leaf_count()],
        }
    }

    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite() && *v >= 0.0));
        LeafFunction { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        LeafFunction::from_raw(self.values.iter().map(|v| v * factor).collect())
    }

    pub fn product(&self, other: &LeafFunction) -> Self {
        assert_eq!(self.len(), other.len());
        LeafFunction::from_raw(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .collect(),
        )
    }
}

/// Nonnegative weights on cubes; zero wherever nothing is stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    tree: DyadicTree,
    values: Vec<f64>,
}

impl Kernel {
    pub fn zero(tree: DyadicTree) -> Self {
        Kernel {
            tree,
            values: vec![0.0; tree.cube_count()],
        }
    }

    pub fn from_values(tree: DyadicTree, values: Vec<f64>) -> Result<Self> {
        if values.len() != tree.cube_count() {
            return Err(Error::LengthMismatch {
                what: "kernel values",
                expected: tree.cube_count(),
                actual: values.len(),
            });
        }
        check_entries("kernel", &values)?;
        Ok(Kernel { tree, values })
    }

    pub fn from_entries(
        tree: DyadicTree,
        entries: impl IntoIterator<Item = (CubeId, f64)>,
    ) -> Result<Self> {
        let mut kernel = Kernel::zero(tree);
        for (cube, value) in entries {
            kernel.set(cube, value)?;
        }
        Ok(kernel)
    }

    pub fn set(&mut self, cube: CubeId, value: f64) -> Result<()> {
        self.tree.check(cube)?;
        check_entries("kernel", &[value])?;
        self.values[self.tree.flat(cube)] = value;
        Ok(())
    }

    pub fn get(&self, cube: CubeId) -> f64 {
        self.values[self.tree.flat(cube)]
    }

    pub fn tree(&self) -> DyadicTree {
        self.tree
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    /// Nonzero entries in canonical cube order.
    pub fn support(&self) -> impl Iterator<Item = (CubeId, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(q, v)| (self.tree.cube_at(q), *v))
    }
}

pub fn dual_exponent(p: f64) -> Result<f64> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::ExponentRange(p));
    }
    Ok(p / (p - 1.0))
}

/// The full datum of an n-linear embedding problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    tree: DyadicTree,
    kernel: Kernel,
    measures: Vec<Measure>,
    exponents: Vec<f64>,
}

impl Instance {
    /// `n = 0` is allowed: it arises when localizing a linear problem.
    pub fn new(kernel: Kernel, measures: Vec<Measure>, exponents: Vec<f64>) -> Result<Self> {
        let tree = kernel.tree();
        if measures.len() != exponents.len() {
            return Err(Error::LengthMismatch {
                what: "exponents (one per measure)",
                expected: measures.len(),
                actual: exponents.len(),
            });
        }
        if let Some(m) = measures.iter().find(|m| m.tree() != tree) {
            return Err(Error::InvalidTree(format!(
                "measure on tree (b={}, D={}) but kernel on (b={}, D={})",
                m.tree().branching(),
                m.tree().depth(),
                tree.branching(),
                tree.depth()
            )));
        }
        for &p in &exponents {
            dual_exponent(p)?;
        }
        Ok(Instance {
            tree,
            kernel,
            measures,
            exponents,
        })
    }

    pub fn tree(&self) -> DyadicTree {
        self.tree
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn measures(&self) -> &[Measure] {
        &self.measures
    }

    pub fn measure(&self, slot: usize) -> &Measure {
        &self.measures[slot]
    }

    pub fn exponents(&self) -> &[f64] {
        &self.exponents
    }

    pub fn n(&self) -> usize {
        self.measures.len()
    }

    pub fn with_kernel(&self, kernel: Kernel) -> Result<Self> {
        Instance::new(kernel, self.measures.clone(), self.exponents.clone())
    }

    pub fn with_measure(&self, slot: usize, measure: Measure) -> Result<Self> {
        if slot >= self.n() {
            return Err(Error::SlotRange { slot, n: self.n() });
        }
        let mut measures = self.measures.clone();
        measures[slot] = measure;
        Instance::new(self.kernel.clone(), measures, self.exponents.clone())
    }

    pub(crate) fn check_slot(&self, slot: usize) -> Result<()> {
        if slot < self.n() {
            Ok(())
        } else {
            Err(Error::SlotRange { slot, n: self.n() })
        }
    }

    pub(crate) fn check_functions(&self, functions: &[LeafFunction]) -> Result<()> {
        if functions.len() != self.n() {
            return Err(Error::FunctionCount {
                expected: self.n(),
                actual: functions.len(),
            });
        }
        for f in functions {
            if f.len() != self.tree.leaf_count() {
                return Err(Error::LengthMismatch {
                    what: "leaf function",
                    expected: self.tree.leaf_count(),
                    actual: f.len(),
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary(depth: usize) -> DyadicTree {
        DyadicTree::new(2, depth).unwrap()
    }

    #[test]
    fn children_follow_indexing() {
        let t = binary(1);
        assert_eq!(
            t.children(CubeId::ROOT).unwrap(),
            vec![CubeId::new(1, 0), CubeId::new(1, 1)]
        );
        let t3 = DyadicTree::new(3, 2).unwrap();
        assert_eq!(
            t3.children("1:2".parse().unwrap()).unwrap(),
            vec![CubeId::new(2, 6), CubeId::new(2, 7), CubeId::new(2, 8)]
        );
        assert!(matches!(
            t.children(CubeId::new(1, 0)),
            Err(Error::NoChildren(_))
        ));
    }

    #[test]
    fn counts_and_flat_indexing() {
        for (b, d) in [(2, 0), (2, 3), (3, 2), (4, 3)] {
            let t = DyadicTree::new(b, d).unwrap();
            assert_eq!(t.cube_count(), (b.pow(d as u32 + 1) - 1) / (b - 1));
            assert_eq!(t.leaf_count(), b.pow(d as u32));
            for (k, q) in t.cubes().enumerate() {
                assert_eq!(t.flat(q), k);
                assert_eq!(t.cube_at(k), q);
                if let Some(parent) = t.parent(q) {
                    assert!(t.children(parent).unwrap().contains(&q));
                    assert!(t.encloses(parent, q));
                }
            }
        }
    }

    #[test]
    fn rejects_bad_trees_and_cubes() {
        assert!(DyadicTree::new(1, 3).is_err());
        assert!(DyadicTree::new(2, 40).is_err());
        let t = binary(2);
        assert!(t.check(CubeId::new(2, 4)).is_err());
        assert!(t.check(CubeId::new(3, 0)).is_err());
        assert!("2-1".parse::<CubeId>().is_err());
        assert_eq!("2:1".parse::<CubeId>().unwrap().to_string(), "2:1");
    }

    #[test]
    fn measure_and_integrals() {
        let t = binary(1);
        let a = Measure::new(t, vec![1.0, 1.0]).unwrap();
        assert_eq!(a.of(CubeId::ROOT), 2.0);
        let b = Measure::new(t, vec![1.0, 3.0]).unwrap();
        assert_eq!(b.of(CubeId::ROOT), 4.0);
        assert_eq!(b.of(CubeId::new(1, 1)), 3.0);

        let f = LeafFunction::new(vec![4.0, 0.0]).unwrap();
        assert_eq!(b.integrate(&f, CubeId::ROOT), 4.0);
        assert_eq!(b.integrate(&f, CubeId::new(1, 1)), 0.0);
        assert_eq!(a.integrate(&LeafFunction::constant(t, 1.0), CubeId::ROOT), 2.0);

        assert_eq!(b.lp_norm(&f, 2.0), 4.0);
        assert!((a.lp_norm(&LeafFunction::constant(t, 1.0), 2.0) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(b.lp_norm(&LeafFunction::constant(t, 0.0), 3.0), 0.0);
    }

    #[test]
    fn negative_mass_rejected() {
        let err = Measure::new(binary(1), vec![-1.0, 1.0]).unwrap_err();
        assert!(err.to_string().contains("negative leaf mass"));
    }

    #[test]
    fn dual_exponents() {
        assert_eq!(dual_exponent(2.0).unwrap(), 2.0);
        assert_eq!(dual_exponent(3.0).unwrap(), 1.5);
        assert!((dual_exponent(4.0 / 3.0).unwrap() - 4.0).abs() < 1e-12);
        assert!(dual_exponent(1.0).is_err());
        assert!(dual_exponent(0.5).is_err());
        let p = 2.7;
        let back = dual_exponent(dual_exponent(p).unwrap()).unwrap();
        assert!((back - p).abs() < 1e-12);
    }

    #[test]
    fn maximal_function_examples() {
        let t = binary(1);
        let sigma = Measure::new(t, vec![1.0, 3.0]).unwrap();
        let m = sigma.maximal_function(&LeafFunction::new(vec![4.0, 0.0]).unwrap());
        assert_eq!(m.values(), &[4.0, 1.0]);

        let full = Measure::new(binary(3), (1..=8).map(f64::from).collect()).unwrap();
        let c = full.maximal_function(&LeafFunction::constant(binary(3), 2.5));
        assert!(c.values().iter().all(|v| (v - 2.5).abs() < 1e-15));

        let partial = Measure::new(t, vec![1.0, 0.0]).unwrap();
        let m = partial.maximal_function(&LeafFunction::new(vec![1.0, 7.0]).unwrap());
        assert_eq!(m.values(), &[1.0, 0.0]);
    }

    #[test]
    fn down_and_up_accumulation() {
        let t = binary(2);
        let ones = vec![1.0; t.cube_count()];
        assert_eq!(t.accumulate_down(&ones), vec![3.0; 4]);
        let sums = t.subtree_sums(&ones);
        assert_eq!(sums[0], 7.0);
        assert_eq!(sums[t.flat(CubeId::new(1, 1))], 3.0);
        assert_eq!(
            t.subtree(CubeId::new(1, 1)).collect::<Vec<_>>(),
            vec![CubeId::new(1, 1), CubeId::new(2, 2), CubeId::new(2, 3)]
        );
    }
}
