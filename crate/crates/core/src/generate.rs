//! Seeded random instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::form::Regime;
use crate::tree::{DyadicTree, Instance, Kernel, Measure};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExponentSampler {
    Fixed(Vec<f64>),
    /// Testing: `Σ 1/pᵢ ∈ [1, 1.5]`; Wolff: `Σ 1/pᵢ ∈ [0.3, 0.9]`.
    Random(Regime),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasureFamily {
    IidExponential,
    /// Each leaf is kept with probability `q`, then gets an exponential mass.
    Sparse { q: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    IidUniform,
    /// `K(Q) = b^{γ·level} · U(0, 1)`.
    LevelWeighted { gamma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub branching: usize,
    pub depth: usize,
    pub n: usize,
    pub exponents: ExponentSampler,
    pub measures: MeasureFamily,
    pub kernel: KernelFamily,
    pub seed: u64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            branching: 2,
            depth: 3,
            n: 2,
            exponents: ExponentSampler::Random(Regime::Testing),
            measures: MeasureFamily::IidExponential,
            kernel: KernelFamily::IidUniform,
            seed: 0,
        }
    }
}

impl GeneratorSpec {
    pub fn with_seed(&self, seed: u64) -> Self {
        GeneratorSpec {
            seed,
            ..self.clone()
        }
    }
}

/// Seed of the `index`-th member of an ensemble rooted at `base`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const EXPONENT_ATTEMPTS: usize = 1000;
/// Largest admissible `1/pᵢ` when sampling, i.e. `pᵢ ≥ 1/0.95`.
const MAX_RECIPROCAL: f64 = 0.95;

pub fn sample_exponents(rng: &mut impl Rng, n: usize, regime: Regime) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "cannot sample {regime:?}-regime exponents for n = {n}: need n ≥ 2"
        )));
    }
    let (lo, hi) = match regime {
        Regime::Testing => (1.0, 1.5),
        Regime::Wolff => (0.3, 0.9),
    };
    for _ in 0..EXPONENT_ATTEMPTS {
        let target = rng.gen_range(lo..=hi);
        let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
        let total: f64 = weights.iter().sum();
        let reciprocals: Vec<f64> = weights.iter().map(|w| w * target / total).collect();
        if reciprocals.iter().all(|x| *x < MAX_RECIPROCAL) {
            return Ok(reciprocals.iter().map(|x| 1.0 / x).collect());
        }
    }
    Err(Error::InvalidArgument(format!(
        "could not sample {regime:?}-regime exponents for n = {n}"
    )))
}

pub fn sample_measure(rng: &mut impl Rng, tree: DyadicTree, family: MeasureFamily) -> Result<Measure> {
    let masses = (0..tree.leaf_count())
        .map(|_| match family {
            MeasureFamily::IidExponential => rng.sample::<f64, _>(Exp1),
            MeasureFamily::Sparse { q } => {
                let keep = rng.gen_bool(q);
                let mass: f64 = rng.sample(Exp1);
                if keep {
                    mass
                } else {
                    0.0
                }
            }
        })
        .collect();
    Measure::new(tree, masses)
}

pub fn generate(spec: &GeneratorSpec) -> Result<Instance> {
    let tree = DyadicTree::new(spec.branching, spec.depth)?;
    if spec.n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    if let MeasureFamily::Sparse { q } = spec.measures {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::InvalidArgument(format!("sparsity q = {q} outside [0, 1]")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let exponents = match &spec.exponents {
        ExponentSampler::Fixed(p) => {
            if p.len() != spec.n {
                return Err(Error::LengthMismatch {
                    what: "fixed exponents",
                    expected: spec.n,
                    actual: p.len(),
                });
            }
            p.clone()
        }
        ExponentSampler::Random(regime) => sample_exponents(&mut rng, spec.n, *regime)?,
    };
    let measures = (0..spec.n)
        .map(|_| sample_measure(&mut rng, tree, spec.measures))
        .collect::<Result<Vec<_>>>()?;
    if let Some(slot) = measures.iter().position(|m| m.total() <= 0.0) {
        return Err(Error::DegenerateInstance(format!(
            "measure {} vanishes identically",
            slot + 1
        )));
    }
    let b = tree.branching() as f64;
    let values = tree
        .cubes()
        .map(|cube| {
            let u: f64 = rng.gen_range(0.0..1.0);
            match spec.kernel {
                KernelFamily::IidUniform => u,
                KernelFamily::LevelWeighted { gamma } => b.powf(gamma * cube.level as f64) * u,
            }
        })
        .collect();
    Instance::new(Kernel::from_values(tree, values)?, measures, exponents)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::form::{reciprocal_sum, regime};
    use crate::io::save_instance;

    #[test]
    fn fixed_seed_is_reproducible() {
        let spec = GeneratorSpec {
            seed: 1,
            ..GeneratorSpec::default()
        };
        let a = save_instance(&generate(&spec).unwrap());
        let b = save_instance(&generate(&spec).unwrap());
        assert_eq!(a, b);
        let c = save_instance(&generate(&spec.with_seed(2)).unwrap());
        assert_ne!(a, c);
    }

    #[test]
    fn empty_sparse_family_is_degenerate() {
        let spec = GeneratorSpec {
            measures: MeasureFamily::Sparse { q: 0.0 },
            ..GeneratorSpec::default()
        };
        let err = generate(&spec).unwrap_err();
        assert!(err.to_string().contains("degenerate instance"));
    }

    #[test]
    fn iid_measures_fill_every_leaf() {
        let spec = GeneratorSpec {
            depth: 3,
            ..GeneratorSpec::default()
        };
        let inst = generate(&spec).unwrap();
        for m in inst.measures() {
            assert_eq!(m.leaf_masses().len(), 8);
            assert!(m.leaf_masses().iter().all(|x| *x > 0.0));
        }
    }

    #[test]
    fn sampled_exponents_hit_their_regime() {
        for n in 2..=4 {
            for seed in 0..50 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let p = sample_exponents(&mut rng, n, Regime::Testing).unwrap();
                let s = reciprocal_sum(&p);
                assert!((1.0 - 1e-12..=1.5 + 1e-12).contains(&s), "{s}");
                assert_eq!(regime(&p), Regime::Testing);
                let p = sample_exponents(&mut rng, n, Regime::Wolff).unwrap();
                let s = reciprocal_sum(&p);
                assert!((0.3 - 1e-12..=0.9 + 1e-12).contains(&s), "{s}");
                assert!(p.iter().all(|p| *p > 1.0));
            }
        }
    }

    #[test]
    fn impossible_requests_rejected() {
        let spec = GeneratorSpec {
            n: 1,
            exponents: ExponentSampler::Random(Regime::Testing),
            ..GeneratorSpec::default()
        };
        assert!(generate(&spec).is_err());
        let spec = GeneratorSpec {
            exponents: ExponentSampler::Fixed(vec![2.0]),
            ..GeneratorSpec::default()
        };
        assert!(generate(&spec).is_err());
    }
}
