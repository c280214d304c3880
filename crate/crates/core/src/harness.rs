//! Experiment orchestration: consolidated constants for one instance,
//! seeded sweeps with CSV/JSON reports, and the corona and Carleson
//! verification suites.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corona::{carleson_check, corona_partition_check, CarlesonData, CarlesonRecord, PartitionRecord};
use crate::error::{Error, Result};
use crate::extremal::{best_constant, brute_force_constant, AscentOptions};
use crate::form::{reciprocal_sum, regime, Regime};
use crate::generate::{derive_seed, generate, sample_measure, GeneratorSpec};
use crate::io::instance_to_value;
use crate::sawyer::{sawyer_constant, TestingReport};
use crate::tree::{DyadicTree, Instance, LeafFunction};
use crate::wolff::{wolff_constant, WolffReport};

/// Slack granted to the brute-force oracle when comparing against it.
pub const ORACLE_SLACK: f64 = 0.02;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstantsOptions {
    pub ascent: AscentOptions,
    /// Also run the brute-force oracle when the instance is small enough.
    pub oracle_resolution: Option<usize>,
    /// Record wall-clock seconds per instance (breaks byte-for-byte
    /// reproducibility of reports).
    pub timings: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum C2Kind {
    Sawyer,
    Wolff,
}

impl C2Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            C2Kind::Sawyer => "sawyer",
            C2Kind::Wolff => "wolff",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsReport {
    pub regime: Regime,
    pub reciprocal_sum: f64,
    pub c1: f64,
    pub c1_trace: Vec<f64>,
    pub c1_converged: bool,
    /// Brute-force lower bound, when requested and the instance is small.
    pub c1_oracle: Option<f64>,
    pub c2_kind: C2Kind,
    pub c2: f64,
    /// `c1 / c2`; absent when `c2 = 0`.
    pub ratio: Option<f64>,
    /// `j=<slot>@<cube>` or `phi=<1-based permutation>`.
    pub worst: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sawyer: Option<TestingReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wolff: Option<WolffReport>,
}

impl ConstantsReport {
    /// Best available lower bound on `c₁`.
    pub fn c1_best(&self) -> f64 {
        self.c1_oracle.map_or(self.c1, |o| o.max(self.c1))
    }
}

pub fn run_constants(instance: &Instance, options: &ConstantsOptions) -> Result<ConstantsReport> {
    let estimate = best_constant(instance, &options.ascent)?;
    let c1_oracle = match options.oracle_resolution {
        Some(resolution) => match brute_force_constant(instance, resolution) {
            Ok(v) => Some(v),
            Err(Error::OracleTooLarge(_)) => None,
            Err(e) => return Err(e),
        },
        None => None,
    };
    let regime = regime(instance.exponents());
    let (c2_kind, c2, worst, sawyer, wolff) = match regime {
        Regime::Testing => {
            let report = sawyer_constant(instance, &options.ascent)?;
            let worst = report
                .per_j
                .iter()
                .find(|s| s.value == report.overall)
                .map(|s| format!("j={}@{}", s.j, s.worst_cube))
                .unwrap_or_default();
            (C2Kind::Sawyer, report.overall, worst, Some(report), None)
        }
        Regime::Wolff => {
            let report = wolff_constant(instance)?;
            let worst = report
                .worst()
                .map(|v| {
                    let phi: Vec<String> = v.phi.iter().map(ToString::to_string).collect();
                    format!("phi={}", phi.join(" "))
                })
                .unwrap_or_default();
            (C2Kind::Wolff, report.max, worst, None, Some(report))
        }
    };
    Ok(ConstantsReport {
        regime,
        reciprocal_sum: reciprocal_sum(instance.exponents()),
        c1: estimate.value,
        c1_trace: estimate.trace,
        c1_converged: estimate.converged,
        c1_oracle,
        c2_kind,
        c2,
        ratio: (c2 > 0.0).then(|| estimate.value / c2),
        worst,
        sawyer,
        wolff,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub instance_id: usize,
    pub seed: u64,
    pub regime: Regime,
    pub c1: f64,
    pub c1_oracle: Option<f64>,
    pub c2_kind: C2Kind,
    pub c2: f64,
    pub ratio: Option<f64>,
    pub worst: String,
    pub seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub count: usize,
    pub testing_rows: usize,
    pub wolff_rows: usize,
    /// Largest `c₁/c₂` over rows with `c₂ > 0`.
    pub max_c1_over_c2: Option<f64>,
    /// Largest `c₂/c₁` over rows with `c₁ > 0`.
    pub max_c2_over_c1: Option<f64>,
    /// Rows where exactly one of `c₁`, `c₂` vanishes.
    pub zero_mismatches: Vec<usize>,
    /// Testing rows with an oracle value where `c₂ > c₁,oracle · (1 + 2%)`.
    pub necessity_violations: Vec<usize>,
}

impl SweepSummary {
    pub fn passed(&self) -> bool {
        self.zero_mismatches.is_empty() && self.necessity_violations.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub spec: GeneratorSpec,
    pub options: ConstantsOptions,
    pub rows: Vec<SweepRow>,
    pub summary: SweepSummary,
}

pub const CSV_COLUMNS: [&str; 8] = [
    "instance_id",
    "regime",
    "c1",
    "c2_kind",
    "c2",
    "ratio",
    "worst_j_or_phi",
    "seconds",
];

impl EquivalenceReport {
    pub fn to_csv(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(CSV_COLUMNS).expect("in-memory write");
        for row in &self.rows {
            let regime = match row.regime {
                Regime::Testing => "testing",
                Regime::Wolff => "wolff",
            };
            writer
                .write_record([
                    row.instance_id.to_string(),
                    regime.to_string(),
                    row.c1.to_string(),
                    row.c2_kind.as_str().to_string(),
                    row.c2.to_string(),
                    row.ratio.map(|r| r.to_string()).unwrap_or_default(),
                    row.worst.clone(),
                    row.seconds.map(|s| format!("{s:.6}")).unwrap_or_default(),
                ])
                .expect("in-memory write");
        }
        String::from_utf8(writer.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }
}

fn summarize(rows: &[SweepRow]) -> SweepSummary {
    let max_of = |values: Vec<f64>| values.into_iter().reduce(f64::max);
    SweepSummary {
        count: rows.len(),
        testing_rows: rows.iter().filter(|r| r.regime == Regime::Testing).count(),
        wolff_rows: rows.iter().filter(|r| r.regime == Regime::Wolff).count(),
        max_c1_over_c2: max_of(rows.iter().filter_map(|r| r.ratio).collect()),
        max_c2_over_c1: max_of(
            rows.iter()
                .filter(|r| r.c1 > 0.0)
                .map(|r| r.c2 / r.c1)
                .collect(),
        ),
        zero_mismatches: rows
            .iter()
            .filter(|r| (r.c1 == 0.0) != (r.c2 == 0.0))
            .map(|r| r.instance_id)
            .collect(),
        necessity_violations: rows
            .iter()
            .filter(|r| r.regime == Regime::Testing)
            .filter(|r| matches!(r.c1_oracle, Some(o) if r.c2 > o.max(r.c1) * (1.0 + ORACLE_SLACK)))
            .map(|r| r.instance_id)
            .collect(),
    }
}

/// Generate `count` instances from `spec` (the `i`-th with seed
/// `derive_seed(spec.seed, i)`) and compute their constants. Rows come
/// back in `instance_id` order regardless of scheduling.
pub fn sweep(spec: &GeneratorSpec, count: usize, options: &ConstantsOptions) -> Result<EquivalenceReport> {
    if count == 0 {
        return Err(Error::InvalidArgument("count must be positive".into()));
    }
    let rows = (0..count)
        .into_par_iter()
        .map(|instance_id| {
            let seed = derive_seed(spec.seed, instance_id as u64);
            let instance = generate(&spec.with_seed(seed))?;
            let started = Instant::now();
            let report = run_constants(&instance, options)?;
            Ok(SweepRow {
                instance_id,
                seed,
                regime: report.regime,
                c1: report.c1,
                c1_oracle: report.c1_oracle,
                c2_kind: report.c2_kind,
                c2: report.c2,
                ratio: report.ratio,
                worst: report.worst,
                seconds: options.timings.then(|| started.elapsed().as_secs_f64()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EquivalenceReport {
        spec: spec.clone(),
        options: *options,
        summary: summarize(&rows),
        rows,
    })
}

pub const LEMMA_EXPONENTS: [f64; 5] = [1.5, 2.0, 2.5, 3.0, 4.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaFailure {
    pub case: usize,
    pub seed: u64,
    pub record: CarlesonRecord,
    pub diagnostic: String,
    /// Replayable data: tree, leaf masses, `s` and coefficients.
    pub witness: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaSummary {
    pub cases: usize,
    /// Worst `lhs / bound` seen for each of the three inequalities.
    pub worst_ratios: [f64; 3],
    pub failures: Vec<LemmaFailure>,
}

impl LemmaSummary {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }
}

/// Random Carleson data for one case: the tree and measure family come
/// from `spec` (depth drawn in `0..=spec.depth`), coefficients are sparse
/// exponentials vanishing on null cubes, `s` cycles through
/// [`LEMMA_EXPONENTS`].
pub fn lemma_case(spec: &GeneratorSpec, case: usize) -> Result<(u64, CarlesonData)> {
    let seed = derive_seed(spec.seed, case as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = rng.gen_range(0..=spec.depth);
    let tree = DyadicTree::new(spec.branching, depth)?;
    let measure = sample_measure(&mut rng, tree, spec.measures)?;
    let alpha = measure
        .cube_masses()
        .iter()
        .map(|&mass| {
            let keep = rng.gen_bool(0.6);
            let value: f64 = rng.sample(Exp1);
            if keep && mass > 0.0 {
                value
            } else {
                0.0
            }
        })
        .collect();
    let s = LEMMA_EXPONENTS[case % LEMMA_EXPONENTS.len()];
    Ok((seed, CarlesonData::new(measure, tree.root(), s, alpha)?))
}

fn carleson_witness(data: &CarlesonData) -> Value {
    let tree = data.measure.tree();
    serde_json::json!({
        "branching": tree.branching(),
        "depth": tree.depth(),
        "masses": data.measure.leaf_masses(),
        "s": data.s,
        "alpha": data.alpha,
    })
}

pub fn summarize_lemma(records: Vec<(usize, u64, CarlesonData, CarlesonRecord)>) -> LemmaSummary {
    let mut worst = [0.0f64; 3];
    let mut failures = Vec::new();
    let cases = records.len();
    for (case, seed, data, record) in records {
        for (slot, check) in [&record.a1_vs_a2, &record.a2_vs_a3, &record.a3_vs_a1]
            .into_iter()
            .enumerate()
        {
            if check.bound > 0.0 {
                worst[slot] = worst[slot].max(check.lhs / check.bound);
            } else if check.lhs > 0.0 {
                worst[slot] = f64::INFINITY;
            }
        }
        if !record.passed {
            failures.push(LemmaFailure {
                case,
                seed,
                diagnostic: record.diagnostic(),
                witness: carleson_witness(&data),
                record,
            });
        }
    }
    LemmaSummary {
        cases,
        worst_ratios: worst,
        failures,
    }
}

pub fn check_lemma(spec: &GeneratorSpec, count: usize) -> Result<LemmaSummary> {
    if count == 0 {
        return Err(Error::InvalidArgument("count must be positive".into()));
    }
    let records = (0..count)
        .into_par_iter()
        .map(|case| {
            let (seed, data) = lemma_case(spec, case)?;
            let record = carleson_check(&data)?;
            Ok((case, seed, data, record))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize_lemma(records))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoronaFailure {
    pub case: usize,
    pub seed: u64,
    pub record: PartitionRecord,
    /// `{"instance": ..., "functions": [[...], ...]}`.
    pub witness: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoronaSummary {
    pub cases: usize,
    /// Cases whose generated instance had a vanishing measure.
    pub skipped: usize,
    pub principal_cubes: usize,
    pub min_exceptional_ratio: f64,
    pub max_relative_error: f64,
    pub failures: Vec<CoronaFailure>,
}

impl CoronaSummary {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }
}

/// Heavy-tailed nonnegative leaf functions, so that averages double often
/// enough to produce several generations of principal cubes.
pub fn random_functions(rng: &mut impl Rng, instance: &Instance) -> Vec<LeafFunction> {
    (0..instance.n())
        .map(|_| {
            let values = (0..instance.tree().leaf_count())
                .map(|_| {
                    let e: f64 = rng.sample(Exp1);
                    if rng.gen_bool(0.3) {
                        0.0
                    } else {
                        e * e * e
                    }
                })
                .collect();
            LeafFunction::new(values).expect("finite nonnegative values")
        })
        .collect()
}

pub fn corona_case(spec: &GeneratorSpec, case: usize) -> Result<Option<(u64, Instance, Vec<LeafFunction>)>> {
    let seed = derive_seed(spec.seed, case as u64);
    let instance = match generate(&spec.with_seed(seed)) {
        Ok(instance) => instance,
        Err(Error::DegenerateInstance(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let functions = random_functions(&mut rng, &instance);
    Ok(Some((seed, instance, functions)))
}

pub fn check_corona(spec: &GeneratorSpec, count: usize) -> Result<CoronaSummary> {
    if count == 0 {
        return Err(Error::InvalidArgument("count must be positive".into()));
    }
    let results = (0..count)
        .into_par_iter()
        .map(|case| {
            let Some((seed, instance, functions)) = corona_case(spec, case)? else {
                return Ok(None);
            };
            let record = corona_partition_check(&instance, &functions)?;
            Ok(Some((case, seed, instance, functions, record)))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut summary = CoronaSummary {
        cases: count,
        skipped: 0,
        principal_cubes: 0,
        min_exceptional_ratio: f64::INFINITY,
        max_relative_error: 0.0,
        failures: Vec::new(),
    };
    for result in results {
        let Some((case, seed, instance, functions, record)) = result else {
            summary.skipped += 1;
            continue;
        };
        summary.principal_cubes += record.forest_sizes.iter().sum::<usize>();
        summary.min_exceptional_ratio = summary.min_exceptional_ratio.min(record.min_exceptional_ratio);
        summary.max_relative_error = summary.max_relative_error.max(record.relative_error);
        if !record.passed {
            summary.failures.push(CoronaFailure {
                case,
                seed,
                witness: serde_json::json!({
                    "instance": instance_to_value(&instance),
                    "functions": functions.iter().map(|f| f.values().to_vec()).collect::<Vec<_>>(),
                }),
                record,
            });
        }
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{depth_one, fixture_a, fixture_c};
    use crate::generate::ExponentSampler;
    use crate::tree::Kernel;

    #[test]
    fn constants_on_fixtures() {
        let options = ConstantsOptions::default();
        let a = run_constants(&fixture_a(), &options).unwrap();
        assert_eq!(a.c2_kind, C2Kind::Sawyer);
        assert!((a.c1 - 2.0).abs() < 1e-8);
        assert!((a.c2 - 2.0).abs() < 1e-12);
        assert!((a.ratio.unwrap() - 1.0).abs() < 1e-8);
        assert!(a.wolff.is_none());

        let c = run_constants(&fixture_c(), &options).unwrap();
        assert_eq!(c.c2_kind, C2Kind::Wolff);
        assert!((c.c1 - 2f64.powf(1.5)).abs() < 1e-8);
        assert!((c.c2 - 2f64.powf(1.5)).abs() < 1e-12);
        assert!(c.sawyer.is_none());

        let zero = fixture_a().with_kernel(Kernel::zero(depth_one())).unwrap();
        let z = run_constants(&zero, &options).unwrap();
        assert_eq!((z.c1, z.c2, z.ratio), (0.0, 0.0, None));
    }

    #[test]
    fn sweep_rejects_zero_count() {
        let err = sweep(&GeneratorSpec::default(), 0, &ConstantsOptions::default()).unwrap_err();
        assert!(err.to_string().contains("count must be positive"));
    }

    #[test]
    fn sweep_rows_are_ordered() {
        let spec = GeneratorSpec {
            depth: 2,
            exponents: ExponentSampler::Random(Regime::Wolff),
            seed: 5,
            ..GeneratorSpec::default()
        };
        let report = sweep(&spec, 6, &ConstantsOptions::default()).unwrap();
        let ids: Vec<usize> = report.rows.iter().map(|r| r.instance_id).collect();
        assert_eq!(ids, (0..6).collect::<Vec<_>>());
        assert!(report.rows.iter().all(|r| r.c2_kind == C2Kind::Wolff));
        let csv = report.to_csv();
        assert!(csv.starts_with("instance_id,regime,c1,c2_kind,c2,ratio,worst_j_or_phi,seconds\n"));
        assert_eq!(csv.lines().count(), 7);
    }

    #[test]
    fn lemma_fault_injection() {
        let (seed, data) = lemma_case(&GeneratorSpec::default(), 3).unwrap();
        let mut record = carleson_check(&data).unwrap();
        assert!(record.passed);
        let mut inflated = record.values;
        inflated.a1 = 10.0 * record.a1_vs_a2.bound;
        record = crate::corona::check_triple(inflated, data.s).unwrap();
        let summary = summarize_lemma(vec![(3, seed, data, record)]);
        assert!(!summary.passed());
        assert_eq!(summary.exit_code(), 1);
        assert!(summary.failures[0].diagnostic.contains("A1 <= c(s) A2"));
    }
}
