use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use dyadic_embedding::extremal::AscentOptions;
use dyadic_embedding::generate::{generate, ExponentSampler, GeneratorSpec, KernelFamily, MeasureFamily};
use dyadic_embedding::harness::{check_corona, check_lemma, run_constants, sweep, ConstantsOptions};
use dyadic_embedding::io::{load_instance, save_instance};
use dyadic_embedding::{evaluate_form, LeafFunction, Regime};

/// Multilinear dyadic embeddings on finite trees.
#[derive(Parser, Debug)]
#[command(name = "dyembed", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a seeded random instance.
    Gen {
        #[command(flatten)]
        generator: GeneratorArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the form on an instance.
    Eval {
        instance: PathBuf,
        /// JSON array of n leaf-value arrays; constant 1 functions if omitted.
        #[arg(long)]
        functions: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Best-constant estimate plus the regime's characterizing constant.
    Constants {
        instance: PathBuf,
        #[command(flatten)]
        ascent: AscentArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Constants over a seeded ensemble.
    Sweep {
        #[command(flatten)]
        generator: GeneratorArgs,
        #[command(flatten)]
        ascent: AscentArgs,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Record per-instance wall-clock seconds (output no longer reproducible).
        #[arg(long)]
        timings: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the three Carleson-type inequalities over a seeded ensemble.
    CheckLemma {
        #[command(flatten)]
        generator: GeneratorArgs,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check corona regrouping of the form over a seeded ensemble.
    CheckCorona {
        #[command(flatten)]
        generator: GeneratorArgs,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct GeneratorArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    depth: usize,
    #[arg(long, default_value_t = 2)]
    branching: usize,
    #[arg(long, default_value_t = 2)]
    n: usize,
    /// `testing`, `wolff`, or a comma-separated list such as `2,3.5`.
    #[arg(long, default_value = "testing")]
    exponents: String,
    /// `iid-exponential` or `sparse:<q>`.
    #[arg(long, default_value = "iid-exponential")]
    family: String,
    /// Level weight γ; switches the kernel to `b^{γ·level}·U(0,1)`.
    #[arg(long)]
    gamma: Option<f64>,
}

impl GeneratorArgs {
    fn spec(&self) -> anyhow::Result<GeneratorSpec> {
        let exponents = match self.exponents.as_str() {
            "testing" => ExponentSampler::Random(Regime::Testing),
            "wolff" => ExponentSampler::Random(Regime::Wolff),
            list => ExponentSampler::Fixed(
                list.split(',')
                    .map(|p| p.trim().parse::<f64>())
                    .collect::<Result<_, _>>()
                    .with_context(|| format!("invalid --exponents {list:?}"))?,
            ),
        };
        let measures = match self.family.as_str() {
            "iid-exponential" => MeasureFamily::IidExponential,
            other => match other.strip_prefix("sparse:") {
                Some(q) => MeasureFamily::Sparse {
                    q: q.parse().with_context(|| format!("invalid sparsity in --family {other:?}"))?,
                },
                None => bail!("unknown --family {other:?}; expected iid-exponential or sparse:<q>"),
            },
        };
        let kernel = match self.gamma {
            Some(gamma) => KernelFamily::LevelWeighted { gamma },
            None => KernelFamily::IidUniform,
        };
        Ok(GeneratorSpec {
            branching: self.branching,
            depth: self.depth,
            n: self.n,
            exponents,
            measures,
            kernel,
            seed: self.seed,
        })
    }
}

#[derive(Args, Debug)]
struct AscentArgs {
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 8)]
    restarts: usize,
    #[arg(long = "ascent-seed", default_value_t = 0)]
    ascent_seed: u64,
    #[arg(long, default_value_t = 10_000)]
    max_iterations: usize,
    /// Also run the brute-force oracle at this resolution where feasible.
    #[arg(long)]
    oracle: Option<usize>,
}

impl AscentArgs {
    fn options(&self, timings: bool) -> ConstantsOptions {
        ConstantsOptions {
            ascent: AscentOptions {
                tolerance: self.tol,
                max_iterations: self.max_iterations,
                restarts: self.restarts,
                seed: self.ascent_seed,
            },
            oracle_resolution: self.oracle,
            timings,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Json,
    Csv,
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn pretty(value: &impl serde::Serialize) -> anyhow::Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

fn read(path: &Path) -> anyhow::Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

/// Runs a command and reports whether every checked property held.
fn run(command: Command) -> anyhow::Result<bool> {
    match command {
        Command::Gen { generator, out } => {
            let instance = generate(&generator.spec()?)?;
            let bytes = save_instance(&instance);
            emit(out.as_deref(), std::str::from_utf8(&bytes)?)?;
            Ok(true)
        }
        Command::Eval {
            instance,
            functions,
            out,
        } => {
            let instance = load_instance(&read(&instance)?)?;
            let functions = match functions {
                Some(path) => {
                    let raw: Vec<Vec<f64>> = serde_json::from_slice(&read(&path)?)
                        .with_context(|| format!("parsing {}", path.display()))?;
                    raw.into_iter()
                        .map(LeafFunction::new)
                        .collect::<Result<Vec<_>, _>>()?
                }
                None => vec![LeafFunction::constant(instance.tree(), 1.0); instance.n()],
            };
            let value = evaluate_form(&instance, &functions)?;
            let norms = functions
                .iter()
                .zip(instance.measures())
                .zip(instance.exponents())
                .map(|((f, m), &p)| m.lp_norm(f, p))
                .collect::<Vec<_>>();
            emit(out.as_deref(), &pretty(&json!({ "value": value, "norms": norms }))?)?;
            Ok(true)
        }
        Command::Constants { instance, ascent, out } => {
            let instance = load_instance(&read(&instance)?)?;
            let report = run_constants(&instance, &ascent.options(false))?;
            emit(out.as_deref(), &pretty(&report)?)?;
            Ok(true)
        }
        Command::Sweep {
            generator,
            ascent,
            count,
            format,
            timings,
            out,
        } => {
            let report = sweep(&generator.spec()?, count, &ascent.options(timings))?;
            let text = match format {
                Format::Json => report.to_json(),
                Format::Csv => report.to_csv(),
            };
            emit(out.as_deref(), &text)?;
            Ok(report.summary.passed())
        }
        Command::CheckLemma { generator, count, out } => {
            let summary = check_lemma(&generator.spec()?, count)?;
            for failure in &summary.failures {
                eprintln!("case {}: {}", failure.case, failure.diagnostic);
            }
            emit(out.as_deref(), &pretty(&summary)?)?;
            Ok(summary.passed())
        }
        Command::CheckCorona { generator, count, out } => {
            let summary = check_corona(&generator.spec()?, count)?;
            for failure in &summary.failures {
                eprintln!("case {}: {}", failure.case, failure.record.failures.join("; "));
            }
            emit(out.as_deref(), &pretty(&summary)?)?;
            Ok(summary.passed())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
