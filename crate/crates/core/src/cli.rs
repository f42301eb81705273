//! End-to-end harness behind the `normeq` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::assembly::{self, AssemblyOptions, ProblemSpec, RankStats, Threading};
use crate::dump;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::gather_kernel::{self, BenchReport, IrregularWorkload};
use crate::iterative_solver::{self, IterativeConfig, Preconditioner};
use crate::matrix::{dot, relative_residual};
use crate::rank_net::DeliveryOrder;
use crate::report::{self, DifferenceRow};
use crate::spectral_solver::{self, SolveMode, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    /// Full eigendecomposition, truncated pseudo-inverse.
    Direct,
    /// Two-pass eigen solve over the two halves of the spectrum.
    Split,
    /// Preconditioned conjugate gradients.
    Iterative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PreconditionerArg {
    None,
    Jacobi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct RunConfig {
    /// Number of model coefficients (matrix dimension).
    #[arg(long, default_value_t = 64)]
    pub n: usize,
    /// Number of synthetic input data items.
    #[arg(long = "data", default_value_t = 2000)]
    pub data: usize,
    #[arg(long, default_value_t = 1)]
    pub ranks: usize,
    /// Worker threads per rank for the data reduction.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Combine thread partial sums in a fixed order.
    #[arg(long)]
    pub deterministic_reduction: bool,
    /// Run ranks round-robin on one thread instead of concurrently.
    #[arg(long)]
    pub sequential_ranks: bool,
    #[arg(long, value_enum, default_value_t = SolverKind::Direct)]
    pub solver: SolverKind,
    /// Eigenvalue magnitude cutoff for the direct solvers.
    #[arg(long, default_value_t = 0.0)]
    pub threshold: f64,
    /// Relative residual tolerance for the iterative solver.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    /// Iteration cap for the iterative solver (default 10 * n).
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long, value_enum, default_value_t = PreconditionerArg::Jacobi)]
    pub preconditioner: PreconditionerArg,
    #[arg(long, default_value_t = gather_kernel::DEFAULT_PREFETCH_DISTANCE)]
    pub prefetch_distance: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub weight_scale: f64,
    /// Directory to receive the per-rank packed triplet dumps.
    #[arg(long)]
    pub dump_matrix: Option<PathBuf>,
    /// Where to write the JSON report (stdout when absent).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Directory for optional CSV tables (spectrum, trace, bench, differences).
    #[arg(long)]
    pub csv_dir: Option<PathBuf>,
    /// Earlier report to difference this run against.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    /// Also time the irregular-gather kernel, plain and pipelined.
    #[arg(long)]
    pub bench_kernel: bool,
    #[arg(long, default_value_t = 5)]
    pub bench_repetitions: usize,
    /// Loop extent of the benchmark workload.
    #[arg(long, default_value_t = 1024)]
    pub bench_size: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n: 64,
            data: 2000,
            ranks: 1,
            threads: 1,
            deterministic_reduction: false,
            sequential_ranks: false,
            solver: SolverKind::Direct,
            threshold: 0.0,
            tol: 1e-4,
            max_iterations: None,
            preconditioner: PreconditionerArg::Jacobi,
            prefetch_distance: gather_kernel::DEFAULT_PREFETCH_DISTANCE,
            seed: 0,
            weight_scale: 1.0,
            dump_matrix: None,
            report: None,
            csv_dir: None,
            baseline: None,
            bench_kernel: false,
            bench_repetitions: 5,
            bench_size: 1024,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let usage = |m: String| Err(Error::Usage(m));
        if self.n == 0 || self.data == 0 {
            return usage("--n and --data must be at least 1".into());
        }
        if self.ranks == 0 || self.ranks > self.n {
            return usage(format!("--ranks must lie in [1, {}]", self.n));
        }
        if self.threads == 0 {
            return usage("--threads must be at least 1".into());
        }
        if !(self.threshold >= 0.0) {
            return usage("--threshold must be non-negative".into());
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return usage("--tol must lie in (0, 1)".into());
        }
        if !(self.weight_scale > 0.0) {
            return usage("--weight-scale must be positive".into());
        }
        if self.bench_kernel && self.bench_repetitions == 0 {
            return usage("--bench-repetitions must be at least 1".into());
        }
        if self.solver == SolverKind::Iterative && self.threshold != 0.0 {
            return usage("--threshold applies only to the direct and split solvers".into());
        }
        Ok(())
    }

    pub fn problem(&self) -> ProblemSpec {
        ProblemSpec {
            n: self.n,
            d: self.data,
            seed: self.seed,
            weight_scale: self.weight_scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub build_ms: f64,
    pub exchange_ms: f64,
    pub solve_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssemblySummary {
    pub cells_evaluated: usize,
    pub ranks: Vec<RankStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    /// `||A x - b|| / ||b||`, recomputed.
    pub relative_residual: f64,
    pub retained_pairs: Option<usize>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub timings: Timings,
    pub assembly: AssemblySummary,
    pub solve: SolveSummary,
    pub solution: Vec<f64>,
    pub solution_digest: String,
    /// Predicted observations `G x` over the synthetic data.
    pub fit: Vec<f64>,
    pub differences: Option<Vec<DifferenceRow>>,
    pub kernel_bench: Option<BenchReport>,
}

/// Keys that depend on wall-clock measurements.
pub const TIMING_KEYS: [&str; 2] = ["timings", "kernel_bench"];

impl RunReport {
    /// Canonical JSON: keys sorted, pretty printed.
    pub fn to_canonical_json(&self) -> Result<String> {
        let value = serde_json::to_value(self)?;
        Ok(serde_json::to_string_pretty(&value)?)
    }

    /// The report with timing-dependent keys removed.
    pub fn deterministic_payload(&self) -> Result<serde_json::Value> {
        let mut value = serde_json::to_value(self)?;
        if let Some(map) = value.as_object_mut() {
            for key in TIMING_KEYS {
                map.remove(key);
            }
        }
        Ok(value)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

pub fn digest(values: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

pub fn run(config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    let spec = config.problem();
    let data = assembly::generate_problem(&spec)?;
    let options = AssemblyOptions {
        ranks: config.ranks,
        threading: Threading {
            threads: config.threads,
            deterministic: config.deterministic_reduction,
            execution: Execution::Parallel,
        },
        rank_execution: if config.sequential_ranks {
            Execution::Sequential
        } else {
            Execution::Parallel
        },
        delivery: DeliveryOrder::Natural,
    };
    let built = assembly::assemble(&data, spec.n, &options)?;
    if let Some(dir) = &config.dump_matrix {
        dump::write_rank_dumps(dir, &built.blocks)?;
    }
    let (a, b) = built.gather();

    let started = Instant::now();
    let mut spectrum_csv = None;
    let mut trace_csv = None;
    let (solution, retained, iterations, converged) = match config.solver {
        SolverKind::Direct => {
            let cfg = SolverConfig::with_threshold(config.threshold);
            let spectrum = spectral_solver::eigendecompose(&a)?;
            let x = spectral_solver::apply_eigenpairs(&spectrum, &b, &cfg)?;
            let kept = spectral_solver::retained_pairs(&spectrum, &cfg).len();
            let mut buf = Vec::new();
            spectrum.write_csv(&mut buf)?;
            spectrum_csv = Some(buf);
            (x, Some(kept), None, None)
        }
        SolverKind::Split => {
            let cfg = SolverConfig {
                threshold: config.threshold,
                mode: SolveMode::Split,
                requested_pairs: None,
            };
            (spectral_solver::solve(&a, &b, &cfg)?, None, None, None)
        }
        SolverKind::Iterative => {
            let cfg = IterativeConfig {
                rel_tolerance: config.tol,
                max_iterations: config.max_iterations.unwrap_or(10 * config.n),
                preconditioner: match config.preconditioner {
                    PreconditionerArg::None => Preconditioner::None,
                    PreconditionerArg::Jacobi => Preconditioner::Jacobi,
                },
                ..IterativeConfig::default()
            };
            let out = iterative_solver::solve_iterative(&a, &b, &cfg)?;
            let mut buf = Vec::new();
            out.write_trace_csv(&mut buf)?;
            trace_csv = Some(buf);
            (out.solution, None, Some(out.iterations), Some(out.converged))
        }
    };
    let solve_ms = started.elapsed().as_secs_f64() * 1e3;

    let kernel_bench = if config.bench_kernel {
        let w = IrregularWorkload::random(
            config.bench_size,
            config.bench_size,
            config.bench_size * config.bench_size,
            config.seed,
        );
        let mut distances = vec![config.prefetch_distance.max(1)];
        for d in [1, 2, 4, 8, 16, 32, 64] {
            if !distances.contains(&d) {
                distances.push(d);
            }
        }
        distances.sort_unstable();
        Some(gather_kernel::bench_kernel(&w, config.bench_repetitions, &distances)?)
    } else {
        None
    };

    let fit: Vec<f64> = data.iter().map(|d| dot(&d.design_row, &solution)).collect();
    let mut report = RunReport {
        config: config.clone(),
        timings: Timings {
            build_ms: built.build_time.as_secs_f64() * 1e3,
            exchange_ms: built.exchange_time.as_secs_f64() * 1e3,
            solve_ms,
        },
        assembly: AssemblySummary {
            cells_evaluated: built.total_cells_evaluated(),
            ranks: built.stats.clone(),
        },
        solve: SolveSummary {
            relative_residual: relative_residual(&a, &solution, &b),
            retained_pairs: retained,
            iterations,
            converged,
        },
        solution_digest: digest(&solution),
        solution,
        fit,
        differences: None,
        kernel_bench,
    };
    if let Some(path) = &config.baseline {
        let baseline = RunReport::load(path)?;
        report.differences = Some(compare_runs(&baseline, &report)?);
    }

    if let Some(dir) = &config.csv_dir {
        fs::create_dir_all(dir)?;
        if let Some(buf) = spectrum_csv {
            fs::write(dir.join("spectrum.csv"), buf)?;
        }
        if let Some(buf) = trace_csv {
            fs::write(dir.join("trace.csv"), buf)?;
        }
        if let Some(bench) = &report.kernel_bench {
            bench.write_csv(fs::File::create(dir.join("bench.csv"))?)?;
        }
        if let Some(rows) = &report.differences {
            write_differences_csv(&dir.join("differences.csv"), rows)?;
        }
    }
    Ok(report)
}

/// Min/max/mean percentage differences of the candidate against the
/// baseline, for the solution coefficients and the fitted values.
pub fn compare_runs(baseline: &RunReport, candidate: &RunReport) -> Result<Vec<DifferenceRow>> {
    if baseline.solution.len() != candidate.solution.len() {
        return Err(Error::Usage(format!(
            "runs have different dimensions: {} vs {}",
            baseline.solution.len(),
            candidate.solution.len()
        )));
    }
    let mut rows = vec![report::difference_row(
        "coefficients",
        &baseline.solution,
        &candidate.solution,
    )?];
    if baseline.fit.len() == candidate.fit.len() {
        rows.push(report::difference_row("fit", &baseline.fit, &candidate.fit)?);
    }
    Ok(rows)
}

pub fn write_differences_csv(path: &Path, rows: &[DifferenceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Parser)]
#[command(
    name = "normeq",
    version,
    about = "Distributed normal-equations build and solve over simulated ranks",
    args_conflicts_with_subcommands = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<Command>,
    #[command(flatten)]
    pub run: RunConfig,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Difference two JSON run reports.
    Compare {
        baseline: PathBuf,
        candidate: PathBuf,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Merge per-rank triplet dumps into one dense CSV matrix.
    Gather {
        dir: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Print the cell-assignment grid for an n x n matrix.
    Grid {
        #[arg(long)]
        n: usize,
    },
}

/// Executes a parsed command line, returning what should go to stdout.
pub fn execute(cli: Cli) -> Result<String> {
    match cli.command {
        None => {
            let report = run(&cli.run)?;
            let json = report.to_canonical_json()?;
            match &cli.run.report {
                Some(path) => {
                    fs::write(path, &json)?;
                    Ok(format!("report written to {}\n", path.display()))
                }
                None => Ok(json + "\n"),
            }
        }
        Some(Command::Compare {
            baseline,
            candidate,
            csv,
        }) => {
            let rows = compare_runs(&RunReport::load(&baseline)?, &RunReport::load(&candidate)?)?;
            if let Some(path) = csv {
                write_differences_csv(&path, &rows)?;
            }
            let mut out = format!(
                "{:<14} {:>14} {:>14} {:>14} {:>6}\n",
                "metric", "min %diff", "max %diff", "mean %diff", "tiny"
            );
            for r in rows {
                out += &format!(
                    "{:<14} {:>14.6e} {:>14.6e} {:>14.6e} {:>6}\n",
                    r.metric, r.min_percent, r.max_percent, r.mean_percent, r.tiny_elements
                );
            }
            Ok(out)
        }
        Some(Command::Gather { dir, output }) => {
            let a = dump::gather_dumps(&dir)?;
            dump::write_matrix_csv(&output, &a)?;
            Ok(format!("{} x {} matrix written to {}\n", a.rows(), a.cols(), output.display()))
        }
        Some(Command::Grid { n }) => {
            crate::sym_assign::global_cell_count(n)?;
            Ok(crate::sym_assign::render_grid(n))
        }
    }
}
