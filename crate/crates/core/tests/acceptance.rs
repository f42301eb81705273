//! Acceptance suite. Each test prints one PASS/FAIL line and then asserts.
//! Run with `cargo test -p normeq --test acceptance -- --nocapture`.

mod common;

use common::{bit_equal, max_rel_elementwise, positive_coefficients, spd_with_condition};
use normeq::assembly::{
    accumulate_assigned_with, assemble, generate_problem, AssemblyOptions, ProblemSpec, Threading,
};
use normeq::cli::{compare_runs, run, RunConfig, SolverKind};
use normeq::exec::Execution;
use normeq::gather_kernel::{IrregularWorkload, DEFAULT_PREFETCH_DISTANCE};
use normeq::iterative_solver::{solve_iterative, IterativeConfig, Preconditioner};
use normeq::matrix::{relative_difference, relative_residual};
use normeq::oracle::{build_full_matrix_from, dense_solve, enumerate_coverage};
use normeq::partition::partition_rows;
use normeq::rank_net::{pack, plan_exchange, unpack, DeliveryOrder, Triplet};
use normeq::report::difference_row;
use normeq::spectral_solver::{solve_full, solve_split, SolveMode, SolverConfig};
use normeq::sym_assign::{global_cell_count, row_quotas};
use normeq::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn verdict(id: u32, name: &str, ok: bool, detail: String, started: Instant) {
    let status = if ok { "PASS" } else { "FAIL" };
    println!(
        "criterion {id:>2} {name:<32} {status}  {detail} ({:.2} s)",
        started.elapsed().as_secs_f64()
    );
    assert!(ok, "criterion {id} ({name}) failed: {detail}");
}

fn spd_system(n: usize, cond: f64, seed: u64) -> (Matrix, Vec<f64>, Vec<f64>) {
    let a = spd_with_condition(n, cond, seed);
    let x = positive_coefficients(n, seed);
    let b = a.matvec(&x);
    (a, b, x)
}

#[test]
fn criterion_01_exactly_once_coverage() {
    let t = Instant::now();
    let mut failures = Vec::new();
    let mut configs = 0;
    for n in 1..=128usize {
        match enumerate_coverage(n) {
            Ok(map) if map.len() == n * (n + 1) / 2 => {}
            Ok(map) => failures.push(format!("n={n}: {} pairs", map.len())),
            Err(e) => failures.push(format!("n={n}: {e}")),
        }
        for ranks in 1..=n.min(16) {
            configs += 1;
            let p = partition_rows(n, ranks).unwrap();
            // Cells each rank evaluates on its own, before any exchange.
            let mut seen = vec![0u8; n * n];
            let mut explicit = 0;
            for me in 0..ranks {
                let (block, count) = accumulate_assigned_with(me, &p, &[], &Threading::default()).unwrap();
                explicit += count;
                for (row, col, value) in block.cells() {
                    if value.is_some() {
                        seen[row.min(col) * n + row.max(col)] += 1;
                    }
                }
            }
            let bad = (0..n)
                .flat_map(|i| (i..n).map(move |j| (i, j)))
                .filter(|&(i, j)| seen[i * n + j] != 1)
                .count();
            if bad != 0 || explicit != global_cell_count(n).unwrap() {
                failures.push(format!("n={n} ranks={ranks}: {bad} bad pairs, {explicit} cells"));
            }
        }
    }
    let n6 = global_cell_count(6).unwrap();
    let ok = failures.is_empty() && n6 == 21;
    verdict(
        1,
        "exactly-once coverage",
        ok,
        format!("{configs} (n, ranks) configs, n=6 cells {n6}, failures {failures:?}"),
        t,
    );
}

#[test]
fn criterion_02_quota_balance() {
    let t = Instant::now();
    let mut bad = Vec::new();
    for n in 1..=256usize {
        let q = row_quotas(n).unwrap();
        let (lo, hi) = (n.div_ceil(2), (n + 2) / 2);
        if q.per_row.iter().any(|&c| c != lo && c != hi) || q.per_row.iter().sum::<usize>() != n * (n + 1) / 2 {
            bad.push(n);
        }
    }
    let six = row_quotas(6).unwrap().per_row;
    let ok = bad.is_empty() && six == vec![4, 3, 4, 3, 4, 3];
    verdict(2, "quota balance", ok, format!("n=6 quotas {six:?}, bad n {bad:?}"), t);
}

#[test]
fn criterion_03_assembly_matches_oracle() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut asymmetric = 0;
    for _ in 0..50 {
        let n = rng.random_range(1..=64usize);
        let d = rng.random_range(1..=5000usize);
        let ranks = rng.random_range(1..=8usize.min(n));
        let spec = ProblemSpec::new(n, d, rng.random());
        let data = generate_problem(&spec).unwrap();
        let (oracle, oracle_rhs) = build_full_matrix_from(&data, n);
        let (a, rhs) = assemble(&data, n, &AssemblyOptions::new(ranks)).unwrap().gather();
        worst = worst
            .max(max_rel_elementwise(a.as_slice(), oracle.as_slice()))
            .max(max_rel_elementwise(&rhs, &oracle_rhs));
        if !a.is_exactly_symmetric() {
            asymmetric += 1;
        }
    }
    let ok = worst <= 1e-13 && asymmetric == 0;
    verdict(
        3,
        "assembly-oracle equivalence",
        ok,
        format!("50 configs, max rel elementwise {worst:.3e}, asymmetric {asymmetric}"),
        t,
    );
}

#[test]
fn criterion_04_exchange_protocol() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let triplets: Vec<Triplet> = (0..10_000)
        .map(|_| Triplet {
            row: rng.random(),
            col: rng.random(),
            value: f64::from_bits(rng.random()),
        })
        .collect();
    let decoded = unpack(&pack(&triplets)).unwrap();
    let round_trip = decoded.len() == triplets.len()
        && decoded.iter().zip(&triplets).all(|(a, b)| {
            a.row == b.row && a.col == b.col && a.value.to_bits() == b.value.to_bits()
        });

    let mut count_mismatches = 0;
    let mut pairs_checked = 0;
    for n in 1..=48usize {
        for ranks in 1..=n.min(12) {
            let p = partition_rows(n, ranks).unwrap();
            let plans: Vec<_> = (0..ranks).map(|me| plan_exchange(&p, me)).collect();
            for s in 0..ranks {
                for r in 0..ranks {
                    pairs_checked += 1;
                    if plans[s].send_counts[r] != plans[r].recv_counts[s] {
                        count_mismatches += 1;
                    }
                }
            }
        }
    }

    let spec = ProblemSpec::new(29, 600, 44);
    let data = generate_problem(&spec).unwrap();
    let reference = assemble(&data, 29, &AssemblyOptions::new(7)).unwrap().gather();
    let mut order_mismatches = 0;
    for seed in 0..100 {
        let options = AssemblyOptions {
            delivery: DeliveryOrder::Shuffled(seed),
            ..AssemblyOptions::new(7)
        };
        let (a, rhs) = assemble(&data, 29, &options).unwrap().gather();
        if !bit_equal(a.as_slice(), reference.0.as_slice()) || !bit_equal(&rhs, &reference.1) {
            order_mismatches += 1;
        }
    }
    let ok = round_trip && count_mismatches == 0 && order_mismatches == 0;
    verdict(
        4,
        "exchange protocol",
        ok,
        format!(
            "round trip {round_trip}, {pairs_checked} rank pairs with {count_mismatches} count mismatches, \
             {order_mismatches}/100 delivery orders differ"
        ),
        t,
    );
}

#[test]
fn criterion_05_kernel_transparency() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let distances = [1usize, 2, 4, 8, 16, 32, 64];
    let mut differing = Vec::new();
    for w in 0..20 {
        let n = rng.random_range(1..=300usize);
        let rows = rng.random_range(1..=n);
        let equations = rng.random_range(1..=4 * n);
        let base = IrregularWorkload::random(n, rows, equations, rng.random());
        let plain = base.run_plain().unwrap();
        for &dist in &distances {
            let piped = base.clone().with_distance(dist).run_pipelined().unwrap();
            if !bit_equal(&plain, &piped) {
                differing.push((w, dist));
            }
        }
    }
    let ok = differing.is_empty() && DEFAULT_PREFETCH_DISTANCE == 16;
    verdict(
        5,
        "kernel transparency",
        ok,
        format!(
            "20 workloads x {} distances, default distance {DEFAULT_PREFETCH_DISTANCE}, differing {differing:?}",
            distances.len()
        ),
        t,
    );
}

#[test]
fn criterion_06_spectral_solve() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_res = 0.0f64;
    let mut worst_diff = 0.0f64;
    let conditions = [1.0, 1e2, 1e4, 1e6];
    let mut systems = 0;
    for &cond in &conditions {
        for _ in 0..4 {
            let n = rng.random_range(1..=100usize);
            let (a, b, _) = spd_system(n, cond, rng.random());
            let x = solve_full(&a, &b, &SolverConfig::with_threshold(0.0)).unwrap();
            let reference = dense_solve(&a, &b).unwrap();
            worst_res = worst_res.max(relative_residual(&a, &x, &b));
            worst_diff = worst_diff.max(relative_difference(&x, &reference));
            systems += 1;
        }
    }
    let a = Matrix::from_diagonal(&[2.0, 0.5]);
    let x = solve_full(&a, &[2.0, 1.0], &SolverConfig::with_threshold(1.0)).unwrap();
    let truncated = x == vec![1.0, 0.0];
    let ok = worst_res <= 1e-8 && worst_diff <= 1e-8 && truncated;
    verdict(
        6,
        "spectral solve",
        ok,
        format!(
            "{systems} SPD systems, max residual {worst_res:.3e}, max diff vs dense {worst_diff:.3e}, \
             diag(2,0.5) tau=1 -> {x:?}"
        ),
        t,
    );
}

#[test]
fn criterion_07_split_equals_full() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let n = rng.random_range(1..=100usize);
        let cond = 10f64.powf(rng.random_range(0.0..6.0));
        let (a, b, _) = spd_system(n, cond, rng.random());
        let full = solve_full(&a, &b, &SolverConfig::default()).unwrap();
        let split_cfg = SolverConfig {
            mode: SolveMode::Split,
            ..SolverConfig::default()
        };
        let split = solve_split(&a, &b, &split_cfg).unwrap();
        worst = worst.max(relative_difference(&split, &full));
    }
    verdict(
        7,
        "split-spectrum equivalence",
        worst <= 1e-10,
        format!("20 SPD systems, max relative difference {worst:.3e}"),
        t,
    );
}

#[test]
fn criterion_08_iterative_path() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst_res = 0.0f64;
    let mut worst_ratio = 0.0f64;
    let mut worst_mean = 0.0f64;
    let mut failed = 0;
    for k in 0..20 {
        let n = rng.random_range(2..=100usize);
        let cond = [10.0, 1e2, 1e3, 1e4][k % 4];
        let (a, b, _) = spd_system(n, cond, rng.random());
        let cfg = IterativeConfig {
            rel_tolerance: 1e-4,
            max_iterations: 10 * n,
            preconditioner: Preconditioner::Jacobi,
            ..IterativeConfig::default()
        };
        let out = solve_iterative(&a, &b, &cfg).unwrap();
        let res = relative_residual(&a, &out.solution, &b);
        if !out.converged || res > 1e-4 {
            failed += 1;
        }
        worst_res = worst_res.max(res);
        worst_ratio = worst_ratio.max(out.iterations as f64 / n as f64);
        // A residual stop at 1e-4 bounds the coefficient error only by
        // cond * 1e-4, so the percentage check uses the well-conditioned ones.
        if cond <= 10.0 {
            let direct = solve_full(&a, &b, &SolverConfig::default()).unwrap();
            let row = difference_row("coefficients", &direct, &out.solution).unwrap();
            worst_mean = worst_mean.max(row.mean_percent);
        }
    }
    // The assembled normal equations themselves, through the full pipeline.
    for ranks in [1usize, 4] {
        let base = RunConfig {
            n: 64,
            data: 2000,
            ranks,
            ..RunConfig::default()
        };
        let direct = run(&RunConfig {
            solver: SolverKind::Direct,
            ..base.clone()
        })
        .unwrap();
        let iterative = run(&RunConfig {
            solver: SolverKind::Iterative,
            ..base
        })
        .unwrap();
        if iterative.solve.converged != Some(true) || iterative.solve.relative_residual > 1e-4 {
            failed += 1;
        }
        worst_res = worst_res.max(iterative.solve.relative_residual);
        let rows = compare_runs(&direct, &iterative).unwrap();
        worst_mean = rows.iter().fold(worst_mean, |m, r| m.max(r.mean_percent));
    }
    let ok = failed == 0 && worst_res <= 1e-4 && worst_ratio <= 10.0 && worst_mean <= 0.5;
    verdict(
        8,
        "iterative path",
        ok,
        format!(
            "22 systems, max true residual {worst_res:.3e}, max iterations/n {worst_ratio:.2}, \
             max mean direct-vs-iterative {worst_mean:.3e}%"
        ),
        t,
    );
}

#[test]
fn criterion_09_determinism() {
    let t = Instant::now();
    let base = RunConfig {
        n: 48,
        data: 3000,
        seed: 9,
        solver: SolverKind::Direct,
        ..RunConfig::default()
    };
    let reference = run(&RunConfig {
        ranks: 1,
        ..base.clone()
    })
    .unwrap();
    let mut worst_rank_mean = 0.0f64;
    for ranks in [2usize, 4, 8] {
        let other = run(&RunConfig {
            ranks,
            ..base.clone()
        })
        .unwrap();
        let rows = compare_runs(&reference, &other).unwrap();
        worst_rank_mean = rows.iter().fold(worst_rank_mean, |m, r| m.max(r.mean_percent));
    }

    let spec = ProblemSpec::new(40, 5000, 99);
    let data = generate_problem(&spec).unwrap();
    let (oracle, _) = build_full_matrix_from(&data, 40);
    let blocks_for = |threads: usize, deterministic: bool| {
        let options = AssemblyOptions {
            threading: Threading {
                threads,
                deterministic,
                execution: Execution::Parallel,
            },
            ..AssemblyOptions::new(4)
        };
        assemble(&data, 40, &options).unwrap().blocks
    };
    let one = blocks_for(1, true);
    let four = blocks_for(4, true);
    let bit_identical = one
        .iter()
        .zip(&four)
        .all(|(x, y)| bit_equal(x.values(), y.values()) && bit_equal(x.rhs(), y.rhs()));
    let loose = normeq::assembly::gather_blocks(&blocks_for(4, false)).0;
    let loose_rel = max_rel_elementwise(loose.as_slice(), oracle.as_slice());

    let ok = worst_rank_mean <= 1e-10 && bit_identical && loose_rel <= 1e-12;
    verdict(
        9,
        "determinism",
        ok,
        format!(
            "ranks 1/2/4/8 max mean diff {worst_rank_mean:.3e}%, deterministic threads 1 vs 4 \
             bit-identical {bit_identical}, non-deterministic rel {loose_rel:.3e}"
        ),
        t,
    );
}

#[test]
fn criterion_10_accuracy_target() {
    let t = Instant::now();
    let base = RunConfig {
        n: 64,
        data: 2000,
        solver: SolverKind::Direct,
        ..RunConfig::default()
    };
    let reference = run(&base).unwrap();
    let variants = [
        ("ranks 8", RunConfig { ranks: 8, ..base.clone() }),
        (
            "threads 4",
            RunConfig {
                ranks: 2,
                threads: 4,
                ..base.clone()
            },
        ),
        (
            "deterministic threads 4",
            RunConfig {
                ranks: 4,
                threads: 4,
                deterministic_reduction: true,
                ..base.clone()
            },
        ),
        (
            "sequential ranks",
            RunConfig {
                ranks: 4,
                sequential_ranks: true,
                ..base.clone()
            },
        ),
        ("split", RunConfig { solver: SolverKind::Split, ..base.clone() }),
        (
            "iterative",
            RunConfig {
                solver: SolverKind::Iterative,
                ranks: 4,
                ..base.clone()
            },
        ),
    ];
    let mut worst = 0.0f64;
    let mut lines = Vec::new();
    for (name, cfg) in &variants {
        let other = run(cfg).unwrap();
        for row in compare_runs(&reference, &other).unwrap() {
            worst = worst.max(row.mean_percent);
            lines.push(format!("{name}/{}={:.2e}%", row.metric, row.mean_percent));
        }
    }
    verdict(
        10,
        "accuracy-target analogue",
        worst <= 0.1,
        format!("max mean difference {worst:.3e}% [{}]", lines.join(", ")),
        t,
    );
}
