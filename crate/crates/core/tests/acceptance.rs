//! Acceptance suite. Every test checks one criterion and prints a single
//! `criterion N: PASS|FAIL` line before asserting, so the verdicts are visible
//! with `cargo test --test acceptance -- --nocapture --test-threads=1`.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use systolic3d::dse::{compare, ReferenceSet, RowStatus, TolerancePolicy};
use systolic3d::engine::systolic_matmul;
use systolic3d::{
    c_percent, ddr_floats_per_cycle, dsp_count, event_sim_timing, make_blocking_plan,
    oracle_matmul, pe_count, run_blocked, stall_rate, t_peak, timing_3d, traffic_audit,
    ArchShape, ClockSpec, LatencyProfile, Layout, Matrix, MemorySpec, ProblemShape,
};

fn verdict(n: u32, title: &str, ok: bool, detail: &str) {
    let word = if ok { "PASS" } else { "FAIL" };
    println!("criterion {n}: {word} {title} ({detail})");
}

fn int_matrix(rows: usize, cols: usize, layout: Layout, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, layout, |_, _| rng.gen_range(-8i32..=8) as f32)
}

fn float_matrix(rows: usize, cols: usize, layout: Layout, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, layout, |_, _| rng.gen_range(-1.0f32..1.0))
}

/// Largest error relative to the magnitude of the summed terms.
fn rel_error(c: &Matrix, reference: &Matrix, a: &Matrix, b: &Matrix) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..c.rows() {
        for j in 0..c.cols() {
            let scale: f64 =
                (0..a.cols()).map(|k| (a.get(i, k) as f64 * b.get(k, j) as f64).abs()).sum();
            let err = (c.get(i, j) as f64 - reference.get(i, j) as f64).abs();
            if scale > 0.0 {
                worst = worst.max(err / scale);
            }
        }
    }
    worst
}

#[test]
fn criterion_1_functional_correctness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut cases, mut bitwise_failures, mut worst_rel) = (0usize, Vec::new(), 0.0f64);
    for d0_i in 1..=5 {
        for d0_j in 1..=5 {
            for d0_k in [1, 2, 4] {
                for d_p in (1..=d0_k).filter(|p| d0_k % p == 0) {
                    let shape = ArchShape::new(d0_i, d0_j, d0_k, d_p).unwrap();
                    for k in [d0_k, 4 * d0_k] {
                        cases += 1;
                        let a = int_matrix(d0_i, k, Layout::RowMajor, &mut rng);
                        let b = int_matrix(k, d0_j, Layout::RowMajor, &mut rng);
                        let c = systolic_matmul(&a, &b, &shape).unwrap();
                        if !c.bitwise_eq(&oracle_matmul(&a, &b).unwrap()) {
                            bitwise_failures.push(format!("{shape} K={k}"));
                        }
                        let a = float_matrix(d0_i, k, Layout::RowMajor, &mut rng);
                        let b = float_matrix(k, d0_j, Layout::RowMajor, &mut rng);
                        let c = systolic_matmul(&a, &b, &shape).unwrap();
                        let reference = oracle_matmul(&a, &b).unwrap();
                        worst_rel = worst_rel.max(rel_error(&c, &reference, &a, &b));
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let ok = bitwise_failures.is_empty() && worst_rel <= 1e-5 && elapsed < Duration::from_secs(10);
    verdict(
        1,
        "functional correctness",
        ok,
        &format!(
            "{cases} cases, {} bitwise mismatches, worst float error {worst_rel:.2e}, {:.2?}",
            bitwise_failures.len(),
            elapsed
        ),
    );
    assert!(bitwise_failures.is_empty(), "{bitwise_failures:?}");
    assert!(worst_rel <= 1e-5);
    assert!(elapsed < Duration::from_secs(10));
}

#[test]
fn criterion_2_timing_equivalence() {
    let start = Instant::now();
    let lat = LatencyProfile::default();
    let mut configs = 0usize;
    let mut mismatches = Vec::new();
    for d0_i in 1..=5 {
        for d0_j in 1..=5 {
            for d0_k in [1, 2, 3, 4, 6, 8] {
                for d_p in (1..=d0_k).filter(|p| d0_k % p == 0 && [1, 2, 4, 8].contains(p)) {
                    let shape = ArchShape::new(d0_i, d0_j, d0_k, d_p).unwrap();
                    for k in [d0_k, 3 * d0_k] {
                        configs += 1;
                        let sim = event_sim_timing(&shape, k, &lat).unwrap();
                        let closed = (d0_i + d0_j + k / d0_k - 1) as u64
                            + (d0_k / d_p) as u64 * lat.l_dot(d_p) as u64;
                        if sim.l_tot != closed || sim != timing_3d(&shape, k, &lat).unwrap() {
                            mismatches.push(format!("{shape} K={k}: {} vs {closed}", sim.l_tot));
                        }
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let ok = configs >= 200 && mismatches.is_empty() && elapsed < Duration::from_secs(5);
    verdict(
        2,
        "timing equivalence",
        ok,
        &format!("{configs} configurations, {} mismatches, {elapsed:.2?}", mismatches.len()),
    );
    assert!(configs >= 200);
    assert!(mismatches.is_empty(), "{mismatches:?}");
    assert!(elapsed < Duration::from_secs(5));
}

#[test]
fn criterion_3_peak_table() {
    let refs = ReferenceSet::bundled();
    let mut bad = Vec::new();
    let mut rows = 0;
    for r in refs.designs.iter().filter(|r| !r.fitter_failed) {
        rows += 1;
        let shape = r.shape().unwrap();
        let clock = r.clock().unwrap();
        let peak = t_peak(dsp_count(&shape), &clock) / 1e9;
        let expected = r.t_peak_gflops.unwrap();
        if dsp_count(&shape) != r.dsps || pe_count(&shape).unwrap() != r.pes || (peak - expected).abs() > 1.0 {
            bad.push(format!("{}: {} DSPs, {} PEs, {peak:.1} GFLOPS", r.id, dsp_count(&shape), pe_count(&shape).unwrap()));
        }
    }
    let c = refs.get("C").unwrap();
    let c_shape = c.shape().unwrap();
    let c_ok = dsp_count(&c_shape) == 4704
        && pe_count(&c_shape).unwrap() == 4704
        && (t_peak(4704, &ClockSpec::new(368.0).unwrap()) / 1e9 - 3462.0).abs() <= 1.0;
    let ok = rows == 9 && bad.is_empty() && c_ok;
    verdict(3, "resource and peak table", ok, &format!("{rows} built designs, {} mismatches", bad.len()));
    assert_eq!(rows, 9);
    assert!(bad.is_empty(), "{bad:?}");
    assert!(c_ok);
}

#[test]
fn criterion_4_efficiency_tables() {
    let start = Instant::now();
    let report = compare(&ReferenceSet::bundled(), &TolerancePolicy::default()).unwrap();
    let judged: Vec<_> = report
        .efficiency
        .iter()
        .filter(|r| ["E", "F", "G", "H", "I", "L", "M", "N"].contains(&r.id.as_str()))
        .collect();
    let failures: Vec<String> = judged
        .iter()
        .filter(|r| r.status == RowStatus::Fail)
        .map(|r| {
            format!(
                "{} d2={}: predicted {:.4} vs {:.2}, gap {:.4} > {}",
                r.id,
                r.problem.d2_i,
                r.predicted,
                r.measured.unwrap(),
                r.delta.unwrap(),
                r.tolerance.unwrap()
            )
        })
        .collect();
    let c_rows = report.efficiency.iter().filter(|r| r.id == "C").collect::<Vec<_>>();
    let c_excluded = c_rows.len() == 6 && c_rows.iter().all(|r| r.status == RowStatus::Excluded);
    let elapsed = start.elapsed();
    let ok = judged.len() == 48 && failures.is_empty() && c_excluded;
    verdict(
        4,
        "efficiency tables",
        ok,
        &format!(
            "{} rows judged, {} outside tolerance{}{}, design C reported and excluded, {elapsed:.2?}",
            judged.len(),
            failures.len(),
            if failures.is_empty() { "" } else { ": " },
            failures.join("; ")
        ),
    );
    assert_eq!(judged.len(), 48);
    assert!(c_excluded);
    assert!(failures.is_empty(), "{failures:?}");
}

/// Desk-scale blocked runs: `d1 = 4 d0`, `d2_k` at 4, 16 and 64 times `d1_i`.
fn desk_scale_runs() -> Vec<(ArchShape, ProblemShape)> {
    let mut out = Vec::new();
    for (d0_i, d0_j, d0_k) in [(8, 8, 2), (16, 8, 2)] {
        let shape = ArchShape::new(d0_i, d0_j, d0_k, 2).unwrap();
        let (d1_i, d1_j) = (4 * d0_i, 4 * d0_j);
        for m in [4, 16, 64] {
            out.push((shape, ProblemShape::new(d1_i, 2 * d1_j, m * d1_i)));
        }
    }
    out
}

fn operands(p: &ProblemShape, seed: u64) -> (Matrix, Matrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = int_matrix(p.d2_i, p.d2_k, Layout::ColMajor, &mut rng);
    let b = int_matrix(p.d2_k, p.d2_j, Layout::RowMajor, &mut rng);
    (a, b)
}

#[test]
fn criterion_5_and_6_blocked_runs() {
    let start = Instant::now();
    let clock = ClockSpec::new(368.0).unwrap();
    let mem = MemorySpec::default();
    let tier = ddr_floats_per_cycle(&clock).unwrap();
    let mut worst_gap = 0.0f64;
    let mut traffic_failures = Vec::new();
    let mut wrong_products = Vec::new();
    let mut runs = desk_scale_runs();
    let agreement_runs = runs.len();
    // Extra shapes that only feed the traffic check: several blocks on every axis.
    runs.push((ArchShape::new(4, 2, 2, 1).unwrap(), ProblemShape::new(48, 36, 20)));
    runs.push((ArchShape::new(3, 5, 4, 4).unwrap(), ProblemShape::new(24, 60, 16)));
    for (n, (shape, problem)) in runs.iter().enumerate() {
        let d1 = if n < agreement_runs { Some((4 * shape.d0_i, 4 * shape.d0_j)) } else { None };
        let plan = make_blocking_plan(shape, &clock, &mem, d1).unwrap();
        let problem = if n < agreement_runs {
            *problem
        } else {
            ProblemShape::new(2 * plan.d1_i, 3 * plan.d1_j, problem.d2_k)
        };
        let (a, b) = operands(&problem, n as u64);
        let (c, stats) = run_blocked(&a, &b, shape, &plan, &problem, &mem, &clock).unwrap();
        if !c.bitwise_eq(&oracle_matmul(&a, &b).unwrap()) {
            wrong_products.push(format!("{shape} {problem:?}"));
        }
        let violations = traffic_audit(&stats, &problem, &plan);
        if !violations.is_empty() {
            traffic_failures.push(format!("{shape}: {violations:?}"));
        }
        if n < agreement_runs {
            assert!(shape.d0_j >= tier);
            let predicted = c_percent(shape, &plan, &problem, &clock).unwrap();
            worst_gap = worst_gap.max((stats.measured_c - predicted).abs());
        }
    }
    let elapsed = start.elapsed();
    let ok5 = worst_gap <= 0.01 && wrong_products.is_empty() && elapsed < Duration::from_secs(60);
    verdict(
        5,
        "simulator and closed form agree",
        ok5,
        &format!("{agreement_runs} runs, worst gap {worst_gap:.2e}, {elapsed:.2?}"),
    );
    let ok6 = traffic_failures.is_empty();
    verdict(6, "traffic identities", ok6, &format!("{} blocked runs audited", runs.len()));
    assert!(wrong_products.is_empty(), "{wrong_products:?}");
    assert!(worst_gap <= 0.01);
    assert!(elapsed < Duration::from_secs(60), "{elapsed:?}");
    assert!(traffic_failures.is_empty(), "{traffic_failures:?}");
}

#[test]
fn criterion_7_stall_model() {
    let mem = MemorySpec::default();
    let at = |f: f64| ClockSpec::new(f).unwrap();
    let cases = [
        (stall_rate(64.0, &at(400.0), &mem), 0.25),
        (stall_rate(48.0, &at(400.0), &mem), 0.0),
        (stall_rate(64.0, &at(300.0), &mem), 0.0),
        (stall_rate(32.0, &at(600.0), &mem), 0.0),
    ];
    let stalls_ok = cases.iter().all(|&(got, want)| got == want);
    let tiers: Vec<_> = [151.0, 300.0, 301.0, 600.0]
        .iter()
        .map(|&f| ddr_floats_per_cycle(&at(f)).unwrap())
        .collect();
    let tiers_ok = tiers == [16, 16, 8, 8]
        && ddr_floats_per_cycle(&ClockSpec { fmax_mhz: 150.0 }).is_err()
        && ddr_floats_per_cycle(&ClockSpec { fmax_mhz: 601.0 }).is_err();
    let ok = stalls_ok && tiers_ok;
    verdict(7, "stall model and DDR tiers", ok, &format!("stalls {cases:?}, tiers {tiers:?}"));
    assert!(stalls_ok);
    assert!(tiers_ok);
}

#[test]
fn criterion_8_hardware_throughput_not_reproduced() {
    // Measured GFLOPS are hardware outcomes. They enter only through the
    // peak formula and the efficiency fraction, so the fraction printed next
    // to each measurement must be consistent with measured over peak.
    let refs = ReferenceSet::bundled();
    let mut worst = 0.0f64;
    let mut rows = 0;
    for r in refs.designs.iter().filter(|r| !r.fitter_failed) {
        let peak = r.t_peak_gflops.unwrap();
        for m in &r.measurements {
            rows += 1;
            worst = worst.max((m.t_flops_gflops / peak - m.e_d).abs());
        }
    }
    let f = refs.get("F").unwrap();
    let f_largest = f.measurements.last().unwrap().t_flops_gflops;
    let ok = rows == 54 && worst < 0.01 && f_largest == 3536.0;
    verdict(
        8,
        "hardware throughput acknowledged, validated through peak and efficiency",
        ok,
        &format!("{rows} measurements, worst |T/T_peak - e_D| {worst:.4}"),
    );
    assert_eq!(rows, 54);
    assert!(worst < 0.01);
    assert_eq!(f_largest, 3536.0);
}
