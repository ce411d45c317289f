//! Command-line front end: estimates, simulations, design-space sweeps and
//! comparison against reference measurements.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use systolic3d::dse::report::{Format, Table};
use systolic3d::dse::{
    compare, compare_points, enumerate, predict, simulate_with_product, CompareReport, Config,
    DesignPoint, EnumerateOptions, Fidelity, FmaxTable, ParamRange, ReferenceSet, SearchSpace,
    TolerancePolicy,
};
use systolic3d::engine::{event_sim_trace, write_trace_csv};
use systolic3d::model::{ddr_floats_per_cycle, pe_count, ProblemShape};
use systolic3d::perf::flop_count;
use systolic3d::{Error, Result};

#[derive(Parser)]
#[command(name = "systo3d", version, about = "3D systolic-array matmul performance model and simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct Output {
    /// Aligned text or CSV.
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form figures for the design point in a config file.
    Estimate {
        config: PathBuf,
        #[command(flatten)]
        out: Output,
    },
    /// Run the product on seeded operands and report counters.
    Simulate {
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = Fidelity::Blocked)]
        fidelity: Fidelity,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write a CSV of dot-unit activations of one on-chip block.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write the product in the binary matrix format.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Enumerate architectures under a DSP budget.
    Dse {
        #[arg(long)]
        budget: usize,
        /// `name=lo..hi` or `name=a,b,c` for d0_i, d0_j, d0_k or d_p. Repeatable.
        #[arg(long = "range")]
        ranges: Vec<String>,
        /// Clock assumed for every point without a table entry.
        #[arg(long, default_value_t = 368.0)]
        fmax: f64,
        /// JSON file with per-shape clocks: {"default_mhz": .., "entries": {"64x32x2/2": 398}}.
        #[arg(long)]
        fmax_table: Option<PathBuf>,
        /// Problem size as `n` (cube) or `i,j,k`; enables predictions.
        #[arg(long)]
        problem: Option<String>,
        /// Mark points with a larger dot unit infeasible.
        #[arg(long)]
        max_dp: Option<usize>,
        #[command(flatten)]
        out: Output,
    },
    /// Compare the model against reference measurements.
    Compare {
        /// Reference data file; the bundled data is used when omitted.
        #[arg(long)]
        refs: Option<PathBuf>,
        /// Compare these design points instead of the reference designs.
        #[arg(long = "config")]
        configs: Vec<PathBuf>,
        #[command(flatten)]
        out: Output,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<bool> {
    match command {
        Command::Estimate { config, out } => estimate_cmd(&load_config(&config)?, out.format),
        Command::Simulate { config, fidelity, seed, trace, out, output } => {
            simulate_cmd(&load_config(&config)?, fidelity, seed, trace, out, output.format)
        }
        Command::Dse { budget, ranges, fmax, fmax_table, problem, max_dp, out } => {
            let table = match fmax_table {
                Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
                None => FmaxTable::uniform(fmax),
            };
            let problem = problem.as_deref().map(parse_problem).transpose()?;
            dse_cmd(budget, &ranges, &table, problem, max_dp, out.format)
        }
        Command::Compare { refs, configs, out } => {
            let refs = match refs {
                Some(path) => ReferenceSet::load(&path)?,
                None => ReferenceSet::bundled(),
            };
            compare_cmd(&refs, &configs, out.format)
        }
    }
}

fn load_config(path: &std::path::Path) -> Result<Config> {
    Config::load(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn parse_problem(s: &str) -> Result<ProblemShape> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse().map_err(|_| Error::Config(format!("bad problem size '{s}'"))))
        .collect::<Result<_>>()?;
    match parts[..] {
        [n] => Ok(ProblemShape::cube(n)),
        [i, j, k] => Ok(ProblemShape::new(i, j, k)),
        _ => Err(Error::Config(format!("problem must be n or i,j,k, got '{s}'"))),
    }
}

/// Vertical field/value listing for text, one header row plus one data row for CSV.
fn emit_record(fields: &[(&str, String)], format: Format) {
    let table = match format {
        Format::Table => {
            let mut t = Table::new(["field", "value"]);
            for (k, v) in fields {
                t.push([k.to_string(), v.clone()]);
            }
            t
        }
        Format::Csv => {
            let mut t = Table::new(fields.iter().map(|(k, _)| k.to_string()));
            t.push(fields.iter().map(|(_, v)| v.clone()));
            t
        }
    };
    print!("{}", table.render(format));
}

fn plan_fields(point: &DesignPoint) -> Result<Vec<(&'static str, String)>> {
    let s = point.shape;
    let plan = point.plan.as_ref();
    let opt = |v: Option<usize>| v.map_or_else(String::new, |v| v.to_string());
    Ok(vec![
        ("d0_i", s.d0_i.to_string()),
        ("d0_j", s.d0_j.to_string()),
        ("d0_k", s.d0_k.to_string()),
        ("d_p", s.d_p.to_string()),
        ("n_dsp", point.n_dsp().to_string()),
        ("n_pe", pe_count(&s)?.to_string()),
        ("fmax_mhz", format!("{}", point.clock.fmax_mhz)),
        ("ddr_floats_per_cycle", ddr_floats_per_cycle(&point.clock)?.to_string()),
        ("d1_i", opt(plan.map(|p| p.d1_i))),
        ("d1_j", opt(plan.map(|p| p.d1_j))),
        ("r_a", opt(plan.map(|p| p.r_a))),
        ("r_b", opt(plan.map(|p| p.r_b))),
        ("b_ga", opt(plan.map(|p| p.b_ga))),
        ("b_gb", opt(plan.map(|p| p.b_gb))),
        ("non_pow2_lsu", plan.map_or(String::new(), |p| p.non_pow2_widths().to_string())),
    ])
}

fn estimate_cmd(cfg: &Config, format: Format) -> Result<bool> {
    let point = cfg.design_point()?;
    let problem = cfg.problem();
    let est = predict(&point, &problem, &cfg.latency()?)?;
    let mut fields = plan_fields(&point)?;
    fields.extend([
        ("d2_i", problem.d2_i.to_string()),
        ("d2_j", problem.d2_j.to_string()),
        ("d2_k", problem.d2_k.to_string()),
        ("flop", flop_count(&problem).to_string()),
        ("t_peak_gflops", format!("{:.1}", est.t_peak / 1e9)),
        ("b_a", est.b_a.to_string()),
        ("b_b", est.b_b.to_string()),
        ("l_body", est.l_body.to_string()),
        ("l_tot", est.l_tot.to_string()),
        ("c_percent", format!("{:.4}", est.c_percent)),
        ("t_pred_gflops", format!("{:.1}", est.t_pred / 1e9)),
        ("stall", format!("{:.4}", est.stall)),
    ]);
    emit_record(&fields, format);
    Ok(true)
}

fn simulate_cmd(
    cfg: &Config,
    fidelity: Fidelity,
    seed: u64,
    trace: Option<PathBuf>,
    out: Option<PathBuf>,
    format: Format,
) -> Result<bool> {
    let point = cfg.design_point()?;
    let problem = cfg.problem();
    let lat = cfg.latency()?;
    let (outcome, product) = simulate_with_product(&point, &problem, fidelity, seed, &lat)?;
    if let Some(path) = trace {
        let events = event_sim_trace(&point.shape, problem.d2_k, &lat)?;
        write_trace_csv(BufWriter::new(File::create(path)?), &events)?;
    }
    if let Some(path) = out {
        product.write_binary(BufWriter::new(File::create(path)?))?;
    }
    let st = &outcome.stats;
    let fields = vec![
        ("fidelity", format!("{:?}", outcome.fidelity).to_lowercase()),
        ("seed", seed.to_string()),
        ("blocks", st.blocks.to_string()),
        ("it_read_init", st.it_read_init.to_string()),
        ("it_steady", st.it_steady.to_string()),
        ("it_tail", st.it_tail.to_string()),
        ("it_write", st.it_write.to_string()),
        ("it_comp", st.it_comp.to_string()),
        ("it_tot", st.it_tot.to_string()),
        ("measured_c", format!("{:.6}", st.measured_c)),
        ("cycles_total", st.cycles_total.to_string()),
        ("stall_cycles_read", st.stall_cycles_read.to_string()),
        ("stall_cycles_write", st.stall_cycles_write.to_string()),
        ("elements_read_a", st.elements_read_a.to_string()),
        ("elements_read_b", st.elements_read_b.to_string()),
        ("elements_written_c", st.elements_written_c.to_string()),
        ("result_sha256", outcome.result_hash.clone()),
        ("verified", outcome.verified.to_string()),
    ];
    emit_record(&fields, format);
    for v in &outcome.traffic_violations {
        eprintln!("traffic: {v}");
    }
    Ok(outcome.verified)
}

fn dse_cmd(
    budget: usize,
    ranges: &[String],
    fmax: &FmaxTable,
    problem: Option<ProblemShape>,
    max_dp: Option<usize>,
    format: Format,
) -> Result<bool> {
    let default_space = SearchSpace {
        d0_i: ParamRange::span(1, 80),
        d0_j: ParamRange::span(1, 80),
        d0_k: ParamRange::span(1, 8),
        d_p: ParamRange(vec![1, 2, 4, 8]),
    };
    let space = SearchSpace::parse(ranges, &default_space)?;
    let points = enumerate(budget, &space, fmax, &Default::default(), &EnumerateOptions { max_dp })?;
    let lat = Default::default();
    let predictions: Vec<_> = match problem {
        Some(p) => {
            use rayon::prelude::*;
            points.par_iter().map(|pt| Some(predict(pt, &p, &lat))).collect()
        }
        None => points.iter().map(|_| None).collect(),
    };

    let mut table = Table::new([
        "d0_i", "d0_j", "d0_k", "d_p", "n_dsp", "n_pe", "fmax_mhz", "fmax_source", "feasible",
        "d1_i", "d1_j", "b_ga", "b_gb", "t_peak_gflops", "c_percent", "t_pred_gflops", "notes",
    ]);
    for (point, pred) in points.iter().zip(predictions) {
        let s = point.shape;
        let (_, from_table) = fmax.lookup(&s);
        let plan = point.plan.filter(|_| point.feasible);
        let cell = |v: Option<usize>| v.map_or_else(String::new, |v| v.to_string());
        let peak = systolic3d::perf::t_peak(point.n_dsp(), &point.clock) / 1e9;
        let mut notes = point.violations.clone();
        if plan.is_some_and(|p| p.non_pow2_widths()) {
            notes.push("non-power-of-two read width".into());
        }
        let (c, t) = match pred {
            Some(Ok(e)) => (format!("{:.4}", e.c_percent), format!("{:.1}", e.t_pred / 1e9)),
            Some(Err(e)) => {
                if point.feasible {
                    notes.push(e.to_string());
                }
                (String::new(), String::new())
            }
            None => (String::new(), String::new()),
        };
        table.push([
            s.d0_i.to_string(),
            s.d0_j.to_string(),
            s.d0_k.to_string(),
            s.d_p.to_string(),
            point.n_dsp().to_string(),
            pe_count(&s)?.to_string(),
            format!("{}", point.clock.fmax_mhz),
            if from_table { "table" } else { "assumed" }.to_string(),
            point.feasible.to_string(),
            cell(plan.map(|p| p.d1_i)),
            cell(plan.map(|p| p.d1_j)),
            cell(plan.map(|p| p.b_ga)),
            cell(plan.map(|p| p.b_gb)),
            format!("{peak:.1}"),
            c,
            t,
            notes.join("; "),
        ]);
    }
    print!("{}", table.render(format));
    Ok(true)
}

fn opt_f(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(String::new, |v| format!("{v:.digits$}"))
}

fn render_report(report: &CompareReport, format: Format) -> String {
    let mut out = String::new();
    if !report.peak.is_empty() {
        let mut t = Table::new([
            "id", "n_dsp", "dsp_ref", "n_pe", "pe_ref", "fmax_mhz", "t_peak_gflops", "t_peak_ref", "status",
        ]);
        for r in &report.peak {
            t.push([
                r.id.clone(),
                r.n_dsp.to_string(),
                r.dsp_ref.to_string(),
                r.n_pe.to_string(),
                r.pe_ref.to_string(),
                format!("{}", r.fmax_mhz),
                format!("{:.1}", r.t_peak_gflops),
                format!("{}", r.t_peak_ref),
                r.status.label().to_string(),
            ]);
        }
        out.push_str(&t.render(format));
        out.push('\n');
    }
    let mut t = Table::new([
        "id", "d2_i", "d2_j", "d2_k", "d2_over_d1", "predicted_c", "measured_e_d", "delta", "tolerance", "status",
    ]);
    for r in &report.efficiency {
        t.push([
            r.id.clone(),
            r.problem.d2_i.to_string(),
            r.problem.d2_j.to_string(),
            r.problem.d2_k.to_string(),
            format!("{:.2}", r.ratio),
            format!("{:.4}", r.predicted),
            opt_f(r.measured, 2),
            opt_f(r.delta, 4),
            opt_f(r.tolerance, 2),
            r.status.label().to_string(),
        ]);
    }
    out.push_str(&t.render(format));
    out
}

fn compare_cmd(refs: &ReferenceSet, configs: &[PathBuf], format: Format) -> Result<bool> {
    let policy = TolerancePolicy::default();
    let report = if configs.is_empty() {
        compare(refs, &policy)?
    } else {
        let items = configs
            .iter()
            .map(|path| {
                let cfg = load_config(path)?;
                Ok((cfg.design_point()?, cfg.problem()))
            })
            .collect::<Result<Vec<_>>>()?;
        compare_points(&items, refs, &policy)?
    };
    print!("{}", render_report(&report, format));
    if format == Format::Table {
        println!(
            "\n{} failing row(s); fmax values are taken from the reference data, not predicted",
            report.failures()
        );
    }
    Ok(report.all_pass())
}
