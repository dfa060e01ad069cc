//! Command-line front end: `validate`, `run`, `sweep` and `verify`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::analysis::{comm_cost_bits, efficiency, sweep_partitions, theorem11_bound};
use crate::error::{Error, Result};
use crate::mechanism::{greedy_allocate, marginals, true_welfare, Market, TieRule};
use crate::oracle::brute_optimal;
use crate::polymatroid::naive_quantize;
use crate::rounded::{run_rounded, RoundedConfig, StrategyKind};
use crate::scenario::{validate_scenario, ResultRecord, Scenario};
use crate::verify::{run_suite, Suite};

pub const CSV_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "qvcg", version, about = "Quantized VCG allocation over polymatroids")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Quantized,
    Rounded,
    Naive,
}

impl Mode {
    fn name(self) -> &'static str {
        match self {
            Mode::Quantized => "quantized",
            Mode::Rounded => "rounded",
            Mode::Naive => "naive",
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a scenario without running it.
    Validate {
        /// Scenario file, or a built-in name (example1, example2, tightness(eta)).
        scenario: String,
        #[arg(long = "M")]
        partitions: Option<u64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one mechanism and write a result record.
    Run {
        scenario: String,
        #[arg(long, value_enum, default_value = "quantized")]
        mode: Mode,
        #[arg(long = "M")]
        partitions: Option<u64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Include wall-clock time in the record.
        #[arg(long)]
        timing: bool,
    },
    /// Rerun over a list of partition counts or of epsilons.
    Sweep {
        scenario: String,
        /// Comma-separated partition counts.
        #[arg(long = "M", value_delimiter = ',')]
        partitions: Vec<u64>,
        /// Comma-separated epsilons (rounded mechanism at fixed M).
        #[arg(long, value_delimiter = ',')]
        epsilon: Vec<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a property suite; exits nonzero if any check fails.
    Verify {
        scenario: String,
        #[arg(long, value_enum)]
        suite: Suite,
        #[arg(long, default_value_t = 20)]
        samples: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long = "M")]
        partitions: Option<u64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(spec: &str, partitions: Option<u64>, epsilon: Option<f64>, seed: Option<u64>) -> Result<Scenario> {
    let mut s = Scenario::load(spec)?;
    if partitions.is_some() {
        s.partitions = partitions;
    }
    if epsilon.is_some() {
        s.rounding = epsilon;
    }
    if let Some(seed) = seed {
        s.seed = seed;
    }
    Ok(s)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(dir.join(name), text)?;
    Ok(())
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

/// `M, x_1..x_N, welfare, efficiency, bound`
type Row = (u64, Vec<f64>, f64, f64, Option<f64>);

/// One CSV row per run.
fn series_csv(n_agents: usize, rows: &[Row]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["M".to_string()];
    header.extend((1..=n_agents).map(|i| format!("x_{i}")));
    header.extend(["welfare", "efficiency", "bound"].map(String::from));
    w.write_record(&header)?;
    for (m, x, welfare, eff, bound) in rows {
        let mut record = vec![m.to_string()];
        record.extend(x.iter().map(f64::to_string));
        record.push(welfare.to_string());
        record.push(eff.to_string());
        record.push(bound.map(|b| b.to_string()).unwrap_or_default());
        w.write_record(&record)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn cmd_validate(s: &Scenario, out: Option<&Path>) -> Result<i32> {
    let report = validate_scenario(s);
    for w in &report.warnings {
        log::warn!("{w}");
    }
    let record = json!({
        "scenario": s.name.clone().unwrap_or_else(|| s.source.to_string()),
        "scenario_digest": s.digest(),
        "report": report,
    });
    print_json(&record)?;
    if let Some(dir) = out {
        write_json(dir, "validate.json", &record)?;
    }
    Ok(if report.is_valid { 0 } else { 1 })
}

fn naive_outcome(s: &Scenario) -> Result<(serde_json::Value, u64, Vec<f64>, f64)> {
    let m = s
        .partitions
        .ok_or_else(|| Error::Scenario("naive mode needs an explicit M".into()))?;
    let region = naive_quantize(&s.rank_function, m);
    let bids = s
        .agents
        .iter()
        .enumerate()
        .map(|(i, u)| marginals(u, m, region.values[1 << i].min(m)))
        .collect::<Result<Vec<_>>>()?;
    let alloc = greedy_allocate(&region, &bids, TieRule::LowestIndex)?;
    let welfare = true_welfare(&s.agents, &alloc.units, m);
    let x: Vec<f64> = alloc.units.iter().map(|&y| y as f64 / m as f64).collect();
    let brute = match brute_optimal(&region, &s.agents, m) {
        Ok(b) => Some(b),
        Err(Error::InstanceTooLarge(_)) => None,
        Err(e) => return Err(e),
    };
    let value = json!({
        "M": m,
        "region": region,
        "y_star": alloc.units,
        "x_star": x,
        "unallocated": 1.0 - x.iter().sum::<f64>(),
        "true_welfare": welfare,
        "brute_force": brute,
    });
    Ok((value, m, x, welfare))
}

fn cmd_run(s: &Scenario, mode: Mode, out: Option<&Path>, timing: bool) -> Result<i32> {
    let start = Instant::now();
    let (outcome, m, x, welfare) = match mode {
        Mode::Quantized => {
            let market = Market::from_scenario(s)?;
            let o = market.run(&market.truthful, TieRule::LowestIndex)?;
            let (m, x, w) = (o.partitions, o.x_star.clone(), o.true_welfare);
            (serde_json::to_value(o)?, m, x, w)
        }
        Mode::Rounded => {
            let epsilon = s
                .rounding
                .ok_or_else(|| Error::Scenario("rounded mode needs rounding.epsilon or --epsilon".into()))?;
            let market = Market::from_scenario(s)?;
            let m = market.partitions();
            let config = RoundedConfig::new(epsilon, m)?;
            let strategies = s
                .strategies
                .clone()
                .unwrap_or_else(|| vec![StrategyKind::Floor; s.n_agents()]);
            let rounded = run_rounded(&market, &strategies, &config, s.seed)?;
            let reference = market.run(&market.truthful, TieRule::LowestIndex)?;
            let gap = reference.true_welfare - rounded.outcome.true_welfare;
            let uniform = strategies.windows(2).all(|w| w[0] == w[1]);
            let gap_bound = if uniform { epsilon } else { 2.0 * epsilon };
            let (x, w) = (rounded.outcome.x_star.clone(), rounded.outcome.true_welfare);
            let value = json!({
                "rounded": rounded,
                "quantized_true_welfare": reference.true_welfare,
                "welfare_gap": gap,
                "welfare_gap_bound": gap_bound,
                "comm_cost_bits": comm_cost_bits(m, s.params.alpha, s.params.beta, epsilon)?,
            });
            (value, m, x, w)
        }
        Mode::Naive => naive_outcome(s)?,
    };
    let report = efficiency(s, welfare, m)?;
    let mut record = ResultRecord::new(s, "run", Some(mode.name()), outcome);
    let bound = match mode {
        Mode::Rounded => report.theorem11_bound,
        _ => report.theorem6_bound,
    };
    let row = (m, x, welfare, report.measured_efficiency, bound);
    record.efficiency = Some(report);
    if timing {
        record.elapsed_ms = Some(start.elapsed().as_secs_f64() * 1e3);
    }
    print_json(&record)?;
    if let Some(dir) = out {
        write_json(dir, &format!("run_{}.json", mode.name()), &record)?;
        std::fs::write(dir.join(format!("run_{}.csv", mode.name())), series_csv(s.n_agents(), &[row])?)?;
    }
    Ok(0)
}

fn cmd_sweep(s: &Scenario, partitions: &[u64], epsilons: &[f64], out: Option<&Path>) -> Result<i32> {
    if partitions.is_empty() == epsilons.is_empty() {
        return Err(Error::Scenario("give exactly one of --M or --epsilon".into()));
    }
    let n = s.n_agents();
    let mut rows = Vec::new();
    let json = if !partitions.is_empty() {
        let sweep = sweep_partitions(s, partitions)?;
        rows.extend(
            sweep
                .points
                .iter()
                .map(|p| (p.partitions, p.x.clone(), p.welfare, p.efficiency, Some(p.bound))),
        );
        json!({ "csv_version": CSV_VERSION, "kind": "M", "sweep": sweep })
    } else {
        let market = Market::from_scenario(s)?;
        let m = market.partitions();
        let strategies = s.strategies.clone().unwrap_or_else(|| vec![StrategyKind::Floor; n]);
        let mut points = Vec::new();
        let base = efficiency(s, 0.0, m)?;
        for &epsilon in epsilons {
            let config = RoundedConfig::new(epsilon, m)?;
            let out = run_rounded(&market, &strategies, &config, s.seed)?;
            let eff = out.outcome.true_welfare / base.continuous_welfare;
            let bound = theorem11_bound(m, n, s.params.alpha, s.params.beta, epsilon).ok();
            rows.push((m, out.outcome.x_star.clone(), out.outcome.true_welfare, eff, bound));
            points.push(json!({
                "epsilon": epsilon,
                "M": m,
                "x": out.outcome.x_star,
                "welfare": out.outcome.true_welfare,
                "efficiency": eff,
                "bound": bound,
                "comm_cost_bits": comm_cost_bits(m, s.params.alpha, s.params.beta, epsilon)?,
            }));
        }
        json!({ "csv_version": CSV_VERSION, "kind": "epsilon", "points": points })
    };
    let csv = series_csv(n, &rows)?;
    match out {
        Some(dir) => {
            write_json(dir, "sweep.json", &json)?;
            std::fs::write(dir.join("sweep.csv"), &csv)?;
        }
        None => print!("{}", String::from_utf8_lossy(&csv)),
    }
    Ok(0)
}

fn cmd_verify(s: &Scenario, suite: Suite, samples: usize, out: Option<&Path>) -> Result<i32> {
    let report = run_suite(s, suite, samples, s.seed)?;
    let record = ResultRecord::new(s, "verify", None, serde_json::to_value(&report)?);
    print_json(&record)?;
    if let Some(dir) = out {
        write_json(dir, "verify.json", &record)?;
    }
    Ok(if report.passed { 0 } else { 1 })
}

pub fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Validate {
            scenario,
            partitions,
            epsilon,
            out,
        } => cmd_validate(&load(&scenario, partitions, epsilon, None)?, out.as_deref()),
        Command::Run {
            scenario,
            mode,
            partitions,
            epsilon,
            seed,
            out,
            timing,
        } => cmd_run(&load(&scenario, partitions, epsilon, seed)?, mode, out.as_deref(), timing),
        Command::Sweep {
            scenario,
            partitions,
            epsilon,
            seed,
            out,
        } => cmd_sweep(&load(&scenario, None, None, seed)?, &partitions, &epsilon, out.as_deref()),
        Command::Verify {
            scenario,
            suite,
            samples,
            seed,
            partitions,
            epsilon,
            out,
        } => cmd_verify(&load(&scenario, partitions, epsilon, seed)?, suite, samples, out.as_deref()),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
