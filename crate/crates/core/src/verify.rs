//! Property suites behind `qvcg verify`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{report_against, theorem11_bound, theorem6_bound};
use crate::error::{Error, Result};
use crate::mechanism::{greedy_allocate, true_welfare, Market, TieRule};
use crate::oracle::{brute_optimal, continuous_optimum, enumerate_feasible};
use crate::analysis::oracle_partitions;
use crate::polymatroid::{quantize, CapacityTable, IntegralRankFunction};
use crate::rounded::{regret, welfare_gap, RoundedConfig, StrategyKind, run_rounded};
use crate::sampling::{perturbed_misreport, random_market, random_params, random_utilities};
use crate::scenario::{Check, Scenario};

/// Slack allowed when comparing payoffs or welfare.
pub const PAYOFF_TOL: f64 = 1e-9;
/// Slack allowed when comparing measured efficiency with a bound.
pub const BOUND_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Oracle,
    Dsic,
    Regret,
    Bounds,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub samples: usize,
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<Check>,
}

/// Greedy welfare against exhaustive search on one integral polymatroid.
/// Returns `(greedy, brute)` true welfare.
pub fn greedy_vs_brute(market: &Market) -> Result<(f64, f64)> {
    let m = market.partitions();
    let greedy = greedy_allocate(&market.region, &market.truthful, TieRule::LowestIndex)?;
    let brute = brute_optimal(&market.region, &market.utilities, m)?;
    Ok((true_welfare(&market.utilities, &greedy.units, m), brute.welfare))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DsicStats {
    pub trials: usize,
    /// Largest `deviation payoff − truthful payoff` seen.
    pub worst_gain: f64,
    /// Smallest truthful payoff seen.
    pub min_truthful_payoff: f64,
}

/// Samples misreports for every agent of a market.
pub fn dsic_trials<R: Rng + ?Sized>(market: &Market, misreports: usize, rng: &mut R) -> Result<DsicStats> {
    let truthful = market.run(&market.truthful, TieRule::LowestIndex)?;
    let max = market.params.surrogate_ceiling(market.partitions());
    let mut stats = DsicStats {
        trials: 0,
        worst_gain: f64::NEG_INFINITY,
        min_truthful_payoff: f64::INFINITY,
    };
    for (agent, u) in market.utilities.iter().enumerate() {
        let honest = truthful.payoff(agent, u);
        stats.min_truthful_payoff = stats.min_truthful_payoff.min(honest);
        for _ in 0..misreports {
            let report = perturbed_misreport(rng, &market.truthful[agent].bids, max);
            let bids = market.with_report(agent, report);
            let deviated = market.run(&bids, TieRule::LowestIndex)?.payoff(agent, u);
            stats.worst_gain = stats.worst_gain.max(deviated - honest);
            stats.trials += 1;
        }
    }
    Ok(stats)
}

fn market_for(scenario: &Scenario, partitions: Option<u64>) -> Result<Market> {
    let region = quantize(&scenario.rank_function, partitions.or(scenario.partitions))?;
    Market::with_region(region, scenario.params, scenario.agents.clone(), scenario.band)
}

fn oracle_suite(scenario: &Scenario, samples: usize, seed: u64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let market = market_for(scenario, None)?;
    match enumerate_feasible(&market.region) {
        Ok(_) => {
            let (greedy, brute) = greedy_vs_brute(&market)?;
            checks.push(Check::new(
                "scenario_greedy_equals_brute",
                (greedy - brute).abs() <= PAYOFF_TOL,
                format!("greedy {greedy}, brute force {brute}"),
            ));
        }
        Err(Error::InstanceTooLarge(why)) => {
            checks.push(Check::new("scenario_greedy_equals_brute", true, format!("skipped: {why}")))
        }
        Err(e) => return Err(e),
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agree = 0;
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let n = rng.gen_range(2..=4);
        let (_, market) = random_market(&mut rng, n, 10)?;
        let (greedy, brute) = greedy_vs_brute(&market)?;
        worst = worst.max((greedy - brute).abs());
        if (greedy - brute).abs() <= PAYOFF_TOL {
            agree += 1;
        }
    }
    checks.push(Check::new(
        "random_greedy_equals_brute",
        agree == samples,
        format!("{agree}/{samples} agree, largest difference {worst:e}"),
    ));
    Ok(checks)
}

fn dsic_suite(scenario: &Scenario, samples: usize, seed: u64) -> Result<Vec<Check>> {
    let market = market_for(scenario, None)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stats = dsic_trials(&market, samples, &mut rng)?;
    Ok(vec![
        Check::new(
            "no_profitable_misreport",
            stats.worst_gain <= PAYOFF_TOL,
            format!("{} misreports, largest gain {:e}", stats.trials, stats.worst_gain),
        ),
        Check::new(
            "individual_rationality",
            stats.min_truthful_payoff >= -PAYOFF_TOL,
            format!("smallest truthful payoff {}", stats.min_truthful_payoff),
        ),
    ])
}

fn regret_suite(scenario: &Scenario, samples: usize, seed: u64) -> Result<Vec<Check>> {
    let epsilon = scenario
        .rounding
        .ok_or_else(|| Error::Scenario("the regret suite needs rounding.epsilon".into()))?;
    let market = market_for(scenario, None)?;
    let m = market.partitions();
    let config = RoundedConfig::new(epsilon, m)?;
    let mut checks = Vec::new();
    for kind in StrategyKind::ROUNDED {
        if kind == StrategyKind::Ceiloor && m % 2 == 1 {
            checks.push(Check::new("ceiloor_regret", true, format!("skipped: M = {m} is odd")));
            continue;
        }
        let profile = vec![kind; market.n_agents()];
        let bound = kind.regret_bound(epsilon);
        let mut worst = 0.0f64;
        for agent in 0..market.n_agents() {
            let r = regret(&market, agent, &profile, &config, samples, seed.wrapping_add(agent as u64))?;
            worst = worst.max(r.regret);
        }
        let name = format!("{kind:?}").to_lowercase();
        checks.push(Check::new(
            format!("{name}_regret"),
            worst <= bound + PAYOFF_TOL,
            format!("largest sampled regret {worst:e}, bound {bound}"),
        ));
        let gap = welfare_gap(&market, &profile, &config, seed)?;
        checks.push(Check::new(
            format!("{name}_welfare_gap"),
            gap <= epsilon + PAYOFF_TOL,
            format!("gap {gap:e}, bound M*delta = {epsilon}"),
        ));
    }
    if let Some(strategies) = &scenario.strategies {
        let gap = welfare_gap(&market, strategies, &config, seed)?;
        checks.push(Check::new(
            "mixed_welfare_gap",
            gap <= 2.0 * epsilon + PAYOFF_TOL,
            format!("gap {gap:e}, bound 2*epsilon = {}", 2.0 * epsilon),
        ));
    }
    Ok(checks)
}

fn bounds_suite(scenario: &Scenario) -> Result<Vec<Check>> {
    let f = &scenario.rank_function;
    let market = market_for(scenario, None)?;
    let m = market.partitions();
    let n = market.n_agents();
    let (alpha, beta) = (scenario.params.alpha, scenario.params.beta);
    let reference = continuous_optimum(f, &scenario.agents, oracle_partitions(f, scenario.oracle_partitions)?)?;
    let mut checks = Vec::new();

    let outcome = market.run(&market.truthful, TieRule::LowestIndex)?;
    let report = report_against(&reference, n, alpha, beta, m, outcome.true_welfare, None)?;
    if let Some(bound) = report.theorem6_bound {
        checks.push(Check::new(
            "quantized_efficiency_bound",
            report.measured_efficiency >= bound - BOUND_TOL,
            format!("measured {}, bound {bound}", report.measured_efficiency),
        ));
    }
    if m >= 2 {
        let six = theorem6_bound(m, n, alpha, beta)?;
        let eleven = theorem11_bound(m, n, alpha, beta, 0.0)?;
        checks.push(Check::new(
            "rounded_bound_at_zero_epsilon",
            (six - eleven).abs() <= 1e-15,
            format!("{six} vs {eleven}"),
        ));
    }
    if let Some(epsilon) = scenario.rounding {
        let config = RoundedConfig::new(epsilon, m)?;
        if n >= 4 && config.check_epsilon(beta).is_ok() && m >= 2 {
            let bound = theorem11_bound(m, n, alpha, beta, epsilon)?;
            for kind in StrategyKind::ROUNDED {
                if kind == StrategyKind::Ceiloor && m % 2 == 1 {
                    continue;
                }
                let out = run_rounded(&market, &vec![kind; n], &config, scenario.seed)?;
                let measured = out.outcome.true_welfare / reference.welfare;
                checks.push(Check::new(
                    format!("{}_efficiency_bound", format!("{kind:?}").to_lowercase()),
                    measured >= bound - BOUND_TOL,
                    format!("measured {measured}, bound {bound}"),
                ));
            }
        } else {
            checks.push(Check::new(
                "rounded_efficiency_bound",
                true,
                "skipped: needs N >= 4, M >= 2 and epsilon <= beta/2",
            ));
        }
    }
    Ok(checks)
}

pub fn run_suite(scenario: &Scenario, suite: Suite, samples: usize, seed: u64) -> Result<SuiteReport> {
    let checks = match suite {
        Suite::Oracle => oracle_suite(scenario, samples, seed)?,
        Suite::Dsic => dsic_suite(scenario, samples, seed)?,
        Suite::Regret => regret_suite(scenario, samples, seed)?,
        Suite::Bounds => bounds_suite(scenario)?,
    };
    Ok(SuiteReport {
        suite,
        samples,
        seed,
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}

/// Random instance used by the bound checks: a strictly submodular rank
/// function at its admissibility threshold with band-respecting utilities.
pub fn random_bound_instance<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Result<(Scenario, IntegralRankFunction)> {
    loop {
        let f = crate::sampling::random_rank_function(rng, n);
        let Ok(region) = quantize(&f, None) else { continue };
        if region.partitions() > 400 || region.partitions() < 2 {
            continue;
        }
        let params = random_params(rng, n);
        let agents = random_utilities(rng, &params, None);
        let scenario = Scenario::new(crate::scenario::RankSource::Table(f), agents, params.alpha, params.beta)?
            .with_partitions(Some(region.partitions()));
        return Ok((scenario, region));
    }
}
