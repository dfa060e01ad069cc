//! Efficiency bounds, measured efficiency, partition sweeps and
//! communication cost.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanism::{Market, TieRule, UtilitySpec};
use crate::oracle::{continuous_optimum, ContinuousOptimum};
use crate::polymatroid::{partition_threshold, quantize};
use crate::scenario::Scenario;
use crate::setfn::{RankFunction, TOL};

pub const DEFAULT_ORACLE_PARTITIONS: u64 = 10_000;
pub const MAX_SEARCH_PARTITIONS: u64 = 1_000_000;

fn check_market(n: usize, alpha: f64, beta: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter("N must be at least 1".into()));
    }
    if !(beta > 0.0 && beta < alpha && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < beta < alpha, got alpha = {alpha}, beta = {beta}"
        )));
    }
    Ok(())
}

fn denominator(m: u64, n: usize, alpha: f64, beta: f64) -> f64 {
    let spread = alpha - beta;
    let excess = (m as f64 - n as f64 + 1.0).max(0.0);
    m as f64 * alpha + 2.0 * spread - excess * spread
}

/// Worst-case efficiency of truthful quantized VCG:
/// `(Mβ + 2(α−β)) / (Mα + 2(α−β) − [M−N+1]⁺(α−β))`.
pub fn theorem6_bound(m: u64, n: usize, alpha: f64, beta: f64) -> Result<f64> {
    check_market(n, alpha, beta)?;
    if m < 2 {
        return Err(Error::InvalidParameter(format!("M must be at least 2, got {m}")));
    }
    Ok((m as f64 * beta + 2.0 * (alpha - beta)) / denominator(m, n, alpha, beta))
}

/// Worst-case efficiency with rounded bids; the numerator loses `Mε`.
///
/// Stated for more than three agents. Smaller `N` is computed anyway with a
/// warning.
pub fn theorem11_bound(m: u64, n: usize, alpha: f64, beta: f64, epsilon: f64) -> Result<f64> {
    check_market(n, alpha, beta)?;
    if m < 2 {
        return Err(Error::InvalidParameter(format!("M must be at least 2, got {m}")));
    }
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be nonnegative, got {epsilon}")));
    }
    if epsilon > beta / 2.0 + TOL {
        return Err(Error::InvalidParameter(format!(
            "epsilon = {epsilon} exceeds beta/2 = {}",
            beta / 2.0
        )));
    }
    if n < 4 {
        log::warn!("rounded efficiency bound evaluated for N = {n} < 4");
    }
    let numerator = m as f64 * beta + 2.0 * (alpha - beta) - m as f64 * epsilon;
    Ok(numerator / denominator(m, n, alpha, beta))
}

/// `M/(M+N−1)`, the bound for a single divisible resource.
pub fn single_resource_bound(m: u64, n: usize) -> f64 {
    m as f64 / (m as f64 + n as f64 - 1.0)
}

/// `M·log₂⌈(α−β)/ε⌉` bits for one agent's full bid vector.
pub fn comm_cost_bits(m: u64, alpha: f64, beta: f64, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
    }
    let levels = ((alpha - beta) / epsilon - TOL).ceil().max(1.0);
    Ok(m as f64 * levels.log2())
}

/// Smallest admissible `M` whose bound reaches `target`.
///
/// Uses the rounded bound when `epsilon > 0`, the unrounded one otherwise.
/// The search starts at `⌈2/Δf⌉`, so the result is `max(M*, ⌈2/Δf⌉)`.
pub fn min_partitions(target: f64, n: usize, alpha: f64, beta: f64, epsilon: f64, delta_f: f64) -> Result<u64> {
    check_market(n, alpha, beta)?;
    let floor = partition_threshold(delta_f)?.max(2);
    // Both bounds tend to (β − ε)/β as M grows with N fixed.
    let limit = (beta - epsilon) / beta;
    if target >= limit {
        return Err(Error::UnreachableTarget { target, limit });
    }
    let bound = |m| {
        if epsilon > 0.0 {
            theorem11_bound(m, n, alpha, beta, epsilon)
        } else {
            theorem6_bound(m, n, alpha, beta)
        }
    };
    for m in floor..=MAX_SEARCH_PARTITIONS {
        if bound(m)? >= target {
            return Ok(m);
        }
    }
    Err(Error::UnreachableTarget {
        target,
        limit: bound(MAX_SEARCH_PARTITIONS)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    #[serde(rename = "M")]
    pub partitions: u64,
    #[serde(rename = "N")]
    pub n_agents: usize,
    pub alpha: f64,
    pub beta: f64,
    pub epsilon: Option<f64>,
    pub mechanism_welfare: f64,
    pub continuous_welfare: f64,
    pub continuous_error_bound: f64,
    pub measured_efficiency: f64,
    pub theorem6_bound: Option<f64>,
    pub theorem11_bound: Option<f64>,
    pub single_resource_bound: f64,
}

/// Resolution for the continuous reference: the requested one, else the
/// larger of `10⁴` and the admissibility threshold.
pub fn oracle_partitions(f: &RankFunction, requested: Option<u64>) -> Result<u64> {
    if let Some(m) = requested {
        return Ok(m);
    }
    if f.n_agents() < 2 {
        return Ok(DEFAULT_ORACLE_PARTITIONS);
    }
    let distance = f.min_distance()?;
    if distance > 0.0 {
        return Ok(partition_threshold(distance)?.max(DEFAULT_ORACLE_PARTITIONS));
    }
    // Δf = 0: only a resolution at which the floored table is already a
    // polymatroid will do.
    (DEFAULT_ORACLE_PARTITIONS..DEFAULT_ORACLE_PARTITIONS * 2)
        .find(|&m| quantize(f, Some(m)).is_ok())
        .ok_or(Error::ZeroMinDistance(distance))
}

pub fn efficiency_report(
    f: &RankFunction,
    utilities: &[UtilitySpec],
    alpha: f64,
    beta: f64,
    partitions: u64,
    mechanism_welfare: f64,
    epsilon: Option<f64>,
    oracle: Option<u64>,
) -> Result<EfficiencyReport> {
    let reference = continuous_optimum(f, utilities, oracle_partitions(f, oracle)?)?;
    report_against(&reference, f.n_agents(), alpha, beta, partitions, mechanism_welfare, epsilon)
}

pub fn report_against(
    reference: &ContinuousOptimum,
    n_agents: usize,
    alpha: f64,
    beta: f64,
    partitions: u64,
    mechanism_welfare: f64,
    epsilon: Option<f64>,
) -> Result<EfficiencyReport> {
    let theorem6 = (partitions >= 2)
        .then(|| theorem6_bound(partitions, n_agents, alpha, beta))
        .transpose()?;
    let theorem11 = match epsilon {
        Some(e) if partitions >= 2 && e <= beta / 2.0 + TOL => Some(theorem11_bound(partitions, n_agents, alpha, beta, e)?),
        _ => None,
    };
    Ok(EfficiencyReport {
        partitions,
        n_agents,
        alpha,
        beta,
        epsilon,
        mechanism_welfare,
        continuous_welfare: reference.welfare,
        continuous_error_bound: reference.error_bound,
        measured_efficiency: mechanism_welfare / reference.welfare,
        theorem6_bound: theorem6,
        theorem11_bound: theorem11,
        single_resource_bound: single_resource_bound(partitions, n_agents),
    })
}

/// Measured efficiency of a run of `scenario` at `partitions`.
pub fn efficiency(scenario: &Scenario, mechanism_welfare: f64, partitions: u64) -> Result<EfficiencyReport> {
    efficiency_report(
        &scenario.rank_function,
        &scenario.agents,
        scenario.params.alpha,
        scenario.params.beta,
        partitions,
        mechanism_welfare,
        scenario.rounding,
        scenario.oracle_partitions,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    #[serde(rename = "M")]
    pub partitions: u64,
    pub y: Vec<u64>,
    pub x: Vec<f64>,
    pub welfare: f64,
    pub efficiency: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub points: Vec<SweepPoint>,
    /// Values of `M` at which quantization did not give an integral
    /// polymatroid.
    pub skipped: Vec<u64>,
    pub continuous: ContinuousOptimum,
}

/// One truthful quantized VCG run per `M`.
pub fn sweep_partitions(scenario: &Scenario, values: &[u64]) -> Result<Sweep> {
    let f = &scenario.rank_function;
    let reference = continuous_optimum(f, &scenario.agents, oracle_partitions(f, scenario.oracle_partitions)?)?;
    let mut points = Vec::new();
    let mut skipped = Vec::new();
    for &m in values {
        let region = match quantize(f, Some(m)) {
            Ok(region) => region,
            Err(Error::InadmissiblePartitions { .. } | Error::ZeroMinDistance(_)) => {
                log::warn!("M = {m} does not give an integral polymatroid; skipped");
                skipped.push(m);
                continue;
            }
            Err(e) => return Err(e),
        };
        let market = Market::with_region(region, scenario.params, scenario.agents.clone(), scenario.band)?;
        let outcome = market.run(&market.truthful, TieRule::LowestIndex)?;
        points.push(SweepPoint {
            partitions: m,
            x: outcome.x_star,
            y: outcome.y_star,
            welfare: outcome.true_welfare,
            efficiency: outcome.true_welfare / reference.welfare,
            bound: if m >= 2 {
                theorem6_bound(m, f.n_agents(), scenario.params.alpha, scenario.params.beta)?
            } else {
                f64::NAN
            },
        });
    }
    Ok(Sweep {
        points,
        skipped,
        continuous: reference,
    })
}
