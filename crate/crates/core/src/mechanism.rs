//! Quantized VCG: per-unit marginal bids, the greedy allocator over an integral
//! polymatroid, and VCG payments with the `β/M` per-unit compensation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polymatroid::{quantize, CapacityTable, IntegralRankFunction};
use crate::scenario::Scenario;
use crate::setfn::{contains, TOL};

/// Public bounds on every agent's marginal utility: `β < u'_n < α`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    pub alpha: f64,
    pub beta: f64,
    pub n_agents: usize,
}

impl MarketParams {
    pub fn new(alpha: f64, beta: f64, n_agents: usize) -> Result<Self> {
        if !(beta > 0.0 && beta < alpha && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < beta < alpha, got alpha = {alpha}, beta = {beta}"
            )));
        }
        if n_agents == 0 {
            return Err(Error::InvalidParameter("no agents".into()));
        }
        Ok(MarketParams {
            alpha,
            beta,
            n_agents,
        })
    }

    /// Largest surrogate bid an agent can truthfully submit at `M` partitions.
    pub fn surrogate_ceiling(&self, partitions: u64) -> f64 {
        (self.alpha - self.beta) / partitions as f64
    }
}

/// An agent's true utility. All families satisfy `u(0) = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum UtilitySpec {
    /// `u(x) = slope·x`
    Linear { slope: f64 },
    /// `u(x) = a·x^p + b·x` with `0 < p ≤ 1`
    AffinePower { a: f64, p: f64, b: f64 },
    /// Concave piecewise-linear: `slopes[k]` applies between
    /// `breakpoints[k-1]` and `breakpoints[k]`; the last slope runs to 1.
    PiecewiseLinear {
        breakpoints: Vec<f64>,
        slopes: Vec<f64>,
    },
}

impl UtilitySpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidUtility(msg));
        match self {
            UtilitySpec::Linear { slope } => {
                if !(*slope > 0.0 && slope.is_finite()) {
                    return bad(format!("linear slope must be positive, got {slope}"));
                }
            }
            UtilitySpec::AffinePower { a, p, b } => {
                if !(*p > 0.0 && *p <= 1.0) {
                    return bad(format!("exponent must lie in (0, 1], got {p}"));
                }
                if !(*a >= 0.0 && *b >= 0.0 && a + b > 0.0 && a.is_finite() && b.is_finite()) {
                    return bad(format!("need a, b >= 0 and a + b > 0, got a = {a}, b = {b}"));
                }
            }
            UtilitySpec::PiecewiseLinear { breakpoints, slopes } => {
                if slopes.len() != breakpoints.len() + 1 {
                    return bad("need exactly one more slope than breakpoints".into());
                }
                if breakpoints.windows(2).any(|w| w[1] <= w[0])
                    || breakpoints.iter().any(|b| !(*b > 0.0 && *b < 1.0))
                {
                    return bad("breakpoints must be strictly increasing inside (0, 1)".into());
                }
                if slopes.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                    return bad("slopes must be positive".into());
                }
                if slopes.windows(2).any(|w| w[1] > w[0]) {
                    return bad("slopes must be non-increasing (concavity)".into());
                }
            }
        }
        Ok(())
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            UtilitySpec::Linear { slope } => slope * x,
            UtilitySpec::AffinePower { a, p, b } => a * x.powf(*p) + b * x,
            UtilitySpec::PiecewiseLinear { .. } => self.piecewise_increment(0.0, x, x),
        }
    }

    fn piecewise_increment(&self, lo: f64, hi: f64, width: f64) -> f64 {
        let UtilitySpec::PiecewiseLinear { breakpoints, slopes } = self else {
            unreachable!()
        };
        let mut total = 0.0;
        let mut start = 0.0;
        for (k, slope) in slopes.iter().enumerate() {
            let end = breakpoints.get(k).copied().unwrap_or(f64::INFINITY);
            if lo >= start && hi <= end {
                return total + slope * width;
            }
            let overlap = hi.min(end) - lo.max(start);
            if overlap > 0.0 {
                total += slope * overlap;
            }
            start = end;
        }
        total
    }

    /// `u(m/M) − u((m−1)/M)`.
    pub fn unit_marginal(&self, m: u64, partitions: u64) -> f64 {
        let step = 1.0 / partitions as f64;
        let lo = (m - 1) as f64 / partitions as f64;
        let hi = m as f64 / partitions as f64;
        match self {
            UtilitySpec::Linear { slope } => slope / partitions as f64,
            UtilitySpec::AffinePower { a, p, b } => a * (hi.powf(*p) - lo.powf(*p)) + b / partitions as f64,
            UtilitySpec::PiecewiseLinear { .. } => self.piecewise_increment(lo, hi, step),
        }
    }
}

/// First `k` per-unit marginals `v_m = u(m/M) − u((m−1)/M)`.
///
/// Concavity makes the sequence non-increasing; a running minimum removes any
/// rounding noise so downstream monotonicity checks can be exact.
pub fn marginals(u: &UtilitySpec, partitions: u64, k: u64) -> Result<Vec<f64>> {
    if k > partitions {
        return Err(Error::InvalidParameter(format!(
            "cannot take {k} marginals of {partitions} partitions"
        )));
    }
    let mut out: Vec<f64> = Vec::with_capacity(k as usize);
    for m in 1..=k {
        let v = u.unit_marginal(m, partitions);
        out.push(out.last().map_or(v, |prev| v.min(*prev)));
    }
    Ok(out)
}

/// What to do with marginals outside `[β/M, α/M]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandMode {
    /// Reject the scenario.
    #[default]
    Strict,
    /// Clamp into the band. Needed for families like `√x` whose first
    /// marginal is unbounded as `M` grows.
    Clamp,
}

/// Surrogate marginal bids `v̂_m = v_m − β/M` for one agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BidVector {
    pub agent: usize,
    pub bids: Vec<f64>,
}

impl AsRef<[f64]> for BidVector {
    fn as_ref(&self) -> &[f64] {
        &self.bids
    }
}

pub fn surrogate(
    agent: usize,
    v: &[f64],
    params: &MarketParams,
    partitions: u64,
    mode: BandMode,
) -> Result<BidVector> {
    let low = params.beta / partitions as f64;
    let high = params.alpha / partitions as f64;
    let bids = v
        .iter()
        .map(|&value| {
            let value = match mode {
                BandMode::Strict if value < low - TOL || value > high + TOL => {
                    return Err(Error::BidOutOfBand {
                        agent,
                        value,
                        low,
                        high,
                    })
                }
                BandMode::Strict => value,
                BandMode::Clamp => value.clamp(low, high),
            };
            Ok((value - low).max(0.0))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BidVector { agent, bids })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "seed")]
pub enum TieRule {
    /// Lowest agent index wins.
    #[default]
    LowestIndex,
    /// Uniformly random among the tied agents, reproducible from the seed.
    Seeded(u64),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    pub units: Vec<u64>,
    /// Rounds in which more than one feasible agent held the top bid.
    pub tie_events: usize,
}

fn check_bids<R, B>(region: &R, bids: &[B]) -> Result<()>
where
    R: CapacityTable + ?Sized,
    B: AsRef<[f64]>,
{
    if bids.len() != region.n_agents() {
        return Err(Error::DimensionMismatch {
            got: bids.len(),
            expected: region.n_agents(),
        });
    }
    for (agent, list) in bids.iter().enumerate() {
        let list = list.as_ref();
        let cap = region.capacity(1 << agent);
        if list.len() as u64 > cap {
            return Err(Error::BidTooLong {
                agent,
                len: list.len(),
                cap,
            });
        }
        if let Some(position) = list.iter().position(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "agent {agent}: bid at position {position} is negative or not finite"
            )));
        }
        if let Some(position) = list.windows(2).position(|w| w[1] > w[0] + 1e-12) {
            return Err(Error::NonMonotoneBids {
                agent,
                position: position + 1,
            });
        }
    }
    Ok(())
}

/// Unit-by-unit greedy allocation.
///
/// Each round gives one partition to the feasible agent whose next unused bid
/// is largest; an agent is feasible when adding one unit keeps every subset
/// constraint containing it satisfied. An agent whose bid list is exhausted
/// takes no further units. On an integral polymatroid the result maximizes the
/// sum of picked bids and lies on the dominant face.
pub fn greedy_allocate<R, B>(region: &R, bids: &[B], tie: TieRule) -> Result<Allocation>
where
    R: CapacityTable + ?Sized,
    B: AsRef<[f64]>,
{
    check_bids(region, bids)?;
    let n = region.n_agents();
    let size = 1u32 << n;
    let mut slack: Vec<i64> = (0..size).map(|s| region.capacity(s) as i64).collect();
    let mut units = vec![0u64; n];
    let mut rng = match tie {
        TieRule::LowestIndex => None,
        TieRule::Seeded(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
    };
    let mut tie_events = 0;
    let mut tied: Vec<usize> = Vec::with_capacity(n);
    loop {
        tied.clear();
        let mut top = f64::NEG_INFINITY;
        for (agent, list) in bids.iter().enumerate() {
            let Some(&next) = list.as_ref().get(units[agent] as usize) else {
                continue;
            };
            if next < top {
                continue;
            }
            let feasible = (0..size).filter(|s| contains(*s, agent)).all(|s| slack[s as usize] >= 1);
            if !feasible {
                continue;
            }
            if next > top {
                top = next;
                tied.clear();
            }
            tied.push(agent);
        }
        let winner = match tied.len() {
            0 => break,
            1 => tied[0],
            len => {
                tie_events += 1;
                match rng.as_mut() {
                    Some(rng) => tied[rng.gen_range(0..len)],
                    None => tied[0],
                }
            }
        };
        units[winner] += 1;
        for s in (0..size).filter(|s| contains(*s, winner)) {
            slack[s as usize] -= 1;
        }
    }
    Ok(Allocation { units, tie_events })
}

/// Sum of the bids consumed by an allocation, `OPT(V̂)` when the allocation
/// is the greedy one.
pub fn picked_value<B: AsRef<[f64]>>(bids: &[B], units: &[u64]) -> f64 {
    bids.iter()
        .zip(units)
        .map(|(b, &y)| b.as_ref()[..y as usize].iter().sum::<f64>())
        .sum()
}

fn check_allocation<B: AsRef<[f64]>>(region: &IntegralRankFunction, bids: &[B], units: &[u64]) -> Result<()> {
    let n = region.n_agents();
    if units.len() != n {
        return Err(Error::InconsistentAllocation(format!(
            "{} entries for {n} agents",
            units.len()
        )));
    }
    if let Some(agent) = (0..n).find(|&i| units[i] as usize > bids[i].as_ref().len()) {
        return Err(Error::InconsistentAllocation(format!(
            "agent {agent} received more units than it bid for"
        )));
    }
    for s in 1..1u32 << n {
        let used: u64 = (0..n).filter(|&i| contains(s, i)).map(|i| units[i]).sum();
        if used > region.capacity(s) {
            return Err(Error::InconsistentAllocation(format!("subset {s:#b} over capacity")));
        }
    }
    Ok(())
}

/// `p_n = OPT(0, V̂_{−n}) − (OPT(V̂) − Σ_{m ≤ y_n} v̂_nm) + y_n·β/M`.
///
/// `OPT(0, V̂_{−n})` reruns the greedy allocator with agent `n`'s bid list
/// emptied; the region keeps its coordinate and simply never serves it.
pub fn vcg_payments<B: AsRef<[f64]>>(
    region: &IntegralRankFunction,
    bids: &[B],
    units: &[u64],
    params: &MarketParams,
) -> Result<Vec<f64>> {
    check_bids(region, bids)?;
    check_allocation(region, bids, units)?;
    let opt = picked_value(bids, units);
    let reference = greedy_allocate(region, bids, TieRule::LowestIndex)?;
    let best = picked_value(bids, &reference.units);
    if (opt - best).abs() > TOL * best.abs().max(1.0) {
        return Err(Error::InconsistentAllocation(format!(
            "allocation is worth {opt} but the optimum is {best}"
        )));
    }
    let per_unit = params.beta / region.partitions() as f64;
    let mut without: Vec<&[f64]> = bids.iter().map(|b| b.as_ref()).collect();
    let mut payments = Vec::with_capacity(units.len());
    for agent in 0..units.len() {
        let own = std::mem::take(&mut without[agent]);
        let others_alone = greedy_allocate(region, &without, TieRule::LowestIndex)?;
        let opt_without = picked_value(&without, &others_alone.units);
        without[agent] = own;
        let own_value: f64 = own[..units[agent] as usize].iter().sum();
        payments.push(opt_without - (opt - own_value) + units[agent] as f64 * per_unit);
    }
    Ok(payments)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MechanismOutcome {
    #[serde(rename = "M")]
    pub partitions: u64,
    pub y_star: Vec<u64>,
    pub x_star: Vec<f64>,
    pub payments: Vec<f64>,
    /// `OPT(V̂)`, the sum of picked surrogate bids.
    pub opt_value: f64,
    /// Welfare under the reported utilities, `OPT(V̂) + β·Σy/M`.
    pub welfare: f64,
    /// Welfare under the agents' true utilities.
    pub true_welfare: f64,
    pub tie_events: usize,
    pub tie_seed: Option<u64>,
}

impl MechanismOutcome {
    /// Quasilinear payoff `u_n(x_n) − p_n`.
    pub fn payoff(&self, agent: usize, utility: &UtilitySpec) -> f64 {
        utility.value(self.x_star[agent]) - self.payments[agent]
    }
}

pub fn true_welfare(utilities: &[UtilitySpec], units: &[u64], partitions: u64) -> f64 {
    utilities
        .iter()
        .zip(units)
        .map(|(u, &y)| u.value(y as f64 / partitions as f64))
        .sum()
}

/// A scenario reduced to what the allocator sees: the integral region, the
/// public parameters, and every agent's truthful surrogate bids.
#[derive(Clone, Debug)]
pub struct Market {
    pub region: IntegralRankFunction,
    pub params: MarketParams,
    pub utilities: Vec<UtilitySpec>,
    pub truthful: Vec<BidVector>,
}

impl Market {
    pub fn from_scenario(scenario: &Scenario) -> Result<Market> {
        let region = quantize(&scenario.rank_function, scenario.partitions)?;
        Self::with_region(region, scenario.params, scenario.agents.clone(), scenario.band)
    }

    pub fn with_region(
        region: IntegralRankFunction,
        params: MarketParams,
        utilities: Vec<UtilitySpec>,
        band: BandMode,
    ) -> Result<Market> {
        if utilities.len() != region.n_agents() {
            return Err(Error::DimensionMismatch {
                got: utilities.len(),
                expected: region.n_agents(),
            });
        }
        let m = region.partitions();
        let truthful = utilities
            .iter()
            .enumerate()
            .map(|(agent, u)| {
                u.validate()?;
                let v = marginals(u, m, region.capacity(1 << agent))?;
                surrogate(agent, &v, &params, m, band)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Market {
            region,
            params,
            utilities,
            truthful,
        })
    }

    pub fn partitions(&self) -> u64 {
        self.region.partitions()
    }

    pub fn n_agents(&self) -> usize {
        self.utilities.len()
    }

    /// Runs allocation and payments on arbitrary reported bids.
    pub fn run<B: AsRef<[f64]>>(&self, bids: &[B], tie: TieRule) -> Result<MechanismOutcome> {
        let allocation = greedy_allocate(&self.region, bids, tie)?;
        let payments = vcg_payments(&self.region, bids, &allocation.units, &self.params)?;
        let m = self.partitions();
        let opt_value = picked_value(bids, &allocation.units);
        let allocated: u64 = allocation.units.iter().sum();
        Ok(MechanismOutcome {
            partitions: m,
            x_star: allocation.units.iter().map(|&y| y as f64 / m as f64).collect(),
            payments,
            opt_value,
            welfare: opt_value + self.params.beta * allocated as f64 / m as f64,
            true_welfare: true_welfare(&self.utilities, &allocation.units, m),
            tie_events: allocation.tie_events,
            tie_seed: match tie {
                TieRule::Seeded(seed) => Some(seed),
                TieRule::LowestIndex => None,
            },
            y_star: allocation.units,
        })
    }

    /// Truthful bids with one agent's list replaced.
    pub fn with_report(&self, agent: usize, report: Vec<f64>) -> Vec<BidVector> {
        let mut bids = self.truthful.clone();
        bids[agent] = BidVector { agent, bids: report };
        bids
    }
}

/// Quantize, bid truthfully, allocate greedily and charge VCG payments.
pub fn run_quantized_vcg(scenario: &Scenario) -> Result<MechanismOutcome> {
    let market = Market::from_scenario(scenario)?;
    market.run(&market.truthful, TieRule::LowestIndex)
}
