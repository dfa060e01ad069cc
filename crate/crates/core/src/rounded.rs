//! Rounded quantized VCG: bids are integer multiples of a monetary unit
//! `δ = ε/M`.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanism::{BidVector, Market, MechanismOutcome, TieRule};
use crate::setfn::TOL;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundedConfig {
    pub epsilon: f64,
    pub delta: f64,
    #[serde(rename = "M")]
    pub partitions: u64,
}

impl RoundedConfig {
    pub fn new(epsilon: f64, partitions: u64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
        }
        if partitions == 0 {
            return Err(Error::InvalidParameter("M must be positive".into()));
        }
        Ok(RoundedConfig {
            epsilon,
            delta: epsilon / partitions as f64,
            partitions,
        })
    }

    /// `ε ≤ β/2`.
    pub fn check_epsilon(&self, beta: f64) -> Result<()> {
        if self.epsilon > beta / 2.0 + TOL {
            return Err(Error::InvalidParameter(format!(
                "epsilon = {} exceeds beta/2 = {}",
                self.epsilon,
                beta / 2.0
            )));
        }
        Ok(())
    }

    /// Largest integer bid, `⌈(α−β)/(Mδ)⌉`.
    pub fn max_bid(&self, alpha: f64, beta: f64) -> u64 {
        ((alpha - beta) / (self.partitions as f64 * self.delta) - TOL).ceil().max(0.0) as u64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    TruthfulUnrounded,
    Floor,
    Ceiling,
    Ceiloor,
}

impl StrategyKind {
    pub const ROUNDED: [StrategyKind; 3] = [StrategyKind::Floor, StrategyKind::Ceiling, StrategyKind::Ceiloor];

    /// Regret guaranteed in terms of `ε`.
    pub fn regret_bound(self, epsilon: f64) -> f64 {
        match self {
            StrategyKind::TruthfulUnrounded => 0.0,
            StrategyKind::Floor | StrategyKind::Ceiling => epsilon,
            StrategyKind::Ceiloor => epsilon / 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegerBidVector {
    pub agent: usize,
    pub bids: Vec<u64>,
}

impl IntegerBidVector {
    pub fn scaled(&self, delta: f64) -> BidVector {
        BidVector {
            agent: self.agent,
            bids: self.bids.iter().map(|&w| w as f64 * delta).collect(),
        }
    }
}

/// Integer bids for one agent under a rounding strategy.
///
/// CEILOOR rounds up on the first `M/2` units and down after; since rounding
/// up a larger value never falls below rounding down a smaller one, every
/// output is non-increasing.
pub fn apply_strategy(
    agent: usize,
    kind: StrategyKind,
    v_hat: &[f64],
    delta: f64,
    partitions: u64,
) -> Result<IntegerBidVector> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    if kind == StrategyKind::Ceiloor && partitions % 2 == 1 {
        return Err(Error::OddPartitionsForCeiloor(partitions));
    }
    if let Some(position) = v_hat.windows(2).position(|w| w[1] > w[0] + 1e-12) {
        return Err(Error::NonMonotoneBids {
            agent,
            position: position + 1,
        });
    }
    let floor = |x: f64| (x / delta + TOL).floor().max(0.0) as u64;
    let ceil = |x: f64| (x / delta - TOL).ceil().max(0.0) as u64;
    let bids = v_hat
        .iter()
        .enumerate()
        .map(|(i, &x)| match kind {
            StrategyKind::Floor => Ok(floor(x)),
            StrategyKind::Ceiling => Ok(ceil(x)),
            StrategyKind::Ceiloor if (i as u64) < partitions / 2 => Ok(ceil(x)),
            StrategyKind::Ceiloor => Ok(floor(x)),
            StrategyKind::TruthfulUnrounded => Err(Error::NotAnIntegerStrategy(kind)),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IntegerBidVector { agent, bids })
}

/// Reported utility `ũ_n(y/M) = Σ_{m ≤ y} ŵ_m δ + β·y/M` given scaled bids.
pub fn reported_utility(bids: &[f64], units: u64, beta: f64, partitions: u64) -> f64 {
    bids[..units as usize].iter().sum::<f64>() + beta * units as f64 / partitions as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundedOutcome {
    pub outcome: MechanismOutcome,
    pub strategies: Vec<StrategyKind>,
    pub config: RoundedConfig,
    /// `None` for agents playing the unrounded truthful strategy.
    pub integer_bids: Vec<Option<IntegerBidVector>>,
    /// `ũ_n(ỹ_n/M)` at the chosen allocation.
    pub reported_utilities: Vec<f64>,
}

fn check_config(market: &Market, strategies: &[StrategyKind], config: &RoundedConfig) -> Result<()> {
    if strategies.len() != market.n_agents() {
        return Err(Error::DimensionMismatch {
            got: strategies.len(),
            expected: market.n_agents(),
        });
    }
    if config.partitions != market.partitions() {
        return Err(Error::InvalidParameter(format!(
            "rounding configured for M = {} but the market has M = {}",
            config.partitions,
            market.partitions()
        )));
    }
    if config.epsilon > market.params.beta / 2.0 + TOL {
        log::warn!(
            "epsilon = {} exceeds beta/2 = {}; rounding guarantees do not apply",
            config.epsilon,
            market.params.beta / 2.0
        );
    }
    Ok(())
}

/// Bids each agent reports under its assigned strategy.
pub fn strategy_bids(
    market: &Market,
    strategies: &[StrategyKind],
    config: &RoundedConfig,
) -> Result<(Vec<BidVector>, Vec<Option<IntegerBidVector>>)> {
    check_config(market, strategies, config)?;
    let mut reported = Vec::with_capacity(strategies.len());
    let mut integers = Vec::with_capacity(strategies.len());
    for (truthful, &kind) in market.truthful.iter().zip(strategies) {
        if kind == StrategyKind::TruthfulUnrounded {
            reported.push(truthful.clone());
            integers.push(None);
        } else {
            let w = apply_strategy(truthful.agent, kind, &truthful.bids, config.delta, config.partitions)?;
            reported.push(w.scaled(config.delta));
            integers.push(Some(w));
        }
    }
    Ok((reported, integers))
}

/// Allocation and payments with rounded bids; ties are broken at random from
/// `seed`.
pub fn run_rounded(
    market: &Market,
    strategies: &[StrategyKind],
    config: &RoundedConfig,
    seed: u64,
) -> Result<RoundedOutcome> {
    let (reported, integer_bids) = strategy_bids(market, strategies, config)?;
    let outcome = market.run(&reported, TieRule::Seeded(seed))?;
    let reported_utilities = reported
        .iter()
        .zip(&outcome.y_star)
        .map(|(b, &y)| reported_utility(&b.bids, y, market.params.beta, config.partitions))
        .collect();
    Ok(RoundedOutcome {
        outcome,
        strategies: strategies.to_vec(),
        config: *config,
        integer_bids,
        reported_utilities,
    })
}

/// Uniform draw from the non-increasing integer vectors of length `len` with
/// entries in `0..=max`, via a sorted multiset (stars and bars).
pub fn sample_integer_misreport<R: Rng + ?Sized>(rng: &mut R, len: usize, max: u64) -> Vec<u64> {
    let pool = max as usize + len;
    let mut picks = sample(rng, pool, len).into_vec();
    picks.sort_unstable();
    let mut out: Vec<u64> = picks.iter().enumerate().map(|(i, &p)| (p - i) as u64).collect();
    out.reverse();
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub agent: usize,
    pub strategy: StrategyKind,
    pub strategy_payoff: f64,
    pub best_deviation_payoff: f64,
    /// `max(0, best deviation payoff − strategy payoff)`.
    pub regret: f64,
    pub deviations: usize,
}

/// Sampled regret of `agent` playing `strategies[agent]` while the others
/// keep theirs. Deviations are drawn uniformly from the integer bid space.
/// This certifies only that no better deviation was found.
pub fn regret(
    market: &Market,
    agent: usize,
    strategies: &[StrategyKind],
    config: &RoundedConfig,
    n_deviations: usize,
    seed: u64,
) -> Result<RegretReport> {
    let (mut reported, _) = strategy_bids(market, strategies, config)?;
    let utility = &market.utilities[agent];
    let tie = TieRule::Seeded(seed);
    let base = market.run(&reported, tie)?.payoff(agent, utility);
    let len = market.truthful[agent].bids.len();
    let max = config.max_bid(market.params.alpha, market.params.beta);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut best = f64::NEG_INFINITY;
    for _ in 0..n_deviations {
        let w = IntegerBidVector {
            agent,
            bids: sample_integer_misreport(&mut rng, len, max),
        };
        reported[agent] = w.scaled(config.delta);
        let payoff = market.run(&reported, tie)?.payoff(agent, utility);
        best = best.max(payoff);
    }
    Ok(RegretReport {
        agent,
        strategy: strategies[agent],
        strategy_payoff: base,
        best_deviation_payoff: best,
        regret: (best - base).max(0.0),
        deviations: n_deviations,
    })
}

/// True welfare of truthful quantized VCG minus true welfare of the rounded
/// mechanism.
pub fn welfare_gap(market: &Market, strategies: &[StrategyKind], config: &RoundedConfig, seed: u64) -> Result<f64> {
    let reference = market.run(&market.truthful, TieRule::LowestIndex)?;
    let rounded = run_rounded(market, strategies, config, seed)?;
    Ok(reference.true_welfare - rounded.outcome.true_welfare)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanism::{marginals, BandMode, MarketParams, UtilitySpec};
    use crate::polymatroid::quantize;
    use crate::setfn::RankFunction;

    #[test]
    fn floor_example() {
        let w = apply_strategy(0, StrategyKind::Floor, &[0.15; 6], 0.04, 10).unwrap();
        assert_eq!(w.bids, vec![3; 6]);
        let w = apply_strategy(0, StrategyKind::Ceiling, &[0.15; 6], 0.04, 10).unwrap();
        assert_eq!(w.bids, vec![4; 6]);
    }

    #[test]
    fn lattice_points_are_fixed() {
        let v = [0.3, 0.25, 0.1, 0.0];
        for kind in StrategyKind::ROUNDED {
            let w = apply_strategy(0, kind, &v, 0.05, 4).unwrap();
            assert_eq!(w.bids, vec![6, 5, 2, 0], "{kind:?}");
        }
    }

    #[test]
    fn ceiloor_sqrt() {
        let sqrt = UtilitySpec::AffinePower { a: 1.0, p: 0.5, b: 0.0 };
        let v = marginals(&sqrt, 4, 4).unwrap();
        let w = apply_strategy(0, StrategyKind::Ceiloor, &v, 0.05, 4).unwrap();
        assert_eq!(w.bids, vec![10, 5, 3, 2]);
    }

    #[test]
    fn strategy_errors() {
        assert!(matches!(
            apply_strategy(0, StrategyKind::Ceiloor, &[0.1], 0.05, 3),
            Err(Error::OddPartitionsForCeiloor(3))
        ));
        assert!(apply_strategy(0, StrategyKind::Floor, &[0.1], -0.05, 4).is_err());
        assert!(matches!(
            apply_strategy(0, StrategyKind::TruthfulUnrounded, &[0.1], 0.05, 4),
            Err(Error::NotAnIntegerStrategy(_))
        ));
        assert!(matches!(
            apply_strategy(2, StrategyKind::Floor, &[0.1, 0.2], 0.05, 4),
            Err(Error::NonMonotoneBids { agent: 2, position: 1 })
        ));
    }

    #[test]
    fn max_bid_guard() {
        let c = RoundedConfig::new(0.1, 10).unwrap();
        assert_eq!(c.max_bid(2.0, 1.0), 10);
        let c = RoundedConfig::new(0.3, 10).unwrap();
        assert_eq!(c.max_bid(2.0, 1.0), 4);
        assert!(RoundedConfig::new(0.0, 10).is_err());
        assert!(RoundedConfig::new(0.6, 10).unwrap().check_epsilon(1.0).is_err());
    }

    #[test]
    fn misreports_are_monotone_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let w = sample_integer_misreport(&mut rng, 6, 9);
            assert_eq!(w.len(), 6);
            assert!(w.windows(2).all(|p| p[0] >= p[1]));
            assert!(w.iter().all(|&x| x <= 9));
        }
        assert!(sample_integer_misreport(&mut rng, 0, 5).is_empty());
        assert_eq!(sample_integer_misreport(&mut rng, 3, 0), vec![0, 0, 0]);
    }

    fn example1() -> Market {
        Market::with_region(
            quantize(&RankFunction::example1(), None).unwrap(),
            MarketParams::new(2.5, 0.5, 2).unwrap(),
            vec![UtilitySpec::Linear { slope: 2.0 }, UtilitySpec::Linear { slope: 1.0 }],
            BandMode::Strict,
        )
        .unwrap()
    }

    #[test]
    fn example1_floor_gap() {
        let market = example1();
        let config = RoundedConfig::new(0.05, 10).unwrap();
        let strategies = [StrategyKind::Floor; 2];
        let out = run_rounded(&market, &strategies, &config, 3).unwrap();
        assert_eq!(out.integer_bids[0].as_ref().unwrap().bids, vec![30; 6]);
        assert_eq!(out.integer_bids[1].as_ref().unwrap().bids, vec![10; 6]);
        assert_eq!(out.outcome.y_star, vec![6, 4]);
        let gap = welfare_gap(&market, &strategies, &config, 3).unwrap();
        assert!(gap.abs() <= 1e-12);
    }

    #[test]
    fn tiny_delta_matches_unrounded() {
        let market = example1();
        let config = RoundedConfig::new(1e-9 * 10.0, 10).unwrap();
        for kind in StrategyKind::ROUNDED {
            let out = run_rounded(&market, &[kind; 2], &config, 0).unwrap();
            assert_eq!(out.outcome.y_star, vec![6, 4]);
        }
    }

    #[test]
    fn floor_reported_utility_brackets_truth() {
        let market = example1();
        let config = RoundedConfig::new(0.07, 10).unwrap();
        let (reported, _) = strategy_bids(&market, &[StrategyKind::Floor; 2], &config).unwrap();
        for (agent, b) in reported.iter().enumerate() {
            for y in 0..=b.bids.len() as u64 {
                let truth = market.utilities[agent].value(y as f64 / 10.0);
                let r = reported_utility(&b.bids, y, 0.5, 10);
                assert!(r <= truth + 1e-12 && r >= truth - y as f64 * config.delta - 1e-12);
            }
        }
    }

    #[test]
    fn rounded_regret_within_epsilon() {
        let market = example1();
        let config = RoundedConfig::new(0.2, 10).unwrap();
        for kind in StrategyKind::ROUNDED {
            for agent in 0..2 {
                let r = regret(&market, agent, &[kind; 2], &config, 50, 11).unwrap();
                assert!(r.regret <= kind.regret_bound(0.2) + 1e-9, "{kind:?} {r:?}");
            }
        }
    }
}
