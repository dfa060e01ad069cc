//! Brute-force references for small instances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanism::{greedy_allocate, marginals, true_welfare, TieRule, UtilitySpec};
use crate::polymatroid::{quantize, CapacityTable};
use crate::setfn::RankFunction;

pub const MAX_ENUM_AGENTS: usize = 4;
pub const MAX_ENUM_POINTS: u64 = 10_000_000;
pub const MIN_ORACLE_PARTITIONS: u64 = 1_000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeasibleSet {
    pub n_agents: usize,
    /// Lexicographic order.
    pub points: Vec<Vec<u64>>,
}

/// All integer points of the region.
pub fn enumerate_feasible<R: CapacityTable + ?Sized>(region: &R) -> Result<FeasibleSet> {
    let n = region.n_agents();
    if n > MAX_ENUM_AGENTS {
        return Err(Error::InstanceTooLarge(format!("{n} agents, limit {MAX_ENUM_AGENTS}")));
    }
    let caps: Vec<u64> = (0..n).map(|i| region.capacity(1 << i)).collect();
    let product = caps
        .iter()
        .try_fold(1u64, |acc, c| acc.checked_mul(c + 1))
        .unwrap_or(u64::MAX);
    if product > MAX_ENUM_POINTS {
        return Err(Error::InstanceTooLarge(format!(
            "{product} candidate points, limit {MAX_ENUM_POINTS}"
        )));
    }

    // Odometer over coordinates, most significant first. A coordinate is
    // checked against every subset whose highest member it is, so a prefix
    // is only extended when all constraints among its own coordinates hold.
    let prefix_ok = |y: &[u64], k: usize| {
        let high = 1u32 << k;
        (high..high << 1).all(|s| {
            let used: u64 = (0..=k).filter(|&i| s & (1 << i) != 0).map(|i| y[i]).sum();
            used <= region.capacity(s)
        })
    };
    let mut points = Vec::new();
    if n == 0 {
        points.push(Vec::new());
        return Ok(FeasibleSet { n_agents: 0, points });
    }
    let mut y = vec![0u64; n];
    let mut k = 0;
    loop {
        if prefix_ok(&y, k) {
            if k + 1 == n {
                points.push(y.clone());
            } else {
                k += 1;
                y[k] = 0;
                continue;
            }
        }
        // Advance; constraints are monotone in y[k], so a failure at y[k]
        // rules out every larger value.
        loop {
            if prefix_ok(&y, k) && y[k] < caps[k] {
                y[k] += 1;
                break;
            }
            if k == 0 {
                return Ok(FeasibleSet { n_agents: n, points });
            }
            y[k] = 0;
            k -= 1;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BruteOptimum {
    pub y: Vec<u64>,
    pub welfare: f64,
    pub points_examined: usize,
}

/// Exhaustive maximum of `Σ u_n(y_n/M)`; the lexicographically first point
/// wins ties.
pub fn brute_optimal<R: CapacityTable + ?Sized>(
    region: &R,
    utilities: &[UtilitySpec],
    partitions: u64,
) -> Result<BruteOptimum> {
    if utilities.len() != region.n_agents() {
        return Err(Error::DimensionMismatch {
            got: utilities.len(),
            expected: region.n_agents(),
        });
    }
    let set = enumerate_feasible(region)?;
    let mut best: Option<(usize, f64)> = None;
    for (idx, y) in set.points.iter().enumerate() {
        let w = true_welfare(utilities, y, partitions);
        if best.is_none_or(|(_, b)| w > b) {
            best = Some((idx, w));
        }
    }
    let (idx, welfare) = best.expect("the zero vector is always feasible");
    Ok(BruteOptimum {
        y: set.points[idx].clone(),
        welfare,
        points_examined: set.points.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuousOptimum {
    pub x: Vec<f64>,
    pub welfare: f64,
    #[serde(rename = "M")]
    pub partitions: u64,
    /// `welfare` is a lower bound on the continuous optimum; this is the
    /// estimated shortfall, `Σ_n u_n(1/M)`.
    pub error_bound: f64,
}

/// Fine-grid approximation of `max Σ u_n(x_n)` over the polymatroid.
pub fn continuous_optimum(f: &RankFunction, utilities: &[UtilitySpec], partitions: u64) -> Result<ContinuousOptimum> {
    if partitions < MIN_ORACLE_PARTITIONS {
        return Err(Error::InvalidParameter(format!(
            "oracle resolution {partitions} is below {MIN_ORACLE_PARTITIONS}"
        )));
    }
    if utilities.len() != f.n_agents() {
        return Err(Error::DimensionMismatch {
            got: utilities.len(),
            expected: f.n_agents(),
        });
    }
    let region = quantize(f, Some(partitions))?;
    let bids = utilities
        .iter()
        .enumerate()
        .map(|(i, u)| {
            u.validate()?;
            marginals(u, partitions, region.capacity(1 << i))
        })
        .collect::<Result<Vec<_>>>()?;
    let alloc = greedy_allocate(&region, &bids, TieRule::LowestIndex)?;
    let step = 1.0 / partitions as f64;
    Ok(ContinuousOptimum {
        x: alloc.units.iter().map(|&y| y as f64 * step).collect(),
        welfare: true_welfare(utilities, &alloc.units, partitions),
        partitions,
        error_bound: utilities.iter().map(|u| u.value(step)).sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polymatroid::{naive_quantize, IntegralRankFunction};

    fn linear(slopes: &[f64]) -> Vec<UtilitySpec> {
        slopes.iter().map(|&slope| UtilitySpec::Linear { slope }).collect()
    }

    #[test]
    fn example2_naive_points() {
        let region = naive_quantize(&RankFunction::example2(), 3);
        let set = enumerate_feasible(&region).unwrap();
        assert!(set.points.contains(&vec![1, 1, 1]));
        assert!(set.points.contains(&vec![2, 0, 0]));
        assert!(!set.points.contains(&vec![2, 1, 0]));
    }

    #[test]
    fn zero_region() {
        let naive = naive_quantize(&RankFunction::modular(&[0.1, 0.1]).unwrap(), 3);
        assert_eq!(enumerate_feasible(&naive).unwrap().points, vec![vec![0, 0]]);
    }

    #[test]
    fn example1_count() {
        let region = quantize(&RankFunction::example1(), None).unwrap();
        let set = enumerate_feasible(&region).unwrap();
        let expected: usize = (0..=6u64).map(|a| (0..=6u64).filter(|b| a + b <= 10).count()).sum();
        assert_eq!(expected, 46);
        assert_eq!(set.points.len(), 46);
        assert!(set.points.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn brute_examples() {
        let naive = naive_quantize(&RankFunction::example2(), 3);
        let best = brute_optimal(&naive, &linear(&[1.2, 1.1, 1.0]), 3).unwrap();
        assert_eq!(best.y, vec![1, 1, 1]);
        assert!((best.welfare - 1.1).abs() < 1e-12);

        let region = quantize(&RankFunction::example1(), None).unwrap();
        let best = brute_optimal(&region, &linear(&[2.0, 1.0]), 10).unwrap();
        assert_eq!(best.y, vec![6, 4]);
        assert!((best.welfare - 1.6).abs() < 1e-12);

        let single = IntegralRankFunction::from_table(1, 7, vec![0, 7]).unwrap();
        assert_eq!(brute_optimal(&single, &linear(&[1.0]), 7).unwrap().y, vec![7]);
    }

    #[test]
    fn guards() {
        let five = naive_quantize(&RankFunction::uniform_cap(5, 0.3, 1.0).unwrap(), 10);
        assert!(matches!(enumerate_feasible(&five), Err(Error::InstanceTooLarge(_))));
        let wide = naive_quantize(&RankFunction::modular(&[0.5; 4]).unwrap(), 200);
        assert!(matches!(enumerate_feasible(&wide), Err(Error::InstanceTooLarge(_))));
        let f = RankFunction::example1();
        assert!(continuous_optimum(&f, &linear(&[2.0, 1.0]), 999).is_err());
    }

    #[test]
    fn continuous_examples() {
        let c = continuous_optimum(&RankFunction::example1(), &linear(&[2.0, 1.0]), 10_000).unwrap();
        assert!((c.x[0] - 0.6).abs() < 1e-12 && (c.x[1] - 0.4).abs() < 1e-12);
        assert!((c.welfare - 1.6).abs() < 1e-3);

        let c = continuous_optimum(&RankFunction::example2(), &linear(&[1.2, 1.1, 1.0]), 20_000).unwrap();
        assert!((c.x[0] - 0.7).abs() < 1e-12 && (c.x[1] - 0.2).abs() < 1e-12 && (c.x[2] - 0.1).abs() < 1e-12);
        assert!((c.welfare - 1.16).abs() < 1e-3);

        let c = continuous_optimum(&RankFunction::example2(), &linear(&[1.5; 3]), 20_000).unwrap();
        assert!((c.welfare - 1.5).abs() < 1e-12);
    }
}
