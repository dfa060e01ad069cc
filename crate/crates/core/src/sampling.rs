//! Random instances for property checks.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::Result;
use crate::mechanism::{BandMode, Market, MarketParams, UtilitySpec};
use crate::polymatroid::{quantize, CapacityTable, IntegralRankFunction};
use crate::setfn::{contains, RankFunction, Subset};

/// Strictly submodular, normalized rank function: a mix of a concave power
/// of a weight function and a coverage function.
pub fn random_rank_function<R: Rng + ?Sized>(rng: &mut R, n: usize) -> RankFunction {
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
    let q: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..0.9)).collect();
    let p = rng.gen_range(0.3..0.9);
    let mix = rng.gen_range(0.0..=1.0);
    let total_w: f64 = w.iter().sum();
    let cover = |s: Subset| 1.0 - (0..n).filter(|&i| contains(s, i)).map(|i| 1.0 - q[i]).product::<f64>();
    let full = cover((1 << n) - 1);
    let f = RankFunction::from_fn(n, |s| {
        let weight: f64 = (0..n).filter(|&i| contains(s, i)).map(|i| w[i]).sum();
        mix * (weight / total_w).powf(p) + (1.0 - mix) * cover(s) / full
    })
    .expect("generator stays in range");
    f.normalize().expect("positive total").0
}

/// Integral polymatroid as a sum of truncated integer modular functions.
fn truncated_sum<R: Rng + ?Sized>(rng: &mut R, n: usize, max_m: u64) -> Option<IntegralRankFunction> {
    let parts = rng.gen_range(1..=3);
    let pieces: Vec<(Vec<u64>, u64)> = (0..parts)
        .map(|_| {
            let w = (0..n).map(|_| rng.gen_range(0..=3)).collect();
            (w, rng.gen_range(1..=max_m.max(1)))
        })
        .collect();
    let values: Vec<u64> = (0..1u32 << n)
        .map(|s| {
            pieces
                .iter()
                .map(|(w, cap)| {
                    let load: u64 = (0..n).filter(|&i| contains(s, i)).map(|i| w[i]).sum();
                    load.min(*cap)
                })
                .sum()
        })
        .collect();
    let total = *values.last().expect("nonempty table");
    if !(2..=max_m).contains(&total) {
        return None;
    }
    IntegralRankFunction::from_table(n, total, values).ok()
}

/// A rank function together with an integral polymatroid of at most `max_m`
/// partitions obtained from it by quantization.
pub fn random_integral_instance<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    max_m: u64,
) -> (RankFunction, IntegralRankFunction) {
    loop {
        if rng.gen_bool(0.5) {
            let f = random_rank_function(rng, n);
            for _ in 0..8 {
                let m = rng.gen_range(2..=max_m.max(2));
                if let Ok(region) = quantize(&f, Some(m)) {
                    return (f, region);
                }
            }
        } else if let Some(region) = truncated_sum(rng, n, max_m) {
            let f = region.scaled();
            let requantized = quantize(&f, Some(region.partitions())).expect("scaled table is integral");
            debug_assert_eq!(requantized, region);
            return (f, region);
        }
    }
}

/// Random `(α, β)` with `0.2 ≤ β` and `α − β ≥ 0.2`.
pub fn random_params<R: Rng + ?Sized>(rng: &mut R, n: usize) -> MarketParams {
    let beta = rng.gen_range(0.2..1.0);
    let alpha = beta + rng.gen_range(0.2..2.0);
    MarketParams::new(alpha, beta, n).expect("generated in range")
}

/// Concave utility whose per-unit marginals stay strictly inside
/// `[β/M, α/M]`.
///
/// With `partitions = None` only families whose derivative itself stays in
/// `[β, α]` are drawn (linear and piecewise linear). With `Some(M)` the
/// power family is included, scaled so the first unit's marginal at that `M`
/// stays in band.
pub fn random_utility<R: Rng + ?Sized>(rng: &mut R, params: &MarketParams, partitions: Option<u64>) -> UtilitySpec {
    let (lo, hi) = (params.beta, params.alpha);
    let span = hi - lo;
    let inner = |rng: &mut R| lo + span * rng.gen_range(0.02..0.98);
    let families = if partitions.is_some() { 3 } else { 2 };
    match rng.gen_range(0..families) {
        0 => UtilitySpec::Linear { slope: inner(rng) },
        1 => {
            let k = rng.gen_range(1..=3);
            let mut breakpoints: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..0.95)).collect();
            breakpoints.sort_by(f64::total_cmp);
            breakpoints.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
            let mut slopes: Vec<f64> = (0..=breakpoints.len()).map(|_| inner(rng)).collect();
            slopes.sort_by(|a, b| b.total_cmp(a));
            UtilitySpec::PiecewiseLinear { breakpoints, slopes }
        }
        _ => {
            let m = partitions.expect("power family needs M") as f64;
            let p = rng.gen_range(0.5..1.0);
            let b = lo + span * rng.gen_range(0.02..0.5);
            // first-unit marginal is a·M^(p−1) + b/M; keep it below α/M
            let a = (hi - b) * rng.gen_range(0.0..0.95) / m.powf(1.0 - p);
            UtilitySpec::AffinePower { a, p, b }
        }
    }
}

pub fn random_utilities<R: Rng + ?Sized>(
    rng: &mut R,
    params: &MarketParams,
    partitions: Option<u64>,
) -> Vec<UtilitySpec> {
    (0..params.n_agents).map(|_| random_utility(rng, params, partitions)).collect()
}

/// Random market on a small integral polymatroid.
pub fn random_market<R: Rng + ?Sized>(rng: &mut R, n: usize, max_m: u64) -> Result<(RankFunction, Market)> {
    let (f, region) = random_integral_instance(rng, n, max_m);
    let params = random_params(rng, n);
    let utilities = random_utilities(rng, &params, Some(region.partitions()));
    let market = Market::with_region(region, params, utilities, BandMode::Strict)?;
    Ok((f, market))
}

/// Non-increasing real bid vector with entries in `[0, max]`.
///
/// A third of draws snap to a coarse grid so that ties with other agents'
/// bids become likely.
pub fn random_real_misreport<R: Rng + ?Sized>(rng: &mut R, len: usize, max: f64) -> Vec<f64> {
    let coarse = rng.gen_bool(1.0 / 3.0);
    let mut bids: Vec<f64> = (0..len)
        .map(|_| {
            let x = rng.gen_range(0.0..=max);
            if coarse {
                (x / max * 4.0).round() * max / 4.0
            } else {
                x
            }
        })
        .collect();
    bids.sort_by(|a, b| b.total_cmp(a));
    bids
}

/// Misreport built from the truthful vector: scaled, shifted, truncated or
/// replaced by a random draw.
pub fn perturbed_misreport<R: Rng + ?Sized>(rng: &mut R, truthful: &[f64], max: f64) -> Vec<f64> {
    let mut out = match rng.gen_range(0..4) {
        0 => {
            let scale = rng.gen_range(0.0..2.0);
            truthful.iter().map(|v| (v * scale).min(max)).collect()
        }
        1 => {
            let shift = rng.gen_range(-max..max);
            truthful.iter().map(|v| (v + shift).clamp(0.0, max)).collect()
        }
        2 => {
            let keep = rng.gen_range(0..=truthful.len());
            let mut v = truthful.to_vec();
            v[keep..].iter_mut().for_each(|x| *x = 0.0);
            v
        }
        _ => random_real_misreport(rng, truthful.len(), max),
    };
    out.sort_by(|a, b| b.total_cmp(a));
    out
}

/// Random assignment of rounding strategies; CEILOOR only at even `M`.
pub fn random_strategies<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    partitions: u64,
) -> Vec<crate::rounded::StrategyKind> {
    use crate::rounded::StrategyKind;
    let pool: &[StrategyKind] = if partitions.is_multiple_of(2) {
        &StrategyKind::ROUNDED
    } else {
        &StrategyKind::ROUNDED[..2]
    };
    (0..n).map(|_| *pool.choose(rng).expect("nonempty pool")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanism::marginals;
    use crate::setfn::TOL;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rank_functions_are_strict() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for n in 2..=5 {
            let f = random_rank_function(&mut rng, n);
            assert!(f.validate(TOL).is_valid);
            assert!((f.total() - 1.0).abs() < 1e-12);
            assert!(f.min_distance().unwrap() > 0.0);
            assert!(quantize(&f, None).is_ok());
        }
    }

    #[test]
    fn integral_instances_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let n = rng.gen_range(2..=4);
            let (f, region) = random_integral_instance(&mut rng, n, 10);
            assert!(region.partitions() <= 10);
            assert_eq!(quantize(&f, Some(region.partitions())).unwrap(), region);
        }
    }

    #[test]
    fn utilities_stay_in_band() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let params = random_params(&mut rng, 1);
            let m = rng.gen_range(2..200);
            let u = random_utility(&mut rng, &params, Some(m));
            u.validate().unwrap();
            let v = marginals(&u, m, m).unwrap();
            assert!(v.iter().all(|x| *x > params.beta / m as f64 && *x < params.alpha / m as f64), "{u:?}");
        }
    }

    #[test]
    fn misreports_are_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let v = random_real_misreport(&mut rng, 5, 0.3);
            assert!(v.windows(2).all(|w| w[0] >= w[1]) && v.iter().all(|x| (0.0..=0.3).contains(x)));
            let p = perturbed_misreport(&mut rng, &[0.3, 0.2, 0.2, 0.1], 0.3);
            assert!(p.windows(2).all(|w| w[0] >= w[1]) && p.iter().all(|x| (0.0..=0.3).contains(x)));
        }
    }
}
