// Integer bids from the rounding strategies and their regret.
use qvcg::mechanism::{marginals, Market, UtilitySpec};
use qvcg::rounded::{apply_strategy, regret, welfare_gap, RoundedConfig, StrategyKind};
use qvcg::scenario::Scenario;

fn main() -> qvcg::Result<()> {
    // sqrt utility on four units, delta = 0.05
    let sqrt = UtilitySpec::AffinePower { a: 1.0, p: 0.5, b: 0.0 };
    let v = marginals(&sqrt, 4, 4)?;
    println!("marginals {:?}", v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>());
    for kind in StrategyKind::ROUNDED {
        let bids = apply_strategy(0, kind, &v, 0.05, 4)?;
        println!("{kind:?}: {:?}", bids.bids);
    }

    let scenario = Scenario::example1();
    let market = Market::from_scenario(&scenario)?;
    let config = RoundedConfig::new(0.05, market.partitions())?;
    for kind in StrategyKind::ROUNDED {
        let profile = vec![kind; 2];
        let r = regret(&market, 0, &profile, &config, 200, 7)?;
        let gap = welfare_gap(&market, &profile, &config, 7)?;
        println!("{kind:?}: sampled regret {:.2e} (bound {}), welfare gap {gap:.2e}", r.regret, kind.regret_bound(0.05));
    }
    Ok(())
}
