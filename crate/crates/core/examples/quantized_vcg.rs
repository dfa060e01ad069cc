// Truthful quantized VCG on the built-in scenarios, then one misreport.
use qvcg::mechanism::{Market, TieRule};
use qvcg::scenario::Scenario;

fn main() -> qvcg::Result<()> {
    for scenario in [Scenario::example1(), Scenario::example2().with_partitions(Some(20))] {
        let market = Market::from_scenario(&scenario)?;
        let out = market.run(&market.truthful, TieRule::LowestIndex)?;
        println!(
            "{}: M = {}, y = {:?}, payments = {:?}, welfare = {:.4}",
            scenario.source, out.partitions, out.y_star, out.payments, out.true_welfare
        );
    }

    let market = Market::from_scenario(&Scenario::example1())?;
    let honest = market.run(&market.truthful, TieRule::LowestIndex)?;
    let inflated: Vec<f64> = market.truthful[1].bids.iter().map(|b| b * 1.5).collect();
    let lied = market.run(&market.with_report(1, inflated), TieRule::LowestIndex)?;
    let u = &market.utilities[1];
    println!("agent 1 payoff: truthful {:.4}, inflated {:.4}", honest.payoff(1, u), lied.payoff(1, u));
    Ok(())
}
