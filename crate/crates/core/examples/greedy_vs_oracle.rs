// Greedy allocation against exhaustive search and the continuous optimum.
use qvcg::mechanism::Market;
use qvcg::oracle::{brute_optimal, continuous_optimum};
use qvcg::sampling::random_market;
use qvcg::scenario::Scenario;
use qvcg::verify::greedy_vs_brute;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> qvcg::Result<()> {
    let s = Scenario::example2().with_partitions(Some(20));
    let market = Market::from_scenario(&s)?;
    let brute = brute_optimal(&market.region, &market.utilities, 20)?;
    let cont = continuous_optimum(&s.rank_function, &s.agents, 10_000)?;
    println!("brute force: y = {:?}, welfare {:.4} over {} points", brute.y, brute.welfare, brute.points_examined);
    println!("continuous: x = {:?}, welfare {:.4} (+/- {:.1e})", cont.x, cont.welfare, cont.error_bound);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let (_, market) = random_market(&mut rng, 3, 10)?;
        let (greedy, best) = greedy_vs_brute(&market)?;
        worst = worst.max((greedy - best).abs());
    }
    println!("50 random markets: largest greedy shortfall {worst:e}");
    Ok(())
}
