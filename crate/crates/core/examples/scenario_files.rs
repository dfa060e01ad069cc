// Loading a scenario from JSON, validating it and running the rounded mechanism.
use qvcg::mechanism::Market;
use qvcg::rounded::{run_rounded, RoundedConfig};
use qvcg::scenario::{validate_scenario, Scenario};

const FILE: &str = r#"{
  "name": "two_links",
  "rank_function": "uniform_cap(0.6, 1)",
  "agents": [
    { "family": "linear", "slope": 2.0 },
    { "family": "linear", "slope": 1.0 }
  ],
  "params": { "alpha": 2.5, "beta": 0.5 },
  "M": 10,
  "rounding": { "epsilon": 0.05 },
  "strategies": ["floor", "ceiloor"]
}"#;

fn main() -> qvcg::Result<()> {
    let s = Scenario::from_json(FILE)?;
    let v = validate_scenario(&s);
    println!("valid: {}, digest {}", v.is_valid, &s.digest()[..16]);
    for c in &v.checks {
        println!("  {:<22} {} {}", c.name, if c.passed { "ok  " } else { "FAIL" }, c.detail);
    }

    let market = Market::from_scenario(&s)?;
    let config = RoundedConfig::new(0.05, market.partitions())?;
    let out = run_rounded(&market, s.strategies.as_deref().unwrap(), &config, s.seed)?;
    println!("y = {:?}, payments {:?}", out.outcome.y_star, out.outcome.payments);
    Ok(())
}
