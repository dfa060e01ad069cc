// Building, checking and perturbing rank functions.
use qvcg::polymatroid::partition_threshold;
use qvcg::setfn::RankFunction;

fn main() -> qvcg::Result<()> {
    let f = RankFunction::example1();
    println!("example1 table: {:?}", f.values());
    println!("valid: {}", f.validate(1e-9).is_valid);

    let w = f.min_distance_witness()?;
    println!("min distance {:.3} at base {:#b}, agents ({}, {})", w.distance, w.base, w.i, w.j);
    println!("smallest admissible M: {}", partition_threshold(w.distance)?);

    // a table that breaks submodularity
    let bad = RankFunction::from_table(2, vec![0.0, 0.3, 0.3, 1.0])?;
    let report = bad.validate(1e-9);
    println!("bad table valid: {} ({} violations)", report.is_valid, report.violations.len());

    // modular functions have zero distance until perturbed
    let flat = RankFunction::modular(&[0.2, 0.3, 0.5])?;
    let p = flat.perturb(0.04)?;
    println!(
        "modular min distance {:.4}, perturbed {:.4} (gamma {:.5})",
        flat.min_distance()?,
        p.rank.min_distance()?,
        p.gamma
    );
    Ok(())
}
