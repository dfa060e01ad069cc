// Naive rounding of a capacity region versus the admissible construction.
use qvcg::polymatroid::{naive_quantize, quantize, CapacityTable};
use qvcg::setfn::RankFunction;

fn main() -> qvcg::Result<()> {
    let f = RankFunction::example2();
    for m in [3, 4] {
        let naive = naive_quantize(&f, m);
        println!("M = {m}: naive table {:?}, polymatroid: {}", naive.values, naive.is_polymatroid);
    }

    let region = quantize(&f, None)?;
    println!("default M = {}: {:?}", region.partitions(), region.values());

    match quantize(&f, Some(3)) {
        Ok(_) => println!("M = 3 accepted"),
        Err(e) => println!("M = 3 rejected: {e}"),
    }
    Ok(())
}
