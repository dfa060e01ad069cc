// Worst-case efficiency bounds and the partition count needed to reach a target.
use qvcg::analysis::{comm_cost_bits, min_partitions, single_resource_bound, theorem11_bound, theorem6_bound};

fn main() -> qvcg::Result<()> {
    let (alpha, beta) = (2.0, 1.0);
    println!("{:>5} {:>10} {:>10} {:>10}", "M", "unrounded", "eps=0.1", "single");
    for m in [2, 4, 8, 16, 64, 256] {
        println!(
            "{m:>5} {:>10.4} {:>10.4} {:>10.4}",
            theorem6_bound(m, 4, alpha, beta)?,
            theorem11_bound(m, 4, alpha, beta, 0.1)?,
            single_resource_bound(m, 4)
        );
    }
    for eps in [0.01, 0.1, 0.25] {
        println!("eps = {eps}: {:.1} bits per agent at M = 10", comm_cost_bits(10, alpha, beta, eps)?);
    }
    let m = min_partitions(0.8, 4, alpha, beta, 0.1, 0.2)?;
    println!("M needed for 0.8 with N = 4, eps = 0.1: {m}");
    Ok(())
}
