use hllkit::ml::{ml_bracket, ml_root_function, ml_solve, SolverConfig};
use hllkit::sim::sample_sketch;
use hllkit::{improved_estimate, RngSeed, SketchConfig};

fn main() -> hllkit::Result<()> {
    let config = SketchConfig::new(10, 22)?;
    let mut rng = RngSeed::new(7, 0).rng();
    let solver = SolverConfig::default();
    println!("stop threshold delta = {:.2e}", solver.delta(config.m()));

    for n in [100, 5_000, 1_000_000, 1 << 30] {
        let h = sample_sketch(n, config, &mut rng).histogram();
        let bracket = ml_bracket(&h)?;
        let sol = ml_solve(&h, &solver)?;
        println!(
            "n={n:>10}  ml={:>14.1}  improved={:>14.1}  bracket=[{:.1}, {:.1}]  iterations={}  f(root)={:.2e}",
            sol.estimate,
            improved_estimate(&h),
            bracket.lower,
            bracket.upper,
            sol.iterations,
            ml_root_function(sol.estimate, &h),
        );
    }
    Ok(())
}
