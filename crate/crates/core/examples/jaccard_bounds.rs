use hllkit::sim::sample_joint_pair;
use hllkit::{equal_register_probability_bounds, RngSeed, SketchConfig};

fn main() -> hllkit::Result<()> {
    let config = SketchConfig::new(12, 20)?;
    let total = 200_000u64;
    println!("{:>6} {:>8} {:>8} {:>10}", "D", "lower", "upper", "observed");
    for step in 0..=10u32 {
        let d = f64::from(step) / 10.0;
        let x = ((1.0 - d) * total as f64).round() as u64;
        let a = (total - x) / 2;
        let (s1, s2) = sample_joint_pair(a, total - x - a, x, config, &mut RngSeed::new(3, step.into()).rng());
        let equal = s1.registers().iter().zip(s2.registers()).filter(|(r1, r2)| r1 == r2).count();
        let (lower, upper) = equal_register_probability_bounds(d)?;
        println!("{d:>6.1} {lower:>8.4} {upper:>8.4} {:>10.4}", equal as f64 / config.m() as f64);
    }
    Ok(())
}
