//! Estimate the sizes of `A \ B`, `B \ A` and `A ∩ B` from two sketches.
//! Inclusion-exclusion is noisy when the intersection is small relative to the
//! sets; the joint ML estimate uses all register pairs and stays non-negative.

use hllkit::joint::{inclusion_exclusion_estimate, joint_ml_solve};
use hllkit::sim::sample_joint_pair;
use hllkit::{Estimator, JointStatistic, RngSeed, SketchConfig, SolverConfig};

fn main() -> hllkit::Result<()> {
    let config = SketchConfig::new(12, 20)?;
    let (a, b, x) = (50_000, 20_000, 800);
    println!("true: |A\\B|={a} |B\\A|={b} |A∩B|={x} |A∪B|={}", a + b + x);
    println!("{:>6} {:>26} {:>26}", "trial", "incl-excl (a, b, x)", "joint ML (a, b, x)");

    for trial in 0..8 {
        let (s1, s2) = sample_joint_pair(a, b, x, config, &mut RngSeed::new(99, trial).rng());
        let ie = inclusion_exclusion_estimate(&s1, &s2, Estimator::Improved)?.estimate;
        let stat = JointStatistic::new(&s1, &s2)?;
        let ml = joint_ml_solve(&stat, &SolverConfig::default_joint())?;
        let e = ml.estimate;
        println!(
            "{trial:>6} {:>8.0} {:>8.0} {:>8.0} {:>8.0} {:>8.0} {:>8.0}   ({} iterations)",
            ie.lambda_a, ie.lambda_b, ie.lambda_x, e.lambda_a, e.lambda_b, e.lambda_x, ml.iterations
        );
    }
    Ok(())
}
