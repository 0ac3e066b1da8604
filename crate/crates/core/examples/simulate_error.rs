//! Writes a simulate-style CSV for a log-spaced grid. Pipe it into any
//! plotting tool, e.g. `cargo run --example simulate_error > err.csv`.

use hllkit::cli::{parse_cardinalities, simulate_csv};
use hllkit::sim::run_error_experiment;
use hllkit::{Estimator, SketchConfig};

fn main() -> hllkit::Result<()> {
    let config = SketchConfig::new(10, 20)?;
    let cards = parse_cardinalities("logspace:1:100000000:17").expect("valid grid");
    let reports = run_error_experiment(&cards, 300, config, &[Estimator::Improved, Estimator::Ml], 1)?;
    print!("{}", simulate_csv(config, &reports));
    Ok(())
}
