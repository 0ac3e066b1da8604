//! Build a sketch from string keys and compare the estimators.

use std::hash::{DefaultHasher, Hash, Hasher};

use hllkit::{Estimator, Sketch, SketchConfig};

fn hash64<T: Hash>(value: &T) -> u64 {
    let mut h = DefaultHasher::new();
    value.hash(&mut h);
    h.finish()
}

fn main() -> hllkit::Result<()> {
    let config = SketchConfig::new(12, 20)?;
    let mut sketch = Sketch::new(config);

    let distinct = 250_000;
    for i in 0..distinct {
        let key = format!("user-{i}");
        sketch.insert_hash(hash64(&key));
        // duplicates do not change the sketch
        sketch.insert_hash(hash64(&key));
    }

    let h = sketch.histogram();
    println!("p={} q={} m={} true={distinct}", config.p(), config.q(), config.m());
    for estimator in Estimator::ALL {
        match estimator.estimate(&h) {
            Ok(n) => println!("{estimator:>9}: {n:>12.1}  ({:+.3}%)", 100.0 * (n / distinct as f64 - 1.0)),
            Err(e) => println!("{estimator:>9}: {e}"),
        }
    }
    Ok(())
}
