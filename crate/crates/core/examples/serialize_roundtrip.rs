//! Sketches are stored as `HLLS`, a version byte, `p`, `q`, then one byte per
//! register. Shards can be written separately and merged later.

use hllkit::sim::sample_sketch;
use hllkit::{improved_estimate, RngSeed, Sketch, SketchConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = SketchConfig::new(11, 20)?;
    let dir = std::env::temp_dir().join("hllkit-example");
    std::fs::create_dir_all(&dir)?;

    let mut paths = Vec::new();
    for shard in 0..4u64 {
        // disjoint shards of 30k elements each
        let sketch = sample_sketch(30_000, config, &mut RngSeed::new(5, shard).rng());
        let path = dir.join(format!("shard-{shard}.hll"));
        std::fs::write(&path, sketch.to_bytes())?;
        paths.push(path);
    }

    let mut total = Sketch::new(config);
    for path in &paths {
        let shard = Sketch::from_bytes(&std::fs::read(path)?)?;
        println!("{}: {} bytes, ~{:.0}", path.display(), 5 + config.m(), improved_estimate(&shard.histogram()));
        total.merge_from(&shard)?;
    }
    println!("merged: ~{:.0} (true 120000)", improved_estimate(&total.histogram()));

    let bytes = total.to_bytes();
    assert_eq!(Sketch::from_bytes(&bytes)?, total);

    let mut corrupt = bytes.clone();
    corrupt[10] = config.max_value() + 1;
    println!("corrupt register: {}", Sketch::from_bytes(&corrupt).unwrap_err());
    Ok(())
}
