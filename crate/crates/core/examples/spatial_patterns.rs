//! Structured keep masks on an 8x8 grid, drawn as ASCII art, plus one PGM
//! written to the temp dir.
//!
//! ```text
//! cargo run --release --example spatial_patterns
//! ```

use stochpool::masks::make_pattern_mask;
use stochpool::{KeepMask, PatternKind, PatternSpec, RngStream};

fn show(title: &str, mask: &KeepMask) {
    println!("{title} (kept {}/{}):", mask.count_kept(), mask.side() * mask.side());
    for y in 0..mask.side() {
        let row: String = (0..mask.side()).map(|x| if mask.get(y, x) { '#' } else { '.' }).collect();
        println!("  {row}");
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = RngStream::new(5, 0);
    let (l, p) = (8, 0.5);
    for (kind, s) in [
        (PatternKind::Unrestricted, 1),
        (PatternKind::Block, 4),
        (PatternKind::Grid, 2),
        (PatternKind::Uniform, 2),
        (PatternKind::Duplication, 4),
    ] {
        let mask = make_pattern_mask(&PatternSpec::new(kind, s), l, p, &mut rng)?;
        show(&format!("{kind}, s = {s}"), &mask);
    }

    // grid needs the kept count to tile evenly; p = 0.4 does not
    match make_pattern_mask(&PatternSpec::new(PatternKind::Grid, 2), l, 0.4, &mut rng) {
        Ok(_) => println!("grid at p = 0.4 unexpectedly accepted"),
        Err(e) => println!("grid at p = 0.4: {e}"),
    }

    let mask = make_pattern_mask(&PatternSpec::new(PatternKind::Block, 2), l, p, &mut rng)?;
    let path = std::env::temp_dir().join("stochpool_block.pgm");
    std::fs::write(&path, mask.to_pgm())?;
    let back = KeepMask::from_pgm(&std::fs::read_to_string(&path)?)?;
    assert_eq!(back, mask);
    println!("wrote {}", path.display());
    Ok(())
}
