//! Size of the pruned tiling space and how the constraints shape it.

use femtile::form::{preset_signature, Operator};
use femtile::search::{cardinality, ceil_divisor_set, enumerate, SearchConfig};
use num_rational::Ratio;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("ceil divisors of 8: {:?}", ceil_divisor_set(8));
    let sig = preset_signature(Operator::Laplace, 3, 2, 14)?;
    let strict = SearchConfig::default();
    let loose = SearchConfig { alias_floor: Ratio::new(1, 2), simd_floor: Ratio::new(3, 4), ..strict.clone() };
    println!("default constraints: {} candidates", cardinality(&sig, &strict)?);
    println!("relaxed constraints: {} candidates", cardinality(&sig, &loose)?);

    let space = enumerate(&sig, &strict)?;
    println!("{} tile choices x {} work-group shapes", space.tiles.len(), space.pairs.len());
    for p in space.iter().step_by(space.len() / 5 + 1) {
        println!("  {}", p.label());
    }
    Ok(())
}
