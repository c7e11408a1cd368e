//! b-best tuning: rank, execute every candidate on the simulator, verify,
//! keep the fastest.

use femtile::form::{preset_map, preset_signature, synthesize_with_map, Operator};
use femtile::search::{tune, SearchConfig};
use femtile::DeviceSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sig = preset_signature(Operator::Mass, 3, 2, 14)?;
    let p = synthesize_with_map(&sig, preset_map(Operator::Mass, &sig)?, 200, 7)?;
    let res = tune(&p, &DeviceSpec::titan_v(), &SearchConfig::default())?;
    for v in &res.records {
        let metric = v.metric.map_or("-".to_string(), |m| format!("{m:.3e}"));
        println!("{:>2} {:<50} err {:.1e}  metric {metric}", v.rank, v.schedule.label(), v.max_rel_error);
    }
    println!("winner: {}", res.winner.label());
    Ok(())
}
