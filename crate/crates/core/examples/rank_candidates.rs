//! Top tilings by modeled time on both preset devices.

use femtile::form::{preset_signature, Operator};
use femtile::search::{rank, SearchConfig};
use femtile::DeviceSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sig = preset_signature(Operator::Elasticity, 3, 2, 14)?;
    let cfg = SearchConfig { b: 5, ..SearchConfig::default() };
    for dev in [DeviceSpec::k40(), DeviceSpec::titan_v()] {
        println!("{}", dev.name);
        for (i, c) in rank(&sig, &dev, &cfg)?.iter().enumerate() {
            match &c.cost {
                Some(cost) => println!(
                    "  {:>2} {:<50} t_heur {:.3e} s  SG_eff {:.1}",
                    i + 1,
                    c.label(),
                    cost.t_heur,
                    cost.sg_reside_eff
                ),
                None => println!("  {:>2} {:<50} (not modeled)", i + 1, c.label()),
            }
        }
    }
    Ok(())
}
