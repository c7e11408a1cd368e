//! Attainable FLOP rate per operator and the term that bounds it.

use femtile::form::{preset_signature, Operator};
use femtile::perf::{global_footprint_bytes, roofline, DeviceSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n_cells = 500_000;
    for dev in [DeviceSpec::k40(), DeviceSpec::titan_v()] {
        println!("{} (peak {} GFLOP/s)", dev.name, dev.f_peak);
        for op in Operator::ALL {
            for degree in 1..=3 {
                let q = femtile::form::simplex_space_dim(2 * degree, 3);
                let sig = preset_signature(op, 3, degree, q)?;
                let r = roofline(&sig, &dev, n_cells, global_footprint_bytes(&sig, n_cells))?;
                println!(
                    "  {:<16} P{degree}  AI_g {:>7.2}  AI_l {:>5.3}  {:>8.1} GFLOP/s  {:?}",
                    op.name(),
                    r.ai_global,
                    r.ai_local,
                    r.f_roofline,
                    r.binding_term
                );
            }
        }
    }
    Ok(())
}
