//! Matrix-free action of the P2 Laplacian on a small synthetic mesh.

use femtile::form::{preset_map, preset_signature, reference_action_instrumented, synthesize_with_map, Operator};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sig = preset_signature(Operator::Laplace, 2, 2, 6)?;
    let map = preset_map(Operator::Laplace, &sig)?;
    let p = synthesize_with_map(&sig, map, 8, 1)?;
    let (y, counts) = reference_action_instrumented(&p)?;

    println!("cells {}  global test DOFs {}", p.n_cells(), p.n_out);
    println!("matvec multiplies {}  adds {}", counts.matvec_muls, counts.matvec_adds);
    for (i, v) in y.iter().take(6).enumerate() {
        println!("y[{i}] = {v:+.6e}");
    }
    Ok(())
}
