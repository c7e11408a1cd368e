//! Runs one tiling on the work-group simulator and checks every counter
//! against its closed form.

use femtile::form::{preset_map, preset_signature, reference_action, synthesize_with_map, Operator};
use femtile::qoi::{Schedule, TilingParams};
use femtile::search::max_relative_error;
use femtile::sim::{census, simulate};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sig = preset_signature(Operator::Helmholtz, 2, 2, 7)?;
    let p = synthesize_with_map(&sig, preset_map(Operator::Helmholtz, &sig)?, 120, 3)?;
    let s = Schedule::Mlt(TilingParams {
        t_quad: 4,
        t_eval_row: 2,
        t_eval_col: vec![3],
        t_quad_row: 3,
        t_quad_col: 2,
        n_cells_wg: 51,
        n_wi: 5,
    });
    let trace = simulate(&p, &s)?;
    println!("{}: {} work-groups, {} barriers each", s.label(), trace.n_workgroups, trace.barriers_per_workgroup);
    for site in &trace.barriers_by_site {
        println!("  {:<18} {}", site.site.label(), site.count);
    }
    println!("max rel error vs reference {:.2e}", max_relative_error(&trace.output, &reference_action(&p)?));
    for c in census(&trace, &sig)?.checks {
        println!("  {:<24} {:>10} {:>10} {}", c.quantity, c.expected, c.actual, if c.pass { "ok" } else { "MISMATCH" });
    }
    Ok(())
}
