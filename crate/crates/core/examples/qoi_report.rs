//! Closed-form quantities of a few tilings of the P2 Helmholtz operator.

use femtile::form::{preset_signature, Operator};
use femtile::qoi::{qoi_report, Schedule, TilingParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sig = preset_signature(Operator::Helmholtz, 2, 2, 7)?;
    let tiled = TilingParams {
        t_quad: 4,
        t_eval_row: 2,
        t_eval_col: vec![3],
        t_quad_row: 3,
        t_quad_col: 2,
        n_cells_wg: 51,
        n_wi: 5,
    };
    for s in [Schedule::Scpt, Schedule::Mlt(TilingParams::untiled(&sig, 64, 2)), Schedule::Mlt(tiled)] {
        println!("{}", s.label());
        for (k, v) in qoi_report(&sig, &s)?.to_record() {
            println!("  {k:<14} {v}");
        }
    }
    Ok(())
}
