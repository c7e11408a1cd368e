//! Randomized sweep: arbitrary signatures and in-bounds tilings must match
//! the reference action and every counter oracle.

mod common;

use common::{rel_err, walk};
use femtile::form::{reference_action, synthesize_problem, FormSignature, ScalarSpace, VectorSpace};
use femtile::qoi::qoi_report;
use femtile::sim::{census, simulate};
use femtile::{Schedule, TilingParams};
use proptest::prelude::*;

fn signature() -> impl Strategy<Value = FormSignature> {
    let scalar = (1usize..=6, 1usize..=3).prop_map(|(n, n_deriv)| ScalarSpace { n, n_deriv });
    (2usize..=3, prop::collection::vec(scalar, 0..=2), 0usize..=1, 1usize..=6, 1usize..=3, 1usize..=9, 0usize..=2)
        .prop_flat_map(|(dim, scalars, n_vec, n_test, n_deriv_test, q, curved)| {
            let vector = (1usize..=5, prop::collection::vec(0..dim, 1..=4)).prop_map(|(n, components)| VectorSpace {
                n,
                n_deriv: components.len(),
                components,
                geometry: false,
            });
            let need = usize::from(scalars.is_empty()).max(n_vec);
            (Just((dim, scalars, n_test, n_deriv_test, q, curved)), prop::collection::vec(vector, need..=need))
        })
        .prop_map(|((dim, scalars, n_test, n_deriv_test, q, curved), vectors)| {
            let sig = FormSignature {
                dim,
                scalar_spaces: scalars,
                vector_spaces: vectors,
                n_test,
                n_deriv_test,
                n_quad: q,
                n_coord: dim + 1,
                affine: true,
                word_bytes: 8,
            };
            if curved > 0 {
                sig.with_curved_geometry(curved).unwrap()
            } else {
                sig
            }
        })
}

fn tiling(sig: &FormSignature) -> impl Strategy<Value = TilingParams> {
    let cols: Vec<_> = sig.trial_spaces().map(|s| 1..=s.n).collect();
    let (q, n_test) = (sig.n_quad, sig.n_test);
    (1..=q, cols, 1..=n_test, 1usize..=12, 1usize..=6)
        .prop_flat_map(|(t_quad, t_eval_col, t_quad_row, n_c, n_wi)| {
            (Just((t_quad, t_eval_col, t_quad_row, n_c, n_wi)), 1..=t_quad, 1..=t_quad)
        })
        .prop_map(|((t_quad, t_eval_col, t_quad_row, n_cells_wg, n_wi), t_eval_row, t_quad_col)| TilingParams {
            t_quad,
            t_eval_row,
            t_eval_col,
            t_quad_row,
            t_quad_col,
            n_cells_wg,
            n_wi,
        })
}

fn case() -> impl Strategy<Value = (FormSignature, TilingParams, usize, u64)> {
    signature().prop_flat_map(|sig| {
        let t = tiling(&sig);
        (Just(sig), t, 1usize..=30, any::<u64>())
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, ..ProptestConfig::default() })]

    #[test]
    fn simulator_matches_reference_and_oracles((sig, p, cells, seed) in case()) {
        let inst = synthesize_problem(&sig, cells, seed).unwrap();
        let s = Schedule::Mlt(p.clone());
        let tr = simulate(&inst, &s).unwrap();
        let reference = reference_action(&inst).unwrap();
        prop_assert!(rel_err(&tr.output, &reference) <= 1e-10);
        let rep = census(&tr, &sig).unwrap();
        prop_assert!(rep.all_pass(), "{:?}", rep.failures());

        let w = walk(&sig, &p);
        let n = cells as u64;
        let q = qoi_report(&sig, &s).unwrap();
        prop_assert_eq!(tr.barriers_per_workgroup, w.barriers);
        prop_assert_eq!(q.n_sync, w.barriers);
        prop_assert_eq!(q.ops_performed, w.ops_performed);
        prop_assert_eq!(tr.flops_matvec, n * w.ops_usable);
        prop_assert_eq!(tr.flops_matvec + tr.flops_masked_padding, n * w.ops_performed);
        prop_assert_eq!(tr.local_words_highwater, w.l_words);
        prop_assert_eq!(tr.access.gather, n * w.gather);
        prop_assert_eq!(tr.access.scatter, n * w.scatter);
        prop_assert_eq!(tr.access.reference, tr.n_workgroups as u64 * w.reference_per_wg);
        prop_assert_eq!(tr.access.local_eval_read, n * w.eval_read);
        prop_assert_eq!(tr.access.local_eval_write, n * w.eval_write);
        prop_assert_eq!(tr.access.local_quad_read, n * w.quad_read);
    }

    #[test]
    fn scpt_matches_reference((sig, _p, cells, seed) in case()) {
        let inst = synthesize_problem(&sig, cells, seed).unwrap();
        let tr = simulate(&inst, &Schedule::Scpt).unwrap();
        prop_assert!(rel_err(&tr.output, &reference_action(&inst).unwrap()) <= 1e-10);
        prop_assert!(census(&tr, &sig).unwrap().all_pass());
    }

    #[test]
    fn scaling_inputs_scales_output((sig, p, cells, seed) in case(), alpha in 0.25f64..4.0) {
        let inst = synthesize_problem(&sig, cells, seed).unwrap();
        let s = Schedule::Mlt(p);
        let base = simulate(&inst, &s).unwrap().output;
        let scaled = simulate(&inst.scaled_inputs(alpha), &s).unwrap().output;
        let want: Vec<f64> = base.iter().map(|v| v * alpha).collect();
        prop_assert!(rel_err(&scaled, &want) <= 1e-10);
    }
}
