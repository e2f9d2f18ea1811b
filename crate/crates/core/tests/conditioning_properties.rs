use ndarray::{s, Array2, Array3};
use proptest::prelude::*;
use wrist_recon::conditioning::{
    assemble_condition_tokens, concat_latents, split_latents, ConditioningError, EmbeddingTable, LatentFrame, TableDims,
    MAX_CONDITION_TOKENS,
};

fn layout() -> impl Strategy<Value = (usize, usize, usize, u64)> {
    (1usize..6, 1usize..30, 0usize..60, any::<u64>()).prop_filter("budget", |(n, t, l, _)| n * t + l <= MAX_CONDITION_TOKENS)
}

fn features(n: usize, t: usize, d_c: usize, salt: f64) -> Array3<f64> {
    Array3::from_shape_fn((n, t, d_c), |(i, j, c)| ((i * 31 + j * 7 + c) as f64 * 0.37 + salt).sin())
}

proptest! {
    #[test]
    fn count_and_order((n, t, l, seed) in layout()) {
        let dims = TableDims { frames: t, views: n, text_len: l, d: 5, d_c: 3, d_text: 2 };
        let tables = EmbeddingTable::seeded(dims, seed);
        let f = features(n, t, 3, 0.0);
        let text = Array2::from_elem((l, 2), 0.5);
        let b = assemble_condition_tokens(&f.view(), &text.view(), &tables).unwrap();
        prop_assert_eq!(b.len(), n * t + l);
        // row t·N + i carries frame t of view i
        for ti in 0..t {
            for vi in 0..n {
                let one = assemble_condition_tokens(&f.slice(s![vi..vi + 1, ti..ti + 1, ..]).to_owned().view(), &Array2::zeros((0, 2)).view(), &{
                    let mut tb = tables.clone();
                    tb.temporal = tables.temporal.slice(s![ti..ti + 1, ..]).to_owned();
                    tb.view = tables.view.slice(s![vi..vi + 1, ..]).to_owned();
                    tb
                }).unwrap();
                prop_assert_eq!(one.clip_tokens.row(0), b.clip_tokens.row(ti * n + vi));
            }
        }
    }

    #[test]
    fn frame_permutation_with_tables((n, t, l, seed) in layout(), rot in 0usize..30) {
        let dims = TableDims { frames: t, views: n, text_len: l, d: 4, d_c: 3, d_text: 2 };
        let tables = EmbeddingTable::seeded(dims, seed);
        let f = features(n, t, 3, 1.0);
        let text = Array2::from_elem((l, 2), -0.25);
        let perm: Vec<usize> = (0..t).map(|j| (j + rot) % t).collect();
        let fp = Array3::from_shape_fn((n, t, 3), |(i, j, c)| f[[i, perm[j], c]]);
        let mut tp = tables.clone();
        for j in 0..t {
            tp.temporal.row_mut(j).assign(&tables.temporal.row(perm[j]));
        }
        let a = assemble_condition_tokens(&f.view(), &text.view(), &tables).unwrap();
        let b = assemble_condition_tokens(&fp.view(), &text.view(), &tp).unwrap();
        for j in 0..t {
            for i in 0..n {
                prop_assert_eq!(b.clip_tokens.row(j * n + i), a.clip_tokens.row(perm[j] * n + i));
            }
        }
        prop_assert_eq!(b.text_tokens, a.text_tokens);
    }

    #[test]
    fn latents_round_trip(c in 1usize..5, h in 1usize..7, w in 1usize..7, scale in -1e6f64..1e6) {
        let z_w = Array3::from_shape_fn((c, h, w), |(a, b, d)| scale * ((a + 3 * b + 5 * d) as f64).cos());
        let z_c = Array3::from_shape_fn((c, h, w), |(a, b, d)| ((a * b + d) as f64).sqrt() / (scale.abs() + 1.0));
        let frame = LatentFrame { z_w, z_c };
        let z = concat_latents(&frame).unwrap();
        prop_assert_eq!(z.dim(), (2 * c, h, w));
        prop_assert_eq!(split_latents(&z).unwrap(), frame);
    }
}

#[test]
fn over_budget_and_short_tables_are_rejected() {
    let dims = TableDims { frames: 200, views: 3, text_len: 0, d: 2, d_c: 1, d_text: 1 };
    let tables = EmbeddingTable::seeded(dims, 0);
    let f = Array3::zeros((3, 171, 1));
    let err = assemble_condition_tokens(&f.view(), &Array2::zeros((0, 1)).view(), &tables).unwrap_err();
    assert_eq!(err, ConditioningError::TokenBudgetExceeded { requested: 513, limit: 512 });
    let f = Array3::zeros((4, 2, 1));
    assert!(matches!(
        assemble_condition_tokens(&f.view(), &Array2::zeros((0, 1)).view(), &tables),
        Err(ConditioningError::ShapeMismatch(_))
    ));
    let odd = Array3::zeros((3, 2, 2));
    assert!(split_latents(&odd).is_err());
}
